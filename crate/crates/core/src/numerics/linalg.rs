use crate::error::{Error, Result};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};

/// Mean and covariance of a Gaussian law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianMoments {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Config(format!(
                "covariance is {}x{}, expected {n}x{n}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > tolerances::COVARIANCE_SYMMETRY * (1.0 + covariance.amax()) {
            return Err(Error::Numeric(format!("covariance asymmetric by {asym:e}")));
        }
        let sym = symmetrize(&covariance);
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -tolerances::COVARIANCE_SYMMETRY * (1.0 + sym.amax()) {
            return Err(Error::Numeric(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self {
            mean,
            covariance: sym,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

/// `exp(A t)` by scaling and squaring around the degree-13 Padé approximant.
pub fn matrix_exp(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a * t;
    let norm = norm1(&at);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = at / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled norms");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `Σ_t = ∫_0^t e^{Γ(t−s)} a e^{Γᵀ(t−s)} ds` by the block exponential of
/// `[[−Γ, a], [0, Γᵀ]]`.
pub fn covariance_integral(gamma: &DMatrix<f64>, a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = gamma.nrows();
    if t == 0.0 {
        return DMatrix::zeros(n, n);
    }
    let mut c = DMatrix::<f64>::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&(-gamma));
    c.view_mut((0, n), (n, n)).copy_from(a);
    c.view_mut((n, n), (n, n)).copy_from(&gamma.transpose());
    let f = matrix_exp(&c, t);
    let f12 = f.view((0, n), (n, n)).into_owned();
    let f22 = f.view((n, n), (n, n)).into_owned();
    symmetrize(&(f22.transpose() * f12))
}

/// `∫_0^t e^{B(t−s)} (b + s c) ds`, the mean shift of a linear SDE whose
/// drift is `b + Bx + s c`.
pub fn affine_drift_integral(
    big_b: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let n = big_b.nrows();
    let mut m = DMatrix::<f64>::zeros(n + 2, n + 2);
    m.view_mut((0, 0), (n, n)).copy_from(big_b);
    m.view_mut((0, n), (n, 1)).copy_from(c);
    m.view_mut((0, n + 1), (n, 1)).copy_from(b);
    m[(n, n + 1)] = 1.0;
    let e = matrix_exp(&m, t);
    e.view((0, n + 1), (n, 1)).column(0).into_owned()
}

/// Solves `AᵀX + XA + Q = 0` through the Kronecker form.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let k = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Classical RK4 on `Y' = A Y`, used as an independent oracle.
    fn rk4_exp(a: &DMatrix<f64>, t: f64, steps: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let h = t / steps as f64;
        let mut y = DMatrix::<f64>::identity(n, n);
        for _ in 0..steps {
            let k1 = a * &y;
            let k2 = a * (&y + &k1 * (h / 2.0));
            let k3 = a * (&y + &k2 * (h / 2.0));
            let k4 = a * (&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let e = matrix_exp(&DMatrix::zeros(3, 3), 1.0);
        assert_eq!(e, DMatrix::identity(3, 3));
    }

    #[test]
    fn nilpotent_series_terminates() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exp(&a, 1.0);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((e - expected).amax() < 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar_exponentials() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let e = matrix_exp(&a, 1.0);
        assert_relative_eq!(e[(0, 0)], (-1f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)], 2f64.exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn agrees_with_ode_integration() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.3, -0.5, -0.2, 1.0, 0.1, -1.5, -0.7]);
        let e = matrix_exp(&a, 2.5);
        let r = rk4_exp(&a, 2.5, 20_000);
        assert!((&e - &r).amax() / r.amax() < 1e-10);
    }

    #[test]
    fn large_norm_uses_squaring() {
        let a = DMatrix::from_row_slice(2, 2, &[-20.0, 5.0, 0.0, -30.0]);
        let e = matrix_exp(&a, 1.0);
        let r = rk4_exp(&a, 1.0, 200_000);
        assert!((&e - &r).amax() < 1e-12);
    }

    #[test]
    fn covariance_zero_drift_is_linear_in_time() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = covariance_integral(&DMatrix::zeros(2, 2), &a, 1.5);
        assert!((s - &a * 1.5).amax() < 1e-13);
    }

    #[test]
    fn covariance_scalar_ou() {
        let (g, s2, t) = (0.7, 1.3, 2.0);
        let s = covariance_integral(
            &DMatrix::from_element(1, 1, -g),
            &DMatrix::from_element(1, 1, s2),
            t,
        );
        let exact = s2 * (1.0 - (-2.0 * g * t).exp()) / (2.0 * g);
        assert!((s[(0, 0)] - exact).abs() < 1e-12);
    }

    #[test]
    fn covariance_at_zero_time() {
        let s = covariance_integral(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2), 0.0);
        assert_eq!(s, DMatrix::zeros(2, 2));
    }

    #[test]
    fn drift_integral_scalar() {
        // ∫_0^t e^{-k(t-s)} (b + s c) ds
        let (k, b, c, t) = (0.8_f64, 0.3, -1.1, 1.7);
        let v = affine_drift_integral(
            &DMatrix::from_element(1, 1, -k),
            &DVector::from_element(1, b),
            &DVector::from_element(1, c),
            t,
        );
        let ekt = (-k * t).exp();
        let exact = b * (1.0 - ekt) / k + c * (t / k - (1.0 - ekt) / (k * k));
        assert!((v[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let x = solve_lyapunov(&a, &q).unwrap();
        let r = a.transpose() * &x + &x * &a + &q;
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn gaussian_moments_reject_indefinite() {
        let m = DVector::zeros(2);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMoments::new(m, c).is_err());
    }

    fn stable_matrix(n: usize, entries: &[f64]) -> DMatrix<f64> {
        let m = DMatrix::from_column_slice(n, n, &entries[..n * n]);
        let shift = m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::MIN, f64::max);
        m - DMatrix::identity(n, n) * (shift.max(0.0) + 0.5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn semigroup_property(
            n in 1usize..=6,
            entries in proptest::collection::vec(-1.0f64..1.0, 36),
            s in 0.0f64..2.0,
            t in 0.0f64..2.0,
        ) {
            let a = stable_matrix(n, &entries);
            let lhs = matrix_exp(&a, s + t);
            let rhs = matrix_exp(&a, s) * matrix_exp(&a, t);
            prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + lhs.amax()));
        }

        #[test]
        fn covariance_is_symmetric(
            n in 1usize..=4,
            entries in proptest::collection::vec(-1.0f64..1.0, 16),
            root in proptest::collection::vec(-1.0f64..1.0, 16),
            t in 0.0f64..3.0,
        ) {
            let g = stable_matrix(n, &entries);
            let r = DMatrix::from_column_slice(n, n, &root[..n * n]);
            let a = &r * r.transpose() + DMatrix::identity(n, n) * 0.1;
            let s = covariance_integral(&g, &a, t);
            prop_assert!((&s - s.transpose()).norm() <= 1e-12);
            prop_assert!(s.symmetric_eigenvalues().min() >= -1e-12);
        }
    }
}
