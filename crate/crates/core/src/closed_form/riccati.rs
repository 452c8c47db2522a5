use crate::error::{Error, Result};
use crate::numerics::linalg::{solve_lyapunov, spectral_abscissa, symmetrize};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub h: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of `2HaH − BᵀH − HB − G`.
    pub residual: f64,
    /// Largest real part of an eigenvalue of `B − 2aH`.
    pub abscissa: f64,
}

fn residual(h: &DMatrix<f64>, a: &DMatrix<f64>, big_b: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    (h * a * h * 2.0 - big_b.transpose() * h - h * big_b - g).norm()
}

fn stability_margin(a: &DMatrix<f64>, big_b: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + big_b.norm() + a.norm())
}

/// Stabilising solution of `2HaH − BᵀH − HB − G = 0` by Newton–Kleinman.
pub fn solve_riccati(a: &DMatrix<f64>, big_b: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.shape() != (n, n) || big_b.shape() != (n, n) || g.shape() != (n, n) {
        return Err(Error::Config("Riccati: a, B and G must be n x n".into()));
    }
    let a = symmetrize(a);
    let r = &a * 2.0;
    let min_r = r.symmetric_eigenvalues().min();
    if !(min_r > 0.0) {
        return Err(Error::Assumption("Riccati: a must be positive definite".into()));
    }
    let margin = stability_margin(&a, big_b);
    let stabilising = |x: &DMatrix<f64>| spectral_abscissa(&(big_b - &r * x)) < -margin;

    // Lyapunov start with B shifted to be Hurwitz; fall back to cI.
    let eta = spectral_abscissa(big_b).max(0.0) + 1.0;
    let shifted = big_b - DMatrix::identity(n, n) * eta;
    let mut x = match solve_lyapunov(&shifted, g) {
        Ok(x0) if stabilising(&x0) => x0,
        _ => {
            let sym_b = symmetrize(big_b);
            let c = (sym_b.symmetric_eigenvalues().max().max(0.0) + 1.0) / min_r;
            DMatrix::identity(n, n) * c
        }
    };

    let scale = 1.0 + x.norm();
    for it in 1..=MAX_ITERATIONS {
        let ak = big_b - &r * &x;
        let qk = &x * &r * &x + g;
        let next = solve_lyapunov(&ak, &qk)?;
        let step = (&next - &x).norm();
        x = next;
        if step <= 1e-14 * (scale + x.norm()) {
            let res = residual(&x, &a, big_b, g);
            let abscissa = spectral_abscissa(&(big_b - &r * &x));
            if res > tolerances::RICCATI_RESIDUAL {
                return Err(Error::NoConvergence {
                    what: "Riccati Newton-Kleinman",
                    iterations: it,
                    residual: res,
                });
            }
            if !(abscissa < -margin) {
                return Err(Error::Numeric(format!(
                    "Riccati equation has no stabilising solution (closed-loop abscissa {abscissa:e})"
                )));
            }
            return Ok(RiccatiSolution {
                h: x,
                iterations: it,
                residual: res,
                abscissa,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "Riccati Newton-Kleinman",
        iterations: MAX_ITERATIONS,
        residual: residual(&x, &a, big_b, g),
    })
}

/// Solves `(2Ha − Bᵀ) v = 2Hb + δ`.
pub fn solve_linear_v(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    big_b: &DMatrix<f64>,
    b: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = h * a * 2.0 - big_b.transpose();
    let rhs = h * b * 2.0 + delta;
    let v = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("linear equation for v is singular".into()))?;
    let res = (&m * &v - &rhs).norm();
    let scale = 1.0 + rhs.norm() + m.norm() * v.norm();
    if !(res <= tolerances::LINEAR_V_RESIDUAL * scale) || !v.iter().all(|c| c.is_finite()) {
        return Err(Error::Singular(format!(
            "linear equation for v is ill-conditioned (residual {res:e})"
        )));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_cost_with_hurwitz_drift_gives_zero() {
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let s = solve_riccati(&DMatrix::identity(2, 2), &b, &DMatrix::zeros(2, 2)).unwrap();
        assert!(s.h.amax() < 1e-12);
    }

    #[test]
    fn scalar_stabilising_root() {
        for &(b, s2, g0) in &[(-1.0, 1.0, 1.0), (0.5, 2.0, 0.3), (0.0, 0.5, 2.0)] {
            let s = solve_riccati(&m1(s2), &m1(b), &m1(g0)).unwrap();
            let expected = (b + (b * b + 2.0 * s2 * g0).sqrt()) / (2.0 * s2);
            assert!((s.h[(0, 0)] - expected).abs() < 1e-12, "{b} {s2} {g0}");
            assert!(s.abscissa < 0.0);
        }
    }

    #[test]
    fn degenerate_case_has_no_stabilising_solution() {
        assert!(solve_riccati(&m1(1.0), &m1(0.0), &m1(0.0)).is_err());
    }

    #[test]
    fn scalar_v_equation() {
        let v = solve_linear_v(&m1(0.0), &m1(1.0), &m1(-2.0), &DVector::from_element(1, 3.0), &DVector::from_element(1, 1.0)).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
        let v = solve_linear_v(&m1(0.4), &m1(1.0), &m1(-2.0), &DVector::zeros(1), &DVector::zeros(1)).unwrap();
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn two_dim_v_residual() {
        let h = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]);
        let bb = DMatrix::from_row_slice(2, 2, &[-0.5, 0.3, -0.1, -1.0]);
        let b = DVector::from_vec(vec![0.2, -0.4]);
        let d = DVector::from_vec(vec![1.0, 0.5]);
        let v = solve_linear_v(&h, &a, &bb, &b, &d).unwrap();
        let r = (&h * &a * 2.0 - bb.transpose()) * &v - &h * &b * 2.0 - d;
        assert!(r.norm() < 1e-12);
    }

    fn spd(n: usize, vals: &[f64]) -> DMatrix<f64> {
        let m = DMatrix::from_row_slice(n, n, &vals[..n * n]);
        &m * m.transpose() + DMatrix::identity(n, n) * 0.5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn random_three_dim_instances(
            av in prop::collection::vec(-1.0f64..1.0, 9),
            bv in prop::collection::vec(-1.0f64..1.0, 9),
            gv in prop::collection::vec(-1.0f64..1.0, 9),
        ) {
            let a = spd(3, &av);
            let g = spd(3, &gv);
            let bb = DMatrix::from_row_slice(3, 3, &bv);
            let s = solve_riccati(&a, &bb, &g).unwrap();
            prop_assert!(s.residual <= 1e-10);
            let closed = &bb - &a * &s.h * 2.0;
            for e in closed.complex_eigenvalues().iter() {
                prop_assert!(e.re < 0.0);
            }
            prop_assert!((&s.h - s.h.transpose()).amax() < 1e-12);
        }
    }
}
