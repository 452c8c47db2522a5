use crate::error::{Error, Result};
use crate::tolerances;

const MAX_TERMS: usize = 100_000;
/// Largest `|z|` accepted; positive arguments never cancel, negative ones go
/// through the Kummer transformation.
pub const MAX_ARGUMENT: f64 = 700.0;

/// Confluent hypergeometric function `M(a, b, z) = Σ (a)_k z^k / ((b)_k k!)`.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && z.is_finite()) {
        return Err(Error::Numeric("kummer_m: non-finite argument".into()));
    }
    if b <= 0.0 && b == b.round() {
        return Err(Error::Numeric(format!("kummer_m: b = {b} is a pole")));
    }
    if z.abs() > MAX_ARGUMENT {
        return Err(Error::Unsupported(format!("kummer_m: |z| = {} too large", z.abs())));
    }
    if z == 0.0 || a == 0.0 {
        return Ok(1.0);
    }
    if z < 0.0 {
        return Ok(z.exp() * series(b - a, b, -z)?);
    }
    series(a, b, z)
}

/// `ln M(a, b, z)` for `z ≥ 0`-type arguments where `M > 0`.
pub fn ln_kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if z < 0.0 {
        return Ok(z + kummer_m(b - a, b, -z)?.ln());
    }
    Ok(kummer_m(a, b, z)?.ln())
}

fn series(a: f64, b: f64, z: f64) -> Result<f64> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let settle = a.abs() + b.abs() + z;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * z / (kf + 1.0);
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        if kf > settle && term.abs() <= tolerances::KUMMER_SERIES * sum.abs() {
            return Ok(sum);
        }
        if !sum.is_finite() {
            return Err(Error::Numeric("kummer_m: series overflow".into()));
        }
    }
    Err(Error::NoConvergence {
        what: "Kummer series",
        iterations: MAX_TERMS,
        residual: term.abs() / sum.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_argument() {
        assert_eq!(kummer_m(2.3, 1.7, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn closed_forms() {
        let e1 = std::f64::consts::E - 1.0;
        assert!((kummer_m(1.0, 2.0, 1.0).unwrap() - e1).abs() < 1e-12);
        assert!((kummer_m(3.5, 3.5, 2.0).unwrap() - 2f64.exp()).abs() < 1e-12 * 2f64.exp());
        // M(1, 2, z) = (e^z − 1)/z on the negative side as well.
        let z = -7.5f64;
        assert!((kummer_m(1.0, 2.0, z).unwrap() - (z.exp() - 1.0) / z).abs() < 1e-13);
        // Terminating series: M(−2, b, z) is a Laguerre-type polynomial.
        let (b, z) = (1.5, 3.0);
        let poly = 1.0 - 2.0 * z / b + z * z / (b * (b + 1.0));
        assert!((kummer_m(-2.0, b, z).unwrap() - poly).abs() < 1e-13);
    }

    #[test]
    fn poles_are_rejected() {
        assert!(kummer_m(1.0, 0.0, 1.0).is_err());
        assert!(kummer_m(1.0, -3.0, 1.0).is_err());
        assert!(kummer_m(1.0, -2.5, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn contiguous_recurrence(a in 0.5f64..6.0, b in 0.5f64..6.0, z in -50.0f64..50.0) {
            let lhs = kummer_m(a, b, z).unwrap();
            let rhs = kummer_m(a - 1.0, b, z).unwrap() + z / b * kummer_m(a, b + 1.0, z).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }
}
