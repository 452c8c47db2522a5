//! Dense tableau simplex for `max cᵀx` subject to `Ax ≤ b`, `x ≥ 0`, `b ≥ 0`.
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots it switches to
//! Bland's rule, which cannot cycle.

use crate::error::{Error, Result};

const DEGENERATE_RUN: usize = 50;
/// Smaller pivots amplify rounding enough to corrupt the tableau.
const MIN_PIVOT: f64 = 1e-9;
/// Row violation of the returned point beyond which the solve is rejected.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// Multipliers of the rows; `y ≥ 0`, `Aᵀy ≥ c`, `bᵀy = value`.
    pub y: Vec<f64>,
    pub pivots: usize,
}

/// `a` is row-major `m × n`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let (m, n) = (a.len(), c.len());
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::Config("dense LP: inconsistent shapes".into()));
    }
    if b.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Config("dense LP: right-hand side must be nonnegative".into()));
    }
    let width = n + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        t[i * width..i * width + n].copy_from_slice(&a[i]);
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    // Objective row holds −c; entering columns have negative entries.
    for j in 0..n {
        t[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let scale = 1.0 + c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let eps = 1e-12 * scale;
    let max_pivots = 50 * (m + n) + 1000;
    let mut degenerate = 0;
    let mut pivots = 0;
    loop {
        let obj = &t[m * width..(m + 1) * width - 1];
        let bland = degenerate >= DEGENERATE_RUN;
        let entering = if bland {
            obj.iter().position(|&v| v < -eps)
        } else {
            let mut pick = None;
            let mut most = -eps;
            for (j, &v) in obj.iter().enumerate() {
                if v < most {
                    most = v;
                    pick = Some(j);
                }
            }
            pick
        };
        let Some(col) = entering else { break };
        let mut leave = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let p = t[i * width + col];
            if p > MIN_PIVOT {
                let ratio = t[i * width + width - 1] / p;
                let better = ratio < best - 1e-15
                    || (ratio <= best + 1e-15 && leave != usize::MAX && basis[i] < basis[leave]);
                if better {
                    best = ratio;
                    leave = i;
                }
            }
        }
        if leave == usize::MAX {
            return Err(Error::Numeric("dense LP: objective unbounded".into()));
        }
        degenerate = if best <= 1e-15 { degenerate + 1 } else { 0 };
        let piv = t[leave * width + col];
        for j in 0..width {
            t[leave * width + j] /= piv;
        }
        for i in 0..=m {
            if i == leave {
                continue;
            }
            let f = t[i * width + col];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * t[leave * width + j];
                }
            }
        }
        basis[leave] = col;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NoConvergence {
                what: "dense LP simplex",
                iterations: pivots,
                residual: 0.0,
            });
        }
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i * width + width - 1];
        }
    }
    let bscale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let violation = a
        .iter()
        .zip(b)
        .map(|(r, bi)| r.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() - bi)
        .fold(0.0f64, f64::max);
    if violation > FEASIBILITY_TOL * bscale {
        return Err(Error::Numeric(format!("dense LP: solution violates a row by {violation:.3e}")));
    }
    let y = (0..m).map(|i| t[m * width + n + i]).collect();
    Ok(LpSolution {
        value: t[(m + 1) * width - 1],
        x,
        y,
        pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_instance() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 -> (2, 6), value 36.
        let s = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((s.value - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        let dual: f64 = s.y.iter().zip([4.0, 12.0, 18.0]).map(|(y, b)| y * b).sum();
        assert!((dual - 36.0).abs() < 1e-12);
        assert!(s.y.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn degenerate_instance_terminates() {
        // Beale's cycling example under the textbook rule.
        let c = [0.75, -150.0, 0.02, -6.0];
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0],
            vec![0.5, -90.0, -0.02, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let s = maximize(&c, &a, &[0.0, 0.0, 1.0]).unwrap();
        assert!((s.value - 0.05).abs() < 1e-12, "{}", s.value);
    }

    #[test]
    fn unbounded_detected() {
        assert!(maximize(&[1.0], &[vec![-1.0]], &[1.0]).is_err());
    }
}
