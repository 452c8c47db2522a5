use crate::error::{Error, Result};
use crate::particle::EmpiricalMeasure;

/// `∫|F_μ − F_ν|` for 1D measures of equal total mass.
pub fn wasserstein1_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::Unsupported("wasserstein1_1d: one-dimensional measures only".into()));
    }
    let (ma, mb) = (mu.total_mass(), nu.total_mass());
    if (ma - mb).abs() > 1e-12 * ma.max(mb).max(1.0) {
        return Err(Error::Config(format!(
            "wasserstein1_1d: masses differ ({ma} vs {mb}); use the bounded-Lipschitz distance"
        )));
    }
    let mut events: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .zip(&mu.masses)
        .map(|(x, m)| (*x, *m))
        .chain(nu.atoms.iter().zip(&nu.masses).map(|(x, m)| (*x, -*m)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = 0.0;
    let mut total = 0.0;
    for w in events.windows(2) {
        cdf += w[0].1;
        total += cdf.abs() * (w[1].0 - w[0].0);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::Normalization;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn measure(atoms: Vec<f64>, masses: Vec<f64>) -> EmpiricalMeasure {
        EmpiricalMeasure {
            dim: 1,
            atoms,
            masses,
            normalization: Normalization::Normalized,
        }
    }

    #[test]
    fn translation_and_identity() {
        let a = measure(vec![0.0], vec![1.0]);
        let b = measure(vec![1.0], vec![1.0]);
        assert_eq!(wasserstein1_1d(&a, &b).unwrap(), 1.0);
        assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
        let c = measure(vec![0.0, 2.0], vec![0.5, 0.5]);
        let d = measure(vec![1.0, 3.0], vec![0.5, 0.5]);
        assert_eq!(wasserstein1_1d(&c, &d).unwrap(), 1.0);
    }

    #[test]
    fn unequal_mass_rejected() {
        let a = measure(vec![0.0], vec![1.0]);
        let b = measure(vec![1.0], vec![0.5]);
        assert!(wasserstein1_1d(&a, &b).is_err());
    }

    #[test]
    fn gaussian_sample_against_discretised_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let emp = measure(xs, vec![1.0 / n as f64; n]);
        // Fine midpoint discretisation of N(0, 1) on [−8, 8].
        let cells = 20_000;
        let h = 16.0 / cells as f64;
        let mids: Vec<f64> = (0..cells).map(|k| -8.0 + (k as f64 + 0.5) * h).collect();
        let raw: Vec<f64> = mids.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let s: f64 = raw.iter().sum();
        let exact = measure(mids, raw.iter().map(|v| v / s).collect());
        let w = wasserstein1_1d(&emp, &exact).unwrap();
        assert!(w <= 0.02, "{w}");
    }
}
