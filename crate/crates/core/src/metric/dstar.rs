//! Metric on the one-point compactification `D ∪ {⋆}`.

/// A point of `D⋆`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StarPoint<'a> {
    Finite(&'a [f64]),
    Star,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarMetric {
    x0: Vec<f64>,
}

impl StarMetric {
    /// Base point `x0 = 0`.
    pub fn origin(dim: usize) -> Self {
        Self { x0: vec![0.0; dim] }
    }

    pub fn new(x0: Vec<f64>) -> Self {
        Self { x0 }
    }

    pub fn base_point(&self) -> &[f64] {
        &self.x0
    }

    /// `l(x) = 1/(1 + |x − x0|)`.
    pub fn l(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.x0).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 / (1.0 + r2.sqrt())
    }

    /// `min(|x − y|, l(x) + l(y))` for finite points.
    pub fn finite(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        r2.sqrt().min(self.l(x) + self.l(y))
    }

    pub fn distance(&self, p: StarPoint<'_>, q: StarPoint<'_>) -> f64 {
        match (p, q) {
            (StarPoint::Star, StarPoint::Star) => 0.0,
            (StarPoint::Finite(x), StarPoint::Star) | (StarPoint::Star, StarPoint::Finite(x)) => self.l(x),
            (StarPoint::Finite(x), StarPoint::Finite(y)) => self.finite(x, y),
        }
    }
}

/// `d⋆` with `x0 = 0`.
pub fn dstar(p: StarPoint<'_>, q: StarPoint<'_>) -> f64 {
    let dim = match (p, q) {
        (StarPoint::Finite(x), _) | (_, StarPoint::Finite(x)) => x.len(),
        _ => 0,
    };
    StarMetric::origin(dim).distance(p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(x: &[f64]) -> StarPoint<'_> {
        StarPoint::Finite(x)
    }

    #[test]
    fn formula_values() {
        assert_eq!(dstar(f(&[2.5]), f(&[2.5])), 0.0);
        assert!((dstar(f(&[0.0]), f(&[5.0])) - 7.0 / 6.0).abs() < 1e-15);
        assert_eq!(dstar(f(&[3.0]), StarPoint::Star), 0.25);
        assert_eq!(dstar(StarPoint::Star, StarPoint::Star), 0.0);
        assert!((dstar(f(&[0.1]), f(&[0.3])) - 0.2).abs() < 1e-15);
        let m = StarMetric::new(vec![1.0, 1.0]);
        assert_eq!(m.l(&[4.0, 5.0]), 1.0 / 6.0);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = StarMetric::origin(2);
        let draw = |rng: &mut ChaCha8Rng| -> Option<[f64; 2]> {
            if rng.random::<f64>() < 0.1 {
                None
            } else {
                let scale = 10f64.powf(rng.random_range(-2.0..2.0));
                Some([scale * rng.random_range(-1.0..1.0), scale * rng.random_range(-1.0..1.0)])
            }
        };
        fn pt(p: &Option<[f64; 2]>) -> StarPoint<'_> {
            match p {
                Some(x) => StarPoint::Finite(x),
                None => StarPoint::Star,
            }
        }
        for _ in 0..10_000 {
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let (pa, pb, pc) = (pt(&a), pt(&b), pt(&c));
            let ab = m.distance(pa, pb);
            assert_eq!(ab, m.distance(pb, pa));
            assert!(ab <= 2.0 && ab >= 0.0);
            assert!(ab <= m.distance(pa, pc) + m.distance(pc, pb) + 1e-12);
            assert_eq!(m.distance(pa, pa), 0.0);
        }
    }
}
