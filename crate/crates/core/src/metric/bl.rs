//! Bounded-Lipschitz distance between compactified measures.
//!
//! The optimum over test functions with `|ψ| ≤ s`, `Lip(ψ) ≤ ℓ`, `s + ℓ ≤ 1` is
//! computed as follows. For fixed `s` (and `ℓ = 1 − s`) the problem is the dual
//! of an uncapacitated min-cost flow on the merged support, the star point and
//! a bank node (arcs to the bank cost `s`, transport arcs cost `ℓ d⋆`). Its
//! value `V(s)` is concave and piecewise linear; the maximum over `s` is found
//! by Eisner–Severance line intersection, each flow giving a supporting line.

use super::compact::CompactifiedMeasure;
use super::dense_lp;
use super::dstar::StarMetric;
use super::network::{Arc, NetworkSimplex};
use crate::error::{Error, Result};

/// Merged supports above this size are binned onto a common grid.
pub const MAX_SUPPORT: usize = 4096;
/// Largest merged support accepted by the dense LP oracle.
pub const DENSE_SUPPORT: usize = 40;

const MAX_EVALUATIONS: usize = 200;

/// Merged support `x_1..x_K` plus the star point (index `K`) and the signed
/// mass difference `Δ = μ − ν` on it.
#[derive(Debug, Clone)]
pub struct MergedSupport {
    pub dim: usize,
    pub atoms: Vec<f64>,
    pub delta: Vec<f64>,
    /// Cell width of the common grid when the support was coarsened.
    pub coarsened: Option<f64>,
}

impl MergedSupport {
    pub fn len(&self) -> usize {
        self.atoms.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct BlResult {
    pub distance: f64,
    /// Sup-norm budget of the optimal test function.
    pub s: f64,
    /// Lipschitz budget of the optimal test function.
    pub l: f64,
    /// Optimal test function on the support; the last entry is its value at ⋆.
    pub psi: Vec<f64>,
    pub support: MergedSupport,
    pub evaluations: usize,
}

impl BlResult {
    /// Largest violation of the LP constraints by `(ψ, s, ℓ)` over all pairs.
    pub fn certificate_violation(&self, metric: &StarMetric) -> f64 {
        let k = self.support.len();
        let mut worst = (self.s + self.l - 1.0).max(-self.s).max(-self.l);
        for (i, p) in self.psi.iter().enumerate() {
            worst = worst.max(p.abs() - self.s);
            if i < k {
                let x = self.support.atom(i);
                worst = worst.max((p - self.psi[k]).abs() - self.l * metric.l(x));
                for j in i + 1..k {
                    let d = metric.finite(x, self.support.atom(j));
                    worst = worst.max((p - self.psi[j]).abs() - self.l * d);
                }
            }
        }
        worst.max(0.0)
    }

    /// `Σ ψ_k Δ_k`, which equals the distance at optimality.
    pub fn dual_value(&self) -> f64 {
        self.psi.iter().zip(&self.support.delta).map(|(p, d)| p * d).sum()
    }
}

/// Merges the atoms of both measures; exact duplicates are combined.
pub fn merge_supports(mu: &CompactifiedMeasure, nu: &CompactifiedMeasure) -> Result<MergedSupport> {
    if mu.dim() != nu.dim() {
        return Err(Error::Config("bl_distance: dimensions differ".into()));
    }
    let dim = mu.dim();
    let mut items: Vec<(&[f64], f64)> = Vec::with_capacity(mu.len() + nu.len());
    items.extend((0..mu.len()).map(|i| (mu.atom(i), mu.masses()[i])));
    items.extend((0..nu.len()).map(|i| (nu.atom(i), -nu.masses()[i])));
    let mut merged = collapse(dim, items);
    let mut coarsened = None;
    if merged.0.len() / dim > MAX_SUPPORT {
        let (atoms, delta, width) = coarsen(dim, &merged.0, &merged.1);
        merged = (atoms, delta);
        coarsened = Some(width);
    }
    let (atoms, mut delta) = merged;
    delta.push(mu.star_mass() - nu.star_mass());
    Ok(MergedSupport {
        dim,
        atoms,
        delta,
        coarsened,
    })
}

fn collapse(dim: usize, mut items: Vec<(&[f64], f64)>) -> (Vec<f64>, Vec<f64>) {
    items.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut atoms: Vec<f64> = Vec::with_capacity(items.len() * dim);
    let mut delta: Vec<f64> = Vec::with_capacity(items.len());
    for (x, m) in items {
        let n = delta.len();
        if n > 0 && atoms[(n - 1) * dim..n * dim] == *x {
            delta[n - 1] += m;
        } else {
            atoms.extend_from_slice(x);
            delta.push(m);
        }
    }
    (atoms, delta)
}

/// Weight-preserving binning onto a uniform grid with at most `MAX_SUPPORT`
/// cells; atoms move to cell centres.
fn coarsen(dim: usize, atoms: &[f64], delta: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let per_dim = ((MAX_SUPPORT as f64).powf(1.0 / dim as f64).floor() as usize).max(1);
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for x in atoms.chunks(dim) {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let width: Vec<f64> = (0..dim).map(|j| ((hi[j] - lo[j]) / per_dim as f64).max(f64::MIN_POSITIVE)).collect();
    let centres: Vec<Vec<f64>> = atoms
        .chunks(dim)
        .map(|x| {
            (0..dim)
                .map(|j| {
                    let k = (((x[j] - lo[j]) / width[j]).floor() as usize).min(per_dim - 1);
                    lo[j] + (k as f64 + 0.5) * width[j]
                })
                .collect()
        })
        .collect();
    let items: Vec<(&[f64], f64)> = centres.iter().map(|c| c.as_slice()).zip(delta.iter().copied()).collect();
    let (a, d) = collapse(dim, items);
    (a, d, width.iter().fold(0.0, |m: f64, w| m.max(*w)))
}

/// Distance with base point `x0 = 0`.
pub fn bl_distance(mu: &CompactifiedMeasure, nu: &CompactifiedMeasure) -> Result<BlResult> {
    bl_distance_with(mu, nu, &StarMetric::origin(mu.dim()))
}

struct Evaluation {
    s: f64,
    bank: f64,
    transport: f64,
    psi: Vec<f64>,
}

impl Evaluation {
    fn line(&self, s: f64) -> f64 {
        s * self.bank + (1.0 - s) * self.transport
    }

    fn slope(&self) -> f64 {
        self.bank - self.transport
    }
}

struct FlowProblem {
    ns: NetworkSimplex,
    base: Vec<f64>,
    is_bank: Vec<bool>,
    nodes: usize,
}

impl FlowProblem {
    fn build(support: &MergedSupport, metric: &StarMetric) -> Result<Self> {
        let k = support.len();
        let star = k;
        let bank = k + 1;
        let mut arcs = Vec::new();
        let mut base = Vec::new();
        let mut is_bank = Vec::new();
        let mut push = |tail: usize, head: usize, b: f64, bk: bool| {
            arcs.push(Arc { tail, head, cost: 0.0 });
            base.push(b);
            is_bank.push(bk);
        };
        let mut tree = Vec::with_capacity(k + 1);
        for i in 0..=k {
            // Arc to the bank first, then the reverse one.
            let out_index = 2 * i;
            push(i, bank, 1.0, true);
            push(bank, i, 1.0, true);
            tree.push(if support.delta[i] >= 0.0 { out_index } else { out_index + 1 });
        }
        for i in 0..k {
            let l = metric.l(support.atom(i));
            push(i, star, l, false);
            push(star, i, l, false);
        }
        if support.dim == 1 {
            // Path metric of the sorted line plus the star hub equals d⋆.
            for i in 1..k {
                let gap = support.atoms[i] - support.atoms[i - 1];
                push(i - 1, i, gap, false);
                push(i, i - 1, gap, false);
            }
        } else {
            for i in 0..k {
                for j in i + 1..k {
                    let d = metric.finite(support.atom(i), support.atom(j));
                    push(i, j, d, false);
                    push(j, i, d, false);
                }
            }
        }
        let mut supply = support.delta.clone();
        supply.push(-support.delta.iter().sum::<f64>());
        let ns = NetworkSimplex::new(k + 2, bank, arcs, &supply, &tree)?;
        Ok(Self {
            ns,
            base,
            is_bank,
            nodes: k + 1,
        })
    }

    fn evaluate(&mut self, s: f64) -> Result<Evaluation> {
        for a in 0..self.base.len() {
            let c = if self.is_bank[a] { s } else { (1.0 - s) * self.base[a] };
            self.ns.set_cost(a, c);
        }
        let limit = 200 * (self.nodes + 10) + self.base.len();
        self.ns.solve(limit)?;
        let (mut bank, mut transport) = (0.0, 0.0);
        for (a, f) in self.ns.flow().iter().enumerate() {
            if self.is_bank[a] {
                bank += f;
            } else {
                transport += f * self.base[a];
            }
        }
        let mut psi = self.ns.prices();
        psi.truncate(self.nodes);
        Ok(Evaluation {
            s,
            bank,
            transport,
            psi,
        })
    }
}

pub fn bl_distance_with(mu: &CompactifiedMeasure, nu: &CompactifiedMeasure, metric: &StarMetric) -> Result<BlResult> {
    let support = merge_supports(mu, nu)?;
    let mut flow = FlowProblem::build(&support, metric)?;
    let mut evaluations = 0;
    let mut eval = |flow: &mut FlowProblem, s: f64| {
        evaluations += 1;
        flow.evaluate(s)
    };
    let finish = |e: Evaluation, evaluations: usize, support: MergedSupport| {
        let distance = e.line(e.s).max(0.0);
        BlResult {
            distance,
            s: e.s,
            l: 1.0 - e.s,
            psi: e.psi,
            support,
            evaluations,
        }
    };
    let mut lo = eval(&mut flow, 0.0)?;
    if lo.slope() <= 0.0 {
        return Ok(finish(lo, evaluations, support));
    }
    let mut hi = eval(&mut flow, 1.0)?;
    if hi.slope() >= 0.0 {
        return Ok(finish(hi, evaluations, support));
    }
    let tol = 1e-13;
    for _ in 0..MAX_EVALUATIONS {
        let denom = lo.slope() - hi.slope();
        let s = ((hi.transport - lo.transport) / denom).clamp(lo.s, hi.s);
        let upper = lo.line(s).min(hi.line(s));
        let mid = eval(&mut flow, s)?;
        let value = mid.line(s);
        if upper - value <= tol || mid.slope() == 0.0 {
            return Ok(finish(mid, evaluations, support));
        }
        if mid.slope() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "bounded-Lipschitz parametric search",
        iterations: MAX_EVALUATIONS,
        residual: 0.0,
    })
}

/// Reference solution of the full LP by the dense simplex; small supports only.
pub fn bl_distance_dense(mu: &CompactifiedMeasure, nu: &CompactifiedMeasure, metric: &StarMetric) -> Result<BlResult> {
    let support = merge_supports(mu, nu)?;
    let k = support.len();
    let p = k + 1;
    if p > DENSE_SUPPORT {
        return Err(Error::Unsupported(format!(
            "dense LP oracle handles at most {DENSE_SUPPORT} support points, got {p}"
        )));
    }
    let dist = |i: usize, j: usize| -> f64 {
        match (i == k, j == k) {
            (true, true) => 0.0,
            (true, false) => metric.l(support.atom(j)),
            (false, true) => metric.l(support.atom(i)),
            (false, false) => metric.finite(support.atom(i), support.atom(j)),
        }
    };
    // Variables: ψ⁺ (p), ψ⁻ (p), s, ℓ.
    let n = 2 * p + 2;
    let (is, il) = (2 * p, 2 * p + 1);
    let mut c = vec![0.0; n];
    for i in 0..p {
        c[i] = support.delta[i];
        c[p + i] = -support.delta[i];
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..p {
        for sign in [1.0, -1.0] {
            let mut r = vec![0.0; n];
            r[i] = sign;
            r[p + i] = -sign;
            r[is] = -1.0;
            rows.push(r);
            rhs.push(0.0);
        }
        for j in 0..p {
            if i != j {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r[p + i] = -1.0;
                r[j] = -1.0;
                r[p + j] = 1.0;
                r[il] = -dist(i, j);
                rows.push(r);
                rhs.push(0.0);
            }
        }
    }
    let mut r = vec![0.0; n];
    r[is] = 1.0;
    r[il] = 1.0;
    rows.push(r);
    rhs.push(1.0);
    let sol = dense_lp::maximize(&c, &rows, &rhs)?;
    let psi = (0..p).map(|i| sol.x[i] - sol.x[p + i]).collect();
    Ok(BlResult {
        distance: sol.value.max(0.0),
        s: sol.x[is],
        l: sol.x[il],
        psi,
        support,
        evaluations: 1,
    })
}

/// `2d/(2 + d)`, the distance between two unit Dirac masses at `d⋆`-distance `d`.
pub fn two_dirac_distance(d: f64) -> f64 {
    2.0 * d / (2.0 + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dirac(x: f64, m: f64) -> CompactifiedMeasure {
        CompactifiedMeasure::new(1, vec![x], vec![m]).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, dim: usize, atoms: usize) -> CompactifiedMeasure {
        let total = rng.random_range(0.3..1.0);
        let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let pts: Vec<f64> = (0..atoms * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        CompactifiedMeasure::new(dim, pts, raw.iter().map(|m| m / sum * total).collect()).unwrap()
    }

    #[test]
    fn equal_measures_are_at_distance_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_measure(&mut rng, 1, 20);
        let r = bl_distance(&m, &m).unwrap();
        assert!(r.distance.abs() <= 1e-12);
    }

    #[test]
    fn two_diracs() {
        let metric = StarMetric::origin(1);
        for (x, y) in [(0.0, 2.0), (0.3, 0.5), (-4.0, 7.0), (1.0, 1.0 + 1e-6)] {
            let d = metric.finite(&[x], &[y]);
            let r = bl_distance(&dirac(x, 1.0), &dirac(y, 1.0)).unwrap();
            assert!((r.distance - two_dirac_distance(d)).abs() <= 1e-9, "{x} {y}: {}", r.distance);
            assert!(r.certificate_violation(&metric) <= 1e-9);
        }
        assert_eq!(two_dirac_distance(2.0), 1.0);
    }

    #[test]
    fn dirac_against_half_mass_matches_grid_search() {
        let x = 1.5;
        let r = bl_distance(&dirac(x, 1.0), &dirac(x, 0.5)).unwrap();
        // Support {x, ⋆}; Δ = (½, −½). Brute force over s, ℓ = 1 − s and the
        // best ψ pair for that budget on a fine grid of (ψ_x, ψ_⋆).
        let lx = 1.0 / (1.0 + x);
        let mut best = 0.0f64;
        let n = 400;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let l = 1.0 - s;
            for a in 0..=40 {
                for b in 0..=40 {
                    let px = -s + 2.0 * s * a as f64 / 40.0;
                    let ps = -s + 2.0 * s * b as f64 / 40.0;
                    if (px - ps).abs() <= l * lx + 1e-15 {
                        best = best.max(0.5 * (px - ps));
                    }
                }
            }
        }
        let exact = lx / (2.0 + lx);
        assert!((r.distance - exact).abs() <= 1e-9);
        assert!(best <= exact + 1e-12 && exact - best < 2e-3, "{best} {exact}");
    }

    #[test]
    fn network_matches_dense_oracle_on_three_atoms() {
        let metric = StarMetric::origin(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mu = random_measure(&mut rng, 1, 2);
            let nu = random_measure(&mut rng, 1, 1);
            let a = bl_distance(&mu, &nu).unwrap();
            let b = bl_distance_dense(&mu, &nu, &metric).unwrap();
            assert!((a.distance - b.distance).abs() <= 1e-9, "{} {}", a.distance, b.distance);
            assert!(b.certificate_violation(&metric) <= 1e-9);
        }
    }

    #[test]
    fn network_matches_dense_oracle_in_two_dimensions() {
        let metric = StarMetric::origin(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mu = random_measure(&mut rng, 2, 6);
            let nu = random_measure(&mut rng, 2, 5);
            let a = bl_distance(&mu, &nu).unwrap();
            let b = bl_distance_dense(&mu, &nu, &metric).unwrap();
            assert!((a.distance - b.distance).abs() <= 1e-9);
            assert!(a.certificate_violation(&metric) <= 1e-9);
        }
    }

    #[test]
    fn large_supports_are_coarsened() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mu = random_measure(&mut rng, 1, 3000);
        let nu = random_measure(&mut rng, 1, 3000);
        let r = bl_distance(&mu, &nu).unwrap();
        assert!(r.support.coarsened.is_some());
        assert!(r.support.len() <= MAX_SUPPORT);
        assert!(r.certificate_violation(&StarMetric::origin(1)) <= 1e-9);
        assert!((r.dual_value() - r.distance).abs() <= 1e-9);
    }

    #[test]
    fn bounded_by_two_and_by_total_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let mu = random_measure(&mut rng, 1, 8);
            let nu = random_measure(&mut rng, 1, 8);
            let r = bl_distance(&mu, &nu).unwrap();
            let tv: f64 = r.support.delta.iter().map(|d| d.abs()).sum();
            assert!(r.distance <= 2.0 && r.distance <= tv + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn metric_axioms(seed in 0u64..1_000_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..12);
            let a = random_measure(&mut rng, 1, n);
            let nb = rng.random_range(1..12);
            let b = random_measure(&mut rng, 1, nb);
            let nc = rng.random_range(1..12);
            let c = random_measure(&mut rng, 1, nc);
            let metric = StarMetric::origin(1);
            let ab = bl_distance(&a, &b).unwrap();
            let ba = bl_distance(&b, &a).unwrap();
            let ac = bl_distance(&a, &c).unwrap().distance;
            let cb = bl_distance(&c, &b).unwrap().distance;
            prop_assert!((ab.distance - ba.distance).abs() <= 1e-10);
            prop_assert!(ab.distance <= ac + cb + 1e-9);
            prop_assert!(ab.certificate_violation(&metric) <= 1e-9);
            prop_assert!((ab.dual_value() - ab.distance).abs() <= 1e-9);
            prop_assert!(bl_distance(&a, &a).unwrap().distance <= 1e-12);
        }
    }
}
