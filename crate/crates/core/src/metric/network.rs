//! Primal network simplex for uncapacitated minimum-cost flow.
//!
//! The spanning tree is kept strongly feasible (zero-flow tree arcs point
//! towards the root) and the leaving arc is chosen by Cunningham's rule, so
//! degenerate pivots cannot cycle. Costs can be replaced between solves; the
//! current tree stays primal feasible and serves as a warm start.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkSimplex {
    n: usize,
    root: usize,
    arcs: Vec<Arc>,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_arc: Vec<usize>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    pivots: usize,
}

const NONE: usize = usize::MAX;

impl NetworkSimplex {
    /// `initial_tree` lists one arc per non-root node joining it to `root`,
    /// oriented along the flow it must carry (`supply ≥ 0` points to the root).
    pub fn new(n: usize, root: usize, arcs: Vec<Arc>, supply: &[f64], initial_tree: &[usize]) -> Result<Self> {
        if supply.len() != n || initial_tree.len() != n - 1 {
            return Err(Error::Config("network simplex: inconsistent sizes".into()));
        }
        let mut flow = vec![0.0; arcs.len()];
        let mut in_tree = vec![false; arcs.len()];
        let mut adj = vec![Vec::new(); n];
        for &a in initial_tree {
            let arc = arcs[a];
            let (node, up) = if arc.head == root {
                (arc.tail, true)
            } else if arc.tail == root {
                (arc.head, false)
            } else {
                return Err(Error::Config("network simplex: initial arc misses the root".into()));
            };
            let f = if up { supply[node] } else { -supply[node] };
            if f < 0.0 || (!up && f == 0.0) {
                return Err(Error::Config("network simplex: initial tree is not strongly feasible".into()));
            }
            flow[a] = f;
            in_tree[a] = true;
            adj[arc.tail].push(a);
            adj[arc.head].push(a);
        }
        let mut s = Self {
            n,
            root,
            arcs,
            flow,
            in_tree,
            adj,
            parent: vec![NONE; n],
            parent_arc: vec![NONE; n],
            depth: vec![0; n],
            pi: vec![0.0; n],
            pivots: 0,
        };
        s.rebuild()?;
        Ok(s)
    }

    pub fn set_cost(&mut self, arc: usize, cost: f64) {
        self.arcs[arc].cost = cost;
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn flow(&self) -> &[f64] {
        &self.flow
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    /// Dual prices `y` with `y_tail − y_head ≤ cost` and `y_root = 0`.
    pub fn prices(&self) -> Vec<f64> {
        self.pi.iter().map(|p| -p).collect()
    }

    pub fn cost(&self) -> f64 {
        self.arcs.iter().zip(&self.flow).map(|(a, f)| a.cost * f).sum()
    }

    /// Recomputes parent pointers, depths and potentials from the tree arcs.
    fn rebuild(&mut self) -> Result<()> {
        self.parent.fill(NONE);
        self.parent_arc[self.root] = NONE;
        self.depth[self.root] = 0;
        self.pi[self.root] = 0.0;
        let mut seen = vec![false; self.n];
        seen[self.root] = true;
        let mut stack = vec![self.root];
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &a in &self.adj[u] {
                let arc = self.arcs[a];
                let v = if arc.tail == u { arc.head } else { arc.tail };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                count += 1;
                self.parent[v] = u;
                self.parent_arc[v] = a;
                self.depth[v] = self.depth[u] + 1;
                self.pi[v] = if arc.tail == u { self.pi[u] + arc.cost } else { self.pi[u] - arc.cost };
                stack.push(v);
            }
        }
        if count != self.n {
            return Err(Error::Numeric("network simplex: tree is disconnected".into()));
        }
        Ok(())
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        let arc = self.arcs[a];
        arc.cost + self.pi[arc.tail] - self.pi[arc.head]
    }

    /// Pivots to optimality and returns the cost.
    ///
    /// Pricing scans blocks of about `√m` arcs and enters the most negative
    /// reduced cost of the first block that has one.
    pub fn solve(&mut self, max_pivots: usize) -> Result<f64> {
        self.rebuild()?;
        let m = self.arcs.len();
        let scale = 1.0 + self.arcs.iter().map(|a| a.cost.abs()).fold(0.0, f64::max);
        let eps = 1e-13 * scale;
        let block = ((m as f64).sqrt().ceil() as usize).max(16).min(m.max(1));
        let mut next = 0;
        for _ in 0..max_pivots {
            let mut entering = NONE;
            let mut best = -eps;
            let mut scanned = 0;
            while scanned < m {
                let end = scanned + block.min(m - scanned);
                while scanned < end {
                    let a = next;
                    next = if next + 1 == m { 0 } else { next + 1 };
                    scanned += 1;
                    if self.in_tree[a] {
                        continue;
                    }
                    let rc = self.reduced_cost(a);
                    if rc < best {
                        best = rc;
                        entering = a;
                    }
                }
                if entering != NONE {
                    break;
                }
            }
            if entering == NONE {
                return Ok(self.cost());
            }
            self.pivot(entering)?;
            self.pivots += 1;
        }
        Err(Error::NoConvergence {
            what: "network simplex",
            iterations: max_pivots,
            residual: 0.0,
        })
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let Arc { tail: u, head: v, .. } = self.arcs[entering];
        // Paths from each endpoint up to the apex.
        let (mut a, mut b) = (u, v);
        let mut u_side = Vec::new();
        let mut v_side = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                u_side.push(a);
                a = self.parent[a];
            } else {
                v_side.push(b);
                b = self.parent[b];
            }
        }
        // Traverse apex -> u (reverse of u_side), entering arc, v -> apex.
        // Nodes stand for the arc to their parent; `true` means the flow grows.
        let mut cycle: Vec<(usize, bool)> = Vec::with_capacity(u_side.len() + v_side.len());
        for &node in u_side.iter().rev() {
            let arc = self.arcs[self.parent_arc[node]];
            cycle.push((node, arc.tail == self.parent[node]));
        }
        let u_len = cycle.len();
        for &node in &v_side {
            let arc = self.arcs[self.parent_arc[node]];
            cycle.push((node, arc.tail == node));
        }
        let mut delta = f64::INFINITY;
        let mut leave = NONE;
        for (i, &(node, grows)) in cycle.iter().enumerate() {
            if grows {
                continue;
            }
            let f = self.flow[self.parent_arc[node]];
            if f <= delta {
                delta = f;
                leave = i;
            }
        }
        if leave == NONE {
            return Err(Error::Numeric("network simplex: unbounded cycle".into()));
        }
        for &(node, grows) in &cycle {
            let a = self.parent_arc[node];
            if grows {
                self.flow[a] += delta;
            } else {
                self.flow[a] -= delta;
            }
        }
        self.flow[entering] = delta;
        let (leave_node, _) = cycle[leave];
        let leaving = self.parent_arc[leave_node];
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        let la = self.arcs[leaving];
        for end in [la.tail, la.head] {
            let pos = self.adj[end].iter().position(|&x| x == leaving).expect("tree arc");
            self.adj[end].swap_remove(pos);
        }
        self.in_tree[entering] = true;
        self.adj[u].push(entering);
        self.adj[v].push(entering);
        // The endpoint on the leaving arc's side hangs from the other one.
        let (inner, outer) = if leave < u_len { (u, v) } else { (v, u) };
        self.reattach(inner, outer, entering);
        Ok(())
    }

    /// Recomputes parents, depths and potentials of the subtree entered at
    /// `inner`, which now hangs from `outer` through `arc`.
    fn reattach(&mut self, inner: usize, outer: usize, arc: usize) {
        let mut stack = vec![(inner, outer, arc)];
        while let Some((node, par, a)) = stack.pop() {
            let c = self.arcs[a];
            self.parent[node] = par;
            self.parent_arc[node] = a;
            self.depth[node] = self.depth[par] + 1;
            self.pi[node] = if c.tail == par { self.pi[par] + c.cost } else { self.pi[par] - c.cost };
            for &b in &self.adj[node] {
                if b == a {
                    continue;
                }
                let e = self.arcs[b];
                let child = if e.tail == node { e.head } else { e.tail };
                stack.push((child, node, b));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Transportation instance with a hub root that has prohibitive cost.
    fn transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
        let (m, k) = (supply.len(), demand.len());
        let n = m + k + 1;
        let root = n - 1;
        let mut arcs = Vec::new();
        let mut tree = Vec::new();
        let mut sup = vec![0.0; n];
        for i in 0..m {
            sup[i] = supply[i];
            tree.push(arcs.len());
            arcs.push(Arc { tail: i, head: root, cost: 1e3 });
        }
        for j in 0..k {
            sup[m + j] = -demand[j];
            tree.push(arcs.len());
            arcs.push(Arc { tail: root, head: m + j, cost: 1e3 });
        }
        for i in 0..m {
            for j in 0..k {
                arcs.push(Arc { tail: i, head: m + j, cost: cost[i][j] });
            }
        }
        let mut ns = NetworkSimplex::new(n, root, arcs, &sup, &tree).unwrap();
        ns.solve(10_000).unwrap()
    }

    #[test]
    fn small_transportation_problem() {
        let cost = vec![vec![4.0, 6.0, 9.0], vec![5.0, 3.0, 8.0]];
        let v = transport(&[30.0, 30.0], &[20.0, 30.0, 10.0], &cost);
        // Enumerated over the two free shipment amounts.
        assert!((v - 260.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn assignment_matches_brute_force() {
        let cost = vec![
            vec![7.0, 2.0, 1.0, 9.0],
            vec![3.0, 6.0, 4.0, 2.0],
            vec![5.0, 8.0, 3.0, 7.0],
            vec![4.0, 1.0, 6.0, 5.0],
        ];
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        fn permute(k: usize, p: &mut [usize; 4], c: &[Vec<f64>], best: &mut f64) {
            if k == 4 {
                *best = best.min((0..4).map(|i| c[i][p[i]]).sum());
                return;
            }
            for i in k..4 {
                p.swap(k, i);
                permute(k + 1, p, c, best);
                p.swap(k, i);
            }
        }
        permute(0, &mut perm, &cost, &mut best);
        let v = transport(&[1.0; 4], &[1.0; 4], &cost);
        assert!((v - best).abs() < 1e-12, "{v} {best}");
    }

    #[test]
    fn prices_certify_optimality() {
        let cost = vec![vec![1.0, 4.0], vec![2.0, 1.5], vec![3.0, 0.5]];
        let supply = [0.2, 0.5, 0.3];
        let demand = [0.6, 0.4];
        let n = 6;
        let root = 5;
        let mut arcs = Vec::new();
        let mut tree = Vec::new();
        let mut sup = vec![0.0; n];
        for i in 0..3 {
            sup[i] = supply[i];
            tree.push(arcs.len());
            arcs.push(Arc { tail: i, head: root, cost: 100.0 });
        }
        for j in 0..2 {
            sup[3 + j] = -demand[j];
            tree.push(arcs.len());
            arcs.push(Arc { tail: root, head: 3 + j, cost: 100.0 });
        }
        for i in 0..3 {
            for j in 0..2 {
                arcs.push(Arc { tail: i, head: 3 + j, cost: cost[i][j] });
            }
        }
        let mut ns = NetworkSimplex::new(n, root, arcs, &sup, &tree).unwrap();
        let v = ns.solve(1000).unwrap();
        let y = ns.prices();
        let dual: f64 = (0..n).map(|i| y[i] * sup[i]).sum();
        assert!((dual - v).abs() < 1e-12);
        for a in ns.arcs() {
            assert!(y[a.tail] - y[a.head] <= a.cost + 1e-12);
        }
        assert!(ns.flow().iter().all(|f| *f >= 0.0));
    }
}
