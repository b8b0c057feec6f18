//! Minimum-weight spanning arborescences over the fault-weight matrix.
//!
//! [`min_arborescence`] runs the Chu–Liu/Edmonds contraction algorithm.
//! Ties between equal-weight optima are broken towards the arborescence whose
//! sorted `(parent, child)` edge list is lexicographically smallest. The rule
//! is folded into the costs: edge of rank `r` (in `(parent, child)` order,
//! `E` candidate edges) costs `(w + 1) * 2^E - 2^(E - 1 - r)`. Every
//! spanning arborescence has the same number of edges, so the perturbation
//! sum is below `2^E` and only ever orders equal weights; a larger
//! perturbation sum means the smallest edge of the symmetric difference is
//! ours, which is exactly lexicographic order on sorted edge lists.
//!
//! [`brute_force_min_arborescence`] enumerates parent maps and compares edge
//! lists directly. It shares no code with the solver and serves as its oracle.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::num::{Cost, Weight};
use crate::topology::Topology;
use crate::types::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArborescenceError {
    #[error("root {root} does not reach process {node}")]
    Unreachable { root: ProcessId, node: ProcessId },
    #[error("root {root} out of range for n = {n}")]
    InvalidRoot { root: ProcessId, n: usize },
    #[error("exhaustive search refused for n = {n} (limit {max})")]
    TooLarge { n: usize, max: usize },
}

/// `n x n` matrix of channel fault weights; `w[x][y]` weighs channel `x -> y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeWeights<W> {
    n: usize,
    w: Vec<W>,
}

impl<W: Weight> EdgeWeights<W> {
    pub fn zeros(n: usize) -> Self {
        EdgeWeights {
            n,
            w: vec![W::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> W) -> Self {
        let mut w = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                w.push(if a == b { W::zero() } else { f(a, b) });
            }
        }
        EdgeWeights { n, w }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: ProcessId, to: ProcessId) -> W {
        self.w[from.0 * self.n + to.0]
    }

    pub fn set(&mut self, from: ProcessId, to: ProcessId, value: W) {
        self.w[from.0 * self.n + to.0] = value;
    }

    /// Adds one fault to channel `from -> to`.
    pub fn increment(&mut self, from: ProcessId, to: ProcessId) {
        let slot = &mut self.w[from.0 * self.n + to.0];
        *slot = slot.saturating_add(W::one());
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProcessId, ProcessId, W)> + '_ {
        (0..self.n).flat_map(move |a| {
            (0..self.n)
                .filter(move |&b| b != a)
                .map(move |b| (ProcessId(a), ProcessId(b), self.w[a * self.n + b]))
        })
    }
}

/// Borrowed view of weights plus channel presence (complete when `topology`
/// is `None`).
#[derive(Debug, Clone, Copy)]
pub struct WeightedDigraph<'a, W> {
    pub weights: &'a EdgeWeights<W>,
    pub topology: Option<&'a Topology>,
}

impl<'a, W: Weight> WeightedDigraph<'a, W> {
    pub fn complete(weights: &'a EdgeWeights<W>) -> Self {
        WeightedDigraph {
            weights,
            topology: None,
        }
    }

    pub fn with_topology(weights: &'a EdgeWeights<W>, topology: &'a Topology) -> Self {
        WeightedDigraph {
            weights,
            topology: Some(topology),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    #[inline]
    pub fn present(&self, from: usize, to: usize) -> bool {
        from != to
            && self
                .topology
                .is_none_or(|t| t.has_edge(ProcessId(from), ProcessId(to)))
    }

    fn check_reachable(&self, root: ProcessId) -> Result<(), ArborescenceError> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![root.0];
        seen[root.0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && self.present(u, v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            Some(node) => Err(ArborescenceError::Unreachable {
                root,
                node: ProcessId(node),
            }),
            None => Ok(()),
        }
    }
}

/// Directed out-tree rooted at `root`, with the weight the computing process
/// assigned to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arborescence<W> {
    root: ProcessId,
    parent_of: Vec<Option<ProcessId>>,
    weight: W,
}

impl<W: Weight> Arborescence<W> {
    /// Builds an arborescence from a raw parent map without checking it;
    /// see [`validate_arborescence`].
    pub fn from_parents(root: ProcessId, parent_of: Vec<Option<ProcessId>>, weight: W) -> Self {
        Arborescence {
            root,
            parent_of,
            weight,
        }
    }

    /// Star rooted at `root` over `n` processes.
    pub fn star(root: ProcessId, n: usize, weight: W) -> Self {
        let parent_of = (0..n)
            .map(|i| (i != root.0).then_some(root))
            .collect();
        Arborescence {
            root,
            parent_of,
            weight,
        }
    }

    pub fn root(&self) -> ProcessId {
        self.root
    }

    pub fn weight(&self) -> W {
        self.weight
    }

    pub fn n(&self) -> usize {
        self.parent_of.len()
    }

    pub fn parent(&self, p: ProcessId) -> Option<ProcessId> {
        self.parent_of.get(p.0).copied().flatten()
    }

    pub fn parents(&self) -> &[Option<ProcessId>] {
        &self.parent_of
    }

    pub fn children(&self, p: ProcessId) -> impl Iterator<Item = ProcessId> + '_ {
        self.parent_of
            .iter()
            .enumerate()
            .filter(move |(_, par)| **par == Some(p))
            .map(|(c, _)| ProcessId(c))
    }

    pub fn spans(&self, p: ProcessId) -> bool {
        p == self.root || self.parent(p).is_some()
    }

    /// `(parent, child)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(ProcessId, ProcessId)> {
        let mut e: Vec<_> = self
            .parent_of
            .iter()
            .enumerate()
            .filter_map(|(c, par)| par.map(|p| (p, ProcessId(c))))
            .collect();
        e.sort_unstable();
        e
    }

    /// Sum of the current weights of the tree's edges.
    pub fn weight_under(&self, weights: &EdgeWeights<W>) -> W {
        self.edges()
            .into_iter()
            .fold(W::zero(), |acc, (a, b)| acc.saturating_add(weights.get(a, b)))
    }
}

#[derive(Debug, Clone)]
struct CostEdge<C> {
    from: usize,
    to: usize,
    cost: C,
}

/// Chu–Liu/Edmonds over a contracted graph. Returns indices into `edges`
/// forming a minimum arborescence rooted at `root`, or `None` when some node
/// has no incoming edge.
fn edmonds<C: Cost>(n: usize, root: usize, edges: &[CostEdge<C>]) -> Option<Vec<usize>> {
    const NONE: usize = usize::MAX;

    let mut best = vec![NONE; n];
    for (i, e) in edges.iter().enumerate() {
        if e.to == root || e.from == e.to {
            continue;
        }
        if best[e.to] == NONE || e.cost < edges[best[e.to]].cost {
            best[e.to] = i;
        }
    }
    if (0..n).any(|v| v != root && best[v] == NONE) {
        return None;
    }

    let mut comp = vec![NONE; n];
    let mut mark = vec![NONE; n];
    let mut in_cycle = vec![false; n];
    let mut ncomp = 0;
    for v in 0..n {
        let mut u = v;
        while u != root && mark[u] == NONE {
            mark[u] = v;
            u = edges[best[u]].from;
        }
        if u != root && mark[u] == v {
            let mut w = u;
            loop {
                comp[w] = ncomp;
                in_cycle[w] = true;
                w = edges[best[w]].from;
                if w == u {
                    break;
                }
            }
            ncomp += 1;
        }
    }

    if ncomp == 0 {
        return Some((0..n).filter(|&v| v != root).map(|v| best[v]).collect());
    }
    for c in comp.iter_mut() {
        if *c == NONE {
            *c = ncomp;
            ncomp += 1;
        }
    }

    let mut sub = Vec::with_capacity(edges.len());
    let mut lifted = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let (cu, cv) = (comp[e.from], comp[e.to]);
        if cu == cv {
            continue;
        }
        let cost = if in_cycle[e.to] {
            e.cost.clone() - edges[best[e.to]].cost.clone()
        } else {
            e.cost.clone()
        };
        sub.push(CostEdge {
            from: cu,
            to: cv,
            cost,
        });
        lifted.push(i);
    }

    let chosen = edmonds(ncomp, comp[root], &sub)?;

    let mut entry = vec![NONE; ncomp];
    let mut result = Vec::with_capacity(n.saturating_sub(1));
    for s in chosen {
        let i = lifted[s];
        result.push(i);
        let t = edges[i].to;
        if in_cycle[t] {
            entry[comp[t]] = t;
        }
    }
    for v in 0..n {
        if in_cycle[v] && entry[comp[v]] != v {
            result.push(best[v]);
        }
    }
    Some(result)
}

fn bit_length(x: u128) -> u32 {
    128 - x.leading_zeros()
}

fn solve_perturbed<C: Cost>(
    n: usize,
    root: usize,
    candidates: &[(usize, usize)],
    cost_of: impl Fn(usize) -> C,
) -> Option<Vec<usize>> {
    let edges: Vec<CostEdge<C>> = candidates
        .iter()
        .enumerate()
        .map(|(rank, &(from, to))| CostEdge {
            from,
            to,
            cost: cost_of(rank),
        })
        .collect();
    edmonds(n, root, &edges)
}

/// Minimum-weight spanning arborescence rooted at `root` with the
/// lexicographic tie rule described in the module docs.
pub fn min_arborescence<W: Weight>(
    g: &WeightedDigraph<'_, W>,
    root: ProcessId,
) -> Result<Arborescence<W>, ArborescenceError> {
    let n = g.n();
    if root.0 >= n {
        return Err(ArborescenceError::InvalidRoot { root, n });
    }
    g.check_reachable(root)?;

    let mut candidates = Vec::new();
    for from in 0..n {
        for to in 0..n {
            if to != root.0 && g.present(from, to) {
                candidates.push((from, to));
            }
        }
    }
    let weight_of = |(a, b): (usize, usize)| g.weights.get(ProcessId(a), ProcessId(b));

    let e = candidates.len() as u32;
    let max_w = candidates
        .iter()
        .map(|&c| weight_of(c).to_u128().unwrap_or(u128::MAX))
        .max()
        .unwrap_or(0);
    let headroom = bit_length(n as u128) + 2;
    let chosen = if max_w < u128::MAX && e + bit_length(max_w + 1) + headroom <= 127 {
        solve_perturbed::<u128>(n, root.0, &candidates, |rank| {
            let w = weight_of(candidates[rank]).to_u128().expect("checked above");
            ((w + 1) << e) - (1u128 << (e - 1 - rank as u32))
        })
    } else {
        solve_perturbed::<BigUint>(n, root.0, &candidates, |rank| {
            let w = BigUint::from(weight_of(candidates[rank]).to_u128().unwrap_or(u128::MAX));
            ((w + BigUint::one()) << e) - (BigUint::one() << (e - 1 - rank as u32))
        })
    };
    // Reachability was checked, so every node has an in-edge at every level.
    let chosen = chosen.ok_or(ArborescenceError::Unreachable { root, node: root })?;

    let mut parent_of = vec![None; n];
    let mut weight = W::zero();
    for i in chosen {
        let (a, b) = candidates[i];
        parent_of[b] = Some(ProcessId(a));
        weight = weight.saturating_add(weight_of((a, b)));
    }
    Ok(Arborescence {
        root,
        parent_of,
        weight,
    })
}

/// Largest `n` accepted by [`brute_force_min_arborescence`].
pub const BRUTE_FORCE_MAX_N: usize = 6;

/// Exhaustive minimum arborescence: tries every parent map, keeps acyclic
/// ones, and returns the minimum by `(weight, sorted edge list)`.
pub fn brute_force_min_arborescence<W: Weight>(
    g: &WeightedDigraph<'_, W>,
    root: ProcessId,
) -> Result<Arborescence<W>, ArborescenceError> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(ArborescenceError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    if root.0 >= n {
        return Err(ArborescenceError::InvalidRoot { root, n });
    }
    let non_roots: Vec<usize> = (0..n).filter(|&v| v != root.0).collect();
    let choices: Vec<Vec<usize>> = non_roots
        .iter()
        .map(|&v| (0..n).filter(|&u| g.present(u, v)).collect())
        .collect();
    if let Some(k) = choices.iter().position(|c| c.is_empty()) {
        return Err(ArborescenceError::Unreachable {
            root,
            node: ProcessId(non_roots[k]),
        });
    }

    let mut best: Option<(u128, Vec<(usize, usize)>, Vec<Option<ProcessId>>)> = None;
    let mut odometer = vec![0usize; non_roots.len()];
    loop {
        let mut parent = vec![None; n];
        for (k, &v) in non_roots.iter().enumerate() {
            parent[v] = Some(choices[k][odometer[k]]);
        }
        let acyclic = non_roots.iter().all(|&v| {
            let mut u = v;
            for _ in 0..n {
                match parent[u] {
                    None => return u == root.0,
                    Some(p) => u = p,
                }
            }
            false
        });
        if acyclic {
            let mut edges: Vec<(usize, usize)> = non_roots
                .iter()
                .map(|&v| (parent[v].expect("non-root has parent"), v))
                .collect();
            edges.sort_unstable();
            let weight: u128 = edges
                .iter()
                .map(|&(a, b)| {
                    g.weights
                        .get(ProcessId(a), ProcessId(b))
                        .to_u128()
                        .unwrap_or(u128::MAX)
                })
                .sum();
            let better = match &best {
                None => true,
                Some((bw, be, _)) => match weight.cmp(bw) {
                    Ordering::Less => true,
                    Ordering::Equal => edges < *be,
                    Ordering::Greater => false,
                },
            };
            if better {
                let parents = parent.iter().map(|p| p.map(ProcessId)).collect();
                best = Some((weight, edges, parents));
            }
        }

        // advance the odometer
        let mut k = 0;
        loop {
            if k == odometer.len() {
                let (_, _, parent_of) = best.ok_or(ArborescenceError::Unreachable {
                    root,
                    node: root,
                })?;
                let mut a = Arborescence {
                    root,
                    parent_of,
                    weight: W::zero(),
                };
                a.weight = a.weight_under(g.weights);
                return Ok(a);
            }
            odometer[k] += 1;
            if odometer[k] < choices[k].len() {
                break;
            }
            odometer[k] = 0;
            k += 1;
        }
    }
}

/// True iff `a` spans every process, is acyclic, uses only present channels
/// and carries the weight recomputed from `g`.
pub fn validate_arborescence<W: Weight>(a: &Arborescence<W>, g: &WeightedDigraph<'_, W>) -> bool {
    let n = g.n();
    if a.n() != n || a.root.0 >= n || a.parent(a.root).is_some() {
        return false;
    }
    for v in 0..n {
        if v == a.root.0 {
            continue;
        }
        match a.parent_of[v] {
            None => return false,
            Some(p) if p.0 >= n || !g.present(p.0, v) => return false,
            Some(_) => {}
        }
        let mut u = v;
        let mut steps = 0;
        while u != a.root.0 {
            u = a.parent_of[u].map(|p| p.0).unwrap_or(a.root.0);
            steps += 1;
            if steps > n {
                return false;
            }
        }
    }
    a.weight_under(g.weights) == a.weight
}
