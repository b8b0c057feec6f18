//! Directed communication topology: which ordered pairs have a channel.

use serde::{Deserialize, Serialize};

use crate::types::ProcessId;

/// Channel presence over `n` processes. Self-loops are never present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    n: usize,
    present: Vec<bool>,
}

impl Topology {
    /// Fully connected network.
    pub fn complete(n: usize) -> Self {
        let mut present = vec![true; n * n];
        for i in 0..n {
            present[i * n + i] = false;
        }
        Topology { n, present }
    }

    /// Network with exactly the listed directed channels. Self-loops and
    /// out-of-range endpoints are ignored.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut present = vec![false; n * n];
        for (a, b) in edges {
            if a != b && a < n && b < n {
                present[a * n + b] = true;
            }
        }
        Topology { n, present }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, from: ProcessId, to: ProcessId) -> bool {
        self.present[from.0 * self.n + to.0]
    }

    pub fn is_complete(&self) -> bool {
        (0..self.n).all(|a| (0..self.n).all(|b| a == b || self.present[a * self.n + b]))
    }

    pub fn out_neighbors(&self, p: ProcessId) -> impl Iterator<Item = ProcessId> + '_ {
        let row = p.0 * self.n;
        (0..self.n)
            .filter(move |&b| self.present[row + b])
            .map(ProcessId)
    }

    pub fn edge_count(&self) -> usize {
        self.present.iter().filter(|&&b| b).count()
    }

    /// Processes reachable from `root` over present channels (root included).
    pub fn reachable_from(&self, root: ProcessId) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![root.0];
        seen[root.0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..self.n {
                if self.present[u * self.n + v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        if !self.reachable_from(ProcessId(0)).iter().all(|&b| b) {
            return false;
        }
        let reversed = Topology::from_edges(
            self.n,
            (0..self.n)
                .flat_map(|a| (0..self.n).map(move |b| (a, b)))
                .filter(|&(a, b)| self.present[a * self.n + b])
                .map(|(a, b)| (b, a)),
        );
        reversed.reachable_from(ProcessId(0)).iter().all(|&b| b)
    }
}
