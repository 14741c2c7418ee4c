//! Exact minimisation of two-label pairwise energies
//! `E(l) = Σ D_i(l_i) + λ Σ w_ij [l_i ≠ l_j]` by s-t min-cut.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("non-finite cost at node {0}")]
    NonFiniteCost(usize),
    #[error("edge {0} has a negative or non-finite weight")]
    BadWeight(usize),
    #[error("edge {edge} references node {node} of {count}")]
    EdgeOutOfRange { edge: usize, node: usize, count: usize },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("smoothness scale must be finite and non-negative")]
    BadLambda,
    #[error("brute force supports at most {max} nodes, got {got}")]
    TooManyNodes { max: usize, got: usize },
}

/// Node costs are `[D(label0), D(label1)]`; edges are `(i, j, w)` with
/// `w ≥ 0`, charged `λ·w` when `i` and `j` disagree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryLabelingProblem {
    pub costs: Vec<[f64; 2]>,
    pub edges: Vec<(usize, usize, f64)>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Vec<bool>,
    pub energy: f64,
}

impl BinaryLabelingProblem {
    pub fn new(costs: Vec<[f64; 2]>, edges: Vec<(usize, usize, f64)>, lambda: f64) -> Self {
        Self { costs, edges, lambda }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(EnergyError::BadLambda);
        }
        for (i, c) in self.costs.iter().enumerate() {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(EnergyError::NonFiniteCost(i));
            }
        }
        let n = self.costs.len();
        for (e, &(i, j, w)) in self.edges.iter().enumerate() {
            for node in [i, j] {
                if node >= n {
                    return Err(EnergyError::EdgeOutOfRange { edge: e, node, count: n });
                }
            }
            if i == j {
                return Err(EnergyError::SelfLoop(e));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(EnergyError::BadWeight(e));
            }
        }
        Ok(())
    }

    /// Energy of a labeling (`true` = label 1).
    pub fn energy(&self, labels: &[bool]) -> f64 {
        let data: f64 = self.costs.iter().zip(labels).map(|(c, &l)| c[l as usize]).sum();
        let smooth: f64 = self.edges.iter().filter(|(i, j, _)| labels[*i] != labels[*j]).map(|(_, _, w)| w).sum();
        data + self.lambda * smooth
    }
}

/// Global minimum by min-cut. Among optimal labelings the one with the
/// largest label-0 set is returned.
pub fn solve_binary_labeling(problem: &BinaryLabelingProblem) -> Result<Labeling, EnergyError> {
    problem.validate()?;
    let n = problem.costs.len();
    let (s, t) = (n, n + 1);
    let mut g = FlowGraph::new(n + 2);
    for (i, c) in problem.costs.iter().enumerate() {
        let m = c[0].min(c[1]);
        let (c0, c1) = (c[0] - m, c[1] - m);
        // node on the source side takes label 0 and cuts i→t
        if c1 > 0.0 {
            g.add_edge(s, i, c1, 0.0);
        }
        if c0 > 0.0 {
            g.add_edge(i, t, c0, 0.0);
        }
    }
    for &(i, j, w) in &problem.edges {
        let cap = problem.lambda * w;
        if cap > 0.0 {
            g.add_edge(i, j, cap, cap);
        }
    }
    g.max_flow(s, t);
    let sink_side = g.reaches_sink(t);
    let labels: Vec<bool> = (0..n).map(|i| sink_side[i]).collect();
    let energy = problem.energy(&labels);
    Ok(Labeling { labels, energy })
}

pub const BRUTE_FORCE_MAX_NODES: usize = 20;

/// Exhaustive minimum; ties go to the lexicographically smallest label vector.
pub fn brute_force_labeling(problem: &BinaryLabelingProblem) -> Result<Labeling, EnergyError> {
    problem.validate()?;
    let n = problem.costs.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(EnergyError::TooManyNodes { max: BRUTE_FORCE_MAX_NODES, got: n });
    }
    let mut best: Option<Labeling> = None;
    let mut labels = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        // node 0 is the most significant position so masks run in lexicographic order
        for (i, l) in labels.iter_mut().enumerate() {
            *l = mask >> (n - 1 - i) & 1 == 1;
        }
        let e = problem.energy(&labels);
        if best.as_ref().is_none_or(|b| e < b.energy) {
            best = Some(Labeling { labels: labels.clone(), energy: e });
        }
    }
    Ok(best.expect("at least one labeling"))
}

struct FlowGraph {
    head: Vec<Option<usize>>,
    to: Vec<usize>,
    next: Vec<Option<usize>>,
    cap: Vec<f64>,
    eps: f64,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self { head: vec![None; n], to: Vec::new(), next: Vec::new(), cap: Vec::new(), eps: 0.0 }
    }

    fn push(&mut self, u: usize, v: usize, c: f64) {
        self.to.push(v);
        self.cap.push(c);
        self.next.push(self.head[u]);
        self.head[u] = Some(self.to.len() - 1);
    }

    /// Paired arcs `u→v` (capacity `c`) and `v→u` (capacity `rc`).
    fn add_edge(&mut self, u: usize, v: usize, c: f64, rc: f64) {
        self.push(u, v, c);
        self.push(v, u, rc);
        self.eps = self.eps.max(c.max(rc) * 1e-12);
    }

    fn open(&self, e: usize) -> bool {
        self.cap[e] > self.eps
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<usize>> {
        let mut level = vec![usize::MAX; self.head.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while let Some(id) = e {
                let v = self.to[id];
                if self.open(id) && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
                e = self.next[id];
            }
        }
        (level[t] != usize::MAX).then_some(level)
    }

    /// One blocking flow of Dinic's algorithm, iterative to keep deep level
    /// graphs off the call stack.
    fn blocking_flow(&mut self, s: usize, t: usize, level: &[usize]) -> f64 {
        let mut iter = self.head.clone();
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let pushed = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                }
                total += pushed;
                path.clear();
                u = s;
                continue;
            }
            while let Some(id) = iter[u] {
                if self.open(id) && level[self.to[id]] == level[u] + 1 {
                    break;
                }
                iter[u] = self.next[id];
            }
            match iter[u] {
                Some(id) => {
                    path.push(id);
                    u = self.to[id];
                }
                None => {
                    let Some(e) = path.pop() else { return total };
                    u = self.to[e ^ 1];
                    iter[u] = self.next[e];
                }
            }
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while let Some(level) = self.levels(s, t) {
            let f = self.blocking_flow(s, t, &level);
            if f <= 0.0 {
                break;
            }
            flow += f;
        }
        flow
    }

    /// Nodes that can still reach `t` through residual arcs.
    fn reaches_sink(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[t] = true;
        let mut q = VecDeque::from([t]);
        while let Some(v) = q.pop_front() {
            let mut e = self.head[v];
            while let Some(id) = e {
                // arc id: v→u; its partner id^1 is u→v
                let u = self.to[id];
                if !seen[u] && self.open(id ^ 1) {
                    seen[u] = true;
                    q.push_back(u);
                }
                e = self.next[id];
            }
        }
        seen
    }
}
