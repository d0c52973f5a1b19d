//! Min-cut for binary submodular pairwise energies.
//!
//! [`FlowGraph`] is an augmenting-path max-flow with two search trees that
//! survive between augmentations (source tree grown from `s`, sink tree grown
//! toward `t`, orphans re-adopted after each augmentation). Expansion graphs
//! here are small but are rebuilt and solved many times; the exact oracle
//! uses the same engine on dense pixel graphs.
//!
//! Cut convention: a node on the source side takes label 0, a node on the
//! sink side takes label 1. Among all minimum cuts the one with the largest
//! source side is reported, so ties go to label 0.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Stand-in for an infinite unary cost.
pub const INF: f64 = 1e30;

/// Relative slack on the submodularity check, absorbing round-off in terms
/// that were made submodular by arithmetic.
pub const SUBMODULAR_TOLERANCE: f64 = 1e-12;

#[inline]
pub fn is_inf(v: f64) -> bool {
    v >= INF
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    Free,
    Terminal,
    Orphan,
    Arc(u32),
}

#[derive(Debug, Clone)]
struct Node {
    first: u32,
    /// Arc where the last bridge search stopped.
    cursor: u32,
    /// Parent arc lost when the node was orphaned.
    lost_parent: u32,
    parent: Parent,
    in_sink_tree: bool,
    active: bool,
    timestamp: u64,
    dist: u32,
    /// Positive: residual capacity from the source. Negative: to the sink.
    tr_cap: f64,
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    head: u32,
    next: u32,
    r_cap: f64,
}

#[inline]
fn sister(a: u32) -> u32 {
    a ^ 1
}

/// Directed capacitated graph with implicit source and sink terminals.
#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    queue: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u64,
}

impl FlowGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self::with_capacity(num_nodes, 0)
    }

    pub fn with_capacity(num_nodes: usize, num_edges: usize) -> Self {
        assert!(num_nodes < NONE as usize, "too many nodes");
        let node = Node {
            first: NONE,
            cursor: NONE,
            lost_parent: NONE,
            parent: Parent::Free,
            in_sink_tree: false,
            active: false,
            timestamp: 0,
            dist: 0,
            tr_cap: 0.0,
        };
        Self {
            nodes: vec![node; num_nodes],
            arcs: Vec::with_capacity(2 * num_edges),
            ..Self::default()
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacities `source → i` and `i → sink`.
    pub fn add_tweights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        let node = &mut self.nodes[i];
        let delta = node.tr_cap;
        let (mut cs, mut ct) = (cap_source, cap_sink);
        if delta > 0.0 {
            cs += delta;
        } else {
            ct -= delta;
        }
        self.flow += cs.min(ct);
        node.tr_cap = cs - ct;
    }

    /// Adds arc `i → j` with capacity `cap` and `j → i` with `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j && cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len() as u32;
        assert!(a < NONE - 2, "too many arcs");
        self.arcs.push(Arc { head: j as u32, next: self.nodes[i].first, r_cap: cap });
        self.nodes[i].first = a;
        self.arcs.push(Arc { head: i as u32, next: self.nodes[j].first, r_cap: rev_cap });
        self.nodes[j].first = a + 1;
    }

    fn out_arcs(&self, i: u32) -> impl Iterator<Item = u32> + '_ {
        let mut a = self.nodes[i as usize].first;
        std::iter::from_fn(move || {
            if a == NONE {
                None
            } else {
                let cur = a;
                a = self.arcs[a as usize].next;
                Some(cur)
            }
        })
    }

    fn set_active(&mut self, i: u32) {
        let node = &mut self.nodes[i as usize];
        if !node.active {
            node.active = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<u32> {
        while let Some(i) = self.queue.pop_front() {
            let node = &mut self.nodes[i as usize];
            node.active = false;
            if node.parent != Parent::Free {
                return Some(i);
            }
        }
        None
    }

    /// Runs max-flow to completion and returns the flow value (including the
    /// constant folded in by [`add_tweights`](Self::add_tweights)).
    pub fn maxflow(&mut self) -> f64 {
        for i in 0..self.nodes.len() as u32 {
            let node = &mut self.nodes[i as usize];
            node.timestamp = 0;
            node.dist = 1;
            node.cursor = NONE;
            if node.tr_cap > 0.0 {
                node.in_sink_tree = false;
                node.parent = Parent::Terminal;
                self.set_active(i);
            } else if node.tr_cap < 0.0 {
                node.in_sink_tree = true;
                node.parent = Parent::Terminal;
                self.set_active(i);
            } else {
                node.parent = Parent::Free;
            }
        }

        let mut current: Option<u32> = None;
        loop {
            let i = match current.take() {
                Some(c) => {
                    let node = &mut self.nodes[c as usize];
                    node.active = false;
                    if node.parent == Parent::Free {
                        self.next_active()
                    } else {
                        Some(c)
                    }
                }
                None => self.next_active(),
            };
            let Some(i) = i else { break };

            let bridge = self.grow(i);
            self.time += 1;
            if let Some(a) = bridge {
                self.nodes[i as usize].active = true;
                current = Some(i);
                self.augment(a);
                while let Some(o) = self.orphans.pop_front() {
                    if self.nodes[o as usize].in_sink_tree {
                        self.adopt_sink_orphan(o);
                    } else {
                        self.adopt_source_orphan(o);
                    }
                }
            }
        }
        self.flow
    }

    /// Grows the tree of `i` by one layer; returns an arc from the source
    /// tree to the sink tree if the trees touch.
    fn grow(&mut self, i: u32) -> Option<u32> {
        let (i_sink, i_ts, i_dist) = {
            let n = &self.nodes[i as usize];
            (n.in_sink_tree, n.timestamp, n.dist)
        };
        // Resume after the last bridge, wrapping around once so every arc
        // is still examined before giving up.
        let first = self.nodes[i as usize].first;
        let start = match self.nodes[i as usize].cursor {
            NONE => first,
            c => c,
        };
        let mut a = start;
        let mut wrapped = start == first;
        loop {
            if a == NONE {
                if wrapped {
                    break;
                }
                wrapped = true;
                a = first;
            }
            if wrapped && a == start && start != first {
                break;
            }
            let arc = self.arcs[a as usize];
            let j = arc.head;
            let cap = if i_sink { self.arcs[sister(a) as usize].r_cap } else { arc.r_cap };
            if cap > 0.0 {
                let jn = &self.nodes[j as usize];
                if jn.parent == Parent::Free {
                    let jn = &mut self.nodes[j as usize];
                    jn.in_sink_tree = i_sink;
                    jn.parent = Parent::Arc(sister(a));
                    jn.timestamp = i_ts;
                    jn.dist = i_dist + 1;
                    self.set_active(j);
                } else if jn.in_sink_tree != i_sink {
                    self.nodes[i as usize].cursor = a;
                    return Some(if i_sink { sister(a) } else { a });
                } else if jn.timestamp <= i_ts && jn.dist > i_dist {
                    let jn = &mut self.nodes[j as usize];
                    jn.parent = Parent::Arc(sister(a));
                    jn.timestamp = i_ts;
                    jn.dist = i_dist + 1;
                }
            }
            a = arc.next;
        }
        self.nodes[i as usize].cursor = NONE;
        None
    }

    fn make_orphan(&mut self, i: u32) {
        let node = &mut self.nodes[i as usize];
        node.lost_parent = match node.parent {
            Parent::Arc(a) => a,
            _ => NONE,
        };
        node.parent = Parent::Orphan;
        self.orphans.push_back(i);
    }

    /// Pushes the bottleneck along source → `middle` → sink.
    fn augment(&mut self, middle: u32) {
        let tail = self.arcs[sister(middle) as usize].head;
        let head = self.arcs[middle as usize].head;

        let mut bottleneck = self.arcs[middle as usize].r_cap;
        let mut i = tail;
        while let Parent::Arc(a) = self.nodes[i as usize].parent {
            bottleneck = bottleneck.min(self.arcs[sister(a) as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(self.nodes[i as usize].tr_cap);
        let mut i = head;
        while let Parent::Arc(a) = self.nodes[i as usize].parent {
            bottleneck = bottleneck.min(self.arcs[a as usize].r_cap);
            i = self.arcs[a as usize].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i as usize].tr_cap);

        self.arcs[sister(middle) as usize].r_cap += bottleneck;
        self.arcs[middle as usize].r_cap -= bottleneck;

        let mut i = tail;
        loop {
            match self.nodes[i as usize].parent {
                Parent::Arc(a) => {
                    self.arcs[a as usize].r_cap += bottleneck;
                    let s = sister(a) as usize;
                    self.arcs[s].r_cap -= bottleneck;
                    if self.arcs[s].r_cap <= 0.0 {
                        self.arcs[s].r_cap = 0.0;
                        self.make_orphan(i);
                    }
                    i = self.arcs[a as usize].head;
                }
                _ => {
                    let n = &mut self.nodes[i as usize];
                    n.tr_cap -= bottleneck;
                    if n.tr_cap <= 0.0 {
                        n.tr_cap = 0.0;
                        self.make_orphan(i);
                    }
                    break;
                }
            }
        }
        let mut i = head;
        loop {
            match self.nodes[i as usize].parent {
                Parent::Arc(a) => {
                    self.arcs[sister(a) as usize].r_cap += bottleneck;
                    let ar = &mut self.arcs[a as usize];
                    ar.r_cap -= bottleneck;
                    let next = ar.head;
                    if ar.r_cap <= 0.0 {
                        ar.r_cap = 0.0;
                        self.make_orphan(i);
                    }
                    i = next;
                }
                _ => {
                    let n = &mut self.nodes[i as usize];
                    n.tr_cap += bottleneck;
                    if n.tr_cap >= 0.0 {
                        n.tr_cap = 0.0;
                        self.make_orphan(i);
                    }
                    break;
                }
            }
        }
        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal through valid parents, or `None`
    /// when the chain ends in an orphan. Marks the chain with the current
    /// timestamp.
    fn origin_distance(&mut self, start: u32) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            let n = &self.nodes[j as usize];
            if n.timestamp == self.time {
                d += n.dist;
                break;
            }
            d += 1;
            match n.parent {
                Parent::Terminal => {
                    let n = &mut self.nodes[j as usize];
                    n.timestamp = self.time;
                    n.dist = 1;
                    break;
                }
                Parent::Orphan | Parent::Free => return None,
                Parent::Arc(a) => j = self.arcs[a as usize].head,
            }
        }
        // Mark the chain.
        let mut j = start;
        let mut dd = d;
        while self.nodes[j as usize].timestamp != self.time {
            let n = &mut self.nodes[j as usize];
            n.timestamp = self.time;
            n.dist = dd;
            dd -= 1;
            match n.parent {
                Parent::Arc(a) => j = self.arcs[a as usize].head,
                _ => break,
            }
        }
        Some(d)
    }

    fn adopt_source_orphan(&mut self, i: u32) {
        self.adopt(i, false);
    }

    fn adopt_sink_orphan(&mut self, i: u32) {
        self.adopt(i, true);
    }

    fn adopt(&mut self, i: u32, sink: bool) {
        // Any parent whose chain still reaches the terminal will do. The
        // scan starts at the lost parent arc and wraps around once.
        let first = self.nodes[i as usize].first;
        let start = match self.nodes[i as usize].lost_parent {
            NONE => first,
            a => a,
        };
        let mut a0 = start;
        let mut wrapped = start == first;
        loop {
            if a0 == NONE {
                if wrapped {
                    break;
                }
                wrapped = true;
                a0 = first;
            }
            if wrapped && a0 == start && start != first {
                break;
            }
            let arc = self.arcs[a0 as usize];
            let cap = if sink { arc.r_cap } else { self.arcs[sister(a0) as usize].r_cap };
            let jn = &self.nodes[arc.head as usize];
            if cap > 0.0 && jn.in_sink_tree == sink && jn.parent != Parent::Free {
                if let Some(d) = self.origin_distance(arc.head) {
                    let n = &mut self.nodes[i as usize];
                    n.parent = Parent::Arc(a0);
                    n.timestamp = self.time;
                    n.dist = d + 1;
                    return;
                }
            }
            a0 = arc.next;
        }

        // No valid parent: `i` becomes free, its children become orphans.
        let mut a0 = self.nodes[i as usize].first;
        while a0 != NONE {
            let a = a0;
            a0 = self.arcs[a as usize].next;
            let j = self.arcs[a as usize].head;
            let jn = &self.nodes[j as usize];
            if jn.in_sink_tree != sink || jn.parent == Parent::Free {
                continue;
            }
            let jparent = jn.parent;
            let cap = if sink { self.arcs[a as usize].r_cap } else { self.arcs[sister(a) as usize].r_cap };
            if cap > 0.0 {
                self.set_active(j);
            }
            if let Parent::Arc(pa) = jparent {
                if self.arcs[pa as usize].head == i {
                    self.make_orphan(j);
                }
            }
        }
        self.nodes[i as usize].parent = Parent::Free;
    }

    /// After [`maxflow`](Self::maxflow): `true` for nodes that can still
    /// reach the sink in the residual graph (sink side of the cut with the
    /// largest source side).
    pub fn sink_side(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let mut reach = vec![false; n];
        let mut stack: Vec<u32> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tr_cap < 0.0 {
                reach[i] = true;
                stack.push(i as u32);
            }
        }
        while let Some(v) = stack.pop() {
            for a in self.out_arcs(v) {
                let u = self.arcs[a as usize].head;
                // residual arc u → v
                if !reach[u as usize] && self.arcs[sister(a) as usize].r_cap > 0.0 {
                    reach[u as usize] = true;
                    stack.push(u);
                }
            }
        }
        reach
    }
}

/// One pairwise term `θ[x_i][x_j]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseTerm {
    pub i: usize,
    pub j: usize,
    pub theta: [[f64; 2]; 2],
}

impl PairwiseTerm {
    /// `θ00 + θ11 − θ01 − θ10`; positive means not submodular.
    pub fn violation(&self) -> f64 {
        let t = &self.theta;
        t[0][0] + t[1][1] - t[0][1] - t[1][0]
    }
}

/// Energy `Σ_i u_i(x_i) + Σ θ_ij(x_i, x_j)` over binary variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryPairwiseProblem {
    unaries: Vec<[f64; 2]>,
    pairwise: Vec<PairwiseTerm>,
}

impl BinaryPairwiseProblem {
    pub fn new(num_vars: usize) -> Self {
        Self { unaries: vec![[0.0; 2]; num_vars], pairwise: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.unaries.len()
    }

    pub fn unaries(&self) -> &[[f64; 2]] {
        &self.unaries
    }

    pub fn pairwise(&self) -> &[PairwiseTerm] {
        &self.pairwise
    }

    /// Sets `(cost0, cost1)` of variable `i`; either may be [`INF`].
    pub fn set_unary(&mut self, i: usize, cost0: f64, cost1: f64) {
        self.unaries[i] = [cost0, cost1];
    }

    /// Adds a term for `i < j`.
    pub fn add_pairwise(&mut self, i: usize, j: usize, theta: [[f64; 2]; 2]) -> Result<()> {
        if i >= j || j >= self.num_vars() {
            return Err(Error::Input(format!("pairwise term needs i < j < n, got ({i}, {j})")));
        }
        self.pairwise.push(PairwiseTerm { i, j, theta });
        Ok(())
    }

    /// Adds `w·[x_i ≠ x_j]`.
    pub fn add_potts(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        self.add_pairwise(i, j, [[0.0, w], [w, 0.0]])
    }

    /// Energy of an assignment, infinite costs included as [`INF`].
    pub fn energy(&self, x: &[bool]) -> f64 {
        let mut e = 0.0;
        for (u, &xi) in self.unaries.iter().zip(x) {
            e += u[xi as usize];
        }
        for t in &self.pairwise {
            e += t.theta[x[t.i] as usize][x[t.j] as usize];
        }
        e
    }
}

/// Exact minimizer of a submodular [`BinaryPairwiseProblem`], returned with
/// its energy re-evaluated from the problem terms.
pub fn min_cut(problem: &BinaryPairwiseProblem) -> Result<(Vec<bool>, f64)> {
    let n = problem.num_vars();
    let mut u0: Vec<f64> = Vec::with_capacity(n);
    let mut u1: Vec<f64> = Vec::with_capacity(n);
    for (i, u) in problem.unaries.iter().enumerate() {
        if u.iter().any(|v| v.is_nan()) {
            return Err(Error::Input(format!("NaN unary on variable {i}")));
        }
        if is_inf(u[0]) && is_inf(u[1]) {
            return Err(Error::Infeasible(i));
        }
        u0.push(u[0]);
        u1.push(u[1]);
    }
    let mut graph = FlowGraph::with_capacity(n, problem.pairwise.len());
    for t in &problem.pairwise {
        if t.i >= t.j || t.j >= n {
            return Err(Error::Input(format!("bad pairwise indices ({}, {})", t.i, t.j)));
        }
        let v = t.violation();
        let scale: f64 = t.theta.iter().flatten().map(|x| x.abs()).sum();
        if v > SUBMODULAR_TOLERANCE * scale {
            return Err(Error::NonSubmodular { i: t.i, j: t.j, violation: v });
        }
        let [[a, b], [c, d]] = t.theta;
        // θ = A + (C−A)·x_i + (D−C)·x_j + (B+C−A−D)·(1−x_i)·x_j
        add_finite(&mut u1[t.i], c - a);
        add_finite(&mut u1[t.j], d - c);
        let cap = b + c - a - d;
        if cap > 0.0 {
            graph.add_edge(t.i, t.j, cap, 0.0);
        }
    }
    for i in 0..n {
        let (a, b) = (u0[i], u1[i]);
        if is_inf(a) {
            graph.add_tweights(i, 0.0, INF);
        } else if is_inf(b) {
            graph.add_tweights(i, INF, 0.0);
        } else if b > a {
            graph.add_tweights(i, b - a, 0.0);
        } else {
            graph.add_tweights(i, 0.0, a - b);
        }
    }
    graph.maxflow();
    let x = graph.sink_side();
    let e = problem.energy(&x);
    Ok((x, e))
}

#[inline]
fn add_finite(target: &mut f64, delta: f64) {
    if !is_inf(*target) {
        *target += delta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(problem: &BinaryPairwiseProblem) -> f64 {
        let n = problem.num_vars();
        (0u32..1 << n)
            .map(|bits| {
                let x: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                problem.energy(&x)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unary_only_is_per_variable_argmin() {
        let mut p = BinaryPairwiseProblem::new(3);
        p.set_unary(0, 1.0, 2.0);
        p.set_unary(1, 5.0, -1.0);
        p.set_unary(2, 3.0, 3.0);
        let (x, e) = min_cut(&p).unwrap();
        assert_eq!(x, vec![false, true, false]);
        assert_eq!(e, 3.0);
    }

    #[test]
    fn strong_potts_forces_agreement() {
        let mut p = BinaryPairwiseProblem::new(2);
        p.set_unary(0, 0.0, 5.0);
        p.set_unary(1, 5.0, 0.0);
        p.add_potts(0, 1, 100.0).unwrap();
        let (x, e) = min_cut(&p).unwrap();
        assert_eq!(e, 5.0);
        assert_eq!(x[0], x[1]);
        // both constant labelings cost 5; ties go to label 0
        assert_eq!(x, vec![false, false]);
    }

    #[test]
    fn rejects_non_submodular_and_infeasible() {
        let mut p = BinaryPairwiseProblem::new(2);
        p.add_pairwise(0, 1, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(min_cut(&p), Err(Error::NonSubmodular { .. })));

        let mut q = BinaryPairwiseProblem::new(1);
        q.set_unary(0, INF, INF);
        assert_eq!(min_cut(&q), Err(Error::Infeasible(0)));
    }

    #[test]
    fn infinite_unary_is_respected() {
        let mut p = BinaryPairwiseProblem::new(2);
        p.set_unary(0, 0.0, INF);
        p.set_unary(1, 10.0, 0.0);
        p.add_potts(0, 1, 3.0).unwrap();
        let (x, e) = min_cut(&p).unwrap();
        assert_eq!(x, vec![false, true]);
        assert_eq!(e, 3.0);
    }

    #[test]
    fn general_submodular_terms_match_enumeration() {
        let mut p = BinaryPairwiseProblem::new(4);
        p.set_unary(0, 2.0, -1.0);
        p.set_unary(1, -3.0, 0.5);
        p.set_unary(2, 0.0, 0.0);
        p.set_unary(3, 1.0, 4.0);
        p.add_pairwise(0, 1, [[1.0, 3.0], [2.0, -1.0]]).unwrap();
        p.add_pairwise(1, 2, [[0.0, 2.5], [4.0, 0.5]]).unwrap();
        p.add_pairwise(0, 3, [[-2.0, 1.0], [1.0, -1.0]]).unwrap();
        p.add_pairwise(2, 3, [[0.0, 6.0], [6.0, 0.0]]).unwrap();
        let (_, e) = min_cut(&p).unwrap();
        assert!((e - brute(&p)).abs() < 1e-12);
    }

    #[test]
    fn flow_value_equals_cut() {
        let mut g = FlowGraph::new(2);
        g.add_tweights(0, 10.0, 0.0);
        g.add_tweights(1, 0.0, 15.0);
        g.add_edge(0, 1, 20.0, 0.0);
        assert_eq!(g.maxflow(), 10.0);
        // cutting source → 0 is the only minimum cut
        assert_eq!(g.sink_side(), vec![true, true]);
    }
}
