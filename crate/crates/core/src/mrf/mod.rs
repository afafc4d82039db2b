//! Discrete pairwise MRF with Potts smoothness.
//!
//! Energy of a labeling `l`:
//!
//! ```text
//! E(l) = sum_i unary(i, l_i) + lambda * #{(i, j) in edges : l_i != l_j}
//! ```
//!
//! Every node carries its own candidate list. [`solve`] starts from the
//! per-node argmin and runs alpha-expansion moves (each a min-cut) in ascending
//! label order until a full sweep brings no improvement.

mod flow;

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{FormatError, MrfError};
use flow::FlowGraph;

/// Largest problem [`solve_exhaustive`] accepts.
pub const EXHAUSTIVE_MAX_NODES: usize = 12;

/// Default cap on full expansion sweeps.
pub const DEFAULT_MAX_SWEEPS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct MrfProblem {
    /// Per node: candidate labels sorted ascending, paired with their unary cost.
    nodes: Vec<Vec<(u32, f64)>>,
    edges: Vec<(u32, u32)>,
    lambda: f64,
}

impl MrfProblem {
    pub fn new(lambda: f64) -> Result<Self, MrfError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(MrfError::InvalidWeight(lambda));
        }
        Ok(Self { nodes: Vec::new(), edges: Vec::new(), lambda })
    }

    pub fn from_parts(nodes: Vec<Vec<(u32, f64)>>, edges: Vec<(u32, u32)>, lambda: f64) -> Result<Self, MrfError> {
        let mut p = Self::new(lambda)?;
        for n in nodes {
            p.add_node(n)?;
        }
        for (i, j) in edges {
            p.add_edge(i as usize, j as usize)?;
        }
        Ok(p)
    }

    /// Adds a node with `(label, unary cost)` candidates and returns its index.
    /// An empty candidate list is accepted here and reported by [`solve`].
    pub fn add_node(&mut self, mut candidates: Vec<(u32, f64)>) -> Result<usize, MrfError> {
        let node = self.nodes.len();
        if let Some(&(label, cost)) = candidates.iter().find(|c| !c.1.is_finite()) {
            return Err(MrfError::InvalidNode { node, msg: format!("non-finite cost {cost} for label {label}") });
        }
        candidates.sort_by_key(|c| c.0);
        if let Some(w) = candidates.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MrfError::InvalidNode { node, msg: format!("duplicate label {}", w[0].0) });
        }
        self.nodes.push(candidates);
        Ok(node)
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<(), MrfError> {
        let edge = self.edges.len();
        for &n in &[i, j] {
            if n >= self.nodes.len() {
                return Err(MrfError::InvalidEdge { edge, node: n });
            }
        }
        if i == j {
            return Err(MrfError::InvalidEdge { edge, node: i });
        }
        self.edges.push((i as u32, j as u32));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn candidates(&self, node: usize) -> &[(u32, f64)] {
        &self.nodes[node]
    }

    pub fn unary(&self, node: usize, label: u32) -> Option<f64> {
        let c = &self.nodes[node];
        c.binary_search_by_key(&label, |x| x.0).ok().map(|k| c[k].1)
    }

    /// Sorted union of all candidate labels.
    pub fn labels(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self.nodes.iter().flatten().map(|c| c.0).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Energy of `labels`; fails if a label is not among its node's candidates.
    pub fn energy(&self, labels: &[u32]) -> Result<f64, MrfError> {
        if labels.len() != self.nodes.len() {
            return Err(MrfError::InvalidNode {
                node: labels.len().min(self.nodes.len()),
                msg: format!("labeling has {} entries for {} nodes", labels.len(), self.nodes.len()),
            });
        }
        let mut e = 0.0;
        for (node, &l) in labels.iter().enumerate() {
            e += self
                .unary(node, l)
                .ok_or_else(|| MrfError::InvalidNode { node, msg: format!("label {l} is not a candidate") })?;
        }
        let cut = self.edges.iter().filter(|&&(i, j)| labels[i as usize] != labels[j as usize]).count();
        Ok(e + self.lambda * cut as f64)
    }

    fn check_candidates(&self) -> Result<(), MrfError> {
        match self.nodes.iter().position(|c| c.is_empty()) {
            Some(n) => Err(MrfError::NoCandidates(n)),
            None => Ok(()),
        }
    }

    /// Per-node argmin of the unaries; ties go to the lowest label.
    pub fn greedy(&self) -> Result<Vec<u32>, MrfError> {
        self.check_candidates()?;
        Ok(self
            .nodes
            .iter()
            .map(|c| c.iter().fold(c[0], |best, &x| if x.1 < best.1 { x } else { best }).0)
            .collect())
    }

    /// Writes the problem in the text dump format:
    ///
    /// ```text
    /// mrf <nodes> <edges> <lambda>
    /// node <index> <label> <cost> <label> <cost> ...
    /// edge <i> <j>
    /// ```
    ///
    /// Costs use the shortest representation that round-trips exactly.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mrf {} {} {:?}", self.nodes.len(), self.edges.len(), self.lambda)?;
        let mut line = String::new();
        for (k, c) in self.nodes.iter().enumerate() {
            line.clear();
            write!(line, "node {k}").unwrap();
            for &(l, cost) in c {
                write!(line, " {l} {cost:?}").unwrap();
            }
            writeln!(w, "{line}")?;
        }
        for &(i, j) in &self.edges {
            writeln!(w, "edge {i} {j}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, FormatError> {
        let parse_err = |line: usize, msg: &str| FormatError::Parse { line, msg: msg.to_string() };
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| FormatError::BadHeader("empty input".into()))?;
        let header = header?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "mrf" {
            return Err(FormatError::BadHeader(header));
        }
        let n: usize = h[1].parse().map_err(|_| parse_err(1, "node count"))?;
        let m: usize = h[2].parse().map_err(|_| parse_err(1, "edge count"))?;
        let lambda: f64 = h[3].parse().map_err(|_| parse_err(1, "lambda"))?;
        let mut p = Self::new(lambda).map_err(|e| parse_err(1, &e.to_string()))?;
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.first() {
                None => continue,
                Some(&"node") => {
                    let k: usize = tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(lineno, "node index"))?;
                    if k != p.nodes.len() || tok.len() % 2 != 0 {
                        return Err(parse_err(lineno, "malformed node line"));
                    }
                    let mut cands = Vec::new();
                    for pair in tok[2..].chunks(2) {
                        let l: u32 = pair[0].parse().map_err(|_| parse_err(lineno, "label"))?;
                        let c: f64 = pair[1].parse().map_err(|_| parse_err(lineno, "cost"))?;
                        cands.push((l, c));
                    }
                    p.add_node(cands).map_err(|e| parse_err(lineno, &e.to_string()))?;
                }
                Some(&"edge") => {
                    if tok.len() != 3 {
                        return Err(parse_err(lineno, "malformed edge line"));
                    }
                    let i: usize = tok[1].parse().map_err(|_| parse_err(lineno, "edge endpoint"))?;
                    let j: usize = tok[2].parse().map_err(|_| parse_err(lineno, "edge endpoint"))?;
                    p.add_edge(i, j).map_err(|e| parse_err(lineno, &e.to_string()))?;
                }
                Some(other) => return Err(parse_err(lineno, &format!("unknown record {other}"))),
            }
        }
        if p.nodes.len() != n || p.edges.len() != m {
            return Err(FormatError::BadHeader(format!(
                "header declares {n} nodes / {m} edges, body has {} / {}",
                p.nodes.len(),
                p.edges.len()
            )));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    AlphaExpansion,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub max_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: SolverMethod::AlphaExpansion, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub labels: Vec<u32>,
    /// Exact energy of `labels`.
    pub energy: f64,
    /// Energy of the greedy initialization.
    pub initial_energy: f64,
    /// Energy after each completed sweep.
    pub sweep_energies: Vec<f64>,
}

pub fn solve(problem: &MrfProblem, cfg: &SolverConfig) -> Result<Solution, MrfError> {
    match cfg.method {
        SolverMethod::Exhaustive => solve_exhaustive(problem),
        SolverMethod::AlphaExpansion => solve_expansion(problem, cfg.max_sweeps),
    }
}

fn solve_expansion(problem: &MrfProblem, max_sweeps: usize) -> Result<Solution, MrfError> {
    let mut labels = problem.greedy()?;
    let initial_energy = problem.energy(&labels)?;
    let mut energy = initial_energy;
    let mut sweep_energies = Vec::new();
    if problem.lambda == 0.0 || problem.edges.is_empty() {
        return Ok(Solution { labels, energy, initial_energy, sweep_energies });
    }

    let neighbours = adjacency_lists(problem);
    let alphabet = problem.labels();
    for _ in 0..max_sweeps {
        let before = energy;
        for &alpha in &alphabet {
            if let Some(candidate) = expansion_move(problem, &neighbours, &labels, alpha) {
                let e = problem.energy(&candidate)?;
                if e < energy {
                    labels = candidate;
                    energy = e;
                }
            }
        }
        assert!(energy <= before, "expansion sweep increased the energy");
        sweep_energies.push(energy);
        if energy >= before {
            break;
        }
    }
    Ok(Solution { labels, energy, initial_energy, sweep_energies })
}

fn adjacency_lists(problem: &MrfProblem) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); problem.nodes.len()];
    for &(i, j) in &problem.edges {
        adj[i as usize].push(j);
        adj[j as usize].push(i);
    }
    adj
}

/// Best alpha-expansion of `labels`, or `None` when no node can take `alpha`.
fn expansion_move(problem: &MrfProblem, neighbours: &[Vec<u32>], labels: &[u32], alpha: u32) -> Option<Vec<u32>> {
    const FREE: u32 = u32::MAX;
    let lambda = problem.lambda;
    let mut var = vec![FREE; labels.len()];
    let mut vars: Vec<usize> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != alpha && problem.unary(i, alpha).is_some() {
            var[i] = vars.len() as u32;
            vars.push(i);
        }
    }
    if vars.is_empty() {
        return None;
    }

    // Binary variable per node: x = 0 keeps the current label (source side),
    // x = 1 switches to alpha (sink side). cost0/cost1 hold the unary part
    // including pairwise terms with fixed neighbours.
    let n = vars.len();
    let (s, t) = (n, n + 1);
    let mut cost0 = vec![0.0; n];
    let mut cost1 = vec![0.0; n];
    let mut g = FlowGraph::new(n + 2);
    for (k, &i) in vars.iter().enumerate() {
        cost0[k] += problem.unary(i, labels[i]).unwrap();
        cost1[k] += problem.unary(i, alpha).unwrap();
        for &j in &neighbours[i] {
            let j = j as usize;
            if var[j] == FREE {
                let b = labels[j];
                if labels[i] != b {
                    cost0[k] += lambda;
                }
                if alpha != b {
                    cost1[k] += lambda;
                }
            }
        }
    }
    for &(i, j) in &problem.edges {
        let (i, j) = (i as usize, j as usize);
        if var[i] == FREE || var[j] == FREE {
            continue;
        }
        let (ki, kj) = (var[i] as usize, var[j] as usize);
        let a = if labels[i] != labels[j] { lambda } else { 0.0 };
        let b = lambda; // (keep i, switch j): labels[i] != alpha
        let c = lambda; // (switch i, keep j)
        // E = a + (c - a) x_i + (0 - c) x_j + (b + c - a) (1 - x_i) x_j
        let dc = c - a;
        cost1[ki] += dc.max(0.0);
        cost0[ki] += (-dc).max(0.0);
        cost0[kj] += c;
        g.add_edge(ki, kj, b + c - a, 0.0);
    }
    for k in 0..n {
        let m = cost0[k].min(cost1[k]);
        // cut s->k when k ends on the sink side (switch), k->t when it keeps
        g.add_edge(s, k, cost1[k] - m, 0.0);
        g.add_edge(k, t, cost0[k] - m, 0.0);
    }
    let (_, source_side) = g.min_cut(s, t);
    let mut out = labels.to_vec();
    for (k, &i) in vars.iter().enumerate() {
        if !source_side[k] {
            out[i] = alpha;
        }
    }
    Some(out)
}

/// Exact minimizer by enumeration in lexicographic order; the first labeling
/// reaching the minimum wins, so ties resolve toward lower labels on earlier
/// nodes.
pub fn solve_exhaustive(problem: &MrfProblem) -> Result<Solution, MrfError> {
    let n = problem.nodes.len();
    if n > EXHAUSTIVE_MAX_NODES {
        return Err(MrfError::TooLargeForExhaustive { nodes: n, max: EXHAUSTIVE_MAX_NODES });
    }
    problem.check_candidates()?;
    let initial_energy = problem.energy(&problem.greedy()?)?;
    let mut idx = vec![0usize; n];
    let mut current: Vec<u32> = problem.nodes.iter().map(|c| c[0].0).collect();
    let mut best = current.clone();
    let mut best_e = problem.energy(&current)?;
    loop {
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(Solution { labels: best, energy: best_e, initial_energy, sweep_energies: Vec::new() });
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < problem.nodes[k].len() {
                current[k] = problem.nodes[k][idx[k]].0;
                break;
            }
            idx[k] = 0;
            current[k] = problem.nodes[k][0].0;
        }
        let e = problem.energy(&current)?;
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&current);
        }
    }
}

#[cfg(test)]
mod tests;
