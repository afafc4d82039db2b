//! Dinic max-flow on `f64` capacities with an iterative blocking-flow search,
//! so long augmenting paths on mesh-sized graphs cannot overflow the stack.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    head: Vec<usize>,
    to: Vec<u32>,
    cap: Vec<f64>,
    next: Vec<usize>,
}

impl FlowGraph {
    pub(crate) fn new(nodes: usize) -> Self {
        Self { head: vec![NONE; nodes], to: Vec::new(), cap: Vec::new(), next: Vec::new() }
    }

    fn push_arc(&mut self, u: usize, v: usize, c: f64) {
        self.to.push(v as u32);
        self.cap.push(c);
        self.next.push(self.head[u]);
        self.head[u] = self.to.len() - 1;
    }

    /// Adds `u -> v` with capacity `c_uv` and the reverse arc with `c_vu`.
    pub(crate) fn add_edge(&mut self, u: usize, v: usize, c_uv: f64, c_vu: f64) {
        debug_assert!(c_uv >= 0.0 && c_vu >= 0.0);
        self.push_arc(u, v, c_uv);
        self.push_arc(v, u, c_vu);
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<i32> {
        let mut level = vec![-1; self.head.len()];
        let mut queue = VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NONE {
                let v = self.to[e] as usize;
                if self.cap[e] > eps && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
        level
    }

    /// Runs max-flow and returns the flow value and the source side of a
    /// minimum cut.
    pub(crate) fn min_cut(&mut self, s: usize, t: usize) -> (f64, Vec<bool>) {
        let scale = self.cap.iter().copied().filter(|c| c.is_finite()).fold(1.0f64, f64::max);
        let eps = scale * 1e-13;
        let mut total = 0.0;
        loop {
            let mut level = self.levels(s, eps);
            if level[t] < 0 {
                break;
            }
            let mut it = self.head.clone();
            let mut path: Vec<usize> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    let f = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                    for &e in &path {
                        self.cap[e] -= f;
                        self.cap[e ^ 1] += f;
                    }
                    total += f;
                    let k = path.iter().position(|&e| self.cap[e] <= eps).unwrap_or(0);
                    path.truncate(k);
                    u = if k == 0 { s } else { self.to[path[k - 1]] as usize };
                    continue;
                }
                let mut advanced = false;
                while it[u] != NONE {
                    let e = it[u];
                    let v = self.to[e] as usize;
                    if self.cap[e] > eps && level[v] == level[u] + 1 {
                        path.push(e);
                        u = v;
                        advanced = true;
                        break;
                    }
                    it[u] = self.next[e];
                }
                if !advanced {
                    if u == s {
                        break;
                    }
                    level[u] = -1;
                    let e = path.pop().expect("non-source node reached without a path");
                    u = self.to[e ^ 1] as usize;
                    it[u] = self.next[it[u]];
                }
            }
        }
        let side = self.levels(s, eps).into_iter().map(|l| l >= 0).collect();
        (total, side)
    }
}
