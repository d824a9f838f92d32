//! Transportation simplex on the spanning-tree basis of the bipartite network.

use std::collections::VecDeque;

use nalgebra::DMatrix;

const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    IterationLimit,
}

pub(crate) struct Solved {
    pub outcome: Outcome,
    pub flow: DMatrix<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Node ids: rows are `0..n`, columns are `n..n+m`.
struct Tree {
    n: usize,
    m: usize,
    cells: Vec<(usize, usize)>,
    flows: Vec<f64>,
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Tree {
    fn rebuild(&mut self, c: &DMatrix<f64>, u: &mut [f64], v: &mut [f64]) {
        let total = self.n + self.m;
        for a in &mut self.adj {
            a.clear();
        }
        for (e, &(i, j)) in self.cells.iter().enumerate() {
            self.adj[i].push((self.n + j, e));
            self.adj[self.n + j].push((i, e));
        }
        let mut seen = vec![false; total];
        let mut queue = VecDeque::with_capacity(total);
        seen[0] = true;
        u[0] = 0.0;
        self.depth[0] = 0;
        self.parent[0] = usize::MAX;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for k in 0..self.adj[node].len() {
                let (next, e) = self.adj[node][k];
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                self.parent[next] = node;
                self.parent_edge[next] = e;
                self.depth[next] = self.depth[node] + 1;
                let (i, j) = self.cells[e];
                if next >= self.n {
                    v[j] = c[(i, j)] - u[i];
                } else {
                    u[i] = c[(i, j)] - v[j];
                }
                queue.push_back(next);
            }
        }
    }

    /// Tree edges on the path from column node `n + j` to row node `i`, in order.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut a = self.n + j;
        let mut b = i;
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        while self.depth[a] > self.depth[b] {
            from_a.push(self.parent_edge[a]);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            from_b.push(self.parent_edge[b]);
            b = self.parent[b];
        }
        while a != b {
            from_a.push(self.parent_edge[a]);
            a = self.parent[a];
            from_b.push(self.parent_edge[b]);
            b = self.parent[b];
        }
        from_a.extend(from_b.into_iter().rev());
        from_a
    }
}

/// Solves the balanced transportation problem with supplies `a` and demands `b`.
pub(crate) fn transport_simplex(a: &[f64], b: &[f64], c: &DMatrix<f64>) -> Solved {
    let n = a.len();
    let m = b.len();
    let mut tree = north_west_corner(a, b);
    tree.parent = vec![usize::MAX; n + m];
    tree.parent_edge = vec![usize::MAX; n + m];
    tree.depth = vec![0; n + m];
    tree.adj = vec![Vec::new(); n + m];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let cmax = c.amax();
    let tol = 1e-11 * (1.0 + cmax);
    let cap = 50 * n * m + 10_000;
    let mut bland = false;
    let mut streak = 0;
    let mut outcome = Outcome::IterationLimit;
    for _ in 0..cap {
        tree.rebuild(c, &mut u, &mut v);
        let mut entering = None;
        let mut best = -tol;
        'scan: for i in 0..n {
            for j in 0..m {
                let r = c[(i, j)] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            outcome = Outcome::Optimal;
            break;
        };
        let path = tree.path(ei, ej);
        // Signs alternate -,+,-,... along the path starting next to the column node.
        let mut leave_pos = usize::MAX;
        let mut theta = f64::INFINITY;
        let mut leave_key = usize::MAX;
        for (k, &e) in path.iter().enumerate().step_by(2) {
            let f = tree.flows[e];
            let (ci, cj) = tree.cells[e];
            let key = ci * m + cj;
            if f < theta || (f == theta && key < leave_key) {
                theta = f;
                leave_pos = k;
                leave_key = key;
            }
        }
        let theta = theta.max(0.0);
        if theta <= 1e-15 {
            streak += 1;
            if streak > DEGENERATE_STREAK {
                bland = true;
            }
        } else {
            streak = 0;
        }
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                tree.flows[e] -= theta;
            } else {
                tree.flows[e] += theta;
            }
        }
        let leaving = path[leave_pos];
        tree.cells[leaving] = (ei, ej);
        tree.flows[leaving] = theta;
    }
    if outcome == Outcome::Optimal {
        tree.rebuild(c, &mut u, &mut v);
    }
    let mut flow = DMatrix::zeros(n, m);
    for (&(i, j), &f) in tree.cells.iter().zip(&tree.flows) {
        flow[(i, j)] += f.max(0.0);
    }
    Solved {
        outcome,
        flow,
        u,
        v,
    }
}

fn north_west_corner(a: &[f64], b: &[f64]) -> Tree {
    let n = a.len();
    let m = b.len();
    let mut s = a.to_vec();
    let mut d = b.to_vec();
    let mut cells = Vec::with_capacity(n + m - 1);
    let mut flows = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    while cells.len() < n + m - 1 {
        let x = s[i].min(d[j]).max(0.0);
        s[i] -= x;
        d[j] -= x;
        cells.push((i, j));
        flows.push(x);
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Tree {
        n,
        m,
        cells,
        flows,
        parent: Vec::new(),
        parent_edge: Vec::new(),
        depth: Vec::new(),
        adj: Vec::new(),
    }
}
