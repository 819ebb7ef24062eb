//! Primal network simplex for the dense transportation problem.
//!
//! Nodes are the `m` sources, then the `n` sinks, then an artificial root.
//! The basis is a strongly feasible spanning tree stored through parent,
//! thread and subtree-size arrays, so a pivot only touches the stem between
//! the entering and leaving arcs and the potentials of one subtree. Arcs
//! `0..m*n` are the real arcs `i -> m + j`; arc `m*n + u` joins node `u` to
//! the root. Costs are evaluated on demand.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct Plan {
    pub cost: f64,
    pub entries: Vec<(usize, usize, f64)>,
}

struct Net<'c, C> {
    m: usize,
    n: usize,
    dense: usize,
    root: usize,
    art: f64,
    cost: &'c C,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// The arc `pred[u]` points from `u` to its parent.
    up: Vec<bool>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    /// Flow on `pred[u]`.
    flow: Vec<f64>,
    dirty: Vec<usize>,
}

impl<'c, C: Fn(usize, usize) -> f64> Net<'c, C> {
    fn new(a: &[f64], b: &[f64], cost: &'c C, art: f64) -> Self {
        let (m, n) = (a.len(), b.len());
        let nodes = m + n;
        let root = nodes;
        let mut net = Net {
            m,
            n,
            dense: m * n,
            root,
            art,
            cost,
            parent: vec![root; nodes + 1],
            pred: vec![NONE; nodes + 1],
            up: vec![true; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            flow: vec![0.0; nodes + 1],
            dirty: Vec::new(),
        };
        net.parent[root] = NONE;
        net.thread[root] = 0;
        net.rev_thread[0] = root;
        net.succ_num[root] = nodes + 1;
        net.last_succ[root] = root - 1;
        for u in 0..nodes {
            net.pred[u] = net.dense + u;
            net.thread[u] = u + 1;
            net.rev_thread[u + 1] = u;
            net.last_succ[u] = u;
            if u < m {
                net.up[u] = true;
                net.flow[u] = a[u];
            } else {
                net.up[u] = false;
                net.pi[u] = art;
                net.flow[u] = b[u - m];
            }
        }
        net
    }

    /// Tree spanned by a positive acyclic flow on real arcs; each component
    /// hangs from the root by a zero-flow artificial arc into one of its
    /// sinks, which keeps the tree strongly feasible. `None` when the flow
    /// does not have that shape.
    fn from_flow(a: &[f64], b: &[f64], cost: &'c C, art: f64, flows: &[(usize, usize, f64)]) -> Option<Self> {
        let mut net = Self::new(a, b, cost, art);
        let (m, n) = (net.m, net.n);
        let nodes = m + n;
        let root = net.root;
        let mut adj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nodes];
        let mut comp: Vec<usize> = (0..nodes).collect();
        fn find(c: &mut [usize], mut x: usize) -> usize {
            while c[x] != x {
                c[x] = c[c[x]];
                x = c[x];
            }
            x
        }
        for &(i, j, f) in flows {
            let (ri, rj) = (find(&mut comp, i), find(&mut comp, m + j));
            if ri == rj || !(f > 0.0) {
                return None;
            }
            comp[ri] = rj;
            adj[i].push((m + j, i * n + j, f));
            adj[m + j].push((i, i * n + j, f));
        }
        let mut connector = vec![NONE; nodes];
        for u in m..nodes {
            let r = find(&mut comp, u);
            if connector[r] == NONE {
                connector[r] = u;
            }
        }
        for u in 0..m {
            let r = find(&mut comp, u);
            if connector[r] == NONE {
                return None;
            }
        }

        let mut order = Vec::with_capacity(nodes + 1);
        let mut seen = vec![false; nodes];
        let mut stack: Vec<usize> =
            (0..nodes).rev().filter(|&r| connector[r] != NONE && comp[r] == r).map(|r| connector[r]).collect();
        for &c in &stack {
            net.parent[c] = root;
            net.pred[c] = net.dense + c;
            net.up[c] = false;
            net.flow[c] = 0.0;
            net.pi[c] = art;
        }
        order.push(root);
        while let Some(u) = stack.pop() {
            if seen[u] {
                return None;
            }
            seen[u] = true;
            order.push(u);
            for &(v, e, f) in adj[u].iter().rev() {
                if v == net.parent[u] && net.pred[u] == e {
                    continue;
                }
                net.parent[v] = u;
                net.pred[v] = e;
                net.flow[v] = f;
                let c = (net.cost)(e / n, e % n);
                net.up[v] = v < m;
                net.pi[v] = if net.up[v] { net.pi[u] - c } else { net.pi[u] + c };
                stack.push(v);
            }
        }
        if order.len() != nodes + 1 {
            return None;
        }
        let mut pos = vec![0; nodes + 1];
        for (k, &u) in order.iter().enumerate() {
            pos[u] = k;
            let next = order[(k + 1) % order.len()];
            net.thread[u] = next;
            net.rev_thread[next] = u;
            net.succ_num[u] = 1;
        }
        for &u in order.iter().skip(1).rev() {
            let p = net.parent[u];
            net.succ_num[p] += net.succ_num[u];
        }
        for &u in &order {
            net.last_succ[u] = order[pos[u] + net.succ_num[u] - 1];
        }
        Some(net)
    }

    fn source(&self, e: usize) -> usize {
        if e < self.dense {
            e / self.n
        } else {
            let u = e - self.dense;
            if u < self.m {
                u
            } else {
                self.root
            }
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.dense {
            self.m + e % self.n
        } else {
            let u = e - self.dense;
            if u < self.m {
                self.root
            } else {
                u
            }
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.dense {
            (self.cost)(e / self.n, e % self.n)
        } else if e - self.dense < self.m {
            0.0
        } else {
            self.art
        }
    }

    fn reduced(&self, e: usize) -> f64 {
        (self.cost)(e / self.n, e % self.n) + self.pi[e / self.n] - self.pi[self.m + e % self.n]
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.succ_num[a] < self.succ_num[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    /// Pivots `in_arc` into the tree.
    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let (first, second) = (self.source(in_arc), self.target(in_arc));
        let join = self.join(first, second);

        // leaving arc: last blocking arc in cycle orientation
        let mut delta = f64::INFINITY;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.up[u] && self.flow[u] < delta {
                delta = self.flow[u];
                u_out = u;
                side = 1;
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if !self.up[u] && self.flow[u] <= delta {
                delta = self.flow[u];
                u_out = u;
                side = 2;
            }
            u = self.parent[u];
        }
        if side == 0 {
            return Err(Error::Transport("unbounded cycle in network simplex".into()));
        }
        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };

        if delta > 0.0 {
            let mut u = first;
            while u != join {
                self.flow[u] -= if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
            u = second;
            while u != join {
                self.flow[u] += if self.up[u] { delta } else { -delta };
                u = self.parent[u];
            }
        }

        self.update_tree(in_arc, join, u_in, v_in, u_out, delta);

        let c = self.arc_cost(in_arc);
        let sigma = self.pi[v_in] - self.pi[u_in] - if self.up[u_in] { c } else { -c };
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
        Ok(())
    }

    fn update_tree(&mut self, in_arc: usize, join: usize, u_in: usize, v_in: usize, u_out: usize, delta: f64) {
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == self.source(in_arc);
            self.flow[u_in] = delta;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };

            // re-hang the stem between u_in and u_out
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty.clear();
            self.dirty.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for i in 0..self.dirty.len() {
                let u = self.dirty[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // shift pred arcs, flows and subtree sizes along the stem
            let mut tmp_sc = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.up[u] = !self.up[p];
                self.flow[u] = self.flow[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.up[u_in] = u_in == self.source(in_arc);
            self.flow[u_in] = delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }
}

/// Altering candidate list pricing: the surviving negative arcs of earlier
/// scans are re-priced first, then blocks of the full arc set are scanned
/// until enough new candidates turn up; the best one enters.
struct Pricing {
    block: usize,
    head: usize,
    next: usize,
    list: Vec<(f64, usize)>,
}

impl Pricing {
    fn new(arcs: usize) -> Self {
        let block = ((arcs as f64).sqrt().ceil() as usize).max(10);
        let head = (block / 100).max(3);
        Pricing { block, head, next: 0, list: Vec::with_capacity(block + head) }
    }

    fn entering<C: Fn(usize, usize) -> f64>(&mut self, net: &Net<'_, C>, tol: f64) -> usize {
        let arcs = net.dense;
        self.list.retain_mut(|(r, e)| {
            *r = net.reduced(*e);
            *r < -tol
        });
        let mut cnt = self.block;
        let mut limit = self.head;
        let mut e = self.next;
        let mut done = false;
        for _ in 0..arcs {
            let r = net.reduced(e);
            if r < -tol {
                self.list.push((r, e));
            }
            e += 1;
            if e == arcs {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if self.list.len() > limit {
                    done = true;
                    break;
                }
                limit = 0;
                cnt = self.block;
            }
        }
        if !done && self.list.is_empty() {
            return NONE;
        }
        self.next = e;
        let keep = (self.head + 1).min(self.list.len());
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if keep < self.list.len() {
            self.list.select_nth_unstable_by(keep - 1, order);
            self.list.truncate(keep);
        }
        self.list.sort_unstable_by(order);
        self.list.remove(0).1
    }
}

/// Cheapest-arc-first feasible flow: greedy over the few cheapest arcs of
/// every row, then the remaining mass in index order. Every allocation
/// exhausts a row or a column, so the positive arcs form a forest.
fn greedy_flow<C: Fn(usize, usize) -> f64>(a: &[f64], b: &[f64], cost: &C) -> Option<Vec<(usize, usize, f64)>> {
    const PER_ROW: usize = 8;
    let (m, n) = (a.len(), b.len());
    let k = PER_ROW.min(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(m * k);
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..m {
        row.clear();
        row.extend((0..n).map(|j| (cost(i, j), i * n + j)));
        if row.len() > k {
            row.select_nth_unstable_by(k - 1, by_value);
            row.truncate(k);
        }
        cand.extend_from_slice(&row);
    }
    cand.sort_unstable_by(by_value);
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut flows = Vec::with_capacity(m + n);
    let mut take = |i: usize, j: usize, ra: &mut [f64], rb: &mut [f64]| {
        let f = ra[i].min(rb[j]);
        if ra[i] <= rb[j] {
            rb[j] -= f;
            ra[i] = 0.0;
        } else {
            ra[i] -= f;
            rb[j] = 0.0;
        }
        flows.push((i, j, f));
    };
    for &(_, e) in &cand {
        let (i, j) = (e / n, e % n);
        if ra[i] > 0.0 && rb[j] > 0.0 {
            take(i, j, &mut ra, &mut rb);
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&i| ra[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| rb[j] > 0.0).collect();
    let (mut r, mut c) = (0, 0);
    while r < rows.len() && c < cols.len() {
        let (i, j) = (rows[r], cols[c]);
        take(i, j, &mut ra, &mut rb);
        if ra[i] == 0.0 {
            r += 1;
        }
        if rb[j] == 0.0 {
            c += 1;
        }
    }
    let left = ra.iter().chain(&rb).fold(0.0f64, |acc, x| acc.max(*x));
    (left <= 1e-10).then_some(flows)
}

fn by_value(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Solves `min sum pi_ij cost(i, j)` over couplings of `a` and `b`. Both
/// marginals must be strictly positive with equal totals.
pub(crate) fn solve<C>(a: &[f64], b: &[f64], cost: C) -> Result<Plan>
where
    C: Fn(usize, usize) -> f64,
{
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(Error::Transport("empty support".into()));
    }
    let mut cmax = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let c = cost(i, j);
            if !c.is_finite() {
                return Err(Error::Transport(format!("non-finite cost at ({i}, {j})")));
            }
            cmax = cmax.max(c.abs());
        }
    }
    let art = (cmax + 1.0) * (m + n) as f64;
    let tol = 8.0 * f64::EPSILON * art;
    let mut net = greedy_flow(a, b, &cost)
        .and_then(|f| Net::from_flow(a, b, &cost, art, &f))
        .unwrap_or_else(|| Net::new(a, b, &cost, art));

    let dense = m * n;
    let max_pivots = 1000 * (m + n) + dense;
    let mut pricing = Pricing::new(dense);
    let mut pivots = 0usize;
    loop {
        let found = pricing.entering(&net, tol);
        if found == NONE {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Transport(format!("network simplex exceeded {max_pivots} pivots")));
        }
        net.pivot(found)?;
    }

    let mut entries = Vec::with_capacity(m + n);
    let mut residual = 0.0f64;
    for u in 0..m + n {
        let e = net.pred[u];
        let f = net.flow[u];
        if e < dense {
            if f > 0.0 {
                entries.push((e / n, e % n, f));
            }
        } else {
            residual = residual.max(f.abs());
        }
    }
    let scale = a.iter().sum::<f64>().max(1e-300);
    if residual > 1e-9 * scale {
        return Err(Error::Transport(format!("marginals do not balance, artificial flow {residual}")));
    }
    entries.sort_by_key(|&(r, c, _)| (r, c));
    let total = entries.iter().map(|&(r, c, f)| f * cost(r, c)).sum();
    Ok(Plan { cost: total, entries })
}
