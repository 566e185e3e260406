//! Tip-selecting random walks on a view.
//!
//! From a non-tip `x` the walk backtracks with total probability `q` (split
//! evenly over the two approved vertices, counting a double edge twice) and
//! otherwise steps to an approver `y` with weight `exp(-alpha * (H(x) - H(y)))`.
//! At the genesis `q` is treated as zero. Tips of the view are absorbing.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tangle::{VertexId, View};

/// Default bound on the number of steps of a single walk.
pub const DEFAULT_STEP_CAP: usize = 1_000_000;

/// Where walks start. Only the genesis is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WalkStart {
    #[default]
    Genesis,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkParams {
    /// Bias strength; `f64::INFINITY` makes forward steps pick a heaviest
    /// approver.
    pub alpha: f64,
    /// Backtracking probability, in `[0, 1/2)`.
    pub q: f64,
    pub start: WalkStart,
}

impl WalkParams {
    pub fn new(alpha: f64, q: f64) -> Result<Self> {
        if alpha.is_nan() || alpha < 0.0 {
            return Err(Error::InvalidParams(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(0.0..0.5).contains(&q) {
            return Err(Error::InvalidParams(format!("q must lie in [0, 1/2), got {q}")));
        }
        Ok(WalkParams { alpha, q, start: WalkStart::Genesis })
    }

    /// The `alpha = infinity`, `q = 0` walk.
    pub fn deterministic() -> Self {
        WalkParams { alpha: f64::INFINITY, q: 0.0, start: WalkStart::Genesis }
    }

    pub fn start_vertex(&self, view: &View<'_>) -> VertexId {
        match self.start {
            WalkStart::Genesis => view.genesis(),
        }
    }
}

#[inline]
fn bias(alpha: f64, gap: u32) -> f64 {
    if gap == 0 {
        1.0
    } else if alpha == 0.0 {
        1.0
    } else if alpha.is_infinite() {
        0.0
    } else {
        (-alpha * gap as f64).exp()
    }
}

/// Largest approver weight at `x` and the normaliser of the forward weights
/// measured relative to it.
#[inline]
fn forward_norm(view: &View<'_>, approvers: &[VertexId], alpha: f64) -> (u32, f64) {
    let hmax = approvers.iter().map(|&z| view.weight(z)).max().unwrap_or(0);
    let norm = approvers.iter().map(|&z| bias(alpha, hmax - view.weight(z))).sum();
    (hmax, norm)
}

#[inline]
fn backtrack_prob(x: VertexId, params: &WalkParams) -> f64 {
    if x == VertexId::GENESIS {
        0.0
    } else {
        params.q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveKind {
    Backtrack,
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub target: VertexId,
    pub prob: f64,
    pub kind: MoveKind,
}

/// One-step distribution from the non-tip `x`. Parallel edges are merged, so
/// each neighbor appears once.
pub fn transition_probs(view: &View<'_>, x: VertexId, params: &WalkParams) -> Result<Vec<Transition>> {
    if !view.contains(x) {
        return Err(Error::NotInView(x));
    }
    let approvers = view.approvers(x);
    if approvers.is_empty() {
        return Err(Error::AbsorbingState(x));
    }
    let mut out: Vec<Transition> = Vec::with_capacity(approvers.len() + 2);
    let mut push = |target: VertexId, prob: f64, kind: MoveKind| {
        match out.iter_mut().find(|t| t.target == target) {
            Some(t) => t.prob += prob,
            None => out.push(Transition { target, prob, kind }),
        }
    };
    let q = backtrack_prob(x, params);
    let parents = view.parents(x);
    if q > 0.0 {
        for &p in parents {
            push(p, q / parents.len() as f64, MoveKind::Backtrack);
        }
    }
    let (hmax, norm) = forward_norm(view, approvers, params.alpha);
    for &y in approvers {
        let w = bias(params.alpha, hmax - view.weight(y));
        if w > 0.0 {
            push(y, (1.0 - q) * w / norm, MoveKind::Forward);
        }
    }
    Ok(out)
}

#[inline]
fn forward_step<R: Rng + ?Sized>(view: &View<'_>, x: VertexId, alpha: f64, rng: &mut R) -> VertexId {
    let approvers = view.approvers(x);
    debug_assert!(!approvers.is_empty());
    if approvers.len() == 1 {
        return approvers[0];
    }
    if alpha == 0.0 {
        return approvers[rng.random_range(0..approvers.len())];
    }
    let hmax = approvers.iter().map(|&z| view.weight(z)).max().unwrap_or(0);
    if alpha.is_infinite() {
        let ties = approvers.iter().filter(|&&z| view.weight(z) == hmax).count();
        let pick = rng.random_range(0..ties);
        return *approvers
            .iter()
            .filter(|&&z| view.weight(z) == hmax)
            .nth(pick)
            .expect("tie index in range");
    }
    let norm: f64 = approvers.iter().map(|&z| bias(alpha, hmax - view.weight(z))).sum();
    let mut u = rng.random::<f64>() * norm;
    for &z in approvers {
        u -= bias(alpha, hmax - view.weight(z));
        if u < 0.0 {
            return z;
        }
    }
    // Rounding left a sliver of mass; fall back to a heaviest approver.
    *approvers.iter().rev().find(|&&z| view.weight(z) == hmax).unwrap()
}

/// Runs one walk from the start vertex until it hits a tip of the view.
pub fn sample_walk<R: Rng + ?Sized>(view: &View<'_>, params: &WalkParams, rng: &mut R) -> Result<VertexId> {
    sample_walk_capped(view, params, rng, DEFAULT_STEP_CAP)
}

pub fn sample_walk_capped<R: Rng + ?Sized>(
    view: &View<'_>,
    params: &WalkParams,
    rng: &mut R,
    cap: usize,
) -> Result<VertexId> {
    let mut x = params.start_vertex(view);
    for _ in 0..cap {
        if view.is_tip(x) {
            return Ok(x);
        }
        let q = backtrack_prob(x, params);
        x = if q > 0.0 && rng.random::<f64>() < q {
            let parents = view.parents(x);
            parents[rng.random_range(0..parents.len())]
        } else {
            forward_step(view, x, params.alpha, rng)
        };
    }
    if view.is_tip(x) {
        return Ok(x);
    }
    Err(Error::StepCapExceeded(cap))
}

/// The `alpha = infinity` walk: from the genesis, always step to a heaviest
/// approver, choosing uniformly among ties.
pub fn deterministic_walk<R: Rng + ?Sized>(view: &View<'_>, rng: &mut R) -> Result<VertexId> {
    sample_walk(view, &WalkParams::deterministic(), rng)
}

/// Absorption probabilities of the walk over the tips of a view.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExitDistribution {
    probs: BTreeMap<VertexId, f64>,
}

impl ExitDistribution {
    pub fn point_mass(tip: VertexId) -> Self {
        ExitDistribution { probs: BTreeMap::from([(tip, 1.0)]) }
    }

    pub fn from_map(probs: BTreeMap<VertexId, f64>) -> Self {
        ExitDistribution { probs }
    }

    pub fn prob(&self, tip: VertexId) -> f64 {
        self.probs.get(&tip).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.probs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn total_variation(&self, other: &ExitDistribution) -> f64 {
        let mut keys: Vec<VertexId> = self.probs.keys().chain(other.probs.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys.iter().map(|&k| (self.prob(k) - other.prob(k)).abs()).sum::<f64>()
    }
}

/// Empirical tip frequencies of `n_samples` independent walks.
pub fn exit_distribution_mc<R: Rng + ?Sized>(
    view: &View<'_>,
    params: &WalkParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<ExitDistribution> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be >= 1".into()));
    }
    let mut counts: BTreeMap<VertexId, usize> = BTreeMap::new();
    for _ in 0..n_samples {
        *counts.entry(sample_walk(view, params, rng)?).or_default() += 1;
    }
    let n = n_samples as f64;
    Ok(ExitDistribution::from_map(
        counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect(),
    ))
}

/// Exact exit distribution with default solver settings.
pub fn exit_distribution_exact(view: &View<'_>, params: &WalkParams) -> Result<ExitDistribution> {
    ExitSolver::default().solve(view, params)
}

/// Solves the absorbing chain for the walk's exit distribution.
///
/// The unknown is the occupation measure `g(x)`, the expected number of
/// visits to the transient vertex `x` starting from the start vertex, which
/// satisfies `g = e_start + g Q`. The exit probability of a tip is then the
/// occupation-weighted mass flowing into it. Small views are solved by dense
/// LU. Larger ones use Gauss-Seidel relaxation driven by a queue of vertices
/// whose equation or inputs changed, warm-started from the previous solution
/// on the same tangle, so a sequence of growing views only pays for the part
/// of the tangle that moved.
#[derive(Clone, Debug)]
pub struct ExitSolver {
    /// Views with at most this many vertices use the dense solver.
    pub dense_limit: usize,
    /// Views above this size are rejected.
    pub cap: usize,
    /// A vertex whose relative update exceeds this re-queues its neighbours.
    /// The default of `1e-10` leaves exit probabilities within about `1e-9`
    /// at `q = 1/3`; slower-mixing walks with larger `q` lose more.
    pub tolerance: f64,
    /// Relaxation budget per solve, in multiples of the view size.
    pub max_sweeps: usize,
    cache: RelaxCache,
    scale: Vec<f64>,
    hmax: Vec<u32>,
}

/// Per-vertex equations and solution of the last iterative solve.
#[derive(Clone, Debug, Default)]
struct RelaxCache {
    /// Tangle identity and walk parameters the cache belongs to.
    key: Option<(u64, u64, u64)>,
    len: usize,
    g: Vec<f64>,
    /// Current inflow coefficients from the two parent entries.
    coef: Vec<[f64; 2]>,
    /// Coefficients in force when the vertex was last relaxed.
    basis: Vec<[f64; 2]>,
    tip: Vec<bool>,
    /// Vertices waiting to be relaxed, one bit each.
    dirty: Vec<u64>,
    /// Exit distribution of the view of length `len`.
    result: Option<ExitDistribution>,
}

impl RelaxCache {
    fn mark(&mut self, z: usize) {
        if !self.tip[z] {
            self.dirty[z / 64] |= 1 << (z % 64);
        }
    }

    /// Removes and returns the first dirty vertex at or after `from`.
    fn take_up(&mut self, from: usize) -> Option<usize> {
        let mut w = from / 64;
        let mut word = *self.dirty.get(w)? & (!0u64 << (from % 64));
        loop {
            if word != 0 {
                let z = w * 64 + word.trailing_zeros() as usize;
                self.dirty[w] &= !(1 << (z % 64));
                return Some(z);
            }
            w += 1;
            word = *self.dirty.get(w)?;
        }
    }

    /// Removes and returns the last dirty vertex at or before `from`.
    fn take_down(&mut self, from: usize) -> Option<usize> {
        let mut w = from / 64;
        let shift = 63 - from % 64;
        let mut word = (self.dirty[w] << shift) >> shift;
        loop {
            if word != 0 {
                let z = w * 64 + 63 - word.leading_zeros() as usize;
                self.dirty[w] &= !(1 << (z % 64));
                return Some(z);
            }
            w = w.checked_sub(1)?;
            word = self.dirty[w];
        }
    }
}

impl Default for ExitSolver {
    fn default() -> Self {
        ExitSolver {
            dense_limit: 128,
            cap: 50_000,
            tolerance: 1e-10,
            max_sweeps: 100_000,
            cache: RelaxCache::default(),
            scale: Vec::new(),
            hmax: Vec::new(),
        }
    }
}

impl ExitSolver {
    pub fn new(dense_limit: usize, cap: usize) -> Self {
        ExitSolver { dense_limit, cap, ..Default::default() }
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        ExitSolver { tolerance, ..self }
    }

    pub fn solve(&mut self, view: &View<'_>, params: &WalkParams) -> Result<ExitDistribution> {
        if view.len() > self.cap {
            return Err(Error::SolverCapExceeded { size: view.len(), cap: self.cap });
        }
        let start = params.start_vertex(view);
        if view.is_tip(start) {
            return Ok(ExitDistribution::point_mass(start));
        }
        if view.len() <= self.dense_limit {
            self.solve_dense(view, params, start)
        } else {
            self.solve_iterative(view, params, start)
        }
    }

    /// Exact if the view fits under the cap, otherwise a Monte-Carlo estimate
    /// from `mc_samples` walks.
    pub fn estimate<R: Rng + ?Sized>(
        &mut self,
        view: &View<'_>,
        params: &WalkParams,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<ExitDistribution> {
        match self.solve(view, params) {
            Err(Error::SolverCapExceeded { .. }) => exit_distribution_mc(view, params, mc_samples, rng),
            other => other,
        }
    }

    fn solve_dense(&mut self, view: &View<'_>, params: &WalkParams, start: VertexId) -> Result<ExitDistribution> {
        let n = view.len();
        let mut slot = vec![usize::MAX; n];
        let transient: Vec<VertexId> = (0..n as u32).map(VertexId).filter(|&v| !view.is_tip(v)).collect();
        for (i, v) in transient.iter().enumerate() {
            slot[v.index()] = i;
        }
        let m = transient.len();
        // (I - Q)^T g = e_start
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut rows = Vec::with_capacity(m);
        for (i, &x) in transient.iter().enumerate() {
            let tr = transition_probs(view, x, params)?;
            for t in &tr {
                let j = slot[t.target.index()];
                if j != usize::MAX {
                    a[(j, i)] -= t.prob;
                }
            }
            rows.push(tr);
        }
        let mut b = DVector::<f64>::zeros(m);
        b[slot[start.index()]] = 1.0;
        let g = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Solver("singular absorbing-chain system".into()))?;
        let mut probs = BTreeMap::new();
        for (i, tr) in rows.iter().enumerate() {
            for t in tr {
                if slot[t.target.index()] == usize::MAX {
                    *probs.entry(t.target).or_insert(0.0) += g[i] * t.prob;
                }
            }
        }
        Ok(ExitDistribution::from_map(probs))
    }

    fn solve_iterative(&mut self, view: &View<'_>, params: &WalkParams, start: VertexId) -> Result<ExitDistribution> {
        let n = view.len();
        let alpha = params.alpha;
        let tol = self.tolerance;
        let key = (view.tangle().uid(), alpha.to_bits(), params.q.to_bits());
        let c = &mut self.cache;
        if c.key != Some(key) || n < c.len {
            *c = RelaxCache { key: Some(key), ..Default::default() };
        }
        if c.len == n {
            if let Some(result) = &c.result {
                return Ok(result.clone());
            }
        }
        let old_len = c.len;
        c.len = n;
        c.result = None;
        c.g.resize(n, 0.0);
        c.coef.resize(n, [0.0; 2]);
        c.basis.resize(n, [0.0; 2]);
        c.tip.resize(n, false);
        c.dirty.clear();
        c.dirty.resize(n.div_ceil(64), 0);

        self.scale.resize(n, 0.0);
        self.hmax.resize(n, 0);
        for y in 0..n {
            let approvers = view.approvers(VertexId(y as u32));
            if approvers.is_empty() {
                continue;
            }
            let (hmax, norm) = forward_norm(view, approvers, alpha);
            self.hmax[y] = hmax;
            self.scale[y] = (1.0 - backtrack_prob(VertexId(y as u32), params)) / norm;
        }

        // Mark every vertex whose equation moved enough, since it was last
        // relaxed, to shift its value by more than the tolerance.
        for x in 0..n {
            let v = VertexId(x as u32);
            let tip = view.is_tip(v);
            let parents = view.parents(v);
            let hx = view.weight(v);
            let mut coef = [0.0; 2];
            for (k, &y) in parents.iter().enumerate() {
                coef[k] = self.scale[y.index()] * bias(alpha, self.hmax[y.index()] - hx);
            }
            c.coef[x] = coef;
            let was_tip = c.tip[x];
            c.tip[x] = tip;
            if tip {
                c.g[x] = 0.0;
                continue;
            }
            let shift: f64 = parents
                .iter()
                .enumerate()
                .map(|(k, &y)| (coef[k] - c.basis[x][k]).abs() * c.g[y.index()])
                .sum();
            if x >= old_len || was_tip || shift > tol * c.g[x].max(1.0) {
                c.mark(x);
            }
        }

        // Alternate ascending and descending passes over the dirty set. A
        // vertex marked ahead of the cursor is picked up in the same pass.
        let half_q = params.q / 2.0;
        let budget = self.max_sweeps.saturating_mul(n);
        let mut work = 0usize;
        let mut ascending = true;
        let mut cursor = 0usize;
        let mut idle_turns = 0;
        while idle_turns < 2 {
            let next = if ascending { c.take_up(cursor) } else { c.take_down(cursor) };
            let Some(x) = next else {
                ascending = !ascending;
                cursor = if ascending { 0 } else { n - 1 };
                idle_turns += 1;
                continue;
            };
            idle_turns = 0;
            cursor = x;
            let v = VertexId(x as u32);
            let parents = view.parents(v);
            let approvers = view.approvers(v);
            let mut acc = if v == start { 1.0 } else { 0.0 };
            for (k, &y) in parents.iter().enumerate() {
                acc += c.coef[x][k] * c.g[y.index()];
            }
            if half_q > 0.0 {
                acc += half_q * approvers.iter().map(|z| c.g[z.index()]).sum::<f64>();
            }
            let change = (acc - c.g[x]).abs();
            c.g[x] = acc;
            c.basis[x] = c.coef[x];
            for &z in approvers {
                let zi = z.index();
                let zp = view.parents(z);
                let mut inflow = 0.0;
                for k in 0..zp.len() {
                    if zp[k] == v {
                        inflow += c.coef[zi][k];
                    }
                }
                if inflow * change > tol * c.g[zi].max(1.0) {
                    c.mark(zi);
                }
            }
            if half_q * change > 0.0 {
                for &y in parents {
                    if half_q * change > tol * c.g[y.index()].max(1.0) {
                        c.mark(y.index());
                    }
                }
            }
            work += 1;
            if work > budget {
                c.key = None;
                return Err(Error::Solver(format!("relaxation did not reach {tol} within {budget} updates")));
            }
        }

        let mut probs = BTreeMap::new();
        for &t in view.tips() {
            if let [a, b] = view.parents(t) {
                let coef = c.coef[t.index()];
                probs.insert(t, coef[0] * c.g[a.index()] + coef[1] * c.g[b.index()]);
            }
        }
        let result = ExitDistribution::from_map(probs);
        c.result = Some(result.clone());
        Ok(result)
    }
}
