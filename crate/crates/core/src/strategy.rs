//! Attachment strategies: the default two-walk rule, the greedy rule that
//! approves the two most likely exit tips, and their mixture.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tangle::{ConeDiff, ConeMarker, LogicalId, VertexId, View};
use crate::walk::{sample_walk, ExitDistribution, ExitSolver, WalkParams};

/// Re-runs of the second walk when it lands on the first walk's tip.
pub const DEFAULT_DISTINCT_REDRAWS: usize = 10;
/// Draws of the labelled strategy before falling back to default draws when
/// pairs keep conflicting.
pub const DEFAULT_CONFLICT_REDRAWS: usize = 20;

/// Exit probabilities closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyLabel {
    /// Default two-walk selection.
    S0,
    /// Greedy selection.
    S1,
}

impl fmt::Display for StrategyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyLabel::S0 => "S0",
            StrategyLabel::S1 => "S1",
        })
    }
}

impl std::str::FromStr for StrategyLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "S0" => Ok(StrategyLabel::S0),
            "S1" => Ok(StrategyLabel::S1),
            other => Err(format!("unknown strategy label {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Default(WalkParams),
    Greedy(WalkParams),
    /// Greedy with probability `theta`, default otherwise.
    Mixed { theta: f64, base: WalkParams },
}

/// Ordered pair of view tips to approve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TipPair {
    pub first: VertexId,
    pub second: VertexId,
}

impl TipPair {
    pub fn new(first: VertexId, second: VertexId) -> Self {
        TipPair { first, second }
    }

    pub fn as_tuple(&self) -> (VertexId, VertexId) {
        (self.first, self.second)
    }

    pub fn is_distinct(&self) -> bool {
        self.first != self.second
    }
}

/// Two independent walks; the second is re-run up to `redraws` times while it
/// repeats the first. Returns the pair and the number of re-runs used.
pub fn select_default_with<R: Rng + ?Sized>(
    view: &View<'_>,
    params: &WalkParams,
    redraws: usize,
    rng: &mut R,
) -> Result<(TipPair, usize)> {
    let first = sample_walk(view, params, rng)?;
    let mut second = sample_walk(view, params, rng)?;
    let mut used = 0;
    while second == first && used < redraws && view.tips().len() > 1 {
        second = sample_walk(view, params, rng)?;
        used += 1;
    }
    Ok((TipPair::new(first, second), used))
}

pub fn select_default<R: Rng + ?Sized>(view: &View<'_>, params: &WalkParams, rng: &mut R) -> Result<TipPair> {
    select_default_with(view, params, DEFAULT_DISTINCT_REDRAWS, rng).map(|(p, _)| p)
}

/// The two most probable exit tips, ties broken uniformly at random. A
/// single-tip distribution yields the duplicate pair.
pub fn top_two<R: Rng + ?Sized>(dist: &ExitDistribution, rng: &mut R) -> TipPair {
    let mut ranked: Vec<(VertexId, f64)> = dist.iter().collect();
    assert!(!ranked.is_empty(), "empty exit distribution");
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let best = ranked[0].1;
    let top: Vec<VertexId> = ranked.iter().take_while(|(_, p)| best - p <= TIE_TOLERANCE).map(|e| e.0).collect();
    if top.len() >= 2 {
        let i = rng.random_range(0..top.len());
        let mut j = rng.random_range(0..top.len() - 1);
        if j >= i {
            j += 1;
        }
        return TipPair::new(top[i], top[j]);
    }
    let first = top[0];
    let rest = &ranked[1..];
    if rest.is_empty() {
        return TipPair::new(first, first);
    }
    let runner = rest[0].1;
    let ties: Vec<VertexId> = rest.iter().take_while(|(_, p)| runner - p <= TIE_TOLERANCE).map(|e| e.0).collect();
    TipPair::new(first, ties[rng.random_range(0..ties.len())])
}

/// Greedy selection: the two best tips of the default walk's exit
/// distribution, computed exactly when the view fits under the solver cap and
/// estimated from `mc_samples` walks otherwise.
pub fn select_greedy<R: Rng + ?Sized>(
    view: &View<'_>,
    params: &WalkParams,
    solver: &mut ExitSolver,
    mc_samples: usize,
    rng: &mut R,
) -> Result<TipPair> {
    let dist = solver.estimate(view, params, mc_samples, rng)?;
    Ok(top_two(&dist, rng))
}

/// One Bernoulli(theta) draw decides between greedy and default selection.
pub fn select_mixed<R: Rng + ?Sized>(
    view: &View<'_>,
    theta: f64,
    params: &WalkParams,
    solver: &mut ExitSolver,
    mc_samples: usize,
    rng: &mut R,
) -> Result<(TipPair, StrategyLabel)> {
    if rng.random::<f64>() < theta {
        Ok((select_greedy(view, params, solver, mc_samples, rng)?, StrategyLabel::S1))
    } else {
        Ok((select_default(view, params, rng)?, StrategyLabel::S0))
    }
}

/// Whether the reflexive past cones of the pair hold at most one issue of
/// every logical transaction.
pub fn conflict_free(view: &View<'_>, pair: TipPair) -> bool {
    conflict_free_for(view, pair, None, &mut ConeMarker::new())
}

/// As [`conflict_free`], additionally requiring that no issue of `issuing`
/// (the logical transaction about to be attached) is referenced by the pair.
pub fn conflict_free_for(
    view: &View<'_>,
    pair: TipPair,
    issuing: Option<LogicalId>,
    marker: &mut ConeMarker,
) -> bool {
    let tangle = view.tangle();
    for &logical in tangle.reissued_logicals() {
        if Some(logical) != issuing && referenced_issues_exceed(view, pair, logical, 1, marker) {
            return false;
        }
    }
    match issuing {
        Some(l) => !referenced_issues_exceed(view, pair, l, 0, marker),
        None => true,
    }
}

/// Scratch space for the selector's conflict checks.
#[derive(Clone, Debug, Default)]
pub(crate) struct ConflictScratch {
    marker: ConeMarker,
    diff: ConeDiff,
    keyed: Vec<(LogicalId, VertexId)>,
}

/// Same answer as [`conflict_free_for`] provided each tip of the pair is
/// itself conflict-free, which holds for every vertex attached through a
/// [`Selector`]. Two issues of one logical transaction can then only meet
/// through vertices that one tip references and the other does not.
pub(crate) fn selector_conflict_free(
    view: &View<'_>,
    pair: TipPair,
    issuing: Option<LogicalId>,
    scratch: &mut ConflictScratch,
) -> bool {
    let tangle = view.tangle();
    if !tangle.reissued_logicals().is_empty() && pair.is_distinct() {
        let logical = |v: VertexId| tangle.vertices()[v.index()].logical_id;
        let (left, right) = scratch.diff.exclusive(tangle, pair.first, pair.second);
        scratch.keyed.clear();
        scratch.keyed.extend(
            left.iter().map(|&v| (logical(v), v)).filter(|&(l, _)| tangle.issues(l).len() > 1),
        );
        if !scratch.keyed.is_empty() {
            scratch.keyed.sort_unstable();
            for &v in right {
                let l = logical(v);
                if tangle.issues(l).len() > 1
                    && scratch.keyed.binary_search_by(|e| e.0.cmp(&l)).is_ok()
                {
                    return false;
                }
            }
        }
    }
    match issuing {
        Some(l) => !referenced_issues_exceed(view, pair, l, 0, &mut scratch.marker),
        None => true,
    }
}

fn referenced_issues_exceed(
    view: &View<'_>,
    pair: TipPair,
    logical: LogicalId,
    allowed: usize,
    marker: &mut ConeMarker,
) -> bool {
    // An issue without approvers in the view is referenced only by itself.
    let reachable =
        |v: VertexId| view.contains(v) && (pair.first == v || pair.second == v || !view.approvers(v).is_empty());
    let all = view.tangle().issues(logical);
    if all.iter().filter(|&&v| reachable(v)).count() <= allowed {
        return false;
    }
    let mut issues: Vec<VertexId> = all.iter().copied().filter(|&v| reachable(v)).collect();
    // Cheapest checks first; once too few issues remain to exceed the allowance
    // the rest need not be examined.
    issues.sort_by_key(|&v| view.weight(v));
    let mut found = 0;
    for (i, &v) in issues.iter().enumerate() {
        let remaining = issues.len() - i;
        if found + remaining <= allowed {
            return false;
        }
        if pair_references(view, pair, v, marker) {
            found += 1;
            if found > allowed {
                return true;
            }
        }
    }
    false
}

fn pair_references(view: &View<'_>, pair: TipPair, v: VertexId, marker: &mut ConeMarker) -> bool {
    let roots = [pair.first, pair.second];
    if roots.contains(&v) {
        return true;
    }
    if view.is_tip(v) || (pair.first < v && pair.second < v) {
        return false;
    }
    let future = view.weight(v) as usize - 1;
    let span = view.len() - v.index();
    if future <= span {
        marker.mark_future_until(view.tangle(), v, view.len(), &roots)
    } else {
        marker.mark_past(view.tangle(), &roots, v);
        marker.is_marked(v)
    }
}

/// Counts of re-drawn selections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DrawCounters {
    /// Second-walk re-runs to obtain distinct tips.
    pub distinct_redraws: u64,
    /// Pairs rejected for referencing conflicting issues.
    pub conflict_rejections: u64,
    /// Selections that fell back to default draws after repeated conflicts.
    pub fallbacks: u64,
}

/// Stateful tip selector used by the simulator: owns the exit solver (so its
/// warm start carries across views) and enforces conflict-free pairs.
#[derive(Clone, Debug)]
pub struct Selector {
    pub params: WalkParams,
    pub solver: ExitSolver,
    pub mc_samples: usize,
    pub distinct_redraws: usize,
    pub conflict_redraws: usize,
    pub counters: DrawCounters,
    scratch: ConflictScratch,
}

impl Selector {
    pub fn new(params: WalkParams, solver: ExitSolver, mc_samples: usize) -> Self {
        Selector {
            params,
            solver,
            mc_samples,
            distinct_redraws: DEFAULT_DISTINCT_REDRAWS,
            conflict_redraws: DEFAULT_CONFLICT_REDRAWS,
            counters: DrawCounters::default(),
            scratch: ConflictScratch::default(),
        }
    }

    fn draw_default<R: Rng + ?Sized>(&mut self, view: &View<'_>, rng: &mut R) -> Result<TipPair> {
        let (pair, used) = select_default_with(view, &self.params, self.distinct_redraws, rng)?;
        self.counters.distinct_redraws += used as u64;
        Ok(pair)
    }

    /// Selects a conflict-free pair with the labelled strategy, then falls
    /// back to default draws and finally to any conflict-free single tip.
    ///
    /// Default selection re-draws up to `conflict_redraws` times. Greedy
    /// selection solves once and tries that many pairs of its best tips in
    /// order of combined exit probability.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        view: &View<'_>,
        label: StrategyLabel,
        issuing: Option<LogicalId>,
        rng: &mut R,
    ) -> Result<TipPair> {
        let needs_check = issuing.is_some() || !view.tangle().reissued_logicals().is_empty();
        let candidates = match label {
            StrategyLabel::S0 => None,
            StrategyLabel::S1 => {
                let dist = self.solver.estimate(view, &self.params, self.mc_samples, rng)?;
                let best = top_two(&dist, rng);
                if !needs_check {
                    return Ok(best);
                }
                Some(ranked_pairs(&dist, best, self.conflict_redraws))
            }
        };
        if let Some(pairs) = candidates {
            for pair in pairs {
                if selector_conflict_free(view, pair, issuing, &mut self.scratch) {
                    return Ok(pair);
                }
                self.counters.conflict_rejections += 1;
            }
            self.counters.fallbacks += 1;
        } else {
            let pair = self.draw_default(view, rng)?;
            if !needs_check || selector_conflict_free(view, pair, issuing, &mut self.scratch) {
                return Ok(pair);
            }
            self.counters.conflict_rejections += 1;
            for _ in 1..self.conflict_redraws {
                let pair = self.draw_default(view, rng)?;
                if selector_conflict_free(view, pair, issuing, &mut self.scratch) {
                    return Ok(pair);
                }
                self.counters.conflict_rejections += 1;
            }
        }
        for _ in 0..self.conflict_redraws {
            let pair = self.draw_default(view, rng)?;
            if selector_conflict_free(view, pair, issuing, &mut self.scratch) {
                return Ok(pair);
            }
            self.counters.conflict_rejections += 1;
        }
        for &tip in view.tips().iter().rev() {
            let single = TipPair::new(tip, tip);
            if selector_conflict_free(view, single, issuing, &mut self.scratch) {
                return Ok(single);
            }
        }
        Err(Error::NoConflictFreePair(2 * self.conflict_redraws))
    }
}

/// `first` followed by up to `limit - 1` further pairs of distinct tips, in
/// decreasing order of summed exit probability.
fn ranked_pairs(dist: &ExitDistribution, first: TipPair, limit: usize) -> Vec<TipPair> {
    let mut ranked: Vec<(VertexId, f64)> = dist.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(limit + 1);
    let mut pairs: Vec<(f64, TipPair)> = Vec::new();
    for (i, &(a, pa)) in ranked.iter().enumerate() {
        for &(b, pb) in &ranked[i + 1..] {
            let pair = TipPair::new(a, b);
            if pair != first && TipPair::new(b, a) != first {
                pairs.push((pa + pb, pair));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    std::iter::once(first).chain(pairs.into_iter().map(|p| p.1)).take(limit.max(1)).collect()
}
