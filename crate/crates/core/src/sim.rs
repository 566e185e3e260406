//! Continuous-time event loop: Poisson arrivals attach through delayed views,
//! one shared probe walk per arrival scores every open transaction, and
//! transactions left unreferenced by the heaviest walk after `K` seconds are
//! reissued.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::ConfigError;
use crate::error::Result;
use crate::strategy::{DrawCounters, Selector, StrategyLabel, TipPair};
use crate::tangle::{ConeMarker, LogicalId, Tangle, VertexId, View, ViewTracker};
use crate::walk::{deterministic_walk, sample_walk, ExitSolver, WalkParams};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Arrival rate of new transactions per second, reissues excluded.
    pub lambda: f64,
    /// Network delay: issuers see the tangle as of `now - h`.
    pub h: f64,
    pub q: f64,
    pub alpha: f64,
    /// Fraction of arrivals issued greedily, `p = gamma * theta`.
    pub p_greedy: f64,
    /// Fraction of selfish nodes.
    pub gamma: f64,
    /// Age after which an unreferenced transaction is reissued.
    pub k_reattach: f64,
    /// Number of subsequent probe walks scored per transaction.
    pub m0: usize,
    pub t_end: f64,
    /// Transactions issued before this time are excluded from statistics.
    pub warmup: f64,
    pub seed: u64,
    /// Largest view the greedy strategy solves exactly.
    pub solver_cap: usize,
    /// Largest view solved by dense LU rather than Gauss-Seidel.
    pub dense_cap: usize,
    /// Walks per Monte-Carlo exit estimate above `solver_cap`.
    pub mc_samples: usize,
}

impl SimConfig {
    /// Defaults for the given rate and bias: `q = 1/3`, `h = 1`, `K = 20`,
    /// about ten seconds of probes (`M0 = 10 * lambda`), 400 simulated
    /// seconds with 100 seconds of warmup, no greedy arrivals.
    pub fn new(lambda: f64, alpha: f64) -> Self {
        SimConfig {
            lambda,
            h: 1.0,
            q: 1.0 / 3.0,
            alpha,
            p_greedy: 0.0,
            gamma: 1.0,
            k_reattach: 20.0,
            m0: (10.0 * lambda).round().max(1.0) as usize,
            t_end: 400.0,
            warmup: 100.0,
            seed: 0,
            solver_cap: 50_000,
            dense_cap: 128,
            mc_samples: 200,
        }
    }

    /// Mixture parameter of the selfish nodes, `p / gamma`.
    pub fn theta(&self) -> f64 {
        self.p_greedy / self.gamma
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams { alpha: self.alpha, q: self.q, start: Default::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, key: &'static str, value: impl ToString, bound: &'static str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { key, value: value.to_string(), bound })
            }
        }
        check(self.lambda > 0.0 && self.lambda.is_finite(), "lambda", self.lambda, "0 < lambda < inf")?;
        check(self.h >= 0.0 && self.h.is_finite(), "h", self.h, "h >= 0")?;
        check((0.0..0.5).contains(&self.q), "q", self.q, "0 <= q < 1/2")?;
        check(self.alpha >= 0.0, "alpha", self.alpha, "alpha >= 0")?;
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma", self.gamma, "0 < gamma <= 1")?;
        check((0.0..=1.0).contains(&self.p_greedy), "p_greedy", self.p_greedy, "0 <= p_greedy <= 1")?;
        check(self.p_greedy <= self.gamma, "p_greedy", self.p_greedy, "p_greedy <= gamma")?;
        check(self.k_reattach > 0.0 && self.k_reattach.is_finite(), "K_reattach", self.k_reattach, "K_reattach > 0")?;
        check(self.m0 >= 1, "M0", self.m0, "M0 >= 1")?;
        check(self.t_end > 0.0 && self.t_end.is_finite(), "T_end", self.t_end, "T_end > 0")?;
        check(self.warmup >= 0.0 && self.warmup < self.t_end, "warmup", self.warmup, "0 <= warmup < T_end")?;
        check(self.solver_cap >= 1, "solver_cap", self.solver_cap, "solver_cap >= 1")?;
        check(self.mc_samples >= 1, "mc_samples", self.mc_samples, "mc_samples >= 1")?;
        Ok(())
    }
}

/// Bit-packed R_k indicators: `true` when the probe tip did not reference the
/// transaction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProbeOutcomes {
    bits: Vec<u64>,
    len: u32,
    misses: u32,
}

impl ProbeOutcomes {
    pub fn push(&mut self, missed: bool) {
        let (word, bit) = ((self.len / 64) as usize, self.len % 64);
        if word == self.bits.len() {
            self.bits.push(0);
        }
        if missed {
            self.bits[word] |= 1 << bit;
            self.misses += 1;
        }
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of `true` outcomes so far.
    pub fn misses(&self) -> u32 {
        self.misses
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.bits[(i / 64) as usize] >> (i % 64) & 1 == 1)
    }
}

/// Everything recorded about one logical transaction.
#[derive(Clone, Debug, PartialEq)]
pub struct TxRecord {
    pub logical_id: LogicalId,
    pub issues: Vec<VertexId>,
    pub issue_times: Vec<f64>,
    pub strategy: StrategyLabel,
    /// Earliest time any issue received an approver.
    pub first_approval_time: Option<f64>,
    pub probes: ProbeOutcomes,
    /// Time of the deadline check that found the newest issue referenced.
    pub confirmed_at: Option<f64>,
}

impl TxRecord {
    pub fn issue_time(&self) -> f64 {
        self.issue_times[0]
    }

    pub fn reissues(&self) -> usize {
        self.issues.len() - 1
    }

    pub fn is_confirmed(&self) -> bool {
        self.confirmed_at.is_some()
    }

    /// `W(v)` once all `m0` probes are in.
    pub fn cost_count(&self, m0: usize) -> Option<u32> {
        (self.probes.len() >= m0).then_some(self.probes.misses())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub time: f64,
    pub value: u32,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub config: SimConfig,
    pub tangle: Tangle,
    pub records: Vec<TxRecord>,
    /// Live tip count `L(t)` after each arrival.
    pub tips_series: Vec<SeriesPoint>,
    /// Logical transactions not yet confirmed, after each arrival.
    pub unconfirmed_series: Vec<SeriesPoint>,
    pub counters: DrawCounters,
    pub seed: u64,
}

pub fn run(config: &SimConfig) -> Result<SimOutput> {
    Simulation::new(config.clone())?.run()
}

/// Fraction of `m_walks` heaviest-first walks whose tip references `v`.
pub fn confirmation_confidence<R: Rng + ?Sized>(
    view: &View<'_>,
    v: VertexId,
    m_walks: usize,
    rng: &mut R,
) -> Result<f64> {
    view.cumulative_weight(v)?;
    let mut marker = ConeMarker::new();
    let mut hits = 0usize;
    for _ in 0..m_walks.max(1) {
        let tip = deterministic_walk(view, rng)?;
        marker.mark_past(view.tangle(), &[tip], v);
        hits += marker.is_marked(v) as usize;
    }
    Ok(hits as f64 / m_walks.max(1) as f64)
}

pub struct Simulation {
    config: SimConfig,
    params: WalkParams,
    tangle: Tangle,
    tracker: ViewTracker,
    selector: Selector,
    rng: ChaCha8Rng,
    records: Vec<TxRecord>,
    /// Records before this index have all their probes.
    first_open: usize,
    /// (deadline, logical id) of pending reattachment checks, by deadline.
    pending: VecDeque<(f64, u32)>,
    unconfirmed: u32,
    live_tips: u32,
    marker: ConeMarker,
    tips_series: Vec<SeriesPoint>,
    unconfirmed_series: Vec<SeriesPoint>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let params = config.walk_params();
        let solver = ExitSolver::new(config.dense_cap, config.solver_cap);
        Ok(Simulation {
            params,
            tangle: Tangle::new(),
            tracker: ViewTracker::new(),
            selector: Selector::new(params, solver, config.mc_samples),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            records: Vec::new(),
            first_open: 0,
            pending: VecDeque::new(),
            unconfirmed: 0,
            live_tips: 1,
            marker: ConeMarker::new(),
            tips_series: Vec::new(),
            unconfirmed_series: Vec::new(),
            config,
        })
    }

    pub fn tangle(&self) -> &Tangle {
        &self.tangle
    }

    pub fn records(&self) -> &[TxRecord] {
        &self.records
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// The delayed view at `now`.
    pub fn view_at(&mut self, now: f64) -> View<'_> {
        self.tracker.advance(&self.tangle, now - self.config.h);
        self.tracker.view(&self.tangle)
    }

    pub fn run(mut self) -> Result<SimOutput> {
        let inter_arrival = Exp::new(self.config.lambda).expect("lambda validated positive");
        let mut now = 0.0;
        loop {
            now += inter_arrival.sample(&mut self.rng);
            if now > self.config.t_end {
                break;
            }
            self.arrival(now)?;
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> SimOutput {
        SimOutput {
            seed: self.config.seed,
            config: self.config,
            tangle: self.tangle,
            records: self.records,
            tips_series: self.tips_series,
            unconfirmed_series: self.unconfirmed_series,
            counters: self.selector.counters,
        }
    }

    /// Handles one Poisson arrival at `now`.
    pub fn arrival(&mut self, now: f64) -> Result<VertexId> {
        self.tracker.advance(&self.tangle, now - self.config.h);
        let label = if self.rng.random::<f64>() < self.config.p_greedy {
            StrategyLabel::S1
        } else {
            StrategyLabel::S0
        };
        let pair = {
            let view = self.tracker.view(&self.tangle);
            self.selector.select(&view, label, None, &mut self.rng)?
        };
        let v = self.attach_new(now, pair, label)?;
        self.probe()?;
        self.reattach_check(now)?;
        self.tips_series.push(SeriesPoint { time: now, value: self.live_tips });
        self.unconfirmed_series.push(SeriesPoint { time: now, value: self.unconfirmed });
        Ok(v)
    }

    /// Attaches a new logical transaction at explicit parents and opens its
    /// record. Probing and reattachment are left to the caller.
    pub fn issue_with_parents(&mut self, now: f64, pair: TipPair, label: StrategyLabel) -> Result<VertexId> {
        self.attach_new(now, pair, label)
    }

    fn stamp(&self, now: f64) -> f64 {
        let newest = self.tangle.newest_timestamp();
        if now > newest {
            now
        } else {
            // Same-instant attachments (reissues at an arrival) get the next
            // representable time.
            f64::from_bits(newest.to_bits() + 1)
        }
    }

    fn attach_raw(&mut self, now: f64, pair: TipPair, logical: u32) -> Result<(VertexId, f64)> {
        let ts = self.stamp(now);
        let parents: &[VertexId] =
            if pair.is_distinct() { &[pair.first, pair.second] } else { std::slice::from_ref(&pair.first) };
        let newly_approved: Vec<VertexId> =
            parents.iter().copied().filter(|&p| self.tangle.approvers(p).is_empty()).collect();
        let v = self.tangle.attach(pair.as_tuple(), ts, 0, LogicalId(logical))?;
        self.live_tips = self.live_tips + 1 - newly_approved.len() as u32;
        for p in newly_approved {
            let l = self.tangle.vertex(p).expect("parent exists").logical_id;
            if let Some(rec) = self.records.get_mut(l.0 as usize) {
                rec.first_approval_time.get_or_insert(ts);
            }
        }
        Ok((v, ts))
    }

    fn attach_new(&mut self, now: f64, pair: TipPair, label: StrategyLabel) -> Result<VertexId> {
        let logical = self.records.len() as u32;
        let (v, ts) = self.attach_raw(now, pair, logical)?;
        self.records.push(TxRecord {
            logical_id: LogicalId(logical),
            issues: vec![v],
            issue_times: vec![ts],
            strategy: label,
            first_approval_time: None,
            probes: ProbeOutcomes::default(),
            confirmed_at: None,
        });
        self.pending.push_back((ts + self.config.k_reattach, logical));
        self.unconfirmed += 1;
        Ok(v)
    }

    /// One default walk on the current view scores every open record except
    /// the newest, which was issued at this very arrival.
    fn probe(&mut self) -> Result<()> {
        let open_end = self.records.len().saturating_sub(1);
        if self.first_open >= open_end {
            return Ok(());
        }
        let view = self.tracker.view(&self.tangle);
        let tip = sample_walk(&view, &self.params, &mut self.rng)?;
        let floor = self.records[self.first_open].issues[0];
        self.marker.mark_past(&self.tangle, &[tip], floor);
        let m0 = self.config.m0;
        for rec in &mut self.records[self.first_open..open_end] {
            let referenced = rec.issues.iter().any(|&v| view.contains(v) && self.marker.is_marked(v));
            rec.probes.push(!referenced);
        }
        while self.first_open < open_end && self.records[self.first_open].probes.len() >= m0 {
            self.first_open += 1;
        }
        Ok(())
    }

    /// Reissues every transaction whose newest issue is older than `K` and
    /// none of whose issues is referenced by the tip of a heaviest-first walk
    /// on the delayed view; the others are marked confirmed. Returns the new
    /// vertices.
    pub fn reattach_check(&mut self, now: f64) -> Result<Vec<VertexId>> {
        let mut due = Vec::new();
        while let Some(&(deadline, logical)) = self.pending.front() {
            if deadline >= now {
                break;
            }
            self.pending.pop_front();
            due.push(logical);
        }
        if due.is_empty() {
            return Ok(Vec::new());
        }
        self.tracker.advance(&self.tangle, now - self.config.h);
        let tip = {
            let view = self.tracker.view(&self.tangle);
            deterministic_walk(&view, &mut self.rng)?
        };
        let floor = due.iter().map(|&l| self.records[l as usize].issues[0]).min().unwrap();
        self.marker.mark_past(&self.tangle, &[tip], floor);
        let mut orphaned = Vec::new();
        for l in due {
            let rec = &mut self.records[l as usize];
            // An earlier issue approved late settles the transaction too.
            if rec.issues.iter().any(|&v| self.marker.is_marked(v)) {
                rec.confirmed_at = Some(now);
                self.unconfirmed -= 1;
            } else {
                orphaned.push(l);
            }
        }
        let mut reissued = Vec::with_capacity(orphaned.len());
        for l in orphaned {
            let label = self.records[l as usize].strategy;
            let pair = {
                let view = self.tracker.view(&self.tangle);
                self.selector.select(&view, label, Some(LogicalId(l)), &mut self.rng)?
            };
            let (v, ts) = self.attach_raw(now, pair, l)?;
            let rec = &mut self.records[l as usize];
            rec.issues.push(v);
            rec.issue_times.push(ts);
            self.pending.push_back((ts + self.config.k_reattach, l));
            reissued.push(v);
        }
        Ok(reissued)
    }
}
