//! Aggregation of simulator output: mean costs per strategy, the
//! approval-time distribution, the unconfirmed-count check against
//! `lambda * K / p`, and the relative cost increase of default transactions.

use crate::error::{Error, Result};
use crate::sim::{SeriesPoint, SimOutput};
use crate::strategy::StrategyLabel;

/// One row of `transactions.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TxRow {
    pub logical_id: u32,
    pub strategy: StrategyLabel,
    pub issue_time: f64,
    pub first_approval_time: Option<f64>,
    /// Probe misses out of `m0`, absent when the probes did not complete.
    pub w: Option<u32>,
    pub reissues: u32,
}

/// The parts of a run the metrics need, whether it came from memory or from
/// CSV files plus a manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct RunData {
    pub lambda: f64,
    pub k_reattach: f64,
    pub m0: usize,
    pub warmup: f64,
    pub t_end: f64,
    pub p_greedy: f64,
    pub rows: Vec<TxRow>,
    pub unconfirmed: Vec<SeriesPoint>,
}

impl RunData {
    pub fn from_output(out: &SimOutput) -> Self {
        let c = &out.config;
        let rows = out
            .records
            .iter()
            .map(|r| TxRow {
                logical_id: r.logical_id.0,
                strategy: r.strategy,
                issue_time: r.issue_time(),
                first_approval_time: r.first_approval_time,
                w: r.cost_count(c.m0),
                reissues: r.reissues() as u32,
            })
            .collect();
        RunData {
            lambda: c.lambda,
            k_reattach: c.k_reattach,
            m0: c.m0,
            warmup: c.warmup,
            t_end: c.t_end,
            p_greedy: c.p_greedy,
            rows,
            unconfirmed: out.unconfirmed_series.clone(),
        }
    }

    /// Normalized costs `W / M0` of post-warmup, probe-complete rows with the
    /// given label.
    pub fn costs(&self, label: StrategyLabel) -> impl Iterator<Item = f64> + '_ {
        let m0 = self.m0 as f64;
        self.rows
            .iter()
            .filter(move |r| r.strategy == label && r.issue_time >= self.warmup)
            .filter_map(move |r| r.w.map(|w| w as f64 / m0))
    }
}

/// Mean normalized cost and its standard error for one strategy label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelCost {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSummary {
    pub p_greedy: f64,
    /// Absent when no eligible record carries the label.
    pub s0: Option<LabelCost>,
    pub s1: Option<LabelCost>,
}

impl CostSummary {
    pub fn label(&self, label: StrategyLabel) -> Option<LabelCost> {
        match label {
            StrategyLabel::S0 => self.s0,
            StrategyLabel::S1 => self.s1,
        }
    }
}

/// Pooled mean of `W / M0` per label across replicas. With two or more
/// replicas contributing, the standard error comes from the spread of the
/// replica means; a single replica falls back to the per-record spread.
pub fn mean_costs(runs: &[RunData]) -> Result<CostSummary> {
    let first = runs.first().ok_or(Error::Undefined("mean cost of zero runs"))?;
    Ok(CostSummary {
        p_greedy: first.p_greedy,
        s0: label_cost(runs, StrategyLabel::S0),
        s1: label_cost(runs, StrategyLabel::S1),
    })
}

fn label_cost(runs: &[RunData], label: StrategyLabel) -> Option<LabelCost> {
    let per_run: Vec<(f64, usize)> = runs
        .iter()
        .map(|r| r.costs(label).fold((0.0, 0), |(s, n), c| (s + c, n + 1)))
        .collect();
    let n: usize = per_run.iter().map(|x| x.1).sum();
    if n == 0 {
        return None;
    }
    let mean = per_run.iter().map(|x| x.0).sum::<f64>() / n as f64;
    let replica_means: Vec<f64> = per_run.iter().filter(|x| x.1 > 0).map(|x| x.0 / x.1 as f64).collect();
    let se = if replica_means.len() >= 2 {
        standard_error(&replica_means)
    } else {
        let all: Vec<f64> = runs.iter().flat_map(|r| r.costs(label)).collect();
        standard_error(&all)
    };
    Some(LabelCost { mean, se, n })
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdfPoint {
    pub t: f64,
    /// Fraction of eligible transactions approved within `t` of issue.
    pub all: f64,
    /// The same fraction among eligible transactions that were approved.
    pub approved: f64,
}

/// Empirical distribution of the delay from issue to first approval, over
/// transactions never reissued. Only post-warmup transactions whose first
/// reattachment deadline fell inside the run are counted, so every counted
/// transaction had a full `K` seconds to be approved.
pub fn approval_cdf(runs: &[RunData], grid: &[f64]) -> Result<Vec<CdfPoint>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("CDF grid must be strictly increasing".into()));
    }
    let mut delays: Vec<Option<f64>> = Vec::new();
    for run in runs {
        delays.extend(
            run.rows
                .iter()
                .filter(|r| r.reissues == 0 && r.issue_time >= run.warmup && r.issue_time + run.k_reattach <= run.t_end)
                .map(|r| r.first_approval_time.map(|a| a - r.issue_time)),
        );
    }
    if delays.is_empty() {
        return Err(Error::Undefined("approval CDF without eligible transactions"));
    }
    let mut approved: Vec<f64> = delays.iter().flatten().copied().collect();
    approved.sort_by(f64::total_cmp);
    let total = delays.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let within = approved.partition_point(|&d| d <= t) as f64;
            CdfPoint {
                t,
                all: within / total,
                approved: if approved.is_empty() { 0.0 } else { within / approved.len() as f64 },
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LittleCheck {
    /// Fraction of transactions found referenced at their first deadline.
    pub p: f64,
    /// Time-averaged number of unconfirmed transactions after warmup.
    pub observed: f64,
    /// `lambda * K / p`.
    pub predicted: f64,
    pub ratio: f64,
}

/// Compares the mean unconfirmed count with `lambda * K / p`, where `p` is
/// measured in the runs. A transaction whose first deadline fell inside the
/// run and that was never reissued passed its first check.
pub fn little_check(runs: &[RunData]) -> Result<LittleCheck> {
    let (mut checked, mut passed) = (0usize, 0usize);
    let mut observed = Vec::with_capacity(runs.len());
    for run in runs {
        let last = run.unconfirmed.last().map_or(run.t_end, |s| s.time);
        for r in run.rows.iter().filter(|r| r.issue_time >= run.warmup && r.issue_time + run.k_reattach < last) {
            checked += 1;
            passed += (r.reissues == 0) as usize;
        }
        let samples: Vec<f64> =
            run.unconfirmed.iter().filter(|s| s.time >= run.warmup).map(|s| s.value as f64).collect();
        if !samples.is_empty() {
            observed.push(samples.iter().sum::<f64>() / samples.len() as f64);
        }
    }
    if checked == 0 || observed.is_empty() {
        return Err(Error::Undefined("no checked transactions after warmup"));
    }
    if passed == 0 {
        return Err(Error::Undefined("prediction with p = 0"));
    }
    let run = &runs[0];
    let p = passed as f64 / checked as f64;
    let observed = observed.iter().sum::<f64>() / observed.len() as f64;
    let predicted = run.lambda * run.k_reattach / p;
    Ok(LittleCheck { p, observed, predicted, ratio: observed / predicted })
}

/// `(W(p) - W(0)) / W(0)` for the default strategy's mean cost.
pub fn relative_cost_increase(cost_at_p: f64, cost_at_zero: f64) -> Result<f64> {
    if cost_at_zero <= 0.0 {
        return Err(Error::Undefined("relative cost increase with zero baseline cost"));
    }
    Ok((cost_at_p - cost_at_zero) / cost_at_zero)
}


#[cfg(test)]
mod tests {
    use super::fixtures::{row, run_with};
    use super::*;
    use StrategyLabel::{S0, S1};

    #[test]
    fn cost_extremes_and_arithmetic() {
        let zero = run_with(vec![row(0, S0, 1.0, Some(0)), row(1, S0, 2.0, Some(0))], 10);
        assert_eq!(mean_costs(&[zero]).unwrap().s0.unwrap().mean, 0.0);
        let one = run_with(vec![row(0, S1, 1.0, Some(10)), row(1, S1, 2.0, Some(10))], 10);
        assert_eq!(mean_costs(&[one]).unwrap().s1.unwrap().mean, 1.0);
        let mixed = run_with(vec![row(0, S0, 1.0, Some(100)), row(1, S0, 2.0, Some(150))], 500);
        let s = mean_costs(&[mixed]).unwrap();
        assert!((s.s0.unwrap().mean - 0.25).abs() < 1e-15);
        assert!(s.s1.is_none());
    }

    #[test]
    fn incomplete_and_warmup_rows_are_skipped() {
        let mut run = run_with(vec![row(0, S0, 1.0, Some(4)), row(1, S0, 5.0, None), row(2, S0, 9.0, Some(8))], 10);
        run.warmup = 2.0;
        let s = mean_costs(&[run]).unwrap().s0.unwrap();
        assert_eq!(s.n, 1);
        assert!((s.mean - 0.8).abs() < 1e-15);
    }

    #[test]
    fn replica_standard_error() {
        let a = run_with(vec![row(0, S0, 1.0, Some(2))], 10);
        let b = run_with(vec![row(0, S0, 1.0, Some(4))], 10);
        let s = mean_costs(&[a, b]).unwrap().s0.unwrap();
        // Replica means 0.2 and 0.4: sample sd 0.1414..., se = sd / sqrt(2) = 0.1.
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert!((s.se - 0.1).abs() < 1e-12);
    }

    #[test]
    fn no_runs_is_an_error() {
        assert!(mean_costs(&[]).is_err());
    }

    #[test]
    fn cdf_edges() {
        let mut rows: Vec<TxRow> = (0..4).map(|i| row(i, S0, 10.0 + i as f64, None)).collect();
        for (r, d) in rows.iter_mut().zip([0.5, 1.5, 2.5]) {
            r.first_approval_time = Some(r.issue_time + d);
        }
        rows[3].first_approval_time = None;
        let run = run_with(rows, 10);
        let cdf = approval_cdf(&[run], &[0.0, 1.0, 2.0, 100.0]).unwrap();
        assert_eq!(cdf[0].all, 0.0);
        assert_eq!(cdf[1].all, 0.25);
        assert_eq!(cdf[2].all, 0.5);
        assert_eq!(cdf[3].all, 0.75);
        assert_eq!(cdf[3].approved, 1.0);
        assert!(approval_cdf(&[], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn cdf_skips_reissued_and_late_rows() {
        let mut rows = vec![row(0, S0, 10.0, None), row(1, S0, 995.0, None), row(2, S0, 20.0, None)];
        rows[0].reissues = 1;
        rows[2].first_approval_time = Some(21.0);
        let cdf = approval_cdf(&[run_with(rows, 10)], &[0.5, 2.0]).unwrap();
        assert_eq!((cdf[0].all, cdf[1].all), (0.0, 1.0));
    }

    #[test]
    fn little_constant_series() {
        // Five of ten checked transactions passed, so p = 0.5 and the
        // prediction is lambda * K / p = 2 * 20 / 0.5 = 80.
        let mut rows: Vec<TxRow> = (0..10).map(|i| row(i, S0, i as f64, Some(0))).collect();
        for r in rows.iter_mut().take(5) {
            r.reissues = 2;
        }
        let mut run = run_with(rows, 10);
        run.lambda = 2.0;
        run.unconfirmed = (0..100).map(|i| SeriesPoint { time: i as f64, value: 60 }).collect();
        let c = little_check(&[run]).unwrap();
        assert_eq!(c.p, 0.5);
        assert!((c.predicted - 80.0).abs() < 1e-12);
        assert!((c.ratio - 0.75).abs() < 1e-12);
    }

    #[test]
    fn little_with_certain_confirmation() {
        let rows: Vec<TxRow> = (0..10).map(|i| row(i, S0, i as f64, Some(0))).collect();
        let mut run = run_with(rows, 10);
        run.unconfirmed = (0..100).map(|i| SeriesPoint { time: i as f64, value: 20 }).collect();
        let c = little_check(&[run]).unwrap();
        assert_eq!((c.p, c.predicted, c.ratio), (1.0, 20.0, 1.0));
    }

    #[test]
    fn little_undefined_when_nothing_passes() {
        let mut rows: Vec<TxRow> = (0..3).map(|i| row(i, S0, i as f64, None)).collect();
        rows.iter_mut().for_each(|r| r.reissues = 1);
        let mut run = run_with(rows, 10);
        run.unconfirmed = vec![SeriesPoint { time: 50.0, value: 3 }];
        assert!(matches!(little_check(&[run]), Err(Error::Undefined(_))));
    }

    #[test]
    fn relative_increase_cases() {
        assert_eq!(relative_cost_increase(0.4, 0.4).unwrap(), 0.0);
        assert!((relative_cost_increase(0.5, 0.4).unwrap() - 0.25).abs() < 1e-15);
        assert!(relative_cost_increase(0.3, 0.4).unwrap() < 0.0);
        assert!(relative_cost_increase(0.3, 0.0).is_err());
    }
}
