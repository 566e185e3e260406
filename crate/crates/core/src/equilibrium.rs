//! The one-dimensional strategy game: sweep the greedy fraction `p`, fit
//! degree-4 least-squares curves to the per-strategy mean costs, locate where
//! they cross, classify the crossing and derive the equilibrium mixture
//! `theta0` for each selfish fraction `gamma`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{mean_costs, CostSummary, RunData};
use crate::sim::{run, SimConfig};
use crate::strategy::StrategyLabel;

/// Degree of the least-squares cost fits.
pub const FIT_DEGREE: usize = 4;
/// Steps of the sign scan before bisection.
pub const SCAN_STEPS: usize = 1000;
/// Width to which bracketed roots are bisected.
pub const ROOT_TOLERANCE: f64 = 1e-6;

/// A polynomial in `(x - center) / half_width`, which keeps the
/// least-squares system well conditioned on short intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    /// Coefficients, constant term first.
    pub coeffs: Vec<f64>,
    pub center: f64,
    pub half_width: f64,
}

impl Poly {
    /// Least-squares fit of degree `min(degree, points - 1)`.
    pub fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Poly> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::Undefined("polynomial fit needs matching, non-empty samples"));
        }
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (lo + hi);
        let half_width = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        let d = degree.min(xs.len() - 1);
        let a = DMatrix::from_fn(xs.len(), d + 1, |i, j| ((xs[i] - center) / half_width).powi(j as i32));
        let b = DVector::from_column_slice(ys);
        let c = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Solver(format!("least-squares fit: {e}")))?;
        Ok(Poly { coeffs: c.iter().copied().collect(), center, half_width })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// A fitted cost curve with the interval it was fitted on.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub poly: Poly,
    pub lo: f64,
    pub hi: f64,
    pub max_residual: f64,
}

impl Fit {
    fn new(xs: &[f64], ys: &[f64]) -> Result<Fit> {
        let poly = Poly::fit(xs, ys, FIT_DEGREE)?;
        let max_residual = xs.iter().zip(ys).map(|(&x, &y)| (poly.eval(x) - y).abs()).fold(0.0, f64::max);
        Ok(Fit { lo: xs[0], hi: xs[xs.len() - 1], poly, max_residual })
    }
}

/// Per-point mean costs over a grid of `p` and their fitted curves.
#[derive(Clone, Debug, PartialEq)]
pub struct CostCurves {
    pub points: Vec<CostSummary>,
    pub s0: Option<Fit>,
    pub s1: Option<Fit>,
}

impl CostCurves {
    /// Fits both labels on the points where they have samples. The grid must
    /// lie in `[0, 1]` and increase strictly.
    pub fn fit(points: Vec<CostSummary>) -> Result<CostCurves> {
        let grid: Vec<f64> = points.iter().map(|s| s.p_greedy).collect();
        validate_grid(&grid)?;
        let fit_label = |label| -> Result<Option<Fit>> {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                points.iter().filter_map(|s| s.label(label).map(|c| (s.p_greedy, c.mean))).unzip();
            if xs.is_empty() {
                Ok(None)
            } else {
                Fit::new(&xs, &ys).map(Some)
            }
        };
        let s0 = fit_label(StrategyLabel::S0)?;
        let s1 = fit_label(StrategyLabel::S1)?;
        Ok(CostCurves { points, s0, s1 })
    }

    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|s| s.p_greedy).collect()
    }

    /// Fitted `cost_S1 - cost_S0` and the interval where both fits hold,
    /// intersected with `[0, 1]`.
    fn difference(&self) -> Option<(impl Fn(f64) -> f64 + '_, f64, f64)> {
        let (s0, s1) = (self.s0.as_ref()?, self.s1.as_ref()?);
        let lo = s0.lo.max(s1.lo).max(0.0);
        let hi = s0.hi.min(s1.hi).min(1.0);
        (lo <= hi).then_some((move |p| s1.poly.eval(p) - s0.poly.eval(p), lo, hi))
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParams("empty p grid".into()));
    }
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParams("p grid must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("p grid must increase strictly".into()));
    }
    Ok(())
}

/// Where the fitted cost curves cross.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Crossing {
    /// Smallest interior root of the fitted difference.
    pub p_bar: Option<f64>,
    /// Every root found by the scan, ascending.
    pub roots: Vec<f64>,
    /// First crossing of the raw means, by linear interpolation between grid
    /// points.
    pub raw: Option<f64>,
    /// Interval searched: where both fits hold, within `[0, 1]`.
    pub domain: Option<(f64, f64)>,
}

/// Roots of `cost_S1 - cost_S0` from a sign scan of the fitted curves over the
/// interval both fits cover, each bisected to [`ROOT_TOLERANCE`]. Only roots
/// strictly inside `(0, 1)` count.
pub fn find_crossing(curves: &CostCurves) -> Crossing {
    let raw = raw_crossing(&curves.points);
    let Some((diff, lo, hi)) = curves.difference() else {
        return Crossing { raw, ..Default::default() };
    };
    let mut roots = Vec::new();
    let steps = if hi > lo { SCAN_STEPS } else { 0 };
    let at = |i: usize| lo + (hi - lo) * i as f64 / SCAN_STEPS as f64;
    let mut prev = (at(0), diff(at(0)));
    if prev.1 == 0.0 {
        roots.push(prev.0);
    }
    for i in 1..=steps {
        let cur = (at(i), diff(at(i)));
        if cur.1 == 0.0 {
            roots.push(cur.0);
        } else if prev.1 != 0.0 && prev.1.signum() != cur.1.signum() {
            roots.push(bisect(&diff, prev.0, cur.0));
        }
        prev = cur;
    }
    roots.retain(|&r| r > 0.0 && r < 1.0);
    Crossing { p_bar: roots.first().copied(), roots, raw, domain: Some((lo, hi)) }
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_sign = f(a).signum();
    while b - a > ROOT_TOLERANCE {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa_sign {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn raw_crossing(points: &[CostSummary]) -> Option<f64> {
    let diffs: Vec<(f64, f64)> =
        points.iter().filter_map(|s| Some((s.p_greedy, s.s1?.mean - s.s0?.mean))).collect();
    if let Some(&(p, _)) = diffs.iter().find(|d| d.1 == 0.0) {
        return Some(p);
    }
    diffs.windows(2).find(|w| w[0].1.signum() != w[1].1.signum()).map(|w| {
        let ((p0, d0), (p1, d1)) = (w[0], w[1]);
        p0 + (p1 - p0) * d0 / (d0 - d1)
    })
}

/// Outcome of the one-node deviation test at a crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stability {
    pub stable: bool,
    pub p_minus: f64,
    pub p_plus: f64,
    /// A deviation point fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
    /// The difference does not change across the deviation points.
    pub degenerate: bool,
    /// Fitted `cost_S1 - cost_S0` at `p_minus` and `p_plus`.
    pub diff_minus: f64,
    pub diff_plus: f64,
    /// Cost change of a default node switching to greedy:
    /// `cost_S1(p_plus) - cost_S0(p_bar)`.
    pub switch_to_greedy: f64,
    /// Cost change of a greedy node switching to default:
    /// `cost_S0(p_minus) - cost_S1(p_bar)`.
    pub switch_to_default: f64,
}

/// Classifies the crossing at `p_bar` using the deviation step `gamma / n`.
/// The crossing is stable when `cost_S1 - cost_S0` goes from negative at
/// `p_minus` to positive at `p_plus`: below `p_bar` greedy is cheaper, above
/// it default is, so the population is pushed back to `p_bar` from both
/// sides. The cost changes of the two single-node switches are reported
/// alongside.
pub fn classify_stability(curves: &CostCurves, p_bar: f64, gamma: f64, n: usize) -> Result<Stability> {
    let (s0, s1) = match (&curves.s0, &curves.s1) {
        (Some(a), Some(b)) => (&a.poly, &b.poly),
        _ => return Err(Error::Undefined("stability without both cost fits")),
    };
    if !(gamma > 0.0 && gamma <= 1.0) || n == 0 {
        return Err(Error::InvalidParams("stability needs 0 < gamma <= 1 and N >= 1".into()));
    }
    let step = gamma / n as f64;
    let (raw_minus, raw_plus) = (p_bar - step, p_bar + step);
    let (p_minus, p_plus) = (raw_minus.clamp(0.0, 1.0), raw_plus.clamp(0.0, 1.0));
    let diff = |p: f64| s1.eval(p) - s0.eval(p);
    let (diff_minus, diff_plus) = (diff(p_minus), diff(p_plus));
    let degenerate = (diff_plus - diff_minus).abs() <= 1e-12;
    Ok(Stability {
        stable: !degenerate && diff_minus <= 0.0 && diff_plus >= 0.0,
        p_minus,
        p_plus,
        clamped: p_minus != raw_minus || p_plus != raw_plus,
        degenerate,
        diff_minus,
        diff_plus,
        switch_to_greedy: s1.eval(p_plus) - s0.eval(p_bar),
        switch_to_default: s0.eval(p_minus) - s1.eval(p_bar),
    })
}

/// `min(p_bar / gamma, 1)`.
pub fn theta0(p_bar: f64, gamma: f64) -> f64 {
    (p_bar / gamma).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Some selfish nodes issue greedily and the rest by default.
    Interior,
    /// Every selfish node issues greedily, `p = gamma`.
    AllGreedy,
    /// Every selfish node issues by default, `p = 0`.
    AllDefault,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Interior => "interior",
            Regime::AllGreedy => "all_greedy",
            Regime::AllDefault => "all_default",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaReport {
    pub gamma: f64,
    pub regime: Regime,
    pub theta0: f64,
    pub stability: Option<Stability>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumReport {
    pub crossing: Crossing,
    pub per_gamma: Vec<GammaReport>,
}

/// Equilibrium regime and mixture for each selfish fraction.
///
/// With a stable crossing the mixture is `min(p_bar / gamma, 1)`, interior
/// when `p_bar < gamma`. Without one, whichever strategy is cheaper over the
/// searched interval takes over; for an unstable crossing that is the
/// strategy cheaper at the top of the interval.
pub fn analyze(curves: &CostCurves, gammas: &[f64], n: usize) -> Result<EquilibriumReport> {
    let crossing = find_crossing(curves);
    let Some((diff, lo, hi)) = curves.difference() else {
        return Err(Error::Undefined("equilibrium without both cost fits"));
    };
    let greedy_cheaper_at_top = diff(hi) < 0.0;
    let greedy_cheaper_overall = (0..=SCAN_STEPS).map(|i| diff(lo + (hi - lo) * i as f64 / SCAN_STEPS as f64)).sum::<f64>() < 0.0;
    let mut per_gamma = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let stability = crossing.p_bar.map(|p| classify_stability(curves, p, gamma, n)).transpose()?;
        let (regime, theta) = match (crossing.p_bar, stability) {
            (Some(p), Some(s)) if s.stable => {
                let t = theta0(p, gamma);
                (if t < 1.0 { Regime::Interior } else { Regime::AllGreedy }, t)
            }
            (Some(_), _) if greedy_cheaper_at_top => (Regime::AllGreedy, 1.0),
            (Some(_), _) => (Regime::AllDefault, 0.0),
            (None, _) if greedy_cheaper_overall => (Regime::AllGreedy, 1.0),
            (None, _) => (Regime::AllDefault, 0.0),
        };
        per_gamma.push(GammaReport { gamma, regime, theta0: theta, stability });
    }
    Ok(EquilibriumReport { crossing, per_gamma })
}

/// One grid point of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub summary: CostSummary,
    pub runs: Vec<RunData>,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    pub curves: CostCurves,
}

/// A sweep stopped by a failed run, with every grid point whose replicas all
/// completed.
#[derive(Debug, thiserror::Error)]
#[error("sweep failed at p = {p}, replica {replica}: {source}")]
pub struct SweepFailure {
    pub p: f64,
    pub replica: usize,
    pub source: Error,
    pub completed: Vec<SweepPoint>,
}

/// Seed of replica `r` derived from the base seed by a SplitMix64 step.
/// Replica `r` uses the same seed at every grid point.
pub fn replica_seed(base: u64, replica: usize) -> u64 {
    let mut z = base.wrapping_add((replica as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `replicas` independent simulations of `config` in parallel, with
/// seeds derived from `config.seed`.
pub fn replicate(config: &SimConfig, replicas: usize) -> Result<Vec<RunData>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let c = SimConfig { seed: replica_seed(config.seed, r), ..config.clone() };
            run(&c).map(|out| RunData::from_output(&out))
        })
        .collect()
}

/// Runs `replicas` simulations at each `p` in the grid, in parallel, and fits
/// the cost curves.
pub fn sweep(base: &SimConfig, grid: &[f64], replicas: usize) -> std::result::Result<Sweep, SweepFailure> {
    let fail = |p, replica, source| SweepFailure { p, replica, source, completed: Vec::new() };
    validate_grid(grid).map_err(|e| fail(f64::NAN, 0, e))?;
    if replicas == 0 {
        return Err(fail(f64::NAN, 0, Error::InvalidParams("replicas must be >= 1".into())));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..replicas).map(move |r| (i, r))).collect();
    let results: Vec<Result<RunData>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let config = SimConfig { p_greedy: grid[i], seed: replica_seed(base.seed, r), ..base.clone() };
            run(&config).map(|out| RunData::from_output(&out))
        })
        .collect();
    let mut points = Vec::with_capacity(grid.len());
    let mut failure = None;
    for (i, chunk) in results.chunks(replicas).enumerate() {
        let mut runs = Vec::with_capacity(replicas);
        for (r, res) in chunk.iter().enumerate() {
            match res {
                Ok(data) => runs.push(data.clone()),
                Err(e) if failure.is_none() => failure = Some((grid[i], r, e.to_string())),
                Err(_) => {}
            }
        }
        if runs.len() == replicas {
            match mean_costs(&runs) {
                Ok(summary) => points.push(SweepPoint { summary, runs }),
                Err(e) => failure = failure.or(Some((grid[i], 0, e.to_string()))),
            }
        }
    }
    if let Some((p, replica, msg)) = failure {
        return Err(SweepFailure { p, replica, source: Error::Solver(msg), completed: points });
    }
    let curves = CostCurves::fit(points.iter().map(|pt| pt.summary).collect())
        .map_err(|e| SweepFailure { p: f64::NAN, replica: 0, source: e, completed: Vec::new() })?;
    Ok(Sweep { points, curves })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::metrics::LabelCost;

    /// Summaries sampled from exact cost curves, with S1 absent at `p = 0`.
    pub fn curves_from(grid: &[f64], s0: impl Fn(f64) -> f64, s1: impl Fn(f64) -> f64) -> CostCurves {
        let cost = |mean| Some(LabelCost { mean, se: 0.0, n: 100 });
        let points = grid
            .iter()
            .map(|&p| CostSummary { p_greedy: p, s0: cost(s0(p)), s1: if p > 0.0 { cost(s1(p)) } else { None } })
            .collect();
        CostCurves::fit(points).unwrap()
    }

    pub fn grid() -> Vec<f64> {
        std::iter::once(0.0).chain((0..10).map(|i| 0.02 + 0.48 * i as f64 / 9.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{curves_from, grid};
    use super::*;

    #[test]
    fn constant_costs_fit_exactly() {
        let c = curves_from(&grid(), |_| 0.4, |_| 0.3);
        let s0 = c.s0.as_ref().unwrap();
        assert!(s0.max_residual < 1e-9);
        assert!((s0.poly.eval(0.77) - 0.4).abs() < 1e-9);
        // S1 is fitted only on the points where it has samples.
        assert_eq!(c.s1.as_ref().unwrap().lo, 0.02);
    }

    #[test]
    fn quartic_is_recovered() {
        let f = |x: f64| 0.1 - 0.3 * x + 2.0 * x.powi(2) - 1.5 * x.powi(3) + 4.0 * x.powi(4);
        let xs: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let p = Poly::fit(&xs, &ys, 4).unwrap();
        assert_eq!(p.degree(), 4);
        for x in [0.0, 0.33, 0.9] {
            assert!((p.eval(x) - f(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn few_points_lower_the_degree() {
        let p = Poly::fit(&[0.1, 0.2], &[1.0, 2.0], 4).unwrap();
        assert_eq!(p.degree(), 1);
        assert!((p.eval(0.3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lines_crossing_at_point_three() {
        let c = curves_from(&grid(), |p| 0.5 - 0.2 * (p - 0.3), |p| 0.5 + 0.4 * (p - 0.3));
        let x = find_crossing(&c);
        assert!((x.p_bar.unwrap() - 0.3).abs() <= 1e-6);
        assert!((x.raw.unwrap() - 0.3).abs() < 1e-9);
        let s = classify_stability(&c, x.p_bar.unwrap(), 1.0, 100).unwrap();
        assert!(s.stable && !s.degenerate && !s.clamped);
        assert!(s.switch_to_greedy > 0.0 && s.switch_to_default > 0.0);
    }

    #[test]
    fn greedy_cheaper_everywhere_has_no_crossing() {
        let c = curves_from(&grid(), |p| 0.5 + 0.1 * p, |p| 0.45 + 0.1 * p);
        let x = find_crossing(&c);
        assert_eq!(x.p_bar, None);
        let report = analyze(&c, &[0.25, 1.0], 100).unwrap();
        assert!(report.per_gamma.iter().all(|g| g.regime == Regime::AllGreedy && g.theta0 == 1.0));
        let c = curves_from(&grid(), |p| 0.45 + 0.1 * p, |p| 0.5 + 0.1 * p);
        let report = analyze(&c, &[0.5], 100).unwrap();
        assert_eq!((report.per_gamma[0].regime, report.per_gamma[0].theta0), (Regime::AllDefault, 0.0));
    }

    #[test]
    fn multiple_roots_smallest_first() {
        // (p - 0.1)(p - 0.25)(p - 0.4) scaled, planted in the S1 - S0 gap.
        let gap = |p: f64| 10.0 * (p - 0.1) * (p - 0.25) * (p - 0.4);
        let c = curves_from(&grid(), |_| 0.5, move |p| 0.5 + gap(p));
        let x = find_crossing(&c);
        assert_eq!(x.roots.len(), 3, "{:?}", x.roots);
        for (r, want) in x.roots.iter().zip([0.1, 0.25, 0.4]) {
            assert!((r - want).abs() <= 1e-6, "{r} vs {want}");
        }
        assert_eq!(x.p_bar, Some(x.roots[0]));
    }

    #[test]
    fn decreasing_difference_is_unstable() {
        let c = curves_from(&grid(), |p| 0.5 + 0.4 * (p - 0.3), |p| 0.5 - 0.2 * (p - 0.3));
        let p_bar = find_crossing(&c).p_bar.unwrap();
        let s = classify_stability(&c, p_bar, 1.0, 100).unwrap();
        assert!(!s.stable);
        assert!(s.switch_to_greedy < 0.0);
        // Greedy is cheaper at the top of the grid, so everyone ends up greedy.
        let r = analyze(&c, &[1.0], 100).unwrap();
        assert_eq!(r.per_gamma[0].regime, Regime::AllGreedy);
    }

    #[test]
    fn flat_difference_is_degenerate() {
        let gap = |p: f64| (p - 0.3).powi(3);
        let c = curves_from(&grid(), |_| 0.5, move |p| 0.5 + gap(p));
        let s = classify_stability(&c, 0.3, 1e-9, 1).unwrap();
        assert!(s.degenerate && !s.stable);
    }

    #[test]
    fn deviation_points_are_clamped() {
        let c = curves_from(&grid(), |p| 0.5 - 0.2 * p, |p| 0.5 + 0.4 * p);
        let s = classify_stability(&c, 0.001, 1.0, 100).unwrap();
        assert!(s.clamped);
        assert_eq!(s.p_minus, 0.0);
    }

    #[test]
    fn theta0_cases() {
        assert!((theta0(0.2, 0.5) - 0.4).abs() < 1e-15);
        assert_eq!(theta0(0.3, 0.25), 1.0);
        assert_eq!(theta0(0.3, 0.3), 1.0);
        assert_eq!(theta0(0.3, 1.0), 0.3);
    }

    #[test]
    fn stable_crossing_theta_per_gamma() {
        let c = curves_from(&grid(), |p| 0.5 - 0.2 * (p - 0.2), |p| 0.5 + 0.4 * (p - 0.2));
        let r = analyze(&c, &[0.1, 0.25, 0.5, 1.0], 100).unwrap();
        let p_bar = r.crossing.p_bar.unwrap();
        let got: Vec<(Regime, f64)> = r.per_gamma.iter().map(|g| (g.regime, g.theta0)).collect();
        assert_eq!(got[0], (Regime::AllGreedy, 1.0));
        assert_eq!(got[1].0, Regime::Interior);
        assert!((got[1].1 - p_bar / 0.25).abs() < 1e-12);
        assert!((got[3].1 - p_bar).abs() < 1e-12);
        let fit = |f: &Option<Fit>| f.as_ref().unwrap().poly.eval(p_bar);
        assert!((fit(&c.s0) - fit(&c.s1)).abs() < 1e-6);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0.0, 0.5, 0.4]).is_err());
        assert!(validate_grid(&[0.0, 1.5]).is_err());
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0.0, 0.5]).is_ok());
    }

    #[test]
    fn replica_seeds_differ() {
        let seeds: Vec<u64> = (0..5).map(|r| replica_seed(7, r)).collect();
        let mut dedup = seeds.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 5);
        assert_eq!(replica_seed(7, 3), seeds[3]);
    }

    #[test]
    fn small_sweep_runs() {
        let base = SimConfig { t_end: 12.0, warmup: 2.0, m0: 10, ..SimConfig::new(5.0, 0.5) };
        let s = sweep(&base, &[0.0, 0.5], 2).unwrap();
        assert_eq!(s.points.len(), 2);
        assert!(s.points[0].summary.s1.is_none());
        assert!(s.points[1].summary.s1.is_some());
        assert_eq!(s.points[1].runs.len(), 2);
    }

    #[test]
    fn failed_sweep_keeps_completed_points() {
        let base = SimConfig { t_end: 12.0, warmup: 2.0, m0: 10, gamma: 0.3, ..SimConfig::new(5.0, 0.5) };
        // p = 0.5 exceeds gamma and fails validation; p = 0.1 completes.
        let err = sweep(&base, &[0.1, 0.5], 1).unwrap_err();
        assert_eq!(err.p, 0.5);
        assert_eq!(err.completed.len(), 1);
    }
}
