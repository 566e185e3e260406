//! Flat `key = value` experiment files.
//!
//! One pair per line, `#` starts a comment, unknown keys are rejected.
//! [`ExperimentSpec::to_manifest`] writes a file that parses back to the same
//! spec.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::sim::SimConfig;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key {key:?} set twice")]
    Duplicate { line: usize, key: String },

    #[error("{key}: cannot parse {value:?} as {expected}")]
    BadValue { key: String, value: String, expected: &'static str },

    #[error("{key} = {value} is out of range, requires {bound}")]
    OutOfRange { key: &'static str, value: String, bound: &'static str },

    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<&'static str>),

    #[error("set at most one of p_greedy and theta")]
    Conflicting,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// One simulation with full per-transaction output.
    #[default]
    Single,
    /// Cost curves over a `p` grid and the equilibrium report.
    Sweep,
    /// Approval-time distribution over replicas.
    Cdf,
    /// Mean unconfirmed count against its queueing prediction.
    Little,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Single => "single",
            Mode::Sweep => "sweep",
            Mode::Cdf => "cdf",
            Mode::Little => "little",
        })
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "single" => Ok(Mode::Single),
            "sweep" => Ok(Mode::Sweep),
            "cdf" => Ok(Mode::Cdf),
            "little" => Ok(Mode::Little),
            _ => Err(ConfigError::BadValue {
                key: "mode".into(),
                value: s.into(),
                expected: "one of single, sweep, cdf, little",
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub sim: SimConfig,
    /// Values of `p` visited by a sweep.
    pub p_grid: Vec<f64>,
    pub replicas: usize,
    /// Selfish fractions for which the equilibrium mixture is reported.
    pub gammas: Vec<f64>,
    /// Number of selfish-capable nodes; sets the deviation step `gamma / N`.
    pub n_nodes: usize,
    pub out: Option<PathBuf>,
}

pub const REQUIRED_KEYS: [&str; 6] = ["lambda", "q", "h", "alpha", "M0", "T_end"];

pub const OPTIONAL_KEYS: [&str; 15] = [
    "mode",
    "p_greedy",
    "theta",
    "gamma",
    "K_reattach",
    "warmup",
    "seed",
    "solver_cap",
    "dense_cap",
    "mc_samples",
    "p_grid",
    "replicas",
    "gammas",
    "N",
    "out",
];

/// Ten equispaced points in `[0.02, 0.5]` plus the `p = 0` baseline.
pub fn default_p_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..10).map(|i| 0.02 + 0.48 * i as f64 / 9.0));
    grid
}

impl ExperimentSpec {
    pub fn new(sim: SimConfig) -> Self {
        ExperimentSpec {
            mode: Mode::Single,
            sim,
            p_grid: default_p_grid(),
            replicas: 5,
            gammas: vec![0.1, 0.25, 0.5, 1.0],
            n_nodes: 100,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        let p_ok = !self.p_grid.is_empty()
            && self.p_grid.iter().all(|p| (0.0..=1.0).contains(p))
            && self.p_grid.windows(2).all(|w| w[0] < w[1]);
        if !p_ok {
            return Err(ConfigError::OutOfRange {
                key: "p_grid",
                value: join(&self.p_grid),
                bound: "strictly increasing values in [0, 1]",
            });
        }
        if self.replicas == 0 {
            return Err(ConfigError::OutOfRange { key: "replicas", value: "0".into(), bound: "replicas >= 1" });
        }
        if self.gammas.is_empty() || !self.gammas.iter().all(|g| *g > 0.0 && *g <= 1.0) {
            return Err(ConfigError::OutOfRange {
                key: "gammas",
                value: join(&self.gammas),
                bound: "non-empty list of values in (0, 1]",
            });
        }
        if self.n_nodes == 0 {
            return Err(ConfigError::OutOfRange { key: "N", value: "0".into(), bound: "N >= 1" });
        }
        Ok(())
    }

    /// The resolved spec in the input format, one key per line.
    pub fn to_manifest(&self) -> String {
        use fmt::Write;
        let s = &self.sim;
        let mut m = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| writeln!(m, "{k} = {v}").unwrap();
        put("mode", &self.mode);
        put("lambda", &s.lambda);
        put("q", &s.q);
        put("h", &s.h);
        put("alpha", &s.alpha);
        put("M0", &s.m0);
        put("T_end", &s.t_end);
        put("warmup", &s.warmup);
        put("K_reattach", &s.k_reattach);
        put("p_greedy", &s.p_greedy);
        put("gamma", &s.gamma);
        put("seed", &s.seed);
        put("solver_cap", &s.solver_cap);
        put("dense_cap", &s.dense_cap);
        put("mc_samples", &s.mc_samples);
        put("p_grid", &join(&self.p_grid));
        put("replicas", &self.replicas);
        put("gammas", &join(&self.gammas));
        put("N", &self.n_nodes);
        if let Some(out) = &self.out {
            put("out", &out.display());
        }
        m
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_num<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into(), expected })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse_num(key, value, "a number")?;
    if x.is_nan() {
        return Err(ConfigError::BadValue { key: key.into(), value: value.into(), expected: "a number" });
    }
    Ok(x)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|x| parse_f64(key, x.trim())).collect()
}

/// Parses and validates an experiment file.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) =
            body.split_once('=').ok_or_else(|| ConfigError::Syntax { line, text: raw.into() })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, text: raw.into() });
        }
        if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if pairs.iter().any(|(_, k, _)| *k == key) {
            return Err(ConfigError::Duplicate { line, key: key.into() });
        }
        pairs.push((line, key, value));
    }
    let get = |k: &str| pairs.iter().find(|(_, key, _)| *key == k).map(|(_, _, v)| *v);

    // Bounds that hold for a key on its own are reported before missing keys.
    let single_key_bounds: [(&'static str, fn(f64) -> bool, &'static str); 6] = [
        ("lambda", |x| x > 0.0 && x.is_finite(), "0 < lambda < inf"),
        ("q", |x| (0.0..0.5).contains(&x), "0 <= q < 1/2"),
        ("h", |x| x >= 0.0 && x.is_finite(), "h >= 0"),
        ("alpha", |x| x >= 0.0, "alpha >= 0"),
        ("M0", |x| x >= 1.0, "M0 >= 1"),
        ("T_end", |x| x > 0.0 && x.is_finite(), "T_end > 0"),
    ];
    for (key, ok, bound) in single_key_bounds {
        if let Some(v) = get(key) {
            if !ok(parse_f64(key, v)?) {
                return Err(ConfigError::OutOfRange { key, value: v.into(), bound });
            }
        }
    }

    let missing: Vec<&'static str> = REQUIRED_KEYS.iter().copied().filter(|k| get(k).is_none()).collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }
    let req = |k: &str| parse_f64(k, get(k).unwrap());

    let lambda = req("lambda")?;
    let alpha = req("alpha")?;
    let mut sim = SimConfig::new(lambda, alpha);
    sim.q = req("q")?;
    sim.h = req("h")?;
    sim.m0 = parse_num("M0", get("M0").unwrap(), "a non-negative integer")?;
    sim.t_end = req("T_end")?;
    sim.warmup = match get("warmup") {
        Some(v) => parse_f64("warmup", v)?,
        None => sim.t_end / 4.0,
    };
    if let Some(v) = get("K_reattach") {
        sim.k_reattach = parse_f64("K_reattach", v)?;
    }
    if let Some(v) = get("gamma") {
        sim.gamma = parse_f64("gamma", v)?;
    }
    sim.p_greedy = match (get("p_greedy"), get("theta")) {
        (Some(_), Some(_)) => return Err(ConfigError::Conflicting),
        (Some(v), None) => parse_f64("p_greedy", v)?,
        (None, Some(v)) => {
            let theta = parse_f64("theta", v)?;
            if !(0.0..=1.0).contains(&theta) {
                return Err(ConfigError::OutOfRange { key: "theta", value: v.into(), bound: "0 <= theta <= 1" });
            }
            sim.gamma * theta
        }
        (None, None) => 0.0,
    };
    if let Some(v) = get("seed") {
        sim.seed = parse_num("seed", v, "an unsigned 64-bit integer")?;
    }
    if let Some(v) = get("solver_cap") {
        sim.solver_cap = parse_num("solver_cap", v, "a non-negative integer")?;
    }
    if let Some(v) = get("dense_cap") {
        sim.dense_cap = parse_num("dense_cap", v, "a non-negative integer")?;
    }
    if let Some(v) = get("mc_samples") {
        sim.mc_samples = parse_num("mc_samples", v, "a non-negative integer")?;
    }

    let mut spec = ExperimentSpec::new(sim);
    if let Some(v) = get("mode") {
        spec.mode = v.parse()?;
    }
    if let Some(v) = get("p_grid") {
        spec.p_grid = parse_list("p_grid", v)?;
    }
    if let Some(v) = get("replicas") {
        spec.replicas = parse_num("replicas", v, "a non-negative integer")?;
    }
    if let Some(v) = get("gammas") {
        spec.gammas = parse_list("gammas", v)?;
    }
    if let Some(v) = get("N") {
        spec.n_nodes = parse_num("N", v, "a non-negative integer")?;
    }
    if let Some(v) = get("out") {
        spec.out = Some(PathBuf::from(v));
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "lambda = 25\nq = 0.3333333333333333\nh = 1\nalpha = 0.01\nM0 = 250\nT_end = 400\n";

    #[test]
    fn empty_file_lists_every_required_key() {
        match parse_config("").unwrap_err() {
            ConfigError::Missing(keys) => assert_eq!(keys, REQUIRED_KEYS.to_vec()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let spec = parse_config(BASIC).unwrap();
        assert_eq!(spec.mode, Mode::Single);
        assert_eq!(spec.sim.lambda, 25.0);
        assert_eq!(spec.sim.m0, 250);
        assert_eq!(spec.sim.warmup, 100.0);
        assert_eq!(spec.sim.k_reattach, 20.0);
        assert_eq!(spec.sim.p_greedy, 0.0);
        assert_eq!(spec.p_grid.len(), 11);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# experiment\n\n{BASIC}mode = sweep # inline\n");
        assert_eq!(parse_config(&text).unwrap().mode, Mode::Sweep);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config(&format!("{BASIC}lamda = 3\n")).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 7, key: "lamda".into() });
    }

    #[test]
    fn q_bound_is_named() {
        let err = parse_config(&BASIC.replace("q = 0.3333333333333333", "q = 0.5")).unwrap_err();
        assert!(err.to_string().contains("q < 1/2"), "{err}");
        // A lone out-of-range value is reported ahead of the missing keys.
        let err = parse_config("q=0.6").unwrap_err();
        assert!(matches!(err, ConfigError::OutOfRange { key: "q", .. }), "{err}");
        assert!(err.to_string().contains("q < 1/2"), "{err}");
    }

    #[test]
    fn infinite_alpha_and_theta() {
        let text = BASIC.replace("alpha = 0.01", "alpha = inf") + "gamma = 0.5\ntheta = 0.4\n";
        let spec = parse_config(&text).unwrap();
        assert!(spec.sim.alpha.is_infinite());
        assert!((spec.sim.p_greedy - 0.2).abs() < 1e-15);
        let both = format!("{text}p_greedy = 0.2\n");
        assert_eq!(parse_config(&both).unwrap_err(), ConfigError::Conflicting);
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_config("lambda 25"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config(&format!("{BASIC}q = 0.1\n")), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(
            parse_config(&BASIC.replace("M0 = 250", "M0 = -1")),
            Err(ConfigError::OutOfRange { key: "M0", .. })
        ));
        assert!(parse_config(&format!("{BASIC}p_grid = 0.2,0.1\n")).is_err());
        assert!(parse_config(&format!("{BASIC}mode = fast\n")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let text = format!(
            "{BASIC}mode = little\nseed = 18446744073709551615\ngammas = 0.3,1\np_grid = 0,0.1,0.35\nout = runs/a b\n"
        );
        let spec = parse_config(&text).unwrap();
        assert_eq!(parse_config(&spec.to_manifest()).unwrap(), spec);
        let inf = parse_config(&BASIC.replace("alpha = 0.01", "alpha = inf")).unwrap();
        assert_eq!(parse_config(&inf.to_manifest()).unwrap(), inf);
    }
}
