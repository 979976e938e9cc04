//! Run configuration as flat `key=value` pairs.
//!
//! The same keys are accepted from command-line flags, from a config file
//! (one pair per line, `#` comments), and from an emitted manifest, so a
//! manifest can be fed back in to reproduce a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::oracles::{ProblemSpec, DEFAULT_TEST_SIZE};
use crate::proximal::ProxOperator;
use crate::solvers::{Algorithm, InitPoint, SolverConfig, StepSchedule};
use crate::topology::{auto_rounds, TopologySpec};

/// Communication rounds per iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rounds {
    /// `⌈1/(1−ρ)⌉`, or `⌈1/√(1−ρ)⌉` with Chebyshev mixing.
    Auto,
    Fixed(usize),
}

impl Rounds {
    pub fn resolve(self, rho: f64, chebyshev: bool) -> usize {
        match self {
            Rounds::Auto => auto_rounds(rho, chebyshev),
            Rounds::Fixed(m) => m,
        }
    }
}

impl std::fmt::Display for Rounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rounds::Auto => f.write_str("auto"),
            Rounds::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for Rounds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Rounds::Auto);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(Rounds::Fixed(m)),
            _ => Err(Error::Usage(format!(
                "bad m '{s}': expected a positive integer or 'auto'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub topology: TopologySpec,
    pub problem: ProblemSpec,
    pub prox: ProxOperator,
    pub gamma: f64,
    pub rounds: Rounds,
    pub chebyshev: bool,
    pub schedule: StepSchedule,
    pub batch: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub test_size: usize,
    pub init: InitPoint,
    pub timing: bool,
    pub check_invariants: bool,
    pub output: PathBuf,
}

pub const KEYS: &[&str] = &[
    "algorithm",
    "topology",
    "problem",
    "prox",
    "gamma",
    "m",
    "chebyshev",
    "schedule",
    "batch",
    "K",
    "seed",
    "eval_every",
    "test_size",
    "init",
    "timing",
    "check_invariants",
    "out",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Usage(format!("bad value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Usage(format!(
            "bad value '{value}' for {key}: expected true/false"
        ))),
    }
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Usage(format!(
                "line {}: expected key=value, got '{line}'",
                lineno + 1
            ))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Combines pair lists. A key given twice with different values is a
/// conflict; unknown keys are rejected.
pub fn merge_pairs(sources: &[Vec<(String, String)>]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for src in sources {
        for (k, v) in src {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Usage(format!("unknown key '{k}'")));
            }
            match map.get(k) {
                Some(prev) if prev != v => {
                    return Err(Error::Usage(format!(
                        "conflicting values for {k}: '{prev}' and '{v}'"
                    )));
                }
                _ => {
                    map.insert(k.clone(), v.clone());
                }
            }
        }
    }
    Ok(map)
}

impl RunConfig {
    /// Builds a fully resolved configuration from merged pairs. `topology`
    /// and `problem` are required; everything else has a default.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Usage(format!("unknown key '{k}'")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let required =
            |k: &str| get(k).ok_or_else(|| Error::Usage(format!("missing required --{k}")));

        let topology: TopologySpec = required("topology")?.parse()?;
        let problem: ProblemSpec = required("problem")?.parse()?;
        let iterations: usize = get("K").map_or(Ok(10_000), |v| parse_value("K", v))?;
        let schedule = match get("schedule") {
            Some(s) => s.parse()?,
            None => StepSchedule::ConstantSqrtNK {
                total: iterations.max(1),
            },
        };
        let init = match get("init") {
            Some("auto") | None => match problem {
                // The origin is a stationary point of phase retrieval where
                // every stochastic gradient vanishes.
                ProblemSpec::Phase { .. } => InitPoint::Gaussian { scale: 1.0 },
                _ => InitPoint::Zero,
            },
            Some(s) => s.parse()?,
        };
        let cfg = RunConfig {
            algorithm: get("algorithm").map_or(Ok(Algorithm::ProxDasa), str::parse)?,
            topology,
            problem,
            prox: get("prox").map_or(Ok(ProxOperator::Zero), str::parse)?,
            gamma: get("gamma").map_or(Ok(1.0), |v| parse_value("gamma", v))?,
            rounds: get("m").map_or(Ok(Rounds::Auto), str::parse)?,
            chebyshev: get("chebyshev").map_or(Ok(false), |v| parse_bool("chebyshev", v))?,
            schedule,
            batch: get("batch").map_or(Ok(1), |v| parse_value("batch", v))?,
            iterations,
            seed: get("seed").map_or(Ok(0), |v| parse_value("seed", v))?,
            eval_every: get("eval_every").map_or(Ok(50), |v| parse_value("eval_every", v))?,
            test_size: get("test_size")
                .map_or(Ok(DEFAULT_TEST_SIZE), |v| parse_value("test_size", v))?,
            init,
            timing: get("timing").map_or(Ok(false), |v| parse_bool("timing", v))?,
            check_invariants: get("check_invariants")
                .map_or(Ok(false), |v| parse_bool("check_invariants", v))?,
            output: PathBuf::from(get("out").unwrap_or("out")),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Usage(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.batch == 0 {
            return Err(Error::Usage("batch must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Usage("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        Self::from_map(&merge_pairs(&[pairs])?)
    }

    /// Parses a config file or manifest.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("algorithm", self.algorithm.to_string()),
            ("topology", self.topology.to_string()),
            ("problem", self.problem.to_string()),
            ("prox", self.prox.to_string()),
            ("gamma", self.gamma.to_string()),
            ("m", self.rounds.to_string()),
            ("chebyshev", self.chebyshev.to_string()),
            ("schedule", self.schedule.to_string()),
            ("batch", self.batch.to_string()),
            ("K", self.iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("test_size", self.test_size.to_string()),
            ("init", self.init.to_string()),
            ("timing", self.timing.to_string()),
            ("check_invariants", self.check_invariants.to_string()),
            ("out", self.output.display().to_string()),
        ]
    }

    /// Manifest text; `resolved` lines are written as comments.
    pub fn manifest(&self, resolved: &[(&str, String)]) -> String {
        let mut s = String::from("# decprox run manifest\n");
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        for (k, v) in resolved {
            let _ = writeln!(s, "# resolved {k} = {v}");
        }
        s
    }

    pub fn solver_config(&self, rho: f64) -> SolverConfig {
        SolverConfig {
            algorithm: self.algorithm,
            gamma: self.gamma,
            rounds: self.rounds.resolve(rho, self.chebyshev),
            chebyshev: self.chebyshev,
            schedule: self.schedule.clone(),
            batch: self.batch,
            iterations: self.iterations,
            eval_every: self.eval_every,
            init: self.init.clone(),
            check_invariants: self.check_invariants,
            timing: self.timing,
        }
    }
}

/// Agent counts or seeds: `1,4,16`, `0..9` (inclusive), or a mix.
pub fn parse_list<T>(key: &str, text: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + PartialOrd + TryFrom<u64> + Into<u64>,
{
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = parse_value(key, a)?;
            let b: u64 = parse_value(key, b)?;
            if a > b {
                return Err(Error::Usage(format!("empty range '{item}' for {key}")));
            }
            for v in a..=b {
                out.push(
                    T::try_from(v)
                        .map_err(|_| Error::Usage(format!("{v} out of range for {key}")))?,
                );
            }
        } else {
            out.push(parse_value(key, item)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage(format!("{key} list is empty")));
    }
    Ok(out)
}
