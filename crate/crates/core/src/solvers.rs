//! Lock-step round machines for decentralized proximal averaged stochastic
//! approximation, with and without gradient tracking.
//!
//! Each round every agent takes a proximal step from `x_i − γz_i`, moves its
//! primal iterate towards it with weight `α_k`, draws a stochastic gradient at
//! its current point, and folds it into the dual average `z_i`. The primal,
//! dual (and tracking) matrices are then communicated with `m` gossip rounds
//! or with Chebyshev-accelerated mixing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm, AgentMatrix};
use crate::metrics::{Evaluator, MetricsSink};
use crate::oracles::ProblemInstance;
use crate::proximal::ProxOperator;
use crate::rng::{RngStream, DOMAIN_INIT};
use crate::topology::{chebyshev_mix, mix, parse_field, MixingMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    ProxDasa,
    ProxDasaGt,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::ProxDasa => "dasa",
            Algorithm::ProxDasaGt => "dasa-gt",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dasa" => Ok(Algorithm::ProxDasa),
            "dasa-gt" => Ok(Algorithm::ProxDasaGt),
            _ => Err(Error::Usage(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Averaging weights `α_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    /// `min{√(n/K), 1}` for every `k`.
    ConstantSqrtNK { total: usize },
    /// `min{α·√(n/max(k, 1)), 1}`.
    Diminishing { base: f64 },
    /// A fixed `α` for every `k`.
    Constant(f64),
    /// `α_k = list[k]`.
    Explicit(Vec<f64>),
}

impl StepSchedule {
    pub fn explicit(list: Vec<f64>) -> Result<Self> {
        if list.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::Parameter(
                "explicit step sizes must lie in (0, 1]".into(),
            ));
        }
        if list.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Parameter(
                "explicit step sizes must be nonincreasing".into(),
            ));
        }
        Ok(StepSchedule::Explicit(list))
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "step size {alpha} outside (0, 1]"
            )));
        }
        Ok(StepSchedule::Constant(alpha))
    }

    pub fn diminishing(base: f64) -> Result<Self> {
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::Parameter(format!("base step {base} must be > 0")));
        }
        Ok(StepSchedule::Diminishing { base })
    }

    pub fn constant_sqrt_nk(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Parameter(
                "schedule horizon must be at least 1".into(),
            ));
        }
        Ok(StepSchedule::ConstantSqrtNK { total })
    }

    /// `α_k` for `n` agents.
    pub fn step_size(&self, k: usize, n: usize) -> Result<f64> {
        let n = n as f64;
        Ok(match self {
            StepSchedule::ConstantSqrtNK { total } => (n / *total as f64).sqrt().min(1.0),
            StepSchedule::Diminishing { base } => (base * (n / k.max(1) as f64).sqrt()).min(1.0),
            StepSchedule::Constant(a) => *a,
            StepSchedule::Explicit(list) => *list.get(k).ok_or(Error::ScheduleExhausted(k))?,
        })
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSchedule::ConstantSqrtNK { total } => write!(f, "const:{total}"),
            StepSchedule::Diminishing { base } => write!(f, "dim:{base}"),
            StepSchedule::Constant(a) => write!(f, "fixed:{a}"),
            StepSchedule::Explicit(list) => {
                let items: Vec<String> = list.iter().map(f64::to_string).collect();
                write!(f, "list:{}", items.join(","))
            }
        }
    }
}

impl FromStr for StepSchedule {
    type Err = Error;

    /// `const:<K>`, `dim:<alpha>`, `fixed:<alpha>`, `list:<a0>,<a1>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("unrecognized schedule '{s}'")))?;
        let sched = match kind {
            "const" => StepSchedule::constant_sqrt_nk(parse_field(s, arg, "horizon")?),
            "dim" => StepSchedule::diminishing(parse_field(s, arg, "base step")?),
            "fixed" => StepSchedule::constant(parse_field(s, arg, "step")?),
            "list" => StepSchedule::explicit(
                arg.split(',')
                    .map(|v| parse_field(s, v, "step"))
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(Error::Usage(format!("unrecognized schedule '{s}'"))),
        };
        sched.map_err(|e| Error::Usage(format!("'{s}': {e}")))
    }
}

/// Common starting point shared by all agents.
#[derive(Clone, Debug, PartialEq)]
pub enum InitPoint {
    Zero,
    /// `x⁰ ~ N(0, scale²/d · I)` drawn once from the run seed.
    Gaussian {
        scale: f64,
    },
}

impl InitPoint {
    pub fn point(&self, d: usize, seed: u64) -> Vec<f64> {
        match self {
            InitPoint::Zero => vec![0.0; d],
            InitPoint::Gaussian { scale } => {
                let mut rng = RngStream::with_domain(seed, 0, 0, DOMAIN_INIT).rng();
                let s = scale / (d as f64).sqrt();
                (0..d)
                    .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }
}

impl fmt::Display for InitPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitPoint::Zero => write!(f, "zero"),
            InitPoint::Gaussian { scale } => write!(f, "gauss:{scale}"),
        }
    }
}

impl FromStr for InitPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "zero" => Ok(InitPoint::Zero),
            Some(("gauss", v)) => {
                let scale: f64 = parse_field(s, v, "scale")?;
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::Usage(format!("bad init scale in '{s}'")));
                }
                Ok(InitPoint::Gaussian { scale })
            }
            _ => Err(Error::Usage(format!("unrecognized init '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Communication rounds per iteration.
    pub rounds: usize,
    pub chebyshev: bool,
    pub schedule: StepSchedule,
    pub batch: usize,
    /// Total iterations `K`.
    pub iterations: usize,
    pub eval_every: usize,
    pub init: InitPoint,
    /// Verify the mean-evolution and tracking identities every round and the
    /// Y-consensus bound at every evaluation.
    pub check_invariants: bool,
    /// Record wall-clock time; off keeps the CSV byte-reproducible.
    pub timing: bool,
}

impl SolverConfig {
    pub fn new(
        algorithm: Algorithm,
        gamma: f64,
        schedule: StepSchedule,
        iterations: usize,
    ) -> Self {
        Self {
            algorithm,
            gamma,
            rounds: 1,
            chebyshev: false,
            schedule,
            batch: 1,
            iterations,
            eval_every: 50,
            init: InitPoint::Zero,
            check_invariants: false,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma {} must be > 0",
                self.gamma
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Parameter(
                "communication rounds must be at least 1".into(),
            ));
        }
        if self.batch == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Parameter(
                "evaluation cadence must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-agent iterates. Column `i` of each matrix belongs to agent `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x: AgentMatrix,
    pub z: AgentMatrix,
    /// Proximal points of the last round.
    pub y: AgentMatrix,
    /// Tracked gradients (gradient tracking only).
    pub u: Option<AgentMatrix>,
    /// Stochastic gradients of the previous round (gradient tracking only).
    pub v_prev: Option<AgentMatrix>,
}

fn sample_all(
    instance: &ProblemInstance,
    x: &AgentMatrix,
    batch: usize,
    seed: u64,
    iteration: usize,
) -> Result<AgentMatrix> {
    let mut v = AgentMatrix::zeros(x.dim(), x.agents());
    for i in 0..x.agents() {
        instance.sample_gradient_into(
            i,
            x.col(i),
            batch,
            RngStream::new(seed, i, iteration),
            v.col_mut(i),
        )?;
    }
    Ok(v)
}

/// `X⁰ = Z⁰` at the common start point (`Z⁰ = 0`); for gradient tracking also
/// `U⁰ = V⁰`, with `V⁰` a fresh stochastic gradient at `X⁰`.
pub fn init_state(
    config: &SolverConfig,
    instance: &ProblemInstance,
    seed: u64,
) -> Result<SolverState> {
    let n = instance.agents();
    let d = instance.dim();
    let x0 = config.init.point(d, seed);
    let x = AgentMatrix::from_repeated(&x0, n);
    let (u, v_prev) = match config.algorithm {
        Algorithm::ProxDasa => (None, None),
        Algorithm::ProxDasaGt => {
            let v0 = sample_all(instance, &x, config.batch, seed, 0)?;
            (Some(v0.clone()), Some(v0))
        }
    };
    Ok(SolverState {
        k: 0,
        x,
        z: AgentMatrix::zeros(d, n),
        y: AgentMatrix::zeros(d, n),
        u,
        v_prev,
    })
}

fn communicate(a: &AgentMatrix, w: &MixingMatrix, config: &SolverConfig) -> Result<AgentMatrix> {
    if config.chebyshev {
        chebyshev_mix(a, w, config.rounds)
    } else {
        mix(a, w, config.rounds)
    }
}

fn check_consistent(
    state: &SolverState,
    w: &MixingMatrix,
    instance: &ProblemInstance,
) -> Result<()> {
    let n = instance.agents();
    if w.n() != n || state.x.agents() != n || state.z.agents() != n {
        return Err(Error::Shape(format!(
            "graph has {} agents, problem {n}, state {}",
            w.n(),
            state.x.agents()
        )));
    }
    if state.x.dim() != instance.dim() || state.z.dim() != instance.dim() {
        return Err(Error::Shape("state dimension differs from problem".into()));
    }
    Ok(())
}

fn ensure_finite(k: usize, name: &str, m: &AgentMatrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration: k,
            detail: format!("non-finite entry in {name}"),
        })
    }
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_abs(vs: &[&[f64]]) -> f64 {
    vs.iter()
        .flat_map(|v| v.iter())
        .map(|x| x.abs())
        .fold(0.0, f64::max)
}

/// Checks `m̄_after = (1−α)·m̄_before + α·target` coordinate-wise.
fn check_mean_evolution(
    k: usize,
    name: &str,
    before: &[f64],
    target: &[f64],
    after: &[f64],
    alpha: f64,
    tol: f64,
) -> Result<()> {
    let predicted: Vec<f64> = before
        .iter()
        .zip(target)
        .map(|(b, t)| (1.0 - alpha) * b + alpha * t)
        .collect();
    let gap = max_abs_gap(&predicted, after);
    let scale = 1.0 + max_abs(&[before, target, after]);
    if gap > tol * scale {
        return Err(Error::Invariant {
            iteration: k,
            detail: format!("mean of {name} moved by {gap:e} during communication"),
        });
    }
    Ok(())
}

struct LocalStep {
    x_tilde: AgentMatrix,
    y: AgentMatrix,
    v: AgentMatrix,
}

/// Proximal step and primal averaging for every agent, plus the fresh
/// stochastic gradients at the current iterates.
fn local_step(
    state: &SolverState,
    config: &SolverConfig,
    instance: &ProblemInstance,
    op: &ProxOperator,
    seed: u64,
    alpha: f64,
) -> Result<LocalStep> {
    let (d, n) = (state.x.dim(), state.x.agents());
    let gamma = config.gamma;
    let mut y = AgentMatrix::zeros(d, n);
    let mut x_tilde = AgentMatrix::zeros(d, n);
    let mut shifted = vec![0.0; d];
    for i in 0..n {
        let xi = state.x.col(i);
        for ((s, xv), zv) in shifted.iter_mut().zip(xi).zip(state.z.col(i)) {
            *s = xv - gamma * zv;
        }
        op.prox_into(gamma, &shifted, y.col_mut(i))?;
        let yi = y.col(i);
        for ((o, xv), yv) in x_tilde.col_mut(i).iter_mut().zip(xi).zip(yi) {
            *o = (1.0 - alpha) * xv + alpha * yv;
        }
    }
    let v = sample_all(instance, &state.x, config.batch, seed, state.k + 1)?;
    Ok(LocalStep { x_tilde, y, v })
}

/// `(1−α)·A + α·B`.
fn blend(a: &AgentMatrix, b: &AgentMatrix, alpha: f64) -> AgentMatrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (1.0 - alpha) * p + alpha * q)
        .collect();
    AgentMatrix::from_col_major(a.dim(), a.agents(), data).expect("same shape")
}

fn mean_tolerance(config: &SolverConfig) -> f64 {
    if config.chebyshev {
        1e-10
    } else {
        1e-12
    }
}

/// One round without gradient tracking.
pub fn prox_dasa_round(
    state: &mut SolverState,
    w: &MixingMatrix,
    config: &SolverConfig,
    instance: &ProblemInstance,
    op: &ProxOperator,
    seed: u64,
) -> Result<()> {
    check_consistent(state, w, instance)?;
    let k = state.k;
    let alpha = config.schedule.step_size(k, instance.agents())?;
    let step = local_step(state, config, instance, op, seed, alpha)?;
    let z_tilde = blend(&state.z, &step.v, alpha);

    let x_next = communicate(&step.x_tilde, w, config)?;
    let z_next = communicate(&z_tilde, w, config)?;
    ensure_finite(k, "X", &x_next)?;
    ensure_finite(k, "Z", &z_next)?;

    if config.check_invariants {
        let tol = mean_tolerance(config);
        check_mean_evolution(
            k,
            "X",
            &state.x.mean_column(),
            &step.y.mean_column(),
            &x_next.mean_column(),
            alpha,
            tol,
        )?;
        check_mean_evolution(
            k,
            "Z",
            &state.z.mean_column(),
            &step.v.mean_column(),
            &z_next.mean_column(),
            alpha,
            tol,
        )?;
    }

    state.x = x_next;
    state.z = z_next;
    state.y = step.y;
    state.k += 1;
    Ok(())
}

/// One round with gradient tracking: `ũ = u + v − v_prev` replaces the raw
/// stochastic gradient in the dual average and is itself communicated.
pub fn prox_dasa_gt_round(
    state: &mut SolverState,
    w: &MixingMatrix,
    config: &SolverConfig,
    instance: &ProblemInstance,
    op: &ProxOperator,
    seed: u64,
) -> Result<()> {
    check_consistent(state, w, instance)?;
    let k = state.k;
    let (Some(u), Some(v_prev)) = (&state.u, &state.v_prev) else {
        return Err(Error::Parameter(
            "gradient-tracking state needs U and V_prev".into(),
        ));
    };
    let alpha = config.schedule.step_size(k, instance.agents())?;
    let step = local_step(state, config, instance, op, seed, alpha)?;

    let u_tilde_data = u
        .as_slice()
        .iter()
        .zip(step.v.as_slice())
        .zip(v_prev.as_slice())
        .map(|((uv, vv), pv)| uv + vv - pv)
        .collect();
    let u_tilde = AgentMatrix::from_col_major(u.dim(), u.agents(), u_tilde_data)?;
    let z_tilde = blend(&state.z, &u_tilde, alpha);

    let x_next = communicate(&step.x_tilde, w, config)?;
    let u_next = communicate(&u_tilde, w, config)?;
    let z_next = communicate(&z_tilde, w, config)?;
    ensure_finite(k, "X", &x_next)?;
    ensure_finite(k, "U", &u_next)?;
    ensure_finite(k, "Z", &z_next)?;

    if config.check_invariants {
        let tol = mean_tolerance(config);
        let u_bar = u_tilde.mean_column();
        check_mean_evolution(
            k,
            "X",
            &state.x.mean_column(),
            &step.y.mean_column(),
            &x_next.mean_column(),
            alpha,
            tol,
        )?;
        check_mean_evolution(
            k,
            "Z",
            &state.z.mean_column(),
            &u_bar,
            &z_next.mean_column(),
            alpha,
            tol,
        )?;
        check_tracking(k + 1, &u_next, &step.v)?;
    }

    state.x = x_next;
    state.z = z_next;
    state.u = Some(u_next);
    state.v_prev = Some(step.v);
    state.y = step.y;
    state.k += 1;
    Ok(())
}

/// `ū = v̄` to `1e-10` relative (absolute below unit scale).
pub fn check_tracking(k: usize, u: &AgentMatrix, v: &AgentMatrix) -> Result<()> {
    let u_bar = u.mean_column();
    let v_bar = v.mean_column();
    let gap: f64 = norm(
        &u_bar
            .iter()
            .zip(&v_bar)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    if gap > 1e-10 * norm(&v_bar).max(1.0) {
        return Err(Error::Invariant {
            iteration: k,
            detail: format!("tracked gradient mean drifted from sampled mean by {gap:e}"),
        });
    }
    Ok(())
}

/// Runs `config.iterations` rounds from the initial state, evaluating metrics
/// at `k = 0` and every `eval_every` rounds thereafter. Records produced before
/// an error have already been delivered to `sink`.
pub fn run(
    config: &SolverConfig,
    w: &MixingMatrix,
    instance: &ProblemInstance,
    op: &ProxOperator,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<SolverState> {
    config.validate()?;
    let mut evaluator = Evaluator::new(config.gamma, instance, op, w)?;
    evaluator.check_invariants = config.check_invariants;

    let mut state = init_state(config, instance, seed)?;
    check_consistent(&state, w, instance)?;
    if let Some(u) = &state.u {
        check_tracking(0, u, state.v_prev.as_ref().expect("set with u"))?;
    }
    let mut elapsed_ms = 0.0;
    let wall = |ms: f64| if config.timing { ms } else { 0.0 };
    sink.record(&evaluator.evaluate(0, 0.0, &state.x, &state.z, wall(elapsed_ms))?)?;

    for k in 0..config.iterations {
        let alpha = config.schedule.step_size(k, instance.agents())?;
        let started = Instant::now();
        match config.algorithm {
            Algorithm::ProxDasa => prox_dasa_round(&mut state, w, config, instance, op, seed)?,
            Algorithm::ProxDasaGt => prox_dasa_gt_round(&mut state, w, config, instance, op, seed)?,
        }
        elapsed_ms += started.elapsed().as_secs_f64() * 1e3;
        if state.k % config.eval_every == 0 {
            sink.record(&evaluator.evaluate(
                state.k,
                alpha,
                &state.x,
                &state.z,
                wall(elapsed_ms),
            )?)?;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsRecord;
    use crate::oracles::generate_heterogeneous_quadratic;
    use crate::topology::{build_complete, build_ring};

    #[test]
    fn step_sizes() {
        let s = StepSchedule::constant_sqrt_nk(400).unwrap();
        for k in [0, 10, 399] {
            assert!((s.step_size(k, 4).unwrap() - 0.1).abs() < 1e-15);
        }
        let d = StepSchedule::diminishing(1.0).unwrap();
        assert_eq!(d.step_size(0, 1).unwrap(), 1.0);
        assert!((d.step_size(100, 4).unwrap() - 0.2).abs() < 1e-15);
        let e = StepSchedule::explicit(vec![0.5, 0.25]).unwrap();
        assert_eq!(e.step_size(1, 3).unwrap(), 0.25);
        assert!(matches!(
            e.step_size(2, 3),
            Err(Error::ScheduleExhausted(2))
        ));
        assert!(StepSchedule::explicit(vec![0.1, 0.2]).is_err());
        assert!(StepSchedule::explicit(vec![1.5]).is_err());
        assert!(StepSchedule::constant(0.0).is_err());
    }

    #[test]
    fn schedule_strings() {
        for s in ["const:10000", "dim:0.5", "fixed:0.05", "list:0.5,0.25"] {
            let sched: StepSchedule = s.parse().unwrap();
            assert_eq!(sched.to_string(), s);
        }
        assert!("const:0".parse::<StepSchedule>().is_err());
        assert!("cosine:1".parse::<StepSchedule>().is_err());
        assert_eq!(
            "dasa-gt".parse::<Algorithm>().unwrap(),
            Algorithm::ProxDasaGt
        );
        assert!("sgd".parse::<Algorithm>().is_err());
        assert_eq!(
            "gauss:0.5".parse::<InitPoint>().unwrap(),
            InitPoint::Gaussian { scale: 0.5 }
        );
        assert!("ones".parse::<InitPoint>().is_err());
    }

    #[test]
    fn initial_state() {
        let inst = generate_heterogeneous_quadratic(3, 4, 1.0, 0.0, 1).unwrap();
        let cfg = SolverConfig::new(Algorithm::ProxDasaGt, 1.0, StepSchedule::Constant(0.1), 5);
        let st = init_state(&cfg, &inst, 0).unwrap();
        assert!(st.x.as_slice().iter().all(|v| *v == 0.0));
        assert!(st.z.as_slice().iter().all(|v| *v == 0.0));
        let u = st.u.unwrap();
        for i in 0..4 {
            assert_eq!(
                u.col(i),
                inst.true_gradient(i, &[0.0; 3]).unwrap().as_slice()
            );
        }
        assert_eq!(Some(u), st.v_prev);
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1.0, StepSchedule::Constant(0.1), 5);
        let st = init_state(&cfg, &inst, 0).unwrap();
        assert!(st.u.is_none() && st.v_prev.is_none());
    }

    #[test]
    fn zero_is_a_fixed_point_with_zero_gradients() {
        // F_i(x) = ½‖x‖²: gradient vanishes at the origin.
        let inst = ProblemInstance::quadratic_from_centers(&vec![vec![0.0; 3]; 4], 0.0).unwrap();
        let w = build_ring(4, 1.0 / 3.0).unwrap();
        let l1 = ProxOperator::l1(0.1).unwrap();
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1.0, StepSchedule::Constant(0.3), 10);
        let mut st = init_state(&cfg, &inst, 0).unwrap();
        for _ in 0..10 {
            prox_dasa_round(&mut st, &w, &cfg, &inst, &l1, 0).unwrap();
        }
        assert!(st.x.as_slice().iter().all(|v| *v == 0.0));
        assert!(st.z.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(st.k, 10);
    }

    #[test]
    fn complete_graph_keeps_exact_consensus() {
        let inst = generate_heterogeneous_quadratic(4, 6, 0.0, 0.0, 2).unwrap();
        let w = build_complete(6).unwrap();
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1.0, StepSchedule::Constant(0.2), 20);
        let op = ProxOperator::l1(0.05).unwrap();
        let mut st = init_state(&cfg, &inst, 3).unwrap();
        for _ in 0..20 {
            prox_dasa_round(&mut st, &w, &cfg, &inst, &op, 3).unwrap();
            for i in 1..6 {
                for (a, b) in st.x.col(i).iter().zip(st.x.col(0)) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn divergence_is_reported_with_iteration() {
        let inst = generate_heterogeneous_quadratic(2, 2, 0.0, 0.0, 2).unwrap();
        let w = build_complete(2).unwrap();
        // A huge γ with α = 1 blows the iterates up geometrically.
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1e200, StepSchedule::Constant(1.0), 50);
        let mut records: Vec<MetricsRecord> = Vec::new();
        let err = run(&cfg, &w, &inst, &ProxOperator::Zero, 0, &mut records).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert_eq!(records.len(), 1);
    }

    #[test]
    fn run_with_no_iterations() {
        let inst = generate_heterogeneous_quadratic(2, 3, 1.0, 0.5, 2).unwrap();
        let w = build_ring(3, 0.5).unwrap();
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1.0, StepSchedule::Constant(0.1), 0);
        let mut records: Vec<MetricsRecord> = Vec::new();
        let st = run(&cfg, &w, &inst, &ProxOperator::Zero, 0, &mut records).unwrap();
        assert_eq!(st.k, 0);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].k, 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let inst = generate_heterogeneous_quadratic(2, 3, 1.0, 0.5, 2).unwrap();
        let w = build_ring(4, 0.5).unwrap();
        let cfg = SolverConfig::new(Algorithm::ProxDasa, 1.0, StepSchedule::Constant(0.1), 3);
        let mut records: Vec<MetricsRecord> = Vec::new();
        assert!(matches!(
            run(&cfg, &w, &inst, &ProxOperator::Zero, 0, &mut records),
            Err(Error::Shape(_))
        ));
    }
}
