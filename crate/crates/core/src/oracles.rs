//! Synthetic decentralized problems and their gradient oracles.
//!
//! Every agent `i` holds a smooth component `F_i(x) = E_ξ[G_i(x, ξ)]`. The
//! instance serves unbiased stochastic gradients of `G_i` (fresh samples per
//! call, drawn from a caller-supplied [`RngStream`]) together with the exact
//! gradients and population objective used for measurement.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist_sq, dot, norm, norm_sq, AgentMatrix};
use crate::rng::{RngStream, DOMAIN_INSTANCE};
use crate::topology::parse_field;

/// Default observation-noise standard deviation for generated regressions.
pub const DEFAULT_NOISE_STD: f64 = 0.1;
/// Default number of held-out samples.
pub const DEFAULT_TEST_SIZE: usize = 10_000;

/// Held-out samples `(a_s, y_s)`, shared by every agent.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn sample(&self, s: usize) -> (&[f64], f64) {
        (
            &self.features[s * self.dim..(s + 1) * self.dim],
            self.targets[s],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemKind {
    /// `y = (aᵀθ*)² + ε`, per-sample loss `(y − (aᵀx)²)²`.
    PhaseRetrieval { theta_star: Vec<f64> },
    /// `y = aᵀθ* + ε`, per-sample loss `(y − aᵀx)²`.
    LinearRegression { theta_star: Vec<f64> },
    /// `F_i(x) = ½‖x − c_i‖²`, stochastic gradients with additive Gaussian noise.
    HeterogeneousQuadratic {
        centers: AgentMatrix,
        mean_center: Vec<f64>,
    },
}

/// An immutable problem instance for `n` agents in dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    n: usize,
    d: usize,
    kind: ProblemKind,
    noise_std: f64,
    smoothness_bound: f64,
    heterogeneity_bound: f64,
    test_set: Option<TestSet>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_noise(noise_std: f64) -> Result<()> {
    if noise_std >= 0.0 && noise_std.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "noise std {noise_std} must be >= 0"
        )))
    }
}

fn check_agents_dim(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::Parameter(format!(
            "need at least one agent and one dimension, got n = {n}, d = {d}"
        )));
    }
    Ok(())
}

/// Held-out regression samples with targets `link(aᵀθ*) + σε`.
fn draw_test_set(
    theta_star: &[f64],
    noise_std: f64,
    size: usize,
    seed: u64,
    link: impl Fn(f64) -> f64,
) -> TestSet {
    let d = theta_star.len();
    let mut rng = RngStream::with_domain(seed, 0, 1, DOMAIN_INSTANCE).rng();
    let mut features = Vec::with_capacity(size * d);
    let mut targets = Vec::with_capacity(size);
    for _ in 0..size {
        let a = gaussian_vec(&mut rng, d);
        let eps: f64 = rng.sample(StandardNormal);
        targets.push(link(dot(&a, theta_star)) + noise_std * eps);
        features.extend_from_slice(&a);
    }
    TestSet {
        dim: d,
        features,
        targets,
    }
}

/// Sparse phase retrieval: `θ*` has `sparsity` nonzeros equal to `±1/√s` at
/// uniformly chosen positions, features are standard Gaussian, and all agents
/// draw from the same distribution.
pub fn generate_phase_retrieval(
    d: usize,
    sparsity: usize,
    n: usize,
    noise_std: f64,
    seed: u64,
    test_size: usize,
) -> Result<ProblemInstance> {
    check_agents_dim(n, d)?;
    check_noise(noise_std)?;
    if sparsity == 0 || sparsity > d {
        return Err(Error::Parameter(format!(
            "sparsity {sparsity} must lie in 1..={d}"
        )));
    }
    let mut rng = RngStream::with_domain(seed, 0, 0, DOMAIN_INSTANCE).rng();
    let mag = 1.0 / (sparsity as f64).sqrt();
    let mut theta_star = vec![0.0; d];
    for pos in index::sample(&mut rng, d, sparsity) {
        theta_star[pos] = if rng.gen::<bool>() { mag } else { -mag };
    }
    // Local Hessian bound over ‖x‖ ≤ 2‖θ*‖ (the loss is quartic, so no global
    // Lipschitz constant exists): |12q − 4p| + 24q + 8p with q = 4p.
    let p = norm_sq(&theta_star);
    let smoothness_bound = 148.0 * p;
    let test_set =
        (test_size > 0).then(|| draw_test_set(&theta_star, noise_std, test_size, seed, |t| t * t));
    Ok(ProblemInstance {
        n,
        d,
        kind: ProblemKind::PhaseRetrieval { theta_star },
        noise_std,
        smoothness_bound,
        heterogeneity_bound: 0.0,
        test_set,
    })
}

/// Homogeneous least squares with a dense unit-norm `θ*`.
pub fn generate_linear_regression(
    d: usize,
    n: usize,
    noise_std: f64,
    seed: u64,
    test_size: usize,
) -> Result<ProblemInstance> {
    check_agents_dim(n, d)?;
    check_noise(noise_std)?;
    let mut rng = RngStream::with_domain(seed, 0, 0, DOMAIN_INSTANCE).rng();
    let mut theta_star = gaussian_vec(&mut rng, d);
    let r = norm(&theta_star);
    theta_star.iter_mut().for_each(|v| *v /= r);
    let test_set =
        (test_size > 0).then(|| draw_test_set(&theta_star, noise_std, test_size, seed, |t| t));
    Ok(ProblemInstance {
        n,
        d,
        kind: ProblemKind::LinearRegression { theta_star },
        noise_std,
        smoothness_bound: 2.0,
        heterogeneity_bound: 0.0,
        test_set,
    })
}

/// Quadratics `F_i(x) = ½‖x − c_i‖²` with `c_i = c̄ + hetero_scale·u_i`,
/// `Σu_i = 0`, `‖u_i‖ = 1`, so that `‖∇F_i(x) − ∇F(x)‖ = hetero_scale`.
/// The reported `c̄` and `ν` are evaluated from the stored centers, so they
/// agree with direct evaluation to the last bit rather than with the formula.
///
/// The offsets `u_i` are `n` equally spaced points on a unit circle in a random
/// plane (`d ≥ 2`), or alternating signs when `d = 1` (which needs `n` even).
/// A single agent has no heterogeneity.
pub fn generate_heterogeneous_quadratic(
    d: usize,
    n: usize,
    hetero_scale: f64,
    noise_std: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    check_agents_dim(n, d)?;
    check_noise(noise_std)?;
    if !(hetero_scale >= 0.0 && hetero_scale.is_finite()) {
        return Err(Error::Parameter(format!(
            "heterogeneity scale {hetero_scale} must be >= 0"
        )));
    }
    let mut rng = RngStream::with_domain(seed, 0, 0, DOMAIN_INSTANCE).rng();
    let mean_center = gaussian_vec(&mut rng, d);

    let offsets: Vec<Vec<f64>> = if n == 1 || hetero_scale == 0.0 {
        vec![vec![0.0; d]; n]
    } else if d == 1 {
        if n % 2 == 1 {
            return Err(Error::Parameter(format!(
                "cannot place {n} zero-sum unit offsets in one dimension"
            )));
        }
        (0..n)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect()
    } else {
        // Orthonormal pair by Gram–Schmidt.
        let mut e1 = gaussian_vec(&mut rng, d);
        let r1 = norm(&e1);
        e1.iter_mut().for_each(|v| *v /= r1);
        let mut e2 = gaussian_vec(&mut rng, d);
        let proj = dot(&e1, &e2);
        axpy(-proj, &e1, &mut e2);
        let r2 = norm(&e2);
        e2.iter_mut().for_each(|v| *v /= r2);
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        (0..n)
            .map(|i| {
                let t = phase + std::f64::consts::TAU * i as f64 / n as f64;
                let (s, c) = t.sin_cos();
                e1.iter().zip(&e2).map(|(a, b)| c * a + s * b).collect()
            })
            .collect()
    };

    let centers: Vec<Vec<f64>> = offsets
        .iter()
        .map(|u| {
            mean_center
                .iter()
                .zip(u)
                .map(|(c, v)| c + hetero_scale * v)
                .collect()
        })
        .collect();
    ProblemInstance::quadratic_from_centers(&centers, noise_std)
}

impl ProblemInstance {
    /// Quadratics `F_i(x) = ½‖x − c_i‖²` with explicit centers (one per agent).
    pub fn quadratic_from_centers(centers: &[Vec<f64>], noise_std: f64) -> Result<Self> {
        check_noise(noise_std)?;
        let centers = AgentMatrix::from_columns(centers)?;
        check_agents_dim(centers.agents(), centers.dim())?;
        let mean_center = centers.mean_column();
        let heterogeneity_bound = centers
            .columns()
            .map(|c| dist_sq(c, &mean_center).sqrt())
            .fold(0.0, f64::max);
        Ok(ProblemInstance {
            n: centers.agents(),
            d: centers.dim(),
            kind: ProblemKind::HeterogeneousQuadratic {
                centers,
                mean_center,
            },
            noise_std,
            smoothness_bound: 1.0,
            heterogeneity_bound,
            test_set: None,
        })
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Smoothness constant `L` of the `F_i` (a local estimate for phase
    /// retrieval).
    pub fn smoothness_bound(&self) -> f64 {
        self.smoothness_bound
    }

    /// `ν` with `‖∇F_i(x) − ∇F(x)‖ ≤ ν` for all `i, x`.
    pub fn heterogeneity_bound(&self) -> f64 {
        self.heterogeneity_bound
    }

    pub fn test_set(&self) -> Option<&TestSet> {
        self.test_set.as_ref()
    }

    /// A lower bound on `F`, valid for `Φ = F + Ψ` whenever `Ψ ≥ 0`.
    pub fn objective_lower_bound(&self) -> f64 {
        match &self.kind {
            ProblemKind::PhaseRetrieval { .. } | ProblemKind::LinearRegression { .. } => {
                self.noise_std * self.noise_std
            }
            ProblemKind::HeterogeneousQuadratic {
                centers,
                mean_center,
            } => {
                0.5 * centers
                    .columns()
                    .map(|c| dist_sq(c, mean_center))
                    .sum::<f64>()
                    / self.n as f64
            }
        }
    }

    fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n {
            return Err(Error::AgentIndex { agent, n: self.n });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "point has dimension {}, problem has {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    /// Mean of `batch` independent stochastic gradients of agent `agent` at `x`,
    /// written into `out`.
    pub fn sample_gradient_into(
        &self,
        agent: usize,
        x: &[f64],
        batch: usize,
        stream: RngStream,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_agent(agent)?;
        self.check_dim(x)?;
        if batch == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if out.len() != self.d {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut rng = stream.rng();
        let inv_b = 1.0 / batch as f64;
        match &self.kind {
            ProblemKind::PhaseRetrieval { theta_star } => {
                let mut a = vec![0.0; self.d];
                for _ in 0..batch {
                    a.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    let eps: f64 = rng.sample(StandardNormal);
                    let t = dot(&a, theta_star);
                    let b = dot(&a, x);
                    let resid = t * t + self.noise_std * eps - b * b;
                    axpy(-4.0 * resid * b * inv_b, &a, out);
                }
            }
            ProblemKind::LinearRegression { theta_star } => {
                let mut a = vec![0.0; self.d];
                for _ in 0..batch {
                    a.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    let eps: f64 = rng.sample(StandardNormal);
                    let resid = dot(&a, theta_star) + self.noise_std * eps - dot(&a, x);
                    axpy(-2.0 * resid * inv_b, &a, out);
                }
            }
            ProblemKind::HeterogeneousQuadratic { centers, .. } => {
                let c = centers.col(agent);
                for ((o, xv), cv) in out.iter_mut().zip(x).zip(c) {
                    *o = xv - cv;
                }
                if self.noise_std > 0.0 {
                    for _ in 0..batch {
                        for o in out.iter_mut() {
                            let e: f64 = rng.sample(StandardNormal);
                            *o += self.noise_std * e * inv_b;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sample_gradient(
        &self,
        agent: usize,
        x: &[f64],
        batch: usize,
        stream: RngStream,
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.sample_gradient_into(agent, x, batch, stream, &mut out)?;
        Ok(out)
    }

    /// `∇F_i(x)`.
    pub fn true_gradient(&self, agent: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_agent(agent)?;
        self.check_dim(x)?;
        Ok(match &self.kind {
            ProblemKind::HeterogeneousQuadratic { centers, .. } => x
                .iter()
                .zip(centers.col(agent))
                .map(|(a, c)| a - c)
                .collect(),
            _ => self.homogeneous_gradient(x),
        })
    }

    /// `∇F(x) = (1/n) Σ_i ∇F_i(x)`.
    pub fn true_mean_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            ProblemKind::HeterogeneousQuadratic { mean_center, .. } => {
                x.iter().zip(mean_center).map(|(a, c)| a - c).collect()
            }
            _ => self.homogeneous_gradient(x),
        })
    }

    fn homogeneous_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            ProblemKind::PhaseRetrieval { theta_star } => {
                // ∇F = (12q − 4p)x − 8cθ*, q = ‖x‖², p = ‖θ*‖², c = θ*ᵀx
                let p = norm_sq(theta_star);
                let q = norm_sq(x);
                let c = dot(theta_star, x);
                x.iter()
                    .zip(theta_star)
                    .map(|(xv, tv)| (12.0 * q - 4.0 * p) * xv - 8.0 * c * tv)
                    .collect()
            }
            ProblemKind::LinearRegression { theta_star } => x
                .iter()
                .zip(theta_star)
                .map(|(xv, tv)| 2.0 * (xv - tv))
                .collect(),
            ProblemKind::HeterogeneousQuadratic { .. } => unreachable!(),
        }
    }

    /// Population objective `F(x)`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let s2 = self.noise_std * self.noise_std;
        Ok(match &self.kind {
            ProblemKind::PhaseRetrieval { theta_star } => {
                // E[(a² − b²)²] for jointly Gaussian (a, b) = (aᵀθ*, aᵀx)
                let p = norm_sq(theta_star);
                let q = norm_sq(x);
                let c = dot(theta_star, x);
                3.0 * p * p + 3.0 * q * q - 2.0 * p * q - 4.0 * c * c + s2
            }
            ProblemKind::LinearRegression { theta_star } => dist_sq(x, theta_star) + s2,
            ProblemKind::HeterogeneousQuadratic { centers, .. } => {
                0.5 * centers.columns().map(|c| dist_sq(x, c)).sum::<f64>() / self.n as f64
            }
        })
    }

    /// Mean held-out loss; the population objective when the kind has no
    /// sample-based test set.
    pub fn test_loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let Some(ts) = &self.test_set else {
            return self.objective_value(x);
        };
        let total: f64 = (0..ts.len())
            .map(|s| {
                let (a, y) = ts.sample(s);
                let b = dot(a, x);
                let pred = match self.kind {
                    ProblemKind::PhaseRetrieval { .. } => b * b,
                    _ => b,
                };
                (y - pred) * (y - pred)
            })
            .sum();
        Ok(total / ts.len() as f64)
    }
}

/// Textual problem description: `phase:<d>:<s>:<noise>`,
/// `quad:<d>:<hetero>:<noise>`, `linreg:<d>:<noise>`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Phase {
        d: usize,
        sparsity: usize,
        noise_std: f64,
    },
    Quad {
        d: usize,
        hetero_scale: f64,
        noise_std: f64,
    },
    LinReg {
        d: usize,
        noise_std: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self, n: usize, seed: u64, test_size: usize) -> Result<ProblemInstance> {
        match *self {
            ProblemSpec::Phase {
                d,
                sparsity,
                noise_std,
            } => generate_phase_retrieval(d, sparsity, n, noise_std, seed, test_size),
            ProblemSpec::Quad {
                d,
                hetero_scale,
                noise_std,
            } => generate_heterogeneous_quadratic(d, n, hetero_scale, noise_std, seed),
            ProblemSpec::LinReg { d, noise_std } => {
                generate_linear_regression(d, n, noise_std, seed, test_size)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::Phase { d, .. }
            | ProblemSpec::Quad { d, .. }
            | ProblemSpec::LinReg { d, .. } => d,
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Phase {
                d,
                sparsity,
                noise_std,
            } => write!(f, "phase:{d}:{sparsity}:{noise_std}"),
            ProblemSpec::Quad {
                d,
                hetero_scale,
                noise_std,
            } => write!(f, "quad:{d}:{hetero_scale}:{noise_std}"),
            ProblemSpec::LinReg { d, noise_std } => write!(f, "linreg:{d}:{noise_std}"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["phase", d, k, noise] => Ok(ProblemSpec::Phase {
                d: parse_field(s, d, "dimension")?,
                sparsity: parse_field(s, k, "sparsity")?,
                noise_std: parse_field(s, noise, "noise")?,
            }),
            ["quad", d, h, noise] => Ok(ProblemSpec::Quad {
                d: parse_field(s, d, "dimension")?,
                hetero_scale: parse_field(s, h, "heterogeneity")?,
                noise_std: parse_field(s, noise, "noise")?,
            }),
            ["linreg", d, noise] => Ok(ProblemSpec::LinReg {
                d: parse_field(s, d, "dimension")?,
                noise_std: parse_field(s, noise, "noise")?,
            }),
            _ => Err(Error::Usage(format!("unrecognized problem '{s}'"))),
        }
    }
}
