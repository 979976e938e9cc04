//! Convergence measurements: stationarity of the averaged iterate, consensus
//! errors, dual gap, the per-agent stationarity measure, the merit function,
//! and the pairwise consensus diagnostic. Everything here uses exact
//! gradients from the instance, never stochastic samples.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq, AgentMatrix};
use crate::oracles::ProblemInstance;
use crate::proximal::{eta, gradient_mapping, ProxOperator};
use crate::topology::MixingMatrix;

/// `‖𝒢(x̄, ∇F(x̄), γ)‖²`.
pub fn stationarity(x_bar: &[f64], grad: &[f64], gamma: f64, op: &ProxOperator) -> Result<f64> {
    Ok(norm_sq(&gradient_mapping(x_bar, grad, gamma, op)?))
}

/// `(1/n) Σ_i ‖m_i − m̄‖²`.
pub fn consensus_error(m: &AgentMatrix) -> f64 {
    if m.agents() == 0 {
        return 0.0;
    }
    m.deviation_sq() / m.agents() as f64
}

/// `‖z̄ − ∇F(x̄)‖²`.
pub fn dual_gap(z_bar: &[f64], grad: &[f64]) -> f64 {
    dist_sq(z_bar, grad)
}

/// `(1/n) Σ_i [‖𝒢(x_i, ∇F(x_i), γ)‖² + L²‖x_i − x̄‖²]`.
pub fn per_agent_stationarity(
    x: &AgentMatrix,
    gamma: f64,
    smoothness: f64,
    instance: &ProblemInstance,
    op: &ProxOperator,
) -> Result<f64> {
    if smoothness.is_nan() || smoothness <= 0.0 {
        return Err(Error::Domain(format!(
            "smoothness {smoothness} must be positive"
        )));
    }
    let x_bar = x.mean_column();
    let l2 = smoothness * smoothness;
    let mut total = 0.0;
    for xi in x.columns() {
        let g = instance.true_mean_gradient(xi)?;
        total += norm_sq(&gradient_mapping(xi, &g, gamma, op)?) + l2 * dist_sq(xi, &x_bar);
    }
    Ok(total / x.agents() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritParams {
    lambda_w: f64,
    gamma: f64,
    phi_star: f64,
}

impl MeritParams {
    pub fn new(lambda_w: f64, gamma: f64, phi_star: f64) -> Result<Self> {
        if !(lambda_w > 0.0 && lambda_w.is_finite()) {
            return Err(Error::Parameter(format!(
                "merit weight {lambda_w} must be > 0"
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma {gamma} must be > 0")));
        }
        Ok(Self {
            lambda_w,
            gamma,
            phi_star,
        })
    }

    /// `λ = γ⁻¹/(8L²)`.
    pub fn default_for(gamma: f64, smoothness: f64, phi_star: f64) -> Result<Self> {
        Self::new(
            1.0 / (gamma * 8.0 * smoothness * smoothness),
            gamma,
            phi_star,
        )
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phi_star(&self) -> f64 {
        self.phi_star
    }
}

/// `W(x̄, z̄) = [Φ(x̄) − Φ_*] + [Ψ(x̄) − η(x̄, z̄)] + λ‖∇F(x̄) − z̄‖²` with
/// `Φ = F + Ψ`.
pub fn merit(
    x_bar: &[f64],
    z_bar: &[f64],
    params: &MeritParams,
    instance: &ProblemInstance,
    op: &ProxOperator,
) -> Result<f64> {
    let psi = op.value(x_bar);
    if !psi.is_finite() {
        return Err(Error::Domain("averaged iterate lies outside dom(Ψ)".into()));
    }
    let gamma = params.gamma;
    let value_gap = instance.objective_value(x_bar)? + psi - params.phi_star;
    let primal = psi - eta(x_bar, z_bar, gamma, op)?;
    let floor = 0.5 * gamma * norm_sq(&gradient_mapping(x_bar, z_bar, gamma, op)?);
    if primal < floor - 1e-9 * (1.0 + floor.abs()) {
        return Err(Error::Domain(format!(
            "primal term {primal} below its strong-convexity floor {floor}"
        )));
    }
    let grad = instance.true_mean_gradient(x_bar)?;
    Ok(value_gap + primal + params.lambda_w * dual_gap(z_bar, &grad))
}

/// `g_W = Σ_{i<j, w_ij>0} ‖m_i − m_j‖²`.
pub fn pairwise_consensus(m: &AgentMatrix, w: &MixingMatrix) -> Result<f64> {
    if m.agents() != w.n() {
        return Err(Error::Shape(format!(
            "{} agent columns for a {}-agent graph",
            m.agents(),
            w.n()
        )));
    }
    Ok(w.edges().map(|(i, j)| dist_sq(m.col(i), m.col(j))).sum())
}

/// Checks `‖Y − Ȳ‖² ≤ 2(‖X − X̄‖² + γ²‖Z − Z̄‖²)` for `Y = prox(X − γZ)`.
pub fn y_consensus_holds(
    x: &AgentMatrix,
    z: &AgentMatrix,
    gamma: f64,
    op: &ProxOperator,
) -> Result<(bool, f64, f64)> {
    let mut y = AgentMatrix::zeros(x.dim(), x.agents());
    let mut shifted = vec![0.0; x.dim()];
    for i in 0..x.agents() {
        for ((s, xv), zv) in shifted.iter_mut().zip(x.col(i)).zip(z.col(i)) {
            *s = xv - gamma * zv;
        }
        op.prox_into(gamma, &shifted, y.col_mut(i))?;
    }
    let lhs = y.deviation_sq();
    let rhs = 2.0 * (x.deviation_sq() + gamma * gamma * z.deviation_sq());
    Ok((lhs <= rhs + 1e-12 * (1.0 + rhs), lhs, rhs))
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub k: usize,
    pub alpha_k: f64,
    pub stationarity: f64,
    pub consensus_x: f64,
    pub consensus_z: f64,
    pub dual_gap: f64,
    pub per_agent_stationarity: f64,
    pub merit: f64,
    pub pairwise_consensus: f64,
    pub objective: f64,
    pub test_loss: f64,
    pub wall_ms: f64,
}

pub const CSV_HEADER: &str = "k,alpha_k,stationarity,consensus_x,consensus_z,dual_gap,\
per_agent_stationarity,merit,pairwise_consensus,objective,test_loss,wall_ms";

impl MetricsRecord {
    /// CSV row, reals with 17 significant digits.
    pub fn csv_row(&self) -> String {
        let vals = [
            self.alpha_k,
            self.stationarity,
            self.consensus_x,
            self.consensus_z,
            self.dual_gap,
            self.per_agent_stationarity,
            self.merit,
            self.pairwise_consensus,
            self.objective,
            self.test_loss,
            self.wall_ms,
        ];
        let mut row = self.k.to_string();
        for v in vals {
            row.push(',');
            row.push_str(&format!("{v:.16e}"));
        }
        row
    }
}

/// Receives metrics records as a run progresses.
pub trait MetricsSink {
    fn record(&mut self, rec: &MetricsRecord) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, rec: &MetricsRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Writes the header on creation and one flushed row per record, so a run
/// that aborts leaves every completed evaluation on disk.
pub struct CsvSink<W: Write> {
    out: W,
    label: std::path::PathBuf,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, label: impl Into<std::path::PathBuf>) -> Result<Self> {
        let label = label.into();
        writeln!(out, "{CSV_HEADER}").map_err(|e| Error::io(&label, e))?;
        Ok(Self { out, label })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, rec: &MetricsRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.csv_row()).map_err(|e| Error::io(&self.label, e))?;
        self.out.flush().map_err(|e| Error::io(&self.label, e))
    }
}

/// Snapshot evaluator bound to one problem, regularizer, and graph.
pub struct Evaluator<'a> {
    pub gamma: f64,
    pub smoothness: f64,
    pub merit_params: MeritParams,
    pub instance: &'a ProblemInstance,
    pub op: &'a ProxOperator,
    pub graph: &'a MixingMatrix,
    /// Assert the Y-consensus inequality on every evaluation.
    pub check_invariants: bool,
}

impl<'a> Evaluator<'a> {
    /// Uses the instance's smoothness bound for `L`, `λ = γ⁻¹/(8L²)`, and the
    /// instance's objective lower bound for `Φ_*`.
    pub fn new(
        gamma: f64,
        instance: &'a ProblemInstance,
        op: &'a ProxOperator,
        graph: &'a MixingMatrix,
    ) -> Result<Self> {
        let smoothness = instance.smoothness_bound();
        Ok(Self {
            gamma,
            smoothness,
            merit_params: MeritParams::default_for(
                gamma,
                smoothness,
                instance.objective_lower_bound(),
            )?,
            instance,
            op,
            graph,
            check_invariants: false,
        })
    }

    pub fn evaluate(
        &self,
        k: usize,
        alpha_k: f64,
        x: &AgentMatrix,
        z: &AgentMatrix,
        wall_ms: f64,
    ) -> Result<MetricsRecord> {
        if self.check_invariants {
            let (ok, lhs, rhs) = y_consensus_holds(x, z, self.gamma, self.op)?;
            if !ok {
                return Err(Error::Invariant {
                    iteration: k,
                    detail: format!("Y-consensus bound violated: {lhs} > {rhs}"),
                });
            }
        }
        let x_bar = x.mean_column();
        let z_bar = z.mean_column();
        let grad = self.instance.true_mean_gradient(&x_bar)?;
        let merit = match merit(&x_bar, &z_bar, &self.merit_params, self.instance, self.op) {
            Ok(v) => v,
            Err(Error::Domain(_)) if !self.op.value(&x_bar).is_finite() => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(MetricsRecord {
            k,
            alpha_k,
            stationarity: stationarity(&x_bar, &grad, self.gamma, self.op)?,
            consensus_x: consensus_error(x),
            consensus_z: consensus_error(z),
            dual_gap: dual_gap(&z_bar, &grad),
            per_agent_stationarity: per_agent_stationarity(
                x,
                self.gamma,
                self.smoothness,
                self.instance,
                self.op,
            )?,
            merit,
            pairwise_consensus: pairwise_consensus(x, self.graph)?,
            objective: self.instance.objective_value(&x_bar)? + self.op.value(&x_bar),
            test_loss: self.instance.test_loss(&x_bar)?,
            wall_ms,
        })
    }
}
