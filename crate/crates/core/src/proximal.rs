//! The non-smooth regularizer Ψ: values, proximal maps, the proximal gradient
//! mapping, and the envelope-style quantity η used by the merit function.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm, sub};
use crate::topology::parse_field;

/// Bounds of a box indicator.
#[derive(Clone, Debug, PartialEq)]
pub enum BoxBounds {
    /// Same interval on every coordinate.
    Uniform {
        lower: f64,
        upper: f64,
    },
    PerCoordinate {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl BoxBounds {
    fn at(&self, j: usize) -> (f64, f64) {
        match self {
            BoxBounds::Uniform { lower, upper } => (*lower, *upper),
            BoxBounds::PerCoordinate { lower, upper } => (lower[j], upper[j]),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            BoxBounds::PerCoordinate { lower, .. } if lower.len() != d => Err(Error::Shape(
                format!("box has {} coordinates, vector has {d}", lower.len()),
            )),
            _ => Ok(()),
        }
    }
}

/// A closed proper convex Ψ with a closed-form proximal map.
#[derive(Clone, Debug, PartialEq)]
pub enum ProxOperator {
    Zero,
    /// `λ‖x‖₁`
    L1 {
        penalty: f64,
    },
    /// Indicator of `{x : lower ≤ x ≤ upper}`.
    Box(BoxBounds),
    /// Indicator of `{x : ‖x‖ ≤ radius}`.
    L2Ball {
        radius: f64,
    },
}

// Slack for membership tests on outputs of a projection.
const DOMAIN_SLACK: f64 = 1e-12;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "step gamma = {gamma} must be positive"
        )))
    }
}

impl ProxOperator {
    pub fn l1(penalty: f64) -> Result<Self> {
        if !(penalty >= 0.0 && penalty.is_finite()) {
            return Err(Error::Parameter(format!(
                "l1 penalty {penalty} must be >= 0"
            )));
        }
        Ok(ProxOperator::L1 { penalty })
    }

    pub fn uniform_box(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Parameter(format!("empty box [{lower}, {upper}]")));
        }
        Ok(ProxOperator::Box(BoxBounds::Uniform { lower, upper }))
    }

    pub fn per_coordinate_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape("box bounds have differing lengths".into()));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| l.is_nan() || u.is_nan() || l > u)
        {
            return Err(Error::Parameter(
                "box has an empty coordinate interval".into(),
            ));
        }
        Ok(ProxOperator::Box(BoxBounds::PerCoordinate { lower, upper }))
    }

    pub fn l2_ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "ball radius {radius} must be > 0"
            )));
        }
        Ok(ProxOperator::L2Ball { radius })
    }

    /// Ψ(x), `+∞` outside the effective domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ProxOperator::Zero => 0.0,
            ProxOperator::L1 { penalty } => penalty * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxOperator::Box(b) => {
                if b.check_dim(x.len()).is_err() {
                    return f64::INFINITY;
                }
                let inside = x.iter().enumerate().all(|(j, &v)| {
                    let (lo, hi) = b.at(j);
                    v >= lo && v <= hi
                });
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxOperator::L2Ball { radius } => {
                if norm(x) <= radius * (1.0 + DOMAIN_SLACK) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_y ‖y − x‖²/(2γ) + Ψ(y)` written into `out`.
    pub fn prox_into(&self, gamma: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_gamma(gamma)?;
        if out.len() != x.len() {
            return Err(Error::Shape("prox output length differs from input".into()));
        }
        match self {
            ProxOperator::Zero => out.copy_from_slice(x),
            ProxOperator::L1 { penalty } => {
                let t = gamma * penalty;
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = v.signum() * (v.abs() - t).max(0.0);
                }
            }
            ProxOperator::Box(b) => {
                b.check_dim(x.len())?;
                for (j, (o, &v)) in out.iter_mut().zip(x).enumerate() {
                    let (lo, hi) = b.at(j);
                    *o = v.clamp(lo, hi);
                }
            }
            ProxOperator::L2Ball { radius } => {
                let r = norm(x);
                let s = if r > *radius { radius / r } else { 1.0 };
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = s * v;
                }
            }
        }
        Ok(())
    }

    pub fn prox(&self, gamma: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(gamma, x, &mut out)?;
        Ok(out)
    }
}

/// `𝒢(x, z, γ) = (x − prox(x − γz))/γ`; identically `z` when Ψ = 0.
pub fn gradient_mapping(x: &[f64], z: &[f64], gamma: f64, op: &ProxOperator) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if x.len() != z.len() {
        return Err(Error::Shape("x and z have differing lengths".into()));
    }
    if let ProxOperator::Zero = op {
        return Ok(z.to_vec());
    }
    let shifted: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - gamma * b).collect();
    let y = op.prox(gamma, &shifted)?;
    Ok(x.iter().zip(&y).map(|(a, b)| (a - b) / gamma).collect())
}

/// `η(x, z) = min_y ⟨z, y − x⟩ + ‖y − x‖²/(2γ) + Ψ(y)`, evaluated at the
/// minimizer `y₊ = prox(x − γz)`.
pub fn eta(x: &[f64], z: &[f64], gamma: f64, op: &ProxOperator) -> Result<f64> {
    check_gamma(gamma)?;
    if x.len() != z.len() {
        return Err(Error::Shape("x and z have differing lengths".into()));
    }
    if let ProxOperator::Zero = op {
        return Ok(-0.5 * gamma * dot(z, z));
    }
    let shifted: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - gamma * b).collect();
    let y = op.prox(gamma, &shifted)?;
    let step = sub(&y, x);
    Ok(dot(z, &step) + dist_sq(&y, x) / (2.0 * gamma) + op.value(&y))
}

impl fmt::Display for ProxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxOperator::Zero => write!(f, "zero"),
            ProxOperator::L1 { penalty } => write!(f, "l1:{penalty}"),
            ProxOperator::Box(BoxBounds::Uniform { lower, upper }) => {
                write!(f, "box:{lower}:{upper}")
            }
            ProxOperator::Box(BoxBounds::PerCoordinate { .. }) => write!(f, "box:per-coordinate"),
            ProxOperator::L2Ball { radius } => write!(f, "l2ball:{radius}"),
        }
    }
}

impl FromStr for ProxOperator {
    type Err = Error;

    /// `zero`, `l1:<lambda>`, `box:<lo>:<hi>`, `l2ball:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let op = match parts.as_slice() {
            ["zero"] => Ok(ProxOperator::Zero),
            ["l1", lam] => ProxOperator::l1(parse_field(s, lam, "penalty")?),
            ["box", lo, hi] => ProxOperator::uniform_box(
                parse_field(s, lo, "bound")?,
                parse_field(s, hi, "bound")?,
            ),
            ["l2ball", r] => ProxOperator::l2_ball(parse_field(s, r, "radius")?),
            _ => return Err(Error::Usage(format!("unrecognized prox '{s}'"))),
        };
        op.map_err(|e| Error::Usage(format!("'{s}': {e}")))
    }
}
