//! Communication graphs, their gossip matrices, and mixing protocols.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, AgentMatrix};
use crate::rng::{RngStream, DOMAIN_GRAPH};

const TOL: f64 = 1e-12;

/// Redraw cap for [`build_random_connected`].
pub const MAX_GRAPH_DRAWS: usize = 1000;

/// A validated symmetric, doubly stochastic, nonnegative gossip matrix with
/// second-largest eigenvalue magnitude `rho < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    weights: Vec<f64>,
    rho: f64,
    // For every column j, the (i, w_ij) pairs with w_ij != 0.
    support: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row-major weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unordered adjacent pairs `(i, j)`, `i < j`, with `w_ij > 0`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n)
                .filter(move |&j| self.weight(i, j) > 0.0)
                .map(move |j| (i, j))
        })
    }
}

/// Checks a row-major `n × n` matrix against the gossip-matrix requirements
/// and computes `rho` by a full symmetric eigendecomposition.
pub fn validate(n: usize, weights: Vec<f64>) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize(
            "mixing matrix needs at least one agent".into(),
        ));
    }
    if weights.len() != n * n {
        return Err(Error::Shape(format!(
            "mixing matrix must be {n}x{n} ({} entries), got {}",
            n * n,
            weights.len()
        )));
    }
    if let Some(pos) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NotStochastic(format!(
            "non-finite entry at ({}, {})",
            pos / n,
            pos % n
        )));
    }
    let mut w = weights;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (w[i * n + j] - w[j * n + i]).abs();
            if gap > TOL {
                return Err(Error::Asymmetric { i, j, gap });
            }
            // Exact symmetry from here on.
            let avg = 0.5 * (w[i * n + j] + w[j * n + i]);
            w[i * n + j] = avg;
            w[j * n + i] = avg;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let value = w[i * n + j];
            if value < 0.0 {
                return Err(Error::NegativeEntry { i, j, value });
            }
        }
    }
    for i in 0..n {
        let row: f64 = (0..n).map(|j| w[i * n + j]).sum();
        let col: f64 = (0..n).map(|j| w[j * n + i]).sum();
        if (row - 1.0).abs() > TOL {
            return Err(Error::NotStochastic(format!("row {i} sums to {row}")));
        }
        if (col - 1.0).abs() > TOL {
            return Err(Error::NotStochastic(format!("column {i} sums to {col}")));
        }
    }

    let eig = symmetric_eigenvalues(n, &w)?;
    let rho = if n == 1 {
        0.0
    } else {
        eig[1].abs().max(eig[n - 1].abs())
    };
    if rho >= 1.0 - TOL {
        return Err(Error::Disconnected { rho });
    }

    let support = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&i| w[i * n + j] != 0.0)
                .map(|i| (i, w[i * n + j]))
                .collect()
        })
        .collect();
    Ok(MixingMatrix {
        n,
        weights: w,
        rho,
        support,
    })
}

/// Ring where every agent keeps `self_weight` and gives `(1 − self_weight)/2`
/// to each of its two neighbours. One agent gets the 1×1 identity; two agents
/// share `1 − self_weight` with each other.
pub fn build_ring(n: usize, self_weight: f64) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize("ring needs at least one agent".into()));
    }
    if !(self_weight > 0.0 && self_weight < 1.0) {
        return Err(Error::InvalidWeight(format!(
            "self weight {self_weight} outside (0, 1)"
        )));
    }
    let mut w = vec![0.0; n * n];
    match n {
        1 => w[0] = 1.0,
        2 => {
            w[0] = self_weight;
            w[3] = self_weight;
            w[1] = 1.0 - self_weight;
            w[2] = 1.0 - self_weight;
        }
        _ => {
            let side = (1.0 - self_weight) / 2.0;
            for i in 0..n {
                w[i * n + i] = self_weight;
                w[i * n + (i + 1) % n] = side;
                w[i * n + (i + n - 1) % n] = side;
            }
        }
    }
    validate(n, w)
}

/// `W = 𝟙𝟙ᵀ/n`.
pub fn build_complete(n: usize) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize(
            "complete graph needs at least one agent".into(),
        ));
    }
    validate(n, vec![1.0 / n as f64; n * n])
}

/// Metropolis–Hastings weights `w_ij = 1/(1 + max(deg_i, deg_j))` on the given
/// undirected edges, with the remainder on the diagonal.
pub fn build_metropolis(n: usize, edges: &[(usize, usize)]) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidSize("graph needs at least one agent".into()));
    }
    let mut adj = vec![false; n * n];
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::Shape(format!("edge ({i}, {j}) outside {n} agents")));
        }
        if i != j {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
    }
    let degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| adj[i * n + j]).count())
        .collect();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if adj[i * n + j] {
                w[i * n + j] = 1.0 / (1 + degree[i].max(degree[j])) as f64;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[i * n + j]).sum();
        w[i * n + i] = 1.0 - off;
    }
    validate(n, w)
}

/// Erdős–Rényi graph with edge probability `edge_prob`, redrawn until
/// connected (at most [`MAX_GRAPH_DRAWS`] draws), with Metropolis weights.
pub fn build_random_connected(n: usize, edge_prob: f64, seed: u64) -> Result<MixingMatrix> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "random graph needs at least two agents, got {n}"
        )));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::Parameter(format!(
            "edge probability {edge_prob} outside (0, 1]"
        )));
    }
    for attempt in 0..MAX_GRAPH_DRAWS {
        let mut rng = RngStream::with_domain(seed, 0, attempt as u64, DOMAIN_GRAPH).rng();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        if is_connected(n, &edges) {
            return build_metropolis(n, &edges);
        }
    }
    Err(Error::Connectivity {
        attempts: MAX_GRAPH_DRAWS,
    })
}

fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut nbrs = vec![Vec::new(); n];
    for &(i, j) in edges {
        nbrs[i].push(j);
        nbrs[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &nbrs[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn check_shape(a: &AgentMatrix, w: &MixingMatrix) -> Result<()> {
    if a.agents() != w.n() {
        return Err(Error::Shape(format!(
            "matrix has {} agent columns, mixing matrix is {}x{}",
            a.agents(),
            w.n(),
            w.n()
        )));
    }
    Ok(())
}

fn check_rounds(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Parameter(
            "communication rounds must be at least 1".into(),
        ));
    }
    Ok(())
}

/// One gossip round `A·W`.
fn mix_once(a: &AgentMatrix, w: &MixingMatrix) -> AgentMatrix {
    let mut out = AgentMatrix::zeros(a.dim(), a.agents());
    for (j, col) in w.support.iter().enumerate() {
        let dst = out.col_mut(j);
        for &(i, wij) in col {
            for (o, v) in dst.iter_mut().zip(a.col(i)) {
                *o += wij * v;
            }
        }
    }
    out
}

/// `A·Wᵐ`.
pub fn mix(a: &AgentMatrix, w: &MixingMatrix, m: usize) -> Result<AgentMatrix> {
    check_shape(a, w)?;
    check_rounds(m)?;
    let mut cur = mix_once(a, w);
    for _ in 1..m {
        cur = mix_once(&cur, w);
    }
    Ok(cur)
}

/// Chebyshev-accelerated mixing: `m` rounds of the three-term recursion
///
/// ```text
/// A₀ = A, A₁ = A·W, μ₀ = 1, μ₁ = 1/ρ,
/// μ_{t+1} = (2/ρ)μ_t − μ_{t−1},
/// A_{t+1} = (2μ_t/(ρμ_{t+1}))·A_t·W − (μ_{t−1}/μ_{t+1})·A_{t−1}.
/// ```
///
/// The μ sequence grows geometrically, so only the ratios `μ_t/μ_{t+1}` are
/// carried. With `ρ = 0` one plain round is already exact consensus.
pub fn chebyshev_mix(a: &AgentMatrix, w: &MixingMatrix, m: usize) -> Result<AgentMatrix> {
    check_shape(a, w)?;
    check_rounds(m)?;
    let rho = w.rho();
    if rho == 0.0 {
        return mix(a, w, 1);
    }
    let mut prev = a.clone();
    let mut cur = mix_once(a, w);
    // ratio_prev = μ_{t-1}/μ_t, starting at t = 1: μ₀/μ₁ = ρ
    let mut ratio_prev = rho;
    for _ in 1..m {
        // μ_{t+1}/μ_t = 2/ρ − μ_{t−1}/μ_t
        let growth = 2.0 / rho - ratio_prev;
        let ratio = 1.0 / growth; // μ_t/μ_{t+1}
        let c_cur = 2.0 * ratio / rho;
        let c_prev = ratio_prev * ratio; // μ_{t−1}/μ_{t+1}
        let mut next = mix_once(&cur, w);
        for j in 0..next.agents() {
            let p = prev.col(j);
            for (o, pv) in next.col_mut(j).iter_mut().zip(p) {
                *o = c_cur * *o - c_prev * pv;
            }
        }
        prev = cur;
        cur = next;
        ratio_prev = ratio;
    }
    Ok(cur)
}

/// `ϱ(m) = (1 + ρ^{2m})ρ^{2m} / (1 − ρ^{2m})²`.
pub fn varrho(rho: f64, m: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} outside [0, 1)")));
    }
    check_rounds(m)?;
    let p = rho.powi(2 * m as i32);
    Ok((1.0 + p) * p / ((1.0 - p) * (1.0 - p)))
}

/// `⌈1/(1−ρ)⌉` rounds for plain mixing, `⌈1/√(1−ρ)⌉` for Chebyshev mixing.
pub fn auto_rounds(rho: f64, chebyshev: bool) -> usize {
    let gap = 1.0 - rho;
    let r = if chebyshev {
        1.0 / gap.sqrt()
    } else {
        1.0 / gap
    };
    (r.ceil() as usize).max(1)
}

/// Textual topology description: `ring:<n>:<self_weight>`, `complete:<n>`,
/// `random:<n>:<edge_prob>:<seed>`.
#[derive(Clone, Debug, PartialEq)]
pub enum TopologySpec {
    Ring { n: usize, self_weight: f64 },
    Complete { n: usize },
    Random { n: usize, edge_prob: f64, seed: u64 },
}

impl TopologySpec {
    pub fn agents(&self) -> usize {
        match *self {
            TopologySpec::Ring { n, .. }
            | TopologySpec::Complete { n }
            | TopologySpec::Random { n, .. } => n,
        }
    }

    /// Same family with a different agent count.
    pub fn with_agents(&self, n: usize) -> Self {
        let mut s = self.clone();
        match &mut s {
            TopologySpec::Ring { n: k, .. }
            | TopologySpec::Complete { n: k }
            | TopologySpec::Random { n: k, .. } => *k = n,
        }
        s
    }

    pub fn build(&self) -> Result<MixingMatrix> {
        match *self {
            TopologySpec::Ring { n, self_weight } => build_ring(n, self_weight),
            TopologySpec::Complete { n } => build_complete(n),
            TopologySpec::Random { n, edge_prob, seed } => {
                build_random_connected(n, edge_prob, seed)
            }
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Ring { n, self_weight } => write!(f, "ring:{n}:{self_weight}"),
            TopologySpec::Complete { n } => write!(f, "complete:{n}"),
            TopologySpec::Random { n, edge_prob, seed } => {
                write!(f, "random:{n}:{edge_prob}:{seed}")
            }
        }
    }
}

pub(crate) fn parse_field<T: FromStr>(spec: &str, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Usage(format!("bad {what} '{field}' in '{spec}'")))
}

impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["ring", n, w] => Ok(TopologySpec::Ring {
                n: parse_field(s, n, "agent count")?,
                self_weight: parse_field(s, w, "self weight")?,
            }),
            ["complete", n] => Ok(TopologySpec::Complete {
                n: parse_field(s, n, "agent count")?,
            }),
            ["random", n, p, seed] => Ok(TopologySpec::Random {
                n: parse_field(s, n, "agent count")?,
                edge_prob: parse_field(s, p, "edge probability")?,
                seed: parse_field(s, seed, "seed")?,
            }),
            _ => Err(Error::Usage(format!("unrecognized topology '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn ring_of_three_is_complete() {
        let w = build_ring(3, 1.0 / 3.0).unwrap();
        for v in w.weights() {
            assert_close(*v, 1.0 / 3.0, 1e-15);
        }
        assert_close(w.rho(), 0.0, 1e-12);
    }

    #[test]
    fn ring_of_four() {
        let w = build_ring(4, 1.0 / 3.0).unwrap();
        let third = 1.0 / 3.0;
        let row0 = [third, third, 0.0, third];
        for (j, v) in row0.iter().enumerate() {
            assert_close(w.weight(0, j), *v, 1e-15);
        }
        assert_close(w.rho(), 1.0 / 3.0, 1e-12);
    }

    #[test]
    fn degenerate_rings() {
        let w = build_ring(1, 1.0 / 3.0).unwrap();
        assert_eq!(w.weights(), &[1.0]);
        assert_eq!(w.rho(), 0.0);
        let w = build_ring(2, 0.25).unwrap();
        assert_eq!(w.weights(), &[0.25, 0.75, 0.75, 0.25]);
        assert_close(w.rho(), 0.5, 1e-12);
    }

    #[test]
    fn ring_errors() {
        assert!(matches!(build_ring(0, 0.5), Err(Error::InvalidSize(_))));
        assert!(matches!(build_ring(5, 0.0), Err(Error::InvalidWeight(_))));
        assert!(matches!(build_ring(5, 1.0), Err(Error::InvalidWeight(_))));
        assert!(matches!(
            build_ring(5, f64::NAN),
            Err(Error::InvalidWeight(_))
        ));
    }

    #[test]
    fn complete_graphs() {
        let w = build_complete(2).unwrap();
        assert_eq!(w.weights(), &[0.5; 4]);
        assert_eq!(w.rho(), 0.0);
        assert_eq!(build_complete(1).unwrap().weights(), &[1.0]);
        let w = build_complete(8).unwrap();
        assert!(w.weights().iter().all(|&v| v == 0.125));
        assert!(w.rho() < 1e-12);
        assert!(matches!(build_complete(0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn random_graph_with_forced_edges() {
        let w = build_random_connected(2, 1.0, 99).unwrap();
        assert_eq!(w.weights(), &[0.5; 4]);
        let w = build_random_connected(4, 1.0, 5).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_close(w.weight(i, j), 0.25, 1e-15);
            }
        }
    }

    #[test]
    fn random_graph_seeded_is_valid_and_reproducible() {
        let a = build_random_connected(5, 0.5, 7).unwrap();
        let b = build_random_connected(5, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.rho() < 1.0);
        assert!(matches!(
            build_random_connected(1, 0.5, 7),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn random_graph_gives_up() {
        // 40 agents with a vanishing edge probability never connect.
        assert!(matches!(
            build_random_connected(40, 1e-9, 1),
            Err(Error::Connectivity {
                attempts: MAX_GRAPH_DRAWS
            })
        ));
    }

    #[test]
    fn validate_rejections() {
        assert!(matches!(
            validate(2, vec![1.0, 0.0, 0.0, 1.0]),
            Err(Error::Disconnected { .. })
        ));
        assert!(matches!(
            validate(2, vec![0.4, 0.6, 0.5, 0.5]),
            Err(Error::Asymmetric { .. })
        ));
        assert!(matches!(
            validate(2, vec![0.4, 0.5, 0.5, 0.4]),
            Err(Error::NotStochastic(_))
        ));
        assert!(matches!(
            validate(2, vec![1.5, -0.5, -0.5, 1.5]),
            Err(Error::NegativeEntry { .. })
        ));
        assert!(matches!(validate(2, vec![1.0; 3]), Err(Error::Shape(_))));
        // bipartite two-agent swap has eigenvalue −1
        assert!(matches!(
            validate(2, vec![0.0, 1.0, 1.0, 0.0]),
            Err(Error::Disconnected { .. })
        ));
        let ok = validate(2, vec![0.5; 4]).unwrap();
        assert_eq!(ok.rho(), 0.0);
    }

    #[test]
    fn mix_fixed_points_and_averaging() {
        let w = build_ring(5, 1.0 / 3.0).unwrap();
        let a = AgentMatrix::from_repeated(&[1.5, -2.0, 0.25], 5);
        let out = mix(&a, &w, 3).unwrap();
        for (x, y) in out.as_slice().iter().zip(a.as_slice()) {
            assert_close(*x, *y, 1e-14);
        }

        let c = build_complete(4).unwrap();
        let b = AgentMatrix::from_columns(&[vec![1.0], vec![2.0], vec![3.0], vec![6.0]]).unwrap();
        let out = mix(&b, &c, 1).unwrap();
        for v in out.as_slice() {
            assert_close(*v, 3.0, 1e-15);
        }
    }

    #[test]
    fn mix_matches_hand_product_on_ring_of_four() {
        let w = build_ring(4, 1.0 / 3.0).unwrap();
        let c = [2.0, -1.0, 0.5, 4.0];
        // A = [c1 e1, c2 e2, c3 e3, c4 e4] (4x4 diagonal), A·W row i = c_i · W row i
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..4).map(|i| if i == j { c[j] } else { 0.0 }).collect())
            .collect();
        let a = AgentMatrix::from_columns(&cols).unwrap();
        let out = mix(&a, &w, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut expect = 0.0;
                for k in 0..4 {
                    expect += a.get(i, k) * w.weight(k, j);
                }
                assert_close(out.get(i, j), expect, 1e-15);
            }
        }
    }

    #[test]
    fn mix_errors() {
        let w = build_ring(4, 1.0 / 3.0).unwrap();
        let a = AgentMatrix::zeros(2, 3);
        assert!(matches!(mix(&a, &w, 1), Err(Error::Shape(_))));
        assert!(matches!(chebyshev_mix(&a, &w, 1), Err(Error::Shape(_))));
        let a = AgentMatrix::zeros(2, 4);
        assert!(matches!(mix(&a, &w, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn chebyshev_first_round_is_plain_mixing() {
        let w = build_ring(6, 1.0 / 3.0).unwrap();
        let a = AgentMatrix::from_columns(
            &(0..6)
                .map(|i| vec![i as f64, (i * i) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(chebyshev_mix(&a, &w, 1).unwrap(), mix(&a, &w, 1).unwrap());
        let same = AgentMatrix::from_repeated(&[3.0, -7.0], 6);
        let out = chebyshev_mix(&same, &w, 7).unwrap();
        for (x, y) in out.as_slice().iter().zip(same.as_slice()) {
            assert_close(*x, *y, 1e-12);
        }
    }

    #[test]
    fn chebyshev_on_complete_graph_falls_back() {
        let w = build_complete(3).unwrap();
        let a = AgentMatrix::from_columns(&[vec![0.0], vec![3.0], vec![6.0]]).unwrap();
        let out = chebyshev_mix(&a, &w, 5).unwrap();
        for v in out.as_slice() {
            assert_close(*v, 3.0, 1e-15);
        }
    }

    #[test]
    fn varrho_values() {
        assert_eq!(varrho(0.0, 3).unwrap(), 0.0);
        // ρ = 1/3, m = 1: ρ² = 1/9, (10/9)(1/9)/(64/81) = 10/64
        assert_close(varrho(1.0 / 3.0, 1).unwrap(), 10.0 / 64.0, 1e-15);
        assert!(varrho(1.0 / 3.0, 2).unwrap() < varrho(1.0 / 3.0, 1).unwrap());
        assert!(matches!(varrho(1.0, 1), Err(Error::Domain(_))));
        assert!(matches!(varrho(-0.1, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn auto_round_counts() {
        assert_eq!(auto_rounds(0.0, false), 1);
        assert_eq!(auto_rounds(1.0 / 3.0, false), 2);
        assert_eq!(auto_rounds(0.75, false), 4);
        assert_eq!(auto_rounds(0.75, true), 2);
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["ring:8:0.333333", "complete:4", "random:5:0.5:7"] {
            let spec: TopologySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("ring:8".parse::<TopologySpec>().is_err());
        assert!("torus:3:3".parse::<TopologySpec>().is_err());
        assert!("ring:x:0.3".parse::<TopologySpec>().is_err());
        let spec: TopologySpec = "ring:8:0.5".parse().unwrap();
        assert_eq!(spec.with_agents(16).to_string(), "ring:16:0.5");
    }
}
