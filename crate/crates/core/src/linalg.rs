//! Small dense linear algebra: the per-agent iterate matrix, vector helpers,
//! and a cyclic Jacobi eigensolver for symmetric matrices.

use crate::error::{Error, Result};

/// A `dim × agents` matrix whose column `i` holds agent `i`'s vector.
///
/// Storage is column-major so each agent's column is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentMatrix {
    dim: usize,
    agents: usize,
    data: Vec<f64>,
}

impl AgentMatrix {
    pub fn zeros(dim: usize, agents: usize) -> Self {
        Self {
            dim,
            agents,
            data: vec![0.0; dim * agents],
        }
    }

    /// Every column equal to `column`.
    pub fn from_repeated(column: &[f64], agents: usize) -> Self {
        let mut data = Vec::with_capacity(column.len() * agents);
        for _ in 0..agents {
            data.extend_from_slice(column);
        }
        Self {
            dim: column.len(),
            agents,
            data,
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Shape("columns have differing lengths".into()));
        }
        Ok(Self {
            dim,
            agents: columns.len(),
            data: columns.concat(),
        })
    }

    /// Builds from column-major data.
    pub fn from_col_major(dim: usize, agents: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * agents {
            return Err(Error::Shape(format!(
                "expected {} entries for a {dim}x{agents} matrix, got {}",
                dim * agents,
                data.len()
            )));
        }
        Ok(Self { dim, agents, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn col_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        (0..self.agents).map(move |i| self.col(i))
    }

    pub fn get(&self, row: usize, agent: usize) -> f64 {
        self.data[agent * self.dim + row]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column mean `(1/n) Σ_i m_i`.
    pub fn mean_column(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for c in self.columns() {
            axpy(1.0, c, &mut mean);
        }
        let inv = 1.0 / self.agents as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        mean
    }

    /// Squared Frobenius norm of the deviation from the column mean, `‖M − M̄‖²`.
    pub fn deviation_sq(&self) -> f64 {
        let mean = self.mean_column();
        self.columns().map(|c| dist_sq(c, &mean)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        norm_sq(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y ← y + a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Eigenvalues of a symmetric `n × n` row-major matrix, sorted in
/// descending order, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(n: usize, matrix: &[f64]) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(Error::Shape(format!(
            "expected {} entries for a {n}x{n} matrix, got {}",
            n * n,
            matrix.len()
        )));
    }
    let mut a = matrix.to_vec();
    let scale = norm_sq(&a).sqrt().max(f64::MIN_POSITIVE);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                // signum(0) is 1.0 for +0.0, which gives the 45° rotation
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_deviation() {
        let m = AgentMatrix::from_columns(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(m.mean_column(), vec![1.0, 2.0]);
        assert_eq!(m.deviation_sq(), 4.0);
        assert_eq!(m.get(1, 1), 3.0);
    }

    #[test]
    fn ragged_columns_rejected() {
        assert!(AgentMatrix::from_columns(&[vec![0.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn jacobi_on_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1
        let eig = symmetric_eigenvalues(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((eig[0] - 3.0).abs() < 1e-14);
        assert!((eig[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_handles_diagonal_and_empty() {
        let eig =
            symmetric_eigenvalues(3, &[1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        assert_eq!(eig, vec![5.0, 1.0, -2.0]);
        assert!(symmetric_eigenvalues(0, &[]).unwrap().is_empty());
    }
}
