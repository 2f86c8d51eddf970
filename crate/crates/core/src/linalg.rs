//! Dense complex linear algebra over small Hilbert spaces.
//!
//! Everything here is row-major. Tensor products use the left factor as the
//! slow index: `(a ⊗ b)[i * b.dim() + j] = a[i] * b[j]`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Largest state dimension any operation will produce.
pub const MAX_DIM: usize = 1 << 20;

/// Tolerance for structural checks (normalization, completeness, isometry).
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// Tolerance for arithmetic identities.
pub const ARITHMETIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension {dim} exceeds capacity {max}")]
    Capacity { dim: usize, max: usize },
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: String,
        expected: usize,
        found: usize,
    },
}

fn checked_dim(a: usize, b: usize) -> Result<usize, LinalgError> {
    match a.checked_mul(b) {
        Some(d) if d <= MAX_DIM => Ok(d),
        Some(d) => Err(LinalgError::Capacity { dim: d, max: MAX_DIM }),
        None => Err(LinalgError::Capacity {
            dim: usize::MAX,
            max: MAX_DIM,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
    labels: Option<Vec<String>>,
}

impl StateVector {
    pub fn new(amps: Vec<C64>) -> Self {
        StateVector { amps, labels: None }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::new(amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); dim])
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amps[index] = C64::new(1.0, 0.0);
        v
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        debug_assert_eq!(labels.len(), self.amps.len());
        self.labels = Some(labels);
        self
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Squared 2-norm.
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr().sqrt() - 1.0).abs() <= tol
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::new(self.amps.iter().map(|&z| z * factor).collect())
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Kronecker product of two state vectors.
pub fn tensor(a: &StateVector, b: &StateVector) -> Result<StateVector, LinalgError> {
    checked_dim(a.dim(), b.dim())?;
    let amps = a
        .amps
        .iter()
        .flat_map(|&x| b.amps.iter().map(move |&y| x * y))
        .collect();
    Ok(StateVector::new(amps))
}

/// Inner product, conjugate-linear in the first argument.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<C64, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::Shape {
            context: "inner product".into(),
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// Rectangular complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct LinearMap {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for LinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "LinearMap {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  {}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl LinearMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinearMap {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a map from row-major entries. Panics if the length is wrong.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must be rows*cols");
        LinearMap { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Self {
        Self::from_rows(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// `|ket⟩⟨bra|`
    pub fn outer(ket: &StateVector, bra: &StateVector) -> Self {
        let mut m = Self::zeros(ket.dim(), bra.dim());
        for (r, k) in ket.amps.iter().enumerate() {
            for (c, b) in bra.amps.iter().enumerate() {
                m.data[r * m.cols + c] = k * b.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, z: C64) {
        self.data[r * self.cols + c] = z;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m.data[c * self.rows + r] = self.get(r, c).conj();
            }
        }
        m
    }

    pub fn scale(&self, factor: C64) -> Self {
        LinearMap {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn add(&self, other: &LinearMap) -> Result<LinearMap, LinalgError> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(LinalgError::Shape {
                context: "map addition".into(),
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(LinearMap {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &LinearMap) -> Result<LinearMap, LinalgError> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &LinearMap) -> Result<LinearMap, LinalgError> {
        let rows = checked_dim(self.rows, other.rows)?;
        let cols = checked_dim(self.cols, other.cols)?;
        let mut m = Self::zeros(rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        m.set(r1 * other.rows + r2, c1 * other.cols + c2, a * other.get(r2, c2));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn max_abs_diff(&self, other: &LinearMap) -> f64 {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let m = DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        m.singular_values().max()
    }
}

/// Matrix-vector product.
pub fn apply(m: &LinearMap, v: &StateVector) -> Result<StateVector, LinalgError> {
    if m.cols != v.dim() {
        return Err(LinalgError::Shape {
            context: "operator application".into(),
            expected: m.cols,
            found: v.dim(),
        });
    }
    let amps = m
        .data
        .chunks_exact(m.cols.max(1))
        .take(m.rows)
        .map(|row| row.iter().zip(&v.amps).map(|(a, x)| a * x).sum())
        .collect();
    Ok(StateVector::new(amps))
}

/// Matrix product `second · first`.
pub fn compose(second: &LinearMap, first: &LinearMap) -> Result<LinearMap, LinalgError> {
    if second.cols != first.rows {
        return Err(LinalgError::Shape {
            context: "composition".into(),
            expected: second.cols,
            found: first.rows,
        });
    }
    let mut m = LinearMap::zeros(second.rows, first.cols);
    for r in 0..second.rows {
        for k in 0..second.cols {
            let a = second.get(r, k);
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..first.cols {
                m.data[r * first.cols + c] += a * first.get(k, c);
            }
        }
    }
    Ok(m)
}
