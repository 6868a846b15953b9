//! Exact affine flows `v' = G v + g` (constant `g`) for an assembled generator.
//!
//! `v(t) = e^{tG} v0 + t phi1(tG) g` is evaluated either modally, through the
//! eigendecomposition of the symmetrized tridiagonal factor(s), or densely by
//! scaling and squaring with a degree-13 Padé approximant. The dense path is
//! the oracle for the spectral one and the fallback when the operator cannot
//! be symmetrized.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{DiscreteOperator, Tridiagonal};

/// Largest dimension accepted by the dense path.
pub const DENSE_MAX_DIM: usize = 4096;

/// Below this modulus `phi1` switches to its Taylor series.
pub const PHI1_SERIES_SWITCH: f64 = 1e-5;

/// Exponent beyond which `e^{t lambda}` is treated as an overflow.
const MAX_EXPONENT: f64 = 700.0;

/// Symmetrizer spread above which a plan is flagged as ill-conditioned.
const SYMMETRIZER_SPREAD_WARN: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpFuncError {
    #[error("off-diagonal pair {index} has non-positive product {product}; operator is not symmetrizable")]
    NotSymmetrizable { index: usize, product: f64 },
    #[error("operator carries neither a tridiagonal action nor Kronecker metadata")]
    NoSpectralStructure,
    #[error("dense path limited to dimension {DENSE_MAX_DIM}, got {0}")]
    TooLargeForDense(usize),
    #[error("negative duration {0}")]
    NegativeTime(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exponential overflows: t * max(Re lambda) = {0}")]
    Unstable(f64),
}

pub type Result<T> = std::result::Result<T, OpFuncError>;

/// `phi1(z) = (e^z - 1) / z`, continuous at zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < PHI1_SERIES_SWITCH {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
    } else {
        z.exp_m1() / z
    }
}

/// Eigendecomposition `T = V diag(lambda) V^{-1}` of a symmetrizable
/// tridiagonal matrix, with `V = S Q` for the diagonal symmetrizer `S`.
#[derive(Clone, Debug)]
pub struct TridiagonalSpectrum {
    pub eigenvalues: DVector<f64>,
    /// `V^{-1}`
    pub forward: DMatrix<f64>,
    /// `V`
    pub backward: DMatrix<f64>,
    pub symmetrizer: DVector<f64>,
}

impl TridiagonalSpectrum {
    pub fn new(t: &Tridiagonal) -> Result<Self> {
        let n = t.dim();
        let mut sym = DVector::from_element(n, 1.0);
        let mut off = vec![0.0; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            let product = t.lower[i] * t.upper[i];
            if product > 0.0 {
                sym[i + 1] = sym[i] * (t.lower[i] / t.upper[i]).sqrt();
                off[i] = product.sqrt() * t.upper[i].signum();
            } else if t.lower[i] == 0.0 && t.upper[i] == 0.0 {
                sym[i + 1] = sym[i];
            } else {
                return Err(OpFuncError::NotSymmetrizable { index: i, product });
            }
        }
        // rescale to keep the symmetrizer centered around one
        let scale = (sym.max() * sym.min()).sqrt();
        sym /= scale;

        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = t.diag[i];
            if i + 1 < n {
                s[(i, i + 1)] = off[i];
                s[(i + 1, i)] = off[i];
            }
        }
        let eig = SymmetricEigen::new(s);
        let q = eig.eigenvectors;
        let mut backward = q.clone();
        let mut forward = q.transpose();
        for i in 0..n {
            backward.row_mut(i).scale_mut(sym[i]);
            forward.column_mut(i).unscale_mut(sym[i]);
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            forward,
            backward,
            symmetrizer: sym,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn spread(&self) -> f64 {
        self.symmetrizer.max() / self.symmetrizer.min()
    }
}

#[derive(Clone, Debug)]
pub enum SpectralPlan {
    OneD(TridiagonalSpectrum),
    /// Kronecker sum `I (x) L_x + L_y (x) I`; modal eigenvalues are `lambda_i + mu_j`.
    TwoD {
        x: TridiagonalSpectrum,
        y: TridiagonalSpectrum,
    },
}

pub fn plan_spectral(op: &DiscreteOperator) -> Result<SpectralPlan> {
    if let Some(t) = op.tridiagonal() {
        return Ok(SpectralPlan::OneD(TridiagonalSpectrum::new(t)?));
    }
    if let Some(k) = op.kronecker() {
        return Ok(SpectralPlan::TwoD {
            x: TridiagonalSpectrum::new(&k.x)?,
            y: TridiagonalSpectrum::new(&k.y)?,
        });
    }
    Err(OpFuncError::NoSpectralStructure)
}

impl SpectralPlan {
    pub fn dim(&self) -> usize {
        match self {
            SpectralPlan::OneD(s) => s.dim(),
            SpectralPlan::TwoD { x, y } => x.dim() * y.dim(),
        }
    }

    /// Effective modal eigenvalues in modal storage order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self {
            SpectralPlan::OneD(s) => s.eigenvalues.iter().copied().collect(),
            SpectralPlan::TwoD { x, y } => y
                .eigenvalues
                .iter()
                .flat_map(|&mu| x.eigenvalues.iter().map(move |&l| l + mu))
                .collect(),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self {
            SpectralPlan::OneD(s) => s.eigenvalues.max(),
            SpectralPlan::TwoD { x, y } => x.eigenvalues.max() + y.eigenvalues.max(),
        }
    }

    pub fn ill_conditioned(&self) -> bool {
        match self {
            SpectralPlan::OneD(s) => s.spread() > SYMMETRIZER_SPREAD_WARN,
            SpectralPlan::TwoD { x, y } => x.spread() * y.spread() > SYMMETRIZER_SPREAD_WARN,
        }
    }

    fn to_modal(&self, v: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SpectralPlan::OneD(s) => DMatrix::from_column_slice(v.len(), 1, (&s.forward * v).as_slice()),
            SpectralPlan::TwoD { x, y } => {
                let u = DMatrix::from_column_slice(x.dim(), y.dim(), v.as_slice());
                &x.forward * u * y.forward.transpose()
            }
        }
    }

    fn from_modal(&self, c: &DMatrix<f64>) -> DVector<f64> {
        match self {
            SpectralPlan::OneD(s) => &s.backward * c.column(0),
            SpectralPlan::TwoD { x, y } => {
                let u = &x.backward * c * y.backward.transpose();
                DVector::from_column_slice(u.as_slice())
            }
        }
    }

    /// Applies the modal filter `phi(lambda)` built from the eigenvalues.
    pub fn apply_function(&self, v: &DVector<f64>, phi: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut c = self.to_modal(v);
        self.scale_modal(&mut c, |lambda, c| c * phi(lambda));
        self.from_modal(&c)
    }

    fn scale_modal(&self, c: &mut DMatrix<f64>, f: impl Fn(f64, f64) -> f64) {
        match self {
            SpectralPlan::OneD(s) => {
                for (ci, &l) in c.iter_mut().zip(s.eigenvalues.iter()) {
                    *ci = f(l, *ci);
                }
            }
            SpectralPlan::TwoD { x, y } => {
                for (j, &mu) in y.eigenvalues.iter().enumerate() {
                    for (i, &l) in x.eigenvalues.iter().enumerate() {
                        c[(i, j)] = f(l + mu, c[(i, j)]);
                    }
                }
            }
        }
    }

    /// `G v` reconstructed from the decomposition.
    pub fn apply_generator(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_function(v, |l| l)
    }

    fn check_exponent(&self, t: f64) -> Result<()> {
        let e = t * self.max_eigenvalue();
        if e > MAX_EXPONENT {
            return Err(OpFuncError::Unstable(e));
        }
        Ok(())
    }

    pub fn expm_action(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_exponent(t)?;
        Ok(self.apply_function(v, |l| (t * l).exp()))
    }

    pub fn affine_flow(&self, t: f64, v0: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_exponent(t)?;
        let mut c0 = self.to_modal(v0);
        let cg = self.to_modal(g);
        match self {
            SpectralPlan::OneD(s) => {
                for ((c, &cgi), &l) in c0.iter_mut().zip(cg.iter()).zip(s.eigenvalues.iter()) {
                    *c = (t * l).exp() * *c + t * phi1(t * l) * cgi;
                }
            }
            SpectralPlan::TwoD { x, y } => {
                for (j, &mu) in y.eigenvalues.iter().enumerate() {
                    for (i, &lx) in x.eigenvalues.iter().enumerate() {
                        let z = t * (lx + mu);
                        c0[(i, j)] = z.exp() * c0[(i, j)] + t * phi1(z) * cg[(i, j)];
                    }
                }
            }
        }
        Ok(self.from_modal(&c0))
    }
}

/// Degree-13 Padé scaling-and-squaring matrix exponential (Higham 2005).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm1 = a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is singular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `e^{tG}` and `t phi1(tG)` for a fixed `t`.
#[derive(Debug)]
struct DenseFlowPair {
    exp: DMatrix<f64>,
    phi: DMatrix<f64>,
}

/// Dense generator with a per-duration cache of its flow matrices.
#[derive(Debug)]
pub struct DensePropagator {
    matrix: DMatrix<f64>,
    cache: Mutex<HashMap<u64, Arc<DenseFlowPair>>>,
}

impl Clone for DensePropagator {
    fn clone(&self) -> Self {
        Self::new(self.matrix.clone()).expect("already validated")
    }
}

impl DensePropagator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() > DENSE_MAX_DIM {
            return Err(OpFuncError::TooLargeForDense(matrix.nrows()));
        }
        Ok(Self {
            matrix,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn flow_pair(&self, t: f64) -> Result<Arc<DenseFlowPair>> {
        if let Some(p) = self.cache.lock().unwrap().get(&t.to_bits()) {
            return Ok(p.clone());
        }
        // exp([[tG, tI], [0, 0]]) = [[e^{tG}, t phi1(tG)], [0, I]]
        let n = self.matrix.nrows();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&(&self.matrix * t));
        block.view_mut((0, n), (n, n)).fill_diagonal(t);
        let e = expm(&block);
        let exp = e.view((0, 0), (n, n)).into_owned();
        let phi = e.view((0, n), (n, n)).into_owned();
        if exp.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            let bound = self.matrix.row_iter().map(|r| r.iter().sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
            return Err(OpFuncError::Unstable(t * bound));
        }
        let pair = Arc::new(DenseFlowPair { exp, phi });
        self.cache.lock().unwrap().insert(t.to_bits(), pair.clone());
        Ok(pair)
    }

    pub fn expm_action(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.flow_pair(t)?.exp * v)
    }

    pub fn affine_flow(&self, t: f64, v0: &DVector<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.flow_pair(t)?;
        Ok(&p.exp * v0 + &p.phi * g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Spectral,
    Dense,
}

#[derive(Clone, Debug)]
pub struct AffineFlowResult {
    pub state: DVector<f64>,
    pub backend: Backend,
    pub ill_conditioned: bool,
}

/// Evaluates flows of a fixed generator `G = L_h`.
#[derive(Clone, Debug)]
pub enum Propagator {
    Spectral(SpectralPlan),
    Dense(DensePropagator),
}

impl Propagator {
    /// Spectral plan when the structure allows one, dense otherwise.
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        match plan_spectral(op) {
            Ok(plan) => Ok(Propagator::Spectral(plan)),
            Err(OpFuncError::NotSymmetrizable { .. }) | Err(OpFuncError::NoSpectralStructure) => {
                log::info!("falling back to dense matrix functions (dim {})", op.dim());
                Self::dense(op)
            }
            Err(e) => Err(e),
        }
    }

    pub fn spectral(op: &DiscreteOperator) -> Result<Self> {
        Ok(Propagator::Spectral(plan_spectral(op)?))
    }

    pub fn dense(op: &DiscreteOperator) -> Result<Self> {
        if op.dim() > DENSE_MAX_DIM {
            return Err(OpFuncError::TooLargeForDense(op.dim()));
        }
        Ok(Propagator::Dense(DensePropagator::new(op.to_dense())?))
    }

    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        Ok(Propagator::Dense(DensePropagator::new(g)?))
    }

    pub fn backend(&self) -> Backend {
        match self {
            Propagator::Spectral(_) => Backend::Spectral,
            Propagator::Dense(_) => Backend::Dense,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Propagator::Spectral(p) => p.dim(),
            Propagator::Dense(d) => d.matrix.nrows(),
        }
    }

    fn check(&self, t: f64, v: &DVector<f64>) -> Result<()> {
        if t < 0.0 {
            return Err(OpFuncError::NegativeTime(t));
        }
        if v.len() != self.dim() {
            return Err(OpFuncError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `e^{tG} v`
    pub fn expm_action(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(t, v)?;
        if t == 0.0 {
            return Ok(v.clone());
        }
        match self {
            Propagator::Spectral(p) => p.expm_action(t, v),
            Propagator::Dense(d) => d.expm_action(t, v),
        }
    }

    /// `e^{tG} v0 + t phi1(tG) g`
    pub fn affine_flow(&self, v0: &DVector<f64>, g: &DVector<f64>, t: f64) -> Result<AffineFlowResult> {
        self.check(t, v0)?;
        self.check(t, g)?;
        let state = if t == 0.0 {
            v0.clone()
        } else {
            match self {
                Propagator::Spectral(p) => p.affine_flow(t, v0, g)?,
                Propagator::Dense(d) => d.affine_flow(t, v0, g)?,
            }
        };
        Ok(AffineFlowResult {
            state,
            backend: self.backend(),
            ill_conditioned: match self {
                Propagator::Spectral(p) => p.ill_conditioned(),
                Propagator::Dense(_) => false,
            },
        })
    }
}
