//! Uniform grids and second-order finite-difference discretizations of the
//! elliptic operator under oblique boundary conditions.
//!
//! Every assembled operator is the pair `(L_h, r)` such that the semi-discrete
//! problem reads `u' = L_h u + r + f(t, u)`. Boundary conditions have the form
//! `beta * du/dn + alpha * u = b` where `dn` is the derivative along the
//! coordinate normal to the face (taken literally, not outward-signed).
//!
//! Dirichlet faces (`beta == 0`) drop their boundary node from the unknowns.
//! Neumann and Robin faces keep it and eliminate the ghost node outside the
//! domain with the centered boundary stencil.
//!
//! 2D unknowns are ordered row-major with `x` running fastest, so the unknown
//! at `(i, j)` lives at `j * nx + i`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("interval [{x_min}, {x_max}] is empty or inverted")]
    EmptyInterval { x_min: f64, x_max: f64 },
    #[error("at least 2 interior nodes are required, got {0}")]
    TooFewNodes(usize),
    #[error("degenerate boundary condition on the {0} face: alpha and beta are both zero")]
    DegenerateBoundary(Side),
    #[error("diffusion coefficient a({x}) = {value} is not positive")]
    NotElliptic { x: f64, value: f64 },
    #[error("{side} face carries {got} data samples, expected 1 or {expected}")]
    FaceDataLength {
        side: Side,
        got: usize,
        expected: usize,
    },
    #[error("grid node inclusion on the {0} face does not match its boundary condition")]
    GridMismatch(Side),
    #[error("operator is not separable: {0}")]
    NonSeparable(String),
}

pub type Result<T> = std::result::Result<T, DiscretizeError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Boundary data carried by one face.
///
/// In 2D a face may carry one sample per unknown node along the face; a scalar
/// is broadcast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaceData {
    Scalar(f64),
    Samples(Vec<f64>),
}

impl FaceData {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            FaceData::Scalar(b) => *b,
            FaceData::Samples(v) => v[k],
        }
    }

    fn check_len(&self, side: Side, expected: usize) -> Result<()> {
        match self {
            FaceData::Scalar(_) => Ok(()),
            FaceData::Samples(v) if v.len() == expected || v.len() == 1 => Ok(()),
            FaceData::Samples(v) => Err(DiscretizeError::FaceDataLength {
                side,
                got: v.len(),
                expected,
            }),
        }
    }

    fn scaled(&self, s: f64) -> FaceData {
        match self {
            FaceData::Scalar(b) => FaceData::Scalar(s * b),
            FaceData::Samples(v) => FaceData::Samples(v.iter().map(|b| s * b).collect()),
        }
    }
}

/// Oblique boundary condition `beta * du/dn + alpha * u = data` on one face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceBC {
    pub alpha: f64,
    pub beta: f64,
    pub data: FaceData,
}

impl FaceBC {
    pub fn new(alpha: f64, beta: f64, data: FaceData) -> Self {
        Self { alpha, beta, data }
    }

    pub fn dirichlet(b: f64) -> Self {
        Self::new(1.0, 0.0, FaceData::Scalar(b))
    }

    pub fn neumann(b: f64) -> Self {
        Self::new(0.0, 1.0, FaceData::Scalar(b))
    }

    pub fn robin(alpha: f64, beta: f64, b: f64) -> Self {
        Self::new(alpha, beta, FaceData::Scalar(b))
    }

    pub fn is_dirichlet(&self) -> bool {
        self.beta == 0.0
    }

    pub fn is_neumann(&self) -> bool {
        self.alpha == 0.0 && self.beta != 0.0
    }

    /// Whether the boundary node on this face carries an unknown.
    pub fn includes_boundary_node(&self) -> bool {
        !self.is_dirichlet()
    }

    pub fn with_data(&self, data: FaceData) -> Self {
        Self {
            data,
            ..self.clone()
        }
    }

    /// Same condition with homogeneous data.
    pub fn homogeneous(&self) -> Self {
        self.with_data(FaceData::Scalar(0.0))
    }

    pub fn scaled_data(&self, s: f64) -> Self {
        self.with_data(self.data.scaled(s))
    }

    pub fn validate(&self, side: Side) -> Result<()> {
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(DiscretizeError::DegenerateBoundary(side));
        }
        Ok(())
    }
}

/// Uniform grid on `[x_min, x_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_unknowns: usize,
    pub h: f64,
    pub includes_left: bool,
    pub includes_right: bool,
}

pub fn build_grid_1d(
    x_min: f64,
    x_max: f64,
    n_interior: usize,
    bc_left: &FaceBC,
    bc_right: &FaceBC,
) -> Result<Grid1D> {
    if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(DiscretizeError::EmptyInterval { x_min, x_max });
    }
    if n_interior < 2 {
        return Err(DiscretizeError::TooFewNodes(n_interior));
    }
    bc_left.validate(Side::Left)?;
    bc_right.validate(Side::Right)?;
    let includes_left = bc_left.includes_boundary_node();
    let includes_right = bc_right.includes_boundary_node();
    Ok(Grid1D {
        x_min,
        x_max,
        n_unknowns: n_interior + includes_left as usize + includes_right as usize,
        h: (x_max - x_min) / (n_interior + 1) as f64,
        includes_left,
        includes_right,
    })
}

impl Grid1D {
    pub fn segments(&self) -> usize {
        self.n_unknowns + 1 - self.includes_left as usize - self.includes_right as usize
    }

    /// Coordinate of unknown `k`.
    pub fn node(&self, k: usize) -> f64 {
        let offset = k + 1 - self.includes_left as usize;
        if offset == self.segments() {
            return self.x_max;
        }
        self.x_min + offset as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_unknowns).map(|k| self.node(k)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n_unknowns, (0..self.n_unknowns).map(|k| f(self.node(k))))
    }

    /// Field on every grid node, boundary nodes included. Dirichlet nodes
    /// receive `b / alpha`.
    pub fn full_field(&self, u: &DVector<f64>, left: &FaceBC, right: &FaceBC) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.segments() + 1);
        if !self.includes_left {
            out.push((self.x_min, left.data.at(0) / left.alpha));
        }
        out.extend((0..self.n_unknowns).map(|k| (self.node(k), u[k])));
        if !self.includes_right {
            out.push((self.x_max, right.data.at(0) / right.alpha));
        }
        out
    }
}

/// Tensor grid on `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub grid_x: Grid1D,
    pub grid_y: Grid1D,
}

impl Grid2D {
    pub fn new(grid_x: Grid1D, grid_y: Grid1D) -> Self {
        Self { grid_x, grid_y }
    }

    pub fn nx(&self) -> usize {
        self.grid_x.n_unknowns
    }

    pub fn ny(&self) -> usize {
        self.grid_y.n_unknowns
    }

    pub fn n_unknowns(&self) -> usize {
        self.nx() * self.ny()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let xs = self.grid_x.nodes();
        let ys = self.grid_y.nodes();
        DVector::from_iterator(
            self.n_unknowns(),
            ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).map(|(x, y)| f(x, y)),
        )
    }
}

/// The four faces of a rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceSet2D {
    pub left: FaceBC,
    pub right: FaceBC,
    pub bottom: FaceBC,
    pub top: FaceBC,
}

impl FaceSet2D {
    pub fn get(&self, side: Side) -> &FaceBC {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    pub fn get_mut(&mut self, side: Side) -> &mut FaceBC {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
            Side::Bottom => &mut self.bottom,
            Side::Top => &mut self.top,
        }
    }
}

pub fn build_grid_2d(
    (x_min, x_max): (f64, f64),
    (y_min, y_max): (f64, f64),
    (nx_interior, ny_interior): (usize, usize),
    faces: &FaceSet2D,
) -> Result<Grid2D> {
    let gx = build_grid_1d(x_min, x_max, nx_interior, &faces.left, &faces.right)?;
    faces.bottom.validate(Side::Bottom)?;
    faces.top.validate(Side::Top)?;
    let gy = build_grid_1d(y_min, y_max, ny_interior, &faces.bottom, &faces.top)?;
    Ok(Grid2D::new(gx, gy))
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficients of `D u = (a u')' + c u' + d u` in 1D.
#[derive(Clone)]
pub struct EllipticCoefficients1D {
    pub a: ScalarFn,
    pub c: ScalarFn,
    pub d: ScalarFn,
}

impl EllipticCoefficients1D {
    pub fn new(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            a: Arc::new(a),
            c: Arc::new(c),
            d: Arc::new(d),
        }
    }

    pub fn constant(a: f64, c: f64, d: f64) -> Self {
        Self::new(move |_| a, move |_| c, move |_| d)
    }

    pub fn laplacian() -> Self {
        Self::constant(1.0, 0.0, 0.0)
    }
}

impl fmt::Debug for EllipticCoefficients1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticCoefficients1D").finish_non_exhaustive()
    }
}

/// Tridiagonal matrix; `lower[i] = A[i+1, i]`, `upper[i] = A[i, i+1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(u.len(), n);
        if n == 1 {
            out[0] = self.diag[0] * u[0];
            return;
        }
        out[0] = self.diag[0] * u[0] + self.upper[0] * u[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i - 1] * u[i - 1] + self.diag[i] * u[i] + self.upper[i] * u[i + 1];
        }
        out[n - 1] = self.lower[n - 2] * u[n - 2] + self.diag[n - 1] * u[n - 1];
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(u.as_slice(), out.as_mut_slice());
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.lower[i];
                m[(i, i + 1)] = self.upper[i];
            }
        }
        m
    }
}

/// Compressed sparse row matrix, used for the assembled 5-point stencil.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            // merge duplicates from ghost elimination
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * u[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }
}

/// `L = I_y (x) L_x + L_y (x) I_x` for the row-major, x-fastest ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KroneckerSum {
    pub x: Tridiagonal,
    pub y: Tridiagonal,
}

impl KroneckerSum {
    pub fn dim(&self) -> usize {
        self.x.dim() * self.y.dim()
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let nx = self.x.dim();
        let ny = self.y.dim();
        for j in 0..ny {
            self.x
                .apply_into(&u[j * nx..(j + 1) * nx], &mut out[j * nx..(j + 1) * nx]);
        }
        let mut col = vec![0.0; ny];
        let mut tmp = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = u[j * nx + i];
            }
            self.y.apply_into(&col, &mut tmp);
            for j in 0..ny {
                out[j * nx + i] += tmp[j];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let ix = DMatrix::<f64>::identity(self.x.dim(), self.x.dim());
        let iy = DMatrix::<f64>::identity(self.y.dim(), self.y.dim());
        iy.kronecker(&self.x.to_dense()) + self.y.to_dense().kronecker(&ix)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorAction {
    Banded(Tridiagonal),
    FivePoint {
        stencil: SparseMatrix,
        kronecker: Option<KroneckerSum>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OperatorGrid {
    OneD(Grid1D),
    TwoD(Grid2D),
}

/// Assembled `(L_h, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    pub action: OperatorAction,
    pub r: DVector<f64>,
    pub grid: OperatorGrid,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.action {
            OperatorAction::Banded(t) => t.apply_into(u, out),
            OperatorAction::FivePoint { stencil, .. } => stencil.apply_into(u, out),
        }
    }

    /// `L_h u`
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(u.as_slice(), out.as_mut_slice());
        out
    }

    /// `L_h u + r`
    pub fn affine_rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        self.apply(u) + &self.r
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.action {
            OperatorAction::Banded(t) => t.to_dense(),
            OperatorAction::FivePoint { stencil, .. } => stencil.to_dense(),
        }
    }

    pub fn tridiagonal(&self) -> Option<&Tridiagonal> {
        match &self.action {
            OperatorAction::Banded(t) => Some(t),
            _ => None,
        }
    }

    pub fn kronecker(&self) -> Option<&KroneckerSum> {
        match &self.action {
            OperatorAction::FivePoint { kronecker, .. } => kronecker.as_ref(),
            _ => None,
        }
    }

    /// Same operator with `r` replaced.
    pub fn with_boundary_vector(&self, r: DVector<f64>) -> Self {
        assert_eq!(r.len(), self.dim());
        Self {
            r,
            ..self.clone()
        }
    }
}

fn check_inclusion(included: bool, bc: &FaceBC, side: Side) -> Result<()> {
    if included != bc.includes_boundary_node() {
        return Err(DiscretizeError::GridMismatch(side));
    }
    Ok(())
}

fn positive_a(x: f64, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(DiscretizeError::NotElliptic { x, value })
    }
}

/// Conservative centered discretization of `(a u')' + c u' + d u`.
pub fn assemble_operator_1d(
    grid: &Grid1D,
    coeffs: &EllipticCoefficients1D,
    bc_left: &FaceBC,
    bc_right: &FaceBC,
) -> Result<DiscreteOperator> {
    bc_left.validate(Side::Left)?;
    bc_right.validate(Side::Right)?;
    check_inclusion(grid.includes_left, bc_left, Side::Left)?;
    check_inclusion(grid.includes_right, bc_right, Side::Right)?;

    let n = grid.n_unknowns;
    let h = grid.h;
    let h2 = h * h;
    let mut lower = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut r = DVector::zeros(n);

    for k in 0..n {
        let x = grid.node(k);
        let at_left_face = k == 0 && grid.includes_left;
        let at_right_face = k == n - 1 && grid.includes_right;

        // Mid-node values outside the closed domain are linearly extrapolated.
        let a_minus = if at_left_face {
            2.0 * (coeffs.a)(x) - (coeffs.a)(x + 0.5 * h)
        } else {
            (coeffs.a)(x - 0.5 * h)
        };
        let a_plus = if at_right_face {
            2.0 * (coeffs.a)(x) - (coeffs.a)(x - 0.5 * h)
        } else {
            (coeffs.a)(x + 0.5 * h)
        };
        let a_minus = positive_a(x - 0.5 * h, a_minus)?;
        let a_plus = positive_a(x + 0.5 * h, a_plus)?;
        positive_a(x, (coeffs.a)(x))?;
        let c = (coeffs.c)(x);

        let mut west = a_minus / h2 - c / (2.0 * h);
        let mut east = a_plus / h2 + c / (2.0 * h);
        let mut center = -(a_minus + a_plus) / h2 + (coeffs.d)(x);

        if k == 0 {
            if at_left_face {
                // u_{-1} = u_1 - (2h / beta) (b - alpha u_0)
                let s = 2.0 * h / bc_left.beta;
                east += west;
                center += west * s * bc_left.alpha;
                r[k] -= west * s * bc_left.data.at(0);
            } else {
                r[k] += west * bc_left.data.at(0) / bc_left.alpha;
            }
            west = 0.0;
        }
        if k == n - 1 {
            if at_right_face {
                // u_{N+1} = u_{N-1} + (2h / beta) (b - alpha u_N)
                let s = 2.0 * h / bc_right.beta;
                west += east;
                center -= east * s * bc_right.alpha;
                r[k] += east * s * bc_right.data.at(0);
            } else {
                r[k] += east * bc_right.data.at(0) / bc_right.alpha;
            }
            east = 0.0;
        }

        diag[k] = center;
        if k > 0 {
            lower[k - 1] = west;
        }
        if k + 1 < n {
            upper[k] = east;
        }
    }

    Ok(DiscreteOperator {
        action: OperatorAction::Banded(Tridiagonal { lower, diag, upper }),
        r,
        grid: OperatorGrid::OneD(grid.clone()),
    })
}

/// Stencil weights along one axis for unknown `k`, with ghost elimination.
/// Returns (weights on k-1, k, k+1) and the data coefficients for the low and
/// high faces: row contribution `= w_m u_{k-1} + w_c u_k + w_p u_{k+1} + d_lo b_lo + d_hi b_hi`.
struct AxisRow {
    minus: f64,
    center: f64,
    plus: f64,
    data_lo: f64,
    data_hi: f64,
}

fn axis_row(grid: &Grid1D, lo: &FaceBC, hi: &FaceBC, k: usize) -> AxisRow {
    let n = grid.n_unknowns;
    let w = 1.0 / (grid.h * grid.h);
    let mut row = AxisRow {
        minus: w,
        center: -2.0 * w,
        plus: w,
        data_lo: 0.0,
        data_hi: 0.0,
    };
    if k == 0 {
        if grid.includes_left {
            let s = 2.0 * grid.h / lo.beta;
            row.plus += row.minus;
            row.center += row.minus * s * lo.alpha;
            row.data_lo = -row.minus * s;
        } else {
            row.data_lo = row.minus / lo.alpha;
        }
        row.minus = 0.0;
    }
    if k == n - 1 {
        if grid.includes_right {
            let s = 2.0 * grid.h / hi.beta;
            row.minus += row.plus;
            row.center -= row.plus * s * hi.alpha;
            row.data_hi = row.plus * s;
        } else {
            row.data_hi = row.plus / hi.alpha;
        }
        row.plus = 0.0;
    }
    row
}

/// 5-point Laplacian on a rectangle with face-wise oblique conditions.
///
/// Face samples run along the face: left/right faces are indexed by the
/// unknown y-nodes, bottom/top faces by the unknown x-nodes.
pub fn assemble_laplacian_2d(grid: &Grid2D, faces: &FaceSet2D) -> Result<DiscreteOperator> {
    for side in Side::ALL {
        faces.get(side).validate(side)?;
    }
    check_inclusion(grid.grid_x.includes_left, &faces.left, Side::Left)?;
    check_inclusion(grid.grid_x.includes_right, &faces.right, Side::Right)?;
    check_inclusion(grid.grid_y.includes_left, &faces.bottom, Side::Bottom)?;
    check_inclusion(grid.grid_y.includes_right, &faces.top, Side::Top)?;

    let (nx, ny) = (grid.nx(), grid.ny());
    faces.left.data.check_len(Side::Left, ny)?;
    faces.right.data.check_len(Side::Right, ny)?;
    faces.bottom.data.check_len(Side::Bottom, nx)?;
    faces.top.data.check_len(Side::Top, nx)?;
    let sample = |d: &FaceData, k: usize| match d {
        FaceData::Samples(v) if v.len() == 1 => v[0],
        other => other.at(k),
    };

    let mut rows = Vec::with_capacity(nx * ny);
    let mut r = DVector::zeros(nx * ny);
    for j in 0..ny {
        let ry = axis_row(&grid.grid_y, &faces.bottom, &faces.top, j);
        for i in 0..nx {
            let rx = axis_row(&grid.grid_x, &faces.left, &faces.right, i);
            let k = grid.index(i, j);
            let mut row = vec![(k, rx.center + ry.center)];
            if i > 0 {
                row.push((grid.index(i - 1, j), rx.minus));
            }
            if i + 1 < nx {
                row.push((grid.index(i + 1, j), rx.plus));
            }
            if j > 0 {
                row.push((grid.index(i, j - 1), ry.minus));
            }
            if j + 1 < ny {
                row.push((grid.index(i, j + 1), ry.plus));
            }
            rows.push(row);
            r[k] = rx.data_lo * sample(&faces.left.data, j)
                + rx.data_hi * sample(&faces.right.data, j)
                + ry.data_lo * sample(&faces.bottom.data, i)
                + ry.data_hi * sample(&faces.top.data, i);
        }
    }

    let lap = EllipticCoefficients1D::laplacian();
    let lx = assemble_operator_1d(&grid.grid_x, &lap, &faces.left.homogeneous(), &faces.right.homogeneous())?;
    let ly = assemble_operator_1d(&grid.grid_y, &lap, &faces.bottom.homogeneous(), &faces.top.homogeneous())?;
    let kronecker = match (lx.action, ly.action) {
        (OperatorAction::Banded(x), OperatorAction::Banded(y)) => Some(KroneckerSum { x, y }),
        _ => {
            return Err(DiscretizeError::NonSeparable(
                "axis factors are not tridiagonal".into(),
            ))
        }
    };

    Ok(DiscreteOperator {
        action: OperatorAction::FivePoint {
            stencil: SparseMatrix::from_rows(rows),
            kronecker,
        },
        r,
        grid: OperatorGrid::TwoD(grid.clone()),
    })
}

/// A closed-form scalar field on an interval with its derivative.
pub trait Field1D: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// A closed-form scalar field on a rectangle with its gradient.
pub trait Field2D: Send + Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    fn gradient(&self, x: f64, y: f64) -> (f64, f64);
}

/// Fills face data with `alpha * u0 + beta * du0/dx` evaluated at each end so
/// that the initial state satisfies the boundary conditions exactly.
pub fn boundary_data_from_trace_1d(
    u0: &dyn Field1D,
    x_min: f64,
    x_max: f64,
    bc_left: &FaceBC,
    bc_right: &FaceBC,
) -> (FaceBC, FaceBC) {
    let trace = |bc: &FaceBC, x: f64| {
        let b = bc.alpha * u0.value(x) + bc.beta * u0.derivative(x);
        bc.with_data(FaceData::Scalar(b))
    };
    (trace(bc_left, x_min), trace(bc_right, x_max))
}

/// 2D counterpart of [`boundary_data_from_trace_1d`]; data are sampled at the
/// unknown nodes along each face.
pub fn boundary_data_from_trace_2d(u0: &dyn Field2D, grid: &Grid2D, faces: &FaceSet2D) -> FaceSet2D {
    let xs = grid.grid_x.nodes();
    let ys = grid.grid_y.nodes();
    let (x0, x1) = (grid.grid_x.x_min, grid.grid_x.x_max);
    let (y0, y1) = (grid.grid_y.x_min, grid.grid_y.x_max);
    let vertical = |bc: &FaceBC, x: f64| {
        let v = ys
            .iter()
            .map(|&y| bc.alpha * u0.value(x, y) + bc.beta * u0.gradient(x, y).0)
            .collect();
        bc.with_data(FaceData::Samples(v))
    };
    let horizontal = |bc: &FaceBC, y: f64| {
        let v = xs
            .iter()
            .map(|&x| bc.alpha * u0.value(x, y) + bc.beta * u0.gradient(x, y).1)
            .collect();
        bc.with_data(FaceData::Samples(v))
    };
    FaceSet2D {
        left: vertical(&faces.left, x0),
        right: vertical(&faces.right, x1),
        bottom: horizontal(&faces.bottom, y0),
        top: horizontal(&faces.top, y1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_spacing_and_inclusion() {
        let d = FaceBC::dirichlet(0.0);
        let n = FaceBC::neumann(0.0);
        let g = build_grid_1d(0.0, 1.0, 3, &d, &d).unwrap();
        assert_eq!(g.h, 0.25);
        assert_eq!(g.n_unknowns, 3);
        assert_eq!(g.nodes(), vec![0.25, 0.5, 0.75]);

        let g = build_grid_1d(0.0, 1.0, 3, &n, &d).unwrap();
        assert_eq!(g.n_unknowns, 4);
        assert_eq!(g.node(0), 0.0);

        let g = build_grid_1d(0.0, 1.0, 499, &d, &d).unwrap();
        assert_eq!(g.n_unknowns, 499);
        assert_relative_eq!(g.h, 1.0 / 500.0, max_relative = 1e-15);
        assert_relative_eq!(g.h * g.segments() as f64, 1.0, max_relative = 1e-15);

        let g = build_grid_1d(0.0, 1.0, 499, &n, &n).unwrap();
        assert_eq!(g.n_unknowns, 501);
        assert_eq!(g.node(500), 1.0);
    }

    #[test]
    fn grid_errors() {
        let d = FaceBC::dirichlet(0.0);
        assert!(matches!(
            build_grid_1d(1.0, 1.0, 3, &d, &d),
            Err(DiscretizeError::EmptyInterval { .. })
        ));
        assert_eq!(
            build_grid_1d(0.0, 1.0, 1, &d, &d),
            Err(DiscretizeError::TooFewNodes(1))
        );
        let bad = FaceBC::robin(0.0, 0.0, 1.0);
        assert_eq!(
            build_grid_1d(0.0, 1.0, 4, &bad, &d),
            Err(DiscretizeError::DegenerateBoundary(Side::Left))
        );
    }

    #[test]
    fn dirichlet_operator_and_boundary_vector() {
        let (l, r) = (FaceBC::dirichlet(2.0), FaceBC::dirichlet(3.0));
        let g = build_grid_1d(0.0, 1.0, 3, &l, &r).unwrap();
        let op = assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &l, &r).unwrap();
        let t = op.tridiagonal().unwrap();
        assert_eq!(t.diag, vec![-32.0; 3]);
        assert_eq!(t.lower, vec![16.0; 2]);
        assert_eq!(t.upper, vec![16.0; 2]);
        assert_eq!(op.r.as_slice(), &[32.0, 0.0, 48.0]);

        let op0 = assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &l.homogeneous(), &r.homogeneous())
            .unwrap();
        assert_eq!(op0.r.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn neumann_ghost_row() {
        let (l, r) = (FaceBC::neumann(1.0), FaceBC::dirichlet(0.0));
        let g = build_grid_1d(0.0, 1.0, 3, &l, &r).unwrap();
        let op = assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &l, &r).unwrap();
        let t = op.tridiagonal().unwrap();
        assert_eq!(t.diag[0], -32.0);
        assert_eq!(t.upper[0], 32.0);
        assert_eq!(op.r[0], -8.0);
    }

    #[test]
    fn degenerate_and_non_elliptic_rejected() {
        let d = FaceBC::dirichlet(0.0);
        let g = build_grid_1d(0.0, 1.0, 5, &d, &d).unwrap();
        let bad = FaceBC::robin(0.0, 0.0, 0.0);
        assert!(matches!(
            assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &bad, &d),
            Err(DiscretizeError::DegenerateBoundary(Side::Left))
        ));
        let coeffs = EllipticCoefficients1D::new(|x| x - 0.5, |_| 0.0, |_| 0.0);
        assert!(matches!(
            assemble_operator_1d(&g, &coeffs, &d, &d),
            Err(DiscretizeError::NotElliptic { .. })
        ));
        let n = FaceBC::neumann(0.0);
        assert_eq!(
            assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &n, &d),
            Err(DiscretizeError::GridMismatch(Side::Left))
        );
    }

    #[test]
    fn variable_coefficient_stencil() {
        // a = 1 + x, c = 2, d = -1 on a Dirichlet grid, one interior row by hand
        let d0 = FaceBC::dirichlet(0.0);
        let g = build_grid_1d(0.0, 1.0, 3, &d0, &d0).unwrap();
        let coeffs = EllipticCoefficients1D::new(|x| 1.0 + x, |_| 2.0, |_| -1.0);
        let op = assemble_operator_1d(&g, &coeffs, &d0, &d0).unwrap();
        let t = op.tridiagonal().unwrap();
        // node x = 0.5: a_- = 1.375, a_+ = 1.625
        assert_relative_eq!(t.lower[0], 1.375 * 16.0 - 2.0 / 0.5, epsilon = 1e-12);
        assert_relative_eq!(t.upper[1], 1.625 * 16.0 + 2.0 / 0.5, epsilon = 1e-12);
        assert_relative_eq!(t.diag[1], -(1.375 + 1.625) * 16.0 - 1.0, epsilon = 1e-12);
    }

    fn dirichlet_faces_2d(b: f64) -> FaceSet2D {
        FaceSet2D {
            left: FaceBC::dirichlet(b),
            right: FaceBC::dirichlet(b),
            bottom: FaceBC::dirichlet(b),
            top: FaceBC::dirichlet(b),
        }
    }

    #[test]
    fn laplacian_2d_matches_kronecker_identity() {
        let faces = dirichlet_faces_2d(0.0);
        let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (3, 3), &faces).unwrap();
        let op = assemble_laplacian_2d(&grid, &faces).unwrap();
        let t = DMatrix::from_fn(3, 3, |i, j| match (i as i64 - j as i64).abs() {
            0 => -2.0,
            1 => 1.0,
            _ => 0.0,
        });
        let i3 = DMatrix::<f64>::identity(3, 3);
        let expected = (t.kronecker(&i3) + i3.kronecker(&t)) * 16.0;
        assert_eq!(op.to_dense(), expected);
        assert_eq!(op.kronecker().unwrap().to_dense(), expected);
        assert!(op.r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_2d_unit_dirichlet_data() {
        let faces = dirichlet_faces_2d(1.0);
        let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (3, 3), &faces).unwrap();
        let op = assemble_laplacian_2d(&grid, &faces).unwrap();
        let expected = [32.0, 16.0, 32.0, 16.0, 0.0, 16.0, 32.0, 16.0, 32.0];
        assert_eq!(op.r.as_slice(), &expected);
    }

    #[test]
    fn mixed_faces_2d_inclusion() {
        let faces = FaceSet2D {
            left: FaceBC::neumann(0.0),
            right: FaceBC::neumann(0.0),
            bottom: FaceBC::dirichlet(3.0),
            top: FaceBC::dirichlet(3.0),
        };
        let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (50, 50), &faces).unwrap();
        assert_eq!(grid.nx(), 52);
        assert_eq!(grid.ny(), 50);
        assert_eq!(grid.grid_x.node(0), 0.0);
        assert_eq!(grid.grid_x.node(51), 1.0);
        assert_relative_eq!(grid.grid_y.node(0), 1.0 / 51.0);
        let op = assemble_laplacian_2d(&grid, &faces).unwrap();
        assert_eq!(op.dim(), 52 * 50);
    }

    #[test]
    fn face_sample_length_checked() {
        let mut faces = dirichlet_faces_2d(0.0);
        faces.left.data = FaceData::Samples(vec![0.0; 4]);
        let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (3, 3), &faces).unwrap();
        assert!(matches!(
            assemble_laplacian_2d(&grid, &faces),
            Err(DiscretizeError::FaceDataLength { side: Side::Left, got: 4, expected: 3 })
        ));
    }

    struct Ex62;
    impl Field2D for Ex62 {
        fn value(&self, x: f64, y: f64) -> f64 {
            3.0 + (-10.0 * (y - 0.5).powi(2)).exp() * (2.0 * std::f64::consts::PI * (x + y)).cos()
        }
        fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
            let pi2 = 2.0 * std::f64::consts::PI;
            let g = (-10.0 * (y - 0.5).powi(2)).exp();
            let s = (pi2 * (x + y)).sin();
            let c = (pi2 * (x + y)).cos();
            (-pi2 * g * s, -20.0 * (y - 0.5) * g * c - pi2 * g * s)
        }
    }

    #[test]
    fn trace_data_2d_neumann_face() {
        let faces = FaceSet2D {
            left: FaceBC::neumann(0.0),
            right: FaceBC::neumann(0.0),
            bottom: FaceBC::dirichlet(0.0),
            top: FaceBC::dirichlet(0.0),
        };
        let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (10, 10), &faces).unwrap();
        let filled = boundary_data_from_trace_2d(&Ex62, &grid, &faces);
        let pi2 = 2.0 * std::f64::consts::PI;
        for (k, y) in grid.grid_y.nodes().into_iter().enumerate() {
            let expected = -pi2 * (-10.0 * (y - 0.5f64).powi(2)).exp() * (pi2 * y).sin();
            assert_relative_eq!(filled.left.data.at(k), expected, epsilon = 1e-12);
        }
        for (k, x) in grid.grid_x.nodes().into_iter().enumerate() {
            assert_relative_eq!(filled.bottom.data.at(k), Ex62.value(x, 0.0), epsilon = 1e-14);
        }
    }
}
