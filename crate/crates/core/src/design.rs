//! V-optimal design objective over seller weights.
//!
//! The platform minimizes the average prediction variance at the buyer's
//! covariates, `C(w) = mean_i x_iᵀ P(w) x_i` with `P(w) = (Σ_j w_j x_j x_jᵀ)⁻¹`.
//! Everything here works on the inverse information matrix `P` directly so a
//! Frank-Wolfe round costs `O(d²)` per update instead of a fresh inversion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible denominator in a rank-1 formula.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Reciprocal condition number below which the information matrix is
/// treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Dense row-major feature matrix; row `j` is the feature vector of point `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptyInput("feature matrix has no rows"));
        }
        if cols == 0 {
            return Err(Error::EmptyInput("feature matrix has no columns"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "feature matrix buffer",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "ragged rows: row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &j in indices {
            if j >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {j} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(j));
        }
        Self::from_row_major(indices.len(), self.cols, data)
    }

    /// Multiply row `j` by `factors[j]`.
    pub fn scale_rows(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "row scaling factors",
                expected: self.rows,
                actual: factors.len(),
            });
        }
        for (row, &f) in self.data.chunks_exact_mut(self.cols).zip(factors) {
            row.iter_mut().for_each(|v| *v *= f);
        }
        Ok(())
    }
}

/// Unlabeled buyer covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerQuery(FeatureMatrix);

impl BuyerQuery {
    pub fn new(features: FeatureMatrix) -> Self {
        Self(features)
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn check_against(&self, sellers: &FeatureMatrix) -> Result<()> {
        if self.ncols() != sellers.ncols() {
            return Err(Error::DimensionMismatch {
                context: "buyer query columns",
                expected: sellers.ncols(),
                actual: self.ncols(),
            });
        }
        Ok(())
    }
}

/// Non-negative weights over sellers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(j) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("weight {j} is negative or non-finite")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Frank-Wolfe move toward vertex `j`: `w ← (1−α)w + α e_j`.
    pub fn step_toward(&mut self, j: usize, alpha: f64) {
        let keep = 1.0 - alpha;
        self.0.iter_mut().for_each(|v| *v *= keep);
        self.0[j] += alpha;
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// The inverse information matrix `P` with the shrinkage it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseInfo {
    p: DMatrix<f64>,
    pub lambda: f64,
    pub sigma2: f64,
}

impl InverseInfo {
    pub fn identity(d: usize) -> Self {
        Self {
            p: DMatrix::identity(d, d),
            lambda: 1.0,
            sigma2: 1.0,
        }
    }

    /// Wraps an existing matrix; it is symmetrized on the way in.
    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::DimensionMismatch {
                context: "inverse information matrix (square)",
                expected: p.nrows(),
                actual: p.ncols(),
            });
        }
        let mut info = Self {
            p,
            lambda: 0.0,
            sigma2: 0.0,
        };
        info.symmetrize();
        Ok(info)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Test hook for fault injection.
    #[doc(hidden)]
    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.p
    }

    fn symmetrize(&mut self) {
        let d = self.p.nrows();
        for a in 0..d {
            for b in (a + 1)..d {
                let avg = 0.5 * (self.p[(a, b)] + self.p[(b, a)]);
                self.p[(a, b)] = avg;
                self.p[(b, a)] = avg;
            }
        }
    }

    /// `x_aᵀ P x_b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .enumerate()
            .map(|(r, ar)| ar * b.iter().enumerate().map(|(c, bc)| self.p[(r, c)] * bc).sum::<f64>())
            .sum()
    }

    fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.p * DVector::from_column_slice(x)
    }
}

/// Buyer statistics reused across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BuyerCache {
    query: BuyerQuery,
    /// `(1/m) Σ_i x_i x_iᵀ`
    pub sum_outer: DMatrix<f64>,
}

impl BuyerCache {
    pub fn new(query: &BuyerQuery) -> Self {
        let q = query.features().to_matrix();
        let sum_outer = (q.transpose() * &q) / query.nrows() as f64;
        Self {
            query: query.clone(),
            sum_outer,
        }
    }

    pub fn query(&self) -> &BuyerQuery {
        &self.query
    }

    pub fn dim(&self) -> usize {
        self.sum_outer.nrows()
    }
}

/// Mean of the per-column population variances of `x`.
pub fn feature_variance(x: &FeatureMatrix) -> Result<f64> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("feature variance of zero rows"));
    }
    let d = x.ncols();
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in x.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    Ok(var.iter().map(|s| s / n as f64).sum::<f64>() / d as f64)
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &FeatureMatrix, w: &[f64]) -> DMatrix<f64> {
    let d = x.ncols();
    let mut g = DMatrix::zeros(d, d);
    for (row, &wj) in x.rows().zip(w) {
        if wj == 0.0 {
            continue;
        }
        for a in 0..d {
            let s = wj * row[a];
            for b in a..d {
                g[(a, b)] += s * row[b];
            }
        }
    }
    for a in 0..d {
        for b in (a + 1)..d {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

/// Inverts a symmetric matrix assumed positive definite, rejecting it when
/// its reciprocal condition number falls below [`SINGULAR_RCOND`].
pub(crate) fn invert_spd(a: DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond > SINGULAR_RCOND) {
        return Err(Error::Singular { lambda, rcond });
    }
    let chol = a.cholesky().ok_or(Error::Singular { lambda, rcond })?;
    Ok(chol.inverse())
}

/// `P = ((1−λ) Xᵀdiag(w)X + λ σ_X² I)⁻¹`.
pub fn init_inverse_info(x: &FeatureMatrix, w: &WeightVector, lambda: f64) -> Result<InverseInfo> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if w.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            context: "weights vs seller rows",
            expected: x.nrows(),
            actual: w.len(),
        });
    }
    let d = x.ncols();
    let sigma2 = feature_variance(x)?;
    let p = if lambda == 1.0 {
        if !(sigma2 > 0.0) {
            return Err(Error::Singular { lambda, rcond: 0.0 });
        }
        DMatrix::identity(d, d) / sigma2
    } else {
        let mut a = weighted_gram(x, w.as_slice()) * (1.0 - lambda);
        for k in 0..d {
            a[(k, k)] += lambda * sigma2;
        }
        invert_spd(a, lambda)?
    };
    let mut info = InverseInfo { p, lambda, sigma2 };
    info.symmetrize();
    Ok(info)
}

fn check_dims(info: &InverseInfo, cache: &BuyerCache) -> Result<()> {
    if info.dim() != cache.dim() {
        return Err(Error::DimensionMismatch {
            context: "inverse information vs buyer cache",
            expected: info.dim(),
            actual: cache.dim(),
        });
    }
    Ok(())
}

/// `C = trace(P · S)` where `S` is the buyer second-moment matrix.
pub fn design_loss(info: &InverseInfo, cache: &BuyerCache) -> Result<f64> {
    check_dims(info, cache)?;
    Ok(info
        .p
        .iter()
        .zip(cache.sum_outer.iter())
        .map(|(a, b)| a * b)
        .sum())
}

/// Per-round operator for the seller scores `v_j = mean_i (x_iᵀ P x_j)²`.
///
/// With few buyer rows the scores are sums of squares of the projections
/// `P x_i`; otherwise they are quadratic forms in `P S P`.
#[derive(Debug, Clone)]
pub enum ScoreOperator {
    Projected { proj: DMatrix<f64>, inv_m: f64 },
    Quadratic(DMatrix<f64>),
}

impl ScoreOperator {
    pub fn new(info: &InverseInfo, cache: &BuyerCache) -> Result<Self> {
        check_dims(info, cache)?;
        let query = cache.query.features();
        let (m, d) = (query.nrows(), query.ncols());
        if m <= d {
            // row i = (P x_i)ᵀ
            let proj = query.to_matrix() * &info.p;
            Ok(Self::Projected {
                proj,
                inv_m: 1.0 / m as f64,
            })
        } else {
            let mut pps = &info.p * &cache.sum_outer * &info.p;
            let sym = (&pps + pps.transpose()) * 0.5;
            pps = sym;
            Ok(Self::Quadratic(pps))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Projected { proj, .. } => proj.ncols(),
            Self::Quadratic(m) => m.nrows(),
        }
    }

    /// Score of a single seller row; always ≥ 0.
    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Self::Projected { proj, inv_m } => {
                let mut total = 0.0;
                for i in 0..proj.nrows() {
                    let mut dot = 0.0;
                    for (k, xk) in x.iter().enumerate() {
                        dot += proj[(i, k)] * xk;
                    }
                    total += dot * dot;
                }
                total * inv_m
            }
            Self::Quadratic(m) => {
                let d = m.nrows();
                let mut acc = 0.0;
                for r in 0..d {
                    let mut row = 0.0;
                    for c in 0..d {
                        row += m[(r, c)] * x[c];
                    }
                    acc += x[r] * row;
                }
                acc.max(0.0)
            }
        }
    }
}

/// `∂C/∂w_j = −mean_i (x_iᵀ P x_j)²` for every seller row.
pub fn design_gradient(info: &InverseInfo, x: &FeatureMatrix, cache: &BuyerCache) -> Result<Vec<f64>> {
    if x.ncols() != info.dim() {
        return Err(Error::DimensionMismatch {
            context: "seller columns vs inverse information",
            expected: info.dim(),
            actual: x.ncols(),
        });
    }
    let op = ScoreOperator::new(info, cache)?;
    Ok(x.rows().map(|row| -op.score(row)).collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("step size {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Exact inverse of `(1−α) P⁻¹ + α x xᵀ`: shrink `P` by `1/(1−α)`, then a
/// Sherman-Morrison update with `u = √α x`.
pub fn fw_update_inverse(info: &InverseInfo, x: &[f64], alpha: f64) -> Result<InverseInfo> {
    let mut next = info.clone();
    update_inverse_in_place(&mut next, x, alpha)?;
    Ok(next)
}

pub(crate) fn update_inverse_in_place(info: &mut InverseInfo, x: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    if x.len() != info.dim() {
        return Err(Error::DimensionMismatch {
            context: "update vector",
            expected: info.dim(),
            actual: x.len(),
        });
    }
    info.p /= 1.0 - alpha;
    let u: Vec<f64> = x.iter().map(|v| v * alpha.sqrt()).collect();
    let pu = info.apply(&u);
    let denom = 1.0 + pu.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    if !denom.is_finite() || denom < DENOMINATOR_FLOOR {
        return Err(Error::Conditioning(format!(
            "Sherman-Morrison denominator {denom:e}; P is no longer positive definite"
        )));
    }
    info.p.ger(-1.0 / denom, &pu, &pu, 1.0);
    info.symmetrize();
    if info.p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("non-finite entry after rank-1 update".into()));
    }
    Ok(())
}

/// Quantities that determine the loss after a step toward one seller row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProbe {
    /// current loss `C`
    pub loss: f64,
    /// `xᵀ P x`
    pub self_term: f64,
    /// `mean_i (x_iᵀ P x)²`
    pub cross_term: f64,
}

impl StepProbe {
    pub fn new(info: &InverseInfo, cache: &BuyerCache, x: &[f64]) -> Result<Self> {
        let op = ScoreOperator::new(info, cache)?;
        Self::with_operator(info, cache, &op, x)
    }

    pub fn with_operator(
        info: &InverseInfo,
        cache: &BuyerCache,
        op: &ScoreOperator,
        x: &[f64],
    ) -> Result<Self> {
        if x.len() != info.dim() {
            return Err(Error::DimensionMismatch {
                context: "step vector",
                expected: info.dim(),
                actual: x.len(),
            });
        }
        Ok(Self {
            loss: design_loss(info, cache)?,
            self_term: info.bilinear(x, x),
            cross_term: op.score(x),
        })
    }

    /// Loss after `fw_update_inverse(P, x, α)` without forming the new matrix.
    pub fn loss_at(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let keep = 1.0 - alpha;
        let ratio = alpha / keep;
        let denom = 1.0 + ratio * self.self_term;
        if !denom.is_finite() || denom < DENOMINATOR_FLOOR {
            return Err(Error::Conditioning(format!(
                "updated-loss denominator {denom:e}"
            )));
        }
        Ok(self.loss / keep - (alpha / (keep * keep)) * self.cross_term / denom)
    }
}

/// `design_loss(fw_update_inverse(P, x, α))` via the rank-1 expansion.
pub fn loss_after_step(info: &InverseInfo, cache: &BuyerCache, x: &[f64], alpha: f64) -> Result<f64> {
    StepProbe::new(info, cache, x)?.loss_at(alpha)
}
