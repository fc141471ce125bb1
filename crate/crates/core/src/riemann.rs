//! SPD covariance machinery: Ledoit-Wolf shrinkage estimation, matrix
//! log/exp/inverse-square-root, the affine-invariant distance, Karcher
//! geometric means, tangent-space embedding, per-subject Euclidean
//! alignment, and minimum-distance-to-mean classification.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig};

/// A symmetric positive-definite matrix.
///
/// Construction validates symmetry (tol 1e-9 relative) and a strictly
/// positive minimum eigenvalue.
#[derive(Debug, Clone)]
pub struct SpdMatrix(Array2<f64>);

impl SpdMatrix {
    pub fn new(m: Array2<f64>) -> Result<Self> {
        if !linalg::is_symmetric(&m, linalg::SYM_TOL) {
            return Err(Error::Invalid("spd: matrix is not symmetric".into()));
        }
        let eig = sym_eig(&m)?;
        let min_eig = eig.eigenvalues[0];
        if !(min_eig > 0.0) {
            return Err(Error::Numerical(format!(
                "spd: minimum eigenvalue {min_eig:.3e} is not positive"
            )));
        }
        Ok(SpdMatrix(m))
    }

    /// Construct without re-validating (for outputs that are SPD by
    /// construction, e.g. `V f(Λ) Vᵀ` with positive `f`).
    fn new_unchecked(m: Array2<f64>) -> Self {
        SpdMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix(Array2::eye(d))
    }

    /// Verify the SPD invariants hold (used by property tests).
    pub fn check_invariants(&self) -> Result<()> {
        SpdMatrix::new(self.0.clone()).map(|_| ())
    }
}

// ---------------------------------------------------------------------------
// Ledoit-Wolf covariance
// ---------------------------------------------------------------------------

/// Ledoit-Wolf shrinkage covariance of one epoch (channels × samples).
///
/// `(1-λ)·S + λ·(tr S / d)·I` with the analytically optimal λ for the
/// scaled-identity target; the columns of the epoch are the observations
/// and are not re-centred (EEG epochs are baseline-corrected upstream).
/// Returns the estimate and λ.
pub fn lw_covariance(epoch: ArrayView2<'_, f64>) -> Result<(SpdMatrix, f64)> {
    let (d, n) = epoch.dim();
    if d == 0 {
        return Err(Error::Shape("lw: zero channels".into()));
    }

    let frob2 = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();

    let s = epoch.dot(&epoch.t()) / (n.max(1) as f64);
    let mu = s.diag().sum() / d as f64;

    if mu.abs() < 1e-30 {
        // All-zero epoch: no signal at all; fall back to a tiny identity.
        return Ok((SpdMatrix::new_unchecked(Array2::eye(d) * 1e-12), 1.0));
    }
    if n < 2 {
        // A single observation carries no covariance information.
        return Ok((SpdMatrix::new_unchecked(Array2::eye(d) * mu), 1.0));
    }

    // d² = ||S - µI||²/d, b̄² = (Σ_t |x_t|⁴ - n||S||²) / (n² d), λ = b²/d².
    let mut s_minus_mu = s.clone();
    for i in 0..d {
        s_minus_mu[[i, i]] -= mu;
    }
    let d2 = frob2(&s_minus_mu) / d as f64;
    let sum_x4: f64 = (0..n)
        .map(|t| {
            let norm2: f64 = epoch.column(t).iter().map(|v| v * v).sum();
            norm2 * norm2
        })
        .sum();
    let b2_bar = (sum_x4 - n as f64 * frob2(&s)) / ((n * n) as f64 * d as f64);
    let lambda = if d2 <= 0.0 {
        // Sample covariance equals the target already.
        0.0
    } else {
        (b2_bar / d2).clamp(0.0, 1.0)
    };

    let mut out = s * (1.0 - lambda);
    for i in 0..d {
        out[[i, i]] += lambda * mu;
    }
    // Shrinkage with λ > 0 restores full rank; λ = 0 can leave a
    // rank-deficient S, so nudge by epsilon relative to the trace.
    let eig_floor = 1e-12 * mu;
    let eig = sym_eig(&out)?;
    if eig.eigenvalues[0] <= eig_floor {
        for i in 0..d {
            out[[i, i]] += eig_floor;
        }
    }
    Ok((SpdMatrix::new_unchecked(out), lambda))
}

// ---------------------------------------------------------------------------
// Matrix functions
// ---------------------------------------------------------------------------

/// Matrix logarithm of an SPD matrix (symmetric result).
pub fn spd_log(a: &SpdMatrix) -> Result<Array2<f64>> {
    let eig = sym_eig(a.as_array())?;
    if eig.eigenvalues[0] <= 0.0 {
        return Err(Error::Numerical(format!(
            "spd_log: non-positive eigenvalue {:.3e}",
            eig.eigenvalues[0]
        )));
    }
    Ok(eig.map_rebuild(f64::ln))
}

/// Matrix exponential of a symmetric matrix (SPD result).
pub fn spd_exp(s: &Array2<f64>) -> Result<SpdMatrix> {
    if !linalg::is_symmetric(s, linalg::SYM_TOL) {
        return Err(Error::Invalid("spd_exp: input is not symmetric".into()));
    }
    let eig = sym_eig(s)?;
    Ok(SpdMatrix::new_unchecked(eig.map_rebuild(f64::exp)))
}

/// Inverse square root of an SPD matrix.
pub fn spd_invsqrt(a: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(a.as_array())?;
    if eig.eigenvalues[0] <= 0.0 {
        return Err(Error::Numerical("spd_invsqrt: non-positive eigenvalue".into()));
    }
    Ok(SpdMatrix::new_unchecked(eig.map_rebuild(|x| 1.0 / x.sqrt())))
}

/// Square root of an SPD matrix.
pub fn spd_sqrt(a: &SpdMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(a.as_array())?;
    Ok(SpdMatrix::new_unchecked(eig.map_rebuild(f64::sqrt)))
}

// ---------------------------------------------------------------------------
// Affine-invariant distance
// ---------------------------------------------------------------------------

/// δ(A, B) = ‖log(A^{-1/2} B A^{-1/2})‖_F.
pub fn riemann_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "distance: dimension mismatch {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let w = whiten(a, b)?;
    let eig = sym_eig(&w)?;
    let sum: f64 = eig.eigenvalues.iter().map(|&l| {
        let ll = l.max(1e-300).ln();
        ll * ll
    }).sum();
    Ok(sum.sqrt())
}

/// A^{-1/2} B A^{-1/2}, symmetrised against round-off.
fn whiten(a: &SpdMatrix, b: &SpdMatrix) -> Result<Array2<f64>> {
    let ai = spd_invsqrt(a)?;
    let m = ai.as_array().dot(b.as_array()).dot(ai.as_array());
    Ok(symmetrize(m))
}

fn symmetrize(m: Array2<f64>) -> Array2<f64> {
    let mt = m.t().to_owned();
    (m + mt) * 0.5
}

// ---------------------------------------------------------------------------
// Karcher mean
// ---------------------------------------------------------------------------

pub const KARCHER_TOL: f64 = 1e-8;
pub const KARCHER_MAX_ITER: usize = 50;

/// Karcher (Fréchet) mean under the affine-invariant metric: the fixed
/// point where the mean of the log maps vanishes.
pub fn geometric_mean(mats: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<SpdMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Empty("geometric_mean: empty list".into()))?;
    let d = first.dim();
    if mats.iter().any(|m| m.dim() != d) {
        return Err(Error::Shape("geometric_mean: dimension mismatch".into()));
    }
    if mats.len() == 1 {
        return Ok(first.clone());
    }

    // Arithmetic mean initialisation.
    let mut acc = Array2::<f64>::zeros((d, d));
    for m in mats {
        acc += m.as_array();
    }
    let mut g = SpdMatrix::new_unchecked(acc / mats.len() as f64);

    let mut last_grad = f64::INFINITY;
    for _ in 0..max_iter {
        let g_isqrt = spd_invsqrt(&g)?;
        let g_sqrt = spd_sqrt(&g)?;
        let mut mean_log = Array2::<f64>::zeros((d, d));
        for m in mats {
            let w = symmetrize(g_isqrt.as_array().dot(m.as_array()).dot(g_isqrt.as_array()));
            let log_w = sym_eig(&w)?.map_rebuild(|x| x.max(1e-300).ln());
            mean_log += &log_w;
        }
        mean_log /= mats.len() as f64;
        let grad_norm = mean_log.iter().map(|v| v * v).sum::<f64>().sqrt();
        last_grad = grad_norm;
        if grad_norm < tol {
            return Ok(g);
        }
        let step = spd_exp(&symmetrize(mean_log))?;
        let next = g_sqrt
            .as_array()
            .dot(step.as_array())
            .dot(g_sqrt.as_array());
        g = SpdMatrix::new_unchecked(symmetrize(next));
    }
    Err(Error::Numerical(format!(
        "geometric_mean: no convergence after {max_iter} iterations (gradient norm {last_grad:.3e})"
    )))
}

// ---------------------------------------------------------------------------
// Tangent space
// ---------------------------------------------------------------------------

/// Tangent vector at a reference point, length d(d+1)/2.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub values: Array1<f64>,
    pub reference: String,
}

/// Upper-triangular vectorisation of `log(G^{-1/2} C G^{-1/2})` with
/// off-diagonal entries scaled by √2, so ‖embed(C, G)‖₂ = δ(G, C).
pub fn tangent_embed(c: &SpdMatrix, g: &SpdMatrix, reference: &str) -> Result<TangentVector> {
    if c.dim() != g.dim() {
        return Err(Error::Shape(format!(
            "tangent: dimension mismatch {} vs {}",
            c.dim(),
            g.dim()
        )));
    }
    let w = whiten(g, c)?;
    let log_w = sym_eig(&w)?.map_rebuild(|x| x.max(1e-300).ln());
    let d = c.dim();
    let mut values = Array1::<f64>::zeros(d * (d + 1) / 2);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            values[k] = if i == j { log_w[[i, j]] } else { sqrt2 * log_w[[i, j]] };
            k += 1;
        }
    }
    Ok(TangentVector {
        values,
        reference: reference.to_string(),
    })
}

/// Inverse of [`tangent_embed`]: reconstruct C from its tangent vector.
pub fn tangent_unembed(v: &TangentVector, g: &SpdMatrix) -> Result<SpdMatrix> {
    let d = g.dim();
    if v.values.len() != d * (d + 1) / 2 {
        return Err(Error::Shape(format!(
            "tangent: vector length {} does not match d(d+1)/2 for d={d}",
            v.values.len()
        )));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut s = Array2::<f64>::zeros((d, d));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let val = if i == j { v.values[k] } else { v.values[k] / sqrt2 };
            s[[i, j]] = val;
            s[[j, i]] = val;
            k += 1;
        }
    }
    let exp_s = spd_exp(&s)?;
    let g_sqrt = spd_sqrt(g)?;
    let c = g_sqrt.as_array().dot(exp_s.as_array()).dot(g_sqrt.as_array());
    Ok(SpdMatrix::new_unchecked(symmetrize(c)))
}

// ---------------------------------------------------------------------------
// Euclidean alignment
// ---------------------------------------------------------------------------

/// Result of aligning one subject: whitened epochs and congruently
/// transformed trial covariances whose arithmetic mean is the identity.
pub struct AlignedSubject {
    pub epochs: EpochSet,
    pub covariances: Vec<SpdMatrix>,
    pub reference: SpdMatrix,
}

/// Per-subject whitening to identity covariance: R̄ is the arithmetic mean
/// of the trial covariances and every epoch X maps to R̄^{-1/2} X.
pub fn euclidean_align_subject(epochs: &EpochSet) -> Result<AlignedSubject> {
    let n_trials = epochs.n_trials();
    if n_trials == 0 {
        return Err(Error::Empty("euclidean_align: subject has no trials".into()));
    }
    let covs: Vec<SpdMatrix> = (0..n_trials)
        .map(|t| lw_covariance(epochs.data.index_axis(Axis(0), t)).map(|(c, _)| c))
        .collect::<Result<_>>()?;
    let d = covs[0].dim();
    let mut acc = Array2::<f64>::zeros((d, d));
    for c in &covs {
        acc += c.as_array();
    }
    let reference = SpdMatrix::new_unchecked(acc / n_trials as f64);
    let r_isqrt = spd_invsqrt(&reference)?;

    let mut aligned = epochs.clone();
    for t in 0..n_trials {
        let x = epochs.data.index_axis(Axis(0), t).to_owned();
        let y = r_isqrt.as_array().dot(&x);
        aligned.data.index_axis_mut(Axis(0), t).assign(&y);
    }
    let aligned_covs = covs
        .iter()
        .map(|c| {
            let m = r_isqrt.as_array().dot(c.as_array()).dot(r_isqrt.as_array());
            SpdMatrix::new_unchecked(symmetrize(m))
        })
        .collect();

    Ok(AlignedSubject {
        epochs: aligned,
        covariances: aligned_covs,
        reference,
    })
}

// ---------------------------------------------------------------------------
// Minimum distance to mean
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MdmModel {
    /// Per-class geometric means, indexed by class id.
    pub class_means: Vec<SpdMatrix>,
}

/// Fit per-class geometric means. Every class in `0..n_classes` must have
/// at least one training covariance.
pub fn mdm_fit(covs: &[SpdMatrix], labels: &[usize], n_classes: usize) -> Result<MdmModel> {
    if covs.len() != labels.len() {
        return Err(Error::Shape("mdm: covariance/label count mismatch".into()));
    }
    let mut class_means = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let members: Vec<SpdMatrix> = covs
            .iter()
            .zip(labels.iter())
            .filter(|(_, &l)| l == k)
            .map(|(c, _)| c.clone())
            .collect();
        if members.is_empty() {
            return Err(Error::Empty(format!("mdm: class {k} has no training covariances")));
        }
        class_means.push(geometric_mean(&members, KARCHER_TOL, KARCHER_MAX_ITER)?);
    }
    Ok(MdmModel { class_means })
}

/// Predicted class (argmin distance, ties to the lowest class index) and
/// the per-class distance row.
pub fn mdm_predict(model: &MdmModel, c: &SpdMatrix) -> Result<(usize, Vec<f64>)> {
    let mut distances = Vec::with_capacity(model.class_means.len());
    for mean in &model.class_means {
        distances.push(riemann_distance(c, mean)?);
    }
    let mut best = 0usize;
    for (k, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = k;
        }
    }
    Ok((best, distances))
}

/// Distance row converted to a probability row via softmax(-δ).
pub fn mdm_proba(distances: &[f64]) -> Vec<f64> {
    let max_neg = distances.iter().map(|d| -d).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = distances.iter().map(|d| (-d - max_neg).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
