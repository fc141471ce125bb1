//! Linear models: shrinkage LDA, multinomial logistic regression, and a
//! one-vs-rest squared-hinge linear SVM. The convex objectives are
//! minimised with a small L-BFGS (two-loop recursion, Armijo backtracking),
//! deterministic from a zero start.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;
use crate::riemann::lw_covariance;

use super::ClassifierParams;

// ---------------------------------------------------------------------------
// L-BFGS
// ---------------------------------------------------------------------------

/// Minimise a smooth function given its value+gradient oracle.
pub fn lbfgs(
    f_grad: &dyn Fn(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> Vec<f64> {
    let m = 8usize;
    let mut x = x0;
    let (mut fx, mut g) = f_grad(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < tol {
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, yv) in s_hist.iter().zip(y_hist.iter()).rev() {
            let rho = 1.0 / dot(yv, s).max(1e-300);
            let alpha = rho * dot(s, &q);
            axpy(&mut q, yv, -alpha);
            alphas.push((rho, alpha));
        }
        let gamma = if let (Some(s), Some(yv)) = (s_hist.last(), y_hist.last()) {
            dot(s, yv) / dot(yv, yv).max(1e-300)
        } else {
            1.0
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, yv), (rho, alpha)) in s_hist.iter().zip(y_hist.iter()).zip(alphas.iter().rev()) {
            let beta = rho * dot(yv, &q);
            axpy(&mut q, s, alpha - beta);
        }
        let dir: Vec<f64> = q.iter().map(|v| -v).collect();

        // Armijo backtracking.
        let slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Not a descent direction (numerical); restart from gradient.
            s_hist.clear();
            y_hist.clear();
            continue;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _bt in 0..40 {
            let xt: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = f_grad(&xt);
            if ft <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = gt.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                if dot(&s, &yv) > 1e-12 {
                    s_hist.push(s);
                    y_hist.push(yv);
                    if s_hist.len() > m {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                x = xt;
                fx = ft;
                g = gt;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

// ---------------------------------------------------------------------------
// Shrinkage LDA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LdaModel {
    /// K × d class means.
    pub means: Array2<f64>,
    pub log_priors: Vec<f64>,
    /// Σ⁻¹ μ_k per class (K × d).
    coef: Array2<f64>,
    /// -½ μ_kᵀ Σ⁻¹ μ_k + ln π_k
    intercept: Vec<f64>,
    pub gamma: f64,
    n_classes: usize,
}

/// Fit LDA with a shared covariance shrunk toward the scaled identity:
/// `Σ_γ = (1-γ)·Σ̂ + γ·(tr Σ̂ / d)·I`. `gamma = None` selects γ by the
/// Ledoit-Wolf formula on the class-centred observations.
pub fn fit_lda(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    gamma: Option<f64>,
) -> Result<LdaModel> {
    let (n, d) = x.dim();
    if d == 0 {
        return Err(Error::Invalid("lda: zero feature dimensions".into()));
    }
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::Invalid("lda: single-class training set".into()));
    }

    let mut means = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts[y[i]] += 1;
        for j in 0..d {
            means[[y[i], j]] += x[[i, j]];
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            return Err(Error::Invalid(format!("lda: class {c} absent (classes must be contiguous)")));
        }
        for j in 0..d {
            means[[c, j]] /= counts[c] as f64;
        }
    }
    let log_priors: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();

    // Class-centred observations; the Ledoit-Wolf helper consumes them as
    // d × n columns.
    let mut centred = Array2::<f64>::zeros((d, n));
    for i in 0..n {
        for j in 0..d {
            centred[[j, i]] = x[[i, j]] - means[[y[i], j]];
        }
    }
    let (sigma, gamma) = match gamma {
        Some(g) => {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Invalid(format!("lda: gamma {g} outside [0, 1]")));
            }
            let s = centred.dot(&centred.t()) / n as f64;
            let mu = s.diag().sum() / d as f64;
            let mut out = s * (1.0 - g);
            for i in 0..d {
                out[[i, i]] += g * mu.max(1e-12);
            }
            (out, g)
        }
        None => {
            let (cov, lambda) = lw_covariance(centred.view())?;
            (cov.into_array(), lambda)
        }
    };

    // Guard the solve against an exactly singular Σ (e.g. γ = 0 on
    // rank-deficient data).
    let mut sigma = sigma;
    let trace = sigma.diag().sum().max(1e-12);
    for i in 0..d {
        sigma[[i, i]] += 1e-10 * trace / d as f64;
    }

    let mut coef = Array2::<f64>::zeros((k, d));
    let mut intercept = Vec::with_capacity(k);
    for c in 0..k {
        let mu_c = means.row(c).to_owned();
        let w = linalg::solve_spd(&sigma, &mu_c)?;
        let b = -0.5 * mu_c.dot(&w) + log_priors[c];
        coef.row_mut(c).assign(&w);
        intercept.push(b);
    }

    Ok(LdaModel {
        means,
        log_priors,
        coef,
        intercept,
        gamma,
        n_classes: k,
    })
}

impl LdaModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn decision_scores(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scores = x.dot(&self.coef.t());
        for mut row in scores.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.intercept[c];
            }
        }
        scores
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scores = self.decision_scores(x);
        softmax_rows(&mut scores);
        scores
    }

    /// Mean absolute discriminant weight per feature, normalised.
    pub fn feature_importance(&self) -> Vec<f64> {
        let d = self.coef.ncols();
        let mut imp = vec![0.0f64; d];
        for row in self.coef.rows() {
            for (j, v) in row.iter().enumerate() {
                imp[j] += v.abs();
            }
        }
        let total: f64 = imp.iter().sum();
        if total <= 0.0 {
            return vec![1.0 / d as f64; d];
        }
        imp.iter().map(|v| v / total).collect()
    }
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// K × d weights.
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
    n_classes: usize,
}

pub fn fit_logistic(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    params: &ClassifierParams,
) -> Result<LogisticModel> {
    let (n, d) = x.dim();
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::Invalid("logistic: single-class training set".into()));
    }
    let l2 = params.l2;

    // Parameter vector: K·d weights then K biases.
    let f_grad = |theta: &[f64]| -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0f64; theta.len()];
        let w = &theta[..k * d];
        let b = &theta[k * d..];
        let mut scores = vec![0.0f64; k];
        for i in 0..n {
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let mut s = b[c];
                for j in 0..d {
                    s += w[c * d + j] * x[[i, j]];
                }
                scores[c] = s;
                max = max.max(s);
            }
            let mut z = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                z += *s;
            }
            loss -= (scores[y[i]] / z).max(1e-300).ln();
            for c in 0..k {
                let p = scores[c] / z;
                let err = p - if y[i] == c { 1.0 } else { 0.0 };
                for j in 0..d {
                    grad[c * d + j] += err * x[[i, j]];
                }
                grad[k * d + c] += err;
            }
        }
        let inv_n = 1.0 / n as f64;
        loss *= inv_n;
        for g in grad.iter_mut() {
            *g *= inv_n;
        }
        for (t, g) in theta[..k * d].iter().zip(grad[..k * d].iter_mut()) {
            loss += 0.5 * l2 * t * t;
            *g += l2 * t;
        }
        (loss, grad)
    };

    let theta = lbfgs(&f_grad, vec![0.0; k * d + k], params.max_iter, 1e-7);
    let mut weights = Array2::<f64>::zeros((k, d));
    for c in 0..k {
        for j in 0..d {
            weights[[c, j]] = theta[c * d + j];
        }
    }
    Ok(LogisticModel {
        weights,
        bias: theta[k * d..].to_vec(),
        n_classes: k,
    })
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scores = x.dot(&self.weights.t());
        for mut row in scores.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.bias[c];
            }
        }
        softmax_rows(&mut scores);
        scores
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        abs_weight_importance(&self.weights)
    }
}

// ---------------------------------------------------------------------------
// Linear SVM (one-vs-rest squared hinge)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LinearSvmModel {
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
    n_classes: usize,
}

pub fn fit_linear_svm(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    params: &ClassifierParams,
) -> Result<LinearSvmModel> {
    let (n, d) = x.dim();
    let k = y.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    if k < 2 {
        return Err(Error::Invalid("svm: single-class training set".into()));
    }
    let l2 = params.l2;

    let mut weights = Array2::<f64>::zeros((k, d));
    let mut bias = vec![0.0f64; k];
    for class in 0..k {
        let targets: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let f_grad = |theta: &[f64]| -> (f64, Vec<f64>) {
            let w = &theta[..d];
            let b = theta[d];
            let mut loss = 0.0;
            let mut grad = vec![0.0f64; d + 1];
            for i in 0..n {
                let mut f = b;
                for j in 0..d {
                    f += w[j] * x[[i, j]];
                }
                let margin = 1.0 - targets[i] * f;
                if margin > 0.0 {
                    loss += margin * margin;
                    let coeff = -2.0 * margin * targets[i];
                    for j in 0..d {
                        grad[j] += coeff * x[[i, j]];
                    }
                    grad[d] += coeff;
                }
            }
            let inv_n = 1.0 / n as f64;
            loss *= inv_n;
            for g in grad.iter_mut() {
                *g *= inv_n;
            }
            for j in 0..d {
                loss += 0.5 * l2 * w[j] * w[j];
                grad[j] += l2 * w[j];
            }
            (loss, grad)
        };
        let theta = lbfgs(&f_grad, vec![0.0; d + 1], params.max_iter, 1e-7);
        for j in 0..d {
            weights[[class, j]] = theta[j];
        }
        bias[class] = theta[d];
    }

    Ok(LinearSvmModel {
        weights,
        bias,
        n_classes: k,
    })
}

impl LinearSvmModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Probabilities via softmax over the per-class margins.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scores = x.dot(&self.weights.t());
        for mut row in scores.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.bias[c];
            }
        }
        softmax_rows(&mut scores);
        scores
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        abs_weight_importance(&self.weights)
    }
}

fn abs_weight_importance(weights: &Array2<f64>) -> Vec<f64> {
    let d = weights.ncols();
    let mut imp: Vec<f64> = weights
        .map_axis(Axis(0), |col| col.iter().map(|v| v.abs()).sum::<f64>())
        .to_vec();
    let total: f64 = imp.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / d as f64; d];
    }
    for v in imp.iter_mut() {
        *v /= total;
    }
    imp
}

/// Nearest-class-mean predictions, used as the γ → 1 reference for LDA.
#[cfg(test)]
pub fn nearest_mean_predict(means: &Array2<f64>, x: ArrayView2<'_, f64>) -> Vec<usize> {
    let (n, _) = x.dim();
    let k = means.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d2: f64 = x
                .row(i)
                .iter()
                .zip(means.row(c).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < best_d {
                best_d = d2;
                best = c;
            }
        }
        out.push(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn lbfgs_minimizes_quadratic() {
        // f(x) = (x0-3)² + 10(x1+2)²
        let f = |x: &[f64]| {
            let f = (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
            let g = vec![2.0 * (x[0] - 3.0), 20.0 * (x[1] + 2.0)];
            (f, g)
        };
        let x = lbfgs(&f, vec![0.0, 0.0], 100, 1e-10);
        assert!((x[0] - 3.0).abs() < 1e-6);
        assert!((x[1] + 2.0).abs() < 1e-6);
    }

    fn blobs(n_per: usize, sep: f64, sigma: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(seed, "blob-test", 0);
        let n = 2 * n_per;
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let cx = if class == 0 { -sep } else { sep };
            let u: f64 = rng.random();
            let w: f64 = rng.random();
            let z0 = (-2.0 * u.max(1e-12).ln()).sqrt() * (2.0 * std::f64::consts::PI * w).cos();
            let z1 = (-2.0 * u.max(1e-12).ln()).sqrt() * (2.0 * std::f64::consts::PI * w).sin();
            x[[i, 0]] = cx + sigma * z0;
            x[[i, 1]] = sigma * z1;
            y.push(class);
        }
        (x, y)
    }

    #[test]
    fn lda_separates_blobs_perfectly() {
        let (x, y) = blobs(40, 1.0, 0.1, 1);
        let model = fit_lda(x.view(), &y, None).unwrap();
        let p = model.predict_proba(x.view());
        let correct = (0..x.nrows())
            .filter(|&i| {
                let row = p.row(i);
                let pred = if row[0] >= row[1] { 0 } else { 1 };
                pred == y[i]
            })
            .count();
        assert_eq!(correct, x.nrows());
    }

    #[test]
    fn lda_identical_means_returns_priors() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(2, "lda-prior", 0);
        let n = 300;
        let mut x = Array2::<f64>::zeros((n, 3));
        for v in x.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
        // 2:1 class imbalance, labels independent of x.
        let y: Vec<usize> = (0..n).map(|i| usize::from(i % 3 == 0)).collect();
        let model = fit_lda(x.view(), &y, None).unwrap();
        let p = model.predict_proba(x.view());
        let mean_p0: f64 = p.column(0).sum() / n as f64;
        assert!((mean_p0 - 2.0 / 3.0).abs() < 0.05, "mean P(class 0) = {mean_p0}");
    }

    #[test]
    fn lda_gamma_one_is_nearest_class_mean() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(3, "lda-gamma", 0);
        let n = 60;
        let mut x = Array2::<f64>::zeros((n, 4));
        for v in x.iter_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let model = fit_lda(x.view(), &y, Some(1.0)).unwrap();
        // Equal priors: softmax argmax must match the nearest class mean.
        let p = model.predict_proba(x.view());
        let nm = nearest_mean_predict(&model.means, x.view());
        for i in 0..n {
            let row = p.row(i);
            let pred = (0..3).fold(0, |best, c| if row[c] > row[best] { c } else { best });
            assert_eq!(pred, nm[i], "row {i}");
        }
    }

    #[test]
    fn logistic_learns_one_dimensional_split() {
        let mut x = Array2::<f64>::zeros((40, 1));
        let mut y = Vec::new();
        for i in 0..40 {
            let class = i % 2;
            x[[i, 0]] = if class == 0 { -1.0 } else { 1.0 } + 0.1 * ((i / 2) as f64 / 20.0 - 0.5);
            y.push(class);
        }
        let model = fit_logistic(x.view(), &y, &ClassifierParams::default()).unwrap();
        let p = model.predict_proba(x.view());
        for i in 0..40 {
            let pred = usize::from(p[[i, 1]] > p[[i, 0]]);
            assert_eq!(pred, y[i]);
        }
    }

    #[test]
    fn svm_separates_and_normalizes() {
        let (x, y) = blobs(30, 1.0, 0.1, 4);
        let model = fit_linear_svm(x.view(), &y, &ClassifierParams::default()).unwrap();
        let p = model.predict_proba(x.view());
        for i in 0..x.nrows() {
            let row: Array1<f64> = p.row(i).to_owned();
            assert!((row.sum() - 1.0).abs() < 1e-9);
            let pred = usize::from(row[1] > row[0]);
            assert_eq!(pred, y[i]);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Array2::<f64>::zeros((5, 2));
        let y = vec![0usize; 5];
        assert!(fit_lda(x.view(), &y, None).is_err());
        assert!(fit_logistic(x.view(), &y, &ClassifierParams::default()).is_err());
        assert!(fit_linear_svm(x.view(), &y, &ClassifierParams::default()).is_err());
    }
}
