//! Nonparametric and parametric testing: one-sided Wilcoxon signed-rank
//! (exact by enumeration up to n = 20), Bonferroni and Benjamini-Hochberg
//! corrections, the Friedman rank test, label-permutation testing against
//! frozen predictions, Spearman rank correlation with exact small-n
//! p-values, and one-way ANOVA with partial η².

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::metrics::balanced_accuracy_labels;
use crate::rng::rng_for;

pub mod special;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    Bonferroni,
    BhFdr,
}

impl std::fmt::Display for Correction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Correction::None => "none",
            Correction::Bonferroni => "bonferroni",
            Correction::BhFdr => "bh_fdr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    OneSidedGreater,
    TwoSided,
}

/// One test outcome: statistic, raw and corrected p, correction metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatReport {
    pub test: String,
    pub statistic_label: String,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_corrected: f64,
    pub correction: Correction,
    /// Comparison count behind the correction.
    pub m: usize,
    pub alternative: Alternative,
    pub extra: BTreeMap<String, f64>,
    pub warning: Option<String>,
}

impl StatReport {
    fn new(test: &str, label: &str, statistic: f64, p: f64, alternative: Alternative) -> Self {
        StatReport {
            test: test.into(),
            statistic_label: label.into(),
            statistic,
            p_raw: p,
            p_corrected: p,
            correction: Correction::None,
            m: 1,
            alternative,
            extra: BTreeMap::new(),
            warning: None,
        }
    }

    /// Apply a Bonferroni correction for `m` comparisons.
    pub fn with_bonferroni(mut self, m: usize) -> Self {
        self.p_corrected = bonferroni(self.p_raw, m);
        self.correction = Correction::Bonferroni;
        self.m = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_raw)
            && (0.0..=1.0).contains(&self.p_corrected)
            && self.p_corrected >= self.p_raw - 1e-12;
        if !ok {
            return Err(Error::Invalid(format!(
                "stat report violates p-value invariants: raw {} corrected {}",
                self.p_raw, self.p_corrected
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

/// Exact enumeration is used up to this sample size; the tie-corrected
/// normal approximation above it.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// One-sample Wilcoxon signed-rank test of `x` against `mu0`.
///
/// `W` is the sum of ranks of the negative differences (`x - mu0 < 0`),
/// so small `W` is evidence for "greater". Zero differences are dropped
/// (Wilcoxon's convention); ties get average ranks.
pub fn wilcoxon_signed_rank(x: &[f64], mu0: f64, alternative: Alternative) -> Result<StatReport> {
    let diffs: Vec<f64> = x
        .iter()
        .map(|v| v - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    if x.is_empty() {
        return Err(Error::Empty("wilcoxon: empty sample".into()));
    }
    if diffs.is_empty() {
        let mut r = StatReport::new("wilcoxon_signed_rank", "W", 0.0, 1.0, alternative);
        r.warning = Some("all differences zero".into());
        return Ok(r);
    }
    let n = diffs.len();

    // Average ranks of |d|, doubled so ties stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut scaled_ranks = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // Average of ranks i+1 ..= j+1, doubled: (i+1 + j+1).
        let scaled = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            scaled_ranks[idx] = scaled;
        }
        tie_sizes.push((j - i + 1) as f64);
        i = j + 1;
    }

    let w_minus_scaled: u64 = (0..n)
        .filter(|&i| diffs[i] < 0.0)
        .map(|i| scaled_ranks[i])
        .sum();
    let w_minus = w_minus_scaled as f64 / 2.0;

    let p = if n <= WILCOXON_EXACT_MAX_N {
        exact_signed_rank_p(&scaled_ranks, w_minus_scaled, alternative)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_sizes.iter().map(|t| t * t * t - t).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let sd = var.sqrt().max(1e-300);
        match alternative {
            Alternative::OneSidedGreater => special::normal_cdf((w_minus + 0.5 - mean) / sd),
            Alternative::TwoSided => {
                let lo = special::normal_cdf((w_minus + 0.5 - mean) / sd);
                let hi = 1.0 - special::normal_cdf((w_minus - 0.5 - mean) / sd);
                (2.0 * lo.min(hi)).min(1.0)
            }
        }
    };

    let mut report = StatReport::new("wilcoxon_signed_rank", "W", w_minus, p, alternative);
    report.extra.insert("n".into(), n as f64);
    report
        .extra
        .insert("exact".into(), f64::from(u8::from(n <= WILCOXON_EXACT_MAX_N)));
    Ok(report)
}

/// Exact null distribution of the scaled negative-rank sum by subset-sum
/// dynamic programming over the 2^n sign assignments.
fn exact_signed_rank_p(scaled_ranks: &[u64], w_scaled: u64, alternative: Alternative) -> f64 {
    let total: u64 = scaled_ranks.iter().sum();
    let mut counts = vec![0.0f64; (total + 1) as usize];
    counts[0] = 1.0;
    for &r in scaled_ranks {
        for s in (r..=total).rev() {
            counts[s as usize] += counts[(s - r) as usize];
        }
    }
    let all: f64 = counts.iter().sum();
    let cdf_at =
        |w: u64| -> f64 { counts[..=(w as usize).min(counts.len() - 1)].iter().sum::<f64>() / all };
    let sf_at =
        |w: u64| -> f64 { counts[(w as usize).min(counts.len() - 1)..].iter().sum::<f64>() / all };
    match alternative {
        Alternative::OneSidedGreater => cdf_at(w_scaled),
        Alternative::TwoSided => (2.0 * cdf_at(w_scaled).min(sf_at(w_scaled))).min(1.0),
    }
}

// ---------------------------------------------------------------------------
// Multiple-comparison corrections
// ---------------------------------------------------------------------------

/// Bonferroni: `min(1, m·p)`.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    assert!(m >= 1, "bonferroni needs m >= 1");
    (p * m as f64).min(1.0)
}

/// Benjamini-Hochberg step-up adjusted p-values (same order as the input).
pub fn bh_fdr(p_raw: &[f64]) -> Vec<f64> {
    let m = p_raw.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_raw[a].partial_cmp(&p_raw[b]).unwrap());
    let mut adjusted = vec![0.0f64; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let candidate = (p_raw[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running_min = running_min.min(candidate);
        adjusted[idx] = running_min;
    }
    adjusted
}

// ---------------------------------------------------------------------------
// Friedman test
// ---------------------------------------------------------------------------

/// Friedman rank test over a subjects × models accuracy matrix:
/// `χ² = 12n/(k(k+1)) Σ_j (R̄_j − (k+1)/2)²` with average-rank ties,
/// p from the χ²_{k-1} upper tail.
pub fn friedman(matrix: &ndarray::Array2<f64>) -> Result<StatReport> {
    let (n, k) = matrix.dim();
    if n < 2 || k < 2 {
        return Err(Error::Invalid(format!(
            "friedman: need >= 2 subjects and >= 2 models, got {n}×{k}"
        )));
    }
    let mut rank_sums = vec![0.0f64; k];
    for row in matrix.rows() {
        let ranks = average_ranks(row.as_slice().unwrap());
        for (j, r) in ranks.iter().enumerate() {
            rank_sums[j] += r;
        }
    }
    let centre = (k as f64 + 1.0) / 2.0;
    let sum_sq: f64 = rank_sums
        .iter()
        .map(|s| {
            let mean_rank = s / n as f64;
            (mean_rank - centre) * (mean_rank - centre)
        })
        .sum();
    let chi2 = 12.0 * n as f64 / (k as f64 * (k as f64 + 1.0)) * sum_sq;
    let p = special::chi2_sf(chi2, (k - 1) as f64);
    let mut report = StatReport::new("friedman", "chi2", chi2, p, Alternative::TwoSided);
    report.extra.insert("df".into(), (k - 1) as f64);
    report.extra.insert("n".into(), n as f64);
    report.extra.insert("k".into(), k as f64);
    Ok(report)
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

// ---------------------------------------------------------------------------
// Permutation test
// ---------------------------------------------------------------------------

/// One fold's frozen predictions.
#[derive(Debug, Clone)]
pub struct FoldPredictions {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
}

/// Label-permutation test against frozen predictions.
///
/// Labels are permuted within each fold (counter-based per-draw seeds, so
/// parallel evaluation is order-invariant), the mean balanced accuracy is
/// recomputed, and `p = (1 + #{perm ≥ observed}) / (1 + n_perm)`.
pub fn permutation_test(
    folds: &[FoldPredictions],
    n_classes: usize,
    n_perm: usize,
    seed: u64,
) -> Result<StatReport> {
    if folds.is_empty() {
        return Err(Error::Empty("permutation test: no folds".into()));
    }
    if n_perm < 1 {
        return Err(Error::Invalid("permutation test: n_perm must be >= 1".into()));
    }
    let observed = mean_balanced_accuracy(folds, n_classes);

    use rayon::prelude::*;
    let exceed: usize = (0..n_perm)
        .into_par_iter()
        .map(|draw| {
            use rand::seq::SliceRandom;
            let mut rng = rng_for(seed, "permutation-test", draw as u64);
            let mut acc_sum = 0.0;
            for fold in folds {
                let mut labels = fold.y_true.clone();
                labels.shuffle(&mut rng);
                acc_sum += balanced_accuracy_labels(&labels, &fold.y_pred, n_classes);
            }
            let stat = acc_sum / folds.len() as f64;
            usize::from(stat >= observed)
        })
        .sum();

    let p = (1.0 + exceed as f64) / (1.0 + n_perm as f64);
    let mut report = StatReport::new(
        "permutation",
        "acc",
        observed,
        p,
        Alternative::OneSidedGreater,
    );
    report.extra.insert("n_perm".into(), n_perm as f64);
    Ok(report)
}

fn mean_balanced_accuracy(folds: &[FoldPredictions], n_classes: usize) -> f64 {
    folds
        .iter()
        .map(|f| balanced_accuracy_labels(&f.y_true, &f.y_pred, n_classes))
        .sum::<f64>()
        / folds.len() as f64
}

// ---------------------------------------------------------------------------
// Spearman rank correlation
// ---------------------------------------------------------------------------

/// Spearman ρ: Pearson correlation of average ranks. The p-value is exact
/// (all n! rank permutations) for n ≤ 8 and uses seeded permutations above
/// that; two-sided on |ρ|.
pub fn spearman(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<StatReport> {
    if x.len() != y.len() {
        return Err(Error::Shape("spearman: length mismatch".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Invalid("spearman: need >= 3 pairs".into()));
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::Invalid("spearman: rho undefined for constant input".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry);

    let p = if n <= 8 {
        // Exact: enumerate all permutations of the y-ranks.
        let mut perm: Vec<usize> = (0..n).collect();
        let mut exceed = 0usize;
        let mut total = 0usize;
        permute_all(&mut perm, 0, &mut |p: &[usize]| {
            let ry_p: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
            if pearson(&rx, &ry_p).abs() >= rho.abs() - 1e-12 {
                exceed += 1;
            }
            total += 1;
        });
        exceed as f64 / total as f64
    } else {
        use rand::seq::SliceRandom;
        let mut exceed = 0usize;
        for draw in 0..n_perm {
            let mut rng = rng_for(seed, "spearman-perm", draw as u64);
            let mut ry_p = ry.clone();
            ry_p.shuffle(&mut rng);
            if pearson(&rx, &ry_p).abs() >= rho.abs() - 1e-12 {
                exceed += 1;
            }
        }
        (1.0 + exceed as f64) / (1.0 + n_perm as f64)
    };

    let mut report = StatReport::new("spearman", "rho", rho, p, Alternative::TwoSided);
    report.extra.insert("n".into(), n as f64);
    report.extra.insert("exact".into(), f64::from(u8::from(n <= 8)));
    Ok(report)
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt()).max(1e-300)
}

fn permute_all(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute_all(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

// ---------------------------------------------------------------------------
// One-way ANOVA
// ---------------------------------------------------------------------------

/// One-way ANOVA across groups: `F = MS_between / MS_within`, with partial
/// η² = SS_b/(SS_b+SS_w) in the report extras.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<StatReport> {
    if groups.len() < 2 {
        return Err(Error::Invalid("anova: need >= 2 groups".into()));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::Invalid("anova: every group needs >= 2 values".into()));
    }
    let k = groups.len();
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let grand: f64 = groups.iter().flatten().sum::<f64>() / n_total as f64;

    let mut ss_b = 0.0;
    let mut ss_w = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_b += g.len() as f64 * (m - grand) * (m - grand);
        ss_w += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    if ss_w <= 0.0 {
        return Err(Error::Numerical(
            "anova: zero within-group variance, F undefined".into(),
        ));
    }
    let df_b = (k - 1) as f64;
    let df_w = (n_total - k) as f64;
    let f_stat = (ss_b / df_b) / (ss_w / df_w);
    let p = special::f_sf(f_stat, df_b, df_w);
    let mut report = StatReport::new("anova_oneway", "F", f_stat, p, Alternative::TwoSided);
    report.extra.insert("eta_p2".into(), ss_b / (ss_b + ss_w));
    report.extra.insert("df_between".into(), df_b);
    report.extra.insert("df_within".into(), df_w);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    // -- Wilcoxon ----------------------------------------------------------

    #[test]
    fn wilcoxon_three_positive_differences() {
        let r = wilcoxon_signed_rank(&[0.25, 0.27, 0.22], 0.2, Alternative::OneSidedGreater)
            .unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_raw, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn wilcoxon_symmetric_sample_is_uninformative() {
        let x = [0.21, 0.19, 0.22, 0.18];
        let r = wilcoxon_signed_rank(&x, 0.2, Alternative::OneSidedGreater).unwrap();
        assert!((0.4..=0.7).contains(&r.p_raw), "p {}", r.p_raw);
    }

    #[test]
    fn wilcoxon_all_zero_differences_warns_p_one() {
        let r = wilcoxon_signed_rank(&[0.2, 0.2], 0.2, Alternative::OneSidedGreater).unwrap();
        assert_eq!(r.p_raw, 1.0);
        assert!(r.warning.is_some());
    }

    #[test]
    fn wilcoxon_exact_at_n_16() {
        let x: Vec<f64> = (0..16).map(|i| 0.2 + 0.01 * ((i % 5) as f64 - 1.5)).collect();
        let r = wilcoxon_signed_rank(&x, 0.2, Alternative::OneSidedGreater).unwrap();
        assert_eq!(r.extra["exact"], 1.0);
    }

    /// Brute-force oracle: enumerate every sign pattern directly.
    fn brute_force_wilcoxon(diffs: &[f64], alternative: Alternative) -> (f64, f64) {
        let n = diffs.len();
        let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let w_obs: f64 = (0..n).filter(|&i| diffs[i] < 0.0).map(|i| ranks[i]).sum();
        let mut le = 0usize;
        let mut ge = 0usize;
        for mask in 0..(1u32 << n) {
            let w: f64 = (0..n)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| ranks[i])
                .sum();
            if w <= w_obs + 1e-12 {
                le += 1;
            }
            if w >= w_obs - 1e-12 {
                ge += 1;
            }
        }
        let total = (1u32 << n) as f64;
        let p = match alternative {
            Alternative::OneSidedGreater => le as f64 / total,
            Alternative::TwoSided => (2.0 * (le.min(ge) as f64) / total).min(1.0),
        };
        (w_obs, p)
    }

    #[test]
    fn wilcoxon_exact_matches_brute_force_for_all_small_n() {
        let mut rng = crate::rng::rng_for(42, "wilcoxon-oracle", 0);
        for n in 1..=8usize {
            for rep in 0..20 {
                let x: Vec<f64> = (0..n)
                    .map(|i| {
                        let v: f64 = rng.random::<f64>() - 0.45;
                        if rep % 3 == 0 && i % 2 == 0 {
                            (v * 4.0).round() / 4.0
                        } else {
                            v
                        }
                    })
                    .collect();
                let diffs: Vec<f64> = x.iter().map(|v| v - 0.0).filter(|d| *d != 0.0).collect();
                if diffs.is_empty() {
                    continue;
                }
                for alt in [Alternative::OneSidedGreater, Alternative::TwoSided] {
                    let r = wilcoxon_signed_rank(&x, 0.0, alt).unwrap();
                    let (w_oracle, p_oracle) = brute_force_wilcoxon(&diffs, alt);
                    assert_abs_diff_eq!(r.statistic, w_oracle, epsilon = 1e-9);
                    assert_abs_diff_eq!(r.p_raw, p_oracle, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn wilcoxon_switches_to_approximation_above_n20() {
        let mut rng = crate::rng::rng_for(7, "wilcoxon-approx", 0);
        let x: Vec<f64> = (0..21).map(|_| rng.random::<f64>() - 0.4).collect();
        let r = wilcoxon_signed_rank(&x, 0.0, Alternative::OneSidedGreater).unwrap();
        assert_eq!(r.extra["exact"], 0.0);
        assert!(r.p_raw > 0.0 && r.p_raw < 1.0);
    }

    // -- Corrections -------------------------------------------------------

    #[test]
    fn bonferroni_table_values() {
        assert_abs_diff_eq!(bonferroni(0.001, 14), 0.014, epsilon = 1e-12);
        assert_eq!(bonferroni(0.5, 14), 1.0);
    }

    #[test]
    fn bh_hand_fixture() {
        let adjusted = bh_fdr(&[0.01, 0.02, 0.03]);
        for a in &adjusted {
            assert_abs_diff_eq!(*a, 0.03, epsilon = 1e-12);
        }
    }

    #[test]
    fn bh_monotone_and_at_least_raw() {
        let raw = vec![0.04, 0.001, 0.3, 0.02, 0.8, 0.05];
        let adjusted = bh_fdr(&raw);
        for (r, a) in raw.iter().zip(adjusted.iter()) {
            assert!(a >= r, "adjusted {a} below raw {r}");
            assert!(*a <= 1.0);
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&i, &j| raw[i].partial_cmp(&raw[j]).unwrap());
        for w in order.windows(2) {
            assert!(adjusted[w[0]] <= adjusted[w[1]] + 1e-12);
        }
    }

    // -- Friedman ----------------------------------------------------------

    #[test]
    fn friedman_perfect_consistency_closed_form() {
        // Identical model ordering in every subject: χ² = n(k-1).
        let n = 16;
        let k = 14;
        let mut m = Array2::<f64>::zeros((n, k));
        for i in 0..n {
            for j in 0..k {
                m[[i, j]] = j as f64;
            }
        }
        let r = friedman(&m).unwrap();
        assert_abs_diff_eq!(r.statistic, 208.0, epsilon = 1e-9);
        assert_eq!(r.statistic, (n * (k - 1)) as f64);
    }

    #[test]
    fn friedman_constant_matrix_is_zero() {
        let m = Array2::<f64>::from_elem((5, 4), 0.2);
        let r = friedman(&m).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn friedman_k2_reduces_to_sign_counts() {
        // For k = 2 the statistic collapses to (2w - n)²/n where w counts
        // the rows won by the first column. Validate against an exhaustive
        // enumeration of the 2^n win patterns.
        let m = Array2::from_shape_vec(
            (4, 2),
            vec![0.3, 0.2, 0.25, 0.2, 0.28, 0.21, 0.26, 0.27],
        )
        .unwrap();
        let r = friedman(&m).unwrap();
        let wins = 3.0f64; // column 0 wins rows 0, 1, 2
        assert_abs_diff_eq!(r.statistic, (2.0 * wins - 4.0).powi(2) / 4.0, epsilon = 1e-12);

        // Enumeration oracle over every win pattern.
        for mask in 0..(1u32 << 4) {
            let w = mask.count_ones() as f64;
            let mut rank_sums = [0.0f64; 2];
            for row in 0..4 {
                if mask & (1 << row) != 0 {
                    rank_sums[0] += 1.0;
                    rank_sums[1] += 2.0;
                } else {
                    rank_sums[0] += 2.0;
                    rank_sums[1] += 1.0;
                }
            }
            let centre = 1.5;
            let sum_sq: f64 = rank_sums
                .iter()
                .map(|s| (s / 4.0 - centre) * (s / 4.0 - centre))
                .sum();
            let chi2 = 12.0 * 4.0 / (2.0 * 3.0) * sum_sq;
            // w counts column-1 wins here; the closed form is symmetric.
            assert_abs_diff_eq!(chi2, (2.0 * w - 4.0).powi(2) / 4.0, epsilon = 1e-12);
        }
    }

    // -- Permutation test ----------------------------------------------------

    fn fold_with_accuracy(n: usize, hit_rate: f64, seed: u64) -> FoldPredictions {
        let mut rng = crate::rng::rng_for(seed, "perm-fixture", 0);
        let y_true: Vec<usize> = (0..n).map(|i| i % 5).collect();
        let y_pred: Vec<usize> = y_true
            .iter()
            .map(|&t| {
                if rng.random::<f64>() < hit_rate {
                    t
                } else {
                    (t + 1 + (rng.random::<u64>() % 4) as usize) % 5
                }
            })
            .collect();
        FoldPredictions { y_true, y_pred }
    }

    #[test]
    fn permutation_perfect_predictions_minimal_p() {
        let folds: Vec<FoldPredictions> = (0..4).map(|s| fold_with_accuracy(50, 1.0, s)).collect();
        let r = permutation_test(&folds, 5, 10_000, 42).unwrap();
        assert_abs_diff_eq!(r.p_raw, 1.0 / 10_001.0, epsilon = 1e-12);
        assert!(r.p_raw < 0.001);
    }

    #[test]
    fn permutation_single_draw_tie_gives_p_one() {
        // Constant predictions: every permutation yields the same balanced
        // accuracy, so the tie makes p = (1+1)/(1+1) = 1.
        let folds = vec![FoldPredictions {
            y_true: vec![0, 1, 2, 3, 4],
            y_pred: vec![0, 0, 0, 0, 0],
        }];
        let r = permutation_test(&folds, 5, 1, 42).unwrap();
        assert_eq!(r.p_raw, 1.0);
    }

    #[test]
    fn permutation_null_p_is_roughly_uniform() {
        let mut ps = Vec::new();
        for seed in 0..40 {
            let mut rng = crate::rng::rng_for(seed, "perm-null", 1);
            let y_true: Vec<usize> = (0..60).map(|i| i % 5).collect();
            let mut y_pred = y_true.clone();
            use rand::seq::SliceRandom;
            y_pred.shuffle(&mut rng);
            let folds = vec![FoldPredictions { y_true, y_pred }];
            ps.push(permutation_test(&folds, 5, 200, seed).unwrap().p_raw);
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ps.len() as f64;
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, p)| ((i + 1) as f64 / n - p).abs().max((i as f64 / n - p).abs()))
            .fold(0.0f64, f64::max);
        assert!(ks < 0.25, "KS distance {ks}");
    }

    #[test]
    fn permutation_p_is_shift_invariant() {
        // Shifting every fold accuracy and the chance level by the same
        // constant cannot change the exceedance counts: the decision
        // (perm ≥ observed) compares statistics whose shift cancels. Verify
        // at the comparison level with an explicit shifted statistic.
        let folds: Vec<FoldPredictions> = (0..3).map(|s| fold_with_accuracy(40, 0.5, s)).collect();
        let base = permutation_test(&folds, 5, 500, 7).unwrap();
        // Recompute with the identical draws but a shifted statistic.
        let shift = 0.123;
        let observed = folds
            .iter()
            .map(|f| balanced_accuracy_labels(&f.y_true, &f.y_pred, 5))
            .sum::<f64>()
            / folds.len() as f64
            + shift;
        let mut exceed = 0usize;
        for draw in 0..500u64 {
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::rng_for(7, "permutation-test", draw);
            let mut acc = 0.0;
            for f in &folds {
                let mut labels = f.y_true.clone();
                labels.shuffle(&mut rng);
                acc += balanced_accuracy_labels(&labels, &f.y_pred, 5);
            }
            if acc / folds.len() as f64 + shift >= observed {
                exceed += 1;
            }
        }
        let p_shifted = (1.0 + exceed as f64) / 501.0;
        assert_abs_diff_eq!(base.p_raw, p_shifted, epsilon = 1e-12);
    }

    // -- Spearman ------------------------------------------------------------

    #[test]
    fn spearman_monotone_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up = [2.0, 4.0, 5.0, 7.0, 11.0];
        let down = [11.0, 7.0, 5.0, 4.0, 2.0];
        let r = spearman(&x, &up, 1000, 42).unwrap();
        assert_abs_diff_eq!(r.statistic, 1.0, epsilon = 1e-12);
        let r = spearman(&x, &down, 1000, 42).unwrap();
        assert_abs_diff_eq!(r.statistic, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_constant_input_is_error() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert!(spearman(&x, &y, 100, 42).is_err());
    }

    #[test]
    fn spearman_exact_matches_full_enumeration_n5() {
        let x = [0.3, 1.2, -0.5, 2.0, 0.9];
        let y = [1.0, 0.2, 0.8, 2.5, -0.3];
        let r = spearman(&x, &y, 0, 42).unwrap();
        // Oracle rho via the no-ties closed form 1 − 6Σd²/(n(n²−1)).
        let rank_of = |v: &[f64]| -> Vec<f64> {
            let mut order: Vec<usize> = (0..v.len()).collect();
            order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            let mut ranks = vec![0.0; v.len()];
            for (pos, &i) in order.iter().enumerate() {
                ranks[i] = (pos + 1) as f64;
            }
            ranks
        };
        let rho_of = |a: &[f64], b: &[f64]| -> f64 {
            let ra = rank_of(a);
            let rb = rank_of(b);
            let d2: f64 = ra.iter().zip(rb.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
            let n = a.len() as f64;
            1.0 - 6.0 * d2 / (n * (n * n - 1.0))
        };
        let rho_oracle = rho_of(&x, &y);
        assert_abs_diff_eq!(r.statistic, rho_oracle, epsilon = 1e-12);

        let mut perm: Vec<usize> = (0..5).collect();
        let mut exceed = 0usize;
        let mut total = 0usize;
        permute_all(&mut perm, 0, &mut |p: &[usize]| {
            let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
            if rho_of(&x, &yp).abs() >= rho_oracle.abs() - 1e-12 {
                exceed += 1;
            }
            total += 1;
        });
        assert_eq!(total, 120);
        assert_abs_diff_eq!(r.p_raw, exceed as f64 / 120.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_exact_matches_enumeration_up_to_n8_with_ties() {
        let mut rng = crate::rng::rng_for(9, "spearman-oracle", 0);
        for n in 3..=8usize {
            let x: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 4.0).round()).collect();
            let y: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 4.0).round()).collect();
            if is_constant(&x) || is_constant(&y) {
                continue;
            }
            let r = spearman(&x, &y, 0, 42).unwrap();
            let rx = average_ranks(&x);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut exceed = 0usize;
            let mut total = 0usize;
            permute_all(&mut perm, 0, &mut |p: &[usize]| {
                let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
                let ryp = average_ranks(&yp);
                if pearson(&rx, &ryp).abs() >= r.statistic.abs() - 1e-12 {
                    exceed += 1;
                }
                total += 1;
            });
            let p_oracle = exceed as f64 / total as f64;
            assert_abs_diff_eq!(r.p_raw, p_oracle, epsilon = 1e-9);
        }
    }

    // -- ANOVA ---------------------------------------------------------------

    #[test]
    fn anova_identical_groups_give_zero_f() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = anova_oneway(&g).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn anova_zero_within_variance_is_error() {
        let g = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert!(anova_oneway(&g).is_err());
    }

    #[test]
    fn anova_matches_hand_computation() {
        let g = vec![
            vec![2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0],
            vec![8.0, 9.0, 10.0],
        ];
        // Grand mean 6; group means 3, 6, 9; SS_b = 3(9+0+9) = 54;
        // SS_w = 2·3 = 6; df = (2, 6); F = 27.
        let r = anova_oneway(&g).unwrap();
        assert_abs_diff_eq!(r.statistic, 27.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.extra["eta_p2"], 54.0 / 60.0, epsilon = 1e-12);
    }

    // -- Report invariants ----------------------------------------------------

    #[test]
    fn report_invariants_hold_after_correction() {
        let r = wilcoxon_signed_rank(&[0.25, 0.27, 0.22], 0.2, Alternative::OneSidedGreater)
            .unwrap()
            .with_bonferroni(14);
        r.validate().unwrap();
        assert!(r.p_corrected >= r.p_raw);
        assert_eq!(r.m, 14);
    }
}
