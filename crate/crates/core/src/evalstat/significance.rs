use crate::error::{invalid, Error, Result};
use crate::prelude::*;
use crate::special::{chi2_2_sf, normal_sf, student_t_two_sided};

use super::protocol::{Metric, RunSample};

/// Family-wise significance level before the Bonferroni split.
pub const ALPHA: f64 = 0.05;
/// Hypotheses per model pair in the default protocol.
pub const DEFAULT_HYPOTHESES: usize = 7;
/// Samples below this size get a normality result flagged as unreliable.
pub const NORMALITY_MIN_N: usize = 20;
/// Largest number of non-zero differences handled by the exact
/// signed-rank distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Omnibus normality test result.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalityTest {
    pub k2: f64,
    pub p: f64,
    pub z_skew: f64,
    pub z_kurtosis: f64,
    /// `n` below [`NORMALITY_MIN_N`].
    pub small_sample: bool,
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// D'Agostino–Pearson omnibus test: `K² = Z₁² + Z₂²` from the transformed
/// sample skewness and kurtosis, with a χ²(2) p-value.
pub fn dagostino_pearson(sample: &[f64]) -> Result<NormalityTest> {
    if sample.len() < 8 {
        return Err(invalid(format!("normality test needs at least 8 values, got {}", sample.len())));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("normality test needs finite values"));
    }
    let n = sample.len() as f64;
    let (m2, m3, m4) = central_moments(sample);
    if !(m2 > 0.0) {
        return Err(Error::DegenerateSample("zero variance".into()));
    }
    let g1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);

    let mut y = g1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    let z_skew = delta * (y / alpha + ((y / alpha).powi(2) + 1.0).sqrt()).ln();

    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateSample("kurtosis transform undefined".into()));
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z_kurtosis = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z_skew * z_skew + z_kurtosis * z_kurtosis;
    Ok(NormalityTest { k2, p: chi2_2_sf(k2), z_skew, z_kurtosis, small_sample: sample.len() < NORMALITY_MIN_N })
}

/// Two-sided paired test result. `degenerate` marks identical samples,
/// reported with `p = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairedTest {
    pub statistic: f64,
    pub p: f64,
    pub degenerate: bool,
}

impl PairedTest {
    fn degenerate() -> Self {
        Self { statistic: 0.0, p: 1.0, degenerate: true }
    }
}

fn differences(a: &[f64], b: &[f64], min: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(invalid(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < min {
        return Err(invalid(format!("paired test needs at least {min} pairs")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(invalid("paired samples must be finite"));
    }
    Ok(d)
}

/// Paired Student t-test on `a − b` with `n − 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    let d = differences(a, b, 2)?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(PairedTest::degenerate());
        }
        return Ok(PairedTest { statistic: mean.signum() * f64::INFINITY, p: 0.0, degenerate: false });
    }
    let t = mean / (var / n).sqrt();
    Ok(PairedTest { statistic: t, p: student_t_two_sided(t, n - 1.0), degenerate: false })
}

/// Mean ranks (1-based) of `v`, ties sharing their average rank.
fn mean_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        order[i..j].iter().for_each(|&k| ranks[k] = r);
        i = j;
    }
    ranks
}

/// Wilcoxon signed-rank test on `a − b`. Zero differences are dropped and
/// ties get mean ranks. Up to [`WILCOXON_EXACT_MAX_N`] non-zero differences
/// the p-value comes from the exact permutation distribution of the
/// observed ranks; above it from the normal approximation with tie and
/// continuity corrections. The statistic is `min(W⁺, W⁻)`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    let d: Vec<f64> = differences(a, b, 1)?.into_iter().filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return Ok(PairedTest::degenerate());
    }
    if d.len() < 6 {
        return Err(invalid(format!("signed-rank test needs at least 6 non-zero differences, got {}", d.len())));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = mean_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let n = d.len() as f64;
    let total = n * (n + 1.0) / 2.0;
    let statistic = w_plus.min(total - w_plus);

    let p = if d.len() <= WILCOXON_EXACT_MAX_N {
        // Mean ranks are multiples of 1/2; count sign assignments by the
        // doubled rank sum.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let w = (2.0 * w_plus).round() as usize;
        let le: f64 = counts[..=w].iter().sum();
        let ge: f64 = counts[w..].iter().sum();
        let all = libm::pow(2.0, n);
        (2.0 * le.min(ge) / all).min(1.0)
    } else {
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let mean = total / 2.0;
        let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0).sqrt();
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
        (2.0 * normal_sf(z)).min(1.0)
    };
    Ok(PairedTest { statistic, p, degenerate: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TestKind {
    PairedT,
    Wilcoxon,
}

/// One model's normality screen. `test` is `None` when the sample could not
/// be tested (zero variance or too few runs); such samples count as
/// non-normal.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalityScreen {
    pub model: String,
    pub test: Option<NormalityTest>,
    pub normal: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub test: TestKind,
    pub statistic: f64,
    pub p: f64,
    pub significant: bool,
    pub degenerate: bool,
    /// Mean of `a − b` over paired runs.
    pub mean_difference: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignificanceReport {
    pub metric: Metric,
    pub n_hypotheses: usize,
    /// `ALPHA / n_hypotheses`.
    pub threshold: f64,
    pub normality: Vec<NormalityScreen>,
    pub pairs: Vec<PairComparison>,
}

pub fn bonferroni_threshold(n_hypotheses: usize) -> f64 {
    ALPHA / n_hypotheses as f64
}

/// Pairwise comparison of every model pair on one metric. Runs are paired
/// by run index. A pair uses the paired t-test only when both samples pass
/// the normality screen (`p ≥ ALPHA`), otherwise the signed-rank test; a
/// pair is significant when its p-value is below `ALPHA / n_hypotheses`.
pub fn compare_models(runs: &[RunSample], n_hypotheses: usize, metric: Metric) -> Result<SignificanceReport> {
    if n_hypotheses == 0 {
        return Err(invalid("at least one hypothesis is required"));
    }
    let threshold = bonferroni_threshold(n_hypotheses);
    let normality: Vec<NormalityScreen> = runs
        .iter()
        .map(|s| {
            let test = dagostino_pearson(&s.values(metric)).ok();
            NormalityScreen { model: s.model.clone(), normal: test.is_some_and(|t| t.p >= ALPHA), test }
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let (a, b) = runs[i].paired_values(&runs[j], metric);
            if a.len() < 2 {
                return Err(invalid(format!(
                    "`{}` and `{}` share fewer than two completed runs",
                    runs[i].model, runs[j].model
                )));
            }
            let kind = if normality[i].normal && normality[j].normal { TestKind::PairedT } else { TestKind::Wilcoxon };
            let r = match kind {
                TestKind::PairedT => paired_t_test(&a, &b)?,
                TestKind::Wilcoxon => wilcoxon_signed_rank(&a, &b)?,
            };
            let mean_difference = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
            pairs.push(PairComparison {
                a: runs[i].model.clone(),
                b: runs[j].model.clone(),
                test: kind,
                statistic: r.statistic,
                p: r.p,
                significant: !r.degenerate && r.p < threshold,
                degenerate: r.degenerate,
                mean_difference,
                n_pairs: a.len(),
            });
        }
    }
    Ok(SignificanceReport { metric, n_hypotheses, threshold, normality, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_share_ties() {
        assert_eq!(mean_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn bonferroni_for_seven() {
        assert!((bonferroni_threshold(7) - 0.05 / 7.0).abs() < 1e-18);
        assert!((bonferroni_threshold(7) - 0.007_142_857_142_857_143).abs() < 1e-15);
    }

    #[test]
    fn exact_small_case() {
        // Six positive differences: only one of 64 sign patterns is as extreme.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p - 2.0 / 64.0).abs() < 1e-15);
    }
}
