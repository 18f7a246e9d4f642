//! One-sided Wilcoxon signed-rank test for paired per-query metric values.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ir_metrics::MetricReport;

/// Largest effective sample size for which the exact null distribution is used.
pub const EXACT_THRESHOLD: usize = 25;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired sample needs at least one pair")]
    Empty,
    #[error("baseline has {baseline} values, variant has {variant}, ids {ids}")]
    Length { baseline: usize, variant: usize, ids: usize },
    #[error("non-finite value for query {0:?}")]
    NonFinite(String),
    #[error("query sets differ; missing from {side}: {missing:?}")]
    QueryMismatch { side: String, missing: Vec<String> },
    #[error("baseline {0:?} not among the reports")]
    NoBaseline(String),
    #[error("metric {metric:?} missing from report {report:?}")]
    NoMetric { metric: String, report: String },
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub query_ids: Vec<String>,
    pub baseline: Vec<f64>,
    pub variant: Vec<f64>,
}

impl PairedSample {
    pub fn new(query_ids: Vec<String>, baseline: Vec<f64>, variant: Vec<f64>) -> Result<Self> {
        if baseline.len() != variant.len() || query_ids.len() != baseline.len() {
            return Err(StatsError::Length { baseline: baseline.len(), variant: variant.len(), ids: query_ids.len() });
        }
        if baseline.is_empty() {
            return Err(StatsError::Empty);
        }
        for (i, q) in query_ids.iter().enumerate() {
            if !baseline[i].is_finite() || !variant[i].is_finite() {
                return Err(StatsError::NonFinite(q.clone()));
            }
        }
        Ok(Self { query_ids, baseline, variant })
    }

    /// Pairs two per-query maps by id. Both must cover the same queries.
    pub fn from_maps(baseline: &BTreeMap<&str, f64>, variant: &BTreeMap<&str, f64>) -> Result<Self> {
        let b: BTreeSet<&str> = baseline.keys().copied().collect();
        let v: BTreeSet<&str> = variant.keys().copied().collect();
        let missing: Vec<String> = b.difference(&v).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(StatsError::QueryMismatch { side: "variant".into(), missing });
        }
        let missing: Vec<String> = v.difference(&b).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(StatsError::QueryMismatch { side: "baseline".into(), missing });
        }
        let ids: Vec<String> = b.iter().map(|s| s.to_string()).collect();
        let bv = b.iter().map(|q| baseline[q]).collect();
        let vv = b.iter().map(|q| variant[q]).collect();
        Self::new(ids, bv, vv)
    }

    pub fn differences(&self) -> Vec<f64> {
        self.variant.iter().zip(&self.baseline).map(|(v, b)| v - b).collect()
    }

    pub fn swapped(&self) -> Self {
        Self { query_ids: self.query_ids.clone(), baseline: self.variant.clone(), variant: self.baseline.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    VariantLess,
    VariantGreater,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::VariantLess => Alternative::VariantGreater,
            Alternative::VariantGreater => Alternative::VariantLess,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    /// Every difference was zero.
    NoEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Sum of ranks of the positive differences.
    #[serde(rename = "W")]
    pub statistic: f64,
    #[serde(rename = "n")]
    pub n_effective: usize,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub method: TestMethod,
    pub significant: bool,
    pub alternative: Alternative,
    pub alpha: f64,
    /// Zero differences are dropped before ranking.
    pub zero_method: String,
}

/// Average ranks (1-based) of `values`, plus the sizes of tie groups > 1.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of subsets of {1..n} for every achievable rank sum `0..=n(n+1)/2`.
pub fn signed_rank_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut c = vec![0.0; max + 1];
    c[0] = 1.0;
    for r in 1..=n {
        for w in (r..=max).rev() {
            c[w] += c[w - r];
        }
    }
    c
}

/// `P(W <= w)` under the null for `n` untied ranks.
pub fn exact_cdf(n: usize, w: usize) -> f64 {
    let c = signed_rank_counts(n);
    let total = 2f64.powi(n as i32);
    c.iter().take(w + 1).sum::<f64>() / total
}

/// Normal approximation of the one-sided p-value for statistic `w` over `n`
/// non-zero differences, with tie correction and a 0.5 continuity
/// correction. `ties` holds the sizes of tie groups.
pub fn normal_approx_p(w: f64, n: usize, ties: &[usize], alternative: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let sd = var.sqrt();
    let z = match alternative {
        Alternative::VariantLess => (w - mean + 0.5) / sd,
        Alternative::VariantGreater => (mean + 0.5 - w) / sd,
    };
    Normal::standard().cdf(z)
}

/// One-sided signed-rank test on `variant - baseline`. Significant iff
/// `p <= alpha`.
pub fn wilcoxon_one_sided(sample: &PairedSample, alternative: Alternative, alpha: f64) -> TestResult {
    let d: Vec<f64> = sample.differences().into_iter().filter(|&x| x != 0.0).collect();
    let n = d.len();
    let mut result = TestResult {
        statistic: 0.0,
        n_effective: n,
        p_value: 1.0,
        method: TestMethod::NoEvidence,
        significant: false,
        alternative,
        alpha,
        zero_method: "wilcox".into(),
    };
    if n == 0 {
        return result;
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    result.statistic = w;
    let p = if n <= EXACT_THRESHOLD && ties.is_empty() {
        result.method = TestMethod::Exact;
        // Untied ranks are integers, so W is too.
        let wi = w as usize;
        let max = n * (n + 1) / 2;
        match alternative {
            Alternative::VariantLess => exact_cdf(n, wi),
            // P(W >= w) = P(W <= max - w) by symmetry.
            Alternative::VariantGreater => exact_cdf(n, max - wi),
        }
    } else {
        result.method = TestMethod::NormalApprox;
        normal_approx_p(w, n, &ties, alternative)
    };
    result.p_value = p.clamp(f64::MIN_POSITIVE, 1.0);
    result.significant = result.p_value <= alpha;
    result
}

/// Tests every non-baseline report against the baseline on one metric, with
/// alternative [`Alternative::VariantLess`].
pub fn annotate_significance(
    reports: &BTreeMap<String, MetricReport>,
    baseline_key: &str,
    metric: &str,
    alpha: f64,
) -> Result<BTreeMap<String, TestResult>> {
    let base = reports.get(baseline_key).ok_or_else(|| StatsError::NoBaseline(baseline_key.into()))?;
    let base_values = metric_values(base, metric, baseline_key)?;
    let mut out = BTreeMap::new();
    for (key, report) in reports {
        if key == baseline_key {
            continue;
        }
        let values = metric_values(report, metric, key)?;
        let sample = PairedSample::from_maps(&base_values, &values)?;
        out.insert(key.clone(), wilcoxon_one_sided(&sample, Alternative::VariantLess, alpha));
    }
    Ok(out)
}

fn metric_values<'a>(report: &'a MetricReport, metric: &str, key: &str) -> Result<BTreeMap<&'a str, f64>> {
    let v = report.metric_values(metric);
    if v.is_empty() {
        return Err(StatsError::NoMetric { metric: metric.into(), report: key.into() });
    }
    Ok(v)
}
