//! Correlation and hypothesis tests: Pearson r, Shapiro-Wilk, Mann-Whitney U,
//! and the agreement-versus-disagreement contrast table built from them.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alignment::{AgreementRecord, Classification};
use crate::context::{ContextSample, LandUseCategory};

/// Largest sample accepted by [`shapiro_wilk`].
pub const SHAPIRO_MAX_N: usize = 5000;
/// Auto mode uses exact Mann-Whitney p-values up to this many pairs.
pub const EXACT_PAIR_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    SampleTooSmall { need: usize, got: usize },
    #[error("at most {max} observations supported, got {got}")]
    SampleTooLarge { max: usize, got: usize },
    #[error("zero variance")]
    DegenerateVariance,
    #[error("group is empty")]
    EmptyGroup,
    #[error("{variable}: need at least 2 observations per side, got {agree} agree / {disagree} disagree")]
    InsufficientGroup { variable: String, agree: usize, disagree: usize },
    #[error("non-finite value in input")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ShapiroWilk,
    MannWhitneyApprox,
    MannWhitneyExact,
    Pearson,
}

impl TestMethod {
    pub fn name(self) -> &'static str {
        match self {
            TestMethod::ShapiroWilk => "shapiro_wilk",
            TestMethod::MannWhitneyApprox => "mann_whitney_approx",
            TestMethod::MannWhitneyExact => "mann_whitney_exact",
            TestMethod::Pearson => "pearson",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n1: usize,
    pub n2: usize,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::SampleTooSmall { need: 3, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn poly(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Shapiro-Wilk coefficients for a sample of size `n` (ascending order).
fn shapiro_coefficients(n: usize) -> Vec<f64> {
    if n == 3 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        return vec![-h, 0.0, h];
    }
    let normal = std_normal();
    let nf = n as f64;
    let m: Vec<f64> = (1..=n).map(|i| normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25))).collect();
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let u = 1.0 / nf.sqrt();
    let c_n = m[n - 1] / mm.sqrt();
    let c_n1 = m[n - 2] / mm.sqrt();
    let a_n = c_n + poly(&[0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056], u);
    let mut a = vec![0.0; n];
    if n > 5 {
        let a_n1 = c_n1 + poly(&[0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633], u);
        let phi = (mm - 2.0 * m[n - 1].powi(2) - 2.0 * m[n - 2].powi(2))
            / (1.0 - 2.0 * a_n.powi(2) - 2.0 * a_n1.powi(2));
        for i in 2..n - 2 {
            a[i] = m[i] / phi.sqrt();
        }
        a[n - 2] = a_n1;
        a[1] = -a_n1;
    } else {
        let phi = (mm - 2.0 * m[n - 1].powi(2)) / (1.0 - 2.0 * a_n.powi(2));
        for i in 1..n - 1 {
            a[i] = m[i] / phi.sqrt();
        }
    }
    a[n - 1] = a_n;
    a[0] = -a_n;
    a
}

/// Shapiro-Wilk W with Royston's normalizing approximation for the p-value.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult, StatsError> {
    let n = sample.len();
    if n < 3 {
        return Err(StatsError::SampleTooSmall { need: 3, got: n });
    }
    if n > SHAPIRO_MAX_N {
        return Err(StatsError::SampleTooLarge { max: SHAPIRO_MAX_N, got: n });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    // scale by range first, as in AS R94, to keep the sums well conditioned
    let xbar = x.iter().map(|v| v / range).sum::<f64>() / n as f64;
    let a = shapiro_coefficients(n);
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (ai, xi) in a.iter().zip(&x) {
        let dx = xi / range - xbar;
        ssa += ai * ai;
        ssx += dx * dx;
        sax += ai * dx;
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let normal = std_normal();
    let nf = n as f64;
    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        (pi6 * (w.sqrt().asin() - 0.75f64.sqrt().asin())).max(0.0)
    } else if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], nf);
        let y = w1.ln();
        if y >= gamma {
            1e-19
        } else {
            let y = -(gamma - y).ln();
            let m = poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], nf);
            let s = poly(&[1.3822, -0.77857, 0.062767, -2.0322e-3], nf).exp();
            normal.sf((y - m) / s)
        }
    } else {
        let ln_n = nf.ln();
        let m = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
        let s = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
        normal.sf((w1.ln() - m) / s)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p.clamp(0.0, 1.0),
        method: TestMethod::ShapiroWilk,
        n1: n,
        n2: 0,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMode {
    Exact,
    Approx,
    #[default]
    Auto,
}

/// Mid-ranks (1-based) of the pooled sample, plus the tie term Σ(t³ − t).
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Null distribution of U for group sizes `m`, `n` without ties:
/// `out[u] = P(U = u)`, built with the largest-element recurrence.
pub fn mann_whitney_null(m: usize, n: usize) -> Vec<f64> {
    let (m, n) = if m <= n { (m, n) } else { (n, m) };
    // prev[j] = distribution for sizes (i - 1, j)
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|_| vec![1.0]).collect();
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        cur.push(vec![1.0]);
        for j in 1..=n {
            let mut dist = vec![0.0; i * j + 1];
            let pa = i as f64 / (i + j) as f64;
            let pb = j as f64 / (i + j) as f64;
            // largest element from the first group beats all j of the second
            for (u, p) in prev[j].iter().enumerate() {
                dist[u + j] += pa * p;
            }
            for (u, p) in cur[j - 1].iter().enumerate() {
                dist[u] += pb * p;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.pop().unwrap_or_else(|| vec![1.0])
}

/// Two-sided Mann-Whitney U test. The reported statistic is `min(U_a, U_b)`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], mode: MwuMode) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptyGroup);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let u_min = u_a.min(u_b);

    let exact = match mode {
        MwuMode::Exact => true,
        MwuMode::Approx => false,
        MwuMode::Auto => na * nb <= EXACT_PAIR_LIMIT && tie_term == 0.0,
    };
    let p_value = if exact {
        let dist = mann_whitney_null(na, nb);
        // with ties U can be fractional; count mass at or below it
        let cdf: f64 = dist.iter().take(u_min.floor() as usize + 1).sum();
        (2.0 * cdf).min(1.0)
    } else {
        let n = (na + nb) as f64;
        let mu = (na * nb) as f64 / 2.0;
        let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
        if var <= 0.0 {
            1.0
        } else {
            let z = (u_a.max(u_b) - mu - 0.5) / var.sqrt();
            (2.0 * std_normal().sf(z)).min(1.0)
        }
    };
    Ok(TestResult {
        statistic: u_min,
        p_value,
        method: if exact { TestMethod::MannWhitneyExact } else { TestMethod::MannWhitneyApprox },
        n1: na,
        n2: nb,
    })
}

/// Which agreement level splits the points into agree / disagree groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Strict,
    Moderate,
}

impl ThresholdMode {
    pub fn agrees(self, c: Classification) -> bool {
        match self {
            ThresholdMode::Strict => c == Classification::StrictAgree,
            ThresholdMode::Moderate => c != Classification::Disagree,
        }
    }
}

/// Covariates compared between agreement and disagreement cases, in output order.
pub const CONTRAST_VARIABLES: [&str; 10] = [
    "Population",
    "Noise",
    "Traffic",
    "Speed",
    "Urban",
    "Suburban",
    "ParksRecreation",
    "Agricultural",
    "Natural",
    "Blue",
];

fn covariate(sample: &ContextSample, variable: usize) -> Option<f64> {
    match variable {
        0 => sample.population,
        1 => sample.noise_laeq,
        2 => Some(sample.traffic),
        3 => sample.speed,
        k => sample.landuse.map(|p| p[LandUseCategory::ALL[k - 4].index()]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub variable: String,
    #[serde(rename = "U")]
    pub u: f64,
    pub p_value: f64,
    pub p_display: String,
    pub n_agree: usize,
    pub n_disagree: usize,
    pub method: String,
    pub shapiro_p_agree: Option<f64>,
    pub shapiro_p_disagree: Option<f64>,
    /// Both groups passed the normality gate at the significance level.
    pub normal: bool,
}

pub const CONTRAST_HEADER: [&str; 10] = [
    "variable",
    "U",
    "p_value",
    "p_display",
    "n_agree",
    "n_disagree",
    "method",
    "shapiro_p_agree",
    "shapiro_p_disagree",
    "normal",
];

fn shapiro_gate(values: &[f64], seed: u64) -> Option<f64> {
    if values.len() > SHAPIRO_MAX_N {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, values.len(), SHAPIRO_MAX_N).into_vec();
        idx.sort_unstable();
        let sub: Vec<f64> = idx.into_iter().map(|i| values[i]).collect();
        return shapiro_wilk(&sub).ok().map(|r| r.p_value);
    }
    shapiro_wilk(values).ok().map(|r| r.p_value)
}

/// Mann-Whitney comparison of each covariate between agreement and
/// disagreement points, with a Shapiro-Wilk normality gate reported alongside.
/// Points missing a covariate are left out of that variable's row only.
pub fn contrast_table(
    samples: &[ContextSample],
    records: &[AgreementRecord],
    mode: ThresholdMode,
    significance: f64,
    seed: u64,
) -> Result<Vec<ContrastRow>, StatsError> {
    let by_id: BTreeMap<&str, &ContextSample> = samples.iter().map(|s| (s.point_id.as_str(), s)).collect();
    let mut rows = Vec::with_capacity(CONTRAST_VARIABLES.len());
    for (k, name) in CONTRAST_VARIABLES.iter().enumerate() {
        let (mut agree, mut disagree) = (Vec::new(), Vec::new());
        for r in records {
            let Some(v) = by_id.get(r.point_id.as_str()).and_then(|s| covariate(s, k)) else {
                continue;
            };
            if mode.agrees(r.classification) {
                agree.push(v);
            } else {
                disagree.push(v);
            }
        }
        if agree.len() < 2 || disagree.len() < 2 {
            return Err(StatsError::InsufficientGroup {
                variable: (*name).to_string(),
                agree: agree.len(),
                disagree: disagree.len(),
            });
        }
        let sw_a = shapiro_gate(&agree, seed.wrapping_add(2 * k as u64));
        let sw_d = shapiro_gate(&disagree, seed.wrapping_add(2 * k as u64 + 1));
        let normal = matches!((sw_a, sw_d), (Some(a), Some(d)) if a >= significance && d >= significance);
        let test = mann_whitney_u(&agree, &disagree, MwuMode::Auto)?;
        rows.push(ContrastRow {
            variable: (*name).to_string(),
            u: test.statistic,
            p_value: test.p_value,
            p_display: format!("{:.2}", test.p_value),
            n_agree: agree.len(),
            n_disagree: disagree.len(),
            method: test.method.name().to_string(),
            shapiro_p_agree: sw_a,
            shapiro_p_disagree: sw_d,
            normal,
        });
    }
    Ok(rows)
}
