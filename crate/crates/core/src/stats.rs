//! Rank correlation and dummy-coded least squares.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest n for which Spearman p-values enumerate every permutation.
pub const EXACT_PERMUTATION_MAX_N: usize = 7;
pub const MONTE_CARLO_DRAWS: usize = 10_000;
pub const MONTE_CARLO_SEED: u64 = 0x5eed_2024;

/// Permuted statistics within this distance of the observed one count as "as extreme".
const EXTREME_SLACK: f64 = 1e-12;

/// Residual sum of squares below this fraction of the total counts as an exact fit.
const EXACT_FIT_RATIO: f64 = 1e-24;
/// Under an exact fit, coefficients within this fraction of the outcome scale
/// of zero get no p-value.
const EXACT_FIT_BETA_SLACK: f64 = 1e-12;

/// Relative convergence target of the incomplete-beta continued fraction.
const CF_TOLERANCE: f64 = 1e-15;
const CF_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} observations, got {n}")]
    TooFew { n: usize, min: usize },
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("baseline level `{0}` does not occur")]
    MissingBaseline(String),
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew { n: x.len(), min: 2 });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    ExactPermutation,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

/// Pearson correlation of pre-centred rank vectors under a permutation of `ry`.
struct RankCorrelator {
    rx: Vec<f64>,
    ry: Vec<f64>,
    denom: f64,
}

impl RankCorrelator {
    fn new(x: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        let center = |v: Vec<f64>| {
            let m = mean(&v);
            v.into_iter().map(|r| r - m).collect::<Vec<_>>()
        };
        let rx = center(average_ranks(x));
        let ry = center(average_ranks(y));
        let sxx: f64 = rx.iter().map(|v| v * v).sum();
        let syy: f64 = ry.iter().map(|v| v * v).sum();
        if sxx == 0.0 || syy == 0.0 {
            return Err(StatsError::ZeroVariance);
        }
        Ok(Self {
            rx,
            ry,
            denom: (sxx * syy).sqrt(),
        })
    }

    fn rho_with(&self, perm: &[usize]) -> f64 {
        let sxy: f64 = self
            .rx
            .iter()
            .zip(perm)
            .map(|(a, &j)| a * self.ry[j])
            .sum();
        (sxy / self.denom).clamp(-1.0, 1.0)
    }
}

/// Lexicographic successor; false once the last permutation is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Spearman's rho with a two-sided permutation p-value: exact enumeration
/// for n ≤ 7, otherwise a seeded Monte Carlo estimate `(b + 1) / (m + 1)`.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, StatsError> {
    check_pair(x, y)?;
    let corr = RankCorrelator::new(x, y)?;
    let n = x.len();
    let identity: Vec<usize> = (0..n).collect();
    let rho = corr.rho_with(&identity);
    let threshold = rho.abs() - EXTREME_SLACK;

    if n <= EXACT_PERMUTATION_MAX_N {
        let mut perm = identity;
        let mut extreme = 0u64;
        let mut total = 0u64;
        loop {
            total += 1;
            if corr.rho_with(&perm).abs() >= threshold {
                extreme += 1;
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        return Ok(SpearmanResult {
            rho,
            p_value: extreme as f64 / total as f64,
            n,
            method: PValueMethod::ExactPermutation,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(MONTE_CARLO_SEED);
    let mut perm = identity;
    let mut extreme = 0usize;
    for _ in 0..MONTE_CARLO_DRAWS {
        perm.shuffle(&mut rng);
        if corr.rho_with(&perm).abs() >= threshold {
            extreme += 1;
        }
    }
    Ok(SpearmanResult {
        rho,
        p_value: (extreme + 1) as f64 / (MONTE_CARLO_DRAWS + 1) as f64,
        n,
        method: PValueMethod::MonteCarlo,
    })
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// P(|T| ≥ |t|).
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub beta: f64,
    pub std_error: f64,
    /// Absent when the standard error is zero.
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub outcome: String,
    pub baseline: String,
    pub n: usize,
    pub df_residual: usize,
    /// Absent when the outcome has no variance.
    pub r_squared: Option<f64>,
    pub coefficients: Vec<Coefficient>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// In-place Cholesky factor (lower) of a symmetric positive definite matrix.
#[allow(clippy::needless_range_loop)]
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let k = a.len();
    let scale = (0..k).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let mut l = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut diag = a[j][j];
        for p in 0..j {
            diag -= l[j][p] * l[j][p];
        }
        if diag <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(StatsError::RankDeficient);
        }
        let ljj = diag.sqrt();
        l[j][j] = ljj;
        for i in j + 1..k {
            let mut s = a[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p];
            }
            l[i][j] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = l.len();
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i][p] * z[p];
        }
        z[i] = s / l[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for p in i + 1..k {
            s -= l[p][i] * x[p];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Least squares on an explicit design (rows × k) via Cholesky of XᵀX.
/// Returns (beta, diag((XᵀX)⁻¹), residual sum of squares).
#[allow(clippy::needless_range_loop)]
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), StatsError> {
    if design.len() != y.len() {
        return Err(StatsError::LengthMismatch(design.len(), y.len()));
    }
    let k = design.first().map_or(0, Vec::len);
    if design.len() <= k {
        return Err(StatsError::TooFew {
            n: design.len(),
            min: k + 1,
        });
    }
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..k {
            xty[i] += row[i] * yi;
            for j in 0..=i {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            xtx[j][i] = xtx[i][j];
        }
    }
    let l = cholesky(&xtx)?;
    let beta = cholesky_solve(&l, &xty);
    let inv_diag = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            cholesky_solve(&l, &e)[j]
        })
        .collect();
    let ssr = design
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    Ok((beta, inv_diag, ssr))
}

/// Non-baseline levels in sorted order.
pub fn dummy_levels<S: AsRef<str>>(labels: &[S], baseline: &str) -> Vec<String> {
    let mut levels: Vec<String> = labels
        .iter()
        .map(|l| l.as_ref().to_string())
        .filter(|l| l != baseline)
        .collect();
    levels.sort();
    levels.dedup();
    levels
}

/// Regresses `outcome` on an intercept plus one indicator per non-baseline
/// label. Coefficients are named `intercept` and by level.
pub fn ols_regress<S: AsRef<str>>(
    outcome_name: &str,
    outcome: &[f64],
    labels: &[S],
    baseline: &str,
) -> Result<RegressionResult, StatsError> {
    if outcome.len() != labels.len() {
        return Err(StatsError::LengthMismatch(outcome.len(), labels.len()));
    }
    if !labels.iter().any(|l| l.as_ref() == baseline) {
        return Err(StatsError::MissingBaseline(baseline.to_string()));
    }
    let levels = dummy_levels(labels, baseline);
    let k = levels.len() + 1;
    let design: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| {
            let mut row = vec![0.0; k];
            row[0] = 1.0;
            if let Some(j) = levels.iter().position(|lv| lv == l.as_ref()) {
                row[j + 1] = 1.0;
            }
            row
        })
        .collect();
    let (beta, inv_diag, mut ssr) = least_squares(&design, outcome)?;
    let n = outcome.len();
    let df = n - k;
    let ybar = mean(outcome);
    let sst: f64 = outcome.iter().map(|y| (y - ybar).powi(2)).sum();
    if sst == 0.0 || ssr <= EXACT_FIT_RATIO * sst {
        // an exact fit leaves only rounding noise in the residuals
        ssr = 0.0;
    }
    let y_scale = outcome.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    let sigma2 = ssr / df as f64;

    let names = std::iter::once("intercept".to_string()).chain(levels);
    let coefficients = names
        .zip(beta.iter().zip(&inv_diag))
        .map(|(name, (&b, &v))| {
            let se = (sigma2 * v).sqrt();
            let (t_stat, p_value) = if se > 0.0 {
                let t = b / se;
                (Some(t), Some(t_two_sided_p(t, df as f64)))
            } else if b.abs() > EXACT_FIT_BETA_SLACK * y_scale {
                (None, Some(0.0))
            } else {
                (None, None)
            };
            Coefficient {
                name,
                beta: b,
                std_error: se,
                t_stat,
                p_value,
            }
        })
        .collect();
    Ok(RegressionResult {
        outcome: outcome_name.to_string(),
        baseline: baseline.to_string(),
        n,
        df_residual: df,
        r_squared: (sst > 0.0).then(|| 1.0 - ssr / sst),
        coefficients,
    })
}
