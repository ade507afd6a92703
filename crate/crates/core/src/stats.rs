//! Rank-based tests for related samples: Friedman across conditions and
//! Wilcoxon signed-rank post hoc comparisons with Bonferroni adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on arrangements enumerated for an exact Friedman p-value.
pub const EXACT_FRIEDMAN_LIMIT: f64 = 2e6;
/// Largest number of nonzero differences for an exact Wilcoxon p-value.
pub const EXACT_WILCOXON_MAX_N: usize = 12;

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
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

/// Regularized upper incomplete gamma `Q(a, x)`.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let front = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        // series for P
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * front).max(0.0)
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (front * h).min(1.0)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// Upper tail of the standard normal distribution.
pub fn normal_sf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_sf(-z);
    }
    0.5 * gamma_q(0.5, z * z / 2.0)
}

/// Midranks (1-based); tied values share the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Sum of `t^3 - t` over tie groups.
fn tie_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut s = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        s += t * t * t - t;
        i = j + 1;
    }
    s
}

/// `n` blocks by `k` treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatedSamples {
    rows: Vec<Vec<f64>>,
}

impl RelatedSamples {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.len() < 2 || k < 2 {
            return Err(Error::arg("samples", format!("need at least 2 blocks and 2 treatments, got {}x{k}", rows.len())));
        }
        for (b, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::arg("samples", format!("block {b} has {} values, expected {k}", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("samples", format!("block {b} has a non-finite value")));
            }
        }
        Ok(Self { rows })
    }

    /// Blocks from treatment columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::arg("samples", "treatment columns differ in length"));
        }
        Self::new((0..n).map(|b| columns.iter().map(|c| c[b]).collect()).collect())
    }

    pub fn n_blocks(&self) -> usize {
        self.rows.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// Exact when small enough, otherwise the asymptotic distribution.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjusted_p: Option<f64>,
    pub exact: bool,
    pub n: usize,
}

fn friedman_stat(rank_sums: &[f64], n: f64, k: f64, denom: f64) -> f64 {
    let mean = n * (k + 1.0) / 2.0;
    12.0 * rank_sums.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / denom
}

/// Distinct permutations of a sorted multiset.
fn multiset_perms(sorted: &[f64]) -> Vec<Vec<f64>> {
    fn rec(pool: &mut Vec<f64>, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if pool.is_empty() {
            out.push(cur.clone());
            return;
        }
        let mut last = None;
        for i in 0..pool.len() {
            if last == Some(pool[i]) {
                continue;
            }
            last = Some(pool[i]);
            let v = pool.remove(i);
            cur.push(v);
            rec(pool, cur, out);
            cur.pop();
            pool.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut sorted.to_vec(), &mut Vec::new(), &mut out);
    out
}

/// Friedman test with midranks and tie correction.
///
/// The exact p-value enumerates every within-block rearrangement of the
/// ranks of blocks 2..n (the statistic does not change when all columns
/// are relabelled, so block 1 can stay fixed).
pub fn friedman(samples: &RelatedSamples, method: PMethod) -> Result<TestResult> {
    let n = samples.n_blocks();
    let k = samples.n_treatments();
    let block_ranks: Vec<Vec<f64>> = samples.rows.iter().map(|r| ranks(r)).collect();
    let ties: f64 = block_ranks.iter().map(|r| tie_sum(r)).sum();
    let (nf, kf) = (n as f64, k as f64);
    let denom = nf * kf * (kf + 1.0) - ties / (kf - 1.0);
    if denom <= 1e-12 {
        return Err(Error::Degenerate("every block is constant; ranks carry no information".into()));
    }
    let mut sums = vec![0.0; k];
    for r in &block_ranks {
        for j in 0..k {
            sums[j] += r[j];
        }
    }
    let stat = friedman_stat(&sums, nf, kf, denom);

    let perms: Vec<Vec<Vec<f64>>> = block_ranks[1..]
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            multiset_perms(&s)
        })
        .collect();
    let arrangements: f64 = perms.iter().map(|p| p.len() as f64).product();
    let exact = match method {
        PMethod::Exact => true,
        PMethod::Asymptotic => false,
        PMethod::Auto => arrangements <= EXACT_FRIEDMAN_LIMIT,
    };
    let p_value = if exact {
        let tol = 1e-9 * stat.max(1.0);
        let mut hits = 0u64;
        let mut total = 0u64;
        let mut acc = block_ranks[0].clone();
        fn walk(
            level: usize,
            perms: &[Vec<Vec<f64>>],
            acc: &mut [f64],
            f: &mut impl FnMut(&[f64]),
        ) {
            if level == perms.len() {
                f(acc);
                return;
            }
            for p in &perms[level] {
                for (a, v) in acc.iter_mut().zip(p) {
                    *a += v;
                }
                walk(level + 1, perms, acc, f);
                for (a, v) in acc.iter_mut().zip(p) {
                    *a -= v;
                }
            }
        }
        walk(0, &perms, &mut acc, &mut |s| {
            total += 1;
            if friedman_stat(s, nf, kf, denom) >= stat - tol {
                hits += 1;
            }
        });
        hits as f64 / total as f64
    } else {
        chi_square_sf(stat, kf - 1.0)
    };
    Ok(TestResult {
        test: "friedman".into(),
        statistic: stat,
        z: None,
        p_value: p_value.clamp(0.0, 1.0),
        adjusted_p: None,
        exact,
        n,
    })
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and the remaining absolute differences get
/// midranks. The statistic is `min(W+, W-)`; `z` is `(W+ - mean) / sd` with
/// tie-corrected variance and no continuity correction.
pub fn wilcoxon(x: &[f64], y: &[f64], method: PMethod) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::arg("y", format!("{} values paired with {}", y.len(), x.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let r = ranks(&abs);
    let w_plus: f64 = d.iter().zip(&r).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let total = nf * (nf + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let mean = total / 2.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&abs) / 48.0;
    let z = (w_plus - mean) / var.sqrt();
    let exact = match method {
        PMethod::Exact => true,
        PMethod::Asymptotic => false,
        PMethod::Auto => n <= EXACT_WILCOXON_MAX_N,
    };
    if exact && n > 24 {
        return Err(Error::arg("method", format!("exact enumeration over {n} signs is too large")));
    }
    let p_value = if exact {
        let dev = (w_plus - mean).abs() - 1e-9;
        let mut hits = 0u64;
        for signs in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| signs >> i & 1 == 1).map(|i| r[i]).sum();
            if (s - mean).abs() >= dev {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    } else {
        2.0 * normal_sf(z.abs())
    };
    Ok(TestResult {
        test: "wilcoxon".into(),
        statistic: w_plus.min(w_minus),
        z: Some(z),
        p_value: p_value.clamp(0.0, 1.0),
        adjusted_p: None,
        exact,
        n,
    })
}

/// Each p multiplied by the number of tests, capped at 1.
pub fn bonferroni(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len() as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

/// `***` for p <= 0.001, `**` for p <= 0.01, `*` for p <= 0.05.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub p05: bool,
    pub p01: bool,
    pub p001: bool,
    pub stars: String,
}

impl Significance {
    pub fn of(p: f64) -> Self {
        Self {
            p05: p <= 0.05,
            p01: p <= 0.01,
            p001: p <= 0.001,
            stars: stars(p).into(),
        }
    }
}

/// One row of a statistics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub scope: String,
    pub test: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<String>,
    pub statistic: f64,
    pub z: Option<f64>,
    pub p: f64,
    pub adjusted_p: Option<f64>,
    pub significant: Significance,
}

impl StatRecord {
    pub fn new(scope: impl Into<String>, comparison: Option<String>, r: &TestResult) -> Self {
        let p_eff = r.adjusted_p.unwrap_or(r.p_value);
        Self {
            scope: scope.into(),
            test: r.test.clone(),
            comparison,
            statistic: r.statistic,
            z: r.z,
            p: r.p_value,
            adjusted_p: r.adjusted_p,
            significant: Significance::of(p_eff),
        }
    }
}

/// Friedman over all treatments, then Wilcoxon on every pair of
/// treatments with Bonferroni adjustment over the pairs.
pub fn omnibus_with_post_hoc(
    scope: &str,
    samples: &RelatedSamples,
    names: &[&str],
    method: PMethod,
) -> Result<Vec<StatRecord>> {
    let k = samples.n_treatments();
    if names.len() != k {
        return Err(Error::arg("names", format!("{} names for {k} treatments", names.len())));
    }
    let mut out = vec![StatRecord::new(scope, None, &friedman(samples, method)?)];
    let mut tests = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let r = wilcoxon(&samples.column(a), &samples.column(b), method)?;
            tests.push((format!("{}-{}", names[a], names[b]), r));
        }
    }
    let adjusted = bonferroni(&tests.iter().map(|t| t.1.p_value).collect::<Vec<_>>());
    for ((cmp, mut r), adj) in tests.into_iter().zip(adjusted) {
        r.adjusted_p = Some(adj);
        out.push(StatRecord::new(scope, Some(cmp), &r));
    }
    Ok(out)
}
