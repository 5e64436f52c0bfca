//! Hypothesis tests used by the sweep, ablation and discourse reports.
//!
//! Everything here is self-contained: the distributions come from
//! [`special`], and p values are two-sided where a direction exists.

mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use special::{ln_gamma, reg_inc_beta, reg_inc_gamma, t_quantile, t_two_sided, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correction {
    None,
    Bonferroni { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatFlag {
    /// All paired differences were equal, so the t statistic is undefined.
    ZeroVariance,
    /// Every observation tied; the rank statistic is reported as 0.
    AllTied,
    /// Zero within-group variance with distinct group means.
    ZeroWithinVariance,
}

/// Outcome of one test. Non-finite statistics (a perfectly separated ANOVA)
/// serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub test: String,
    pub statistic: f64,
    pub df: Vec<f64>,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<f64>,
    pub correction: Correction,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<StatFlag>,
}

impl StatReport {
    fn new(test: &str, statistic: f64, df: Vec<f64>, p_value: f64, n: usize) -> Self {
        Self {
            test: test.to_owned(),
            statistic,
            df,
            p_value: p_value.clamp(0.0, 1.0),
            effect_size: None,
            correction: Correction::None,
            n,
            flag: None,
        }
    }

    pub fn with_bonferroni(mut self, m: usize) -> Result<Self> {
        self.p_value = bonferroni(&[self.p_value], Some(m))?[0];
        self.correction = Correction::Bonferroni { m };
        Ok(self)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Domain(format!(
            "{what} contains non-finite value {v}"
        ))),
        None => Ok(()),
    }
}

/// Midranks (1-based) of `values`, plus the tie term Σ(t³ − t) over tie
/// groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired two-sided t test on `a - b`.
///
/// When every difference is equal the statistic is undefined; the report
/// carries [`StatFlag::ZeroVariance`] with p = 1 for a zero difference and
/// p = 0 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientRuns(a.len()));
    }
    check_finite(a, "paired sample")?;
    check_finite(b, "paired sample")?;
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = (n - 1) as f64;
    if diffs.iter().all(|&d| d == diffs[0]) {
        let d = diffs[0];
        let (t, p) = if d == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(d), 0.0)
        };
        let mut r = StatReport::new("paired_t", t, vec![df], p, n);
        r.flag = Some(StatFlag::ZeroVariance);
        return Ok(r);
    }
    let m = mean(&diffs);
    let var = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / df;
    let t = m / (var / n as f64).sqrt();
    Ok(StatReport::new(
        "paired_t",
        t,
        vec![df],
        t_two_sided(t, df)?,
        n,
    ))
}

/// Friedman test over `n` subjects (rows) and `k >= 3` treatments
/// (columns), with midranks within each row and the usual tie correction.
pub fn friedman_test(matrix: &[Vec<f64>]) -> Result<StatReport> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if k == 2 {
        return Err(Error::Shape(
            "Friedman needs at least 3 treatments; use the paired t test for 2".into(),
        ));
    }
    if n < 2 || k < 3 {
        return Err(Error::Shape(format!(
            "Friedman needs >= 2 subjects and >= 3 treatments, got {n} x {k}"
        )));
    }
    if let Some(row) = matrix.iter().find(|r| r.len() != k) {
        return Err(Error::Shape(format!(
            "ragged matrix: row of length {} in a {n} x {k} design",
            row.len()
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in matrix {
        check_finite(row, "Friedman matrix")?;
        let (ranks, t) = midranks(row);
        ties += t;
        rank_sums.iter_mut().zip(&ranks).for_each(|(s, r)| *s += r);
    }
    let (nf, kf) = (n as f64, k as f64);
    let df = kf - 1.0;
    let correction = 1.0 - ties / (nf * kf * (kf * kf - 1.0));
    if correction <= 0.0 {
        let mut r = StatReport::new("friedman", 0.0, vec![df], 1.0, n);
        r.flag = Some(StatFlag::AllTied);
        return Ok(r);
    }
    let centre = nf * (kf + 1.0) / 2.0;
    let ss: f64 = rank_sums.iter().map(|r| (r - centre).powi(2)).sum();
    let stat = (12.0 * ss / (nf * kf * (kf + 1.0)) / correction).max(0.0);
    let p = Distribution::ChiSquare { df }.sf(stat)?;
    Ok(StatReport::new("friedman", stat, vec![df], p, n))
}

/// One-way ANOVA. Zero between-group variance gives F = 0, p = 1; zero
/// within-group variance with distinct means gives F = inf, p = 0.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<StatReport> {
    if groups.len() < 2 {
        return Err(Error::DegenerateGroup(format!(
            "ANOVA needs >= 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::DegenerateGroup(format!(
            "group {i} has {} value(s); ANOVA needs >= 2",
            g.len()
        )));
    }
    for g in groups {
        check_finite(g, "ANOVA group")?;
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let df1 = (groups.len() - 1) as f64;
    let df2 = (total - groups.len()) as f64;
    let ssb = if means.iter().all(|&m| m == means[0]) {
        0.0
    } else {
        groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
            .sum()
    };
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let (msb, msw) = (ssb / df1, ssw / df2);
    let r = if msb == 0.0 {
        StatReport::new("anova_oneway", 0.0, vec![df1, df2], 1.0, total)
    } else if msw == 0.0 {
        let mut r = StatReport::new("anova_oneway", f64::INFINITY, vec![df1, df2], 0.0, total);
        r.flag = Some(StatFlag::ZeroWithinVariance);
        r
    } else {
        let f = msb / msw;
        StatReport::new(
            "anova_oneway",
            f,
            vec![df1, df2],
            Distribution::F { df1, df2 }.sf(f)?,
            total,
        )
    };
    Ok(r)
}

/// Kruskal–Wallis H with midranks and tie correction, clamped at 0.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<StatReport> {
    if groups.len() < 2 {
        return Err(Error::DegenerateGroup(format!(
            "Kruskal-Wallis needs >= 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::DegenerateGroup(format!("group {i} is empty")));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    check_finite(&pooled, "Kruskal-Wallis group")?;
    let n = pooled.len() as f64;
    let df = (groups.len() - 1) as f64;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        let mut r = StatReport::new("kruskal_wallis", 0.0, vec![df], 1.0, pooled.len());
        r.flag = Some(StatFlag::AllTied);
        return Ok(r);
    }
    let centre = (n + 1.0) / 2.0;
    let mut offset = 0;
    let mut ss = 0.0;
    for g in groups {
        let rbar = mean(&ranks[offset..offset + g.len()]);
        ss += g.len() as f64 * (rbar - centre).powi(2);
        offset += g.len();
    }
    let h = (12.0 / (n * (n + 1.0)) * ss / correction).max(0.0);
    let p = Distribution::ChiSquare { df }.sf(h)?;
    Ok(StatReport::new(
        "kruskal_wallis",
        h,
        vec![df],
        p,
        pooled.len(),
    ))
}

/// Pearson χ² test of independence with Cramér's V as the effect size.
pub fn chi_square_cramers_v(table: &[Vec<u64>]) -> Result<StatReport> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 {
        return Err(Error::Shape(format!(
            "contingency table must be at least 2 x 2, got {r} x {c}"
        )));
    }
    if let Some(row) = table.iter().find(|row| row.len() != c) {
        return Err(Error::Shape(format!(
            "ragged table: row of length {} in {r} x {c}",
            row.len()
        )));
    }
    let rows: Vec<f64> = table
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64)
        .collect();
    let cols: Vec<f64> = (0..c)
        .map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64)
        .collect();
    if let Some(i) = rows.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroMargin(format!("row {i}")));
    }
    if let Some(j) = cols.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroMargin(format!("column {j}")));
    }
    let total: f64 = rows.iter().sum();
    let mut chi2 = 0.0;
    for (row, &rs) in table.iter().zip(&rows) {
        for (&o, &cs) in row.iter().zip(&cols) {
            let e = rs * cs / total;
            chi2 += (o as f64 - e).powi(2) / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    let p = if chi2 == 0.0 {
        1.0
    } else {
        Distribution::ChiSquare { df }.sf(chi2)?
    };
    let v = (chi2 / (total * (r.min(c) - 1) as f64)).sqrt();
    let mut report = StatReport::new("chi_square", chi2, vec![df], p, total as usize);
    report.effect_size = Some(v);
    Ok(report)
}

/// `p' = min(1, p * m)`, with `m` defaulting to the number of p values.
pub fn bonferroni(p_values: &[f64], m: Option<usize>) -> Result<Vec<f64>> {
    let m = m.unwrap_or(p_values.len());
    if m == 0 {
        return Err(Error::Range("Bonferroni factor m must be >= 1".into()));
    }
    p_values
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((p * m as f64).min(1.0))
            } else {
                Err(Error::Range(format!("p value {p} outside [0, 1]")))
            }
        })
        .collect()
}

/// One fixture of [`selftest`].
#[derive(Debug, Clone, Serialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub expected: String,
    pub got: String,
    pub pass: bool,
}

fn case(name: &'static str, expected: String, got: String, pass: bool) -> SelfTestCase {
    SelfTestCase {
        name,
        expected,
        got,
        pass,
    }
}

/// Small hand-checkable fixtures for every test in this module, plus the
/// t / F tail identity on a grid.
pub fn selftest() -> Result<Vec<SelfTestCase>> {
    let mut out = Vec::new();
    let t = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 1.0, 1.0])?;
    out.push(case(
        "paired t, diffs [1,2,3]",
        "t=3.464 p=0.0742 (1e-3)".into(),
        format!("t={:.4} p={:.4}", t.statistic, t.p_value),
        (t.statistic - 3.464).abs() < 1e-3 && (t.p_value - 0.0742).abs() < 1e-3,
    ));
    let f = anova_oneway(&[vec![1.0, 2.0], vec![3.0, 4.0]])?;
    out.push(case(
        "ANOVA [1,2] vs [3,4]",
        "F=8 p=0.106 (1e-3)".into(),
        format!("F={} p={:.4}", f.statistic, f.p_value),
        f.statistic == 8.0 && (f.p_value - 0.106).abs() < 1e-3,
    ));
    let c = chi_square_cramers_v(&[vec![10, 0], vec![0, 10]])?;
    out.push(case(
        "chi-square [[10,0],[0,10]]",
        "chi2=20 V=1".into(),
        format!(
            "chi2={} V={}",
            c.statistic,
            c.effect_size.unwrap_or(f64::NAN)
        ),
        c.statistic == 20.0 && c.effect_size == Some(1.0),
    ));
    let h = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]])?;
    out.push(case(
        "Kruskal-Wallis [1,2,3] vs [4,5,6]",
        "H=3.857 (1e-3)".into(),
        format!("H={:.4}", h.statistic),
        (h.statistic - 3.857).abs() < 1e-3,
    ));
    // scipy.stats.friedmanchisquare on the same matrix.
    let matrix = [
        [0.633, 0.628, 0.640],
        [0.641, 0.641, 0.652],
        [0.620, 0.631, 0.629],
        [0.655, 0.649, 0.661],
        [0.638, 0.638, 0.638],
        [0.612, 0.625, 0.630],
        [0.647, 0.639, 0.650],
        [0.629, 0.633, 0.633],
        [0.644, 0.637, 0.648],
        [0.626, 0.622, 0.641],
    ];
    let fr = friedman_test(&matrix.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
    out.push(case(
        "Friedman 10 x 3",
        "chi2=9.941176 p=0.006939 (1e-6)".into(),
        format!("chi2={:.6} p={:.6}", fr.statistic, fr.p_value),
        (fr.statistic - 9.941_176_470_588_255).abs() < 1e-6
            && (fr.p_value - 0.006_939_065_031_020_904).abs() < 1e-6,
    ));
    let b = bonferroni(&[0.01, 0.5], Some(3))?;
    out.push(case(
        "Bonferroni m=3",
        "[0.03, 1]".into(),
        format!("{b:?}"),
        b == [0.03, 1.0],
    ));
    let mut gap = 0.0f64;
    for df in [1.0, 2.5, 7.0, 30.0, 200.0] {
        for x in [0.05, 0.4, 1.0, 2.2, 5.0, 12.0] {
            let two_sided = 2.0 * Distribution::StudentT { df }.sf(x)?;
            gap = gap.max((two_sided - Distribution::F { df1: 1.0, df2: df }.sf(x * x)?).abs());
        }
    }
    out.push(case(
        "t / F tail identity",
        "gap < 1e-9".into(),
        format!("gap={gap:.1e}"),
        gap < 1e-9,
    ));
    Ok(out)
}
