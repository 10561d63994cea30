//! Chi-squared, Kruskal-Wallis and Welch t tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::midranks;
use crate::eval::special::{chi2_sf, t_two_sided};
use crate::seqcore::AntibodyRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson chi-squared test of independence. All-zero rows and columns are
/// dropped; a table left with a single row or column yields statistic 0.
pub fn chi_squared(table: &[Vec<f64>]) -> Result<TestResult> {
    if table.is_empty() || table.iter().all(|r| r.is_empty()) {
        return Err(Error::input("empty contingency table"));
    }
    let cols = table[0].len();
    if table.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("ragged contingency table".into()));
    }
    if table.iter().flatten().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::input("contingency counts must be finite and non-negative"));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let rows: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] > 0.0).collect();
    let keep_cols: Vec<usize> = (0..cols).filter(|&j| col_sums[j] > 0.0).collect();
    let total: f64 = row_sums.iter().sum();
    if total == 0.0 {
        return Err(Error::input("contingency table has no counts"));
    }
    let name = "chi-squared".to_string();
    if rows.len() < 2 || keep_cols.len() < 2 {
        return Ok(TestResult { test: name, statistic: 0.0, dof: 0.0, p_value: 1.0 });
    }
    let mut stat = 0.0;
    for &i in &rows {
        for &j in &keep_cols {
            let e = row_sums[i] * col_sums[j] / total;
            stat += (table[i][j] - e).powi(2) / e;
        }
    }
    let dof = ((rows.len() - 1) * (keep_cols.len() - 1)) as f64;
    Ok(TestResult { test: name, statistic: stat, dof, p_value: chi2_sf(stat, dof)? })
}

/// Kruskal-Wallis H with tie correction and a chi-squared approximation.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    let groups: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
    if groups.len() < 2 {
        return Err(Error::input("Kruskal-Wallis needs at least two nonempty groups"));
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if all.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN observation".into()));
    }
    let n = all.len() as f64;
    let ranks = midranks(&all);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in &groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let c = 1.0 - ties / (n * n * n - n);
    if c <= 0.0 {
        return Err(Error::UndefinedMetric("Kruskal-Wallis over identical values".into()));
    }
    let h = (h / c).max(0.0);
    let dof = (groups.len() - 1) as f64;
    Ok(TestResult { test: "kruskal-wallis".into(), statistic: h, dof, p_value: chi2_sf(h, dof)? })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance two-sample t test (two-sided).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::input("t test needs at least two observations per group"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    if sa + sb == 0.0 {
        return Err(Error::Numeric("t test with zero variance in both groups".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(TestResult { test: "welch-t".into(), statistic: t, dof, p_value: t_two_sided(t, dof)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificityReport {
    pub germline_usage: TestResult,
    pub mutation_count: TestResult,
}

impl SpecificityReport {
    pub fn germline_usage_pvalue(&self) -> f64 {
        self.germline_usage.p_value
    }

    pub fn mutation_count_pvalue(&self) -> f64 {
        self.mutation_count.p_value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationTest {
    KruskalWallis,
    WelchT,
}

/// Compares class-labelled groups of records: V-gene usage (chi-squared on
/// class x V-gene counts) and per-sequence mutation counts.
pub fn specificity_report(records: &[AntibodyRecord], mutation_test: MutationTest) -> Result<SpecificityReport> {
    let mut usage: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut genes: BTreeMap<&str, ()> = BTreeMap::new();
    for r in records {
        let class = r
            .label
            .as_ref()
            .and_then(|l| l.class())
            .ok_or_else(|| Error::input(format!("record '{}' has no class label", r.id)))?;
        let key = r.v_gene_key();
        *usage.entry(class).or_default().entry(key).or_default() += 1.0;
        genes.insert(key, ());
        counts.entry(class).or_default().push(r.mutations.len() as f64);
    }
    if usage.len() < 2 {
        return Err(Error::input("specificity statistics need at least two label groups"));
    }
    let table: Vec<Vec<f64>> =
        usage.values().map(|row| genes.keys().map(|g| row.get(g).copied().unwrap_or(0.0)).collect()).collect();
    let groups: Vec<Vec<f64>> = counts.into_values().collect();
    let mutation_count = match mutation_test {
        MutationTest::KruskalWallis => kruskal_wallis(&groups)?,
        MutationTest::WelchT => {
            if groups.len() != 2 {
                return Err(Error::input("the t test compares exactly two groups"));
            }
            welch_t(&groups[0], &groups[1])?
        }
    };
    Ok(SpecificityReport { germline_usage: chi_squared(&table)?, mutation_count })
}
