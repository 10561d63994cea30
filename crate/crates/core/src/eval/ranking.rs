//! Aggregation, cumulative match curves and binder matching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::sequence_identity;

/// Mean after dropping `floor(fraction * n)` values from each tail.
pub fn trimmed_mean(values: &[f64], fraction: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::config(format!("trim fraction {fraction} outside [0, 0.5)")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in trimmed mean".into()));
    }
    let n = values.len();
    let cut = (fraction * n as f64).floor() as usize;
    if n == 0 || 2 * cut >= n {
        return Err(Error::input("trimmed mean with every value trimmed"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kept = &sorted[cut..n - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// A named `(x, y)` series with an optional reference series on the same x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baseline: Vec<f64>,
}

impl Curve {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.baseline.is_empty() {
            w.write_record(["x", "y"])?;
        } else {
            w.write_record(["x", "y", "baseline"])?;
        }
        for i in 0..self.x.len() {
            let mut row = vec![fmt_num(self.x[i]), fmt_num(self.y[i])];
            if let Some(b) = self.baseline.get(i) {
                row.push(fmt_num(*b));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `x,y[,baseline]` layout written by `write_csv`.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Curve> {
        let mut rdr = csv::Reader::from_reader(reader);
        let with_baseline = rdr.headers()?.len() > 2;
        let mut c = Curve { x: Vec::new(), y: Vec::new(), baseline: Vec::new() };
        for row in rdr.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                row.get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::input(format!("curve row {:?} is not numeric", row)))
            };
            c.x.push(num(0)?);
            c.y.push(num(1)?);
            if with_baseline {
                c.baseline.push(num(2)?);
            }
        }
        Ok(c)
    }
}

/// Shortest round-trip rendering, stable across platforms.
pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// Running hit count at ranks 1..n plus the straight random-order line
/// from the origin to `(n, total_hits)`.
pub fn cumulative_match_curve(ranked_hits: &[bool]) -> Curve {
    let n = ranked_hits.len();
    let total = ranked_hits.iter().filter(|&&h| h).count() as f64;
    let mut y = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &h in ranked_hits {
        if h {
            acc += 1.0;
        }
        y.push(acc);
    }
    let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let baseline = x.iter().map(|&i| i * total / n as f64).collect();
    Curve { x, y, baseline }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRow {
    pub prob_threshold: f64,
    pub identity_threshold: f64,
    pub total: usize,
    pub hits: usize,
    /// Percentage of `total`.
    pub hit_rate: f64,
}

impl HitRow {
    pub fn hit_rate_display(&self) -> String {
        format!("{:.3}", self.hit_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinderMatch {
    pub query: String,
    pub score: f64,
    pub binder: String,
    pub identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub row: HitRow,
    pub matches: Vec<BinderMatch>,
}

/// Best db entry for `query` by identity (first in db order on ties).
pub fn best_identity(query: &str, db: &[String]) -> Result<(usize, f64)> {
    let mut best = (0, -1.0);
    for (i, b) in db.iter().enumerate() {
        let id = sequence_identity(query.as_bytes(), b.as_bytes())?;
        if id > best.1 {
            best = (i, id);
        }
    }
    Ok(best)
}

/// Compares every predicted sequence scoring above `prob_threshold` with the
/// binder database; a hit has best identity at or above
/// `identity_threshold`. The hit rate is a percentage of the sequences above
/// the probability threshold.
pub fn binder_match(
    predicted: &[(String, f64)],
    db: &[String],
    prob_threshold: f64,
    identity_threshold: f64,
) -> Result<MatchResult> {
    if db.is_empty() {
        return Err(Error::input("empty binder database"));
    }
    for t in [prob_threshold, identity_threshold] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config(format!("threshold {t} outside [0, 1]")));
        }
    }
    let above: Vec<&(String, f64)> = predicted.iter().filter(|(_, s)| *s > prob_threshold).collect();
    let best: Vec<(usize, f64)> = above.par_iter().map(|(q, _)| best_identity(q, db)).collect::<Result<_>>()?;
    let matches: Vec<BinderMatch> = above
        .iter()
        .zip(&best)
        .filter(|(_, (_, id))| *id >= identity_threshold)
        .map(|((q, s), (bi, id))| BinderMatch { query: q.clone(), score: *s, binder: db[*bi].clone(), identity: *id })
        .collect();
    let total = above.len();
    let hits = matches.len();
    let hit_rate = if total == 0 { 0.0 } else { hits as f64 / total as f64 * 100.0 };
    Ok(MatchResult { row: HitRow { prob_threshold, identity_threshold, total, hits, hit_rate }, matches })
}

/// Reads a binder database: one CDR-H3 per line, blank lines and `#`
/// comments ignored.
pub fn read_binder_db(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let s = s.to_ascii_uppercase();
        if let Err((pos, c)) = crate::seqcore::alphabet::validate(&s) {
            return Err(Error::InvalidSequence(format!("binder db line {}: '{c}' at position {pos}", n + 1)));
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::input("empty binder database"));
    }
    Ok(out)
}
