//! Evaluation report and SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::metrics::Scores;
use crate::eval::ranking::{fmt_num, Curve, HitRow};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    #[serde(flatten)]
    pub scores: Scores,
    #[serde(default)]
    pub per_fold: Vec<Scores>,
    /// Row-normalized, indexed `[true][predicted]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub curves: BTreeMap<String, Curve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hit_table: Vec<HitRow>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(task: impl Into<String>) -> Self {
        EvalReport { task: task.into(), ..Default::default() }
    }

    pub fn set_extra(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.extra.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `report.json`, one `curve_<name>.csv` per curve and, when
    /// curves exist, `curves.svg`. Returns the written file names.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut names = vec!["report.json".to_string()];
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        for (name, curve) in &self.curves {
            let file = format!("curve_{name}.csv");
            curve.write_csv(std::fs::File::create(dir.join(&file))?)?;
            names.push(file);
        }
        if !self.curves.is_empty() {
            let series: Vec<(&str, &Curve)> = self.curves.iter().map(|(k, v)| (k.as_str(), v)).collect();
            std::fs::write(dir.join("curves.svg"), line_chart(&self.task, &series))?;
            names.push("curves.svg".into());
        }
        Ok(names)
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace("--", "- -")
}

/// Self-contained SVG with one polyline per series (baselines dashed) and
/// the plotted data repeated in comments.
pub fn line_chart(title: &str, series: &[(&str, &Curve)]) -> String {
    let all_x = series.iter().flat_map(|(_, c)| c.x.iter().copied());
    let all_y = series.iter().flat_map(|(_, c)| c.y.iter().chain(&c.baseline).copied());
    let (x0, x1) = bounds(all_x);
    let (y0, y1) = bounds(all_y);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} L{PAD} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="10">{}</text>"#, H - PAD + 14.0, fmt_num(x0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 14.0, fmt_num(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, fmt_num(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{PAD}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#, PAD - 4.0, fmt_num(y1));
    for (k, (name, c)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(s, "<!-- series {} x,y{} -->", escape(name), if c.baseline.is_empty() { "" } else { ",baseline" });
        for i in 0..c.x.len() {
            let b = c.baseline.get(i).map(|b| format!(",{}", fmt_num(*b))).unwrap_or_default();
            let _ = writeln!(s, "<!-- {},{}{b} -->", fmt_num(c.x[i]), fmt_num(c.y[i]));
        }
        let pts = |ys: &[f64]| -> String {
            c.x.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, pts(&c.y));
        if !c.baseline.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" stroke="{color}" fill="none" stroke-dasharray="4 3"/>"#,
                pts(&c.baseline)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi <= lo {
        return (lo - 0.5, lo + 0.5);
    }
    (lo, hi)
}
