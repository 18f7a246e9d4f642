//! Comparison tables and plot-ready CSV built from result files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use crate::pipeline::EvalResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Walk { path: String, source: walkdir::Error },
    #[error("no result files found")]
    NoResults,
    #[error("metric {metric:?} not in results; available: {available:?}")]
    NoMetric { metric: String, available: Vec<String> },
    #[error("results span several datasets {0:?}; choose one")]
    Datasets(Vec<String>),
    #[error("scaling needs at least two corpus sizes, found {0:?}")]
    TooFewSizes(Vec<usize>),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

/// Loads every result JSON under the given files and directories
/// (recursively). JSON files that are not results, such as run summaries,
/// are skipped. Results come back sorted by path.
pub fn load_results(paths: &[PathBuf]) -> Result<Vec<EvalResult>> {
    let mut files = BTreeSet::new();
    for p in paths {
        for entry in WalkDir::new(p).follow_links(true) {
            let entry = entry.map_err(|e| ReportError::Walk { path: p.display().to_string(), source: e })?;
            let path = entry.path();
            if entry.file_type().is_file() && path.extension().is_some_and(|e| e == "json") {
                files.insert(path.to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| ReportError::Io { path: f.display().to_string(), source: e })?;
        if let Ok(r) = serde_json::from_str::<EvalResult>(&text) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(ReportError::NoResults);
    }
    Ok(out)
}

fn check_metric(results: &[EvalResult], metric: &str) -> Result<()> {
    if results.iter().any(|r| r.aggregate.contains_key(metric)) {
        return Ok(());
    }
    let available: BTreeSet<String> = results.iter().flat_map(|r| r.aggregate.keys().cloned()).collect();
    Err(ReportError::NoMetric { metric: metric.into(), available: available.into_iter().collect() })
}

/// Percentage with two decimals, e.g. 0.8385 -> "83.85".
pub fn format_pct(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub value: f64,
    pub best: bool,
    pub second: bool,
    pub significant: bool,
}

impl TableCell {
    /// Percentage text with a trailing `*` when the test fired.
    pub fn display(&self) -> String {
        let mut s = format_pct(self.value);
        if self.significant {
            s.push('*');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub compression_ratio: f64,
    pub cells: Vec<Option<TableCell>>,
}

/// Rows are codecs, columns corpus sizes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metric: String,
    /// Metric the significance marks were computed on.
    pub significance_metric: Option<String>,
    pub sizes: Vec<usize>,
    pub rows: Vec<TableRow>,
}

fn single_dataset(results: &[EvalResult]) -> Result<()> {
    let ds: BTreeSet<&str> = results.iter().map(|r| r.metadata.dataset.as_str()).collect();
    if ds.len() > 1 {
        return Err(ReportError::Datasets(ds.into_iter().map(String::from).collect()));
    }
    Ok(())
}

/// Builds the table for one dataset. Best and second-best are decided on
/// the displayed (rounded) percentages, so equal-looking cells tie.
pub fn report_table(results: &[EvalResult], metric: &str) -> Result<Table> {
    if results.is_empty() {
        return Err(ReportError::NoResults);
    }
    check_metric(results, metric)?;
    single_dataset(results)?;
    let sizes: Vec<usize> = results.iter().map(|r| r.metadata.corpus_size).collect::<BTreeSet<_>>().into_iter().collect();
    let mut by_label: BTreeMap<&str, (f64, bool, BTreeMap<usize, &EvalResult>)> = BTreeMap::new();
    for r in results {
        let e = by_label
            .entry(&r.metadata.label)
            .or_insert((r.metadata.compression_ratio, r.is_baseline(), BTreeMap::new()));
        e.2.insert(r.metadata.corpus_size, r);
    }
    let mut rows: Vec<(bool, TableRow)> = by_label
        .into_iter()
        .map(|(label, (ratio, baseline, cells))| {
            let cells = sizes
                .iter()
                .map(|s| {
                    cells.get(s).and_then(|r| {
                        r.aggregate.get(metric).map(|&value| TableCell {
                            value,
                            best: false,
                            second: false,
                            significant: r.significant(),
                        })
                    })
                })
                .collect();
            (baseline, TableRow { label: label.to_string(), compression_ratio: ratio, cells })
        })
        .collect();
    rows.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.compression_ratio.total_cmp(&b.1.compression_ratio))
            .then_with(|| a.1.label.cmp(&b.1.label))
    });
    let mut rows: Vec<TableRow> = rows.into_iter().map(|(_, r)| r).collect();
    for col in 0..sizes.len() {
        let rounded = |c: &TableCell| (c.value * 10_000.0).round() as i64;
        let mut levels: Vec<i64> = rows.iter().filter_map(|r| r.cells[col].as_ref().map(rounded)).collect();
        levels.sort_unstable_by(|a, b| b.cmp(a));
        levels.dedup();
        for row in rows.iter_mut() {
            if let Some(c) = row.cells[col].as_mut() {
                let v = rounded(c);
                c.best = levels.first() == Some(&v);
                c.second = levels.get(1) == Some(&v);
            }
        }
    }
    let sig: BTreeSet<&str> = results.iter().map(|r| r.metadata.significance_metric.as_str()).collect();
    let significance_metric = (sig.len() == 1).then(|| sig.into_iter().next().unwrap().to_string());
    Ok(Table { metric: metric.into(), significance_metric, sizes, rows })
}

impl Table {
    /// Markdown table: best in bold, second best underlined, `*` marks a
    /// significant drop versus the baseline.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "| codec | ratio |");
        for size in &self.sizes {
            let _ = write!(s, " {size} |");
        }
        s.push('\n');
        s.push_str("|---|---:|");
        s.push_str(&"---:|".repeat(self.sizes.len()));
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "| {} | {} |", row.label, row.compression_ratio);
            for c in &row.cells {
                let text = match c {
                    None => "-".to_string(),
                    Some(c) => {
                        let v = format_pct(c.value);
                        let v = if c.best {
                            format!("**{v}**")
                        } else if c.second {
                            format!("<u>{v}</u>")
                        } else {
                            v
                        };
                        if c.significant {
                            v + "*"
                        } else {
                            v
                        }
                    }
                };
                let _ = write!(s, " {text} |");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\n{} in %.", self.metric);
        if let Some(m) = &self.significance_metric {
            let _ = writeln!(s, "* significant drop in {m} versus the baseline.");
        }
        s
    }

    /// Long format: one line per filled cell.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("codec,compression_ratio,corpus_size,value,display,best,second_best,significant\n");
        for row in &self.rows {
            for (size, c) in self.sizes.iter().zip(&row.cells) {
                if let Some(c) = c {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{}",
                        row.label,
                        row.compression_ratio,
                        size,
                        c.value,
                        c.display(),
                        c.best,
                        c.second,
                        c.significant
                    );
                }
            }
        }
        s
    }
}

/// `(codec, compression_ratio, mean metric)` per codec, averaged over every
/// result carrying that codec (e.g. several datasets). Sorted by ratio, then
/// metric descending.
pub fn pareto_csv(results: &[EvalResult], metric: &str) -> Result<String> {
    if results.is_empty() {
        return Err(ReportError::NoResults);
    }
    check_metric(results, metric)?;
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for r in results {
        if let Some(&v) = r.aggregate.get(metric) {
            let e = acc.entry(&r.metadata.label).or_insert((r.metadata.compression_ratio, 0.0, 0));
            e.1 += v;
            e.2 += 1;
        }
    }
    let mut rows: Vec<(&str, f64, f64, usize)> = acc.into_iter().map(|(l, (r, s, n))| (l, r, s / n as f64, n)).collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(b.0)));
    let mut s = format!("codec,compression_ratio,{metric},n_results\n");
    for (label, ratio, mean, n) in rows {
        let _ = writeln!(s, "{label},{ratio},{mean},{n}");
    }
    Ok(s)
}

/// Long-format `(codec, corpus_size, mean metric, significant)` with rows
/// ordered by codec label then size. Means run over datasets; a point is
/// significant when the test fired in any of them.
pub fn scaling_csv(results: &[EvalResult], metric: &str) -> Result<String> {
    if results.is_empty() {
        return Err(ReportError::NoResults);
    }
    check_metric(results, metric)?;
    let sizes: Vec<usize> = results.iter().map(|r| r.metadata.corpus_size).collect::<BTreeSet<_>>().into_iter().collect();
    if sizes.len() < 2 {
        return Err(ReportError::TooFewSizes(sizes));
    }
    let mut acc: BTreeMap<(&str, usize), (f64, usize, bool)> = BTreeMap::new();
    for r in results {
        if let Some(&v) = r.aggregate.get(metric) {
            let e = acc.entry((&r.metadata.label, r.metadata.corpus_size)).or_insert((0.0, 0, false));
            e.0 += v;
            e.1 += 1;
            e.2 |= !r.is_baseline() && r.significant();
        }
    }
    let mut s = format!("codec,corpus_size,{metric},significant\n");
    for ((label, size), (sum, n, sig)) in acc {
        let _ = writeln!(s, "{label},{size},{},{sig}", sum / n as f64);
    }
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ReportError::Io { path: path.display().to_string(), source: e })
}
