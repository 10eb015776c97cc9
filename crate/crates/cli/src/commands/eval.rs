use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pmtr_core::metrics::MetricBundle;

use super::assemble::CSV_PREFIX;
use crate::output::emit;

const PAIR_COLUMNS: usize = 4;
const ALL_COLUMNS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
struct Row {
    sample: String,
    parts: usize,
    config: String,
    values: Vec<Option<f64>>,
}

fn collect(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            collect(&path, found)?;
        } else if e.file_name() == "metrics.csv" {
            found.push(path);
        }
    }
    Ok(())
}

fn parse(path: &Path) -> Result<Vec<Row>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let expected = format!("{CSV_PREFIX},{}", MetricBundle::CSV_HEADER);
    if lines.next() != Some(expected.as_str()) {
        bail!("{}: unexpected header", path.display());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 + ALL_COLUMNS {
                bail!("{}: expected {} fields, got {}", path.display(), 3 + ALL_COLUMNS, f.len());
            }
            let values = f[3..]
                .iter()
                .map(|v| if v.is_empty() { Ok(None) } else { v.parse().map(Some) })
                .collect::<Result<_, _>>()
                .with_context(|| format!("{}: bad number", path.display()))?;
            Ok(Row {
                sample: f[0].to_string(),
                parts: f[1].parse().with_context(|| format!("{}: bad part count", path.display()))?,
                config: f[2].to_string(),
                values,
            })
        })
        .collect()
}

fn fmt(v: Option<f64>, column: usize) -> String {
    match v {
        Some(x) if column >= PAIR_COLUMNS => format!("{x:.2}"),
        Some(x) => format!("{x:.4}"),
        None => String::new(),
    }
}

fn section(out: &mut String, title: &str, rows: &[Row], columns: usize) {
    let header: Vec<&str> = MetricBundle::CSV_HEADER.split(',').take(columns).collect();
    writeln!(out, "# {title}\nsample,parts,config,{}", header.join(",")).expect("string write");
    let mut by_config: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let cells: Vec<String> = (0..columns).map(|c| fmt(r.values[c], c)).collect();
        writeln!(out, "{},{},{},{}", r.sample, r.parts, r.config, cells.join(",")).expect("string write");
        by_config.entry(&r.config).or_default().push(r);
    }
    for (config, group) in by_config {
        let means: Vec<String> = (0..columns)
            .map(|c| {
                let vals: Vec<f64> = group.iter().filter_map(|r| r.values[c]).collect();
                let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
                fmt(mean, c)
            })
            .collect();
        writeln!(out, "mean,,{config},{}", means.join(",")).expect("string write");
    }
}

/// Aggregates every `metrics.csv` under `dir` into a pairwise table and,
/// when present, a multi-part table with part-accuracy columns. Rows are
/// sorted by sample id and followed by one mean row per configuration.
pub fn aggregate(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(parse(f)?);
    }
    rows.sort_by(|a, b| (&a.sample, &a.config, a.parts).cmp(&(&b.sample, &b.config, b.parts)));
    let (pair, multi): (Vec<Row>, Vec<Row>) = rows.into_iter().partition(|r| r.parts == 2);
    let mut out = String::new();
    section(&mut out, "pairwise", &pair, PAIR_COLUMNS);
    if !multi.is_empty() {
        out.push('\n');
        section(&mut out, "multi-part", &multi, ALL_COLUMNS);
    }
    Ok(out)
}

pub fn run(dir: &Path, out: Option<&Path>) -> Result<()> {
    emit(out, &aggregate(dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_row(root: &Path, sub: &str, line: &str) {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).unwrap();
        let text = format!("{CSV_PREFIX},{}\n{line}\n", MetricBundle::CSV_HEADER);
        fs::write(dir.join("metrics.csv"), text).unwrap();
    }

    #[test]
    fn empty_directory_gives_a_header() {
        let dir = tempfile::tempdir().unwrap();
        let table = aggregate(dir.path()).unwrap();
        assert_eq!(table, "# pairwise\nsample,parts,config,crd_e-2,cd_e-3,rmse_r_deg,rmse_t_e-2\n");
    }

    #[test]
    fn sections_split_and_rows_sort() {
        let dir = tempfile::tempdir().unwrap();
        write_row(dir.path(), "b", "s2,2,c1,2.0,4.0,6.0,8.0,,");
        write_row(dir.path(), "a", "s1,2,c1,1.0,2.0,3.0,4.0,,");
        write_row(dir.path(), "c", "s0,5,c1,1.0,1.0,1.0,1.0,80.00,60.00");
        let table = aggregate(dir.path()).unwrap();
        let expected = "# pairwise\n\
            sample,parts,config,crd_e-2,cd_e-3,rmse_r_deg,rmse_t_e-2\n\
            s1,2,c1,1.0000,2.0000,3.0000,4.0000\n\
            s2,2,c1,2.0000,4.0000,6.0000,8.0000\n\
            mean,,c1,1.5000,3.0000,4.5000,6.0000\n\
            \n\
            # multi-part\n\
            sample,parts,config,crd_e-2,cd_e-3,rmse_r_deg,rmse_t_e-2,pa_crd_pct,pa_cd_pct\n\
            s0,5,c1,1.0000,1.0000,1.0000,1.0000,80.00,60.00\n\
            mean,,c1,1.0000,1.0000,1.0000,1.0000,80.00,60.00\n";
        assert_eq!(table, expected);
    }

    #[test]
    fn configurations_average_separately() {
        let dir = tempfile::tempdir().unwrap();
        write_row(dir.path(), "a", "s1,2,c2,1.0,1.0,1.0,1.0,,");
        write_row(dir.path(), "b", "s1,2,c1,3.0,3.0,3.0,3.0,,");
        let table = aggregate(dir.path()).unwrap();
        assert!(table.contains("mean,,c1,3.0000"));
        assert!(table.contains("mean,,c2,1.0000"));
    }

    #[test]
    fn malformed_rows_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_row(dir.path(), "a", "s1,2,c1,1.0");
        assert!(aggregate(dir.path()).is_err());
    }
}
