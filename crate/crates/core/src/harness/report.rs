//! Plot-ready CSVs and a markdown summary from finished run directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::eval::Stat;
use super::experiment::{checkpoint_path, Manifest};
use super::table::ResultTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub markdown: PathBuf,
    pub files: Vec<PathBuf>,
}

/// `(step, eval_return)` pairs of a training log.
pub fn read_eval_curve(path: &Path) -> Result<Vec<(u64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            msg: format!("missing column {name}"),
        })
    };
    let (step_i, eval_i) = (col("step")?, col("eval_return")?);
    let mut out = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| Error::Format { path: path.to_path_buf(), msg: format!("{m}: {line}") };
        let eval = cells.get(eval_i).ok_or_else(|| bad("short row"))?;
        if eval.is_empty() {
            continue;
        }
        let step = cells[step_i].parse().map_err(|_| bad("bad step"))?;
        out.push((step, eval.parse().map_err(|_| bad("bad eval_return"))?));
    }
    Ok(out)
}

/// Curve table with one column per seed plus mean and std.
fn curve_csv(curves: &BTreeMap<u64, Vec<(u64, f64)>>) -> String {
    let steps: BTreeSet<u64> = curves.values().flatten().map(|(s, _)| *s).collect();
    let mut out = String::from("step");
    for seed in curves.keys() {
        let _ = write!(out, ",seed_{seed}");
    }
    out.push_str(",mean,std\n");
    for step in steps {
        let _ = write!(out, "{step}");
        let mut values = Vec::new();
        for c in curves.values() {
            match c.iter().find(|(s, _)| *s == step) {
                Some((_, v)) => {
                    values.push(*v);
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let st = Stat::of(&values);
        let _ = writeln!(out, ",{},{}", st.mean, st.std);
    }
    out
}

/// Write curve and result CSVs per run plus `report.md` into `out_dir`.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<ReportSummary> {
    if run_dirs.is_empty() {
        return Err(Error::config("no run directories given"));
    }
    let absent: Vec<String> = run_dirs
        .iter()
        .filter(|d| !d.join("manifest.json").is_file())
        .map(|d| d.display().to_string())
        .collect();
    if !absent.is_empty() {
        return Err(Error::config(format!("runs missing or incomplete: {}", absent.join(", "))));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut md = String::from("# Experiment report\n\n");
    for dir in run_dirs {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let table = ResultTable::read_json(&dir.join("eval/results.json"))?;
        let name = &manifest.name;
        let _ = writeln!(md, "## {name}\n");
        let _ = writeln!(md, "- evaluation environments: {}", table.rows.first().map_or(0, |r| r.envs));
        let _ = writeln!(md, "- evaluation thresholds (ms): {:?}", manifest.eval_thresholds_ms);
        let _ = writeln!(md, "- evaluation thresholds seen in training data: {}", manifest.eval_sla_seen_in_training);
        for t in &manifest.spec.train {
            let seeds = if t.seeds.is_empty() { vec![manifest.spec.seed] } else { t.seeds.clone() };
            let _ = writeln!(md, "- `{}`: {} for {} steps, {} seed(s)", t.name, t.algorithm, t.steps, seeds.len());
            let mut curves = BTreeMap::new();
            for seed in seeds {
                let log = checkpoint_path(dir, &t.name, seed).with_file_name("train_log.csv");
                curves.insert(seed, read_eval_curve(&log)?);
            }
            let path = out_dir.join(format!("{name}_{}_curve.csv", t.name));
            std::fs::write(&path, curve_csv(&curves)).map_err(|e| Error::io(&path, e))?;
            files.push(path);
        }
        let path = out_dir.join(format!("{name}_results.csv"));
        table.write_csv(&path)?;
        files.push(path);
        let _ = writeln!(md, "\nValues are mean ± sample standard deviation over environments.\n");
        md.push_str(&table.to_markdown());
        md.push('\n');
    }
    let markdown = out_dir.join("report.md");
    std::fs::write(&markdown, md).map_err(|e| Error::io(&markdown, e))?;
    Ok(ReportSummary { markdown, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_columns_per_seed_and_aggregate() {
        let mut c = BTreeMap::new();
        c.insert(0, vec![(0, 1.0), (10, 3.0)]);
        c.insert(1, vec![(0, 3.0), (10, 5.0)]);
        let csv = curve_csv(&c);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,seed_0,seed_1,mean,std");
        assert!(lines[1].starts_with("0,1,3,2,"));
        assert!(lines[2].starts_with("10,3,5,4,"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(report(&[], Path::new("/tmp")).is_err());
        let dir = tempfile::tempdir().unwrap();
        let err = report(&[dir.path().to_path_buf()], &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains(&dir.path().display().to_string()));
    }
}
