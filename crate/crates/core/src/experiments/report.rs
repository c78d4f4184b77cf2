//! CSV and JSON report files. Every float is written with 17 significant
//! digits; the generation time sits alone on the first line so that reruns
//! differ only there.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Number, Value};

use super::{DataNorm, ExitProbabilityReport, LocalizationReport, ValidationReport};
use crate::error::{Error, Result};
use crate::reference::{ErrorReport, Norm};
use crate::stats::LineFit;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Validation(format!("unknown format: {other}"))),
        }
    }
}

/// Files written for one report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub paths: Vec<PathBuf>,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn jnum(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(Number::from_str(&format!("{x:.16e}")).expect("formatted float parses"))
    } else {
        Value::Null
    }
}

fn jnums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| jnum(x)).collect())
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path, stamp: u64) -> Result<()> {
        let mut text = format!("# generated_at_unix={stamp}\n{}\n", self.header.join(","));
        for row in &self.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(path, text)?;
        Ok(())
    }
}

fn write_json(path: &Path, body: Value, stamp: u64) -> Result<()> {
    let inner = serde_json::to_string_pretty(&body).map_err(|e| Error::Parse(e.to_string()))?;
    let text = format!("{{\n\"generated_at_unix\": {stamp},\n\"report\": {inner}\n}}\n");
    fs::write(path, text)?;
    Ok(())
}

fn error_json(e: &ErrorReport) -> Value {
    json!({
        "norm": match e.norm { Norm::Sup => "sup", Norm::L2 => "l2" },
        "points": e.points,
        "error": jnum(e.error),
        "reference": jnum(e.reference),
        "relative": jnum(e.relative),
        "band": jnum(e.band),
    })
}

fn fit_json(fit: &Option<LineFit>) -> Value {
    match fit {
        Some(f) => json!({
            "slope": jnum(f.slope),
            "slope_stderr": jnum(f.slope_stderr),
            "intercept": jnum(f.intercept),
        }),
        None => Value::Null,
    }
}

fn fit_cells(fit: &Option<LineFit>) -> Vec<String> {
    match fit {
        Some(f) => vec![num(f.slope), num(f.slope_stderr), num(f.intercept)],
        None => vec!["NaN".into(); 3],
    }
}

fn norms_json(norms: &[DataNorm]) -> Value {
    Value::Array(
        norms
            .iter()
            .map(|n| {
                json!({
                    "p": jnum(n.p),
                    "psi": jnum(n.psi),
                    "f": jnum(n.f),
                    "g": jnum(n.g),
                    "total": jnum(n.total),
                })
            })
            .collect(),
    )
}

/// `validation_<id>.csv` (one row per path and query point) and
/// `validation_<id>_summary.csv` (one row per path), or `validation_<id>.json`.
pub fn write_validation(report: &ValidationReport, dir: &Path, format: Format) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let stamp = timestamp();
    let id = &report.scenario;
    let d = report
        .paths
        .first()
        .and_then(|p| p.estimates.first())
        .map_or(1, |e| e.query.x.len());
    match format {
        Format::Csv => {
            let xs: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
            let mut header = vec!["scenario", "path", "checksum", "t"];
            header.extend(xs.iter().map(|s| s.as_str()));
            header.extend(["u", "v", "stderr", "abs_error"]);
            let mut points = Table::new(&header);
            let mut summary = Table::new(&[
                "scenario",
                "path",
                "checksum",
                "points",
                "sup_error",
                "sup_band",
                "l2_error",
                "l2_reference",
                "l2_relative",
                "l2_band",
                "max_residual",
                "failures",
            ]);
            for p in &report.paths {
                for (e, u) in p.estimates.iter().zip(&p.reference) {
                    let mut row = vec![id.clone(), p.path.to_string(), p.checksum.clone(), num(e.t)];
                    row.extend(e.query.x.iter().map(|&v| num(v)));
                    row.extend([num(*u), num(e.mean), num(e.stderr), num((u - e.mean).abs())]);
                    points.push(row);
                }
                summary.push(vec![
                    id.clone(),
                    p.path.to_string(),
                    p.checksum.clone(),
                    p.sup.points.to_string(),
                    num(p.sup.error),
                    num(p.sup.band),
                    num(p.l2.error),
                    num(p.l2.reference),
                    num(p.l2.relative),
                    num(p.l2.band),
                    num(p.max_residual),
                    p.failures.to_string(),
                ]);
            }
            let a = dir.join(format!("validation_{id}.csv"));
            let b = dir.join(format!("validation_{id}_summary.csv"));
            points.write(&a, stamp)?;
            summary.write(&b, stamp)?;
            Ok(ReportFiles { paths: vec![a, b] })
        }
        Format::Json => {
            let paths: Vec<Value> = report
                .paths
                .iter()
                .map(|p| {
                    let points: Vec<Value> = p
                        .estimates
                        .iter()
                        .zip(&p.reference)
                        .map(|(e, u)| {
                            json!({
                                "x": jnums(&e.query.x),
                                "u": jnum(*u),
                                "v": jnum(e.mean),
                                "stderr": jnum(e.stderr),
                                "abs_error": jnum((u - e.mean).abs()),
                            })
                        })
                        .collect();
                    json!({
                        "path": p.path,
                        "checksum": p.checksum,
                        "points": points,
                        "sup": error_json(&p.sup),
                        "l2": error_json(&p.l2),
                        "max_residual": jnum(p.max_residual),
                        "failures": p.failures,
                    })
                })
                .collect();
            let coercivity = match &report.coercivity {
                Some(c) => json!({
                    "lambda": jnum(c.lambda),
                    "probes": c.probes,
                    "min_eigenvalue": jnum(c.min_eigenvalue),
                    "violations": c.violations.len(),
                }),
                None => Value::Null,
            };
            let mut body = Map::new();
            body.insert("scenario".into(), json!(id));
            body.insert("master_seed".into(), json!(report.master_seed));
            body.insert("t".into(), jnum(report.t));
            body.insert("coercivity".into(), coercivity);
            body.insert("paths".into(), Value::Array(paths));
            let a = dir.join(format!("validation_{id}.json"));
            write_json(&a, Value::Object(body), stamp)?;
            Ok(ReportFiles { paths: vec![a] })
        }
    }
}

/// `localization_<id>.csv` (per radius), `_paths.csv` (per path and radius),
/// `_fit.csv` and `_norms.csv`, or `localization_<id>.json`.
pub fn write_localization(report: &LocalizationReport, dir: &Path, format: Format) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let stamp = timestamp();
    let id = &report.scenario;
    let pow = |r: f64| r.powf(2.0 * report.epsilon);
    match format {
        Format::Csv => {
            let mut main = Table::new(&["scenario", "R", "inner", "R_pow", "e_mean", "e_stderr", "log_e"]);
            for k in 0..report.radii.len() {
                let r = report.radii[k];
                main.push(vec![
                    id.clone(),
                    num(r),
                    num(report.inner[k]),
                    num(pow(r)),
                    num(report.mean[k]),
                    num(report.stderr[k]),
                    num(report.mean[k].ln()),
                ]);
            }
            let mut paths = Table::new(&["scenario", "path", "checksum", "R", "e", "box_change"]);
            for p in &report.paths {
                for (k, e) in p.errors.iter().enumerate() {
                    paths.push(vec![
                        id.clone(),
                        p.path.to_string(),
                        p.checksum.clone(),
                        num(report.radii[k]),
                        num(*e),
                        num(p.box_change),
                    ]);
                }
            }
            let mut fit = Table::new(&[
                "scenario",
                "epsilon",
                "nu",
                "slope",
                "slope_stderr",
                "intercept",
                "dx",
                "half_width",
                "max_box_change",
            ]);
            let mut row = vec![id.clone(), num(report.epsilon), num(report.nu)];
            row.extend(fit_cells(&report.fit));
            row.extend([num(report.dx), num(report.half_width), num(report.max_box_change())]);
            fit.push(row);
            let mut norms = Table::new(&["scenario", "p", "psi", "f", "g", "total"]);
            for n in &report.data_norms {
                norms.push(vec![id.clone(), num(n.p), num(n.psi), num(n.f), num(n.g), num(n.total)]);
            }
            let files: Vec<PathBuf> = ["", "_paths", "_fit", "_norms"]
                .iter()
                .map(|s| dir.join(format!("localization_{id}{s}.csv")))
                .collect();
            for (t, f) in [&main, &paths, &fit, &norms].iter().zip(&files) {
                t.write(f, stamp)?;
            }
            Ok(ReportFiles { paths: files })
        }
        Format::Json => {
            let paths: Vec<Value> = report
                .paths
                .iter()
                .map(|p| {
                    json!({
                        "path": p.path,
                        "checksum": p.checksum,
                        "errors": jnums(&p.errors),
                        "box_change": jnum(p.box_change),
                    })
                })
                .collect();
            let mut body = Map::new();
            body.insert("scenario".into(), json!(id));
            body.insert("master_seed".into(), json!(report.master_seed));
            body.insert("radii".into(), jnums(&report.radii));
            body.insert("epsilon".into(), jnum(report.epsilon));
            body.insert("nu".into(), jnum(report.nu));
            body.insert("inner".into(), jnums(&report.inner));
            body.insert("dx".into(), jnum(report.dx));
            body.insert("half_width".into(), jnum(report.half_width));
            body.insert("e_mean".into(), jnums(&report.mean));
            body.insert("e_stderr".into(), jnums(&report.stderr));
            body.insert("fit".into(), fit_json(&report.fit));
            body.insert("max_box_change".into(), jnum(report.max_box_change()));
            body.insert("data_norms".into(), norms_json(&report.data_norms));
            body.insert("paths".into(), Value::Array(paths));
            let a = dir.join(format!("localization_{id}.json"));
            write_json(&a, Value::Object(body), stamp)?;
            Ok(ReportFiles { paths: vec![a] })
        }
    }
}

/// `exitprob_<id>.csv` (per radius) and `exitprob_<id>_fit.csv`, or `exitprob_<id>.json`.
pub fn write_exitprob(report: &ExitProbabilityReport, dir: &Path, format: Format) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let stamp = timestamp();
    let id = &report.scenario;
    let pow = |r: f64| r.powf(2.0 * report.epsilon);
    match format {
        Format::Csv => {
            let mut main = Table::new(&[
                "scenario",
                "R",
                "inner",
                "middle",
                "R_pow",
                "samples",
                "hits",
                "p",
                "stderr",
                "rule_of_three",
            ]);
            for k in 0..report.radii.len() {
                main.push(vec![
                    id.clone(),
                    num(report.radii[k]),
                    num(report.inner[k]),
                    num(report.middle[k]),
                    num(pow(report.radii[k])),
                    report.samples.to_string(),
                    report.hits[k].to_string(),
                    num(report.probability[k]),
                    num(report.stderr[k]),
                    num(report.rule_of_three),
                ]);
            }
            let mut fit = Table::new(&["scenario", "epsilon", "nu", "probes", "slope", "slope_stderr", "intercept"]);
            let mut row = vec![id.clone(), num(report.epsilon), num(report.nu), report.probes.to_string()];
            row.extend(fit_cells(&report.fit));
            fit.push(row);
            let a = dir.join(format!("exitprob_{id}.csv"));
            let b = dir.join(format!("exitprob_{id}_fit.csv"));
            main.write(&a, stamp)?;
            fit.write(&b, stamp)?;
            Ok(ReportFiles { paths: vec![a, b] })
        }
        Format::Json => {
            let mut body = Map::new();
            body.insert("scenario".into(), json!(id));
            body.insert("master_seed".into(), json!(report.master_seed));
            body.insert("radii".into(), jnums(&report.radii));
            body.insert("epsilon".into(), jnum(report.epsilon));
            body.insert("nu".into(), jnum(report.nu));
            body.insert("inner".into(), jnums(&report.inner));
            body.insert("middle".into(), jnums(&report.middle));
            body.insert("samples".into(), json!(report.samples));
            body.insert("probes".into(), json!(report.probes));
            body.insert("hits".into(), json!(report.hits));
            body.insert("p".into(), jnums(&report.probability));
            body.insert("stderr".into(), jnums(&report.stderr));
            body.insert("rule_of_three".into(), jnum(report.rule_of_three));
            body.insert("fit".into(), fit_json(&report.fit));
            let a = dir.join(format!("exitprob_{id}.json"));
            write_json(&a, Value::Object(body), stamp)?;
            Ok(ReportFiles { paths: vec![a] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let v = jnum(0.1);
        assert_eq!(serde_json::to_string(&v).unwrap(), "1.0000000000000001e-1");
        assert_eq!(num(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(jnum(f64::NAN), Value::Null);
    }
}
