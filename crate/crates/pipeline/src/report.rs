//! Run report: error norms recomputed from the persisted tables, plots and
//! a file inventory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use levykm::dataset::write_atomic;
use levykm::km::{theoretical_annulus_rate, JumpEstimate, JumpSource};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::plot::{heatmap_grid, line_chart, Panel, Series};
use crate::stages::Pipeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub source: JumpSource,
    pub alpha_hat: f64,
    pub sigma_hat: f64,
    pub residual: f64,
}

impl JumpSummary {
    fn new(source: JumpSource, e: &JumpEstimate) -> Self {
        Self {
            source,
            alpha_hat: e.alpha_hat,
            sigma_hat: e.sigma_hat,
            residual: e.residual,
        }
    }
}

/// Error of one estimated component over the report window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    pub component: String,
    /// `‖est − true‖₂ / ‖true‖₂`; absent when the truth vanishes.
    pub rel_l2: Option<f64>,
    pub max_abs_error: f64,
    pub max_abs_estimate: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_digest: String,
    /// The estimate used for the diffusion correction.
    pub jump: Option<JumpSummary>,
    /// Fits from every jump source.
    pub jump_sources: Vec<JumpSummary>,
    pub drift_errors: Vec<ComponentError>,
    pub diffusion_errors: Vec<ComponentError>,
    pub failed_points: usize,
    pub clamped_points: usize,
    pub stage_seconds: BTreeMap<String, f64>,
    /// Relative path to SHA-256 for every artifact the report draws on or
    /// writes.
    pub files: BTreeMap<String, String>,
}

impl RunReport {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::MissingInput(format!("{}: {e}", path.display())))
    }

    pub fn drift_error(&self, component: &str) -> Option<&ComponentError> {
        self.drift_errors.iter().find(|e| e.component == component)
    }

    pub fn diffusion_error(&self, component: &str) -> Option<&ComponentError> {
        self.diffusion_errors
            .iter()
            .find(|e| e.component == component)
    }
}

/// A parsed result table: grid coordinates plus named value columns.
pub struct Table {
    pub z: Vec<Vec<f64>>,
    pub columns: BTreeMap<String, Vec<Option<f64>>>,
    pub order: Vec<String>,
}

impl Table {
    pub fn read(path: &Path, dim: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => PipelineError::MissingInput(format!(
                "nothing to report: {} is missing",
                path.display()
            )),
            _ => PipelineError::from(e),
        })?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut table = Table {
            z: Vec::new(),
            columns: BTreeMap::new(),
            order: headers[dim..].to_vec(),
        };
        for h in &table.order {
            table.columns.insert(h.clone(), Vec::new());
        }
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                PipelineError::MissingInput(format!("{}: bad number {s:?}", path.display()))
            })
        };
        for record in reader.records() {
            let record = record?;
            let mut z = Vec::with_capacity(dim);
            for k in 0..dim {
                z.push(parse(&record[k])?.unwrap_or(f64::NAN));
            }
            table.z.push(z);
            for (h, cell) in headers[dim..].iter().zip(record.iter().skip(dim)) {
                table.columns.get_mut(h).unwrap().push(parse(cell)?);
            }
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.get(name).map(Vec::as_slice)
    }
}

fn component_error(
    name: &str,
    table: &Table,
    in_window: &dyn Fn(&[f64]) -> bool,
) -> Option<ComponentError> {
    let est = table.column(name)?;
    let truth = table.column(&format!("{name}_true"))?;
    let (mut num, mut den, mut max_err, mut max_est, mut points) = (0.0, 0.0, 0.0f64, 0.0f64, 0);
    for ((z, e), t) in table.z.iter().zip(est).zip(truth) {
        if !in_window(z) {
            continue;
        }
        if let (Some(e), Some(t)) = (e, t) {
            num += (e - t) * (e - t);
            den += t * t;
            max_err = max_err.max((e - t).abs());
            max_est = max_est.max(e.abs());
            points += 1;
        }
    }
    Some(ComponentError {
        component: name.to_string(),
        rel_l2: (den > 0.0).then(|| (num / den).sqrt()),
        max_abs_error: max_err,
        max_abs_estimate: max_est,
        points,
    })
}

fn sha_of(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Learned-vs-true overlay for a 1D field.
fn overlay_1d(table: &Table, name: &str, title: &str) -> String {
    let est = table.column(name).unwrap_or(&[]);
    let mut series = Vec::new();
    if let Some(truth) = table.column(&format!("{name}_true")) {
        series.push(Series {
            label: "true".into(),
            color: "#1f5fbf",
            points: table
                .z
                .iter()
                .zip(truth)
                .filter_map(|(z, t)| t.map(|t| (z[0], t)))
                .collect(),
            scatter: false,
        });
    }
    series.push(Series {
        label: "learned".into(),
        color: "#d62728",
        points: table
            .z
            .iter()
            .zip(est)
            .filter_map(|(z, e)| e.map(|e| (z[0], e)))
            .collect(),
        scatter: false,
    });
    line_chart(title, "z", name, &series)
}

/// True values on the top row, learned on the bottom; learned only when
/// the truth is unknown.
fn heatmaps_2d(table: &Table, names: &[&str], title: &str) -> String {
    let panel = |col: &str, label: String| Panel {
        title: label,
        points: table
            .z
            .iter()
            .zip(table.column(col).unwrap_or(&[]))
            .map(|(z, v)| ([z[0], z[1]], *v))
            .collect(),
    };
    let mut rows = Vec::new();
    if names
        .iter()
        .all(|n| table.column(&format!("{n}_true")).is_some())
    {
        rows.push(
            names
                .iter()
                .map(|n| panel(&format!("{n}_true"), format!("true {n}")))
                .collect(),
        );
    }
    rows.push(
        names
            .iter()
            .map(|n| panel(n, format!("learned {n}")))
            .collect(),
    );
    heatmap_grid(title, &rows)
}

/// Pooled annulus rates against ε on log axes with the fitted line, whose
/// slope is −α̂.
fn jump_plot(primary: &JumpEstimate, others: &[(JumpSource, &JumpEstimate)], dim: usize) -> String {
    let points = |e: &JumpEstimate| -> Vec<(f64, f64)> {
        e.epsilons
            .iter()
            .zip(&e.rates)
            .filter(|(_, r)| **r > 0.0)
            .map(|(x, r)| (x.ln(), r.ln()))
            .collect()
    };
    let mut series = vec![Series {
        label: "observed rate".into(),
        color: "#1f5fbf",
        points: points(primary),
        scatter: true,
    }];
    for (source, e) in others {
        series.push(Series {
            label: format!("observed rate ({source:?} samples)"),
            color: "#999999",
            points: points(e),
            scatter: true,
        });
    }
    let (lo, hi) = primary
        .epsilons
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(*e), b.max(*e)));
    let fit: Vec<(f64, f64)> = (0..=20)
        .filter_map(|k| {
            let eps = lo * (hi / lo).powf(k as f64 / 20.0);
            theoretical_annulus_rate(primary.alpha_hat, primary.sigma_hat, dim, eps, primary.m)
                .ok()
                .map(|r| (eps.ln(), r.ln()))
        })
        .collect();
    series.push(Series {
        label: format!(
            "fit: slope −α̂ = {:.3}, σ̂ = {:.3}",
            -primary.alpha_hat, primary.sigma_hat
        ),
        color: "#d62728",
        points: fit,
        scatter: false,
    });
    line_chart("Annulus exceedance rate", "ln ε", "ln rate", &series)
}

/// Writes `report/` for the pipeline's current result.
pub fn run_report(p: &Pipeline) -> Result<RunReport> {
    let result = p.load_result()?;
    let dim = result.dim;
    let result_dir = p.result_dir();
    let drift = Table::read(&result_dir.join("drift.csv"), dim)?;
    let diffusion = Table::read(&result_dir.join("diffusion.csv"), dim)?;
    let config = &p.config;
    let in_window = |z: &[f64]| config.in_window(z);

    let drift_names: Vec<String> = (1..=dim).map(|i| format!("b{i}")).collect();
    let diff_names: Vec<String> = levykm::km::upper_pairs(dim)
        .into_iter()
        .map(|(i, j)| format!("a{}{}", i + 1, j + 1))
        .collect();
    let drift_errors: Vec<ComponentError> = drift_names
        .iter()
        .filter_map(|n| component_error(n, &drift, &in_window))
        .collect();
    let diffusion_errors: Vec<ComponentError> = diff_names
        .iter()
        .filter_map(|n| component_error(n, &diffusion, &in_window))
        .collect();

    let out = p.report_dir();
    fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
    let mut written: Vec<(&str, String)> = Vec::new();

    let mut summary =
        String::from("field,component,rel_l2,max_abs_error,max_abs_estimate,points\n");
    for (field, errs) in [("drift", &drift_errors), ("diffusion", &diffusion_errors)] {
        for e in errs {
            writeln!(
                summary,
                "{field},{},{},{},{},{}",
                e.component,
                fmt_opt(e.rel_l2),
                e.max_abs_error,
                e.max_abs_estimate,
                e.points
            )
            .unwrap();
        }
    }
    written.push(("error_summary.csv", summary));

    let zcols: Vec<String> = (1..=dim).map(|i| format!("z{i}")).collect();
    let mut pointwise = format!(
        "{},in_window,component,estimate,truth,error\n",
        zcols.join(",")
    );
    for (table, names) in [(&drift, &drift_names), (&diffusion, &diff_names)] {
        for name in names.iter() {
            let (Some(est), Some(truth)) =
                (table.column(name), table.column(&format!("{name}_true")))
            else {
                continue;
            };
            for ((z, e), t) in table.z.iter().zip(est).zip(truth) {
                let zs: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
                let err = e.zip(*t).map(|(e, t)| e - t);
                writeln!(
                    pointwise,
                    "{},{},{name},{},{},{}",
                    zs.join(","),
                    u8::from(in_window(z)),
                    fmt_opt(*e),
                    fmt_opt(*t),
                    fmt_opt(err)
                )
                .unwrap();
            }
        }
    }
    written.push(("pointwise_errors.csv", pointwise));

    if dim == 1 {
        written.push((
            "drift.svg",
            overlay_1d(&drift, "b1", "Drift: true vs learned"),
        ));
        written.push((
            "diffusion.svg",
            overlay_1d(&diffusion, "a11", "Diffusion: true vs learned"),
        ));
    } else {
        let d: Vec<&str> = drift_names.iter().map(String::as_str).collect();
        let a: Vec<&str> = diff_names.iter().map(String::as_str).collect();
        written.push(("drift.svg", heatmaps_2d(&drift, &d, "Drift components")));
        written.push((
            "diffusion.svg",
            heatmaps_2d(&diffusion, &a, "Diffusion components"),
        ));
    }
    let diag = |s: JumpSource| {
        result
            .jump_diagnostics
            .iter()
            .find(|d| d.source == s)
            .and_then(|d| d.estimate.as_ref())
    };
    if let Some(primary) = &result.jump {
        let others: Vec<(JumpSource, &JumpEstimate)> = [JumpSource::Flow, JumpSource::Raw]
            .into_iter()
            .filter(|&s| s != result.settings.jump_source)
            .filter_map(|s| diag(s).map(|e| (s, e)))
            .collect();
        written.push(("jump_fit.svg", jump_plot(primary, &others, dim)));
    }

    let mut files = BTreeMap::new();
    for name in ["result.json", "drift.csv", "diffusion.csv"] {
        files.insert(format!("result/{name}"), sha_of(&result_dir.join(name))?);
    }
    for (name, content) in &written {
        write_atomic(&out.join(name), content.as_bytes())?;
        files.insert(
            format!("report/{name}"),
            hex::encode(Sha256::digest(content.as_bytes())),
        );
    }

    let report = RunReport {
        name: config.name.clone(),
        config_digest: config.digest(),
        jump: result
            .jump
            .as_ref()
            .map(|e| JumpSummary::new(result.settings.jump_source, e)),
        jump_sources: result
            .jump_diagnostics
            .iter()
            .filter_map(|d| d.estimate.as_ref().map(|e| JumpSummary::new(d.source, e)))
            .collect(),
        drift_errors,
        diffusion_errors,
        failed_points: result.failures.len(),
        clamped_points: result.fields.clamped.iter().filter(|c| **c).count(),
        stage_seconds: p.stage_seconds(),
        files,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    Ok(report)
}
