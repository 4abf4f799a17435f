use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::output::{num, read_data, Sink};
use crate::CliError;

fn f(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(Value::as_f64)
}

fn field(path: &Path, v: &Value, key: &str) -> Result<f64, CliError> {
    f(v, key).ok_or_else(|| CliError::Config(format!("{}: missing number `{key}`", path.display())))
}

fn cell(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Serialize)]
struct ReportOut {
    /// `[θ₁, θ₂, θ₃]` strictly decrease as `γ` decreases.
    theta_strictly_decreasing: Option<[bool; 3]>,
    /// `|λ_c − λ_*|` decreases as `γ` decreases.
    lambda_c_error_decreasing: Option<bool>,
    /// For each offset from `λ_*`, `|gap|` does not grow as `γ` decreases.
    pressure_gap_shrinking: BTreeMap<String, bool>,
    pressure_bounds_hold: Option<bool>,
}

fn descending(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Collect earlier artifacts into plot-ready tables, ordered by decreasing `γ`.
pub fn run(cfg: &RunConfig, base: &Path, sink: &Sink) -> Result<String, CliError> {
    let rb = cfg.report.as_ref().ok_or_else(|| CliError::Config("missing `report` block".into()))?;
    let mut files = 0;

    let mut theta_trend = None;
    if let Some(rel) = &rb.thetas {
        let path = base.join(rel);
        let data = read_data(&path)?;
        let mut reports: Vec<Value> = data.get("reports").and_then(Value::as_array).cloned().unwrap_or_default();
        reports.sort_by(|a, b| f(b, "gamma").unwrap_or(0.0).total_cmp(&f(a, "gamma").unwrap_or(0.0)));
        let mut rows = Vec::new();
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        for r in &reports {
            let t = [field(&path, r, "theta1")?, field(&path, r, "theta2")?, field(&path, r, "theta3")?];
            rows.push(vec![num(field(&path, r, "gamma")?), num(t[0]), num(t[1]), num(t[2])]);
            for k in 0..3 {
                cols[k].push(t[k]);
            }
        }
        sink.csv("theta_trend.csv", &["gamma", "theta1", "theta2", "theta3"], &rows)?;
        files += 1;
        theta_trend = Some([descending(&cols[0]), descending(&cols[1]), descending(&cols[2])]);
    }

    let mut scans = Vec::new();
    for rel in &rb.scans {
        let path = base.join(rel);
        scans.push((path.clone(), read_data(&path)?));
    }
    scans.sort_by(|a, b| f(&b.1, "gamma").unwrap_or(0.0).total_cmp(&f(&a.1, "gamma").unwrap_or(0.0)));
    let mut lambda_c_error_decreasing = None;
    if !scans.is_empty() {
        let mut branch_rows = Vec::new();
        let mut lc_rows = Vec::new();
        let mut errors = Vec::new();
        for (path, s) in &scans {
            let gamma = field(path, s, "gamma")?;
            for pt in s.get("points").and_then(Value::as_array).into_iter().flatten() {
                let side = |b: &str| pt.get(b).and_then(|x| f(x, "mean_density"));
                let two = pt.get("two_phase").and_then(Value::as_bool).unwrap_or(false);
                branch_rows.push(vec![
                    num(gamma),
                    cell(f(pt, "lambda")),
                    cell(side("vapor")),
                    cell(side("liquid")),
                    u8::from(two).to_string(),
                ]);
            }
            let err = f(s, "lambda_c_error");
            errors.push(err);
            lc_rows.push(vec![
                num(gamma),
                cell(f(s, "lambda_star")),
                cell(f(s, "lambda_c")),
                cell(err),
                s.get("estimator").and_then(Value::as_str).unwrap_or("").to_string(),
            ]);
        }
        sink.csv(
            "branch_densities.csv",
            &["gamma", "lambda", "vapor_density", "liquid_density", "two_phase"],
            &branch_rows,
        )?;
        sink.csv("lambda_c.csv", &["gamma", "lambda_star", "lambda_c", "abs_error", "estimator"], &lc_rows)?;
        files += 2;
        if errors.len() > 1 {
            let errs: Option<Vec<f64>> = errors.into_iter().collect();
            lambda_c_error_decreasing = Some(errs.is_some_and(|e| descending(&e)));
        }
    }

    let mut pressures = Vec::new();
    for rel in &rb.pressures {
        let path = base.join(rel);
        pressures.push((path.clone(), read_data(&path)?));
    }
    pressures.sort_by(|a, b| f(&b.1, "gamma").unwrap_or(0.0).total_cmp(&f(&a.1, "gamma").unwrap_or(0.0)));
    let mut gaps: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut pressure_bounds_hold = None;
    if !pressures.is_empty() {
        let mut rows = Vec::new();
        let mut all = true;
        for (path, pr) in &pressures {
            let gamma = field(path, pr, "gamma")?;
            let star = field(path, pr, "lambda_star")?;
            let cmp =
                pr.get("comparison").ok_or_else(|| CliError::Config(format!("{}: no comparison", path.display())))?;
            all &= cmp.get("all_pass").and_then(Value::as_bool).unwrap_or(false);
            for r in cmp.get("rows").and_then(Value::as_array).into_iter().flatten() {
                let lambda = field(path, r, "lambda")?;
                let gap = field(path, r, "gap")?;
                let offset = lambda - star;
                gaps.entry(format!("{offset:+.4}")).or_default().push(gap.abs());
                let pass = r.get("pass").and_then(Value::as_bool).unwrap_or(false);
                rows.push(vec![
                    num(gamma),
                    num(offset),
                    num(lambda),
                    num(gap),
                    cell(f(r, "budget")),
                    u8::from(pass).to_string(),
                ]);
            }
        }
        sink.csv("pressure_gap.csv", &["gamma", "offset", "lambda", "gap", "budget", "pass"], &rows)?;
        files += 1;
        pressure_bounds_hold = Some(all);
    }
    let pressure_gap_shrinking =
        gaps.into_iter().filter(|(_, g)| g.len() > 1).map(|(k, g)| (k, g.windows(2).all(|w| w[1] <= w[0]))).collect();

    sink.json(
        "report.json",
        &ReportOut {
            theta_strictly_decreasing: theta_trend,
            lambda_c_error_decreasing,
            pressure_gap_shrinking,
            pressure_bounds_hold,
        },
    )?;
    Ok(format!("wrote {} tables and report.json", files))
}
