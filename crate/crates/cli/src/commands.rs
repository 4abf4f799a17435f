use kacbox::chessboard::{orbit_group, verify_chessboard_inequality, BlockShape, ChessboardReport, Event};
use kacbox::meanfield::{
    detect_nonconvexity, find_coexistence, flat_segment_pressure, FreeEnergySpec, MeanFieldAnalysis, Nonconvexity,
};
use kacbox::numeric::batch_means;
use kacbox::reference::{
    build_free_energy_table, check_convergence_assumptions, check_superstability_bound, check_superstability_witness,
    temperedness_audit, BoundReport, ConvergenceReport, TableOptions, TemperednessAudit, WitnessReport,
};
use kacbox::spinmodel::{sample_observables, Init, ModelParams};
use kacbox::transition::{
    build_good_regions, compute_thetas, ds_identity, pressure_comparison, psi_l, BranchPressures, GoodRegionSpec,
    PressureComparison, ScanContext, ScanPoint, ThetaReport,
};
use kacbox::{Error, MeanFieldOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{num, opt, Sink};
use crate::CliError;

type Res = Result<String, CliError>;

fn missing(block: &str) -> CliError {
    CliError::Config(format!("missing `{block}` block"))
}

fn model(cfg: &RunConfig) -> Result<&ModelParams, CliError> {
    let p = cfg.model.as_ref().ok_or_else(|| missing("model"))?;
    p.validate()?;
    Ok(p)
}

fn meanfield_inputs(cfg: &RunConfig) -> Result<(FreeEnergySpec, f64, MeanFieldOptions), CliError> {
    let mf = cfg.meanfield.clone().unwrap_or_default();
    let spec = mf.spec.or_else(|| cfg.model.as_ref().map(|m| m.spec.clone()));
    let alpha = mf.alpha.or_else(|| cfg.model.as_ref().map(|m| m.alpha));
    let (Some(spec), Some(alpha)) = (spec, alpha) else {
        return Err(CliError::Config("mean field needs `meanfield.spec`/`alpha` or a `model` block".into()));
    };
    Ok((spec, alpha, mf.options.unwrap_or_default()))
}

fn region_overrides(cfg: &RunConfig) -> (Option<f64>, Option<f64>) {
    cfg.regions.as_ref().map(|r| (r.delta, r.kappa)).unwrap_or((None, None))
}

/// Mean-field analysis when the model has coexistence, `None` when it is convex.
fn optional_analysis(p: &ModelParams) -> Result<Option<MeanFieldAnalysis>, CliError> {
    match find_coexistence(&p.spec, p.alpha, &MeanFieldOptions::default()) {
        Ok(a) => Ok(Some(a)),
        Err(Error::NoCoexistence(_) | Error::FlatCoexistence) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct MeanFieldOut<'a> {
    analysis: &'a MeanFieldAnalysis,
    nonconvexity: Nonconvexity,
    coexistence_pressure: f64,
    regions: GoodRegionSpec,
}

pub fn meanfield(cfg: &RunConfig, sink: &Sink) -> Res {
    let (spec, alpha, opts) = meanfield_inputs(cfg)?;
    let nonconvexity = detect_nonconvexity(&spec, alpha, &opts)?;
    let a = find_coexistence(&spec, alpha, &opts)?;
    let (delta, kappa) = region_overrides(cfg);
    let regions = build_good_regions(&a, &spec, delta, kappa)?;
    sink.json(
        "meanfield.json",
        &MeanFieldOut { analysis: &a, nonconvexity, coexistence_pressure: flat_segment_pressure(&a), regions },
    )?;
    let rows: Vec<Vec<String>> = a.envelope.iter().map(|e| vec![num(e.rho), num(e.phi), num(e.ce)]).collect();
    sink.csv("envelope.csv", &["rho", "phi", "ce_phi"], &rows)?;
    Ok(format!("lambda_star = {}, rho = [{}, {}]", num(a.lambda_star), num(a.rho_minus), num(a.rho_plus)))
}

#[derive(Serialize)]
struct WitnessOutcome {
    report: Option<WitnessReport>,
    rejected_at: Option<f64>,
}

#[derive(Serialize)]
struct FreeEnergyAudit {
    stability_constant: Option<f64>,
    certified_superstable: Option<bool>,
    witness: Option<WitnessOutcome>,
    superstability: Option<BoundReport>,
    convergence: Option<ConvergenceReport>,
    temperedness: Option<TemperednessAudit>,
}

pub fn freeenergy(cfg: &RunConfig, seed: u64, sink: &Sink) -> Res {
    let fe = cfg.freeenergy.as_ref().ok_or_else(|| missing("freeenergy"))?;
    let opts = TableOptions { rho_max: fe.rho_max, rho_cp: fe.rho_cp, samples: fe.samples, seed };
    let (spec, tables) = build_free_energy_table(&fe.potential, &fe.gammas, fe.beta, &opts)?;
    let mut rows = Vec::new();
    for (gamma, pts) in fe.gammas.iter().zip(&tables) {
        for pt in pts {
            rows.push(vec![num(*gamma), pt.n.to_string(), num(pt.rho), num(pt.f), num(pt.stderr)]);
        }
    }
    sink.csv("freeenergy.csv", &["gamma", "N", "rho", "f_gamma", "stderr"], &rows)?;
    sink.json("spec.json", &spec)?;
    let witness = match &fe.witness {
        None => None,
        Some(w) => Some(match check_superstability_witness(&fe.potential, w, fe.witness_tol) {
            Ok(r) => WitnessOutcome { report: Some(r), rejected_at: None },
            Err(Error::WitnessRejected { radius }) => WitnessOutcome { report: None, rejected_at: Some(radius) },
            Err(e) => return Err(e.into()),
        }),
    };
    let audit = FreeEnergyAudit {
        stability_constant: fe.potential.stability_constant(),
        certified_superstable: fe.potential.certified_superstable(),
        witness,
        superstability: fe.superstability.map(|[c, d]| check_superstability_bound(&spec, c, d, fe.beta)).transpose()?,
        convergence: fe
            .limit
            .as_ref()
            .map(|lim| check_convergence_assumptions(&spec, lim, &fe.convergence.clone().unwrap_or_default()))
            .transpose()?,
        temperedness: fe.potential.temperedness.map(|_| temperedness_audit(&fe.potential)).transpose()?,
    };
    sink.json("audit.json", &audit)?;
    Ok(format!("{} table cells over {} gamma values", rows.len(), fe.gammas.len()))
}

#[derive(Serialize)]
struct SampleOut {
    sites: usize,
    rows: usize,
    mean_density: f64,
    density_se: f64,
    pi_minus: f64,
    pi_plus: f64,
    acceptance: Vec<f64>,
    identity_violations: usize,
}

pub fn sample(cfg: &RunConfig, seed: u64, sink: &Sink) -> Res {
    let p = model(cfg)?;
    let sb = cfg.sample.as_ref().ok_or_else(|| missing("sample"))?;
    let analysis = optional_analysis(p)?;
    let (delta, kappa) = region_overrides(cfg);
    let part = match (&sb.partition, &analysis) {
        (Some(part), _) => Some(part.clone()),
        (None, Some(a)) => Some(build_good_regions(a, &p.spec, delta, kappa)?.partition()),
        (None, None) => None,
    };
    let init = sb.init.clone().unwrap_or(Init::Constant(analysis.as_ref().map_or(0.0, |a| a.rho_minus)));
    let t = sample_observables(p, &sb.settings, seed, &init, part.as_ref())?;
    let n = t.sites as f64;
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r.chain.to_string(),
                r.sweep.to_string(),
                num(r.mean_density),
                num(r.energy),
                num(r.n_minus as f64 / n),
                num(r.n_plus as f64 / n),
                num(psi_l(r.n_minus, r.n_plus, t.sites)),
            ]
        })
        .collect();
    sink.csv("trace.csv", &["chain", "sweep", "mean_density", "energy", "pi_minus", "pi_plus", "psi"], &rows)?;
    let h = &t.histogram;
    let hist: Vec<Vec<String>> =
        h.mass.iter().enumerate().map(|(i, m)| vec![num(h.edges[i]), num(h.edges[i + 1]), num(*m)]).collect();
    sink.csv("histogram.csv", &["bin_lo", "bin_hi", "mass"], &hist)?;
    let (mean, se) = batch_means(&t.densities(), 20.min(t.rows.len()).max(2));
    let (pi_minus, pi_plus) = t.pi();
    let out = SampleOut {
        sites: t.sites,
        rows: t.rows.len(),
        mean_density: mean,
        density_se: se,
        pi_minus,
        pi_plus,
        acceptance: t.acceptance.clone(),
        identity_violations: t.rows.iter().filter(|r| !ds_identity(r.n_minus, r.n_plus, t.sites)).count(),
    };
    sink.json("sample.json", &out)?;
    Ok(format!("{} rows, mean density {}", out.rows, num(mean)))
}

#[derive(Serialize)]
struct ChessboardOut {
    block_shape: BlockShape,
    group_size: usize,
    report: ChessboardReport,
}

pub fn chessboard(cfg: &RunConfig, sink: &Sink) -> Res {
    let p = model(cfg)?;
    let cb = cfg.chessboard.as_ref().ok_or_else(|| missing("chessboard"))?;
    let events: Vec<(usize, Event)> = cb.events.iter().map(|e| (e.element, e.event.clone())).collect();
    let group_size = orbit_group(&cb.block)?.len();
    let report = verify_chessboard_inequality(&events, &cb.block, p)?;
    let msg = format!("lhs {} rhs {} margin {}", num(report.lhs), num(report.rhs), num(report.margin));
    sink.json("chessboard.json", &ChessboardOut { block_shape: cb.block.shape(), group_size, report })?;
    Ok(msg)
}

/// Strict decrease of each `θ` along the given (coarse to fine) order.
pub fn theta_trend(reports: &[ThetaReport]) -> [bool; 3] {
    let dec = |f: fn(&ThetaReport) -> f64| reports.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    [dec(|r| r.theta1), dec(|r| r.theta2), dec(|r| r.theta3)]
}

#[derive(Serialize)]
struct ThetasOut {
    regions: GoodRegionSpec,
    reports: Vec<ThetaReport>,
    strictly_decreasing: [bool; 3],
}

pub fn thetas(cfg: &RunConfig, sink: &Sink) -> Res {
    let p = model(cfg)?;
    let tb = cfg.thetas.as_ref().ok_or_else(|| missing("thetas"))?;
    let a = find_coexistence(&p.spec, p.alpha, &MeanFieldOptions::default())?;
    let (delta, kappa) = region_overrides(cfg);
    let g = build_good_regions(&a, &p.spec, delta, kappa)?;
    let mut gammas = tb.gammas.clone();
    gammas.sort_by(|a, b| b.total_cmp(a));
    let lambdas = g.lambda_samples(tb.lambda_samples);
    let reports = gammas
        .iter()
        .map(|&gamma| {
            let pg = p.with_gamma(gamma);
            pg.validate()?;
            compute_thetas(&pg, &g, &lambdas)
        })
        .collect::<kacbox::Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> =
        reports.iter().map(|r| vec![num(r.gamma), num(r.theta1), num(r.theta2), num(r.theta3)]).collect();
    sink.csv("thetas.csv", &["gamma", "theta1", "theta2", "theta3"], &rows)?;
    let strictly_decreasing = theta_trend(&reports);
    sink.json("thetas.json", &ThetasOut { regions: g, reports, strictly_decreasing })?;
    Ok(format!("thetas at {} gamma values, strictly decreasing {:?}", gammas.len(), strictly_decreasing))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    index: usize,
    lambda: f64,
    point: ScanPoint,
}

#[derive(Serialize)]
pub struct PressureOut<'a> {
    pub gamma: f64,
    pub lambda_star: f64,
    pub comparison: &'a PressureComparison,
}

fn checkpoint_name(i: usize) -> String {
    format!("checkpoints/point-{i:04}.json")
}

pub fn scan(cfg: &RunConfig, seed: u64, sink: &Sink, max_new_points: Option<usize>) -> Res {
    let p = model(cfg)?;
    let sb = cfg.scan.as_ref().ok_or_else(|| missing("scan"))?;
    let mut settings = sb.settings.clone();
    let (delta, kappa) = region_overrides(cfg);
    settings.delta = settings.delta.or(delta);
    settings.kappa = settings.kappa.or(kappa);
    let analysis = optional_analysis(p)?;
    let lambdas = match (&sb.lambdas, &analysis) {
        (Some(l), _) => l.clone(),
        (None, Some(a)) => build_good_regions(a, &p.spec, settings.delta, settings.kappa)?.lambda_samples(sb.points),
        (None, None) => {
            return Err(CliError::Config("`scan.lambdas` is required when the model has no coexistence".into()))
        }
    };
    let ctx = ScanContext::new(p, &lambdas, &settings, seed)?;

    let mut points: Vec<Option<ScanPoint>> = (0..lambdas.len())
        .map(|i| {
            sink.load::<Checkpoint>(&checkpoint_name(i))
                .filter(|c| c.index == i && c.lambda == lambdas[i])
                .map(|c| c.point)
        })
        .collect();
    let pending: Vec<usize> = (0..lambdas.len()).filter(|&i| points[i].is_none()).collect();
    let todo = &pending[..max_new_points.unwrap_or(pending.len()).min(pending.len())];
    let fresh: Vec<Result<(usize, ScanPoint), CliError>> = todo
        .par_iter()
        .map(|&i| {
            let point = ctx.run_point(i)?;
            let ck = Checkpoint { index: i, lambda: lambdas[i], point };
            sink.json(&checkpoint_name(i), &ck)?;
            Ok((i, ck.point))
        })
        .collect();
    for r in fresh {
        let (i, pt) = r?;
        points[i] = Some(pt);
    }
    if todo.len() < pending.len() {
        return Ok(format!(
            "computed {} new points, {} remain; rerun with the same config to resume",
            todo.len(),
            pending.len() - todo.len()
        ));
    }
    let points: Vec<ScanPoint> = points.into_iter().map(|p| p.expect("all points computed")).collect();

    let pressures = match sink.load::<Option<BranchPressures>>("checkpoints/pressures.json") {
        Some(bp) => bp,
        None => {
            let bp = ctx.run_pressures()?;
            sink.json("checkpoints/pressures.json", &bp)?;
            bp
        }
    };
    let report = ctx.assemble(points, pressures);
    sink.json("transition.json", &report)?;
    let b = |x: bool| (x as u8).to_string();
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|pt| {
            vec![
                num(pt.lambda),
                num(pt.vapor.mean_density),
                num(pt.vapor.density_se),
                num(pt.liquid.mean_density),
                num(pt.liquid.density_se),
                num(pt.separation),
                b(pt.two_phase),
                opt(pt.vapor.in_region),
                opt(pt.liquid.in_region),
            ]
        })
        .collect();
    sink.csv(
        "branches.csv",
        &[
            "lambda",
            "vapor_density",
            "vapor_se",
            "liquid_density",
            "liquid_se",
            "separation",
            "two_phase",
            "vapor_in_region",
            "liquid_in_region",
        ],
        &rows,
    )?;
    for (i, pt) in report.points.iter().enumerate() {
        let (hv, hl) = (&pt.vapor.histogram, &pt.liquid.histogram);
        let rows: Vec<Vec<String>> = (0..hv.mass.len())
            .map(|k| vec![num(hv.edges[k]), num(hv.edges[k + 1]), num(hv.mass[k]), num(hl.mass[k])])
            .collect();
        sink.csv(&format!("histograms/point-{i:04}.csv"), &["bin_lo", "bin_hi", "vapor_mass", "liquid_mass"], &rows)?;
    }

    let mut msg = format!(
        "{} points, outcome {:?}, lambda_c {}",
        report.points.len(),
        report.outcome,
        report.lambda_c.map(num).unwrap_or_else(|| "n/a".into())
    );
    if let Some(pb) = &sb.pressure {
        let a = analysis.as_ref().ok_or_else(|| CliError::Config("pressure comparison needs coexistence".into()))?;
        let mut lams: Vec<f64> = pb.offsets.iter().map(|o| a.lambda_star + o).collect();
        lams.sort_by(f64::total_cmp);
        let cmp = match sink.load::<PressureComparison>("checkpoints/comparison.json") {
            Some(c) => c,
            None => {
                let c = pressure_comparison(p, &lams, &pb.paths, seed)?;
                sink.json("checkpoints/comparison.json", &c)?;
                c
            }
        };
        sink.json("pressure.json", &PressureOut { gamma: p.gamma, lambda_star: a.lambda_star, comparison: &cmp })?;
        let rows: Vec<Vec<String>> = cmp
            .rows
            .iter()
            .map(|r| vec![num(r.lambda), num(r.sampled), num(r.mean_field), num(r.gap), num(r.budget), b(r.pass)])
            .collect();
        sink.csv("pressure.csv", &["lambda", "sampled", "mean_field", "gap", "budget", "pass"], &rows)?;
        msg.push_str(&format!(", pressure bound holds at all points: {}", cmp.all_pass));
    }
    Ok(msg)
}
