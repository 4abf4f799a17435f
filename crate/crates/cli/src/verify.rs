use std::collections::HashSet;

use kacbox::chessboard::{
    default_xi_grid, orbit_group, psi_lower_bound, verify_chessboard_inequality, BlockSpec, Event, MARGIN_TOL,
};
use kacbox::meanfield::{Case, FreeEnergyKind, FreeEnergySpec, ScaleTable};
use kacbox::reference::{check_superstability_witness, particle_free_energy_mc, PairPotential, PotentialKind, Witness};
use kacbox::rng::stream;
use kacbox::spinmodel::{exact_log_partition, Domain, ModelParams, Torus};
use kacbox::transition::{ds_budget, ds_identity};
use rand::Rng;
use serde::Serialize;

use crate::config::{RunConfig, VerifyBlock, SUITES};
use crate::output::Sink;
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Serialize)]
struct SuiteSummary {
    name: String,
    checks: usize,
    failures: usize,
}

#[derive(Serialize)]
struct VerifyOut {
    all_pass: bool,
    suites: Vec<SuiteSummary>,
    checks: Vec<Check>,
}

struct Log {
    suite: &'static str,
    checks: Vec<Check>,
}

impl Log {
    fn push(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { suite: self.suite.into(), name: name.into(), pass, detail: detail.into() });
    }

    /// Record an engine error as a failed check.
    fn result<T>(&mut self, name: &str, r: kacbox::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(name, false, format!("error: {e}"));
                None
            }
        }
    }
}

/// Uniform atoms `0..n` with a linear free energy and `γ = 1`.
fn atoms(n: usize, d: usize, l: usize, j2: f64, lambda: f64) -> ModelParams {
    let top = (n - 1) as f64;
    let spec = FreeEnergySpec {
        kind: FreeEnergyKind::Tabulated {
            tables: vec![ScaleTable {
                gamma: 1.0,
                rho: vec![0.0, top],
                f: vec![Some(0.0), Some(0.3 * top)],
                stderr: None,
            }],
        },
        case: Case::HardCore,
        rho_cp: Some(top / 2.0),
        rho_max: Some(top),
        alpha_max: None,
        beta: 1.0,
    };
    ModelParams { d, l, beta: 1.0, alpha: 0.5, j2, gamma: 1.0, lambda, domain: Domain::Discrete, spec }
}

fn random_set<R: Rng>(rng: &mut R, n: usize) -> Vec<[f64; 2]> {
    let lo = rng.random_range(0..n);
    let hi = rng.random_range(lo..n);
    vec![[lo as f64, hi as f64]]
}

fn chessboard_suite(log: &mut Log, seed: u64, trials: usize) {
    // (d, L, atoms); small enough to enumerate.
    const SHAPES: [(usize, usize, usize); 4] = [(1, 4, 3), (1, 6, 3), (1, 8, 2), (2, 2, 3)];
    for t in 0..trials {
        let mut rng = stream(seed, 0xC4E5, t as u64);
        let (d, l, n) = SHAPES[rng.random_range(0..SHAPES.len())];
        let p = atoms(n, d, l, rng.random_range(0.0..1.0), rng.random_range(-0.5..0.5));
        let corner: Vec<usize> = (0..d).map(|_| rng.random_range(0..l)).collect();
        let edge = d == 1 && l % 4 == 0 && rng.random_bool(0.5);
        let block = if edge { BlockSpec::edge(corner.clone(), 0, l) } else { BlockSpec::vertex(corner.clone(), l) };
        let mut events = Vec::new();
        for k in 0..block.group_size() {
            if !(k == 0 || rng.random_bool(0.5)) {
                continue;
            }
            let ev = if edge {
                let other = vec![(corner[0] + 1) % l];
                Event::Edge { edge: [corner.clone(), other], sets: [random_set(&mut rng, n), random_set(&mut rng, n)] }
            } else {
                Event::Site { site: corner.clone(), set: random_set(&mut rng, n) }
            };
            events.push((k, ev));
        }
        let name = format!("trial-{t}");
        if let Some(r) = log.result(&name, verify_chessboard_inequality(&events, &block, &p)) {
            let detail = format!("d={d} L={l} events={} lhs={:e} rhs={:e}", events.len(), r.lhs, r.rhs);
            log.push(name, r.pass, detail);
        }
    }
}

fn side_choices(l: usize) -> Vec<usize> {
    (0..l).filter(|&s| l % (2 * (s + 1)) == 0).collect()
}

fn orbit_suite(log: &mut Log, seed: u64) {
    let mut rng = stream(seed, 0x0B17, 0);
    for d in 1..=3usize {
        for l in (2..=8usize).step_by(2) {
            let torus = Torus::new(d, l);
            let n = torus.n;
            let choices = side_choices(l);
            let mut combos: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..d {
                combos =
                    combos.iter().flat_map(|c| choices.iter().map(move |&s| [c.clone(), vec![s]].concat())).collect();
            }
            for sides in combos {
                let corner: Vec<usize> = (0..d).map(|_| rng.random_range(0..l)).collect();
                let block = BlockSpec { corner, sides: sides.clone(), l };
                let name = format!("d={d} L={l} sides={sides:?}");
                let Some(group) = log.result(&name, orbit_group(&block)) else { continue };
                let mut problems = Vec::new();
                if group.len() != block.group_size() {
                    problems.push(format!("|T| = {} expected {}", group.len(), block.group_size()));
                }
                if group.first().is_none_or(|g| g.iter().enumerate().any(|(i, &v)| v as usize != i)) {
                    problems.push("identity is not first".into());
                }
                if group.iter().any(|g| {
                    let mut seen = vec![false; n];
                    g.iter().all(|&v| !std::mem::replace(&mut seen[v as usize], true))
                } == false) {
                    problems.push("an element is not a permutation".into());
                }
                let set: HashSet<&Vec<u32>> = group.iter().collect();
                let pairs = if group.len() <= 64 { group.len() * group.len() } else { 4096 };
                for k in 0..pairs {
                    let (a, b) = if group.len() <= 64 {
                        (k / group.len(), k % group.len())
                    } else {
                        (rng.random_range(0..group.len()), rng.random_range(0..group.len()))
                    };
                    let comp: Vec<u32> = (0..n).map(|v| group[a][group[b][v] as usize]).collect();
                    if !set.contains(&comp) {
                        problems.push(format!("composition of elements {a} and {b} leaves the group"));
                        break;
                    }
                }
                let inside: Vec<usize> = (0..n).filter(|&v| block.contains(&torus.coords(v))).collect();
                let mut cover = vec![0usize; n];
                for g in &group {
                    for &v in &inside {
                        cover[g[v] as usize] += 1;
                    }
                }
                if cover.iter().any(|&c| c != 1) {
                    problems.push("block images do not tile the torus".into());
                }
                log.push(name, problems.is_empty(), problems.join("; "));
            }
        }
    }
}

fn psi_suite(log: &mut Log, seed: u64, trials: usize) {
    for gamma in [0.5, 0.35, 0.25] {
        for lambda in [-5.0, -4.4, -3.5] {
            let p = ModelParams {
                d: 2,
                l: 4,
                beta: 1.0,
                alpha: 12.0,
                j2: 1.0,
                gamma,
                lambda,
                domain: Domain::Continuous,
                spec: FreeEnergySpec::tonks(1.0, 1.0),
            };
            let name = format!("tonks gamma={gamma} lambda={lambda}");
            let xi = default_xi_grid(&p);
            let Some(b) = log.result(&name, psi_lower_bound(&p, &xi)) else { continue };
            let Some(coarse) = log.result(&name, psi_lower_bound(&p, &xi[..xi.len() / 2])) else { continue };
            let dj = p.d as f64 * p.coupling();
            let formula = (b.value - (-dj * b.width * b.width + b.log_mass)).abs() <= 1e-9 * (1.0 + b.value.abs());
            let pass = b.value.is_finite() && formula && coarse.value <= b.value + 1e-12;
            log.push(name, pass, format!("psi >= {:e} (width {:e})", b.value, b.width));
        }
    }
    // Against brute force: log Ξ / |Λ| dominates the bound.
    for t in 0..trials.min(20) {
        let mut rng = stream(seed, 0x951, t as u64);
        let (d, l) = if rng.random_bool(0.5) { (1, 4) } else { (2, 2) };
        let p = atoms(3, d, l, rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0));
        let name = format!("exact-{t}");
        let Some(b) = log.result(&name, psi_lower_bound(&p, &default_xi_grid(&p))) else { continue };
        let Some(z) = log.result(&name, exact_log_partition(&p)) else { continue };
        let per_site = z / p.sites() as f64;
        log.push(name, per_site >= b.value - 1e-12, format!("log Xi/N = {per_site:e}, bound {:e}", b.value));
    }
}

fn ds_suite(log: &mut Log, seed: u64, trials: usize) {
    let want = 0.75 - 0.5f64.sqrt();
    if let Some(b) = log.result("budget at eps=1/2", ds_budget(0.5, 0.0, 0.0)) {
        log.push("budget at eps=1/2", (b.budget - want).abs() <= 1e-15, format!("{:e}", b.budget));
    }
    log.push(
        "eps out of range is rejected",
        ds_budget(0.6, 0.0, 0.0).is_err() && ds_budget(0.0, 0.0, 0.0).is_err(),
        "",
    );
    for t in 0..trials {
        let mut rng = stream(seed, 0xD5, t as u64);
        let eps = rng.random_range(1e-4..=0.5);
        let Some(b) = log.result("budget", ds_budget(eps, 0.0, 0.0)) else { continue };
        let s = rng.random_range(0.0..1.2) * b.budget;
        let split = rng.random_range(0.0..=1.0);
        let name = format!("trial-{t}");
        let Some(r) = log.result(&name, ds_budget(eps, split * s, (1.0 - split) * s)) else { continue };
        let mut ok = r.pass == (s <= b.budget);
        let mut detail = format!("eps={eps:e} s={s:e} budget={:e}", b.budget);
        if let Some(d3) = r.delta3 {
            let residual = ((1.0 - d3) * (1.0 - if s > 0.0 { 2.0 * s / d3 } else { 0.0 }) - (1.0 - eps)).abs();
            ok &= residual <= 1e-9 && d3 <= eps + 1e-12;
            detail.push_str(&format!(" delta3={d3:e} residual={residual:e}"));
        }
        log.push(name, ok, detail);
    }
    let mut bad = 0usize;
    for n in 1..=40usize {
        for a in 0..=n {
            for b in 0..=n - a {
                bad += usize::from(!ds_identity(a, b, n));
            }
        }
    }
    log.push("count identity for N <= 40", bad == 0, format!("{bad} violations"));
}

fn grid(n: usize, h: f64) -> Vec<f64> {
    (0..n).map(|i| h * i as f64).collect()
}

fn witness_suite(log: &mut Log) {
    let table = |d: usize, r: &[f64], v: &[f64]| {
        PairPotential::new(PotentialKind::Table { r: r.to_vec(), v: v.iter().map(|&x| Some(x)).collect() }, d)
    };
    for d in 1..=3 {
        let r = grid(801, 0.01);
        let phi: Vec<f64> = r.iter().map(|x| (-x * x).exp()).collect();
        let name = format!("gaussian d={d}");
        let w = Witness { r: r.clone(), phi0: phi.clone() };
        if let Some(rep) = log.result(&name, check_superstability_witness(&table(d, &r, &phi), &w, 1e-6)) {
            let exact = std::f64::consts::PI.powf(0.5 * d as f64);
            let pass = rep.pass && (rep.integral - exact).abs() < 1e-6 * exact;
            log.push(name, pass, format!("integral {:e} (exact {exact:e}), c={:e}", rep.integral, rep.c));
        }
    }
    let r = grid(801, 0.01);
    let phi: Vec<f64> = r.iter().map(|&x| 0.5 * (1.0 - ((x - 1.0) / 0.05).tanh())).collect();
    let w = Witness { r: r.clone(), phi0: phi.clone() };
    if let Some(rep) = log.result("sharp bump", check_superstability_witness(&table(3, &r, &phi), &w, 1e-6)) {
        log.push("sharp bump is rejected", !rep.pass && !rep.fourier_ok, format!("fourier min {:e}", rep.fourier_min));
    }
}

fn hard_rod_suite(log: &mut Log, seed: u64) {
    let (b, gamma) = (0.25, 0.125);
    let pot = PairPotential::new(PotentialKind::HardCore { r: b }, 1);
    let ell = 1.0 / gamma;
    let mut ln_fact = 0.0;
    for n in 1..=10usize {
        ln_fact += (n as f64).ln();
        let name = format!("N={n}");
        let Some(pt) = log.result(&name, particle_free_energy_mc(&pot, gamma, 1.0, n, 100_000, seed)) else { continue };
        let free = ell - (n as f64 - 1.0) * b;
        let want = -gamma * (n as f64 * free.ln() - ln_fact);
        let pass = (pt.f - want).abs() <= 3.0 * pt.stderr + 1e-12;
        log.push(name, pass, format!("{:e} vs exact {want:e} (se {:e})", pt.f, pt.stderr));
    }
}

fn cases_suite(log: &mut Log, vb: &VerifyBlock) -> Result<(), CliError> {
    for case in &vb.cases {
        let events: Vec<(usize, Event)> = case.events.iter().map(|e| (e.element, e.event.clone())).collect();
        let r = verify_chessboard_inequality(&events, &case.block, &case.model)?;
        let rhs = case.rhs_scale * r.rhs;
        let pass = r.lhs <= rhs + MARGIN_TOL;
        log.push(case.name.clone(), pass, format!("lhs {:e} rhs {rhs:e} (scale {})", r.lhs, case.rhs_scale));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, seed: u64, sink: &Sink) -> Result<String, CliError> {
    let vb = cfg.verify.clone().unwrap_or_default();
    if vb.suites.is_empty() {
        return Err(CliError::Usage("no verification suites selected".into()));
    }
    let mut suites: Vec<&'static str> = Vec::new();
    for s in &vb.suites {
        let known = SUITES
            .iter()
            .find(|k| *k == s)
            .ok_or_else(|| CliError::Config(format!("unknown suite `{s}` (known: {})", SUITES.join(", "))))?;
        if !suites.contains(known) {
            suites.push(known);
        }
    }
    let mut checks = Vec::new();
    let mut summary = Vec::new();
    for suite in suites {
        let mut log = Log { suite, checks: Vec::new() };
        match suite {
            "chessboard" => chessboard_suite(&mut log, seed, vb.trials),
            "orbit" => orbit_suite(&mut log, seed),
            "psi" => psi_suite(&mut log, seed, vb.trials),
            "ds" => ds_suite(&mut log, seed, vb.trials),
            "witness" => witness_suite(&mut log),
            "hard-rods" => hard_rod_suite(&mut log, seed),
            "cases" => cases_suite(&mut log, &vb)?,
            _ => unreachable!("suite names are validated"),
        }
        let failures = log.checks.iter().filter(|c| !c.pass).count();
        summary.push(SuiteSummary { name: suite.into(), checks: log.checks.len(), failures });
        checks.extend(log.checks);
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    let msg = format!("{} checks, {} failed", checks.len(), failed.len());
    let first = failed.first().map(|c| format!("{}/{}: {}", c.suite, c.name, c.detail));
    let all_pass = failed.is_empty();
    sink.json("verify.json", &VerifyOut { all_pass, suites: summary, checks })?;
    match first {
        None => Ok(msg),
        Some(f) => Err(CliError::Failed(format!("{msg}; first failure {f}"))),
    }
}
