//! Engine outputs against independent oracles written here from scratch.
//! Expected constants were produced by the oracle functions in this file
//! and are checked against them as well, so drift in either side shows.

use kacbox::chessboard::{chessboard_seminorm_exact, orbit_group, BlockSpec, Event};
use kacbox::meanfield::{
    detect_nonconvexity, eval_phi, gates_penrose_pressure, pressure_from_free_energy, Case, FreeEnergyKind,
    FreeEnergySpec, ScaleTable,
};
use kacbox::reference::exact_hard_rod_spec;
use kacbox::spinmodel::{exact_log_partition, Domain, ModelParams};
use kacbox::MeanFieldOptions;

fn tonks_f(rho: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else {
        rho * ((rho / (1.0 - rho)).ln() - 1.0)
    }
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[test]
fn ideal_gas_phi_matches_stirling() {
    // −(1/V) ln(V^N/N!) at N = V = 10⁶ with the Stirling series for ln N!.
    let n: f64 = 1e6;
    let ln_fact = n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln() + 1.0 / (12.0 * n);
    let oracle = -(n * n.ln() - ln_fact) / n;
    const FROZEN: f64 = -0.9999921733;
    assert!((oracle - FROZEN).abs() < 1e-9, "{oracle}");
    let phi = eval_phi(&FreeEnergySpec::ideal_gas(1.0), 0.0, 0.0, 1.0).unwrap();
    assert!((phi - oracle).abs() < 1e-5, "{phi}");
}

fn min_second_difference(alpha: f64) -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    (2..n - 1)
        .map(|i| {
            let g = |r: f64| -0.5 * alpha * r * r + tonks_f(r);
            let r = i as f64 * h;
            (g(r - h) - 2.0 * g(r) + g(r + h)) / (h * h)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn tonks_nonconvexity_follows_the_second_difference_sign() {
    // f'' = 1/(ρ(1−ρ)²) has minimum 27/4 at ρ = 1/3, so α = 4 is convex.
    const FROZEN_ALPHA_4: f64 = 2.75;
    let m4 = min_second_difference(4.0);
    assert!((m4 - FROZEN_ALPHA_4).abs() < 1e-3, "{m4}");
    let o = MeanFieldOptions::default();
    let tonks = FreeEnergySpec::tonks(1.0, 1.0);
    assert_eq!(detect_nonconvexity(&tonks, 4.0, &o).unwrap().flag, m4 < 0.0);
    let m8 = min_second_difference(8.0);
    assert!(m8 < 0.0);
    assert_eq!(detect_nonconvexity(&tonks, 8.0, &o).unwrap().flag, m8 < 0.0);
}

#[test]
fn gates_penrose_matches_dense_grid() {
    let n = 1_000_000;
    let oracle = -(1..n)
        .map(|i| {
            let r = i as f64 / n as f64;
            -2.0 * r * r + tonks_f(r)
        })
        .fold(f64::INFINITY, f64::min);
    const FROZEN: f64 = 1.0934945622;
    assert!((oracle - FROZEN).abs() < 1e-9, "{oracle}");
    let p = gates_penrose_pressure(&FreeEnergySpec::tonks(1.0, 1.0), 4.0, 0.0, &MeanFieldOptions::default()).unwrap();
    assert!((p - oracle).abs() < 1e-8, "{p} vs {oracle}");
}

#[test]
fn ideal_gas_pressure_is_t_rho() {
    let f = |r: f64| if r == 0.0 { 0.0 } else { r * (r.ln() - 1.0) };
    let h = 1e-5;
    let oracle = 0.5 * (f(0.5 + h) - f(0.5 - h)) / (2.0 * h) - f(0.5);
    assert!((oracle - 0.5).abs() < 1e-8);
    let table: Vec<(f64, f64)> = (0..=2000).map(|i| i as f64 / 1000.0).map(|r| (r, f(r))).collect();
    let p = pressure_from_free_energy(&table, 0.5).unwrap();
    assert!((p - oracle).abs() < 1e-4, "{p}");
}

fn hard_rod_oracle(gamma: f64, n: usize) -> Option<f64> {
    let free = 1.0 / gamma - (n as f64 - 1.0).max(0.0);
    if n == 0 {
        Some(0.0)
    } else if free <= 0.0 {
        None
    } else {
        Some(-gamma * (n as f64 * free.ln() - ln_factorial(n)))
    }
}

fn table_at(spec: &FreeEnergySpec, gamma: f64, rho: f64) -> Option<f64> {
    let FreeEnergyKind::Tabulated { tables } = &spec.kind else { panic!("tabulated") };
    let t = tables.iter().find(|t| t.gamma == gamma).unwrap();
    let i = t.rho.iter().position(|r| (r - rho).abs() < 1e-9).unwrap();
    t.f[i]
}

#[test]
fn hard_rod_tables_match_closed_form_and_converge() {
    let spec = exact_hard_rod_spec(1.0, &[0.1, 0.05], 1.0, 1.5).unwrap();
    const FROZEN: [f64; 2] = [-0.4171305603, -0.4437270077];
    for (k, g) in [0.1f64, 0.05].into_iter().enumerate() {
        let n = (0.5 / g).round() as usize;
        let oracle = hard_rod_oracle(g, n).unwrap();
        assert!((oracle - FROZEN[k]).abs() < 1e-9, "{oracle}");
        assert!((table_at(&spec, g, 0.5).unwrap() - oracle).abs() < 1e-12);
    }
    assert!((FROZEN[0] - FROZEN[1]).abs() < 0.05);
    assert!((FROZEN[1] - tonks_f(0.5)).abs() < (FROZEN[0] - tonks_f(0.5)).abs());
}

#[test]
fn hard_rod_values_diverge_at_close_packing() {
    let gammas = [0.1, 0.01, 0.001];
    let spec = exact_hard_rod_spec(1.0, &gammas, 1.0, 1.5).unwrap();
    let vals: Vec<f64> = gammas.iter().map(|&g| table_at(&spec, g, 1.0).unwrap()).collect();
    for (g, v) in gammas.iter().zip(&vals) {
        assert!((v - hard_rod_oracle(*g, (1.0 / g).round() as usize).unwrap()).abs() < 1e-9);
    }
    assert!(vals.windows(2).all(|w| w[1] > w[0] + 1.0), "{vals:?}");
    assert_eq!(table_at(&spec, 0.1, 1.1), None);
}

fn two_state(l: usize, j2: f64, lambda: f64) -> ModelParams {
    let spec = FreeEnergySpec {
        kind: FreeEnergyKind::Tabulated {
            tables: vec![ScaleTable { gamma: 1.0, rho: vec![0.0, 1.0], f: vec![Some(0.0), Some(0.0)], stderr: None }],
        },
        case: Case::HardCore,
        rho_cp: Some(0.5),
        rho_max: Some(1.0),
        alpha_max: None,
        beta: 1.0,
    };
    ModelParams { d: 1, l, beta: 1.0, alpha: 0.0, j2, gamma: 1.0, lambda, domain: Domain::Discrete, spec }
}

/// Unnormalized weights of every 0/1 ring configuration, by hand.
fn ring_weights(l: usize, j2: f64, lambda: f64) -> Vec<(u32, f64)> {
    (0..1u32 << l)
        .map(|s| {
            let bit = |i: usize| ((s >> (i % l)) & 1) as f64;
            let mut edges: Vec<(usize, usize)> = (0..l).map(|i| (i, i + 1)).collect();
            if l == 2 {
                // Both torus edges between the two sites count.
                edges = vec![(0, 1), (1, 0)];
            }
            let grad: f64 = edges.iter().map(|&(a, b)| (bit(a) - bit(b)).powi(2)).sum();
            let n: f64 = (0..l).map(bit).sum();
            (s, (lambda * n - 0.5 * j2 * grad).exp())
        })
        .collect()
}

#[test]
fn four_state_partition_matches_brute_force() {
    let oracle = ring_weights(2, 0.6, 0.0).iter().map(|w| w.1).sum::<f64>().ln();
    const FROZEN: f64 = 1.1306351310;
    assert!((oracle - FROZEN).abs() < 1e-9, "{oracle}");
    let exact = exact_log_partition(&two_state(2, 0.6, 0.0)).unwrap();
    assert!((exact - oracle).abs() < 1e-12, "{exact}");
}

#[test]
fn whole_fundamental_domain_has_two_to_the_d_elements() {
    for d in 1..=3 {
        for l in [4, 6, 8] {
            let block = BlockSpec { corner: vec![0; d], sides: vec![l / 2 - 1; d], l };
            assert_eq!(orbit_group(&block).unwrap().len(), 1 << d, "d={d} L={l}");
        }
    }
}

#[test]
fn seminorm_matches_sixteen_state_brute_force() {
    let w = ring_weights(4, 0.6, 0.3);
    let z: f64 = w.iter().map(|x| x.1).sum();
    // The four reflection images of {η₀ = 1} cover the ring.
    let oracle = (w[15].1 / z).powf(0.25);
    const FROZEN: f64 = 0.6573590826;
    assert!((oracle - FROZEN).abs() < 1e-9, "{oracle}");
    let ev = Event::Site { site: vec![0], set: vec![[1.0, 1.0]] };
    let r = chessboard_seminorm_exact(&ev, &BlockSpec::vertex(vec![0], 4), &two_state(4, 0.6, 0.3)).unwrap();
    assert_eq!(r.group_size, 4);
    assert!((r.value - oracle).abs() < 1e-12, "{}", r.value);
}
