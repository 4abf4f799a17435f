use rayon::prelude::*;

use super::{ModelParams, SiteMeasure, Torus};
use crate::error::{Error, Result};
use crate::numeric::LogAcc;

/// Largest state space summed by brute force.
pub const MAX_STATES: f64 = 1e8;

/// Fold over every configuration of a discrete torus, passing
/// `(values, log weight)` with `log weight = −βH` plus the atom weights. Work is split over configuration prefixes; per-prefix
/// results are merged in a fixed order so the outcome is deterministic.
pub fn enumerate_fold<T, I, V, M>(p: &ModelParams, init: I, visit: V, merge: M) -> Result<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    V: Fn(&mut T, &[f64], f64) + Sync,
    M: Fn(&mut T, T),
{
    let m = SiteMeasure::new(p)?;
    if !m.is_discrete() {
        return Err(Error::Config("exact enumeration needs the discrete domain".into()));
    }
    let (xs, lw) = m.support()?;
    let k = xs.len();
    let torus = Torus::new(p.d, p.l);
    let n = torus.n;
    if (k as f64).powi(n as i32) > MAX_STATES {
        return Err(Error::Capacity(format!("{k}^{n} states exceed the enumeration limit of 1e8")));
    }
    let edges: Vec<(usize, usize)> = torus.edges().collect();
    let j = p.coupling();
    let mut prefix = 0;
    while prefix < n && k.pow(prefix as u32) < 256 {
        prefix += 1;
    }
    let chunks = k.pow(prefix as u32);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let mut idx = vec![0usize; n];
            let mut rest = c;
            for slot in idx.iter_mut().take(prefix) {
                *slot = rest % k;
                rest /= k;
            }
            let mut vals: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            loop {
                let site: f64 = idx.iter().map(|&i| lw[i]).sum();
                let grad: f64 = edges.iter().map(|&(a, b)| (vals[a] - vals[b]).powi(2)).sum();
                visit(&mut acc, &vals, site - j * grad);
                let mut pos = prefix;
                loop {
                    if pos == n {
                        return acc;
                    }
                    idx[pos] += 1;
                    if idx[pos] < k {
                        vals[pos] = xs[idx[pos]];
                        break;
                    }
                    idx[pos] = 0;
                    vals[pos] = xs[0];
                    pos += 1;
                }
            }
        })
        .collect();
    let mut it = parts.into_iter();
    let mut out = it.next().expect("at least one chunk");
    for part in it {
        merge(&mut out, part);
    }
    Ok(out)
}

/// `log Ξ` by brute force.
pub fn exact_log_partition(p: &ModelParams) -> Result<f64> {
    let acc = enumerate_fold(p, LogAcc::new, |a, _, w| a.add(w), |a, b| a.merge(&b))?;
    Ok(acc.value())
}

/// Every configuration with its unnormalized log weight.
pub fn exact_log_weights(p: &ModelParams) -> Result<Vec<(Vec<f64>, f64)>> {
    enumerate_fold(p, Vec::new, |a, v, w| a.push((v.to_vec(), w)), |a, b| a.extend(b))
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::super::{log_site_weight, Domain};
    use super::*;
    use crate::meanfield::FreeEnergySpec;
    use crate::numeric::logsumexp;

    #[test]
    fn two_state_two_site_by_hand() {
        // S = {0, 1}, f = 0, λ = α = 0: weights 1, e^{-2J}, e^{-2J}, 1.
        let mut p = tiny(0.8, 0.0);
        p.spec.rho_max = Some(1.0);
        p.spec.rho_cp = Some(0.5);
        let j = p.coupling();
        let want = (2.0 + 2.0 * (-2.0 * j).exp()).ln();
        assert!((exact_log_partition(&p).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn factorizes_without_coupling() {
        let mut p = tiny(0.0, 0.3);
        p.l = 4;
        let (xs, _) = SiteMeasure::new(&p).unwrap().support().unwrap();
        let single = logsumexp(xs.iter().map(|&x| log_site_weight(&p, x).unwrap()));
        assert!((exact_log_partition(&p).unwrap() - 4.0 * single).abs() < 1e-12);
    }

    #[test]
    fn enumeration_order_is_fixed() {
        let p = tiny(1.0, 0.0);
        let all = exact_log_weights(&p).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(all[1].0, vec![1.0, 0.0]);
        assert_eq!(all[3].0, vec![0.0, 1.0]);
    }

    #[test]
    fn continuous_domain_is_rejected() {
        let mut p = tiny(1.0, 0.0);
        p.domain = Domain::Continuous;
        assert!(matches!(exact_log_partition(&p), Err(Error::Config(_))));
    }

    #[test]
    fn capacity_limit() {
        let mut p = tiny(1.0, 0.0);
        p.spec = FreeEnergySpec::ideal_gas(1.0);
        p.gamma = 0.5;
        p.l = 8;
        p.d = 2;
        assert!(matches!(exact_log_partition(&p), Err(Error::Capacity(_))));
    }
}
