//! Reflections of the torus through edge-crossing hyperplanes, the orbit
//! groups of blocks, chessboard seminorms by exact enumeration and the
//! interval lower bound `ψ` on the pressure.

mod mc;
mod psi;

pub use mc::{chessboard_seminorm_mc, McSeminorm};
pub use psi::{default_xi_grid, psi_lower_bound, PsiBound};

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::numeric::LogAcc;
use crate::spinmodel::{enumerate_fold, ModelParams, Torus};

/// Reflection of axis `axis` through the hyperplane at `p = twice_p / 2`
/// (`twice_p` odd, so the plane crosses edges).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionSpec {
    pub axis: usize,
    pub twice_p: i64,
    #[serde(rename = "L")]
    pub l: usize,
}

impl ReflectionSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.axis >= d {
            return config(format!("reflection axis {} outside 0..{d}", self.axis));
        }
        if self.twice_p.rem_euclid(2) != 1 {
            return config("reflection planes sit at half-integers");
        }
        Ok(())
    }
}

/// `v ↦ v` with coordinate `axis` replaced by `2p − v_axis (mod L)`.
pub fn reflect(v: &[usize], r: &ReflectionSpec) -> Vec<usize> {
    let mut out = v.to_vec();
    out[r.axis] = (r.twice_p - v[r.axis] as i64).rem_euclid(r.l as i64) as usize;
    out
}

/// Box `x + Π[0, ℓ_i]` on the torus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub corner: Vec<usize>,
    pub sides: Vec<usize>,
    #[serde(rename = "L")]
    pub l: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockShape {
    Vertex,
    Edge,
    General,
}

impl BlockSpec {
    pub fn vertex(corner: Vec<usize>, l: usize) -> Self {
        let d = corner.len();
        BlockSpec { corner, sides: vec![0; d], l }
    }

    pub fn edge(corner: Vec<usize>, axis: usize, l: usize) -> Self {
        let mut sides = vec![0; corner.len()];
        sides[axis] = 1;
        BlockSpec { corner, sides, l }
    }

    pub fn d(&self) -> usize {
        self.corner.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.corner.len() != self.sides.len() || self.corner.is_empty() {
            return config("block corner and sides must have the same positive length");
        }
        for (i, &s) in self.sides.iter().enumerate() {
            if self.l % (2 * (s + 1)) != 0 {
                return config(format!("2(l_{i}+1) = {} does not divide L = {}", 2 * (s + 1), self.l));
            }
            if self.corner[i] >= self.l {
                return config("block corner outside the torus");
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> BlockShape {
        let ones = self.sides.iter().filter(|&&s| s == 1).count();
        let zeros = self.sides.iter().filter(|&&s| s == 0).count();
        match (ones, zeros) {
            (0, _) => BlockShape::Vertex,
            (1, z) if z + 1 == self.sides.len() => BlockShape::Edge,
            _ => BlockShape::General,
        }
    }

    /// `Π_i L/(ℓ_i + 1)`.
    pub fn group_size(&self) -> usize {
        self.sides.iter().map(|&s| self.l / (s + 1)).product()
    }

    pub fn contains(&self, v: &[usize]) -> bool {
        v.iter().zip(&self.corner).zip(&self.sides).all(|((&c, &x), &s)| (c + self.l - x) % self.l <= s)
    }

    /// Reflections through the planes `p ∈ x_i − 1/2 + (ℓ_i + 1)ℤ`.
    pub fn generators(&self) -> Vec<ReflectionSpec> {
        let mut out = Vec::new();
        for (axis, (&x, &s)) in self.corner.iter().zip(&self.sides).enumerate() {
            let period = 2 * (s + 1) as i64;
            for k in 0..(self.l / (s + 1)) as i64 {
                out.push(ReflectionSpec { axis, twice_p: 2 * x as i64 - 1 + period * k, l: self.l });
            }
        }
        out
    }
}

/// The group generated by the block's reflections, as site permutations
/// (`perm[v]` is the image of `v`). The identity comes first.
pub fn orbit_group(block: &BlockSpec) -> Result<Vec<Vec<u32>>> {
    block.validate()?;
    let torus = Torus::new(block.d(), block.l);
    let gens: Vec<Vec<u32>> = block
        .generators()
        .iter()
        .map(|r| (0..torus.n).map(|v| torus.index(&reflect(&torus.coords(v), r)) as u32).collect())
        .collect();
    let id: Vec<u32> = (0..torus.n as u32).collect();
    let mut seen: HashSet<Vec<u32>> = HashSet::from([id.clone()]);
    let mut out = vec![id.clone()];
    let mut queue = VecDeque::from([id]);
    while let Some(g) = queue.pop_front() {
        for h in &gens {
            let gh: Vec<u32> = g.iter().map(|&v| h[v as usize]).collect();
            if seen.insert(gh.clone()) {
                out.push(gh.clone());
                queue.push_back(gh);
            }
        }
    }
    Ok(out)
}

/// A single-site or single-edge event in the predicate language
/// `{site, set}` / `{edge, sets}`; sets are unions of closed intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Event {
    Site { site: Vec<usize>, set: Vec<[f64; 2]> },
    Edge { edge: [Vec<usize>; 2], sets: [Vec<[f64; 2]>; 2] },
}

/// An event resolved to site indices.
#[derive(Clone, Debug)]
pub(crate) struct Pattern(pub(crate) Vec<(usize, Vec<[f64; 2]>)>);

fn in_set(set: &[[f64; 2]], x: f64) -> bool {
    set.iter().any(|&[a, b]| x >= a && x <= b)
}

impl Pattern {
    fn holds(&self, values: &[f64], perm: &[u32]) -> bool {
        self.0.iter().all(|(r, set)| in_set(set, values[perm[*r] as usize]))
    }
}

impl Event {
    pub fn whole(site: Vec<usize>) -> Self {
        Event::Site { site, set: vec![[0.0, f64::MAX]] }
    }

    pub(crate) fn resolve(&self, torus: &Torus) -> Result<Pattern> {
        let check = |c: &Vec<usize>| -> Result<usize> {
            if c.len() != torus.d || c.iter().any(|&x| x >= torus.l) {
                return config(format!("event site {c:?} outside the torus"));
            }
            Ok(torus.index(c))
        };
        match self {
            Event::Site { site, set } => Ok(Pattern(vec![(check(site)?, set.clone())])),
            Event::Edge { edge, sets } => {
                let a = check(&edge[0])?;
                let b = check(&edge[1])?;
                if !torus.neighbors(a).contains(&(b as u32)) {
                    return config(format!("{:?} and {:?} are not neighbors", edge[0], edge[1]));
                }
                Ok(Pattern(vec![(a, sets[0].clone()), (b, sets[1].clone())]))
            }
        }
    }

    pub fn sites(&self) -> Vec<Vec<usize>> {
        match self {
            Event::Site { site, .. } => vec![site.clone()],
            Event::Edge { edge, .. } => edge.to_vec(),
        }
    }
}

fn check_fit(p: &ModelParams, block: &BlockSpec, ev: &Event) -> Result<()> {
    if block.l != p.l || block.d() != p.d {
        return config("block does not match the model torus");
    }
    if ev.sites().iter().any(|s| s.len() != p.d || !block.contains(s)) {
        return config("event is not supported in the block");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    pub log_probability: f64,
    pub group_size: usize,
    pub exponent: f64,
    pub block_shape: BlockShape,
}

/// `‖E‖ = P(⋂_{τ∈T} τE)^{1/|T|}` by brute force. For an edge block the
/// exponent `1/|T|` equals `2/L^d`.
pub fn chessboard_seminorm_exact(ev: &Event, block: &BlockSpec, p: &ModelParams) -> Result<SeminormReport> {
    let r = verify_chessboard_inequality(&[(0, ev.clone())], block, p)?;
    let group = r.group_size;
    let lp = r.log_seminorms[0] * group as f64;
    Ok(SeminormReport {
        value: r.seminorms[0],
        log_probability: lp,
        group_size: group,
        exponent: 1.0 / group as f64,
        block_shape: block.shape(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChessboardReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub seminorms: Vec<f64>,
    pub log_seminorms: Vec<f64>,
    pub group_size: usize,
}

/// Tolerance of the exact chessboard check.
pub const MARGIN_TOL: f64 = 1e-12;

/// `Π_τ ‖E_τ‖ − P(⋂_{τ∈A} τE_τ)` for events indexed by group elements
/// (indices into [`orbit_group`]).
pub fn verify_chessboard_inequality(
    events: &[(usize, Event)],
    block: &BlockSpec,
    p: &ModelParams,
) -> Result<ChessboardReport> {
    let group = orbit_group(block)?;
    let torus = Torus::new(p.d, p.l);
    let mut patterns = Vec::with_capacity(events.len());
    for (t, ev) in events {
        if *t >= group.len() {
            return config(format!("group element {t} out of range (|T| = {})", group.len()));
        }
        check_fit(p, block, ev)?;
        patterns.push((*t, ev.resolve(&torus)?));
    }
    let k = patterns.len();
    let accs = enumerate_fold(
        p,
        || vec![LogAcc::new(); k + 2],
        |acc, v, w| {
            acc[0].add(w);
            if patterns.iter().all(|(t, pat)| pat.holds(v, &group[*t])) {
                acc[1].add(w);
            }
            for (e, (_, pat)) in patterns.iter().enumerate() {
                if group.iter().all(|g| pat.holds(v, g)) {
                    acc[e + 2].add(w);
                }
            }
        },
        |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
    )?;
    let lz = accs[0].value();
    let size = group.len() as f64;
    let log_seminorms: Vec<f64> = accs[2..].iter().map(|a| (a.value() - lz) / size).collect();
    let seminorms: Vec<f64> = log_seminorms.iter().map(|l| l.exp()).collect();
    let lhs = (accs[1].value() - lz).exp();
    let rhs: f64 = seminorms.iter().product();
    let margin = rhs - lhs;
    Ok(ChessboardReport {
        lhs,
        rhs,
        margin,
        pass: margin >= -MARGIN_TOL,
        seminorms,
        log_seminorms,
        group_size: group.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{Case, FreeEnergyKind, FreeEnergySpec, ScaleTable};
    use crate::spinmodel::Domain;

    pub(crate) fn atoms(n: usize, l: usize, d: usize, j2: f64) -> ModelParams {
        let top = (n - 1) as f64;
        let spec = FreeEnergySpec {
            kind: FreeEnergyKind::Tabulated {
                tables: vec![ScaleTable {
                    gamma: 1.0,
                    rho: vec![0.0, top.max(1.0)],
                    f: vec![Some(0.0), Some(0.0)],
                    stderr: None,
                }],
            },
            case: Case::HardCore,
            rho_cp: Some(top.max(1.0) / 2.0),
            rho_max: Some(top),
            alpha_max: None,
            beta: 1.0,
        };
        ModelParams { d, l, beta: 1.0, alpha: 0.0, j2, gamma: 1.0, lambda: 0.1, domain: Domain::Discrete, spec }
    }

    #[test]
    fn reflection_examples() {
        let r = ReflectionSpec { axis: 0, twice_p: 1, l: 4 };
        assert_eq!(reflect(&[0, 0], &r), vec![1, 0]);
        let r = ReflectionSpec { axis: 1, twice_p: 5, l: 6 };
        assert_eq!(reflect(&[3, 2], &r), vec![3, 3]);
    }

    #[test]
    fn group_sizes() {
        assert_eq!(orbit_group(&BlockSpec::vertex(vec![0, 0], 4)).unwrap().len(), 16);
        assert_eq!(orbit_group(&BlockSpec::vertex(vec![0], 2)).unwrap().len(), 2);
        let whole = BlockSpec { corner: vec![0, 0], sides: vec![1, 1], l: 4 };
        assert_eq!(orbit_group(&whole).unwrap().len(), 4);
        assert!(orbit_group(&BlockSpec { corner: vec![0], sides: vec![1], l: 6 }).is_err());
    }

    #[test]
    fn degenerate_events() {
        let p = atoms(2, 4, 1, 0.4);
        let b = BlockSpec::vertex(vec![0], 4);
        let all = chessboard_seminorm_exact(&Event::whole(vec![0]), &b, &p).unwrap();
        assert!((all.value - 1.0).abs() < 1e-14);
        let none = chessboard_seminorm_exact(&Event::Site { site: vec![0], set: vec![] }, &b, &p).unwrap();
        assert_eq!(none.value, 0.0);
    }

    #[test]
    fn edge_block_exponent() {
        let p = atoms(2, 4, 2, 0.4);
        let b = BlockSpec::edge(vec![0, 0], 0, 4);
        let ev = Event::Edge { edge: [vec![0, 0], vec![1, 0]], sets: [vec![[1.0, 1.0]], vec![[0.0, 0.0]]] };
        let r = chessboard_seminorm_exact(&ev, &b, &p).unwrap();
        assert_eq!(r.block_shape, BlockShape::Edge);
        assert_eq!(r.group_size, 8);
        assert!((r.exponent - 2.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn events_outside_block_are_rejected() {
        let p = atoms(2, 4, 1, 0.4);
        let b = BlockSpec::vertex(vec![0], 4);
        assert!(chessboard_seminorm_exact(&Event::whole(vec![1]), &b, &p).is_err());
    }
}
