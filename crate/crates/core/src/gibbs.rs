//! Partition functions of the hard-core model on finite graphs: exact
//! oracles, SAW-tree telescoping with certified brackets, and Glauber dynamics.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{Rational, RationalInterval};
use crate::lattice::{apply_pins, GenericGraph, LatticeRegion, Pin, PinSet};
use crate::sawtree::SawTree;

pub const BRUTE_FORCE_LIMIT: usize = 36;
pub const ENUMERATION_LIMIT: usize = 24;
pub const RNG_NAME: &str = "ChaCha8Rng";

fn pinned_occupied(pins: &PinSet) -> usize {
    pins.iter().filter(|&(_, p)| p == Pin::Occupied).count()
}

fn eval_poly(coeffs: &[u64], lambda: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * lambda + Rational::from_integer(BigInt::from(c));
    }
    acc
}

/// Number of independent sets of each size, by memoised vertex deletion.
pub fn independence_polynomial(g: &GenericGraph) -> Result<Vec<u64>> {
    if g.n() > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard { size: g.n(), limit: BRUTE_FORCE_LIMIT });
    }
    let nbr: Vec<u64> = (0..g.n()).map(|u| g.neighbors(u).iter().fold(0u64, |m, &v| m | 1 << v)).collect();
    let mut memo: HashMap<u64, Vec<u64>> = HashMap::new();
    let full = if g.n() == 64 { u64::MAX } else { (1u64 << g.n()) - 1 };
    Ok(poly_rec(full, &nbr, &mut memo))
}

fn poly_rec(set: u64, nbr: &[u64], memo: &mut HashMap<u64, Vec<u64>>) -> Vec<u64> {
    if set == 0 {
        return vec![1];
    }
    if let Some(p) = memo.get(&set) {
        return p.clone();
    }
    let v = set.trailing_zeros() as usize;
    let without = poly_rec(set & !(1 << v), nbr, memo);
    let with = poly_rec(set & !(1 << v) & !nbr[v], nbr, memo);
    let mut out = vec![0u64; without.len().max(with.len() + 1)];
    for (k, c) in without.iter().enumerate() {
        out[k] += c;
    }
    for (k, c) in with.iter().enumerate() {
        out[k + 1] += c;
    }
    memo.insert(set, out.clone());
    out
}

/// Exact `Z = sum of lambda^|sigma|` over independent sets consistent with `pins`.
pub fn brute_force_partition(g: &GenericGraph, lambda: &Rational, pins: &PinSet) -> Result<Rational> {
    if g.n() > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard { size: g.n(), limit: BRUTE_FORCE_LIMIT });
    }
    let reduced = apply_pins(g, pins)?;
    let poly = independence_polynomial(&reduced.graph)?;
    Ok(eval_poly(&poly, lambda) * num_traits::pow(lambda.clone(), pinned_occupied(pins)))
}

/// Same sum by visiting all `2^n` subsets.
pub fn enumerate_partition(g: &GenericGraph, lambda: &Rational, pins: &PinSet) -> Result<Rational> {
    let n = g.n();
    if n > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard { size: n, limit: ENUMERATION_LIMIT });
    }
    pins.validate(g)?;
    let mut counts = vec![0u64; n + 1];
    'subsets: for mask in 0u32..(1u32 << n) {
        for u in 0..n {
            let occ = mask >> u & 1 == 1;
            match pins.get(u) {
                Some(Pin::Occupied) if !occ => continue 'subsets,
                Some(Pin::Unoccupied) if occ => continue 'subsets,
                _ => {}
            }
            if occ && g.neighbors(u).iter().any(|&v| mask >> v & 1 == 1) {
                continue 'subsets;
            }
        }
        counts[mask.count_ones() as usize] += 1;
    }
    Ok(eval_poly(&counts, lambda))
}

/// Row-by-row transfer over the bounding box of a lattice region. Returns the
/// partition function with `lambda = p/q` scaled by `q^(free sites)`; `force`
/// restricts one free site without changing its weight.
fn transfer_scaled(region: &LatticeRegion, lambda: &Rational, pins: &PinSet, force: Option<(usize, Pin)>) -> Result<BigUint> {
    pins.validate(&region.to_graph())?;
    if region.is_empty() {
        return Ok(BigUint::one());
    }
    let p = lambda.numer().magnitude().clone();
    let q = lambda.denom().magnitude().clone();
    let (imin, imax) = region.sites().iter().fold((i64::MAX, i64::MIN), |(a, b), s| (a.min(s.0), b.max(s.0)));
    let (jmin, jmax) = region.sites().iter().fold((i64::MAX, i64::MIN), |(a, b), s| (a.min(s.1), b.max(s.1)));
    let width = (jmax - jmin + 1) as usize;
    if width > 63 {
        return Err(Error::Unsupported(format!("transfer width {width} exceeds 63")));
    }
    let mut states: HashMap<u64, BigUint> = HashMap::from([(0u64, BigUint::one())]);
    for i in imin..=imax {
        for j in jmin..=jmax {
            let col = (j - jmin) as usize;
            let bit = 1u64 << col;
            let Some(k) = region.index_of((i, j)) else {
                let mut next: HashMap<u64, BigUint> = HashMap::with_capacity(states.len());
                for (s, w) in states.drain() {
                    *next.entry(s & !bit).or_default() += w;
                }
                states = next;
                continue;
            };
            let pin = pins.get(k);
            let forced = match force {
                Some((v, f)) if v == k => Some(f),
                _ => None,
            };
            let allow_occ = pin != Some(Pin::Unoccupied) && forced != Some(Pin::Unoccupied);
            let allow_unocc = pin != Some(Pin::Occupied) && forced != Some(Pin::Occupied);
            let (w_occ, w_unocc) = if pin.is_some() { (BigUint::one(), BigUint::one()) } else { (p.clone(), q.clone()) };
            let mut next: HashMap<u64, BigUint> = HashMap::with_capacity(states.len() * 2);
            for (s, w) in states.drain() {
                let above = s & bit != 0;
                let left = col > 0 && s & (bit >> 1) != 0;
                if allow_unocc {
                    *next.entry(s & !bit).or_default() += &w * &w_unocc;
                }
                if allow_occ && !above && !left {
                    *next.entry(s | bit).or_default() += &w * &w_occ;
                }
            }
            states = next;
        }
    }
    Ok(states.into_values().sum())
}

fn free_sites(region: &LatticeRegion, pins: &PinSet) -> usize {
    region.len() - pins.len()
}

/// Exact partition function of a lattice region by transfer matrix.
pub fn transfer_partition(region: &LatticeRegion, lambda: &Rational, pins: &PinSet) -> Result<Rational> {
    let scaled = transfer_scaled(region, lambda, pins, None)?;
    let q = Rational::from_integer(lambda.denom().clone());
    let z = Rational::from_integer(BigInt::from(scaled)) / num_traits::pow(q, free_sites(region, pins));
    Ok(z * num_traits::pow(lambda.clone(), pinned_occupied(pins)))
}

/// Exact `Pr[v unoccupied]` on a lattice region by transfer matrix.
pub fn transfer_marginal(region: &LatticeRegion, v: usize, lambda: &Rational, pins: &PinSet) -> Result<Rational> {
    if v >= region.len() {
        return Err(Error::UnknownVertex(v));
    }
    if let Some(p) = pins.get(v) {
        return Ok(if p == Pin::Unoccupied { Rational::one() } else { Rational::zero() });
    }
    let total = transfer_scaled(region, lambda, pins, None)?;
    let unocc = transfer_scaled(region, lambda, pins, Some((v, Pin::Unoccupied)))?;
    Ok(Rational::new(BigInt::from(unocc), BigInt::from(total)))
}

/// Natural log of a positive rational.
pub fn ln_rational(r: &Rational) -> f64 {
    fn ln_big(x: &BigInt) -> f64 {
        let bits = x.bits();
        if bits <= 1000 {
            return x.to_f64().unwrap().ln();
        }
        let shift = bits - 64;
        (x >> shift as usize).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
    ln_big(r.numer()) - ln_big(r.denom())
}

#[derive(Clone, Debug)]
pub struct PartitionEstimate {
    pub log_value: f64,
    /// Rational bracket `z_lower <= Z <= z_upper`.
    pub z_lower: Rational,
    pub z_upper: Rational,
    /// `ln(z_upper / z_lower)`.
    pub relative_error_bound: f64,
    pub per_vertex_depths: Vec<usize>,
}

/// Depth needed for `gamma^L <= eps / (2n)`.
pub fn depth_for(n: usize, eps: f64, gamma_hint: f64) -> usize {
    let l = ((2.0 * n.max(1) as f64 / eps).ln() / (1.0 / gamma_hint).ln()).ceil();
    l.max(1.0) as usize
}

/// `Z = prod 1/alpha_i` with `alpha_i = Pr[v_i unoccupied | v_1..v_{i-1} unoccupied]`,
/// each factor bracketed by the two cap boundaries of a truncated SAW tree.
pub fn weitz_partition_estimate(g: &GenericGraph, lambda: &Rational, eps: f64, gamma_hint: f64) -> Result<PartitionEstimate> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if !(gamma_hint > 0.0 && gamma_hint < 1.0) {
        return Err(Error::Precondition("gamma hint must lie in (0,1)".into()));
    }
    let n = g.n();
    let depth = depth_for(n, eps, gamma_hint).min(n.saturating_sub(1).max(1));
    let factors: Vec<Result<RationalInterval>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut pins = PinSet::new();
            for v in 0..i {
                pins.insert(v, Pin::Unoccupied);
            }
            SawTree::build(g, i, depth, &pins)?.bracket(lambda)
        })
        .collect();
    let mut z_lower = Rational::one();
    let mut z_upper = Rational::one();
    let mut total = 0.0;
    let mut widest = (0usize, 0.0f64);
    for (i, f) in factors.into_iter().enumerate() {
        let f = f?;
        // ln(hi/lo) = ln(1 + width/lo)
        let w = if f.is_point() { 0.0 } else { (f.width() / &f.lo).to_f64().unwrap().ln_1p() };
        if w > widest.1 {
            widest = (i, w);
        }
        total += w;
        z_lower /= &f.hi;
        z_upper /= &f.lo;
    }
    if total > eps {
        return Err(Error::Bracket { vertex: widest.0, width: total, eps });
    }
    let log_value = 0.5 * (ln_rational(&z_lower) + ln_rational(&z_upper));
    Ok(PartitionEstimate { log_value, z_lower, z_upper, relative_error_bound: total, per_vertex_depths: vec![depth; n] })
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub occupancy: Vec<bool>,
    pub step_count: u64,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct GlauberRun {
    pub state: ChainState,
    /// Fraction of post-burn-in steps each vertex spent occupied.
    pub frequencies: Vec<f64>,
    /// Batch-means standard error of each frequency.
    pub std_errors: Vec<f64>,
    pub invariant_violations: u64,
}

pub const GLAUBER_BATCHES: u64 = 50;
const FULL_CHECK_PERIOD: u64 = 1 << 16;

fn is_independent(g: &GenericGraph, occ: &[bool]) -> bool {
    (0..g.n()).all(|u| !occ[u] || g.neighbors(u).iter().all(|&v| !occ[v]))
}

/// Single-site heat-bath dynamics; frequencies are averaged over steps
/// `burnin+1..=steps`.
pub fn glauber_run(g: &GenericGraph, lambda: &Rational, pins: &PinSet, steps: u64, burnin: u64, seed: u64) -> Result<GlauberRun> {
    pins.validate(g)?;
    if lambda.is_negative() {
        return Err(Error::Precondition("activity must be nonnegative".into()));
    }
    let n = g.n();
    let p_occ = (lambda / (Rational::one() + lambda)).to_f64().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occ: Vec<bool> = (0..n).map(|v| pins.get(v) == Some(Pin::Occupied)).collect();
    let free: Vec<bool> = (0..n).map(|v| pins.get(v).is_none()).collect();
    let measured = steps.saturating_sub(burnin);
    let batch_len = (measured / GLAUBER_BATCHES).max(1);
    let mut batch_sum = vec![0u64; n];
    let mut batch_means: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut total = vec![0u64; n];
    // an occupied vertex has been counted through step since[v]
    let mut since: Vec<u64> = vec![0; n];
    let mut violations = 0u64;
    let mut in_batch = 0u64;

    for t in 1..=steps {
        if n > 0 {
            let v = rng.random_range(0..n);
            if free[v] {
                let blocked = g.neighbors(v).iter().any(|&u| occ[u]);
                let new = !blocked && rng.random_bool(p_occ);
                if new != occ[v] {
                    if new {
                        since[v] = t - 1;
                    } else if t > burnin {
                        batch_sum[v] += t - 1 - since[v];
                    }
                    occ[v] = new;
                }
                if cfg!(debug_assertions) && occ[v] && g.neighbors(v).iter().any(|&u| occ[u]) {
                    violations += 1;
                }
            }
        }
        if t % FULL_CHECK_PERIOD == 0 && !is_independent(g, &occ) {
            violations += 1;
        }
        if t == burnin {
            for s in since.iter_mut() {
                *s = t;
            }
        }
        if t > burnin {
            in_batch += 1;
            if in_batch == batch_len || t == steps {
                for v in 0..n {
                    if occ[v] {
                        batch_sum[v] += t - since[v];
                        since[v] = t;
                    }
                    batch_means[v].push(batch_sum[v] as f64 / in_batch as f64);
                    total[v] += batch_sum[v];
                    batch_sum[v] = 0;
                }
                in_batch = 0;
            }
        }
    }
    let frequencies = total.iter().map(|&c| if measured == 0 { 0.0 } else { c as f64 / measured as f64 }).collect();
    let std_errors = batch_means.iter().map(|m| batch_std_error(m)).collect();
    Ok(GlauberRun {
        state: ChainState { occupancy: occ, step_count: steps, rng },
        frequencies,
        std_errors,
        invariant_violations: violations,
    })
}

fn batch_std_error(means: &[f64]) -> f64 {
    let b = means.len();
    if b < 2 {
        return f64::INFINITY;
    }
    let mu = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Independent chains, one per seed.
pub fn glauber_runs(g: &GenericGraph, lambda: &Rational, pins: &PinSet, steps: u64, burnin: u64, seeds: &[u64]) -> Result<Vec<GlauberRun>> {
    seeds.par_iter().map(|&s| glauber_run(g, lambda, pins, steps, burnin, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, ratio};

    #[test]
    fn small_partition_functions() {
        let edge = GenericGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(brute_force_partition(&edge, &int(1), &PinSet::new()).unwrap(), int(3));
        let c4 = GenericGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(brute_force_partition(&c4, &int(1), &PinSet::new()).unwrap(), int(7));
        let b1 = LatticeRegion::build_box(1);
        assert_eq!(transfer_partition(&b1, &int(1), &PinSet::new()).unwrap(), int(63));
        assert_eq!(enumerate_partition(&b1.to_graph(), &int(1), &PinSet::new()).unwrap(), int(63));
        assert_eq!(brute_force_partition(&b1.to_graph(), &int(1), &PinSet::new()).unwrap(), int(63));
    }

    #[test]
    fn three_routes_agree_with_pins() {
        let b = LatticeRegion::build_box(2);
        let g = b.to_graph();
        let mut pins = PinSet::new();
        pins.insert(0, Pin::Occupied);
        pins.insert(12, Pin::Unoccupied);
        pins.insert(24, Pin::Occupied);
        let lam = ratio(3, 2);
        let a = transfer_partition(&b, &lam, &pins).unwrap();
        let c = brute_force_partition(&g, &lam, &pins).unwrap();
        assert_eq!(a, c);
        let small = LatticeRegion::new((0..4).flat_map(|i| (0..5).map(move |j| (i, j)))).unwrap();
        let sg = small.to_graph();
        let mut sp = PinSet::new();
        sp.insert(7, Pin::Occupied);
        assert_eq!(enumerate_partition(&sg, &lam, &sp).unwrap(), transfer_partition(&small, &lam, &sp).unwrap());
    }

    #[test]
    fn size_guards() {
        let big = GenericGraph::empty(37);
        assert!(matches!(brute_force_partition(&big, &int(1), &PinSet::new()), Err(Error::SizeGuard { .. })));
        let mid = GenericGraph::empty(25);
        assert!(enumerate_partition(&mid, &int(1), &PinSet::new()).is_err());
        // many isolated vertices are cheap for the memoised route
        assert_eq!(
            brute_force_partition(&GenericGraph::empty(36), &int(1), &PinSet::new()).unwrap(),
            Rational::from_integer(BigInt::from(1u64 << 36))
        );
    }

    #[test]
    fn transfer_marginal_on_edge_region() {
        let r = LatticeRegion::new([(0, 0), (0, 1)]).unwrap();
        assert_eq!(transfer_marginal(&r, 0, &int(1), &PinSet::new()).unwrap(), ratio(2, 3));
    }

    #[test]
    fn weitz_single_vertex_exact() {
        let g = GenericGraph::empty(1);
        let est = weitz_partition_estimate(&g, &ratio(5, 2), 1e-6, 0.5).unwrap();
        assert_eq!(est.z_lower, ratio(7, 2));
        assert_eq!(est.z_upper, ratio(7, 2));
        assert_eq!(est.relative_error_bound, 0.0);
    }

    #[test]
    fn weitz_brackets_truncated_estimate() {
        let b = LatticeRegion::build_box(2);
        let g = b.to_graph();
        let exact = brute_force_partition(&g, &int(1), &PinSet::new()).unwrap();
        let est = weitz_partition_estimate(&g, &int(1), 1e-2, 0.5).unwrap();
        assert!(est.z_lower <= exact && exact <= est.z_upper);
        assert!(est.per_vertex_depths[0] < 24);
        assert!(est.relative_error_bound <= 1e-2);
        assert!(weitz_partition_estimate(&g, &int(1), 1e-9, 0.9).is_ok());
        // an optimistic decay rate truncates too early
        let err = weitz_partition_estimate(&g, &int(1), 1e-2, 0.3).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn glauber_two_state_chain() {
        let g = GenericGraph::empty(1);
        let run = glauber_run(&g, &int(1), &PinSet::new(), 1_000_000, 1000, 7).unwrap();
        assert!((run.frequencies[0] - 0.5).abs() < 0.01);
        assert_eq!(run.invariant_violations, 0);
    }

    #[test]
    fn glauber_edge() {
        let g = GenericGraph::new(2, &[(0, 1)]).unwrap();
        let run = glauber_run(&g, &int(1), &PinSet::new(), 1_000_000, 1000, 3).unwrap();
        for f in &run.frequencies {
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn glauber_respects_pins_and_seeds() {
        let g = GenericGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let mut pins = PinSet::new();
        pins.insert(0, Pin::Occupied);
        let a = glauber_run(&g, &int(2), &pins, 10_000, 0, 11).unwrap();
        let b = glauber_run(&g, &int(2), &pins, 10_000, 0, 11).unwrap();
        assert_eq!(a.state.occupancy, b.state.occupancy);
        assert_eq!(a.frequencies, b.frequencies);
        assert_eq!(a.frequencies[0], 1.0);
        assert_eq!(a.frequencies[1], 0.0);
        let runs = glauber_runs(&g, &int(2), &pins, 10_000, 0, &[11, 12]).unwrap();
        assert_eq!(runs[0].frequencies, a.frequencies);
        assert_ne!(runs[1].state.rng, a.state.rng);
    }
}
