//! Floating-point discovery of DMS certificates. Nothing found here is
//! trusted: every candidate is rationalized and handed to [`check_dms`].

use num_bigint::BigInt;
use num_traits::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::branching::BranchingMatrix;
use crate::dms::{
    check_dms, f_enclosure, f_prime_enclosure, min_envelope_lambda, min_envelope_s, sup_estimate, theta, DmsCertificate, EnvelopeSpec,
};
use crate::error::Result;
use crate::exact::{best_approximation, ceil_to, floor_to, from_f64_exact, to_f64, Rational, RationalInterval};

/// Lower clamp for `s_j` during the walk, just above the envelope precondition.
pub const S_FLOOR: f64 = 1.0205;
pub const S_CEIL: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub seed: u64,
    /// Total hill-climbing iterations, shared by the restarts.
    pub budget: usize,
    pub restarts: usize,
    pub step_initial: f64,
    pub step_min: f64,
    /// Geometric cooling applied to the step after each rejected move.
    pub cooling: f64,
    /// Power-iteration sweeps used to adapt `c` after each move.
    pub c_sweeps: usize,
    pub rationalize_denominator_cap: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 1,
            budget: 4000,
            restarts: 8,
            step_initial: 0.05,
            step_min: 1e-4,
            cooling: 0.99,
            c_sweeps: 40,
            rationalize_denominator_cap: 1_000_000,
        }
    }
}

/// Floating-point model of the DMS inequality for fixed `(lambda, M)`.
struct Model<'a> {
    m: &'a BranchingMatrix,
    lambda: f64,
    delta: Vec<u32>,
}

impl<'a> Model<'a> {
    fn new(m: &'a BranchingMatrix, lambda: f64) -> Self {
        let delta = m.rows().iter().map(|r| r.iter().sum()).collect();
        Model { m, lambda, delta }
    }

    /// `(D M S c)_j` with `D_jj` estimated by [`sup_estimate`].
    fn lhs(&self, s: &[f64], c: &[f64]) -> Vec<f64> {
        let logc: Vec<f64> = c.iter().map(|x| x.ln()).collect();
        (0..self.m.t())
            .map(|j| {
                let d = self.delta[j];
                if d == 0 {
                    return 0.0;
                }
                let row = self.m.row(j);
                let mut lp = 0.0;
                let mut msc = 0.0;
                for (l, &k) in row.iter().enumerate() {
                    if k > 0 {
                        lp += k as f64 * logc[l];
                        msc += k as f64 * s[l] * c[l];
                    }
                }
                let th = (lp / d as f64).exp() / (msc / d as f64);
                sup_estimate(self.lambda, s[j], th.min(1.0), d).1 * msc
            })
            .collect()
    }

    /// Adapt `c` by the damped fixed-point map `c <- sqrt(c y / max y)` and
    /// return `max_j y_j / c_j` (below 1 means the sampled condition holds).
    fn tune_c(&self, s: &[f64], c: &mut [f64], sweeps: usize) -> f64 {
        for _ in 0..sweeps {
            let y = self.lhs(s, c);
            let ymax = y.iter().cloned().fold(0.0, f64::max);
            if ymax <= 0.0 {
                return 0.0;
            }
            for (cj, yj) in c.iter_mut().zip(&y) {
                *cj = (*cj * yj.max(1e-12 * ymax) / ymax).sqrt();
            }
        }
        self.worst_ratio(s, c)
    }

    fn worst_ratio(&self, s: &[f64], c: &[f64]) -> f64 {
        self.lhs(s, c).iter().zip(c).map(|(y, c)| y / c).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
struct Candidate {
    ratio: f64,
    s: Vec<f64>,
    c: Vec<f64>,
}

fn climb(model: &Model, cfg: &SearchConfig, iters: usize, rng: &mut ChaCha8Rng, s0: Vec<f64>) -> Candidate {
    let t = s0.len();
    let mut s = s0;
    let mut c = vec![1.0; t];
    let mut ratio = model.tune_c(&s, &mut c, cfg.c_sweeps * 5);
    let mut step = cfg.step_initial;
    for _ in 0..iters {
        let ns: Vec<f64> = s
            .iter()
            .map(|x| {
                let z: f64 = rng.sample(StandardNormal);
                (x * (step * z).exp()).clamp(S_FLOOR, S_CEIL)
            })
            .collect();
        let mut nc = c.clone();
        let nr = model.tune_c(&ns, &mut nc, cfg.c_sweeps);
        if nr < ratio {
            ratio = nr;
            s = ns;
            c = nc;
        } else {
            step = (step * cfg.cooling).max(cfg.step_min);
        }
    }
    ratio = model.tune_c(&s, &mut c, cfg.c_sweeps * 5);
    Candidate { ratio, s, c }
}

fn rationalize(x: f64, cap: u64) -> Rational {
    best_approximation(&from_f64_exact(x), &BigInt::from(cap))
}

/// Fit a piecewise-linear envelope for each type around the sampled maximum
/// of `f_j`, with anchors `delta` to either side. All values are computed
/// from rigorous enclosures at the rational anchors and rounded outward.
/// Types with no children, or where the envelope preconditions fail, get no
/// envelope and fall back to subdivision in the checker.
pub fn fit_envelopes(
    m: &BranchingMatrix,
    lambda: &Rational,
    s: &[Rational],
    c: &[Rational],
    delta: f64,
    cap: u64,
) -> Result<Vec<Option<EnvelopeSpec>>> {
    let lf = to_f64(lambda);
    let a0 = Rational::one() / (Rational::one() + lambda);
    (0..m.t())
        .into_par_iter()
        .map(|j| {
            let d: u32 = m.row(j).iter().sum();
            if d == 0 || lambda <= &min_envelope_lambda() || s[j] <= min_envelope_s() {
                return Ok(None);
            }
            let th = theta(m, c, s, j)?;
            let thp = RationalInterval::point(th.lo.clone());
            let (amax, _) = sup_estimate(lf, to_f64(&s[j]), to_f64(&th.lo), d);
            let mut alo = floor_to(&from_f64_exact(amax - delta), cap);
            if alo <= a0 {
                alo = ceil_to(&a0, cap);
                if alo <= a0 {
                    alo += Rational::new(BigInt::one(), BigInt::from(cap));
                }
            }
            let mut ahi = ceil_to(&from_f64_exact(amax + delta), cap);
            let top = Rational::one() - Rational::new(BigInt::one(), BigInt::from(cap));
            if ahi > top {
                ahi = top;
            }
            if alo >= ahi {
                return Ok(None);
            }
            let pad = Rational::new(BigInt::one(), BigInt::from(cap) * BigInt::from(cap));
            let up = |x: &Rational| ceil_to(&(x + &pad), cap);
            let flo = f_enclosure(lambda, &s[j], &thp, d, &alo);
            let fhi = f_enclosure(lambda, &s[j], &thp, d, &ahi);
            let dlo = f_prime_enclosure(lambda, &s[j], &thp, d, &alo)?;
            let dhi = f_prime_enclosure(lambda, &s[j], &thp, d, &ahi)?;
            let inflate = Rational::new(BigInt::from(101), BigInt::from(100));
            let b_lo = if dlo.hi.is_positive() { up(&(&dlo.hi * &inflate)) } else { up(&dlo.hi) };
            let b_hi = if dhi.lo.is_negative() { floor_to(&(&dhi.lo * &inflate - &pad), cap) } else { floor_to(&(&dhi.lo - &pad), cap) };
            Ok(Some(EnvelopeSpec { alpha_lo: alo, alpha_hi: ahi, big_lo: up(&flo.hi), big_hi: up(&fhi.hi), b_lo, b_hi }))
        })
        .collect()
}

/// Build a certificate from floating-point `(s, c)` and check it rigorously,
/// trying a few anchor offsets. Returns the first passing certificate.
pub fn certify(m: &BranchingMatrix, lambda: &Rational, s: &[f64], c: &[f64], cap: u64) -> Result<Option<DmsCertificate>> {
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    let s_r: Vec<Rational> = s.iter().map(|&x| rationalize(x, cap)).collect();
    let c_r: Vec<Rational> = c.iter().map(|&x| rationalize(x / cmax, cap)).collect();
    if c_r.iter().any(|x| !x.is_positive()) || s_r.iter().any(|x| x <= &Rational::one()) {
        return Ok(None);
    }
    certify_exact(m, lambda, s_r, c_r, cap)
}

/// As [`certify`], for parameters that are already rational.
pub fn certify_exact(
    m: &BranchingMatrix,
    lambda: &Rational,
    s: Vec<Rational>,
    c: Vec<Rational>,
    cap: u64,
) -> Result<Option<DmsCertificate>> {
    for delta in [1e-4, 1e-3, 1e-2] {
        let envelopes = fit_envelopes(m, lambda, &s, &c, delta, cap)?;
        let cert = DmsCertificate { lambda_star: lambda.clone(), s: s.clone(), c: c.clone(), envelopes };
        if check_dms(m, &cert)?.pass {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

/// Search for a certificate at `lambda`. Deterministic given `cfg.seed`.
pub fn search_certificate(m: &BranchingMatrix, lambda: &Rational, cfg: &SearchConfig) -> Result<Option<DmsCertificate>> {
    search_certificate_from(m, lambda, cfg, None)
}

/// As [`search_certificate`], first trying the `(s, c)` of `start` and
/// using its `s` as the first restart's starting point.
pub fn search_certificate_from(
    m: &BranchingMatrix,
    lambda: &Rational,
    cfg: &SearchConfig,
    start: Option<&DmsCertificate>,
) -> Result<Option<DmsCertificate>> {
    let t = m.t();
    let cap = cfg.rationalize_denominator_cap;
    if let Some(st) = start {
        if st.t() == t {
            if let Some(cert) = certify_exact(m, lambda, st.s.clone(), st.c.clone(), cap)? {
                return Ok(Some(cert));
            }
        }
    }
    let model = Model::new(m, to_f64(lambda));
    let restarts = cfg.restarts.max(1);
    let iters = (cfg.budget / restarts).max(1);
    let mut candidates: Vec<(usize, Candidate)> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
            let s0: Vec<f64> = match (k, start) {
                (0, Some(st)) if st.t() == t => st.s.iter().map(|x| to_f64(x).clamp(S_FLOOR, S_CEIL)).collect(),
                (0, _) => vec![1.3; t],
                _ => (0..t)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        (1.3 * (0.1 * z).exp()).clamp(S_FLOOR, S_CEIL)
                    })
                    .collect(),
            };
            (k, climb(&model, cfg, iters, &mut rng, s0))
        })
        .collect();
    candidates.sort_by(|a, b| a.1.ratio.total_cmp(&b.1.ratio).then(a.0.cmp(&b.0)));
    for (_, cand) in candidates {
        if cand.ratio >= 1.0 {
            break;
        }
        if let Some(cert) = certify(m, lambda, &cand.s, &cand.c, cap)? {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

/// Best sampled value of `max_j (DMSc)_j / c_j` reachable by the walk; below 1
/// means the float model believes a certificate exists.
pub fn best_ratio(m: &BranchingMatrix, lambda: f64, cfg: &SearchConfig) -> f64 {
    let model = Model::new(m, lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    climb(&model, cfg, cfg.budget, &mut rng, vec![1.3; m.t()]).ratio
}

/// Largest `lambda` on the grid `lo + k tol` (up to `hi`) for which the search
/// returns a certificate, found by bisection. Monotonicity in `lambda` is
/// assumed for the bisection, so the result is a certified lower bound only.
/// `None` if `lo` itself cannot be certified.
pub fn max_lambda(
    m: &BranchingMatrix,
    lo: &Rational,
    hi: &Rational,
    tol: &Rational,
    cfg: &SearchConfig,
) -> Result<Option<(Rational, DmsCertificate)>> {
    assert!(lo < hi && tol.is_positive());
    if let Some(cert) = search_certificate(m, hi, cfg)? {
        return Ok(Some((hi.clone(), cert)));
    }
    let Some(mut best) = search_certificate(m, lo, cfg)? else {
        return Ok(None);
    };
    // grid indices: lo + k*tol, k in [a, b), with b the first index >= hi
    let steps = ((hi - lo) / tol).ceil().to_integer();
    let (mut a, mut b) = (BigInt::from(0), steps);
    let mut best_lambda = lo.clone();
    while &b - &a > BigInt::one() {
        let mid: BigInt = (&a + &b) / 2;
        let lam = lo + tol * Rational::from_integer(mid.clone());
        match search_certificate_from(m, &lam, cfg, Some(&best))? {
            Some(cert) => {
                best = cert;
                best_lambda = lam;
                a = mid;
            }
            None => b = mid,
        }
    }
    Ok(Some((best_lambda, best)))
}

/// Certificate without envelopes from decimal strings (converted exactly).
pub fn certificate_from_decimals(lambda: &str, s: &[&str], c: &[&str]) -> Result<DmsCertificate> {
    use crate::exact::parse_rational;
    let lambda = parse_rational(lambda)?;
    let s = s.iter().map(|x| parse_rational(x)).collect::<Result<Vec<_>>>()?;
    let c = c.iter().map(|x| parse_rational(x)).collect::<Result<Vec<_>>>()?;
    Ok(DmsCertificate::new(lambda, s, c))
}

/// Fit envelopes to fixed rational `(s, c)` without any search.
pub fn fit_certificate(m: &BranchingMatrix, base: &DmsCertificate, cap: u64) -> Result<Option<DmsCertificate>> {
    certify_exact(m, &base.lambda_star, base.s.clone(), base.c.clone(), cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::generate_matrix;
    use crate::exact::{int, ratio};

    fn n_matrix() -> BranchingMatrix {
        BranchingMatrix::new(vec![vec![0, 4, 0, 0], vec![0, 1, 2, 0], vec![0, 1, 1, 1], vec![0, 1, 1, 0]], 0).unwrap()
    }

    fn small_cfg() -> SearchConfig {
        SearchConfig { budget: 800, restarts: 4, ..SearchConfig::default() }
    }

    #[test]
    fn single_type_below_threshold() {
        let cert = search_certificate(&BranchingMatrix::single(3), &ratio(8, 5), &small_cfg()).unwrap().expect("certificate");
        assert!(check_dms(&BranchingMatrix::single(3), &cert).unwrap().pass);
    }

    #[test]
    fn n_at_lambda_1_8801() {
        let m = n_matrix();
        let lambda = ratio(18801, 10000);
        let cert = search_certificate(&m, &lambda, &small_cfg()).unwrap().expect("certificate");
        let reloaded = DmsCertificate::parse(&cert.to_text()).unwrap();
        assert_eq!(reloaded, cert);
        assert!(check_dms(&m, &reloaded).unwrap().pass);
        assert!(cert.envelopes.iter().all(|e| e.is_some()));
        // the same certificate re-checks at smaller lambda
        let lower = DmsCertificate { lambda_star: ratio(18, 10), ..cert.clone() };
        let again = search_certificate_from(&m, &lower.lambda_star, &small_cfg(), Some(&lower)).unwrap().unwrap();
        assert_eq!(again.s, cert.s);
    }

    #[test]
    fn n_far_above_fails() {
        let cfg = SearchConfig { budget: 200, restarts: 2, ..SearchConfig::default() };
        assert!(search_certificate(&n_matrix(), &ratio(39, 10), &cfg).unwrap().is_none());
    }

    #[test]
    fn deterministic() {
        let m = n_matrix();
        let cfg = SearchConfig { budget: 200, restarts: 2, ..SearchConfig::default() };
        let a = search_certificate(&m, &ratio(18, 10), &cfg).unwrap().unwrap();
        let b = search_certificate(&m, &ratio(18, 10), &cfg).unwrap().unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn zero_matrix_takes_hi() {
        let m = BranchingMatrix::single(0);
        let (lam, _) = max_lambda(&m, &int(1), &int(10), &int(1), &small_cfg()).unwrap().unwrap();
        assert_eq!(lam, int(10));
    }

    #[test]
    fn known_parameters_accept_fitted_envelopes() {
        let base =
            certificate_from_decimals("1.8801", &["1.040", "1.388", "1.353", "1.255"], &["0.266037", "0.100891", "0.100115", "0.0973861"])
                .unwrap();
        let cert = fit_certificate(&n_matrix(), &base, 1_000_000).unwrap().expect("fitted");
        assert!(cert.envelopes.iter().all(|e| e.is_some()));
    }

    #[test]
    fn pruned_growth_is_below_unpruned() {
        let p = generate_matrix(4, true).unwrap();
        let cfg = SearchConfig { budget: 100, restarts: 1, ..SearchConfig::default() };
        assert!(best_ratio(&p, 2.0, &cfg) < 1.0);
        assert!(best_ratio(&n_matrix(), 2.0, &cfg) > 1.0);
    }
}
