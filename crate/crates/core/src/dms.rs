//! Rigorous checker for the DMS condition `(D M S) c < c`.
//!
//! All certified comparisons are exact rational comparisons. Irrational roots
//! enter only through [`nth_root`] enclosures, and every bound on the
//! integrand `f_j` is taken from the conservative end of its enclosure.

use std::collections::VecDeque;
use std::fmt;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;

use crate::branching::BranchingMatrix;
use crate::error::{parse_err, Error, Result};
use crate::exact::{format_rational, int, nth_root, parse_rational, ratio, to_decimal, to_f64, Rational, RationalInterval, ROOT_BITS};

/// Lower bound on every `s_j` required by the envelope path.
pub fn min_envelope_s() -> Rational {
    ratio(51, 50)
}

/// Lower bound on `lambda` required by the envelope path.
pub fn min_envelope_lambda() -> Rational {
    ratio(27, 16)
}

/// Cell budget for the envelope-free subdivision bound.
pub const MAX_SUBDIVISION_CELLS: usize = 1 << 17;

/// Number of second-difference probes in the concavity spot check.
pub const CONCAVITY_PROBES: usize = 1000;

/// Piecewise-linear upper envelope of `f_j`:
/// `B_lo` left of `alpha_lo`, `B_hi` right of `alpha_hi`, and in between the
/// minimum of the lines through `(alpha_lo, B_lo)` with slope `b_lo` and
/// through `(alpha_hi, B_hi)` with slope `b_hi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvelopeSpec {
    pub alpha_lo: Rational,
    pub alpha_hi: Rational,
    pub big_lo: Rational,
    pub big_hi: Rational,
    pub b_lo: Rational,
    pub b_hi: Rational,
}

impl EnvelopeSpec {
    /// Maximum of the envelope. Purely rational.
    pub fn max_value(&self) -> Rational {
        let mut best = self.big_lo.clone().max(self.big_hi.clone());
        let denom = &self.b_lo - &self.b_hi;
        if denom.is_positive() {
            let x = (&self.big_hi - &self.big_lo + &self.b_lo * &self.alpha_lo - &self.b_hi * &self.alpha_hi) / denom;
            if x > self.alpha_lo && x < self.alpha_hi {
                let y = &self.big_lo + &self.b_lo * (&x - &self.alpha_lo);
                best = best.max(y);
            }
        }
        best
    }

    /// Value of the envelope at `x` in floating point (for plots and sampling).
    pub fn value_f64(&self, x: f64) -> f64 {
        let (alo, ahi) = (to_f64(&self.alpha_lo), to_f64(&self.alpha_hi));
        if x <= alo {
            to_f64(&self.big_lo)
        } else if x >= ahi {
            to_f64(&self.big_hi)
        } else {
            let l1 = to_f64(&self.big_lo) + to_f64(&self.b_lo) * (x - alo);
            let l2 = to_f64(&self.big_hi) + to_f64(&self.b_hi) * (x - ahi);
            l1.min(l2)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DmsCertificate {
    pub lambda_star: Rational,
    pub s: Vec<Rational>,
    pub c: Vec<Rational>,
    /// `None` selects the subdivision bound for that type.
    pub envelopes: Vec<Option<EnvelopeSpec>>,
}

impl DmsCertificate {
    pub fn new(lambda_star: Rational, s: Vec<Rational>, c: Vec<Rational>) -> Self {
        let t = s.len();
        DmsCertificate { lambda_star, s, c, envelopes: vec![None; t] }
    }

    pub fn t(&self) -> usize {
        self.s.len()
    }

    /// Same certificate with `c` multiplied by `k > 0`.
    pub fn scaled(&self, k: &Rational) -> Self {
        let mut out = self.clone();
        for x in &mut out.c {
            *x = &*x * k;
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lambda = None;
        let mut s = None;
        let mut c = None;
        let mut envs: Vec<(usize, usize, EnvelopeSpec)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("cert") {
                let v = rest.trim().strip_prefix("lambda=").ok_or_else(|| parse_err(line_no, "expected `cert lambda=p/q`"))?;
                lambda = Some(parse_rational(v.trim()).map_err(|e| parse_err(line_no, e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("s:") {
                s = Some(parse_list(rest, line_no)?);
            } else if let Some(rest) = line.strip_prefix("c:") {
                c = Some(parse_list(rest, line_no)?);
            } else if let Some(rest) = line.strip_prefix("env") {
                let (idx, body) = rest.split_once(':').ok_or_else(|| parse_err(line_no, "expected `env j: ...`"))?;
                let j: usize = idx.trim().parse().map_err(|_| parse_err(line_no, "bad type index"))?;
                envs.push((line_no, j, parse_env(body, line_no)?));
            } else {
                return Err(parse_err(line_no, format!("unrecognised line `{line}`")));
            }
        }
        let lambda_star = lambda.ok_or_else(|| parse_err(1, "missing `cert lambda=` header"))?;
        let s = s.ok_or_else(|| parse_err(1, "missing `s:` line"))?;
        let c = c.ok_or_else(|| parse_err(1, "missing `c:` line"))?;
        if s.len() != c.len() {
            return Err(Error::Dimension(format!("s has {} entries, c has {}", s.len(), c.len())));
        }
        let mut envelopes = vec![None; s.len()];
        for (line_no, j, e) in envs {
            if j >= s.len() {
                return Err(parse_err(line_no, format!("type {j} out of range")));
            }
            if envelopes[j].is_some() {
                return Err(parse_err(line_no, format!("duplicate envelope for type {j}")));
            }
            envelopes[j] = Some(e);
        }
        Ok(DmsCertificate { lambda_star, s, c, envelopes })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[Rational]| v.iter().map(format_rational).collect::<Vec<_>>().join(" ");
        let mut out = format!("cert lambda={}\ns: {}\nc: {}\n", format_rational(&self.lambda_star), join(&self.s), join(&self.c));
        for (j, e) in self.envelopes.iter().enumerate() {
            if let Some(e) = e {
                out.push_str(&format!(
                    "env {j}: alo={} ahi={} Blo={} Bhi={} blo={} bhi={}\n",
                    format_rational(&e.alpha_lo),
                    format_rational(&e.alpha_hi),
                    format_rational(&e.big_lo),
                    format_rational(&e.big_hi),
                    format_rational(&e.b_lo),
                    format_rational(&e.b_hi)
                ));
            }
        }
        out
    }
}

fn parse_list(rest: &str, line_no: usize) -> Result<Vec<Rational>> {
    rest.split_whitespace().map(|w| parse_rational(w).map_err(|e| parse_err(line_no, e.to_string()))).collect()
}

fn parse_env(body: &str, line_no: usize) -> Result<EnvelopeSpec> {
    let mut vals: [Option<Rational>; 6] = Default::default();
    const KEYS: [&str; 6] = ["alo", "ahi", "Blo", "Bhi", "blo", "bhi"];
    for item in body.split_whitespace() {
        let (k, v) = item.split_once('=').ok_or_else(|| parse_err(line_no, format!("expected key=value, got `{item}`")))?;
        let pos = KEYS.iter().position(|&x| x == k).ok_or_else(|| parse_err(line_no, format!("unknown key `{k}`")))?;
        vals[pos] = Some(parse_rational(v).map_err(|e| parse_err(line_no, e.to_string()))?);
    }
    let mut it = vals.into_iter().enumerate().map(|(i, v)| v.ok_or_else(|| parse_err(line_no, format!("missing `{}`", KEYS[i]))));
    Ok(EnvelopeSpec {
        alpha_lo: it.next().unwrap()?,
        alpha_hi: it.next().unwrap()?,
        big_lo: it.next().unwrap()?,
        big_hi: it.next().unwrap()?,
        b_lo: it.next().unwrap()?,
        b_hi: it.next().unwrap()?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    /// `c_j - (D M S c)_j` with the certified `D`.
    pub per_type_slack: Vec<Rational>,
    /// Certified upper bounds on `D_jj` (on failure, possibly a lower bound
    /// that already violates the row).
    pub d_hat: Vec<Rational>,
    pub witness: Option<String>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.pass { "PASS" } else { "FAIL" })?;
        for (j, (sl, d)) in self.per_type_slack.iter().zip(&self.d_hat).enumerate() {
            writeln!(f, "type {j}: D={} slack={}", to_decimal(d, 10), to_decimal(sl, 12))?;
        }
        if let Some(w) = &self.witness {
            writeln!(f, "witness: {w}")?;
        }
        Ok(())
    }
}

/// Enclosure of `theta_j = (prod_l c_l^{M_jl})^{1/Delta_j} / (sum_l c_l s_l M_jl / Delta_j)`.
pub fn theta(m: &BranchingMatrix, c: &[Rational], s: &[Rational], j: usize) -> Result<RationalInterval> {
    let row = m.row(j);
    let delta: u32 = row.iter().sum();
    if delta == 0 {
        return Err(Error::Precondition(format!("type {j} has no children, theta is undefined")));
    }
    let mut prod = Rational::one();
    let mut sum = Rational::zero();
    for (l, &k) in row.iter().enumerate() {
        if k == 0 {
            continue;
        }
        prod *= num_traits::pow(c[l].clone(), k as usize);
        sum += &c[l] * &s[l] * int(k as i64);
    }
    let mean = sum / int(delta as i64);
    Ok(nth_root(&prod, delta, ROOT_BITS).div_scalar(&mean))
}

fn alpha_min(lambda: &Rational) -> Rational {
    Rational::one() / (Rational::one() + lambda)
}

/// Enclosure of `psi(alpha) = ((1-alpha)/(lambda alpha))^{1/Delta}`.
fn psi(lambda: &Rational, delta: u32, alpha: &Rational) -> RationalInterval {
    let x = (Rational::one() - alpha) / (lambda * alpha);
    nth_root(&x, delta, ROOT_BITS)
}

/// Enclosure of `f_j(alpha) = (1-alpha)(1 - theta psi)/(s - alpha)`.
pub fn f_enclosure(lambda: &Rational, s: &Rational, theta: &RationalInterval, delta: u32, alpha: &Rational) -> RationalInterval {
    let p = psi(lambda, delta, alpha);
    let one = Rational::one();
    let scale = (&one - alpha) / (s - alpha);
    let lo = &scale * (&one - &theta.hi * &p.hi);
    let hi = &scale * (&one - &theta.lo * &p.lo);
    RationalInterval::new(lo, hi)
}

/// Enclosure of `f_j'(alpha)`, using
/// `f' = [(1-s)(1-p) + p(s-alpha)/(Delta alpha)] / (s-alpha)^2` with
/// `p = theta psi(alpha)`; the numerator is increasing in `p`.
pub fn f_prime_enclosure(
    lambda: &Rational,
    s: &Rational,
    theta: &RationalInterval,
    delta: u32,
    alpha: &Rational,
) -> Result<RationalInterval> {
    let a0 = alpha_min(lambda);
    if alpha <= &a0 || alpha >= &Rational::one() {
        return Err(Error::Precondition(format!("derivative requested at alpha={} outside the open domain", format_rational(alpha))));
    }
    let p = psi(lambda, delta, alpha);
    let plo = &theta.lo * &p.lo;
    let phi = &theta.hi * &p.hi;
    let one = Rational::one();
    let d = s - alpha;
    let k = &d / (int(delta as i64) * alpha);
    let num = |p: &Rational| (&one - s) * (&one - p) + p * &k;
    let d2 = &d * &d;
    Ok(RationalInterval::new(num(&plo) / &d2, num(&phi) / &d2))
}

/// `f_j` in floating point.
pub fn f_value(lambda: f64, s: f64, theta: f64, delta: u32, alpha: f64) -> f64 {
    let psi = ((1.0 - alpha) / (lambda * alpha)).max(0.0).powf(1.0 / delta as f64);
    (1.0 - alpha) * (1.0 - theta * psi) / (s - alpha)
}

/// `f_j'` in floating point.
pub fn f_prime_value(lambda: f64, s: f64, theta: f64, delta: u32, alpha: f64) -> f64 {
    let p = theta * ((1.0 - alpha) / (lambda * alpha)).powf(1.0 / delta as f64);
    ((1.0 - s) * (1.0 - p) + p * (s - alpha) / (delta as f64 * alpha)) / ((s - alpha) * (s - alpha))
}

/// Floating-point estimate of `(argmax, max)` of `f_j` over `[1/(1+lambda), 1]`:
/// a coarse grid followed by golden-section refinement around the best point.
pub fn sup_estimate(lambda: f64, s: f64, theta: f64, delta: u32) -> (f64, f64) {
    const GRID: usize = 256;
    let a0 = 1.0 / (1.0 + lambda);
    let h = (1.0 - a0) / GRID as f64;
    let f = |a: f64| f_value(lambda, s, theta, delta, a);
    let mut best = (a0, f(a0));
    for k in 1..=GRID {
        let a = a0 + h * k as f64;
        let v = f(a);
        if v > best.1 {
            best = (a, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(a0), (best.0 + h).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let v = f(x);
    if v > best.1 {
        (x, v)
    } else {
        best
    }
}

fn concavity_spot_check(lambda: &Rational, s: &Rational, theta_lo: &Rational, delta: u32) -> Result<()> {
    let (l, sf, th) = (to_f64(lambda), to_f64(s), to_f64(theta_lo));
    let a0 = 1.0 / (1.0 + l);
    let step = (1.0 - a0) / (CONCAVITY_PROBES + 1) as f64;
    let h = 0.25 * step;
    for k in 1..=CONCAVITY_PROBES {
        let x = a0 + step * k as f64;
        let f = |a| f_value(l, sf, th, delta, a);
        let d2 = f(x - h) + f(x + h) - 2.0 * f(x);
        if d2 > 1e-13 {
            return Err(Error::Precondition(format!("concavity spot check failed at alpha={x:.9} (second difference {d2:e})")));
        }
    }
    Ok(())
}

fn envelope_err(which: &str, lhs: &Rational, rel: &str, rhs: &Rational) -> Error {
    Error::InvalidEnvelope(format!("{which}: {} {rel} {} does not hold", to_decimal(lhs, 15), to_decimal(rhs, 15)))
}

/// Certified upper bound on `sup f_j` over `[1/(1+lambda), 1]` from a
/// piecewise-linear envelope.
///
/// The bound is taken for `f_j` evaluated at `theta.lo`, which dominates the
/// integrand for every `theta` in the enclosure. Concavity of `f_j` is
/// assumed under `s > 51/50`, `lambda > 27/16`, `0 < theta <= 1`; those are
/// enforced and the shape is spot-checked.
pub fn envelope_bound_d(lambda: &Rational, s: &Rational, theta: &RationalInterval, delta: u32, env: &EnvelopeSpec) -> Result<Rational> {
    if delta == 0 {
        return Ok(Rational::zero());
    }
    if s <= &min_envelope_s() {
        return Err(Error::Precondition(format!("envelope path needs s > 51/50, got {}", format_rational(s))));
    }
    if lambda <= &min_envelope_lambda() {
        return Err(Error::Precondition(format!("envelope path needs lambda > 27/16, got {}", format_rational(lambda))));
    }
    if !theta.lo.is_positive() || theta.hi > Rational::one() {
        return Err(Error::Precondition(format!("theta enclosure {theta} is not inside (0,1]")));
    }
    let a0 = alpha_min(lambda);
    if !(env.alpha_lo > a0 && env.alpha_lo < env.alpha_hi && env.alpha_hi < Rational::one()) {
        return Err(Error::InvalidEnvelope(format!(
            "anchors must satisfy 1/(1+lambda) < alpha_lo < alpha_hi < 1, got {} and {}",
            format_rational(&env.alpha_lo),
            format_rational(&env.alpha_hi)
        )));
    }
    concavity_spot_check(lambda, s, &theta.lo, delta)?;

    let th = RationalInterval::point(theta.lo.clone());
    let f_lo = f_enclosure(lambda, s, &th, delta, &env.alpha_lo);
    if env.big_lo <= f_lo.hi {
        return Err(envelope_err("B_lo > f(alpha_lo)", &env.big_lo, ">", &f_lo.hi));
    }
    let f_hi = f_enclosure(lambda, s, &th, delta, &env.alpha_hi);
    if env.big_hi <= f_hi.hi {
        return Err(envelope_err("B_hi > f(alpha_hi)", &env.big_hi, ">", &f_hi.hi));
    }
    let d_lo = f_prime_enclosure(lambda, s, &th, delta, &env.alpha_lo)?;
    if env.b_lo <= d_lo.hi {
        return Err(envelope_err("b_lo > f'(alpha_lo)", &env.b_lo, ">", &d_lo.hi));
    }
    if !d_lo.lo.is_positive() {
        return Err(envelope_err("f'(alpha_lo) > 0", &d_lo.lo, ">", &Rational::zero()));
    }
    let d_hi = f_prime_enclosure(lambda, s, &th, delta, &env.alpha_hi)?;
    if env.b_hi >= d_hi.lo {
        return Err(envelope_err("b_hi < f'(alpha_hi)", &env.b_hi, "<", &d_hi.lo));
    }
    if !d_hi.hi.is_negative() {
        return Err(envelope_err("f'(alpha_hi) < 0", &d_hi.hi, "<", &Rational::zero()));
    }
    Ok(env.max_value())
}

/// Outcome of the envelope-free bound on `sup f_j` against a target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SupBound {
    /// Every cell bound is below the target; the payload is their maximum.
    Below(Rational),
    /// A certified point value at or above the target.
    Exceeds { alpha: Rational, value: Rational },
    /// Cell budget exhausted; the payload is the largest unresolved cell bound.
    Undecided(Rational),
}

/// Adaptive subdivision of `[1/(1+lambda), 1]`. On a cell `[a,b]` every
/// factor of `f_j` is monotone, so
/// `f_j <= (1-a)(1 - theta.lo psi(b))/(s-b)`. Needs no concavity.
pub fn subdivision_bound_d(
    lambda: &Rational,
    s: &Rational,
    theta: &RationalInterval,
    delta: u32,
    target: &Rational,
    max_cells: usize,
) -> SupBound {
    if delta == 0 {
        return SupBound::Below(Rational::zero());
    }
    let one = Rational::one();
    let a0 = alpha_min(lambda);
    let mut queue = VecDeque::new();
    const INITIAL: i64 = 64;
    let w = (&one - &a0) / int(INITIAL);
    for k in 0..INITIAL {
        let a = &a0 + &w * int(k);
        let b = if k + 1 == INITIAL { one.clone() } else { &a + &w };
        queue.push_back((a, b));
    }
    let mut best = Rational::zero();
    let mut evals = 0usize;
    while let Some((a, b)) = queue.pop_front() {
        evals += 1;
        let pb = psi(lambda, delta, &b);
        let ub = (&one - &a) * (&one - &theta.lo * &pb.lo) / (s - &b);
        if &ub < target {
            best = best.max(ub);
            continue;
        }
        let mid = (&a + &b) / int(2);
        let fm = f_enclosure(lambda, s, theta, delta, &mid);
        if &fm.lo >= target {
            return SupBound::Exceeds { alpha: mid, value: fm.lo };
        }
        if evals + queue.len() >= max_cells {
            return SupBound::Undecided(ub);
        }
        queue.push_back((a, mid.clone()));
        queue.push_back((mid, b));
    }
    SupBound::Below(best)
}

enum RowOutcome {
    Bound(Rational),
    Refuted(Rational, String),
    Invalid(Rational, String),
}

/// Verify `(D M S) c < c` componentwise in exact arithmetic.
pub fn check_dms(m: &BranchingMatrix, cert: &DmsCertificate) -> Result<Verdict> {
    let t = m.t();
    if cert.s.len() != t || cert.c.len() != t || cert.envelopes.len() != t {
        return Err(Error::Dimension(format!(
            "matrix has {t} types, certificate has s:{} c:{} env:{}",
            cert.s.len(),
            cert.c.len(),
            cert.envelopes.len()
        )));
    }
    let lambda = &cert.lambda_star;
    if !lambda.is_positive() {
        return Err(Error::Precondition("lambda must be positive".into()));
    }
    for j in 0..t {
        if cert.s[j] <= Rational::one() {
            return Err(Error::Precondition(format!("s_{j} = {} is not > 1", format_rational(&cert.s[j]))));
        }
        if !cert.c[j].is_positive() {
            return Err(Error::Precondition(format!("c_{j} = {} is not > 0", format_rational(&cert.c[j]))));
        }
    }
    let msc: Vec<Rational> = (0..t)
        .map(|j| m.row(j).iter().enumerate().fold(Rational::zero(), |acc, (l, &k)| acc + &cert.s[l] * &cert.c[l] * int(k as i64)))
        .collect();

    let rows: Vec<Result<RowOutcome>> = (0..t)
        .into_par_iter()
        .map(|j| {
            let delta: u32 = m.row(j).iter().sum();
            if delta == 0 {
                return Ok(RowOutcome::Bound(Rational::zero()));
            }
            let th = theta(m, &cert.c, &cert.s, j)?;
            if !th.lo.is_positive() || th.hi > Rational::one() {
                return Err(Error::Precondition(format!("theta_{j} enclosure {th} is not inside (0,1]")));
            }
            match &cert.envelopes[j] {
                Some(env) => match envelope_bound_d(lambda, &cert.s[j], &th, delta, env) {
                    Ok(d) => Ok(RowOutcome::Bound(d)),
                    Err(Error::InvalidEnvelope(msg)) => {
                        Ok(RowOutcome::Invalid(env.max_value(), format!("type {j}: envelope invalid, {msg}")))
                    }
                    Err(e) => Err(e),
                },
                None => {
                    let target = &cert.c[j] / &msc[j];
                    match subdivision_bound_d(lambda, &cert.s[j], &th, delta, &target, MAX_SUBDIVISION_CELLS) {
                        SupBound::Below(d) => Ok(RowOutcome::Bound(d)),
                        SupBound::Exceeds { alpha, value } => Ok(RowOutcome::Refuted(
                            value.clone(),
                            format!(
                                "type {j}: f({}) >= {} >= c_j/(MSc)_j = {}",
                                to_decimal(&alpha, 12),
                                to_decimal(&value, 15),
                                to_decimal(&target, 15)
                            ),
                        )),
                        SupBound::Undecided(d) => Ok(RowOutcome::Refuted(
                            d.clone(),
                            format!(
                                "type {j}: subdivision could not separate sup f from {} within {MAX_SUBDIVISION_CELLS} cells",
                                to_decimal(&target, 15)
                            ),
                        )),
                    }
                }
            }
        })
        .collect();

    let mut pass = true;
    let mut witness = None;
    let mut d_hat = Vec::with_capacity(t);
    let mut slack = Vec::with_capacity(t);
    for (j, r) in rows.into_iter().enumerate() {
        let (d, note) = match r? {
            RowOutcome::Bound(d) => (d, None),
            RowOutcome::Refuted(d, w) | RowOutcome::Invalid(d, w) => (d, Some(w)),
        };
        let lhs = &d * &msc[j];
        let sl = &cert.c[j] - &lhs;
        if note.is_some() || !sl.is_positive() {
            pass = false;
            if witness.is_none() {
                witness =
                    Some(note.unwrap_or_else(|| {
                        format!("type {j}: (DMSc)_j = {} >= c_j = {}", to_decimal(&lhs, 15), to_decimal(&cert.c[j], 15))
                    }));
            }
        }
        d_hat.push(d);
        slack.push(sl);
    }
    Ok(Verdict { pass, per_type_slack: slack, d_hat, witness })
}

/// A sampled value of `f_j` above the certified bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Falsification {
    pub type_index: usize,
    pub alpha: f64,
    pub value: f64,
    pub bound: f64,
}

/// Sample `f_j` at `samples` evenly spaced points of `[1/(1+lambda), 1]` for
/// each type and compare with `d_hat`. Passing `lambda` below the
/// certificate's exercises the "for all smaller lambda" claim.
pub fn falsify(
    m: &BranchingMatrix,
    cert: &DmsCertificate,
    d_hat: &[Rational],
    lambda: f64,
    samples: usize,
) -> Result<Option<Falsification>> {
    let t = m.t();
    let found: Vec<Option<Falsification>> = (0..t)
        .into_par_iter()
        .map(|j| -> Result<Option<Falsification>> {
            let delta: u32 = m.row(j).iter().sum();
            if delta == 0 {
                return Ok(None);
            }
            let th = theta(m, &cert.c, &cert.s, j)?.mid_f64();
            let s = to_f64(&cert.s[j]);
            let bound = to_f64(&d_hat[j]);
            let a0 = 1.0 / (1.0 + lambda);
            let n = samples.max(2);
            for k in 0..n {
                let a = a0 + (1.0 - a0) * k as f64 / (n - 1) as f64;
                let v = f_value(lambda, s, th, delta, a);
                if v > bound {
                    return Ok(Some(Falsification { type_index: j, alpha: a, value: v, bound }));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().next())
}

/// Tree threshold `Delta^Delta / (Delta-1)^(Delta+1)` for branching `Delta >= 2`.
pub fn lambda_c(delta: u32) -> Rational {
    assert!(delta >= 2);
    let d = int(delta as i64);
    let d1 = int(delta as i64 - 1);
    num_traits::pow(d, delta as usize) / num_traits::pow(d1, delta as usize + 1)
}

/// Enclosure of the unique `omega > 0` with `omega (1+omega)^Delta = lambda`,
/// by bisection on the increasing map, to width below `tol`.
pub fn omega(delta: u32, lambda: &Rational, tol: &Rational) -> RationalInterval {
    let map = |w: &Rational| w * num_traits::pow(Rational::one() + w, delta as usize);
    let mut lo = Rational::zero();
    let mut hi = lambda.clone();
    while &(&hi - &lo) >= tol {
        let mid = (&lo + &hi) / int(2);
        if &map(&mid) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    RationalInterval::new(lo, hi)
}

/// Single-type condition for `M = [Delta]`: true iff `lambda < lambda_c`.
/// The closed form is cross-checked against `Delta omega/(1+omega) < 1`.
pub fn check_single_type(delta: u32, lambda: &Rational) -> bool {
    if delta <= 1 {
        return true;
    }
    let closed = lambda < &lambda_c(delta);
    let w = omega(delta, lambda, &ratio(1, 1_000_000_000_000));
    let pivot = Rational::one() / int(delta as i64 - 1);
    let by_omega = if w.hi < pivot {
        true
    } else if w.lo > pivot {
        false
    } else {
        // pivot inside the enclosure: decide with the map at the pivot
        lambda < &(&pivot * num_traits::pow(Rational::one() + &pivot, delta as usize))
    };
    assert_eq!(closed, by_omega, "closed form and bisection disagree at Delta={delta}");
    closed
}
