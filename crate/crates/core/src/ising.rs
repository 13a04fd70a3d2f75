//! Ising model: the `tanh(beta) M c < c` certificate, Perron bounds, and the
//! ratio recursion on self-avoiding-walk trees.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::branching::BranchingMatrix;
use crate::error::{parse_err, Error, Result};
use crate::exact::{
    atanh, best_approximation, format_rational, from_f64_exact, int, parse_rational, ratio, to_decimal, Rational, RationalInterval,
};
use crate::lattice::{GenericGraph, Pin, PinSet};
use crate::sawtree::{LeafFixing, SawTree};

/// Largest graph handled by [`ising_brute_force_marginal`].
pub const ISING_BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Plus,
    Minus,
}

impl Spin {
    pub fn value(self) -> i32 {
        match self {
            Spin::Plus => 1,
            Spin::Minus => -1,
        }
    }

    /// Tree leaves are fixed with the hard-core rule; an occupied leaf is the
    /// spin in the numerator of the ratio, which is minus here.
    pub fn from_pin(p: Pin) -> Spin {
        match p {
            Pin::Occupied => Spin::Minus,
            Pin::Unoccupied => Spin::Plus,
        }
    }

    pub fn to_pin(self) -> Pin {
        match self {
            Spin::Minus => Pin::Occupied,
            Spin::Plus => Pin::Unoccupied,
        }
    }
}

pub type SpinPins = BTreeMap<usize, Spin>;

pub fn spin_pins_to_pinset(pins: &SpinPins) -> PinSet {
    let mut out = PinSet::new();
    for (&v, &s) in pins {
        out.insert(v, s.to_pin());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsingCertificate {
    pub tanh_beta_star: Rational,
    pub c: Vec<Rational>,
}

impl IsingCertificate {
    pub fn parse(text: &str) -> Result<Self> {
        let mut tanh = None;
        let mut c = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("ising tanh=") {
                tanh = Some(parse_rational(rest.trim()).map_err(|e| parse_err(ln + 1, e.to_string()))?);
            } else if let Some(rest) = line.strip_prefix("c:") {
                c = Some(
                    rest.split_whitespace()
                        .map(|w| parse_rational(w).map_err(|e| parse_err(ln + 1, e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                );
            } else {
                return Err(parse_err(ln + 1, format!("unrecognised line `{line}`")));
            }
        }
        Ok(IsingCertificate {
            tanh_beta_star: tanh.ok_or_else(|| parse_err(1, "missing `ising tanh=` header"))?,
            c: c.ok_or_else(|| parse_err(1, "missing `c:` line"))?,
        })
    }

    pub fn to_text(&self) -> String {
        let c: Vec<String> = self.c.iter().map(format_rational).collect();
        format!("ising tanh={}\nc: {}\n", format_rational(&self.tanh_beta_star), c.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsingVerdict {
    pub pass: bool,
    /// `c_j - tanh (M c)_j`.
    pub per_type_slack: Vec<Rational>,
    /// Enclosure of `atanh(tanh_beta_star)`.
    pub beta_star: RationalInterval,
    pub witness: Option<String>,
}

impl fmt::Display for IsingVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.pass { "PASS" } else { "FAIL" })?;
        writeln!(f, "beta* in {}", self.beta_star)?;
        if let Some(w) = &self.witness {
            writeln!(f, "witness: {w}")?;
        }
        Ok(())
    }
}

fn beta_tolerance() -> Rational {
    ratio(1, 1_000_000_000_000)
}

/// Verify `tanh_beta_star (M c)_j < c_j` for all `j`, exactly.
pub fn check_ising(m: &BranchingMatrix, cert: &IsingCertificate) -> Result<IsingVerdict> {
    let t = m.t();
    if cert.c.len() != t {
        return Err(Error::Dimension(format!("matrix has {t} types, c has {}", cert.c.len())));
    }
    let th = &cert.tanh_beta_star;
    if !th.is_positive() || th >= &Rational::one() {
        return Err(Error::Precondition(format!("tanh beta* = {} is not in (0,1)", format_rational(th))));
    }
    if let Some(j) = cert.c.iter().position(|x| !x.is_positive()) {
        return Err(Error::Precondition(format!("c_{j} is not positive")));
    }
    let mut pass = true;
    let mut witness = None;
    let mut slack = Vec::with_capacity(t);
    for j in 0..t {
        let mc = m.row(j).iter().enumerate().fold(Rational::zero(), |acc, (l, &k)| acc + &cert.c[l] * int(k as i64));
        let lhs = th * &mc;
        let sl = &cert.c[j] - &lhs;
        if !sl.is_positive() {
            pass = false;
            if witness.is_none() {
                witness = Some(format!("type {j}: tanh*(Mc)_j = {} >= c_j = {}", to_decimal(&lhs, 15), to_decimal(&cert.c[j], 15)));
            }
        }
        slack.push(sl);
    }
    Ok(IsingVerdict { pass, per_type_slack: slack, beta_star: atanh(th, &beta_tolerance()), witness })
}

/// Types that take part in the spectral block: every type except a root
/// without in-edges.
fn block(m: &BranchingMatrix) -> Vec<usize> {
    (0..m.t()).filter(|&j| j != m.root() || m.has_in_edges(j)).collect()
}

/// Collatz-Wielandt bound from power iteration on `M + I` over the recurrent
/// block. Returns `(rho_hat, c)` with `(M c)_j <= rho_hat c_j` on the block;
/// an excluded root gets `c_root = (M c)_root / rho_hat`, so
/// [`check_ising`] passes for every `tanh < 1/rho_hat`.
pub fn perron_certificate(m: &BranchingMatrix, iters: usize) -> (Rational, Vec<Rational>) {
    let t = m.t();
    let b = block(m);
    let mut v = vec![1.0f64; t];
    for _ in 0..iters.max(1) {
        let mut w = vec![0.0; t];
        for &j in &b {
            w[j] = v[j] + b.iter().map(|&l| m.entry(j, l) as f64 * v[l]).sum::<f64>();
        }
        let mx = b.iter().map(|&j| w[j]).fold(0.0, f64::max);
        if mx <= 0.0 {
            break;
        }
        for &j in &b {
            v[j] = w[j] / mx;
        }
    }
    let cap = BigInt::from(1_000_000_000_000u64);
    let floor = ratio(1, 1_000_000_000_000);
    let mut c = vec![Rational::one(); t];
    for &j in &b {
        let r = best_approximation(&from_f64_exact(v[j]), &cap);
        c[j] = if r < floor { floor.clone() } else { r };
    }
    let mc = |c: &[Rational], j: usize| m.row(j).iter().enumerate().fold(Rational::zero(), |acc, (l, &k)| acc + &c[l] * int(k as i64));
    let rho = b.iter().map(|&j| mc(&c, j) / &c[j]).max().unwrap_or_else(Rational::zero);
    for j in 0..t {
        if !b.contains(&j) {
            let x = mc(&c, j);
            c[j] = if rho.is_positive() && x.is_positive() { x / &rho } else { Rational::one() };
        }
    }
    (rho, c)
}

/// Enclosure of `atanh(1/rho)`, the largest `beta*` certified by a Perron
/// bound `rho > 1`.
pub fn beta_star_from_rho(rho: &Rational) -> Option<RationalInterval> {
    if rho <= &Rational::one() {
        return None;
    }
    Some(atanh(&(Rational::one() / rho), &beta_tolerance()))
}

/// Root marginal `Pr[root = +]` from the ratio recursion
/// `theta = prod (e^{2 beta} theta_i + 1)/(theta_i + e^{2 beta})` with
/// `theta = Pr[-]/Pr[+]`. The tree must be built with [`LeafFixing::Keep`]
/// and must not be truncated.
pub fn ising_tree_ratio(tree: &SawTree, beta: f64) -> Result<f64> {
    if tree.is_truncated() {
        return Err(Error::TruncatedFree(tree.depth_cap()));
    }
    let e2 = (2.0 * beta).exp();
    // (minus, plus) weights, normalised to sum 1 at every node
    let mut vals: Vec<(f64, f64)> = vec![(0.0, 0.0); tree.node_capacity()];
    for id in tree.live_ids().rev() {
        let node = tree.node(id);
        let val = match node.pin.map(Spin::from_pin) {
            Some(Spin::Minus) => (1.0, 0.0),
            Some(Spin::Plus) => (0.0, 1.0),
            None => {
                let (mut wm, mut wp) = (1.0, 1.0);
                for &c in &node.children {
                    let (m, p) = vals[c as usize];
                    wm *= e2 * m + p;
                    wp *= m + e2 * p;
                    let s = wm + wp;
                    wm /= s;
                    wp /= s;
                }
                (wm, wp)
            }
        };
        vals[id as usize] = val;
    }
    let (m, p) = vals[0];
    Ok(p / (m + p))
}

/// `Pr[root = +]` on the SAW tree of `g` from `v`, built untruncated.
pub fn ising_saw_marginal(g: &GenericGraph, v: usize, beta: f64, pins: &SpinPins) -> Result<f64> {
    let tree = SawTree::build_with(g, v, g.n().max(1), &spin_pins_to_pinset(pins), LeafFixing::Keep)?;
    ising_tree_ratio(&tree, beta)
}

/// Exact-summation `Pr[sigma_v = -1]` for `mu(sigma) ~ exp(beta sum_{ij} sigma_i sigma_j)`.
pub fn ising_brute_force_marginal(g: &GenericGraph, v: usize, beta: f64, pins: &SpinPins) -> Result<f64> {
    let n = g.n();
    if n > ISING_BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard { size: n, limit: ISING_BRUTE_FORCE_LIMIT });
    }
    if v >= n {
        return Err(Error::UnknownVertex(v));
    }
    if let Some((&u, _)) = pins.iter().find(|(&u, _)| u >= n) {
        return Err(Error::UnknownVertex(u));
    }
    let edges = g.edges();
    let free: Vec<usize> = (0..n).filter(|u| !pins.contains_key(u)).collect();
    let mut spins = vec![1i32; n];
    for (&u, &s) in pins {
        spins[u] = s.value();
    }
    // shift the exponent by the maximum possible energy to avoid overflow
    let shift = beta.abs() * edges.len() as f64;
    let (mut zm, mut z) = (0.0, 0.0);
    for mask in 0u64..(1u64 << free.len()) {
        for (k, &u) in free.iter().enumerate() {
            spins[u] = if mask >> k & 1 == 1 { -1 } else { 1 };
        }
        let e: i32 = edges.iter().map(|&(a, b)| spins[a] * spins[b]).sum();
        let w = (beta * e as f64 - shift).exp();
        z += w;
        if spins[v] == -1 {
            zm += w;
        }
    }
    Ok(zm / z)
}
