//! Branching matrices dominating the SAW trees of the square lattice.
//!
//! A walk is tracked by its longest suffix that is a proper prefix of some
//! self-avoiding polygon of length at most `max_cycle`. Those suffixes are the
//! raw types; the next step either closes a short cycle (the child is a fixed
//! leaf) or moves to another raw type. Raw types are then merged along the
//! lattice symmetries under which the whole automaton is invariant.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::lattice::{Dir, DirOrder, LatticeRegion, PinSet};
use crate::sawtree::SawTree;

pub const MAX_SUPPORTED_CYCLE: u32 = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingMatrix {
    entries: Vec<Vec<u32>>,
    root: usize,
    labels: Option<Vec<String>>,
}

impl BranchingMatrix {
    pub fn new(entries: Vec<Vec<u32>>, root: usize) -> Result<Self> {
        let t = entries.len();
        if t == 0 {
            return Err(Error::Dimension("matrix has no types".into()));
        }
        if entries.iter().any(|r| r.len() != t) {
            return Err(Error::Dimension("matrix is not square".into()));
        }
        if root >= t {
            return Err(Error::Dimension(format!("root type {root} out of range")));
        }
        Ok(BranchingMatrix { entries, root, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.t() {
            return Err(Error::Dimension("label count differs from type count".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// `[[d]]`: every vertex has `d` children of the same type.
    pub fn single(d: u32) -> Self {
        BranchingMatrix { entries: vec![vec![d]], root: 0, labels: None }
    }

    pub fn t(&self) -> usize {
        self.entries.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn entry(&self, i: usize, j: usize) -> u32 {
        self.entries[i][j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.entries[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.entries
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn row_sums(&self) -> Vec<u32> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn max_degree(&self) -> u32 {
        self.row_sums().into_iter().max().unwrap_or(0)
    }

    pub fn has_in_edges(&self, j: usize) -> bool {
        self.entries.iter().any(|r| r[j] > 0)
    }

    /// Largest eigenvalue estimate, by power iteration on `M + I`.
    pub fn perron_estimate(&self, iters: usize) -> f64 {
        let t = self.t();
        let mut v = vec![1.0f64; t];
        let mut rho = 0.0;
        for _ in 0..iters {
            let w: Vec<f64> = (0..t).map(|i| v[i] + (0..t).map(|j| self.entries[i][j] as f64 * v[j]).sum::<f64>()).collect();
            let m = w.iter().cloned().fold(0.0, f64::max);
            rho = m - 1.0;
            v = w.iter().map(|x| x / m).collect();
        }
        // max ratio on the final vector is the Collatz-Wielandt estimate
        let ratio = (0..t).map(|i| (0..t).map(|j| self.entries[i][j] as f64 * v[j]).sum::<f64>() / v[i]).fold(0.0, f64::max);
        if ratio.is_finite() {
            ratio
        } else {
            rho
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty matrix file"))?;
        let (t, root): (usize, usize) = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["branching", t, r] => {
                (t.parse().map_err(|_| parse_err(ln, "bad type count"))?, r.parse().map_err(|_| parse_err(ln, "bad root"))?)
            }
            _ => return Err(parse_err(ln, "expected `branching t root`")),
        };
        let mut entries = Vec::with_capacity(t);
        let mut labels: BTreeMap<usize, String> = BTreeMap::new();
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("label") {
                let (j, suffix) = rest.split_once(':').ok_or_else(|| parse_err(ln, "expected `label j: suffix`"))?;
                let j: usize = j.trim().parse().map_err(|_| parse_err(ln, "bad label index"))?;
                if j >= t {
                    return Err(parse_err(ln, "label index out of range"));
                }
                labels.insert(j, suffix.trim().to_string());
            } else {
                if entries.len() == t {
                    return Err(parse_err(ln, "too many rows"));
                }
                let row = line
                    .split_whitespace()
                    .map(|x| x.parse::<u32>().map_err(|_| parse_err(ln, "entries must be nonnegative integers")))
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != t {
                    return Err(parse_err(ln, format!("row has {} entries, expected {t}", row.len())));
                }
                entries.push(row);
            }
        }
        if entries.len() != t {
            return Err(parse_err(0, format!("expected {t} rows, found {}", entries.len())));
        }
        let m = BranchingMatrix::new(entries, root)?;
        if labels.is_empty() {
            Ok(m)
        } else if labels.len() == t {
            m.with_labels(labels.into_values().collect())
        } else {
            Err(parse_err(0, "labels must be given for every type or none"))
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("branching {} {}\n", self.t(), self.root);
        for r in &self.entries {
            let row: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        if let Some(labels) = &self.labels {
            for (j, l) in labels.iter().enumerate() {
                let _ = writeln!(s, "label {j}: {l}");
            }
        }
        s
    }
}

type Word = Vec<Dir>;

fn word_string(w: &[Dir]) -> String {
    w.iter().map(|d| d.to_char()).collect()
}

fn positions(w: &[Dir]) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push((0, 0));
    for d in w {
        let (x, y) = *out.last().unwrap();
        let (dx, dy) = d.delta();
        out.push((x + dx, y + dy));
    }
    out
}

/// Self-avoiding polygons of every even length `4..=max_cycle`, as step words
/// starting and ending at the origin.
fn polygon_words(max_cycle: usize) -> Vec<Word> {
    fn rec(w: &mut Word, pos: (i64, i64), seen: &mut HashSet<(i64, i64)>, len: usize, out: &mut Vec<Word>) {
        if w.len() == len {
            if pos == (0, 0) {
                out.push(w.clone());
            }
            return;
        }
        let remaining = len - w.len();
        if (pos.0.abs() + pos.1.abs()) as usize > remaining {
            return;
        }
        for d in Dir::ALL {
            let (dx, dy) = d.delta();
            let next = (pos.0 + dx, pos.1 + dy);
            let closing = next == (0, 0) && w.len() + 1 == len;
            if seen.contains(&next) && !closing {
                continue;
            }
            w.push(d);
            if !closing {
                seen.insert(next);
            }
            rec(w, next, seen, len, out);
            if !closing {
                seen.remove(&next);
            }
            w.pop();
        }
    }
    let mut out = Vec::new();
    for len in (4..=max_cycle).step_by(2) {
        let mut seen = HashSet::from([(0, 0)]);
        rec(&mut Vec::new(), (0, 0), &mut seen, len, &mut out);
    }
    out
}

/// First step of the cycle closed by the last step of `w`, if any cycle of
/// length `<= max_cycle` is closed.
fn closed_cycle_start(w: &[Dir], max_cycle: usize) -> Option<Dir> {
    let pos = positions(w);
    let n = w.len();
    (4..=max_cycle.min(n)).step_by(2).find(|&l| pos[n - l] == pos[n]).map(|l| w[n - l])
}

struct Automaton {
    /// Children of each state that are themselves states.
    children: HashMap<Word, Vec<Word>>,
    /// Some child closes a cycle whose leaf is fixed occupied.
    doomed: HashMap<Word, bool>,
}

fn explore(max_cycle: usize, order: DirOrder, enumeration: [Dir; 4]) -> Automaton {
    let mut prefixes: HashSet<Word> = HashSet::new();
    for w in polygon_words(max_cycle) {
        for k in 1..w.len() {
            prefixes.insert(w[..k].to_vec());
        }
    }
    let mut children = HashMap::new();
    let mut doomed = HashMap::new();
    let mut stack: Vec<Word> = vec![Vec::new()];
    while let Some(s) = stack.pop() {
        if children.contains_key(&s) {
            continue;
        }
        let mut kids = Vec::new();
        let mut occ = false;
        for d in enumeration {
            if s.last() == Some(&d.opposite()) {
                continue;
            }
            let mut w = s.clone();
            w.push(d);
            if let Some(first) = closed_cycle_start(&w, max_cycle) {
                // the leaf re-enters the cycle start from direction opposite(d)
                if order.rank(first) < order.rank(d.opposite()) {
                    occ = true;
                }
                continue;
            }
            let k = (0..w.len()).map(|a| &w[a..]).find(|suf| prefixes.contains(*suf)).expect("single steps are prefixes");
            kids.push(k.to_vec());
        }
        for k in &kids {
            if !children.contains_key(k) {
                stack.push(k.clone());
            }
        }
        doomed.insert(s.clone(), occ);
        children.insert(s, kids);
    }
    Automaton { children, doomed }
}

/// The eight symmetries of the square as permutations of `Dir::ALL`.
fn dihedral() -> Vec<[Dir; 4]> {
    let rot = |d: Dir| Dir::from_index((d.index() + 1) % 4);
    let refl = |d: Dir| match d {
        Dir::E => Dir::W,
        Dir::W => Dir::E,
        x => x,
    };
    let mut out = Vec::new();
    for r in 0..4 {
        for f in [false, true] {
            let mut m = [Dir::N; 4];
            for d in Dir::ALL {
                let mut x = if f { refl(d) } else { d };
                for _ in 0..r {
                    x = rot(x);
                }
                m[d.index()] = x;
            }
            out.push(m);
        }
    }
    out
}

fn apply(g: &[Dir; 4], w: &[Dir]) -> Word {
    w.iter().map(|d| g[d.index()]).collect()
}

fn word_key(w: &[Dir]) -> (usize, Vec<usize>) {
    (w.len(), w.iter().map(|d| d.index()).collect())
}

/// Branching matrix for walks avoiding cycles of length at most `max_cycle`
/// under the default neighbour order N > E > S > W.
pub fn generate_matrix(max_cycle: u32, prune: bool) -> Result<BranchingMatrix> {
    generate_matrix_with(max_cycle, prune, DirOrder::default(), Dir::ALL)
}

/// As [`generate_matrix`] with an explicit fixing order and direction enumeration order.
pub fn generate_matrix_with(max_cycle: u32, prune: bool, order: DirOrder, enumeration: [Dir; 4]) -> Result<BranchingMatrix> {
    if max_cycle < 4 || max_cycle % 2 == 1 || max_cycle > MAX_SUPPORTED_CYCLE {
        return Err(Error::Unsupported(format!("max cycle {max_cycle}: expected an even length in 4..={MAX_SUPPORTED_CYCLE}")));
    }
    let c = max_cycle as usize;
    let auto = explore(c, order, enumeration);

    let alive = |s: &Word| !(prune && auto.doomed[s]);
    let mut reach: HashSet<Word> = HashSet::new();
    let mut stack = vec![Vec::new()];
    while let Some(s) = stack.pop() {
        if !alive(&s) || !reach.insert(s.clone()) {
            continue;
        }
        stack.extend(auto.children[&s].iter().cloned());
    }
    let kids = |s: &Word| -> Vec<Word> { auto.children[s].iter().filter(|k| reach.contains(*k)).cloned().collect() };

    // symmetries under which the reduced automaton is invariant
    let mut sorted_states: Vec<&Word> = reach.iter().collect();
    sorted_states.sort_by_key(|w| word_key(w));
    let group: Vec<[Dir; 4]> = dihedral()
        .into_iter()
        .filter(|g| {
            sorted_states.iter().all(|s| {
                let gs = apply(g, s);
                if !reach.contains(&gs) {
                    return false;
                }
                let mut a: Vec<Word> = kids(s).iter().map(|k| apply(g, k)).collect();
                let mut b = kids(&gs);
                a.sort();
                b.sort();
                a == b
            })
        })
        .collect();

    let canon = |s: &Word| -> Word { group.iter().map(|g| apply(g, s)).min_by_key(|w| word_key(w)).unwrap() };
    let mut reps: Vec<Word> = sorted_states.iter().map(|s| canon(s)).collect::<HashSet<_>>().into_iter().collect();

    // edges still needed to close the shortest cycle through each type
    let polys = polygon_words(c);
    let need = |s: &Word| -> usize {
        polys.iter().filter(|p| p.len() > s.len() && p[..s.len()] == s[..]).map(|p| p.len() - s.len()).min().unwrap_or(usize::MAX)
    };
    reps.sort_by_key(|w| (!w.is_empty(), std::cmp::Reverse(need(w)), word_key(w)));
    let index: HashMap<&Word, usize> = reps.iter().enumerate().map(|(k, w)| (w, k)).collect();

    let t = reps.len();
    let mut entries = vec![vec![0u32; t]; t];
    for (a, rep) in reps.iter().enumerate() {
        for k in kids(rep) {
            entries[a][index[&canon(&k)]] += 1;
        }
    }
    let labels = reps.iter().map(|w| word_string(w)).collect();
    BranchingMatrix::new(entries, 0)?.with_labels(labels)
}

/// Result of checking that the truncated SAW tree of a box is dominated by a matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domination {
    pub holds: bool,
    /// Walk from the origin (as N/E/S/W steps) to a vertex that admits no type.
    pub counterexample: Option<String>,
}

/// Decide whether `T_saw(build_box(depth), origin)` truncated at `depth` admits a
/// type assignment, rooted at the matrix root type, in which a vertex of type
/// `i` has at most `M[i][j]` children of type `j`.
pub fn verify_domination(m: &BranchingMatrix, depth: usize) -> Result<Domination> {
    let region = LatticeRegion::build_box(depth as u32);
    let g = region.to_graph();
    let origin = region.index_of((0, 0)).unwrap();
    let tree = SawTree::build(&g, origin, depth.max(1), &PinSet::new())?;
    let t = m.t();
    let ids: Vec<u32> = tree.live_ids().collect();
    let mut feasible: HashMap<u32, Vec<bool>> = HashMap::new();
    for &id in ids.iter().rev() {
        let node = tree.node(id);
        let f: Vec<bool> = if node.children.is_empty() {
            vec![true; t]
        } else {
            let opts: Vec<&Vec<bool>> = node.children.iter().map(|c| &feasible[c]).collect();
            (0..t).map(|i| assignable(m.row(i), &opts)).collect()
        };
        feasible.insert(id, f);
    }
    let root_ok = feasible[&0][m.root()];
    if root_ok {
        return Ok(Domination { holds: true, counterexample: None });
    }
    // shallowest vertex with no feasible type, else the root
    let bad = ids.iter().filter(|id| feasible[id].iter().all(|&x| !x)).min_by_key(|&&id| tree.node(id).depth).copied().unwrap_or(0);
    let walk = tree.walk_to(bad);
    let steps: String = walk
        .windows(2)
        .map(|p| {
            let (a, b) = (region.site(p[0]), region.site(p[1]));
            Dir::ALL.into_iter().find(|d| d.delta() == (b.0 - a.0, b.1 - a.1)).unwrap().to_char()
        })
        .collect();
    Ok(Domination { holds: false, counterexample: Some(steps) })
}

/// Can each child take a distinct slot, child `c` only in types allowed by
/// `opts[c]`, with at most `row[j]` children of type `j`?
fn assignable(row: &[u32], opts: &[&Vec<bool>]) -> bool {
    let mut used = vec![0u32; row.len()];
    let mut owner: Vec<Vec<usize>> = vec![Vec::new(); row.len()];
    fn augment(c: usize, row: &[u32], opts: &[&Vec<bool>], used: &mut [u32], owner: &mut [Vec<usize>], seen: &mut [bool]) -> bool {
        for j in 0..row.len() {
            if row[j] == 0 || !opts[c][j] || seen[j] {
                continue;
            }
            seen[j] = true;
            if used[j] < row[j] {
                used[j] += 1;
                owner[j].push(c);
                return true;
            }
            for k in 0..owner[j].len() {
                let other = owner[j][k];
                if augment(other, row, opts, used, owner, seen) {
                    owner[j][k] = c;
                    return true;
                }
            }
        }
        false
    }
    for c in 0..opts.len() {
        let mut seen = vec![false; row.len()];
        if !augment(c, row, opts, &mut used, &mut owner, &mut seen) {
            return false;
        }
    }
    true
}
