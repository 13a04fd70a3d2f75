//! Finite regions of the square lattice, small general graphs, neighbour
//! orderings and pinned boundary conditions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::N => (0, 1),
            Dir::E => (1, 0),
            Dir::S => (0, -1),
            Dir::W => (-1, 0),
        }
    }

    pub fn opposite(self) -> Dir {
        match self {
            Dir::N => Dir::S,
            Dir::E => Dir::W,
            Dir::S => Dir::N,
            Dir::W => Dir::E,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Dir {
        Dir::ALL[i]
    }

    pub fn to_char(self) -> char {
        match self {
            Dir::N => 'N',
            Dir::E => 'E',
            Dir::S => 'S',
            Dir::W => 'W',
        }
    }

    pub fn from_char(c: char) -> Option<Dir> {
        match c {
            'N' => Some(Dir::N),
            'E' => Some(Dir::E),
            'S' => Some(Dir::S),
            'W' => Some(Dir::W),
            _ => None,
        }
    }
}

/// Strict total order on the four directions, stored highest first.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct DirOrder([Dir; 4]);

impl Default for DirOrder {
    /// N > E > S > W.
    fn default() -> Self {
        DirOrder([Dir::N, Dir::E, Dir::S, Dir::W])
    }
}

impl DirOrder {
    pub fn new(order: [Dir; 4]) -> Result<Self> {
        let mut seen = [false; 4];
        for d in order {
            if std::mem::replace(&mut seen[d.index()], true) {
                return Err(Error::InvalidGraph(format!("direction {d:?} repeated in ordering")));
            }
        }
        Ok(DirOrder(order))
    }

    /// 3 for the highest direction, 0 for the lowest.
    pub fn rank(&self, d: Dir) -> u8 {
        let pos = self.0.iter().position(|&x| x == d).unwrap();
        3 - pos as u8
    }

    pub fn descending(&self) -> [Dir; 4] {
        self.0
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pin {
    Occupied,
    Unoccupied,
}

impl Pin {
    pub fn parse(s: &str) -> Option<Pin> {
        match s {
            "occ" => Some(Pin::Occupied),
            "unocc" => Some(Pin::Unoccupied),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pin::Occupied => "occ",
            Pin::Unoccupied => "unocc",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

pub type Site = (i64, i64);

/// Induced subgraph of Z^2 on a finite site set. Sites are kept sorted by
/// `(i, j)`, which is the canonical (row-major) vertex order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeRegion {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    orders: Vec<DirOrder>,
}

impl LatticeRegion {
    pub fn new(sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort_unstable();
        if let Some(w) = sites.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!("duplicate site {:?}", w[0])));
        }
        let index = sites.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let orders = vec![DirOrder::default(); sites.len()];
        Ok(LatticeRegion { sites, index, orders })
    }

    /// Sites with `|i| <= radius` and `|j| <= radius`.
    pub fn build_box(radius: u32) -> Self {
        let r = radius as i64;
        let sites = (-r..=r).flat_map(|i| (-r..=r).map(move |j| (i, j)));
        LatticeRegion::new(sites).expect("box sites are distinct")
    }

    pub fn set_order(&mut self, site: Site, order: DirOrder) -> Result<()> {
        let k = self.index_of(site).ok_or_else(|| Error::InvalidGraph(format!("no site {site:?}")))?;
        self.orders[k] = order;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, k: usize) -> Site {
        self.sites[k]
    }

    pub fn index_of(&self, site: Site) -> Option<usize> {
        self.index.get(&site).copied()
    }

    pub fn order(&self, k: usize) -> DirOrder {
        self.orders[k]
    }

    pub fn neighbor(&self, k: usize, d: Dir) -> Option<usize> {
        let (i, j) = self.sites[k];
        let (di, dj) = d.delta();
        self.index_of((i + di, j + dj))
    }

    /// Present neighbours of site `k`, highest-priority direction first.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = (Dir, usize)> + '_ {
        self.orders[k].descending().into_iter().filter_map(move |d| self.neighbor(k, d).map(|v| (d, v)))
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors(k).count()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.len()).map(|k| self.degree(k)).sum::<usize>() / 2
    }

    /// Radius `r` if the region is exactly `build_box(r)`.
    pub fn box_radius(&self) -> Option<u32> {
        let r = self.sites.iter().map(|&(i, j)| i.abs().max(j.abs())).max()?;
        let side = (2 * r + 1) as usize;
        (self.len() == side * side).then_some(r as u32)
    }

    pub fn to_graph(&self) -> GenericGraph {
        let adj = (0..self.len()).map(|k| self.neighbors(k).map(|(_, v)| v).collect()).collect();
        GenericGraph { adj }
    }

    /// Translate site-keyed pins into a vertex-keyed [`PinSet`].
    pub fn pins_from_sites(&self, pins: &BTreeMap<Site, Pin>) -> Result<PinSet> {
        let mut out = PinSet::new();
        for (&site, &p) in pins {
            let k = self.index_of(site).ok_or_else(|| Error::InvalidPins(format!("site {site:?} not in region")))?;
            out.insert(k, p);
        }
        Ok(out)
    }

    /// Boundary of a box pinned alternately: sites whose `i + j` parity matches
    /// `parity` are occupied, the rest unoccupied.
    pub fn boundary_pins(&self, parity: Parity) -> Result<PinSet> {
        let r = self.box_radius().ok_or_else(|| Error::Precondition("boundary pins need a box region".into()))? as i64;
        let mut pins = PinSet::new();
        for (k, &(i, j)) in self.sites.iter().enumerate() {
            if i.abs() != r && j.abs() != r {
                continue;
            }
            let even = (i + j).rem_euclid(2) == 0;
            let occ = even == (parity == Parity::Even);
            pins.insert(k, if occ { Pin::Occupied } else { Pin::Unoccupied });
        }
        Ok(pins)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty region file"))?;
        let count: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["region", n] => n.parse().map_err(|_| parse_err(ln, "bad site count"))?,
            _ => return Err(parse_err(ln, "expected `region <count>`")),
        };
        let mut sites = Vec::with_capacity(count);
        for (ln, line) in lines {
            sites.push(parse_site(ln, line)?);
        }
        if sites.len() != count {
            return Err(parse_err(0, format!("header says {count} sites, found {}", sites.len())));
        }
        LatticeRegion::new(sites)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("region {}\n", self.len());
        for &(i, j) in &self.sites {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_site(ln: usize, line: &str) -> Result<Site> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(parse_err(ln, "expected `i j`"));
    }
    let i = parts[0].parse().map_err(|_| parse_err(ln, "bad coordinate"))?;
    let j = parts[1].parse().map_err(|_| parse_err(ln, "bad coordinate"))?;
    Ok((i, j))
}

/// Simple undirected graph; each adjacency list is stored highest priority first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenericGraph {
    adj: Vec<Vec<usize>>,
}

impl GenericGraph {
    /// Neighbour priority defaults to increasing vertex id (lowest id highest).
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            if adj[u].contains(&v) {
                return Err(Error::InvalidGraph(format!("parallel edge ({u},{v})")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(GenericGraph { adj })
    }

    pub fn empty(n: usize) -> Self {
        GenericGraph { adj: vec![Vec::new(); n] }
    }

    /// Replace the priority order at `u`; `order` must be a permutation of its neighbours.
    pub fn set_order(&mut self, u: usize, order: Vec<usize>) -> Result<()> {
        if u >= self.n() {
            return Err(Error::UnknownVertex(u));
        }
        let mut a = order.clone();
        let mut b = self.adj[u].clone();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::InvalidGraph(format!("order at {u} is not a permutation of its neighbours")));
        }
        self.adj[u] = order;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// `a >_w b` in the neighbour order at `w`.
    pub fn prefers(&self, w: usize, a: usize, b: usize) -> bool {
        let pos = |x| self.adj[w].iter().position(|&y| y == x).expect("not a neighbour");
        pos(a) < pos(b)
    }

    /// Edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = (0..self.n()).flat_map(|u| self.adj[u].iter().filter(move |&&v| u < v).map(move |&v| (u, v))).collect();
        out.sort_unstable();
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty graph file"))?;
        let (n, m): (usize, usize) = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["graph", n, m] => {
                (n.parse().map_err(|_| parse_err(ln, "bad vertex count"))?, m.parse().map_err(|_| parse_err(ln, "bad edge count"))?)
            }
            _ => return Err(parse_err(ln, "expected `graph <n> <m>`")),
        };
        let mut edges = Vec::with_capacity(m);
        let mut orders = Vec::new();
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("order") {
                let (u, vs) = rest.split_once(':').ok_or_else(|| parse_err(ln, "expected `order u: v1 v2 ...`"))?;
                let u: usize = u.trim().parse().map_err(|_| parse_err(ln, "bad vertex"))?;
                let vs = vs
                    .split_whitespace()
                    .map(|v| v.parse::<usize>().map_err(|_| parse_err(ln, "bad vertex")))
                    .collect::<Result<Vec<_>>>()?;
                orders.push((ln, u, vs));
            } else {
                if !orders.is_empty() {
                    return Err(parse_err(ln, "edge after order lines"));
                }
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(parse_err(ln, "expected `u v`"));
                }
                let u = parts[0].parse().map_err(|_| parse_err(ln, "bad vertex"))?;
                let v = parts[1].parse().map_err(|_| parse_err(ln, "bad vertex"))?;
                edges.push((u, v));
            }
        }
        if edges.len() != m {
            return Err(parse_err(0, format!("header says {m} edges, found {}", edges.len())));
        }
        let mut g = GenericGraph::new(n, &edges)?;
        for (ln, u, vs) in orders {
            g.set_order(u, vs).map_err(|e| parse_err(ln, e.to_string()))?;
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let edges = self.edges();
        let mut s = format!("graph {} {}\n", self.n(), edges.len());
        for (u, v) in &edges {
            let _ = writeln!(s, "{u} {v}");
        }
        for u in 0..self.n() {
            if self.adj[u].len() > 1 {
                let list: Vec<String> = self.adj[u].iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "order {u}: {}", list.join(" "));
            }
        }
        s
    }
}

/// Pinned vertices of a graph, keyed by vertex index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PinSet(BTreeMap<usize, Pin>);

impl PinSet {
    pub fn new() -> Self {
        PinSet(BTreeMap::new())
    }

    pub fn insert(&mut self, v: usize, pin: Pin) -> Option<Pin> {
        self.0.insert(v, pin)
    }

    pub fn get(&self, v: usize) -> Option<Pin> {
        self.0.get(&v).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Pin)> + '_ {
        self.0.iter().map(|(&v, &p)| (v, p))
    }

    pub fn validate(&self, g: &GenericGraph) -> Result<()> {
        for (v, p) in self.iter() {
            if v >= g.n() {
                return Err(Error::InvalidPins(format!("vertex {v} out of range")));
            }
            if p == Pin::Occupied {
                if let Some(&u) = g.neighbors(v).iter().find(|&&u| self.get(u) == Some(Pin::Occupied)) {
                    return Err(Error::InvalidPins(format!("adjacent occupied pins at {v} and {u}")));
                }
            }
        }
        Ok(())
    }

    /// Vertex-keyed pin file: lines `v occ|unocc`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pins = PinSet::new();
        for (ln, line) in content_lines(text) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts[..] {
                [v, p] => {
                    let v = v.parse().map_err(|_| parse_err(ln, "bad vertex"))?;
                    let p = Pin::parse(p).ok_or_else(|| parse_err(ln, "expected occ or unocc"))?;
                    pins.insert(v, p);
                }
                _ => return Err(parse_err(ln, "expected `v occ|unocc`")),
            }
        }
        Ok(pins)
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(v, p)| format!("{v} {}\n", p.as_str())).collect()
    }
}

/// Site-keyed pin file: lines `i j occ|unocc`.
pub fn parse_site_pins(text: &str) -> Result<BTreeMap<Site, Pin>> {
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(text) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(ln, "expected `i j occ|unocc`"));
        }
        let site = parse_site(ln, &format!("{} {}", parts[0], parts[1]))?;
        let p = Pin::parse(parts[2]).ok_or_else(|| parse_err(ln, "expected occ or unocc"))?;
        out.insert(site, p);
    }
    Ok(out)
}

pub fn site_pins_to_text(pins: &BTreeMap<Site, Pin>) -> String {
    pins.iter().map(|(&(i, j), p)| format!("{i} {j} {}\n", p.as_str())).collect()
}

/// Graph left after deleting pinned vertices. `original[k]` is the source
/// vertex of reduced vertex `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduced {
    pub graph: GenericGraph,
    pub original: Vec<usize>,
}

impl Reduced {
    pub fn reduced_index(&self, v: usize) -> Option<usize> {
        self.original.binary_search(&v).ok()
    }
}

/// Delete unoccupied pins, and occupied pins together with their neighbours.
pub fn apply_pins(g: &GenericGraph, pins: &PinSet) -> Result<Reduced> {
    pins.validate(g)?;
    let mut removed = vec![false; g.n()];
    for (v, p) in pins.iter() {
        removed[v] = true;
        if p == Pin::Occupied {
            for &u in g.neighbors(v) {
                removed[u] = true;
            }
        }
    }
    let original: Vec<usize> = (0..g.n()).filter(|&v| !removed[v]).collect();
    let mut relabel = vec![usize::MAX; g.n()];
    for (k, &v) in original.iter().enumerate() {
        relabel[v] = k;
    }
    let adj = original.iter().map(|&v| g.neighbors(v).iter().filter(|&&u| !removed[u]).map(|&u| relabel[u]).collect()).collect();
    Ok(Reduced { graph: GenericGraph { adj }, original })
}
