//! Trees of self-avoiding walks with cycle-closing leaves resolved by the
//! neighbour ordering, and the exact hard-core recursion on them.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{Rational, RationalInterval};
use crate::gibbs;
use crate::lattice::{GenericGraph, LatticeRegion, Parity, Pin, PinSet};

/// How leaves that close a cycle (and copies pinned occupied) are represented.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LeafFixing {
    /// Hard-core reduction: an unoccupied leaf is dropped, an occupied leaf
    /// deletes its parent.
    Prune,
    /// Keep every fixed leaf with its spin recorded (any two-spin system).
    Keep,
}

#[derive(Clone, Debug)]
pub struct SawNode {
    pub vertex: usize,
    pub depth: usize,
    pub children: Vec<u32>,
    pub pin: Option<Pin>,
    /// Walk was cut by the depth cap while it could still be extended.
    pub frontier: bool,
}

#[derive(Clone, Debug)]
pub struct SawTree {
    nodes: Vec<SawNode>,
    dead: Vec<bool>,
    depth_cap: usize,
    truncated: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CapBoundary {
    AllOccupied,
    AllUnoccupied,
    /// Only allowed on an untruncated tree.
    Free,
}

enum Event {
    Enter(u32),
    Exit(usize),
}

impl SawTree {
    pub fn build(g: &GenericGraph, root: usize, depth_cap: usize, pins: &PinSet) -> Result<Self> {
        SawTree::build_with(g, root, depth_cap, pins, LeafFixing::Prune)
    }

    pub fn build_with(g: &GenericGraph, root: usize, depth_cap: usize, pins: &PinSet, fixing: LeafFixing) -> Result<Self> {
        if root >= g.n() {
            return Err(Error::UnknownVertex(root));
        }
        if depth_cap == 0 {
            return Err(Error::Precondition("depth cap must be positive".into()));
        }
        pins.validate(g)?;
        let mut tree = SawTree {
            nodes: vec![SawNode { vertex: root, depth: 0, children: Vec::new(), pin: pins.get(root), frontier: false }],
            dead: vec![false],
            depth_cap,
            truncated: false,
        };
        let mut parent_of: Vec<u32> = vec![u32::MAX];
        let mut path: Vec<usize> = Vec::new();
        let mut pos = vec![usize::MAX; g.n()];
        let mut stack = vec![Event::Enter(0)];
        let mut candidates: Vec<(usize, Option<Pin>)> = Vec::with_capacity(4);

        while let Some(ev) = stack.pop() {
            let id = match ev {
                Event::Exit(v) => {
                    path.pop();
                    pos[v] = usize::MAX;
                    continue;
                }
                Event::Enter(id) => id as usize,
            };
            if tree.nodes[id].pin.is_some() {
                continue;
            }
            let u = tree.nodes[id].vertex;
            let depth = tree.nodes[id].depth;
            let pred = path.last().copied();

            candidates.clear();
            let mut killed = false;
            let mut extendable = false;
            for &y in g.neighbors(u) {
                if Some(y) == pred {
                    continue;
                }
                let fixed = if pos[y] != usize::MAX {
                    // closes y -> v1 -> ... -> u -> y
                    let v1 = path.get(pos[y] + 1).copied().unwrap_or(u);
                    Some(if g.prefers(y, v1, u) { Pin::Unoccupied } else { Pin::Occupied })
                } else {
                    None
                };
                match (fixed, pins.get(y)) {
                    (Some(p), _) => match (fixing, p) {
                        (LeafFixing::Prune, Pin::Occupied) => killed = true,
                        (LeafFixing::Prune, Pin::Unoccupied) => {}
                        (LeafFixing::Keep, p) => candidates.push((y, Some(p))),
                    },
                    (None, Some(Pin::Occupied)) if fixing == LeafFixing::Prune => killed = true,
                    (None, Some(p)) => candidates.push((y, Some(p))),
                    (None, None) => {
                        extendable = true;
                        candidates.push((y, None));
                    }
                }
            }
            if killed {
                if id == 0 {
                    tree.nodes[0].pin = Some(Pin::Unoccupied);
                } else {
                    let parent = parent_of[id] as usize;
                    tree.nodes[parent].children.retain(|&c| c as usize != id);
                    tree.dead[id] = true;
                }
                continue;
            }
            if depth == depth_cap {
                if extendable {
                    tree.nodes[id].frontier = true;
                    tree.truncated = true;
                }
                if extendable || candidates.is_empty() {
                    continue;
                }
            }
            path.push(u);
            pos[u] = path.len() - 1;
            stack.push(Event::Exit(u));
            let first_child = tree.nodes.len();
            for &(y, pin) in candidates.iter() {
                tree.nodes.push(SawNode { vertex: y, depth: depth + 1, children: Vec::new(), pin, frontier: false });
                tree.dead.push(false);
                parent_of.push(id as u32);
            }
            let ids: Vec<u32> = (first_child..tree.nodes.len()).map(|c| c as u32).collect();
            for &c in ids.iter().rev() {
                stack.push(Event::Enter(c));
            }
            tree.nodes[id].children = ids;
        }
        Ok(tree)
    }

    pub fn root(&self) -> &SawNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> &SawNode {
        &self.nodes[id as usize]
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Live node ids, parents before children.
    pub fn live_ids(&self) -> impl DoubleEndedIterator<Item = u32> + '_ {
        (0..self.nodes.len()).filter(|&k| !self.dead[k]).map(|k| k as u32)
    }

    pub fn len(&self) -> usize {
        self.dead.iter().filter(|&&d| !d).count()
    }

    /// Size of the node arena, dead nodes included; node ids are below this.
    pub fn node_capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Walk (sequence of graph vertices) ending at node `id`.
    pub fn walk_to(&self, id: u32) -> Vec<usize> {
        let mut parent = vec![u32::MAX; self.nodes.len()];
        for k in self.live_ids() {
            for &c in &self.nodes[k as usize].children {
                parent[c as usize] = k;
            }
        }
        let mut out = vec![self.nodes[id as usize].vertex];
        let mut cur = id;
        while parent[cur as usize] != u32::MAX {
            cur = parent[cur as usize];
            out.push(self.nodes[cur as usize].vertex);
        }
        out.reverse();
        out
    }

    /// Probability that the root is unoccupied.
    pub fn root_unoccupied_prob(&self, lambda: &Rational, boundary: CapBoundary) -> Result<Rational> {
        if lambda.is_negative() {
            return Err(Error::Precondition("activity must be nonnegative".into()));
        }
        if boundary == CapBoundary::Free && self.truncated {
            return Err(Error::TruncatedFree(self.depth_cap));
        }
        let (u, o) = self.weights(lambda, boundary);
        Ok(Rational::new(BigInt::from(u.clone()), BigInt::from(u + o)))
    }

    /// Both cap boundaries; the exact root marginal lies between them.
    pub fn bracket(&self, lambda: &Rational) -> Result<RationalInterval> {
        if !self.truncated {
            return Ok(RationalInterval::point(self.root_unoccupied_prob(lambda, CapBoundary::Free)?));
        }
        let a = self.root_unoccupied_prob(lambda, CapBoundary::AllOccupied)?;
        let b = self.root_unoccupied_prob(lambda, CapBoundary::AllUnoccupied)?;
        Ok(if a <= b { RationalInterval::new(a, b) } else { RationalInterval::new(b, a) })
    }

    /// Scaled partition-function pair (root unoccupied, root occupied) with the
    /// activity `p/q` cleared of denominators.
    fn weights(&self, lambda: &Rational, boundary: CapBoundary) -> (BigUint, BigUint) {
        let p = lambda.numer().magnitude().clone();
        let q = lambda.denom().magnitude().clone();
        let mut vals: Vec<Option<(BigUint, BigUint)>> = vec![None; self.nodes.len()];
        for id in self.live_ids().rev() {
            let node = &self.nodes[id as usize];
            let val = match node.pin {
                Some(Pin::Unoccupied) => (BigUint::one(), BigUint::zero()),
                Some(Pin::Occupied) => (BigUint::zero(), BigUint::one()),
                None if node.frontier => match boundary {
                    CapBoundary::AllOccupied => (BigUint::zero(), BigUint::one()),
                    _ => (BigUint::one(), BigUint::zero()),
                },
                None => {
                    let mut un = q.clone();
                    let mut occ = p.clone();
                    for &c in &node.children {
                        let (cu, co) = vals[c as usize].take().expect("child evaluated");
                        occ *= &cu;
                        un *= cu + co;
                    }
                    (un, occ)
                }
            };
            vals[id as usize] = Some(val);
        }
        vals[0].take().unwrap()
    }
}

/// `Pr[v unoccupied]` summed over all independent sets consistent with `pins`.
pub fn brute_force_marginal(g: &GenericGraph, v: usize, lambda: &Rational, pins: &PinSet) -> Result<Rational> {
    if v >= g.n() {
        return Err(Error::UnknownVertex(v));
    }
    if let Some(p) = pins.get(v) {
        pins.validate(g)?;
        return Ok(if p == Pin::Unoccupied { Rational::one() } else { Rational::zero() });
    }
    let z = gibbs::brute_force_partition(g, lambda, pins)?;
    let mut with_v = pins.clone();
    with_v.insert(v, Pin::Unoccupied);
    let z_unocc = gibbs::brute_force_partition(g, lambda, &with_v)?;
    Ok(z_unocc / z)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ProbeMethod {
    SawTree,
    Transfer,
    /// SAW trees up to radius [`SAW_PROBE_MAX_RADIUS`], transfer matrix beyond.
    Auto,
}

pub const SAW_PROBE_MAX_RADIUS: u32 = 3;

/// Root marginals of `build_box(L)` under the two alternating boundaries.
pub fn boundary_marginals(radius: u32, lambda: &Rational, method: ProbeMethod) -> Result<(Rational, Rational)> {
    let region = LatticeRegion::build_box(radius);
    let origin = region.index_of((0, 0)).unwrap();
    let g = region.to_graph();
    let use_saw = match method {
        ProbeMethod::SawTree => true,
        ProbeMethod::Transfer => false,
        ProbeMethod::Auto => radius <= SAW_PROBE_MAX_RADIUS,
    };
    let mut out = Vec::with_capacity(2);
    for parity in [Parity::Even, Parity::Odd] {
        let pins = region.boundary_pins(parity)?;
        let alpha = if use_saw {
            let tree = SawTree::build(&g, origin, g.n().max(1), &pins)?;
            tree.root_unoccupied_prob(lambda, CapBoundary::Free)?
        } else {
            gibbs::transfer_marginal(&region, origin, lambda, &pins)?
        };
        out.push(alpha);
    }
    let odd = out.pop().unwrap();
    let even = out.pop().unwrap();
    Ok((even, odd))
}

/// `(L, |alpha_even - alpha_odd|)` at the origin of the radius-`L` box for `L = 1..=lmax`.
pub fn ssm_probe(lmax: u32, lambda: &Rational, method: ProbeMethod) -> Result<Vec<(u32, Rational)>> {
    (1..=lmax)
        .map(|l| {
            let (e, o) = boundary_marginals(l, lambda, method)?;
            Ok((l, (e - o).abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, ratio};

    fn cycle4_successor_order() -> GenericGraph {
        let mut g = GenericGraph::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        for x in 0..4 {
            g.set_order(x, vec![(x + 1) % 4, (x + 3) % 4]).unwrap();
        }
        g
    }

    fn shape(t: &SawTree, id: u32) -> String {
        let n = t.node(id);
        let kids: Vec<String> = n.children.iter().map(|&c| shape(t, c)).collect();
        if kids.is_empty() {
            n.vertex.to_string()
        } else {
            format!("{}({})", n.vertex, kids.join(","))
        }
    }

    #[test]
    fn four_cycle_fixing() {
        let g = cycle4_successor_order();
        let t = SawTree::build(&g, 0, 4, &PinSet::new()).unwrap();
        // the 0-1-2-3 branch loses its unoccupied leaf; on 0-3-2-1 the closing
        // leaf is occupied, so vertex 1 disappears
        assert_eq!(shape(&t, 0), "0(1(2(3)),3(2))");
        assert!(!t.is_truncated());
        assert_eq!(t.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap(), ratio(5, 7));
    }

    #[test]
    fn path_is_its_own_tree() {
        let g = GenericGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let t = SawTree::build(&g, 0, 10, &PinSet::new()).unwrap();
        assert_eq!(shape(&t, 0), "0(1(2))");
        assert_eq!(t.walk_to(2), vec![0, 1, 2]);
    }

    #[test]
    fn single_vertex() {
        let g = GenericGraph::empty(1);
        let t = SawTree::build(&g, 0, 5, &PinSet::new()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap(), ratio(1, 2));
    }

    #[test]
    fn star_of_two_leaves() {
        let g = GenericGraph::new(3, &[(0, 1), (0, 2)]).unwrap();
        let t = SawTree::build(&g, 0, 3, &PinSet::new()).unwrap();
        assert_eq!(t.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap(), ratio(4, 5));
    }

    #[test]
    fn tiny_activity_stays_in_range() {
        let g = LatticeRegion::build_box(1).to_graph();
        let lam = ratio(1, 1000);
        let t = SawTree::build(&g, 4, 9, &PinSet::new()).unwrap();
        let a = t.root_unoccupied_prob(&lam, CapBoundary::Free).unwrap();
        assert!(a >= Rational::one() / (Rational::one() + &lam) && a <= Rational::one());
    }

    #[test]
    fn free_on_truncated_is_error() {
        let g = LatticeRegion::build_box(2).to_graph();
        let t = SawTree::build(&g, 12, 2, &PinSet::new()).unwrap();
        assert!(t.is_truncated());
        assert_eq!(t.root_unoccupied_prob(&int(1), CapBoundary::Free), Err(Error::TruncatedFree(2)));
    }

    #[test]
    fn bad_root_and_cap() {
        let g = GenericGraph::empty(2);
        assert_eq!(SawTree::build(&g, 5, 3, &PinSet::new()).unwrap_err(), Error::UnknownVertex(5));
        assert!(SawTree::build(&g, 0, 0, &PinSet::new()).is_err());
    }

    #[test]
    fn box_center_matches_brute_force() {
        let b = LatticeRegion::build_box(1);
        let g = b.to_graph();
        let c = b.index_of((0, 0)).unwrap();
        let t = SawTree::build(&g, c, 9, &PinSet::new()).unwrap();
        let saw = t.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap();
        let bf = brute_force_marginal(&g, c, &int(1), &PinSet::new()).unwrap();
        assert_eq!(saw, bf);
    }

    #[test]
    fn brute_force_small_cases() {
        let edge = GenericGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(brute_force_marginal(&edge, 0, &int(1), &PinSet::new()).unwrap(), ratio(2, 3));
        let iso = GenericGraph::empty(1);
        assert_eq!(brute_force_marginal(&iso, 0, &int(2), &PinSet::new()).unwrap(), ratio(1, 3));
    }

    #[test]
    fn pinned_occupied_neighbour_forces_root() {
        let g = GenericGraph::new(2, &[(0, 1)]).unwrap();
        let mut pins = PinSet::new();
        pins.insert(1, Pin::Occupied);
        let t = SawTree::build(&g, 0, 3, &pins).unwrap();
        assert_eq!(t.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap(), Rational::one());
        let kept = SawTree::build_with(&g, 0, 3, &pins, LeafFixing::Keep).unwrap();
        assert_eq!(kept.root_unoccupied_prob(&int(1), CapBoundary::Free).unwrap(), Rational::one());
    }

    #[test]
    fn probe_saw_agrees_with_brute_force_at_radius_one() {
        let lam = int(1);
        let (e, o) = boundary_marginals(1, &lam, ProbeMethod::SawTree).unwrap();
        let b = LatticeRegion::build_box(1);
        let g = b.to_graph();
        let c = b.index_of((0, 0)).unwrap();
        let be = brute_force_marginal(&g, c, &lam, &b.boundary_pins(Parity::Even).unwrap()).unwrap();
        let bo = brute_force_marginal(&g, c, &lam, &b.boundary_pins(Parity::Odd).unwrap()).unwrap();
        assert_eq!((e, o), (be, bo));
    }

    #[test]
    fn probe_methods_agree() {
        let lam = ratio(9, 5);
        for l in 1..=3 {
            assert_eq!(
                boundary_marginals(l, &lam, ProbeMethod::SawTree).unwrap(),
                boundary_marginals(l, &lam, ProbeMethod::Transfer).unwrap()
            );
        }
    }

    #[test]
    fn probe_zero_activity() {
        let gaps = ssm_probe(3, &Rational::zero(), ProbeMethod::Auto).unwrap();
        assert!(gaps.iter().all(|(_, g)| g.is_zero()));
    }

    #[test]
    fn probe_decays_at_unit_activity() {
        let gaps = ssm_probe(5, &int(1), ProbeMethod::Auto).unwrap();
        assert!(gaps.windows(2).all(|w| w[1].1 < w[0].1));
    }
}
