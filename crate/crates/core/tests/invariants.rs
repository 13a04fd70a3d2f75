use proptest::prelude::*;
use ssm_core::branching::BranchingMatrix;
use ssm_core::dms::DmsCertificate;
use ssm_core::exact::{format_rational, parse_rational, ratio};
use ssm_core::gibbs::brute_force_partition;
use ssm_core::lattice::{apply_pins, GenericGraph, LatticeRegion, Parity, Pin, PinSet};
use ssm_core::sawtree::{brute_force_marginal, CapBoundary, SawTree};
use ssm_core::Rational;

/// Graph on `n` vertices from an edge mask, with valid pins from a pin code
/// per vertex (0 free, 1 unoccupied, 2 occupied when no occupied neighbour).
fn instance(n: usize, mask: &[bool], codes: &[u8]) -> (GenericGraph, PinSet) {
    let mut edges = Vec::new();
    let mut k = 0;
    for u in 0..n {
        for v in u + 1..n {
            if mask[k % mask.len()] {
                edges.push((u, v));
            }
            k += 1;
        }
    }
    let g = GenericGraph::new(n, &edges).unwrap();
    let mut pins = PinSet::new();
    for (v, &code) in codes.iter().enumerate().take(n) {
        match code {
            1 => {
                pins.insert(v, Pin::Unoccupied);
            }
            2 if g.neighbors(v).iter().all(|&u| pins.get(u) != Some(Pin::Occupied)) => {
                pins.insert(v, Pin::Occupied);
            }
            _ => {}
        }
    }
    (g, pins)
}

fn graph_strategy() -> impl Strategy<Value = (GenericGraph, PinSet, usize)> {
    (1usize..=8).prop_flat_map(|n| (Just(n), prop::collection::vec(any::<bool>(), 28), prop::collection::vec(0u8..4, 8), 0..n)).prop_map(
        |(n, mask, codes, v)| {
            let (g, p) = instance(n, &mask, &codes);
            (g, p, v)
        },
    )
}

fn lambda_strategy() -> impl Strategy<Value = Rational> {
    (1i64..20, 1i64..20).prop_map(|(p, q)| ratio(p, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saw_marginal_equals_brute_force((g, pins, v) in graph_strategy(), lambda in lambda_strategy()) {
        let tree = SawTree::build(&g, v, g.n(), &pins).unwrap();
        let saw = tree.root_unoccupied_prob(&lambda, CapBoundary::Free).unwrap();
        prop_assert_eq!(saw, brute_force_marginal(&g, v, &lambda, &pins).unwrap());
    }

    #[test]
    fn truncated_bracket_contains_marginal((g, pins, v) in graph_strategy(), lambda in lambda_strategy(), cap in 1usize..4) {
        let tree = SawTree::build(&g, v, cap, &pins).unwrap();
        let exact = brute_force_marginal(&g, v, &lambda, &pins).unwrap();
        prop_assert!(tree.bracket(&lambda).unwrap().contains(&exact));
    }

    #[test]
    fn pinning_matches_reduced_graph((g, pins, _v) in graph_strategy(), lambda in lambda_strategy()) {
        let reduced = apply_pins(&g, &pins).unwrap();
        let occupied = pins.iter().filter(|&(_, p)| p == Pin::Occupied).count();
        let weight = num_traits::pow(lambda.clone(), occupied);
        let z = brute_force_partition(&reduced.graph, &lambda, &PinSet::new()).unwrap();
        prop_assert_eq!(brute_force_partition(&g, &lambda, &pins).unwrap(), z * weight);
    }

    #[test]
    fn rational_text_round_trip(p in -1_000_000i64..1_000_000, q in 1i64..1_000_000) {
        let r = ratio(p, q);
        prop_assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
    }

    #[test]
    fn region_text_round_trip(sites in prop::collection::btree_set((-5i64..5, -5i64..5), 1..30)) {
        let r = LatticeRegion::new(sites).unwrap();
        prop_assert_eq!(LatticeRegion::parse(&r.to_text()).unwrap(), r);
    }

    #[test]
    fn graph_and_pins_text_round_trip((g, pins, _v) in graph_strategy()) {
        prop_assert_eq!(GenericGraph::parse(&g.to_text()).unwrap(), g.clone());
        let back = PinSet::parse(&pins.to_text()).unwrap();
        prop_assert_eq!(back.iter().collect::<Vec<_>>(), pins.iter().collect::<Vec<_>>());
    }

    #[test]
    fn matrix_text_round_trip(t in 1usize..6, cells in prop::collection::vec(0u32..5, 36), root in 0usize..6) {
        let entries: Vec<Vec<u32>> = (0..t).map(|i| cells[i * 6..i * 6 + t].to_vec()).collect();
        let m = BranchingMatrix::new(entries, root % t).unwrap();
        let back = BranchingMatrix::parse(&m.to_text()).unwrap();
        prop_assert_eq!(back.rows(), m.rows());
        prop_assert_eq!(back.root(), m.root());
    }

    #[test]
    fn certificate_text_round_trip(s in prop::collection::vec((103i64..400, 1i64..100), 1..5), lam in lambda_strategy()) {
        let svals: Vec<Rational> = s.iter().map(|&(a, _)| ratio(a, 100)).collect();
        let cvals: Vec<Rational> = s.iter().map(|&(_, b)| ratio(b, 97)).collect();
        let cert = DmsCertificate::new(lam, svals, cvals);
        prop_assert_eq!(DmsCertificate::parse(&cert.to_text()).unwrap().to_text(), cert.to_text());
    }

    #[test]
    fn boundary_pins_partition_boundary(r in 0u32..6) {
        let b = LatticeRegion::build_box(r);
        let even = b.boundary_pins(Parity::Even).unwrap();
        let odd = b.boundary_pins(Parity::Odd).unwrap();
        prop_assert_eq!(even.len(), odd.len());
        for (v, p) in even.iter() {
            prop_assert_eq!(odd.get(v).map(|q| q != p), Some(true));
        }
    }
}
