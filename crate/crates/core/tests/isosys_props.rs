use proptest::prelude::*;
use rtreelab::isosys::{Interval, IsometrySystem, MachineStatus, MultiInterval, PartialIsometry, ProfileEntry};
use rtreelab::scalar::Scalar;

const GRID: i64 = 8;

fn g(n: i64) -> Scalar {
    Scalar::from_ratio(n, GRID)
}

/// Random rational system on `[0,1] ∪ [2,3]` with endpoints on the 1/8 grid.
fn arb_system() -> impl Strategy<Value = IsometrySystem> {
    let map = (0usize..2, 0i64..GRID, 1i64..=GRID, 0usize..2, 0i64..GRID, prop::bool::ANY);
    (1usize..=2, prop::collection::vec(map, 0..5)).prop_map(|(ncomp, raw)| {
        let comps: Vec<Interval> = (0..ncomp)
            .map(|k| Interval::new(g(2 * GRID * k as i64), g(2 * GRID * k as i64 + GRID)))
            .collect();
        let d = MultiInterval::new(comps.clone()).unwrap();
        let mut maps = Vec::new();
        for (c1, a, len, c2, b, flip) in raw {
            let (c1, c2) = (c1 % ncomp, c2 % ncomp);
            let len = len.min(GRID - a);
            let b = b.min(GRID - len);
            let (o1, o2) = (2 * GRID * c1 as i64, 2 * GRID * c2 as i64);
            let dom = Interval::new(g(o1 + a), g(o1 + a + len));
            let ran = Interval::new(g(o2 + b), g(o2 + b + len));
            maps.push(PartialIsometry::between(dom, ran, if flip { -1 } else { 1 }).unwrap());
        }
        IsometrySystem::new(d, maps).unwrap()
    })
}

/// Number of non-singleton bases containing `x`, counted directly.
fn bases_at(s: &IsometrySystem, x: &Scalar) -> usize {
    s.maps
        .iter()
        .filter(|m| !m.is_singleton())
        .flat_map(|m| [&m.dom, &m.ran])
        .filter(|b| b.contains(x).unwrap())
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn machine_conserves_measure(s in arb_system()) {
        let out = s.rips_run(200).unwrap();
        prop_assert_eq!(&out.erased + &out.system.d.measure(), s.d.measure());
        let logged: Scalar = out.log.iter().map(|st| st.erased.clone()).sum();
        prop_assert_eq!(logged, out.erased.clone());
        if out.status == MachineStatus::HaltEmpty {
            prop_assert_eq!(out.erased, s.d.measure());
        }
    }

    #[test]
    fn pure_systems_have_multiplicity_two(s in arb_system()) {
        let out = s.rips_run(200).unwrap();
        prop_assume!(out.status == MachineStatus::Pure);
        let p = &out.system;
        for e in p.multiplicity_profile().unwrap().entries {
            if let ProfileEntry::Open { lo, hi, mult, .. } = e {
                prop_assert!(mult >= 2);
                prop_assert_eq!(mult, bases_at(p, &(&lo + &hi).half()));
            }
        }
    }

    #[test]
    fn profile_matches_direct_count(s in arb_system()) {
        for e in s.multiplicity_profile().unwrap().entries {
            match e {
                ProfileEntry::Open { lo, hi, mult, .. } => prop_assert_eq!(mult, bases_at(&s, &(&lo + &hi).half())),
                ProfileEntry::Point { x, mult, .. } => prop_assert_eq!(mult, bases_at(&s, &x)),
            }
        }
    }

    #[test]
    fn trimmed_maps_stay_inside_the_remaining_base(s in arb_system()) {
        let out = s.rips_run(200).unwrap();
        for m in &out.system.maps {
            prop_assert!(out.system.d.component_containing(&m.dom).unwrap().is_some());
            prop_assert!(out.system.d.component_containing(&m.ran).unwrap().is_some());
            prop_assert_eq!(m.image(&m.dom), m.ran.clone());
        }
    }

    #[test]
    fn orbit_words_replay(s in arb_system(), n in 0i64..=GRID) {
        let o = s.orbit(&g(n), 100).unwrap();
        for p in &o.points {
            prop_assert_eq!(s.replay(&o.start, &p.word).unwrap(), Some(p.x.clone()));
        }
        // rational grid systems have finite orbits on the grid
        prop_assert!(o.closed || o.points.len() == 100);
    }

    #[test]
    fn leaf_space_counts(s in arb_system()) {
        let l = s.leaf_space_graph(400).unwrap();
        let cut_pieces: usize = l.edges.iter().map(|e| e.pieces.len()).sum();
        prop_assert!(cut_pieces >= l.edges.len());
        prop_assert_eq!(l.edges.len() + l.components, l.vertices.len() + l.betti);
        prop_assert_eq!(l.is_tree, l.betti == 0 && l.components == 1);
        let total: Scalar = l.edges.iter().flat_map(|e| e.pieces.iter().map(|p| p.length())).sum();
        prop_assert_eq!(total, s.d.measure());
    }
}
