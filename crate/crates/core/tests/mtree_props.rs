use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtreelab::mtree::*;
use rtreelab::scalar::Scalar;

struct Fixture {
    family: SubtreeFamily,
}

/// Random tree, each edge cut at random rationals, atoms grouped into
/// connected classes. Atom-disjoint connected subtrees of a tree meet in at
/// most one point, so the classes always form a transverse covering.
fn random_covering(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=7);
    let edges: Vec<(usize, usize, Scalar)> =
        (1..n).map(|v| (rng.gen_range(0..v), v, Scalar::from_ratio(rng.gen_range(1..=8), rng.gen_range(1..=4)))).collect();
    let host = MetricTree::new(n, edges).unwrap();
    let mut atoms: Vec<(usize, Scalar, Scalar, usize, usize)> = Vec::new();
    let mut next_point = n;
    for (e, te) in host.edges().iter().enumerate() {
        let k = rng.gen_range(0..=2);
        let mut cuts = vec![Scalar::zero()];
        for i in 1..=k {
            cuts.push(te.length.scale(&num_rational::BigRational::new((i as i64).into(), ((k + 1) as i64).into())));
        }
        cuts.push(te.length.clone());
        for w in 0..cuts.len() - 1 {
            let a = if w == 0 { te.u } else { next_point - 1 };
            let b = if w + 2 == cuts.len() {
                te.v
            } else {
                next_point += 1;
                next_point - 1
            };
            atoms.push((e, cuts[w].clone(), cuts[w + 1].clone(), a, b));
        }
    }
    let mut class: Vec<usize> = (0..atoms.len()).collect();
    fn find(c: &mut Vec<usize>, x: usize) -> usize {
        if c[x] != x {
            let r = find(c, c[x]);
            c[x] = r;
        }
        c[x]
    }
    for i in 0..atoms.len() {
        for j in 0..i {
            let share = [atoms[i].3, atoms[i].4].iter().any(|p| *p == atoms[j].3 || *p == atoms[j].4);
            if share && rng.gen_bool(0.4) {
                let (ri, rj) = (find(&mut class, i), find(&mut class, j));
                class[ri] = rj;
            }
        }
    }
    let mut members: std::collections::BTreeMap<usize, Vec<Segment>> = Default::default();
    for i in 0..atoms.len() {
        let r = find(&mut class, i);
        members.entry(r).or_default().push(Segment::new(atoms[i].0, atoms[i].1.clone(), atoms[i].2.clone()));
    }
    let mut members: Vec<Subtree> = members.into_values().map(Subtree::new).collect();
    if members.is_empty() {
        members.push(Subtree::new(vec![]));
    }
    Fixture { family: SubtreeFamily { host, members } }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_partitions_are_transverse(seed in any::<u64>()) {
        let f = random_covering(seed).family;
        prop_assume!(f.host.edge_count() > 0);
        let rep = check_transverse_covering(&f).unwrap();
        prop_assert!(rep.transverse, "{:?}", rep.violations);
    }

    #[test]
    fn skeleton_is_a_tree(seed in any::<u64>()) {
        let f = random_covering(seed).family;
        prop_assume!(f.host.edge_count() > 0);
        let sk = skeleton(&f).unwrap();
        let t = sk.as_metric_tree().unwrap();
        prop_assert!(check_four_point(&t).unwrap());
        // every V0 point contributes one edge per member containing it
        let mut per_point = vec![0usize; sk.v0.len()];
        for &(x, _) in &sk.edges {
            per_point[x] += 1;
        }
        prop_assert!(per_point.iter().all(|&c| c >= 2));
        prop_assert_eq!(per_point.iter().sum::<usize>(), sk.edges.len());
    }

    #[test]
    fn collapses_are_aligned(seed in any::<u64>(), mask in any::<u32>()) {
        let f = random_covering(seed).family;
        prop_assume!(f.host.edge_count() > 0);
        let kill: Vec<usize> = (0..f.members.len()).filter(|i| mask >> (i % 32) & 1 == 1).collect();
        let (target, map) = collapse(&f, &kill).unwrap();
        let rep = map.check_alignment(&target);
        prop_assert!(rep.aligned && rep.surjective);
        prop_assert!(check_four_point(&target).unwrap());
        let killed: Scalar = kill.iter().flat_map(|&k| f.members[k].segments.iter()).map(|s| &s.to - &s.from).sum();
        prop_assert_eq!(target.total_length() + killed, f.host.total_length());
    }

    #[test]
    fn trees_satisfy_four_point(seed in any::<u64>()) {
        let f = random_covering(seed).family;
        prop_assert!(check_four_point(&f.host).unwrap());
    }

    #[test]
    fn chain_overlaps_are_positive(cuts in prop::collection::vec((0i64..20, 1i64..20), 2..8)) {
        let host = MetricTree::new(2, vec![(0, 1, Scalar::from_integer(1))]).unwrap();
        let len = Scalar::from_ratio(7, 20);
        let translates: Vec<TreeArc> = cuts
            .iter()
            .map(|&(a, _)| {
                let from = Scalar::from_ratio(a.min(13), 20);
                TreeArc::on_edge(0, from.clone(), &from + &len)
            })
            .collect();
        let j = TreeArc::on_edge(0, Scalar::zero(), Scalar::from_integer(1));
        let rep = indecomposability_witness(&host, &translates, &j, 10).unwrap();
        if let Some(chain) = rep.chain {
            prop_assert_eq!(rep.overlaps.len() + 1, chain.len());
            for o in &rep.overlaps {
                prop_assert_eq!(o.sign().unwrap(), 1);
            }
        }
    }
}
