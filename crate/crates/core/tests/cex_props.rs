mod common;

use common::Word;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rtreelab::cex::{fixed_extent, length_monotone, spine_metrics, translation_length, verify_intersection, Chain};
use rtreelab::exec::Exec;
use rtreelab::freegrp::ReducedWord;
use rtreelab::scalar::Scalar;

const A: i8 = 1;

/// `b_1 = b a b b`, `b_i = b_{i-1} a b_{i-1}^2`, on plain letter vectors.
fn oracle_b(i: usize) -> Word {
    let mut cur = vec![2, 1, 2, 2];
    for _ in 1..i {
        cur = common::mul(&common::mul(&common::mul(&cur, &[A]), &cur), &cur);
    }
    cur
}

/// `g ∈ <a, b_i>` by enumerating the subgroup ball of radius `|g|`.
fn oracle_member(g: &Word, i: usize) -> bool {
    let gens = if i == 0 { vec![vec![1], vec![2]] } else { vec![vec![A], oracle_b(i)] };
    common::subgroup_ball(&gens, g.len()).contains(g)
}

/// Spine extent of `Fix(g)` in `T_k` from ball membership, as a rational.
fn oracle_extent(g: &Word, k: usize) -> BigRational {
    let mut ext = BigRational::from_integer(0.into());
    for i in 1..=k {
        if !oracle_member(g, i) {
            break;
        }
        ext += BigRational::new(BigInt::from(1), BigInt::from(1) << i);
    }
    ext
}

fn word(w: &Word) -> ReducedWord {
    common::to_string(w).parse().unwrap()
}

fn arb_a_word() -> impl Strategy<Value = Word> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1), Just(2), Just(-2)], 1..7)
        .prop_map(|w| common::reduce(&w))
        .prop_filter("outside <a>", |w| w.iter().any(|l| l.abs() == 2))
}

fn arb_prime_word() -> impl Strategy<Value = Word> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1), Just(3), Just(-3)], 1..5)
        .prop_map(|w| common::reduce(&w))
        .prop_filter("outside <a>", |w| w.iter().any(|l| l.abs() == 3))
}

#[test]
fn chain_matches_oracle() {
    let chain = Chain::build(4);
    for i in 1..=4 {
        assert_eq!(chain.b(i), word(&oracle_b(i)));
    }
    assert_eq!(oracle_b(2).len(), 13);
}

#[test]
fn chain_elements_have_exact_depth() {
    let mut chain = Chain::build(2);
    for i in 1..=2 {
        let bi = word(&oracle_b(i));
        for k in 0..=4 {
            let ours = fixed_extent(&mut chain, &bi, k).unwrap();
            assert_eq!(ours.as_rational().unwrap(), oracle_extent(&oracle_b(i), k), "b_{i}, k={k}");
        }
    }
}

#[test]
fn spine_is_exactly_one() {
    for k in 0..=8 {
        assert_eq!(spine_metrics(k).distance, Scalar::one());
    }
}

#[test]
fn intersection_holds_on_small_balls() {
    for n in 1..=5 {
        let r = verify_intersection(n, 6, Exec::default());
        assert!(r.holds, "n={n}: {:?}", r.exceptions);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extent_matches_ball_oracle(g in arb_a_word(), k in 0usize..=3) {
        let mut chain = Chain::build(3);
        let ours = fixed_extent(&mut chain, &word(&g), k).unwrap();
        prop_assert_eq!(ours.as_rational().unwrap(), oracle_extent(&g, k));
        let bound = &Scalar::one() - &Scalar::dyadic(k as u32);
        prop_assert!(ours.compare(&bound).unwrap().is_le());
    }

    #[test]
    fn lengths_match_bridge_oracle(g in arb_a_word(), gp in arb_prime_word(), k_max in 0usize..=3) {
        let mut chain = Chain::build(3);
        let seq = length_monotone(&mut chain, &word(&g), &word(&gp), k_max).unwrap();
        prop_assert!(seq.non_increasing);
        for (k, l) in seq.lengths.iter().enumerate() {
            let expected = (BigRational::from_integer(1.into()) - oracle_extent(&g, k)) * BigRational::from_integer(2.into());
            prop_assert_eq!(l.as_rational().unwrap(), expected);
        }
        if !oracle_member(&g, 1) {
            for k in 0..=k_max {
                prop_assert_eq!(translation_length(&mut chain, &word(&g), &word(&gp), k).unwrap(), Scalar::from_integer(2));
            }
        }
    }

    #[test]
    fn extent_grows_with_depth(i in 1usize..=3, j in 1usize..=3, k in 0usize..=5) {
        let mut chain = Chain::build(3);
        let (lo, hi) = (i.min(j), i.max(j));
        let e_lo = fixed_extent(&mut chain, &word(&oracle_b(lo)), k).unwrap();
        let e_hi = fixed_extent(&mut chain, &word(&oracle_b(hi)), k).unwrap();
        prop_assert!(e_lo.compare(&e_hi).unwrap().is_le());
    }
}
