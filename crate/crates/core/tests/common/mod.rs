//! Brute-force oracles shared by integration tests. Independent of the
//! graph-based algorithms: they work on plain letter vectors.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

/// Letters are nonzero i8: +i is generator i, -i its inverse.
pub type Word = Vec<i8>;

pub fn reduce(w: &[i8]) -> Word {
    let mut out: Word = Vec::new();
    for &l in w {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

pub fn inverse(w: &[i8]) -> Word {
    w.iter().rev().map(|l| -l).collect()
}

pub fn mul(u: &[i8], v: &[i8]) -> Word {
    let mut w = u.to_vec();
    w.extend_from_slice(v);
    reduce(&w)
}

pub fn to_string(w: &[i8]) -> String {
    w.iter()
        .map(|&l| {
            let c = (b'a' + (l.unsigned_abs() - 1)) as char;
            if l < 0 { c.to_ascii_uppercase() } else { c }
        })
        .collect()
}

pub fn from_string(s: &str) -> Word {
    let w: Word = s
        .chars()
        .map(|c| {
            let i = (c.to_ascii_lowercase() as u8 - b'a' + 1) as i8;
            if c.is_ascii_uppercase() { -i } else { i }
        })
        .collect();
    reduce(&w)
}

/// Every reduced word of length <= n over `rank` generators.
pub fn all_words(rank: i8, n: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    let mut start = 0;
    for _ in 0..n {
        let end = out.len();
        for i in start..end {
            for g in 1..=rank {
                for l in [g, -g] {
                    if out[i].last() == Some(&-l) {
                        continue;
                    }
                    let mut w = out[i].clone();
                    w.push(l);
                    out.push(w);
                }
            }
        }
        start = end;
    }
    out
}

/// Length-reducing Nielsen transformations until none applies.
pub fn nielsen_reduce(gens: &[Word]) -> Vec<Word> {
    let mut xs: Vec<Word> = gens.iter().map(|g| reduce(g)).filter(|g| !g.is_empty()).collect();
    'outer: loop {
        xs.retain(|g| !g.is_empty());
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if i == j {
                    continue;
                }
                for yj in [xs[j].clone(), inverse(&xs[j])] {
                    for cand in [mul(&xs[i], &yj), mul(&yj, &xs[i])] {
                        if cand.len() < xs[i].len() {
                            xs[i] = cand;
                            continue 'outer;
                        }
                    }
                }
            }
        }
        return xs;
    }
}

/// Elements of the subgroup generated by `gens` of length <= radius, found by
/// breadth-first search through elements of length <= radius + slack.
pub fn subgroup_ball(gens: &[Word], radius: usize) -> BTreeSet<Word> {
    let xs = nielsen_reduce(gens);
    let slack = xs.iter().map(Vec::len).max().unwrap_or(0);
    let cap = radius + slack;
    let mut steps: Vec<Word> = Vec::new();
    for x in &xs {
        steps.push(x.clone());
        steps.push(inverse(x));
    }
    let mut seen: BTreeSet<Word> = BTreeSet::from([Vec::new()]);
    let mut queue = VecDeque::from([Vec::new()]);
    while let Some(w) = queue.pop_front() {
        for s in &steps {
            let next = mul(&w, s);
            if next.len() <= cap && seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    seen.into_iter().filter(|w| w.len() <= radius).collect()
}

pub fn random_word<R: Rng>(rng: &mut R, rank: i8, max_len: usize) -> Word {
    let len = rng.gen_range(1..=max_len);
    let mut w: Word = Vec::new();
    while w.len() < len {
        let g = rng.gen_range(1..=rank);
        let l = if rng.gen_bool(0.5) { g } else { -g };
        if w.last() != Some(&-l) {
            w.push(l);
        }
    }
    w
}

pub fn random_generators<R: Rng>(rng: &mut R, rank: i8, max_gens: usize, max_len: usize) -> Vec<Word> {
    let n = rng.gen_range(1..=max_gens);
    (0..n).map(|_| random_word(rng, rank, max_len)).collect()
}
