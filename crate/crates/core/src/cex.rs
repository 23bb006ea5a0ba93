//! The nested malnormal chain `M_i = <a, b_i>` in `A = F(a,b)`, the trees of
//! groups `Γ_k` built from it, and exact spine metrics and translation
//! lengths in their Bass–Serre trees `T_k`.
//!
//! `Γ_k` is the path
//! `A -e_1- M_1 -e_2- M_2 ... -e_k- M_k -ε- A'` with edge groups
//! `M_1, ..., M_k, C = <a>`, where `A' = <a, c>` is a second copy of `F(a,b)`
//! sharing `C`, realized inside `F(a,b,c)`. `e_i` has length `1/2^i` and `ε`
//! length `1/2^k`, so the spine `[a_k, a'_k]` has length 1.
//!
//! An element `g` of `A` fixes `e_i` exactly when `g ∈ M_i`, so its fixed set
//! on the spine is the initial segment through `e_1 .. e_{k0-1}`, where `k0`
//! is the first level with `g ∉ M_{k0}`. Off-spine branches of `Fix(g)` leave
//! the spine at a point of it, so for `g ∈ A ∖ C` and `g' ∈ A' ∖ C` the fixed
//! sets are disjoint and the product `gg'` translates by twice the gap.

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::freegrp::{enumerate_reduced, FreeGroupError, MalnormalVerdict, ReducedWord, SubgroupGraph};
use crate::gog::{Edge, EdgeEnd, GraphOfGroups, Vertex};
use crate::scalar::Scalar;

/// Rank of the ambient `F(a,b,c)` holding both `A` and `A'`.
pub const AMBIENT_RANK: usize = 3;

/// Levels beyond this are not searched when locating `k0`.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CexError {
    #[error("{0} lies in C = <a>; its fixed set contains the whole spine")]
    InC(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    FreeGroup(#[from] FreeGroupError),
}

type Res<T> = Result<T, CexError>;

fn a() -> ReducedWord {
    ReducedWord::generator(1)
}

fn b() -> ReducedWord {
    ReducedWord::generator(2)
}

/// The default seed `b_1 = b a b^2`.
pub fn default_seed() -> ReducedWord {
    "babb".parse().expect("literal")
}

/// `x -> x`, `y -> y x y^2`: the step `b_i = b_{i-1} a b_{i-1}^2` in the basis `(x, y)`.
pub fn step_images() -> [ReducedWord; 2] {
    let y: ReducedWord = "b".parse().expect("literal");
    [a(), y.mul(&a()).mul(&y.pow(2))]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainLevel {
    pub i: usize,
    pub b: ReducedWord,
    pub length: usize,
    #[serde(skip)]
    pub group: SubgroupGraph,
    /// Rank of the folded graph of `<a, b_i>`; 2 means `(a, b_i)` is a free basis.
    pub rank: usize,
    /// `a` and `b_i` in the basis `(x, y) = (a, b_{i-1})` of the previous level.
    pub in_previous: (ReducedWord, ReducedWord),
    /// Both generators are members of the previous level.
    pub included: bool,
    /// `b_{i-1}` is not a member of this level.
    pub proper: bool,
}

/// The chain `M_1 ⊋ M_2 ⊋ ... ⊋ M_n`, with `M_0 = A`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub seed: ReducedWord,
    pub levels: Vec<ChainLevel>,
}

impl Chain {
    pub fn build(n: usize) -> Self {
        Self::with_seed(n, default_seed())
    }

    pub fn with_seed(n: usize, seed: ReducedWord) -> Self {
        let mut chain = Chain { seed, levels: vec![] };
        chain.extend_to(n);
        chain
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    fn extend_to(&mut self, n: usize) {
        while self.levels.len() < n {
            let i = self.levels.len() + 1;
            let prev_b = if i == 1 { b() } else { self.levels[i - 2].b.clone() };
            let (bi, in_prev) = if i == 1 {
                let y: ReducedWord = "b".parse().expect("literal");
                (self.seed.clone(), (a(), self.seed.substitute(&[a(), y])))
            } else {
                let [x, y] = step_images();
                (y.substitute(&[a(), prev_b.clone()]), (x, y))
            };
            let group = SubgroupGraph::stallings(AMBIENT_RANK, &[a(), bi.clone()]);
            let prev_group = self.group(i - 1);
            self.levels.push(ChainLevel {
                i,
                length: bi.len(),
                rank: group.rank(),
                included: prev_group.member(&a()) && prev_group.member(&bi),
                proper: !group.member(&prev_b),
                b: bi,
                group,
                in_previous: in_prev,
            });
        }
    }

    /// `M_i`, with `M_0 = A = F(a,b)`.
    pub fn group(&self, i: usize) -> SubgroupGraph {
        if i == 0 {
            SubgroupGraph::stallings(AMBIENT_RANK, &[a(), b()])
        } else {
            self.levels[i - 1].group.clone()
        }
    }

    /// `b_i`, with `b_0 = b`.
    pub fn b(&self, i: usize) -> ReducedWord {
        if i == 0 {
            b()
        } else {
            self.levels[i - 1].b.clone()
        }
    }

    /// First level `k0 >= 1` with `g ∉ M_{k0}`; the chain grows as needed.
    pub fn depth(&mut self, g: &ReducedWord) -> Res<usize> {
        let c = SubgroupGraph::stallings(AMBIENT_RANK, &[a()]);
        if c.member(g) {
            return Err(CexError::InC(g.to_string()));
        }
        if !self.group(0).member(g) {
            return Err(CexError::PreconditionViolated(format!("{g} is not in A = <a,b>")));
        }
        for i in 1..=MAX_DEPTH {
            self.extend_to(i);
            if !self.group(i).member(g) {
                return Ok(i);
            }
        }
        Err(CexError::Input(format!("{g} lies in M_{MAX_DEPTH}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalnormalStep {
    pub i: usize,
    /// `M_i` inside `M_{i-1}`, decided on the folded graphs.
    pub direct: MalnormalVerdict,
    /// `<x, y x y^2>` inside `F(x,y)`.
    pub symbolic: MalnormalVerdict,
    pub malnormal: bool,
}

/// Malnormality of `M_i` in `M_{i-1}`, computed two ways.
pub fn verify_malnormal_step(chain: &Chain, i: usize) -> Res<MalnormalStep> {
    if i == 0 || i > chain.len() {
        return Err(CexError::Input(format!("level {i} is outside 1..={}", chain.len())));
    }
    let direct = chain.group(i).malnormal_in(&chain.group(i - 1))?;
    let (x, y) = &chain.levels[i - 1].in_previous;
    let symbolic = SubgroupGraph::stallings(2, &[x.clone(), y.clone()]).malnormal_in(&SubgroupGraph::full(2))?;
    let malnormal = direct.malnormal && symbolic.malnormal;
    Ok(MalnormalStep { i, direct, symbolic, malnormal })
}

/// `<a^2, b_{i-1}>` inside `M_{i-1}`; not malnormal.
pub fn malnormal_control(chain: &Chain, i: usize) -> Res<MalnormalVerdict> {
    let prev = chain.b(i - 1);
    let h = SubgroupGraph::stallings(AMBIENT_RANK, &[a().pow(2), prev]);
    Ok(h.malnormal_in(&chain.group(i - 1))?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntersectionException {
    pub word: ReducedWord,
    pub level: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntersectionReport {
    pub n: usize,
    pub max_len: usize,
    pub words_checked: usize,
    pub exceptions: Vec<IntersectionException>,
    pub holds: bool,
}

/// Every reduced `w` over `(a, b_n)` with `|w| <= max_len` is pushed down the
/// chain by `y -> y x y^2`; at each level its length must strictly grow
/// unless `w` is a power of `a`, and it lands in `<a>` only if it is one.
pub fn verify_intersection(n: usize, max_len: usize, exec: Exec) -> IntersectionReport {
    let words = enumerate_reduced(2, max_len);
    let c = SubgroupGraph::stallings(AMBIENT_RANK, &[a()]);
    let step = step_images();
    let chain = Chain::build(1);
    let seed_images = [a(), chain.seed.substitute(&[a(), b()])];
    let results: Vec<Vec<IntersectionException>> = exec.map(&words, |w| {
        let mut out = Vec::new();
        let power_of_a = w.max_generator() <= 1;
        let mut cur = w.clone();
        for level in (1..=n).rev() {
            let images = if level == 1 { &seed_images } else { &step };
            let next = cur.substitute(images);
            if !power_of_a && next.len() <= cur.len() {
                out.push(IntersectionException {
                    word: w.clone(),
                    level,
                    reason: format!("length {} does not grow past {}", next.len(), cur.len()),
                });
            }
            if power_of_a && next != cur {
                out.push(IntersectionException { word: w.clone(), level, reason: "a power of a moved".into() });
            }
            cur = next;
        }
        if c.member(&cur) != power_of_a {
            out.push(IntersectionException { word: w.clone(), level: 0, reason: format!("membership in C is {}", !power_of_a) });
        }
        out
    });
    let exceptions: Vec<IntersectionException> = results.into_iter().flatten().collect();
    IntersectionReport { n, max_len, words_checked: words.len(), holds: exceptions.is_empty(), exceptions }
}

/// `1/2^i` for `e_i`.
pub fn edge_length(i: usize) -> Scalar {
    Scalar::dyadic(i as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpineMetrics {
    pub k: usize,
    /// `(name, length)` of the spine edges from `a_k` to `a'_k`.
    pub edges: Vec<(String, Scalar)>,
    pub distance: Scalar,
    pub is_one: bool,
}

pub fn spine_metrics(k: usize) -> SpineMetrics {
    let mut edges: Vec<(String, Scalar)> = (1..=k).map(|i| (format!("e{i}"), edge_length(i))).collect();
    edges.push(("eps".into(), Scalar::dyadic(k as u32)));
    let distance: Scalar = edges.iter().map(|(_, l)| l.clone()).sum();
    SpineMetrics { k, is_one: distance == Scalar::one(), edges, distance }
}

/// Length of `Fix(g)` along the spine of `T_k`, for `g ∈ A ∖ C`.
pub fn fixed_extent(chain: &mut Chain, g: &ReducedWord, k: usize) -> Res<Scalar> {
    let k0 = chain.depth(g)?;
    Ok((1..=k.min(k0 - 1)).map(edge_length).sum())
}

/// `A' = <a, c>`, the copy of `A` across `ε`.
pub fn a_prime() -> SubgroupGraph {
    SubgroupGraph::stallings(AMBIENT_RANK, &[a(), ReducedWord::generator(3)])
}

fn check_prime(gp: &ReducedWord) -> Res<()> {
    if !a_prime().member(gp) {
        return Err(CexError::PreconditionViolated(format!("{gp} is not in A' = <a,c>")));
    }
    if SubgroupGraph::stallings(AMBIENT_RANK, &[a()]).member(gp) {
        return Err(CexError::PreconditionViolated(format!("{gp} lies in C = <a>")));
    }
    Ok(())
}

/// `2 (1 - ext_k(g))`: twice the gap between `Fix(g)` and `Fix(g') = {a'_k}` on the spine.
fn bridge(chain: &mut Chain, g: &ReducedWord, gp: &ReducedWord, k: usize) -> Res<Scalar> {
    check_prime(gp)?;
    let ext = fixed_extent(chain, g, k)?;
    let gap = &spine_metrics(k).distance - &ext;
    Ok(&gap + &gap)
}

/// Translation length of `g g'` in `T_k`, for `g ∈ A ∖ M_1` and `g' ∈ A' ∖ C`.
pub fn translation_length(chain: &mut Chain, g: &ReducedWord, gp: &ReducedWord, k: usize) -> Res<Scalar> {
    match chain.depth(g) {
        Ok(1) => {}
        Ok(_) => return Err(CexError::PreconditionViolated(format!("{g} lies in M_1"))),
        Err(CexError::InC(w)) => return Err(CexError::PreconditionViolated(format!("{w} lies in C = <a>"))),
        Err(e) => return Err(e),
    }
    bridge(chain, g, gp, k)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LengthSequence {
    pub g: ReducedWord,
    pub g_prime: ReducedWord,
    pub lengths: Vec<Scalar>,
    pub non_increasing: bool,
}

/// `ℓ_{T_k}(g g')` for `k = 0..=k_max`.
pub fn length_monotone(chain: &mut Chain, g: &ReducedWord, gp: &ReducedWord, k_max: usize) -> Res<LengthSequence> {
    let lengths = (0..=k_max).map(|k| bridge(chain, g, gp, k)).collect::<Res<Vec<_>>>()?;
    let mut non_increasing = true;
    for w in lengths.windows(2) {
        non_increasing &= w[1].compare(&w[0]).map(|o| o.is_le()).unwrap_or(false);
    }
    Ok(LengthSequence { g: g.clone(), g_prime: gp.clone(), lengths, non_increasing })
}

#[derive(Debug, Clone)]
pub struct GammaK {
    pub k: usize,
    pub graph: GraphOfGroups,
    /// Edge lengths in the order `e_1, ..., e_k, ε`.
    pub lengths: Vec<Scalar>,
}

impl GammaK {
    /// DOT with vertex groups and edge lengths.
    pub fn to_dot(&self) -> String {
        let mut s = format!("graph gamma_{} {{\n", self.k);
        for (i, v) in self.graph.vertices.iter().enumerate() {
            let gens: Vec<String> = v.group.basis().iter().map(|w| w.to_string()).collect();
            s.push_str(&format!("  v{i} [label=\"{}: <{}>\"];\n", v.name, gens.join(",")));
        }
        for (e, len) in self.graph.edges.iter().zip(&self.lengths) {
            s.push_str(&format!(
                "  v{} -- v{} [label=\"{}\", length=\"{}\"];\n",
                e.ends[0].vertex, e.ends[1].vertex, e.name, len
            ));
        }
        s.push_str("}\n");
        s
    }
}

pub fn build_gamma(chain: &mut Chain, k: usize) -> GammaK {
    chain.extend_to(k);
    let end = |vertex| EdgeEnd { vertex, conj: ReducedWord::identity() };
    let mut vertices = vec![Vertex { name: "A".into(), group: chain.group(0) }];
    let mut edges = Vec::new();
    let mut lengths = Vec::new();
    for i in 1..=k {
        vertices.push(Vertex { name: format!("M{i}"), group: chain.group(i) });
        edges.push(Edge { name: format!("e{i}"), ends: [end(i - 1), end(i)], group: chain.group(i) });
        lengths.push(edge_length(i));
    }
    vertices.push(Vertex { name: "A'".into(), group: a_prime() });
    edges.push(Edge {
        name: "eps".into(),
        ends: [end(k), end(k + 1)],
        group: SubgroupGraph::stallings(AMBIENT_RANK, &[a()]),
    });
    lengths.push(Scalar::dyadic(k as u32));
    GammaK { k, graph: GraphOfGroups::new(AMBIENT_RANK, vertices, edges), lengths }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> ReducedWord {
        s.parse().unwrap()
    }

    #[test]
    fn chain_examples() {
        let chain = Chain::build(4);
        assert_eq!(chain.b(1), w("babb"));
        assert_eq!(chain.levels[0].length, 4);
        assert_eq!(chain.levels[1].length, 13);
        assert_eq!(chain.b(2), w("babbababbbabb"));
        for l in &chain.levels {
            assert!(l.included && l.proper);
            assert_eq!(l.rank, 2);
            assert!(l.group.member(&w("a")));
            let (x, y) = &l.in_previous;
            assert_eq!(y.substitute(&[w("a"), chain.b(l.i - 1)]), l.b);
            assert_eq!(*x, w("a"));
        }
    }

    #[test]
    fn malnormal_steps() {
        let chain = Chain::build(4);
        for i in 1..=4 {
            let s = verify_malnormal_step(&chain, i).unwrap();
            assert!(s.malnormal, "level {i}");
        }
        let c = malnormal_control(&chain, 3).unwrap();
        assert!(!c.malnormal);
        assert!(c.witness.is_some());
    }

    #[test]
    fn intersection_small() {
        let r = verify_intersection(3, 6, Exec::default());
        assert!(r.holds, "{:?}", r.exceptions);
        assert_eq!(r.words_checked, 1 + 4 * (3usize.pow(6) - 1) / 2);
    }

    #[test]
    fn spine_examples() {
        for k in [0, 3, 8] {
            let s = spine_metrics(k);
            assert!(s.is_one);
            assert_eq!(s.edges.len(), k + 1);
        }
        assert_eq!(spine_metrics(0).edges[0].1, Scalar::one());
    }

    #[test]
    fn extent_examples() {
        let mut chain = Chain::build(3);
        assert_eq!(fixed_extent(&mut chain, &w("b"), 5).unwrap(), Scalar::zero());
        let (b1, b2) = (chain.b(1), chain.b(2));
        assert_eq!(fixed_extent(&mut chain, &b1, 2).unwrap(), Scalar::from_ratio(1, 2));
        assert_eq!(fixed_extent(&mut chain, &b2, 3).unwrap(), Scalar::from_ratio(3, 4));
        assert_eq!(fixed_extent(&mut chain, &b2, 1).unwrap(), Scalar::from_ratio(1, 2));
        assert!(matches!(fixed_extent(&mut chain, &w("aaa"), 3), Err(CexError::InC(_))));
    }

    #[test]
    fn translation_examples() {
        let mut chain = Chain::build(3);
        for k in 0..=8 {
            assert_eq!(translation_length(&mut chain, &w("b"), &w("c"), k).unwrap(), Scalar::from_integer(2));
        }
        assert_eq!(translation_length(&mut chain, &w("b"), &w("ac"), 4).unwrap(), Scalar::from_integer(2));
        assert!(matches!(
            translation_length(&mut chain, &w("a"), &w("c"), 2),
            Err(CexError::PreconditionViolated(_))
        ));
        let b1 = chain.b(1);
        assert!(translation_length(&mut chain, &b1, &w("c"), 2).is_err());
    }

    #[test]
    fn length_sequences() {
        let mut chain = Chain::build(3);
        let s = length_monotone(&mut chain, &w("b"), &w("c"), 5).unwrap();
        assert!(s.non_increasing && s.lengths.iter().all(|l| *l == Scalar::from_integer(2)));
        let b1 = chain.b(1);
        let s = length_monotone(&mut chain, &b1, &w("c"), 4).unwrap();
        assert!(s.non_increasing);
        assert_eq!(s.lengths[0], Scalar::from_integer(2));
        assert!(s.lengths[1..].iter().all(|l| *l == Scalar::one()));
        assert_eq!(length_monotone(&mut chain, &w("b"), &w("c"), 0).unwrap().lengths.len(), 1);
    }

    #[test]
    fn gamma_examples() {
        let mut chain = Chain::build(1);
        for k in 0..=4 {
            let g = build_gamma(&mut chain, k);
            assert!(g.graph.validate().valid);
            let m = g.graph.monitor();
            assert_eq!((m.betti, m.w_count), (0, k + 2));
            assert_eq!(g.lengths.iter().cloned().sum::<Scalar>(), Scalar::one());
        }
        let dot = build_gamma(&mut chain, 2).to_dot();
        assert_eq!(dot.matches("label=\"A").count() + dot.matches("label=\"M").count(), 4);
    }
}
