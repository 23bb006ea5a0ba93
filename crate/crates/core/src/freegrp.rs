//! Free groups: reduced words and finitely generated subgroups given by
//! folded core graphs.
//!
//! A [`SubgroupGraph`] is always folded, trimmed to its core (every vertex
//! other than the basepoint has degree at least two) and renumbered by a
//! breadth-first search from the basepoint that visits labels in the order
//! `a < A < b < B < ...`. Two subgroups are therefore equal exactly when
//! their graphs are identical, and the spanning tree used for free bases is
//! reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_RANK: usize = 26;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FreeGroupError {
    #[error("{word} is not a member of the ambient subgroup")]
    NotASubgroup { word: String },
    #[error("{word} is not a member of the subgroup")]
    NotAMember { word: String },
    #[error("invalid word {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// A generator `x_i` (`i >= 1`) or its inverse.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter(i32);

impl Letter {
    pub fn gen(index: usize) -> Letter {
        assert!(index >= 1, "generator indices start at 1");
        Letter(index as i32)
    }

    pub fn inv_gen(index: usize) -> Letter {
        Letter::gen(index).inverse()
    }

    pub fn index(self) -> usize {
        self.0.unsigned_abs() as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 < 0
    }

    pub fn inverse(self) -> Letter {
        Letter(-self.0)
    }

    /// The positive letter with the same generator.
    pub fn positive(self) -> Letter {
        Letter(self.0.abs())
    }

    pub fn to_char(self) -> char {
        let base = if self.is_inverse() { b'A' } else { b'a' };
        (base + (self.index() - 1) as u8) as char
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c {
            'a'..='z' => Some(Letter::gen((c as u8 - b'a') as usize + 1)),
            'A'..='Z' => Some(Letter::inv_gen((c as u8 - b'A') as usize + 1)),
            _ => None,
        }
    }

    /// All `2 * rank` letters in label order.
    pub fn alphabet(rank: usize) -> impl Iterator<Item = Letter> {
        (1..=rank).flat_map(|i| [Letter::gen(i), Letter::inv_gen(i)])
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.index(), self.is_inverse()).cmp(&(other.index(), other.is_inverse()))
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A freely reduced word; the empty word is the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReducedWord {
    letters: Vec<Letter>,
}

impl ReducedWord {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Freely reduces an arbitrary letter sequence.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            if out.last() == Some(&l.inverse()) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        ReducedWord { letters: out }
    }

    pub fn letter(l: Letter) -> Self {
        ReducedWord { letters: vec![l] }
    }

    /// `x_index`.
    pub fn generator(index: usize) -> Self {
        Self::letter(Letter::gen(index))
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Largest generator index used, or 0.
    pub fn max_generator(&self) -> usize {
        self.letters.iter().map(|l| l.index()).max().unwrap_or(0)
    }

    pub fn inverse(&self) -> Self {
        ReducedWord { letters: self.letters.iter().rev().map(|l| l.inverse()).collect() }
    }

    pub fn mul(&self, other: &ReducedWord) -> Self {
        Self::reduce(self.letters.iter().chain(&other.letters).copied())
    }

    pub fn pow(&self, n: i64) -> Self {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut out = ReducedWord::identity();
        for _ in 0..n.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    /// `self * other * self^-1`.
    pub fn conjugate(&self, other: &ReducedWord) -> Self {
        self.mul(other).mul(&self.inverse())
    }

    /// Splits `self = u c u^-1` with `c` cyclically reduced; returns `(u, c)`.
    pub fn cyclic_reduction(&self) -> (ReducedWord, ReducedWord) {
        let n = self.letters.len();
        let mut k = 0;
        while 2 * k + 1 < n && self.letters[k] == self.letters[n - 1 - k].inverse() {
            k += 1;
        }
        (
            ReducedWord { letters: self.letters[..k].to_vec() },
            ReducedWord { letters: self.letters[k..n - k].to_vec() },
        )
    }

    /// Replaces generator `i` by `images[i - 1]` and reduces.
    pub fn substitute(&self, images: &[ReducedWord]) -> ReducedWord {
        let mut out = Vec::new();
        for l in &self.letters {
            let img = &images[l.index() - 1];
            if l.is_inverse() {
                out.extend(img.letters.iter().rev().map(|x| x.inverse()));
            } else {
                out.extend_from_slice(&img.letters);
            }
        }
        Self::reduce(out)
    }

    /// Renders with explicit names, e.g. `x1 x2^-1`.
    pub fn display_with(&self, names: &[String]) -> String {
        if self.is_identity() {
            return "1".into();
        }
        let mut parts = Vec::new();
        let mut i = 0;
        while i < self.letters.len() {
            let l = self.letters[i];
            let mut run = 1;
            while i + run < self.letters.len() && self.letters[i + run] == l {
                run += 1;
            }
            let name = &names[l.index() - 1];
            let exp = if l.is_inverse() { -(run as i64) } else { run as i64 };
            parts.push(if exp == 1 { name.clone() } else { format!("{name}^{exp}") });
            i += run;
        }
        parts.join(" ")
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            write!(f, "ReducedWord(1)")
        } else {
            write!(f, "ReducedWord({self})")
        }
    }
}

impl FromStr for ReducedWord {
    type Err = FreeGroupError;

    /// `"baBB"` is `b a b^-1 b^-1`; `""` and `"1"` are the identity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "1" {
            return Ok(ReducedWord::identity());
        }
        let letters = s
            .chars()
            .map(|c| {
                Letter::from_char(c).ok_or_else(|| FreeGroupError::Parse {
                    input: s.to_string(),
                    reason: format!("unexpected character {c:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReducedWord::reduce(letters))
    }
}

impl Serialize for ReducedWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ReducedWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated generator list such as `"a,babb"`.
pub fn parse_word_list(s: &str) -> Result<Vec<ReducedWord>, FreeGroupError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// All reduced words over `rank` generators of length at most `max_len`, shortlex order.
pub fn enumerate_reduced(rank: usize, max_len: usize) -> Vec<ReducedWord> {
    let mut out = vec![ReducedWord::identity()];
    let mut layer = vec![ReducedWord::identity()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for l in Letter::alphabet(rank) {
                if w.letters.last() == Some(&l.inverse()) {
                    continue;
                }
                let mut letters = w.letters.clone();
                letters.push(l);
                next.push(ReducedWord { letters });
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Folded core graph of a finitely generated subgroup of `F_rank`, basepoint 0.
#[derive(Clone)]
pub struct SubgroupGraph {
    rank: usize,
    out: Vec<BTreeMap<Letter, usize>>,
    /// Spanning-tree parent of each vertex: `(parent, letter)` with `parent --letter--> v`.
    tree_parent: Vec<Option<(usize, Letter)>>,
    /// Basis index (1-based) of each non-tree positive edge `(source, letter)`.
    basis_edges: BTreeMap<(usize, Letter), usize>,
}

impl PartialEq for SubgroupGraph {
    fn eq(&self, other: &Self) -> bool {
        self.out == other.out
    }
}

impl Eq for SubgroupGraph {}

impl fmt::Debug for SubgroupGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let basis: Vec<String> = self.basis().iter().map(|w| w.to_string()).collect();
        write!(f, "SubgroupGraph<{}>", basis.join(","))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the surviving root, preferring the smaller index.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, gone) = if ra <= rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        keep
    }
}

impl SubgroupGraph {
    /// The trivial subgroup of `F_rank`.
    pub fn trivial(rank: usize) -> Self {
        Self::from_edges(rank, 1, &[])
    }

    /// The whole free group `F_rank`.
    pub fn full(rank: usize) -> Self {
        Self::stallings(rank, &(1..=rank).map(ReducedWord::generator).collect::<Vec<_>>())
    }

    /// Stallings folding of the bouquet of `generators`.
    pub fn stallings(rank: usize, generators: &[ReducedWord]) -> Self {
        let rank = generators.iter().map(ReducedWord::max_generator).fold(rank, usize::max);
        let mut n = 1;
        let mut edges = Vec::new();
        for w in generators.iter().filter(|w| !w.is_identity()) {
            let len = w.len();
            let mut prev = 0;
            for (i, &l) in w.letters.iter().enumerate() {
                let next = if i + 1 == len {
                    0
                } else {
                    n += 1;
                    n - 1
                };
                edges.push((prev, l, next));
                prev = next;
            }
        }
        Self::from_edges(rank, n, &edges)
    }

    /// Folds, trims and canonicalises an arbitrary labelled graph with basepoint 0.
    /// Edges `(u, l, v)` may carry inverse letters.
    pub fn from_edges(rank: usize, n: usize, edges: &[(usize, Letter, usize)]) -> Self {
        let mut adj: Vec<Vec<(Letter, usize)>> = vec![Vec::new(); n];
        for &(u, l, v) in edges {
            adj[u].push((l, v));
            adj[v].push((l.inverse(), u));
        }
        let mut uf = UnionFind::new(n);
        let mut pending: Vec<usize> = (0..n).collect();
        while let Some(v) = pending.pop() {
            let v = uf.find(v);
            let mut seen: BTreeMap<Letter, usize> = BTreeMap::new();
            let mut merged = None;
            for &(l, t) in &adj[v] {
                let t = uf.find(t);
                match seen.get(&l) {
                    Some(&t0) if t0 != t => {
                        merged = Some((t0, t));
                        break;
                    }
                    _ => {
                        seen.insert(l, t);
                    }
                }
            }
            match merged {
                Some((x, y)) => {
                    let keep = uf.union(x, y);
                    let gone = if keep == x { y } else { x };
                    let moved = std::mem::take(&mut adj[gone]);
                    adj[keep].extend(moved);
                    pending.push(keep);
                    pending.push(v);
                }
                None => {
                    adj[v] = seen.into_iter().collect();
                }
            }
        }
        let mut out: BTreeMap<usize, BTreeMap<Letter, usize>> = BTreeMap::new();
        for v in 0..n {
            if uf.find(v) != v {
                continue;
            }
            let entry = out.entry(v).or_default();
            for &(l, t) in &adj[v] {
                entry.insert(l, uf.find(t));
            }
        }
        let base = uf.find(0);
        Self::trim_and_canonicalise(rank, base, out)
    }

    fn trim_and_canonicalise(
        rank: usize,
        base: usize,
        mut out: BTreeMap<usize, BTreeMap<Letter, usize>>,
    ) -> Self {
        loop {
            let hanging: Vec<usize> = out
                .iter()
                .filter(|(&v, nbrs)| v != base && nbrs.len() <= 1)
                .map(|(&v, _)| v)
                .collect();
            if hanging.is_empty() {
                break;
            }
            for v in hanging {
                if let Some(nbrs) = out.remove(&v) {
                    for (l, t) in nbrs {
                        if let Some(m) = out.get_mut(&t) {
                            m.remove(&l.inverse());
                        }
                    }
                }
            }
        }
        // BFS renumbering also drops anything not connected to the basepoint.
        let mut order = vec![base];
        let mut index: BTreeMap<usize, usize> = BTreeMap::from([(base, 0)]);
        let mut tree_parent = vec![None];
        let mut queue = VecDeque::from([base]);
        while let Some(v) = queue.pop_front() {
            for (&l, &t) in &out[&v] {
                if !index.contains_key(&t) {
                    index.insert(t, order.len());
                    order.push(t);
                    tree_parent.push(Some((index[&v], l)));
                    queue.push_back(t);
                }
            }
        }
        let canon: Vec<BTreeMap<Letter, usize>> = order
            .iter()
            .map(|v| out[v].iter().map(|(&l, t)| (l, index[t])).collect())
            .collect();
        let tree_parent: Vec<Option<(usize, Letter)>> = tree_parent;
        let mut basis_edges = BTreeMap::new();
        for (u, nbrs) in canon.iter().enumerate() {
            for (&l, &v) in nbrs {
                if l.is_inverse() {
                    continue;
                }
                let is_tree = tree_parent[v] == Some((u, l)) || tree_parent[u] == Some((v, l.inverse()));
                if !is_tree {
                    let k = basis_edges.len() + 1;
                    basis_edges.insert((u, l), k);
                }
            }
        }
        SubgroupGraph { rank, out: canon, tree_parent, basis_edges }
    }

    pub fn ambient_rank(&self) -> usize {
        self.rank
    }

    pub fn vertex_count(&self) -> usize {
        self.out.len()
    }

    /// Number of (positively oriented) edges.
    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|m| m.keys().filter(|l| !l.is_inverse()).count()).sum()
    }

    /// `#edges - #vertices + 1`.
    pub fn rank(&self) -> usize {
        self.basis_edges.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.rank() == 0
    }

    /// Positive edges `(source, letter, target)` in canonical order.
    pub fn edges(&self) -> Vec<(usize, Letter, usize)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.out.iter().enumerate() {
            for (&l, &v) in nbrs {
                if !l.is_inverse() {
                    out.push((u, l, v));
                }
            }
        }
        out
    }

    pub fn follow(&self, v: usize, l: Letter) -> Option<usize> {
        self.out[v].get(&l).copied()
    }

    /// End vertex of the path labelled `w` starting at `from`, if it exists.
    pub fn read(&self, from: usize, w: &ReducedWord) -> Option<usize> {
        w.letters.iter().try_fold(from, |v, &l| self.follow(v, l))
    }

    /// Label of the spanning-tree path from the basepoint to `v`.
    pub fn tree_path(&self, mut v: usize) -> ReducedWord {
        let mut rev = Vec::new();
        while let Some((p, l)) = self.tree_parent[v] {
            rev.push(l);
            v = p;
        }
        rev.reverse();
        ReducedWord { letters: rev }
    }

    pub fn member(&self, w: &ReducedWord) -> bool {
        self.read(0, w) == Some(0)
    }

    /// Free basis from the spanning tree: one element per non-tree edge.
    pub fn basis(&self) -> Vec<ReducedWord> {
        self.basis_edges
            .keys()
            .map(|&(u, l)| {
                let v = self.out[u][&l];
                self.tree_path(u).mul(&ReducedWord::letter(l)).mul(&self.tree_path(v).inverse())
            })
            .collect()
    }

    /// Writes a member in the free basis returned by [`basis`](Self::basis);
    /// letter `x_k` of the result stands for the `k`-th basis element.
    pub fn rewrite_in_basis(&self, w: &ReducedWord) -> Result<ReducedWord, FreeGroupError> {
        let mut v = 0;
        let mut out = Vec::new();
        for &l in &w.letters {
            let t = self
                .follow(v, l)
                .ok_or_else(|| FreeGroupError::NotAMember { word: w.to_string() })?;
            let key = if l.is_inverse() { (t, l.inverse()) } else { (v, l) };
            if let Some(&k) = self.basis_edges.get(&key) {
                out.push(if l.is_inverse() { Letter::inv_gen(k) } else { Letter::gen(k) });
            }
            v = t;
        }
        if v != 0 {
            return Err(FreeGroupError::NotAMember { word: w.to_string() });
        }
        Ok(ReducedWord::reduce(out))
    }

    /// Inverse of [`rewrite_in_basis`](Self::rewrite_in_basis).
    pub fn expand(&self, basis_word: &ReducedWord) -> ReducedWord {
        basis_word.substitute(&self.basis())
    }

    /// `K <= self`.
    pub fn contains_subgroup(&self, k: &SubgroupGraph) -> bool {
        k.basis().iter().all(|b| self.member(b))
    }

    /// Subgroup generated by `self` and `other`.
    pub fn join(&self, other: &SubgroupGraph) -> SubgroupGraph {
        let mut gens = self.basis();
        gens.extend(other.basis());
        SubgroupGraph::stallings(self.rank.max(other.rank), &gens)
    }

    /// `g H g^-1`.
    pub fn conjugate_by(&self, g: &ReducedWord) -> SubgroupGraph {
        let gens: Vec<_> = self.basis().iter().map(|b| g.conjugate(b)).collect();
        SubgroupGraph::stallings(self.rank, &gens)
    }

    /// Image under the substitution `x_i -> images[i-1]` (an endomorphism of the ambient group).
    pub fn image(&self, images: &[ReducedWord], target_rank: usize) -> SubgroupGraph {
        let gens: Vec<_> = self.basis().iter().map(|b| b.substitute(images)).collect();
        SubgroupGraph::stallings(target_rank, &gens)
    }

    /// Fiber product restricted to the component of `(0, 0)`: the subgroup `H ∩ K`.
    pub fn intersect(&self, other: &SubgroupGraph) -> SubgroupGraph {
        let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::from([((0, 0), 0)]);
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        let mut edges = Vec::new();
        while let Some((u, v)) = queue.pop_front() {
            let src = index[&(u, v)];
            for (&l, &u2) in &self.out[u] {
                if l.is_inverse() {
                    continue;
                }
                if let Some(&v2) = other.out[v].get(&l) {
                    let next = index.len();
                    let dst = *index.entry((u2, v2)).or_insert_with(|| {
                        queue.push_back((u2, v2));
                        next
                    });
                    edges.push((src, l, dst));
                }
            }
            for (&l, &u2) in &self.out[u] {
                if !l.is_inverse() {
                    continue;
                }
                if let Some(&v2) = other.out[v].get(&l) {
                    let next = index.len();
                    if !index.contains_key(&(u2, v2)) {
                        index.insert((u2, v2), next);
                        queue.push_back((u2, v2));
                    }
                }
            }
        }
        SubgroupGraph::from_edges(self.rank.max(other.rank), index.len(), &edges)
    }

    /// If `w` is conjugate into this subgroup, returns `g` with `w = g h g^-1`, `h` a member.
    pub fn conjugate_into(&self, w: &ReducedWord) -> Option<ReducedWord> {
        let (u, c) = w.cyclic_reduction();
        if c.is_identity() {
            return Some(ReducedWord::identity());
        }
        (0..self.vertex_count())
            .find(|&v| self.read(v, &c) == Some(v))
            .map(|v| u.mul(&self.tree_path(v).inverse()))
    }

    /// Malnormality of `self` inside `ambient` (a subgroup of the same free group).
    ///
    /// `self` is rewritten in the free basis of `ambient`; it is malnormal there
    /// iff every off-diagonal component of the fiber product of its graph with
    /// itself is a tree.
    pub fn malnormal_in(&self, ambient: &SubgroupGraph) -> Result<MalnormalVerdict, FreeGroupError> {
        let mut rewritten = Vec::new();
        for b in self.basis() {
            if !ambient.member(&b) {
                return Err(FreeGroupError::NotASubgroup { word: b.to_string() });
            }
            rewritten.push(ambient.rewrite_in_basis(&b)?);
        }
        let inner = SubgroupGraph::stallings(ambient.rank(), &rewritten);
        match inner.self_product_witness() {
            None => Ok(MalnormalVerdict { malnormal: true, witness: None }),
            Some((g, h)) => Ok(MalnormalVerdict {
                malnormal: false,
                witness: Some(MalnormalWitness { conjugator: ambient.expand(&g), element: ambient.expand(&h) }),
            }),
        }
    }

    /// Looks for a cycle in an off-diagonal component of `self × self`.
    /// Returns `(g, h)` with `h` and `g h g^-1` in the subgroup and `g` outside it.
    fn self_product_witness(&self) -> Option<(ReducedWord, ReducedWord)> {
        let n = self.vertex_count();
        let id = |u: usize, v: usize| u * n + v;
        let mut uf = UnionFind::new(n * n);
        let mut edge_count = vec![0usize; n * n];
        let edges = self.edges();
        let mut prod_edges = Vec::new();
        for &(u, l, u2) in &edges {
            for &(v, l2, v2) in &edges {
                if l == l2 && u != v {
                    prod_edges.push(((u, v), l, (u2, v2)));
                    uf.union(id(u, v), id(u2, v2));
                }
            }
        }
        let mut vertex_count = vec![0usize; n * n];
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    vertex_count[uf.find(id(u, v))] += 1;
                }
            }
        }
        for e in &prod_edges {
            edge_count[uf.find(id(e.0 .0, e.0 .1))] += 1;
        }
        let root = (0..n * n).find(|&r| uf.parent[r] == r && edge_count[r] >= vertex_count[r] && vertex_count[r] > 0)?;
        let start = (0..n * n).find(|&x| uf.find(x) == root).map(|x| (x / n, x % n))?;
        // BFS tree in the component; the first non-tree edge closes a loop.
        let mut parent: BTreeMap<(usize, usize), Option<((usize, usize), Letter)>> = BTreeMap::from([(start, None)]);
        let mut queue = VecDeque::from([start]);
        let mut used = std::collections::BTreeSet::new();
        let path_to = |parent: &BTreeMap<(usize, usize), Option<((usize, usize), Letter)>>, mut x: (usize, usize)| {
            let mut rev = Vec::new();
            while let Some(Some((p, l))) = parent.get(&x) {
                rev.push(*l);
                x = *p;
            }
            rev.reverse();
            ReducedWord::reduce(rev)
        };
        while let Some((u, v)) = queue.pop_front() {
            for (&l, &u2) in &self.out[u] {
                let Some(&v2) = self.out[v].get(&l) else { continue };
                let key = if l.is_inverse() { ((u2, v2), l.inverse()) } else { ((u, v), l) };
                if !used.insert(key) {
                    continue;
                }
                if let std::collections::btree_map::Entry::Vacant(e) = parent.entry((u2, v2)) {
                    e.insert(Some(((u, v), l)));
                    queue.push_back((u2, v2));
                } else {
                    let loop_word = path_to(&parent, (u, v))
                        .mul(&ReducedWord::letter(l))
                        .mul(&path_to(&parent, (u2, v2)).inverse());
                    let alpha = self.tree_path(start.0);
                    let beta = self.tree_path(start.1);
                    let g = beta.mul(&alpha.inverse());
                    let h = alpha.conjugate(&loop_word);
                    return Some((g, h));
                }
            }
        }
        None
    }

    /// Coset representatives `gK`, `g` ranging over words of length `<= bound` in this
    /// subgroup's basis; distinct representatives are certified by membership tests.
    pub fn coset_neighbors(&self, k: &SubgroupGraph, bound: usize) -> Result<Vec<CosetRep>, FreeGroupError> {
        for b in k.basis() {
            if !self.member(&b) {
                return Err(FreeGroupError::NotASubgroup { word: b.to_string() });
            }
        }
        let mut reps: Vec<CosetRep> = Vec::new();
        for bw in enumerate_reduced(self.rank(), bound) {
            let g = self.expand(&bw);
            let g_inv = g.inverse();
            if reps.iter().all(|r| !k.member(&g_inv.mul(&r.word))) {
                reps.push(CosetRep { basis_word: bw, word: g });
            }
        }
        Ok(reps)
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph {name} {{\n  node [shape=circle];\n");
        for v in 0..self.vertex_count() {
            if v == 0 {
                s.push_str("  0 [shape=doublecircle, label=\"0*\"];\n");
            } else {
                s.push_str(&format!("  {v};\n"));
            }
        }
        for (u, l, v) in self.edges() {
            s.push_str(&format!("  {u} -> {v} [label=\"{}\"];\n", l.to_char()));
        }
        s.push_str("}\n");
        s
    }

    pub fn summary(&self) -> SubgroupSummary {
        SubgroupSummary {
            ambient_rank: self.rank,
            vertices: self.vertex_count(),
            edges: self
                .edges()
                .into_iter()
                .map(|(u, l, v)| (u, l.to_char().to_string(), v))
                .collect(),
            rank: self.rank(),
            basis: self.basis(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubgroupSummary {
    pub ambient_rank: usize,
    pub vertices: usize,
    pub edges: Vec<(usize, String, usize)>,
    pub rank: usize,
    pub basis: Vec<ReducedWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalnormalWitness {
    /// `g` outside the subgroup.
    pub conjugator: ReducedWord,
    /// Nontrivial `h` with `h` and `g h g^-1` both in the subgroup.
    pub element: ReducedWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MalnormalVerdict {
    pub malnormal: bool,
    pub witness: Option<MalnormalWitness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CosetRep {
    /// Representative written in the ambient subgroup's basis.
    pub basis_word: ReducedWord,
    pub word: ReducedWord,
}
