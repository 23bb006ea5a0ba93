//! Graphs of groups over a free ambient group, the four elementary moves
//! between them, complexity monitors and the finite-stage Scott pipeline.
//!
//! Vertex and edge groups are finitely generated subgroups of one ambient
//! `F_r`. Each edge end carries a conjugator `c`, and the edge group `H`
//! includes into the end's vertex group as `h -> c h c^-1`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freegrp::{FreeGroupError, ReducedWord, SubgroupGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GogError {
    #[error("invalid graph of groups: {0}")]
    Invalid(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("condition (*) fails at edge {edge}: {detail} (witness {witness})")]
    StarViolation { edge: String, witness: ReducedWord, detail: String },
    #[error("not realizable in a free ambient: {0}")]
    NotRealizable(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("monotonicity violated between levels {level} and {next}: {detail}")]
    MonotonicityViolation { level: usize, next: usize, monitor: String, detail: String, witness: Option<ReducedWord> },
    #[error(transparent)]
    FreeGroup(#[from] FreeGroupError),
}

type Res<T> = Result<T, GogError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub name: String,
    pub group: SubgroupGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEnd {
    pub vertex: usize,
    pub conj: ReducedWord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub ends: [EdgeEnd; 2],
    pub group: SubgroupGraph,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.ends[0].vertex == self.ends[1].vertex
    }

    /// The edge group as a subgroup of the vertex group at end `i`.
    pub fn pushed(&self, i: usize) -> SubgroupGraph {
        self.group.conjugate_by(&self.ends[i].conj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphOfGroups {
    pub rank: usize,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GeneratorProof {
    pub generator: ReducedWord,
    pub image: ReducedWord,
    /// The image written in the vertex group's basis; `None` when it is not a member.
    pub rewriting: Option<ReducedWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InclusionCertificate {
    pub edge: usize,
    pub end: usize,
    pub vertex: usize,
    pub proofs: Vec<GeneratorProof>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    BadVertex { edge: usize, vertex: usize },
    NotIncluded { edge: usize, end: usize, vertex: usize, witness: ReducedWord },
    Disconnected { vertex: usize },
    RankMismatch { what: String, rank: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub valid: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub certificates: Vec<InclusionCertificate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScottMonitor {
    pub betti: usize,
    pub w_count: usize,
    pub w_vertices: Vec<usize>,
    pub ell_witnesses: Vec<ReducedWord>,
}

fn sorted_words(words: impl IntoIterator<Item = ReducedWord>) -> Vec<ReducedWord> {
    let set: BTreeSet<(usize, ReducedWord)> = words.into_iter().map(|w| (w.len(), w)).collect();
    set.into_iter().map(|(_, w)| w).collect()
}

/// A basis element of `a` outside `b`, if any.
fn escapee(a: &SubgroupGraph, b: &SubgroupGraph) -> Option<ReducedWord> {
    a.basis().into_iter().find(|w| !b.member(w))
}

fn connected_components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(c: &mut Vec<usize>, x: usize) -> usize {
        if c[x] != x {
            let r = find(c, c[x]);
            c[x] = r;
        }
        c[x]
    }
    for &(u, v) in edges {
        let (a, b) = (find(&mut comp, u), find(&mut comp, v));
        if a != b {
            comp[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|x| find(&mut comp, x)).collect()
}

impl GraphOfGroups {
    pub fn new(rank: usize, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Self {
        GraphOfGroups { rank, vertices, edges }
    }

    pub fn single_vertex(rank: usize, name: &str, group: SubgroupGraph) -> Self {
        GraphOfGroups { rank, vertices: vec![Vertex { name: name.into(), group }], edges: vec![] }
    }

    pub fn vertex(name: &str, rank: usize, gens: &[ReducedWord]) -> Vertex {
        Vertex { name: name.into(), group: SubgroupGraph::stallings(rank, gens) }
    }

    /// Edge `from -- to` with trivial conjugators.
    pub fn edge(name: &str, from: usize, to: usize, rank: usize, gens: &[ReducedWord]) -> Edge {
        let end = |vertex| EdgeEnd { vertex, conj: ReducedWord::identity() };
        Edge { name: name.into(), ends: [end(from), end(to)], group: SubgroupGraph::stallings(rank, gens) }
    }

    pub fn betti(&self) -> usize {
        let ends: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.ends[0].vertex, e.ends[1].vertex)).collect();
        let comp = connected_components(self.vertices.len(), &ends);
        let components = (0..self.vertices.len()).filter(|&v| comp[v] == v).count();
        self.edges.len() + components - self.vertices.len()
    }

    pub fn validate(&self) -> Validation {
        let mut diagnostics = Vec::new();
        let mut certificates = Vec::new();
        for v in &self.vertices {
            if v.group.ambient_rank() > self.rank {
                diagnostics.push(Diagnostic::RankMismatch { what: v.name.clone(), rank: v.group.ambient_rank() });
            }
        }
        for (ei, e) in self.edges.iter().enumerate() {
            for (i, end) in e.ends.iter().enumerate() {
                let Some(v) = self.vertices.get(end.vertex) else {
                    diagnostics.push(Diagnostic::BadVertex { edge: ei, vertex: end.vertex });
                    continue;
                };
                let mut proofs = Vec::new();
                for g in e.group.basis() {
                    let image = end.conj.conjugate(&g);
                    let rewriting = v.group.rewrite_in_basis(&image).ok();
                    if rewriting.is_none() {
                        diagnostics.push(Diagnostic::NotIncluded {
                            edge: ei,
                            end: i,
                            vertex: end.vertex,
                            witness: image.clone(),
                        });
                    }
                    proofs.push(GeneratorProof { generator: g, image, rewriting });
                }
                let holds = proofs.iter().all(|p| p.rewriting.is_some());
                certificates.push(InclusionCertificate { edge: ei, end: i, vertex: end.vertex, proofs, holds });
            }
        }
        if diagnostics.iter().all(|d| !matches!(d, Diagnostic::BadVertex { .. })) {
            let ends: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.ends[0].vertex, e.ends[1].vertex)).collect();
            let comp = connected_components(self.vertices.len(), &ends);
            for (v, &c) in comp.iter().enumerate() {
                if c != 0 {
                    diagnostics.push(Diagnostic::Disconnected { vertex: v });
                }
            }
        }
        Validation { valid: diagnostics.is_empty(), diagnostics, certificates }
    }

    /// Betti number, the vertices with a proper incident inclusion, and the
    /// vertex-group generators recorded as elliptic witnesses.
    pub fn monitor(&self) -> ScottMonitor {
        let mut w_vertices = Vec::new();
        for (vi, v) in self.vertices.iter().enumerate() {
            let proper = self.edges.iter().any(|e| {
                (0..2).any(|i| e.ends[i].vertex == vi && escapee(&v.group, &e.pushed(i)).is_some())
            });
            if proper {
                w_vertices.push(vi);
            }
        }
        ScottMonitor {
            betti: self.betti(),
            w_count: w_vertices.len(),
            w_vertices,
            ell_witnesses: sorted_words(self.vertices.iter().flat_map(|v| v.group.basis())),
        }
    }

    /// True if `w` is conjugate into some vertex group.
    pub fn is_elliptic(&self, w: &ReducedWord) -> bool {
        self.vertices.iter().any(|v| v.group.conjugate_into(w).is_some())
    }

    fn remove_vertex(&mut self, idx: usize) {
        self.vertices.remove(idx);
        for e in &mut self.edges {
            for end in &mut e.ends {
                if end.vertex > idx {
                    end.vertex -= 1;
                }
            }
        }
    }

    /// Merges vertex `gone` into `keep`: `gone`'s group is conjugated by `k`
    /// and joined to `keep`'s, and conjugators at `gone` are prefixed by `k`.
    fn merge_vertices(&mut self, keep: usize, gone: usize, k: &ReducedWord) {
        let moved = self.vertices[gone].group.conjugate_by(k);
        self.vertices[keep].group = self.vertices[keep].group.join(&moved);
        for e in &mut self.edges {
            for end in &mut e.ends {
                if end.vertex == gone {
                    end.vertex = keep;
                    end.conj = k.mul(&end.conj);
                }
            }
        }
        self.remove_vertex(gone);
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph gog {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let gens: Vec<String> = v.group.basis().iter().map(|w| w.to_string()).collect();
            s.push_str(&format!("  v{i} [label=\"{}: <{}>\"];\n", v.name, gens.join(",")));
        }
        for e in &self.edges {
            let gens: Vec<String> = e.group.basis().iter().map(|w| w.to_string()).collect();
            s.push_str(&format!(
                "  v{} -- v{} [label=\"{}: <{}>\"];\n",
                e.ends[0].vertex,
                e.ends[1].vertex,
                e.name,
                gens.join(",")
            ));
        }
        s.push_str("}\n");
        s
    }
}

/// An elementary move, indices referring to the graph it is applied to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "move", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FoldMove {
    Subdivide { edge: usize },
    Collapse { edge: usize },
    /// Identifies `conjugator . edge1` with `edge2` at their shared `vertex`.
    Fold { edge1: usize, edge2: usize, vertex: usize, conjugator: ReducedWord },
    /// Kills `killed` (elements of the vertex group) through the idempotent
    /// endomorphism `realization` of the ambient group.
    GroupFold { vertex: usize, killed: Vec<ReducedWord>, realization: Vec<ReducedWord> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StarEntry {
    /// Edge of the moved graph.
    pub edge: usize,
    pub pushed: Vec<ReducedWord>,
    pub target: Vec<ReducedWord>,
    pub equal: bool,
}

/// For every edge of the moved graph, the pushed source edge group against
/// the resulting edge group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StarCertificate {
    pub entries: Vec<StarEntry>,
    pub holds: bool,
}

impl StarCertificate {
    fn from_pairs(pairs: Vec<(usize, SubgroupGraph, SubgroupGraph)>) -> Self {
        let entries: Vec<StarEntry> = pairs
            .into_iter()
            .map(|(edge, p, t)| StarEntry { edge, equal: p == t, pushed: p.basis(), target: t.basis() })
            .collect();
        let holds = entries.iter().all(|e| e.equal);
        StarCertificate { entries, holds }
    }
}

fn check_endomorphism(rank: usize, images: &[ReducedWord]) -> Res<()> {
    if images.len() != rank {
        return Err(GogError::Input(format!("expected {rank} generator images, got {}", images.len())));
    }
    if let Some(w) = images.iter().find(|w| w.max_generator() > rank) {
        return Err(GogError::Input(format!("image {w} leaves the rank-{rank} ambient")));
    }
    Ok(())
}

fn identity_map(rank: usize) -> Vec<ReducedWord> {
    (1..=rank).map(ReducedWord::generator).collect()
}

pub fn apply_move(g: &GraphOfGroups, m: &FoldMove) -> Res<(GraphOfGroups, StarCertificate)> {
    let mut out = g.clone();
    let edge_at = |e: usize| g.edges.get(e).ok_or_else(|| GogError::Input(format!("no edge {e}")));
    let unchanged = |out: &GraphOfGroups| {
        StarCertificate::from_pairs(out.edges.iter().enumerate().map(|(i, e)| (i, e.group.clone(), e.group.clone())).collect())
    };
    match m {
        FoldMove::Subdivide { edge } => {
            let e = edge_at(*edge)?.clone();
            let mid = out.vertices.len();
            out.vertices.push(Vertex { name: format!("{}.m", e.name), group: e.group.clone() });
            out.edges[*edge].ends[1] = EdgeEnd { vertex: mid, conj: ReducedWord::identity() };
            out.edges.push(Edge {
                name: format!("{}'", e.name),
                ends: [EdgeEnd { vertex: mid, conj: ReducedWord::identity() }, e.ends[1].clone()],
                group: e.group.clone(),
            });
            let cert = unchanged(&out);
            Ok((out, cert))
        }
        FoldMove::Collapse { edge } => {
            let e = edge_at(*edge)?.clone();
            if e.is_loop() {
                return Err(GogError::NotRealizable(format!("collapsing loop {} adds a stable letter", e.name)));
            }
            let (keep, gone) = (e.ends[0].vertex.min(e.ends[1].vertex), e.ends[0].vertex.max(e.ends[1].vertex));
            let (ck, cg) = if e.ends[0].vertex == keep { (0, 1) } else { (1, 0) };
            let k = e.ends[ck].conj.mul(&e.ends[cg].conj.inverse());
            out.edges.remove(*edge);
            out.merge_vertices(keep, gone, &k);
            let cert = unchanged(&out);
            Ok((out, cert))
        }
        FoldMove::Fold { edge1, edge2, vertex, conjugator } => {
            if edge1 == edge2 {
                return Err(GogError::Input("an edge cannot be folded with itself".into()));
            }
            let (e1, e2) = (edge_at(*edge1)?.clone(), edge_at(*edge2)?.clone());
            let side = |e: &Edge| -> Res<usize> {
                if e.is_loop() {
                    return Err(GogError::NotRealizable(format!("folding loop {} would invert an edge", e.name)));
                }
                (0..2)
                    .find(|&i| e.ends[i].vertex == *vertex)
                    .ok_or_else(|| GogError::Input(format!("edge {} does not meet vertex {vertex}", e.name)))
            };
            let (i1, i2) = (side(&e1)?, side(&e2)?);
            let v = &g.vertices[*vertex];
            if !v.group.member(conjugator) {
                return Err(GogError::Input(format!("conjugator {conjugator} is not in the group of {}", v.name)));
            }
            let (w1, w2) = (e1.ends[1 - i1].vertex, e2.ends[1 - i2].vertex);
            if w1 == w2 {
                return Err(GogError::NotRealizable(format!(
                    "edges {} and {} have the same far vertex; the fold would add a stable letter to it",
                    e1.name, e2.name
                )));
            }
            let c1 = conjugator.mul(&e1.ends[i1].conj);
            let c2 = e2.ends[i2].conj.clone();
            let p1 = e1.group.conjugate_by(&c1);
            let p2 = e2.group.conjugate_by(&c2);
            if p1 != p2 {
                let witness = escapee(&p2, &p1).or_else(|| escapee(&p1, &p2)).expect("distinct subgroups");
                return Err(GogError::StarViolation {
                    edge: format!("{}+{}", e1.name, e2.name),
                    witness,
                    detail: "the two edge groups differ at the shared vertex".into(),
                });
            }
            // h2 = u h1 u^-1 with u = c2^-1 c1; bring w2 into w1's frame
            let u = c2.inverse().mul(&c1);
            let d1 = e1.ends[1 - i1].conj.clone();
            let d2 = e2.ends[1 - i2].conj.clone();
            let k = d1.mul(&u.inverse()).mul(&d2.inverse());
            out.edges[*edge1].ends[i1].conj = c1;
            out.edges.remove(*edge2);
            let keep_name = out.vertices[w1].name.clone();
            let gone_name = out.vertices[w2].name.clone();
            let (keep, gone, k) = if w1 < w2 { (w1, w2, k) } else { (w2, w1, k.inverse()) };
            out.merge_vertices(keep, gone, &k);
            out.vertices[keep].name = format!("{keep_name}+{gone_name}");
            let kept = if edge2 < edge1 { edge1 - 1 } else { *edge1 };
            let mut pairs: Vec<_> = out.edges.iter().enumerate().map(|(i, e)| (i, e.group.clone(), e.group.clone())).collect();
            pairs[kept].1 = e2.group.conjugate_by(&c2).conjugate_by(&out.edges[kept].ends[i1].conj.inverse());
            Ok((out, StarCertificate::from_pairs(pairs)))
        }
        FoldMove::GroupFold { vertex, killed, realization } => {
            check_endomorphism(g.rank, realization)?;
            let v = g.vertices.get(*vertex).ok_or_else(|| GogError::Input(format!("no vertex {vertex}")))?;
            for k in killed {
                if !v.group.member(k) {
                    return Err(GogError::Input(format!("{k} is not in the group of {}", v.name)));
                }
                if !k.substitute(realization).is_identity() {
                    return Err(GogError::NotRealizable(format!("the realization does not kill {k}")));
                }
            }
            for (i, img) in realization.iter().enumerate() {
                if img.substitute(realization) != *img {
                    return Err(GogError::NotRealizable(format!(
                        "the realization is not idempotent on generator {}",
                        ReducedWord::generator(i + 1)
                    )));
                }
            }
            for v in &mut out.vertices {
                v.group = v.group.image(realization, g.rank);
            }
            let mut pairs = Vec::new();
            for (i, e) in out.edges.iter_mut().enumerate() {
                let pushed = e.group.image(realization, g.rank);
                e.group = pushed.clone();
                for end in &mut e.ends {
                    end.conj = end.conj.substitute(realization);
                }
                pairs.push((i, pushed.clone(), e.group.clone()));
            }
            let bad = out.validate();
            if !bad.valid {
                return Err(GogError::NotRealizable(format!("group-fold breaks the graph of groups: {:?}", bad.diagnostics)));
            }
            Ok((out, StarCertificate::from_pairs(pairs)))
        }
    }
}

/// A step of an edge path in the target: target edge and traversal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub edge: usize,
    #[serde(default)]
    pub reversed: bool,
}

impl PathStep {
    fn start(&self, t: &GraphOfGroups) -> usize {
        t.edges[self.edge].ends[usize::from(self.reversed)].vertex
    }

    fn end(&self, t: &GraphOfGroups) -> usize {
        t.edges[self.edge].ends[usize::from(!self.reversed)].vertex
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphismSpec {
    pub source: GraphOfGroups,
    pub target: GraphOfGroups,
    pub vertex_map: Vec<usize>,
    pub edge_map: Vec<Vec<PathStep>>,
    /// Homomorphism of ambient groups: images of the source generators.
    pub phi: Vec<ReducedWord>,
    /// Elements to be killed by group-folds.
    pub killed: Vec<ReducedWord>,
    /// Idempotent endomorphism of the source ambient realizing the kills.
    pub realization: Vec<ReducedWord>,
}

impl MorphismSpec {
    /// Identity morphism of a graph of groups.
    pub fn identity(g: &GraphOfGroups) -> Self {
        MorphismSpec {
            source: g.clone(),
            target: g.clone(),
            vertex_map: (0..g.vertices.len()).collect(),
            edge_map: (0..g.edges.len()).map(|e| vec![PathStep { edge: e, reversed: false }]).collect(),
            phi: identity_map(g.rank),
            killed: vec![],
            realization: identity_map(g.rank),
        }
    }

    /// Checks the graph map is simplicial and the group map respects the groups.
    pub fn validate(&self) -> Res<()> {
        let (s, t) = (&self.source, &self.target);
        check_endomorphism(s.rank, &self.phi)?;
        check_endomorphism(s.rank, &self.realization)?;
        if let Some(w) = self.phi.iter().find(|w| w.max_generator() > t.rank) {
            return Err(GogError::Input(format!("image {w} leaves the target ambient")));
        }
        for (name, g) in [("source", s), ("target", t)] {
            let v = g.validate();
            if !v.valid {
                return Err(GogError::Invalid(format!("{name}: {:?}", v.diagnostics)));
            }
        }
        if self.vertex_map.len() != s.vertices.len() || self.edge_map.len() != s.edges.len() {
            return Err(GogError::Input("vertex or edge map has the wrong length".into()));
        }
        for (v, &tv) in self.vertex_map.iter().enumerate() {
            let tg = t.vertices.get(tv).ok_or_else(|| GogError::Input(format!("vertex {v} maps to missing {tv}")))?;
            let img = s.vertices[v].group.image(&self.phi, t.rank);
            if let Some(w) = escapee(&img, &tg.group) {
                return Err(GogError::Invalid(format!("image of vertex {} leaves {} (witness {w})", s.vertices[v].name, tg.name)));
            }
        }
        for (ei, path) in self.edge_map.iter().enumerate() {
            let e = &s.edges[ei];
            let (a, b) = (self.vertex_map[e.ends[0].vertex], self.vertex_map[e.ends[1].vertex]);
            if let Some(st) = path.iter().find(|st| st.edge >= t.edges.len()) {
                return Err(GogError::Input(format!("edge {} maps to missing edge {}", e.name, st.edge)));
            }
            let mut at = a;
            for st in path {
                if st.start(t) != at {
                    return Err(GogError::Input(format!("the path of edge {} is not connected", e.name)));
                }
                at = st.end(t);
            }
            if at != b {
                return Err(GogError::Input(format!("the path of edge {} does not end at the image vertex", e.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppliedMove {
    #[serde(flatten)]
    pub mv: FoldMove,
    pub certificate: StarCertificate,
    pub monitor: ScottMonitor,
    /// Every earlier elliptic witness is still elliptic after the move.
    pub witnesses_elliptic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub initial: ScottMonitor,
    pub moves: Vec<AppliedMove>,
    pub isomorphic: bool,
    pub mismatch: Option<String>,
    pub monotone: bool,
    pub budget: usize,
}

struct Tracker {
    g: GraphOfGroups,
    vertex_map: Vec<usize>,
    edge_map: Vec<Vec<PathStep>>,
    /// Word map pushed through on group-folds.
    ell_map: Vec<ReducedWord>,
}

impl Tracker {
    fn step(&mut self, mv: FoldMove, t: &GraphOfGroups, out: &mut Vec<AppliedMove>, budget: usize) -> Res<()> {
        if out.len() >= budget {
            return Err(GogError::BudgetExceeded(format!("more than {budget} moves")));
        }
        let before = self.g.monitor();
        let (next, certificate) = apply_move(&self.g, &mv)?;
        match &mv {
            FoldMove::Subdivide { edge } => {
                let path = self.edge_map[*edge].clone();
                let mid = path[0].end(t);
                self.vertex_map.push(mid);
                self.edge_map[*edge] = vec![path[0]];
                self.edge_map.push(path[1..].to_vec());
            }
            FoldMove::Collapse { edge } => {
                let e = &self.g.edges[*edge];
                let gone = e.ends[0].vertex.max(e.ends[1].vertex);
                self.edge_map.remove(*edge);
                self.vertex_map.remove(gone);
            }
            FoldMove::Fold { edge1, edge2, vertex, .. } => {
                let far = |e: &Edge| e.ends[usize::from(e.ends[0].vertex == *vertex)].vertex;
                let gone = far(&self.g.edges[*edge1]).max(far(&self.g.edges[*edge2]));
                self.edge_map.remove(*edge2);
                self.vertex_map.remove(gone);
            }
            FoldMove::GroupFold { realization, .. } => {
                self.ell_map = self.ell_map.iter().map(|w| w.substitute(realization)).collect();
            }
        }
        let witnesses_elliptic = before.ell_witnesses.iter().all(|w| match &mv {
            FoldMove::GroupFold { realization, .. } => next.is_elliptic(&w.substitute(realization)),
            _ => next.is_elliptic(w),
        });
        self.g = next;
        out.push(AppliedMove { mv, certificate, monitor: self.g.monitor(), witnesses_elliptic });
        Ok(())
    }

    /// Side of the target edge that end `i` of edge `e` maps to.
    fn target_side(&self, e: usize, i: usize) -> Option<(usize, usize)> {
        match self.edge_map[e].as_slice() {
            [st] => Some((st.edge, usize::from(st.reversed) ^ i)),
            _ => None,
        }
    }
}

/// Decomposes the morphism into subdivisions, then repeatedly: collapses of
/// edges sent to points, group-folds at vertices holding killed elements,
/// and folds of edge pairs with the same image, in lexicographic order.
pub fn fold_decompose(spec: &MorphismSpec, budget: usize) -> Res<Decomposition> {
    spec.validate()?;
    let t = &spec.target;
    for (i, img) in spec.realization.iter().enumerate() {
        let x = ReducedWord::generator(i + 1);
        if img.substitute(&spec.phi) != x.substitute(&spec.phi) {
            return Err(GogError::NotRealizable(format!("phi does not factor through the realization at {x}")));
        }
    }
    let mut tr = Tracker {
        g: spec.source.clone(),
        vertex_map: spec.vertex_map.clone(),
        edge_map: spec.edge_map.clone(),
        ell_map: identity_map(spec.source.rank),
    };
    let initial = tr.g.monitor();
    let mut moves = Vec::new();
    while let Some(e) = (0..tr.edge_map.len()).find(|&e| tr.edge_map[e].len() > 1) {
        tr.step(FoldMove::Subdivide { edge: e }, t, &mut moves, budget)?;
    }
    loop {
        if let Some(edge) = (0..tr.edge_map.len()).find(|&e| tr.edge_map[e].is_empty()) {
            tr.step(FoldMove::Collapse { edge }, t, &mut moves, budget)?;
            continue;
        }
        let live: Vec<ReducedWord> =
            spec.killed.iter().map(|k| k.substitute(&tr.ell_map)).filter(|k| !k.is_identity()).collect();
        if let Some(vertex) = (0..tr.g.vertices.len()).find(|&v| live.iter().any(|k| tr.g.vertices[v].group.member(k))) {
            let killed = live.into_iter().filter(|k| tr.g.vertices[vertex].group.member(k)).collect();
            let mv = FoldMove::GroupFold { vertex, killed, realization: spec.realization.clone() };
            tr.step(mv, t, &mut moves, budget)?;
            continue;
        }
        let mut fold = None;
        'search: for e1 in 0..tr.g.edges.len() {
            for e2 in e1 + 1..tr.g.edges.len() {
                for i1 in 0..2 {
                    for i2 in 0..2 {
                        let v = tr.g.edges[e1].ends[i1].vertex;
                        if tr.g.edges[e2].ends[i2].vertex == v
                            && tr.target_side(e1, i1).is_some()
                            && tr.target_side(e1, i1) == tr.target_side(e2, i2)
                        {
                            fold = Some((e1, e2, v));
                            break 'search;
                        }
                    }
                }
            }
        }
        match fold {
            Some((edge1, edge2, vertex)) => {
                let mv = FoldMove::Fold { edge1, edge2, vertex, conjugator: ReducedWord::identity() };
                tr.step(mv, t, &mut moves, budget)?;
            }
            None => break,
        }
    }
    let mismatch = isomorphism_mismatch(&tr, spec);
    let mut monotone = true;
    let mut prev = &initial;
    for m in &moves {
        monotone &= m.monitor.betti <= prev.betti && m.monitor.w_count <= prev.w_count;
        prev = &m.monitor;
    }
    Ok(Decomposition { initial, isomorphic: mismatch.is_none(), mismatch, moves, monotone, budget })
}

fn isomorphism_mismatch(tr: &Tracker, spec: &MorphismSpec) -> Option<String> {
    let t = &spec.target;
    let g = &tr.g;
    if g.vertices.len() != t.vertices.len() || g.edges.len() != t.edges.len() {
        return Some(format!(
            "{} vertices and {} edges against {} and {}",
            g.vertices.len(),
            g.edges.len(),
            t.vertices.len(),
            t.edges.len()
        ));
    }
    let vset: BTreeSet<usize> = tr.vertex_map.iter().copied().collect();
    if vset.len() != t.vertices.len() {
        return Some("the vertex map is not a bijection".into());
    }
    let eset: BTreeSet<usize> = tr.edge_map.iter().filter_map(|p| p.first().map(|s| s.edge)).collect();
    if eset.len() != t.edges.len() {
        return Some("the edge map is not a bijection".into());
    }
    for (v, &tv) in tr.vertex_map.iter().enumerate() {
        if g.vertices[v].group.image(&spec.phi, t.rank) != t.vertices[tv].group {
            return Some(format!("vertex group of {} differs from {}", g.vertices[v].name, t.vertices[tv].name));
        }
    }
    for (e, path) in tr.edge_map.iter().enumerate() {
        if g.edges[e].group.image(&spec.phi, t.rank) != t.edges[path[0].edge].group {
            return Some(format!("edge group of {} differs from {}", g.edges[e].name, t.edges[path[0].edge].name));
        }
    }
    None
}

/// Replays a move list, returning the final graph.
pub fn replay(g: &GraphOfGroups, moves: &[FoldMove]) -> Res<GraphOfGroups> {
    moves.iter().try_fold(g.clone(), |acc, m| apply_move(&acc, m).map(|(next, _)| next))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub graph: GraphOfGroups,
    /// An element not conjugate into any vertex group.
    pub witness: ReducedWord,
}

/// Level-to-level map; source and target are the adjacent levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMap {
    pub vertex_map: Vec<usize>,
    pub edge_map: Vec<Vec<PathStep>>,
    pub phi: Vec<ReducedWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LimitReport {
    pub stable_from: usize,
    pub level: usize,
    pub edge: usize,
    pub edge_name: String,
    pub group: Vec<ReducedWord>,
    /// Level-0 edge mapped onto the limit edge.
    pub source_edge: Option<usize>,
    pub equals_image_of_source: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScottTrace {
    pub monitors: Vec<ScottMonitor>,
    pub limit: Option<LimitReport>,
}

impl ScottTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,betti,w_count,ell_witnesses\n");
        for (i, m) in self.monitors.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", m.betti, m.w_count, m.ell_witnesses.len()));
        }
        s
    }
}

/// Monitors every level, rejects maps that enlarge edge groups or increase
/// the monitors, and reports the limit edge group once the monitors settle.
pub fn scott_pipeline(levels: &[Level], maps: &[LevelMap]) -> Res<ScottTrace> {
    if levels.is_empty() || maps.len() + 1 != levels.len() {
        return Err(GogError::Input(format!("{} levels need {} maps, got {}", levels.len(), levels.len().saturating_sub(1), maps.len())));
    }
    for (i, l) in levels.iter().enumerate() {
        if l.graph.is_elliptic(&l.witness) {
            return Err(GogError::Invalid(format!("level {i}: witness {} is elliptic", l.witness)));
        }
    }
    let monitors: Vec<ScottMonitor> = levels.iter().map(|l| l.graph.monitor()).collect();
    for (i, m) in maps.iter().enumerate() {
        let (s, t) = (&levels[i].graph, &levels[i + 1].graph);
        let spec = MorphismSpec {
            source: s.clone(),
            target: t.clone(),
            vertex_map: m.vertex_map.clone(),
            edge_map: m.edge_map.clone(),
            phi: m.phi.clone(),
            killed: vec![],
            realization: identity_map(s.rank),
        };
        spec.validate()?;
        for (e, path) in m.edge_map.iter().enumerate() {
            if let [st] = path.as_slice() {
                let pushed = s.edges[e].group.image(&m.phi, t.rank);
                let target = &t.edges[st.edge].group;
                if let Some(w) = escapee(target, &pushed) {
                    return Err(GogError::MonotonicityViolation {
                        level: i,
                        next: i + 1,
                        monitor: "edge_group".into(),
                        detail: format!("edge {} grows to {}", s.edges[e].name, t.edges[st.edge].name),
                        witness: Some(w),
                    });
                }
            }
        }
        let (a, b) = (&monitors[i], &monitors[i + 1]);
        for (name, x, y) in [("betti", a.betti, b.betti), ("w_count", a.w_count, b.w_count)] {
            if y > x {
                return Err(GogError::MonotonicityViolation {
                    level: i,
                    next: i + 1,
                    monitor: name.into(),
                    detail: format!("{name} increases from {x} to {y}"),
                    witness: None,
                });
            }
        }
    }
    let last = levels.len() - 1;
    let key = |m: &ScottMonitor| (m.betti, m.w_count);
    let mut stable_from = last;
    while stable_from > 0 && key(&monitors[stable_from - 1]) == key(&monitors[last]) {
        stable_from -= 1;
    }
    let limit = if stable_from < last && !levels[last].graph.edges.is_empty() {
        let t = &levels[last].graph;
        let mut paths: Vec<Vec<PathStep>> =
            (0..levels[0].graph.edges.len()).map(|e| vec![PathStep { edge: e, reversed: false }]).collect();
        let mut phi = identity_map(levels[0].graph.rank);
        for m in maps {
            for p in &mut paths {
                *p = p
                    .iter()
                    .flat_map(|st| {
                        m.edge_map[st.edge].iter().map(move |x| PathStep { edge: x.edge, reversed: x.reversed ^ st.reversed })
                    })
                    .collect();
            }
            phi = phi.iter().map(|w| w.substitute(&m.phi)).collect();
        }
        let edge = 0;
        let source_edge = paths.iter().position(|p| p.len() == 1 && p[0].edge == edge);
        let equals = source_edge
            .map(|e0| levels[0].graph.edges[e0].group.image(&phi, t.rank) == t.edges[edge].group)
            .unwrap_or(false);
        Some(LimitReport {
            stable_from,
            level: last,
            edge,
            edge_name: t.edges[edge].name.clone(),
            group: t.edges[edge].group.basis(),
            source_edge,
            equals_image_of_source: equals,
        })
    } else {
        None
    };
    Ok(ScottTrace { monitors, limit })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVertex {
    name: String,
    gens: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    name: String,
    from: usize,
    to: usize,
    gens: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    conj_from: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    conj_to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGog {
    rank: usize,
    vertices: Vec<RawVertex>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

fn word(s: &str) -> Res<ReducedWord> {
    s.parse::<ReducedWord>().map_err(GogError::from)
}

fn words(s: &str) -> Res<Vec<ReducedWord>> {
    crate::freegrp::parse_word_list(s).map_err(GogError::from)
}

fn join_words(ws: &[ReducedWord]) -> String {
    ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

impl RawGog {
    fn build(&self) -> Res<GraphOfGroups> {
        let mut vertices = Vec::new();
        for v in &self.vertices {
            vertices.push(Vertex { name: v.name.clone(), group: SubgroupGraph::stallings(self.rank, &words(&v.gens)?) });
        }
        let mut edges = Vec::new();
        for e in &self.edges {
            edges.push(Edge {
                name: e.name.clone(),
                ends: [
                    EdgeEnd { vertex: e.from, conj: word(&e.conj_from)? },
                    EdgeEnd { vertex: e.to, conj: word(&e.conj_to)? },
                ],
                group: SubgroupGraph::stallings(self.rank, &words(&e.gens)?),
            });
        }
        let g = GraphOfGroups { rank: self.rank, vertices, edges };
        for w in g.vertices.iter().flat_map(|v| v.group.basis()).chain(g.edges.iter().flat_map(|e| e.group.basis())) {
            if w.max_generator() > self.rank {
                return Err(GogError::Input(format!("{w} uses a generator beyond rank {}", self.rank)));
            }
        }
        Ok(g)
    }

    fn from_graph(g: &GraphOfGroups) -> Self {
        RawGog {
            rank: g.rank,
            vertices: g.vertices.iter().map(|v| RawVertex { name: v.name.clone(), gens: join_words(&v.group.basis()) }).collect(),
            edges: g
                .edges
                .iter()
                .map(|e| RawEdge {
                    name: e.name.clone(),
                    from: e.ends[0].vertex,
                    to: e.ends[1].vertex,
                    gens: join_words(&e.group.basis()),
                    conj_from: e.ends[0].conj.to_string_nonempty(),
                    conj_to: e.ends[1].conj.to_string_nonempty(),
                })
                .collect(),
        }
    }
}

trait NonEmpty {
    fn to_string_nonempty(&self) -> String;
}

impl NonEmpty for ReducedWord {
    fn to_string_nonempty(&self) -> String {
        if self.is_identity() {
            String::new()
        } else {
            self.to_string()
        }
    }
}

/// `{"rank":2,"vertices":[{"name":"A","gens":"a,b"}],"edges":[{"name":"e","from":0,"to":1,"gens":"a"}]}`;
/// optional `conj_from` / `conj_to` words set the end conjugators.
pub fn parse_gog_json(text: &str) -> Res<GraphOfGroups> {
    let raw: RawGog = serde_json::from_str(text).map_err(|e| GogError::Input(e.to_string()))?;
    raw.build()
}

pub fn gog_to_json(g: &GraphOfGroups) -> serde_json::Value {
    serde_json::to_value(RawGog::from_graph(g)).expect("serializable")
}

fn parse_phi(raw: Option<&Vec<String>>, rank: usize) -> Res<Vec<ReducedWord>> {
    match raw {
        Some(v) => v.iter().map(|s| word(s)).collect(),
        None => Ok(identity_map(rank)),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMorphism {
    source: RawGog,
    target: RawGog,
    vertex_map: Vec<usize>,
    edge_map: Vec<Vec<PathStep>>,
    #[serde(default)]
    phi: Option<Vec<String>>,
    #[serde(default)]
    killed: String,
    #[serde(default)]
    realization: Option<Vec<String>>,
}

/// Morphism file: `source`, `target`, `vertex_map`, `edge_map` (paths of
/// `{"edge":i,"reversed":false}`), optional `phi`, `killed` and `realization`.
pub fn parse_morphism_json(text: &str) -> Res<MorphismSpec> {
    let raw: RawMorphism = serde_json::from_str(text).map_err(|e| GogError::Input(e.to_string()))?;
    let source = raw.source.build()?;
    let target = raw.target.build()?;
    let phi = parse_phi(raw.phi.as_ref(), source.rank)?;
    let realization = match raw.realization.as_ref() {
        Some(_) => parse_phi(raw.realization.as_ref(), source.rank)?,
        None => phi.clone(),
    };
    let killed = if raw.killed.trim().is_empty() { vec![] } else { words(&raw.killed)? };
    Ok(MorphismSpec { source, target, vertex_map: raw.vertex_map, edge_map: raw.edge_map, phi, killed, realization })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    graph: RawGog,
    witness: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevelMap {
    vertex_map: Vec<usize>,
    edge_map: Vec<Vec<PathStep>>,
    #[serde(default)]
    phi: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    levels: Vec<RawLevel>,
    maps: Vec<RawLevelMap>,
}

/// Pipeline file: `{"levels":[{"graph":{..},"witness":"bc"}],"maps":[{"vertex_map":..,"edge_map":..}]}`.
pub fn parse_pipeline_json(text: &str) -> Res<(Vec<Level>, Vec<LevelMap>)> {
    let raw: RawPipeline = serde_json::from_str(text).map_err(|e| GogError::Input(e.to_string()))?;
    let levels: Vec<Level> = raw
        .levels
        .iter()
        .map(|l| Ok(Level { graph: l.graph.build()?, witness: word(&l.witness)? }))
        .collect::<Res<_>>()?;
    let mut maps = Vec::new();
    for (i, m) in raw.maps.into_iter().enumerate() {
        let rank = levels.get(i).map(|l| l.graph.rank).unwrap_or(0);
        maps.push(LevelMap { vertex_map: m.vertex_map, edge_map: m.edge_map, phi: parse_phi(m.phi.as_ref(), rank)? });
    }
    Ok((levels, maps))
}

/// Hand-built graphs and morphisms used by tests, benches and the CLI.
pub mod fixtures {
    use super::*;

    fn w(s: &str) -> Vec<ReducedWord> {
        crate::freegrp::parse_word_list(s).unwrap()
    }

    fn step(edge: usize) -> Vec<PathStep> {
        vec![PathStep { edge, reversed: false }]
    }

    /// `<a,b> -e1- <a,c>` and `<a,b> -e2- <a,d>`, both edges `<a>`, in `F(a,b,c,d)`.
    pub fn two_edge_star() -> GraphOfGroups {
        GraphOfGroups::new(
            4,
            vec![
                GraphOfGroups::vertex("u", 4, &w("a,b")),
                GraphOfGroups::vertex("v1", 4, &w("a,c")),
                GraphOfGroups::vertex("v2", 4, &w("a,d")),
            ],
            vec![GraphOfGroups::edge("e1", 0, 1, 4, &w("a")), GraphOfGroups::edge("e2", 0, 2, 4, &w("a"))],
        )
    }

    /// `<a,b> -<a>- <a,c,d>`.
    pub fn folded_star() -> GraphOfGroups {
        GraphOfGroups::new(
            4,
            vec![GraphOfGroups::vertex("u", 4, &w("a,b")), GraphOfGroups::vertex("v", 4, &w("a,c,d"))],
            vec![GraphOfGroups::edge("e", 0, 1, 4, &w("a"))],
        )
    }

    /// The two edges of the star fold onto one.
    pub fn pure_fold() -> MorphismSpec {
        MorphismSpec {
            source: two_edge_star(),
            target: folded_star(),
            vertex_map: vec![0, 1, 1],
            edge_map: vec![step(0), step(0)],
            phi: identity_map(4),
            killed: vec![],
            realization: identity_map(4),
        }
    }

    /// `<a,b> -<a>- <a> -<a>- <a> -<a>- <a,c>` onto the segment with the middle edge crushed.
    pub fn pure_collapse() -> MorphismSpec {
        let source = GraphOfGroups::new(
            3,
            vec![
                GraphOfGroups::vertex("p0", 3, &w("a,b")),
                GraphOfGroups::vertex("p1", 3, &w("a")),
                GraphOfGroups::vertex("p2", 3, &w("a")),
                GraphOfGroups::vertex("p3", 3, &w("a,c")),
            ],
            vec![
                GraphOfGroups::edge("f0", 0, 1, 3, &w("a")),
                GraphOfGroups::edge("f1", 1, 2, 3, &w("a")),
                GraphOfGroups::edge("f2", 2, 3, 3, &w("a")),
            ],
        );
        let target = GraphOfGroups::new(
            3,
            vec![
                GraphOfGroups::vertex("q0", 3, &w("a,b")),
                GraphOfGroups::vertex("q1", 3, &w("a")),
                GraphOfGroups::vertex("q2", 3, &w("a,c")),
            ],
            vec![GraphOfGroups::edge("g0", 0, 1, 3, &w("a")), GraphOfGroups::edge("g1", 1, 2, 3, &w("a"))],
        );
        MorphismSpec {
            source,
            target,
            vertex_map: vec![0, 1, 1, 2],
            edge_map: vec![step(0), vec![], step(1)],
            phi: identity_map(3),
            killed: vec![],
            realization: identity_map(3),
        }
    }

    /// The star with `b` killed at the centre, then folded: `<a> -<a>- <a,c,d>`.
    pub fn mixed_group_fold() -> MorphismSpec {
        let kill_b = w("a,1,c,d");
        let target = GraphOfGroups::new(
            4,
            vec![GraphOfGroups::vertex("u", 4, &w("a")), GraphOfGroups::vertex("v", 4, &w("a,c,d"))],
            vec![GraphOfGroups::edge("e", 0, 1, 4, &w("a"))],
        );
        MorphismSpec {
            source: two_edge_star(),
            target,
            vertex_map: vec![0, 1, 1],
            edge_map: vec![step(0), step(0)],
            phi: kill_b.clone(),
            killed: w("b"),
            realization: kill_b,
        }
    }

    /// Identity maps between levels.
    pub fn identity_level_map(g: &GraphOfGroups) -> LevelMap {
        LevelMap {
            vertex_map: (0..g.vertices.len()).collect(),
            edge_map: (0..g.edges.len()).map(step).collect(),
            phi: identity_map(g.rank),
        }
    }

    /// `<a> -1- <b>` repeated three times.
    pub fn constant_free_splitting() -> (Vec<Level>, Vec<LevelMap>) {
        let g = GraphOfGroups::new(
            2,
            vec![GraphOfGroups::vertex("A", 2, &w("a")), GraphOfGroups::vertex("B", 2, &w("b"))],
            vec![GraphOfGroups::edge("e", 0, 1, 2, &[])],
        );
        let level = Level { graph: g.clone(), witness: w("ab").remove(0) };
        (vec![level.clone(), level.clone(), level], vec![identity_level_map(&g), identity_level_map(&g)])
    }

    /// The star, its fold, and the fold again.
    pub fn folding_pipeline() -> (Vec<Level>, Vec<LevelMap>) {
        let witness = w("bc").remove(0);
        let star = two_edge_star();
        let folded = folded_star();
        let fold = LevelMap { vertex_map: vec![0, 1, 1], edge_map: vec![step(0), step(0)], phi: identity_map(4) };
        (
            vec![
                Level { graph: star, witness: witness.clone() },
                Level { graph: folded.clone(), witness: witness.clone() },
                Level { graph: folded.clone(), witness },
            ],
            vec![fold, identity_level_map(&folded)],
        )
    }

    /// The edge group `<a>` grows to `<a,b>` between levels.
    pub fn broken_pipeline() -> (Vec<Level>, Vec<LevelMap>) {
        let before = GraphOfGroups::new(
            4,
            vec![GraphOfGroups::vertex("A", 4, &w("a,b")), GraphOfGroups::vertex("B", 4, &w("a,c"))],
            vec![GraphOfGroups::edge("e", 0, 1, 4, &w("a"))],
        );
        let after = GraphOfGroups::new(
            4,
            vec![GraphOfGroups::vertex("A", 4, &w("a,b,d")), GraphOfGroups::vertex("B", 4, &w("a,b,c"))],
            vec![GraphOfGroups::edge("e", 0, 1, 4, &w("a,b"))],
        );
        let map = identity_level_map(&before);
        (
            vec![
                Level { graph: before, witness: w("bc").remove(0) },
                Level { graph: after, witness: w("dc").remove(0) },
            ],
            vec![map],
        )
    }
}
