//! Finite metric trees with exact edge lengths, families of subtrees,
//! transverse coverings, skeletons and collapse maps.
//!
//! Points are `(edge, offset)` pairs measured from the edge's first endpoint.
//! Every operation that compares points first builds a [`Refinement`]: the
//! host subdivided at every offset mentioned by its inputs, so that members,
//! arcs and maps become finite sets of atoms (refined edges) and refined points.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Scalar, ScalarBasis, ScalarError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("edge {edge} has non-positive length {length}")]
    NonPositiveLength { edge: usize, length: String },
    #[error("bad segment on edge {edge}: {reason}")]
    BadSegment { edge: usize, reason: String },
    #[error("family is not a transverse covering: {0}")]
    NotTransverse(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeEdge {
    pub u: usize,
    pub v: usize,
    pub length: Scalar,
}

/// A finite tree with positive exact edge lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricTree {
    vertices: usize,
    edges: Vec<TreeEdge>,
}

/// A point of a metric tree. `OnEdge` offsets are measured from the edge's `u` end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum TreePoint {
    Vertex { vertex: usize },
    OnEdge { edge: usize, offset: Scalar },
}

impl TreePoint {
    pub fn vertex(v: usize) -> Self {
        TreePoint::Vertex { vertex: v }
    }

    pub fn on_edge(edge: usize, offset: Scalar) -> Self {
        TreePoint::OnEdge { edge, offset }
    }
}

impl std::fmt::Display for TreePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreePoint::Vertex { vertex } => write!(f, "v{vertex}"),
            TreePoint::OnEdge { edge, offset } => write!(f, "e{edge}@{offset}"),
        }
    }
}

/// Closed sub-segment `[from, to]` of a host edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub edge: usize,
    pub from: Scalar,
    pub to: Scalar,
}

impl Segment {
    pub fn new(edge: usize, from: Scalar, to: Scalar) -> Self {
        Segment { edge, from, to }
    }
}

/// A closed subtree given as a union of segments; a single degenerate
/// segment is a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subtree {
    pub segments: Vec<Segment>,
}

impl Subtree {
    pub fn new(segments: Vec<Segment>) -> Self {
        Subtree { segments }
    }

    /// The whole edge `e` of `host`.
    pub fn edge(host: &MetricTree, e: usize) -> Self {
        Subtree::new(vec![Segment::new(e, Scalar::zero(), host.edges[e].length.clone())])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubtreeFamily {
    pub host: MetricTree,
    pub members: Vec<Subtree>,
}

fn sort_scalars(v: &mut Vec<Scalar>) -> Result<(), ScalarError> {
    // insertion sort so that comparison failures propagate
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1].compare(&v[j])?.is_gt() {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    v.dedup();
    Ok(())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.0[hi] = lo;
        true
    }
}

impl MetricTree {
    /// Validates connectivity, acyclicity and positivity of lengths.
    pub fn new(vertices: usize, edges: Vec<(usize, usize, Scalar)>) -> Result<Self, TreeError> {
        if vertices == 0 {
            return Err(TreeError::NotATree("no vertices".into()));
        }
        if edges.len() + 1 != vertices {
            let mut uf = UnionFind::new(vertices);
            for &(u, v, _) in &edges {
                if u >= vertices || v >= vertices {
                    return Err(TreeError::NotATree(format!("edge ({u},{v}) names a missing vertex")));
                }
                if !uf.union(u, v) {
                    return Err(TreeError::NotATree(format!("edge ({u},{v}) closes a cycle")));
                }
            }
            return Err(TreeError::NotATree(format!(
                "{} edges on {} vertices: graph is disconnected",
                edges.len(),
                vertices
            )));
        }
        let mut uf = UnionFind::new(vertices);
        let mut out = Vec::with_capacity(edges.len());
        for (i, (u, v, length)) in edges.into_iter().enumerate() {
            if u >= vertices || v >= vertices {
                return Err(TreeError::NotATree(format!("edge ({u},{v}) names a missing vertex")));
            }
            if !uf.union(u, v) {
                return Err(TreeError::NotATree(format!("edge ({u},{v}) closes a cycle")));
            }
            if length.sign()? <= 0 {
                return Err(TreeError::NonPositiveLength { edge: i, length: length.to_string() });
            }
            out.push(TreeEdge { u, v, length });
        }
        Ok(MetricTree { vertices, edges: out })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn total_length(&self) -> Scalar {
        self.edges.iter().map(|e| e.length.clone()).sum()
    }

    /// Exact all-pairs vertex distances.
    pub fn vertex_distances(&self) -> Vec<Vec<Scalar>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for e in &self.edges {
            adj[e.u].push((e.v, &e.length));
            adj[e.v].push((e.u, &e.length));
        }
        (0..self.vertices)
            .map(|s| {
                let mut d: Vec<Option<Scalar>> = vec![None; self.vertices];
                d[s] = Some(Scalar::zero());
                let mut stack = vec![s];
                while let Some(x) = stack.pop() {
                    let dx = d[x].clone().expect("visited");
                    for &(y, len) in &adj[x] {
                        if d[y].is_none() {
                            d[y] = Some(&dx + len);
                            stack.push(y);
                        }
                    }
                }
                d.into_iter().map(|x| x.expect("connected")).collect()
            })
            .collect()
    }

    /// Rewrites `OnEdge` points at offset 0 or at the full length as vertices.
    pub fn canonical_point(&self, p: &TreePoint) -> Result<TreePoint, TreeError> {
        match p {
            TreePoint::Vertex { vertex } if *vertex < self.vertices => Ok(p.clone()),
            TreePoint::Vertex { vertex } => Err(TreeError::Input(format!("no vertex {vertex}"))),
            TreePoint::OnEdge { edge, offset } => {
                let e = self
                    .edges
                    .get(*edge)
                    .ok_or_else(|| TreeError::Input(format!("no edge {edge}")))?;
                match (offset.sign()?, offset.compare(&e.length)?) {
                    (-1, _) | (_, std::cmp::Ordering::Greater) => Err(TreeError::BadSegment {
                        edge: *edge,
                        reason: format!("offset {offset} outside [0, {}]", e.length),
                    }),
                    (0, _) => Ok(TreePoint::vertex(e.u)),
                    (_, std::cmp::Ordering::Equal) => Ok(TreePoint::vertex(e.v)),
                    _ => Ok(p.clone()),
                }
            }
        }
    }

    pub fn distance(&self, p: &TreePoint, q: &TreePoint) -> Result<Scalar, TreeError> {
        let d = self.vertex_distances();
        self.distance_with(&d, &self.canonical_point(p)?, &self.canonical_point(q)?)
    }

    fn distance_with(&self, d: &[Vec<Scalar>], p: &TreePoint, q: &TreePoint) -> Result<Scalar, TreeError> {
        let to_vertex = |p: &TreePoint, x: usize| -> Result<Scalar, TreeError> {
            Ok(match p {
                TreePoint::Vertex { vertex } => d[*vertex][x].clone(),
                TreePoint::OnEdge { edge, offset } => {
                    let e = &self.edges[*edge];
                    (offset + &d[e.u][x]).min(&(&e.length - offset + &d[e.v][x]))?
                }
            })
        };
        match (p, q) {
            (_, TreePoint::Vertex { vertex }) => to_vertex(p, *vertex),
            (TreePoint::Vertex { vertex }, _) => to_vertex(q, *vertex),
            (TreePoint::OnEdge { edge: e1, offset: t1 }, TreePoint::OnEdge { edge: e2, offset: t2 }) => {
                if e1 == e2 {
                    Ok((t1 - t2).abs()?)
                } else {
                    let e = &self.edges[*e2];
                    Ok((t2 + to_vertex(p, e.u)?).min(&(&e.length - t2 + to_vertex(p, e.v)?))?)
                }
            }
        }
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph tree {\n");
        for v in 0..self.vertices {
            s.push_str(&format!("  {v};\n"));
        }
        for e in &self.edges {
            s.push_str(&format!("  {} -- {} [label=\"{}\"];\n", e.u, e.v, e.length));
        }
        s.push_str("}\n");
        s
    }
}

/// Four-point condition on a distance matrix: for every quadruple the two
/// largest of the three pair sums agree.
pub fn four_point_holds(d: &[Vec<Scalar>]) -> Result<bool, ScalarError> {
    let n = d.len();
    for x in 0..n {
        for y in x + 1..n {
            for z in y + 1..n {
                for w in z + 1..n {
                    let sums = [&d[x][y] + &d[z][w], &d[x][z] + &d[y][w], &d[x][w] + &d[y][z]];
                    let mut top = &sums[0];
                    for s in &sums[1..] {
                        if s.compare(top)?.is_gt() {
                            top = s;
                        }
                    }
                    if sums.iter().filter(|s| *s == top).count() < 2 {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Exact four-point check over all vertex quadruples.
pub fn check_four_point(t: &MetricTree) -> Result<bool, ScalarError> {
    four_point_holds(&t.vertex_distances())
}

/// A refined edge: the part of host edge `edge` between two consecutive cuts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Atom {
    pub edge: usize,
    pub from: Scalar,
    pub to: Scalar,
    /// Refined point indices of the two ends.
    pub ends: (usize, usize),
}

impl Atom {
    pub fn length(&self) -> Scalar {
        &self.to - &self.from
    }
}

/// The host subdivided at a finite set of cut points.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub points: Vec<TreePoint>,
    pub atoms: Vec<Atom>,
    index: HashMap<TreePoint, usize>,
    adj: Vec<Vec<(usize, usize)>>,
    cuts: Vec<Vec<Scalar>>,
}

impl Refinement {
    pub fn new(host: &MetricTree, extra: &[(usize, Scalar)]) -> Result<Self, TreeError> {
        let mut cuts: Vec<Vec<Scalar>> =
            host.edges.iter().map(|e| vec![Scalar::zero(), e.length.clone()]).collect();
        for (edge, offset) in extra {
            let e = host
                .edges
                .get(*edge)
                .ok_or_else(|| TreeError::BadSegment { edge: *edge, reason: "no such edge".into() })?;
            if offset.sign()? < 0 || offset.compare(&e.length)?.is_gt() {
                return Err(TreeError::BadSegment {
                    edge: *edge,
                    reason: format!("offset {offset} outside [0, {}]", e.length),
                });
            }
            cuts[*edge].push(offset.clone());
        }
        for c in &mut cuts {
            sort_scalars(c)?;
        }
        let mut points: Vec<TreePoint> = (0..host.vertices).map(TreePoint::vertex).collect();
        for (e, c) in cuts.iter().enumerate() {
            for t in &c[1..c.len() - 1] {
                points.push(TreePoint::on_edge(e, t.clone()));
            }
        }
        let index: HashMap<TreePoint, usize> = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let mut atoms = Vec::new();
        let mut adj = vec![Vec::new(); points.len()];
        for (e, c) in cuts.iter().enumerate() {
            let edge = &host.edges[e];
            let locate = |k: usize| -> usize {
                if k == 0 {
                    edge.u
                } else if k == c.len() - 1 {
                    edge.v
                } else {
                    index[&TreePoint::on_edge(e, c[k].clone())]
                }
            };
            for k in 0..c.len() - 1 {
                let ends = (locate(k), locate(k + 1));
                adj[ends.0].push((atoms.len(), ends.1));
                adj[ends.1].push((atoms.len(), ends.0));
                atoms.push(Atom { edge: e, from: c[k].clone(), to: c[k + 1].clone(), ends });
            }
        }
        Ok(Refinement { points, atoms, index, adj, cuts })
    }

    /// Refinement at every offset mentioned by the family plus `extra`.
    pub fn for_family(f: &SubtreeFamily, extra: &[(usize, Scalar)]) -> Result<Self, TreeError> {
        let mut cuts = extra.to_vec();
        for m in &f.members {
            for s in &m.segments {
                cuts.push((s.edge, s.from.clone()));
                cuts.push((s.edge, s.to.clone()));
            }
        }
        Refinement::new(&f.host, &cuts)
    }

    pub fn point_index(&self, host: &MetricTree, p: &TreePoint) -> Result<usize, TreeError> {
        let p = host.canonical_point(p)?;
        self.index
            .get(&p)
            .copied()
            .ok_or_else(|| TreeError::Input(format!("point {p} is not a cut point of the refinement")))
    }

    fn cut_point(&self, host: &MetricTree, edge: usize, offset: &Scalar) -> Result<usize, TreeError> {
        self.point_index(host, &TreePoint::on_edge(edge, offset.clone()))
    }

    /// Atoms and refined points of a closed segment.
    fn segment_cells(&self, host: &MetricTree, s: &Segment) -> Result<(BTreeSet<usize>, BTreeSet<usize>), TreeError> {
        let e = host
            .edges
            .get(s.edge)
            .ok_or_else(|| TreeError::BadSegment { edge: s.edge, reason: "no such edge".into() })?;
        if s.from.sign()? < 0 || s.from.compare(&s.to)?.is_gt() || s.to.compare(&e.length)?.is_gt() {
            return Err(TreeError::BadSegment {
                edge: s.edge,
                reason: format!("[{}, {}] is not inside [0, {}]", s.from, s.to, e.length),
            });
        }
        let mut atoms = BTreeSet::new();
        let mut points = BTreeSet::from([self.cut_point(host, s.edge, &s.from)?, self.cut_point(host, s.edge, &s.to)?]);
        for (i, a) in self.atoms.iter().enumerate() {
            if a.edge == s.edge && a.from.compare(&s.from)?.is_ge() && a.to.compare(&s.to)?.is_le() {
                atoms.insert(i);
                points.insert(a.ends.0);
                points.insert(a.ends.1);
            }
        }
        Ok((atoms, points))
    }

    fn member_cells(&self, host: &MetricTree, m: &Subtree) -> Result<Cells, TreeError> {
        let mut cells = Cells::default();
        for s in &m.segments {
            let (a, p) = self.segment_cells(host, s)?;
            cells.atoms.extend(a);
            cells.points.extend(p);
        }
        Ok(cells)
    }

    /// Atoms on the geodesic between two refined points.
    pub fn path_atoms(&self, from: usize, to: usize) -> Vec<usize> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.points.len()];
        let mut seen = vec![false; self.points.len()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(x) = queue.pop_front() {
            if x == to {
                break;
            }
            for &(a, y) in &self.adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    prev[y] = Some((x, a));
                    queue.push_back(y);
                }
            }
        }
        let mut out = Vec::new();
        let mut x = to;
        while let Some((p, a)) = prev[x] {
            out.push(a);
            x = p;
        }
        out.reverse();
        out
    }

    fn connected(&self, cells: &Cells) -> bool {
        let pts: Vec<usize> = cells.points.iter().copied().collect();
        if pts.len() <= 1 {
            return true;
        }
        let mut uf = UnionFind::new(self.points.len());
        for &a in &cells.atoms {
            uf.union(self.atoms[a].ends.0, self.atoms[a].ends.1);
        }
        let r = uf.find(pts[0]);
        pts.iter().all(|&p| uf.find(p) == r)
    }

    /// Offsets on each host edge used by this refinement.
    pub fn cuts(&self, edge: usize) -> &[Scalar] {
        &self.cuts[edge]
    }
}

#[derive(Debug, Clone, Default)]
struct Cells {
    atoms: BTreeSet<usize>,
    points: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum CoveringViolation {
    /// A member is not connected.
    Disconnected { member: usize },
    /// Part of the host lies in no member.
    Uncovered { edge: usize, from: Scalar, to: Scalar },
    UncoveredPoint { point: TreePoint },
    /// Two members share a non-degenerate arc.
    Overlap { first: usize, second: usize, edge: usize, from: Scalar, to: Scalar },
    /// Two members share more than one point.
    MultiplePoints { first: usize, second: usize, points: Vec<TreePoint> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoveringReport {
    pub transverse: bool,
    pub violations: Vec<CoveringViolation>,
    /// Single-point members, ignored by the skeleton.
    pub degenerate_members: Vec<usize>,
}

/// Maximal runs of consecutive atoms on one host edge, as `(edge, from, to)`.
fn runs(r: &Refinement, atoms: &BTreeSet<usize>) -> Vec<(usize, Scalar, Scalar)> {
    let mut out: Vec<(usize, Scalar, Scalar)> = Vec::new();
    for &a in atoms {
        let at = &r.atoms[a];
        match out.last_mut() {
            Some(last) if last.0 == at.edge && last.2 == at.from => last.2 = at.to.clone(),
            _ => out.push((at.edge, at.from.clone(), at.to.clone())),
        }
    }
    out
}

pub fn check_transverse_covering(f: &SubtreeFamily) -> Result<CoveringReport, TreeError> {
    let r = Refinement::for_family(f, &[])?;
    let cells: Vec<Cells> = f.members.iter().map(|m| r.member_cells(&f.host, m)).collect::<Result<_, _>>()?;
    Ok(covering_report(&r, &cells))
}

fn covering_report(r: &Refinement, cells: &[Cells]) -> CoveringReport {
    let mut violations = Vec::new();
    let mut degenerate = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        if !r.connected(c) {
            violations.push(CoveringViolation::Disconnected { member: i });
        }
        if c.atoms.is_empty() {
            degenerate.push(i);
        }
    }
    let covered: BTreeSet<usize> = cells.iter().flat_map(|c| c.atoms.iter().copied()).collect();
    let uncovered: BTreeSet<usize> = (0..r.atoms.len()).filter(|a| !covered.contains(a)).collect();
    for (edge, from, to) in runs(r, &uncovered) {
        violations.push(CoveringViolation::Uncovered { edge, from, to });
    }
    if r.atoms.is_empty() && !cells.iter().any(|c| c.points.contains(&0)) {
        violations.push(CoveringViolation::UncoveredPoint { point: TreePoint::vertex(0) });
    }
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let shared: BTreeSet<usize> = cells[i].atoms.intersection(&cells[j].atoms).copied().collect();
            if let Some((edge, from, to)) = runs(r, &shared).into_iter().next() {
                violations.push(CoveringViolation::Overlap { first: i, second: j, edge, from, to });
                continue;
            }
            let pts: Vec<TreePoint> =
                cells[i].points.intersection(&cells[j].points).map(|&p| r.points[p].clone()).collect();
            if pts.len() > 1 {
                violations.push(CoveringViolation::MultiplePoints { first: i, second: j, points: pts });
            }
        }
    }
    CoveringReport { transverse: violations.is_empty(), violations, degenerate_members: degenerate }
}

/// Bipartite incidence tree of a transverse covering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skeleton {
    /// Points lying in at least two members.
    pub v0: Vec<TreePoint>,
    /// Non-degenerate member indices.
    pub v1: Vec<usize>,
    /// Pairs `(index into v0, index into v1)`.
    pub edges: Vec<(usize, usize)>,
    /// Degenerate members left out of `v1`.
    pub dropped: Vec<usize>,
}

impl Skeleton {
    /// The skeleton as a metric tree with unit lengths; `v0` vertices first.
    pub fn as_metric_tree(&self) -> Result<MetricTree, TreeError> {
        let n0 = self.v0.len();
        let edges = self.edges.iter().map(|&(x, y)| (x, n0 + y, Scalar::one())).collect();
        MetricTree::new(n0 + self.v1.len(), edges)
    }

    pub fn is_tree(&self) -> bool {
        self.as_metric_tree().is_ok()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph skeleton {\n");
        for (i, p) in self.v0.iter().enumerate() {
            s.push_str(&format!("  x{i} [shape=point, xlabel=\"{p}\"];\n"));
        }
        for (j, m) in self.v1.iter().enumerate() {
            s.push_str(&format!("  Y{j} [shape=box, label=\"Y{m}\"];\n"));
        }
        for &(x, y) in &self.edges {
            s.push_str(&format!("  x{x} -- Y{y};\n"));
        }
        s.push_str("}\n");
        s
    }
}

pub fn skeleton(f: &SubtreeFamily) -> Result<Skeleton, TreeError> {
    let r = Refinement::for_family(f, &[])?;
    let cells: Vec<Cells> = f.members.iter().map(|m| r.member_cells(&f.host, m)).collect::<Result<_, _>>()?;
    let report = covering_report(&r, &cells);
    if !report.transverse {
        return Err(TreeError::NotTransverse(serde_json::to_string(&report.violations).unwrap_or_default()));
    }
    let v1: Vec<usize> = (0..cells.len()).filter(|i| !report.degenerate_members.contains(i)).collect();
    let mut v0 = Vec::new();
    let mut edges = Vec::new();
    for p in 0..r.points.len() {
        let holders: Vec<usize> = (0..v1.len()).filter(|&j| cells[v1[j]].points.contains(&p)).collect();
        if holders.len() >= 2 {
            for j in holders {
                edges.push((v0.len(), j));
            }
            v0.push(r.points[p].clone());
        }
    }
    Ok(Skeleton { v0, v1, edges, dropped: report.degenerate_members })
}

/// Image of one atom of the source refinement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AtomImage {
    pub atom: Atom,
    /// Target edge, or `None` when the atom is collapsed to a point.
    pub image: Option<usize>,
}

/// A collapse map on the common refinement of the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollapseMap {
    pub source_points: Vec<TreePoint>,
    /// Target vertex of each refined source point.
    pub point_image: Vec<usize>,
    pub atoms: Vec<AtomImage>,
    pub target_vertices: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    pub aligned: bool,
    pub surjective: bool,
    pub checked_points: usize,
    /// Target vertices whose preimage is disconnected.
    pub failures: Vec<usize>,
}

impl CollapseMap {
    /// Exhaustive check over the refinement: the preimage of every target
    /// vertex is connected, every target edge has exactly one preimage atom,
    /// and collapsed atoms have both ends in one fibre.
    pub fn check_alignment(&self, target: &MetricTree) -> AlignmentReport {
        let mut failures = BTreeSet::new();
        let mut uf = UnionFind::new(self.source_points.len());
        let mut edge_hits = vec![0usize; target.edge_count()];
        for a in &self.atoms {
            let (x, y) = a.atom.ends;
            match a.image {
                None => {
                    if self.point_image[x] != self.point_image[y] {
                        failures.insert(self.point_image[x]);
                    }
                    uf.union(x, y);
                }
                Some(e) => {
                    edge_hits[e] += 1;
                    let te = &target.edges()[e];
                    let ends = (self.point_image[x], self.point_image[y]);
                    if ends != (te.u, te.v) && ends != (te.v, te.u) {
                        failures.insert(ends.0);
                    }
                    if te.length != a.atom.length() {
                        failures.insert(ends.0);
                    }
                }
            }
        }
        let mut root: Vec<Option<usize>> = vec![None; self.target_vertices];
        for p in 0..self.source_points.len() {
            let c = self.point_image[p];
            let r = uf.find(p);
            match root[c] {
                None => root[c] = Some(r),
                Some(r0) if r0 != r => {
                    failures.insert(c);
                }
                _ => {}
            }
        }
        let surjective = root.iter().all(Option::is_some) && edge_hits.iter().all(|&h| h >= 1);
        let injective_on_edges = edge_hits.iter().all(|&h| h <= 1);
        AlignmentReport {
            aligned: failures.is_empty() && injective_on_edges,
            surjective,
            checked_points: self.source_points.len(),
            failures: failures.into_iter().collect(),
        }
    }
}

/// Collapses each member listed in `kill` to a point.
pub fn collapse(f: &SubtreeFamily, kill: &[usize]) -> Result<(MetricTree, CollapseMap), TreeError> {
    let r = Refinement::for_family(f, &[])?;
    let cells: Vec<Cells> = f.members.iter().map(|m| r.member_cells(&f.host, m)).collect::<Result<_, _>>()?;
    let report = covering_report(&r, &cells);
    if !report.transverse {
        return Err(TreeError::NotTransverse(serde_json::to_string(&report.violations).unwrap_or_default()));
    }
    if let Some(&k) = kill.iter().find(|&&k| k >= f.members.len()) {
        return Err(TreeError::Input(format!("kill names missing member {k}")));
    }
    let mut uf = UnionFind::new(r.points.len());
    let mut dead = BTreeSet::new();
    for &k in kill {
        for &a in &cells[k].atoms {
            uf.union(r.atoms[a].ends.0, r.atoms[a].ends.1);
            dead.insert(a);
        }
    }
    let mut class_id: HashMap<usize, usize> = HashMap::new();
    let mut point_image = Vec::with_capacity(r.points.len());
    for p in 0..r.points.len() {
        let root = uf.find(p);
        let next = class_id.len();
        point_image.push(*class_id.entry(root).or_insert(next));
    }
    let mut target_edges = Vec::new();
    let mut atoms = Vec::new();
    for (i, a) in r.atoms.iter().enumerate() {
        let image = if dead.contains(&i) {
            None
        } else {
            target_edges.push((point_image[a.ends.0], point_image[a.ends.1], a.length()));
            Some(target_edges.len() - 1)
        };
        atoms.push(AtomImage { atom: a.clone(), image });
    }
    let target = MetricTree::new(class_id.len(), target_edges)?;
    let map = CollapseMap { source_points: r.points.clone(), point_image, atoms, target_vertices: class_id.len() };
    Ok((target, map))
}

/// The geodesic between two points of the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeArc {
    pub from: TreePoint,
    pub to: TreePoint,
}

impl TreeArc {
    pub fn new(from: TreePoint, to: TreePoint) -> Self {
        TreeArc { from, to }
    }

    /// `[from, to]` along a single host edge.
    pub fn on_edge(edge: usize, from: Scalar, to: Scalar) -> Self {
        TreeArc::new(TreePoint::on_edge(edge, from), TreePoint::on_edge(edge, to))
    }

    fn cut_points(&self) -> Vec<(usize, Scalar)> {
        [&self.from, &self.to]
            .into_iter()
            .filter_map(|p| match p {
                TreePoint::OnEdge { edge, offset } => Some((*edge, offset.clone())),
                TreePoint::Vertex { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndecomposabilityReport {
    /// Indices into the supplied translates, or `None` for NOT_FOUND.
    pub chain: Option<Vec<usize>>,
    /// Length of each consecutive intersection along the chain.
    pub overlaps: Vec<Scalar>,
    pub states_explored: usize,
}

/// Searches for a chain of translates covering `j` whose consecutive members
/// overlap in non-degenerate arcs. Breadth-first over (last translate, covered
/// part of `j`), so the chain returned is a shortest one of length `<= depth`.
pub fn indecomposability_witness(
    host: &MetricTree,
    translates: &[TreeArc],
    j: &TreeArc,
    depth: usize,
) -> Result<IndecomposabilityReport, TreeError> {
    let mut extra = j.cut_points();
    for t in translates {
        extra.extend(t.cut_points());
    }
    let r = Refinement::new(host, &extra)?;
    let arc_atoms = |a: &TreeArc| -> Result<(BTreeSet<usize>, usize), TreeError> {
        let (x, y) = (r.point_index(host, &a.from)?, r.point_index(host, &a.to)?);
        Ok((r.path_atoms(x, y).into_iter().collect(), x))
    };
    let lengths: Vec<Scalar> = translates.iter().map(|t| host.distance(&t.from, &t.to)).collect::<Result<_, _>>()?;
    if let Some(i) = (1..lengths.len()).find(|&i| lengths[i] != lengths[0]) {
        return Err(TreeError::Input(format!(
            "translate {i} has length {} but translate 0 has length {}",
            lengths[i], lengths[0]
        )));
    }
    let tr: Vec<(BTreeSet<usize>, usize)> = translates.iter().map(arc_atoms).collect::<Result<_, _>>()?;
    let (target, j_point) = arc_atoms(j)?;
    let measure = |s: &BTreeSet<usize>| -> Scalar { s.iter().map(|&a| r.atoms[a].length()).sum() };
    let contains_point = |t: &(BTreeSet<usize>, usize), p: usize| {
        t.1 == p || t.0.iter().any(|&a| r.atoms[a].ends.0 == p || r.atoms[a].ends.1 == p)
    };

    let mut explored = 0;
    if target.is_empty() {
        let chain = (0..tr.len()).find(|&i| contains_point(&tr[i], j_point)).filter(|_| depth >= 1);
        return Ok(IndecomposabilityReport { chain: chain.map(|i| vec![i]), overlaps: vec![], states_explored: tr.len() });
    }
    let mut seen: BTreeSet<(usize, BTreeSet<usize>)> = BTreeSet::new();
    let mut queue: VecDeque<(usize, BTreeSet<usize>, Vec<usize>)> = VecDeque::new();
    for (i, t) in tr.iter().enumerate() {
        let cov: BTreeSet<usize> = t.0.intersection(&target).copied().collect();
        if seen.insert((i, cov.clone())) {
            queue.push_back((i, cov, vec![i]));
        }
    }
    while let Some((last, cov, chain)) = queue.pop_front() {
        explored += 1;
        if cov == target {
            let overlaps = chain
                .windows(2)
                .map(|w| measure(&tr[w[0]].0.intersection(&tr[w[1]].0).copied().collect()))
                .collect();
            return Ok(IndecomposabilityReport { chain: Some(chain), overlaps, states_explored: explored });
        }
        if chain.len() >= depth {
            continue;
        }
        for (i, t) in tr.iter().enumerate() {
            if i == last || tr[last].0.is_disjoint(&t.0) {
                continue;
            }
            let mut next = cov.clone();
            next.extend(t.0.intersection(&target).copied());
            if seen.insert((i, next.clone())) {
                let mut c = chain.clone();
                c.push(i);
                queue.push_back((i, next, c));
            }
        }
    }
    Ok(IndecomposabilityReport { chain: None, overlaps: vec![], states_explored: explored })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    #[serde(default)]
    basis: Option<Vec<String>>,
    vertices: usize,
    edges: Vec<(usize, usize, String)>,
    #[serde(default)]
    family: Option<Vec<Vec<(usize, String, String)>>>,
    #[serde(default)]
    kill: Vec<usize>,
}

/// A parsed tree input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeInstance {
    pub tree: MetricTree,
    pub family: Option<SubtreeFamily>,
    pub kill: Vec<usize>,
}

/// Parses `{"vertices":4,"edges":[[0,1,"1/2"],...],"family":[[[0,"0","1/2"]],...],"kill":[2]}`.
pub fn parse_tree_json(text: &str) -> Result<TreeInstance, TreeError> {
    let raw: RawTree = serde_json::from_str(text).map_err(|e| TreeError::Input(e.to_string()))?;
    let basis: Arc<ScalarBasis> = match &raw.basis {
        Some(tags) => Arc::new(ScalarBasis::from_tags(tags)?),
        None => ScalarBasis::rational(),
    };
    let num = |s: &str| Scalar::parse(s, &basis).map_err(TreeError::from);
    let edges = raw
        .edges
        .iter()
        .map(|(u, v, l)| Ok((*u, *v, num(l)?)))
        .collect::<Result<Vec<_>, TreeError>>()?;
    let tree = MetricTree::new(raw.vertices, edges)?;
    let family = match raw.family {
        None => None,
        Some(members) => {
            let members = members
                .iter()
                .map(|segs| {
                    segs.iter()
                        .map(|(e, a, b)| Ok(Segment::new(*e, num(a)?, num(b)?)))
                        .collect::<Result<Vec<_>, TreeError>>()
                        .map(Subtree::new)
                })
                .collect::<Result<Vec<_>, TreeError>>()?;
            Some(SubtreeFamily { host: tree.clone(), members })
        }
    };
    Ok(TreeInstance { tree, family, kill: raw.kill })
}
