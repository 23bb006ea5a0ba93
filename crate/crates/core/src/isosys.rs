//! Systems of partial isometries on closed multi-intervals.
//!
//! Components of `D` are disjoint closed real intervals, so a point of `D` is
//! just a [`Scalar`]. A partial isometry is `x -> eps*x + t` from a closed
//! domain onto a closed range. Maps whose domain is a single point are
//! singletons: they are kept and take part in closed orbits, but they do not
//! count towards multiplicity and are never trimmed.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::scalar::{Scalar, ScalarBasis, ScalarError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsosysError {
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("nothing to trim: the system is pure")]
    NothingToTrim,
    #[error("the system is not pure: a trimmable interval remains")]
    NotPure,
    #[error("not simplicial: orbits of {0:?} exceed the budget")]
    NotSimplicial(Vec<String>),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

type Res<T> = Result<T, IsosysError>;

fn le(a: &Scalar, b: &Scalar) -> Res<bool> {
    Ok(a.compare(b)?.is_le())
}

fn lt(a: &Scalar, b: &Scalar) -> Res<bool> {
    Ok(a.compare(b)?.is_lt())
}

/// Sorts by certified comparison, failing on the first undecidable pair.
fn sort_scalars<T>(v: &mut [T], key: impl Fn(&T) -> &Scalar) -> Res<()> {
    let mut err = None;
    v.sort_by(|a, b| match key(a).compare(key(b)) {
        Ok(o) => o,
        Err(e) => {
            err.get_or_insert(e);
            std::cmp::Ordering::Equal
        }
    });
    err.map_or(Ok(()), |e| Err(e.into()))
}

fn sort_dedup(v: &mut Vec<Scalar>) -> Res<()> {
    sort_scalars(v, |x| x)?;
    v.dedup();
    Ok(())
}

/// Closed interval `[lo, hi]`, possibly degenerate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Interval {
    pub lo: Scalar,
    pub hi: Scalar,
}

impl Interval {
    pub fn new(lo: Scalar, hi: Scalar) -> Self {
        Interval { lo, hi }
    }

    pub fn rational(lo: (i64, i64), hi: (i64, i64)) -> Self {
        Interval::new(Scalar::from_ratio(lo.0, lo.1), Scalar::from_ratio(hi.0, hi.1))
    }

    pub fn length(&self) -> Scalar {
        &self.hi - &self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Scalar) -> Res<bool> {
        Ok(le(&self.lo, x)? && le(x, &self.hi)?)
    }

    /// True if `x` lies in the open interior.
    pub fn contains_interior(&self, x: &Scalar) -> Res<bool> {
        Ok(lt(&self.lo, x)? && lt(x, &self.hi)?)
    }

    pub fn contains_interval(&self, other: &Interval) -> Res<bool> {
        Ok(le(&self.lo, &other.lo)? && le(&other.hi, &self.hi)?)
    }

    /// Closed intersection, `None` if empty.
    pub fn intersect(&self, other: &Interval) -> Res<Option<Interval>> {
        let lo = self.lo.max(&other.lo)?;
        let hi = self.hi.min(&other.hi)?;
        Ok(if le(&lo, &hi)? { Some(Interval::new(lo, hi)) } else { None })
    }

    pub fn midpoint(&self) -> Scalar {
        (&self.lo + &self.hi).half()
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Disjoint closed intervals, sorted left to right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiInterval {
    pub components: Vec<Interval>,
}

impl MultiInterval {
    pub fn new(mut components: Vec<Interval>) -> Res<Self> {
        for c in &components {
            if !lt(&c.lo, &c.hi)? {
                return Err(IsosysError::Invalid(format!("component {c} is degenerate")));
            }
        }
        sort_scalars(&mut components, |c| &c.lo)?;
        for w in components.windows(2) {
            if !lt(&w[0].hi, &w[1].lo)? {
                return Err(IsosysError::Invalid(format!("components {} and {} meet", w[0], w[1])));
            }
        }
        Ok(MultiInterval { components })
    }

    pub fn empty() -> Self {
        MultiInterval { components: vec![] }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn measure(&self) -> Scalar {
        self.components.iter().map(Interval::length).sum()
    }

    pub fn component_of(&self, x: &Scalar) -> Res<Option<usize>> {
        for (i, c) in self.components.iter().enumerate() {
            if c.contains(x)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn component_containing(&self, iv: &Interval) -> Res<Option<usize>> {
        for (i, c) in self.components.iter().enumerate() {
            if c.contains_interval(iv)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }
}

/// `x -> eps * x + t` from `dom` onto `ran`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartialIsometry {
    pub dom: Interval,
    pub ran: Interval,
    pub eps: i8,
    pub t: Scalar,
}

impl PartialIsometry {
    /// Checks that `dom` maps exactly onto `ran`.
    pub fn new(dom: Interval, ran: Interval, eps: i8, t: Scalar) -> Res<Self> {
        if eps != 1 && eps != -1 {
            return Err(IsosysError::Invalid(format!("orientation must be 1 or -1, got {eps}")));
        }
        if !le(&dom.lo, &dom.hi)? || !le(&ran.lo, &ran.hi)? {
            return Err(IsosysError::Invalid(format!("reversed interval in {dom} -> {ran}")));
        }
        let m = PartialIsometry { dom, ran, eps, t };
        let img = m.image(&m.dom);
        if img != m.ran {
            return Err(IsosysError::Invalid(format!(
                "x -> {}x + {} sends {} to {}, not {}",
                eps, m.t, m.dom, img, m.ran
            )));
        }
        Ok(m)
    }

    /// Builds the map determined by `dom`, `ran` and the orientation.
    pub fn between(dom: Interval, ran: Interval, eps: i8) -> Res<Self> {
        let t = if eps == 1 { &ran.lo - &dom.lo } else { &ran.lo + &dom.hi };
        PartialIsometry::new(dom, ran, eps, t)
    }

    pub fn translation(dom: Interval, t: Scalar) -> Self {
        let ran = Interval::new(&dom.lo + &t, &dom.hi + &t);
        PartialIsometry { dom, ran, eps: 1, t }
    }

    pub fn is_singleton(&self) -> bool {
        self.dom.is_degenerate()
    }

    pub fn apply(&self, x: &Scalar) -> Scalar {
        if self.eps == 1 {
            x + &self.t
        } else {
            &self.t - x
        }
    }

    pub fn apply_inverse(&self, y: &Scalar) -> Scalar {
        if self.eps == 1 {
            y - &self.t
        } else {
            &self.t - y
        }
    }

    pub fn image(&self, iv: &Interval) -> Interval {
        let (a, b) = (self.apply(&iv.lo), self.apply(&iv.hi));
        if self.eps == 1 {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        }
    }

    pub fn preimage(&self, iv: &Interval) -> Interval {
        let (a, b) = (self.apply_inverse(&iv.lo), self.apply_inverse(&iv.hi));
        if self.eps == 1 {
            Interval::new(a, b)
        } else {
            Interval::new(b, a)
        }
    }

    /// The restriction to `piece` (a subinterval of the domain).
    pub fn restrict(&self, piece: Interval) -> Self {
        let ran = self.image(&piece);
        PartialIsometry { dom: piece, ran, eps: self.eps, t: self.t.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IsometrySystem {
    pub d: MultiInterval,
    pub maps: Vec<PartialIsometry>,
}

/// One step of an orbit word: map index and `+1` (forward) or `-1` (inverse).
pub type Move = (usize, i8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitPoint {
    pub x: Scalar,
    pub component: usize,
    pub word: Vec<Move>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitReport {
    pub start: Scalar,
    /// Points in discovery order.
    pub points: Vec<OrbitPoint>,
    /// True when the search exhausted the orbit within the budget.
    pub closed: bool,
    /// Smallest positive gap between consecutive orbit points of one component.
    pub min_gap: Option<Scalar>,
    pub max_points: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileEntry {
    Point { component: usize, x: Scalar, mult: usize },
    Open { component: usize, lo: Scalar, hi: Scalar, mult: usize },
}

/// Piecewise-constant count of bases over `D`, breakpoints at base endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Profile {
    pub entries: Vec<ProfileEntry>,
}

impl Profile {
    /// Multiplicities of the open pieces.
    pub fn open_multiplicities(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                ProfileEntry::Open { mult, .. } => Some(*mult),
                ProfileEntry::Point { .. } => None,
            })
            .collect()
    }

    /// True if every open piece has multiplicity exactly `m`.
    pub fn constant_off_breakpoints(&self, m: usize) -> bool {
        self.open_multiplicities().iter().all(|&x| x == m)
    }

    pub fn min_everywhere(&self) -> usize {
        self.entries
            .iter()
            .map(|e| match e {
                ProfileEntry::Open { mult, .. } | ProfileEntry::Point { mult, .. } => *mult,
            })
            .min()
            .unwrap_or(0)
    }
}

/// What a trim step removes from `D`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimKind {
    /// `[lo, hi)` at the left end of a component.
    Left,
    /// `(lo, hi]` at the right end of a component.
    Right,
    /// The whole component.
    Component,
    /// The open interval `(lo, hi)` inside a component, which splits it.
    Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrimStep {
    pub step: usize,
    pub kind: TrimKind,
    pub component: usize,
    pub lo: Scalar,
    pub hi: Scalar,
    pub erased: Scalar,
    pub maps_after: usize,
    pub components_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MachineStatus {
    HaltEmpty,
    Pure,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MachineOutcome {
    pub status: MachineStatus,
    pub system: IsometrySystem,
    pub erased: Scalar,
    pub steps: usize,
    pub log: Vec<TrimStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LeafTag {
    CompactLeaves,
    DenseLeaves,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleEvidence {
    pub start: Scalar,
    pub closed: bool,
    pub points_half: usize,
    pub min_gap_half: Option<Scalar>,
    pub points_full: usize,
    pub min_gap_full: Option<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImanishiComponent {
    pub pieces: Vec<Interval>,
    pub tag: LeafTag,
    /// Set when the tag rests on sampled density evidence rather than exhausted orbits.
    pub budgeted_verdict: bool,
    pub samples: Vec<SampleEvidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImanishiReport {
    pub cut_points: Vec<Scalar>,
    /// Endpoints whose orbits did not close within the budget (no cuts taken from them).
    pub open_endpoint_orbits: Vec<Scalar>,
    pub components: Vec<ImanishiComponent>,
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SystemType {
    Simplicial,
    Surface,
    Axial,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "certificate", rename_all = "snake_case")]
pub enum Certificate {
    /// The machine erased all of `D`.
    MachineEmpties { steps: usize, erased: Scalar },
    /// Finite partition of the pure system mapped piece-to-piece by every isometry.
    Partition { pieces: Vec<Interval> },
    /// Domains and ranges each tile `D`, and sampled orbits are dense.
    Surface { components: Vec<ImanishiComponent> },
    /// Two translation offsets independent over Q.
    Axial { offsets: (Scalar, Scalar), offset_rank: usize },
    None { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub kind: SystemType,
    pub certificate: Certificate,
    pub machine: MachineStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Band {
    pub map: usize,
    pub dom: Interval,
    pub ran: Interval,
    pub eps: i8,
    pub width: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BandComplex {
    pub base: MultiInterval,
    pub bands: Vec<Band>,
    pub singletons: usize,
    pub band_count: usize,
    pub base_measure: Scalar,
    pub band_measure: Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeafEdge {
    pub from: usize,
    pub to: usize,
    pub length: Scalar,
    pub pieces: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeafSpaceGraph {
    /// Each vertex is an orbit class of cut points.
    pub vertices: Vec<Vec<Scalar>>,
    pub edges: Vec<LeafEdge>,
    pub components: usize,
    pub betti: usize,
    pub is_tree: bool,
    pub total_length: Scalar,
}

impl LeafSpaceGraph {
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph leafspace {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let label: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("  {i} [label=\"{}\"];\n", label.join(" ")));
        }
        for e in &self.edges {
            s.push_str(&format!("  {} -- {} [length=\"{}\", label=\"{}\"];\n", e.from, e.to, e.length, e.length));
        }
        s.push_str("}\n");
        s
    }
}

struct UnionFind {
    parent: Vec<usize>,
    /// Orientation of each node relative to its parent (`false` = same).
    flip: Vec<bool>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), flip: vec![false; n] }
    }

    fn find(&mut self, x: usize) -> (usize, bool) {
        if self.parent[x] == x {
            return (x, false);
        }
        let (r, f) = self.find(self.parent[x]);
        self.parent[x] = r;
        self.flip[x] ^= f;
        (r, self.flip[x])
    }

    /// Joins with relative orientation `rel`; returns false on an orientation conflict.
    fn union(&mut self, a: usize, b: usize, rel: bool) -> bool {
        let (ra, fa) = self.find(a);
        let (rb, fb) = self.find(b);
        if ra == rb {
            return fa ^ fb == rel;
        }
        let (lo, hi, f) = if ra < rb { (ra, rb, fa ^ fb ^ rel) } else { (rb, ra, fa ^ fb ^ rel) };
        self.parent[hi] = lo;
        self.flip[hi] = f;
        true
    }
}

/// Closed intersection of an interval with the components of a multi-interval.
fn clip(iv: &Interval, d: &MultiInterval) -> Res<Vec<Interval>> {
    let mut out = Vec::new();
    for c in &d.components {
        if let Some(x) = iv.intersect(c)? {
            out.push(x);
        }
    }
    Ok(out)
}

impl IsometrySystem {
    pub fn new(d: MultiInterval, maps: Vec<PartialIsometry>) -> Res<Self> {
        for (i, m) in maps.iter().enumerate() {
            if d.component_containing(&m.dom)?.is_none() {
                return Err(IsosysError::Invalid(format!("map {i}: domain {} is not inside D", m.dom)));
            }
            if d.component_containing(&m.ran)?.is_none() {
                return Err(IsosysError::Invalid(format!("map {i}: range {} is not inside D", m.ran)));
            }
        }
        Ok(IsometrySystem { d, maps })
    }

    fn bases(&self) -> Vec<&Interval> {
        self.maps.iter().filter(|m| !m.is_singleton()).flat_map(|m| [&m.dom, &m.ran]).collect()
    }

    pub fn multiplicity_profile(&self) -> Res<Profile> {
        let bases = self.bases();
        let mut entries = Vec::new();
        for (k, c) in self.d.components.iter().enumerate() {
            let mut cuts = vec![c.lo.clone(), c.hi.clone()];
            for b in &bases {
                for x in [&b.lo, &b.hi] {
                    if c.contains(x)? {
                        cuts.push(x.clone());
                    }
                }
            }
            sort_dedup(&mut cuts)?;
            for (i, x) in cuts.iter().enumerate() {
                let mut mult = 0;
                for b in &bases {
                    if b.contains(x)? {
                        mult += 1;
                    }
                }
                entries.push(ProfileEntry::Point { component: k, x: x.clone(), mult });
                if let Some(y) = cuts.get(i + 1) {
                    let piece = Interval::new(x.clone(), y.clone());
                    let mut mult = 0;
                    for b in &bases {
                        if b.contains_interval(&piece)? {
                            mult += 1;
                        }
                    }
                    entries.push(ProfileEntry::Open { component: k, lo: x.clone(), hi: y.clone(), mult });
                }
            }
        }
        Ok(Profile { entries })
    }

    /// The next interval the machine would erase, in the fixed order:
    /// components left to right, left end then right end; interior splits
    /// only when no extremity is trimmable.
    fn next_trim(&self) -> Res<Option<(TrimKind, usize, Scalar, Scalar)>> {
        let profile = self.multiplicity_profile()?;
        let mut per: Vec<(Vec<(Scalar, Scalar, usize)>, Vec<usize>)> = vec![(vec![], vec![]); self.d.components.len()];
        for e in &profile.entries {
            match e {
                ProfileEntry::Open { component, lo, hi, mult } => per[*component].0.push((lo.clone(), hi.clone(), *mult)),
                ProfileEntry::Point { component, mult, .. } => per[*component].1.push(*mult),
            }
        }
        // per[k].1 holds point multiplicities including both ends; inner[j] is the point after opens[j].
        for (k, (opens, points)) in per.iter().enumerate() {
            let inner = &points[1..points.len() - 1];
            let last = opens.len() - 1;
            if opens[0].2 <= 1 {
                let mut j = 0;
                while j < last && inner[j] <= 1 && opens[j + 1].2 <= 1 {
                    j += 1;
                }
                let c = &self.d.components[k];
                return Ok(Some(if j == last {
                    (TrimKind::Component, k, c.lo.clone(), c.hi.clone())
                } else {
                    (TrimKind::Left, k, c.lo.clone(), opens[j].1.clone())
                }));
            }
            if opens[last].2 <= 1 {
                let mut j = last;
                while j > 0 && inner[j - 1] <= 1 && opens[j - 1].2 <= 1 {
                    j -= 1;
                }
                return Ok(Some((TrimKind::Right, k, opens[j].0.clone(), self.d.components[k].hi.clone())));
            }
        }
        for (k, (opens, points)) in per.iter().enumerate() {
            let inner = &points[1..points.len() - 1];
            let mut j = 1;
            while j + 1 < opens.len() {
                if opens[j].2 <= 1 {
                    let start = j;
                    while j + 1 < opens.len() && inner[j] <= 1 && opens[j + 1].2 <= 1 {
                        j += 1;
                    }
                    // extremity runs were handled above, so this run is interior
                    return Ok(Some((TrimKind::Split, k, opens[start].0.clone(), opens[j].1.clone())));
                }
                j += 1;
            }
        }
        Ok(None)
    }

    pub fn is_pure(&self) -> Res<bool> {
        Ok(self.next_trim()?.is_none())
    }

    /// Erases one trimmable interval and restricts every isometry to what is
    /// left on both sides: new domain = dom ∩ D' ∩ φ⁻¹(ran ∩ D').
    pub fn trim_step(&self) -> Res<(IsometrySystem, TrimStep)> {
        let (kind, k, lo, hi) = self.next_trim()?.ok_or(IsosysError::NothingToTrim)?;
        let c = &self.d.components[k];
        let mut comps: Vec<Interval> = Vec::new();
        for (i, x) in self.d.components.iter().enumerate() {
            if i != k {
                comps.push(x.clone());
                continue;
            }
            match kind {
                TrimKind::Left => comps.push(Interval::new(hi.clone(), c.hi.clone())),
                TrimKind::Right => comps.push(Interval::new(c.lo.clone(), lo.clone())),
                TrimKind::Split => {
                    comps.push(Interval::new(c.lo.clone(), lo.clone()));
                    comps.push(Interval::new(hi.clone(), c.hi.clone()));
                }
                TrimKind::Component => {}
            }
        }
        let d = MultiInterval { components: comps };
        let mut maps = Vec::new();
        for m in &self.maps {
            if m.is_singleton() {
                if d.component_of(&m.dom.lo)?.is_some() && d.component_of(&m.ran.lo)?.is_some() {
                    maps.push(m.clone());
                }
                continue;
            }
            for p in clip(&m.dom, &d)? {
                for r in clip(&m.ran, &d)? {
                    if let Some(q) = p.intersect(&m.preimage(&r))? {
                        if !q.is_degenerate() {
                            maps.push(m.restrict(q));
                        }
                    }
                }
            }
        }
        let erased = &hi - &lo;
        let step = TrimStep {
            step: 0,
            kind,
            component: k,
            lo,
            hi,
            erased,
            maps_after: maps.len(),
            components_after: d.components.len(),
        };
        Ok((IsometrySystem { d, maps }, step))
    }

    pub fn rips_run(&self, max_steps: usize) -> Res<MachineOutcome> {
        let mut s = self.clone();
        let mut log = Vec::new();
        let mut erased = Scalar::zero();
        loop {
            if s.d.is_empty() {
                return Ok(MachineOutcome { status: MachineStatus::HaltEmpty, system: s, erased, steps: log.len(), log });
            }
            if s.is_pure()? {
                return Ok(MachineOutcome { status: MachineStatus::Pure, system: s, erased, steps: log.len(), log });
            }
            if log.len() >= max_steps {
                return Ok(MachineOutcome {
                    status: MachineStatus::BudgetExceeded,
                    system: s,
                    erased,
                    steps: log.len(),
                    log,
                });
            }
            let (next, mut step) = s.trim_step()?;
            step.step = log.len() + 1;
            erased += &step.erased;
            log.push(step);
            s = next;
        }
    }

    /// Breadth-first orbit search. With `closed_bases` every map (singletons
    /// included) applies on its closed domain; otherwise only non-singleton
    /// maps apply, at interior points of their domain or range.
    pub fn orbit_with(&self, x: &Scalar, max_points: usize, closed_bases: bool) -> Res<OrbitReport> {
        let comp = self
            .d
            .component_of(x)?
            .ok_or_else(|| IsosysError::Input(format!("start point {x} is not in D")))?;
        let mut points = vec![OrbitPoint { x: x.clone(), component: comp, word: vec![] }];
        let mut seen: HashSet<Scalar> = HashSet::from([x.clone()]);
        let mut queue = VecDeque::from([0usize]);
        let mut closed = true;
        'bfs: while let Some(i) = queue.pop_front() {
            let y = points[i].x.clone();
            for (mi, m) in self.maps.iter().enumerate() {
                if !closed_bases && m.is_singleton() {
                    continue;
                }
                for dir in [1i8, -1] {
                    let (src, img) = if dir == 1 { (&m.dom, m.apply(&y)) } else { (&m.ran, m.apply_inverse(&y)) };
                    let inside = if closed_bases { src.contains(&y)? } else { src.contains_interior(&y)? };
                    if !inside || seen.contains(&img) {
                        continue;
                    }
                    if points.len() >= max_points {
                        closed = false;
                        break 'bfs;
                    }
                    let component = self.d.component_of(&img)?.expect("ranges lie in D");
                    let mut word = points[i].word.clone();
                    word.push((mi, dir));
                    seen.insert(img.clone());
                    points.push(OrbitPoint { x: img, component, word });
                    queue.push_back(points.len() - 1);
                }
            }
        }
        let min_gap = min_gap(&points)?;
        Ok(OrbitReport { start: x.clone(), points, closed, min_gap, max_points })
    }

    pub fn orbit(&self, x: &Scalar, max_points: usize) -> Res<OrbitReport> {
        self.orbit_with(x, max_points, true)
    }

    /// Re-applies a word from `start`; `None` if some step is undefined.
    pub fn replay(&self, start: &Scalar, word: &[Move]) -> Res<Option<Scalar>> {
        let mut y = start.clone();
        for &(mi, dir) in word {
            let m = self.maps.get(mi).ok_or_else(|| IsosysError::Input(format!("no map {mi}")))?;
            let src = if dir == 1 { &m.dom } else { &m.ran };
            if !src.contains(&y)? {
                return Ok(None);
            }
            y = if dir == 1 { m.apply(&y) } else { m.apply_inverse(&y) };
        }
        Ok(Some(y))
    }

    /// All component and base endpoints, sorted.
    pub fn endpoints(&self) -> Res<Vec<Scalar>> {
        let mut v: Vec<Scalar> = Vec::new();
        for c in &self.d.components {
            v.push(c.lo.clone());
            v.push(c.hi.clone());
        }
        for m in &self.maps {
            for iv in [&m.dom, &m.ran] {
                v.push(iv.lo.clone());
                v.push(iv.hi.clone());
            }
        }
        sort_dedup(&mut v)?;
        Ok(v)
    }

    fn endpoint_orbits(&self, budget: usize, exec: Exec) -> Res<Vec<OrbitReport>> {
        let ends = self.endpoints()?;
        exec.map(&ends, |x| self.orbit(x, budget)).into_iter().collect()
    }

    /// Cuts `D` at `cuts` (sorted), returning closed pieces in order.
    fn pieces(&self, cuts: &[Scalar]) -> Res<Vec<Interval>> {
        let mut out = Vec::new();
        for c in &self.d.components {
            let mut pts = vec![c.lo.clone(), c.hi.clone()];
            for x in cuts {
                if c.contains(x)? {
                    pts.push(x.clone());
                }
            }
            sort_dedup(&mut pts)?;
            for w in pts.windows(2) {
                out.push(Interval::new(w[0].clone(), w[1].clone()));
            }
        }
        Ok(out)
    }

    fn piece_index(pieces: &[Interval], iv: &Interval) -> Option<usize> {
        pieces.iter().position(|p| p == iv)
    }

    pub fn imanishi_components(&self, budget: usize) -> Res<ImanishiReport> {
        self.imanishi_components_with(budget, Exec::default())
    }

    /// Cuts `D` at finite endpoint orbits, groups pieces that some isometry
    /// carries onto each other, and tags each group by sampling the orbits of
    /// piece midpoints at budgets `budget / 2` and `budget`.
    pub fn imanishi_components_with(&self, budget: usize, exec: Exec) -> Res<ImanishiReport> {
        if !self.is_pure()? {
            return Err(IsosysError::NotPure);
        }
        let orbits = self.endpoint_orbits(budget, exec)?;
        let mut cuts = Vec::new();
        let mut open = Vec::new();
        for o in &orbits {
            if o.closed {
                cuts.extend(o.points.iter().map(|p| p.x.clone()));
            } else {
                open.push(o.start.clone());
            }
        }
        sort_dedup(&mut cuts)?;
        let pieces = self.pieces(&cuts)?;
        let mut uf = UnionFind::new(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            for m in self.maps.iter().filter(|m| !m.is_singleton()) {
                let Some(part) = p.intersect(&m.dom)? else { continue };
                if part.is_degenerate() {
                    continue;
                }
                let img = m.image(&part);
                for (j, q) in pieces.iter().enumerate() {
                    if let Some(o) = img.intersect(q)? {
                        if !o.is_degenerate() {
                            uf.union(i, j, false);
                        }
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..pieces.len() {
            groups.entry(uf.find(i).0).or_default().push(i);
        }
        let half = (budget / 2).max(1);
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let tagged: Vec<Res<ImanishiComponent>> = exec.map(&groups, |members| {
            let mut samples = Vec::new();
            let mut dense = false;
            let mut all_closed = true;
            for &i in members {
                let start = pieces[i].midpoint();
                let small = self.orbit(&start, half)?;
                let full = self.orbit(&start, budget)?;
                if !full.closed {
                    all_closed = false;
                    if let (Some(a), Some(b)) = (&small.min_gap, &full.min_gap) {
                        if lt(b, a)? {
                            dense = true;
                        }
                    }
                }
                samples.push(SampleEvidence {
                    start,
                    closed: full.closed,
                    points_half: small.points.len(),
                    min_gap_half: small.min_gap,
                    points_full: full.points.len(),
                    min_gap_full: full.min_gap,
                });
            }
            let (tag, budgeted_verdict) = if all_closed {
                (LeafTag::CompactLeaves, false)
            } else if dense {
                (LeafTag::DenseLeaves, true)
            } else {
                return Err(IsosysError::BudgetExceeded(format!(
                    "orbits in component starting at {} neither close nor show shrinking gaps",
                    pieces[members[0]].lo
                )));
            };
            Ok(ImanishiComponent {
                pieces: members.iter().map(|&i| pieces[i].clone()).collect(),
                tag,
                budgeted_verdict,
                samples,
            })
        });
        let components = tagged.into_iter().collect::<Res<Vec<_>>>()?;
        Ok(ImanishiReport { cut_points: cuts, open_endpoint_orbits: open, components, budget })
    }

    /// True if the non-singleton domains tile `D`, and so do the ranges.
    fn is_exchange(&self) -> Res<bool> {
        let maps: Vec<&PartialIsometry> = self.maps.iter().filter(|m| !m.is_singleton()).collect();
        for side in [0, 1] {
            let mut ivs: Vec<&Interval> = maps.iter().map(|m| if side == 0 { &m.dom } else { &m.ran }).collect();
            sort_scalars(&mut ivs, |iv| &iv.lo)?;
            let mut k = 0;
            for c in &self.d.components {
                let mut at = c.lo.clone();
                while k < ivs.len() && ivs[k].lo == at && le(&ivs[k].hi, &c.hi)? {
                    at = ivs[k].hi.clone();
                    k += 1;
                }
                if at != c.hi {
                    return Ok(false);
                }
            }
            if k != ivs.len() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Rank over Q of the offsets, read as coefficient vectors in the scalar basis.
    pub fn offset_rank(&self) -> (usize, Option<(usize, usize)>) {
        let dim = self.maps.iter().map(|m| m.t.basis().dim()).max().unwrap_or(1);
        let vecs: Vec<Vec<BigRational>> =
            self.maps.iter().map(|m| (0..dim).map(|i| m.t.coeff(i)).collect()).collect();
        let mut rows: Vec<Vec<BigRational>> = Vec::new();
        let mut chosen: Vec<usize> = Vec::new();
        for (idx, v) in vecs.iter().enumerate() {
            let mut v = v.clone();
            for r in &rows {
                let p = r.iter().position(|x| !x.is_zero()).expect("pivot");
                if p < v.len() && !v[p].is_zero() {
                    let f = &v[p] / &r[p];
                    for (a, b) in v.iter_mut().zip(r) {
                        *a -= &f * b;
                    }
                }
            }
            if v.iter().any(|x| !x.is_zero()) {
                rows.push(v);
                chosen.push(idx);
            }
        }
        let pair = if chosen.len() >= 2 { Some((chosen[0], chosen[1])) } else { None };
        (rows.len(), pair)
    }

    /// SIMPLICIAL, SURFACE or AXIAL by the documented sufficient conditions,
    /// checked in that order; UNRESOLVED otherwise.
    pub fn classify(&self, max_steps: usize, orbit_budget: usize) -> Res<Classification> {
        let out = self.rips_run(max_steps)?;
        let unresolved = |reason: &str, machine: MachineStatus| Classification {
            kind: SystemType::Unresolved,
            certificate: Certificate::None { reason: reason.to_string() },
            machine,
        };
        match out.status {
            MachineStatus::HaltEmpty => {
                return Ok(Classification {
                    kind: SystemType::Simplicial,
                    certificate: Certificate::MachineEmpties { steps: out.steps, erased: out.erased },
                    machine: MachineStatus::HaltEmpty,
                })
            }
            MachineStatus::BudgetExceeded => {
                return Ok(unresolved("machine step budget exhausted", MachineStatus::BudgetExceeded))
            }
            MachineStatus::Pure => {}
        }
        let p = out.system;
        if let Some(pieces) = p.stable_partition(orbit_budget)? {
            return Ok(Classification {
                kind: SystemType::Simplicial,
                certificate: Certificate::Partition { pieces },
                machine: MachineStatus::Pure,
            });
        }
        if p.is_exchange()? && p.multiplicity_profile()?.constant_off_breakpoints(2) {
            match p.imanishi_components(orbit_budget) {
                Ok(rep) if rep.components.iter().all(|c| c.tag == LeafTag::DenseLeaves) => {
                    return Ok(Classification {
                        kind: SystemType::Surface,
                        certificate: Certificate::Surface { components: rep.components },
                        machine: MachineStatus::Pure,
                    })
                }
                Ok(_) | Err(IsosysError::BudgetExceeded(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let orientable = p.maps.iter().all(|m| m.eps == 1);
        let (rank, pair) = p.offset_rank();
        if orientable && rank >= 2 && p.multiplicity_profile()?.min_everywhere() >= 2 {
            let (i, j) = pair.expect("rank >= 2");
            return Ok(Classification {
                kind: SystemType::Axial,
                certificate: Certificate::Axial { offsets: (p.maps[i].t.clone(), p.maps[j].t.clone()), offset_rank: rank },
                machine: MachineStatus::Pure,
            });
        }
        Ok(unresolved("no sufficient condition applies within the budgets", MachineStatus::Pure))
    }

    /// Partition at all (finite) endpoint orbits, if every isometry maps its pieces onto pieces.
    fn stable_partition(&self, budget: usize) -> Res<Option<Vec<Interval>>> {
        let orbits = self.endpoint_orbits(budget, Exec::default())?;
        if orbits.iter().any(|o| !o.closed) {
            return Ok(None);
        }
        let mut cuts: Vec<Scalar> = orbits.iter().flat_map(|o| o.points.iter().map(|p| p.x.clone())).collect();
        sort_dedup(&mut cuts)?;
        let pieces = self.pieces(&cuts)?;
        for p in &pieces {
            for m in self.maps.iter().filter(|m| !m.is_singleton()) {
                if m.dom.contains_interval(p)? && Self::piece_index(&pieces, &m.image(p)).is_none() {
                    return Ok(None);
                }
            }
        }
        Ok(Some(pieces))
    }

    pub fn suspend(&self) -> BandComplex {
        let bands: Vec<Band> = self
            .maps
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_singleton())
            .map(|(i, m)| Band { map: i, dom: m.dom.clone(), ran: m.ran.clone(), eps: m.eps, width: m.dom.length() })
            .collect();
        BandComplex {
            base: self.d.clone(),
            singletons: self.maps.len() - bands.len(),
            band_count: bands.len(),
            band_measure: bands.iter().map(|b| b.width.clone()).sum(),
            base_measure: self.d.measure(),
            bands,
        }
    }

    pub fn leaf_space_graph(&self, budget: usize) -> Res<LeafSpaceGraph> {
        self.leaf_space_graph_with(budget, Exec::default())
    }

    /// Quotient of the finite partition by the isometries. Pieces carried onto
    /// themselves with a flip are cut at their midpoints and the quotient is
    /// recomputed.
    pub fn leaf_space_graph_with(&self, budget: usize, exec: Exec) -> Res<LeafSpaceGraph> {
        let orbits = self.endpoint_orbits(budget, exec)?;
        let unclosed: Vec<String> = orbits.iter().filter(|o| !o.closed).map(|o| o.start.to_string()).collect();
        if !unclosed.is_empty() {
            return Err(IsosysError::NotSimplicial(unclosed));
        }
        let mut cuts: Vec<Scalar> = orbits.iter().flat_map(|o| o.points.iter().map(|p| p.x.clone())).collect();
        sort_dedup(&mut cuts)?;
        for _round in 0..8 {
            let pieces = self.pieces(&cuts)?;
            let mut uf = UnionFind::new(pieces.len());
            let mut conflicts: Vec<usize> = Vec::new();
            for (i, p) in pieces.iter().enumerate() {
                for m in self.maps.iter().filter(|m| !m.is_singleton()) {
                    if !m.dom.contains_interval(p)? {
                        continue;
                    }
                    let j = Self::piece_index(&pieces, &m.image(p)).ok_or_else(|| {
                        IsosysError::Invalid(format!("piece {p} is not carried onto a piece"))
                    })?;
                    if !uf.union(i, j, m.eps == -1) {
                        conflicts.push(i);
                    }
                }
            }
            if !conflicts.is_empty() {
                let mut extra = Vec::new();
                for i in conflicts {
                    let root = uf.find(i).0;
                    for (k, p) in pieces.iter().enumerate() {
                        if uf.find(k).0 == root {
                            extra.push(p.midpoint());
                        }
                    }
                }
                cuts.extend(extra);
                sort_dedup(&mut cuts)?;
                continue;
            }
            return self.quotient_graph(&pieces, &cuts, &mut uf);
        }
        Err(IsosysError::BudgetExceeded("orientation conflicts persist after repeated midpoint cuts".into()))
    }

    fn quotient_graph(&self, pieces: &[Interval], cuts: &[Scalar], puf: &mut UnionFind) -> Res<LeafSpaceGraph> {
        let mut pts: Vec<Scalar> = cuts.to_vec();
        for c in &self.d.components {
            pts.push(c.lo.clone());
            pts.push(c.hi.clone());
        }
        sort_dedup(&mut pts)?;
        let index: HashMap<Scalar, usize> = pts.iter().cloned().enumerate().map(|(i, x)| (x, i)).collect();
        let mut vuf = UnionFind::new(pts.len());
        for (i, x) in pts.iter().enumerate() {
            for m in &self.maps {
                if m.dom.contains(x)? {
                    if let Some(&j) = index.get(&m.apply(x)) {
                        vuf.union(i, j, false);
                    }
                }
            }
        }
        let mut vclass: BTreeMap<usize, usize> = BTreeMap::new();
        let mut vertices: Vec<Vec<Scalar>> = Vec::new();
        for i in 0..pts.len() {
            let r = vuf.find(i).0;
            let id = *vclass.entry(r).or_insert_with(|| {
                vertices.push(vec![]);
                vertices.len() - 1
            });
            vertices[id].push(pts[i].clone());
        }
        let mut eclass: BTreeMap<usize, usize> = BTreeMap::new();
        let mut edges: Vec<LeafEdge> = Vec::new();
        for (i, p) in pieces.iter().enumerate() {
            let r = puf.find(i).0;
            if let Some(&e) = eclass.get(&r) {
                edges[e].pieces.push(p.clone());
                continue;
            }
            let from = vclass[&vuf.find(index[&p.lo]).0];
            let to = vclass[&vuf.find(index[&p.hi]).0];
            eclass.insert(r, edges.len());
            edges.push(LeafEdge { from, to, length: p.length(), pieces: vec![p.clone()] });
        }
        let mut cuf = UnionFind::new(vertices.len());
        for e in &edges {
            cuf.union(e.from, e.to, false);
        }
        let components = (0..vertices.len()).filter(|&v| cuf.find(v).0 == v).count();
        let betti = edges.len() + components - vertices.len();
        let total_length = edges.iter().map(|e| e.length.clone()).sum();
        Ok(LeafSpaceGraph { vertices, edges, components, betti, is_tree: betti == 0 && components == 1, total_length })
    }
}

fn min_gap(points: &[OrbitPoint]) -> Res<Option<Scalar>> {
    let mut by_comp: BTreeMap<usize, Vec<Scalar>> = BTreeMap::new();
    for p in points {
        by_comp.entry(p.component).or_default().push(p.x.clone());
    }
    let mut best: Option<Scalar> = None;
    for (_, mut xs) in by_comp {
        sort_dedup(&mut xs)?;
        for w in xs.windows(2) {
            let g = &w[1] - &w[0];
            best = Some(match best {
                Some(b) if le(&b, &g)? => b,
                _ => g,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    dom: (String, String),
    ran: (String, String),
    #[serde(default = "one")]
    eps: i8,
    #[serde(default)]
    t: Option<String>,
}

fn one() -> i8 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(default)]
    basis: Option<Vec<String>>,
    #[serde(rename = "D")]
    d: Vec<(String, String)>,
    #[serde(default)]
    maps: Vec<RawMap>,
}

/// Parses `{"D":[["0","1"]],"maps":[{"dom":["0","3/5"],"ran":["2/5","1"],"eps":1,"t":"2/5"}]}`.
/// `basis` (default `["1"]`) declares the scalar basis; `t` may be omitted.
pub fn parse_system_json(text: &str) -> Res<IsometrySystem> {
    let raw: RawSystem = serde_json::from_str(text).map_err(|e| IsosysError::Input(e.to_string()))?;
    let basis: Arc<ScalarBasis> = match &raw.basis {
        Some(tags) => Arc::new(ScalarBasis::from_tags(tags)?),
        None => ScalarBasis::rational(),
    };
    let num = |s: &str| Scalar::parse(s, &basis).map_err(IsosysError::from);
    let iv = |p: &(String, String)| -> Res<Interval> { Ok(Interval::new(num(&p.0)?, num(&p.1)?)) };
    let d = MultiInterval::new(raw.d.iter().map(iv).collect::<Res<_>>()?)?;
    let mut maps = Vec::new();
    for (i, m) in raw.maps.iter().enumerate() {
        let (dom, ran) = (iv(&m.dom)?, iv(&m.ran)?);
        let map = match &m.t {
            Some(t) => PartialIsometry::new(dom, ran, m.eps, num(t)?),
            None => PartialIsometry::between(dom, ran, m.eps),
        }
        .map_err(|e| IsosysError::Invalid(format!("map {i}: {e}")))?;
        maps.push(map);
    }
    IsometrySystem::new(d, maps)
}

/// Writes a system back in the input format, scalars as strings.
pub fn system_to_json(s: &IsometrySystem) -> serde_json::Value {
    let basis = s
        .maps
        .iter()
        .map(|m| m.t.basis().clone())
        .chain(s.d.components.iter().map(|c| c.lo.basis().clone()))
        .max_by_key(|b| b.dim())
        .unwrap_or_else(ScalarBasis::rational);
    let pair = |iv: &Interval| serde_json::json!([iv.lo.to_string(), iv.hi.to_string()]);
    serde_json::json!({
        "basis": basis.tags(),
        "D": s.d.components.iter().map(pair).collect::<Vec<_>>(),
        "maps": s.maps.iter().map(|m| serde_json::json!({
            "dom": pair(&m.dom), "ran": pair(&m.ran), "eps": m.eps, "t": m.t.to_string()
        })).collect::<Vec<_>>(),
    })
}

/// Shipped example systems.
pub mod fixtures {
    use super::*;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_ratio(n, d)
    }

    /// `[0,1/2] -> [1/2,1]`, `x -> x + 1/2` on `D = [0,1]`.
    pub fn single_band() -> IsometrySystem {
        let d = MultiInterval::new(vec![Interval::rational((0, 1), (1, 1))]).unwrap();
        IsometrySystem::new(d, vec![PartialIsometry::translation(Interval::rational((0, 1), (1, 2)), q(1, 2))]).unwrap()
    }

    /// Rotation by `alpha` on `[lo, lo+1]` written as a 2-interval exchange.
    pub fn rotation_on(lo: &Scalar, alpha: &Scalar) -> Vec<PartialIsometry> {
        let one = Scalar::one();
        let cut = lo + &(&one - alpha);
        let top = lo + &one;
        vec![
            PartialIsometry::translation(Interval::new(lo.clone(), cut.clone()), alpha.clone()),
            PartialIsometry::translation(Interval::new(cut, top), alpha - &one),
        ]
    }

    /// Rotation by 2/5 on `[0,1]`.
    pub fn rational_exchange() -> IsometrySystem {
        let d = MultiInterval::new(vec![Interval::rational((0, 1), (1, 1))]).unwrap();
        IsometrySystem::new(d, rotation_on(&Scalar::zero(), &q(2, 5))).unwrap()
    }

    /// Rotation by `(sqrt5 - 1)/2` on `[0,1]`: pieces of lengths `1 - γ` and `γ`.
    pub fn golden_exchange() -> IsometrySystem {
        let d = MultiInterval::new(vec![Interval::new(Scalar::zero(), Scalar::one())]).unwrap();
        IsometrySystem::new(d, rotation_on(&Scalar::zero(), &Scalar::golden_gamma())).unwrap()
    }

    /// Translations by `γ` on `[0,1-γ]` and by `1-γ` on `[0,γ]`.
    pub fn axial_pair() -> IsometrySystem {
        let g = Scalar::golden_gamma();
        let h = &Scalar::one() - &g;
        let d = MultiInterval::new(vec![Interval::new(Scalar::zero(), Scalar::one())]).unwrap();
        IsometrySystem::new(
            d,
            vec![
                PartialIsometry::translation(Interval::new(Scalar::zero(), h.clone()), g.clone()),
                PartialIsometry::translation(Interval::new(Scalar::zero(), g.clone()), h),
            ],
        )
        .unwrap()
    }

    /// Rational rotation on `[0,1]` and golden rotation on `[2,3]`.
    pub fn two_component() -> IsometrySystem {
        let two = Scalar::from_integer(2);
        let d = MultiInterval::new(vec![
            Interval::rational((0, 1), (1, 1)),
            Interval::new(two.clone(), Scalar::from_integer(3)),
        ])
        .unwrap();
        let mut maps = rotation_on(&Scalar::zero(), &q(2, 5));
        maps.extend(rotation_on(&two, &Scalar::golden_gamma()));
        IsometrySystem::new(d, maps).unwrap()
    }

    /// `x -> 1 - x` on `[0,1]`.
    pub fn reflection() -> IsometrySystem {
        let d = MultiInterval::new(vec![Interval::rational((0, 1), (1, 1))]).unwrap();
        let i = Interval::rational((0, 1), (1, 1));
        IsometrySystem::new(d, vec![PartialIsometry::new(i.clone(), i, -1, q(1, 1)).unwrap()]).unwrap()
    }

    /// `[0,1] -> [2,3]`, `x -> x + 2`.
    pub fn glued_pair() -> IsometrySystem {
        let d = MultiInterval::new(vec![Interval::rational((0, 1), (1, 1)), Interval::rational((2, 1), (3, 1))]).unwrap();
        IsometrySystem::new(d, vec![PartialIsometry::translation(Interval::rational((0, 1), (1, 1)), q(2, 1))]).unwrap()
    }

    /// The single band, whose quotient is a circle of length 1/2.
    pub fn circle() -> IsometrySystem {
        single_band()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn q(n: i64, d: i64) -> Scalar {
        Scalar::from_ratio(n, d)
    }

    fn unit_d() -> MultiInterval {
        MultiInterval::new(vec![Interval::rational((0, 1), (1, 1))]).unwrap()
    }

    #[test]
    fn maps_must_match_endpoints() {
        let bad = PartialIsometry::new(Interval::rational((0, 1), (1, 2)), Interval::rational((1, 2), (1, 1)), 1, q(1, 3));
        assert!(bad.is_err());
        let refl = PartialIsometry::between(Interval::rational((0, 1), (1, 2)), Interval::rational((1, 2), (1, 1)), -1).unwrap();
        assert_eq!(refl.t, q(1, 1));
        assert_eq!(refl.apply(&q(1, 5)), q(4, 5));
        assert!(MultiInterval::new(vec![Interval::rational((0, 1), (1, 1)), Interval::rational((1, 1), (2, 1))]).is_err());
    }

    #[test]
    fn profile_examples() {
        let empty = IsometrySystem::new(unit_d(), vec![]).unwrap();
        assert_eq!(empty.multiplicity_profile().unwrap().open_multiplicities(), vec![0]);
        let p = single_band().multiplicity_profile().unwrap();
        assert_eq!(
            p.entries,
            vec![
                ProfileEntry::Point { component: 0, x: q(0, 1), mult: 1 },
                ProfileEntry::Open { component: 0, lo: q(0, 1), hi: q(1, 2), mult: 1 },
                ProfileEntry::Point { component: 0, x: q(1, 2), mult: 2 },
                ProfileEntry::Open { component: 0, lo: q(1, 2), hi: q(1, 1), mult: 1 },
                ProfileEntry::Point { component: 0, x: q(1, 1), mult: 1 },
            ]
        );
        assert!(rational_exchange().multiplicity_profile().unwrap().constant_off_breakpoints(2));
        assert!(golden_exchange().multiplicity_profile().unwrap().constant_off_breakpoints(2));
    }

    #[test]
    fn trim_examples() {
        let (s1, st) = single_band().trim_step().unwrap();
        assert_eq!(st.kind, TrimKind::Left);
        assert_eq!((st.lo.clone(), st.hi.clone()), (q(0, 1), q(1, 2)));
        assert!(s1.maps.is_empty());
        assert_eq!(s1.d.components, vec![Interval::rational((1, 2), (1, 1))]);
        let (s2, st) = s1.trim_step().unwrap();
        assert_eq!(st.kind, TrimKind::Component);
        assert!(s2.d.is_empty());
        assert_eq!(rational_exchange().trim_step().unwrap_err(), IsosysError::NothingToTrim);
        let d = MultiInterval::new(vec![Interval::rational((0, 1), (2, 1))]).unwrap();
        let shift = PartialIsometry::translation(Interval::rational((0, 1), (1, 1)), q(1, 1));
        let flip = PartialIsometry::new(Interval::rational((0, 1), (2, 1)), Interval::rational((0, 1), (2, 1)), -1, q(2, 1)).unwrap();
        let s = IsometrySystem::new(d, vec![shift, flip]).unwrap();
        assert_eq!(s.trim_step().unwrap_err(), IsosysError::NothingToTrim);
    }

    #[test]
    fn interior_runs_split_the_component() {
        // both ends doubly covered, (1/4,3/4) uncovered
        let dom = Interval::rational((0, 1), (1, 4));
        let ran = Interval::rational((3, 4), (1, 1));
        let maps = vec![
            PartialIsometry::translation(dom.clone(), q(3, 4)),
            PartialIsometry::between(dom, ran, -1).unwrap(),
        ];
        let s = IsometrySystem::new(unit_d(), maps).unwrap();
        let (t, st) = s.trim_step().unwrap();
        assert_eq!(st.kind, TrimKind::Split);
        assert_eq!((st.lo, st.hi), (q(1, 4), q(3, 4)));
        assert_eq!(t.d.components.len(), 2);
        assert_eq!(t.maps, s.maps);
        assert!(t.is_pure().unwrap());
    }

    #[test]
    fn machine_examples() {
        let out = single_band().rips_run(100).unwrap();
        assert_eq!(out.status, MachineStatus::HaltEmpty);
        assert_eq!(out.erased, q(1, 1));
        assert_eq!(out.steps, 2);
        let out = rational_exchange().rips_run(100).unwrap();
        assert_eq!((out.status, out.steps), (MachineStatus::Pure, 0));
        let out = golden_exchange().rips_run(100).unwrap();
        assert_eq!((out.status, out.steps), (MachineStatus::Pure, 0));
        assert_eq!(single_band().rips_run(1).unwrap().status, MachineStatus::BudgetExceeded);
    }

    #[test]
    fn orbit_examples() {
        let o = rational_exchange().orbit(&q(0, 1), 200).unwrap();
        assert!(o.closed);
        let mut xs: Vec<Scalar> = o.points.iter().map(|p| p.x.clone()).collect();
        sort_dedup(&mut xs).unwrap();
        // 0 and 1 are both endpoints of the exchange pieces, so 1 joins the orbit of 0
        assert_eq!(xs, vec![q(0, 1), q(1, 5), q(2, 5), q(3, 5), q(4, 5), q(1, 1)]);
        let interior = rational_exchange().orbit(&q(1, 10), 200).unwrap();
        assert!(interior.closed);
        assert_eq!(interior.points.len(), 5);
        let s = IsometrySystem::new(
            unit_d(),
            vec![PartialIsometry::translation(Interval::rational((0, 1), (1, 4)), q(1, 4))],
        )
        .unwrap();
        let o = s.orbit(&q(9, 10), 10).unwrap();
        assert!(o.closed && o.points.len() == 1);
        let g = golden_exchange().orbit(&Scalar::zero(), 100).unwrap();
        assert_eq!(g.points.len(), 100);
        assert!(!g.closed);
        assert!(g.min_gap.unwrap().compare(&q(1, 50)).unwrap().is_lt());
    }

    #[test]
    fn orbit_words_replay() {
        let s = golden_exchange();
        let o = s.orbit(&q(1, 3), 60).unwrap();
        for p in &o.points {
            assert_eq!(s.replay(&o.start, &p.word).unwrap(), Some(p.x.clone()));
        }
    }

    #[test]
    fn interior_orbits_skip_endpoints() {
        let s = rational_exchange();
        let o = s.orbit_with(&q(2, 5), 100, false).unwrap();
        assert!(o.points.len() < s.orbit(&q(2, 5), 100).unwrap().points.len());
    }

    #[test]
    fn imanishi_examples() {
        let r = rational_exchange().imanishi_components(200).unwrap();
        assert_eq!(r.components.len(), 1);
        assert_eq!(r.components[0].tag, LeafTag::CompactLeaves);
        let g = golden_exchange().imanishi_components(200).unwrap();
        assert_eq!(g.components.len(), 1);
        assert_eq!(g.components[0].tag, LeafTag::DenseLeaves);
        assert!(g.components[0].budgeted_verdict);
        let two = two_component().imanishi_components(200).unwrap();
        let tags: Vec<LeafTag> = two.components.iter().map(|c| c.tag).collect();
        assert_eq!(tags, vec![LeafTag::CompactLeaves, LeafTag::DenseLeaves]);
        assert_eq!(single_band().imanishi_components(10).unwrap_err(), IsosysError::NotPure);
    }

    #[test]
    fn classify_examples() {
        let c = single_band().classify(100, 200).unwrap();
        assert_eq!(c.kind, SystemType::Simplicial);
        assert!(matches!(c.certificate, Certificate::MachineEmpties { .. }));
        assert_eq!(golden_exchange().classify(100, 200).unwrap().kind, SystemType::Surface);
        let ax = axial_pair().classify(100, 200).unwrap();
        assert_eq!(ax.kind, SystemType::Axial);
        let r = rational_exchange().classify(100, 200).unwrap();
        assert_eq!(r.kind, SystemType::Simplicial);
        assert!(matches!(r.certificate, Certificate::Partition { ref pieces } if pieces.len() == 5));
    }

    #[test]
    fn offset_rank_examples() {
        assert_eq!(axial_pair().offset_rank().0, 2);
        assert_eq!(rational_exchange().offset_rank().0, 1);
    }

    #[test]
    fn suspension_examples() {
        assert_eq!(IsometrySystem::new(unit_d(), vec![]).unwrap().suspend().band_count, 0);
        let b = golden_exchange().suspend();
        assert_eq!(b.band_count, 2);
        assert_eq!(b.band_measure, Scalar::one());
        assert_eq!(b.base_measure, Scalar::one());
    }

    #[test]
    fn leaf_space_examples() {
        let g = glued_pair().leaf_space_graph(200).unwrap();
        assert_eq!((g.vertices.len(), g.edges.len(), g.betti), (2, 1, 0));
        assert_eq!(g.total_length, q(1, 1));
        let r = reflection().leaf_space_graph(200).unwrap();
        assert_eq!((r.edges.len(), r.betti), (1, 0));
        assert_eq!(r.total_length, q(1, 2));
        assert!(r.is_tree);
        let c = circle().leaf_space_graph(200).unwrap();
        assert_eq!((c.vertices.len(), c.edges.len(), c.betti), (1, 1, 1));
        assert_eq!(c.total_length, q(1, 2));
        assert!(matches!(golden_exchange().leaf_space_graph(50), Err(IsosysError::NotSimplicial(_))));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"D":[["0","1"]],"maps":[{"dom":["0","3/5"],"ran":["2/5","1"],"eps":1,"t":"2/5"},
                       {"dom":["3/5","1"],"ran":["0","2/5"],"eps":1,"t":"-3/5"}]}"#;
        let s = parse_system_json(text).unwrap();
        assert_eq!(s, rational_exchange());
        let again = parse_system_json(&system_to_json(&s).to_string()).unwrap();
        assert_eq!(again, s);
        let golden = system_to_json(&golden_exchange()).to_string();
        assert_eq!(parse_system_json(&golden).unwrap(), golden_exchange());
        assert!(parse_system_json(r#"{"D":[["0","1"]],"maps":[{"dom":["0","1/2"],"ran":["0","1"]}]}"#).is_err());
    }
}
