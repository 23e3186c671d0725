//! Period cell of a ℤⁿ-periodic metric graph.
//!
//! A [`PeriodCell`] stores the compact cell `Y` together with
//!
//! * the decomposition `Y = Y₀ ∪ Y₁ ∪ … ∪ Y_m` (every edge carries its part index),
//! * the coupling vertex sets `𝒱_j = ∂Y₀ ∩ ∂Y_j` with their constants `q_j`,
//! * the boundary pairings that glue the external boundary `∂_ext Y` to its
//!   lattice translates.
//!
//! Cells are immutable once built. Construction only resolves identifiers
//! (structural soundness); the geometric standing assumptions are checked by
//! [`PeriodCell::validate`], which never fails but reports every violation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a vertex sits relative to the cell boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexRole {
    Interior,
    /// Degree-1 cut point lying inside an edge of the infinite graph.
    ExternalBoundary,
    /// Genuine degree-1 vertex of the infinite graph (free end).
    InternalBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: String,
    pub role: VertexRole,
}

/// Edge with local coordinate `x ∈ [0, length]`, `x = 0` at `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
    pub part: usize,
}

/// Identifies `plus = minus + Σ shift_k e_k`.
///
/// `orientation_signs = [s_minus, s_plus]` converts the outward derivative at
/// each stub into the derivative along a common direction of the underlying
/// edge of the infinite graph. Consistent pairings have opposite signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryPairing {
    pub minus: String,
    pub plus: String,
    pub shift: Vec<i64>,
    pub orientation_signs: [i8; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSet {
    pub part: usize,
    pub vertices: Vec<String>,
    pub q: f64,
}

/// Serialized form of a period cell (the graph-description document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub dimension: usize,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub pairings: Vec<BoundaryPairing>,
    pub couplings: Vec<CouplingSet>,
}

/// The cell references something that does not exist, or repeats an id.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("duplicate vertex id `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate edge id `{0}` (an edge belongs to exactly one part)")]
    DuplicateEdge(String),
    #[error("{context} references unknown vertex `{id}`")]
    UnknownVertex { context: String, id: String },
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("edge `{0}` is a loop")]
    Loop(String),
    #[error("edge `{id}` has invalid length {length}")]
    InvalidLength { id: String, length: f64 },
    #[error("coupling set has part index 0; coupled parts are numbered from 1")]
    CouplingPartZero,
    #[error("more than one coupling set for part {0}")]
    DuplicateCoupling(usize),
    #[error("pairing {minus}->{plus}: shift has {got} components, dimension is {expected}")]
    ShiftDimension {
        minus: String,
        plus: String,
        expected: usize,
        got: usize,
    },
    #[error("pairing {minus}->{plus}: orientation signs must be +1 or -1")]
    OrientationValue { minus: String, plus: String },
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error("subdivision position {position} outside (0, {length}) for edge `{edge}`")]
    Position {
        edge: String,
        position: f64,
        length: f64,
    },
    #[error("invalid builder input: {0}")]
    Input(String),
    #[error(transparent)]
    Limit(#[from] crate::limit::LimitError),
}

/// Standing assumption that a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    /// (i) every part has nonempty interior.
    NonemptyPart,
    /// (ii) every part is connected.
    ConnectedPart,
    /// (iv) external boundary lies in Y₀.
    ExternalInPartZero,
    /// (v) the coupling sets 𝒱_j are nonempty and sit on ∂Y₀ ∩ ∂Y_j.
    CouplingInterface,
    /// (vi) attached parts meet only inside ∂Y₀.
    AttachedPartsDisjoint,
    /// Boundary vertices have degree one; no isolated vertices.
    Degree,
    /// Each external vertex is paired exactly once, with nonzero shift.
    Pairing,
    /// q_j > 0.
    PositiveCoupling,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::NonemptyPart => "condition (i)",
            Condition::ConnectedPart => "condition (ii)",
            Condition::ExternalInPartZero => "condition (iv)",
            Condition::CouplingInterface => "condition (v)",
            Condition::AttachedPartsDisjoint => "condition (vi)",
            Condition::Degree => "degree",
            Condition::Pairing => "pairing",
            Condition::PositiveCoupling => "coupling constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: Condition,
    pub ids: Vec<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.condition.label(), self.message)?;
        if !self.ids.is_empty() {
            write!(f, " [{}]", self.ids.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, condition: Condition) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// One end of an edge, seen from the vertex it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEnd {
    pub edge: usize,
    /// `true` when the vertex is the head (`x = length`).
    pub at_head: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedPairing {
    pub minus: usize,
    pub plus: usize,
    pub shift: Vec<i64>,
    pub signs: [f64; 2],
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedCoupling {
    pub part: usize,
    pub vertices: Vec<usize>,
    pub q: f64,
}

/// Period cell with resolved incidence structure.
#[derive(Debug, Clone)]
pub struct PeriodCell {
    doc: GraphDocument,
    m: usize,
    vertex_index: HashMap<String, usize>,
    ends: Vec<[usize; 2]>,
    incidence: Vec<Vec<EdgeEnd>>,
    pairings: Vec<ResolvedPairing>,
    couplings: Vec<ResolvedCoupling>,
}

/// Per-part totals: lengths `l₀…l_m` and coupling vertex counts `N₁…N_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTotals {
    pub lengths: Vec<f64>,
    pub counts: Vec<usize>,
}

impl PartTotals {
    pub fn m(&self) -> usize {
        self.counts.len()
    }

    /// `l_j` for `j = 0..=m`.
    pub fn length(&self, j: usize) -> f64 {
        self.lengths[j]
    }

    /// `N_j` for `j = 1..=m`.
    pub fn count(&self, j: usize) -> usize {
        self.counts[j - 1]
    }
}

impl PeriodCell {
    pub fn new(doc: GraphDocument) -> Result<Self, StructuralError> {
        if doc.dimension == 0 {
            return Err(StructuralError::ZeroDimension);
        }
        let mut vertex_index = HashMap::with_capacity(doc.vertices.len());
        for (i, v) in doc.vertices.iter().enumerate() {
            if vertex_index.insert(v.id.clone(), i).is_some() {
                return Err(StructuralError::DuplicateVertex(v.id.clone()));
            }
        }
        let lookup = |context: &str, id: &str| {
            vertex_index
                .get(id)
                .copied()
                .ok_or_else(|| StructuralError::UnknownVertex {
                    context: context.to_string(),
                    id: id.to_string(),
                })
        };

        let mut seen_edges = BTreeSet::new();
        let mut ends = Vec::with_capacity(doc.edges.len());
        let mut incidence = vec![Vec::new(); doc.vertices.len()];
        for (e, edge) in doc.edges.iter().enumerate() {
            if !seen_edges.insert(edge.id.as_str()) {
                return Err(StructuralError::DuplicateEdge(edge.id.clone()));
            }
            if !(edge.length.is_finite() && edge.length > 0.0) {
                return Err(StructuralError::InvalidLength {
                    id: edge.id.clone(),
                    length: edge.length,
                });
            }
            let ctx = format!("edge `{}`", edge.id);
            let tail = lookup(&ctx, &edge.tail)?;
            let head = lookup(&ctx, &edge.head)?;
            if tail == head {
                return Err(StructuralError::Loop(edge.id.clone()));
            }
            ends.push([tail, head]);
            incidence[tail].push(EdgeEnd {
                edge: e,
                at_head: false,
            });
            incidence[head].push(EdgeEnd {
                edge: e,
                at_head: true,
            });
        }

        let mut pairings = Vec::with_capacity(doc.pairings.len());
        for p in &doc.pairings {
            let ctx = format!("pairing {}->{}", p.minus, p.plus);
            if p.shift.len() != doc.dimension {
                return Err(StructuralError::ShiftDimension {
                    minus: p.minus.clone(),
                    plus: p.plus.clone(),
                    expected: doc.dimension,
                    got: p.shift.len(),
                });
            }
            if p.orientation_signs.iter().any(|s| s.abs() != 1) {
                return Err(StructuralError::OrientationValue {
                    minus: p.minus.clone(),
                    plus: p.plus.clone(),
                });
            }
            pairings.push(ResolvedPairing {
                minus: lookup(&ctx, &p.minus)?,
                plus: lookup(&ctx, &p.plus)?,
                shift: p.shift.clone(),
                signs: [
                    f64::from(p.orientation_signs[0]),
                    f64::from(p.orientation_signs[1]),
                ],
            });
        }

        let mut couplings = Vec::with_capacity(doc.couplings.len());
        let mut seen_parts = BTreeSet::new();
        for c in &doc.couplings {
            if c.part == 0 {
                return Err(StructuralError::CouplingPartZero);
            }
            if !seen_parts.insert(c.part) {
                return Err(StructuralError::DuplicateCoupling(c.part));
            }
            let ctx = format!("coupling set for part {}", c.part);
            let vertices = c
                .vertices
                .iter()
                .map(|id| lookup(&ctx, id))
                .collect::<Result<Vec<_>, _>>()?;
            couplings.push(ResolvedCoupling {
                part: c.part,
                vertices,
                q: c.q,
            });
        }
        couplings.sort_by_key(|c| c.part);

        let m = doc
            .edges
            .iter()
            .map(|e| e.part)
            .chain(doc.couplings.iter().map(|c| c.part))
            .max()
            .unwrap_or(0);

        Ok(Self {
            doc,
            m,
            vertex_index,
            ends,
            incidence,
            pairings,
            couplings,
        })
    }

    pub fn document(&self) -> &GraphDocument {
        &self.doc
    }

    pub fn dimension(&self) -> usize {
        self.doc.dimension
    }

    /// Number of attached parts.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.doc.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.doc.edges
    }

    pub fn vertex(&self, id: &str) -> Option<usize> {
        self.vertex_index.get(id).copied()
    }

    pub fn edge(&self, id: &str) -> Option<usize> {
        self.doc.edges.iter().position(|e| e.id == id)
    }

    /// `[tail, head]` vertex indices of edge `e`.
    pub fn endpoints(&self, e: usize) -> [usize; 2] {
        self.ends[e]
    }

    pub fn incident(&self, v: usize) -> &[EdgeEnd] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incidence[v].len()
    }

    pub fn total_length(&self) -> f64 {
        self.doc.edges.iter().map(|e| e.length).sum()
    }

    pub(crate) fn resolved_pairings(&self) -> &[ResolvedPairing] {
        &self.pairings
    }

    /// Coupling constants `q₁…q_m` in part order; `None` when a part has no
    /// coupling set.
    pub fn coupling_constants(&self) -> Option<Vec<f64>> {
        (1..=self.m)
            .map(|j| self.couplings.iter().find(|c| c.part == j).map(|c| c.q))
            .collect()
    }

    /// Parts `j ≥ 1` whose coupling set contains vertex `v`, in ascending order.
    pub fn coupled_parts(&self, v: usize) -> Vec<usize> {
        self.couplings
            .iter()
            .filter(|c| c.vertices.contains(&v))
            .map(|c| c.part)
            .collect()
    }

    pub fn coupling_q(&self, part: usize) -> Option<f64> {
        self.couplings.iter().find(|c| c.part == part).map(|c| c.q)
    }

    fn incident_parts(&self, v: usize) -> BTreeSet<usize> {
        self.incidence[v]
            .iter()
            .map(|end| self.doc.edges[end.edge].part)
            .collect()
    }

    /// Checks the standing geometric assumptions. Deterministic; an empty
    /// report means the cell is admissible.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let vid = |v: usize| self.doc.vertices[v].id.clone();
        let mut push = |condition, ids: Vec<String>, message: String| {
            out.push(Violation {
                condition,
                ids,
                message,
            })
        };

        // (i), (ii)
        for j in 0..=self.m {
            let part_edges: Vec<usize> = (0..self.doc.edges.len())
                .filter(|&e| self.doc.edges[e].part == j)
                .collect();
            if part_edges.is_empty() {
                push(
                    Condition::NonemptyPart,
                    vec![],
                    format!("part Y{j} has no edges"),
                );
                continue;
            }
            if !self.edges_connected(&part_edges) {
                push(
                    Condition::ConnectedPart,
                    part_edges
                        .iter()
                        .map(|&e| self.doc.edges[e].id.clone())
                        .collect(),
                    format!("part Y{j} is not connected"),
                );
            }
        }

        // degrees and roles
        for (v, vertex) in self.doc.vertices.iter().enumerate() {
            let deg = self.degree(v);
            if deg == 0 {
                push(
                    Condition::Degree,
                    vec![vid(v)],
                    "isolated vertex".to_string(),
                );
                continue;
            }
            match vertex.role {
                VertexRole::ExternalBoundary | VertexRole::InternalBoundary if deg != 1 => push(
                    Condition::Degree,
                    vec![vid(v)],
                    format!("boundary vertex has degree {deg}, expected 1"),
                ),
                _ => {}
            }
            if vertex.role == VertexRole::ExternalBoundary {
                let parts = self.incident_parts(v);
                if parts.iter().any(|&p| p != 0) {
                    push(
                        Condition::ExternalInPartZero,
                        vec![vid(v)],
                        "external boundary vertex touches an attached part".to_string(),
                    );
                }
            }
        }

        // (v)
        for j in 1..=self.m {
            match self.couplings.iter().find(|c| c.part == j) {
                None => push(
                    Condition::CouplingInterface,
                    vec![],
                    format!("no coupling set for part {j}"),
                ),
                Some(c) if c.vertices.is_empty() => push(
                    Condition::CouplingInterface,
                    vec![],
                    format!("coupling set for part {j} is empty"),
                ),
                Some(_) => {}
            }
        }
        for c in &self.couplings {
            if !(c.q.is_finite() && c.q > 0.0) {
                push(
                    Condition::PositiveCoupling,
                    vec![],
                    format!("q for part {} is {}, must be positive", c.part, c.q),
                );
            }
            let distinct: BTreeSet<usize> = c.vertices.iter().copied().collect();
            if distinct.len() != c.vertices.len() {
                push(
                    Condition::CouplingInterface,
                    vec![],
                    format!("coupling set for part {} lists a vertex twice", c.part),
                );
            }
            for &v in &c.vertices {
                let parts = self.incident_parts(v);
                if !(parts.contains(&0) && parts.contains(&c.part)) {
                    push(
                        Condition::CouplingInterface,
                        vec![vid(v)],
                        format!(
                            "coupling vertex is not on the boundary of both Y0 and Y{}",
                            c.part
                        ),
                    );
                }
            }
        }
        for v in 0..self.doc.vertices.len() {
            let parts = self.incident_parts(v);
            let coupled = self.coupled_parts(v);
            let attached: Vec<usize> = parts.iter().copied().filter(|&p| p != 0).collect();
            if parts.contains(&0) {
                for &j in &attached {
                    if !coupled.contains(&j) {
                        push(
                            Condition::CouplingInterface,
                            vec![vid(v)],
                            format!("vertex joins Y0 and Y{j} but is not in the coupling set of part {j}"),
                        );
                    }
                }
            } else if attached.len() > 1 {
                // (vi)
                push(
                    Condition::AttachedPartsDisjoint,
                    vec![vid(v)],
                    format!("attached parts {attached:?} meet outside the boundary of Y0"),
                );
            }
        }

        // pairings
        let mut pair_count: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, raw) in self.pairings.iter().zip(&self.doc.pairings) {
            *pair_count.entry(p.minus).or_default() += 1;
            *pair_count.entry(p.plus).or_default() += 1;
            let ids = vec![raw.minus.clone(), raw.plus.clone()];
            if p.minus == p.plus {
                push(
                    Condition::Pairing,
                    ids.clone(),
                    "pairing joins a vertex to itself".to_string(),
                );
            }
            if p.shift.iter().all(|&s| s == 0) {
                push(Condition::Pairing, ids.clone(), "zero shift".to_string());
            }
            if p.signs[0] == p.signs[1] {
                push(
                    Condition::Pairing,
                    ids.clone(),
                    "orientation signs must be opposite".to_string(),
                );
            }
            for &v in &[p.minus, p.plus] {
                if self.doc.vertices[v].role != VertexRole::ExternalBoundary {
                    push(
                        Condition::Pairing,
                        vec![vid(v)],
                        "paired vertex is not external-boundary".to_string(),
                    );
                }
            }
        }
        for (v, vertex) in self.doc.vertices.iter().enumerate() {
            if vertex.role == VertexRole::ExternalBoundary {
                let n = pair_count.get(&v).copied().unwrap_or(0);
                if n != 1 {
                    push(
                        Condition::Pairing,
                        vec![vid(v)],
                        format!("external boundary vertex appears in {n} pairings, expected 1"),
                    );
                }
            }
        }

        ValidationReport { violations: out }
    }

    fn edges_connected(&self, edges: &[usize]) -> bool {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        fn find(parent: &mut HashMap<usize, usize>, x: usize) -> usize {
            let p = *parent.entry(x).or_insert(x);
            if p == x {
                x
            } else {
                let r = find(parent, p);
                parent.insert(x, r);
                r
            }
        }
        for &e in edges {
            let [a, b] = self.ends[e];
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent.insert(ra, rb);
            }
        }
        let keys: Vec<usize> = parent.keys().copied().collect();
        let roots: BTreeSet<usize> = keys.into_iter().map(|k| find(&mut parent, k)).collect();
        roots.len() <= 1
    }

    /// Lengths `l₀…l_m` and counts `N₁…N_m`.
    pub fn part_totals(&self) -> PartTotals {
        let mut lengths = vec![0.0; self.m + 1];
        for e in &self.doc.edges {
            lengths[e.part] += e.length;
        }
        let counts = (1..=self.m)
            .map(|j| {
                self.couplings
                    .iter()
                    .find(|c| c.part == j)
                    .map_or(0, |c| c.vertices.len())
            })
            .collect();
        PartTotals { lengths, counts }
    }

    /// Splits `edge` at local coordinate `position`, inserting a degree-2
    /// interior vertex.
    pub fn subdivide_edge(&self, edge: &str, position: f64) -> Result<PeriodCell, GraphError> {
        let e = self
            .edge(edge)
            .ok_or_else(|| StructuralError::UnknownEdge(edge.to_string()))?;
        let original = &self.doc.edges[e];
        if !(position > 0.0 && position < original.length) {
            return Err(GraphError::Position {
                edge: edge.to_string(),
                position,
                length: original.length,
            });
        }
        let fresh = |stem: &str, taken: &dyn Fn(&str) -> bool| {
            let mut k = 0usize;
            loop {
                let id = format!("{stem}~{k}");
                if !taken(&id) {
                    return id;
                }
                k += 1;
            }
        };
        let mid = fresh(&format!("{}.mid", original.id), &|id| {
            self.vertex_index.contains_key(id)
        });
        let edge_taken = |id: &str| self.doc.edges.iter().any(|x| x.id == id);
        let first = fresh(&format!("{}.a", original.id), &edge_taken);
        let second = fresh(&format!("{}.b", original.id), &edge_taken);

        let mut doc = self.doc.clone();
        doc.vertices.push(Vertex {
            id: mid.clone(),
            role: VertexRole::Interior,
        });
        let head_piece = Edge {
            id: second,
            tail: mid.clone(),
            head: original.head.clone(),
            length: original.length - position,
            part: original.part,
        };
        doc.edges[e] = Edge {
            id: first,
            tail: original.tail.clone(),
            head: mid,
            length: position,
            part: original.part,
        };
        doc.edges.insert(e + 1, head_piece);
        Ok(PeriodCell::new(doc)?)
    }
}

/// Single edge of length `length` whose endpoints are paired by the shift
/// `(1)`: the ℤ-periodic line cut into unit cells.
pub fn build_line(length: f64) -> Result<PeriodCell, GraphError> {
    if !(length.is_finite() && length > 0.0) {
        return Err(GraphError::Input(format!(
            "length {length} must be positive"
        )));
    }
    let doc = GraphDocument {
        dimension: 1,
        vertices: vec![
            Vertex {
                id: "left".into(),
                role: VertexRole::ExternalBoundary,
            },
            Vertex {
                id: "right".into(),
                role: VertexRole::ExternalBoundary,
            },
        ],
        edges: vec![Edge {
            id: "e0".into(),
            tail: "left".into(),
            head: "right".into(),
            length,
            part: 0,
        }],
        pairings: vec![BoundaryPairing {
            minus: "left".into(),
            plus: "right".into(),
            shift: vec![1],
            orientation_signs: [-1, 1],
        }],
        couplings: vec![],
    };
    Ok(PeriodCell::new(doc)?)
}

/// ℤ-periodic comb: a backbone of length `l0` with one pendant edge per part.
pub fn build_comb(l0: f64, lengths: &[f64], q: &[f64]) -> Result<PeriodCell, GraphError> {
    build_comb_with_counts(l0, lengths, q, &vec![1; lengths.len()])
}

/// Comb whose part `j` touches the backbone at `counts[j]` points.
///
/// A part with one attachment is a single pendant edge. A part with `N > 1`
/// attachments is a spider: `N` legs of length `l_j / N` joined at a hub, each
/// leg ending on its own backbone point. Attachments are evenly spaced along
/// the backbone in part order.
pub fn build_comb_with_counts(
    l0: f64,
    lengths: &[f64],
    q: &[f64],
    counts: &[usize],
) -> Result<PeriodCell, GraphError> {
    let m = lengths.len();
    if m == 0 {
        return Err(GraphError::Input(
            "comb needs at least one attached part".into(),
        ));
    }
    if q.len() != m || counts.len() != m {
        return Err(GraphError::Input(format!(
            "got {m} lengths, {} couplings and {} counts",
            q.len(),
            counts.len()
        )));
    }
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(l0) {
        return Err(GraphError::Input(format!(
            "backbone length {l0} must be positive"
        )));
    }
    if let Some(bad) = lengths.iter().find(|&&x| !positive(x)) {
        return Err(GraphError::Input(format!(
            "part length {bad} must be positive"
        )));
    }
    if let Some(bad) = q.iter().find(|&&x| !positive(x)) {
        return Err(GraphError::Input(format!(
            "coupling constant {bad} must be positive"
        )));
    }
    if counts.contains(&0) {
        return Err(GraphError::Input(
            "attachment counts must be at least 1".into(),
        ));
    }
    let totals: Vec<(f64, usize)> = lengths
        .iter()
        .copied()
        .zip(counts.iter().copied())
        .collect();
    crate::limit::LimitModel::from_parts(l0, &totals, q)?;

    let attachments: usize = counts.iter().sum();
    let spacing = l0 / (attachments + 1) as f64;
    let mut vertices = vec![Vertex {
        id: "b0".into(),
        role: VertexRole::ExternalBoundary,
    }];
    let mut edges = Vec::new();
    for i in 1..=attachments {
        vertices.push(Vertex {
            id: format!("b{i}"),
            role: VertexRole::Interior,
        });
    }
    vertices.push(Vertex {
        id: format!("b{}", attachments + 1),
        role: VertexRole::ExternalBoundary,
    });
    for i in 0..=attachments {
        edges.push(Edge {
            id: format!("backbone{i}"),
            tail: format!("b{i}"),
            head: format!("b{}", i + 1),
            length: spacing,
            part: 0,
        });
    }
    // the last segment absorbs rounding so that l₀ is reproduced exactly
    let assigned: f64 = edges[..attachments].iter().map(|e| e.length).sum();
    edges[attachments].length = l0 - assigned;

    let mut couplings = Vec::with_capacity(m);
    let mut next = 1;
    for j in 0..m {
        let part = j + 1;
        let points: Vec<String> = (next..next + counts[j]).map(|i| format!("b{i}")).collect();
        next += counts[j];
        if counts[j] == 1 {
            vertices.push(Vertex {
                id: format!("tip{part}"),
                role: VertexRole::InternalBoundary,
            });
            edges.push(Edge {
                id: format!("pendant{part}"),
                tail: points[0].clone(),
                head: format!("tip{part}"),
                length: lengths[j],
                part,
            });
        } else {
            let hub = format!("hub{part}");
            vertices.push(Vertex {
                id: hub.clone(),
                role: VertexRole::Interior,
            });
            let leg = lengths[j] / counts[j] as f64;
            let mut used = 0.0;
            for (k, p) in points.iter().enumerate() {
                let length = if k + 1 == counts[j] {
                    lengths[j] - used
                } else {
                    leg
                };
                used += length;
                edges.push(Edge {
                    id: format!("leg{part}_{k}"),
                    tail: p.clone(),
                    head: hub.clone(),
                    length,
                    part,
                });
            }
        }
        couplings.push(CouplingSet {
            part,
            vertices: points,
            q: q[j],
        });
    }

    let doc = GraphDocument {
        dimension: 1,
        vertices,
        edges,
        pairings: vec![BoundaryPairing {
            minus: "b0".into(),
            plus: format!("b{}", attachments + 1),
            shift: vec![1],
            orientation_signs: [-1, 1],
        }],
        couplings,
    };
    Ok(PeriodCell::new(doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comb() -> PeriodCell {
        build_comb(1.0, &[1.0], &[2.0]).unwrap()
    }

    #[test]
    fn comb_is_valid() {
        let cell = comb();
        let report = cell.validate();
        assert!(report.is_valid(), "{report}");
        let totals = cell.part_totals();
        assert_eq!(totals.lengths, vec![1.0, 1.0]);
        assert_eq!(totals.counts, vec![1]);
    }

    #[test]
    fn two_part_comb_totals() {
        let cell = build_comb(1.0, &[1.5, 1.0 / 6.0], &[1.5, 0.5]).unwrap();
        assert!(cell.validate().is_valid());
        let t = cell.part_totals();
        assert_eq!(t.length(1), 1.5);
        assert_eq!(t.length(2), 1.0 / 6.0);
        assert!((t.length(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_coupling_set_violates_v() {
        let mut doc = comb().document().clone();
        doc.couplings[0].vertices.clear();
        let cell = PeriodCell::new(doc).unwrap();
        let report = cell.validate();
        assert!(report.has(Condition::CouplingInterface));
        assert!(report.to_string().contains("condition (v)"));
    }

    #[test]
    fn duplicate_edge_is_structural() {
        let mut doc = build_comb(1.0, &[1.0, 0.5], &[2.0, 3.0])
            .unwrap()
            .document()
            .clone();
        let mut dup = doc.edges.iter().find(|e| e.part == 1).unwrap().clone();
        dup.part = 2;
        doc.edges.push(dup);
        assert!(matches!(
            PeriodCell::new(doc),
            Err(StructuralError::DuplicateEdge(_))
        ));
    }

    #[test]
    fn unknown_vertex_is_structural() {
        let mut doc = comb().document().clone();
        doc.edges[0].head = "nowhere".into();
        assert!(matches!(
            PeriodCell::new(doc),
            Err(StructuralError::UnknownVertex { .. })
        ));
    }

    #[test]
    fn loops_are_rejected() {
        let mut doc = comb().document().clone();
        doc.edges[0].head = doc.edges[0].tail.clone();
        assert!(matches!(
            PeriodCell::new(doc),
            Err(StructuralError::Loop(_))
        ));
    }

    #[test]
    fn subdivide_splits_lengths() {
        let cell = build_line(2.0).unwrap();
        let split = cell.subdivide_edge("e0", 0.5).unwrap();
        let lengths: Vec<f64> = split.edges().iter().map(|e| e.length).collect();
        assert_eq!(lengths, vec![0.5, 1.5]);
        assert!(split.validate().is_valid());
        assert_eq!(split.part_totals(), cell.part_totals());
    }

    #[test]
    fn subdivide_rejects_endpoints() {
        let cell = build_line(2.0).unwrap();
        assert!(matches!(
            cell.subdivide_edge("e0", 0.0),
            Err(GraphError::Position { .. })
        ));
        assert!(cell.subdivide_edge("e0", 2.0).is_err());
        assert!(cell.subdivide_edge("missing", 1.0).is_err());
    }

    #[test]
    fn comb_rejects_bad_input() {
        assert!(matches!(
            build_comb(1.0, &[1.0], &[-1.0]),
            Err(GraphError::Input(_))
        ));
        assert!(build_comb(0.0, &[1.0], &[1.0]).is_err());
        // a_1 = a_2 = 2
        assert!(matches!(
            build_comb(1.0, &[1.0, 0.5], &[2.0, 1.0]),
            Err(GraphError::Limit(_))
        ));
    }

    #[test]
    fn spider_parts_have_requested_counts() {
        let cell = build_comb_with_counts(1.0, &[1.2, 0.4], &[1.0, 3.0], &[3, 1]).unwrap();
        assert!(cell.validate().is_valid(), "{}", cell.validate());
        let t = cell.part_totals();
        assert_eq!(t.counts, vec![3, 1]);
        assert!((t.length(1) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn external_vertex_in_attached_part_is_flagged() {
        let mut doc = comb().document().clone();
        doc.edges[0].part = 1;
        let report = PeriodCell::new(doc).unwrap().validate();
        assert!(report.has(Condition::ExternalInPartZero));
    }

    #[test]
    fn unpaired_external_vertex_is_flagged() {
        let mut doc = comb().document().clone();
        doc.pairings.clear();
        let report = PeriodCell::new(doc).unwrap().validate();
        assert!(report.has(Condition::Pairing));
    }

    #[test]
    fn zero_shift_is_flagged() {
        let mut doc = comb().document().clone();
        doc.pairings[0].shift = vec![0];
        let report = PeriodCell::new(doc).unwrap().validate();
        assert!(report.has(Condition::Pairing));
    }

    #[test]
    fn missing_part_is_flagged() {
        let mut doc = comb().document().clone();
        doc.couplings.push(CouplingSet {
            part: 2,
            vertices: vec!["b1".into()],
            q: 1.0,
        });
        let report = PeriodCell::new(doc).unwrap().validate();
        assert!(report.has(Condition::NonemptyPart));
    }
}
