//! Scale-adaptive time/relation masking projections and the projection
//! hypergraph (layer L1).
//!
//! For each source entity's top-k candidate targets, two projections of the
//! candidate's fact set are built: a time mask keeping facts with at least
//! one endpoint matching a source timestamp (compared at the coarser of the
//! two granularities) and a relation mask keeping facts whose relation maps
//! into the source's relation set. Empty projections are kept as hypernodes
//! so the `|E^s| * k * 2` size formula holds exactly, but flagged so
//! retrieval can skip them.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::csls::{rank_row, SimilarityMatrix};
use crate::error::{Result, TkgaError};
use crate::kg::{EntityId, TemporalKG};

/// Cross-graph relation-label equivalence.
#[derive(Debug, Clone, Default)]
pub enum RelMap {
    /// Target relation matches a source relation iff labels are equal.
    #[default]
    ExactLabel,
    /// Explicit `(source label, target label)` pairs.
    Explicit(HashSet<(String, String)>),
}

impl RelMap {
    pub fn from_file(path: impl AsRef<Path>) -> Result<RelMap> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<RelMap> {
        let mut pairs = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (s, t) = line.split_once('\t').ok_or_else(|| {
                TkgaError::parse(origin, lineno + 1, "expected 'src_rel\\ttgt_rel'")
            })?;
            pairs.insert((s.to_string(), t.to_string()));
        }
        Ok(RelMap::Explicit(pairs))
    }

    pub fn matches(&self, src_label: &str, tgt_label: &str) -> bool {
        match self {
            RelMap::ExactLabel => src_label == tgt_label,
            RelMap::Explicit(pairs) => pairs.contains(&(src_label.to_string(), tgt_label.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectionKind {
    Time,
    Rel,
}

/// Stable identifier of one projection hypernode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProvenanceId(pub u32);

#[derive(Debug, Clone)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub source: EntityId,
    pub target: EntityId,
    /// indices into the target graph's quadruple list
    pub retained: Vec<usize>,
    pub id: ProvenanceId,
}

impl Projection {
    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }
}

/// One hyperedge per source entity: the source, its top-k targets, and their
/// 2k projections.
#[derive(Debug, Clone)]
pub struct Hyperedge {
    pub source: EntityId,
    pub targets: Vec<EntityId>,
    pub projections: Vec<ProvenanceId>,
}

impl Hyperedge {
    pub fn len(&self) -> usize {
        1 + self.targets.len() + self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionHypergraph {
    pub num_targets: usize,
    pub projections: Vec<Projection>,
    pub hyperedges: Vec<Hyperedge>,
}

impl ProjectionHypergraph {
    pub fn projection(&self, id: ProvenanceId) -> &Projection {
        &self.projections[id.0 as usize]
    }

    /// `|V_p| = |E^t| + |E^s| * k * 2`
    pub fn num_hypernodes(&self) -> usize {
        self.num_targets + self.projections.len()
    }
}

/// Top-k targets of one similarity row; ties by lowest handle, k clamped.
pub fn topk_targets(source: EntityId, matrix: &SimilarityMatrix, k: usize) -> Vec<EntityId> {
    let row = matrix.scores.row(source.index());
    let ranked = rank_row(row.as_slice().unwrap());
    ranked
        .into_iter()
        .take(k.min(matrix.num_targets()))
        .map(|j| EntityId(j as u32))
        .collect()
}

/// Timestamp-mask projection: retains the target's valid facts with at least
/// one endpoint matching some timestamp of the source entity.
pub fn project_time(
    source: EntityId,
    target: EntityId,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
) -> Vec<usize> {
    let src_times = src_kg.entity_timestamps(source);
    if src_times.is_empty() {
        return Vec::new();
    }
    tgt_kg
        .incident(target)
        .iter()
        .copied()
        .filter(|&qi| {
            let q = tgt_kg.quadruple(qi);
            q.is_valid()
                && q.interval
                    .endpoints()
                    .any(|p| src_times.iter().any(|s| s.matches_at_coarsest(p)))
        })
        .collect()
}

/// Relation-mask projection: retains target facts whose relation maps into
/// the source entity's relation set under `rel_map`.
pub fn project_rel(
    source: EntityId,
    target: EntityId,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    rel_map: &RelMap,
) -> Vec<usize> {
    let src_rels: BTreeSet<&str> = src_kg
        .entity_relations(source)
        .into_iter()
        .map(|r| src_kg.relation_label(r))
        .collect();
    if src_rels.is_empty() {
        return Vec::new();
    }
    tgt_kg
        .incident(target)
        .iter()
        .copied()
        .filter(|&qi| {
            let label = tgt_kg.relation_label(tgt_kg.quadruple(qi).rel);
            src_rels.iter().any(|s| rel_map.matches(s, label))
        })
        .collect()
}

/// Builds the projection hypergraph from the similarity matrix.
pub fn build_projection_hypergraph(
    matrix: &SimilarityMatrix,
    k: usize,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    rel_map: &RelMap,
) -> ProjectionHypergraph {
    let mut projections = Vec::new();
    let mut hyperedges = Vec::with_capacity(matrix.num_sources());
    for s in 0..matrix.num_sources() {
        let source = EntityId(s as u32);
        let targets = topk_targets(source, matrix, k);
        let mut edge_projs = Vec::with_capacity(targets.len() * 2);
        for &t in &targets {
            for kind in [ProjectionKind::Time, ProjectionKind::Rel] {
                let retained = match kind {
                    ProjectionKind::Time => project_time(source, t, src_kg, tgt_kg),
                    ProjectionKind::Rel => project_rel(source, t, src_kg, tgt_kg, rel_map),
                };
                let id = ProvenanceId(projections.len() as u32);
                projections.push(Projection {
                    kind,
                    source,
                    target: t,
                    retained,
                    id,
                });
                edge_projs.push(id);
            }
        }
        hyperedges.push(Hyperedge {
            source,
            targets,
            projections: edge_projs,
        });
    }
    ProjectionHypergraph {
        num_targets: tgt_kg.num_entities(),
        projections,
        hyperedges,
    }
}
