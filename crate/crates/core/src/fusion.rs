//! Scale interaction, per-scale selection, cross-scale conflict handling,
//! and the final fusion of aligned pairs.
//!
//! Each scale of the multi-scale hypergraph is first materialized as working
//! fact copies per (source, candidate) pair. The reasoner's augment edits
//! apply to those copies only; the underlying graphs stay immutable. A
//! per-scale selection pass yields at most one target per source, conflicts
//! across scales are grouped and re-resolved, and the final pair set is the
//! scale intersection united with the conflict resolutions.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::kg::{EntityId, TemporalKG};
use crate::csls::SimilarityMatrix;
use crate::reasoner::{
    apply_edits, AugmentRequest, CandidateContext, FactLine, Reasoner, SelectRequest,
};
use crate::retrieval::MultiScaleHypergraph;

/// Facts shown to the reasoner per entity context.
pub const MAX_CONTEXT_FACTS: usize = 64;

pub type Pair = (EntityId, EntityId);

/// At most one target per source within one scale.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScaleAlignment {
    pub scale: u8,
    pub pairs: BTreeMap<EntityId, EntityId>,
}

impl ScaleAlignment {
    pub fn pair_set(&self) -> BTreeSet<Pair> {
        self.pairs.iter().map(|(&s, &t)| (s, t)).collect()
    }
}

/// Conflicting pairs plus their per-source grouping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictSet {
    pub pairs: BTreeSet<Pair>,
    pub groups: BTreeMap<EntityId, BTreeSet<EntityId>>,
}

#[derive(Debug, Clone)]
pub struct EditedCandidate {
    pub target: EntityId,
    pub facts: Vec<FactLine>,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct EditedEdge {
    pub source: EntityId,
    pub source_facts: Vec<FactLine>,
    pub candidates: Vec<EditedCandidate>,
}

/// One scale's working copies, before or after reasoner edits.
#[derive(Debug, Clone)]
pub struct EditedScale {
    pub scale: u8,
    pub edges: Vec<EditedEdge>,
}

fn entity_facts(kg: &TemporalKG, e: EntityId) -> Vec<FactLine> {
    kg.entity_context(e, MAX_CONTEXT_FACTS)
        .iter()
        .map(|q| FactLine::from_quadruple(kg, q))
        .collect()
}

fn retained_facts(kg: &TemporalKG, retained: &[usize]) -> Vec<FactLine> {
    retained
        .iter()
        .take(MAX_CONTEXT_FACTS)
        .map(|&qi| FactLine::from_quadruple(kg, kg.quadruple(qi)))
        .collect()
}

/// Materializes one scale of the hypergraph as working fact copies.
/// Scale 1 candidates are the top-k targets, scale 2 the retrieved
/// projections (facts = retained subset), scale 3 the collapsed targets.
pub fn extract_scale(
    ms: &MultiScaleHypergraph,
    scale: u8,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    matrix: &SimilarityMatrix,
) -> EditedScale {
    let sim = |s: EntityId, t: EntityId| matrix.scores[(s.index(), t.index())];
    let mut edges = Vec::new();
    match scale {
        1 => {
            for he in &ms.l1.hyperedges {
                edges.push(EditedEdge {
                    source: he.source,
                    source_facts: entity_facts(src_kg, he.source),
                    candidates: he
                        .targets
                        .iter()
                        .map(|&t| EditedCandidate {
                            target: t,
                            facts: entity_facts(tgt_kg, t),
                            similarity: sim(he.source, t),
                        })
                        .collect(),
                });
            }
        }
        2 => {
            for edge in &ms.l2 {
                edges.push(EditedEdge {
                    source: edge.source,
                    source_facts: entity_facts(src_kg, edge.source),
                    candidates: edge
                        .members
                        .iter()
                        .map(|&id| {
                            let p = ms.l1.projection(id);
                            EditedCandidate {
                                target: p.target,
                                facts: retained_facts(tgt_kg, &p.retained),
                                similarity: sim(edge.source, p.target),
                            }
                        })
                        .collect(),
                });
            }
        }
        3 => {
            for edge in &ms.l3 {
                edges.push(EditedEdge {
                    source: edge.source,
                    source_facts: entity_facts(src_kg, edge.source),
                    candidates: edge
                        .members
                        .iter()
                        .map(|&t| EditedCandidate {
                            target: t,
                            facts: entity_facts(tgt_kg, t),
                            similarity: sim(edge.source, t),
                        })
                        .collect(),
                });
            }
        }
        _ => panic!("scale must be 1, 2, or 3"),
    }
    EditedScale { scale, edges }
}

/// Applies reasoner augment edits to each (source, candidate) working copy,
/// spending at most `budget` calls. Transport failures skip the pair with a
/// warning; remaining pairs pass through unchanged.
pub fn intra_scale_interaction(
    mut scale: EditedScale,
    reasoner: &mut dyn Reasoner,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    budget: usize,
) -> EditedScale {
    let mut calls = 0usize;
    for edge in &mut scale.edges {
        for cand in &mut edge.candidates {
            if calls >= budget {
                return scale;
            }
            calls += 1;
            let req = AugmentRequest {
                source_label: src_kg.entity_label(edge.source).to_string(),
                source_facts: edge.source_facts.clone(),
                candidate_label: tgt_kg.entity_label(cand.target).to_string(),
                candidate_facts: cand.facts.clone(),
            };
            match reasoner.augment(&req) {
                Ok(edits) => {
                    let mut src = edge.source_facts.clone();
                    apply_edits(&mut src, &mut cand.facts, &edits);
                    // source-side edits stay local to this pair's request
                    // context; the shared edge copy is left as parsed
                }
                Err(e) => {
                    eprintln!(
                        "warning: augment failed for pair ({}, {}): {e}; pair left unedited",
                        src_kg.entity_label(edge.source),
                        tgt_kg.entity_label(cand.target)
                    );
                }
            }
        }
    }
    scale
}

/// One select call per source hyperedge; at most one chosen target each.
/// Transport failures and malformed replies both degrade to "none".
pub fn fusion_select_scale(
    scale: &EditedScale,
    reasoner: &mut dyn Reasoner,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
) -> ScaleAlignment {
    let mut pairs = BTreeMap::new();
    for edge in &scale.edges {
        if edge.candidates.is_empty() {
            continue;
        }
        let req = SelectRequest {
            source_label: src_kg.entity_label(edge.source).to_string(),
            source_facts: edge.source_facts.clone(),
            candidates: edge
                .candidates
                .iter()
                .map(|c| CandidateContext {
                    label: tgt_kg.entity_label(c.target).to_string(),
                    facts: c.facts.clone(),
                    similarity: c.similarity,
                })
                .collect(),
        };
        match reasoner.select(&req) {
            Ok(Some(i)) if i < edge.candidates.len() => {
                pairs.insert(edge.source, edge.candidates[i].target);
            }
            Ok(_) => {}
            Err(e) => {
                eprintln!(
                    "warning: select failed for source {}: {e}; treated as none",
                    src_kg.entity_label(edge.source)
                );
            }
        }
    }
    ScaleAlignment {
        scale: scale.scale,
        pairs,
    }
}

/// Pairs whose source is aligned to differing targets across scales,
/// grouped per source.
pub fn detect_conflicts(
    phi1: &ScaleAlignment,
    phi2: &ScaleAlignment,
    phi3: &ScaleAlignment,
) -> ConflictSet {
    let scales = [phi1, phi2, phi3];
    let mut per_source: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
    for phi in scales {
        for (&s, &t) in &phi.pairs {
            per_source.entry(s).or_default().insert(t);
        }
    }
    let mut set = ConflictSet::default();
    for (s, targets) in per_source {
        if targets.len() >= 2 {
            for &t in &targets {
                set.pairs.insert((s, t));
            }
            set.groups.insert(s, targets);
        }
    }
    set
}

/// One reasoner selection per conflicted source over its conflicting
/// targets, in target-handle order.
pub fn resolve_conflicts(
    conflicts: &ConflictSet,
    reasoner: &mut dyn Reasoner,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    matrix: &SimilarityMatrix,
) -> BTreeSet<Pair> {
    let mut resolved = BTreeSet::new();
    for (&s, targets) in &conflicts.groups {
        let cands: Vec<EntityId> = targets.iter().copied().collect();
        let req = SelectRequest {
            source_label: src_kg.entity_label(s).to_string(),
            source_facts: entity_facts(src_kg, s),
            candidates: cands
                .iter()
                .map(|&t| CandidateContext {
                    label: tgt_kg.entity_label(t).to_string(),
                    facts: entity_facts(tgt_kg, t),
                    similarity: matrix.scores[(s.index(), t.index())],
                })
                .collect(),
        };
        match reasoner.select(&req) {
            Ok(Some(i)) if i < cands.len() => {
                resolved.insert((s, cands[i]));
            }
            Ok(_) => {}
            Err(e) => {
                eprintln!(
                    "warning: conflict resolution failed for source {}: {e}; dropped",
                    src_kg.entity_label(s)
                );
            }
        }
    }
    resolved
}

/// `phi_f = (phi_1 ∩ phi_2 ∩ phi_3) ∪ phi_C`, as literal pair sets.
pub fn fuse_final(
    phi1: &ScaleAlignment,
    phi2: &ScaleAlignment,
    phi3: &ScaleAlignment,
    phi_c: &BTreeSet<Pair>,
) -> BTreeSet<Pair> {
    let (a, b, c) = (phi1.pair_set(), phi2.pair_set(), phi3.pair_set());
    let mut out: BTreeSet<Pair> = a
        .intersection(&b)
        .copied()
        .collect::<BTreeSet<Pair>>()
        .intersection(&c)
        .copied()
        .collect();
    out.extend(phi_c.iter().copied());
    out
}

/// Runs interaction, selection, conflict handling, and final fusion over all
/// three scales. `budget` caps augment calls per scale.
pub fn fuse_scales(
    ms: &MultiScaleHypergraph,
    reasoner: &mut dyn Reasoner,
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    matrix: &SimilarityMatrix,
    budget: usize,
) -> Result<BTreeSet<Pair>> {
    let mut alignments = Vec::with_capacity(3);
    for scale in 1..=3u8 {
        let extracted = extract_scale(ms, scale, src_kg, tgt_kg, matrix);
        let edited = intra_scale_interaction(extracted, reasoner, src_kg, tgt_kg, budget);
        alignments.push(fusion_select_scale(&edited, reasoner, src_kg, tgt_kg));
    }
    let conflicts = detect_conflicts(&alignments[0], &alignments[1], &alignments[2]);
    let phi_c = resolve_conflicts(&conflicts, reasoner, src_kg, tgt_kg, matrix);
    Ok(fuse_final(
        &alignments[0],
        &alignments[1],
        &alignments[2],
        &phi_c,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sa(scale: u8, pairs: &[(u32, u32)]) -> ScaleAlignment {
        ScaleAlignment {
            scale,
            pairs: pairs
                .iter()
                .map(|&(s, t)| (EntityId(s), EntityId(t)))
                .collect(),
        }
    }

    #[test]
    fn conflicts_basic_cases() {
        let d = detect_conflicts(&sa(1, &[(1, 1)]), &sa(2, &[(1, 2)]), &sa(3, &[]));
        assert_eq!(d.pairs.len(), 2);
        assert_eq!(
            d.groups[&EntityId(1)],
            [EntityId(1), EntityId(2)].into_iter().collect()
        );

        let agree = detect_conflicts(&sa(1, &[(1, 1)]), &sa(2, &[(1, 1)]), &sa(3, &[(1, 1)]));
        assert!(agree.pairs.is_empty());

        // a source present in only one scale cannot conflict
        let single = detect_conflicts(&sa(1, &[]), &sa(2, &[]), &sa(3, &[(2, 5)]));
        assert!(single.pairs.is_empty());
    }

    /// Independent enumeration: a pair conflicts iff some scale aligns its
    /// source to a different target.
    fn brute_force_conflicts(scales: [&ScaleAlignment; 3]) -> BTreeSet<Pair> {
        let mut out = BTreeSet::new();
        for phi in scales {
            for (&s, &t) in &phi.pairs {
                let clash = scales
                    .iter()
                    .any(|o| o.pairs.get(&s).map(|&u| u != t).unwrap_or(false));
                if clash {
                    out.insert((s, t));
                }
            }
        }
        out
    }

    #[test]
    fn conflicts_match_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let mk = |rng: &mut ChaCha8Rng, scale: u8| {
                let n = rng.gen_range(0..40);
                let pairs: Vec<(u32, u32)> = (0..n)
                    .map(|_| (rng.gen_range(0..15), rng.gen_range(0..15)))
                    .collect();
                sa(scale, &pairs)
            };
            let (a, b, c) = (mk(&mut rng, 1), mk(&mut rng, 2), mk(&mut rng, 3));
            let got = detect_conflicts(&a, &b, &c);
            assert_eq!(got.pairs, brute_force_conflicts([&a, &b, &c]));
            // groups partition the pair set by source
            let regrouped: BTreeSet<Pair> = got
                .groups
                .iter()
                .flat_map(|(&s, ts)| ts.iter().map(move |&t| (s, t)))
                .collect();
            assert_eq!(regrouped, got.pairs);
        }
    }

    #[test]
    fn fuse_final_set_algebra() {
        let one = sa(1, &[(1, 1)]);
        let all = fuse_final(&one, &sa(2, &[(1, 1)]), &sa(3, &[(1, 1)]), &BTreeSet::new());
        assert_eq!(all, [(EntityId(1), EntityId(1))].into_iter().collect());

        let empty = fuse_final(&one, &sa(2, &[]), &sa(3, &[]), &BTreeSet::new());
        assert!(empty.is_empty());

        let phi_c: BTreeSet<Pair> = [(EntityId(1), EntityId(2))].into_iter().collect();
        let union = fuse_final(&one, &sa(2, &[(2, 2)]), &sa(3, &[(3, 3)]), &phi_c);
        assert_eq!(union, phi_c);
    }
}
