//! Projection memory bank, top-k vector retrieval, and the three-layer
//! multi-scale hypergraph.
//!
//! Every non-empty projection of the L1 hypergraph is embedded by recomputing
//! the temporal views over its retained facts only, inheriting the name and
//! structural blocks from its target entity. The bank supports an exact
//! brute-force cosine index and an approximate coarse-quantizer index with a
//! single probe-count recall knob.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use crate::error::{Result, TkgaError};
use crate::fuse::{AlignmentModel, SideViews};
use crate::kg::{EntityId, Granularity, TemporalKG, TemporalSignature};
use crate::projection::{Projection, ProjectionHypergraph, ProvenanceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Exact,
    /// Coarse k-means quantizer probing `nprobe` centroids per query.
    Approx { nprobe: usize },
}

#[derive(Debug, Clone)]
pub struct BankEntry {
    pub id: ProvenanceId,
    pub vector: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    entries: Vec<BankEntry>,
    mode: IndexMode,
    /// approx mode only: centroid matrix and per-entry assignment
    centroids: Option<Array2<f64>>,
    assignments: Vec<usize>,
}

/// Temporal signatures derived from a projection's retained facts only.
pub fn projection_signatures(p: &Projection, tgt_kg: &TemporalKG) -> [TemporalSignature; 3] {
    let build = |g: Granularity| {
        let len = tgt_kg.span().map(|s| s.len(g)).unwrap_or(0);
        let mut active = Vec::new();
        for &qi in &p.retained {
            for point in tgt_kg.quadruple(qi).interval.endpoints() {
                if let Some(i) = tgt_kg.decompose_timepoint(point, g) {
                    active.push(i as u32);
                }
            }
        }
        TemporalSignature::from_indices(len, active)
    };
    [
        build(Granularity::Year),
        build(Granularity::Month),
        build(Granularity::Date),
    ]
}

/// Fused embedding of a projection: temporal blocks from the retained facts,
/// name and structural blocks inherited from the target entity.
pub fn embed_projection(
    p: &Projection,
    model: &AlignmentModel,
    tgt_views: &SideViews,
    tgt_kg: &TemporalKG,
) -> Result<Array1<f64>> {
    if tgt_views.num_entities() != tgt_kg.num_entities() {
        return Err(TkgaError::State(
            "target views do not cover the target graph".into(),
        ));
    }
    let sigs = projection_signatures(p, tgt_kg);
    let idx = p.target.index();
    let temporal = |g: Granularity, sig: &TemporalSignature| {
        crate::temporal::encode_entity_time(sig, model.t2v.for_granularity(g), model.layout.d_t)
    };
    let blocks = [
        tgt_views.name.row(idx).to_owned(),
        temporal(Granularity::Year, &sigs[0]),
        temporal(Granularity::Month, &sigs[1]),
        temporal(Granularity::Date, &sigs[2]),
        tgt_views.structural.row(idx).to_owned(),
    ];
    Ok(model.fuse_blocks(&blocks))
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

impl MemoryBank {
    /// Indexes every non-empty projection of the hypergraph.
    pub fn build(
        hypergraph: &ProjectionHypergraph,
        model: &AlignmentModel,
        tgt_views: &SideViews,
        tgt_kg: &TemporalKG,
        mode: IndexMode,
    ) -> Result<MemoryBank> {
        let mut entries = Vec::new();
        for p in &hypergraph.projections {
            if p.is_empty() {
                continue;
            }
            entries.push(BankEntry {
                id: p.id,
                vector: embed_projection(p, model, tgt_views, tgt_kg)?,
            });
        }
        let mut bank = MemoryBank {
            entries,
            mode,
            centroids: None,
            assignments: Vec::new(),
        };
        if let IndexMode::Approx { .. } = mode {
            bank.build_coarse_index();
        }
        Ok(bank)
    }

    /// Index over preassembled entries; useful for synthetic banks.
    pub fn from_entries(entries: Vec<BankEntry>, mode: IndexMode) -> MemoryBank {
        let mut bank = MemoryBank {
            entries,
            mode,
            centroids: None,
            assignments: Vec::new(),
        };
        if let IndexMode::Approx { .. } = mode {
            bank.build_coarse_index();
        }
        bank
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    /// Order-independent content checksum, for immutability checks.
    pub fn checksum(&self) -> u64 {
        let mut acc = 0u64;
        for e in &self.entries {
            let mut h = e.id.0 as u64;
            for &v in e.vector.iter() {
                h = h
                    .rotate_left(7)
                    .wrapping_add(v.to_bits().wrapping_mul(0x9E3779B97F4A7C15));
            }
            acc ^= h;
        }
        acc
    }

    fn build_coarse_index(&mut self) {
        let n = self.entries.len();
        if n == 0 {
            return;
        }
        let d = self.entries[0].vector.len();
        let ncent = (n as f64).sqrt().ceil() as usize;
        // deterministic init: evenly spaced entries
        let mut centroids = Array2::<f64>::zeros((ncent, d));
        for c in 0..ncent {
            let pick = c * n / ncent;
            centroids.row_mut(c).assign(&self.entries[pick].vector);
        }
        let mut assignments = vec![0usize; n];
        for _ in 0..5 {
            for (i, e) in self.entries.iter().enumerate() {
                let mut best = (0usize, f64::NEG_INFINITY);
                for c in 0..ncent {
                    let sim = cosine(&e.vector, &centroids.row(c).to_owned());
                    if sim > best.1 {
                        best = (c, sim);
                    }
                }
                assignments[i] = best.0;
            }
            let mut sums = Array2::<f64>::zeros((ncent, d));
            let mut counts = vec![0usize; ncent];
            for (i, e) in self.entries.iter().enumerate() {
                let mut row = sums.row_mut(assignments[i]);
                row += &e.vector;
                counts[assignments[i]] += 1;
            }
            for c in 0..ncent {
                if counts[c] > 0 {
                    let mut row = sums.row_mut(c);
                    row /= counts[c] as f64;
                    centroids.row_mut(c).assign(&row);
                }
            }
        }
        self.centroids = Some(centroids);
        self.assignments = assignments;
    }

    /// Top-`k_r` entries by descending cosine to the query; ties by
    /// provenance id. `k_r` is clamped to the bank size.
    pub fn retrieve(&self, query: &Array1<f64>, k_r: usize) -> Vec<ProvenanceId> {
        let candidate_idx: Vec<usize> = match (self.mode, &self.centroids) {
            (IndexMode::Approx { nprobe }, Some(centroids)) => {
                let mut by_sim: Vec<(usize, f64)> = (0..centroids.nrows())
                    .map(|c| (c, cosine(query, &centroids.row(c).to_owned())))
                    .collect();
                by_sim.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let probed: BTreeSet<usize> = by_sim
                    .into_iter()
                    .take(nprobe.max(1))
                    .map(|(c, _)| c)
                    .collect();
                (0..self.entries.len())
                    .filter(|&i| probed.contains(&self.assignments[i]))
                    .collect()
            }
            _ => (0..self.entries.len()).collect(),
        };
        let mut scored: Vec<(ProvenanceId, f64)> = candidate_idx
            .into_iter()
            .map(|i| (self.entries[i].id, cosine(query, &self.entries[i].vector)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k_r.min(self.entries.len()))
            .map(|(id, _)| id)
            .collect()
    }

    /// Length-prefixed binary dump of the bank entries.
    pub fn dump(&self, hypergraph: &ProjectionHypergraph, tgt_kg: &TemporalKG) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let p = hypergraph.projection(e.id);
            let label = tgt_kg.entity_label(p.target).as_bytes();
            out.extend(e.id.0.to_le_bytes());
            out.push(match p.kind {
                crate::projection::ProjectionKind::Time => 0,
                crate::projection::ProjectionKind::Rel => 1,
            });
            out.extend((label.len() as u32).to_le_bytes());
            out.extend(label);
            out.extend((e.vector.len() as u32).to_le_bytes());
            for &v in e.vector.iter() {
                out.extend((v as f32).to_le_bytes());
            }
        }
        out
    }
}

/// One hyperedge of layer 2 or 3.
#[derive(Debug, Clone)]
pub struct ScaleEdge<T> {
    pub source: EntityId,
    pub members: Vec<T>,
}

/// Layers: L1 = projection hypergraph, L2 = retrieved projections per
/// source, L3 = their targets collapsed per source.
#[derive(Debug, Clone)]
pub struct MultiScaleHypergraph {
    pub l1: ProjectionHypergraph,
    pub l2: Vec<ScaleEdge<ProvenanceId>>,
    pub l3: Vec<ScaleEdge<EntityId>>,
}

impl MultiScaleHypergraph {
    pub fn l2_hypernodes(&self) -> BTreeSet<ProvenanceId> {
        self.l2.iter().flat_map(|e| e.members.iter().copied()).collect()
    }

    pub fn l3_hypernodes(&self) -> BTreeSet<EntityId> {
        self.l3.iter().flat_map(|e| e.members.iter().copied()).collect()
    }
}

/// Assembles L2/L3 from per-source retrievals; `queries` holds the fused
/// source embeddings, one row per source entity.
pub fn build_multiscale(
    l1: ProjectionHypergraph,
    bank: &MemoryBank,
    queries: &Array2<f64>,
    k_r: usize,
) -> MultiScaleHypergraph {
    let mut l2 = Vec::with_capacity(queries.nrows());
    let mut l3 = Vec::with_capacity(queries.nrows());
    for s in 0..queries.nrows() {
        let source = EntityId(s as u32);
        let retrieved = bank.retrieve(&queries.row(s).to_owned(), k_r);
        // phi collapse: duplicates within a hyperedge merge
        let mut targets = BTreeSet::new();
        for &id in &retrieved {
            targets.insert(l1.projection(id).target);
        }
        l2.push(ScaleEdge {
            source,
            members: retrieved,
        });
        l3.push(ScaleEdge {
            source,
            members: targets.into_iter().collect(),
        });
    }
    MultiScaleHypergraph { l1, l2, l3 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csls::SimilarityMatrix;
    use crate::fuse::FusionLayout;
    use crate::kg::parse_tkg_str;
    use crate::projection::{build_projection_hypergraph, RelMap};
    use crate::temporal::SignatureTable;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (
        AlignmentModel,
        crate::kg::TemporalKG,
        crate::kg::TemporalKG,
        SideViews,
        ProjectionHypergraph,
    ) {
        let model = AlignmentModel::new(
            FusionLayout {
                d_n: 3,
                d_t: 2,
                d_struct: 3,
            },
            2,
            17,
        )
        .unwrap();
        let src = parse_tkg_str(
            "s1\tr\ts2\t2019\t2019\ns2\tr\ts3\t2020\t2020\ns3\tr\ts1\t2021\t2021\n",
            "s",
        )
        .unwrap();
        let tgt = parse_tkg_str(
            "t1\tr\tt2\t2019\t2019\nt2\tr\tt3\t2020\t2020\nt3\tr\tt1\t####\t####\n",
            "t",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let tgt_views = SideViews {
            name: Array2::from_shape_fn((3, 3), |_| rng.gen::<f64>() - 0.5),
            structural: Array2::from_shape_fn((3, 3), |_| rng.gen::<f64>() - 0.5),
            signatures: SignatureTable::build(&tgt),
        };
        let m = SimilarityMatrix {
            scores: Array2::from_shape_fn((3, 3), |(i, j)| ((i * 3 + j) % 5) as f64 * 0.1),
            topk: vec![],
            k_topk: 0,
            k_csls: 1,
        };
        let hg = build_projection_hypergraph(&m, 2, &src, &tgt, &RelMap::ExactLabel);
        (model, src, tgt, tgt_views, hg)
    }

    #[test]
    fn identity_mask_embedding_equals_target_embedding() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        // find a projection retaining all of its target's valid facts
        let full = hg
            .projections
            .iter()
            .find(|p| {
                !p.is_empty()
                    && p.retained.len()
                        == tgt
                            .incident(p.target)
                            .iter()
                            .filter(|&&qi| tgt.quadruple(qi).is_valid())
                            .count()
            })
            .expect("some full projection");
        let emb = embed_projection(full, &model, &tgt_views, &tgt).unwrap();
        // compare against fusing the target with valid-facts-only signatures:
        // entity signatures only count valid endpoints anyway
        let direct = model.fuse_entity(&tgt_views, full.target.index());
        for (a, b) in emb.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_projection_inherits_name_structural_zero_temporal() {
        let (model, src, tgt, tgt_views, hg) = setup();
        let _ = src;
        let empty = hg.projections.iter().find(|p| p.is_empty()).unwrap();
        let emb = embed_projection(empty, &model, &tgt_views, &tgt).unwrap();
        let (lo, hi) = (model.layout.block(1).0, model.layout.block(3).1);
        assert!(emb.slice(ndarray::s![lo..hi]).iter().all(|&x| x == 0.0));
        let (nlo, nhi) = model.layout.block(0);
        let name = tgt_views.name.row(empty.target.index());
        for (i, &v) in name.iter().enumerate() {
            assert!((emb[nlo + i] - v * model.gates[0]).abs() < 1e-12);
        }
        assert!(nhi - nlo == name.len());
    }

    #[test]
    fn bank_counts_skip_empty_projections() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        let n_nonempty = hg.projections.iter().filter(|p| !p.is_empty()).count();
        let bank = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        assert_eq!(bank.len(), n_nonempty);
        let bank2 = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        assert_eq!(bank.checksum(), bank2.checksum());
    }

    #[test]
    fn retrieve_exact_matches_brute_force() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        let bank = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = model.layout.total();
        for _ in 0..10 {
            let q = Array1::from_shape_fn(d, |_| rng.gen::<f64>() - 0.5);
            let got = bank.retrieve(&q, bank.len());
            // brute force
            let mut oracle: Vec<(ProvenanceId, f64)> = bank
                .entries()
                .iter()
                .map(|e| (e.id, cosine(&q, &e.vector)))
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let oracle_ids: Vec<ProvenanceId> = oracle.into_iter().map(|(i, _)| i).collect();
            assert_eq!(got, oracle_ids);
        }
    }

    #[test]
    fn stored_vector_query_returns_itself_first() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        let bank = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        let e = &bank.entries()[1];
        let got = bank.retrieve(&e.vector.clone(), 1);
        assert_eq!(got[0], e.id);
    }

    #[test]
    fn approx_top1_matches_exact_on_separable_data() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        let exact = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        let approx = MemoryBank::build(
            &hg,
            &model,
            &tgt_views,
            &tgt,
            IndexMode::Approx { nprobe: 2 },
        )
        .unwrap();
        for e in exact.entries() {
            let q = e.vector.clone();
            assert_eq!(exact.retrieve(&q, 1), approx.retrieve(&q, 1));
        }
    }

    #[test]
    fn multiscale_structure() {
        let (model, _src, tgt, tgt_views, hg) = setup();
        let bank = MemoryBank::build(&hg, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let queries = Array2::from_shape_fn((3, model.layout.total()), |_| rng.gen::<f64>() - 0.5);
        let k_r = 3;
        let ms = build_multiscale(hg, &bank, &queries, k_r);
        assert_eq!(ms.l2.len(), 3);
        assert_eq!(ms.l3.len(), 3);
        for (e2, e3) in ms.l2.iter().zip(&ms.l3) {
            assert!(e2.members.len() <= k_r);
            // phi-consistency: every L3 member is the target of an L2 member
            for t in &e3.members {
                assert!(e2
                    .members
                    .iter()
                    .any(|&id| ms.l1.projection(id).target == *t));
            }
            // and collapse: |l3| <= |l2|
            assert!(e3.members.len() <= e2.members.len());
        }
        // k_r = 1 -> singleton L2 edges
        let bank2 = MemoryBank::build(&ms.l1, &model, &tgt_views, &tgt, IndexMode::Exact).unwrap();
        let ms1 = build_multiscale(ms.l1.clone(), &bank2, &queries, 1);
        assert!(ms1.l2.iter().all(|e| e.members.len() == 1));
    }
}
