//! End-to-end alignment runs: encoding, similarity, hypergraph fusion, and
//! the outer seed-feedback loop.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::csls::{csls_similarity, pseudo_pairs, SimilarityMatrix};
use crate::error::{Result, TkgaError};
use crate::fuse::{AlignmentModel, FusionLayout, SideViews};
use crate::fusion::{fuse_scales, Pair};
use crate::kg::{EntityId, SeedAlignment, TemporalKG};
use crate::metrics::{hits_mrr, inject_noise, rank_test_pairs, RankReport};
use crate::names::NameProvider;
use crate::projection::{build_projection_hypergraph, RelMap};
use crate::reasoner::Reasoner;
use crate::retrieval::{build_multiscale, IndexMode, MemoryBank};
use crate::skipgram::{train_structural_embeddings, SkipgramConfig, StructuralEmbeddings};
use crate::temporal::SignatureTable;
use crate::trainer::{train_alignment, TrainerConfig};
use crate::walks::{build_corpus, Token, WalkConfig};

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub walk: WalkConfig,
    pub skipgram: SkipgramConfig,
    pub trainer: TrainerConfig,
    /// name-view dimension when hashing labels (file providers fix their own)
    pub d_name: usize,
    pub d_t: usize,
    pub t2v_k: usize,
    pub k_csls: usize,
    /// top-k candidate targets per source entity
    pub k_candidates: usize,
    /// memory-bank retrievals per source
    pub k_retrieve: usize,
    /// outer feedback rounds
    pub iterations: usize,
    /// augment calls per scale per round
    pub augment_budget: usize,
    pub index_mode: IndexMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            walk: WalkConfig::default(),
            skipgram: SkipgramConfig::default(),
            trainer: TrainerConfig::default(),
            d_name: 64,
            d_t: 16,
            t2v_k: 8,
            k_csls: 10,
            k_candidates: 10,
            k_retrieve: 10,
            iterations: 2,
            augment_budget: usize::MAX,
            index_mode: IndexMode::Exact,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub fused_pairs: usize,
    pub new_seeds: usize,
    pub report: Option<RankReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub matrix: SimilarityMatrix,
    pub phi_f: BTreeSet<Pair>,
    /// per-source pairs: fused pairs pinned, everything else argmax
    pub final_pairs: Vec<Pair>,
    pub rounds: Vec<RoundReport>,
    pub early_stop: bool,
    /// diagnostic of an aborted round; earlier rounds' state is kept
    pub aborted: Option<String>,
}

/// Per-graph encoder inputs that do not change across feedback rounds.
pub struct EncodedSide {
    pub views: SideViews,
}

fn structural_matrix(
    kg: &TemporalKG,
    emb: &StructuralEmbeddings,
) -> Array2<f64> {
    let mut m = Array2::zeros((kg.num_entities(), emb.dimension()));
    for e in kg.entity_ids() {
        if let Some(v) = emb.get(&Token::Entity(e)) {
            m.row_mut(e.index()).assign(v);
        }
    }
    m
}

/// Walk corpus, skip-gram, name embedding, and signature table for one side.
pub fn encode_side(
    kg: &TemporalKG,
    names: &dyn NameProvider,
    walk: &WalkConfig,
    skipgram: &SkipgramConfig,
) -> Result<EncodedSide> {
    let corpus = build_corpus(kg, walk)?;
    let structural = train_structural_embeddings(&corpus, skipgram)?;
    let name_vecs = names.embed_all(kg.entity_labels())?;
    let mut name = Array2::zeros((kg.num_entities(), names.dimension()));
    for (i, v) in name_vecs.iter().enumerate() {
        name.row_mut(i).assign(v);
    }
    Ok(EncodedSide {
        views: SideViews {
            name,
            structural: structural_matrix(kg, &structural),
            signatures: SignatureTable::build(kg),
        },
    })
}

fn layout_for(src: &EncodedSide, cfg: &PipelineConfig) -> FusionLayout {
    FusionLayout {
        d_n: src.views.name.ncols(),
        d_t: cfg.d_t,
        d_struct: src.views.structural.ncols(),
    }
}

/// Trains the fusion model on `seeds` and returns it with the CSLS matrix.
/// Noise, when requested, replaces fused source rows before similarity.
pub fn train_and_score(
    src: &EncodedSide,
    tgt: &EncodedSide,
    seeds: &[Pair],
    cfg: &PipelineConfig,
    noise: Option<NoiseSpec>,
) -> Result<(AlignmentModel, Array2<f64>, SimilarityMatrix)> {
    let mut model = AlignmentModel::new(layout_for(src, cfg), cfg.t2v_k, cfg.seed)?;
    train_alignment(&mut model, &src.views, &tgt.views, seeds, &cfg.trainer)?;
    let mut src_fused = model.fuse_side(&src.views)?;
    if let Some(n) = noise {
        src_fused = inject_noise(&src_fused, n.ratio, n.seed);
    }
    let tgt_fused = model.fuse_side(&tgt.views)?;
    let k_top = cfg.k_candidates.min(tgt.views.num_entities()).max(1);
    let matrix = csls_similarity(&src_fused, &tgt_fused, cfg.k_csls, k_top);
    Ok((model, src_fused, matrix))
}

/// Embedding-and-similarity ablation: no projections, retrieval, or fusion.
pub fn run_csls_baseline(
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    seeds: &SeedAlignment,
    names: &dyn NameProvider,
    cfg: &PipelineConfig,
    noise: Option<NoiseSpec>,
    eval_pairs: Option<&[Pair]>,
) -> Result<(SimilarityMatrix, Vec<Pair>, Option<RankReport>)> {
    let src = encode_side(src_kg, names, &cfg.walk, &cfg.skipgram)?;
    let tgt = encode_side(tgt_kg, names, &cfg.walk, &cfg.skipgram)?;
    let (_, _, matrix) = train_and_score(&src, &tgt, &seeds.train_pairs(), cfg, noise)?;
    let report = match eval_pairs {
        Some(pairs) => Some(hits_mrr(rank_test_pairs(&matrix, pairs, &BTreeSet::new()))?),
        None => None,
    };
    let pairs = pseudo_pairs(&matrix);
    Ok((matrix, pairs, report))
}

struct SeedPool {
    /// target plus a ground-truth flag per source
    by_source: BTreeMap<EntityId, (EntityId, bool)>,
}

impl SeedPool {
    fn from_train(seeds: &SeedAlignment) -> SeedPool {
        SeedPool {
            by_source: seeds
                .train_pairs()
                .into_iter()
                .map(|(s, t)| (s, (t, true)))
                .collect(),
        }
    }

    fn pairs(&self) -> Vec<Pair> {
        self.by_source.iter().map(|(&s, &(t, _))| (s, t)).collect()
    }

    /// Adds fused pairs; ground-truth entries are never overwritten.
    /// Returns how many sources were added or re-targeted.
    fn absorb(&mut self, phi_f: &BTreeSet<Pair>) -> usize {
        let mut changed = 0;
        for &(s, t) in phi_f {
            match self.by_source.get(&s) {
                Some(&(_, true)) => {}
                Some(&(old, false)) if old == t => {}
                _ => {
                    self.by_source.insert(s, (t, false));
                    changed += 1;
                }
            }
        }
        changed
    }
}

/// Full iterative run. Per round: retrain the fusion model on the seed pool,
/// score with CSLS, build the multi-scale hypergraph, fuse reasoner
/// selections into phi_f, and feed phi_f back into the pool. Stops early
/// when a round adds nothing new. A failing round aborts with its
/// diagnostic; results of completed rounds are preserved.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline(
    src_kg: &TemporalKG,
    tgt_kg: &TemporalKG,
    seeds: &SeedAlignment,
    rel_map: &RelMap,
    reasoner: &mut dyn Reasoner,
    names: &dyn NameProvider,
    cfg: &PipelineConfig,
    noise: Option<NoiseSpec>,
    eval_pairs: Option<&[Pair]>,
) -> Result<PipelineResult> {
    if cfg.iterations == 0 {
        return Err(TkgaError::Config {
            key: "iterations".into(),
            msg: "must be >= 1".into(),
        });
    }
    let src = encode_side(src_kg, names, &cfg.walk, &cfg.skipgram)?;
    let tgt = encode_side(tgt_kg, names, &cfg.walk, &cfg.skipgram)?;
    let mut pool = SeedPool::from_train(seeds);

    let mut last: Option<(SimilarityMatrix, BTreeSet<Pair>)> = None;
    let mut rounds = Vec::new();
    let mut early_stop = false;
    let mut aborted = None;

    for round in 1..=cfg.iterations {
        let mut step = || -> Result<(SimilarityMatrix, BTreeSet<Pair>)> {
            let (model, src_fused, matrix) =
                train_and_score(&src, &tgt, &pool.pairs(), cfg, noise)?;
            let k = cfg.k_candidates.min(tgt_kg.num_entities()).max(1);
            let hg = build_projection_hypergraph(&matrix, k, src_kg, tgt_kg, rel_map);
            let bank = MemoryBank::build(&hg, &model, &tgt.views, tgt_kg, cfg.index_mode)?;
            let ms = build_multiscale(hg, &bank, &src_fused, cfg.k_retrieve);
            let phi_f = fuse_scales(
                &ms,
                reasoner,
                src_kg,
                tgt_kg,
                &matrix,
                cfg.augment_budget,
            )?;
            Ok((matrix, phi_f))
        };
        let (matrix, phi_f) = match step() {
            Ok(v) => v,
            Err(e) => {
                aborted = Some(format!("round {round}: {e}"));
                break;
            }
        };
        let report = match eval_pairs {
            Some(pairs) => Some(hits_mrr(rank_test_pairs(&matrix, pairs, &phi_f))?),
            None => None,
        };
        let added = pool.absorb(&phi_f);
        rounds.push(RoundReport {
            round,
            fused_pairs: phi_f.len(),
            new_seeds: added,
            report,
        });
        last = Some((matrix, phi_f));
        if added == 0 {
            early_stop = round < cfg.iterations;
            break;
        }
    }

    let (matrix, phi_f) = last.ok_or_else(|| TkgaError::RoundAborted {
        round: 1,
        msg: aborted.clone().unwrap_or_else(|| "no round completed".into()),
    })?;
    let pin: BTreeMap<EntityId, EntityId> = phi_f.iter().copied().collect();
    let mut final_pairs = pseudo_pairs(&matrix);
    for p in &mut final_pairs {
        if let Some(&t) = pin.get(&p.0) {
            p.1 = t;
        }
    }
    Ok(PipelineResult {
        matrix,
        phi_f,
        final_pairs,
        rounds,
        early_stop,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::names::HashNgramProvider;
    use crate::reasoner::MockReasoner;
    use crate::synth::{synth_generate, SynthConfig};

    fn small_cfg() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.skipgram.epochs = 2;
        cfg.skipgram.dimension = 16;
        cfg.trainer.epochs = 5;
        cfg.walk.walks_per_entity = 3;
        cfg.walk.walk_length = 8;
        cfg.d_name = 32;
        cfg.d_t = 8;
        cfg.t2v_k = 4;
        cfg.iterations = 2;
        cfg
    }

    #[test]
    fn pipeline_runs_and_is_deterministic() {
        let data = synth_generate(&SynthConfig::easy(25, 5)).unwrap();
        let names = HashNgramProvider::new(32);
        let cfg = small_cfg();
        let test = data.seeds.test_pairs();
        let run = |reasoner: &mut MockReasoner| {
            run_pipeline(
                &data.source,
                &data.target,
                &data.seeds,
                &RelMap::ExactLabel,
                reasoner,
                &names,
                &cfg,
                None,
                Some(&test),
            )
            .unwrap()
        };
        let a = run(&mut MockReasoner::new(RelMap::ExactLabel));
        let b = run(&mut MockReasoner::new(RelMap::ExactLabel));
        assert_eq!(a.phi_f, b.phi_f);
        assert_eq!(a.final_pairs, b.final_pairs);
        assert_eq!(a.rounds.len(), b.rounds.len());
        assert!(a.aborted.is_none());
        assert!(!a.rounds.is_empty());
        // pinned pairs dominate the final mapping
        for &(s, t) in &a.phi_f {
            assert!(a.final_pairs.contains(&(s, t)));
        }
    }

    #[test]
    fn zero_iterations_rejected() {
        let data = synth_generate(&SynthConfig::easy(10, 5)).unwrap();
        let names = HashNgramProvider::new(16);
        let mut cfg = small_cfg();
        cfg.iterations = 0;
        let err = run_pipeline(
            &data.source,
            &data.target,
            &data.seeds,
            &RelMap::ExactLabel,
            &mut MockReasoner::new(RelMap::ExactLabel),
            &names,
            &cfg,
            None,
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("iterations"));
    }

    #[test]
    fn baseline_runs() {
        let data = synth_generate(&SynthConfig::easy(20, 9)).unwrap();
        let names = HashNgramProvider::new(32);
        let cfg = small_cfg();
        let test = data.seeds.test_pairs();
        let (m, pairs, report) = run_csls_baseline(
            &data.source,
            &data.target,
            &data.seeds,
            &names,
            &cfg,
            None,
            Some(&test),
        )
        .unwrap();
        assert_eq!(m.num_sources(), 20);
        assert_eq!(pairs.len(), 20);
        let r = report.unwrap();
        assert!(r.hits1 > 0.5, "clone-pair baseline too weak: {}", r.hits1);
    }

    #[test]
    fn seed_pool_respects_ground_truth() {
        let seeds = SeedAlignment::new(
            vec![(EntityId(0), EntityId(0)), (EntityId(1), EntityId(1))],
            vec![true, false],
        )
        .unwrap();
        let mut pool = SeedPool::from_train(&seeds);
        let phi: BTreeSet<Pair> = [
            (EntityId(0), EntityId(5)), // conflicts with GT: ignored
            (EntityId(2), EntityId(2)),
        ]
        .into_iter()
        .collect();
        let added = pool.absorb(&phi);
        assert_eq!(added, 1);
        assert_eq!(pool.by_source[&EntityId(0)], (EntityId(0), true));
        assert_eq!(pool.by_source[&EntityId(2)], (EntityId(2), false));
        // absorbing the same set again adds nothing: convergence signal
        assert_eq!(pool.absorb(&phi), 0);
    }
}
