//! Ranking metrics, dataset statistics, and embedding noise injection.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csls::SimilarityMatrix;
use crate::error::{Result, TkgaError};
use crate::fusion::Pair;
use crate::kg::{EntityId, SeedAlignment, TemporalKG};

/// Per-test-pair ranks and their aggregates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankReport {
    pub ranks: Vec<usize>,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub mrr: f64,
}

pub fn hits_mrr(ranks: Vec<usize>) -> Result<RankReport> {
    if ranks.is_empty() {
        return Err(TkgaError::Metric("no ranks to aggregate".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    Ok(RankReport {
        hits1: hits(1),
        hits5: hits(5),
        hits10: hits(10),
        mrr,
        ranks,
    })
}

/// Rank of the true target per test pair under the similarity matrix, with
/// pinned pairs forced to rank 1. A pinned pair whose target differs from
/// the truth pushes the true target's rank down by one.
pub fn rank_test_pairs(
    matrix: &SimilarityMatrix,
    test_pairs: &[(EntityId, EntityId)],
    pinned: &BTreeSet<Pair>,
) -> Vec<usize> {
    let mut ranks = Vec::with_capacity(test_pairs.len());
    for &(s, t) in test_pairs {
        let pin = pinned.iter().find(|&&(ps, _)| ps == s).map(|&(_, pt)| pt);
        let rank = match pin {
            Some(pt) if pt == t => 1,
            other => {
                let row = matrix.scores.row(s.index());
                let my = row[t.index()];
                // descending rank; ties resolved by lower handle first
                let mut r = 1 + row
                    .iter()
                    .enumerate()
                    .filter(|&(j, &v)| v > my || (v == my && j < t.index()))
                    .count();
                if other.is_some() {
                    // a wrong pinned target occupies rank 1
                    r += 1;
                }
                r
            }
        };
        ranks.push(rank);
    }
    ranks
}

pub const UNDEFINED_PCT: f64 = -1.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub facts: usize,
    pub valid_facts: usize,
    /// valid quadruples per entity having at least one valid quadruple
    pub temporal_density: f64,
    /// fraction of entities appearing in the seed alignment, percent
    pub overlap_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyComparator {
    /// identical entity-level [min, max] year spans on both sides
    YearSpan,
    /// identical timestamp multisets at year level
    YearSet,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetStats {
    pub source: GraphStats,
    pub target: GraphStats,
    /// mean over both graphs of valid-fact percentage
    pub mtf_pct: f64,
    /// relative difference in valid-fact counts, smaller side as base;
    /// `UNDEFINED_PCT` when the base is zero
    pub delta_tf_pct: f64,
    /// relative difference in temporal density, smaller side as base
    pub delta_td_pct: f64,
    /// seed pairs with consistent entity-level temporal extents, percent
    pub interval_consistency_pct: f64,
    pub comparator: ConsistencyComparator,
}

fn graph_stats(kg: &TemporalKG, seed_entities: &BTreeSet<EntityId>) -> GraphStats {
    let valid = kg.quadruples().iter().filter(|q| q.is_valid()).count();
    let valid_entities = (0..kg.num_entities())
        .filter(|&i| {
            kg.incident(EntityId(i as u32))
                .iter()
                .any(|&qi| kg.quadruple(qi).is_valid())
        })
        .count();
    let overlap = (0..kg.num_entities())
        .filter(|&i| seed_entities.contains(&EntityId(i as u32)))
        .count();
    GraphStats {
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        facts: kg.quadruples().len(),
        valid_facts: valid,
        temporal_density: if valid_entities == 0 {
            0.0
        } else {
            valid as f64 / valid_entities as f64
        },
        overlap_pct: if kg.num_entities() == 0 {
            0.0
        } else {
            100.0 * overlap as f64 / kg.num_entities() as f64
        },
    }
}

fn relative_delta_pct(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == 0.0 {
        if hi == 0.0 {
            0.0
        } else {
            UNDEFINED_PCT
        }
    } else {
        100.0 * (hi - lo) / lo
    }
}

fn year_span(kg: &TemporalKG, e: EntityId) -> Option<(i32, i32)> {
    let years: Vec<i32> = kg
        .incident(e)
        .iter()
        .flat_map(|&qi| kg.quadruple(qi).interval.endpoints())
        .filter_map(|p| p.year_value())
        .collect();
    Some((*years.iter().min()?, *years.iter().max()?))
}

fn year_set(kg: &TemporalKG, e: EntityId) -> BTreeSet<i32> {
    kg.incident(e)
        .iter()
        .flat_map(|&qi| kg.quadruple(qi).interval.endpoints())
        .filter_map(|p| p.year_value())
        .collect()
}

pub fn dataset_stats(
    src: &TemporalKG,
    tgt: &TemporalKG,
    seeds: &SeedAlignment,
    comparator: ConsistencyComparator,
) -> DatasetStats {
    let src_seed: BTreeSet<EntityId> = seeds.pairs.iter().map(|p| p.0).collect();
    let tgt_seed: BTreeSet<EntityId> = seeds.pairs.iter().map(|p| p.1).collect();
    let s = graph_stats(src, &src_seed);
    let t = graph_stats(tgt, &tgt_seed);

    let pct = |g: &GraphStats| {
        if g.facts == 0 {
            0.0
        } else {
            100.0 * g.valid_facts as f64 / g.facts as f64
        }
    };
    let mtf_pct = (pct(&s) + pct(&t)) / 2.0;
    let delta_tf_pct = relative_delta_pct(s.valid_facts as f64, t.valid_facts as f64);
    let delta_td_pct = if s.valid_facts == 0 || t.valid_facts == 0 {
        if s.valid_facts == t.valid_facts {
            0.0
        } else {
            UNDEFINED_PCT
        }
    } else {
        relative_delta_pct(s.temporal_density, t.temporal_density)
    };

    let consistent = seeds
        .pairs
        .iter()
        .filter(|&&(a, b)| match comparator {
            ConsistencyComparator::YearSpan => year_span(src, a) == year_span(tgt, b),
            ConsistencyComparator::YearSet => year_set(src, a) == year_set(tgt, b),
        })
        .count();
    let interval_consistency_pct = if seeds.pairs.is_empty() {
        0.0
    } else {
        100.0 * consistent as f64 / seeds.pairs.len() as f64
    };

    DatasetStats {
        source: s,
        target: t,
        mtf_pct,
        delta_tf_pct,
        delta_td_pct,
        interval_consistency_pct,
        comparator,
    }
}

/// Replaces `floor(ratio * n)` seeded-chosen rows with uniform vectors in
/// [-1, 1]^D; everything else untouched.
pub fn inject_noise(embeddings: &Array2<f64>, ratio: f64, seed: u64) -> Array2<f64> {
    assert!((0.0..=1.0).contains(&ratio), "noise ratio out of range");
    let n = embeddings.nrows();
    let count = (ratio * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    rows.truncate(count);
    let mut out = embeddings.clone();
    for &i in &rows {
        for v in out.row_mut(i).iter_mut() {
            *v = rng.gen_range(-1.0..=1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_tkg_str;
    use ndarray::Array2;

    #[test]
    fn hits_mrr_hand_values() {
        let r = hits_mrr(vec![1, 3, 12]).unwrap();
        assert!((r.hits1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.hits5 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.hits10 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.mrr - (1.0 + 1.0 / 3.0 + 1.0 / 12.0) / 3.0).abs() < 1e-12);

        let all = hits_mrr(vec![1, 1, 1]).unwrap();
        assert_eq!((all.hits1, all.hits5, all.hits10, all.mrr), (1.0, 1.0, 1.0, 1.0));

        assert!(hits_mrr(vec![]).is_err());
    }

    #[test]
    fn hits_mrr_matches_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ranks: Vec<usize> = (0..10_000).map(|_| rng.gen_range(1..500)).collect();
        let r = hits_mrr(ranks.clone()).unwrap();
        let mut h = [0usize; 3];
        let mut inv = 0.0;
        for &x in &ranks {
            if x <= 1 {
                h[0] += 1;
            }
            if x <= 5 {
                h[1] += 1;
            }
            if x <= 10 {
                h[2] += 1;
            }
            inv += (x as f64).recip();
        }
        let n = ranks.len() as f64;
        assert_eq!(r.hits1, h[0] as f64 / n);
        assert_eq!(r.hits5, h[1] as f64 / n);
        assert_eq!(r.hits10, h[2] as f64 / n);
        assert_eq!(r.mrr, inv / n);
    }

    #[test]
    fn stats_mtf_and_deltas() {
        // source: 4 facts 2 valid; target: 4 facts 1 valid
        let src = parse_tkg_str(
            "a\tr\tb\t2019\t2019\nb\tr\tc\t2020\t2020\nc\tr\td\t####\t####\nd\tr\ta\t####\t####\n",
            "s",
        )
        .unwrap();
        let tgt = parse_tkg_str(
            "a\tr\tb\t2019\t2019\nb\tr\tc\t####\t####\nc\tr\td\t####\t####\nd\tr\ta\t####\t####\n",
            "t",
        )
        .unwrap();
        let seeds = SeedAlignment::new(
            vec![(EntityId(0), EntityId(0))],
            vec![true],
        )
        .unwrap();
        let st = dataset_stats(&src, &tgt, &seeds, ConsistencyComparator::YearSpan);
        assert!((st.mtf_pct - 37.5).abs() < 1e-12);
        // valid counts 2 vs 1 -> (2-1)/1 = 100%
        assert!((st.delta_tf_pct - 100.0).abs() < 1e-12);
    }

    #[test]
    fn stats_identical_graphs_are_symmetric() {
        let text = "a\tr\tb\t2019\t2020\nb\tr\tc\t2020\t2021\n";
        let src = parse_tkg_str(text, "s").unwrap();
        let tgt = parse_tkg_str(text, "t").unwrap();
        let pairs = (0..3).map(|i| (EntityId(i), EntityId(i))).collect();
        let seeds = SeedAlignment::split_by_fraction(pairs, 0.5, 1).unwrap();
        let st = dataset_stats(&src, &tgt, &seeds, ConsistencyComparator::YearSpan);
        assert_eq!(st.delta_tf_pct, 0.0);
        assert_eq!(st.delta_td_pct, 0.0);
        assert_eq!(st.interval_consistency_pct, 100.0);
        assert_eq!(st.source.overlap_pct, 100.0);
    }

    #[test]
    fn stats_zero_valid_side_uses_sentinel() {
        let src = parse_tkg_str("a\tr\tb\t2019\t2019\n", "s").unwrap();
        let tgt = parse_tkg_str("a\tr\tb\t####\t####\n", "t").unwrap();
        let seeds = SeedAlignment::new(vec![(EntityId(0), EntityId(0))], vec![true]).unwrap();
        let st = dataset_stats(&src, &tgt, &seeds, ConsistencyComparator::YearSpan);
        assert_eq!(st.target.temporal_density, 0.0);
        assert_eq!(st.delta_tf_pct, UNDEFINED_PCT);
        assert_eq!(st.delta_td_pct, UNDEFINED_PCT);
    }

    #[test]
    fn noise_injection_counts_and_determinism() {
        let emb = Array2::from_shape_fn((10, 4), |(i, j)| (i * 4 + j) as f64);
        assert_eq!(inject_noise(&emb, 0.0, 9), emb);

        let half = inject_noise(&emb, 0.5, 9);
        let changed: Vec<usize> = (0..10)
            .filter(|&i| half.row(i) != emb.row(i))
            .collect();
        assert_eq!(changed.len(), 5);
        assert_eq!(inject_noise(&emb, 0.5, 9), half);

        let full = inject_noise(&emb, 1.0, 9);
        assert!((0..10).all(|i| full.row(i) != emb.row(i)));
        assert!(full.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn rank_test_pairs_pinning() {
        let m = SimilarityMatrix {
            scores: ndarray::array![[0.9, 0.1, 0.2], [0.5, 0.6, 0.4], [0.3, 0.2, 0.1]],
            topk: vec![],
            k_topk: 0,
            k_csls: 1,
        };
        let pairs = vec![(EntityId(0), EntityId(2)), (EntityId(1), EntityId(1))];
        let none = rank_test_pairs(&m, &pairs, &BTreeSet::new());
        assert_eq!(none, vec![2, 1]);
        let pinned: BTreeSet<Pair> = [(EntityId(0), EntityId(2))].into_iter().collect();
        assert_eq!(rank_test_pairs(&m, &pairs, &pinned), vec![1, 1]);
        // wrong pin pushes the true rank down
        let wrong: BTreeSet<Pair> = [(EntityId(1), EntityId(0))].into_iter().collect();
        assert_eq!(rank_test_pairs(&m, &pairs, &wrong), vec![2, 2]);
    }
}
