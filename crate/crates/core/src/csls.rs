//! Cross-domain similarity local scaling over fused embeddings.
//!
//! `CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)` where `r_T(x)` is the mean
//! cosine of `x` to its `k_csls` nearest targets and `r_S(y)` the symmetric
//! source-side term.

use ndarray::{Array1, Array2};

use crate::kg::EntityId;

#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    /// (|E^s|, |E^t|) CSLS scores
    pub scores: Array2<f64>,
    /// per-row top-k target handles, best first
    pub topk: Vec<Vec<EntityId>>,
    pub k_topk: usize,
    pub k_csls: usize,
}

impl SimilarityMatrix {
    pub fn num_sources(&self) -> usize {
        self.scores.nrows()
    }

    pub fn num_targets(&self) -> usize {
        self.scores.ncols()
    }

    pub fn score(&self, s: EntityId, t: EntityId) -> f64 {
        self.scores[(s.index(), t.index())]
    }

    /// Row argmax; ties broken by lowest target handle.
    pub fn row_argmax(&self, s: usize) -> Option<usize> {
        let row = self.scores.row(s);
        let mut best: Option<(usize, f64)> = None;
        for (j, &v) in row.iter().enumerate() {
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((j, v)),
            }
        }
        best.map(|(j, _)| j)
    }
}

fn normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Mean of the `k` largest values in `row`.
fn mean_top_k(row: &Array1<f64>, k: usize) -> f64 {
    let mut vals: Vec<f64> = row.to_vec();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = k.min(vals.len()).max(1);
    vals[..k].iter().sum::<f64>() / k as f64
}

/// Descending sort of a row's indices; ties by lower index.
pub fn rank_row(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Builds the CSLS matrix with a per-row top-`k_topk` index. `k_csls` is
/// clamped to the side sizes.
pub fn csls_similarity(
    src_fused: &Array2<f64>,
    tgt_fused: &Array2<f64>,
    k_csls: usize,
    k_topk: usize,
) -> SimilarityMatrix {
    let sn = normalize_rows(src_fused);
    let tn = normalize_rows(tgt_fused);
    let cos = sn.dot(&tn.t());
    let k_t = k_csls.min(tgt_fused.nrows()).max(1);
    let k_s = k_csls.min(src_fused.nrows()).max(1);
    let r_t: Vec<f64> = (0..cos.nrows())
        .map(|i| mean_top_k(&cos.row(i).to_owned(), k_t))
        .collect();
    let r_s: Vec<f64> = (0..cos.ncols())
        .map(|j| mean_top_k(&cos.column(j).to_owned(), k_s))
        .collect();
    let mut scores = Array2::<f64>::zeros(cos.dim());
    for i in 0..cos.nrows() {
        for j in 0..cos.ncols() {
            scores[(i, j)] = 2.0 * cos[(i, j)] - r_t[i] - r_s[j];
        }
    }
    let k_topk = k_topk.min(scores.ncols());
    let topk = (0..scores.nrows())
        .map(|i| {
            rank_row(scores.row(i).as_slice().unwrap())
                .into_iter()
                .take(k_topk)
                .map(|j| EntityId(j as u32))
                .collect()
        })
        .collect();
    SimilarityMatrix {
        scores,
        topk,
        k_topk,
        k_csls,
    }
}

/// Per-source argmax target pairs; ties by lowest target handle.
pub fn pseudo_pairs(matrix: &SimilarityMatrix) -> Vec<(EntityId, EntityId)> {
    (0..matrix.num_sources())
        .filter_map(|i| {
            matrix
                .row_argmax(i)
                .map(|j| (EntityId(i as u32), EntityId(j as u32)))
        })
        .collect()
}

/// Optional binary dump: u32 rows, u32 cols (little-endian), then row-major
/// f32 scores.
pub fn dump_matrix(matrix: &SimilarityMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + matrix.scores.len() * 4);
    out.extend((matrix.num_sources() as u32).to_le_bytes());
    out.extend((matrix.num_targets() as u32).to_le_bytes());
    for &v in matrix.scores.iter() {
        out.extend((v as f32).to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent brute-force CSLS from the definition.
    pub fn brute_force_csls(src: &Array2<f64>, tgt: &Array2<f64>, k: usize) -> Array2<f64> {
        let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                a.dot(&b) / (na * nb)
            }
        };
        let ns = src.nrows();
        let nt = tgt.nrows();
        let mut out = Array2::zeros((ns, nt));
        for i in 0..ns {
            for j in 0..nt {
                let mut to_targets: Vec<f64> =
                    (0..nt).map(|j2| cos(src.row(i), tgt.row(j2))).collect();
                to_targets.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let kt = k.min(nt).max(1);
                let r_t: f64 = to_targets[..kt].iter().sum::<f64>() / kt as f64;
                let mut to_sources: Vec<f64> =
                    (0..ns).map(|i2| cos(src.row(i2), tgt.row(j))).collect();
                to_sources.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let ks = k.min(ns).max(1);
                let r_s: f64 = to_sources[..ks].iter().sum::<f64>() / ks as f64;
                out[(i, j)] = 2.0 * cos(src.row(i), tgt.row(j)) - r_t - r_s;
            }
        }
        out
    }

    #[test]
    fn degenerate_single_pair_is_zero() {
        let src = arr2(&[[1.0, 0.0]]);
        let m = csls_similarity(&src, &src.clone(), 1, 1);
        assert!(m.scores[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_single_pair_is_zero() {
        let src = arr2(&[[1.0, 0.0]]);
        let tgt = arr2(&[[0.0, 1.0]]);
        let m = csls_similarity(&src, &tgt, 1, 1);
        assert!(m.scores[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let ns = rng.gen_range(2..8);
            let nt = rng.gen_range(2..8);
            let d = 5;
            let src = Array2::from_shape_fn((ns, d), |_| rng.gen::<f64>() - 0.5);
            let tgt = Array2::from_shape_fn((nt, d), |_| rng.gen::<f64>() - 0.5);
            let k = rng.gen_range(1..4);
            let m = csls_similarity(&src, &tgt, k, 3);
            let oracle = brute_force_csls(&src, &tgt, k);
            for (a, b) in m.scores.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pseudo_pairs_argmax_and_tie_rule() {
        let scores = arr2(&[[0.1, 0.9, 0.3], [0.5, 0.5, 0.2]]);
        let m = SimilarityMatrix {
            scores,
            topk: vec![],
            k_topk: 0,
            k_csls: 1,
        };
        let pairs = pseudo_pairs(&m);
        assert_eq!(pairs[0].1, EntityId(1));
        assert_eq!(pairs[1].1, EntityId(0)); // tie -> lowest handle
    }

    #[test]
    fn argmax_invariant_under_monotone_rescale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores = Array2::from_shape_fn((4, 6), |_| rng.gen::<f64>());
        let rescaled = scores.mapv(|v| 3.0 * v + 1.0);
        let m1 = SimilarityMatrix {
            scores,
            topk: vec![],
            k_topk: 0,
            k_csls: 1,
        };
        let m2 = SimilarityMatrix {
            scores: rescaled,
            topk: vec![],
            k_topk: 0,
            k_csls: 1,
        };
        assert_eq!(pseudo_pairs(&m1), pseudo_pairs(&m2));
    }

    #[test]
    fn k_larger_than_side_is_clamped() {
        let src = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let m = csls_similarity(&src, &src.clone(), 100, 100);
        assert!(m.scores.iter().all(|v| v.is_finite()));
        assert_eq!(m.topk[0].len(), 2);
    }
}
