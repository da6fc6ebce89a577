//! Skip-gram with negative sampling over walk corpora, followed by a learned
//! square linear map applied to the input embeddings.
//!
//! The forward pass scores a (center, context) pair as `(W u_center) . v_ctx`
//! and trains `u`, `v`, and `W` jointly with the logistic negative-sampling
//! objective. Returned vectors are `W u`, one per token that appears in the
//! corpus. Training is single-threaded and deterministic under a fixed seed.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgaError};
use crate::walks::Token;

#[derive(Debug, Clone)]
pub struct SkipgramConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dimension: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 2,
        }
    }
}

impl SkipgramConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.dimension > 0
            && self.window > 0
            && self.negatives > 0
            && self.epochs > 0
            && self.learning_rate > 0.0;
        if !ok {
            return Err(TkgaError::Config {
                key: "skipgram".into(),
                msg: "all fields must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Token -> vector map produced by training.
#[derive(Debug, Clone)]
pub struct StructuralEmbeddings {
    vectors: HashMap<Token, Array1<f64>>,
    dimension: usize,
    /// Mean negative-sampling loss per epoch, for convergence checks.
    pub epoch_losses: Vec<f64>,
}

impl StructuralEmbeddings {
    pub fn get(&self, token: &Token) -> Option<&Array1<f64>> {
        self.vectors.get(token)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.vectors.keys()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn train_structural_embeddings(
    corpus: &[Vec<Token>],
    cfg: &SkipgramConfig,
) -> Result<StructuralEmbeddings> {
    cfg.validate()?;
    if corpus.is_empty() || corpus.iter().all(|p| p.is_empty()) {
        return Err(TkgaError::Training("empty corpus".into()));
    }

    // vocabulary in first-appearance order
    let mut vocab: Vec<Token> = Vec::new();
    let mut index: HashMap<Token, usize> = HashMap::new();
    let mut counts: Vec<f64> = Vec::new();
    for path in corpus {
        for tok in path {
            match index.get(tok) {
                Some(&i) => counts[i] += 1.0,
                None => {
                    index.insert(*tok, vocab.len());
                    vocab.push(*tok);
                    counts.push(1.0);
                }
            }
        }
    }
    let paths: Vec<Vec<usize>> = corpus
        .iter()
        .map(|p| p.iter().map(|t| index[t]).collect())
        .collect();

    let n = vocab.len();
    let d = cfg.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 0.5 / d as f64;
    let mut input = Array2::from_shape_fn((n, d), |_| (rng.gen::<f64>() - 0.5) * scale * 2.0);
    let mut output = Array2::<f64>::zeros((n, d));
    // near-identity start for the linear map
    let mut map = Array2::from_shape_fn((d, d), |(i, j)| {
        let noise = (rng.gen::<f64>() - 0.5) * 0.01;
        if i == j {
            1.0 + noise
        } else {
            noise
        }
    });

    let neg_weights: Vec<f64> = counts.iter().map(|c| c.powf(0.75)).collect();
    let neg_dist = WeightedIndex::new(&neg_weights).expect("nonempty vocab");

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let total_steps = cfg.epochs
        * paths
            .iter()
            .map(|p| p.len())
            .sum::<usize>()
            .max(1);
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for path in &paths {
            for (pos, &center) in path.iter().enumerate() {
                let lr = cfg.learning_rate
                    * (1.0 - step as f64 / total_steps as f64).max(1e-4);
                step += 1;
                let win = 1 + rng.gen_range(0..cfg.window);
                let lo = pos.saturating_sub(win);
                let hi = (pos + win).min(path.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let ctx = path[ctx_pos];
                    let u = input.row(center).to_owned();
                    let h = map.dot(&u);
                    let mut grad_h = Array1::<f64>::zeros(d);
                    // positive + sampled negatives
                    for s in 0..=cfg.negatives {
                        let (target, label) = if s == 0 {
                            (ctx, 1.0)
                        } else {
                            (neg_dist.sample(&mut rng), 0.0)
                        };
                        let v = output.row(target).to_owned();
                        let score = sigmoid(h.dot(&v));
                        loss_sum += if label > 0.5 {
                            -(score.max(1e-12)).ln()
                        } else {
                            -((1.0 - score).max(1e-12)).ln()
                        };
                        let g = score - label;
                        grad_h.scaled_add(g, &v);
                        let mut row = output.row_mut(target);
                        row.scaled_add(-lr * g, &h);
                    }
                    loss_count += 1;
                    // backprop through the linear map
                    let grad_u = map.t().dot(&grad_h);
                    for i in 0..d {
                        for j in 0..d {
                            map[(i, j)] -= lr * grad_h[i] * u[j];
                        }
                    }
                    let mut row = input.row_mut(center);
                    row.scaled_add(-lr, &grad_u);
                }
            }
        }
        epoch_losses.push(loss_sum / loss_count.max(1) as f64);
    }

    let mut vectors = HashMap::with_capacity(n);
    for (i, tok) in vocab.iter().enumerate() {
        let v = map.dot(&input.row(i).to_owned());
        if !v.iter().all(|x| x.is_finite()) {
            return Err(TkgaError::Training("non-finite embedding".into()));
        }
        vectors.insert(*tok, v);
    }
    Ok(StructuralEmbeddings {
        vectors,
        dimension: d,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{parse_tkg_str, EntityId};
    use crate::walks::{build_corpus, WalkConfig};

    fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        let na = a.dot(a).sqrt();
        let nb = b.dot(b).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            a.dot(b) / (na * nb)
        }
    }

    fn barbell_kg() -> crate::kg::TemporalKG {
        // two 5-cliques joined by one bridge
        let mut lines = String::new();
        for side in 0..2 {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    lines.push_str(&format!("n{side}_{i}\tr\tn{side}_{j}\t2000\t2000\n"));
                }
            }
        }
        lines.push_str("n0_0\tbridge\tn1_0\t2000\t2000\n");
        parse_tkg_str(&lines, "barbell").unwrap()
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(train_structural_embeddings(&[], &SkipgramConfig::default()).is_err());
    }

    #[test]
    fn shapes_and_finiteness() {
        let kg = barbell_kg();
        let corpus = build_corpus(&kg, &WalkConfig::default()).unwrap();
        let cfg = SkipgramConfig {
            dimension: 16,
            epochs: 2,
            ..Default::default()
        };
        let emb = train_structural_embeddings(&corpus, &cfg).unwrap();
        assert_eq!(emb.dimension(), 16);
        for tok in emb.tokens() {
            let v = emb.get(tok).unwrap();
            assert_eq!(v.len(), 16);
            assert!(v.iter().all(|x| x.is_finite()));
        }
        // every entity and relation in the corpus has a vector
        for path in &corpus {
            for tok in path {
                assert!(emb.get(tok).is_some());
            }
        }
    }

    #[test]
    fn barbell_intra_clique_cosine_dominates() {
        let kg = barbell_kg();
        let corpus = build_corpus(
            &kg,
            &WalkConfig {
                walks_per_entity: 20,
                walk_length: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = SkipgramConfig {
            dimension: 16,
            epochs: 8,
            ..Default::default()
        };
        let emb = train_structural_embeddings(&corpus, &cfg).unwrap();
        let side = |label: &str| kg.entity_by_label(label).unwrap();
        let mut intra = Vec::new();
        let mut cross = Vec::new();
        for i in 0..5u32 {
            for j in 0..5u32 {
                if i < j {
                    for s in 0..2 {
                        let a = emb.get(&Token::Entity(side(&format!("n{s}_{i}")))).unwrap();
                        let b = emb.get(&Token::Entity(side(&format!("n{s}_{j}")))).unwrap();
                        intra.push(cosine(a, b));
                    }
                }
                let a = emb.get(&Token::Entity(side(&format!("n0_{i}")))).unwrap();
                let b = emb.get(&Token::Entity(side(&format!("n1_{j}")))).unwrap();
                cross.push(cosine(a, b));
            }
        }
        let mut wins = 0usize;
        let mut total = 0usize;
        for &ic in &intra {
            for &cc in &cross {
                total += 1;
                if ic > cc {
                    wins += 1;
                }
            }
        }
        assert!(
            wins as f64 / total as f64 >= 0.9,
            "intra > cross for only {}/{total} pairs",
            wins
        );
    }

    #[test]
    fn symmetric_twins_are_mutual_nearest_neighbors() {
        // path graph with two leaves attached to the same hub: a and b are twins
        let kg = parse_tkg_str(
            "hub\tr\ta\t2000\t2000\nhub\tr\tb\t2000\t2000\nhub\tr2\tc\t2000\t2000\n\
             c\tr2\td\t2000\t2000\nd\tr2\te\t2000\t2000\n",
            "twins",
        )
        .unwrap();
        let corpus = build_corpus(
            &kg,
            &WalkConfig {
                walks_per_entity: 40,
                walk_length: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let emb = train_structural_embeddings(
            &corpus,
            &SkipgramConfig {
                dimension: 16,
                epochs: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let a = kg.entity_by_label("a").unwrap();
        let b = kg.entity_by_label("b").unwrap();
        // brute-force nearest neighbor among entities
        let nearest = |x: EntityId| -> EntityId {
            let vx = emb.get(&Token::Entity(x)).unwrap();
            kg.entity_ids()
                .filter(|&y| y != x)
                .max_by(|&y, &z| {
                    let cy = cosine(vx, emb.get(&Token::Entity(y)).unwrap());
                    let cz = cosine(vx, emb.get(&Token::Entity(z)).unwrap());
                    cy.partial_cmp(&cz).unwrap()
                })
                .unwrap()
        };
        assert_eq!(nearest(a), b);
        assert_eq!(nearest(b), a);
    }

    #[test]
    fn loss_non_increasing_within_tolerance() {
        let kg = barbell_kg();
        let corpus = build_corpus(&kg, &WalkConfig::default()).unwrap();
        let emb = train_structural_embeddings(
            &corpus,
            &SkipgramConfig {
                dimension: 16,
                epochs: 6,
                ..Default::default()
            },
        )
        .unwrap();
        for w in emb.epoch_losses.windows(2) {
            assert!(w[1].is_finite());
            assert!(w[1] <= w[0] * 1.05, "loss jumped: {} -> {}", w[0], w[1]);
        }
    }
}
