//! Margin-ranking trainer over fused embeddings.
//!
//! Minimizes `sum max(0, margin + dist(s, t) - dist(s, t'))` over seed pairs
//! and uniformly sampled negative targets, with `dist = 1 - cosine`. Name and
//! structural views are frozen inputs; the gradient flows into the per-view
//! gates and the Time2Vec parameters only. Full-batch updates per epoch keep
//! the run deterministic under a fixed seed.

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgaError};
use crate::fuse::{AlignmentModel, SideViews, NUM_VIEWS};
use crate::kg::{EntityId, Granularity};
use crate::temporal::mean_t2v;

#[derive(Debug, Clone)]
pub struct TrainerConfig {
    pub margin: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            margin: 1.0,
            negatives: 5,
            epochs: 30,
            learning_rate: 0.05,
            seed: 4,
        }
    }
}

/// Per-sample hinge value.
pub fn hinge(margin: f64, dist_pos: f64, dist_neg: f64) -> f64 {
    (margin + dist_pos - dist_neg).max(0.0)
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

/// Gradient of `1 - cos(a, b)` with respect to `a`; zero when either vector
/// is zero.
fn dist_grad_wrt_a(a: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Array1::zeros(a.len());
    }
    let dot = a.dot(b);
    -(b / (na * nb) - &(a * (dot / (na.powi(3) * nb))))
}

/// `(source idx, positive target idx, negative target idx)`.
pub type Triple = (usize, usize, usize);

/// Total hinge loss over the triples at the model's current parameters.
pub fn training_loss(
    model: &AlignmentModel,
    src: &SideViews,
    tgt: &SideViews,
    margin: f64,
    triples: &[Triple],
) -> f64 {
    let mut loss = 0.0;
    for &(s, tp, tn) in triples {
        let fs = model.fuse_entity(src, s);
        let ft = model.fuse_entity(tgt, tp);
        let fn_ = model.fuse_entity(tgt, tn);
        let d_pos = 1.0 - cosine(&fs, &ft);
        let d_neg = 1.0 - cosine(&fs, &fn_);
        loss += hinge(margin, d_pos, d_neg);
    }
    loss
}

struct GradAccum {
    flat: Vec<f64>,
    k1: usize,
    d_t: usize,
}

impl GradAccum {
    fn new(model: &AlignmentModel) -> GradAccum {
        GradAccum {
            flat: vec![0.0; model.num_params()],
            k1: model.t2v.k + 1,
            d_t: model.layout.d_t,
        }
    }

    fn gate(&mut self, v: usize) -> &mut f64 {
        &mut self.flat[v]
    }

    fn granularity_base(&self, g: Granularity) -> usize {
        let per_g = 2 * self.k1 + self.d_t * self.k1;
        let gi = match g {
            Granularity::Year => 0,
            Granularity::Month => 1,
            Granularity::Date => 2,
        };
        NUM_VIEWS + gi * per_g
    }

    fn omega(&mut self, g: Granularity, i: usize) -> &mut f64 {
        let base = self.granularity_base(g);
        &mut self.flat[base + i]
    }

    fn phi(&mut self, g: Granularity, i: usize) -> &mut f64 {
        let base = self.granularity_base(g);
        &mut self.flat[base + self.k1 + i]
    }

    fn proj(&mut self, g: Granularity, row: usize, col: usize) -> &mut f64 {
        let base = self.granularity_base(g);
        &mut self.flat[base + 2 * self.k1 + row * self.k1 + col]
    }
}

/// Backpropagates a fused-vector gradient `df` for one entity into the
/// shared parameter accumulator.
fn backprop_entity(
    model: &AlignmentModel,
    views: &SideViews,
    idx: usize,
    df: &Array1<f64>,
    acc: &mut GradAccum,
) {
    let blocks = model.raw_blocks(views, idx);
    for v in 0..NUM_VIEWS {
        let (lo, hi) = model.layout.block(v);
        let df_v = df.slice(ndarray::s![lo..hi]).to_owned();
        *acc.gate(v) += df_v.dot(&blocks[v]);
        let g = match v {
            1 => Granularity::Year,
            2 => Granularity::Month,
            3 => Granularity::Date,
            _ => continue,
        };
        let sig = &views.signatures.get(g)[idx];
        let gp = model.t2v.for_granularity(g);
        let Some(m) = mean_t2v(sig, gp) else {
            continue; // zero signature stays masked
        };
        let dx = df_v * model.gates[v];
        // x = W m
        let dm = gp.proj.t().dot(&dx);
        for row in 0..model.layout.d_t {
            for col in 0..acc.k1 {
                *acc.proj(g, row, col) += dx[row] * m[col];
            }
        }
        let count = sig.popcount() as f64;
        let mut mean_t = 0.0;
        let mut mean_sin = vec![0.0; acc.k1];
        let mut mean_tsin = vec![0.0; acc.k1];
        for t in sig.active_indices() {
            let t = t as f64;
            mean_t += t;
            for i in 1..acc.k1 {
                let sin = (gp.omega[i] * t + gp.phi[i]).sin();
                mean_sin[i] += sin;
                mean_tsin[i] += t * sin;
            }
        }
        mean_t /= count;
        for i in 1..acc.k1 {
            mean_sin[i] /= count;
            mean_tsin[i] /= count;
        }
        *acc.omega(g, 0) += dm[0] * mean_t;
        *acc.phi(g, 0) += dm[0];
        for i in 1..acc.k1 {
            *acc.omega(g, i) += dm[i] * (-mean_tsin[i]);
            *acc.phi(g, i) += dm[i] * (-mean_sin[i]);
        }
    }
}

/// Loss and flat-parameter gradient over a batch of triples.
pub fn loss_and_grad(
    model: &AlignmentModel,
    src: &SideViews,
    tgt: &SideViews,
    margin: f64,
    triples: &[Triple],
) -> (f64, Vec<f64>) {
    let mut acc = GradAccum::new(model);
    let mut loss = 0.0;
    for &(s, tp, tn) in triples {
        let fs = model.fuse_entity(src, s);
        let ft = model.fuse_entity(tgt, tp);
        let fneg = model.fuse_entity(tgt, tn);
        let d_pos = 1.0 - cosine(&fs, &ft);
        let d_neg = 1.0 - cosine(&fs, &fneg);
        let h = margin + d_pos - d_neg;
        if h <= 0.0 {
            continue;
        }
        loss += h;
        // d h / d fs = d d_pos/d fs - d d_neg/d fs
        let dfs = dist_grad_wrt_a(&fs, &ft) - dist_grad_wrt_a(&fs, &fneg);
        let dft = dist_grad_wrt_a(&ft, &fs);
        let dfn = -dist_grad_wrt_a(&fneg, &fs);
        backprop_entity(model, src, s, &dfs, &mut acc);
        backprop_entity(model, tgt, tp, &dft, &mut acc);
        backprop_entity(model, tgt, tn, &dfn, &mut acc);
    }
    (loss, acc.flat)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Trains gates and Time2Vec parameters on the seed train split.
pub fn train_alignment(
    model: &mut AlignmentModel,
    src: &SideViews,
    tgt: &SideViews,
    seeds: &[(EntityId, EntityId)],
    cfg: &TrainerConfig,
) -> Result<TrainReport> {
    if seeds.is_empty() {
        return Err(TkgaError::Training("no seed pairs".into()));
    }
    if cfg.margin <= 0.0 {
        return Err(TkgaError::Config {
            key: "trainer.margin".into(),
            msg: "must be > 0".into(),
        });
    }
    let n_tgt = tgt.num_entities();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        // negatives resampled uniformly over non-matching targets
        let mut triples = Vec::with_capacity(seeds.len() * cfg.negatives);
        for &(s, t) in seeds {
            for _ in 0..cfg.negatives {
                if n_tgt <= 1 {
                    break;
                }
                let neg = loop {
                    let cand = rng.gen_range(0..n_tgt);
                    if cand != t.index() {
                        break cand;
                    }
                };
                triples.push((s.index(), t.index(), neg));
            }
        }
        let (loss, grad) = loss_and_grad(model, src, tgt, cfg.margin, &triples);
        let mut params = model.params_to_vec();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        model.set_params_from_vec(&params);
        epoch_losses.push(loss);
    }
    Ok(TrainReport { epoch_losses })
}
