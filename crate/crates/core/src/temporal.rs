//! Multi-granular Time2Vec encoding of entity temporal signatures.
//!
//! A time index `t` maps to a `(k+1)`-vector whose component 0 is linear
//! (`w0*t + p0`) and components 1..k are `cos(wi*t + pi)`. An entity's
//! embedding at one granularity is a per-granularity projection of the mean
//! Time2Vec vector over its active indices; an empty signature maps to the
//! zero vector and is never updated during training.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgaError};
use crate::kg::{Granularity, TemporalKG, TemporalSignature};

/// Learnable frequencies, phases, and projection for one granularity.
#[derive(Debug, Clone)]
pub struct GranularityParams {
    /// length k+1; index 0 is the linear component
    pub omega: Array1<f64>,
    pub phi: Array1<f64>,
    /// (d_t, k+1) projection
    pub proj: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Time2VecParams {
    pub k: usize,
    pub d_t: usize,
    pub year: GranularityParams,
    pub month: GranularityParams,
    pub date: GranularityParams,
}

impl Time2VecParams {
    pub fn new(k: usize, d_t: usize, seed: u64) -> Result<Time2VecParams> {
        if k < 1 || d_t == 0 {
            return Err(TkgaError::Config {
                key: "time2vec".into(),
                msg: "k >= 1 and d_t > 0 required".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |scale: f64| {
            let omega = Array1::from_shape_fn(k + 1, |i| {
                if i == 0 {
                    scale
                } else {
                    // spread of periodic frequencies
                    (rng.gen::<f64>() * 2.0 - 1.0) * std::f64::consts::PI * scale * i as f64
                        / k as f64
                }
            });
            let phi = Array1::from_shape_fn(k + 1, |_| (rng.gen::<f64>() * 2.0 - 1.0) * 0.1);
            let bound = (6.0 / (d_t + k + 1) as f64).sqrt();
            let proj = Array2::from_shape_fn((d_t, k + 1), |_| (rng.gen::<f64>() * 2.0 - 1.0) * bound);
            GranularityParams { omega, phi, proj }
        };
        // finer granularities see larger index ranges; scale down frequencies
        let year = mk(0.1);
        let month = mk(0.01);
        let date = mk(0.001);
        Ok(Time2VecParams { k, d_t, year, month, date })
    }

    pub fn for_granularity(&self, g: Granularity) -> &GranularityParams {
        match g {
            Granularity::Year => &self.year,
            Granularity::Month => &self.month,
            Granularity::Date => &self.date,
        }
    }

    pub fn for_granularity_mut(&mut self, g: Granularity) -> &mut GranularityParams {
        match g {
            Granularity::Year => &mut self.year,
            Granularity::Month => &mut self.month,
            Granularity::Date => &mut self.date,
        }
    }
}

/// `t2v(t)[0] = w0 t + p0`, `t2v(t)[i] = cos(wi t + pi)` for i in 1..=k.
pub fn time2vec(t: f64, params: &GranularityParams) -> Array1<f64> {
    Array1::from_shape_fn(params.omega.len(), |i| {
        let z = params.omega[i] * t + params.phi[i];
        if i == 0 {
            z
        } else {
            z.cos()
        }
    })
}

/// Mean Time2Vec vector over the active indices, before projection.
/// Returns `None` for an empty signature.
pub fn mean_t2v(signature: &TemporalSignature, params: &GranularityParams) -> Option<Array1<f64>> {
    if signature.is_empty() {
        return None;
    }
    let mut acc = Array1::<f64>::zeros(params.omega.len());
    let mut n = 0usize;
    for idx in signature.active_indices() {
        acc += &time2vec(idx as f64, params);
        n += 1;
    }
    Some(acc / n as f64)
}

/// `W_g . mean(t2v)`; zero vector for an empty signature.
pub fn encode_entity_time(
    signature: &TemporalSignature,
    params: &GranularityParams,
    d_t: usize,
) -> Array1<f64> {
    match mean_t2v(signature, params) {
        Some(m) => params.proj.dot(&m),
        None => Array1::zeros(d_t),
    }
}

/// Per-entity temporal embeddings at all three granularities, as
/// `(|E|, d_t)` matrices.
#[derive(Debug, Clone)]
pub struct GranularEmbeddings {
    pub year: Array2<f64>,
    pub month: Array2<f64>,
    pub date: Array2<f64>,
}

impl GranularEmbeddings {
    pub fn get(&self, g: Granularity) -> &Array2<f64> {
        match g {
            Granularity::Year => &self.year,
            Granularity::Month => &self.month,
            Granularity::Date => &self.date,
        }
    }
}

/// Precomputed signatures for every entity at all granularities.
#[derive(Debug, Clone)]
pub struct SignatureTable {
    pub year: Vec<TemporalSignature>,
    pub month: Vec<TemporalSignature>,
    pub date: Vec<TemporalSignature>,
}

impl SignatureTable {
    pub fn build(kg: &TemporalKG) -> SignatureTable {
        let per = |g: Granularity| {
            kg.entity_ids()
                .map(|e| kg.temporal_signature(e, g))
                .collect::<Vec<_>>()
        };
        SignatureTable {
            year: per(Granularity::Year),
            month: per(Granularity::Month),
            date: per(Granularity::Date),
        }
    }

    pub fn get(&self, g: Granularity) -> &[TemporalSignature] {
        match g {
            Granularity::Year => &self.year,
            Granularity::Month => &self.month,
            Granularity::Date => &self.date,
        }
    }
}

pub fn encode_all_granularities(
    signatures: &SignatureTable,
    params: &Time2VecParams,
) -> GranularEmbeddings {
    let encode = |g: Granularity| {
        let sigs = signatures.get(g);
        let gp = params.for_granularity(g);
        let mut out = Array2::<f64>::zeros((sigs.len(), params.d_t));
        for (i, sig) in sigs.iter().enumerate() {
            out.row_mut(i).assign(&encode_entity_time(sig, gp, params.d_t));
        }
        out
    };
    GranularEmbeddings {
        year: encode(Granularity::Year),
        month: encode(Granularity::Month),
        date: encode(Granularity::Date),
    }
}
