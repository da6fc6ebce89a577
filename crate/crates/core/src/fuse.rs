//! Multi-view fusion: per-entity concatenation of
//! `[name | year | month | date | structural]` blocks, each scaled by a
//! learned scalar gate.

use ndarray::{s, Array1, Array2};

use crate::error::{Result, TkgaError};
use crate::kg::Granularity;
use crate::temporal::{encode_entity_time, SignatureTable, Time2VecParams};

pub const NUM_VIEWS: usize = 5;

/// Block offsets of a fused vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionLayout {
    pub d_n: usize,
    pub d_t: usize,
    pub d_struct: usize,
}

impl FusionLayout {
    pub fn total(&self) -> usize {
        self.d_n + 3 * self.d_t + self.d_struct
    }

    /// (start, end) of view block `v` (0=name, 1=year, 2=month, 3=date, 4=structural).
    pub fn block(&self, v: usize) -> (usize, usize) {
        let bounds = [
            0,
            self.d_n,
            self.d_n + self.d_t,
            self.d_n + 2 * self.d_t,
            self.d_n + 3 * self.d_t,
            self.total(),
        ];
        (bounds[v], bounds[v + 1])
    }
}

/// Frozen inputs for one graph side: name and structural matrices plus the
/// temporal signatures the trainable encoder reads.
#[derive(Debug, Clone)]
pub struct SideViews {
    /// (|E|, d_n)
    pub name: Array2<f64>,
    /// (|E|, d_struct); zero rows for entities absent from the walk corpus
    pub structural: Array2<f64>,
    pub signatures: SignatureTable,
}

impl SideViews {
    pub fn num_entities(&self) -> usize {
        self.name.nrows()
    }
}

/// Trainable state: per-view gates and the shared Time2Vec parameters.
#[derive(Debug, Clone)]
pub struct AlignmentModel {
    pub layout: FusionLayout,
    pub gates: [f64; NUM_VIEWS],
    pub t2v: Time2VecParams,
}

impl AlignmentModel {
    pub fn new(layout: FusionLayout, k: usize, seed: u64) -> Result<AlignmentModel> {
        Ok(AlignmentModel {
            layout,
            gates: [1.0; NUM_VIEWS],
            t2v: Time2VecParams::new(k, layout.d_t, seed)?,
        })
    }

    fn check_side(&self, views: &SideViews) -> Result<()> {
        if views.name.ncols() != self.layout.d_n {
            return Err(TkgaError::Layout(format!(
                "name view dimension {} != layout d_n {}",
                views.name.ncols(),
                self.layout.d_n
            )));
        }
        if views.structural.ncols() != self.layout.d_struct {
            return Err(TkgaError::Layout(format!(
                "structural view dimension {} != layout d {}",
                views.structural.ncols(),
                self.layout.d_struct
            )));
        }
        Ok(())
    }

    /// Raw (ungated) view blocks of one entity.
    pub fn raw_blocks(&self, views: &SideViews, idx: usize) -> [Array1<f64>; NUM_VIEWS] {
        let temporal = |g: Granularity| {
            encode_entity_time(
                &views.signatures.get(g)[idx],
                self.t2v.for_granularity(g),
                self.layout.d_t,
            )
        };
        [
            views.name.row(idx).to_owned(),
            temporal(Granularity::Year),
            temporal(Granularity::Month),
            temporal(Granularity::Date),
            views.structural.row(idx).to_owned(),
        ]
    }

    /// Gated fused vector of one entity.
    pub fn fuse_entity(&self, views: &SideViews, idx: usize) -> Array1<f64> {
        self.fuse_blocks(&self.raw_blocks(views, idx))
    }

    pub fn fuse_blocks(&self, blocks: &[Array1<f64>; NUM_VIEWS]) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.layout.total());
        for (v, block) in blocks.iter().enumerate() {
            let (lo, hi) = self.layout.block(v);
            debug_assert_eq!(hi - lo, block.len());
            let mut slice = out.slice_mut(s![lo..hi]);
            slice.assign(block);
            slice *= self.gates[v];
        }
        out
    }

    /// Fused matrix `(|E|, D)` for a whole side.
    pub fn fuse_side(&self, views: &SideViews) -> Result<Array2<f64>> {
        self.check_side(views)?;
        let n = views.num_entities();
        let mut out = Array2::<f64>::zeros((n, self.layout.total()));
        for i in 0..n {
            out.row_mut(i).assign(&self.fuse_entity(views, i));
        }
        Ok(out)
    }
}

// ---- flat parameter vector (gates + Time2Vec) for the trainer and for
// finite-difference checks ----

impl AlignmentModel {
    pub fn num_params(&self) -> usize {
        let per_g = (self.t2v.k + 1) * 2 + self.layout.d_t * (self.t2v.k + 1);
        NUM_VIEWS + 3 * per_g
    }

    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.gates);
        for g in Granularity::ALL {
            let gp = self.t2v.for_granularity(g);
            out.extend(gp.omega.iter());
            out.extend(gp.phi.iter());
            out.extend(gp.proj.iter());
        }
        out
    }

    pub fn set_params_from_vec(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter().copied();
        for g in &mut self.gates {
            *g = it.next().unwrap();
        }
        for g in Granularity::ALL {
            let gp = self.t2v.for_granularity_mut(g);
            for w in gp.omega.iter_mut() {
                *w = it.next().unwrap();
            }
            for p in gp.phi.iter_mut() {
                *p = it.next().unwrap();
            }
            for w in gp.proj.iter_mut() {
                *w = it.next().unwrap();
            }
        }
    }
}
