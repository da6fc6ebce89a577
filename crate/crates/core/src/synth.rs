//! Synthetic dataset generator producing aligned graph pairs with
//! controllable granularity mix, interval topology, temporal completeness,
//! density imbalance, and name noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkgaError};
use crate::kg::{parse_tkg_str, SeedAlignment, TemporalKG};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub entities: usize,
    /// relation vocabulary sizes (source, target); shared labels up to the min
    pub relations: (usize, usize),
    pub facts_per_entity: usize,
    /// proportions of year / month / date timestamps, summing to 1
    pub granularity_mix: [f64; 3],
    /// proportions of disjoint / overlap / containment / identity interval
    /// topologies per aligned pair, summing to 1
    pub topology_mix: [f64; 4],
    /// fraction of facts keeping their timestamps (source, target)
    pub completeness: (f64, f64),
    /// source-side fact multiplicity scale, >= 1
    pub density_factor: f64,
    /// probability of corrupting a target entity label
    pub name_noise: f64,
    pub year_range: (i32, i32),
    pub train_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Isomorphic clone pair: any correct pipeline should align it fully.
    pub fn easy(entities: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            entities,
            relations: (6, 6),
            facts_per_entity: 4,
            granularity_mix: [1.0, 0.0, 0.0],
            topology_mix: [0.0, 0.0, 0.0, 1.0],
            completeness: (1.0, 1.0),
            density_factor: 1.0,
            name_noise: 0.0,
            year_range: (2000, 2020),
            train_fraction: 0.3,
            seed,
        }
    }

    /// Heterogeneous pair: mixed granularities, sparse target timestamps,
    /// dense source, mostly disjoint intervals, noisy target names.
    pub fn wild(entities: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            entities,
            relations: (12, 12),
            facts_per_entity: 4,
            granularity_mix: [0.5, 0.3, 0.2],
            topology_mix: [0.6, 0.2, 0.1, 0.1],
            completeness: (1.0, 0.3),
            density_factor: 5.0,
            name_noise: 0.6,
            year_range: (2000, 2020),
            train_fraction: 0.3,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let gen_err = |msg: &str| TkgaError::Generation(msg.to_string());
        if self.entities < 2 {
            return Err(gen_err("need at least 2 entities"));
        }
        if self.relations.0 == 0 || self.relations.1 == 0 || self.facts_per_entity == 0 {
            return Err(gen_err("relation vocabulary and facts per entity must be positive"));
        }
        let sum_ok = |xs: &[f64]| {
            xs.iter().all(|&x| (0.0..=1.0).contains(&x)) && (xs.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if !sum_ok(&self.granularity_mix) {
            return Err(gen_err("granularity mix must be proportions summing to 1"));
        }
        if !sum_ok(&self.topology_mix) {
            return Err(gen_err("topology mix must be proportions summing to 1"));
        }
        for c in [self.completeness.0, self.completeness.1] {
            if !(0.0..=1.0).contains(&c) {
                return Err(gen_err("completeness must lie in [0, 1]"));
            }
        }
        if self.density_factor < 1.0 {
            return Err(gen_err("density factor must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.name_noise) {
            return Err(gen_err("name noise must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(gen_err("train fraction must lie in [0, 1]"));
        }
        let span = (self.year_range.1 - self.year_range.0).max(0);
        if self.topology_mix[1] > 0.0 && span < 1 {
            return Err(gen_err(
                "overlap topology requires non-point intervals: widen the year range",
            ));
        }
        if self.topology_mix[2] > 0.0 && span < 2 {
            return Err(gen_err(
                "containment topology requires intervals of length >= 2: widen the year range",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub source: TemporalKG,
    pub target: TemporalKG,
    pub seeds: SeedAlignment,
    /// per ground-truth pair, e.g. "multi-to-one"
    pub pair_scenarios: Vec<String>,
    pub scenario_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Copy)]
struct BaseFact {
    head: usize,
    rel: usize,
    tail: usize,
    y1: i32,
    y2: i32,
}

fn render_time(rng: &mut ChaCha8Rng, mix: &[f64; 3], year: i32) -> String {
    let g = WeightedIndex::new(mix).expect("validated mix").sample(rng);
    match g {
        0 => format!("{year:04}"),
        1 => format!("{year:04}-{:02}", rng.gen_range(1..=12)),
        _ => format!(
            "{year:04}-{:02}-{:02}",
            rng.gen_range(1..=12),
            rng.gen_range(1..=28)
        ),
    }
}

/// Renders both endpoints, swapping when month/day refinement of a shared
/// year would invert the interval.
fn render_interval(rng: &mut ChaCha8Rng, mix: &[f64; 3], y1: i32, y2: i32) -> (String, String) {
    use crate::kg::{TimeInterval, TimePoint};
    let b = render_time(rng, mix, y1);
    let e = render_time(rng, mix, y2);
    let pb = TimePoint::parse(&b).expect("generated literal");
    let pe = TimePoint::parse(&e).expect("generated literal");
    if TimeInterval::new(pb, pe).is_ok() {
        (b, e)
    } else {
        (e, b)
    }
}

fn push_fact(
    out: &mut String,
    head: &str,
    rel: &str,
    tail: &str,
    times: Option<(String, String)>,
) {
    match times {
        Some((b, e)) => {
            let _ = writeln!(out, "{head}\t{rel}\t{tail}\t{b}\t{e}");
        }
        None => {
            let _ = writeln!(out, "{head}\t{rel}\t{tail}\t####\t####");
        }
    }
}

fn count_class(n: usize) -> &'static str {
    match n {
        0 => "none",
        1 => "one",
        _ => "multi",
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.entities;
    let span = (cfg.year_range.1 - cfg.year_range.0).max(0);
    let base_len = span.min(2);

    // ground-truth fact skeleton shared by both sides
    let mut base: Vec<BaseFact> = Vec::with_capacity(n * cfg.facts_per_entity);
    for head in 0..n {
        for _ in 0..cfg.facts_per_entity {
            let tail = (head + rng.gen_range(1..n)) % n;
            let y1 = rng.gen_range(cfg.year_range.0..=cfg.year_range.1 - base_len);
            base.push(BaseFact {
                head,
                rel: rng.gen_range(0..cfg.relations.0),
                tail,
                y1,
                y2: y1 + base_len,
            });
        }
    }

    // per-pair interval topology: 0 disjoint, 1 overlap, 2 containment, 3 identity
    let topo_dist = WeightedIndex::new(cfg.topology_mix).expect("validated mix");
    let topologies: Vec<usize> = (0..n).map(|_| topo_dist.sample(&mut rng)).collect();

    // target labels, corrupted with probability name_noise but kept unique
    let src_labels: Vec<String> = (0..n).map(|i| format!("ent{i}")).collect();
    let tgt_labels: Vec<String> = (0..n)
        .map(|i| {
            if rng.gen_bool(cfg.name_noise) {
                format!("nd{:x}q{i}", rng.gen::<u32>())
            } else {
                src_labels[i].clone()
            }
        })
        .collect();

    let src_rel = |r: usize| format!("rel{r}");
    let tgt_rel = |r: usize| format!("rel{}", r % cfg.relations.1);

    let mut src_text = String::new();
    let mut tgt_text = String::new();
    let extra_copies = |rng: &mut ChaCha8Rng, factor: f64| -> usize {
        let whole = factor.floor() as usize - 1;
        whole + usize::from(rng.gen_bool(factor.fract()))
    };

    for f in &base {
        // source side: base fact plus density-scaled extra copies
        let keep_src = rng.gen_bool(cfg.completeness.0);
        let times =
            keep_src.then(|| render_interval(&mut rng, &cfg.granularity_mix, f.y1, f.y2));
        push_fact(
            &mut src_text,
            &src_labels[f.head],
            &src_rel(f.rel),
            &src_labels[f.tail],
            times,
        );
        for _ in 0..extra_copies(&mut rng, cfg.density_factor) {
            let y = rng.gen_range(f.y1..=f.y2);
            let times = rng.gen_bool(cfg.completeness.0).then(|| {
                let t = render_time(&mut rng, &cfg.granularity_mix, y);
                (t.clone(), t)
            });
            push_fact(
                &mut src_text,
                &src_labels[f.head],
                &src_rel(f.rel),
                &src_labels[f.tail],
                times,
            );
        }

        // target side: same skeleton, interval re-shaped per the head
        // entity's pair topology
        let (ty1, ty2) = match topologies[f.head] {
            0 => (f.y2 + 2, f.y2 + 2 + base_len), // disjoint
            1 => (f.y1 + 1, f.y2 + 1),            // overlap
            2 => (f.y1 + 1, f.y2 - 1),            // containment
            _ => (f.y1, f.y2),                    // identity
        };
        let times = rng
            .gen_bool(cfg.completeness.1)
            .then(|| render_interval(&mut rng, &cfg.granularity_mix, ty1, ty2));
        push_fact(
            &mut tgt_text,
            &tgt_labels[f.head],
            &tgt_rel(f.rel),
            &tgt_labels[f.tail],
            times,
        );
    }

    let source = parse_tkg_str(&src_text, "synthetic-source")?;
    let target = parse_tkg_str(&tgt_text, "synthetic-target")?;

    let mut pairs = Vec::with_capacity(n);
    let mut pair_scenarios = Vec::with_capacity(n);
    let mut scenario_counts = BTreeMap::new();
    for i in 0..n {
        let s = source
            .entity_by_label(&src_labels[i])
            .ok_or_else(|| TkgaError::Generation(format!("source entity ent{i} vanished")))?;
        let t = target
            .entity_by_label(&tgt_labels[i])
            .ok_or_else(|| TkgaError::Generation(format!("target entity ent{i} vanished")))?;
        pairs.push((s, t));
        let sv = source
            .incident(s)
            .iter()
            .filter(|&&qi| source.quadruple(qi).is_valid())
            .count();
        let tv = target
            .incident(t)
            .iter()
            .filter(|&&qi| target.quadruple(qi).is_valid())
            .count();
        let label = format!("{}-to-{}", count_class(sv), count_class(tv));
        *scenario_counts.entry(label.clone()).or_insert(0) += 1;
        pair_scenarios.push(label);
    }
    let seeds = SeedAlignment::split_by_fraction(pairs, cfg.train_fraction, cfg.seed ^ 0x5eed)?;

    Ok(SynthOutput {
        source,
        target,
        seeds,
        pair_scenarios,
        scenario_counts,
    })
}
