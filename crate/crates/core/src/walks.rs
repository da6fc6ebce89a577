//! Biased random-walk corpus generation over the undirected entity graph.
//!
//! Each step from `cur` (with previous node `prev`) samples the next entity
//! from the 1-hop neighbors of `cur` excluding `prev`, with unnormalized
//! weight `beta` when the candidate is at graph distance 2 from `prev` and
//! `1 - beta` when it is also adjacent to `prev` (distance 1). Weights are
//! normalized over the candidate set. The emitted relation token is drawn
//! uniformly among the quadruples linking the chosen entity pair.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TkgaError};
use crate::kg::{EntityId, RelationId, TemporalKG};

#[derive(Debug, Clone)]
pub struct WalkConfig {
    /// Explore bias in (0, 1).
    pub beta: f64,
    /// Number of entity nodes per walk (>= 2).
    pub walk_length: usize,
    pub walks_per_entity: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            beta: 0.3,
            walk_length: 20,
            walks_per_entity: 10,
            seed: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(TkgaError::Config {
                key: "walk.beta".into(),
                msg: "must be in (0, 1)".into(),
            });
        }
        if self.walk_length < 2 {
            return Err(TkgaError::Config {
                key: "walk.length".into(),
                msg: "must be >= 2".into(),
            });
        }
        Ok(())
    }
}

/// Alternating entity/relation token path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Entity(EntityId),
    Relation(RelationId),
}

impl Token {
    pub fn render(&self) -> String {
        match self {
            Token::Entity(e) => format!("E{}", e.0),
            Token::Relation(r) => format!("R{}", r.0),
        }
    }
}

/// Undirected entity adjacency with per-pair parallel relation lists.
pub struct WalkGraph {
    neighbors: Vec<Vec<EntityId>>,
    neighbor_sets: Vec<BTreeSet<EntityId>>,
    edge_rels: BTreeMap<(EntityId, EntityId), Vec<RelationId>>,
}

impl WalkGraph {
    pub fn new(kg: &TemporalKG) -> WalkGraph {
        let n = kg.num_entities();
        let mut neighbor_sets = vec![BTreeSet::new(); n];
        let mut edge_rels: BTreeMap<(EntityId, EntityId), Vec<RelationId>> = BTreeMap::new();
        for q in kg.quadruples() {
            if q.head == q.tail {
                continue;
            }
            neighbor_sets[q.head.index()].insert(q.tail);
            neighbor_sets[q.tail.index()].insert(q.head);
            let key = canon(q.head, q.tail);
            edge_rels.entry(key).or_default().push(q.rel);
        }
        let neighbors = neighbor_sets
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        WalkGraph {
            neighbors,
            neighbor_sets,
            edge_rels,
        }
    }

    pub fn neighbors(&self, e: EntityId) -> &[EntityId] {
        &self.neighbors[e.index()]
    }

    pub fn adjacent(&self, a: EntityId, b: EntityId) -> bool {
        self.neighbor_sets[a.index()].contains(&b)
    }

    fn relations_between(&self, a: EntityId, b: EntityId) -> &[RelationId] {
        self.edge_rels
            .get(&canon(a, b))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }
}

fn canon(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Candidate next entities from `cur` given `prev`, with unnormalized
/// transition weights. The first step of a walk (no `prev`) is uniform.
pub fn transition_candidates(
    graph: &WalkGraph,
    prev: Option<EntityId>,
    cur: EntityId,
    beta: f64,
) -> (Vec<EntityId>, Vec<f64>) {
    let cands: Vec<EntityId> = graph
        .neighbors(cur)
        .iter()
        .copied()
        .filter(|&c| Some(c) != prev)
        .collect();
    let weights = match prev {
        None => vec![1.0; cands.len()],
        Some(p) => cands
            .iter()
            .map(|&c| if graph.adjacent(p, c) { 1.0 - beta } else { beta })
            .collect(),
    };
    (cands, weights)
}

/// Samples one walk from `start`. Errors when `start` is isolated; ends
/// early when the candidate set empties mid-walk.
pub fn sample_walk(
    start: EntityId,
    cfg: &WalkConfig,
    graph: &WalkGraph,
    rng: &mut impl Rng,
) -> Result<Vec<Token>> {
    cfg.validate()?;
    if graph.neighbors(start).is_empty() {
        return Err(TkgaError::EmptyWalk(start.0));
    }
    let mut path = vec![Token::Entity(start)];
    let mut prev: Option<EntityId> = None;
    let mut cur = start;
    for _ in 1..cfg.walk_length {
        let (cands, weights) = transition_candidates(graph, prev, cur, cfg.beta);
        if cands.is_empty() {
            break;
        }
        let next = if cands.len() == 1 {
            cands[0]
        } else {
            let dist = WeightedIndex::new(&weights).expect("positive weights");
            cands[dist.sample(rng)]
        };
        let rels = graph.relations_between(cur, next);
        let rel = rels[rng.gen_range(0..rels.len())];
        path.push(Token::Relation(rel));
        path.push(Token::Entity(next));
        prev = Some(cur);
        cur = next;
    }
    Ok(path)
}

/// Generates `walks_per_entity` walks per non-isolated entity. Each walk
/// draws from an RNG stream derived from `(seed, entity, walk index)`, so the
/// corpus is reproducible and per-entity generation is order-independent.
pub fn build_corpus(kg: &TemporalKG, cfg: &WalkConfig) -> Result<Vec<Vec<Token>>> {
    cfg.validate()?;
    let graph = WalkGraph::new(kg);
    let mut corpus = Vec::new();
    for e in kg.entity_ids() {
        if graph.neighbors(e).is_empty() {
            continue;
        }
        for w in 0..cfg.walks_per_entity {
            let stream = (e.0 as u64) << 20 | w as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ stream.wrapping_mul(0x9E3779B97F4A7C15));
            corpus.push(sample_walk(e, cfg, &graph, &mut rng)?);
        }
    }
    Ok(corpus)
}

/// Renders the corpus as one space-separated token path per line.
pub fn dump_corpus(corpus: &[Vec<Token>]) -> String {
    let mut out = String::new();
    for path in corpus {
        let line: Vec<String> = path.iter().map(Token::render).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
