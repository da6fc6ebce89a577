//! Temporal knowledge graph domain types, file parsing, and per-entity
//! temporal signatures.
//!
//! A graph is a set of quadruples `(head, rel, tail, [begin, end])` over
//! interned entity and relation labels. Time literals come in three
//! granularities (`YYYY`, `YYYY-MM`, `YYYY-MM-DD`) plus the `####` unknown
//! sentinel. A quadruple whose interval has both endpoints unknown carries no
//! time and is not a *valid* (temporal) fact.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Result, TkgaError};

/// Dense handle for an entity within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

/// Dense handle for a relation within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Resolution of a time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Year,
    Month,
    Date,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Year, Granularity::Month, Granularity::Date];
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Year => write!(f, "year"),
            Granularity::Month => write!(f, "month"),
            Granularity::Date => write!(f, "date"),
        }
    }
}

/// A time point at year, month, or date resolution, or wholly unknown.
///
/// Invariants: `day` present implies `month` present; unknown means all
/// fields absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimePoint {
    year: Option<i32>,
    month: Option<u8>,
    day: Option<u8>,
}

impl TimePoint {
    pub const UNKNOWN: TimePoint = TimePoint {
        year: None,
        month: None,
        day: None,
    };

    pub fn year(y: i32) -> TimePoint {
        TimePoint {
            year: Some(y),
            month: None,
            day: None,
        }
    }

    pub fn month(y: i32, m: u8) -> TimePoint {
        assert!((1..=12).contains(&m), "month out of range");
        TimePoint {
            year: Some(y),
            month: Some(m),
            day: None,
        }
    }

    pub fn date(y: i32, m: u8, d: u8) -> TimePoint {
        assert!((1..=12).contains(&m), "month out of range");
        assert!((1..=31).contains(&d), "day out of range");
        TimePoint {
            year: Some(y),
            month: Some(m),
            day: Some(d),
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.year.is_none()
    }

    pub fn year_value(&self) -> Option<i32> {
        self.year
    }

    pub fn month_value(&self) -> Option<u8> {
        self.month
    }

    pub fn day_value(&self) -> Option<u8> {
        self.day
    }

    /// Resolution of this point, or `None` when unknown.
    pub fn granularity(&self) -> Option<Granularity> {
        match (self.year, self.month, self.day) {
            (None, _, _) => None,
            (Some(_), None, _) => Some(Granularity::Year),
            (Some(_), Some(_), None) => Some(Granularity::Month),
            (Some(_), Some(_), Some(_)) => Some(Granularity::Date),
        }
    }

    /// Parses `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, or `####`.
    pub fn parse(s: &str) -> std::result::Result<TimePoint, String> {
        if s == "####" {
            return Ok(TimePoint::UNKNOWN);
        }
        let mut parts = s.splitn(3, '-');
        // A leading '-' would make the first split field empty; negative years
        // are out of scope for the supported corpora.
        let y = parts
            .next()
            .filter(|p| !p.is_empty())
            .and_then(|p| p.parse::<i32>().ok())
            .ok_or_else(|| format!("bad time literal '{s}'"))?;
        let m = match parts.next() {
            None => return Ok(TimePoint::year(y)),
            Some(p) => p
                .parse::<u8>()
                .ok()
                .filter(|m| (1..=12).contains(m))
                .ok_or_else(|| format!("bad month in '{s}'"))?,
        };
        match parts.next() {
            None => Ok(TimePoint::month(y, m)),
            Some(p) => {
                let d = p
                    .parse::<u8>()
                    .ok()
                    .filter(|d| (1..=31).contains(d))
                    .ok_or_else(|| format!("bad day in '{s}'"))?;
                Ok(TimePoint::date(y, m, d))
            }
        }
    }

    /// True when the two points agree at the coarser of their two
    /// resolutions. Unknown never matches anything.
    pub fn matches_at_coarsest(&self, other: &TimePoint) -> bool {
        let (g1, g2) = match (self.granularity(), other.granularity()) {
            (Some(a), Some(b)) => (a, b),
            _ => return false,
        };
        let g = g1.min(g2);
        match g {
            Granularity::Year => self.year == other.year,
            Granularity::Month => self.year == other.year && self.month == other.month,
            Granularity::Date => {
                self.year == other.year && self.month == other.month && self.day == other.day
            }
        }
    }

    /// Key for ordering known points; unknown points sort last.
    pub fn sort_key(&self) -> (i32, u8, u8) {
        match self.year {
            None => (i32::MAX, 0, 0),
            Some(y) => (y, self.month.unwrap_or(0), self.day.unwrap_or(0)),
        }
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.year, self.month, self.day) {
            (None, _, _) => write!(f, "####"),
            (Some(y), None, _) => write!(f, "{y:04}"),
            (Some(y), Some(m), None) => write!(f, "{y:04}-{m:02}"),
            (Some(y), Some(m), Some(d)) => write!(f, "{y:04}-{m:02}-{d:02}"),
        }
    }
}

/// `[begin, end]` interval; both endpoints unknown means "no time".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeInterval {
    pub begin: TimePoint,
    pub end: TimePoint,
}

impl TimeInterval {
    pub const NONE: TimeInterval = TimeInterval {
        begin: TimePoint::UNKNOWN,
        end: TimePoint::UNKNOWN,
    };

    pub fn new(begin: TimePoint, end: TimePoint) -> std::result::Result<TimeInterval, String> {
        let iv = TimeInterval { begin, end };
        if let (Some(gb), Some(ge)) = (begin.granularity(), end.granularity()) {
            let g = gb.min(ge);
            let kb = truncate_key(&begin, g);
            let ke = truncate_key(&end, g);
            if kb > ke {
                return Err(format!("interval begin {begin} after end {end}"));
            }
        }
        Ok(iv)
    }

    /// True when at least one endpoint carries a timestamp.
    pub fn is_some(&self) -> bool {
        !(self.begin.is_unknown() && self.end.is_unknown())
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &TimePoint> {
        [&self.begin, &self.end]
            .into_iter()
            .filter(|p| !p.is_unknown())
    }
}

fn truncate_key(p: &TimePoint, g: Granularity) -> (i32, u8, u8) {
    let y = p.year_value().unwrap_or(0);
    match g {
        Granularity::Year => (y, 0, 0),
        Granularity::Month => (y, p.month_value().unwrap_or(0), 0),
        Granularity::Date => (y, p.month_value().unwrap_or(0), p.day_value().unwrap_or(0)),
    }
}

/// One fact: `(head, rel, tail, interval)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadruple {
    pub head: EntityId,
    pub rel: RelationId,
    pub tail: EntityId,
    pub interval: TimeInterval,
}

impl Quadruple {
    /// A quadruple is *valid* (a temporal fact) iff its interval is not none.
    pub fn is_valid(&self) -> bool {
        self.interval.is_some()
    }
}

/// Bijective label <-> dense-handle table.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    labels: Vec<String>,
    by_label: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.by_label.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.by_label.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.by_label.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Global year span of a graph; finer spans derive from it (months run
/// Jan..Dec of the covered years, dates run the full civil calendar).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSpan {
    pub min_year: i32,
    pub max_year: i32,
}

impl TimeSpan {
    /// Number of points at granularity `g` inside the span.
    pub fn len(&self, g: Granularity) -> usize {
        let years = (self.max_year - self.min_year + 1) as usize;
        match g {
            Granularity::Year => years,
            Granularity::Month => years * 12,
            Granularity::Date => {
                let first = NaiveDate::from_ymd_opt(self.min_year, 1, 1).unwrap();
                let last = NaiveDate::from_ymd_opt(self.max_year, 12, 31).unwrap();
                (last - first).num_days() as usize + 1
            }
        }
    }
}

/// Immutable, fully indexed temporal knowledge graph.
#[derive(Debug, Clone)]
pub struct TemporalKG {
    entities: Interner,
    relations: Interner,
    quadruples: Vec<Quadruple>,
    /// entity index -> indices into `quadruples` where it is head or tail
    adjacency: Vec<Vec<usize>>,
    span: Option<TimeSpan>,
}

impl TemporalKG {
    pub fn from_parts(
        entities: Interner,
        relations: Interner,
        quadruples: Vec<Quadruple>,
    ) -> Result<TemporalKG> {
        let n = entities.len();
        for q in &quadruples {
            if q.head.index() >= n || q.tail.index() >= n || q.rel.index() >= relations.len() {
                return Err(TkgaError::Integrity(
                    "quadruple references out-of-range handle".into(),
                ));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (i, q) in quadruples.iter().enumerate() {
            adjacency[q.head.index()].push(i);
            if q.tail != q.head {
                adjacency[q.tail.index()].push(i);
            }
        }
        let mut min_year = i32::MAX;
        let mut max_year = i32::MIN;
        for q in &quadruples {
            for p in q.interval.endpoints() {
                let y = p.year_value().unwrap();
                min_year = min_year.min(y);
                max_year = max_year.max(y);
            }
        }
        let span = (min_year <= max_year).then_some(TimeSpan { min_year, max_year });
        Ok(TemporalKG {
            entities,
            relations,
            quadruples,
            adjacency,
            span,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }

    pub fn entity_by_label(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn entity_labels(&self) -> &[String] {
        self.entities.labels()
    }

    pub fn relation_labels(&self) -> &[String] {
        self.relations.labels()
    }

    pub fn quadruples(&self) -> &[Quadruple] {
        &self.quadruples
    }

    pub fn quadruple(&self, idx: usize) -> &Quadruple {
        &self.quadruples[idx]
    }

    /// Indices of quadruples incident to `e` (head or tail role).
    pub fn incident(&self, e: EntityId) -> &[usize] {
        &self.adjacency[e.index()]
    }

    pub fn span(&self) -> Option<TimeSpan> {
        self.span
    }

    /// Set of timestamps `T(e)`: every known endpoint of e's incident facts.
    pub fn entity_timestamps(&self, e: EntityId) -> Vec<TimePoint> {
        let mut set: Vec<TimePoint> = Vec::new();
        for &qi in self.incident(e) {
            for p in self.quadruples[qi].interval.endpoints() {
                if !set.contains(p) {
                    set.push(*p);
                }
            }
        }
        set
    }

    /// Set of relation handles `R(e)` over e's incident facts.
    pub fn entity_relations(&self, e: EntityId) -> BTreeSet<RelationId> {
        self.incident(e)
            .iter()
            .map(|&qi| self.quadruples[qi].rel)
            .collect()
    }

    /// Ordinal of a time point inside the span at granularity `g`, or `None`
    /// when the point is unknown, coarser than `g`, or there is no span.
    pub fn decompose_timepoint(&self, t: &TimePoint, g: Granularity) -> Option<usize> {
        let span = self.span?;
        let pg = t.granularity()?;
        if pg < g {
            return None;
        }
        let y = t.year_value().unwrap();
        if y < span.min_year || y > span.max_year {
            return None;
        }
        match g {
            Granularity::Year => Some((y - span.min_year) as usize),
            Granularity::Month => {
                let m = t.month_value().unwrap() as i32;
                Some(((y - span.min_year) * 12 + (m - 1)) as usize)
            }
            Granularity::Date => {
                let d = NaiveDate::from_ymd_opt(y, t.month_value().unwrap() as u32, t.day_value().unwrap() as u32)?;
                let first = NaiveDate::from_ymd_opt(span.min_year, 1, 1).unwrap();
                Some((d - first).num_days() as usize)
            }
        }
    }

    /// Binary activity vector of `e` over the span's points at `g`.
    pub fn temporal_signature(&self, e: EntityId, g: Granularity) -> TemporalSignature {
        let len = self.span.map(|s| s.len(g)).unwrap_or(0);
        let mut active = BTreeSet::new();
        for &qi in self.incident(e) {
            for p in self.quadruples[qi].interval.endpoints() {
                if let Some(i) = self.decompose_timepoint(p, g) {
                    active.insert(i as u32);
                }
            }
        }
        TemporalSignature { len, active }
    }

    /// Incident facts sorted valid-first, then begin ascending, then by
    /// relation label, truncated to `max_facts`.
    pub fn entity_context(&self, e: EntityId, max_facts: usize) -> Vec<Quadruple> {
        let mut facts: Vec<Quadruple> = self
            .incident(e)
            .iter()
            .map(|&qi| self.quadruples[qi])
            .collect();
        facts.sort_by(|a, b| {
            b.is_valid()
                .cmp(&a.is_valid())
                .then(a.interval.begin.sort_key().cmp(&b.interval.begin.sort_key()))
                .then_with(|| self.relation_label(a.rel).cmp(self.relation_label(b.rel)))
        });
        facts.truncate(max_facts);
        facts
    }

    /// Canonical one-line rendering of a quadruple, matching the file format.
    pub fn format_quadruple(&self, q: &Quadruple) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.entity_label(q.head),
            self.relation_label(q.rel),
            self.entity_label(q.tail),
            q.interval.begin,
            q.interval.end
        )
    }

    /// Serializes the graph back to the quadruple file format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for q in &self.quadruples {
            out.push_str(&self.format_quadruple(q));
            out.push('\n');
        }
        out
    }
}

/// Sparse binary vector over the ordered time points of one granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSignature {
    len: usize,
    active: BTreeSet<u32>,
}

impl TemporalSignature {
    pub fn empty(len: usize) -> TemporalSignature {
        TemporalSignature {
            len,
            active: BTreeSet::new(),
        }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = u32>) -> TemporalSignature {
        TemporalSignature {
            len,
            active: indices.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.active.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.active.contains(&(i as u32))
    }

    pub fn active_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.active.iter().copied()
    }
}

/// Seed alignment pairs with a train/test flag per pair.
#[derive(Debug, Clone, Default)]
pub struct SeedAlignment {
    pub pairs: Vec<(EntityId, EntityId)>,
    /// true = train split
    pub train_flags: Vec<bool>,
}

impl SeedAlignment {
    pub fn new(pairs: Vec<(EntityId, EntityId)>, train_flags: Vec<bool>) -> Result<SeedAlignment> {
        assert_eq!(pairs.len(), train_flags.len());
        let a = SeedAlignment { pairs, train_flags };
        a.check_train_unique()?;
        Ok(a)
    }

    fn check_train_unique(&self) -> Result<()> {
        let mut srcs = BTreeSet::new();
        let mut tgts = BTreeSet::new();
        for (pair, &train) in self.pairs.iter().zip(&self.train_flags) {
            if train && (!srcs.insert(pair.0) || !tgts.insert(pair.1)) {
                return Err(TkgaError::Integrity(format!(
                    "duplicate entity in train split: ({}, {})",
                    pair.0 .0, pair.1 .0
                )));
            }
        }
        Ok(())
    }

    pub fn train_pairs(&self) -> Vec<(EntityId, EntityId)> {
        self.pairs
            .iter()
            .zip(&self.train_flags)
            .filter(|(_, &t)| t)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn test_pairs(&self) -> Vec<(EntityId, EntityId)> {
        self.pairs
            .iter()
            .zip(&self.train_flags)
            .filter(|(_, &t)| !t)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Deterministically marks the first `ceil(frac * n)` pairs of a seeded
    /// shuffle as train.
    pub fn split_by_fraction(pairs: Vec<(EntityId, EntityId)>, frac: f64, seed: u64) -> Result<SeedAlignment> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let n_train = ((pairs.len() as f64) * frac).ceil() as usize;
        let mut flags = vec![false; pairs.len()];
        for &i in order.iter().take(n_train) {
            flags[i] = true;
        }
        SeedAlignment::new(pairs, flags)
    }
}

/// Parses a UTF-8 quadruple file: `head\trel\ttail\tbegin\tend` per line,
/// `#`-prefixed comment lines and blank lines skipped.
pub fn parse_tkg_file(path: impl AsRef<Path>) -> Result<TemporalKG> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
    parse_tkg_str(&text, &path.display().to_string())
}

pub fn parse_tkg_str(text: &str, origin: &str) -> Result<TemporalKG> {
    let mut entities = Interner::default();
    let mut relations = Interner::default();
    let mut quadruples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(TkgaError::parse(
                origin,
                lineno + 1,
                format!("expected 5 tab-separated fields, got {}", fields.len()),
            ));
        }
        let begin = TimePoint::parse(fields[3])
            .map_err(|m| TkgaError::parse(origin, lineno + 1, m))?;
        let end = TimePoint::parse(fields[4])
            .map_err(|m| TkgaError::parse(origin, lineno + 1, m))?;
        let interval =
            TimeInterval::new(begin, end).map_err(|m| TkgaError::parse(origin, lineno + 1, m))?;
        quadruples.push(Quadruple {
            head: EntityId(entities.intern(fields[0])),
            rel: RelationId(relations.intern(fields[1])),
            tail: EntityId(entities.intern(fields[2])),
            interval,
        });
    }
    TemporalKG::from_parts(entities, relations, quadruples)
}

/// Parses a seed file: `src\ttgt` per line, same comment/blank rules.
/// All pairs are flagged as train; use [`SeedAlignment::split_by_fraction`]
/// or merge two files for an explicit split.
pub fn parse_seed_file(
    path: impl AsRef<Path>,
    source: &TemporalKG,
    target: &TemporalKG,
) -> Result<Vec<(EntityId, EntityId)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
    parse_seed_str(&text, &path.display().to_string(), source, target)
}

pub fn parse_seed_str(
    text: &str,
    origin: &str,
    source: &TemporalKG,
    target: &TemporalKG,
) -> Result<Vec<(EntityId, EntityId)>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (s, t) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(t), None) => (s, t),
            _ => {
                return Err(TkgaError::parse(
                    origin,
                    lineno + 1,
                    "expected 2 tab-separated labels",
                ))
            }
        };
        let s_id = source.entity_by_label(s).ok_or_else(|| TkgaError::Resolution {
            label: s.to_string(),
            side: "source".into(),
        })?;
        let t_id = target.entity_by_label(t).ok_or_else(|| TkgaError::Resolution {
            label: t.to_string(),
            side: "target".into(),
        })?;
        pairs.push((s_id, t_id));
    }
    Ok(pairs)
}
