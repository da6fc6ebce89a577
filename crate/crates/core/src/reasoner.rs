//! Reasoner interface used during scale interaction and selection.
//!
//! Three implementations: a deterministic rule-based mock, a remote
//! chat-completion client with retry and strict reply validation, and a
//! transcript replayer. Edits produced by `augment` apply to working fact
//! copies only; the underlying graphs are never mutated.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TkgaError};
use crate::kg::{Quadruple, TemporalKG, TimeInterval, TimePoint};
use crate::projection::RelMap;

/// One fact of a working copy: relation label plus interval literals in the
/// `YYYY[-MM[-DD]]` / `####` grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactLine {
    pub rel: String,
    pub begin: String,
    pub end: String,
}

impl FactLine {
    pub fn from_quadruple(kg: &TemporalKG, q: &Quadruple) -> FactLine {
        FactLine {
            rel: kg.relation_label(q.rel).to_string(),
            begin: q.interval.begin.to_string(),
            end: q.interval.end.to_string(),
        }
    }

    pub fn interval(&self) -> Option<TimeInterval> {
        let b = TimePoint::parse(&self.begin).ok()?;
        let e = TimePoint::parse(&self.end).ok()?;
        TimeInterval::new(b, e).ok()
    }

    pub fn is_valid(&self) -> bool {
        self.interval().map(|iv| iv.is_some()).unwrap_or(false)
    }

    /// Known endpoint years of the fact.
    pub fn years(&self) -> Vec<i32> {
        self.interval()
            .map(|iv| iv.endpoints().filter_map(|p| p.year_value()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Candidate,
}

/// A single working-copy edit. Edits are applied in sequence; `Remove`
/// indices refer to the list state at application time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Add { side: Side, fact: FactLine },
    Remove { side: Side, index: usize },
}

/// Applies edits to the two working copies; out-of-range removals are
/// ignored with a warning.
pub fn apply_edits(source: &mut Vec<FactLine>, candidate: &mut Vec<FactLine>, edits: &[Edit]) {
    for edit in edits {
        match edit {
            Edit::Add { side, fact } => match side {
                Side::Source => source.push(fact.clone()),
                Side::Candidate => candidate.push(fact.clone()),
            },
            Edit::Remove { side, index } => {
                let list = match side {
                    Side::Source => &mut *source,
                    Side::Candidate => &mut *candidate,
                };
                if *index < list.len() {
                    list.remove(*index);
                } else {
                    eprintln!("warning: edit removes out-of-range fact index {index}, ignored");
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentRequest {
    pub source_label: String,
    pub source_facts: Vec<FactLine>,
    pub candidate_label: String,
    pub candidate_facts: Vec<FactLine>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateContext {
    pub label: String,
    pub facts: Vec<FactLine>,
    pub similarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectRequest {
    pub source_label: String,
    pub source_facts: Vec<FactLine>,
    pub candidates: Vec<CandidateContext>,
}

pub trait Reasoner {
    /// Edit list repairing the candidate's working copy against the source.
    fn augment(&mut self, req: &AugmentRequest) -> Result<Vec<Edit>>;
    /// Index of the chosen candidate, or `None` to decline.
    fn select(&mut self, req: &SelectRequest) -> Result<Option<usize>>;
}

/// Deterministic rule-based reasoner.
///
/// select: candidate maximizing the number of matched (relation-class, year)
/// pairs with the source, requiring at least one match; ties break by
/// similarity, then by candidate order.
/// augment: copy source timestamps onto timeless candidate facts of a
/// matching relation class, and drop candidate valid facts with no endpoint
/// year inside the source's [min, max] year span.
#[derive(Debug, Clone)]
pub struct MockReasoner {
    pub rel_map: RelMap,
}

impl MockReasoner {
    pub fn new(rel_map: RelMap) -> MockReasoner {
        MockReasoner { rel_map }
    }

    fn matched_pairs(&self, src: &[FactLine], cand: &[FactLine]) -> usize {
        let src_pairs: Vec<(&str, i32)> = src
            .iter()
            .flat_map(|f| f.years().into_iter().map(move |y| (f.rel.as_str(), y)))
            .collect();
        let mut matched = std::collections::BTreeSet::new();
        for f in cand {
            for y in f.years() {
                if src_pairs
                    .iter()
                    .any(|&(sr, sy)| sy == y && self.rel_map.matches(sr, &f.rel))
                {
                    matched.insert((f.rel.clone(), y));
                }
            }
        }
        matched.len()
    }
}

impl Reasoner for MockReasoner {
    fn augment(&mut self, req: &AugmentRequest) -> Result<Vec<Edit>> {
        let years: Vec<i32> = req.source_facts.iter().flat_map(|f| f.years()).collect();
        let (min_y, max_y) = match (years.iter().min(), years.iter().max()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Ok(Vec::new()), // no source timestamps: nothing to do
        };
        let mut removals: Vec<usize> = Vec::new();
        let mut adds: Vec<FactLine> = Vec::new();
        for (i, f) in req.candidate_facts.iter().enumerate() {
            if f.is_valid() {
                if !f.years().iter().any(|&y| (min_y..=max_y).contains(&y)) {
                    removals.push(i); // trim: entirely outside the span
                }
            } else {
                // supplement: first source temporal fact of a matching class
                let donor = req
                    .source_facts
                    .iter()
                    .find(|s| s.is_valid() && self.rel_map.matches(&s.rel, &f.rel));
                if let Some(d) = donor {
                    removals.push(i);
                    adds.push(FactLine {
                        rel: f.rel.clone(),
                        begin: d.begin.clone(),
                        end: d.end.clone(),
                    });
                }
            }
        }
        removals.sort_unstable();
        let mut edits: Vec<Edit> = removals
            .into_iter()
            .rev()
            .map(|index| Edit::Remove {
                side: Side::Candidate,
                index,
            })
            .collect();
        edits.extend(adds.into_iter().map(|fact| Edit::Add {
            side: Side::Candidate,
            fact,
        }));
        Ok(edits)
    }

    fn select(&mut self, req: &SelectRequest) -> Result<Option<usize>> {
        let mut best: Option<(usize, usize, f64)> = None; // (idx, matched, sim)
        for (i, c) in req.candidates.iter().enumerate() {
            let m = self.matched_pairs(&req.source_facts, &c.facts);
            if m == 0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bm, bs)) => m > bm || (m == bm && c.similarity > bs),
            };
            if better {
                best = Some((i, m, c.similarity));
            }
        }
        Ok(best.map(|(i, _, _)| i))
    }
}

/// Strict reply parsing shared by the remote client and the replayer.
/// Malformed content degrades to "none" / no edits with a warning.
pub fn parse_select_reply(content: &str, num_candidates: usize) -> Option<usize> {
    let v: serde_json::Value = match serde_json::from_str(content.trim()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("warning: unparseable select reply ({e}), treating as none");
            return None;
        }
    };
    match v.get("choice") {
        Some(serde_json::Value::String(s)) if s == "none" => None,
        Some(serde_json::Value::Number(n)) => match n.as_u64() {
            Some(i) if (i as usize) < num_candidates => Some(i as usize),
            _ => {
                eprintln!("warning: select reply index out of range, treating as none");
                None
            }
        },
        _ => {
            eprintln!("warning: select reply missing valid 'choice', treating as none");
            None
        }
    }
}

pub fn parse_augment_reply(content: &str) -> Vec<Edit> {
    #[derive(Deserialize)]
    struct Reply {
        edits: Vec<Edit>,
    }
    let reply: Reply = match serde_json::from_str(content.trim()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("warning: unparseable augment reply ({e}), applying no edits");
            return Vec::new();
        }
    };
    // added facts must carry parseable interval literals
    for edit in &reply.edits {
        if let Edit::Add { fact, .. } = edit {
            if fact.interval().is_none() {
                eprintln!(
                    "warning: augment reply contains bad interval '{} .. {}', applying no edits",
                    fact.begin, fact.end
                );
                return Vec::new();
            }
        }
    }
    reply.edits
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub token: Option<String>,
    pub model: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> RemoteConfig {
        RemoteConfig {
            url: String::new(),
            token: None,
            model: "default".into(),
            max_retries: 3,
            backoff_ms: 200,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptEntry {
    kind: String,
    request: serde_json::Value,
    response: String,
}

/// Chat-completion client; every exchange is appended to an optional
/// JSON-lines transcript for later replay.
pub struct RemoteReasoner {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    transcript: Option<Mutex<File>>,
}

const SYSTEM_PROMPT: &str = "You align entities between two temporal knowledge graphs. \
Reply with strict JSON only. For a 'select' task answer {\"choice\": <candidate index>} \
or {\"choice\": \"none\"}. For an 'augment' task answer {\"edits\": [...]} where each \
edit is {\"op\": \"add\", \"side\": \"candidate\", \"fact\": {\"rel\": ..., \"begin\": ..., \
\"end\": ...}} or {\"op\": \"remove\", \"side\": \"candidate\", \"index\": <n>}.";

impl RemoteReasoner {
    pub fn new(cfg: RemoteConfig, transcript_path: Option<&Path>) -> Result<RemoteReasoner> {
        let transcript = match transcript_path {
            Some(p) => Some(Mutex::new(
                File::create(p).map_err(|e| TkgaError::io(p.display().to_string(), e))?,
            )),
            None => None,
        };
        Ok(RemoteReasoner {
            cfg,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .map_err(|e| TkgaError::ReasonerTransport(e.to_string()))?,
            transcript,
        })
    }

    fn call(&self, kind: &str, payload: serde_json::Value) -> Result<String> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": payload.to_string()},
            ],
        });
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.cfg.backoff_ms << (attempt - 1).min(6),
                ));
            }
            let mut req = self.client.post(&self.cfg.url).json(&body);
            if let Some(t) = &self.cfg.token {
                req = req.bearer_auth(t);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let v: serde_json::Value = match resp.json() {
                        Ok(v) => v,
                        Err(e) => {
                            last_err = format!("bad response body: {e}");
                            continue;
                        }
                    };
                    let content = v["choices"][0]["message"]["content"]
                        .as_str()
                        .unwrap_or("")
                        .to_string();
                    self.log(kind, &payload, &content)?;
                    return Ok(content);
                }
                Ok(resp) => last_err = format!("status {}", resp.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(TkgaError::ReasonerTransport(format!(
            "{kind} call failed after {} attempts: {last_err}",
            self.cfg.max_retries + 1
        )))
    }

    fn log(&self, kind: &str, request: &serde_json::Value, response: &str) -> Result<()> {
        if let Some(t) = &self.transcript {
            let entry = TranscriptEntry {
                kind: kind.into(),
                request: request.clone(),
                response: response.into(),
            };
            let mut f = t.lock().expect("transcript lock");
            writeln!(f, "{}", serde_json::to_string(&entry).expect("serialize"))
                .map_err(|e| TkgaError::io("transcript", e))?;
        }
        Ok(())
    }
}

impl Reasoner for RemoteReasoner {
    fn augment(&mut self, req: &AugmentRequest) -> Result<Vec<Edit>> {
        let payload = serde_json::json!({"task": "augment", "data": req});
        let content = self.call("augment", payload)?;
        Ok(parse_augment_reply(&content))
    }

    fn select(&mut self, req: &SelectRequest) -> Result<Option<usize>> {
        let payload = serde_json::json!({"task": "select", "data": req});
        let content = self.call("select", payload)?;
        Ok(parse_select_reply(&content, req.candidates.len()))
    }
}

/// Replays a transcript in order; each call must match the logged request.
pub struct ReplayReasoner {
    entries: Vec<TranscriptEntry>,
    cursor: usize,
}

impl ReplayReasoner {
    pub fn from_file(path: impl AsRef<Path>) -> Result<ReplayReasoner> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| TkgaError::io(path.display().to_string(), e))?;
        let mut entries = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| TkgaError::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| TkgaError::State(format!("bad transcript line: {e}")))?,
            );
        }
        Ok(ReplayReasoner { entries, cursor: 0 })
    }

    fn next(&mut self, kind: &str, request: &serde_json::Value) -> Result<String> {
        let entry = self.entries.get(self.cursor).ok_or_else(|| {
            TkgaError::State("transcript exhausted before the run finished".into())
        })?;
        if entry.kind != kind || &entry.request != request {
            return Err(TkgaError::State(format!(
                "transcript mismatch at entry {}: expected a {kind} call with the same request",
                self.cursor
            )));
        }
        self.cursor += 1;
        Ok(entry.response.clone())
    }
}

impl Reasoner for ReplayReasoner {
    fn augment(&mut self, req: &AugmentRequest) -> Result<Vec<Edit>> {
        let payload = serde_json::json!({"task": "augment", "data": req});
        Ok(parse_augment_reply(&self.next("augment", &payload)?))
    }

    fn select(&mut self, req: &SelectRequest) -> Result<Option<usize>> {
        let payload = serde_json::json!({"task": "select", "data": req});
        Ok(parse_select_reply(
            &self.next("select", &payload)?,
            req.candidates.len(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fl(rel: &str, begin: &str, end: &str) -> FactLine {
        FactLine {
            rel: rel.into(),
            begin: begin.into(),
            end: end.into(),
        }
    }

    fn select_req(src: Vec<FactLine>, cands: Vec<(Vec<FactLine>, f64)>) -> SelectRequest {
        SelectRequest {
            source_label: "s".into(),
            source_facts: src,
            candidates: cands
                .into_iter()
                .enumerate()
                .map(|(i, (facts, similarity))| CandidateContext {
                    label: format!("c{i}"),
                    facts,
                    similarity,
                })
                .collect(),
        }
    }

    #[test]
    fn select_picks_max_matched_pairs() {
        let mut r = MockReasoner::new(RelMap::ExactLabel);
        let req = select_req(
            vec![fl("a", "2019", "2019"), fl("b", "2020", "2020")],
            vec![
                (vec![fl("a", "2019", "2019")], 0.9),
                (vec![fl("a", "2019", "2019"), fl("b", "2020", "2020")], 0.1),
            ],
        );
        assert_eq!(r.select(&req).unwrap(), Some(1));
    }

    #[test]
    fn select_requires_one_match_and_ties_by_similarity() {
        let mut r = MockReasoner::new(RelMap::ExactLabel);
        let none = select_req(
            vec![fl("a", "2019", "2019")],
            vec![(vec![fl("b", "2019", "2019")], 0.99)],
        );
        assert_eq!(r.select(&none).unwrap(), None);
        let tie = select_req(
            vec![fl("a", "2019", "2019")],
            vec![
                (vec![fl("a", "2019", "2019")], 0.2),
                (vec![fl("a", "2019", "2019")], 0.8),
            ],
        );
        assert_eq!(r.select(&tie).unwrap(), Some(1));
        // equal similarity: first candidate wins
        let eq = select_req(
            vec![fl("a", "2019", "2019")],
            vec![
                (vec![fl("a", "2019", "2019")], 0.5),
                (vec![fl("a", "2019", "2019")], 0.5),
            ],
        );
        assert_eq!(r.select(&eq).unwrap(), Some(0));
    }

    #[test]
    fn augment_disjoint_relations_no_edits() {
        let mut r = MockReasoner::new(RelMap::ExactLabel);
        let req = AugmentRequest {
            source_label: "s".into(),
            source_facts: vec![fl("a", "2019", "2019")],
            candidate_label: "c".into(),
            candidate_facts: vec![fl("b", "2019", "2019"), fl("b", "####", "####")],
        };
        assert!(r.augment(&req).unwrap().is_empty());
    }

    #[test]
    fn augment_supplements_and_trims() {
        let mut r = MockReasoner::new(RelMap::ExactLabel);
        let req = AugmentRequest {
            source_label: "s".into(),
            source_facts: vec![fl("a", "2019", "2020")],
            candidate_label: "c".into(),
            candidate_facts: vec![
                fl("a", "####", "####"),  // supplemented
                fl("a", "1999", "1999"),  // trimmed: outside [2019, 2020]
                fl("a", "2020", "2020"),  // kept
            ],
        };
        let edits = r.augment(&req).unwrap();
        let mut src = req.source_facts.clone();
        let mut cand = req.candidate_facts.clone();
        apply_edits(&mut src, &mut cand, &edits);
        assert_eq!(src, req.source_facts);
        assert_eq!(
            cand,
            vec![fl("a", "2020", "2020"), fl("a", "2019", "2020")]
        );
    }

    #[test]
    fn inverse_edits_cancel() {
        let mut src = vec![fl("a", "2019", "2019")];
        let mut cand = vec![fl("b", "2020", "2020")];
        let before = cand.clone();
        apply_edits(
            &mut src,
            &mut cand,
            &[
                Edit::Add {
                    side: Side::Candidate,
                    fact: fl("x", "2021", "2021"),
                },
                Edit::Remove {
                    side: Side::Candidate,
                    index: 1,
                },
            ],
        );
        assert_eq!(cand, before);
    }

    #[test]
    fn reply_parsers_are_lenient() {
        assert_eq!(parse_select_reply("{\"choice\": 2}", 5), Some(2));
        assert_eq!(parse_select_reply("{\"choice\": \"none\"}", 5), None);
        assert_eq!(parse_select_reply("{\"choice\": 9}", 5), None);
        assert_eq!(parse_select_reply("not json", 5), None);
        assert_eq!(parse_select_reply("{\"choice\": -1}", 5), None);

        assert!(parse_augment_reply("garbage").is_empty());
        let good = "{\"edits\":[{\"op\":\"remove\",\"side\":\"candidate\",\"index\":0}]}";
        assert_eq!(parse_augment_reply(good).len(), 1);
        let bad_time = "{\"edits\":[{\"op\":\"add\",\"side\":\"candidate\",\
            \"fact\":{\"rel\":\"a\",\"begin\":\"20x9\",\"end\":\"2019\"}}]}";
        assert!(parse_augment_reply(bad_time).is_empty());
    }

    #[test]
    fn mock_select_rel_map_classes() {
        let map = RelMap::parse("ra\trb\n", "test").unwrap();
        let mut r = MockReasoner::new(map);
        let req = select_req(
            vec![fl("ra", "2019", "2019")],
            vec![(vec![fl("rb", "2019", "2019")], 0.5)],
        );
        assert_eq!(r.select(&req).unwrap(), Some(0));
    }
}
