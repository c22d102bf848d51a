//! Dataset ingestion, few-shot subsampling and the synthetic corpus generator.
//!
//! Files are JSON lines, one document per line. Spans in files are
//! end-exclusive `[start, end)`; in memory every span is inclusive. A document
//! carrying several events expands into one [`EventInstance`] per trigger.

pub mod synth;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::SpanPair;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trigger {
    pub span: SpanPair,
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Argument {
    pub span: SpanPair,
    pub role: String,
}

/// One (document, trigger) pair with its gold arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventInstance {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub sent_starts: Vec<usize>,
    pub trigger: Trigger,
    pub arguments: Vec<Argument>,
}

impl EventInstance {
    /// Sentence number of a token position.
    pub fn sentence_of(&self, pos: usize) -> usize {
        match self.sent_starts.binary_search(&pos) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Gold spans of one role in annotation order.
    pub fn role_spans(&self, role: &str) -> Vec<SpanPair> {
        self.arguments
            .iter()
            .filter(|a| a.role == role)
            .map(|a| a.span)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.tokens.len();
        let bad = |msg: String| Err(Error::ingestion(&self.doc_id, msg));
        if len == 0 {
            return bad("document has no tokens".into());
        }
        if self.sent_starts.first() != Some(&0) {
            return bad("sent_starts must begin with 0".into());
        }
        if self.sent_starts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sent_starts must be strictly increasing".into());
        }
        if self.sent_starts.iter().any(|&s| s >= len) {
            return bad("sentence start beyond the last token".into());
        }
        let t = self.trigger.span;
        if t.start > t.end || t.end >= len {
            return bad(format!("trigger span {t:?} out of bounds for {len} tokens"));
        }
        for a in &self.arguments {
            if a.span.start > a.span.end || a.span.end >= len {
                return bad(format!(
                    "argument `{}` span {:?} out of bounds for {len} tokens",
                    a.role, a.span
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DocumentRecord {
    doc_id: String,
    tokens: Vec<String>,
    #[serde(default = "default_sent_starts")]
    sent_starts: Vec<usize>,
    events: Vec<EventRecord>,
}

fn default_sent_starts() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EventRecord {
    trigger: TriggerRecord,
    #[serde(default)]
    arguments: Vec<ArgumentRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TriggerRecord {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    event_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArgumentRecord {
    start: usize,
    end: usize,
    role: String,
}

fn exclusive_to_inclusive(doc_id: &str, start: usize, end: usize, what: &str) -> Result<SpanPair> {
    if end <= start {
        return Err(Error::ingestion(
            doc_id,
            format!("{what} span [{start}, {end}) is empty or reversed"),
        ));
    }
    Ok(SpanPair::new(start, end - 1))
}

fn expand(doc: DocumentRecord) -> Result<Vec<EventInstance>> {
    let mut out = Vec::with_capacity(doc.events.len());
    for ev in doc.events {
        let trigger = Trigger {
            span: exclusive_to_inclusive(&doc.doc_id, ev.trigger.start, ev.trigger.end, "trigger")?,
            event_type: ev.trigger.event_type,
        };
        let arguments = ev
            .arguments
            .into_iter()
            .map(|a| {
                Ok(Argument {
                    span: exclusive_to_inclusive(&doc.doc_id, a.start, a.end, "argument")?,
                    role: a.role,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let inst = EventInstance {
            doc_id: doc.doc_id.clone(),
            tokens: doc.tokens.clone(),
            sent_starts: doc.sent_starts.clone(),
            trigger,
            arguments,
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

/// Parses JSONL text. `source` only labels parse errors.
pub fn parse_jsonl(text: &str, source: &Path) -> Result<Vec<EventInstance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocumentRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.extend(expand(doc)?);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<EventInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let out = parse_jsonl(&text, path)?;
    if out.is_empty() {
        log::warn!("{} contains no events", path.display());
    }
    Ok(out)
}

/// Serializes instances back into document lines. Consecutive instances of
/// the same document are merged into one line.
pub fn to_jsonl(instances: &[EventInstance]) -> String {
    let mut docs: Vec<DocumentRecord> = Vec::new();
    for inst in instances {
        let event = EventRecord {
            trigger: TriggerRecord {
                start: inst.trigger.span.start,
                end: inst.trigger.span.end + 1,
                event_type: inst.trigger.event_type.clone(),
            },
            arguments: inst
                .arguments
                .iter()
                .map(|a| ArgumentRecord {
                    start: a.span.start,
                    end: a.span.end + 1,
                    role: a.role.clone(),
                })
                .collect(),
        };
        match docs.last_mut() {
            Some(d) if d.doc_id == inst.doc_id && d.tokens == inst.tokens => d.events.push(event),
            _ => docs.push(DocumentRecord {
                doc_id: inst.doc_id.clone(),
                tokens: inst.tokens.clone(),
                sent_starts: inst.sent_starts.clone(),
                events: vec![event],
            }),
        }
    }
    let mut s = String::new();
    for d in &docs {
        s.push_str(&serde_json::to_string(d).expect("document serializes"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl(path: impl AsRef<Path>, instances: &[EventInstance]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(instances).as_bytes())?;
    Ok(())
}

/// Uniform sample without replacement of `ceil(ratio * N)` instances, kept in
/// original order. Samples for different ratios are not nested.
pub fn subsample(instances: &[EventInstance], ratio: f64, seed: u64) -> Result<Vec<EventInstance>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("data ratio {ratio} not in (0, 1]")));
    }
    if ratio == 1.0 {
        return Ok(instances.to_vec());
    }
    let n = instances.len();
    let k = ((ratio * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| instances[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"doc_id":"d1","tokens":["a","b"],"sent_starts":[0],"events":[{"trigger":{"start":0,"end":1,"type":"E"},"arguments":[{"start":1,"end":2,"role":"R"}]}]}"#;

    #[test]
    fn converts_exclusive_spans() {
        let v = parse_jsonl(LINE, Path::new("x")).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].trigger.span, SpanPair::new(0, 0));
        assert_eq!(v[0].arguments[0].span, SpanPair::new(1, 1));
        assert_eq!(v[0].arguments[0].role, "R");
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, "").unwrap();
        assert!(load_jsonl(&p).unwrap().is_empty());
    }

    #[test]
    fn multi_event_document_expands() {
        let line = r#"{"doc_id":"d","tokens":["a","b","c"],"events":[{"trigger":{"start":0,"end":1,"type":"E"},"arguments":[]},{"trigger":{"start":2,"end":3,"type":"F"},"arguments":[{"start":0,"end":2,"role":"R"}]}]}"#;
        let v = parse_jsonl(line, Path::new("x")).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].tokens, v[1].tokens);
        assert_eq!(v[1].arguments[0].span, SpanPair::new(0, 1));
        assert_eq!(parse_jsonl(&to_jsonl(&v), Path::new("x")).unwrap(), v);
    }

    #[test]
    fn reports_line_numbers_and_doc_ids() {
        let text = format!("{LINE}\n{{not json\n");
        match parse_jsonl(&text, Path::new("f.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad = LINE.replace(r#""start":1,"end":2"#, r#""start":1,"end":5"#);
        match parse_jsonl(&bad, Path::new("f.jsonl")) {
            Err(Error::Ingestion { doc_id, .. }) => assert_eq!(doc_id, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sentence_lookup() {
        let mut v = parse_jsonl(LINE, Path::new("x")).unwrap();
        v[0].sent_starts = vec![0, 1];
        assert_eq!(v[0].sentence_of(0), 0);
        assert_eq!(v[0].sentence_of(1), 1);
    }

    fn many(n: usize) -> Vec<EventInstance> {
        let base = parse_jsonl(LINE, Path::new("x")).unwrap().remove(0);
        (0..n)
            .map(|i| EventInstance {
                doc_id: format!("d{i}"),
                ..base.clone()
            })
            .collect()
    }

    #[test]
    fn subsample_ratio_and_determinism() {
        let all = many(10);
        assert_eq!(subsample(&all, 1.0, 3).unwrap(), all);
        let a = subsample(&all, 0.5, 3).unwrap();
        let b = subsample(&all, 0.5, 3).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        assert_eq!(subsample(&all, 0.25, 3).unwrap().len(), 3);
        assert!(subsample(&all, 0.0, 3).is_err());
        assert!(subsample(&all, 1.5, 3).is_err());
    }
}
