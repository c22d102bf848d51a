//! Word-level vocabulary, trigger markers and context windowing.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::span::SpanPair;

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const TRIGGER_OPEN: TokenId = 3;
pub const TRIGGER_CLOSE: TokenId = 4;

pub const RESERVED: [&str; 5] = ["<s>", "</s>", "<unk>", "<t>", "</t>"];

/// Token/id bijection. Ids `0..5` are reserved, corpus words follow, then
/// prompt words, then soft-prompt pseudo tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    /// First id that is a soft-prompt pseudo token.
    pseudo_from: usize,
}

impl Default for Vocab {
    fn default() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab {
            tokens,
            index,
            pseudo_from: usize::MAX,
        }
    }
}

fn normalize(word: &str) -> String {
    word.to_lowercase()
}

impl Vocab {
    /// Lowercased word types with frequency `>= min_count`, ordered by
    /// frequency descending then lexicographically.
    pub fn build<'a, I>(words: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for w in words {
            total += 1;
            *freq.entry(normalize(w)).or_default() += 1;
        }
        if total == 0 {
            return Err(Error::Config(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut types: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(w, n)| *n >= min_count.max(1) && !RESERVED.contains(&w.as_str()))
            .collect();
        types.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocab::default();
        for (w, _) in types {
            vocab.push(w);
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    /// Adds words that must never fall back to UNK (template words, role
    /// names). Must be called before any pseudo token is registered.
    pub fn extend_words<'a, I>(&mut self, words: I)
    where
        I: IntoIterator<Item = &'a str>,
    {
        assert!(
            self.pseudo_from == usize::MAX,
            "words added after pseudo tokens"
        );
        for w in words {
            let w = normalize(w);
            if !self.index.contains_key(&w) {
                self.push(w);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id of a text word. Reserved and pseudo tokens are never matched.
    pub fn word_id(&self, word: &str) -> TokenId {
        match self.index.get(&normalize(word)) {
            Some(&id) if (id as usize) >= RESERVED.len() && (id as usize) < self.pseudo_from => id,
            _ => UNK,
        }
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        words.iter().map(|w| self.word_id(w.as_ref())).collect()
    }

    pub fn pseudo_names(role: &str) -> (String, String) {
        (format!("<{role}_left0>"), format!("<{role}_right0>"))
    }

    /// Left/right pseudo-token ids for a role, registering them on first use.
    pub fn register_pseudo(&mut self, role: &str) -> (TokenId, TokenId) {
        let (l, r) = Self::pseudo_names(role);
        if let (Some(&a), Some(&b)) = (self.index.get(&l), self.index.get(&r)) {
            return (a, b);
        }
        if self.pseudo_from == usize::MAX {
            self.pseudo_from = self.tokens.len();
        }
        (self.push(l), self.push(r))
    }

    pub fn pseudo_ids(&self, role: &str) -> Option<(TokenId, TokenId)> {
        let (l, r) = Self::pseudo_names(role);
        Some((*self.index.get(&l)?, *self.index.get(&r)?))
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::Config(
                "vocabulary file lacks the reserved header".into(),
            ));
        }
        let mut vocab = Vocab::default();
        for line in &lines[RESERVED.len()..] {
            if vocab.index.contains_key(*line) {
                return Err(Error::Config(format!(
                    "duplicate vocabulary entry `{line}`"
                )));
            }
            let is_pseudo = line.starts_with('<') && line.ends_with("0>");
            if is_pseudo && vocab.pseudo_from == usize::MAX {
                vocab.pseudo_from = vocab.tokens.len();
            }
            vocab.push(line.to_string());
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Context with `<t>`/`</t>` around the trigger and BOS in front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedContext {
    pub ids: Vec<TokenId>,
    /// Inclusive range from `<t>` to `</t>`.
    pub trigger_range: SpanPair,
    /// Original word index of every position; `None` for BOS and markers.
    pub origin: Vec<Option<usize>>,
    pub sentence_index: Vec<usize>,
    /// Gold spans in marked coordinates, tagged with their role.
    pub gold: Vec<(String, SpanPair)>,
    /// Gold spans lost to marker crossing or windowing.
    pub dropped_gold: usize,
}

impl MarkedContext {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions a predicted span may never cover: BOS and both markers.
    pub fn blocked(&self) -> Vec<bool> {
        self.origin.iter().map(Option::is_none).collect()
    }

    /// Maps a marked span back to original word coordinates.
    pub fn to_original(&self, span: SpanPair) -> Option<SpanPair> {
        let s = (*self.origin.get(span.start)?)?;
        let e = (*self.origin.get(span.end)?)?;
        if (span.start..=span.end).any(|p| self.origin[p].is_none()) {
            return None;
        }
        Some(SpanPair::new(s, e))
    }

    pub fn gold_for(&self, role: &str) -> Vec<SpanPair> {
        self.gold
            .iter()
            .filter(|(r, _)| r == role)
            .map(|&(_, s)| s)
            .collect()
    }
}

/// Marked-coordinate position of an original word index.
pub fn shift_position(pos: usize, trigger: SpanPair) -> usize {
    let mut p = pos + 1;
    if pos >= trigger.start {
        p += 1;
    }
    if pos > trigger.end {
        p += 1;
    }
    p
}

/// Inserts the trigger markers and BOS. Gold spans that straddle a marker
/// cannot be expressed and are dropped.
pub fn mark_trigger(
    ids: &[TokenId],
    trigger: SpanPair,
    gold: &[(String, SpanPair)],
    sent_of: impl Fn(usize) -> usize,
) -> Result<MarkedContext> {
    let n = ids.len();
    if trigger.start > trigger.end || trigger.end >= n {
        return Err(Error::TriggerOutOfBounds {
            start: trigger.start,
            end: trigger.end,
            len: n,
        });
    }
    let mut out = Vec::with_capacity(n + 3);
    let mut origin = Vec::with_capacity(n + 3);
    let mut sentence_index = Vec::with_capacity(n + 3);
    out.push(BOS);
    origin.push(None);
    sentence_index.push(0);
    for (i, &id) in ids.iter().enumerate() {
        if i == trigger.start {
            out.push(TRIGGER_OPEN);
            origin.push(None);
            sentence_index.push(sent_of(i));
        }
        out.push(id);
        origin.push(Some(i));
        sentence_index.push(sent_of(i));
        if i == trigger.end {
            out.push(TRIGGER_CLOSE);
            origin.push(None);
            sentence_index.push(sent_of(i));
        }
    }
    let mut kept = Vec::with_capacity(gold.len());
    let mut dropped = 0;
    for (role, span) in gold {
        let crosses = (span.start < trigger.start && span.end >= trigger.start)
            || (span.start <= trigger.end && span.end > trigger.end);
        if crosses || span.end >= n {
            dropped += 1;
            continue;
        }
        kept.push((
            role.clone(),
            SpanPair::new(
                shift_position(span.start, trigger),
                shift_position(span.end, trigger),
            ),
        ));
    }
    Ok(MarkedContext {
        ids: out,
        trigger_range: SpanPair::new(trigger.start + 1, trigger.end + 3),
        origin,
        sentence_index,
        gold: kept,
        dropped_gold: dropped,
    })
}

/// Cuts a context longer than `max_len` down to a window around the trigger,
/// keeping BOS at position 0.
pub fn window_context(marked: &MarkedContext, max_len: usize) -> Result<MarkedContext> {
    let seg = marked.trigger_range.len();
    if max_len < seg + 2 {
        return Err(Error::WindowTooSmall {
            max_len,
            needed: seg + 2,
        });
    }
    let len = marked.len();
    if len <= max_len {
        return Ok(marked.clone());
    }
    let width = max_len - 1;
    let left_room = (width - seg) / 2;
    let start = marked
        .trigger_range
        .start
        .saturating_sub(left_room)
        .clamp(1, len - width);
    let end = start + width; // exclusive
    let pick = |v: &[Option<usize>]| {
        let mut out = vec![v[0]];
        out.extend_from_slice(&v[start..end]);
        out
    };
    let mut ids = vec![marked.ids[0]];
    ids.extend_from_slice(&marked.ids[start..end]);
    let mut sentence_index = vec![marked.sentence_index[start]];
    sentence_index.extend_from_slice(&marked.sentence_index[start..end]);
    let remap = |p: usize| p - start + 1;
    let mut gold = Vec::new();
    let mut dropped = marked.dropped_gold;
    for (role, span) in &marked.gold {
        if span.start >= start && span.end < end {
            gold.push((
                role.clone(),
                SpanPair::new(remap(span.start), remap(span.end)),
            ));
        } else {
            dropped += 1;
        }
    }
    Ok(MarkedContext {
        ids,
        trigger_range: SpanPair::new(
            remap(marked.trigger_range.start),
            remap(marked.trigger_range.end),
        ),
        origin: pick(&marked.origin),
        sentence_index,
        gold,
        dropped_gold: dropped,
    })
}
