//! Joint prompts: one prompt per event type holding a slot for every
//! (role, multiplicity) pair. Slot order is left-to-right order of appearance.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::Ontology;
use crate::span::SpanPair;
use crate::textenc::{TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Manual,
    Concat,
    Soft,
}

impl std::str::FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Self::Manual),
            "concat" => Ok(Self::Concat),
            "soft" => Ok(Self::Soft),
            _ => Err(Error::Config(format!("unknown prompt variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub event_type: String,
    /// Whitespace-separated words; a word `{Role}` marks one slot.
    pub text: String,
}

enum Piece<'a> {
    Word(&'a str),
    Slot(&'a str),
}

impl PromptTemplate {
    fn pieces(&self) -> Result<Vec<Piece<'_>>> {
        self.text
            .split_whitespace()
            .map(|w| {
                if let Some(inner) = w.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                    if inner.is_empty() || inner.contains(['{', '}']) {
                        return Err(Error::template(
                            &self.event_type,
                            format!("malformed slot marker `{w}`"),
                        ));
                    }
                    Ok(Piece::Slot(inner))
                } else if w.contains(['{', '}']) {
                    Err(Error::template(
                        &self.event_type,
                        format!("malformed slot marker `{w}`"),
                    ))
                } else {
                    Ok(Piece::Word(w))
                }
            })
            .collect()
    }

    /// Checks marker roles and per-role marker counts against the ontology.
    pub fn validate(&self, ont: &Ontology) -> Result<()> {
        let roles = ont
            .roles(&self.event_type)
            .map_err(|_| Error::template(&self.event_type, "event type not in ontology"))?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for p in self.pieces()? {
            if let Piece::Slot(role) = p {
                if !roles.iter().any(|r| r.role == role) {
                    return Err(Error::template(
                        &self.event_type,
                        format!("unknown role marker `{{{role}}}`"),
                    ));
                }
                *counts.entry(role).or_default() += 1;
            }
        }
        for spec in roles {
            let found = counts.get(spec.role.as_str()).copied().unwrap_or(0);
            if found != spec.slot_count {
                return Err(Error::template(
                    &self.event_type,
                    format!(
                        "role `{}` has {found} slot marker(s), ontology wants {}",
                        spec.role, spec.slot_count
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Plain words appearing in the template, including role names.
    pub fn words(&self) -> Vec<String> {
        self.text
            .split_whitespace()
            .flat_map(|w| {
                let w = w.trim_start_matches('{').trim_end_matches('}');
                w.split_whitespace().map(str::to_string).collect::<Vec<_>>()
            })
            .collect()
    }
}

pub type TemplateSet = BTreeMap<String, PromptTemplate>;

/// Reads `{ "<event_type>": "<template>" }` and validates every entry.
pub fn load_templates(path: impl AsRef<Path>, ont: &Ontology) -> Result<TemplateSet> {
    let raw: BTreeMap<String, String> = serde_json::from_str(&fs::read_to_string(path)?)?;
    templates_from_map(raw, ont)
}

pub fn templates_from_map(raw: BTreeMap<String, String>, ont: &Ontology) -> Result<TemplateSet> {
    let mut out = TemplateSet::new();
    for (event_type, text) in raw {
        let tpl = PromptTemplate {
            event_type: event_type.clone(),
            text,
        };
        tpl.validate(ont)?;
        out.insert(event_type, tpl);
    }
    Ok(out)
}

pub fn save_templates(path: impl AsRef<Path>, templates: &TemplateSet) -> Result<()> {
    let raw: BTreeMap<&str, &str> = templates
        .iter()
        .map(|(k, v)| (k.as_str(), v.text.as_str()))
        .collect();
    let mut s = serde_json::to_string_pretty(&raw)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotDesc {
    pub role: String,
    pub slot_index_within_role: usize,
    /// Inclusive token range in the prompt.
    pub token_range: SpanPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptLayout {
    pub tokens: Vec<TokenId>,
    pub slots: Vec<SlotDesc>,
}

impl PromptLayout {
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Slot indices belonging to `role`, in slot order.
    pub fn slots_of<'a>(&'a self, role: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.slots
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.role == role)
            .map(|(k, _)| k)
    }

    /// Slot ranges must be non-empty, in bounds, disjoint and increasing.
    pub fn check(&self) -> Result<()> {
        let mut prev_hi: Option<usize> = None;
        for s in &self.slots {
            let r = s.token_range;
            if r.start > r.end || r.end >= self.tokens.len() {
                return Err(Error::SlotRange {
                    lo: r.start,
                    hi: r.end,
                    len: self.tokens.len(),
                });
            }
            if prev_hi.is_some_and(|p| r.start <= p) {
                return Err(Error::SlotRange {
                    lo: r.start,
                    hi: r.end,
                    len: self.tokens.len(),
                });
            }
            prev_hi = Some(r.end);
        }
        Ok(())
    }
}

#[derive(Default)]
struct LayoutBuilder {
    tokens: Vec<TokenId>,
    slots: Vec<SlotDesc>,
    seen: HashMap<String, usize>,
}

impl LayoutBuilder {
    fn word(&mut self, vocab: &Vocab, w: &str) {
        self.tokens.push(vocab.word_id(w));
    }

    fn raw(&mut self, id: TokenId) {
        self.tokens.push(id);
    }

    fn slot(&mut self, vocab: &Vocab, role: &str) {
        let lo = self.tokens.len();
        for w in role.split_whitespace() {
            self.word(vocab, w);
        }
        let idx = self.seen.entry(role.to_string()).or_default();
        self.slots.push(SlotDesc {
            role: role.to_string(),
            slot_index_within_role: *idx,
            token_range: SpanPair::new(lo, self.tokens.len() - 1),
        });
        *idx += 1;
    }

    fn finish(self) -> PromptLayout {
        PromptLayout {
            tokens: self.tokens,
            slots: self.slots,
        }
    }
}

pub fn render_manual(tpl: &PromptTemplate, ont: &Ontology, vocab: &Vocab) -> Result<PromptLayout> {
    tpl.validate(ont)?;
    let mut b = LayoutBuilder::default();
    for p in tpl.pieces()? {
        match p {
            Piece::Word(w) => b.word(vocab, w),
            Piece::Slot(role) => b.slot(vocab, role),
        }
    }
    Ok(b.finish())
}

/// Role names in ontology order; repeats beyond the first are wrapped in
/// parentheses.
pub fn render_concat(event_type: &str, ont: &Ontology, vocab: &Vocab) -> Result<PromptLayout> {
    let mut b = LayoutBuilder::default();
    for spec in ont.roles(event_type)? {
        b.slot(vocab, &spec.role);
        for _ in 1..spec.slot_count {
            b.word(vocab, "(");
            b.slot(vocab, &spec.role);
            b.word(vocab, ")");
        }
    }
    Ok(b.finish())
}

/// Like [`render_concat`] but every slot is wrapped in the role's learnable
/// pseudo tokens. The slot range covers the role name only.
pub fn render_soft(event_type: &str, ont: &Ontology, vocab: &mut Vocab) -> Result<PromptLayout> {
    let roles = ont.roles(event_type)?;
    let ids: Vec<(TokenId, TokenId)> = roles
        .iter()
        .map(|r| vocab.register_pseudo(&r.role))
        .collect();
    let vocab = &*vocab;
    let mut b = LayoutBuilder::default();
    for (spec, &(left, right)) in roles.iter().zip(&ids) {
        let one = |b: &mut LayoutBuilder| {
            b.raw(left);
            b.slot(vocab, &spec.role);
            b.raw(right);
        };
        one(&mut b);
        for _ in 1..spec.slot_count {
            b.word(vocab, "(");
            one(&mut b);
            b.word(vocab, ")");
        }
    }
    Ok(b.finish())
}

/// Words a variant needs in the vocabulary so prompts never hit UNK.
pub fn prompt_words(
    variant: PromptVariant,
    ont: &Ontology,
    templates: &TemplateSet,
) -> Vec<String> {
    let mut words: Vec<String> = vec!["(".into(), ")".into()];
    for roles in ont.event_types.values() {
        for r in roles {
            words.extend(r.role.split_whitespace().map(str::to_string));
        }
    }
    if variant == PromptVariant::Manual {
        for t in templates.values() {
            words.extend(t.words());
        }
    }
    words
}

/// Renders and caches one layout per event type.
#[derive(Debug, Clone)]
pub struct PromptBook {
    pub variant: PromptVariant,
    layouts: BTreeMap<String, PromptLayout>,
}

impl PromptBook {
    /// Soft prompts register their pseudo tokens in `vocab`, so build the
    /// book before sizing the model.
    pub fn build(
        variant: PromptVariant,
        ont: &Ontology,
        templates: &TemplateSet,
        vocab: &mut Vocab,
    ) -> Result<Self> {
        let mut layouts = BTreeMap::new();
        for ty in ont.event_types.keys() {
            let layout = match variant {
                PromptVariant::Manual => {
                    let tpl = templates
                        .get(ty)
                        .ok_or_else(|| Error::template(ty, "no manual template for event type"))?;
                    render_manual(tpl, ont, vocab)?
                }
                PromptVariant::Concat => render_concat(ty, ont, vocab)?,
                PromptVariant::Soft => render_soft(ty, ont, vocab)?,
            };
            layout.check()?;
            layouts.insert(ty.clone(), layout);
        }
        Ok(PromptBook { variant, layouts })
    }

    pub fn layout(&self, event_type: &str) -> Result<&PromptLayout> {
        self.layouts
            .get(event_type)
            .ok_or_else(|| Error::UnknownEventType(event_type.to_string()))
    }
}
