//! Turns an [`EventInstance`] into model-ready inputs: token ids with trigger
//! markers, windowed to the encoder length, plus the event type's prompt.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::EventInstance;
use crate::error::Result;
use crate::ontology::Ontology;
use crate::prompting::{
    prompt_words, templates_from_map, PromptBook, PromptLayout, PromptVariant, TemplateSet,
};
use crate::span::SpanPair;
use crate::textenc::{mark_trigger, window_context, MarkedContext, Vocab};

#[derive(Debug, Clone)]
pub struct PreparedEvent {
    pub doc_id: String,
    pub event_type: String,
    pub trigger: SpanPair,
    pub marked: MarkedContext,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub vocab: Vocab,
    pub ontology: Ontology,
    pub templates: TemplateSet,
    pub book: PromptBook,
    /// Encoder length cap, markers and BOS included.
    pub max_len: usize,
}

/// Serialized form stored alongside model weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PipelineRecord {
    vocab: String,
    ontology: Ontology,
    variant: PromptVariant,
    templates: BTreeMap<String, String>,
    max_len: usize,
}

impl Pipeline {
    /// Finalizes `vocab` (soft prompts add pseudo tokens) and renders every
    /// prompt.
    pub fn new(
        mut vocab: Vocab,
        ontology: Ontology,
        variant: PromptVariant,
        templates: TemplateSet,
        max_len: usize,
    ) -> Result<Self> {
        let book = PromptBook::build(variant, &ontology, &templates, &mut vocab)?;
        Ok(Pipeline {
            vocab,
            ontology,
            templates,
            book,
            max_len,
        })
    }

    /// Vocabulary from the training words plus every prompt word.
    pub fn from_corpus(
        train: &[EventInstance],
        ontology: Ontology,
        variant: PromptVariant,
        templates: TemplateSet,
        max_len: usize,
    ) -> Result<Self> {
        let mut vocab = Vocab::build(
            train
                .iter()
                .flat_map(|i| i.tokens.iter().map(String::as_str)),
            1,
        )?;
        let words = prompt_words(variant, &ontology, &templates);
        vocab.extend_words(words.iter().map(String::as_str));
        Self::new(vocab, ontology, variant, templates, max_len)
    }

    pub fn variant(&self) -> PromptVariant {
        self.book.variant
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rec = PipelineRecord {
            vocab: self.vocab.to_text(),
            ontology: self.ontology.clone(),
            variant: self.variant(),
            templates: self
                .templates
                .iter()
                .map(|(k, v)| (k.clone(), v.text.clone()))
                .collect(),
            max_len: self.max_len,
        };
        serde_json::to_value(rec).expect("pipeline serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let rec: PipelineRecord = serde_json::from_value(value.clone())?;
        let vocab = Vocab::from_text(&rec.vocab)?;
        let templates = templates_from_map(rec.templates, &rec.ontology)?;
        Self::new(vocab, rec.ontology, rec.variant, templates, rec.max_len)
    }

    pub fn prepare(&self, inst: &EventInstance) -> Result<PreparedEvent> {
        let ids = self.vocab.encode(&inst.tokens);
        let gold: Vec<(String, SpanPair)> = inst
            .arguments
            .iter()
            .map(|a| (a.role.clone(), a.span))
            .collect();
        let marked = mark_trigger(&ids, inst.trigger.span, &gold, |p| inst.sentence_of(p))?;
        let marked = window_context(&marked, self.max_len)?;
        Ok(PreparedEvent {
            doc_id: inst.doc_id.clone(),
            event_type: inst.trigger.event_type.clone(),
            trigger: inst.trigger.span,
            marked,
        })
    }

    pub fn prepare_all(&self, data: &[EventInstance]) -> Result<Vec<PreparedEvent>> {
        data.iter().map(|i| self.prepare(i)).collect()
    }

    pub fn layout(&self, event_type: &str) -> Result<&PromptLayout> {
        self.book.layout(event_type)
    }
}
