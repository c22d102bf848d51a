//! Per-slot greedy span decoding and event-level prediction assembly.
//!
//! Every slot yields at most one span; slots decoding to `(0, 0)` produce
//! nothing. The assignment module is never consulted here.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EventInstance;
use crate::error::{Error, Result};
use crate::neural::{forward, ForwardOutputs, ModelParams, Scalar};
use crate::pipeline::{Pipeline, PreparedEvent};
use crate::prompting::PromptLayout;
use crate::span::SpanPair;
use crate::textenc::MarkedContext;

pub const DEFAULT_MAX_SPAN_LEN: usize = 10;

/// Best-scoring span over admissible `(i, j)`: either `(0, 0)` or `i <= j`,
/// `j - i + 1 <= max_span_len`, with no blocked position inside. Ties go to
/// the smallest `i`, then the smallest `j`.
pub fn greedy_span_in<T: Scalar>(
    start: &[T],
    end: &[T],
    max_span_len: usize,
    blocked: &[bool],
) -> (SpanPair, f64) {
    assert!(!start.is_empty() && start.len() == end.len());
    assert!(max_span_len >= 1);
    let len = start.len();
    let mut best = SpanPair::NONE;
    let mut best_score = start[0].as_f64() + end[0].as_f64();
    for i in 1..len {
        if blocked.get(i).copied().unwrap_or(false) {
            continue;
        }
        let s = start[i].as_f64();
        for j in i..len.min(i + max_span_len) {
            if blocked.get(j).copied().unwrap_or(false) {
                break;
            }
            let score = s + end[j].as_f64();
            if score > best_score {
                best_score = score;
                best = SpanPair::new(i, j);
            }
        }
    }
    (best, best_score)
}

/// [`greedy_span_in`] where only position 0 (the sequence start) is special.
pub fn greedy_span<T: Scalar>(start: &[T], end: &[T], max_span_len: usize) -> (SpanPair, f64) {
    let mut blocked = vec![false; start.len()];
    blocked[0] = true;
    greedy_span_in(start, end, max_span_len, &blocked)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgumentPrediction {
    pub role: String,
    /// Original document coordinates, inclusive.
    pub span: SpanPair,
    pub score: f64,
    pub slot_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractStats {
    /// Spans that could not be mapped back to document coordinates.
    pub unmappable: usize,
}

/// Decodes every slot of one event and maps the surviving spans back to
/// document coordinates.
pub fn extract_event<T: Scalar>(
    outputs: &ForwardOutputs<T>,
    layout: &PromptLayout,
    marked: &MarkedContext,
    max_span_len: usize,
) -> Result<(Vec<ArgumentPrediction>, ExtractStats)> {
    if outputs.logits_start.rows != layout.num_slots() {
        return Err(Error::Validation(format!(
            "{} logit rows for {} slots",
            outputs.logits_start.rows,
            layout.num_slots()
        )));
    }
    let blocked = marked.blocked();
    let mut preds = Vec::new();
    let mut stats = ExtractStats::default();
    for (k, slot) in layout.slots.iter().enumerate() {
        let (span, score) = greedy_span_in(
            outputs.logits_start.row(k),
            outputs.logits_end.row(k),
            max_span_len,
            &blocked,
        );
        if span.is_none() {
            continue;
        }
        match marked.to_original(span) {
            Some(orig) => preds.push(ArgumentPrediction {
                role: slot.role.clone(),
                span: orig,
                score,
                slot_index: k,
            }),
            None => stats.unmappable += 1,
        }
    }
    Ok((preds, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub role: String,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub score: f64,
}

/// One line of the prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub doc_id: String,
    pub event_type: String,
    pub trigger: TriggerRecord,
    pub predictions: Vec<PredictionRecord>,
}

impl EventPrediction {
    pub fn new(
        doc_id: &str,
        event_type: &str,
        trigger: SpanPair,
        args: &[ArgumentPrediction],
    ) -> Self {
        EventPrediction {
            doc_id: doc_id.to_string(),
            event_type: event_type.to_string(),
            trigger: TriggerRecord {
                start: trigger.start,
                end: trigger.end + 1,
            },
            predictions: args
                .iter()
                .map(|a| PredictionRecord {
                    role: a.role.clone(),
                    start: a.span.start,
                    end: a.span.end + 1,
                    score: a.score,
                })
                .collect(),
        }
    }

    /// Gold arguments rendered as predictions (score 0).
    pub fn from_gold(inst: &EventInstance) -> Self {
        let args: Vec<ArgumentPrediction> = inst
            .arguments
            .iter()
            .map(|a| ArgumentPrediction {
                role: a.role.clone(),
                span: a.span,
                score: 0.0,
                slot_index: 0,
            })
            .collect();
        Self::new(
            &inst.doc_id,
            &inst.trigger.event_type,
            inst.trigger.span,
            &args,
        )
    }
}

pub fn predictions_to_jsonl(preds: &[EventPrediction]) -> String {
    let mut s = String::new();
    for p in preds {
        s.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        s.push('\n');
    }
    s
}

pub fn parse_predictions(text: &str, source: &Path) -> Result<Vec<EventPrediction>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: EventPrediction = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        for r in &p.predictions {
            if r.end <= r.start {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: i + 1,
                    msg: format!("empty prediction span [{}, {})", r.start, r.end),
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<EventPrediction>> {
    let path = path.as_ref();
    parse_predictions(&std::fs::read_to_string(path)?, path)
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[EventPrediction]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(predictions_to_jsonl(preds).as_bytes())?;
    Ok(())
}

/// How prompt slots are decoded at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// One prompt decoder pass per event covering all slots.
    Joint,
    /// One full pass per slot; kept only for timing comparisons.
    Sequential,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictStats {
    pub events: usize,
    pub slots: usize,
    pub prompt_passes: usize,
    pub unmappable: usize,
}

/// Decodes one prepared event with the given weights.
pub fn predict_event(
    params: &ModelParams<f32>,
    pipeline: &Pipeline,
    ev: &PreparedEvent,
    mode: DecodeMode,
    max_span_len: usize,
    stats: &mut PredictStats,
) -> Result<EventPrediction> {
    let layout = pipeline.layout(&ev.event_type)?;
    let outputs = match mode {
        DecodeMode::Joint => forward(params, &ev.marked.ids, layout)?,
        DecodeMode::Sequential => sequential_outputs(params, &ev.marked, layout)?,
    };
    let (args, ex) = extract_event(&outputs, layout, &ev.marked, max_span_len)?;
    stats.events += 1;
    stats.slots += layout.num_slots();
    stats.prompt_passes += outputs.prompt_passes;
    stats.unmappable += ex.unmappable;
    Ok(EventPrediction::new(
        &ev.doc_id,
        &ev.event_type,
        ev.trigger,
        &args,
    ))
}

/// Runs the whole network once per slot and keeps only that slot's row.
fn sequential_outputs(
    params: &ModelParams<f32>,
    marked: &MarkedContext,
    layout: &PromptLayout,
) -> Result<ForwardOutputs<f32>> {
    let mut acc: Option<ForwardOutputs<f32>> = None;
    let mut passes = 0;
    for k in 0..layout.num_slots() {
        let out = forward(params, &marked.ids, layout)?;
        passes += out.prompt_passes;
        match acc.as_mut() {
            None => acc = Some(out),
            Some(a) => {
                a.logits_start
                    .row_mut(k)
                    .copy_from_slice(out.logits_start.row(k));
                a.logits_end
                    .row_mut(k)
                    .copy_from_slice(out.logits_end.row(k));
                a.psi.row_mut(k).copy_from_slice(out.psi.row(k));
            }
        }
    }
    let mut out = match acc {
        Some(a) => a,
        None => forward(params, &marked.ids, layout)?,
    };
    out.prompt_passes = passes;
    Ok(out)
}

/// Trained model plus everything needed to turn instances into predictions.
pub struct Predictor {
    pub params: ModelParams<f32>,
    pub pipeline: Pipeline,
    pub max_span_len: usize,
}

impl Predictor {
    pub fn predict_prepared(
        &self,
        ev: &PreparedEvent,
        mode: DecodeMode,
        stats: &mut PredictStats,
    ) -> Result<EventPrediction> {
        predict_event(
            &self.params,
            &self.pipeline,
            ev,
            mode,
            self.max_span_len,
            stats,
        )
    }

    pub fn predict(
        &self,
        inst: &EventInstance,
        mode: DecodeMode,
        stats: &mut PredictStats,
    ) -> Result<EventPrediction> {
        let ev = self.pipeline.prepare(inst)?;
        self.predict_prepared(&ev, mode, stats)
    }

    pub fn predict_all(
        &self,
        data: &[EventInstance],
        mode: DecodeMode,
    ) -> Result<(Vec<EventPrediction>, PredictStats)> {
        let mut stats = PredictStats::default();
        let preds = data
            .iter()
            .map(|inst| self.predict(inst, mode, &mut stats))
            .collect::<Result<Vec<_>>>()?;
        Ok((preds, stats))
    }
}
