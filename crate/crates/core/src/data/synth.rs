//! Synthetic corpora with a designed learnability guarantee: every argument
//! span is a run of entity words `ent<n>` directly preceded by the cue word
//! `cue_<role>`, and each event type has its own trigger word `trig_<type>`.
//! Filler words never look like entities, so "find the cue, take the entity
//! run after it" recovers the gold annotation exactly unless cue dropout is on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_jsonl, Argument, EventInstance, Trigger};
use crate::error::{Error, Result};
use crate::inference::{EventPrediction, PredictionRecord, TriggerRecord};
use crate::ontology::{build_schema, validate_instance, Ontology, Phase};
use crate::prompting::{save_templates, templates_from_map, TemplateSet};
use crate::span::SpanPair;

const EVENT_NAMES: [&str; 8] = [
    "Attack", "Transfer", "Meet", "Arrest", "Injure", "Elect", "Sue", "Marry",
];
const ROLE_NAMES: [&str; 24] = [
    "Attacker",
    "Target",
    "Instrument",
    "Giver",
    "Recipient",
    "Artifact",
    "Entity",
    "Place",
    "Host",
    "Agent",
    "Person",
    "Authority",
    "Victim",
    "Means",
    "Cause",
    "Candidate",
    "Office",
    "Voter",
    "Plaintiff",
    "Defendant",
    "Court",
    "Spouse",
    "Officiant",
    "Venue",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub event_types: usize,
    pub roles_per_type: usize,
    /// Leading roles of each type that may take two arguments.
    pub multi_slot_roles: usize,
    /// Probability that a multi-slot role gets two arguments in an event.
    pub multi_arg_prob: f64,
    /// Probability that any other role is filled.
    pub role_presence: f64,
    pub filler_vocab: usize,
    pub entity_vocab: usize,
    pub max_entity_len: usize,
    pub sentences_per_doc: usize,
    pub min_sentence_len: usize,
    pub max_sentence_len: usize,
    /// Relative weights of argument-to-trigger sentence distance -2..=2.
    pub distance_weights: [f64; 5],
    /// Probability of omitting an argument's cue word.
    pub cue_dropout: f64,
    /// Expected number of stray cue words (not followed by entities) per doc.
    pub distractor_cues: f64,
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            event_types: 2,
            roles_per_type: 3,
            multi_slot_roles: 1,
            multi_arg_prob: 0.5,
            role_presence: 0.8,
            filler_vocab: 200,
            entity_vocab: 100,
            max_entity_len: 3,
            sentences_per_doc: 5,
            min_sentence_len: 6,
            max_sentence_len: 12,
            distance_weights: [0.1, 0.2, 0.4, 0.2, 0.1],
            cue_dropout: 0.0,
            distractor_cues: 0.0,
            train_docs: 500,
            dev_docs: 100,
            test_docs: 100,
        }
    }
}

impl SynthSpec {
    /// Every event's multi-slot role carries exactly two arguments.
    pub fn multi_arg_stress() -> Self {
        SynthSpec {
            multi_arg_prob: 1.0,
            ..SynthSpec::default()
        }
    }

    pub fn event_type_names(&self) -> Vec<String> {
        (0..self.event_types)
            .map(|t| match EVENT_NAMES.get(t) {
                Some(n) => n.to_string(),
                None => format!("Event{t}"),
            })
            .collect()
    }

    pub fn role_names(&self, event_type: usize) -> Vec<String> {
        (0..self.roles_per_type)
            .map(|r| {
                let k = event_type * self.roles_per_type + r;
                match ROLE_NAMES.get(k) {
                    Some(n) => n.to_string(),
                    None => format!("Role{k}"),
                }
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Infeasible(m));
        if self.event_types == 0 || self.roles_per_type == 0 {
            return bad("need at least one event type and one role".into());
        }
        if self.multi_slot_roles > self.roles_per_type {
            return bad(format!(
                "{} multi-slot roles but only {} roles per type",
                self.multi_slot_roles, self.roles_per_type
            ));
        }
        for (name, p) in [
            ("multi_arg_prob", self.multi_arg_prob),
            ("role_presence", self.role_presence),
            ("cue_dropout", self.cue_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.distractor_cues >= 0.0 && self.distractor_cues.is_finite()) {
            return bad("distractor_cues must be non-negative".into());
        }
        if self.filler_vocab == 0 || self.entity_vocab == 0 || self.max_entity_len == 0 {
            return bad("filler/entity vocabularies and entity length must be positive".into());
        }
        if self.min_sentence_len == 0 || self.min_sentence_len > self.max_sentence_len {
            return bad(format!(
                "sentence length range [{}, {}] is empty",
                self.min_sentence_len, self.max_sentence_len
            ));
        }
        if self
            .distance_weights
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.distance_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("distance weights must be non-negative with a positive sum".into());
        }
        let (lo, hi) = self.distance_support();
        if (hi - lo) as usize >= self.sentences_per_doc {
            return bad(format!(
                "distances {lo}..={hi} need {} sentences, doc has {}",
                hi - lo + 1,
                self.sentences_per_doc
            ));
        }
        if self.train_docs == 0 {
            return bad("train split is empty".into());
        }
        Ok(())
    }

    fn distance_support(&self) -> (i64, i64) {
        let nz: Vec<i64> = (0..5)
            .filter(|&i| self.distance_weights[i] > 0.0)
            .map(|i| i as i64 - 2)
            .collect();
        (nz[0], *nz.last().unwrap())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<EventInstance>,
    pub dev: Vec<EventInstance>,
    pub test: Vec<EventInstance>,
    pub ontology: Ontology,
    pub templates: TemplateSet,
}

pub fn cue_word(role: &str) -> String {
    format!("cue_{}", role.to_lowercase())
}

pub fn trigger_word(event_type: &str) -> String {
    format!("trig_{}", event_type.to_lowercase())
}

fn is_entity(word: &str) -> bool {
    word.starts_with("ent") && word[3..].chars().all(|c| c.is_ascii_digit()) && word.len() > 3
}

/// An indivisible run of words inside a sentence.
enum Unit {
    Filler(String),
    Trigger(String),
    Arg {
        role: String,
        cue: bool,
        entity: Vec<String>,
    },
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    types: Vec<String>,
    roles: Vec<Vec<String>>,
    distance: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn filler(&mut self) -> String {
        format!("w{}", self.rng.gen_range(0..self.spec.filler_vocab))
    }

    fn entity(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(1..=self.spec.max_entity_len);
        (0..n)
            .map(|_| format!("ent{}", self.rng.gen_range(0..self.spec.entity_vocab)))
            .collect()
    }

    fn insert(&mut self, sentence: &mut Vec<Unit>, unit: Unit) {
        let at = self.rng.gen_range(0..=sentence.len());
        sentence.insert(at, unit);
    }

    fn document(&mut self, doc_id: String) -> EventInstance {
        let spec = self.spec;
        let t = self.rng.gen_range(0..self.types.len());
        let event_type = self.types[t].clone();

        // (role, distance) for every argument, in role order
        let mut args: Vec<(String, i64)> = Vec::new();
        for (r, role) in self.roles[t].clone().into_iter().enumerate() {
            let count = if r < spec.multi_slot_roles && self.rng.gen_bool(spec.multi_arg_prob) {
                2
            } else if self.rng.gen_bool(spec.role_presence) {
                1
            } else {
                0
            };
            for _ in 0..count {
                let d = self.distance.sample(&mut self.rng) as i64 - 2;
                args.push((role.clone(), d));
            }
        }
        let lo = args.iter().map(|a| a.1).min().unwrap_or(0).min(0);
        let hi = args.iter().map(|a| a.1).max().unwrap_or(0).max(0);
        let s = spec.sentences_per_doc as i64;
        let trig_sent = self.rng.gen_range(-lo..s - hi) as usize;

        let mut sentences: Vec<Vec<Unit>> = (0..spec.sentences_per_doc)
            .map(|_| {
                let n = self
                    .rng
                    .gen_range(spec.min_sentence_len..=spec.max_sentence_len);
                (0..n).map(|_| Unit::Filler(self.filler())).collect()
            })
            .collect();
        let mut trig_units = std::mem::take(&mut sentences[trig_sent]);
        self.insert(&mut trig_units, Unit::Trigger(trigger_word(&event_type)));
        sentences[trig_sent] = trig_units;
        for (role, d) in args {
            let cue = !self.rng.gen_bool(spec.cue_dropout);
            let entity = self.entity();
            let k = (trig_sent as i64 + d) as usize;
            let mut units = std::mem::take(&mut sentences[k]);
            self.insert(&mut units, Unit::Arg { role, cue, entity });
            sentences[k] = units;
        }
        if spec.distractor_cues > 0.0 {
            let n = sample_count(&mut self.rng, spec.distractor_cues);
            for _ in 0..n {
                let k = self.rng.gen_range(0..sentences.len());
                let tt = self.rng.gen_range(0..self.roles.len());
                let rr = self.rng.gen_range(0..self.roles[tt].len());
                let word = cue_word(&self.roles[tt][rr]);
                let mut units = std::mem::take(&mut sentences[k]);
                // a stray cue is always followed by a filler word
                let slots: Vec<usize> = (0..units.len())
                    .filter(|&i| matches!(units[i], Unit::Filler(_)))
                    .collect();
                let at = slots[self.rng.gen_range(0..slots.len())];
                units.insert(at, Unit::Filler(word));
                sentences[k] = units;
            }
        }

        let mut tokens = Vec::new();
        let mut sent_starts = Vec::new();
        let mut trigger = None;
        let mut arguments = Vec::new();
        for units in sentences {
            sent_starts.push(tokens.len());
            for u in units {
                match u {
                    Unit::Filler(w) => tokens.push(w),
                    Unit::Trigger(w) => {
                        trigger = Some(SpanPair::new(tokens.len(), tokens.len()));
                        tokens.push(w);
                    }
                    Unit::Arg { role, cue, entity } => {
                        if cue {
                            tokens.push(cue_word(&role));
                        }
                        let start = tokens.len();
                        tokens.extend(entity);
                        arguments.push(Argument {
                            role,
                            span: SpanPair::new(start, tokens.len() - 1),
                        });
                    }
                }
            }
        }
        arguments.sort_by_key(|a| (a.span.start, a.span.end));
        EventInstance {
            doc_id,
            tokens,
            sent_starts,
            trigger: Trigger {
                span: trigger.expect("trigger placed"),
                event_type,
            },
            arguments,
        }
    }
}

/// Poisson-like count with the given mean, built from Bernoulli draws.
fn sample_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let whole = mean.floor() as usize;
    whole + usize::from(rng.gen_bool(mean - whole as f64))
}

/// One `{Role}` marker per slot, repeated markers joined with "and".
pub fn synth_templates(ont: &Ontology) -> Result<TemplateSet> {
    let mut raw = BTreeMap::new();
    for (ty, roles) in &ont.event_types {
        let parts: Vec<String> = roles
            .iter()
            .map(|r| vec![format!("{{{}}}", r.role); r.slot_count].join(" and "))
            .collect();
        raw.insert(
            ty.clone(),
            format!("{} event : {}", ty.to_lowercase(), parts.join(" , ")),
        );
    }
    templates_from_map(raw, ont)
}

pub fn gen_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.check()?;
    let types = spec.event_type_names();
    let mut g = Generator {
        spec,
        roles: (0..spec.event_types).map(|t| spec.role_names(t)).collect(),
        types,
        distance: WeightedIndex::new(spec.distance_weights)
            .map_err(|e| Error::Infeasible(e.to_string()))?,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut split = |name: &str, n: usize| -> Vec<EventInstance> {
        (0..n)
            .map(|i| g.document(format!("{name}-{i:05}")))
            .collect()
    };
    let train = split("train", spec.train_docs);
    let dev = split("dev", spec.dev_docs);
    let test = split("test", spec.test_docs);
    let ontology = build_schema(&train)?;
    for inst in dev.iter().chain(&test) {
        validate_instance(inst, &ontology)
            .into_result(Phase::Training)
            .map_err(|e| {
                Error::Infeasible(format!(
                    "held-out split not covered by training schema: {e}"
                ))
            })?;
    }
    let templates = synth_templates(&ontology)?;
    Ok(SynthCorpus {
        train,
        dev,
        test,
        ontology,
        templates,
    })
}

impl SynthCorpus {
    /// Writes `train/dev/test.jsonl`, `ontology.json` and `templates.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_jsonl(dir.join("train.jsonl"), &self.train)?;
        write_jsonl(dir.join("dev.jsonl"), &self.dev)?;
        write_jsonl(dir.join("test.jsonl"), &self.test)?;
        self.ontology.save(dir.join("ontology.json"))?;
        save_templates(dir.join("templates.json"), &self.templates)?;
        Ok(())
    }
}

/// Rule-based labeler: for every cue word of a role of the event's type,
/// the maximal entity run right after it is an argument.
pub fn cue_oracle(inst: &EventInstance, ont: &Ontology) -> Result<EventPrediction> {
    let roles = ont.roles(&inst.trigger.event_type)?;
    let cues: BTreeMap<String, &str> = roles
        .iter()
        .map(|r| (cue_word(&r.role), r.role.as_str()))
        .collect();
    let mut predictions = Vec::new();
    for (i, w) in inst.tokens.iter().enumerate() {
        let Some(role) = cues.get(w) else { continue };
        let mut j = i + 1;
        while j < inst.tokens.len() && is_entity(&inst.tokens[j]) {
            j += 1;
        }
        if j > i + 1 {
            predictions.push(PredictionRecord {
                role: role.to_string(),
                start: i + 1,
                end: j,
                score: 1.0,
            });
        }
    }
    Ok(EventPrediction {
        doc_id: inst.doc_id.clone(),
        event_type: inst.trigger.event_type.clone(),
        trigger: TriggerRecord {
            start: inst.trigger.span.start,
            end: inst.trigger.span.end + 1,
        },
        predictions,
    })
}
