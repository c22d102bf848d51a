//! Argument identification / classification / head-word scoring with the
//! distance and argument-count breakdowns.
//!
//! Credit assignment is greedy and one-to-one: predictions are visited in
//! descending score order and each takes the first unused gold argument that
//! satisfies the metric. The head word of a span is taken to be its first
//! token.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::data::EventInstance;
use crate::error::{Error, Result};
use crate::inference::EventPrediction;

pub const HEAD_RULE: &str = "head word = first token of span";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Metric {
    ArgI,
    ArgC,
    HeadC,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ArgI, Metric::ArgC, Metric::HeadC];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ArgI => "arg_i",
            Metric::ArgC => "arg_c",
            Metric::HeadC => "head_c",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub num_pred: usize,
    pub num_gold: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.num_pred += o.num_pred;
        self.num_gold += o.num_gold;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricScore {
    pub tp: usize,
    pub num_pred: usize,
    pub num_gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for MetricScore {
    /// Empty predictions against empty gold score 1.0 throughout.
    fn from(c: Counts) -> Self {
        let ratio = |num: usize, den: usize, other: usize| {
            if den > 0 {
                num as f64 / den as f64
            } else if other == 0 {
                1.0
            } else {
                0.0
            }
        };
        let precision = ratio(c.tp, c.num_pred, c.num_gold);
        let recall = ratio(c.tp, c.num_gold, c.num_pred);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricScore {
            tp: c.tp,
            num_pred: c.num_pred,
            num_gold: c.num_gold,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub label: String,
    pub score: MetricScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub head_rule: &'static str,
    pub metrics: BTreeMap<&'static str, MetricScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<Vec<Bucket>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argnum: Option<Vec<Bucket>>,
}

/// Argument as seen by the scorer: inclusive span plus role.
#[derive(Debug, Clone, PartialEq)]
struct Arg {
    role: String,
    start: usize,
    end: usize,
    score: f64,
}

fn satisfies(metric: Metric, p: &Arg, g: &Arg) -> bool {
    match metric {
        Metric::ArgI => p.start == g.start && p.end == g.end,
        Metric::ArgC => p.start == g.start && p.end == g.end && p.role == g.role,
        Metric::HeadC => p.start == g.start && p.role == g.role,
    }
}

/// `result[i]` is the gold index credited to prediction `i`.
fn match_event(preds: &[Arg], gold: &[Arg], metric: Metric) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut used = vec![false; gold.len()];
    let mut out = vec![None; preds.len()];
    for i in order {
        if let Some(j) =
            (0..gold.len()).find(|&j| !used[j] && satisfies(metric, &preds[i], &gold[j]))
        {
            used[j] = true;
            out[i] = Some(j);
        }
    }
    out
}

struct Aligned<'a> {
    gold: &'a EventInstance,
    gold_args: Vec<Arg>,
    pred_args: Vec<Arg>,
}

type Key = (String, String, usize, usize);

/// Pairs every gold event with exactly one prediction record.
fn align<'a>(preds: &[EventPrediction], gold: &'a [EventInstance]) -> Result<Vec<Aligned<'a>>> {
    let mut by_key: BTreeMap<Key, Vec<&EventPrediction>> = BTreeMap::new();
    for p in preds {
        by_key
            .entry((
                p.doc_id.clone(),
                p.event_type.clone(),
                p.trigger.start,
                p.trigger.end,
            ))
            .or_default()
            .push(p);
    }
    for v in by_key.values_mut() {
        v.reverse();
    }
    let mut out = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    for g in gold {
        let key = (
            g.doc_id.clone(),
            g.trigger.event_type.clone(),
            g.trigger.span.start,
            g.trigger.span.end + 1,
        );
        match by_key.get_mut(&key).and_then(Vec::pop) {
            Some(p) => out.push(Aligned {
                gold: g,
                gold_args: g
                    .arguments
                    .iter()
                    .map(|a| Arg {
                        role: a.role.clone(),
                        start: a.span.start,
                        end: a.span.end,
                        score: 0.0,
                    })
                    .collect(),
                pred_args: p
                    .predictions
                    .iter()
                    .map(|r| Arg {
                        role: r.role.clone(),
                        start: r.start,
                        end: r.end - 1,
                        score: r.score,
                    })
                    .collect(),
            }),
            None => missing.push(format!("gold {}:{}@{}", key.0, key.1, key.2)),
        }
    }
    let extra: Vec<String> = by_key
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, _)| format!("prediction {}:{}@{}", k.0, k.1, k.2))
        .collect();
    missing.extend(extra);
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        return Err(Error::Scoring(format!(
            "{} event(s): {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(out)
}

pub fn score_counts(
    preds: &[EventPrediction],
    gold: &[EventInstance],
    metric: Metric,
) -> Result<Counts> {
    let mut c = Counts::default();
    for ev in align(preds, gold)? {
        let m = match_event(&ev.pred_args, &ev.gold_args, metric);
        c += Counts {
            tp: m.iter().flatten().count(),
            num_pred: ev.pred_args.len(),
            num_gold: ev.gold_args.len(),
        };
    }
    Ok(c)
}

pub fn score(
    preds: &[EventPrediction],
    gold: &[EventInstance],
    metric: Metric,
) -> Result<MetricScore> {
    Ok(score_counts(preds, gold, metric)?.into())
}

pub fn score_all(preds: &[EventPrediction], gold: &[EventInstance]) -> Result<ScoreReport> {
    let mut metrics = BTreeMap::new();
    for m in Metric::ALL {
        metrics.insert(m.name(), score(preds, gold, m)?);
    }
    Ok(ScoreReport {
        head_rule: HEAD_RULE,
        metrics,
        distance: None,
        argnum: None,
    })
}

pub const DISTANCE_LABELS: [&str; 5] = ["-2", "-1", "0", "1", "2"];

fn distance_bucket(inst: &EventInstance, pos: usize) -> usize {
    let d = inst.sentence_of(pos) as i64 - inst.sentence_of(inst.trigger.span.start) as i64;
    (d.clamp(-2, 2) + 2) as usize
}

/// Arg-C counts by sentence distance between argument and trigger, clipped
/// to [-2, 2]. Matched predictions count in their gold's bucket; unmatched
/// ones in the bucket of their own distance.
pub fn breakdown_distance_counts(
    preds: &[EventPrediction],
    gold: &[EventInstance],
) -> Result<[Counts; 5]> {
    let mut buckets = [Counts::default(); 5];
    for ev in align(preds, gold)? {
        if ev.gold.sent_starts.is_empty() {
            return Err(Error::Validation(format!(
                "document `{}` lacks sentence boundaries",
                ev.gold.doc_id
            )));
        }
        let m = match_event(&ev.pred_args, &ev.gold_args, Metric::ArgC);
        for g in &ev.gold_args {
            buckets[distance_bucket(ev.gold, g.start)].num_gold += 1;
        }
        for (p, hit) in ev.pred_args.iter().zip(&m) {
            let b = match hit {
                Some(j) => distance_bucket(ev.gold, ev.gold_args[*j].start),
                None => distance_bucket(ev.gold, p.start),
            };
            buckets[b].num_pred += 1;
            if hit.is_some() {
                buckets[b].tp += 1;
            }
        }
    }
    Ok(buckets)
}

pub fn breakdown_distance(
    preds: &[EventPrediction],
    gold: &[EventInstance],
) -> Result<Vec<Bucket>> {
    Ok(breakdown_distance_counts(preds, gold)?
        .iter()
        .zip(DISTANCE_LABELS)
        .map(|(c, l)| Bucket {
            label: l.to_string(),
            score: (*c).into(),
        })
        .collect())
}

/// Bucket "0" holds predictions for roles with no gold argument in the event.
pub const ARGNUM_LABELS: [&str; 5] = ["0", "1", "2", "3", ">=4"];

/// Arg-C counts by the number of gold arguments of the (event, role) group.
pub fn breakdown_argnum_counts(
    preds: &[EventPrediction],
    gold: &[EventInstance],
) -> Result<[Counts; 5]> {
    let mut buckets = [Counts::default(); 5];
    for ev in align(preds, gold)? {
        let m = match_event(&ev.pred_args, &ev.gold_args, Metric::ArgC);
        let mut per_role: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &ev.gold_args {
            *per_role.entry(g.role.as_str()).or_default() += 1;
        }
        let bucket_of = |role: &str| per_role.get(role).copied().unwrap_or(0).min(4);
        for g in &ev.gold_args {
            buckets[bucket_of(&g.role)].num_gold += 1;
        }
        for (p, hit) in ev.pred_args.iter().zip(&m) {
            let b = bucket_of(&p.role);
            buckets[b].num_pred += 1;
            if hit.is_some() {
                buckets[b].tp += 1;
            }
        }
    }
    Ok(buckets)
}

pub fn breakdown_argnum(preds: &[EventPrediction], gold: &[EventInstance]) -> Result<Vec<Bucket>> {
    Ok(breakdown_argnum_counts(preds, gold)?
        .iter()
        .zip(ARGNUM_LABELS)
        .map(|(c, l)| Bucket {
            label: l.to_string(),
            score: (*c).into(),
        })
        .collect())
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.head_rule);
        let row = |s: &mut String, label: &str, m: &MetricScore| {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>8} {:>8} {:>9.4} {:>9.4} {:>9.4}",
                label, m.tp, m.num_pred, m.num_gold, m.precision, m.recall, m.f1
            );
        };
        let header = |s: &mut String, title: &str| {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>8} {:>8} {:>9} {:>9} {:>9}",
                title, "tp", "pred", "gold", "P", "R", "F1"
            );
        };
        header(&mut s, "metric");
        for (name, m) in &self.metrics {
            row(&mut s, name, m);
        }
        if let Some(b) = &self.distance {
            let _ = writeln!(s);
            header(&mut s, "distance");
            for x in b {
                row(&mut s, &x.label, &x.score);
            }
        }
        if let Some(b) = &self.argnum {
            let _ = writeln!(s);
            header(&mut s, "arg count");
            for x in b {
                row(&mut s, &x.label, &x.score);
            }
        }
        s
    }
}
