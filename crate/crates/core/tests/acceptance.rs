//! Acceptance criteria, one PASS/FAIL line each. Run a subset by passing
//! name fragments: `cargo test --test acceptance -- hungarian greedy`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanprompt::assignment::{
    assign_targets, hungarian, match_role, total_loss, EventLogits, LossMode, SlotTarget,
};
use spanprompt::cli::bench;
use spanprompt::config::RunConfig;
use spanprompt::data::synth::{gen_synthetic, SynthCorpus, SynthSpec};
use spanprompt::data::{Argument, EventInstance, Trigger};
use spanprompt::evaluation::{
    breakdown_argnum, breakdown_argnum_counts, breakdown_distance_counts, score, score_counts,
    Counts, Metric,
};
use spanprompt::inference::{greedy_span, EventPrediction, PredictionRecord, TriggerRecord};
use spanprompt::neural::{forward, forward_graph, Mat, ModelConfig, ModelParams};
use spanprompt::pipeline::{Pipeline, PreparedEvent};
use spanprompt::prompting::PromptVariant;
use spanprompt::span::SpanPair;
use spanprompt::train::{ablation_grid, evaluate, TrainSettings, Trainer};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- matching

/// Minimum over all injective matchings of size min(rows, cols).
fn brute_min(cost: &[Vec<i64>]) -> i64 {
    let (r, c) = (cost.len(), cost[0].len());
    fn go(
        cost: &[Vec<i64>],
        i: usize,
        left: usize,
        used: &mut Vec<bool>,
        acc: i64,
        best: &mut i64,
    ) {
        if left == 0 || i == cost.len() {
            if left == 0 {
                *best = (*best).min(acc);
            }
            return;
        }
        // rows may stay unmatched only when rows outnumber columns
        if cost.len() - i > left {
            go(cost, i + 1, left, used, acc, best);
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(cost, i + 1, left - 1, used, acc + cost[i][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = i64::MAX;
    go(cost, 0, r.min(c), &mut vec![false; c], 0, &mut best);
    best
}

fn hungarian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t0 = Instant::now();
    let trials = 2000;
    for t in 0..trials {
        let rows = rng.gen_range(1..=6);
        let cols = rng.gen_range(1..=6);
        let hi = if t % 2 == 0 { 4 } else { 1000 };
        let cost: Vec<Vec<i64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..=hi)).collect())
            .collect();
        let m = hungarian(&cost).map_err(|e| e.to_string())?;
        let want = brute_min(&cost);
        if m.total != want {
            return Err(format!(
                "{cost:?}: hungarian {} vs brute force {want}",
                m.total
            ));
        }
        let used: Vec<usize> = m.row_to_col.iter().flatten().copied().collect();
        let recomputed: i64 = m
            .row_to_col
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| cost[i][c]))
            .sum();
        let mut dedup = used.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if used.len() != rows.min(cols) || dedup.len() != used.len() || recomputed != m.total {
            return Err(format!("{cost:?}: invalid matching {:?}", m.row_to_col));
        }
    }
    let took = t0.elapsed();
    check(
        took < Duration::from_secs(5),
        format!(
            "{trials} matrices up to 6x6 exact, {:.2}s",
            took.as_secs_f64()
        ),
    )
}

fn greedy_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let t0 = Instant::now();
    let trials = 1500;
    for t in 0..trials {
        let len = rng.gen_range(1..=64);
        // small integer logits make ties frequent
        let draw = |rng: &mut ChaCha8Rng| -> f32 {
            if t % 2 == 0 {
                rng.gen_range(-3..=3) as f32
            } else {
                rng.gen_range(-5.0..5.0)
            }
        };
        let start: Vec<f32> = (0..len).map(|_| draw(&mut rng)).collect();
        let end: Vec<f32> = (0..len).map(|_| draw(&mut rng)).collect();
        for cap in [1, 5, 10, len] {
            let mut cands = vec![(0usize, 0usize)];
            for i in 1..len {
                for j in i..len {
                    if j - i < cap {
                        cands.push((i, j));
                    }
                }
            }
            let sc = |&(i, j): &(usize, usize)| start[i] as f64 + end[j] as f64;
            let best = cands.iter().map(sc).fold(f64::NEG_INFINITY, f64::max);
            let want = *cands.iter().filter(|c| sc(c) == best).min().unwrap();
            let (got, gs) = greedy_span(&start, &end, cap);
            if (got.start, got.end) != want || gs != best {
                return Err(format!(
                    "L={len} cap={cap}: greedy {got:?} ({gs}) vs exhaustive {want:?} ({best})"
                ));
            }
        }
    }
    let took = t0.elapsed();
    check(
        took < Duration::from_secs(5),
        format!(
            "{trials} logit pairs x caps {{1,5,10,L}} exact, {:.2}s",
            took.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn tiny_corpus(seed: u64, docs: usize) -> SynthCorpus {
    gen_synthetic(
        &SynthSpec {
            event_types: 1,
            roles_per_type: 2,
            multi_slot_roles: 1,
            multi_arg_prob: 1.0,
            role_presence: 1.0,
            filler_vocab: 20,
            entity_vocab: 10,
            max_entity_len: 2,
            sentences_per_doc: 1,
            min_sentence_len: 2,
            max_sentence_len: 3,
            distance_weights: [0.0, 0.0, 1.0, 0.0, 0.0],
            train_docs: docs,
            dev_docs: 1,
            test_docs: 1,
            ..SynthSpec::default()
        },
        seed,
    )
    .unwrap()
}

fn fixed_loss(
    params: &ModelParams<f64>,
    pipeline: &Pipeline,
    events: &[(PreparedEvent, Vec<SlotTarget>)],
) -> f64 {
    events
        .iter()
        .map(|(ev, targets)| {
            let layout = pipeline.layout(&ev.event_type).unwrap();
            let mut g =
                forward_graph::<f64, ChaCha8Rng>(params, &ev.marked.ids, layout, None).unwrap();
            let loss = g.add_loss(targets);
            g.tape.value(loss).data[0]
        })
        .sum()
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let c = tiny_corpus(3, 3);
    let pipeline = Pipeline::from_corpus(
        &c.train,
        c.ontology.clone(),
        PromptVariant::Soft,
        c.templates.clone(),
        32,
    )
    .unwrap();
    let cfg = ModelConfig {
        hidden: 8,
        heads: 2,
        ff_dim: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        max_positions: 32,
        dropout: 0.0,
        seed: 5,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::<f64>::init(&cfg, pipeline.vocab.len()).unwrap();
    let max_len = c.train.iter().map(|i| i.tokens.len() + 3).max().unwrap();

    // matching computed once from the greedy decode, then held fixed
    let mut events = Vec::new();
    for inst in &c.train {
        let ev = pipeline.prepare(inst).unwrap();
        let layout = pipeline.layout(&ev.event_type).unwrap();
        let out = forward(&params, &ev.marked.ids, layout).unwrap();
        let el = EventLogits {
            layout,
            context: &ev.marked,
            start: (0..out.logits_start.rows)
                .map(|k| out.logits_start.row(k).to_vec())
                .collect(),
            end: (0..out.logits_end.rows)
                .map(|k| out.logits_end.row(k).to_vec())
                .collect(),
        };
        let preds = spanprompt::assignment::decode_slots(&el, 10);
        let targets = assign_targets(layout, &preds, &ev.marked, LossMode::Bipartite).unwrap();
        events.push((ev, targets));
    }

    let mut analytic: Vec<Mat<f64>> = params
        .tensors
        .iter()
        .map(|t| Mat::zeros(t.rows, t.cols))
        .collect();
    for (ev, targets) in &events {
        let layout = pipeline.layout(&ev.event_type).unwrap();
        let mut g =
            forward_graph::<f64, ChaCha8Rng>(&params, &ev.marked.ids, layout, None).unwrap();
        let loss = g.add_loss(targets);
        for (a, d) in analytic.iter_mut().zip(g.tape.backward(loss)) {
            for (x, y) in a.data.iter_mut().zip(&d.data) {
                *x += y;
            }
        }
    }

    // five-point central stencil: O(h^4) truncation lets h stay large
    // enough that round-off in the loss is negligible
    let h = 1e-4;
    let mut worst = (0.0f64, String::new());
    let mut count = 0usize;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for t in 0..params.tensors.len() {
        for k in 0..params.tensors[t].data.len() {
            let orig = params.tensors[t].data[k];
            let mut at = |x: f64| {
                params.tensors[t].data[k] = x;
                fixed_loss(&params, &pipeline, &events)
            };
            let numeric = (at(orig - 2.0 * h) - 8.0 * at(orig - h) + 8.0 * at(orig + h)
                - at(orig + 2.0 * h))
                / (12.0 * h);
            params.tensors[t].data[k] = orig;
            let a = analytic[t].data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{}[{k}] analytic {a:.3e} numeric {numeric:.3e}", names[t]),
                );
            }
            count += 1;
        }
    }
    let took = t0.elapsed();
    check(
        worst.0 <= 1e-4 && took < Duration::from_secs(60),
        format!(
            "{count} parameters, L<={max_len}, max relative error {:.2e} at {} ({:.1}s)",
            worst.0,
            worst.1,
            took.as_secs_f64()
        ),
    )
}

/// Denominator floor: below this gradient magnitude the relative error is
/// measured against the floor, as f64 round-off in the loss (about 1e-16
/// relative, divided by 2*eps) dominates there.
const GRAD_FLOOR: f64 = 1e-6;

fn permutation_invariance() -> Outcome {
    let c = gen_synthetic(&SynthSpec::multi_arg_stress(), 21).unwrap();
    let pipeline = Pipeline::from_corpus(
        &c.train,
        c.ontology.clone(),
        PromptVariant::Manual,
        c.templates.clone(),
        192,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut distinct, mut tied, mut max_diff) = (0usize, 0usize, 0f64);
    for inst in c.train.iter().cycle().take(5000) {
        if distinct >= 100 && tied >= 100 {
            break;
        }
        let ev = pipeline.prepare(inst).unwrap();
        let layout = pipeline.layout(&ev.event_type).unwrap();
        let l = ev.marked.len();
        // coarse logits so greedy predictions often coincide with gold
        let mut logits = || -> Vec<Vec<f64>> {
            (0..layout.num_slots())
                .map(|_| (0..l).map(|_| rng.gen_range(-4.0..4.0)).collect())
                .collect()
        };
        let (start, end) = (logits(), logits());
        let mut shuffled = ev.marked.clone();
        shuffled.gold.shuffle(&mut rng);
        let a = EventLogits {
            layout,
            context: &ev.marked,
            start: start.clone(),
            end: end.clone(),
        };
        let b = EventLogits {
            layout,
            context: &shuffled,
            start,
            end,
        };
        let preds = spanprompt::assignment::decode_slots(&a, 10);
        // unique optimum per role: every injective pairing has a distinct cost
        let mut unique = true;
        let mut roles: Vec<&str> = layout.slots.iter().map(|s| s.role.as_str()).collect();
        roles.dedup();
        for role in roles {
            let slots: Vec<SpanPair> = layout.slots_of(role).map(|k| preds[k]).collect();
            let gold = ev.marked.gold_for(role);
            let gold_b = shuffled.gold_for(role);
            let ca = match_role(role, &slots, &gold).total_cost;
            let cb = match_role(role, &slots, &gold_b).total_cost;
            if ca != cb {
                return Err(format!(
                    "{}: role {role} assignment cost {ca} vs {cb} after permutation",
                    ev.doc_id
                ));
            }
            let mut padded = gold.clone();
            while padded.len() < slots.len() {
                padded.push(SpanPair::NONE);
            }
            let mut costs = Vec::new();
            permutations(padded.len(), &mut |perm| {
                costs.push(
                    perm.iter()
                        .take(slots.len())
                        .enumerate()
                        .map(|(j, &g)| padded[g].l1(&slots[j]))
                        .sum::<u64>(),
                );
            });
            costs.sort_unstable();
            if costs.len() > 1 && costs[0] == costs[1] {
                unique = false;
            }
        }
        if unique {
            if distinct < 100 {
                let la = total_loss(&[a], LossMode::Bipartite, 10).map_err(|e| e.to_string())?;
                let lb = total_loss(&[b], LossMode::Bipartite, 10).map_err(|e| e.to_string())?;
                max_diff = max_diff.max((la - lb).abs());
                distinct += 1;
            }
        } else {
            tied += 1;
        }
    }
    check(
        distinct == 100 && max_diff < 1e-9 && tied > 0,
        format!("{distinct} events with distinct costs, max |loss diff| {max_diff:.1e}; {tied} tied events with equal assignment cost"),
    )
}

fn permutations(n: usize, f: &mut impl FnMut(&[usize])) {
    fn go(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            go(v, k + 1, f);
            v.swap(k, i);
        }
    }
    go(&mut (0..n).collect(), 0, f);
}

// ---------------------------------------------------------------- training

fn default_pipeline(c: &SynthCorpus) -> Pipeline {
    Pipeline::from_corpus(
        &c.train,
        c.ontology.clone(),
        PromptVariant::Manual,
        c.templates.clone(),
        192,
    )
    .unwrap()
}

fn train_once(
    c: &SynthCorpus,
    settings: TrainSettings,
) -> (ModelParams<f32>, Vec<String>, Duration) {
    let p = default_pipeline(c);
    let t0 = Instant::now();
    let out = Trainer {
        pipeline: &p,
        model: ModelConfig::default(),
        settings,
    }
    .run(&c.train, &c.dev, |_| {})
    .unwrap();
    let log = out
        .log
        .iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect();
    (out.best, log, t0.elapsed())
}

fn end_to_end() -> Outcome {
    let c = gen_synthetic(&SynthSpec::default(), 7).unwrap();
    let settings = TrainSettings::default();
    let (best, log, took) = train_once(&c, settings.clone());
    let p = default_pipeline(&c);
    let test = evaluate(
        &best,
        &p,
        &p.prepare_all(&c.test).unwrap(),
        &c.test,
        settings.max_span_len,
    )
    .unwrap();
    let (best2, log2, took2) = train_once(&c, settings.clone());
    let same = log == log2 && best.tensors == best2.tensors;
    check(
        test.arg_c >= 0.90 && took < Duration::from_secs(600) && same,
        format!(
            "test Arg-C {:.4} (Arg-I {:.4}, Head-C {:.4}) after {} steps in {:.0}s; rerun {:.0}s identical: {same}",
            test.arg_c,
            test.arg_i,
            test.head_c,
            settings.steps,
            took.as_secs_f64(),
            took2.as_secs_f64()
        ),
    )
}

fn multi_arg_stress() -> Outcome {
    let c = gen_synthetic(&SynthSpec::multi_arg_stress(), 7).unwrap();
    let every_event_has_pair = c.test.iter().all(|i| {
        let mut n: BTreeMap<&str, usize> = BTreeMap::new();
        for a in &i.arguments {
            *n.entry(&a.role).or_default() += 1;
        }
        n.values().any(|&k| k == 2)
    });
    let (best, _, took) = train_once(&c, TrainSettings::default());
    let p = default_pipeline(&c);
    let prepared = p.prepare_all(&c.test).unwrap();
    let preds = predict_all(&best, &p, &prepared);
    let buckets = breakdown_argnum(&preds, &c.test).unwrap();
    let b2 = &buckets[2];
    check(
        every_event_has_pair && b2.label == "2" && b2.score.f1 >= 0.80,
        format!(
            "bucket-2 F1 {:.4} over {} gold args (every test event has a 2-argument role: {every_event_has_pair}), {:.0}s",
            b2.score.f1,
            b2.score.num_gold,
            took.as_secs_f64()
        ),
    )
}

fn predict_all(
    params: &ModelParams<f32>,
    p: &Pipeline,
    prepared: &[PreparedEvent],
) -> Vec<EventPrediction> {
    let mut stats = Default::default();
    prepared
        .iter()
        .map(|ev| {
            spanprompt::inference::predict_event(
                params,
                p,
                ev,
                spanprompt::inference::DecodeMode::Joint,
                10,
                &mut stats,
            )
            .unwrap()
        })
        .collect()
}

fn ablation() -> Outcome {
    let spec = SynthSpec {
        train_docs: 200,
        dev_docs: 50,
        test_docs: 100,
        ..SynthSpec::multi_arg_stress()
    };
    let c = gen_synthetic(&spec, 9).unwrap();
    let p = default_pipeline(&c);
    let base = TrainSettings {
        steps: ABLATION_STEPS,
        eval_every: 100,
        ..TrainSettings::default()
    };
    let seeds = [1, 2, 3];
    let t0 = Instant::now();
    let cells = ablation_grid(
        &p,
        &ModelConfig::default(),
        &base,
        &seeds,
        &c.train,
        &c.dev,
        &c.test,
    )
    .map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for cell in &cells {
        lines.push(format!(
            "{:?}{}: mean {:.4} {:?}",
            cell.loss_mode,
            if cell.shuffle_gold { "+shuffle" } else { "" },
            cell.mean_arg_c,
            cell.arg_c
                .iter()
                .map(|x| (x * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        ));
    }
    let get = |m: LossMode, s: bool| {
        cells
            .iter()
            .find(|c| c.loss_mode == m && c.shuffle_gold == s)
            .map(|c| c.mean_arg_c)
    };
    let direction = match (
        get(LossMode::FixedOrder, true),
        get(LossMode::Bipartite, true),
    ) {
        (Some(f), Some(b)) if f < b => {
            "fixed_order+shuffle below bipartite+shuffle (expected direction)"
        }
        _ => "fixed_order+shuffle NOT below bipartite+shuffle",
    };
    check(
        cells.len() == 4 && cells.iter().all(|c| c.arg_c.len() == seeds.len()),
        format!(
            "reported only, {ABLATION_STEPS} steps x 3 seeds in {:.0}s; {direction}; {}",
            t0.elapsed().as_secs_f64(),
            lines.join("; ")
        ),
    )
}

const ABLATION_STEPS: usize = 300;

fn efficiency_law() -> Outcome {
    let c = gen_synthetic(&SynthSpec::default(), 7).unwrap();
    let p = default_pipeline(&c);
    let params = ModelParams::<f32>::init(&ModelConfig::default(), p.vocab.len()).unwrap();
    let r = bench(&params, &p, &c.test, 10).map_err(|e| e.to_string())?;
    let slots: usize = c
        .test
        .iter()
        .map(|i| p.layout(&i.trigger.event_type).unwrap().num_slots())
        .sum();
    check(
        r.joint.prompt_passes == c.test.len()
            && r.sequential.prompt_passes == slots
            && r.joint.seconds < r.sequential.seconds
            && r.predictions_agree,
        format!(
            "{} events: joint {} passes {:.3}s, sequential {} passes (sum of slots {slots}) {:.3}s, {:.2}x",
            c.test.len(),
            r.joint.prompt_passes,
            r.joint.seconds,
            r.sequential.prompt_passes,
            r.sequential.seconds,
            r.speedup
        ),
    )
}

// ---------------------------------------------------------------- metrics

fn gold_event(doc: &str, args: &[(&str, usize, usize)]) -> EventInstance {
    EventInstance {
        doc_id: doc.into(),
        tokens: (0..40).map(|i| format!("w{i}")).collect(),
        sent_starts: vec![0, 8, 16, 24, 32],
        trigger: Trigger {
            span: SpanPair::new(17, 17),
            event_type: "E".into(),
        },
        arguments: args
            .iter()
            .map(|&(r, s, e)| Argument {
                span: SpanPair::new(s, e),
                role: r.into(),
            })
            .collect(),
    }
}

fn pred_event(doc: &str, args: &[(&str, usize, usize, f64)]) -> EventPrediction {
    EventPrediction {
        doc_id: doc.into(),
        event_type: "E".into(),
        trigger: TriggerRecord { start: 17, end: 18 },
        predictions: args
            .iter()
            .map(|&(r, s, e, sc)| PredictionRecord {
                role: r.into(),
                start: s,
                end: e + 1,
                score: sc,
            })
            .collect(),
    }
}

fn metric_fixtures() -> Outcome {
    let mut fails = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if got != want {
            fails.push(format!("{name}: {got} != {want}"));
        }
    };
    // P = 1, R = 1/2, F1 = 2/3
    let g = [gold_event("d", &[("r", 2, 3), ("r2", 5, 6)])];
    let p = [pred_event("d", &[("r", 2, 3, 1.0)])];
    let s = score(&p, &g, Metric::ArgC).unwrap();
    expect("2/3 precision", s.precision, 1.0);
    expect("2/3 recall", s.recall, 0.5);
    expect("2/3 f1", s.f1, 2.0 * 1.0 * 0.5 / 1.5);
    // right offsets, wrong role
    let p = [pred_event("d", &[("r2", 2, 3, 1.0)])];
    expect(
        "wrong role arg_i tp",
        score_counts(&p, &g, Metric::ArgI).unwrap().tp as f64,
        1.0,
    );
    expect(
        "wrong role arg_c tp",
        score_counts(&p, &g, Metric::ArgC).unwrap().tp as f64,
        0.0,
    );
    // head match: same first token, different end
    let p = [pred_event("d", &[("r", 2, 4, 1.0)])];
    expect(
        "head_c tp",
        score_counts(&p, &g, Metric::HeadC).unwrap().tp as f64,
        1.0,
    );
    expect(
        "head arg_c tp",
        score_counts(&p, &g, Metric::ArgC).unwrap().tp as f64,
        0.0,
    );
    // duplicates: one true positive, the other a false positive
    let p = [pred_event("d", &[("r", 2, 3, 0.9), ("r", 2, 3, 0.8)])];
    let s = score(&p, &g, Metric::ArgC).unwrap();
    expect("duplicate tp", s.tp as f64, 1.0);
    expect("duplicate precision", s.precision, 0.5);
    // degenerate cases
    let empty_g = [gold_event("d", &[])];
    let empty_p = [pred_event("d", &[])];
    expect(
        "empty/empty f1",
        score(&empty_p, &empty_g, Metric::ArgC).unwrap().f1,
        1.0,
    );
    expect(
        "empty pred f1",
        score(&empty_p, &g, Metric::ArgC).unwrap().f1,
        0.0,
    );
    // identity
    for m in Metric::ALL {
        let p: Vec<EventPrediction> = g.iter().map(EventPrediction::from_gold).collect();
        expect(m.name(), score(&p, &g, m).unwrap().f1, 1.0);
    }
    // the same fixture through a JSONL round trip
    let text = spanprompt::inference::predictions_to_jsonl(&[pred_event("d", &[("r", 2, 3, 1.0)])]);
    let back = spanprompt::inference::parse_predictions(&text, Path::new("fixture")).unwrap();
    expect(
        "jsonl f1",
        score(&back, &g, Metric::ArgC).unwrap().f1,
        2.0 / 3.0,
    );
    check(
        fails.is_empty(),
        if fails.is_empty() {
            "all hand-computed fixtures exact".into()
        } else {
            fails.join("; ")
        },
    )
}

fn random_case(rng: &mut ChaCha8Rng, events: usize) -> (Vec<EventPrediction>, Vec<EventInstance>) {
    let roles = ["a", "b", "c"];
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for e in 0..events {
        let doc = format!("d{e}");
        let span = |rng: &mut ChaCha8Rng| {
            let s = rng.gen_range(0..12) * 3;
            (s, s + rng.gen_range(0..2))
        };
        let g: Vec<(&str, usize, usize)> = (0..rng.gen_range(0..6))
            .map(|_| {
                let (s, t) = span(rng);
                (roles[rng.gen_range(0..3)], s, t)
            })
            .collect();
        let mut p: Vec<(&str, usize, usize, f64)> = Vec::new();
        for &(r, s, t) in &g {
            if rng.gen_bool(0.5) {
                let r = if rng.gen_bool(0.7) {
                    r
                } else {
                    roles[rng.gen_range(0..3)]
                };
                let t = if rng.gen_bool(0.8) { t } else { t + 1 };
                p.push((r, s, t, rng.gen()));
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            let (s, t) = span(rng);
            p.push((roles[rng.gen_range(0..3)], s, t, rng.gen()));
        }
        gold.push(gold_event(&doc, &g));
        preds.push(pred_event(&doc, &p));
    }
    (preds, gold)
}

fn sum(c: &[Counts]) -> Counts {
    let mut t = Counts::default();
    for x in c {
        t += *x;
    }
    t
}

fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for t in 0..1000 {
        let events = rng.gen_range(1..6);
        let (p, g) = random_case(&mut rng, events);
        let i = score(&p, &g, Metric::ArgI).unwrap().f1;
        let c = score(&p, &g, Metric::ArgC).unwrap().f1;
        if i < c {
            return Err(format!("case {t}: Arg-I {i} < Arg-C {c}"));
        }
        let overall = score_counts(&p, &g, Metric::ArgC).unwrap();
        let d = sum(&breakdown_distance_counts(&p, &g).unwrap());
        let n = sum(&breakdown_argnum_counts(&p, &g).unwrap());
        if d != overall || n != overall {
            return Err(format!(
                "case {t}: overall {overall:?}, distance sum {d:?}, argnum sum {n:?}"
            ));
        }
    }
    Ok("1000 random cases: Arg-I >= Arg-C, bucket counts sum to overall exactly".into())
}

// ---------------------------------------------------------------- audit

fn threshold_audit() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("..");
    let mut hits = Vec::new();
    let mut files = 0;
    let mut stack = vec![root.join("core/src"), root.join("ffi/src")];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "rs") {
                files += 1;
                let text = std::fs::read_to_string(&path).unwrap();
                for (n, line) in text.lines().enumerate() {
                    if line.to_lowercase().contains("thresh") {
                        hits.push(format!("{}:{}", path.display(), n + 1));
                    }
                }
            }
        }
    }
    let keys = config_keys(&toml::Value::try_from(RunConfig::default()).unwrap(), "");
    let bad_keys: Vec<&String> = keys
        .iter()
        .filter(|k| k.contains("thresh") || k.contains("min_score"))
        .collect();
    let inference_keys: Vec<&String> = keys
        .iter()
        .filter(|k| k.starts_with("inference."))
        .collect();
    check(
        hits.is_empty() && bad_keys.is_empty() && files > 0,
        format!(
            "{files} source files, {} config keys (inference: {inference_keys:?}); offending lines {hits:?}, keys {bad_keys:?}",
            keys.len()
        ),
    )
}

fn config_keys(v: &toml::Value, prefix: &str) -> Vec<String> {
    match v {
        toml::Value::Table(t) => t
            .iter()
            .flat_map(|(k, v)| {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                let mut out = vec![key.clone()];
                out.extend(config_keys(v, &key));
                out
            })
            .collect(),
        _ => Vec::new(),
    }
}

// ---------------------------------------------------------------- runner

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("hungarian_oracle", hungarian_oracle),
        ("greedy_span_oracle", greedy_oracle),
        ("gradient_check", gradient_check),
        ("permutation_invariance", permutation_invariance),
        ("metric_fixtures", metric_fixtures),
        ("metric_properties", metric_properties),
        ("threshold_audit", threshold_audit),
        ("efficiency_law", efficiency_law),
        ("end_to_end_training", end_to_end),
        ("multi_argument_stress", multi_arg_stress),
        ("ablation_grid", ablation),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
