//! Training loop: per example, forward with dropout, greedy-decode every
//! slot, match slots to gold per role, accumulate slot cross-entropy
//! gradients; per batch, clip and take an AdamW step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{assign_targets, LossMode};
use crate::data::EventInstance;
use crate::error::{Error, Result};
use crate::evaluation::{score, Metric};
use crate::inference::{greedy_span_in, predict_event, DecodeMode, PredictStats};
use crate::neural::{
    clip_grad_norm, forward_graph, AdamW, LinearSchedule, Mat, ModelConfig, ModelParams,
};
use crate::pipeline::{Pipeline, PreparedEvent};
use crate::span::SpanPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub grad_clip: f64,
    pub weight_decay: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub shuffle_gold: bool,
    pub max_span_len: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: 8,
            steps: 2000,
            learning_rate: 3e-4,
            warmup_fraction: 0.1,
            grad_clip: 5.0,
            weight_decay: 0.01,
            eval_every: 200,
            seed: 42,
            loss_mode: LossMode::Bipartite,
            shuffle_gold: false,
            max_span_len: crate::inference::DEFAULT_MAX_SPAN_LEN,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.max_span_len == 0 {
            return bad("max_span_len must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevScores {
    pub arg_i: f64,
    pub arg_c: f64,
    pub head_c: f64,
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<DevScores>,
}

pub struct TrainOutcome {
    /// Weights with the best dev Arg-C (the final weights without dev data).
    pub best: ModelParams<f32>,
    pub best_step: usize,
    pub best_dev: Option<DevScores>,
    pub log: Vec<MetricsRecord>,
}

/// Arg-I / Arg-C / Head-C F1 of `params` on a held-out split.
pub fn evaluate(
    params: &ModelParams<f32>,
    pipeline: &Pipeline,
    prepared: &[PreparedEvent],
    gold: &[EventInstance],
    max_span_len: usize,
) -> Result<DevScores> {
    let mut stats = PredictStats::default();
    let preds = prepared
        .iter()
        .map(|ev| {
            predict_event(
                params,
                pipeline,
                ev,
                DecodeMode::Joint,
                max_span_len,
                &mut stats,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DevScores {
        arg_i: score(&preds, gold, Metric::ArgI)?.f1,
        arg_c: score(&preds, gold, Metric::ArgC)?.f1,
        head_c: score(&preds, gold, Metric::HeadC)?.f1,
    })
}

/// Independent stream per (seed, purpose, a, b).
fn derived_rng(seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (a << 20) ^ b);
    rng
}

/// Permutes every role's gold list; the per-example permutation is fixed for
/// the whole run.
pub fn shuffle_gold_order(events: &mut [PreparedEvent], seed: u64) {
    for (i, ev) in events.iter_mut().enumerate() {
        let mut rng = derived_rng(seed, 3, i as u64, 0);
        ev.marked.gold.shuffle(&mut rng);
    }
}

/// Loss and gradients of one example; the slot/gold matching is computed
/// from the greedy decode of this same forward pass.
pub fn example_gradients(
    params: &ModelParams<f32>,
    pipeline: &Pipeline,
    ev: &PreparedEvent,
    mode: LossMode,
    max_span_len: usize,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Mat<f32>>)> {
    let layout = pipeline.layout(&ev.event_type)?;
    let mut g = forward_graph(params, &ev.marked.ids, layout, dropout_rng)?;
    let blocked = ev.marked.blocked();
    let (ls, le) = (g.tape.value(g.logits_start), g.tape.value(g.logits_end));
    let preds: Vec<SpanPair> = (0..ls.rows)
        .map(|k| greedy_span_in(ls.row(k), le.row(k), max_span_len, &blocked).0)
        .collect();
    let targets = assign_targets(layout, &preds, &ev.marked, mode)?;
    let loss = g.add_loss(&targets);
    let value = g.tape.value(loss).data[0] as f64;
    Ok((value, g.tape.backward(loss)))
}

pub struct Trainer<'a> {
    pub pipeline: &'a Pipeline,
    pub model: ModelConfig,
    pub settings: TrainSettings,
}

impl Trainer<'_> {
    /// Runs the configured number of steps. `on_record` sees every metrics
    /// record as it is produced.
    pub fn run(
        &self,
        train: &[EventInstance],
        dev: &[EventInstance],
        mut on_record: impl FnMut(&MetricsRecord),
    ) -> Result<TrainOutcome> {
        let s = &self.settings;
        s.validate()?;
        if train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let mut model = self.model.clone();
        model.seed = s.seed;
        let mut params = ModelParams::<f32>::init(&model, self.pipeline.vocab.len())?;
        let mut examples = self.pipeline.prepare_all(train)?;
        if s.shuffle_gold {
            shuffle_gold_order(&mut examples, s.seed);
        }
        let dev_prepared = self.pipeline.prepare_all(dev)?;
        let eval = |p: &ModelParams<f32>| -> Result<Option<DevScores>> {
            if dev.is_empty() {
                return Ok(None);
            }
            evaluate(p, self.pipeline, &dev_prepared, dev, s.max_span_len).map(Some)
        };

        let mut log = Vec::new();
        let mut emit = |r: MetricsRecord, log: &mut Vec<MetricsRecord>| {
            on_record(&r);
            log.push(r);
        };
        if s.steps == 0 {
            let dev_scores = eval(&params)?;
            emit(
                MetricsRecord {
                    step: 0,
                    loss: None,
                    lr: None,
                    grad_norm: None,
                    dev: dev_scores,
                },
                &mut log,
            );
            return Ok(TrainOutcome {
                best: params,
                best_step: 0,
                best_dev: dev_scores,
                log,
            });
        }

        let schedule = LinearSchedule::new(s.learning_rate, s.steps, s.warmup_fraction);
        let mut opt = AdamW::new(&params, s.weight_decay);
        let mut order: Vec<usize> = Vec::new();
        let mut cursor = 0;
        let mut epoch = 0u64;
        let mut best: Option<(f64, usize, ModelParams<f32>, DevScores)> = None;
        let scale = 1.0 / s.batch_size as f32;

        for step in 0..s.steps {
            let mut grads: Vec<Mat<f32>> = params
                .tensors
                .iter()
                .map(|t| Mat::zeros(t.rows, t.cols))
                .collect();
            let mut loss_sum = 0.0;
            for b in 0..s.batch_size {
                if cursor == order.len() {
                    order = (0..examples.len()).collect();
                    order.shuffle(&mut derived_rng(s.seed, 1, epoch, 0));
                    epoch += 1;
                    cursor = 0;
                }
                let ex = &examples[order[cursor]];
                cursor += 1;
                let mut rng = derived_rng(s.seed, 2, step as u64, b as u64);
                let (loss, g) = example_gradients(
                    &params,
                    self.pipeline,
                    ex,
                    s.loss_mode,
                    s.max_span_len,
                    Some(&mut rng),
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { step });
                }
                loss_sum += loss;
                for (acc, g) in grads.iter_mut().zip(&g) {
                    for (a, v) in acc.data.iter_mut().zip(&g.data) {
                        *a += v * scale;
                    }
                }
            }
            let grad_norm = clip_grad_norm(&mut grads, s.grad_clip);
            if !grad_norm.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            let lr = schedule.lr(step);
            opt.step(&mut params, &grads, lr);

            let done = step + 1;
            let dev_scores = if done % s.eval_every == 0 || done == s.steps {
                eval(&params)?
            } else {
                None
            };
            if let Some(d) = dev_scores {
                log::info!(
                    "step {done}: loss {:.4} dev arg_i {:.4} arg_c {:.4} head_c {:.4}",
                    loss_sum / s.batch_size as f64,
                    d.arg_i,
                    d.arg_c,
                    d.head_c
                );
                if best.as_ref().map_or(true, |b| d.arg_c > b.0) {
                    best = Some((d.arg_c, done, params.clone(), d));
                }
            }
            emit(
                MetricsRecord {
                    step: done,
                    loss: Some(loss_sum / s.batch_size as f64),
                    lr: Some(lr),
                    grad_norm: Some(grad_norm),
                    dev: dev_scores,
                },
                &mut log,
            );
        }
        Ok(match best {
            Some((_, step, p, d)) => TrainOutcome {
                best: p,
                best_step: step,
                best_dev: Some(d),
                log,
            },
            None => TrainOutcome {
                best: params,
                best_step: s.steps,
                best_dev: None,
                log,
            },
        })
    }
}

/// One finished run of a seed x learning-rate sweep.
pub struct SweepRun {
    pub seed: u64,
    pub learning_rate: f64,
    pub outcome: TrainOutcome,
}

/// Trains every (seed, learning rate) pair. The selected run has the best
/// dev Arg-C; ties go to the earlier run in seed-major order.
pub fn sweep(
    pipeline: &Pipeline,
    model: &ModelConfig,
    base: &TrainSettings,
    seeds: &[u64],
    learning_rates: &[f64],
    train: &[EventInstance],
    dev: &[EventInstance],
    mut on_record: impl FnMut(u64, f64, &MetricsRecord),
) -> Result<(Vec<SweepRun>, usize)> {
    if seeds.is_empty() || learning_rates.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one seed and one learning rate".into(),
        ));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        for &lr in learning_rates {
            let trainer = Trainer {
                pipeline,
                model: model.clone(),
                settings: TrainSettings {
                    seed,
                    learning_rate: lr,
                    ..base.clone()
                },
            };
            let outcome = trainer.run(train, dev, |r| on_record(seed, lr, r))?;
            runs.push(SweepRun {
                seed,
                learning_rate: lr,
                outcome,
            });
        }
    }
    let mut chosen = 0;
    for (i, r) in runs.iter().enumerate() {
        let f = |r: &SweepRun| r.outcome.best_dev.map_or(f64::NEG_INFINITY, |d| d.arg_c);
        if f(r) > f(&runs[chosen]) {
            chosen = i;
        }
    }
    Ok((runs, chosen))
}

/// One cell of the loss-mode x gold-order ablation, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub loss_mode: LossMode,
    pub shuffle_gold: bool,
    /// Held-out Arg-C F1 per seed, in seed order.
    pub arg_c: Vec<f64>,
    pub mean_arg_c: f64,
}

/// Trains every combination of {bipartite, fixed_order} x {original,
/// shuffled gold order} for each seed and scores the best-dev weights on
/// `test`.
pub fn ablation_grid(
    pipeline: &Pipeline,
    model: &ModelConfig,
    base: &TrainSettings,
    seeds: &[u64],
    train: &[EventInstance],
    dev: &[EventInstance],
    test: &[EventInstance],
) -> Result<Vec<AblationCell>> {
    let test_prepared = pipeline.prepare_all(test)?;
    let mut cells = Vec::new();
    for loss_mode in [LossMode::Bipartite, LossMode::FixedOrder] {
        for shuffle_gold in [false, true] {
            let mut arg_c = Vec::new();
            for &seed in seeds {
                let trainer = Trainer {
                    pipeline,
                    model: model.clone(),
                    settings: TrainSettings {
                        seed,
                        loss_mode,
                        shuffle_gold,
                        ..base.clone()
                    },
                };
                let out = trainer.run(train, dev, |_| {})?;
                arg_c.push(
                    evaluate(&out.best, pipeline, &test_prepared, test, base.max_span_len)?.arg_c,
                );
            }
            let mean_arg_c = arg_c.iter().sum::<f64>() / arg_c.len().max(1) as f64;
            cells.push(AblationCell {
                loss_mode,
                shuffle_gold,
                arg_c,
                mean_arg_c,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{gen_synthetic, SynthSpec};
    use crate::prompting::PromptVariant;

    fn tiny() -> (
        Pipeline,
        Vec<EventInstance>,
        Vec<EventInstance>,
        ModelConfig,
    ) {
        let c = gen_synthetic(
            &SynthSpec {
                train_docs: 12,
                dev_docs: 4,
                test_docs: 1,
                ..SynthSpec::default()
            },
            4,
        )
        .unwrap();
        let p = Pipeline::from_corpus(
            &c.train,
            c.ontology,
            PromptVariant::Concat,
            c.templates,
            128,
        )
        .unwrap();
        let m = ModelConfig {
            hidden: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            ff_dim: 32,
            max_positions: 128,
            ..ModelConfig::default()
        };
        (p, c.train, c.dev, m)
    }

    fn settings(steps: usize) -> TrainSettings {
        TrainSettings {
            batch_size: 2,
            steps,
            eval_every: 2,
            learning_rate: 1e-3,
            ..TrainSettings::default()
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (p, train, dev, m) = tiny();
        let t = Trainer {
            pipeline: &p,
            model: m,
            settings: settings(4),
        };
        let a = t.run(&train, &dev, |_| {}).unwrap();
        let b = t.run(&train, &dev, |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best.tensors, b.best.tensors);
        assert_eq!(a.log.len(), 4);
        assert!(a.log.iter().all(|r| r.loss.unwrap().is_finite()));
    }

    #[test]
    fn zero_steps_returns_initial_weights() {
        let (p, train, dev, m) = tiny();
        let t = Trainer {
            pipeline: &p,
            model: m.clone(),
            settings: settings(0),
        };
        let out = t.run(&train, &dev, |_| {}).unwrap();
        let mut cfg = m;
        cfg.seed = 42;
        let init = ModelParams::<f32>::init(&cfg, p.vocab.len()).unwrap();
        assert_eq!(out.best.tensors, init.tensors);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].step, 0);
        assert!(out.log[0].dev.is_some());
    }

    #[test]
    fn loss_decreases_on_a_repeated_batch() {
        let (p, train, _, m) = tiny();
        let t = Trainer {
            pipeline: &p,
            model: ModelConfig { dropout: 0.0, ..m },
            settings: TrainSettings {
                warmup_fraction: 0.0,
                ..settings(30)
            },
        };
        let out = t.run(&train[..2], &[], |_| {}).unwrap();
        let first = out.log[0].loss.unwrap();
        let last = out.log.last().unwrap().loss.unwrap();
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn fixed_order_with_shuffled_gold_runs() {
        let (p, train, dev, m) = tiny();
        let t = Trainer {
            pipeline: &p,
            model: m,
            settings: TrainSettings {
                loss_mode: LossMode::FixedOrder,
                shuffle_gold: true,
                ..settings(2)
            },
        };
        assert_eq!(t.run(&train, &dev, |_| {}).unwrap().log.len(), 2);
    }

    #[test]
    fn sweep_picks_best_dev() {
        let (p, train, dev, m) = tiny();
        let (runs, chosen) = sweep(
            &p,
            &m,
            &settings(2),
            &[1, 2],
            &[1e-3, 1e-2],
            &train,
            &dev,
            |_, _, _| {},
        )
        .unwrap();
        assert_eq!(runs.len(), 4);
        let best = runs[chosen].outcome.best_dev.unwrap().arg_c;
        assert!(runs
            .iter()
            .all(|r| r.outcome.best_dev.unwrap().arg_c <= best));
    }
}
