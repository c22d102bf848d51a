//! Same-role argument assignment: optimal pairing of slot predictions with
//! gold spans and the per-slot cross-entropy loss that follows it.
//!
//! Only training uses this module. Inference decodes every slot on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::greedy_span_in;
use crate::prompting::PromptLayout;
use crate::textenc::MarkedContext;

pub use crate::span::SpanPair;

/// Result of [`hungarian`]: `row_to_col[i]` is the column matched to row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub row_to_col: Vec<Option<usize>>,
    pub total: i64,
}

/// Minimum cost of a matching of size `min(rows, cols)` on a sub-matrix.
/// Shortest augmenting path with potentials, O(n^2 m).
fn min_cost(cost: &[Vec<i64>], rows: &[usize], cols: &[usize]) -> i64 {
    if rows.is_empty() || cols.is_empty() {
        return 0;
    }
    if rows.len() > cols.len() {
        let at = |i: usize, j: usize| cost[rows[j]][cols[i]];
        return solve_wide(cols.len(), rows.len(), at).1;
    }
    let at = |i: usize, j: usize| cost[rows[i]][cols[j]];
    solve_wide(rows.len(), cols.len(), at).1
}

/// Assignment for `n <= m`: every row gets a distinct column.
fn solve_wide(n: usize, m: usize, at: impl Fn(usize, usize) -> i64) -> (Vec<usize>, i64) {
    debug_assert!(n <= m);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| at(i, j)).sum();
    (assign, total)
}

/// Minimum-cost injective matching covering the smaller side of a
/// rectangular cost matrix.
///
/// Among optimal matchings the lexicographically smallest `row_to_col` is
/// returned, with "unmatched" ordered after every column.
pub fn hungarian(cost: &[Vec<i64>]) -> Result<Matching> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Assignment("empty cost matrix".into()));
    }
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::Assignment("ragged cost matrix".into()));
    }
    if cost.iter().flatten().any(|&c| c < 0) {
        return Err(Error::Assignment("negative cost".into()));
    }
    let all_rows: Vec<usize> = (0..rows).collect();
    let mut free: Vec<usize> = (0..cols).collect();
    let best = min_cost(cost, &all_rows, &free);

    let mut row_to_col = vec![None; rows];
    let mut acc = 0i64;
    for i in 0..rows {
        let rest = &all_rows[i + 1..];
        let mut chosen = None;
        for (pos, &j) in free.iter().enumerate() {
            let mut others = free.clone();
            others.remove(pos);
            if acc + cost[i][j] + min_cost(cost, rest, &others) == best {
                chosen = Some(pos);
                break;
            }
        }
        match chosen {
            Some(pos) => {
                let j = free.remove(pos);
                acc += cost[i][j];
                row_to_col[i] = Some(j);
            }
            None => {
                // only reachable when rows outnumber columns
                debug_assert!(rest.len() >= free.len());
            }
        }
        if free.is_empty() {
            break;
        }
    }
    debug_assert_eq!(acc, best);
    Ok(Matching {
        row_to_col,
        total: best,
    })
}

/// Pads gold spans with the no-answer span up to `m`. Longer lists are
/// returned unchanged; the matcher then keeps the `m` best-matched golds.
pub fn pad_gold(gold: &[SpanPair], m: usize) -> Vec<SpanPair> {
    let mut out = gold.to_vec();
    while out.len() < m {
        out.push(SpanPair::NONE);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldRef {
    Gold(usize),
    Pad,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanAssignment {
    pub role: String,
    /// `(slot index within role, matched gold)`, one entry per slot.
    pub pairs: Vec<(usize, GoldRef)>,
    /// Sum of L1 distances over the matched pairs.
    pub total_cost: u64,
}

/// Matches the `m` slot predictions of one role to its gold spans under the
/// L1 span distance.
pub fn match_role(role: &str, preds: &[SpanPair], gold: &[SpanPair]) -> SpanAssignment {
    let m = preds.len();
    if m == 0 {
        return SpanAssignment {
            role: role.to_string(),
            pairs: Vec::new(),
            total_cost: 0,
        };
    }
    let padded = pad_gold(gold, m);
    let cost: Vec<Vec<i64>> = padded
        .iter()
        .map(|g| preds.iter().map(|p| g.l1(p) as i64).collect())
        .collect();
    let matching = hungarian(&cost).expect("non-empty, non-negative cost matrix");
    let mut pairs = vec![(0usize, GoldRef::Pad); m];
    let mut filled = vec![false; m];
    for (gi, slot) in matching.row_to_col.iter().enumerate() {
        if let Some(j) = *slot {
            let r = if gi < gold.len() {
                GoldRef::Gold(gi)
            } else {
                GoldRef::Pad
            };
            pairs[j] = (j, r);
            filled[j] = true;
        }
    }
    debug_assert!(filled.iter().all(|&f| f));
    SpanAssignment {
        role: role.to_string(),
        pairs,
        total_cost: matching.total as u64,
    }
}

fn log_softmax_at(logits: &[f64], idx: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits[idx] - lse
}

/// Mean of the start and end cross-entropies for one slot.
pub fn slot_loss(start_logits: &[f64], end_logits: &[f64], gold: SpanPair) -> f64 {
    -(log_softmax_at(start_logits, gold.start) + log_softmax_at(end_logits, gold.end)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Optimal slot/gold pairing per role.
    Bipartite,
    /// Slot `j` of a role takes the role's `j`-th gold in annotation order.
    FixedOrder,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bipartite" => Ok(Self::Bipartite),
            "fixed_order" => Ok(Self::FixedOrder),
            _ => Err(Error::Config(format!("unknown loss mode `{s}`"))),
        }
    }
}

/// Gold target of one slot (global slot index in layout order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotTarget {
    pub slot: usize,
    pub target: SpanPair,
}

/// Decides which gold span each slot is trained towards. Every role of the
/// layout is covered; roles without gold train all their slots on the
/// no-answer span.
pub fn assign_targets(
    layout: &PromptLayout,
    preds: &[SpanPair],
    context: &MarkedContext,
    mode: LossMode,
) -> Result<Vec<SlotTarget>> {
    if preds.len() != layout.num_slots() {
        return Err(Error::Validation(format!(
            "{} predictions for {} slots",
            preds.len(),
            layout.num_slots()
        )));
    }
    for (role, _) in &context.gold {
        if layout.slots_of(role).next().is_none() {
            return Err(Error::Validation(format!(
                "gold role `{role}` has no prompt slot"
            )));
        }
    }
    let mut roles: Vec<&str> = Vec::new();
    for s in &layout.slots {
        if !roles.contains(&s.role.as_str()) {
            roles.push(&s.role);
        }
    }
    let mut out = Vec::with_capacity(preds.len());
    for role in roles {
        let slots: Vec<usize> = layout.slots_of(role).collect();
        let gold = context.gold_for(role);
        match mode {
            LossMode::Bipartite => {
                let role_preds: Vec<SpanPair> = slots.iter().map(|&k| preds[k]).collect();
                let a = match_role(role, &role_preds, &gold);
                for (j, g) in a.pairs {
                    let target = match g {
                        GoldRef::Gold(i) => gold[i],
                        GoldRef::Pad => SpanPair::NONE,
                    };
                    out.push(SlotTarget {
                        slot: slots[j],
                        target,
                    });
                }
            }
            LossMode::FixedOrder => {
                let padded = pad_gold(&gold, slots.len());
                for (j, &k) in slots.iter().enumerate() {
                    out.push(SlotTarget {
                        slot: k,
                        target: padded[j],
                    });
                }
            }
        }
    }
    out.sort_by_key(|t| t.slot);
    Ok(out)
}

/// Logit values of one event, one row per slot.
#[derive(Debug, Clone)]
pub struct EventLogits<'a> {
    pub layout: &'a PromptLayout,
    pub context: &'a MarkedContext,
    pub start: Vec<Vec<f64>>,
    pub end: Vec<Vec<f64>>,
}

/// Greedy decode of every slot of an event.
pub fn decode_slots(ev: &EventLogits<'_>, max_span_len: usize) -> Vec<SpanPair> {
    let blocked = ev.context.blocked();
    ev.start
        .iter()
        .zip(&ev.end)
        .map(|(s, e)| greedy_span_in(s, e, max_span_len, &blocked).0)
        .collect()
}

/// Summed slot losses over a batch. Predictions for the matching come from
/// greedy decoding of the same logits.
pub fn total_loss(batch: &[EventLogits<'_>], mode: LossMode, max_span_len: usize) -> Result<f64> {
    let mut total = 0.0;
    for ev in batch {
        let preds = decode_slots(ev, max_span_len);
        for t in assign_targets(ev.layout, &preds, ev.context, mode)? {
            total += slot_loss(&ev.start[t.slot], &ev.end[t.slot], t.target);
        }
    }
    Ok(total)
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Minimum over all injective matchings of size min(rows, cols).
    pub fn brute_force(cost: &[Vec<i64>]) -> i64 {
        let rows = cost.len();
        let cols = cost[0].len();
        let k = rows.min(cols);
        let mut best = i64::MAX;
        let mut used_c = vec![false; cols];
        let mut used_r = vec![false; rows];
        fn rec(
            cost: &[Vec<i64>],
            depth: usize,
            k: usize,
            acc: i64,
            used_r: &mut [bool],
            used_c: &mut [bool],
            start_row: usize,
            best: &mut i64,
        ) {
            if depth == k {
                *best = (*best).min(acc);
                return;
            }
            for i in start_row..cost.len() {
                if used_r[i] {
                    continue;
                }
                used_r[i] = true;
                for j in 0..cost[0].len() {
                    if !used_c[j] {
                        used_c[j] = true;
                        rec(
                            cost,
                            depth + 1,
                            k,
                            acc + cost[i][j],
                            used_r,
                            used_c,
                            i + 1,
                            best,
                        );
                        used_c[j] = false;
                    }
                }
                used_r[i] = false;
            }
        }
        rec(cost, 0, k, 0, &mut used_r, &mut used_c, 0, &mut best);
        best
    }
}
