//! Global merging of sub-cluster summaries and the perturbation pass.
//!
//! Merging is greedy: among all pairs of current global clusters whose union
//! satisfies the variance limit, the pair with the smallest variance increase
//! is merged, until no admissible pair is left. The limit is
//! `sigma_factor` times the larger of the two operands' variances.
//!
//! Perturbation then revisits border and multi-attributed sub-clusters and
//! moves each to its nearest foreign global cluster when that strictly lowers
//! the total SSE.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{distance, squared_distance};
use crate::error::{Error, Result};
use crate::stats::{
    fold_stats, increase_unchecked, merge_stats, remove_stats, total_sse, ClusterStats,
    GlobalCluster, SubClusterId, SubClusterSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Compare SSE divided by count.
    NormalizedVariance,
    /// Compare unnormalized SSE.
    RawSse,
}

impl FromStr for ConstraintMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normalized" | "normalized_variance" => Ok(ConstraintMode::NormalizedVariance),
            "raw" | "raw_sse" => Ok(ConstraintMode::RawSse),
            other => Err(format!("unknown constraint mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub constraint_mode: ConstraintMode,
    pub sigma_factor: f64,
    /// Border size per global cluster, as a fraction of its member count.
    pub border_fraction: f64,
    pub multi_attr_epsilon: f64,
    pub max_perturbation_passes: usize,
    /// When both operands have zero SSE, the merge is admitted iff the
    /// increase per point is below this fraction of the squared coordinate
    /// scale (the diagonal of the bounding box of all sub-cluster centers).
    pub zero_variance_floor: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            constraint_mode: ConstraintMode::NormalizedVariance,
            sigma_factor: 2.0,
            border_fraction: 0.2,
            multi_attr_epsilon: 0.1,
            max_perturbation_passes: 5,
            zero_variance_floor: 1e-12,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_factor.is_nan() || self.sigma_factor <= 0.0 || !self.sigma_factor.is_finite() {
            return Err(Error::config("sigma_factor must be a positive number"));
        }
        if !(self.border_fraction > 0.0 && self.border_fraction <= 1.0) {
            return Err(Error::config("border_fraction must lie in (0, 1]"));
        }
        if self.multi_attr_epsilon.is_nan() || self.multi_attr_epsilon < 0.0 {
            return Err(Error::config("multi_attr_epsilon must be nonnegative"));
        }
        if self.max_perturbation_passes == 0 {
            return Err(Error::config("max_perturbation_passes must be at least 1"));
        }
        if self.zero_variance_floor.is_nan() || self.zero_variance_floor < 0.0 {
            return Err(Error::config("zero_variance_floor must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Merge,
    Move,
    Reject,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Merge => "merge",
            EventKind::Move => "move",
            EventKind::Reject => "reject",
        })
    }
}

/// One merge or perturbation decision.
///
/// Global clusters are named by their smallest member id. Actors are
/// `[a, b]` for a merge and `[sub-cluster, source, target]` for moves and
/// rejections. `variance_delta` is the increase for merges and the total-SSE
/// change (applied or not) for moves and rejections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub actors: Vec<SubClusterId>,
    pub variance_delta: f64,
    pub total_sse_after: f64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t", self.kind)?;
        for (i, a) in self.actors.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "\t{:?}\t{:?}", self.variance_delta, self.total_sse_after)
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [kind, actors, delta, total] = fields[..] else {
            return Err(format!("expected 4 tab-separated fields: {line:?}"));
        };
        let kind = match kind {
            "merge" => EventKind::Merge,
            "move" => EventKind::Move,
            "reject" => EventKind::Reject,
            other => return Err(format!("unknown event kind {other:?}")),
        };
        let actors = actors
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(TraceEvent {
            kind,
            actors,
            variance_delta: delta.parse().map_err(|e| format!("{delta:?}: {e}"))?,
            total_sse_after: total.parse().map_err(|e| format!("{total:?}: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub events: Vec<TraceEvent>,
}

impl MergeTrace {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// One event per line, tab-separated.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> std::result::Result<Self, String> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()?;
        Ok(MergeTrace { events })
    }
}

/// Squared diagonal of the bounding box of the summaries' centers.
pub fn coordinate_scale_sq(summaries: &[SubClusterSummary]) -> f64 {
    let Some(first) = summaries.first() else {
        return 0.0;
    };
    let mut lo = first.stats.center.clone();
    let mut hi = lo.clone();
    for s in &summaries[1..] {
        for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(&s.stats.center) {
            *l = l.min(x);
            *h = h.max(x);
        }
    }
    squared_distance(&lo, &hi)
}

/// Whether the union of `a` and `b` stays within the variance limit.
///
/// `scale_sq` only matters when both operands have zero SSE; see
/// [`MergeConfig::zero_variance_floor`].
pub fn merge_predicate(a: &ClusterStats, b: &ClusterStats, cfg: &MergeConfig, scale_sq: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let inc = increase_unchecked(a, b);
    let count = (a.count + b.count) as f64;
    // Joining clusters with the same center never spreads them out.
    if inc == 0.0 {
        return true;
    }
    if a.sse == 0.0 && b.sse == 0.0 {
        return inc / count < cfg.zero_variance_floor * scale_sq;
    }
    let merged_sse = a.sse + b.sse + inc;
    match cfg.constraint_mode {
        ConstraintMode::NormalizedVariance => {
            merged_sse / count < cfg.sigma_factor * a.variance().max(b.variance())
        }
        ConstraintMode::RawSse => merged_sse < cfg.sigma_factor * a.sse.max(b.sse),
    }
}

#[derive(Debug, Clone)]
struct Pair {
    increase: f64,
    admissible: bool,
}

/// Greedy minimum-variance-increase merging under the variance limit.
///
/// The result is sorted by representative id and does not depend on the
/// order of `summaries`. Ties on the increase go to the lexicographically
/// smallest pair of representatives.
pub fn greedy_merge(
    summaries: &[SubClusterSummary],
    cfg: &MergeConfig,
) -> Result<(Vec<GlobalCluster>, MergeTrace)> {
    cfg.validate()?;
    if summaries.is_empty() {
        return Err(Error::Empty("no summaries to merge"));
    }
    let mut sorted: Vec<&SubClusterSummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| s.id);
    for w in sorted.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateId(w[0].id));
        }
        if w[0].stats.dim() != w[1].stats.dim() {
            return Err(Error::DimensionMismatch {
                expected: w[0].stats.dim(),
                actual: w[1].stats.dim(),
            });
        }
    }
    let owned: Vec<SubClusterSummary> = sorted.iter().map(|s| (*s).clone()).collect();
    let scale_sq = coordinate_scale_sq(&owned);

    let mut clusters: Vec<Option<GlobalCluster>> =
        owned.iter().map(|s| Some(GlobalCluster::from_summary(s))).collect();
    let m = clusters.len();
    let evaluate = |a: &GlobalCluster, b: &GlobalCluster| Pair {
        increase: increase_unchecked(&a.summary, &b.summary),
        admissible: merge_predicate(&a.summary, &b.summary, cfg, scale_sq),
    };
    // pairs[i][j] for i < j
    let mut pairs: Vec<Vec<Pair>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if j > i {
                        evaluate(clusters[i].as_ref().unwrap(), clusters[j].as_ref().unwrap())
                    } else {
                        Pair {
                            increase: f64::INFINITY,
                            admissible: false,
                        }
                    }
                })
                .collect()
        })
        .collect();

    let mut trace = MergeTrace::default();
    let mut total: f64 = owned.iter().map(|s| s.stats.sse).sum();
    loop {
        // Slots are in representative order, so (i, j) order is id order.
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..m {
            if clusters[i].is_none() {
                continue;
            }
            for j in i + 1..m {
                if clusters[j].is_none() || !pairs[i][j].admissible {
                    continue;
                }
                let inc = pairs[i][j].increase;
                if best.is_none_or(|(_, _, b)| inc < b) {
                    best = Some((i, j, inc));
                }
            }
        }
        let Some((i, j, inc)) = best else { break };

        let b = clusters[j].take().unwrap();
        let a = clusters[i].as_mut().unwrap();
        let actors = vec![a.representative(), b.representative()];
        a.summary = merge_stats(&a.summary, &b.summary)?;
        a.members.extend(b.members);
        a.members.sort_unstable();
        total += inc;
        trace.events.push(TraceEvent {
            kind: EventKind::Merge,
            actors,
            variance_delta: inc,
            total_sse_after: total,
        });

        let merged = clusters[i].as_ref().unwrap();
        for (other, c) in clusters.iter().enumerate() {
            if other == i {
                continue;
            }
            if let Some(c) = c {
                let (lo, hi) = (other.min(i), other.max(i));
                pairs[lo][hi] = evaluate(merged, c);
            }
        }
    }

    Ok((clusters.into_iter().flatten().collect(), trace))
}

/// The `k` members whose centers lie farthest from the cluster's center,
/// farthest first. Ties go to the smaller id.
pub fn compute_border(
    g: &GlobalCluster,
    members: &BTreeMap<SubClusterId, &SubClusterSummary>,
    k: usize,
) -> Vec<SubClusterId> {
    let mut ranked: Vec<(f64, SubClusterId)> = g
        .members
        .iter()
        .filter_map(|id| members.get(id))
        .map(|s| (squared_distance(&s.stats.center, &g.summary.center), s.id))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(k).map(|(_, id)| id).collect()
}

/// Index and distance of the nearest global center other than `own`.
fn nearest_foreign(point: &[f64], globals: &[GlobalCluster], own: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, g) in globals.iter().enumerate() {
        if j == own {
            continue;
        }
        let d = distance(point, &g.summary.center);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((j, d));
        }
    }
    best
}

/// Sub-clusters nearly equidistant to their own global center and the nearest
/// foreign one: `dist(x, foreign) <= (1 + epsilon) * dist(x, own)`.
pub fn find_multi_attributed(
    globals: &[GlobalCluster],
    summaries: &BTreeMap<SubClusterId, &SubClusterSummary>,
    cfg: &MergeConfig,
) -> Vec<SubClusterId> {
    let mut out = Vec::new();
    for i in 0..globals.len() {
        out.extend(multi_attributed_members(globals, i, summaries, cfg));
    }
    out.sort_unstable();
    out
}

fn multi_attributed_members(
    globals: &[GlobalCluster],
    i: usize,
    summaries: &BTreeMap<SubClusterId, &SubClusterSummary>,
    cfg: &MergeConfig,
) -> Vec<SubClusterId> {
    let g = &globals[i];
    g.members
        .iter()
        .filter_map(|id| summaries.get(id))
        .filter(|s| {
            let own = distance(&s.stats.center, &g.summary.center);
            nearest_foreign(&s.stats.center, globals, i)
                .is_some_and(|(_, foreign)| foreign <= (1.0 + cfg.multi_attr_epsilon) * own)
        })
        .map(|s| s.id)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbOutcome {
    pub globals: Vec<GlobalCluster>,
    pub events: Vec<TraceEvent>,
    pub passes: usize,
}

/// Border-size rule: `max(1, round(fraction * members))`.
pub fn border_size(members: usize, fraction: f64) -> usize {
    ((fraction * members as f64).round() as usize).max(1)
}

/// Moves border and multi-attributed sub-clusters to their nearest foreign
/// global cluster whenever that strictly lowers the total SSE.
///
/// A move is applied only if it lowers the total by more than `1e-12` of the
/// two clusters' combined SSE, so rounding noise cannot cause ping-ponging.
/// Moves that would empty their source are skipped.
pub fn perturb(
    globals: Vec<GlobalCluster>,
    summaries: &[SubClusterSummary],
    cfg: &MergeConfig,
) -> Result<PerturbOutcome> {
    cfg.validate()?;
    let lookup: BTreeMap<SubClusterId, &SubClusterSummary> =
        summaries.iter().map(|s| (s.id, s)).collect();
    let mut globals = globals;
    let mut events = Vec::new();
    let mut total = total_sse(&globals);
    let mut passes = 0;

    if globals.len() < 2 {
        for g in &mut globals {
            let k = border_size(g.members.len(), cfg.border_fraction);
            g.border = Some(compute_border(g, &lookup, k));
        }
        return Ok(PerturbOutcome {
            globals,
            events,
            passes,
        });
    }

    while passes < cfg.max_perturbation_passes {
        passes += 1;
        let mut moved = false;
        for i in 0..globals.len() {
            let k = border_size(globals[i].members.len(), cfg.border_fraction);
            let border = compute_border(&globals[i], &lookup, k);
            let mut candidates = border.clone();
            for id in multi_attributed_members(&globals, i, &lookup, cfg) {
                if !candidates.contains(&id) {
                    candidates.push(id);
                }
            }
            globals[i].border = Some(border);

            let mut ordered: Vec<(f64, SubClusterId)> = candidates
                .into_iter()
                .map(|id| {
                    let c = &lookup[&id].stats.center;
                    (nearest_foreign(c, &globals, i).map_or(f64::INFINITY, |x| x.1), id)
                })
                .collect();
            ordered.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            for (_, id) in ordered {
                if globals[i].members.len() < 2 {
                    break;
                }
                let x = &lookup[&id].stats;
                let Some((j, _)) = nearest_foreign(&x.center, &globals, i) else {
                    break;
                };
                let source = remove_stats(&globals[i].summary, x)?;
                let target = merge_stats(&globals[j].summary, x)?;
                let before = globals[i].summary.sse + globals[j].summary.sse;
                let delta = (source.sse + target.sse) - before;
                let actors = vec![id, globals[i].representative(), globals[j].representative()];

                if delta < -1e-12 * before {
                    globals[i].members.retain(|m| *m != id);
                    globals[j].members.push(id);
                    globals[j].members.sort_unstable();
                    for g in [i, j] {
                        globals[g].summary = refold(&globals[g], &lookup)?;
                    }
                    total += delta;
                    moved = true;
                    events.push(TraceEvent {
                        kind: EventKind::Move,
                        actors,
                        variance_delta: delta,
                        total_sse_after: total,
                    });
                } else {
                    events.push(TraceEvent {
                        kind: EventKind::Reject,
                        actors,
                        variance_delta: delta,
                        total_sse_after: total,
                    });
                }
            }
        }
        if !moved {
            break;
        }
    }

    globals.sort_by_key(|g| g.representative());
    Ok(PerturbOutcome {
        globals,
        events,
        passes,
    })
}

/// Recomputes a cluster's summary from its members, in id order, so repeated
/// moves do not accumulate removal error.
fn refold(g: &GlobalCluster, lookup: &BTreeMap<SubClusterId, &SubClusterSummary>) -> Result<ClusterStats> {
    fold_stats(g.members.iter().map(|id| &lookup[id].stats))
}
