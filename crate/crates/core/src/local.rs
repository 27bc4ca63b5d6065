//! Per-site clustering into sub-clusters.
//!
//! Both algorithms are seeded with D² (k-means++) sampling from a ChaCha8
//! stream, so a given `(points, config)` pair always produces the same result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};
use crate::stats::{summarize, SubClusterId, SubClusterSummary};

/// Distances below this are clamped in the harmonic weights.
pub const KHM_DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[serde(alias = "k-means")]
    Kmeans,
    #[serde(alias = "kharmonic", alias = "k-harmonic")]
    Khm,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            "khm" | "kharmonic" | "k-harmonic" => Ok(Algorithm::Khm),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalClusteringConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub max_iterations: usize,
    /// Relative change of the objective below which iteration stops.
    pub convergence_tol: f64,
    pub seed: u64,
    /// Distance exponent `p` of KHM_p.
    pub khm_power: f64,
}

impl Default for LocalClusteringConfig {
    fn default() -> Self {
        LocalClusteringConfig {
            algorithm: Algorithm::Kmeans,
            k: 10,
            max_iterations: 100,
            convergence_tol: 1e-6,
            seed: 0,
            khm_power: 3.5,
        }
    }
}

impl LocalClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::config("convergence_tol must be nonnegative"));
        }
        if self.algorithm == Algorithm::Khm && (self.khm_power.is_nan() || self.khm_power <= 2.0) {
            return Err(Error::config("khm_power must exceed 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    /// Index into `summaries` for every point.
    pub assignment: Vec<usize>,
    pub summaries: Vec<SubClusterSummary>,
    pub objective_trace: Vec<f64>,
    pub k_effective: usize,
}

/// Runs the configured algorithm.
pub fn cluster(points: &Dataset, cfg: &LocalClusteringConfig, site: u32) -> Result<LocalResult> {
    match cfg.algorithm {
        Algorithm::Kmeans => kmeans(points, cfg, site),
        Algorithm::Khm => kharmonic_means(points, cfg, site),
    }
}

fn check_input(points: &Dataset, cfg: &LocalClusteringConfig) -> Result<()> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("no points to cluster"));
    }
    if cfg.k > points.len() {
        return Err(Error::TooManyClusters {
            k: cfg.k,
            points: points.len(),
        });
    }
    Ok(())
}

/// D² seeding. When every remaining point coincides with a chosen center the
/// lowest unchosen index is taken.
pub(crate) fn seed_centers(points: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points.row(first).to_vec()];
    let mut d2: Vec<f64> = points
        .rows()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the last increment.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        let c = points.row(pick).to_vec();
        for (d, p) in d2.iter_mut().zip(points.rows()) {
            *d = d.min(squared_distance(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn update_means(points: &Dataset, labels: &[usize], centers: &mut [Vec<f64>]) {
    let d = points.dim();
    let mut sums = vec![vec![0.0; d]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &l) in points.rows().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for ((c, s), &n) in centers.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

/// Lloyd iterations from D² seeding.
///
/// An emptied center is re-seeded at the point farthest from its own center
/// (taken from a cluster with more than one point).
pub fn kmeans(points: &Dataset, cfg: &LocalClusteringConfig, site: u32) -> Result<LocalResult> {
    check_input(points, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers = seed_centers(points, cfg.k, &mut rng);
    let n = points.len();
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for iteration in 0..cfg.max_iterations {
        let mut next = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n);
        for p in points.rows() {
            let (j, d) = nearest(p, &centers);
            next.push(j);
            dists.push(d);
        }
        repair_empty(&mut next, &mut dists, &mut centers, points);
        let objective: f64 = dists.iter().sum();

        let unchanged = next == labels;
        labels = next;
        let converged = match trace.last() {
            Some(&prev) => unchanged || relative_change(prev, objective) <= cfg.convergence_tol,
            None => false,
        };
        trace.push(objective);
        if converged || iteration + 1 == cfg.max_iterations {
            break;
        }
        update_means(points, &labels, &mut centers);
    }

    finish(points, labels, trace, site)
}

fn repair_empty(
    labels: &mut [usize],
    dists: &mut [f64],
    centers: &mut [Vec<f64>],
    points: &Dataset,
) {
    let mut counts = vec![0usize; centers.len()];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for j in 0..centers.len() {
        if counts[j] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] > 1 && donor.is_none_or(|b| dists[i] > dists[b]) {
                donor = Some(i);
            }
        }
        let Some(i) = donor else { break };
        counts[labels[i]] -= 1;
        counts[j] = 1;
        labels[i] = j;
        dists[i] = 0.0;
        centers[j] = points.row(i).to_vec();
    }
}

fn relative_change(prev: f64, current: f64) -> f64 {
    if prev == current {
        0.0
    } else {
        (prev - current).abs() / prev.abs().max(f64::MIN_POSITIVE)
    }
}

/// Harmonic weights for one point: per-center membership weights `q_j` and
/// the point's KHM objective term `k / sum_j d_j^-p`.
///
/// Computed relative to the nearest distance so that large powers of small
/// distances do not overflow.
fn harmonic_weights(point: &[f64], centers: &[Vec<f64>], p: f64, q: &mut [f64]) -> f64 {
    let dist: Vec<f64> = centers
        .iter()
        .map(|c| squared_distance(point, c).sqrt().max(KHM_DISTANCE_FLOOR))
        .collect();
    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
    // sum_j (dmin/d_j)^p, so sum_j d_j^-p = dmin^-p * ratio_sum
    let ratio_sum: f64 = dist.iter().map(|d| (dmin / d).powf(p)).sum();
    // q_j = d_j^(-p-2) / (sum_l d_l^-p)^2
    //     = dmin^(p-2) (dmin/d_j)^(p+2) / ratio_sum^2
    let scale = dmin.powf(p - 2.0) / (ratio_sum * ratio_sum);
    for (qj, d) in q.iter_mut().zip(&dist) {
        *qj = scale * (dmin / d).powf(p + 2.0);
    }
    centers.len() as f64 * dmin.powf(p) / ratio_sum
}

/// Runs KHM_p center updates from the given centers. Returns the final centers
/// and the objective value before each update.
pub(crate) fn khm_iterate(
    points: &Dataset,
    mut centers: Vec<Vec<f64>>,
    cfg: &LocalClusteringConfig,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = centers.len();
    let d = points.dim();
    let mut trace: Vec<f64> = Vec::new();
    let mut q = vec![0.0; k];
    for _ in 0..cfg.max_iterations {
        let mut num = vec![vec![0.0; d]; k];
        let mut den = vec![0.0; k];
        let mut objective = 0.0;
        for p in points.rows() {
            objective += harmonic_weights(p, &centers, cfg.khm_power, &mut q);
            for j in 0..k {
                den[j] += q[j];
                for (acc, x) in num[j].iter_mut().zip(p) {
                    *acc += q[j] * x;
                }
            }
        }
        let converged = trace
            .last()
            .is_some_and(|&prev| relative_change(prev, objective) <= cfg.convergence_tol);
        trace.push(objective);
        if converged {
            break;
        }
        for j in 0..k {
            if den[j] > 0.0 && den[j].is_finite() {
                centers[j] = num[j].iter().map(|v| v / den[j]).collect();
            }
        }
    }
    (centers, trace)
}

/// K-harmonic means (KHM_p) with a final hard nearest-center assignment.
///
/// Clusters left without points after the hard assignment are dropped, so
/// `k_effective` may be below `k`.
pub fn kharmonic_means(
    points: &Dataset,
    cfg: &LocalClusteringConfig,
    site: u32,
) -> Result<LocalResult> {
    check_input(points, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = seed_centers(points, cfg.k, &mut rng);
    let (centers, trace) = khm_iterate(points, init, cfg);
    let labels = points.rows().map(|p| nearest(p, &centers).0).collect();
    finish(points, labels, trace, site)
}

fn finish(points: &Dataset, labels: Vec<usize>, trace: Vec<f64>, site: u32) -> Result<LocalResult> {
    let assignment = dense_labels(&labels);
    let summaries = summarize_result(points, &assignment, site)?;
    Ok(LocalResult {
        assignment,
        k_effective: summaries.len(),
        summaries,
        objective_trace: trace,
    })
}

/// Relabels to `0..m` preserving the order of the original label values.
pub fn dense_labels(labels: &[usize]) -> Vec<usize> {
    let mut used: Vec<usize> = labels.to_vec();
    used.sort_unstable();
    used.dedup();
    labels
        .iter()
        .map(|l| used.binary_search(l).unwrap())
        .collect()
}

/// One summary per distinct label, in ascending label order, with ids
/// `(site, 0..m)`.
pub fn summarize_result(
    points: &Dataset,
    assignment: &[usize],
    site: u32,
) -> Result<Vec<SubClusterSummary>> {
    if assignment.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: assignment.len(),
            right: points.len(),
        });
    }
    let dense = dense_labels(assignment);
    let groups = dense.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, &l) in dense.iter().enumerate() {
        members[l].push(i);
    }
    members
        .into_iter()
        .enumerate()
        .map(|(local, idx)| {
            let stats = summarize(idx.iter().map(|&i| points.row(i)))?;
            Ok(SubClusterSummary::new(SubClusterId::new(site, local as u32), stats))
        })
        .collect()
}
