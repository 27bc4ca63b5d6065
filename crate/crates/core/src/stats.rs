//! Mergeable cluster statistics.
//!
//! A cluster is summarized by its point count, its mean, and its SSE (sum of
//! squared Euclidean deviations from the mean, unnormalized). Two summaries
//! combine exactly:
//!
//! ```text
//! n   = n_a + n_b
//! c   = (n_a c_a + n_b c_b) / n
//! sse = sse_a + sse_b + (n_a n_b / n) |c_a - c_b|^2
//! ```
//!
//! The last term is the Ward variance increase. Because the combination is
//! exact, summaries can be folded in any order and still reproduce the SSE of
//! the pooled points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::squared_distance;
use crate::error::{Error, Result};

/// Identifier of a locally produced sub-cluster: the site that produced it
/// and its index within that site.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SubClusterId {
    pub site: u32,
    pub local: u32,
}

impl SubClusterId {
    pub fn new(site: u32, local: u32) -> Self {
        SubClusterId { site, local }
    }
}

impl fmt::Display for SubClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.site, self.local)
    }
}

impl FromStr for SubClusterId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (site, local) = s
            .split_once(':')
            .ok_or_else(|| format!("expected site:local, got {s:?}"))?;
        Ok(SubClusterId {
            site: site.parse().map_err(|e| format!("{s:?}: {e}"))?,
            local: local.parse().map_err(|e| format!("{s:?}: {e}"))?,
        })
    }
}

/// Count, mean and SSE of a set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: u64,
    pub center: Vec<f64>,
    pub sse: f64,
}

impl ClusterStats {
    pub fn singleton(point: &[f64]) -> Self {
        ClusterStats {
            count: 1,
            center: point.to_vec(),
            sse: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// SSE normalized by the point count.
    pub fn variance(&self) -> f64 {
        self.sse / self.count as f64
    }

    pub fn merge(&self, other: &ClusterStats) -> Result<ClusterStats> {
        merge_stats(self, other)
    }
}

/// A sub-cluster summary as transmitted by a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubClusterSummary {
    pub id: SubClusterId,
    #[serde(flatten)]
    pub stats: ClusterStats,
}

impl SubClusterSummary {
    pub fn new(id: SubClusterId, stats: ClusterStats) -> Self {
        SubClusterSummary { id, stats }
    }

    /// Merges two distinct sub-clusters; the result carries `self`'s id.
    pub fn merge(&self, other: &SubClusterSummary) -> Result<SubClusterSummary> {
        if self.id == other.id {
            return Err(Error::DuplicateId(self.id));
        }
        Ok(SubClusterSummary {
            id: self.id,
            stats: merge_stats(&self.stats, &other.stats)?,
        })
    }
}

/// A logical union of sub-clusters. No raw points are held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCluster {
    /// Sorted member ids.
    pub members: Vec<SubClusterId>,
    pub summary: ClusterStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub border: Option<Vec<SubClusterId>>,
}

impl GlobalCluster {
    pub fn from_summary(s: &SubClusterSummary) -> Self {
        GlobalCluster {
            members: vec![s.id],
            summary: s.stats.clone(),
            border: None,
        }
    }

    /// The smallest member id, used to name the cluster.
    pub fn representative(&self) -> SubClusterId {
        self.members[0]
    }
}

fn check_dims(a: &ClusterStats, b: &ClusterStats) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// `n_a n_b / (n_a + n_b) * |c_a - c_b|^2`: the SSE growth caused by pooling
/// the two clusters.
pub fn variance_increase(a: &ClusterStats, b: &ClusterStats) -> Result<f64> {
    check_dims(a, b)?;
    Ok(increase_unchecked(a, b))
}

pub(crate) fn increase_unchecked(a: &ClusterStats, b: &ClusterStats) -> f64 {
    let (na, nb) = (a.count as f64, b.count as f64);
    na * nb / (na + nb) * squared_distance(&a.center, &b.center)
}

pub fn merge_stats(a: &ClusterStats, b: &ClusterStats) -> Result<ClusterStats> {
    check_dims(a, b)?;
    let count = a.count + b.count;
    let (wa, wb) = (a.count as f64 / count as f64, b.count as f64 / count as f64);
    let center = a
        .center
        .iter()
        .zip(&b.center)
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    Ok(ClusterStats {
        count,
        center,
        sse: a.sse + b.sse + increase_unchecked(a, b),
    })
}

/// Inverse of [`merge_stats`]: the statistics of `whole` with `part` taken out.
///
/// Small negative SSE values caused by cancellation (within `1e-9` of the
/// magnitudes involved) are clamped to zero with a warning; anything larger
/// is an error.
pub fn remove_stats(whole: &ClusterStats, part: &ClusterStats) -> Result<ClusterStats> {
    check_dims(whole, part)?;
    if part.count >= whole.count {
        return Err(Error::InvalidRemoval {
            part: part.count,
            whole: whole.count,
        });
    }
    let count = whole.count - part.count;
    let (nw, np, nr) = (whole.count as f64, part.count as f64, count as f64);
    let center: Vec<f64> = whole
        .center
        .iter()
        .zip(&part.center)
        .map(|(w, p)| (nw * w - np * p) / nr)
        .collect();
    let mut rest = ClusterStats {
        count,
        center,
        sse: 0.0,
    };
    let inc = increase_unchecked(&rest, part);
    let sse = whole.sse - part.sse - inc;
    if sse < 0.0 {
        let tolerance = 1e-9 * whole.sse.max(part.sse).max(inc);
        if -sse > tolerance {
            return Err(Error::NegativeSse { sse, tolerance });
        }
        log::warn!("clamping sse {sse:e} to zero after removing {} points", part.count);
    } else {
        rest.sse = sse;
    }
    Ok(rest)
}

/// Exact two-pass summary: the mean first, then squared deviations from it.
pub fn summarize<'a, I>(points: I) -> Result<ClusterStats>
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: Clone,
{
    let iter = points.into_iter();
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0u64;
    for p in iter.clone() {
        if count == 0 {
            sum = vec![0.0; p.len()];
        } else if p.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: p.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("cannot summarize an empty point set"));
    }
    let center: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
    let sse = if count == 1 {
        0.0
    } else {
        iter.map(|p| squared_distance(p, &center)).sum()
    };
    Ok(ClusterStats { count, center, sse })
}

/// Single-pass (Welford) accumulator for the same statistics as [`summarize`].
#[derive(Debug, Clone, Default)]
pub struct StreamingStats {
    count: u64,
    mean: Vec<f64>,
    m2: f64,
}

impl StreamingStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if self.count == 0 {
            self.mean = vec![0.0; point.len()];
        } else if point.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: point.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for (m, x) in self.mean.iter_mut().zip(point) {
            let delta = x - *m;
            *m += delta / n;
            self.m2 += delta * (x - *m);
        }
        Ok(())
    }

    pub fn finish(self) -> Option<ClusterStats> {
        (self.count > 0).then_some(ClusterStats {
            count: self.count,
            center: self.mean,
            sse: self.m2,
        })
    }
}

/// Sum of the member-aggregate SSE values.
pub fn total_sse(globals: &[GlobalCluster]) -> f64 {
    globals.iter().map(|g| g.summary.sse).sum()
}

/// Folds summaries with [`merge_stats`] in the given order.
pub fn fold_stats<'a, I>(stats: I) -> Result<ClusterStats>
where
    I: IntoIterator<Item = &'a ClusterStats>,
{
    let mut iter = stats.into_iter();
    let first = iter
        .next()
        .ok_or(Error::Empty("cannot fold zero summaries"))?
        .clone();
    iter.try_fold(first, |acc, s| merge_stats(&acc, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(points: &[&[f64]]) -> ClusterStats {
        summarize(points.iter().copied()).unwrap()
    }

    /// Brute-force SSE of raw points around their own mean.
    fn oracle_sse(points: &[Vec<f64>]) -> f64 {
        let d = points[0].len();
        let n = points.len() as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n)
            .collect();
        points
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .sum()
    }

    #[test]
    fn merge_two_singletons() {
        let m = merge_stats(
            &ClusterStats::singleton(&[0.0, 0.0]),
            &ClusterStats::singleton(&[2.0, 0.0]),
        )
        .unwrap();
        assert_eq!(m.count, 2);
        assert_eq!(m.center, vec![1.0, 0.0]);
        assert_eq!(m.sse, 2.0);
    }

    #[test]
    fn merge_with_coincident_centers_adds_sse() {
        let a = stats(&[&[0.0, 1.0], &[2.0, 1.0]]);
        let b = stats(&[&[1.0, 0.0], &[1.0, 2.0], &[1.0, 1.0]]);
        assert_eq!(a.center, b.center);
        let m = merge_stats(&a, &b).unwrap();
        assert_eq!(m.sse, a.sse + b.sse);
    }

    #[test]
    fn merge_rejects_dimension_mismatch() {
        let err = merge_stats(
            &ClusterStats::singleton(&[0.0]),
            &ClusterStats::singleton(&[0.0, 1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn summary_merge_rejects_same_id() {
        let s = SubClusterSummary::new(SubClusterId::new(0, 0), ClusterStats::singleton(&[1.0]));
        assert!(matches!(s.merge(&s), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn increase_examples() {
        let a = ClusterStats::singleton(&[0.0, 0.0]);
        let b = ClusterStats::singleton(&[2.0, 0.0]);
        assert_eq!(variance_increase(&a, &b).unwrap(), 2.0);
        assert_eq!(variance_increase(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn increase_for_weighted_centers_matches_pooled_points() {
        let mut points = vec![vec![0.0]; 30];
        points.extend(vec![vec![1.0]; 70]);
        let oracle = oracle_sse(&points);
        assert!((oracle - 21.0).abs() < 1e-12);

        let a = ClusterStats {
            count: 30,
            center: vec![0.0],
            sse: 0.0,
        };
        let b = ClusterStats {
            count: 70,
            center: vec![1.0],
            sse: 0.0,
        };
        let inc = variance_increase(&a, &b).unwrap();
        assert!((inc - 21.0).abs() < 1e-12);
        assert!((merge_stats(&a, &b).unwrap().sse - oracle).abs() < 1e-12);
    }

    #[test]
    fn split_halves_merge_to_pooled_sse() {
        // Deterministic pseudo-random points; any split must reproduce the pool.
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        };
        let points: Vec<Vec<f64>> = (0..50).map(|_| vec![next(), next()]).collect();
        let (left, right) = points.split_at(17);
        let a = summarize(left.iter().map(Vec::as_slice)).unwrap();
        let b = summarize(right.iter().map(Vec::as_slice)).unwrap();
        let m = merge_stats(&a, &b).unwrap();
        let oracle = oracle_sse(&points);
        assert!((m.sse - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn remove_recovers_singleton() {
        let a = ClusterStats::singleton(&[0.0, 0.0]);
        let b = ClusterStats::singleton(&[2.0, 0.0]);
        let m = merge_stats(&a, &b).unwrap();
        let r = remove_stats(&m, &b).unwrap();
        assert_eq!(r, a);
    }

    #[test]
    fn remove_from_three() {
        let pa: &[&[f64]] = &[&[0.0, 0.0], &[1.0, 2.0]];
        let pb: &[&[f64]] = &[&[5.0, 1.0], &[6.0, -1.0], &[4.0, 0.5]];
        let pc: &[&[f64]] = &[&[-3.0, 2.0]];
        let (a, b, c) = (stats(pa), stats(pb), stats(pc));
        let whole = fold_stats([&a, &b, &c]).unwrap();
        let rest = remove_stats(&whole, &b).unwrap();

        let remaining: Vec<&[f64]> = pa.iter().chain(pc).copied().collect();
        let oracle = summarize(remaining.iter().copied()).unwrap();
        assert_eq!(rest.count, oracle.count);
        assert!((rest.sse - oracle.sse).abs() <= 1e-9 * oracle.sse);
        for (x, y) in rest.center.iter().zip(&oracle.center) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn remove_rejects_whole_or_more() {
        let a = ClusterStats::singleton(&[0.0]);
        assert!(matches!(
            remove_stats(&a, &a),
            Err(Error::InvalidRemoval { part: 1, whole: 1 })
        ));
    }

    #[test]
    fn remove_rejects_inconsistent_part() {
        // `part` claims a large SSE that `whole` cannot contain.
        let whole = ClusterStats {
            count: 4,
            center: vec![0.0],
            sse: 1.0,
        };
        let part = ClusterStats {
            count: 2,
            center: vec![0.0],
            sse: 5.0,
        };
        assert!(matches!(
            remove_stats(&whole, &part),
            Err(Error::NegativeSse { .. })
        ));
    }

    #[test]
    fn summarize_examples() {
        let s = stats(&[&[1.0, 1.0]]);
        assert_eq!((s.count, s.center.clone(), s.sse), (1, vec![1.0, 1.0], 0.0));

        let s = stats(&[&[0.0, 0.0], &[2.0, 0.0], &[1.0, 3.0]]);
        assert_eq!(s.count, 3);
        assert_eq!(s.center, vec![1.0, 1.0]);
        assert!((s.sse - 8.0).abs() < 1e-12);
    }

    #[test]
    fn summarize_rejects_empty() {
        let empty: Vec<&[f64]> = Vec::new();
        assert!(matches!(summarize(empty), Err(Error::Empty(_))));
    }

    #[test]
    fn total_sse_of_nothing() {
        assert_eq!(total_sse(&[]), 0.0);
        let g = GlobalCluster::from_summary(&SubClusterSummary::new(
            SubClusterId::new(0, 0),
            ClusterStats {
                count: 3,
                center: vec![0.0],
                sse: 4.5,
            },
        ));
        assert_eq!(total_sse(std::slice::from_ref(&g)), 4.5);
    }

    #[test]
    fn id_round_trips_through_text() {
        let id = SubClusterId::new(2, 17);
        assert_eq!(id.to_string().parse::<SubClusterId>().unwrap(), id);
        assert!("2-17".parse::<SubClusterId>().is_err());
    }
}
