//! Multi-site simulation of the distributed pipeline.
//!
//! Each site clusters its shard independently; the resulting summaries are
//! flattened into scalar messages and gathered at the merging site, which
//! decodes them, merges, perturbs, and projects global labels back onto every
//! point through its local sub-cluster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::local::{self, Algorithm, LocalClusteringConfig, LocalResult};
use crate::merge::{greedy_merge, perturb, EventKind, MergeConfig, MergeTrace};
use crate::metrics::adjusted_rand_index;
use crate::stats::{total_sse, ClusterStats, GlobalCluster, SubClusterId, SubClusterSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    #[default]
    RandomUniform,
    Contiguous,
}

/// Points held by one site, with their positions in the full dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub indices: Vec<usize>,
    pub points: Dataset,
}

/// Splits a dataset into `sites` disjoint shards.
///
/// `RandomUniform` draws every point's site independently; `Contiguous`
/// cuts the rows into consecutive blocks whose sizes differ by at most one.
pub fn partition(
    data: &Dataset,
    sites: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<Vec<Shard>> {
    if sites == 0 {
        return Err(Error::config("at least one site is required"));
    }
    if sites > data.len() {
        return Err(Error::TooManySites {
            sites,
            points: data.len(),
        });
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); sites];
    match strategy {
        PartitionStrategy::RandomUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..data.len() {
                buckets[rng.random_range(0..sites)].push(i);
            }
        }
        PartitionStrategy::Contiguous => {
            let base = data.len() / sites;
            let extra = data.len() % sites;
            let mut start = 0;
            for (s, bucket) in buckets.iter_mut().enumerate() {
                let len = base + usize::from(s < extra);
                bucket.extend(start..start + len);
                start += len;
            }
        }
    }
    Ok(buckets
        .into_iter()
        .map(|indices| Shard {
            points: data.select(&indices),
            indices,
        })
        .collect())
}

/// Scalars gathered at the merging site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    /// `(d + 2) * k_effective` per site: center, count and SSE of each summary.
    pub per_site_numbers_sent: Vec<u64>,
    /// Sub-cluster identifiers (site, number) per site, counted apart.
    pub per_site_id_numbers: Vec<u64>,
    pub total_numbers_sent: u64,
    /// Numbers that actually cross the network (the merging site's own
    /// summaries stay local).
    pub wire_numbers_sent: u64,
    /// `3 * d * sum(k_i)` over the configured `k_i`.
    pub paper_model_elements: u64,
    pub bytes_at_64bit: u64,
    pub merging_site: usize,
}

/// Flattens summaries into `[count, center.., sse]` records.
pub fn encode_summaries(summaries: &[SubClusterSummary]) -> (Vec<f64>, Vec<u32>) {
    let mut numbers = Vec::new();
    let mut ids = Vec::new();
    for s in summaries {
        numbers.push(s.stats.count as f64);
        numbers.extend_from_slice(&s.stats.center);
        numbers.push(s.stats.sse);
        ids.push(s.id.site);
        ids.push(s.id.local);
    }
    (numbers, ids)
}

pub fn decode_summaries(numbers: &[f64], ids: &[u32], dim: usize) -> Result<Vec<SubClusterSummary>> {
    let record = dim + 2;
    if !numbers.len().is_multiple_of(record) || numbers.len() / record * 2 != ids.len() {
        return Err(Error::LengthMismatch {
            left: numbers.len(),
            right: ids.len(),
        });
    }
    Ok(numbers
        .chunks_exact(record)
        .zip(ids.chunks_exact(2))
        .map(|(r, id)| {
            SubClusterSummary::new(
                SubClusterId::new(id[0], id[1]),
                ClusterStats {
                    count: r[0] as u64,
                    center: r[1..=dim].to_vec(),
                    sse: r[dim + 1],
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub k: usize,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub partition: PartitionStrategy,
    pub seed: u64,
    pub merging_site: usize,
    pub baseline: Option<BaselineSpec>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            partition: PartitionStrategy::RandomUniform,
            seed: 0,
            merging_site: 0,
            baseline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteState {
    pub site_index: usize,
    pub shard: Shard,
    pub local_result: LocalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site_index: usize,
    pub k_requested: usize,
    pub k_effective: usize,
    /// Positions of this site's points in the input dataset.
    pub point_indices: Vec<usize>,
    pub local_labels: Vec<usize>,
    pub global_labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelMapEntry {
    pub id: SubClusterId,
    pub global: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_sse: f64,
    pub k_global: usize,
    pub merge_events: usize,
    pub perturbation_moves: usize,
    pub perturbation_passes: usize,
    pub centralized_baseline_sse: Option<f64>,
    pub adjusted_rand_index: Option<f64>,
    pub baseline_adjusted_rand_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub ledger: CommLedger,
    /// Sorted by sub-cluster id.
    pub global_label_map: Vec<LabelMapEntry>,
    pub global_clusters: Vec<GlobalCluster>,
    pub sites: Vec<SiteReport>,
    /// Global label of every input point, in dataset order.
    pub labels: Vec<usize>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: MergeTrace,
}

impl RunResult {
    pub fn global_of(&self, id: SubClusterId) -> Option<usize> {
        self.global_label_map
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| self.global_label_map[i].global)
    }
}

/// Clusters every shard, concurrently, with its own configuration.
pub fn cluster_sites(shards: Vec<Shard>, configs: &[LocalClusteringConfig]) -> Result<Vec<SiteState>> {
    if shards.len() != configs.len() {
        return Err(Error::LengthMismatch {
            left: shards.len(),
            right: configs.len(),
        });
    }
    let results: Vec<Result<LocalResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .zip(configs)
            .enumerate()
            .map(|(i, (shard, cfg))| scope.spawn(move || local::cluster(&shard.points, cfg, i as u32)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("local clustering thread panicked"))
            .collect()
    });
    shards
        .into_iter()
        .zip(results)
        .enumerate()
        .map(|(site_index, (shard, r))| {
            Ok(SiteState {
                site_index,
                shard,
                local_result: r?,
            })
        })
        .collect()
}

/// Runs partition, local clustering, gather, merge, perturbation and label
/// projection.
pub fn run_pipeline(
    data: &Dataset,
    site_configs: &[LocalClusteringConfig],
    merge_cfg: &MergeConfig,
    opts: &PipelineOptions,
    truth: Option<&[usize]>,
) -> Result<RunResult> {
    if site_configs.is_empty() {
        return Err(Error::config("at least one site configuration is required"));
    }
    for cfg in site_configs {
        cfg.validate()?;
    }
    merge_cfg.validate()?;
    if opts.merging_site >= site_configs.len() {
        return Err(Error::config(format!(
            "merging site {} does not exist ({} sites)",
            opts.merging_site,
            site_configs.len()
        )));
    }
    if let Some(t) = truth {
        if t.len() != data.len() {
            return Err(Error::LengthMismatch {
                left: t.len(),
                right: data.len(),
            });
        }
    }

    let shards = partition(data, site_configs.len(), opts.partition, opts.seed)?;
    let sites = cluster_sites(shards, site_configs)?;
    let dim = data.dim();

    let mut warnings = Vec::new();
    for (site, cfg) in sites.iter().zip(site_configs) {
        if site.local_result.k_effective < cfg.k {
            let msg = format!(
                "site {} produced {} non-empty sub-clusters out of k = {}",
                site.site_index, site.local_result.k_effective, cfg.k
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    // Gather: the merging site first, then the others in site order.
    let order = std::iter::once(opts.merging_site)
        .chain((0..sites.len()).filter(|&s| s != opts.merging_site));
    let mut per_site_numbers = vec![0u64; sites.len()];
    let mut per_site_ids = vec![0u64; sites.len()];
    let mut gathered = Vec::new();
    for s in order {
        let (numbers, ids) = encode_summaries(&sites[s].local_result.summaries);
        per_site_numbers[s] = numbers.len() as u64;
        per_site_ids[s] = ids.len() as u64;
        gathered.extend(decode_summaries(&numbers, &ids, dim)?);
    }
    let total_numbers: u64 = per_site_numbers.iter().sum();
    let k_sum: u64 = site_configs.iter().map(|c| c.k as u64).sum();
    let ledger = CommLedger {
        wire_numbers_sent: total_numbers - per_site_numbers[opts.merging_site],
        per_site_numbers_sent: per_site_numbers,
        per_site_id_numbers: per_site_ids,
        total_numbers_sent: total_numbers,
        paper_model_elements: 3 * dim as u64 * k_sum,
        bytes_at_64bit: total_numbers * 8,
        merging_site: opts.merging_site,
    };

    let (merged, mut trace) = greedy_merge(&gathered, merge_cfg)?;
    let perturbed = perturb(merged, &gathered, merge_cfg)?;
    let merge_events = trace.count(EventKind::Merge);
    trace.events.extend(perturbed.events);
    let globals = perturbed.globals;

    let mut label_map: Vec<LabelMapEntry> = globals
        .iter()
        .enumerate()
        .flat_map(|(g, c)| c.members.iter().map(move |&id| LabelMapEntry { id, global: g }))
        .collect();
    label_map.sort();

    let lookup = |id: SubClusterId| {
        label_map[label_map.binary_search_by_key(&id, |e| e.id).expect("every sub-cluster is mapped")]
            .global
    };
    let mut labels = vec![0usize; data.len()];
    let mut reports = Vec::with_capacity(sites.len());
    for (site, cfg) in sites.into_iter().zip(site_configs) {
        let local = &site.local_result;
        let global_labels: Vec<usize> = local
            .assignment
            .iter()
            .map(|&l| lookup(local.summaries[l].id))
            .collect();
        for (&i, &g) in site.shard.indices.iter().zip(&global_labels) {
            labels[i] = g;
        }
        reports.push(SiteReport {
            site_index: site.site_index,
            k_requested: cfg.k,
            k_effective: local.k_effective,
            point_indices: site.shard.indices,
            local_labels: local.assignment.clone(),
            global_labels,
        });
    }

    let baseline = match opts.baseline {
        Some(spec) => Some(centralized_baseline(data, spec.k, spec.algorithm, opts.seed)?),
        None => None,
    };
    let metrics = RunMetrics {
        total_sse: total_sse(&globals),
        k_global: globals.len(),
        merge_events,
        perturbation_moves: trace.count(EventKind::Move),
        perturbation_passes: perturbed.passes,
        centralized_baseline_sse: baseline.as_ref().map(|b| b.1),
        adjusted_rand_index: truth.map(|t| adjusted_rand_index(&labels, t)).transpose()?,
        baseline_adjusted_rand_index: match (truth, &baseline) {
            (Some(t), Some((assign, _))) => Some(adjusted_rand_index(assign, t)?),
            _ => None,
        },
    };

    Ok(RunResult {
        metrics,
        ledger,
        global_label_map: label_map,
        global_clusters: globals,
        sites: reports,
        labels,
        warnings,
        trace,
    })
}

/// Clusters the whole dataset at once, for comparison.
pub fn centralized_baseline(
    data: &Dataset,
    k: usize,
    algorithm: Algorithm,
    seed: u64,
) -> Result<(Vec<usize>, f64)> {
    let cfg = LocalClusteringConfig {
        algorithm,
        k,
        seed,
        ..Default::default()
    };
    let r = local::cluster(data, &cfg, 0)?;
    let sse = r.summaries.iter().map(|s| s.stats.sse).sum();
    Ok((r.assignment, sse))
}
