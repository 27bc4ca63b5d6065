//! Experiment configuration, presets, and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csvio::{self, derive_features, fmt_f64, FeatureRecipe};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::generate::{generate_mixture, GaussianMixtureSpec};
use crate::harness::{run_pipeline, BaselineSpec, PartitionStrategy, PipelineOptions, RunResult};
use crate::local::{Algorithm, LocalClusteringConfig};
use crate::merge::MergeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Mixture(GaussianMixtureSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        label_column: Option<usize>,
    },
    /// The bundled Iris table.
    Iris,
}

/// A full experiment, loadable from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub features: FeatureRecipe,
    pub sites: usize,
    /// One configuration per site.
    pub local: Vec<LocalClusteringConfig>,
    #[serde(default)]
    pub merge: MergeConfig,
    #[serde(default)]
    pub partition: PartitionStrategy,
    #[serde(default)]
    pub merging_site: usize,
    #[serde(default)]
    pub baseline: Option<BaselineSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// Seed for site `site`'s local clustering, derived from the run seed.
pub fn site_seed(seed: u64, site: usize) -> u64 {
    seed ^ (site as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl ExperimentConfig {
    /// 1150 samples from three separated 2-D Gaussians over 3 sites,
    /// k-means with k = 10 per site.
    pub fn synthetic3(seed: u64) -> Self {
        let mut cfg = ExperimentConfig {
            dataset: DatasetSource::Mixture(GaussianMixtureSpec::three_blobs(seed)),
            features: FeatureRecipe::Identity,
            sites: 3,
            local: vec![
                LocalClusteringConfig {
                    algorithm: Algorithm::Kmeans,
                    k: 10,
                    ..Default::default()
                };
                3
            ],
            merge: MergeConfig::default(),
            partition: PartitionStrategy::RandomUniform,
            merging_site: 0,
            baseline: Some(BaselineSpec {
                k: 3,
                algorithm: Algorithm::Kmeans,
            }),
            output_dir: None,
            seed,
        };
        cfg.reseed(seed);
        cfg
    }

    /// Iris (four measurements) over 2 sites, k-harmonic means with k = 5
    /// per site, compared with a centralized KHM at k = 3.
    pub fn iris(seed: u64) -> Self {
        let mut cfg = ExperimentConfig {
            dataset: DatasetSource::Iris,
            features: FeatureRecipe::Identity,
            sites: 2,
            local: vec![
                LocalClusteringConfig {
                    algorithm: Algorithm::Khm,
                    k: 5,
                    ..Default::default()
                };
                2
            ],
            merge: MergeConfig::default(),
            partition: PartitionStrategy::RandomUniform,
            merging_site: 0,
            baseline: Some(BaselineSpec {
                k: 3,
                algorithm: Algorithm::Khm,
            }),
            output_dir: None,
            seed,
        };
        cfg.reseed(seed);
        cfg
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "synthetic3" => Some(Self::synthetic3(seed)),
            "iris" => Some(Self::iris(seed)),
            _ => None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Sets the run seed and re-derives the generator and per-site seeds.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        if let DatasetSource::Mixture(spec) = &mut self.dataset {
            spec.seed = seed;
        }
        for (i, l) in self.local.iter_mut().enumerate() {
            l.seed = site_seed(seed, i);
        }
    }

    /// Changes the number of sites, copying the first site's settings.
    pub fn resize_sites(&mut self, sites: usize) {
        let template = self.local.first().cloned().unwrap_or_default();
        self.local.resize(sites, template);
        for (i, l) in self.local.iter_mut().enumerate() {
            l.seed = site_seed(self.seed, i);
        }
        self.sites = sites;
        if self.merging_site >= sites {
            self.merging_site = 0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::config("sites must be at least 1"));
        }
        if self.local.len() != self.sites {
            return Err(Error::config(format!(
                "{} site configurations for {} sites",
                self.local.len(),
                self.sites
            )));
        }
        for l in &self.local {
            l.validate()?;
        }
        self.merge.validate()?;
        if let DatasetSource::Mixture(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            partition: self.partition,
            seed: self.seed,
            merging_site: self.merging_site,
            baseline: self.baseline,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dataset: Dataset,
    pub truth: Option<Vec<usize>>,
    pub result: RunResult,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Vec<usize>>)> {
    let (raw, truth) = match &cfg.dataset {
        DatasetSource::Mixture(spec) => {
            let (d, l) = generate_mixture(spec)?;
            (d, Some(l))
        }
        DatasetSource::Csv {
            path,
            has_header,
            label_column,
        } => {
            let l = csvio::load_csv(path, *has_header, *label_column)?;
            (l.data, l.labels)
        }
        DatasetSource::Iris => {
            let l = csvio::iris();
            (l.data, l.labels)
        }
    };
    Ok((derive_features(&raw, cfg.features)?, truth))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (dataset, truth) = load_dataset(cfg)?;
    let result = run_pipeline(&dataset, &cfg.local, &cfg.merge, &cfg.options(), truth.as_deref())?;
    Ok(ExperimentOutput {
        dataset,
        truth,
        result,
    })
}

/// Writes `result.json`, `trace.log`, `labels_site<i>.csv` and
/// `points_labeled.csv` into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };
    let mut json = serde_json::to_string_pretty(&out.result)?;
    json.push('\n');
    write("result.json", json)?;
    write("trace.log", out.result.trace.to_lines())?;

    let d = out.dataset.dim();
    let coords: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    for site in &out.result.sites {
        let mut body = format!("point_index,{},local_label,global_label\n", coords.join(","));
        for (k, &i) in site.point_indices.iter().enumerate() {
            let _ = writeln!(
                body,
                "{i},{},{},{}",
                join_coords(out.dataset.row(i)),
                site.local_labels[k],
                site.global_labels[k]
            );
        }
        write(&format!("labels_site{}.csv", site.site_index), body)?;
    }

    let mut site_of = vec![(0usize, 0usize); out.dataset.len()];
    for site in &out.result.sites {
        for (k, &i) in site.point_indices.iter().enumerate() {
            site_of[i] = (site.site_index, site.local_labels[k]);
        }
    }
    let mut body = format!("point_index,site,{},sub_cluster,global_label", coords.join(","));
    if out.truth.is_some() {
        body.push_str(",truth");
    }
    body.push('\n');
    for (i, row) in out.dataset.rows().enumerate() {
        let (site, local) = site_of[i];
        let _ = write!(
            body,
            "{i},{site},{},{site}:{local},{}",
            join_coords(row),
            out.result.labels[i]
        );
        if let Some(t) = &out.truth {
            let _ = write!(body, ",{}", t[i]);
        }
        body.push('\n');
    }
    write("points_labeled.csv", body)
}

fn join_coords(row: &[f64]) -> String {
    row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

/// Human-readable summary of a run.
pub fn summary_table(result: &RunResult) -> String {
    let m = &result.metrics;
    let l = &result.ledger;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    let mut s = String::new();
    let _ = writeln!(s, "{:<28}{}", "k_global", m.k_global);
    let _ = writeln!(s, "{:<28}{:.6}", "total SSE", m.total_sse);
    let _ = writeln!(s, "{:<28}{}", "baseline SSE", opt(m.centralized_baseline_sse));
    let _ = writeln!(s, "{:<28}{}", "ARI vs truth", opt(m.adjusted_rand_index));
    let _ = writeln!(s, "{:<28}{}", "baseline ARI vs truth", opt(m.baseline_adjusted_rand_index));
    let _ = writeln!(s, "{:<28}{}", "merges", m.merge_events);
    let _ = writeln!(s, "{:<28}{} ({} passes)", "perturbation moves", m.perturbation_moves, m.perturbation_passes);
    let _ = writeln!(s, "{:<28}{:?}", "numbers sent per site", l.per_site_numbers_sent);
    let _ = writeln!(s, "{:<28}{}", "numbers sent (total)", l.total_numbers_sent);
    let _ = writeln!(s, "{:<28}{}", "numbers over the wire", l.wire_numbers_sent);
    let _ = writeln!(s, "{:<28}{}", "3d*sum(k_i) model", l.paper_model_elements);
    let _ = writeln!(s, "{:<28}{}", "bytes (f64)", l.bytes_at_64bit);
    s
}
