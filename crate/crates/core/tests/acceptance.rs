//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vbdc::experiment::{run_experiment, write_outputs, ExperimentConfig};
use vbdc::generate::{generate_mixture, GaussianMixtureSpec, MixtureComponent};
use vbdc::harness::{partition, PartitionStrategy};
use vbdc::local::cluster;
use vbdc::merge::{greedy_merge, perturb, EventKind, MergeConfig};
use vbdc::stats::{fold_stats, merge_stats, summarize, variance_increase, ClusterStats, GlobalCluster};
use vbdc::{LocalClusteringConfig, SubClusterSummary};

const REL_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<bool>, name: &str, o: Outcome) {
    println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push(o.pass);
}

/// Randomized point set split into nonempty groups.
struct Case {
    points: Vec<Vec<f64>>,
    groups: Vec<Vec<usize>>,
}

fn random_cases(count: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=500);
            let d = rng.random_range(1..=8);
            let scale = 10f64.powf(rng.random_range(-2.0..4.0));
            let offset = rng.random_range(-1.0..1.0) * scale * 10.0;
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| offset + scale * rng.random_range(-1.0..1.0)).collect())
                .collect();
            let g = rng.random_range(2..=n.min(12));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut cuts: Vec<usize> = (1..n).collect();
            cuts.shuffle(&mut rng);
            let mut cuts: Vec<usize> = cuts.into_iter().take(g - 1).collect();
            cuts.sort_unstable();
            let mut groups = Vec::with_capacity(g);
            let mut start = 0;
            for c in cuts.into_iter().chain(std::iter::once(n)) {
                groups.push(order[start..c].to_vec());
                start = c;
            }
            Case { points, groups }
        })
        .collect()
}

/// Mean and SSE by direct summation.
fn oracle(points: &[&[f64]]) -> (Vec<f64>, f64) {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for p in points {
        for j in 0..d {
            c[j] += p[j];
        }
    }
    c.iter_mut().for_each(|v| *v /= points.len() as f64);
    let sse = points
        .iter()
        .map(|p| p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    (c, sse)
}

/// Relative error, with the data's own magnitude as the floor so that
/// near-zero centers are judged against the coordinates they came from.
fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn magnitude(points: &[Vec<f64>]) -> f64 {
    points.iter().flatten().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()))
}

fn criterion_1(cases: &[Case]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in cases {
        let stats: Vec<ClusterStats> = case
            .groups
            .iter()
            .map(|g| summarize(g.iter().map(|&i| case.points[i].as_slice())).unwrap())
            .collect();
        let folded = fold_stats(stats.iter()).unwrap();
        let all: Vec<&[f64]> = case.points.iter().map(Vec::as_slice).collect();
        let (c, sse) = oracle(&all);
        let m = magnitude(&case.points);
        for (a, b) in folded.center.iter().zip(&c) {
            worst = worst.max(rel_err(*a, *b, m));
        }
        worst = worst.max(rel_err(folded.sse, sse, m * m * 1e-12));
        if folded.count != case.points.len() as u64 {
            worst = f64::INFINITY;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= REL_TOL && elapsed < Duration::from_secs(10),
        detail: format!("{} cases, max rel err {worst:.2e}, {:.2} s", cases.len(), elapsed.as_secs_f64()),
    }
}

fn criterion_2(cases: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for case in cases {
        let mut acc: Option<(ClusterStats, Vec<&[f64]>)> = None;
        for g in &case.groups {
            let pts: Vec<&[f64]> = g.iter().map(|&i| case.points[i].as_slice()).collect();
            let s = summarize(pts.iter().copied()).unwrap();
            acc = Some(match acc {
                None => (s, pts),
                Some((a, mut a_pts)) => {
                    let inc = variance_increase(&a, &s).unwrap();
                    let v_new = a.sse + s.sse + inc;
                    a_pts.extend(pts);
                    let (_, pooled) = oracle(&a_pts);
                    let m = magnitude(&case.points);
                    worst = worst.max(rel_err(v_new, pooled, m * m * 1e-12));
                    checks += 1;
                    (merge_stats(&a, &s).unwrap(), a_pts)
                }
            });
        }
    }
    Outcome {
        pass: worst <= REL_TOL,
        detail: format!("{checks} merges, max rel err {worst:.2e}"),
    }
}

struct TerminationLog {
    runs: usize,
    violations: usize,
}

impl TerminationLog {
    fn check(&mut self, merges: usize, sum_k: usize, passes: usize, cfg: &MergeConfig) {
        self.runs += 1;
        if merges + 1 > sum_k || passes > cfg.max_perturbation_passes {
            self.violations += 1;
        }
    }
}

fn criterion_3(term: &mut TerminationLog) -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut min_ari = f64::INFINITY;
    for seed in 0..20 {
        let cfg = ExperimentConfig::synthetic3(seed);
        let r = run_experiment(&cfg).unwrap().result;
        let sum_k = r.sites.iter().map(|s| s.k_effective).sum();
        term.check(r.metrics.merge_events, sum_k, r.metrics.perturbation_passes, &cfg.merge);
        if r.metrics.k_global == 3 {
            hits += 1;
            min_ari = min_ari.min(r.metrics.adjusted_rand_index.unwrap());
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: hits >= 18 && min_ari >= 0.95 && elapsed < Duration::from_secs(30),
        detail: format!(
            "k_global = 3 in {hits}/20, min ARI among those {min_ari:.4}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_4(term: &mut TerminationLog) -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut histogram = [0usize; 6];
    for seed in 0..20 {
        let cfg = ExperimentConfig::iris(seed);
        let r = run_experiment(&cfg).unwrap().result;
        let sum_k = r.sites.iter().map(|s| s.k_effective).sum();
        term.check(r.metrics.merge_events, sum_k, r.metrics.perturbation_passes, &cfg.merge);
        histogram[r.metrics.k_global.min(5)] += 1;
        if r.metrics.k_global == 3 {
            hits += 1;
            let base = r.metrics.centralized_baseline_sse.unwrap();
            worst_ratio = worst_ratio.max(r.metrics.total_sse / base);
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: hits >= 14 && (hits == 0 || worst_ratio <= 1.25) && elapsed < Duration::from_secs(10),
        detail: format!(
            "k_global = 3 in {hits}/20 (k_global histogram 1..5: {:?}), worst SSE / baseline among those {worst_ratio:.3}, {:.2} s",
            &histogram[1..],
            elapsed.as_secs_f64()
        ),
    }
}

/// Sub-cluster summaries from a random mixture clustered at a few sites.
fn random_summaries(rng: &mut ChaCha8Rng) -> Vec<SubClusterSummary> {
    let d = rng.random_range(1..=4);
    let comps = rng.random_range(2..=5);
    let raw: Vec<f64> = (0..comps).map(|_| rng.random_range(0.5..2.0)).collect();
    let total: f64 = raw.iter().sum();
    let spec = GaussianMixtureSpec {
        components: raw
            .iter()
            .map(|w| MixtureComponent {
                weight: w / total,
                mean: (0..d).map(|_| rng.random_range(-10.0..10.0)).collect(),
                stddev: (0..d).map(|_| rng.random_range(0.3..3.0)).collect(),
            })
            .collect(),
        total_points: rng.random_range(60..400),
        seed: rng.random(),
    };
    let (data, _) = generate_mixture(&spec).unwrap();
    let sites = rng.random_range(1..=4);
    let shards = partition(&data, sites, PartitionStrategy::RandomUniform, rng.random()).unwrap();
    let mut out = Vec::new();
    for (s, shard) in shards.iter().enumerate() {
        if shard.points.is_empty() {
            continue;
        }
        let cfg = LocalClusteringConfig {
            k: rng.random_range(1..=8).min(shard.points.len()),
            seed: rng.random(),
            ..Default::default()
        };
        out.extend(cluster(&shard.points, &cfg, s as u32).unwrap().summaries);
    }
    out
}

/// Either the greedy result or a random grouping of the summaries, so that
/// perturbation has real work to do.
fn merge_output(rng: &mut ChaCha8Rng, summaries: &[SubClusterSummary], cfg: &MergeConfig) -> (Vec<GlobalCluster>, usize) {
    let (greedy, trace) = greedy_merge(summaries, cfg).unwrap();
    if rng.random_bool(0.5) || summaries.len() < 2 {
        return (greedy, trace.count(EventKind::Merge));
    }
    let g = rng.random_range(2..=summaries.len().min(6));
    let mut groups: Vec<Vec<&SubClusterSummary>> = vec![Vec::new(); g];
    let mut order: Vec<&SubClusterSummary> = summaries.iter().collect();
    order.shuffle(rng);
    for (i, s) in order.into_iter().enumerate() {
        let slot = if i < g { i } else { rng.random_range(0..g) };
        groups[slot].push(s);
    }
    let globals = groups
        .into_iter()
        .map(|members| {
            let mut ids: Vec<_> = members.iter().map(|s| s.id).collect();
            ids.sort_unstable();
            GlobalCluster {
                members: ids,
                summary: fold_stats(members.iter().map(|s| &s.stats)).unwrap(),
                border: None,
            }
        })
        .collect();
    (globals, summaries.len() - g)
}

fn criterion_5(term: &mut TerminationLog) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = MergeConfig::default();
    let mut violations = 0;
    let mut moves = 0;
    let mut runs_with_moves = 0;
    for _ in 0..200 {
        let summaries = random_summaries(&mut rng);
        let (globals, merges) = merge_output(&mut rng, &summaries, &cfg);
        let before: f64 = globals.iter().map(|g| g.summary.sse).sum();
        let out = perturb(globals, &summaries, &cfg).unwrap();
        term.check(merges, summaries.len(), out.passes, &cfg);

        let after: f64 = out
            .globals
            .iter()
            .map(|g| {
                let members = summaries.iter().filter(|s| g.members.contains(&s.id));
                fold_stats(members.map(|s| &s.stats)).unwrap().sse
            })
            .sum();
        let slack = 1e-9 * before.max(1.0);
        if after > before + slack {
            violations += 1;
        }
        let mut running = before;
        let mut moved = 0;
        for e in &out.events {
            if e.kind != EventKind::Move {
                continue;
            }
            moved += 1;
            if !(e.variance_delta < 0.0 && e.total_sse_after < running) {
                violations += 1;
            }
            running = e.total_sse_after;
        }
        if (running - after).abs() > slack {
            violations += 1;
        }
        moves += moved;
        runs_with_moves += usize::from(moved > 0);
    }
    Outcome {
        pass: violations == 0 && moves > 0,
        detail: format!("200 runs, {moves} moves in {runs_with_moves} runs, {violations} violations"),
    }
}

fn criterion_6() -> Outcome {
    let mut mismatches = 0;
    let mut preset = (0, 0);
    for seed in 0..20 {
        for cfg in [ExperimentConfig::synthetic3(seed), ExperimentConfig::iris(seed)] {
            let out = run_experiment(&cfg).unwrap();
            let l = &out.result.ledger;
            let d = out.dataset.dim() as u64;
            let actual: u64 = out.result.sites.iter().map(|s| (d + 2) * s.k_effective as u64).sum();
            let model: u64 = out.result.sites.iter().map(|s| 3 * d * s.k_requested as u64).sum();
            if l.total_numbers_sent != actual || l.paper_model_elements != model {
                mismatches += 1;
            }
            if seed == 0 && matches!(cfg.dataset, vbdc::experiment::DatasetSource::Mixture(_)) {
                preset = (l.total_numbers_sent, l.paper_model_elements);
            }
        }
    }
    Outcome {
        pass: mismatches == 0 && preset == (120, 180),
        detail: format!(
            "40 runs, {mismatches} mismatches; synthetic preset sends {} numbers vs model {}",
            preset.0, preset.1
        ),
    }
}

fn criterion_7() -> Outcome {
    let mut differing = Vec::new();
    for (name, seed) in [("synthetic3", 0), ("synthetic3", 13), ("iris", 0), ("iris", 13)] {
        let cfg = ExperimentConfig::preset(name, seed).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_outputs(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
        write_outputs(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
        for f in ["result.json", "trace.log"] {
            if std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap() {
                differing.push(format!("{name}/{seed}/{f}"));
            }
        }
    }
    Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            "result.json and trace.log byte-identical for 4 preset runs".into()
        } else {
            format!("differs: {}", differing.join(", "))
        },
    }
}

fn criterion_8() -> Outcome {
    let mut differing = 0;
    for seed in 0..5 {
        let maps: Vec<_> = (0..3)
            .map(|site| {
                let mut cfg = ExperimentConfig::synthetic3(seed);
                cfg.merging_site = site;
                run_experiment(&cfg).unwrap().result.global_label_map
            })
            .collect();
        if maps[0] != maps[1] || maps[0] != maps[2] {
            differing += 1;
        }
    }
    Outcome {
        pass: differing == 0,
        detail: format!("5 seeds x merge sites 0/1/2, {differing} seeds with differing label maps"),
    }
}

fn main() {
    let mut results = Vec::new();
    let cases = random_cases(1000, 1);
    let mut term = TerminationLog { runs: 0, violations: 0 };

    report(&mut results, "1 merge-algebra oracle", criterion_1(&cases));
    report(&mut results, "2 ward decomposition", criterion_2(&cases));
    report(&mut results, "3 synthetic experiment", criterion_3(&mut term));
    report(&mut results, "4 iris experiment", criterion_4(&mut term));
    report(&mut results, "5 perturbation monotonicity", criterion_5(&mut term));
    report(&mut results, "6 communication ledger", criterion_6());
    report(&mut results, "7 determinism", criterion_7());
    report(&mut results, "8 merge-site independence", criterion_8());
    report(
        &mut results,
        "9 termination bounds",
        Outcome {
            pass: term.violations == 0 && term.runs > 0,
            detail: format!("{} runs, {} violations", term.runs, term.violations),
        },
    );

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
