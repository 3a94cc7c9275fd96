//! The subcommands. Each returns `Ok(true)` when every item succeeded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use asymshap::eval::{self, aggregate_runs, long_csv, overlap_rate, spearman, EvalReport, LongRecord, Ranking};
use asymshap::interaction::{build_influence_graph, WorldModel};
use asymshap::Instance;
use asymshap_bridge::conformance::{self, ConformanceConfig};

use crate::config::RunConfig;
use crate::method::{self, AttributionRecord, Method};
use crate::output::{jsonl, Outputs};
use crate::setup::{self, Setup};

/// A method's name with its instances and rankings.
type MethodData = (String, Vec<(Instance, Ranking)>);

/// Attributions of every instance under `method`; failed instances are
/// recorded in `out` and left as `None`.
fn attribute_all(
    setup: &Setup,
    cfg: &RunConfig,
    method: Method,
    seed: u64,
    out: &mut Outputs,
) -> Vec<Option<(AttributionRecord, Ranking)>> {
    let total = setup.instances.len();
    setup
        .instances
        .iter()
        .enumerate()
        .map(|(id, x)| {
            log::info!("{method} seed {seed}: instance {}/{total}", id + 1);
            method::attribute(setup, cfg, method, seed, id, x)
                .map_err(|e| out.fail(Some(id), Some(method.to_string()), e))
                .ok()
        })
        .collect()
}

fn records(results: &[Option<(AttributionRecord, Ranking)>]) -> Vec<&AttributionRecord> {
    results.iter().flatten().map(|(r, _)| r).collect()
}

fn eval_data(setup: &Setup, results: &[Option<(AttributionRecord, Ranking)>]) -> Vec<(Instance, Ranking)> {
    results
        .iter()
        .enumerate()
        .filter_map(|(id, r)| r.as_ref().map(|(_, ranking)| (setup.instances[id].clone(), ranking.clone())))
        .collect()
}

fn summarize(report: &EvalReport) {
    for row in &report.rows {
        log::info!(
            "{} k={}: LOR {} SF {} CM {}",
            report.method,
            row.k,
            row.lor,
            row.sf,
            row.cm
        );
    }
}

pub fn attribute(cfg: &RunConfig) -> Result<bool> {
    let setup = Setup::build(cfg, true)?;
    let method = Method::from_config(cfg);
    let mut out = Outputs::create(&cfg.out)?;
    let results = attribute_all(&setup, cfg, method, cfg.sampling.seed, &mut out);
    out.write("attributions.jsonl", &jsonl(&records(&results))?)?;
    out.finish("attribute", cfg, vec![cfg.sampling.seed])
}

/// Reads `attributions.jsonl` files, grouping rows by method in order of
/// first appearance.
fn read_attributions(setup: &Setup, cfg: &RunConfig) -> Result<Vec<MethodData>> {
    let mut groups: Vec<MethodData> = Vec::new();
    for path in &cfg.attributions {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: AttributionRecord = serde_json::from_str(line)
                .with_context(|| format!("{}:{}: not an attribution record", path.display(), line_no + 1))?;
            let x = Instance::new(setup.vocab.intern_all(&rec.tokens), setup.pad)?;
            let ranking = Ranking::new(rec.order, rec.phi)
                .with_context(|| format!("{}:{}: bad ranking", path.display(), line_no + 1))?;
            match groups.iter_mut().find(|(m, _)| *m == rec.method) {
                Some((_, data)) => data.push((x, ranking)),
                None => groups.push((rec.method, vec![(x, ranking)])),
            }
        }
    }
    Ok(groups)
}

pub fn evaluate(cfg: &RunConfig) -> Result<bool> {
    if cfg.attributions.is_empty() && cfg.methods.is_empty() {
        bail!("attributions: evaluate needs attribution files (--attributions) or a method list (--methods)");
    }
    let from_files = !cfg.attributions.is_empty();
    let setup = Setup::build(cfg, !from_files)?;
    let mut out = Outputs::create(&cfg.out)?;
    let groups = if from_files {
        read_attributions(&setup, cfg)?
    } else {
        let mut groups = Vec::new();
        for m in Method::list(cfg)? {
            let results = attribute_all(&setup, cfg, m, cfg.sampling.seed, &mut out);
            out.write(&format!("attributions_{m}.jsonl"), &jsonl(&records(&results))?)?;
            groups.push((m.to_string(), eval_data(&setup, &results)));
        }
        groups
    };

    let mut long: Vec<LongRecord> = Vec::new();
    for (name, data) in &groups {
        match eval::evaluate(setup.model.as_ref(), data, &cfg.eval, name, cfg.sampling.workers) {
            Ok(report) => {
                summarize(&report);
                out.write(&format!("eval_{name}.csv"), &report.to_csv()?)?;
                out.write(&format!("eval_{name}.json"), &(report.to_json()? + "\n"))?;
                long.extend(report.long_records(None));
            }
            Err(e) => out.fail(None, Some(name.clone()), e),
        }
    }
    out.write("eval_long.csv", &long_csv(&long)?)?;
    out.finish("evaluate", cfg, vec![cfg.sampling.seed])
}

/// Mean and population standard deviation, exact zero for constant input.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let (s, s2) = v.iter().fold((0.0, 0.0), |(s, s2), x| (s + (x - v[0]), s2 + (x - v[0]).powi(2)));
    (v.iter().sum::<f64>() / n, ((s2 - s * s / n) / n).max(0.0).sqrt())
}

/// Pairwise ranking agreement between methods: per seed, the mean over
/// instances both methods explained; then mean and std over seeds.
fn agreement_csv(
    names: &[String],
    rankings: &[Vec<Vec<Option<Ranking>>>],
    k_grid: &[f64],
) -> Result<String> {
    let mut csv = String::from("method_a,method_b,metric,k,mean,std\n");
    for a in 0..names.len() {
        for b in a + 1..names.len() {
            let mut per_metric: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
            for (ra, rb) in rankings[a].iter().zip(&rankings[b]) {
                let pairs: Vec<(&Ranking, &Ranking)> = ra
                    .iter()
                    .zip(rb)
                    .filter_map(|(x, y)| Some((x.as_ref()?, y.as_ref()?)))
                    .filter(|(x, _)| x.len() >= 2)
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let mean = |f: &dyn Fn(&Ranking, &Ranking) -> asymshap::Result<f64>| -> Result<f64> {
                    let vals = pairs.iter().map(|(x, y)| f(x, y)).collect::<asymshap::Result<Vec<f64>>>()?;
                    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
                };
                per_metric.entry((0, "spearman".into())).or_default().push(mean(&|x, y| spearman(x, y))?);
                for (j, &k) in k_grid.iter().enumerate() {
                    per_metric
                        .entry((j + 1, format!("overlap:{k}")))
                        .or_default()
                        .push(mean(&|x, y| overlap_rate(x, y, k))?);
                }
            }
            for ((_, key), vals) in per_metric {
                let (metric, k) = key.split_once(':').unwrap_or((key.as_str(), ""));
                let (m, s) = mean_std(&vals);
                writeln!(csv, "{},{},{metric},{k},{m},{s}", names[a], names[b])?;
            }
        }
    }
    Ok(csv)
}

pub fn compare(cfg: &RunConfig) -> Result<bool> {
    if cfg.seeds.is_empty() {
        bail!("seeds: compare needs at least one seed");
    }
    let methods = Method::list(cfg)?;
    let setup = Setup::build(cfg, true)?;
    let mut out = Outputs::create(&cfg.out)?;

    let mut aggregated = Vec::new();
    let mut long = Vec::new();
    let mut all_rankings = Vec::new();
    let names: Vec<String> = methods.iter().map(|m| m.to_string()).collect();
    for (m, name) in methods.iter().zip(&names) {
        let mut runs = Vec::new();
        let mut rankings = Vec::new();
        let mut exact_results = None;
        for &seed in &cfg.seeds {
            // Exact attributions do not depend on the seed.
            let results = match (&exact_results, m.exact) {
                (Some(r), true) => Vec::clone(r),
                _ => {
                    let r = attribute_all(&setup, cfg, *m, seed, &mut out);
                    if m.exact {
                        exact_results = Some(r.clone());
                    }
                    r
                }
            };
            rankings.push(results.iter().map(|r| r.as_ref().map(|(_, k)| k.clone())).collect::<Vec<_>>());
            let data = eval_data(&setup, &results);
            match eval::evaluate(setup.model.as_ref(), &data, &cfg.eval, name, cfg.sampling.workers) {
                Ok(report) => {
                    long.extend(report.long_records(Some(seed)));
                    runs.push(report);
                }
                Err(e) => out.fail(None, Some(format!("{name} seed {seed}")), e),
            }
        }
        all_rankings.push(rankings);
        if runs.is_empty() {
            continue;
        }
        let agg = aggregate_runs(&runs)?;
        summarize(&agg);
        aggregated.push(agg);
    }

    let mut csv = String::new();
    for (j, report) in aggregated.iter().enumerate() {
        let text = report.to_csv()?;
        let body = if j == 0 { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
        csv.push_str(body);
    }
    out.write("compare.csv", &csv)?;
    out.write("compare.json", &(serde_json::to_string_pretty(&aggregated)? + "\n"))?;
    out.write("compare_long.csv", &long_csv(&long)?)?;
    out.write("agreement.csv", &agreement_csv(&names, &all_rankings, &cfg.eval.k_grid)?)?;
    out.finish("compare", cfg, cfg.seeds.clone())
}

pub fn interact(cfg: &RunConfig) -> Result<bool> {
    let setup = Setup::build(cfg, true)?;
    if setup.joint.is_none() {
        bail!("joint: interaction graphs need a joint distribution (--joint, a builtin world, or a fixed-length dataset)");
    }
    let mut out = Outputs::create(&cfg.out)?;
    let mut influence = String::from("id,feature,token,influence\n");
    let total = setup.instances.len();
    for (id, x) in setup.instances.iter().enumerate() {
        log::info!("interact: instance {}/{total}", id + 1);
        let result = (|| -> Result<_> {
            let joint = setup.joint_for(x)?.clone();
            let world = WorldModel::new(joint, setup.model.clone(), setup.target(cfg, x)?)?;
            Ok(build_influence_graph(&world, x, cfg.interact.order_cap)?)
        })();
        match result {
            Ok(graph) => {
                let names = setup.names(x);
                out.write(&format!("graph_{id}.dot"), &graph.to_dot(Some(&names)))?;
                out.write(&format!("graph_{id}.json"), &(graph.to_json()? + "\n"))?;
                for (i, v) in graph.influences().iter().enumerate() {
                    writeln!(influence, "{id},{i},{},{v}", csv_field(&names[i]))?;
                }
            }
            Err(e) => out.fail(Some(id), None, e),
        }
    }
    out.write("influence.csv", &influence)?;
    out.finish("interact", cfg, Vec::new())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn conformance(cfg: &RunConfig) -> Result<bool> {
    let ep = setup::endpoint(cfg)?;
    let report = conformance::run(&ep, &ConformanceConfig::default()).map_err(|e| anyhow!("{e}"))?;
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        log::info!("{tag} {}: {}", c.name, c.detail);
    }
    let mut out = Outputs::create(&cfg.out)?;
    out.write("conformance.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        out.fail(None, Some(c.name.clone()), &c.detail);
    }
    out.finish("conformance", cfg, Vec::new())
}
