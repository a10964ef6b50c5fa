//! Monte-Carlo support-recovery benchmark.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{random_dag, random_scg, DirectedGraph};
use crate::lasso::adalasso_graph;
use crate::metrics::{confusion, lre_on_series};
use crate::pairwise::PairwiseConfig;
use crate::recovery::pwgc_pipeline;
use crate::var::{build_var_model, default_burn_in, simulate, VarModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TopologySpec {
    Scg,
    Dag { q: f64 },
}

impl TopologySpec {
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<DirectedGraph> {
        match *self {
            TopologySpec::Scg => Ok(random_scg(n, rng)),
            TopologySpec::Dag { q } => random_dag(n, q, rng),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::Scg => write!(f, "SCG"),
            TopologySpec::Dag { q } => write!(f, "DAG-{q}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pwgc,
    Alasso,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Pwgc => "pwgc",
            Algorithm::Alasso => "alasso",
        })
    }
}

fn default_t_out() -> usize {
    10_000
}

/// JSON schema of a benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub topologies: Vec<TopologySpec>,
    pub n: usize,
    pub p_true: usize,
    pub p_max: usize,
    pub t_values: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub replicates: usize,
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default = "default_t_out")]
    pub t_out: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub records_csv: Option<String>,
    #[serde(default)]
    pub summary_csv: Option<String>,
    /// Adds a wall-time column; timings make the records non-reproducible.
    #[serde(default)]
    pub include_timing: bool,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.topologies.is_empty() {
            return bad("no topologies".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms".into());
        }
        if self.t_values.is_empty() || self.t_values.contains(&0) {
            return bad("sample sizes must be a nonempty list of positive counts".into());
        }
        if self.n < 2 || self.p_true == 0 || self.p_max == 0 || self.t_out == 0 {
            return bad("n >= 2 and positive p_true, p_max, t_out required".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        for t in &self.topologies {
            if let TopologySpec::Dag { q } = t {
                if !(0.0..=1.0).contains(q) {
                    return bad(format!("edge probability {q} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub topology: String,
    pub n: usize,
    pub p: usize,
    pub p_max: usize,
    pub t: usize,
    pub replicate: usize,
    /// RNG stream of the replicate; shared by all algorithms.
    pub seed: u64,
    pub algorithm: Algorithm,
    pub mcc: f64,
    pub fdp: f64,
    /// `None` when the ratio is degenerate or the fit failed.
    pub lre: Option<f64>,
    pub true_edges: usize,
    pub est_edges: usize,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

impl BenchRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Stream id of replicate `rep` in cell `(topology, T)`.
pub fn stream_id(topology: usize, t: usize, rep: usize) -> u64 {
    ((topology as u64) << 48) | ((t as u64) << 32) | rep as u64
}

struct Job {
    topo: usize,
    t_idx: usize,
    rep: usize,
}

struct Scenario {
    truth: VarModel,
    train: crate::var::SeriesMatrix,
    test: crate::var::SeriesMatrix,
}

fn draw_scenario(cfg: &BenchConfig, spec: TopologySpec, t: usize, rng: &mut ChaCha8Rng) -> Result<Scenario> {
    let g = spec.draw(cfg.n, rng)?;
    let truth = build_var_model(&g, cfg.p_true, rng)?;
    let burn = cfg.burn_in.unwrap_or_else(|| default_burn_in(cfg.n, cfg.p_true));
    let train = simulate(&truth, t, burn, rng)?;
    let test = simulate(&truth, cfg.t_out + cfg.p_max, burn, rng)?;
    Ok(Scenario { truth, train, test })
}

fn fit(cfg: &BenchConfig, alg: Algorithm, s: &Scenario) -> Result<(DirectedGraph, VarModel)> {
    match alg {
        Algorithm::Pwgc => {
            let f = pwgc_pipeline(&s.train, PairwiseConfig::new(cfg.p_max), cfg.alpha)?;
            Ok((f.graph, f.refit.model))
        }
        Algorithm::Alasso => {
            let f = adalasso_graph(&s.train, cfg.p_max)?;
            Ok((f.graph, f.model))
        }
    }
}

fn run_job(cfg: &BenchConfig, job: &Job) -> Vec<BenchRecord> {
    let spec = cfg.topologies[job.topo];
    let t = cfg.t_values[job.t_idx];
    let seed = stream_id(job.topo, job.t_idx, job.rep);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(seed);
    let base = |alg: Algorithm| BenchRecord {
        topology: spec.to_string(),
        n: cfg.n,
        p: cfg.p_true,
        p_max: cfg.p_max,
        t,
        replicate: job.rep,
        seed,
        algorithm: alg,
        mcc: f64::NAN,
        fdp: f64::NAN,
        lre: None,
        true_edges: 0,
        est_edges: 0,
        wall_time_s: 0.0,
        failure: None,
    };
    let scenario = match draw_scenario(cfg, spec, t, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .algorithms
                .iter()
                .map(|&alg| BenchRecord {
                    failure: Some(format!("simulation: {e}")),
                    ..base(alg)
                })
                .collect()
        }
    };
    let truth_graph = scenario.truth.topology();
    cfg.algorithms
        .iter()
        .map(|&alg| {
            let mut rec = base(alg);
            rec.true_edges = truth_graph.edge_count();
            let start = Instant::now();
            let result = fit(cfg, alg, &scenario);
            rec.wall_time_s = start.elapsed().as_secs_f64();
            match result {
                Ok((g, model)) => {
                    rec.est_edges = g.edge_count();
                    match confusion(truth_graph, &g) {
                        Ok(c) => {
                            rec.mcc = c.mcc();
                            rec.fdp = c.fdp();
                        }
                        Err(e) => rec.failure = Some(e.to_string()),
                    }
                    rec.lre = lre_on_series(&scenario.truth, &model, &scenario.test).ok();
                }
                Err(e) => rec.failure = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Runs every (topology, T, replicate) cell on the current rayon pool.
/// Records come back in config order: topology, then T, then replicate,
/// then algorithm.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for topo in 0..cfg.topologies.len() {
        for t_idx in 0..cfg.t_values.len() {
            for rep in 0..cfg.replicates {
                jobs.push(Job { topo, t_idx, rep });
            }
        }
    }
    let nested: Vec<Vec<BenchRecord>> = jobs.par_iter().map(|j| run_job(cfg, j)).collect();
    Ok(nested.into_iter().flatten().collect())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_records_csv<W: Write>(records: &[BenchRecord], include_timing: bool, mut w: W) -> Result<()> {
    let mut header = String::from("topology,n,p,p_max,T,replicate,seed,algorithm,mcc,fdp,lre,true_edges,est_edges,failure");
    if include_timing {
        header.push_str(",wall_time_s");
    }
    writeln!(w, "{header}")?;
    for r in records {
        write!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.topology,
            r.n,
            r.p,
            r.p_max,
            r.t,
            r.replicate,
            r.seed,
            r.algorithm,
            r.mcc,
            r.fdp,
            opt_f64(r.lre),
            r.true_edges,
            r.est_edges,
            csv_field(r.failure.as_deref().unwrap_or("")),
        )?;
        if include_timing {
            write!(w, ",{}", r.wall_time_s)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Spread {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q25: quantile(&v, 0.25),
        q75: quantile(&v, 0.75),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub topology: String,
    pub t: usize,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub failures: usize,
    /// Successful runs whose LRE was undefined.
    pub lre_excluded: usize,
    pub mcc: Option<Spread>,
    pub fdp: Option<Spread>,
    pub lre: Option<Spread>,
}

/// One row per (topology, T, algorithm) in order of first appearance.
pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize, Algorithm)> = Vec::new();
    for r in records {
        let k = (r.topology.clone(), r.t, r.algorithm);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(topology, t, algorithm)| {
            let cell: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.topology == topology && r.t == t && r.algorithm == algorithm)
                .collect();
            let ok: Vec<&&BenchRecord> = cell.iter().filter(|r| r.succeeded()).collect();
            let mcc: Vec<f64> = ok.iter().map(|r| r.mcc).collect();
            let fdp: Vec<f64> = ok.iter().map(|r| r.fdp).collect();
            let lre: Vec<f64> = ok.iter().filter_map(|r| r.lre).collect();
            SummaryRow {
                topology,
                t,
                algorithm,
                runs: cell.len(),
                failures: cell.len() - ok.len(),
                lre_excluded: ok.len() - lre.len(),
                mcc: spread(&mcc),
                fdp: spread(&fdp),
                lre: spread(&lre),
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> Result<()> {
    let mut header = String::from("topology,T,algorithm,runs,failures,lre_excluded");
    for m in ["mcc", "fdp", "lre"] {
        for s in ["mean", "median", "q25", "q75"] {
            header.push_str(&format!(",{m}_{s}"));
        }
    }
    writeln!(w, "{header}")?;
    for r in rows {
        write!(
            w,
            "{},{},{},{},{},{}",
            r.topology, r.t, r.algorithm, r.runs, r.failures, r.lre_excluded
        )?;
        for s in [r.mcc, r.fdp, r.lre] {
            match s {
                Some(s) => write!(w, ",{},{},{},{}", s.mean, s.median, s.q25, s.q75)?,
                None => write!(w, ",,,,")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
