//! Experiment orchestration: configuration, population building, runs,
//! sweeps, oracle suites and their on-disk outputs.
//!
//! Every file written here is a pure function of the configuration. Floats
//! use Rust's shortest round-trip formatting and nothing time- or
//! host-dependent is recorded, so repeated runs are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{CreatorPopulation, UserPopulation};
use crate::error::{Error, Result};
use crate::ingest::{init_opinions_from_communities, load_edge_list, spectral_communities, EdgeList};
use crate::opinion::Opinions;
use crate::recommender::{RecommenderConfig, Strategy};
use crate::seed::{self, tag};
use crate::simulation::{simulate, SimulationConfig, Trajectory, World};
use crate::synthgen::{generate_homophily_graph, init_opinions_uniform, sample_params, HomophilyKernel, ParameterBounds};
use crate::theory;

pub const SCHEMA_VERSION: u32 = 1;

pub const METRICS_HEADER: &str = "t,sat_running,sat_instant,neg_clusterization,chosen_k,sat_variance,sil_variance";
pub const CONSUMPTION_HEADER: &str = "t,user_id,creator_id,distance";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GraphSource {
    Homophily {
        delta: f64,
        #[serde(default)]
        kernel: HomophilyKernel,
    },
    /// `n_users` is taken from the file.
    EdgeList { path: PathBuf, communities: usize, sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterMode {
    Table1,
    Table4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n_users: usize,
    pub n_creators: usize,
    pub n_topics: usize,
    pub horizon: usize,
    pub seed: u64,
    pub graph_source: GraphSource,
    pub parameter_mode: ParameterMode,
    /// Replaces the preset selected by `parameter_mode` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ParameterBounds>,
    pub rs: RecommenderConfig,
    pub metrics_every: usize,
    pub snapshot_times: Vec<usize>,
}

impl Default for ExperimentConfig {
    /// The synthetic setting: 600 users, 50 creators, two topics, 50 steps.
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_users: 600,
            n_creators: 50,
            n_topics: 2,
            horizon: 50,
            seed: 0,
            graph_source: GraphSource::Homophily {
                delta: 9.0,
                kernel: HomophilyKernel::Distance,
            },
            parameter_mode: ParameterMode::Table1,
            bounds: None,
            rs: RecommenderConfig::default(),
            metrics_every: 1,
            snapshot_times: vec![0, 50],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn parameter_bounds(&self) -> ParameterBounds {
        self.bounds.unwrap_or(match self.parameter_mode {
            ParameterMode::Table1 => ParameterBounds::table1(),
            ParameterMode::Table4 => ParameterBounds::table4(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n_users == 0 || self.n_creators == 0 || self.n_topics == 0 {
            return bad("n_users, n_creators and n_topics must be positive".into());
        }
        if self.metrics_every == 0 {
            return bad("metrics_every must be positive".into());
        }
        if let Some(&t) = self.snapshot_times.iter().find(|&&t| t > self.horizon) {
            return bad(format!("snapshot time {t} is past the horizon {}", self.horizon));
        }
        match &self.graph_source {
            GraphSource::Homophily { delta, .. } if !(*delta > 0.0 && delta.is_finite()) => {
                return bad(format!("homophily delta must be positive, got {delta}"));
            }
            GraphSource::EdgeList { communities, sigma, .. } if *communities == 0 || sigma.is_nan() || *sigma < 0.0 => {
                return bad("edge_list needs communities >= 1 and sigma >= 0".into());
            }
            _ => {}
        }
        self.parameter_bounds().validate()?;
        self.rs.validate(self.n_creators)
    }
}

/// A built population plus whatever the graph source produced on the side.
pub struct Population {
    pub world: World,
    pub edge_list: Option<EdgeList>,
    pub communities: Option<Vec<usize>>,
}

/// Deterministic population for `config`. For edge-list sources the
/// returned config has `n_users` set from the file.
pub fn build_population(config: &ExperimentConfig) -> Result<(ExperimentConfig, Population)> {
    config.validate()?;
    let mut effective = config.clone();
    let s = config.seed;
    let (u0, topology, edge_list, communities) = match &config.graph_source {
        GraphSource::Homophily { delta, kernel } => {
            let u0 = init_opinions_uniform(config.n_users, config.n_topics, &mut seed::rng(s, &[tag::USER_OPINIONS]));
            let g = generate_homophily_graph(&u0, *delta, *kernel, &mut seed::rng(s, &[tag::GRAPH]))?;
            (u0, g, None, None)
        }
        GraphSource::EdgeList { path, communities, sigma } => {
            let list = load_edge_list(path)?;
            let labels = spectral_communities(&list.adjacency(), *communities, seed::derive(s, &[tag::COMMUNITIES]))?;
            let u0 = init_opinions_from_communities(
                &labels,
                *communities,
                config.n_topics,
                *sigma,
                &mut seed::rng(s, &[tag::USER_OPINIONS]),
            )?;
            effective.n_users = list.n_nodes();
            (u0, list.to_topology()?, Some(list), Some(labels))
        }
    };
    let c0 = init_opinions_uniform(config.n_creators, config.n_topics, &mut seed::rng(s, &[tag::CREATOR_OPINIONS]));
    let params = sample_params(
        &topology,
        config.n_creators,
        &effective.parameter_bounds(),
        &mut seed::rng(s, &[tag::PARAMS]),
    )?;
    let world = World {
        graph: params.graph,
        users: UserPopulation::at_prejudice(u0, params.users.stubbornness, params.users.recommender_influence)?,
        creators: CreatorPopulation::new(
            c0.clone(),
            c0,
            params.creators.stubbornness,
            params.creators.self_influence,
            params.creators.audience_influence,
        )?,
    };
    Ok((
        effective,
        Population {
            world,
            edge_list,
            communities,
        },
    ))
}

pub fn build_world(config: &ExperimentConfig) -> Result<World> {
    Ok(build_population(config)?.1.world)
}

/// Runs the configured simulation in memory.
pub fn execute(config: &ExperimentConfig) -> Result<(ExperimentConfig, Population, Trajectory)> {
    let (effective, mut population) = build_population(config)?;
    let sim = SimulationConfig {
        horizon: config.horizon,
        recommender: config.rs,
        metrics_every: Some(config.metrics_every),
    };
    let world = population.world.clone();
    let trajectory = simulate(world, &sim, config.seed)?;
    if let Some(last) = trajectory.frames.last() {
        population.world.users.opinions = last.users.clone();
        population.world.creators.opinions = last.creators.clone();
    }
    Ok((effective, population, trajectory))
}

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

fn coord_header(dim: usize) -> String {
    join((0..dim).map(|k| format!("x{k}")))
}

pub fn metrics_csv(trajectory: &Trajectory) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in &trajectory.metrics {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            m.t, m.sat_running, m.sat_instant, -m.clusterization, m.chosen_k, m.sat_variance, m.sil_variance
        )
        .unwrap();
    }
    s
}

pub fn snapshots_csv(trajectory: &Trajectory, times: &[usize], dim: usize) -> String {
    let mut times = times.to_vec();
    times.sort_unstable();
    times.dedup();
    let mut s = format!("t,agent_kind,agent_id,{}\n", coord_header(dim));
    for t in times {
        let frame = &trajectory.frames[t];
        for (kind, ops) in [("user", &frame.users), ("creator", &frame.creators)] {
            for (i, row) in ops.rows().enumerate() {
                writeln!(s, "{t},{kind},{i},{}", join(row)).unwrap();
            }
        }
    }
    s
}

pub fn consumption_csv(trajectory: &Trajectory) -> String {
    let mut s = format!("{CONSUMPTION_HEADER}\n");
    for step in &trajectory.steps {
        for (i, d) in step.distances.iter().enumerate() {
            writeln!(s, "{},{i},{},{d}", step.t, step.partition.creator_of(i)).unwrap();
        }
    }
    s
}

fn opinions_csv(ops: &Opinions) -> String {
    let mut s = format!("index,{}\n", coord_header(ops.dim()));
    for (i, row) in ops.rows().enumerate() {
        writeln!(s, "{i},{}", join(row)).unwrap();
    }
    s
}

#[derive(Clone, Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    generator: String,
    seed: u64,
    /// File name to lowercase hex SHA-256.
    files: BTreeMap<&'a str, String>,
}

/// Writes the given files plus a `manifest.json` hashing them.
fn write_bundle(dir: &Path, seed_value: u64, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut hashes = BTreeMap::new();
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
        hashes.insert(*name, hex::encode(Sha256::digest(body.as_bytes())));
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        generator: concat!("socialrec ", env!("CARGO_PKG_VERSION")).into(),
        seed: seed_value,
        files: hashes,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_users: usize,
    pub horizon: usize,
    pub final_sat_running: Option<f64>,
    pub final_clusterization: Option<f64>,
}

/// Simulates and writes `config.json`, `metrics.csv`, `snapshots.csv`,
/// `consumption.csv` and `manifest.json` (plus `node_map.csv` for edge-list
/// sources) into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let (effective, population, trajectory) = execute(config)?;
    let mut files = vec![
        ("config.json", effective.to_json()?),
        ("metrics.csv", metrics_csv(&trajectory)),
        (
            "snapshots.csv",
            snapshots_csv(&trajectory, &effective.snapshot_times, effective.n_topics),
        ),
        ("consumption.csv", consumption_csv(&trajectory)),
    ];
    if let Some(list) = &population.edge_list {
        files.push(("node_map.csv", node_map_csv(list)));
    }
    write_bundle(out_dir, config.seed, &files)?;
    let last = trajectory.metrics.last();
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        n_users: effective.n_users,
        horizon: effective.horizon,
        final_sat_running: last.map(|m| m.sat_running),
        final_clusterization: last.map(|m| m.clusterization),
    })
}

fn node_map_csv(list: &EdgeList) -> String {
    let mut s = String::from("original_id,index\n");
    for (i, id) in list.node_ids.iter().enumerate() {
        writeln!(s, "{id},{i}").unwrap();
    }
    s
}

/// Writes the initial population without simulating: per-agent parameters
/// and prejudices, and the weighted influence edges.
pub fn generate(config: &ExperimentConfig, out_dir: &Path) -> Result<World> {
    let (effective, population) = build_population(config)?;
    let w = &population.world;
    let dim = effective.n_topics;
    let mut users = format!("user_id,stubbornness,self_weight,recommender_influence,{}\n", coord_header(dim));
    for i in 0..w.users.len() {
        writeln!(
            users,
            "{i},{},{},{},{}",
            w.users.stubbornness[i],
            w.graph.self_weight(i),
            w.users.recommender_influence[i],
            join(w.users.prejudices.row(i))
        )
        .unwrap();
    }
    let mut creators = format!(
        "creator_id,stubbornness,self_influence,audience_influence,{}\n",
        coord_header(dim)
    );
    for j in 0..w.creators.len() {
        writeln!(
            creators,
            "{j},{},{},{},{}",
            w.creators.stubbornness[j],
            w.creators.self_influence[j],
            w.creators.audience_influence[j],
            join(w.creators.prejudices.row(j))
        )
        .unwrap();
    }
    let mut edges = String::from("source,target,weight\n");
    for (s, t, wt) in w.graph.edges() {
        writeln!(edges, "{s},{t},{wt}").unwrap();
    }
    let mut files = vec![
        ("config.json", effective.to_json()?),
        ("users.csv", users),
        ("creators.csv", creators),
        ("edges.csv", edges),
    ];
    if let Some(list) = &population.edge_list {
        files.push(("node_map.csv", node_map_csv(list)));
    }
    write_bundle(out_dir, config.seed, &files)?;
    Ok(population.world)
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub average_degree: f64,
    pub community_sizes: Vec<usize>,
}

/// Loads an edge list, detects `communities` spectral communities and seeds
/// opinions around per-community centres.
pub fn ingest(
    path: &Path,
    communities: usize,
    sigma: f64,
    n_topics: usize,
    seed_value: u64,
    out_dir: &Path,
) -> Result<IngestSummary> {
    let list = load_edge_list(path)?;
    let labels = spectral_communities(&list.adjacency(), communities, seed::derive(seed_value, &[tag::COMMUNITIES]))?;
    let ops = init_opinions_from_communities(
        &labels,
        communities,
        n_topics,
        sigma,
        &mut seed::rng(seed_value, &[tag::USER_OPINIONS]),
    )?;
    let mut sizes = vec![0; communities];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut edges = String::from("a,b\n");
    for (a, b) in &list.edges {
        writeln!(edges, "{a},{b}").unwrap();
    }
    let mut comm = String::from("index,community\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(comm, "{i},{l}").unwrap();
    }
    write_bundle(
        out_dir,
        seed_value,
        &[
            ("node_map.csv", node_map_csv(&list)),
            ("edges.csv", edges),
            ("communities.csv", comm),
            ("opinions.csv", opinions_csv(&ops)),
        ],
    )?;
    Ok(IngestSummary {
        n_nodes: list.n_nodes(),
        n_edges: list.edges.len(),
        average_degree: 2.0 * list.edges.len() as f64 / list.n_nodes() as f64,
        community_sizes: sizes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub satisfaction: f64,
    pub clusterization: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepSummaryRow {
    pub d: usize,
    pub k: usize,
    pub runs: usize,
    pub median_satisfaction: f64,
    pub var_satisfaction: f64,
    pub median_clusterization: f64,
    pub var_clusterization: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Final satisfaction and clusterization for every `(d, k, seed)` cell.
/// Cells run in parallel; each is the same run `simulate` would perform
/// with that strategy, `k` and seed, so rows match single runs exactly.
pub fn sweep(base: &ExperimentConfig, d_values: &[usize], k_values: &[usize], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let ks = if k_values.is_empty() { vec![base.rs.k] } else { k_values.to_vec() };
    let cells: Vec<(usize, usize, u64)> = d_values
        .iter()
        .flat_map(|&d| ks.iter().flat_map(move |&k| seeds.iter().map(move |&s| (d, k, s))))
        .collect();
    cells
        .into_par_iter()
        .map(|(d, k, s)| {
            let mut cfg = base.clone();
            cfg.rs = RecommenderConfig {
                strategy: Strategy::from_hops(d),
                k,
                ..base.rs
            };
            cfg.seed = s;
            // only the final state is needed; metrics at t=0 and t=T
            cfg.metrics_every = cfg.horizon.max(1);
            cfg.snapshot_times.clear();
            let (_, _, traj) = execute(&cfg)?;
            let last = traj.metrics.last().expect("t=0 row always present");
            Ok(SweepRow {
                d,
                k,
                seed: s,
                satisfaction: last.sat_running,
                clusterization: last.clusterization,
            })
        })
        .collect()
}

pub fn summarize_sweep(rows: &[SweepRow]) -> Vec<SweepSummaryRow> {
    let mut groups: BTreeMap<(usize, usize), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.d, r.k)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((d, k), rs)| {
            let sat: Vec<f64> = rs.iter().map(|r| r.satisfaction).collect();
            let cl: Vec<f64> = rs.iter().map(|r| r.clusterization).collect();
            SweepSummaryRow {
                d,
                k,
                runs: rs.len(),
                median_satisfaction: median(&sat),
                var_satisfaction: crate::metrics::summarize(&sat).variance,
                median_clusterization: median(&cl),
                var_clusterization: crate::metrics::summarize(&cl).variance,
            }
        })
        .collect()
}

/// Writes `sweep.csv` (one row per cell), `sweep_summary.csv` and the
/// base config.
pub fn write_sweep(base: &ExperimentConfig, rows: &[SweepRow], out_dir: &Path) -> Result<Vec<SweepSummaryRow>> {
    let summary = summarize_sweep(rows);
    let mut long = String::from("d,k,seed,sat_running,clusterization,neg_clusterization\n");
    for r in rows {
        writeln!(
            long,
            "{},{},{},{},{},{}",
            r.d, r.k, r.seed, r.satisfaction, r.clusterization, -r.clusterization
        )
        .unwrap();
    }
    let mut short = String::from(
        "d,k,runs,median_sat_running,var_sat_running,median_clusterization,var_clusterization\n",
    );
    for s in &summary {
        writeln!(
            short,
            "{},{},{},{},{},{},{}",
            s.d, s.k, s.runs, s.median_satisfaction, s.var_satisfaction, s.median_clusterization, s.var_clusterization
        )
        .unwrap();
    }
    write_bundle(
        out_dir,
        base.seed,
        &[
            ("config.json", base.to_json()?),
            ("sweep.csv", long),
            ("sweep_summary.csv", short),
        ],
    )?;
    Ok(summary)
}

pub const SUITES: [&str; 5] = ["theorem1", "lemma1", "alpha", "complementarity", "all"];

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

/// Runs one oracle suite, or all of them.
pub fn verify(suite: &str, seed_value: u64) -> Result<VerifyReport> {
    let selected: Vec<&'static str> = match suite {
        "all" => SUITES[..4].to_vec(),
        s => match SUITES[..4].iter().find(|&&n| n == s) {
            Some(&n) => vec![n],
            None => {
                return Err(Error::InvalidParameter(format!(
                    "unknown suite {s:?}; expected one of {}",
                    SUITES.join(", ")
                )))
            }
        },
    };
    let suites = selected
        .into_iter()
        .map(|name| match name {
            "theorem1" => verify_equilibrium(seed_value),
            "lemma1" => verify_static_partition(seed_value),
            "alpha" => Ok(verify_alpha()),
            _ => verify_complementarity(seed_value),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport {
        seed: seed_value,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

pub const EQUILIBRIUM_INSTANCES: u64 = 20;
pub const EQUILIBRIUM_STEPS: usize = 10_000;
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

fn verify_equilibrium(seed_value: u64) -> Result<SuiteResult> {
    let reports = (0..EQUILIBRIUM_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let (w, p) = theory::random_stable_instance(20, 3, 2, 0.05, seed::derive(seed_value, &[i]))?;
            theory::equilibrium_agreement(w, &p, EQUILIBRIUM_STEPS)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = reports.iter().map(|r| r.max_abs_error).fold(0.0, f64::max);
    let passed = worst <= EQUILIBRIUM_TOL && reports.iter().all(|r| r.equilibrium_in_unit_box);
    Ok(SuiteResult {
        suite: "theorem1",
        passed,
        details: serde_json::json!({
            "instances": reports.len(),
            "steps": EQUILIBRIUM_STEPS,
            "tolerance": EQUILIBRIUM_TOL,
            "max_abs_error": worst,
            "max_spectral_radius": reports.iter().map(|r| r.spectral_radius).fold(0.0, f64::max),
        }),
    })
}

fn verify_static_partition(seed_value: u64) -> Result<SuiteResult> {
    let reports = (0..5u64)
        .map(|i| {
            let cfg = theory::StaticPartitionConfig {
                seed: seed::derive(seed_value, &[i]),
                ..Default::default()
            };
            theory::static_partition_check(theory::static_partition_world(&cfg)?, cfg.horizon, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult {
        suite: "lemma1",
        passed: reports.iter().all(|r| r.passed()),
        details: serde_json::to_value(&reports)?,
    })
}

/// The `(η, α^0)` grid: `η` in `0.1..=0.9`, and 100 starting points per `η`
/// evenly spaced over `[η, 1]`.
pub fn alpha_grid() -> Vec<(f64, f64)> {
    (1..=9)
        .flat_map(|e| {
            let eta = e as f64 / 10.0;
            (0..100).map(move |m| {
                let a0 = if m == 99 { 1.0 } else { eta + (1.0 - eta) * m as f64 / 99.0 };
                (eta, a0)
            })
        })
        .collect()
}

pub const ALPHA_STEPS: usize = 500;

fn verify_alpha() -> SuiteResult {
    let mut out_of_bounds = 0;
    let mut decreasing = 0;
    let mut fixed_points_exact = true;
    let grid = alpha_grid();
    for &(eta, a0) in &grid {
        let trace = theory::alpha_recursion(eta, a0, ALPHA_STEPS).expect("grid lies in the domain");
        out_of_bounds += usize::from(!trace.within_bounds());
        decreasing += usize::from(!trace.non_decreasing());
        if a0 == eta || a0 == 1.0 {
            fixed_points_exact &= trace.alphas.iter().all(|&a| a == a0);
        }
    }
    SuiteResult {
        suite: "alpha",
        passed: out_of_bounds == 0 && decreasing == 0 && fixed_points_exact,
        details: serde_json::json!({
            "grid_points": grid.len(),
            "steps": ALPHA_STEPS,
            "out_of_bounds": out_of_bounds,
            "decreasing": decreasing,
            "fixed_points_exact": fixed_points_exact,
        }),
    }
}

fn verify_complementarity(seed_value: u64) -> Result<SuiteResult> {
    let mut checked = 0;
    let mut toward = 0;
    let mut identity = true;
    let mut worst_projection = f64::NEG_INFINITY;
    for i in 0..10u64 {
        let (w, p) = theory::random_stable_instance(20, 3, 2, 0.05, seed::derive(seed_value, &[tag::THEORY, i]))?;
        for user in 0..w.users.len() {
            if w.graph.in_degree(user) == 0 {
                continue;
            }
            let eps = 0.5 * w.users.recommender_influence[user];
            let r = theory::complementarity_check(&w, &p, user, eps)?;
            checked += 1;
            toward += usize::from(r.moves_toward_neighbours);
            identity &= r.row_identity_holds;
            worst_projection = worst_projection.max(r.projection_on_content);
        }
    }
    Ok(SuiteResult {
        suite: "complementarity",
        passed: identity && toward == checked,
        details: serde_json::json!({
            "users_checked": checked,
            "moved_toward_neighbours": toward,
            "row_identity_holds": identity,
            "max_projection_on_content": worst_projection,
        }),
    })
}
