use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use socialrec::experiment::{self, ExperimentConfig, GraphSource, ParameterMode};
use socialrec::recommender::{ScoreBasis, Strategy};
use socialrec::synthgen::HomophilyKernel;

/// Closed-loop simulator of users, content creators and a recommender.
#[derive(Parser)]
#[command(name = "socialrec", version)]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, env = "SOCIALREC_THREADS", global = true, hide = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic population without simulating.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run one simulation and write its outputs.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Final satisfaction and clusterization over a grid of d, k and seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,3,6")]
        d_values: Vec<usize>,
        /// Defaults to the config's k.
        #[arg(long, value_delimiter = ',')]
        k_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Load an edge list, detect communities and seed opinions.
    Ingest {
        edge_list: PathBuf,
        #[arg(long, default_value_t = 34)]
        communities: usize,
        #[arg(long, default_value_t = 0.15)]
        sigma: f64,
        #[arg(long, default_value_t = 2)]
        n_topics: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run numerical oracle suites and print a JSON report.
    Verify {
        /// theorem1, lemma1, alpha, complementarity or all.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Table1,
    Table4,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Distance,
    Squared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    User,
    Reference,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    n_creators: Option<usize>,
    #[arg(long)]
    n_topics: Option<usize>,
    #[arg(long, short = 'T')]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Homophily connectivity.
    #[arg(long, conflicts_with = "edge_list")]
    delta: Option<f64>,
    /// Decay of the homophily edge probability in opinion distance.
    #[arg(long, value_enum, conflicts_with = "edge_list")]
    kernel: Option<Kernel>,
    #[arg(long)]
    edge_list: Option<PathBuf>,
    #[arg(long, requires = "edge_list")]
    communities: Option<usize>,
    #[arg(long, requires = "edge_list")]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    parameter_mode: Option<Mode>,
    /// Influencer hops for the reference point; 0 is greedy.
    #[arg(long, short)]
    d: Option<usize>,
    #[arg(long, short)]
    k: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    score_basis: Option<Basis>,
    #[arg(long)]
    metrics_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<usize>>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        set!(n_users, n_creators, n_topics, seed, metrics_every);
        if let Some(t) = self.horizon {
            // keep the default final snapshot in step with the horizon
            if self.snapshot_times.is_none() && self.config.is_none() {
                c.snapshot_times = vec![0, t];
            }
            c.horizon = t;
        }
        if self.delta.is_some() || self.kernel.is_some() {
            let (d0, k0) = match c.graph_source {
                GraphSource::Homophily { delta, kernel } => (delta, kernel),
                GraphSource::EdgeList { .. } => (9.0, HomophilyKernel::Distance),
            };
            c.graph_source = GraphSource::Homophily {
                delta: self.delta.unwrap_or(d0),
                kernel: match self.kernel {
                    Some(Kernel::Distance) => HomophilyKernel::Distance,
                    Some(Kernel::Squared) => HomophilyKernel::SquaredDistance,
                    None => k0,
                },
            };
        }
        if let Some(path) = &self.edge_list {
            let (k0, s0) = match c.graph_source {
                GraphSource::EdgeList { communities, sigma, .. } => (communities, sigma),
                GraphSource::Homophily { .. } => (34, 0.15),
            };
            c.graph_source = GraphSource::EdgeList {
                path: path.clone(),
                communities: self.communities.unwrap_or(k0),
                sigma: self.sigma.unwrap_or(s0),
            };
            if self.parameter_mode.is_none() && self.config.is_none() {
                c.parameter_mode = ParameterMode::Table4;
            }
        }
        if let Some(m) = self.parameter_mode {
            c.parameter_mode = match m {
                Mode::Table1 => ParameterMode::Table1,
                Mode::Table4 => ParameterMode::Table4,
            };
        }
        if let Some(d) = self.d {
            c.rs.strategy = Strategy::from_hops(d);
        }
        if let Some(k) = self.k {
            c.rs.k = k;
        }
        if let Some(t) = self.temperature {
            c.rs.temperature = t;
        }
        if let Some(b) = self.score_basis {
            c.rs.score_basis = match b {
                Basis::User => ScoreBasis::DistanceToUser,
                Basis::Reference => ScoreBasis::DistanceToReference,
            };
        }
        if let Some(ts) = &self.snapshot_times {
            c.snapshot_times = ts.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("SOCIALREC_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate { config, out } => {
            let c = config.resolve()?;
            let w = experiment::generate(&c, &out)?;
            eprintln!(
                "wrote {} users, {} creators, {} edges to {}",
                w.users.len(),
                w.creators.len(),
                w.graph.n_edges(),
                out.display()
            );
        }
        Command::Simulate { config, out } => {
            let c = config.resolve()?;
            let s = experiment::run(&c, &out)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Sweep {
            config,
            d_values,
            k_values,
            seeds,
            out,
        } => {
            let c = config.resolve()?;
            for &k in &k_values {
                if k == 0 || k > c.n_creators {
                    bail!("k = {k} must lie in 1..={}", c.n_creators);
                }
            }
            let rows = experiment::sweep(&c, &d_values, &k_values, &seeds)?;
            let summary = experiment::write_sweep(&c, &rows, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Ingest {
            edge_list,
            communities,
            sigma,
            n_topics,
            seed,
            out,
        } => {
            let s = experiment::ingest(&edge_list, communities, sigma, n_topics, seed, &out)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Verify { suite, seed, out } => {
            let report = experiment::verify(&suite, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = out {
                std::fs::write(&p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
            }
            println!("{text}");
            return Ok(report.passed);
        }
    }
    Ok(true)
}
