//! Command-line front end: training runs, ablation sweeps, synthetic dataset
//! generation, and gradient checking.
//!
//! Exit codes are a stable contract: 0 success, 2 usage/config error,
//! 3 data error, 4 numerical failure.

mod config;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use hyperagg::graph::{generate_sbm, save_graph, SbmConfig};
use hyperagg::harness::{max_rel_grad_error, run_experiment};
use hyperagg::models::{Arch, Model, ModelConfig};
use hyperagg::rng::stream;
use hyperagg::HgError;

use config::{load_effective, EffectiveConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "hyperagg", version, about = "Hypernetwork aggregation graph learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a full experiment from a config file and emit CSV + JSON results.
    Train(TrainArgs),
    /// Run one experiment per point along a hyperparameter axis.
    Sweep(sweep::SweepArgs),
    /// Generate a stochastic block model dataset file.
    Generate(GenerateArgs),
    /// Compare tape gradients against finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override config entries, e.g. --set model.mixing=32 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use seeds 0..N instead of the config's seed list.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory for CSV/JSON results.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads for seeds (default: HYPERAGG_THREADS or 1).
    #[arg(long)]
    parallel: Option<usize>,
    /// Report zero wall time, making the CSV bitwise reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.02)]
    p_in: f64,
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 4)]
    feat_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output HAGRAPH file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_parser = parse_arch)]
    arch: Arch,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    mixing: usize,
    #[arg(long, default_value_t = 6)]
    vertices: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Deliberately corrupt one gradient entry (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    match s {
        "ghc" => Ok(Arch::Ghc),
        "ghm" => Ok(Arch::Ghm),
        "gcn" => Ok(Arch::Gcn),
        "mlp" => Ok(Arch::Mlp),
        other => Err(format!("unknown arch '{other}' (ghc|ghm|gcn|mlp)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Sweep(args) => sweep::cmd_sweep(args),
        Cmd::Generate(args) => cmd_generate(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Maps error kinds onto the exit-code contract.
fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HgError>() {
        Some(HgError::Config(_)) => EXIT_CONFIG,
        Some(HgError::Numerical(_)) => EXIT_NUMERICAL,
        Some(_) => EXIT_DATA,
        None => {
            if err.downcast_ref::<std::io::Error>().is_some() {
                EXIT_DATA
            } else {
                EXIT_CONFIG
            }
        }
    }
}

/// Shared by train and sweep: resolve config, dataset, and output naming.
pub(crate) struct Prepared {
    pub effective: EffectiveConfig,
    pub dataset: hyperagg::graph::Graph,
    pub dataset_name: String,
}

pub(crate) fn prepare(
    config_path: &PathBuf,
    overrides: &[String],
    seeds: Option<u64>,
    parallel: Option<usize>,
    no_timing: bool,
) -> anyhow::Result<Prepared> {
    let mut effective = load_effective(config_path, overrides)?;
    if let Some(n) = seeds {
        effective.experiment.seeds = (0..n).collect();
    }
    effective.experiment.parallel = parallel
        .or_else(|| {
            std::env::var("HYPERAGG_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);
    effective.experiment.measure_time = !no_timing;
    let (dataset, dataset_name) = effective.data.load()?;
    Ok(Prepared {
        effective,
        dataset,
        dataset_name,
    })
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<ExitCode> {
    let prepared = prepare(
        &args.config,
        &args.overrides,
        args.seeds,
        args.parallel,
        args.no_timing,
    )?;
    let spec = prepared.effective.to_spec();
    let out = run_experiment(&prepared.dataset, &spec)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output dir {}", args.out.display()))?;
    let base = format!(
        "{}_{}_{}",
        spec.model.arch, prepared.dataset_name, spec.setting
    );
    let csv_path = args.out.join(format!("{base}.csv"));
    std::fs::write(&csv_path, out.to_csv())?;
    let json_path = args.out.join(format!("{base}.json"));
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&out.summary_json(&spec))?,
    )?;

    println!(
        "{} {} {} {:.2}±{:.2}",
        spec.model.arch,
        prepared.dataset_name,
        spec.setting,
        100.0 * out.summary.mean,
        100.0 * out.summary.std
    );
    if !out.summary.failed_seeds.is_empty() {
        eprintln!(
            "warning: {} run(s) diverged and were excluded: seeds {:?}",
            out.summary.failed_seeds.len(),
            out.summary.failed_seeds
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<ExitCode> {
    let cfg = SbmConfig {
        num_vertices: args.n,
        classes: args.classes,
        p_in: args.p_in,
        p_out: args.p_out,
        feat_dim: args.feat_dim,
        noise: args.noise,
    };
    let g = generate_sbm(&cfg, &mut stream(args.seed, "sbm"))?;
    save_graph(&g, &args.out)?;
    println!(
        "wrote {} ({} vertices, {} edges, homophily {:.3})",
        args.out.display(),
        g.num_vertices,
        g.num_edges(),
        g.edge_homophily()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<ExitCode> {
    use hyperagg::graph::{Graph, Label, LabelKind};
    use hyperagg::tensor::Matrix;
    use rand::Rng as _;

    let mut rng = stream(args.seed, "gradcheck-graph");
    let n = args.vertices;
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen::<f64>() < 0.4 {
                edges.push((s, d));
            }
        }
    }
    let labels = (0..n).map(|v| Label::Class(v % args.classes)).collect();
    let g = Graph::build(
        n,
        &edges,
        Matrix::glorot(n, 4, &mut rng),
        labels,
        LabelKind::Classes(args.classes),
    )?
    .make_undirected()
    .add_self_loops();

    let config = ModelConfig {
        arch: args.arch,
        depth: args.depth,
        hidden: args.hidden,
        mixing: args.mixing,
        k_hop: 2,
        subgraph_cap: 5,
        model_dropout: 0.3,
        input_dropout: 0.2,
        mixing_dropout: 0.1,
        ..Default::default()
    };
    let model = Model::init(config, 4, args.classes, &mut stream(args.seed, "init"))?;
    let err = max_rel_grad_error(&model, &g, args.seed, args.eps, args.corrupt)?;
    println!("max relative gradient error: {err:.3e}");
    if err < 1e-4 {
        println!("gradcheck: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradcheck: FAIL");
        Ok(ExitCode::from(EXIT_NUMERICAL))
    }
}
