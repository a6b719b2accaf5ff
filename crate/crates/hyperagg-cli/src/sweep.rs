//! Hyperparameter sweeps: one experiment per point along an axis, emitted as
//! a long-format CSV for plotting, plus a per-point summary. Boolean axes
//! default to {current, flipped}, which doubles as the single-toggle
//! ablation report.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::Args;

use hyperagg::harness::run_experiment;
use hyperagg::models::{ModelConfig, Readout};
use hyperagg::HgError;

use crate::prepare;

#[derive(Args)]
pub struct SweepArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Axis to sweep: `mixing=8,16,32`, `lr=0.01,0.001`, or a boolean
    /// toggle like `root_connection`.
    #[arg(long)]
    axis: String,
    /// Override config entries before sweeping (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    no_timing: bool,
}

struct AxisPoint {
    display: String,
    config: ModelConfig,
}

fn parse_list<T: std::str::FromStr>(name: &str, raw: &str) -> anyhow::Result<Vec<T>> {
    let vals: Result<Vec<T>, _> = raw.split(',').map(|v| v.trim().parse::<T>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => bail!(HgError::config(format!(
            "axis '{name}' needs a comma-separated value list, got '{raw}'"
        ))),
    }
}

fn axis_points(base: &ModelConfig, axis: &str) -> anyhow::Result<Vec<AxisPoint>> {
    let (name, values) = match axis.split_once('=') {
        Some((n, v)) => (n.trim(), Some(v.trim())),
        None => (axis.trim(), None),
    };
    if name.is_empty() {
        bail!(HgError::config("empty sweep axis".to_string()));
    }

    macro_rules! numeric {
        ($field:ident, $ty:ty) => {{
            let Some(raw) = values else {
                bail!(HgError::config(format!(
                    "numeric axis '{name}' needs explicit values, e.g. {name}=8,16,32"
                )));
            };
            parse_list::<$ty>(name, raw)?
                .into_iter()
                .map(|v| {
                    let mut config = base.clone();
                    config.$field = v;
                    AxisPoint {
                        display: v.to_string(),
                        config,
                    }
                })
                .collect()
        }};
    }
    macro_rules! boolean {
        ($field:ident) => {{
            let vals: Vec<bool> = match values {
                Some(raw) => parse_list::<bool>(name, raw)?,
                None => vec![base.$field, !base.$field],
            };
            vals.into_iter()
                .map(|v| {
                    let mut config = base.clone();
                    config.$field = v;
                    AxisPoint {
                        display: v.to_string(),
                        config,
                    }
                })
                .collect()
        }};
    }

    let points: Vec<AxisPoint> = match name {
        "mixing" => numeric!(mixing, usize),
        "hidden" => numeric!(hidden, usize),
        "depth" => numeric!(depth, usize),
        "k_hop" => numeric!(k_hop, usize),
        "subgraph_cap" => numeric!(subgraph_cap, usize),
        "batch_size" => numeric!(batch_size, usize),
        "lr" => numeric!(lr, f64),
        "weight_decay" => numeric!(weight_decay, f64),
        "input_dropout" => numeric!(input_dropout, f64),
        "model_dropout" => numeric!(model_dropout, f64),
        "mixing_dropout" => numeric!(mixing_dropout, f64),
        "root_connection" => boolean!(root_connection),
        "residual" => boolean!(residual),
        "normalize_input" => boolean!(normalize_input),
        "self_loops" => boolean!(self_loops),
        "undirected" => boolean!(undirected),
        "pre_activation" => boolean!(pre_activation),
        "trans_ha_input" => boolean!(trans_ha_input),
        "trans_ha_output" => boolean!(trans_ha_output),
        "freeze_sampling" => boolean!(freeze_sampling),
        "readout" => {
            let both = [Readout::Root, Readout::Mean];
            let vals: Vec<Readout> = match values {
                Some(raw) => raw
                    .split(',')
                    .map(|v| match v.trim() {
                        "root" => Ok(Readout::Root),
                        "mean" => Ok(Readout::Mean),
                        other => Err(HgError::config(format!("unknown readout '{other}'"))),
                    })
                    .collect::<Result<_, _>>()?,
                None => {
                    let flipped = both
                        .into_iter()
                        .find(|r| *r != base.readout)
                        .expect("two readouts exist");
                    vec![base.readout, flipped]
                }
            };
            vals.into_iter()
                .map(|v| {
                    let mut config = base.clone();
                    config.readout = v;
                    AxisPoint {
                        display: format!("{v:?}").to_lowercase(),
                        config,
                    }
                })
                .collect()
        }
        other => bail!(HgError::config(format!("unknown sweep axis '{other}'"))),
    };
    if points.is_empty() {
        bail!(HgError::config(format!("axis '{name}' produced no points")));
    }
    Ok(points)
}

pub fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let prepared = prepare(
        &args.config,
        &args.overrides,
        args.seeds,
        args.parallel,
        args.no_timing,
    )?;
    let base_spec = prepared.effective.to_spec();
    let (axis_name, _) = match args.axis.split_once('=') {
        Some((n, v)) => (n.trim().to_string(), Some(v)),
        None => (args.axis.trim().to_string(), None),
    };
    let points = axis_points(&base_spec.model, &args.axis)?;

    std::fs::create_dir_all(&args.out)?;
    let mut long_csv = String::from("axis,value,seed,metric,epochs,seconds\n");
    let mut summary_csv = String::from("axis,value,mean,std\n");
    let mut summaries = Vec::new();

    for point in &points {
        let spec = hyperagg::harness::ExperimentSpec {
            model: point.config.clone(),
            ..base_spec.clone()
        };
        let out = run_experiment(&prepared.dataset, &spec)?;
        for r in &out.runs {
            let metric = if r.failure.is_some() {
                "nan".to_string()
            } else {
                format!("{:.6}", r.test_metric)
            };
            long_csv.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                axis_name, point.display, r.seed, metric, r.epochs_run, r.wall_seconds
            ));
        }
        summary_csv.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            axis_name, point.display, out.summary.mean, out.summary.std
        ));
        println!(
            "{axis_name}={} {} {:.2}±{:.2}",
            point.display,
            prepared.dataset_name,
            100.0 * out.summary.mean,
            100.0 * out.summary.std
        );
        summaries.push((point.display.clone(), out.summary.mean));
    }

    // single-toggle ablation report: delta of the flipped setting vs base
    if summaries.len() == 2 && !args.axis.contains('=') {
        let delta = 100.0 * (summaries[1].1 - summaries[0].1);
        println!(
            "{axis_name} changed to {}: {delta:+.2} points",
            summaries[1].0
        );
    }

    let long_path = args.out.join(format!("sweep_{axis_name}.csv"));
    std::fs::write(&long_path, long_csv)?;
    let summary_path = args.out.join(format!("sweep_{axis_name}_summary.csv"));
    std::fs::write(&summary_path, summary_csv)?;
    println!(
        "wrote {} and {}",
        long_path.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toggle_axis_yields_base_then_flip() {
        let base = ModelConfig::default();
        let points = axis_points(&base, "root_connection").unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].config.root_connection, base.root_connection);
        assert_eq!(points[1].config.root_connection, !base.root_connection);
    }

    #[test]
    fn numeric_axis_needs_values() {
        let base = ModelConfig::default();
        assert!(axis_points(&base, "mixing").is_err());
        let points = axis_points(&base, "mixing=8,16,32").unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[2].config.mixing, 32);
    }

    #[test]
    fn unknown_axis_rejected() {
        let base = ModelConfig::default();
        assert!(axis_points(&base, "frobnication=1").is_err());
        assert!(axis_points(&base, "").is_err());
    }
}
