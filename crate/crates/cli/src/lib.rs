//! Command handlers behind the `pcio` binary: run simulations and sweeps,
//! plan clusters, evaluate the energy model.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use pcio_core::energy::{energy_joules, reduction_vs_always_on, EnergyParams, PUBLISHED_REDUCTION_PCT};
use pcio_core::partitioner::{partition_with_target, TARGET_CLUSTER_SIZE};
use pcio_core::registry::NodeDescriptor;
use pcio_core::sim::{run_scenario, sweep, write_sweep_csv, MetricsReport, Scenario, SweepAxis};

#[derive(Parser)]
#[command(name = "pcio", version, about = "Duty-cycle-aware FaaS orchestration simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write the per-task CSV.
    Simulate {
        /// Scenario file (TOML, or JSON by extension).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full metrics report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the scenario once per axis value and write a combined CSV.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// duty_cycle, cluster_size or task_size
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read a JSON node list and print the cluster plan as JSON.
    Partition {
        /// Node list file; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Planning time; defaults to the latest last_seen_s.
        #[arg(long)]
        now: Option<f64>,
        #[arg(long, default_value_t = TARGET_CLUSTER_SIZE)]
        target: usize,
        #[arg(long, default_value_t = 1)]
        generation: u64,
    },
    /// Energy over a run at a given duty cycle, and the saving against
    /// staying awake.
    Energy {
        #[arg(long)]
        dc: f64,
        /// Seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        i_active: Option<f64>,
        #[arg(long)]
        i_sleep: Option<f64>,
        #[arg(long)]
        voltage: Option<f64>,
    },
}

fn load_scenario(path: Option<&PathBuf>, seed: Option<u64>) -> Result<Scenario> {
    let scenario = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    Ok(match seed {
        Some(s) => scenario.with_seed(s),
        None => scenario,
    })
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_summary(r: &MetricsReport) {
    println!(
        "{} tasks in {:.1} s simulated, error rate {:.4}",
        r.tasks.len(),
        r.duration_s,
        r.error_rate
    );
    for s in &r.per_size {
        let ratio = s.mean_ratio.map_or("-".to_owned(), |x| format!("{x:.3}"));
        println!("  size {:>8}: ratio {ratio:>10}, errors {}/{}", s.size, s.errors, s.tasks);
    }
    println!(
        "  energy {:.3} J, {:.2}% below always-on, {:.2}% below reference machine (published figure {:.0}%)",
        r.energy.total, r.energy.reduction_pct, r.energy.reduction_vs_reference_pct, r.energy.published_reduction_pct
    );
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            out,
            report,
        } => {
            let s = load_scenario(scenario.as_ref(), seed)?;
            let r = run_scenario(&s)?;
            let mut w = create(&out)?;
            r.write_tasks_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = report {
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &r)?;
                w.flush()?;
            }
            print_summary(&r);
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            seed,
            out,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let s = load_scenario(scenario.as_ref(), seed)?;
            let points = sweep(&s, axis, &values)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    write_sweep_csv(axis, &points, &mut w)?;
                    w.flush()?;
                }
                None => write_sweep_csv(axis, &points, io::stdout().lock())?,
            }
        }
        Command::Partition {
            input,
            now,
            target,
            generation,
        } => {
            let mut text = String::new();
            match input {
                Some(p) => {
                    File::open(&p)
                        .with_context(|| format!("cannot open {}", p.display()))?
                        .read_to_string(&mut text)?;
                }
                None => {
                    io::stdin().read_to_string(&mut text)?;
                }
            }
            let nodes: Vec<NodeDescriptor> = serde_json::from_str(&text).context("node list must be a JSON array")?;
            if let Some(bad) = nodes
                .iter()
                .find(|n| !(n.period_s > 0.0) || !(n.awake_fraction > 0.0 && n.awake_fraction <= 1.0))
            {
                bail!("node {} has an invalid period or awake fraction", bad.node_id);
            }
            let now = now.unwrap_or_else(|| nodes.iter().map(|n| n.last_seen_s).fold(0.0, f64::max));
            let plan = partition_with_target(&nodes, now, generation, target);
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Energy {
            dc,
            duration,
            i_active,
            i_sleep,
            voltage,
        } => {
            let d = EnergyParams::default();
            let params = EnergyParams {
                i_active: i_active.unwrap_or(d.i_active),
                i_sleep: i_sleep.unwrap_or(d.i_sleep),
                voltage: voltage.unwrap_or(d.voltage),
            };
            params.validate()?;
            let reduction = reduction_vs_always_on(dc, duration, &params)?;
            let joules = energy_joules(dc * duration, (1.0 - dc) * duration, &params)?;
            let always_on = energy_joules(duration, 0.0, &params)?;
            let out = json!({
                "dc": dc,
                "duration_s": duration,
                "energy_j": joules,
                "always_on_j": always_on,
                "reduction_pct": reduction,
                "published_reduction_pct": PUBLISHED_REDUCTION_PCT,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
