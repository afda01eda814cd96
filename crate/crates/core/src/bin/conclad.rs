use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conclad::config::ExperimentConfig;
use conclad::detector::Method;
use conclad::eval::{read_scores_csv, recompute_from_scores};
use conclad::experiment::{run_experiment, sweep, write_run_outputs, write_sweep_outputs, SweepAxis};
use conclad::io::{write_embeddings, write_labels};
use conclad::seeds;
use conclad::synth::{synth_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "conclad", version, about = "Continual novel-class detection over embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as EMB1/LBL1 files.
    Synth(SynthArgs),
    /// Run a full continual experiment.
    Run(RunArgs),
    /// Repeat an experiment over the values of one setting.
    Sweep(SweepArgs),
    /// Recompute per-task AUROC from a saved scores.csv.
    Eval {
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Output prefix; writes `<out>.emb` and `<out>.lbl`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_classes: usize,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 500)]
    n_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    cluster_spread: f64,
    #[arg(long, default_value_t = 10.0)]
    min_mean_separation: f64,
    #[arg(long, default_value_t = 20)]
    subspace_rank: usize,
    #[arg(long, default_value_t = 0.97)]
    axis_decay: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_floor: f64,
    /// Dimension of a subspace shared by all classes; 0 uses all of `d`.
    #[arg(long, default_value_t = 28)]
    shared_rank: usize,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the detector mode (`default`, `no_iters`, `no_pseudo`,
    /// `sup_top`, `sup_rand`, `collapse_one_class`, `dfm`).
    #[arg(long)]
    mode: Option<Method>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `budget`, `increment` or `mode`.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated values, e.g. `0.0032,0.00625,0.0125`.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long)]
    mode: Option<Method>,
}

fn load(common: &Common, mode: Option<Method>) -> conclad::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.directory = o.clone();
    }
    if let Some(m) = mode {
        cfg.detector.mode = m;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> conclad::Result<bool> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = SynthConfig {
                n_classes: a.n_classes,
                d: a.d,
                n_per_class: a.n_per_class,
                cluster_spread: a.cluster_spread,
                min_mean_separation: a.min_mean_separation,
                subspace_rank: a.subspace_rank,
                axis_decay: a.axis_decay,
                noise_floor: a.noise_floor,
                shared_rank: (a.shared_rank > 0).then_some(a.shared_rank),
                seed: seeds::derive(a.seed, seeds::SYNTH),
            };
            let set = synth_dataset(&cfg)?;
            write_embeddings(&a.out.with_extension("emb"), &set)?;
            write_labels(&a.out.with_extension("lbl"), set.labels().unwrap_or(&[]))?;
            println!("wrote {} x {} to {}.{{emb,lbl}}", set.n(), set.d(), a.out.display());
            Ok(true)
        }
        Command::Run(a) => {
            let cfg = load(&a.common, a.mode)?;
            let out = run_experiment(&cfg)?;
            write_run_outputs(&cfg.output.directory, &out)?;
            for r in &out.records {
                println!("task {} auroc {:.4} queries {}", r.task, r.auroc, r.queries);
            }
            for (t, why) in &out.skipped {
                println!("task {t} skipped: {why}");
            }
            if let Ok(s) = out.summary() {
                println!("mean auroc {:.4} ({})", s.mean_auroc, out.method);
            }
            Ok(true)
        }
        Command::Sweep(a) => {
            let cfg = load(&a.common, a.mode)?;
            let runs = sweep(&cfg, a.axis, &a.values)?;
            write_sweep_outputs(&cfg.output.directory, a.axis, &runs)?;
            let mut ok = true;
            for r in &runs {
                match &r.result {
                    Ok(out) => match out.mean_auroc() {
                        Ok(m) => println!("{}={} mean auroc {m:.4}", a.axis, r.value),
                        Err(_) => println!("{}={} no scored tasks", a.axis, r.value),
                    },
                    Err(e) => {
                        ok = false;
                        eprintln!("{}={} failed: {e}", a.axis, r.value);
                    }
                }
            }
            Ok(ok)
        }
        Command::Eval { scores } => {
            let rows = read_scores_csv(fs::File::open(&scores)?)?;
            println!("mode,task,auroc");
            for (mode, task, auroc) in recompute_from_scores(&rows)? {
                println!("{mode},{task},{auroc}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
