//! Experiment CLI: train the filtration policy, run strategies over a
//! dataset, replay logged drop ratios, and render curve reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ndf_lab::config::{apply_key_value, load_config_file, parse_dataset_spec};
use ndf_lab::csvio;
use ndf_lab::error::Result;
use ndf_lab::harness::{
    apply_strategy, average_runs, build_strategy, prepare_data, train_policy, RunConfig,
    StrategyId,
};
use ndf_lab::report;

#[derive(Parser)]
#[command(
    name = "ndf-lab",
    about = "Training-data-selection laboratory: learned and heuristic mini-batch filtration around SGD",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the filtration policy on the sampled subset and write
    /// `episodes.csv` plus a policy checkpoint.
    TrainPolicy(CommonArgs),
    /// Train the base model on the full training set under a strategy,
    /// writing `curve.csv`, `filterlog.csv`, and `droplog.csv`.
    Run(CommonArgs),
    /// Run the random-drop baseline replaying a logged ratio file.
    ReplayRanddrop(CommonArgs),
    /// Render one or more curve CSV files into a line-chart SVG.
    Report(ReportArgs),
}

#[derive(Args)]
struct ReportArgs {
    /// Curve CSV files to plot together.
    #[arg(required = true)]
    curves: Vec<PathBuf>,
    /// Output directory for `report.svg`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and checkpoints.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Dataset: `mnist:<dir>` or `blobs:classes=..,per_class=..,dim=..,spread=..`.
    #[arg(long)]
    dataset: Option<String>,
    /// Filtration strategy: unfiltered|spl|randdrop|ndf.
    #[arg(long)]
    strategy: Option<String>,
    /// Dev-accuracy threshold defining the terminal reward.
    #[arg(long)]
    tau: Option<f64>,
    /// Per-episode arrival cap T'.
    #[arg(long)]
    horizon: Option<u64>,
    /// SPL epochs until all data is included.
    #[arg(long)]
    spl_epochs: Option<usize>,
    /// Policy-training episode count L.
    #[arg(long)]
    episodes: Option<u64>,
    /// Mini-batch size M.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Discount factor (inert under terminal-only reward).
    #[arg(long)]
    gamma: Option<f64>,
    /// Repeated runs to perform and average.
    #[arg(long)]
    runs: Option<usize>,
    /// Accuracy evaluation cadence for apply-run curves, in updates.
    #[arg(long)]
    eval_every: Option<u64>,
    /// Dev-accuracy cadence inside policy-training episodes, in updates.
    #[arg(long)]
    episode_eval_every: Option<u64>,
    /// Passes over the full dataset in apply runs.
    #[arg(long)]
    apply_epochs: Option<usize>,
    /// |D'| sampled for policy training (dev included).
    #[arg(long)]
    ndf_subset_size: Option<usize>,
    /// |D'_dev| held out of the policy subset.
    #[arg(long)]
    dev_size: Option<usize>,
    /// Subsample the MNIST training set to this many instances.
    #[arg(long)]
    mnist_subset: Option<usize>,

    #[arg(long)]
    seed_data: Option<u64>,
    #[arg(long)]
    seed_policy: Option<u64>,
    #[arg(long)]
    seed_strategy: Option<u64>,
    #[arg(long)]
    seed_model: Option<u64>,

    #[arg(long)]
    policy_hidden: Option<usize>,
    #[arg(long)]
    policy_lr: Option<f64>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    base_momentum: Option<f64>,
    #[arg(long)]
    base_hidden: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,

    /// Drop-ratio log to replay (randdrop).
    #[arg(long)]
    droplog: Option<PathBuf>,
    /// Trained policy checkpoint (ndf apply runs).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// What i_tau counts: arrivals|updates.
    #[arg(long)]
    i_tau_mode: Option<String>,
    /// NDF application mode: sample|threshold.
    #[arg(long)]
    ndf_mode: Option<String>,
}

impl CommonArgs {
    fn build_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => load_config_file(path, RunConfig::default())?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            config.dataset = parse_dataset_spec(v)?;
        }
        if let Some(v) = &self.strategy {
            config.strategy = StrategyId::parse(v)?;
        }
        {
            let mut kv = |key: &str, value: Option<String>| -> Result<()> {
                if let Some(v) = value {
                    apply_key_value(&mut config, key, &v)?;
                }
                Ok(())
            };
            kv("tau", self.tau.map(|v| v.to_string()))?;
            kv("horizon", self.horizon.map(|v| v.to_string()))?;
            kv("spl-epochs", self.spl_epochs.map(|v| v.to_string()))?;
            kv("episodes", self.episodes.map(|v| v.to_string()))?;
            kv("batch-size", self.batch_size.map(|v| v.to_string()))?;
            kv("gamma", self.gamma.map(|v| v.to_string()))?;
            kv("runs", self.runs.map(|v| v.to_string()))?;
            kv("eval-every", self.eval_every.map(|v| v.to_string()))?;
            kv(
                "episode-eval-every",
                self.episode_eval_every.map(|v| v.to_string()),
            )?;
            kv("apply-epochs", self.apply_epochs.map(|v| v.to_string()))?;
            kv(
                "ndf-subset-size",
                self.ndf_subset_size.map(|v| v.to_string()),
            )?;
            kv("dev-size", self.dev_size.map(|v| v.to_string()))?;
            kv("mnist-subset", self.mnist_subset.map(|v| v.to_string()))?;
            kv("seed-data", self.seed_data.map(|v| v.to_string()))?;
            kv("seed-policy", self.seed_policy.map(|v| v.to_string()))?;
            kv("seed-strategy", self.seed_strategy.map(|v| v.to_string()))?;
            kv("seed-model", self.seed_model.map(|v| v.to_string()))?;
            kv("policy-hidden", self.policy_hidden.map(|v| v.to_string()))?;
            kv("policy-lr", self.policy_lr.map(|v| v.to_string()))?;
            kv("base-lr", self.base_lr.map(|v| v.to_string()))?;
            kv("base-momentum", self.base_momentum.map(|v| v.to_string()))?;
            kv("base-hidden", self.base_hidden.map(|v| v.to_string()))?;
            kv("init-scale", self.init_scale.map(|v| v.to_string()))?;
            kv("i-tau-mode", self.i_tau_mode.clone())?;
            kv("ndf-mode", self.ndf_mode.clone())?;
        }
        if let Some(p) = &self.droplog {
            config.droplog_path = Some(p.clone());
        }
        if let Some(p) = &self.policy {
            config.policy_checkpoint = Some(p.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

fn ensure_out_dir(path: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| ndf_lab::Error::io(path.clone(), e))
}

fn cmd_train_policy(args: &CommonArgs) -> Result<()> {
    let config = args.build_config()?;
    ensure_out_dir(&args.out)?;
    let data = prepare_data(&config)?;
    eprintln!(
        "train-policy: |D'_train|={} |D'_dev|={} episodes={} tau={} horizon={}",
        data.policy_train.len(),
        data.policy_dev.len(),
        config.episodes,
        config.tau,
        config.horizon
    );
    let trained = train_policy(&data.policy_train, &data.policy_dev, &config)?;
    let episodes_path = args.out.join("episodes.csv");
    csvio::write_episodes(&episodes_path, &trained.records)?;
    let ckpt_path = args.out.join("policy.ckpt");
    trained
        .policy
        .save_checkpoint(&trained.baseline, &ckpt_path)?;
    let best = trained
        .records
        .iter()
        .find(|r| r.episode == trained.best_episode)
        .expect("best episode recorded");
    println!(
        "best episode {} of {}: i_tau={} reward={}",
        trained.best_episode,
        config.episodes,
        best.i_tau,
        csvio::fmt_sig6(best.reward)
    );
    println!("wrote {}", episodes_path.display());
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn run_with_config(config: &RunConfig, out: &PathBuf) -> Result<()> {
    ensure_out_dir(out)?;
    let data = prepare_data(config)?;
    eprintln!(
        "run: strategy={} |D|={} |test|={} runs={} apply_epochs={}",
        config.strategy.name(),
        data.train.len(),
        data.test.len(),
        config.runs,
        config.apply_epochs
    );

    let mut all_rows = Vec::new();
    let mut curves = Vec::new();
    for run_id in 0..config.runs as u64 {
        let mut strategy = build_strategy(config)?;
        let outputs = apply_strategy(
            &data.train,
            &data.test,
            Some(&data.policy_dev),
            strategy.as_mut(),
            config,
            run_id,
        )?;
        let final_acc = outputs.curve.last().map(|p| p.test_accuracy).unwrap_or(0.0);
        println!(
            "run {}: updates={} arrivals={} effective_instances={} final_test_accuracy={}",
            run_id,
            outputs.updates,
            outputs.arrivals,
            outputs.effective_instances,
            csvio::fmt_sig6(final_acc)
        );
        all_rows.extend(csvio::curve_rows(
            run_id,
            config.strategy.name(),
            &outputs.curve,
        ));
        if config.runs == 1 {
            csvio::write_filterlog(&out.join("filterlog.csv"), &outputs.histogram)?;
            csvio::write_droplog(&out.join("droplog.csv"), &outputs.droplog)?;
        } else {
            let run_dir = out.join(format!("run{run_id}"));
            ensure_out_dir(&run_dir)?;
            csvio::write_filterlog(&run_dir.join("filterlog.csv"), &outputs.histogram)?;
            csvio::write_droplog(&run_dir.join("droplog.csv"), &outputs.droplog)?;
        }
        curves.push(outputs.curve);
    }

    let curve_path = out.join("curve.csv");
    csvio::write_curve(&curve_path, &all_rows)?;
    println!("wrote {}", curve_path.display());

    if config.runs > 1 {
        let mean = average_runs(&curves)?;
        let mean_rows = csvio::curve_rows(0, &format!("{}-mean", config.strategy.name()), &mean);
        let avg_path = out.join("curve_avg.csv");
        csvio::write_curve(&avg_path, &mean_rows)?;
        println!("wrote {}", avg_path.display());
    }
    Ok(())
}

fn cmd_run(args: &CommonArgs) -> Result<()> {
    let config = args.build_config()?;
    run_with_config(&config, &args.out)
}

fn cmd_replay_randdrop(args: &CommonArgs) -> Result<()> {
    let mut config = args.build_config()?;
    config.strategy = StrategyId::RandDrop;
    if config.droplog_path.is_none() {
        return Err(ndf_lab::Error::config(
            "replay-randdrop needs --droplog <file>",
        ));
    }
    run_with_config(&config, &args.out)
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut rows = Vec::new();
    for path in &args.curves {
        rows.extend(csvio::read_curve(path)?);
    }
    let out_path = args.out.join("report.svg");
    report::write_report(&rows, &out_path)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainPolicy(args) => cmd_train_policy(args),
        Command::Run(args) => cmd_run(args),
        Command::ReplayRanddrop(args) => cmd_replay_randdrop(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
