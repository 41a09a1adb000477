//! `gpsphen` command-line entry point.
//!
//! Exit codes: 0 on success, 1 when the data is unusable, 2 when the run is
//! misconfigured (bad flags, unreadable config or roster, missing upstream
//! artifacts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpsphen::pipeline::{self, RunConfig, FORMAT_VERSION};
use gpsphen::synth::{write_study, StudySpec};
use gpsphen::Error;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format ", "1", ")");

#[derive(Parser, Debug)]
#[command(name = "gpsphen", version = VERSION, about = "GPS mobility phenotyping pipeline")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory of raw `<participant_id>.csv` traces.
    #[arg(long, global = true)]
    traces: Option<PathBuf>,
    /// Roster CSV: participant_id,group[,timezone_offset_minutes].
    #[arg(long, global = true)]
    roster: Option<PathBuf>,
    /// Survey CSV: participant_id,local_date,sadness_level.
    #[arg(long, global = true)]
    survey: Option<PathBuf>,
    /// Default timezone offset in minutes east of UTC.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tz_offset: Option<i32>,
    /// Minimum fraction of observed half-hour bins for a day to count.
    #[arg(long, global = true)]
    min_coverage: Option<f64>,
    /// Stay radius in meters.
    #[arg(long, global = true)]
    d_thresh: Option<f64>,
    /// Minimum stay duration in seconds.
    #[arg(long, global = true)]
    t_thresh: Option<f64>,
    /// Distance under which stays join the same place, meters.
    #[arg(long, global = true)]
    merge_distance: Option<f64>,
    /// Ridge strength for the logistic model.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Trees per random forest.
    #[arg(long, global = true)]
    n_trees: Option<usize>,
    /// Random forest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only evaluate the logistic model.
    #[arg(long, global = true)]
    skip_forest: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate raw traces and write canonical copies.
    Ingest,
    /// Build daily displacement profiles.
    Ddp,
    /// Principal components of the displacement profiles.
    Pca,
    /// IS, IV, M10, L5 and RA per participant.
    Circadian,
    /// The seven daily mobility phenotypes.
    Phenotypes,
    /// Welch comparisons of PCA scores, circadian metrics and phenotypes.
    Compare,
    /// Leave-one-participant-out severe-sadness prediction.
    Predict,
    /// Every stage from ingest to predict.
    Pipeline,
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Study spec JSON; without it a two-arm PRE_LIKE/POST_LIKE study is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Participants per arm for the default study.
    #[arg(long, default_value_t = 50)]
    participants: usize,
    /// Days per participant for the default study.
    #[arg(long, default_value_t = 60)]
    days: usize,
    /// Seed for the default study.
    #[arg(long = "study-seed", default_value_t = 1)]
    study_seed: u64,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = &o.out {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &o.traces {
        cfg.trace_dir = Some(v.clone());
    }
    if let Some(v) = &o.roster {
        cfg.roster = Some(v.clone());
    }
    if let Some(v) = &o.survey {
        cfg.survey = Some(v.clone());
    }
    if let Some(v) = o.tz_offset {
        cfg.timezone_offset_minutes = v;
    }
    if let Some(v) = o.min_coverage {
        cfg.ddp.min_coverage = v;
        cfg.phenotypes.min_coverage = v;
    }
    if let Some(v) = o.d_thresh {
        cfg.phenotypes.places.d_thresh_m = v;
    }
    if let Some(v) = o.t_thresh {
        cfg.phenotypes.places.t_thresh_s = v;
    }
    if let Some(v) = o.merge_distance {
        cfg.phenotypes.places.merge_distance_m = v;
    }
    if let Some(v) = o.lambda {
        cfg.logistic.lambda = v;
    }
    if let Some(v) = o.n_trees {
        cfg.forest.n_trees = v;
    }
    if let Some(v) = o.seed {
        cfg.forest.seed = v;
    }
    if o.skip_forest {
        cfg.skip_forest = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<(), Error> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::ConfigInvalid(format!("cannot read spec {}: {e}", path.display())))?;
            StudySpec::from_json(&text)?
        }
        None => StudySpec::two_arm(args.participants, args.days, args.study_seed),
    };
    let participants = spec.generate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_study(&cfg.output_dir, &spec, &participants)?;
    let days: usize = participants.iter().map(|p| p.days.len()).sum();
    eprintln!("wrote {} participants, {days} days to {}", participants.len(), cfg.output_dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Ingest => {
            let s = pipeline::run_ingest(&cfg)?;
            eprintln!("ingested {} participants, {} points, {} rows rejected", s.participants, s.points, s.rejected_rows);
        }
        Command::Ddp => {
            let s = pipeline::run_ddp(&cfg)?;
            eprintln!("{} of {} days retained", s.days_retained, s.days_seen);
        }
        Command::Pca => {
            let s = pipeline::run_pca(&cfg)?;
            eprintln!("PCA over {} days", s.n_days);
        }
        Command::Circadian => {
            let s = pipeline::run_circadian(&cfg)?;
            eprintln!("circadian metrics for {} participants", s.participants);
        }
        Command::Phenotypes => {
            let s = pipeline::run_phenotypes(&cfg)?;
            eprintln!("{} participant-days, {} labeled, {} severe", s.participant_days, s.labeled_days, s.severe_days);
        }
        Command::Compare => {
            let rows = pipeline::run_compare(&cfg)?;
            eprintln!("{} comparisons", rows.len());
        }
        Command::Predict => {
            let s = pipeline::run_predict(&cfg)?;
            for c in &s.comparisons {
                eprintln!(
                    "{}: AUC pre {:.3} ({:.3}), post {:.3} ({:.3}), p = {:.3}",
                    c.method, c.auc_mean_pre, c.auc_sd_pre, c.auc_mean_post, c.auc_sd_post, c.p
                );
            }
        }
        Command::Pipeline => {
            pipeline::run_pipeline(&cfg)?;
            eprintln!("pipeline complete: {}", cfg.output_dir.display());
        }
        Command::Synth(args) => run_synth(&cfg, args)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    debug_assert_eq!(FORMAT_VERSION, "1");
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: cannot start {} workers: {e}", cli.jobs);
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
