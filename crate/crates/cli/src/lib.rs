//! Command-line front end: scenario generation, two-stage training,
//! single-scene planning and batch evaluation.

use clap::{Args, Parser, Subcommand};
use riskmap::checkpoint::{load_heads, load_predictor, ModelFile};
use riskmap::metrics::{EvalReport, MetricRow, ScenarioRow};
use riskmap::planner::{plan, CostBreakdown, Models, PlanConfig, TrajectorySample};
use riskmap::scenario::{generate_scenarios, load_scenario, save_scenario, Scenario, ScenarioKind};
use riskmap::training::{train_stage1, train_stage2, LossCurve, LossMask, TrainConfig};
use serde::Serialize;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] riskmap::Error),
    #[error("{0}")]
    Usage(#[from] clap::Error),
    #[error("config error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(riskmap::Error::Io { .. }) => EXIT_IO,
            CliError::Core(riskmap::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Usage(e) if !e.use_stderr() => EXIT_OK,
            _ => EXIT_CONFIG,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "riskmap", version, about = "Learned risk-field lattice planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic scenarios as `<kind>_<seed>_<i>.json`.
    Gen(GenArgs),
    /// Train the predictor (stage 1) or the risk heads (stage 2).
    Train(TrainArgs),
    /// Plan one scenario and print the result as JSON.
    Plan(PlanArgs),
    /// Plan every scenario in a directory and write metric reports.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: ScenarioKind,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    /// Directory of scenario files.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Stage-1 checkpoint; required for stage 2.
    #[arg(long)]
    pub ckpt_predictor: Option<PathBuf>,
    /// Checkpoint to write. The loss curve goes next to it as `.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lattice size used by stage-2 losses.
    #[arg(long)]
    pub count: Option<usize>,
    /// Time-varying beta and lambda (`on`/`off`).
    #[arg(long, value_parser = parse_switch, default_value = "on", action = clap::ArgAction::Set)]
    pub tv: bool,
    /// Comma-separated term removals, e.g. `-demo_cost,-l_con`.
    #[arg(long, default_value = "all", allow_hyphen_values = true)]
    pub loss_mask: LossMask,
    #[arg(long, default_value = riskmap::riskfield::DEFAULT_COLLISION_MODE)]
    pub col_mode: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long)]
    pub ckpt_predictor: PathBuf,
    #[arg(long)]
    pub ckpt_planner: PathBuf,
    #[arg(long, default_value_t = riskmap::planner::DEFAULT_COUNT)]
    pub count: usize,
    #[arg(long, default_value = riskmap::riskfield::DEFAULT_COLLISION_MODE)]
    pub col_mode: String,
    /// Also write the per-point risk map as CSV.
    #[arg(long)]
    pub dump_riskmap: Option<PathBuf>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of scenario files.
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long)]
    pub ckpt_predictor: PathBuf,
    #[arg(long)]
    pub ckpt_planner: PathBuf,
    /// Comma-separated lattice sizes; one report each.
    #[arg(long, value_delimiter = ',', default_value = "100,400,900")]
    pub count: Vec<usize>,
    #[arg(long, default_value = riskmap::riskfield::DEFAULT_COLLISION_MODE)]
    pub col_mode: String,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(riskmap::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Scenario files of `dir` in sorted filename order.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("no scenario files in {}", dir.display())));
    }
    Ok(files)
}

pub fn load_dir(dir: &Path) -> Result<Vec<(String, Scenario)>> {
    scenario_files(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, load_scenario(&p)?))
        })
        .collect()
}

pub fn cmd_gen(args: &GenArgs) -> Result<Vec<PathBuf>> {
    let scenarios = generate_scenarios(args.kind, args.count, args.seed)?;
    ensure_dir(&args.out)?;
    let mut written = Vec::with_capacity(scenarios.len());
    for (i, s) in scenarios.iter().enumerate() {
        let path = args.out.join(format!("{}_{}_{}.json", args.kind, args.seed, i));
        save_scenario(&path, s)?;
        written.push(path);
    }
    Ok(written)
}

/// Sibling path of a checkpoint holding its loss curve.
pub fn loss_csv_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

fn curve_bytes(curve: &LossCurve) -> Vec<u8> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).expect("in-memory write");
    buf
}

pub fn train_config(args: &TrainArgs) -> TrainConfig {
    let base = if args.stage == 1 {
        TrainConfig::stage1()
    } else {
        TrainConfig::stage2()
    };
    TrainConfig {
        lr: args.lr.unwrap_or(base.lr),
        epochs: args.epochs.unwrap_or(base.epochs),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        count: args.count.unwrap_or(base.count),
        seed: args.seed,
        mask: args.loss_mask,
        tv: args.tv,
        col_mode: args.col_mode.clone(),
        ..base
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<LossCurve> {
    let config = train_config(args);
    config.validate()?;
    let predictor = match (args.stage, &args.ckpt_predictor) {
        (2, None) => return Err(CliError::Config("stage 2 requires --ckpt-predictor".into())),
        (2, Some(p)) => Some(load_predictor(p)?),
        _ => None,
    };
    let scenarios: Vec<Scenario> = load_dir(&args.scenarios)?.into_iter().map(|(_, s)| s).collect();
    let (file, curve) = match predictor {
        None => {
            let (model, curve) = train_stage1(&scenarios, &config)?;
            (ModelFile::from_predictor(&model), curve)
        }
        Some(predictor) => {
            let (heads, curve) = train_stage2(&scenarios, &predictor, &config)?;
            (ModelFile::from_heads(&heads), curve)
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    file.save(&args.out)?;
    write_file(&loss_csv_path(&args.out), &curve_bytes(&curve))?;
    Ok(curve)
}

#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub count: usize,
    pub selected: usize,
    pub trajectory: TrajectorySample,
    pub costs: Vec<CostBreakdown>,
    pub wall_time_ms: f64,
}

fn load_models(predictor: &Path, planner: &Path) -> Result<Models> {
    Ok(Models {
        predictor: load_predictor(predictor)?,
        heads: load_heads(planner)?,
    })
}

pub fn plan_config(count: usize, col_mode: &str) -> Result<PlanConfig> {
    riskmap::riskfield::collision_registry().get(col_mode)?;
    Ok(PlanConfig {
        count,
        col_mode: col_mode.to_string(),
        ..PlanConfig::default()
    })
}

/// Plans one scene with already loaded models.
pub fn plan_scene(
    scenario: &Scenario,
    models: &Models,
    config: &PlanConfig,
    dump: Option<&Path>,
) -> Result<PlanReport> {
    let out = plan(scenario, models, config)?;
    if let Some(path) = dump {
        let mut buf = Vec::new();
        out.riskmap
            .write_csv(&out.trajectories, &mut buf)
            .expect("in-memory write");
        write_file(path, &buf)?;
    }
    Ok(PlanReport {
        count: config.count,
        selected: out.selected,
        trajectory: out.trajectory().clone(),
        costs: out.costs,
        wall_time_ms: out.wall_ms,
    })
}

pub fn cmd_plan(args: &PlanArgs) -> Result<PlanReport> {
    let config = plan_config(args.count, &args.col_mode)?;
    riskmap::planner::lattice_side(args.count)?;
    let models = load_models(&args.ckpt_predictor, &args.ckpt_planner)?;
    let scenario = load_scenario(&args.scenarios)?;
    plan_scene(&scenario, &models, &config, args.dump_riskmap.as_deref())
}

/// Reports for every requested count, written as `report_<count>.{csv,json}`.
pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<EvalReport>> {
    for &c in &args.count {
        riskmap::planner::lattice_side(c)?;
    }
    plan_config(1, &args.col_mode)?;
    let models = load_models(&args.ckpt_predictor, &args.ckpt_planner)?;
    let scenes = load_dir(&args.scenarios)?;
    ensure_dir(&args.out)?;
    let mut reports = Vec::with_capacity(args.count.len());
    for &count in &args.count {
        let report = evaluate(&scenes, &models, &plan_config(count, &args.col_mode)?)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv).expect("in-memory write");
        write_file(&args.out.join(format!("report_{count}.csv")), &csv)?;
        write_file(
            &args.out.join(format!("report_{count}.json")),
            report.to_json().as_bytes(),
        )?;
        reports.push(report);
    }
    Ok(reports)
}

/// Plans and scores every scene in order.
pub fn evaluate(scenes: &[(String, Scenario)], models: &Models, config: &PlanConfig) -> Result<EvalReport> {
    let rows = scenes
        .iter()
        .map(|(name, s)| {
            let out = plan(s, models, config)?;
            Ok(ScenarioRow {
                scenario: name.clone(),
                metrics: MetricRow::evaluate(out.trajectory(), s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(config.count, rows))
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Human-readable results go to `stdout`.
pub fn run<I, T, W>(args: I, stdout: &mut W) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = Cli::try_parse_from(args)?;
    let wr = |e: std::io::Error| io_err(Path::new("<stdout>"), e);
    match cli.command {
        Command::Gen(a) => {
            for p in cmd_gen(&a)? {
                writeln!(stdout, "{}", p.display()).map_err(wr)?;
            }
        }
        Command::Train(a) => {
            let curve = cmd_train(&a)?;
            let last = curve.rows.last().map(|(e, v)| (e, v[v.len() - 1]));
            if let Some((epoch, total)) = last {
                writeln!(stdout, "epoch {epoch}: loss {total}").map_err(wr)?;
            }
        }
        Command::Plan(a) => {
            let report = cmd_plan(&a)?;
            let json = serde_json::to_string_pretty(&report).expect("plan report serializes");
            match &a.out {
                Some(path) => write_file(path, json.as_bytes())?,
                None => writeln!(stdout, "{json}").map_err(wr)?,
            }
        }
        Command::Eval(a) => {
            for r in cmd_eval(&a)? {
                let m = r.aggregate;
                writeln!(
                    stdout,
                    "count {}: ade {:.4} fde_lat {:.4} fde_lon {:.4} col_1s {:.3} col_2s {:.3} col_3s {:.3} jerk {:.4}",
                    r.count, m.ade, m.fde_lat, m.fde_lon, m.col_1s, m.col_2s, m.col_3s, m.jerk
                )
                .map_err(wr)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        let mut full = vec!["riskmap"];
        full.extend_from_slice(args);
        Cli::try_parse_from(full).unwrap().command
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let io = riskmap::Error::Io {
            path: "x".into(),
            source: std::io::Error::other("boom"),
        };
        assert_eq!(CliError::Core(io).exit_code(), EXIT_IO);
        let div = riskmap::Error::Divergence {
            step: 3,
            loss: f64::NAN,
        };
        assert_eq!(CliError::Core(div).exit_code(), EXIT_DIVERGENCE);
        assert_eq!(
            CliError::Core(riskmap::Error::NonSquareCount(5)).exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn switches_and_masks_parse() {
        let Command::Train(a) = parse(&[
            "train",
            "--stage",
            "2",
            "--scenarios",
            "d",
            "--out",
            "o",
            "--tv",
            "off",
            "--loss-mask",
            "-l_con",
        ]) else {
            panic!("expected train");
        };
        assert!(!a.tv);
        assert!(!a.loss_mask.l_con && a.loss_mask.l_sel);
        let config = train_config(&a);
        assert_eq!(config.epochs, TrainConfig::stage2().epochs);
        assert!(!config.tv);
        assert!(parse_switch("maybe").is_err());
    }

    #[test]
    fn overrides_replace_stage_defaults() {
        let Command::Train(a) = parse(&[
            "train",
            "--stage",
            "1",
            "--scenarios",
            "d",
            "--out",
            "o",
            "--epochs",
            "7",
            "--lr",
            "0.5",
            "--seed",
            "9",
        ]) else {
            panic!("expected train");
        };
        let config = train_config(&a);
        assert_eq!((config.epochs, config.lr, config.seed), (7, 0.5, 9));
        assert_eq!(config.batch_size, TrainConfig::stage1().batch_size);
    }

    #[test]
    fn loss_csv_sits_beside_checkpoint() {
        assert_eq!(
            loss_csv_path(Path::new("m/heads.json")),
            PathBuf::from("m/heads.loss.csv")
        );
    }

    #[test]
    fn eval_counts_split_on_commas() {
        let Command::Eval(a) = parse(&[
            "eval",
            "--scenarios",
            "d",
            "--ckpt-predictor",
            "p",
            "--ckpt-planner",
            "h",
            "--out",
            "o",
            "--count",
            "9,25",
        ]) else {
            panic!("expected eval");
        };
        assert_eq!(a.count, vec![9, 25]);
    }
}
