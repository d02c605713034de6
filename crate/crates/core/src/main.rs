use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use delib::exec::{
    csv_string, failure_histogram, generate_suite, oracle_length, oracle_run, run_episode,
    run_suite, summary_table, write_plan_times, write_trace, Budget, EpisodeOutcome, ExecConfig,
    SuiteEpisode,
};
use delib::monitor::{
    annotate_subgoals, parse_subgoal_file, AnnotateError, Lexicon, Subgoal, TrajectoryRecord,
};
use delib::pddl::{ground, parse_domain, parse_problem};
use delib::planner::{search_plan, PlanOutcome, Planner, DEFAULT_TIMEOUT};
use delib::sim::{
    generate_scene, Difficulty, GeneratedEpisode, NoiseConfig, SceneSpec, TaskSpec, TaskTemplate,
};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NO_SOLUTION: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_TASK_FAILED: u8 = 4;
const EXIT_INCONSISTENT: u8 = 5;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

type CliResult = Result<u8, CliError>;

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, body).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Household agent: PDDL planning, simulated episodes and benchmarks.
///
/// Exit codes: 0 success, 1 usage/config/parse error, 2 no solution,
/// 3 planner timeout, 4 task failure, 5 inconsistent trajectory.
#[derive(Debug, Parser)]
#[command(name = "delib", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a PDDL domain/problem pair and print the plan.
    Plan(PlanArgs),
    /// Run one episode in the simulator.
    Run(RunArgs),
    /// Run a suite of episodes and report aggregate metrics.
    Bench(BenchArgs),
    /// Write a generated suite as episode files.
    Generate(GenerateArgs),
    /// Solve an episode with ground truth and record its trajectory.
    Oracle(OracleArgs),
    /// Label a recorded trajectory with the steps that complete each subgoal.
    Annotate(AnnotateArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    domain: PathBuf,
    problem: PathBuf,
    /// Search timeout in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    timeout: f64,
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// Scene file: an episode written by `generate` or a bare scene.
    #[arg(long, conflicts_with = "template")]
    scene: Option<PathBuf>,
    /// Task: a template name or a task JSON file.
    #[arg(long)]
    task: Option<String>,
    /// Generate the scene from this task template.
    #[arg(long)]
    template: Option<TaskTemplate>,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
    #[command(flatten)]
    difficulty: DifficultyArgs,
}

#[derive(Debug, Args)]
struct DifficultyArgs {
    /// Extra clutter instances per generated scene.
    #[arg(long, default_value_t = 0)]
    distractors: u32,
    /// Probability that a required item starts hidden in a closed container.
    #[arg(long, default_value_t = 0.0)]
    p_hidden: f64,
}

impl DifficultyArgs {
    fn get(&self) -> Result<Difficulty, CliError> {
        if !(0.0..=1.0).contains(&self.p_hidden) {
            return Err(config("--p-hidden must lie in [0, 1]"));
        }
        Ok(Difficulty {
            distractors: self.distractors,
            p_hidden: self.p_hidden,
        })
    }
}

#[derive(Debug, Args)]
struct ExecArgs {
    /// Simulator and agent seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise configuration as JSON, e.g. '{"p_action_fail":0.1}'.
    #[arg(long)]
    noise: Option<String>,
    /// Per-call planner timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Episode step budget.
    #[arg(long)]
    max_steps: Option<u32>,
    /// Plan over the full belief instead of the relevant subset.
    #[arg(long)]
    no_pruning: bool,
    /// Abandon a subgoal on its first exception.
    #[arg(long)]
    no_replanning: bool,
    /// Execute only the final subgoal.
    #[arg(long)]
    last_subgoal_only: bool,
}

impl ExecArgs {
    fn config(&self) -> Result<ExecConfig, CliError> {
        let mut cfg = ExecConfig {
            seed: self.seed,
            pruning: !self.no_pruning,
            replanning: !self.no_replanning,
            last_subgoal_only: self.last_subgoal_only,
            ..ExecConfig::default()
        };
        if let Some(json) = &self.noise {
            let noise: NoiseConfig =
                serde_json::from_str(json).map_err(|e| config(format!("invalid --noise: {e}")))?;
            noise.validate().map_err(config)?;
            cfg.noise = noise;
        }
        if let Some(t) = self.timeout {
            cfg.timeout = seconds(t)?;
        }
        if let Some(n) = self.max_steps {
            cfg.budget = Budget {
                max_steps: n,
                ..cfg.budget
            };
        }
        Ok(cfg)
    }
}

fn seconds(t: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(t).map_err(|_| config(format!("invalid timeout {t}")))
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["subgoals", "dialog", "oracle_subgoals"])))]
struct RunArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Subgoal file: JSON list of {patient, predicate, destination?, completed?}.
    #[arg(long)]
    subgoals: Option<PathBuf>,
    /// Dialog file, one turn per line (or a JSON list of strings).
    #[arg(long)]
    dialog: Option<PathBuf>,
    /// Lexicon JSON used with --dialog.
    #[arg(long, requires = "dialog")]
    lexicon: Option<PathBuf>,
    /// Use the task's ground-truth subgoals.
    #[arg(long)]
    oracle_subgoals: bool,
    #[command(flatten)]
    exec: ExecArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Write each planning problem and plan under <out>/plans.
    #[arg(long)]
    dump_plans: bool,
    /// Write each observation under <out>/frames.
    #[arg(long)]
    dump_frames: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Directory of episode files; without it a suite is generated.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Output directory for results.csv, plan_times.csv and traces.
    #[arg(long, default_value = "bench_out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    /// Templates to generate (default: all).
    #[arg(long, value_delimiter = ',')]
    templates: Vec<TaskTemplate>,
    /// Episodes per template.
    #[arg(long, default_value_t = 10)]
    per_template: u32,
    /// First generator seed.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[command(flatten)]
    difficulty: DifficultyArgs,
}

impl GeneratorArgs {
    fn suite(&self, jobs: usize) -> Result<Vec<SuiteEpisode>, CliError> {
        let templates = if self.templates.is_empty() {
            TaskTemplate::ALL.to_vec()
        } else {
            self.templates.clone()
        };
        generate_suite(
            &templates,
            self.per_template,
            self.base_seed,
            self.difficulty.get()?,
            jobs,
        )
        .map_err(config)
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Suite directory to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Trajectory file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Trajectory JSON recorded by `oracle`.
    trajectory: PathBuf,
    /// Task: a template name or a task JSON file.
    #[arg(long)]
    task: String,
    /// Label file to write (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DELIB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match cli.command {
        Command::Plan(a) => cmd_plan(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Annotate(a) => cmd_annotate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn cmd_plan(a: &PlanArgs) -> CliResult {
    let timeout = seconds(a.timeout)?;
    let located =
        |path: &Path, e: delib::pddl::PddlError| config(format!("{}: {e}", path.display()));
    let domain = parse_domain(&read(&a.domain)?).map_err(|e| located(&a.domain, e))?;
    let problem = parse_problem(&read(&a.problem)?, &domain).map_err(|e| located(&a.problem, e))?;
    let task = ground(&domain, &problem).map_err(config)?;
    match search_plan(&task, timeout) {
        PlanOutcome::Solved(plan) => {
            for &i in &plan.indices {
                let act = &task.actions[i];
                let mut line = act.name.to_lowercase();
                for arg in &act.args {
                    line.push(' ');
                    line.push_str(&arg.to_lowercase());
                }
                println!("{line}");
            }
            println!("; cost {}", plan.cost);
            Ok(EXIT_OK)
        }
        PlanOutcome::GoalAlreadySatisfied => {
            println!("; goal already satisfied");
            println!("; cost 0");
            Ok(EXIT_OK)
        }
        PlanOutcome::NoSolution => {
            println!("; no solution");
            Ok(EXIT_NO_SOLUTION)
        }
        PlanOutcome::Timeout => {
            println!("; timeout");
            Ok(EXIT_TIMEOUT)
        }
    }
}

fn load_task(arg: &str) -> Result<TaskSpec, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return serde_json::from_str(&read(path)?).map_err(|e| config(format!("{arg}: {e}")));
    }
    arg.parse::<TaskTemplate>()
        .map(TaskSpec::from_template)
        .map_err(config)
}

/// Resolves the scene arguments into an episode. The reference length is
/// recomputed with the oracle whenever the task is not the stored one.
fn load_episode(a: &SceneArgs) -> Result<GeneratedEpisode, CliError> {
    let task = a.task.as_deref().map(load_task).transpose()?;
    let (mut ep, stored) = match (&a.scene, a.template) {
        (Some(path), _) => {
            let text = read(path)?;
            if let Ok(e) = serde_json::from_str::<SuiteEpisode>(&text) {
                (e.episode, true)
            } else if let Ok(e) = serde_json::from_str::<GeneratedEpisode>(&text) {
                (e, true)
            } else {
                let scene = SceneSpec::from_json(&text)
                    .map_err(|e| config(format!("{}: {e}", path.display())))?;
                let Some(task) = task.clone() else {
                    return Err(config("a bare scene file needs --task"));
                };
                let ep = GeneratedEpisode {
                    scene,
                    task,
                    reference_length: 0,
                };
                (ep, false)
            }
        }
        (None, Some(t)) => (
            generate_scene(t, a.gen_seed, a.difficulty.get()?).map_err(config)?,
            true,
        ),
        (None, None) => return Err(config("one of --scene or --template is required")),
    };
    let stored = match task {
        Some(t) if t != ep.task => {
            ep.task = t;
            false
        }
        _ => stored,
    };
    if !stored {
        ep.reference_length = oracle_length(&ep.scene, &ep.task).unwrap_or_else(|e| {
            log::warn!("no reference length ({e}); path-length weighted metrics will be 0");
            0
        });
    }
    Ok(ep)
}

fn read_dialog(path: &Path) -> Result<Vec<String>, CliError> {
    let text = read(path)?;
    if let Ok(turns) = serde_json::from_str::<Vec<String>>(&text) {
        return Ok(turns);
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn run_subgoals(
    a: &RunArgs,
    ep: &GeneratedEpisode,
    planner: &Planner,
) -> Result<Vec<Subgoal>, CliError> {
    if let Some(path) = &a.subgoals {
        let entries = parse_subgoal_file(&read(path)?)
            .map_err(|e| config(format!("{}: {e}", path.display())))?;
        return Ok(entries
            .into_iter()
            .filter(|e| !e.completed)
            .map(|e| e.subgoal)
            .collect());
    }
    if let Some(path) = &a.dialog {
        let lexicon = match &a.lexicon {
            Some(p) => Lexicon::from_json(&read(p)?)
                .map_err(|e| config(format!("{}: {e}", p.display())))?,
            None => Lexicon::default(),
        };
        return match lexicon.parse_subgoals(&read_dialog(path)?, &planner.affordances) {
            Ok(s) => Ok(s),
            Err(delib::monitor::LexiconError::EmptyResult) => {
                log::warn!("dialog yielded no subgoals");
                Ok(Vec::new())
            }
            Err(e) => Err(config(e)),
        };
    }
    ep.task.subgoals().map_err(config)
}

fn cmd_run(a: &RunArgs) -> CliResult {
    let mut cfg = a.exec.config()?;
    let ep = load_episode(&a.scene)?;
    let planner = Planner::household();
    let subgoals = run_subgoals(a, &ep, &planner)?;
    if a.dump_plans {
        cfg.dump_plans = Some(a.out.join("plans"));
    }
    if a.dump_frames {
        cfg.dump_frames = Some(a.out.join("frames"));
    }
    create_dir(&a.out)?;
    let run = run_episode(
        &ep.scene,
        &ep.task,
        &subgoals,
        &planner,
        &cfg,
        ep.reference_length,
    )
    .map_err(config)?;
    let trace_path = a.out.join("trace.jsonl");
    write_trace(&trace_path, &run.trace).map_err(|source| CliError::Io {
        path: trace_path,
        source,
    })?;
    let metrics = serde_json::to_string_pretty(&run.summary).map_err(config)?;
    write(&a.out.join("metrics.json"), metrics + "\n")?;
    let one = [EpisodeOutcome {
        name: ep.task.name.clone(),
        task: ep.task.name.clone(),
        seed: cfg.seed,
        run: Ok(run),
    }];
    let times = a.out.join("plan_times.csv");
    write_plan_times(&times, &one).map_err(|source| CliError::Io {
        path: times,
        source,
    })?;
    let Ok(run) = &one[0].run else { unreachable!() };
    let s = &run.summary;
    println!(
        "success {} gc {:.3} steps {} reference {} plw-sr {:.3} failure {}",
        s.report.success,
        s.report.goal_condition_rate,
        s.report.trajectory_length,
        s.report.reference_length,
        s.report.plw_success,
        s.failure.map_or("-".to_string(), |f| f.to_string())
    );
    Ok(if s.report.success {
        EXIT_OK
    } else {
        EXIT_TASK_FAILED
    })
}

/// Loads every `*.json` file of a suite directory in name order. Unreadable
/// files become error outcomes instead of aborting.
fn load_suite(dir: &Path) -> Result<(Vec<SuiteEpisode>, Vec<EpisodeOutcome>), CliError> {
    let entries = fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut suite = Vec::new();
    let mut broken = Vec::new();
    for p in paths {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parsed =
            read(&p).and_then(|t| serde_json::from_str::<SuiteEpisode>(&t).map_err(config));
        match parsed {
            Ok(e) => suite.push(e),
            Err(e) => broken.push(EpisodeOutcome {
                name,
                task: "-".into(),
                seed: 0,
                run: Err(e.to_string()),
            }),
        }
    }
    Ok((suite, broken))
}

fn cmd_bench(a: &BenchArgs) -> CliResult {
    let cfg = a.exec.config()?;
    let (suite, broken) = match &a.suite {
        Some(dir) => load_suite(dir)?,
        None => (a.generator.suite(a.jobs)?, Vec::new()),
    };
    if suite.is_empty() && broken.is_empty() {
        return Err(config("empty suite"));
    }
    let planner = Planner::household();
    let mut outcomes = run_suite(&suite, &planner, &cfg, a.jobs);
    outcomes.extend(broken);
    outcomes.sort_by(|x, y| x.name.cmp(&y.name));
    let traces = a.out.join("traces");
    create_dir(&traces)?;
    for o in &outcomes {
        match &o.run {
            Ok(run) => {
                let path = traces.join(format!("{}.jsonl", o.name));
                write_trace(&path, &run.trace).map_err(|source| CliError::Io { path, source })?;
            }
            Err(e) => eprintln!("episode {}: {e}", o.name),
        }
    }
    write(
        &a.out.join("results.csv"),
        csv_string(&outcomes).map_err(config)?,
    )?;
    let times = a.out.join("plan_times.csv");
    write_plan_times(&times, &outcomes).map_err(|source| CliError::Io {
        path: times,
        source,
    })?;
    print!("{}", summary_table(&outcomes));
    println!("failures:");
    for (k, n) in failure_histogram(&outcomes) {
        println!("  {k:<20} {n}");
    }
    Ok(EXIT_OK)
}

fn cmd_generate(a: &GenerateArgs) -> CliResult {
    let suite = a.generator.suite(a.jobs)?;
    create_dir(&a.out)?;
    for e in &suite {
        let body = serde_json::to_string_pretty(e).map_err(config)?;
        write(&a.out.join(format!("{}.json", e.name)), body + "\n")?;
    }
    println!("wrote {} episodes to {}", suite.len(), a.out.display());
    Ok(EXIT_OK)
}

fn cmd_oracle(a: &OracleArgs) -> CliResult {
    let ep = load_episode(&a.scene)?;
    let run = oracle_run(&ep.scene, &ep.task).map_err(config)?;
    let body = serde_json::to_string_pretty(&run.trajectory).map_err(config)?;
    write(&a.out, body + "\n")?;
    println!("oracle solved {} in {} steps", ep.task.name, run.steps);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Label<'a> {
    step: usize,
    subgoal: &'a Subgoal,
}

fn cmd_annotate(a: &AnnotateArgs) -> CliResult {
    let task = load_task(&a.task)?;
    let conditions = task.subgoals().map_err(config)?;
    let text = read(&a.trajectory)?;
    let traj: TrajectoryRecord = serde_json::from_str(&text)
        .map_err(|e| config(format!("{}: {e}", a.trajectory.display())))?;
    let labels = match annotate_subgoals(&traj, &conditions) {
        Ok(l) => l,
        Err(e @ AnnotateError::InconsistentTrajectory { .. }) => {
            eprintln!("error: {e}");
            return Ok(EXIT_INCONSISTENT);
        }
    };
    let labels: Vec<Label<'_>> = labels
        .iter()
        .map(|(step, subgoal)| Label {
            step: *step,
            subgoal,
        })
        .collect();
    let body = serde_json::to_string_pretty(&labels).map_err(config)? + "\n";
    match &a.out {
        Some(p) => write(p, body)?,
        None => print!("{body}"),
    }
    Ok(EXIT_OK)
}
