use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epmclimb_core::config::VERSION;
use epmclimb_core::curriculum::Curriculum;
use epmclimb_core::env::ClimbEnv;
use epmclimb_core::evaluation::{run_protocol, Ablation, EvalProtocol, MetricsReport, ScriptedCrawl, RECOVERY_WINDOWS};
use epmclimb_core::learning::{Agent, IterationStats, PolicyController, Trainer};
use epmclimb_core::log::{read_logs, write_logs};
use epmclimb_core::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "epmclimb", version, about = "Train and evaluate magnetic wall-climbing quadruped policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Curriculum breakpoint compression factor in (0, 1].
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value = "full")]
    ablation: Ablation,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    Scripted,
}

#[derive(Subcommand)]
enum Command {
    /// Run PPO through the curriculum, writing curves and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        envs: Option<usize>,
        /// Upper bound on the wall tilt, rad.
        #[arg(long)]
        tilt_limit: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
    },
    /// Evaluate a checkpoint or the scripted baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<Baseline>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Attachment probabilities to evaluate, comma separated.
        #[arg(long, value_delimiter = ',')]
        prob: Option<Vec<f64>>,
        /// Recovery windows in seconds, comma separated.
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Wall tilt, rad.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        perfect_alignment: bool,
        /// Row label in the report.
        #[arg(long)]
        label: Option<String>,
    },
    /// Print the curriculum schedules as a table.
    InspectSchedules {
        #[command(flatten)]
        common: Common,
        /// Iterations to print, comma separated.
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<u64>>,
        #[arg(long, default_value_t = 100)]
        step: u64,
        #[arg(long)]
        until: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from stored evaluation logs.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        dt: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } | Error::ConfigParse(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    let workers = match &command {
        Command::Train { common, .. } | Command::Eval { common, .. } | Command::InspectSchedules { common, .. } => {
            common.workers
        }
        Command::Replay { .. } => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match command {
        Command::Train {
            common,
            out,
            iterations,
            envs,
            tilt_limit,
            checkpoint_every,
        } => {
            let cfg = resolve(&common, |c| {
                if iterations.is_some() {
                    c.train.iterations = iterations;
                }
                if let Some(n) = envs {
                    c.train.num_envs = n;
                }
                if let Some(t) = tilt_limit {
                    c.curriculum.tilt_limit = t;
                }
                if let Some(k) = checkpoint_every {
                    c.train.checkpoint_every = k;
                }
            })?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/train-{}-seed{}", common.ablation, cfg.seed)));
            cmd_train(&cfg, common.ablation, &out)
        }
        Command::Eval {
            common,
            out,
            checkpoint,
            baseline,
            episodes,
            prob,
            dt,
            horizon,
            theta,
            perfect_alignment,
            label,
        } => {
            let cfg = resolve(&common, |c| {
                if let Some(n) = episodes {
                    c.eval.episodes = n;
                }
                if let Some(h) = horizon {
                    c.eval.horizon = h;
                }
                if let Some(t) = theta {
                    c.eval.theta = t;
                }
                if perfect_alignment {
                    c.env.perfect_alignment = true;
                }
                c.eval.base_seed = c.seed;
            })?;
            let policy = match (checkpoint, baseline) {
                (Some(p), None) => EvalPolicy::Checkpoint(p),
                (None, Some(Baseline::Scripted)) => EvalPolicy::Scripted,
                _ => return Err(CliError::Usage("eval needs --checkpoint or --baseline scripted".into())),
            };
            let probs = prob.unwrap_or_else(|| vec![1.0, 0.85]);
            let windows = dt.unwrap_or_else(|| RECOVERY_WINDOWS.to_vec());
            check_probs_windows(&probs, &windows)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/eval-seed{}", cfg.seed)));
            cmd_eval(&cfg, common.ablation, &policy, &probs, &windows, label, &out)
        }
        Command::InspectSchedules {
            common,
            at,
            step,
            until,
            out,
        } => {
            let cfg = resolve(&common, |_| {})?;
            cmd_inspect(&cfg, common.ablation, at, step, until, out.as_deref())
        }
        Command::Replay { logs, dt, out } => cmd_replay(&logs, dt, out.as_deref()),
    })
}

/// Defaults, then the config file, then flags.
fn resolve(common: &Common, apply: impl FnOnce(&mut ExperimentConfig)) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(s) = common.scale {
        cfg.curriculum.scale = s;
    }
    apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn check_probs_windows(probs: &[f64], windows: &[f64]) -> CliResult<()> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CliError::Usage("invalid value for `--prob`: must lie in [0, 1]".into()));
    }
    if windows.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(CliError::Usage("invalid value for `--dt`: windows must be > 0".into()));
    }
    Ok(())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_config_snapshot(cfg: &ExperimentConfig, ablation: Ablation, dir: &Path) -> CliResult<()> {
    let mut w = create(&dir.join("config.toml"))?;
    writeln!(w, "{}", cfg.header())?;
    writeln!(w, "# ablation={ablation}")?;
    w.write_all(cfg.to_toml().as_bytes())?;
    w.flush()?;
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, ablation: Ablation, out: &Path) -> CliResult<()> {
    write_config_snapshot(cfg, ablation, out)?;
    let iterations = cfg.train.resolved_iterations(cfg.curriculum.scale);
    let mut trainer = Trainer::new(cfg, ablation, cfg.seed)?;
    let mut curves = create(&out.join("curves.tsv"))?;
    writeln!(curves, "{}", cfg.header())?;
    writeln!(curves, "# seed={} ablation={ablation} iterations={iterations}", cfg.seed)?;
    writeln!(curves, "{}", IterationStats::tsv_header())?;
    let ckpt_dir = out.join("checkpoints");
    let every = cfg.train.checkpoint_every;
    for _ in 0..iterations {
        let stats = trainer.step()?;
        writeln!(curves, "{}", stats.tsv_row())?;
        if every > 0 && (stats.iter + 1) % every == 0 {
            save_checkpoint(trainer.agent(), stats.iter + 1, &ckpt_dir.join(format!("iter_{:06}.ckpt", stats.iter + 1)))?;
        }
        if (stats.iter + 1) % 10 == 0 || stats.iter + 1 == iterations {
            eprintln!(
                "iter {:>6}  reward {:.4}  theta {:.3}  prob {:.3}",
                stats.iter + 1,
                stats.mean_reward,
                stats.theta,
                stats.prob_attach
            );
        }
    }
    curves.flush()?;
    save_checkpoint(trainer.agent(), iterations, &out.join("final.ckpt"))?;
    println!("trained {iterations} iterations; outputs in {}", out.display());
    Ok(())
}

fn save_checkpoint(agent: &Agent, iteration: u64, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    agent.write_checkpoint(&mut w, iteration)?;
    w.flush()?;
    Ok(())
}

enum EvalPolicy {
    Checkpoint(PathBuf),
    Scripted,
}

fn cmd_eval(
    cfg: &ExperimentConfig,
    ablation: Ablation,
    policy: &EvalPolicy,
    probs: &[f64],
    windows: &[f64],
    label: Option<String>,
    out: &Path,
) -> CliResult<()> {
    let agent = match policy {
        EvalPolicy::Checkpoint(p) => {
            let mut f = File::open(p)
                .map_err(|e| CliError::Runtime(format!("cannot open checkpoint {}: {e}", p.display())))?;
            Some(Agent::read_checkpoint(&mut std::io::BufReader::new(&mut f))?.0)
        }
        EvalPolicy::Scripted => None,
    };
    let label = label.unwrap_or_else(|| match policy {
        EvalPolicy::Scripted => "scripted".to_string(),
        EvalPolicy::Checkpoint(p) => p
            .file_stem()
            .map_or("policy".to_string(), |s| s.to_string_lossy().into_owned()),
    });
    write_config_snapshot(cfg, ablation, out)?;
    let full_n = EvalProtocol::default().episodes;
    let mut reports = Vec::new();
    for &p in probs {
        let protocol = EvalProtocol {
            prob_attach: p,
            ..cfg.eval.clone()
        };
        let make_env = || {
            ClimbEnv::new(
                cfg.env.clone(),
                cfg.model.clone(),
                cfg.adhesion.clone(),
                ablation.ideal_adhesion(),
                cfg.seed,
            )
        };
        let logs = match &agent {
            Some(a) => run_protocol(&protocol, || Ok((PolicyController { agent: a.clone() }, make_env()?)))?,
            None => run_protocol(&protocol, || Ok((ScriptedCrawl::default(), make_env()?)))?,
        };
        let header = vec![
            format!("epmclimb {VERSION} config={}", cfg.hash()),
            format!("label={label}"),
            format!("prob_attach={p}"),
            format!("protocol_episodes={full_n}"),
            format!("windows={}", join(windows)),
        ];
        let mut w = create(&out.join(format!("logs_p{p}.tsv")))?;
        write_logs(&mut w, &logs, &header)?;
        w.flush()?;
        reports.push(MetricsReport::compute_with_windows(&label, p, &logs, full_n, windows));
    }
    let mut m = create(&out.join("metrics.tsv"))?;
    writeln!(m, "{}", cfg.header())?;
    writeln!(m, "{}", reports[0].tsv_header())?;
    for r in &reports {
        writeln!(m, "{}", r.tsv_row())?;
    }
    m.flush()?;
    let table = MetricsReport::table(&reports);
    let mut t = create(&out.join("report.txt"))?;
    writeln!(t, "{}", cfg.header())?;
    t.write_all(table.as_bytes())?;
    t.flush()?;
    print!("{table}");
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_inspect(
    cfg: &ExperimentConfig,
    ablation: Ablation,
    at: Option<Vec<u64>>,
    step: u64,
    until: Option<u64>,
    out: Option<&Path>,
) -> CliResult<()> {
    let curriculum = Curriculum::new(cfg.curriculum.clone())?.with_overrides(ablation.overrides());
    let iters: Vec<u64> = match at {
        Some(v) => v,
        None => {
            if step == 0 {
                return Err(CliError::Usage("invalid value for `--step`: must be >= 1".into()));
            }
            let end = until.unwrap_or_else(|| cfg.train.resolved_iterations(cfg.curriculum.scale));
            (0..=end).step_by(step as usize).collect()
        }
    };
    let mut text = format!("{}\n# ablation={ablation}\n", cfg.header());
    text.push_str("iter\ttheta\tprob_attach\tkappa\tphase\tsmoothness_active\tadhesion_enabled\tgravity_x\tgravity_y\tgravity_z\n");
    for t in iters {
        let s = curriculum.state(t);
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t,
            s.theta,
            s.prob_attach,
            s.kappa,
            s.phase.number(),
            u8::from(s.smoothness_active),
            u8::from(s.adhesion_enabled),
            s.gravity[0],
            s.gravity[1],
            s.gravity[2]
        ));
    }
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// Header key/value pairs from `# key=value` comment lines.
fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .flat_map(|l| l.trim_start_matches('#').split_whitespace())
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn cmd_replay(paths: &[PathBuf], dt: Option<Vec<f64>>, out: Option<&Path>) -> CliResult<()> {
    let mut rows = Vec::new();
    let mut header = None;
    for path in paths {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let logs = read_logs(text.as_bytes()).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let label = header_value(&text, "label").unwrap_or("replay");
        let parse = |key: &str| -> CliResult<Option<f64>> {
            header_value(&text, key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| CliError::Runtime(format!("{}: bad header field {key}", path.display())))
                })
                .transpose()
        };
        let prob = parse("prob_attach")?.unwrap_or(1.0);
        let full_n = parse("protocol_episodes")?.map_or(EvalProtocol::default().episodes, |n| n as usize);
        let windows = match (&dt, header_value(&text, "windows")) {
            (Some(w), _) => w.clone(),
            (None, Some(v)) => v
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Runtime(format!("{}: bad header field windows", path.display())))?,
            (None, None) => RECOVERY_WINDOWS.to_vec(),
        };
        check_probs_windows(&[prob], &windows)?;
        let report = MetricsReport::compute_with_windows(label, prob, &logs, full_n, &windows);
        header.get_or_insert_with(|| report.tsv_header());
        rows.push(report.tsv_row());
    }
    let mut text = header.unwrap_or_default();
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    match out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
