use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use riskgym::env::{trace_episode, BoxConfig, EnvConfig};
use riskgym::harness::plot::{learning_curve_svg, ramp_color, Series, BASELINE_COLOR};
use riskgym::harness::{
    audit_random_init, build_validation_suite, evaluate, parse_ratio, run_study, train_in_box, train_on_pool,
    DistSpec, EnvKind, RunConfig, ValidationSuite,
};
use riskgym::scenario::{generate_filled_pool, load_pool, save_pool, ScenarioPool, CR_BINS};
use riskgym::td3::{load_checkpoint, save_checkpoint, write_metrics_csv, MetricsRow, TrainConfig, TrainOutcome};
use riskgym::Error;

#[derive(Parser)]
#[command(name = "riskgym", version, about = "Collision-risk scenario generation and TD3 training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled scenario pool.
    GenPool {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "point-mass")]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum scenarios per (risk bin, obstacle count) cell.
        #[arg(long, default_value_t = 50)]
        min_per_cell: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent on pool scenarios drawn to a risk distribution.
    Train {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "point-mass")]
        env: String,
        /// preset:K, interval:lo,hi or uniform.
        #[arg(long)]
        dist: String,
        #[arg(long, default_value = "1,1,1")]
        ratio: String,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a saved suite.
    Validate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Suite in pool format, e.g. `suite.jsonl` written by `train`.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "point-mass")]
        env: String,
        #[arg(long, default_value_t = 0.0)]
        sigma_n: f64,
        /// Seed of the observation-noise streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the result CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the random-initialization baseline in the box environment.
    BaselineTrain {
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 35.0)]
        edge: f64,
        #[arg(long, default_value_t = 5)]
        obstacles: usize,
        /// Pool the validation suite is drawn from.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Risk profile of the baseline's random initial states.
    AuditBaseline {
        #[arg(long, default_value_t = 64_000)]
        samples: usize,
        #[arg(long, default_value_t = 35.0)]
        edge: f64,
        #[arg(long, default_value_t = 5)]
        obstacles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a multi-cell study described by a TOML file.
    Study {
        #[arg(long)]
        config: PathBuf,
    },
    /// Play one pool scenario with a checkpoint and print the episode CSV.
    Trace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        scenario_id: usize,
        #[arg(long, default_value = "point-mass")]
        env: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 20_000)]
    eval_interval: u64,
    #[arg(long, default_value_t = 500)]
    validation_size: usize,
    #[arg(long, default_value_t = 0)]
    suite_seed: u64,
    /// Uniform-random steps before learning starts.
    #[arg(long)]
    warmup: Option<u64>,
}

impl EvalArgs {
    fn train_config(&self, steps: u64) -> Result<TrainConfig, Error> {
        let mut cfg = TrainConfig {
            budget_steps: steps,
            eval_interval: self.eval_interval,
            ..Default::default()
        };
        if let Some(w) = self.warmup {
            cfg.td3.warmup_steps = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_data_error() => 3,
        Error::Io { .. } | Error::ShapeMismatch { .. } => 3,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("RISKGYM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("RISKGYM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_out(p, text.as_bytes()),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn load_env_pool(path: &Path, env: EnvKind) -> Result<ScenarioPool, Error> {
    load_pool(path, &env.pool_spec())
}

fn suite_from_file(path: &Path, env: EnvKind) -> Result<ValidationSuite, Error> {
    ValidationSuite::from_scenarios(load_env_pool(path, env)?.scenarios().to_vec())
}

/// Checkpoint, metrics CSV, saved suite and learning curve of one run.
fn write_run(out: &Path, env: EnvKind, suite: &ValidationSuite, outcome: &TrainOutcome, series: Series) -> Result<(), Error> {
    create_dir(out)?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, suite.digest(), &outcome.metrics).map_err(|e| Error::Io {
        path: out.join("metrics.csv"),
        source: e,
    })?;
    write_out(&out.join("metrics.csv"), &csv)?;
    save_checkpoint(&out.join("actor.json"), &outcome.agent.actor, outcome.agent.actor_opt.steps())?;
    let suite_pool = ScenarioPool::new(env.pool_spec(), suite.scenarios().to_vec())?;
    save_pool(&suite_pool, &out.join("suite.jsonl"))?;
    write_out(&out.join("curve.svg"), learning_curve_svg(&series.label.clone(), &[series]).as_bytes())?;
    if let Some(last) = outcome.metrics.last() {
        println!("final success ratio {:.4} at step {}", last.success_ratio, last.step);
    }
    Ok(())
}

fn curve(label: String, color: String, dashed: bool, metrics: &[MetricsRow]) -> Series {
    Series {
        label,
        color,
        dashed,
        points: metrics.iter().map(|m| (m.step as f64, m.success_ratio)).collect(),
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GenPool {
            count,
            env,
            seed,
            min_per_cell,
            out,
        } => {
            let env: EnvKind = env.parse()?;
            let pool = generate_filled_pool(count, min_per_cell, &env.pool_spec(), seed)?;
            save_pool(&pool, &out)?;
            let m = pool.manifest();
            println!("wrote {} scenarios (digest {})", m.count, m.env_digest);
            Ok(())
        }
        Command::Train {
            pool,
            env,
            dist,
            ratio,
            steps,
            seed,
            eval,
            out,
        } => {
            let env: EnvKind = env.parse()?;
            if env == EnvKind::BaselineBox {
                return Err(Error::Config("use baseline-train for the box environment".into()));
            }
            let dist: DistSpec = dist.parse()?;
            let ratio = parse_ratio(&ratio)?;
            let tcfg = eval.train_config(steps)?;
            let pool = load_env_pool(&pool, env)?;
            let suite = build_validation_suite(&pool, eval.validation_size, eval.suite_seed)?;
            let target = dist.distribution()?;
            let color = ramp_color(target.mean());
            let outcome = train_on_pool(&env.env_config(), &pool, target, ratio, &suite, &tcfg, seed)?;
            write_run(&out, env, &suite, &outcome, curve(dist.to_string(), color, false, &outcome.metrics))
        }
        Command::Validate {
            checkpoint,
            suite,
            env,
            sigma_n,
            seed,
            out,
        } => {
            let env: EnvKind = env.parse()?;
            let actor = load_checkpoint(&checkpoint)?.net;
            let suite = suite_from_file(&suite, env)?;
            let cfg = env.env_config();
            if actor.input_dim() != cfg.state_dim() {
                return Err(Error::ShapeMismatch {
                    expected: cfg.state_dim(),
                    got: actor.input_dim(),
                });
            }
            let report = evaluate(&actor, &suite, &cfg, sigma_n, seed)?;
            let text = format!(
                "# suite_digest={}\nsigma_n,episodes,success_ratio,collision_rate,mean_episode_len\n{},{},{},{},{}\n",
                suite.digest(),
                sigma_n,
                report.episodes,
                report.success_ratio(),
                report.collision_rate(),
                report.mean_episode_len()
            );
            emit(out.as_deref(), &text)
        }
        Command::BaselineTrain {
            steps,
            edge,
            obstacles,
            pool,
            seed,
            eval,
            out,
        } => {
            let layout = BoxConfig {
                edge,
                n_obstacles: obstacles,
                ..BoxConfig::point_mass()
            };
            let tcfg = eval.train_config(steps)?;
            let pool = load_env_pool(&pool, EnvKind::BaselineBox)?;
            let suite = build_validation_suite(&pool, eval.validation_size, eval.suite_seed)?;
            let outcome = train_in_box(&EnvConfig::point_mass(), &layout, &suite, &tcfg, seed)?;
            let series = curve("box baseline".into(), BASELINE_COLOR.into(), true, &outcome.metrics);
            write_run(&out, EnvKind::BaselineBox, &suite, &outcome, series)
        }
        Command::AuditBaseline {
            samples,
            edge,
            obstacles,
            seed,
        } => {
            let layout = BoxConfig {
                edge,
                n_obstacles: obstacles,
                ..BoxConfig::point_mass()
            };
            let r = audit_random_init(&EnvConfig::point_mass(), &layout, samples, seed)?;
            let mut text = format!(
                "# samples={} zero_mass={:.4} one_mass={:.4}\nbin_lo,bin_hi",
                r.samples, r.zero_mass, r.one_mass
            );
            for k in 1..=obstacles {
                text.push_str(&format!(",threats_{k}"));
            }
            text.push('\n');
            for (b, row) in r.histogram.iter().enumerate() {
                text.push_str(&format!("{},{}", b as f64 / CR_BINS as f64, (b + 1) as f64 / CR_BINS as f64));
                for m in row {
                    text.push_str(&format!(",{m:.6}"));
                }
                text.push('\n');
            }
            emit(None, &text)
        }
        Command::Study { config } => {
            let text = fs::read_to_string(&config).map_err(|e| Error::Io {
                path: config.clone(),
                source: e,
            })?;
            let cfg = RunConfig::from_toml(&text)?;
            let report = run_study(&cfg)?;
            println!("suite digest {}", report.suite_digest);
            println!("label,sigma_n,n_seeds,mean_final,sd_final");
            for r in &report.summary {
                let sd = r.sd.map_or(String::new(), |s| format!("{s:.4}"));
                println!("{},{},{},{:.4},{sd}", r.label, r.sigma_n, r.n, r.mean);
            }
            Ok(())
        }
        Command::Trace {
            checkpoint,
            pool,
            scenario_id,
            env,
            out,
        } => {
            let env: EnvKind = env.parse()?;
            let actor = load_checkpoint(&checkpoint)?.net;
            let pool = load_env_pool(&pool, env)?;
            let scenario = pool.get(scenario_id).ok_or_else(|| {
                Error::Config(format!("scenario id {scenario_id} out of range (pool has {})", pool.len()))
            })?;
            let cfg = env.env_config();
            let mut failure = None;
            let trace = trace_episode(&cfg, scenario, |s| {
                match actor.forward(s) {
                    Ok(a) => [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)],
                    Err(e) => {
                        failure.get_or_insert(e);
                        [0.0, 0.0]
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            let mut csv = Vec::new();
            trace.write_csv(&mut csv).map_err(|e| Error::Io {
                path: "<trace>".into(),
                source: e,
            })?;
            emit(out.as_deref(), &String::from_utf8_lossy(&csv))
        }
    }
}
