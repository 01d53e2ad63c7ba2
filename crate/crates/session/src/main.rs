use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use psibayes_core::bayes::GaussianPrior;
use psibayes_core::placement::{PlacementPolicy, StimulusGrid, StoppingRule};
use psibayes_core::psychometric::{logit, Design, Functional, Task};
use psibayes_sim::{convergence_study, robustness_study_with, run_study, StudyConfig, StudyOptions};

use psibayes_session::diagnostics::DiagnosticsOptions;
use psibayes_session::http::{serve, SessionSummary};
use psibayes_session::{
    autopilot, diagnostics, load, save, AutopilotOutcome, AutopilotRequest, EstimateOptions, EstimateReport,
    NextOutcome, ObserverSpec, RespondOutcome, SessionConfig, SessionError, SessionEvent, SessionState,
};

#[derive(Parser)]
#[command(name = "psibayes", version, about = "Adaptive Bayesian psychometric sessions")]
struct Cli {
    /// Session file.
    #[arg(long, global = true, default_value = "session.json")]
    session: PathBuf,
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    /// Seed: session seed for `init`, report seed for `estimate`/`diagnose`,
    /// observer seed for `simulate`, study seed for `study`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Posterior samples: per proposal for `init`, per report for `estimate`,
    /// per adaptive trial for `study` presets.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Grid points: stimulus grid for `init`, level grid for `estimate`/`diagnose`.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    /// Two-alternative forced choice.
    TwoAfc,
    YesNo,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Psi,
    /// Target the midpoint threshold.
    TThreshold,
    TSlope,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Convergence,
    Robustness,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a new session file.
    Init {
        #[arg(long, value_enum, default_value = "two-afc")]
        task: TaskArg,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        x_lo: f64,
        #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
        x_hi: f64,
        /// Prior means of mu, nu = ln sigma, eta = logit lambda.
        #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [3.0, 0.0, logit(0.02)])]
        prior_mean: Vec<f64>,
        #[arg(long, num_args = 3, default_values_t = [0.5f64.sqrt(), 0.5f64.sqrt(), 0.3])]
        prior_sd: Vec<f64>,
        #[arg(long, value_enum, default_value = "psi")]
        policy: PolicyArg,
        /// Stop after this many trials.
        #[arg(long, default_value_t = 100)]
        max_trials: usize,
        /// Stop once the posterior entropy (nats) drops below this instead.
        #[arg(long, allow_hyphen_values = true)]
        entropy_below: Option<f64>,
        /// Overwrite an existing session file.
        #[arg(long)]
        force: bool,
    },
    /// Propose the next stimulus.
    Next {
        /// Test at this level instead of the optimal one.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<f64>,
    },
    /// Record the response to the pending stimulus: 1/0, yes/no, correct/incorrect.
    Respond { response: String },
    /// Posterior summary; the summary is appended to the event log.
    Estimate {
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Answer trials with a simulated Gaussian observer.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.02)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        drift: f64,
        #[arg(long)]
        trials: usize,
    },
    /// Print the session state and event log.
    Show,
    /// Plot-ready diagnostic exports as JSON.
    Diagnose {
        #[arg(long, default_value_t = 30)]
        draws: usize,
    },
    /// Run a mean-squared-error study and write CSV.
    Study {
        /// TOML study configuration.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        replications: Option<usize>,
        /// Comma-separated trial counts for presets.
        #[arg(long, value_delimiter = ',')]
        trials: Option<Vec<usize>>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP JSON API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory to persist sessions in.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn json<T: Serialize>(v: &T) -> Result<(), String> {
    println!("{}", serde_json::to_string(v).map_err(err)?);
    Ok(())
}

fn json_pretty<T: Serialize>(v: &T) -> Result<(), String> {
    println!("{}", serde_json::to_string_pretty(v).map_err(err)?);
    Ok(())
}

fn table_summary(s: &SessionSummary) {
    println!("session   {}", s.id);
    println!("trials    {}", s.trials);
    match s.pending_stimulus {
        Some(x) => println!("pending   {x:.4}"),
        None => println!("pending   -"),
    }
    match s.stopped {
        Some(r) => println!("stopped   {r:?}"),
        None => println!("stopped   no"),
    }
    println!("          {:>10} {:>10} {:>10}", "mu", "nu", "eta");
    println!("mode      {:>10.4} {:>10.4} {:>10.4}", s.mode[0], s.mode[1], s.mode[2]);
    println!("sd        {:>10.4} {:>10.4} {:>10.4}", s.sd[0], s.sd[1], s.sd[2]);
}

fn table_next(n: &NextOutcome) {
    println!("trial {}  x = {:.4}", n.trial, n.x);
    if let Some(w) = &n.warning {
        println!("warning: {w:?}");
    }
}

fn table_respond(r: &RespondOutcome) {
    let m = r.posterior.mode;
    println!("trial {}  x = {:.4}  response = {}", r.trial.index, r.trial.x, u8::from(r.trial.response));
    println!("mode  mu {:.4}  nu {:.4}  eta {:.4}", m.mu, m.nu, m.eta);
    if let Some(reason) = r.stopped {
        println!("stopped: {reason:?}");
    }
}

fn table_estimate(r: &EstimateReport) {
    let pct = 100.0 * r.level;
    println!("trials {}  level {pct:.0}%  ess {:.0}  entropy {:.4} nats", r.trials, r.effective_sample_size, r.entropy);
    println!(
        "{:<8} {:>10} {:>10} {:>21} {:>21}",
        "param", "mode", "mean", "quantile interval", "hessian interval"
    );
    let (mo, me, q, h) = (&r.mode, &r.mean, &r.quantile_intervals, &r.hessian_intervals);
    let rows = [
        ("mu", mo.mu, me.mu, q.mu, h.mu),
        ("nu", mo.nu, me.nu, q.nu, h.nu),
        ("eta", mo.eta, me.eta, q.eta, h.eta),
        ("sigma", mo.sigma, me.sigma, q.sigma, h.sigma),
        ("lambda", mo.lambda, me.lambda, q.lambda, h.lambda),
    ];
    for (name, a, b, qi, hi) in rows {
        println!("{name:<8} {a:>10.4} {b:>10.4} [{:>9.4},{:>9.4}] [{:>9.4},{:>9.4}]", qi[0], qi[1], hi[0], hi[1]);
    }
    for f in &r.functionals {
        println!(
            "{:<20} mean {:>9.4}  sd {:>8.4}  [{:.4}, {:.4}]  dropped {}",
            f.name, f.mean, f.sd, f.interval[0], f.interval[1], f.dropped
        );
    }
    for (name, why) in &r.unavailable {
        println!("{name:<20} unavailable: {why}");
    }
}

fn table_events(events: &[SessionEvent]) {
    for (i, e) in events.iter().enumerate() {
        let line = match e {
            SessionEvent::Created { .. } => "created".to_string(),
            SessionEvent::Proposed { x, cost_curve_digest } => format!("proposed  {x:.4}  {}", &cost_curve_digest[..cost_curve_digest.len().min(12)]),
            SessionEvent::Responded { x, response } => format!("responded {x:.4}  {}", u8::from(*response)),
            SessionEvent::Estimated { summary } => format!("estimated after {} trials", summary.trials),
            SessionEvent::Stopped { reason } => format!("stopped   {reason:?}"),
        };
        println!("{i:>5}  {line}");
    }
}

fn parse_response(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "yes" | "y" | "correct" | "c" | "true" => Ok(true),
        "0" | "no" | "n" | "incorrect" | "i" | "false" => Ok(false),
        _ => Err(format!("unrecognized response {s:?}")),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Loads the session, applies `f`, saves it back.
fn update<T>(path: &Path, f: impl FnOnce(&mut SessionState) -> Result<T, SessionError>) -> Result<T, String> {
    let mut st = load(path).map_err(err)?;
    let out = f(&mut st).map_err(err)?;
    save(&st, path).map_err(err)?;
    Ok(out)
}

fn run(cli: Cli) -> Result<(), String> {
    let Cli { session, pretty, seed, samples, grid, cmd } = cli;
    let path = session.as_path();
    match cmd {
        Cmd::Init { task, x_lo, x_hi, prior_mean, prior_sd, policy, max_trials, entropy_below, force } => {
            if path.exists() && !force {
                return Err(format!("{} exists; pass --force to overwrite", path.display()));
            }
            let task = match task {
                TaskArg::TwoAfc => Task::ForcedChoice { gamma: 0.5 },
                TaskArg::YesNo => Task::YesNo,
            };
            let design = Design::new(task, x_lo, x_hi).map_err(err)?;
            let prior =
                GaussianPrior::new([prior_mean[0], prior_mean[1], prior_mean[2]], [prior_sd[0], prior_sd[1], prior_sd[2]])
                    .map_err(err)?;
            let mut pol = match policy {
                PolicyArg::Psi => PlacementPolicy::psi(&design),
                PolicyArg::TThreshold => PlacementPolicy::t(
                    &design,
                    Functional::Threshold(psibayes_session::estimate::midpoint_level(&design)),
                    Default::default(),
                ),
                PolicyArg::TSlope => PlacementPolicy::t(&design, Functional::Slope, Default::default()),
            };
            if let Some(n) = samples {
                pol = pol.with_sample_count(n);
            }
            if let Some(g) = grid {
                pol.grid = StimulusGrid::uniform(&design, g).map_err(err)?;
            }
            let stopping_rule = match entropy_below {
                Some(threshold) => StoppingRule::EntropyBelow { threshold },
                None => StoppingRule::FixedTrials { count: max_trials },
            };
            let config = SessionConfig { design, prior, policy: pol, stopping_rule, seed: seed.unwrap_or(0) };
            let st = SessionState::create(config).map_err(err)?;
            save(&st, path).map_err(err)?;
            let s = SessionSummary::of(&st);
            if pretty {
                table_summary(&s);
                Ok(())
            } else {
                json(&s)
            }
        }
        Cmd::Next { at: Some(x) } => {
            let s = update(path, |st| {
                st.propose_at(x)?;
                Ok(SessionSummary::of(st))
            })?;
            if pretty {
                println!("trial {}  x = {x:.4} (manual)", s.trials + 1);
                Ok(())
            } else {
                json(&s)
            }
        }
        Cmd::Next { at: None } => {
            let n = update(path, |st| st.next())?;
            if pretty {
                table_next(&n);
                Ok(())
            } else {
                json(&n)
            }
        }
        Cmd::Respond { response } => {
            let r = parse_response(&response)?;
            let out = update(path, |st| st.respond(r))?;
            if pretty {
                table_respond(&out);
                Ok(())
            } else {
                json(&out)
            }
        }
        Cmd::Estimate { level } => {
            let d = EstimateOptions::default();
            let opts =
                EstimateOptions { samples: samples.unwrap_or(d.samples), seed, level, curve_points: grid.unwrap_or(d.curve_points) };
            let report = update(path, |st| {
                let r = st.estimate(&opts)?;
                st.record_estimate(r.summary());
                Ok(r)
            })?;
            if pretty {
                table_estimate(&report);
                Ok(())
            } else {
                json(&report)
            }
        }
        Cmd::Simulate { mu, sigma, lambda, drift, trials } => {
            let req = AutopilotRequest {
                observer: ObserverSpec { mu, sigma, lambda, drift_per_trial: drift },
                trials,
                seed: seed.unwrap_or(0),
            };
            let out: AutopilotOutcome = update(path, |st| autopilot(st, &req))?;
            if pretty {
                println!("ran {} trials, {} in total, stopped: {:?}", out.trials_run, out.total_trials, out.stopped);
                Ok(())
            } else {
                json(&out)
            }
        }
        Cmd::Show => {
            let st = load(path).map_err(err)?;
            #[derive(Serialize)]
            struct Show<'a> {
                summary: SessionSummary,
                events: &'a [SessionEvent],
            }
            if pretty {
                table_summary(&SessionSummary::of(&st));
                table_events(&st.events);
                Ok(())
            } else {
                json(&Show { summary: SessionSummary::of(&st), events: &st.events })
            }
        }
        Cmd::Diagnose { draws } => {
            let st = load(path).map_err(err)?;
            let d = DiagnosticsOptions::default();
            let opts = DiagnosticsOptions { seed, draws, grid_points: grid.unwrap_or(d.grid_points), ..d };
            let out = diagnostics(&st, &opts).map_err(err)?;
            // arrays of points have no useful table form
            if pretty {
                json_pretty(&out)
            } else {
                json(&out)
            }
        }
        Cmd::Study { config, preset, replications, trials, out } => {
            let seed = seed.unwrap_or(0);
            let report = match (config, preset) {
                (Some(file), _) => {
                    let text = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
                    let mut cfg = StudyConfig::from_toml_str(&text).map_err(err)?;
                    if let Some(r) = replications {
                        cfg.replications = r;
                    }
                    if let Some(t) = trials {
                        cfg.trial_counts = t;
                    }
                    run_study(&cfg, seed).map_err(err)?
                }
                (None, Some(p)) => {
                    let d = StudyOptions::default();
                    let opts = StudyOptions {
                        replications: replications.unwrap_or(d.replications),
                        trial_counts: trials.unwrap_or(d.trial_counts.clone()),
                        adaptive_samples: samples.unwrap_or(d.adaptive_samples),
                        ..d
                    };
                    match p {
                        Preset::Convergence => convergence_study(&opts, seed),
                        Preset::Robustness => robustness_study_with(&opts, seed),
                    }
                    .map_err(err)?
                }
                (None, None) => return Err("--config or --preset required".into()),
            };
            match out {
                Some(file) => {
                    let f = std::fs::File::create(&file).map_err(|e| format!("{}: {e}", file.display()))?;
                    report.write_csv(f).map_err(err)
                }
                None => report.write_csv(std::io::stdout()).map_err(err),
            }
        }
        Cmd::Serve { addr, data_dir } => {
            let rt = tokio::runtime::Runtime::new().map_err(err)?;
            rt.block_on(serve(addr, data_dir.as_deref())).map_err(err)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
