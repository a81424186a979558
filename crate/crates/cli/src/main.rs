use std::fs;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use acoustic_tire::acoustics::{simulate_trial, AcousticParams};
use acoustic_tire::classify::{evaluate, feature_dim, feature_scale, Dataset, LrModel, Split};
use acoustic_tire::design;
use acoustic_tire::dsp::{make_windows, PeakParams, PipelineConfig};
use acoustic_tire::experiment::{self, ExperimentOutcome};
use acoustic_tire::localize::analyze_collision;
use acoustic_tire::model::{rpm_to_rad_per_s, FlagKind, SensorGeometry, Task, PREAMBLE_MS};
use acoustic_tire::scene::ScenePlan;
use acoustic_tire::telemetry::{self, Pace};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Acoustic tactile tire: simulate trials, process traces, classify windows
/// and estimate obstacle heights.
#[derive(Debug, Parser)]
#[command(name = "acoustic-tire", version)]
struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "ACOUSTIC_TIRE_DATA", default_value = ".")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Terrain,
    Obstacle,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Terrain => Task::Terrain,
            TaskArg::Obstacle => Task::ObstacleShape,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Query time, cycles per rotation and minimum separation.
    Design {
        #[arg(long, default_value_t = 0.27)]
        diameter: f64,
        #[arg(long, default_value_t = 0.15)]
        inner_length: f64,
        #[arg(long, default_value_t = 343.0)]
        speed_of_sound: f64,
        #[arg(long, default_value_t = 6.0)]
        rpm: f64,
        #[arg(long, default_value_t = 42_000.0)]
        frequency: f64,
        #[arg(long, default_value_t = 1)]
        pulse_cycles: u32,
        #[arg(long)]
        json: bool,
    },
    /// Simulate one trial and write it as .awt or .jsonl.
    Simulate {
        /// Scene JSON; a 1.5 m wood floor when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Acoustic parameters JSON.
        #[arg(long)]
        acoustics: Option<PathBuf>,
        #[arg(long)]
        clean: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trial length in ms; by default long enough to cross the scene.
        #[arg(long)]
        duration_ms: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cut a trial into labelled, preprocessed windows (JSON lines).
    Process {
        trial: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a terrain or obstacle experiment config and keep the model.
    Train {
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Directory for trial files and reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a model on the windows of trial files.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        trials: Vec<PathBuf>,
    },
    /// Obstacle height from the peaks around a collision.
    Height {
        trial: PathBuf,
        /// Collision time; the first contact flag when omitted.
        #[arg(long)]
        flag_ms: Option<f64>,
        /// Per-cycle peak table.
        #[arg(long)]
        peaks: Option<PathBuf>,
    },
    /// Stream a trial to one TCP client.
    Serve {
        trial: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Send one cycle per 50 ms.
        #[arg(long)]
        realtime: bool,
    },
    /// Receive a streamed trial and save it.
    Replay {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run an experiment config end to end.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(data_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        data_dir.join(p)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> Result<acoustic_tire::model::ExperimentLog> {
    telemetry::load_log(path).with_context(|| format!("loading {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_summary(outcome: &ExperimentOutcome) -> Result<()> {
    match outcome {
        ExperimentOutcome::Classification(s) => {
            println!("accuracy {:.4} on {} test windows", s.report.accuracy, s.test_windows);
            for g in &s.groups {
                println!("  {:<10} {:.4} ({} windows)", g.group, g.accuracy, g.windows);
            }
        }
        ExperimentOutcome::Height { boxes, .. } => {
            for b in boxes {
                println!("{:<6} n={:<3} median {:.2} cm  [{:.2}, {:.2}]", b.group, b.n, b.median * 100.0, b.q1 * 100.0, b.q3 * 100.0);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let data = &cli.data_dir;
    match cli.command {
        Command::Design { diameter, inner_length, speed_of_sound, rpm, frequency, pulse_cycles, json } => {
            let geom = SensorGeometry::wrapped(diameter, inner_length)
                .with_speed_of_sound(speed_of_sound)
                .with_angular_speed(rpm_to_rad_per_s(rpm))
                .with_pulse(frequency, pulse_cycles);
            let report = design::report(&geom)?;
            if json {
                print_json(&report)?;
            } else {
                println!("{report}");
            }
        }
        Command::Simulate { scene, acoustics, clean, seed, duration_ms, out } => {
            let geom = SensorGeometry::prototype();
            let scene: ScenePlan = match scene {
                Some(p) => read_json(&p)?,
                None => ScenePlan::flat(1.5),
            };
            let params = match acoustics {
                Some(p) => read_json(&p)?,
                None if clean => AcousticParams::noise_free(),
                None => AcousticParams::default(),
            }
            .with_seed(seed);
            let duration = duration_ms.unwrap_or_else(|| {
                PREAMBLE_MS + (scene.trial_length - 0.2).max(0.0) / (geom.angular_speed * geom.wheel_radius) * 1000.0
            });
            let sim = simulate_trial(&scene, &geom, &params, duration)?;
            let out = resolve(data, &out);
            ensure_parent(&out)?;
            telemetry::save_log(&out, &sim.log)?;
            println!("{} cycles, {} flags -> {}", sim.log.cycles.len(), sim.log.flags.len(), out.display());
        }
        Command::Process { trial, task, out } => {
            let log = load(&trial)?;
            let windowing = make_windows(&log, task.into(), &PipelineConfig::default());
            let out = resolve(data, &out);
            ensure_parent(&out)?;
            let mut w = std::io::BufWriter::new(fs::File::create(&out)?);
            for win in &windowing.windows {
                let traces: Vec<&[f64]> = win.traces.iter().map(|t| t.samples.as_slice()).collect();
                let rec = json!({
                    "first_cycle": win.first_cycle,
                    "t_ex_span_ms": [win.t_ex_span.0, win.t_ex_span.1],
                    "label": win.label.name(),
                    "traces": traces,
                });
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            for s in &windowing.skipped {
                log::warn!("skipped window: {s:?}");
            }
            println!("{} windows ({} skipped) -> {}", windowing.windows.len(), windowing.skipped.len(), out.display());
        }
        Command::Train { config, model, out } => {
            let cfg = experiment::load_config(&config)?;
            let out = out.map(|o| resolve(data, &o));
            let run = experiment::run_experiment(&cfg, out.as_deref())?;
            let Some(task) = run.task else { bail!("{} is not a classification protocol", cfg.protocol.name()) };
            let model = resolve(data, &model);
            ensure_parent(&model)?;
            task.model.save(&model)?;
            print_summary(&run.outcome)?;
            println!("model -> {}", model.display());
        }
        Command::Eval { model, trials } => {
            let model = LrModel::load(&model)?;
            let cfg = PipelineConfig::default();
            let mut ds = Dataset::new(model.task, feature_dim(model.task, &cfg), 0);
            for (i, path) in trials.iter().enumerate() {
                let log = load(path)?;
                for w in make_windows(&log, model.task, &cfg).windows {
                    ds.push_window(&w, feature_scale(model.task), Split::Test, i as u64, path.display().to_string())?;
                }
            }
            print_json(&evaluate(&model, &ds)?)?;
        }
        Command::Height { trial, flag_ms, peaks } => {
            let log = load(&trial)?;
            let flag = match flag_ms {
                Some(t) => t,
                None => log.first_flag(FlagKind::ContactStart).context("trial has no contact flag; pass --flag-ms")?.t_ex_ms,
            };
            let analysis = analyze_collision(&log, flag, &PeakParams::default(), &log.geometry);
            if let Some(p) = peaks {
                let p = resolve(data, &p);
                ensure_parent(&p)?;
                let mut s = String::from("cycle,t_ex_ms,t_r_ms,amplitude\n");
                for set in &analysis.cycle_peaks {
                    let t_ex = log.cycles[set.source_cycle].t_ex_ms;
                    for (t_r, a) in &set.peaks {
                        s.push_str(&format!("{},{t_ex},{t_r},{a}\n", set.source_cycle));
                    }
                }
                fs::write(&p, s)?;
            }
            print_json(&analysis.estimate?)?;
        }
        Command::Serve { trial, addr, realtime } => {
            let log = load(&trial)?;
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            log::info!("listening on {}", listener.local_addr()?);
            let pace = if realtime { Pace::Realtime } else { Pace::Unpaced };
            let summary = telemetry::serve_tcp(&listener, &log, pace)?;
            print_json(&summary)?;
        }
        Command::Replay { addr, out } => {
            let log = telemetry::receive_tcp(&addr).with_context(|| format!("receiving from {addr}"))?;
            let out = resolve(data, &out);
            ensure_parent(&out)?;
            telemetry::save_log(&out, &log)?;
            println!("{} cycles, {} flags -> {}", log.cycles.len(), log.flags.len(), out.display());
        }
        Command::Run { config, out } => {
            let cfg = experiment::load_config(&config)?;
            let out = resolve(data, &out.unwrap_or_else(|| PathBuf::from(format!("{}-{}", cfg.protocol.name(), cfg.seed))));
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let run = experiment::run_experiment(&cfg, Some(&out))?;
            print_summary(&run.outcome)?;
            println!("{} trials, {} files -> {}", run.trials.len(), run.files.len(), out.display());
        }
    }
    Ok(())
}
