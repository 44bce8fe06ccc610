use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use socstoch::checkpoint::Checkpoint;
use socstoch::config::RunConfig;
use socstoch::dataset::{gen_synthetic, leave_one_out, load_windows, min_pairwise_distance, write_tracks, ScenarioKind, TrajectoryWindow, WindowSpec};
use socstoch::eval::{attention_csv, evaluate, predict_window, prediction_csv, EvalOptions};
use socstoch::model::{Model, RolloutOptions};
use socstoch::train::{loss_csv, Trainer};
use socstoch::Error;

#[derive(Parser)]
#[command(name = "socstoch", version, about = "Stochastic multi-pedestrian trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a social-force scenario and write it as `frame ped x y` text.
    GenData(GenDataArgs),
    /// Train on scene files, optionally holding one scene out.
    Train(TrainArgs),
    /// Best-of-K ADE/FDE per scene.
    Eval(EvalArgs),
    /// Export sampled futures of one window for plotting.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// crossing, group, following, still_person, merge or avoidance
    #[arg(long, value_parser = parse_kind)]
    kind: ScenarioKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    agents: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    frames: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set blocks=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Directory of scene `.txt` files.
    #[arg(long)]
    data_dir: PathBuf,
    /// Scene to exclude from training (ETH, Hotel, Zara01, Zara02, Univ).
    #[arg(long)]
    hold_out: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// A scene file or a directory of them.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "eval.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// A scene file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    window_index: usize,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-edge attention weights to this CSV.
    #[arg(long)]
    attention: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string().trim_start_matches("config error: ").to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 3,
        Error::Checkpoint(_) => 4,
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => 2,
        Error::Contract(_) | Error::Dimension { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

/// Merges file, environment and flags over `base`, in that order.
fn resolve(base: RunConfig, args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        cfg.merge_file(path)?;
    }
    cfg.merge_env(std::env::vars())?;
    cfg.merge_overrides(args.overrides.iter().map(String::as_str))?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn data_files(path: &Path) -> Result<Vec<PathBuf>, Error> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("txt")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no .txt scene files in {}", path.display())));
    }
    Ok(files)
}

fn load_all(files: &[PathBuf], spec: WindowSpec) -> Result<Vec<(String, Vec<TrajectoryWindow>)>, Error> {
    files
        .iter()
        .map(|f| {
            let (scene, w) = load_windows(f, spec)?;
            info!("{}: {} windows", f.display(), w.len());
            Ok((scene, w))
        })
        .collect()
}

fn gen_data(a: GenDataArgs) -> Result<(), Error> {
    let tracks = gen_synthetic(a.kind, a.agents as usize, a.frames as usize, a.seed)?;
    write_tracks(&a.out, &tracks)?;
    let echo = format!("kind={}\nagents={}\nframes={}\nseed={}\n", a.kind, a.agents, a.frames, a.seed);
    write(&sidecar(&a.out), &echo)?;
    let min = min_pairwise_distance(&tracks);
    println!("agents={} frames={} min_pairwise_distance={}", a.agents, a.frames, min.map_or("n/a".to_string(), |d| format!("{d:.4}")));
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = resolve(RunConfig::default(), &a.cfg)?;
    if let Some(epochs) = a.epochs {
        cfg.train.epochs = epochs;
    }
    cfg.validate()?;
    let files = data_files(&a.data_dir)?;
    let scenes = load_all(&files, cfg.data.train_spec())?;
    let windows = match &a.hold_out {
        Some(held) => {
            let (train, test) = leave_one_out(&scenes, held)?;
            info!("holding out {held}: {} train windows, {} test windows", train.len(), test.len());
            train
        }
        None => scenes.into_iter().flat_map(|(_, w)| w).collect(),
    };
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    write(&a.out_dir.join("config.txt"), &cfg.to_text())?;

    let mut model = Model::new(cfg.model, cfg.train.seed);
    info!("{} parameters, {} windows, {} epochs", model.params.num_scalars(), windows.len(), cfg.train.epochs);
    let mut trainer = Trainer::new(&model, &windows, cfg.train)?;
    let mut curve = Vec::with_capacity(cfg.train.epochs);
    for _ in 0..cfg.train.epochs {
        match trainer.run_epoch(&mut model) {
            Ok(s) => {
                info!("epoch {:>4}  loss {:.6}  recon {:.6}  kl {:.6}", s.epoch, s.loss, s.recon, s.kl);
                curve.push(s);
            }
            Err(e) => {
                write(&a.out_dir.join("loss.csv"), &loss_csv(&curve))?;
                return Err(e);
            }
        }
    }
    write(&a.out_dir.join("loss.csv"), &loss_csv(&curve))?;
    let ckpt = a.out_dir.join("checkpoint.bin");
    Checkpoint::from_model(&cfg, &model, trainer.epoch, &trainer.rng).save(&ckpt)?;
    info!("wrote {}", ckpt.display());
    Ok(())
}

fn load_model(path: &Path, args: &ConfigArgs) -> Result<(Model, RunConfig), Error> {
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} not found", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    let cfg = resolve(ck.config, args)?;
    cfg.validate()?;
    let model = ck.model_with(&cfg)?;
    Ok((model, cfg))
}

fn eval(a: EvalArgs) -> Result<(), Error> {
    let (model, mut cfg) = load_model(&a.checkpoint, &a.cfg)?;
    if let Some(k) = a.samples {
        cfg.eval.samples = k;
    }
    cfg.validate()?;
    let files = data_files(&a.data)?;
    let windows: Vec<TrajectoryWindow> = load_all(&files, cfg.data.eval_spec())?.into_iter().flat_map(|(_, w)| w).collect();
    if windows.is_empty() {
        return Err(Error::Config("no evaluation windows".into()));
    }
    let opts = EvalOptions {
        samples: cfg.eval.samples,
        seed: cfg.train.seed,
        per_agent_best: cfg.eval.per_agent_best,
        rollout: RolloutOptions::default(),
    };
    let report = evaluate(&model, &windows, opts)?;
    print!("{}", report.to_table());
    write(&a.out, &report.to_csv())?;
    write(&sidecar(&a.out), &cfg.to_text())?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), Error> {
    let (model, mut cfg) = load_model(&a.checkpoint, &a.cfg)?;
    if let Some(k) = a.samples {
        cfg.eval.samples = k;
    }
    cfg.validate()?;
    let (_, windows) = load_windows(&a.data, cfg.data.eval_spec())?;
    let window = windows.get(a.window_index).ok_or_else(|| {
        Error::Config(format!("window index {} out of range; {} has {} windows", a.window_index, a.data.display(), windows.len()))
    })?;
    let opts = RolloutOptions {
        sigma_scale: 1.0,
        record_attention: a.attention.is_some(),
    };
    let pred = predict_window(&model, window, a.window_index, cfg.eval.samples, cfg.train.seed, opts)?;
    write(&a.out, &prediction_csv(&pred))?;
    if let Some(path) = &a.attention {
        write(path, &attention_csv(&pred))?;
    }
    write(&sidecar(&a.out), &cfg.to_text())?;
    println!(
        "window {} ({} agents): {} samples x {} steps -> {}",
        a.window_index,
        window.n_agents(),
        cfg.eval.samples,
        window.t_pred,
        a.out.display()
    );
    Ok(())
}
