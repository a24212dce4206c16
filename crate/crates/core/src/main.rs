use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memesent::dataset::{generate_synthetic, load_manifest, save_manifest, LabelDistributionSpec, MemeRecord, SplitName};
use memesent::embedding::cache::EmbeddingCache;
use memesent::embedding::{encode_meme, ImageRef, MemeInput};
use memesent::error::{Error, Result};
use memesent::evaluation::{render_json, render_table, ReportRow};
use memesent::training::{
    evaluate_model, load_checkpoint, prepare_splits, run, save_checkpoint, EncodedSplits, RunConfig, Task,
    TrainedModel, Variant, EMOTION_AGGREGATE_NOTE,
};
use memesent::cec::infer_cec;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "memesent", version, about = "Meme sentiment and emotion classifiers")]
struct Cli {
    /// Directory that relative data paths resolve against.
    #[arg(long, global = true, env = "MEMESENT_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic manifest.
    SynthData {
        /// Label distribution: train (alias tableA), valid or test.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its checkpoint and report.
    Train(RunArgs),
    /// Score a checkpoint on the held-out split of a manifest.
    Evaluate {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to score; `all` scores every record.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train every variant of a task for each seed.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
    /// Predict one meme.
    Predict {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value = "")]
        caption: String,
        /// Identifier used by hash-based encoders; defaults to the caption.
        #[arg(long)]
        id: Option<String>,
    },
    /// Encode a manifest into an embedding cache file.
    EncodeCache {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Dataset version, used as the cache file stem.
        #[arg(long, default_value = "v1")]
        version: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    data: PathBuf,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for checkpoints and reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn resolve(data_dir: &Option<PathBuf>, p: &Path) -> PathBuf {
    match data_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

fn load_records(path: &Path) -> Result<Vec<MemeRecord>> {
    Ok(load_manifest(path, SplitName::Train)?.split.records)
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn run_config(args: &RunArgs, data_dir: &Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(&resolve(data_dir, p))?,
        None => RunConfig::default(),
    };
    cfg.task = args.task;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train_one(cfg: &RunConfig, data: &EncodedSplits, out: &Path) -> Result<Vec<ReportRow>> {
    create_dir(out)?;
    let output = run(cfg, data)?;
    save_checkpoint(&output.checkpoint, &out.join("checkpoint.mmck"))?;
    let rows = output.report.rows();
    write_file(&out.join("report.json"), &output.report.to_json())?;
    write_file(&out.join("report.txt"), &render_table(&rows))?;
    eprintln!(
        "{} {} seed {}: {:.1}s",
        cfg.task,
        cfg.variant,
        cfg.seed,
        output.report.wall_clock_secs
    );
    Ok(rows)
}

fn print_rows(rows: &[ReportRow], task: Task) {
    print!("{}", render_table(rows));
    if task == Task::BC {
        println!("# {EMOTION_AGGREGATE_NOTE}");
    }
}

fn execute(cli: Cli) -> Result<()> {
    let dd = &cli.data_dir;
    match cli.command {
        Command::SynthData { spec, n, seed, out } => {
            let spec = LabelDistributionSpec::by_name(&spec)?;
            let split = generate_synthetic(&spec, n, seed)?;
            save_manifest(&split.records, &resolve(dd, &out))?;
        }
        Command::Train(args) => {
            let cfg = run_config(&args, dd)?;
            let data_path = resolve(dd, &args.data);
            let records = load_records(&data_path)?;
            let data = prepare_splits(&records, &cfg, base_dir(&data_path))?;
            let rows = train_one(&cfg, &data, &args.out)?;
            print_rows(&rows, cfg.task);
        }
        Command::Evaluate {
            task,
            data,
            checkpoint,
            split,
        } => {
            let ck = load_checkpoint(&resolve(dd, &checkpoint))?;
            let model_task = match ck.model {
                TrainedModel::Cec(_) => Task::BC,
                _ => Task::A,
            };
            if model_task != task {
                return Err(Error::Config(format!("checkpoint holds a task {model_task} model")));
            }
            let data_path = resolve(dd, &data);
            let records = load_records(&data_path)?;
            let cfg = RunConfig {
                task,
                variant: Variant::Full,
                seed: ck.encoder.seed,
                encoder: ck.encoder.kind,
                d_s: ck.encoder.d_s,
                d_a: ck.encoder.d_a,
                jitter: ck.encoder.jitter,
                ..RunConfig::default()
            };
            let data = prepare_splits(&records, &cfg, base_dir(&data_path))?;
            let samples = match split.as_str() {
                "test" => data.test,
                "valid" => data.valid,
                "train" => data.train,
                "all" => [data.train, data.valid, data.test].concat(),
                other => return Err(Error::Config(format!("unknown split `{other}`"))),
            };
            let m = evaluate_model(&ck.model, &samples)?;
            if let Some(f) = m.task_a {
                println!("task A weighted_f1 {f:.4}");
            }
            if let (Some(b), Some(c)) = (m.task_b, m.task_c) {
                println!("task B weighted_f1 {:.4} per_emotion {:?}", b.mean, b.per_emotion);
                println!("task C weighted_f1 {:.4} per_emotion {:?}", c.mean, c.per_emotion);
                println!("# {EMOTION_AGGREGATE_NOTE}");
            }
        }
        Command::Ablate { run: args, seeds } => {
            let base = run_config(&args, dd)?;
            let data_path = resolve(dd, &args.data);
            let records = load_records(&data_path)?;
            let variants: &[Variant] = match base.task {
                Task::A => &Variant::TASK_A,
                Task::BC => &Variant::TASK_BC,
            };
            let mut rows = Vec::new();
            for &seed in &seeds {
                let cfg = RunConfig { seed, ..base.clone() };
                let data = prepare_splits(&records, &cfg, base_dir(&data_path))?;
                for &variant in variants {
                    let cfg = RunConfig { variant, ..cfg.clone() };
                    let out = args.out.join(format!("{variant}-seed{seed}"));
                    for mut r in train_one(&cfg, &data, &out)? {
                        r.variant = format!("{variant} (seed {seed})");
                        rows.push(r);
                    }
                }
            }
            create_dir(&args.out)?;
            write_file(&args.out.join("ablation.json"), &render_json(&rows))?;
            write_file(&args.out.join("ablation.txt"), &render_table(&rows))?;
            print_rows(&rows, base.task);
        }
        Command::Predict {
            task,
            checkpoint,
            image,
            caption,
            id,
        } => {
            let ck = load_checkpoint(&resolve(dd, &checkpoint))?;
            let image = match image {
                Some(p) => ImageRef::Path(resolve(dd, &p)),
                None => ImageRef::Absent,
            };
            let meme_id = id.unwrap_or_else(|| caption.clone());
            let emb = encode_meme(
                &MemeInput {
                    meme_id: &meme_id,
                    image: &image,
                    caption: &caption,
                },
                &ck.encoder.backend_set()?,
            )?;
            match (&ck.model, task) {
                (TrainedModel::Cec(state), Task::BC) => {
                    let (scales, presence) = infer_cec(&emb, state)?;
                    let bits = presence.to_array().map(|b| if b { "1" } else { "0" }).join(",");
                    let s = scales.to_array().map(|v| v.to_string()).join(",");
                    println!("presence={bits} scales={s}");
                }
                (TrainedModel::Ctm(state), Task::A) => {
                    let (g, b) = state.student_probs(&emb)?;
                    println!("sentiment={} g={g:.4} b={b:.4}", state.classify(&emb)?);
                }
                (TrainedModel::Linear(m), Task::A) => {
                    let p = m.probs(&emb)?;
                    println!("sentiment={} p={:.4},{:.4},{:.4}", m.classify(&emb)?, p[0], p[1], p[2]);
                }
                _ => return Err(Error::Config(format!("checkpoint does not hold a task {task} model"))),
            }
        }
        Command::EncodeCache {
            data,
            config,
            seed,
            out,
            version,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&resolve(dd, &p))?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data_path = resolve(dd, &data);
            let records = load_records(&data_path)?;
            let samples = memesent::training::encode_records(&records, &cfg.encoder_spec(), base_dir(&data_path))?;
            let mut cache = EmbeddingCache::new(version.clone());
            for s in samples {
                cache.put(s.meme_id, s.embedding)?;
            }
            let out = resolve(dd, &out);
            create_dir(&out)?;
            let path = EmbeddingCache::path_for(&out, &version);
            cache.save(&path)?;
            println!("{} embeddings -> {}", cache.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Divergence { .. } => EXIT_DIVERGENCE,
                _ => EXIT_DATA,
            })
        }
    }
}
