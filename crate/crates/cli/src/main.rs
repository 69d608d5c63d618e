use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forge_cli::eval::evaluate;
use forge_cli::pipeline::{filter_manifest, EnhanceOptions, EnhanceOutcome};
use forge_cli::{CliError, Pipeline, PipelineConfig, Result};
use forge_core::dataset::{compute_stats, load_manifest, Split};
use forge_core::filters::{self, FilterKind, FilterSpec};
use forge_core::synthetic::{write_corpus, CorpusSpec};

#[derive(Parser)]
#[command(name = "forge", version, about = "Build and evaluate referring-expression segmentation datasets")]
struct Cli {
    /// TOML config file; `FORGE_CONFIG` is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (the filter seed for `forge filter`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Recompute stages even when their checkpoints are current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cut source images into tiles.
    Tile {
        /// Source manifest (`sources.json`).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Work directory receiving the tiles.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        window: Option<u32>,
        #[arg(long)]
        stride: Option<u32>,
    },
    /// Build targets and cues for every tile.
    Targets,
    /// Expand cues into rule expressions.
    Generate,
    /// Remove expressions shared by several targets of a tile.
    Dedupe,
    /// Add LLM language and visual variations.
    Enhance {
        /// Deduplicated expressions checkpoint; its directory is the work directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Print the estimated cost of the uncached requests and exit.
        #[arg(long)]
        dry_run_cost: bool,
        /// Also write teacher exchanges as distillation pairs (JSON lines).
        #[arg(long)]
        distill_out: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        distill_k: usize,
    },
    /// Apply a historic filter to one image, or to every image of a dataset manifest.
    Filter {
        /// none, grayscale (bw), grayscale_grain (grain), sepia_noise (sepia).
        /// In batch mode, omit to draw one per image.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long = "in", requires = "out", conflicts_with = "manifest")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset manifest for batch mode.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Write the dataset manifest, images and statistics.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        skip_enhance: bool,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Score predicted masks.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Every stage from tiling to export.
    Run {
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        skip_enhance: bool,
    },
    /// Print the effective configuration (file, environment and flags merged) as TOML.
    Config,
    /// Write a small synthetic source corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        instance_images: usize,
        #[arg(long, default_value_t = 2)]
        semantic_images: usize,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli.config.clone().or_else(|| std::env::var_os("FORGE_CONFIG").map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(&p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = &cli.work_dir {
        cfg.paths.work_dir = d.clone();
    }
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::stage("output", "json", e))?;
    println!("{text}");
    Ok(())
}

fn pipeline(cfg: PipelineConfig, force: bool) -> Result<Pipeline> {
    let mut p = Pipeline::new(cfg)?;
    p.force = force;
    Ok(p)
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Tile {
            manifest,
            out,
            window,
            stride,
        } => {
            if let Some(m) = manifest {
                cfg.paths.sources = m;
            }
            if let Some(o) = out {
                cfg.paths.work_dir = o;
            }
            if let Some(w) = window {
                cfg.tiling.window = w;
            }
            if let Some(s) = stride {
                cfg.tiling.stride = s;
            }
            pipeline(cfg, cli.force)?.tile()?;
        }
        Command::Targets => {
            pipeline(cfg, cli.force)?.targets()?;
        }
        Command::Generate => {
            pipeline(cfg, cli.force)?.generate()?;
        }
        Command::Dedupe => {
            pipeline(cfg, cli.force)?.dedupe()?;
        }
        Command::Enhance {
            manifest,
            cache,
            concurrency,
            dry_run_cost,
            distill_out,
            distill_k,
        } => {
            if let Some(m) = manifest {
                cfg.paths.work_dir = m.parent().map(PathBuf::from).unwrap_or_default();
            }
            if let Some(c) = cache {
                cfg.paths.cache_dir = c;
            }
            if let Some(c) = concurrency {
                cfg.enhancer.concurrency = c;
            }
            let opts = EnhanceOptions {
                dry_run_cost,
                distill: distill_out.map(|p| (p, distill_k)),
            };
            match pipeline(cfg, cli.force)?.enhance(&opts)? {
                EnhanceOutcome::DryRun(est) => print_json(&est)?,
                EnhanceOutcome::Done(_) => {}
            }
        }
        Command::Filter {
            kind,
            input,
            out,
            manifest,
            split,
        } => {
            cfg.validate()?;
            let kind = kind
                .map(|k| k.parse::<FilterKind>().map_err(|e| CliError::Config(e.to_string())))
                .transpose()?;
            let params = cfg.filter_params();
            if let Some(m) = manifest {
                let n = filter_manifest(&m, split.split(), kind, cfg.seed, params)?;
                tracing::info!(stage = "filter", images = n, "filtered variants written");
            } else {
                let (Some(input), Some(out)) = (input, out) else {
                    return Err(CliError::Config("filter needs --in and --out, or --manifest".into()));
                };
                let kind = kind.ok_or_else(|| CliError::Config("filter needs --kind in single-image mode".into()))?;
                let item = input.display().to_string();
                let img = image::open(&input).map_err(|e| CliError::stage("filter", &item, e))?.to_rgb8();
                let spec = FilterSpec {
                    kind,
                    params,
                    seed: cfg.seed,
                };
                let filtered = filters::apply(&spec, &img).map_err(|e| CliError::stage("filter", &item, e))?;
                filtered.save(&out).map_err(|e| CliError::stage("filter", out.display().to_string(), e))?;
            }
        }
        Command::Export { out, skip_enhance } => {
            if let Some(o) = out {
                cfg.paths.out_dir = o;
            }
            pipeline(cfg, cli.force)?.export(!skip_enhance)?;
        }
        Command::Stats { manifest, format } => {
            let item = manifest.display().to_string();
            let m = load_manifest(&manifest).map_err(|e| CliError::stage("stats", &item, e))?;
            m.validate().map_err(|e| CliError::stage("stats", &item, e))?;
            let stats = compute_stats(&m).map_err(|e| CliError::stage("stats", &item, e))?;
            match format {
                Format::Text => print!("{}", stats.to_text()),
                Format::Json => print_json(&stats)?,
            }
        }
        Command::Eval {
            gt,
            pred,
            report,
            split,
        } => {
            let item = gt.display().to_string();
            let m = load_manifest(&gt).map_err(|e| CliError::stage("eval", &item, e))?;
            let r = evaluate(&m, &pred, split.split())?;
            match report {
                Format::Text => print!("{}", r.to_text()),
                Format::Json => print_json(&r)?,
            }
        }
        Command::Run {
            sources,
            out,
            skip_enhance,
        } => {
            if let Some(s) = sources {
                cfg.paths.sources = s;
            }
            if let Some(o) = out {
                cfg.paths.out_dir = o;
            }
            pipeline(cfg, cli.force)?.run(skip_enhance)?;
        }
        Command::Config => {
            cfg.validate()?;
            let text = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{text}");
        }
        Command::Synth {
            out,
            instance_images,
            semantic_images,
        } => {
            let spec = CorpusSpec {
                instance_images,
                semantic_images,
                seed: cli.seed.unwrap_or(7),
            };
            let path = write_corpus(&out, &spec).map_err(|e| CliError::stage("synth", out.display().to_string(), e))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("FORGE_LOG").unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(code = e.exit_code(), error = %e, "forge failed");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
