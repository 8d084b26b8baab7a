use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use semwb::augment::Split;
use semwb::harness::report::REPORT_VERSION;
use semwb::harness::{
    eval_rows, evaluate_baseline, mask_shuffle_study, run_ablation, run_mask_sensitivity,
    subset_rows, training_examples, write_ablation, Baseline, Dataset, EvalReport,
    ExperimentConfig,
};
use semwb::imaging::{load_image, load_mask, save_image, ImageFormat, LinearImage, SemanticMask};
use semwb::model::{Checkpoint, SemanticWbNet, Trainer};
use semwb::{Error, Result};

/// Semantic white balance: synthesize casts, train, correct, and evaluate.
#[derive(Parser)]
#[command(name = "semwb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a cast dataset into a directory tree.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network on the training split of a synthesized dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory or its manifest.json.
        #[arg(long)]
        data: PathBuf,
        /// 4 reads the semantic mask, 3 ignores it.
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(3..=4))]
        channels: u8,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct one image with a trained model.
    Correct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        /// Label map; required for models that read the mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample RMSE of a trained model on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Dataset directory or its manifest.json.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grey-world or white-patch correction of an image, or their RMSE on a dataset.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, conflicts_with = "manifest", requires = "out")]
        image: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Corrected image, or JSON report with --manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train both arms over several seeds and write the comparison report.
    Ablation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Compare predictions under two masks, or under shuffled masks over a split.
    MaskSens {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, requires_all = ["mask_a", "mask_b"], conflicts_with = "manifest")]
        image: Option<PathBuf>,
        #[arg(long)]
        mask_a: Option<PathBuf>,
        #[arg(long)]
        mask_b: Option<PathBuf>,
        #[arg(long, required_unless_present = "image")]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Output directory for the corrected images and report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Options shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Experiment config (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    samples_per_image: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.epochs = epochs;
        }
        if let Some(n) = self.samples_per_image {
            cfg.augment.samples_per_image = n;
        }
        if let Some(lr) = self.lr {
            cfg.train.optimizer.base_lr = lr;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    GreyWorld,
    WhitePatch,
}

impl From<MethodArg> for Baseline {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::GreyWorld => Baseline::GreyWorld,
            MethodArg::WhitePatch => Baseline::WhitePatch,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common, out } => {
            let cfg = common.config()?;
            let dataset = Dataset::build(&cfg)?;
            dataset.write_tree(&out)?;
            println!(
                "wrote {} train and {} test samples to {}",
                dataset.train.len(),
                dataset.test.len(),
                out.display()
            );
        }
        Command::Train {
            common,
            data,
            channels,
            out,
        } => {
            let cfg = common.config()?;
            let dataset = Dataset::load(&data)?;
            let examples = training_examples(&cfg, &dataset)?;
            let spec = cfg.network.with_channels(usize::from(channels));
            let net = SemanticWbNet::init_weights(&spec, cfg.seed)?;
            let mut trainer = Trainer::new(net, cfg.train_config(cfg.seed))?;
            let start = Instant::now();
            while trainer.epoch < trainer.config.epochs {
                let loss = trainer.run_epoch(&examples)?;
                eprintln!("epoch {:>3} loss {loss:.6}", trainer.epoch);
            }
            let ckpt = Checkpoint::from_trainer(
                &trainer,
                dataset.class_count(),
                dataset.normalization()?.clone(),
            );
            ckpt.save(&out)?;
            eprintln!("trained in {:.1}s", start.elapsed().as_secs_f64());
            println!("wrote {}", out.display());
        }
        Command::Correct {
            common,
            image,
            mask,
            model,
            out,
        } => {
            common.config()?;
            let ckpt = Checkpoint::load(&model)?;
            let mut net = ckpt.network()?;
            let img = read_image(&image)?;
            let mask = match mask {
                Some(path) => load_mask(&path, ckpt.class_count)?,
                None if net.spec().uses_mask() => {
                    return Err(Error::Config(
                        "this model reads a semantic mask; pass --mask".into(),
                    ))
                }
                None => SemanticMask::filled(img.width(), img.height(), 0)?,
            };
            let (corrected, params) =
                net.correct_image(&img, &mask, &ckpt.normalization, ckpt.class_count)?;
            write_image(&corrected, &out)?;
            println!("{}", json(&params)?);
        }
        Command::Eval {
            common,
            manifest,
            model,
            split,
            out,
        } => {
            common.config()?;
            let ckpt = Checkpoint::load(&model)?;
            let dataset = Dataset::load(&manifest)?;
            check_classes(&ckpt, &dataset)?;
            let mut net = ckpt.network()?;
            let name = format!("{}-channel", net.spec().input_channels);
            let rows = eval_rows(&mut net, &ckpt.normalization, &dataset, split.into(), &name)?;
            emit_eval(
                EvalReport {
                    format_version: REPORT_VERSION,
                    rows,
                },
                out.as_deref(),
            )?;
        }
        Command::Baseline {
            common,
            method,
            image,
            manifest,
            split,
            out,
        } => {
            common.config()?;
            let baseline = Baseline::from(method);
            if let Some(image) = image {
                let img = read_image(&image)?;
                let params = baseline.estimate(&img)?;
                let corrected = semwb::colorcast::apply_correction(&img, &params)?;
                write_image(&corrected, out.as_deref().expect("clap requires --out"))?;
                println!("{}", json(&params)?);
            } else if let Some(manifest) = manifest {
                let dataset = Dataset::load(&manifest)?;
                let samples = dataset.split(split.into());
                let per_sample = evaluate_baseline(baseline, samples)?;
                let rows = subset_rows(&dataset, samples, baseline.name(), None, per_sample);
                emit_eval(
                    EvalReport {
                        format_version: REPORT_VERSION,
                        rows,
                    },
                    out.as_deref(),
                )?;
            } else {
                return Err(Error::Config("pass --image or --manifest".into()));
            }
        }
        Command::Ablation {
            common,
            out,
            repeats,
        } => {
            let mut cfg = common.config()?;
            if let Some(r) = repeats {
                cfg.repeats = r;
                cfg.validate()?;
            }
            let start = Instant::now();
            let outcome = run_ablation(&cfg)?;
            print!("{}", outcome.report.to_text());
            if let Some(dir) = out.or_else(|| cfg.output_dir.clone()) {
                write_ablation(&outcome, &cfg, &dir)?;
                eprintln!("wrote {}", dir.display());
            }
            eprintln!("ablation took {:.1}s", start.elapsed().as_secs_f64());
        }
        Command::MaskSens {
            common,
            model,
            image,
            mask_a,
            mask_b,
            manifest,
            split,
            out,
        } => {
            common.config()?;
            let ckpt = Checkpoint::load(&model)?;
            let mut net = ckpt.network()?;
            if let Some(image) = image {
                let img = read_image(&image)?;
                let a = load_mask(mask_a.expect("clap requires --mask-a"), ckpt.class_count)?;
                let b = load_mask(mask_b.expect("clap requires --mask-b"), ckpt.class_count)?;
                let (report, [ca, cb]) = run_mask_sensitivity(
                    &mut net,
                    &img,
                    &a,
                    &b,
                    &ckpt.normalization,
                    ckpt.class_count,
                )?;
                let text = json(&report)?;
                if let Some(dir) = out {
                    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.as_path(), e))?;
                    save_image(&ca, dir.join("corrected_a.png"), ImageFormat::Png)?;
                    save_image(&cb, dir.join("corrected_b.png"), ImageFormat::Png)?;
                    write_text(&dir.join("mask_sensitivity.json"), &text)?;
                }
                println!("{text}");
            } else if let Some(manifest) = manifest {
                let dataset = Dataset::load(&manifest)?;
                check_classes(&ckpt, &dataset)?;
                let study = mask_shuffle_study(
                    &mut net,
                    &ckpt.normalization,
                    ckpt.class_count,
                    dataset.split(split.into()),
                )?;
                let text = json(&study)?;
                if let Some(dir) = out {
                    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.as_path(), e))?;
                    write_text(&dir.join("mask_shuffle.json"), &text)?;
                }
                println!("{text}");
            }
        }
    }
    Ok(())
}

fn check_classes(ckpt: &Checkpoint, dataset: &Dataset) -> Result<()> {
    if ckpt.class_count != dataset.class_count() {
        return Err(Error::Config(format!(
            "model expects {} classes, dataset has {}",
            ckpt.class_count,
            dataset.class_count()
        )));
    }
    Ok(())
}

fn read_image(path: &Path) -> Result<LinearImage> {
    load_image(path, ImageFormat::from_path(path)?)
}

fn write_image(img: &LinearImage, path: &Path) -> Result<()> {
    save_image(img, path, ImageFormat::from_path(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, format!("{text}\n")).map_err(|e| Error::io(path, e))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Malformed {
        what: "output",
        message: e.to_string(),
    })
}

fn emit_eval(report: EvalReport, out: Option<&Path>) -> Result<()> {
    print!("{}", report.to_text());
    if let Some(path) = out {
        fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
