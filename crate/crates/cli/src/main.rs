//! The workbench CLI.
//!
//! Typical session:
//!
//! ```text
//! lotsbench gen-dataset --out data --seed 7
//! lotsbench train --dataset data --format idx --model model.bin
//! lotsbench build-openmax --dataset data --format idx --model model.bin \
//!     --openmax-model openmax.txt
//! lotsbench matrix --dataset data --format idx --model model.bin \
//!     --openmax-model openmax.txt --out results
//! lotsbench pass --image results/test0001_softmax_cav_3.png --original probe.png
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lotsbench_core::harness::{
    self, load_dataset, matrix, report, Dataset, DatasetFormat, ExperimentConfig, Head,
};
use lotsbench_core::lots::{iterative_lots, AttackConfig};
use lotsbench_core::net::{self, classification_accuracy, Network, TrainConfig};
use lotsbench_core::openmax::{build_openmax, Classifier, OpenmaxConfig, OpenmaxModel};
use lotsbench_core::pass::pass_score;
use lotsbench_core::targets::{compute_mavs, make_cav, mav_target, TargetKind};
use lotsbench_core::{Image, Result};

#[derive(Parser)]
#[command(name = "lotsbench", version, about = "Adversarial-robustness workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout on disk.
    #[arg(long, default_value = "idx")]
    format: String,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let format: DatasetFormat = self.format.parse()?;
        load_dataset(&self.dataset, format)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic separable 10-class dataset.
    GenDataset {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "idx")]
        format: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        per_class_train: usize,
        #[arg(long, default_value_t = 40)]
        per_class_test: usize,
        #[arg(long, default_value_t = 16)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        width: usize,
    },
    /// Train the desk-scale convolutional model.
    Train {
        #[command(flatten)]
        data: DatasetArgs,
        /// Where to write the trained model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
    },
    /// Build the open-set head: MAVs plus per-class Weibull tails.
    BuildOpenmax {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        model: PathBuf,
        /// Where to write the open-set model.
        #[arg(long)]
        openmax_model: PathBuf,
        /// Optionally also write the MAV set on its own.
        #[arg(long)]
        mavs: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        tail_size: usize,
        /// Revision breadth; defaults to min(10, K).
        #[arg(long)]
        alpha: Option<usize>,
    },
    /// Attack one image toward one target class.
    Attack {
        #[arg(long)]
        model: PathBuf,
        /// Open-set model; required for --head openmax and --target-kind mav.
        #[arg(long)]
        openmax_model: Option<PathBuf>,
        /// Probe image (PNG).
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "softmax")]
        head: String,
        #[arg(long, default_value = "cav")]
        target_kind: String,
        #[arg(long)]
        target_class: usize,
        #[arg(long, default_value_t = 500)]
        max_steps: usize,
        /// Where to write the perturbed image.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full four-way experiment matrix.
    Matrix {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        openmax_model: PathBuf,
        /// Output directory for PNGs, CSVs and the markdown report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        max_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        num_probes: usize,
        /// Explicit test-set indices to use as probes.
        #[arg(long, value_delimiter = ',')]
        probes: Option<Vec<usize>>,
    },
    /// Score the perceptual similarity of an image pair.
    Pass {
        /// The perturbed image.
        #[arg(long)]
        image: PathBuf,
        /// The original it is compared against.
        #[arg(long)]
        original: PathBuf,
    },
    /// Rebuild summary and markdown reports from a per-attempt CSV.
    Report {
        /// attempts.csv produced by `matrix`.
        #[arg(long)]
        attempts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::GenDataset {
            out,
            format,
            seed,
            per_class_train,
            per_class_test,
            height,
            width,
        } => {
            let dataset = harness::generate_synthetic_dataset(
                seed,
                per_class_train,
                per_class_test,
                height,
                width,
            );
            match format.parse()? {
                DatasetFormat::Idx => harness::save_idx(&dataset, &out)?,
                DatasetFormat::PngTree => harness::save_png_tree(&dataset, &out)?,
            }
            println!(
                "wrote {} train / {} test images over {} classes to {}",
                dataset.train.len(),
                dataset.test.len(),
                dataset.num_classes,
                out.display()
            );
        }
        Command::Train {
            data,
            model,
            seed,
            epochs,
            batch_size,
            learning_rate,
        } => {
            let dataset = data.load()?;
            let mut network =
                Network::desk_default(dataset.image_shape(), dataset.num_classes, seed)?;
            let cfg = TrainConfig { epochs, batch_size, learning_rate, seed };
            let report = net::train(&mut network, &dataset.train, &cfg)?;
            let train_acc = classification_accuracy(&network, &dataset.train)?;
            let test_acc = classification_accuracy(&network, &dataset.test)?;
            net::save_model(&network, &model)?;
            println!(
                "trained {} epochs, final loss {:.4}, accuracy train {:.2}% / test {:.2}%, model at {}",
                report.epochs_run,
                report.final_loss,
                100.0 * train_acc,
                100.0 * test_acc,
                model.display()
            );
        }
        Command::BuildOpenmax {
            data,
            model,
            openmax_model,
            mavs,
            tail_size,
            alpha,
        } => {
            let dataset = data.load()?;
            let network = net::load_model(&model)?;
            let mav_set = compute_mavs(&network, &dataset.train)?;
            if let Some(path) = mavs {
                mav_set.save(&path)?;
                println!("wrote MAVs to {}", path.display());
            }
            let config = OpenmaxConfig { tail_size, alpha };
            let openmax = build_openmax(&network, &mav_set, &dataset.train, &config)?;
            openmax.save(&openmax_model)?;
            println!(
                "built open-set head (alpha {}, tail {}) at {}",
                openmax.alpha(),
                openmax.tail_size(),
                openmax_model.display()
            );
        }
        Command::Attack {
            model,
            openmax_model,
            image,
            head,
            target_kind,
            target_class,
            max_steps,
            out,
        } => {
            let network = net::load_model(&model)?;
            let head: Head = head.parse()?;
            let openmax = openmax_model.map(|p| OpenmaxModel::load(&p)).transpose()?;
            let classifier = match head {
                Head::Softmax => Classifier::Softmax,
                Head::Openmax => Classifier::Openmax(openmax.as_ref().ok_or_else(|| {
                    lotsbench_core::Error::InvalidArgument(
                        "--head openmax needs --openmax-model".into(),
                    )
                })?),
            };
            let target = match target_kind.as_str() {
                "cav" => make_cav(target_class, network.num_classes())?,
                "mav" => {
                    let om = openmax.as_ref().ok_or_else(|| {
                        lotsbench_core::Error::InvalidArgument(
                            "--target-kind mav needs --openmax-model".into(),
                        )
                    })?;
                    mav_target(om.mavs(), target_class)?
                }
                other => {
                    return Err(lotsbench_core::Error::InvalidArgument(format!(
                        "unknown target kind {other:?}"
                    )))
                }
            };
            let probe = Image::load_png(&image)?;
            let cfg = AttackConfig { max_steps, ..AttackConfig::default() };
            let result = iterative_lots(&network, classifier, &probe, &target, &cfg)?;
            result.perturbed.save_png(&out)?;
            let pass = pass_score(&result.perturbed, &probe)?;
            println!(
                "success {} | steps {} | achieved {} (certainty {:.4}) | PASS {:.6} | wrote {}",
                result.success,
                result.steps_used,
                result.achieved,
                result.certainty,
                pass.value,
                out.display()
            );
        }
        Command::Matrix {
            data,
            model,
            openmax_model,
            out,
            max_steps,
            seed,
            num_probes,
            probes,
        } => {
            let dataset = data.load()?;
            let network = net::load_model(&model)?;
            let openmax = OpenmaxModel::load(&openmax_model)?;
            let config = ExperimentConfig {
                attack: AttackConfig { max_steps, ..AttackConfig::default() },
                num_known_probes: num_probes,
                probe_ids: probes,
                seed,
                ..ExperimentConfig::default()
            };
            let output = matrix::run_matrix(&network, &openmax, &dataset, &config, &out)?;
            report::write_attempts_csv(&output.attempts, &out.join(report::ATTEMPTS_CSV))?;
            let summary = report::summarize(&output.attempts)?;
            report::emit_report(&summary, &out)?;
            print_summary(&summary);
            println!(
                "{} attempts recorded under {}",
                output.attempts.len(),
                out.display()
            );
        }
        Command::Pass { image, original } => {
            let x_p = Image::load_png(&image)?;
            let x_o = Image::load_png(&original)?;
            let score = pass_score(&x_p, &x_o)?;
            println!("PASS {:.9} (aligned: {})", score.value, score.aligned);
        }
        Command::Report { attempts, out } => {
            let rows = report::load_attempts_csv(&attempts)?;
            let summary = report::summarize(&rows)?;
            report::emit_report(&summary, &out)?;
            print_summary(&summary);
            println!("reports written to {}", out.display());
        }
    }
    Ok(())
}

fn print_summary(summary: &harness::ExperimentReport) {
    for head in [Head::Softmax, Head::Openmax] {
        for kind in [TargetKind::Cav, TargetKind::Mav] {
            if let Some(rate) = summary.pooled_success_pct(head, kind) {
                println!("{} / {}: success {rate:.1}%", head.as_str(), kind.as_str());
            }
        }
    }
    for cmp in [&summary.cav_comparison, &summary.mav_comparison].into_iter().flatten() {
        println!(
            "paired t-test ({} targets, {} pairs): t = {:.4}, p = {:.6e}{}",
            cmp.kind.as_str(),
            cmp.pairs,
            cmp.test.t,
            cmp.test.p,
            if cmp.test.degenerate { " [degenerate]" } else { "" }
        );
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
