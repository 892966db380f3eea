use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sigdetect::config::Config;
use sigdetect::pipeline;
use sigdetect::records_summary;

#[derive(Parser, Debug)]
#[command(name = "sigdetect", version, about = "Detect adversarial examples from SHAP signatures of the penultimate layer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the MNIST classifier.
    TrainClassifier(Common),
    /// Sample normals and generate adversarial examples into the repository.
    GenAdv(Common),
    /// Compute signatures for every repository record.
    Sign(Common),
    /// Train the detector on the train split.
    TrainDetector(Common),
    /// Evaluate the trained detector on the test split.
    EvalRq1(Common),
    /// Leave-one-attack-out evaluation.
    EvalRq2(Common),
    /// Write all signatures as CSV.
    Export {
        #[command(flatten)]
        common: Common,
        /// Output file.
        #[arg(long, default_value = "signatures.csv")]
        out: PathBuf,
    },
}

fn config(c: &Common) -> sigdetect::Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cmd: Command) -> sigdetect::Result<()> {
    match cmd {
        Command::TrainClassifier(c) => {
            let cfg = config(&c)?;
            let data = pipeline::load_data(&cfg)?;
            let m = pipeline::train_classifier_stage(&cfg, &data)?;
            println!(
                "classifier: train accuracy {:.4}, test accuracy {:.4}, saved to {}",
                m.metrics.train_accuracy,
                m.metrics.test_accuracy.unwrap_or(f64::NAN),
                cfg.classifier_path().display()
            );
        }
        Command::GenAdv(c) => {
            let cfg = config(&c)?;
            let data = pipeline::load_data(&cfg)?;
            let model = pipeline::load_classifier(&cfg)?;
            let repo = pipeline::generate_stage(&cfg, &model, &data, |split, done, total| {
                if done % 100 == 0 || done == total {
                    eprintln!("{split}: {done}/{total} iterations");
                }
            })?;
            println!("{}", records_summary(repo.manifest()));
        }
        Command::Sign(c) => {
            let cfg = config(&c)?;
            let data = pipeline::load_data(&cfg)?;
            let model = pipeline::load_classifier(&cfg)?;
            let mut repo = pipeline::open_repository(&cfg)?;
            pipeline::sign_stage(&cfg, &model, &data, &mut repo)?;
            println!("signed {} records", repo.manifest().record_count);
        }
        Command::TrainDetector(c) => {
            let cfg = config(&c)?;
            let repo = pipeline::open_repository(&cfg)?;
            let m = pipeline::train_detector_stage(&cfg, &repo)?;
            let best = &m.history[m.best_epoch];
            println!(
                "detector: {} epochs, best epoch {} (validation loss {:.5}), saved to {}",
                m.history.len(),
                m.best_epoch,
                best.validation,
                cfg.detector_path().display()
            );
        }
        Command::EvalRq1(c) => {
            let cfg = config(&c)?;
            let repo = pipeline::open_repository(&cfg)?;
            let det = sigdetect::model_io::load_detector(&cfg.detector_path())?;
            let (r, paths) = pipeline::eval_rq1_stage(&cfg, &repo, &det)?;
            println!(
                "rq1: AUC-ROC {:.4}, AUC-PR {:.4}, TPR@FPR{} {:.4}",
                r.auc_roc, r.auc_pr, r.fpr_cap, r.tpr_at_fpr
            );
            for (g, t) in &r.per_group {
                println!("  {g:<12} TPR {:.4} ({} examples)", t.tpr, t.adversarial);
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::EvalRq2(c) => {
            let cfg = config(&c)?;
            let repo = pipeline::open_repository(&cfg)?;
            let (r, paths) = pipeline::eval_rq2_stage(&cfg, &repo)?;
            for h in &r.holdouts {
                match (&h.report, &h.warning) {
                    (Some(rep), _) => println!(
                        "  holdout {:<12} AUC-ROC {:.4} AUC-PR {:.4} TPR {:.4}",
                        h.group, rep.auc_roc, rep.auc_pr, rep.tpr_at_fpr
                    ),
                    (None, Some(w)) => println!("  holdout {:<12} {w}", h.group),
                    (None, None) => {}
                }
            }
            println!("rq2: mean AUC-ROC {:.4}, mean AUC-PR {:.4}, min AUC-ROC {:.4}", r.mean_auc_roc, r.mean_auc_pr, r.min_auc_roc);
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Export { common, out } => {
            let cfg = config(&common)?;
            let repo = pipeline::open_repository(&cfg)?;
            let n = pipeline::export_stage(&repo, &out)?;
            println!("wrote {n} rows to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
