//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{evaluate, threshold_range};
use crate::geometry::BBox;
use crate::grad_check::{sweep_check_with, SweepConfig};
use crate::io::{annotations_to_string, load_annotations, load_detections, DatasetBundle};
use crate::losses::{curve_samples, write_curve_csv, LossKind};
use crate::noise::{degrade_dataset, NoiseConfig};
use crate::regression::{compare_alphas, write_trajectories_csv, DEFAULT_LR, DEFAULT_STEPS};

/// Alpha values accepted on the command line.
pub const CLI_ALPHA_RANGE: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Parser)]
#[command(
    name = "alpha-iou",
    version,
    about = "Power IoU losses, gradient checks, box noise and detection evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Loss and |dL/dIoU| sampled over IoU in [0, 1], as CSV.
    LossCurve {
        #[arg(long, default_value = "iou")]
        kind: LossKind,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences; JSON report.
    CheckGrad {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = crate::grad_check::DEFAULT_STEP)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-descent trajectories of one box toward a target, as CSV.
    Regress {
        #[arg(long, default_value = "iou")]
        kind: LossKind,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        /// Power on the penalty term; defaults to each alpha.
        #[arg(long)]
        alpha2: Option<f64>,
        /// Start box as cx,cy,w,h (normalized).
        #[arg(long, value_parser = parse_box_params)]
        init: [f64; 4],
        /// Target box as cx,cy,w,h (normalized).
        #[arg(long, value_parser = parse_box_params)]
        gt: [f64; 4],
        #[arg(long, default_value_t = DEFAULT_LR)]
        lr: f64,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a noisy copy of an annotation file.
    Perturb {
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AP per IoU threshold and mAP aggregates, as JSON.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        dets: PathBuf,
        /// start:stop:step
        #[arg(long, default_value = "0.5:0.95:0.05")]
        thresholds: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the matched-IoU histogram as CSV.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

/// Parses `start:stop:step` (or a single value) into a threshold list.
pub fn parse_thresholds(spec: &str) -> Result<Vec<f64>> {
    let bad = || {
        Error::param(
            "thresholds",
            format!("expected start:stop:step, got `{spec}`"),
        )
    };
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [t] => Ok(vec![t]),
        [start, stop, step] if step > 0.0 && stop >= start => {
            Ok(threshold_range(start, stop, step))
        }
        _ => Err(bad()),
    }
}

fn check_cli_alphas(alphas: &[f64]) -> Result<()> {
    let (lo, hi) = CLI_ALPHA_RANGE;
    match alphas.iter().find(|a| !(lo..=hi).contains(*a)) {
        Some(a) => Err(Error::param(
            "alphas",
            format!("{a} is outside [{lo}, {hi}]"),
        )),
        None => Ok(()),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn parse_box_params(s: &str) -> std::result::Result<[f64; 4], String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected cx,cy,w,h, got {} values", v.len()))
}

fn to_box(v: &[f64; 4]) -> Result<BBox> {
    BBox::new(v[0], v[1], v[2], v[3])
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::LossCurve {
            kind,
            alphas,
            points,
            out,
        } => {
            check_cli_alphas(&alphas)?;
            let rows = curve_samples(kind, &alphas, points)?;
            let mut w = open_out(out.as_deref())?;
            write_curve_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::CheckGrad { n, seed, step, out } => {
            let report = sweep_check_with(&SweepConfig {
                step,
                ..SweepConfig::new(n, seed)
            })?;
            let mut w = open_out(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Regress {
            kind,
            alphas,
            alpha2,
            init,
            gt,
            lr,
            steps,
            out,
        } => {
            check_cli_alphas(&alphas)?;
            if let Some(a2) = alpha2 {
                check_cli_alphas(&[a2])?;
            }
            let runs = compare_alphas(
                kind,
                &alphas,
                alpha2,
                &to_box(&init)?,
                &to_box(&gt)?,
                lr,
                steps,
            )?;
            for r in &runs {
                log::info!(
                    "alpha {}: converged_at {:?}, final iou {:.6}",
                    r.spec.alpha1(),
                    r.converged_at,
                    r.trajectory.last().map_or(0.0, |p| p.iou)
                );
            }
            let mut w = open_out(out.as_deref())?;
            write_trajectories_csv(&runs, &mut w)?;
            w.flush()?;
        }
        Command::Perturb {
            eta,
            seed,
            input,
            out,
        } => {
            let cfg = NoiseConfig::new(eta, seed)?;
            let bundle = load_annotations(&input)?.value;
            let (gts, mean_iou) = degrade_dataset(&bundle.gts, &cfg)?;
            eprintln!("mean IoU between noisy and clean boxes: {mean_iou:.6}");
            let noisy = DatasetBundle { gts, ..bundle };
            let mut w = open_out(out.as_deref())?;
            writeln!(w, "{}", annotations_to_string(&noisy)?)?;
            w.flush()?;
        }
        Command::Eval {
            gt,
            dets,
            thresholds,
            out,
            histogram,
        } => {
            let thresholds = parse_thresholds(&thresholds)?;
            let bundle = load_annotations(&gt)?.value;
            let bundle = load_detections(&dets, bundle)?.value;
            let report = evaluate(
                bundle.dets.as_deref().unwrap_or(&[]),
                &bundle.gts,
                &thresholds,
            )?;
            if let Some(path) = histogram {
                let mut hw = BufWriter::new(File::create(path)?);
                report.write_histogram_csv(&mut hw)?;
                hw.flush()?;
            }
            let mut w = open_out(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit status: 0 on success, 1 on a runtime error and
/// 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
