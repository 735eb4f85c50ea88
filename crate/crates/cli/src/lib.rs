//! Command-line runner: flag parsing, preset expansion and the three run
//! modes (`descend`, `eval`, `check`).

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use convreg::checks::run_invariant_suite;
use convreg::experiment::{
    fmt_g17, read_kernel, write_kernel, write_trace_csv, ExperimentConfig, InitMode, Mode,
};
use convreg::spectra::spectrum_summary;
use convreg::{descend, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Uniform,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Descend,
    Eval,
    Check,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Descend => Mode::Descend,
            ModeArg::Eval => Mode::Eval,
            ModeArg::Check => Mode::Check,
        }
    }
}

/// Spectral-norm regularization of multi-channel convolution kernels.
///
/// A preset fills in every field first; explicit flags then override it.
#[derive(Debug, Parser)]
#[command(name = "convreg", version)]
pub struct Cli {
    /// Filter size (k x k taps).
    #[arg(long)]
    pub k: Option<usize>,
    /// Input channels.
    #[arg(long)]
    pub g: Option<usize>,
    /// Output channels.
    #[arg(long)]
    pub h: Option<usize>,
    /// Spatial size of the (square) input.
    #[arg(long = "N", id = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Power steps per descent iteration.
    #[arg(long = "power-iters")]
    pub power_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Kernel to start from (implies `--init file`).
    #[arg(long = "kernel-file")]
    pub kernel_file: Option<PathBuf>,
    /// Trace CSV; the final kernel is written beside it as `<stem>.kernel.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// example1a..example1d, example2a..example2d.
    #[arg(long)]
    pub preset: Option<String>,
}

impl Cli {
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.preset {
            Some(name) => ExperimentConfig::preset(name)?,
            None => ExperimentConfig::default(),
        };

        match (self.init, &self.kernel_file) {
            (Some(InitArg::File), None) => {
                return Err(Error::InvalidConfig(
                    "--init file requires --kernel-file".into(),
                ))
            }
            (Some(InitArg::Uniform), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "--kernel-file conflicts with --init uniform".into(),
                ))
            }
            (_, Some(path)) => {
                // The file's shape is the default; explicit dims must agree.
                let kernel = read_kernel(path)?;
                config.k = kernel.k();
                config.g = kernel.in_channels();
                config.h = kernel.out_channels();
                config.init = InitMode::File(path.clone());
            }
            _ => {}
        }

        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.g {
            config.g = v;
        }
        if let Some(v) = self.h {
            config.h = v;
        }
        if let Some(v) = self.n {
            config.n = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.lr {
            config.lr = v;
        }
        if let Some(v) = self.iters {
            config.iters = v;
        }
        if let Some(v) = self.power_iters {
            config.power_iters = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.out {
            config.out = v.clone();
        }
        if let Some(v) = self.mode {
            config.mode = v.into();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

pub fn run<W: Write>(config: &ExperimentConfig, out: &mut W) -> Result<Outcome> {
    config.validate()?;
    let kernel = config.initial_kernel()?;
    match config.mode {
        Mode::Descend => {
            let result = descend(&kernel, config.n, &config.descent_config())?;
            write_trace_csv(&config.out, &result.trace)?;
            let kernel_path = config.kernel_out_path();
            write_kernel(&kernel_path, &result.kernel)?;
            writeln!(
                out,
                "wrote {} ({} rows) and {}",
                config.out.display(),
                result.trace.len(),
                kernel_path.display()
            )?;
            Ok(Outcome::Success)
        }
        Mode::Eval => {
            if !config.oracle_fits() {
                return Err(Error::InvalidConfig(format!(
                    "eval needs the dense spectrum; N={} with g={} h={} exceeds the size cap",
                    config.n, config.g, config.h
                )));
            }
            let s = spectrum_summary(&kernel, config.n, config.alpha)?;
            writeln!(
                out,
                "sigma_max={} sigma_min={} kappa={} penalty={}",
                fmt_g17(s.sigma_max_m),
                fmt_g17(s.sigma_min_m),
                fmt_g17(s.kappa),
                fmt_g17(s.penalty)
            )?;
            Ok(Outcome::Success)
        }
        Mode::Check => {
            let outcomes = run_invariant_suite(
                config.k,
                config.g,
                config.h,
                config.n,
                config.alpha,
                config.seed,
            )?;
            let mut all = true;
            for o in &outcomes {
                all &= o.passed;
                let tag = if o.passed { "ok" } else { "FAIL" };
                writeln!(out, "{tag:<4} {:<12} {}", o.name, o.detail)?;
            }
            Ok(if all {
                Outcome::Success
            } else {
                Outcome::ChecksFailed
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("convreg").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_without_flags() {
        let config = parse(&[]).to_config().unwrap();
        assert_eq!(config, ExperimentConfig::default());
    }

    #[test]
    fn flags_override_preset() {
        let config = parse(&["--preset", "example2d", "--iters", "7", "--N", "9"])
            .to_config()
            .unwrap();
        assert_eq!((config.g, config.h, config.alpha), (3, 1, 10.0));
        assert_eq!((config.iters, config.n), (7, 9));
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        let err = parse(&["--preset", "example9"]).to_config().unwrap_err();
        assert!(err.to_string().contains("unknown preset"));
    }

    #[test]
    fn file_init_needs_a_path() {
        assert!(parse(&["--init", "file"]).to_config().is_err());
    }

    #[test]
    fn nonpositive_lr_rejected() {
        assert!(parse(&["--lr", "0"]).to_config().is_err());
    }

    #[test]
    fn bad_mode_rejected_by_parser() {
        assert!(Cli::try_parse_from(["convreg", "--mode", "train"]).is_err());
    }
}
