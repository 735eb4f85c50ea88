//! Experiment plumbing shared by the command-line runner and the tests:
//! configurations and presets, seeded kernel initialization, the plain-text
//! kernel format, and the CSV trace format.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::opmatrix::DENSE_CAP;
use crate::regularizer::{DescentConfig, TraceRow};
use crate::rng::SplitMix64;
use crate::tensor::Kernel4D;

pub const CSV_HEADER: &str = "iter,penalty,sigma_max,sigma_min,kappa,gap_flag,grad_norm";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Descend,
    Eval,
    Check,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descend" => Ok(Mode::Descend),
            "eval" => Ok(Mode::Eval),
            "check" => Ok(Mode::Check),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode '{other}' (expected descend, eval or check)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitMode {
    Uniform,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub k: usize,
    pub g: usize,
    pub h: usize,
    pub n: usize,
    pub alpha: f64,
    pub lr: f64,
    pub iters: usize,
    pub power_iters: usize,
    pub seed: u64,
    pub init: InitMode,
    pub out: PathBuf,
    pub mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 3,
            g: 3,
            h: 1,
            n: 15,
            alpha: 1.0,
            lr: 0.01,
            iters: 50,
            power_iters: 2,
            seed: 1,
            init: InitMode::Uniform,
            out: PathBuf::from("trace.csv"),
            mode: Mode::Descend,
        }
    }
}

/// Named configurations: `example1{a,b,c,d}` are the four kernel shapes at
/// `alpha = 1`, `example2{a,b,c,d}` the `3x3x3x1` kernel at
/// `alpha = 0.1, 1, 5, 10`.
pub const PRESETS: &[(&str, usize, usize, f64)] = &[
    ("example1a", 3, 1, 1.0),
    ("example1b", 1, 3, 1.0),
    ("example1c", 3, 6, 1.0),
    ("example1d", 6, 3, 1.0),
    ("example2a", 3, 1, 0.1),
    ("example2b", 3, 1, 1.0),
    ("example2c", 3, 1, 5.0),
    ("example2d", 3, 1, 10.0),
];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let &(_, g, h, alpha) = PRESETS
            .iter()
            .find(|(preset, ..)| *preset == name)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                Error::InvalidConfig(format!(
                    "unknown preset '{name}' (available: {})",
                    names.join(", ")
                ))
            })?;
        Ok(Self {
            g,
            h,
            alpha,
            out: PathBuf::from(format!("{name}.csv")),
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.g == 0 || self.h == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!(
                "dimensions must be positive, got k={} g={} h={} N={}",
                self.k, self.g, self.h, self.n
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidConfig(
                "power-iters must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Whether the dense oracle fits under the materialization cap.
    pub fn oracle_fits(&self) -> bool {
        let nn = self.n * self.n;
        (self.h * nn)
            .checked_mul(self.g * nn)
            .is_some_and(|total| total <= DENSE_CAP)
    }

    pub fn descent_config(&self) -> DescentConfig {
        DescentConfig {
            alpha: self.alpha,
            lr: self.lr,
            iters: self.iters,
            power_iters: self.power_iters,
            record_oracle: self.oracle_fits(),
            ..DescentConfig::default()
        }
    }

    pub fn initial_kernel(&self) -> Result<Kernel4D> {
        let kernel = match &self.init {
            InitMode::Uniform => init_uniform(self.k, self.g, self.h, self.seed)?,
            InitMode::File(path) => read_kernel(path)?,
        };
        if (kernel.k(), kernel.in_channels(), kernel.out_channels()) != (self.k, self.g, self.h) {
            return Err(Error::InvalidConfig(format!(
                "kernel file has shape {}x{}x{}x{}, configuration expects {}x{}x{}x{}",
                kernel.k(),
                kernel.k(),
                kernel.in_channels(),
                kernel.out_channels(),
                self.k,
                self.k,
                self.g,
                self.h
            )));
        }
        Ok(kernel)
    }

    /// The final kernel is written next to the trace.
    pub fn kernel_out_path(&self) -> PathBuf {
        self.out.with_extension("kernel.txt")
    }
}

/// Kernel with entries uniform on `[0, 1)`, drawn from SplitMix64 in storage
/// order (`p` fastest, then `q`, `z`, `y`).
pub fn init_uniform(k: usize, g: usize, h: usize, seed: u64) -> Result<Kernel4D> {
    let mut rng = SplitMix64::new(seed);
    Kernel4D::from_fn(k, g, h, |_, _, _, _| rng.next_f64())
}

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros removed,
/// exponent notation outside `1e-4 <= |x| < 1e17`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn format_kernel(kernel: &Kernel4D) -> String {
    let mut out = format!(
        "{} {} {}\n",
        kernel.k(),
        kernel.in_channels(),
        kernel.out_channels()
    );
    for v in kernel.data() {
        out.push_str(&fmt_g17(*v));
        out.push('\n');
    }
    out
}

pub fn parse_kernel(text: &str) -> Result<Kernel4D> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing header 'k g h'".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    msg: format!("header entries must be positive integers, found '{tok}'"),
                })
        })
        .collect::<Result<_>>()?;
    let [k, g, h] = dims[..] else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be 'k g h', found {} fields", dims.len()),
        });
    };
    let mut values = Vec::with_capacity(k * k * g * h);
    for (idx, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid number '{tok}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("non-finite value '{tok}'"),
                });
            }
            values.push(v);
        }
    }
    let expected = k * k * g * h;
    if values.len() != expected {
        return Err(Error::ValueCount {
            expected,
            found: values.len(),
        });
    }
    Kernel4D::new(k, g, h, values)
}

pub fn read_kernel(path: &Path) -> Result<Kernel4D> {
    parse_kernel(&fs::read_to_string(path)?)
}

pub fn write_kernel(path: &Path, kernel: &Kernel4D) -> Result<()> {
    fs::write(path, format_kernel(kernel))?;
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}

/// The `penalty` column is the tracked (power-iteration) estimate the descent
/// actually steers by; the singular-value columns come from the oracle.
pub fn format_trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.iter,
            fmt_g17(row.ritz_penalty),
            opt_field(row.sigma_max_m),
            opt_field(row.sigma_min_m),
            opt_field(row.kappa),
            u8::from(row.gap_flag),
            fmt_g17(row.grad_norm)
        );
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(format_trace_csv(trace).as_bytes())?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub penalty: f64,
    pub sigma_max: Option<f64>,
    pub sigma_min: Option<f64>,
    pub kappa: Option<f64>,
    pub gap_flag: bool,
    pub grad_norm: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {other:?}"),
            })
        }
    }
    lines
        .enumerate()
        .map(|(idx, line)| {
            let line_no = idx + 2;
            let bad = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", fields.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("invalid number '{s}'")))
            };
            let opt = |s: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            Ok(TraceRecord {
                iter: fields[0]
                    .parse()
                    .map_err(|_| bad(format!("invalid iteration '{}'", fields[0])))?,
                penalty: num(fields[1])?,
                sigma_max: opt(fields[2])?,
                sigma_min: opt(fields[3])?,
                kappa: opt(fields[4])?,
                gap_flag: match fields[5] {
                    "0" => false,
                    "1" => true,
                    s => return Err(bad(format!("invalid gap flag '{s}'"))),
                },
                grad_norm: num(fields[6])?,
            })
        })
        .collect()
}
