use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use refphase::{Method, Refinement, Window};

#[derive(Parser, Debug)]
#[command(name = "refphase", version, about = "Reference-phase ground-state energy estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Caps the worker threads used for grid evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Ramsey sweep, spectrum, peaks and energy report.
    Sweep(SweepArgs),
    /// Proposed versus conventional estimates at equal total runtime.
    Compare(CompareArgs),
    /// Pipeline in every listed sector and the global minimum.
    Scan(ScanArgs),
    /// Exact spectrum and reference gaps.
    Oracle(OracleArgs),
    /// GHZ-based initial-state preparation diagnostics.
    PrepGhz(GhzArgs),
    /// Re-runs the configuration recorded in a run_meta.json.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IoArgs {
    /// Model file; the shipped four-qubit model when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PlanArgs {
    /// ASP duration.
    #[arg(long = "T", default_value_t = 5.0)]
    pub asp_time: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 70.0)]
    pub tau_max: f64,
    /// Number of tau grid points.
    #[arg(long = "L", default_value_t = 1000)]
    pub len: usize,
    /// Sector of the ground branch; the driver's ground sector when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub sector: Option<f64>,
    /// Reference sector override.
    #[arg(long, allow_negative_numbers = true, requires = "ref_level")]
    pub ref_sector: Option<f64>,
    /// Problem level inside the reference sector override.
    #[arg(long, requires = "ref_sector")]
    pub ref_level: Option<usize>,
    /// Shots per grid point; exact probabilities when omitted.
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative phase injected into the initial superposition.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phase: f64,
    #[arg(long, default_value_t = 200)]
    pub steps_per_unit: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Cf4)]
    pub method: MethodArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisArgs {
    /// Upper end of the frequency grid; derived from the model when omitted.
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub oversample: usize,
    #[arg(long, value_enum, default_value_t = WindowArg::None)]
    pub window: WindowArg,
    #[arg(long, value_enum, default_value_t = RefineArg::Lsq)]
    pub refine: RefineArg,
    /// Peak threshold relative to the largest spectral magnitude.
    #[arg(long, default_value_t = 0.002)]
    pub threshold: f64,
    /// Keep the DC component.
    #[arg(long)]
    pub no_mean_subtract: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Total runtimes 2T + tau_max.
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,120,160,200,240")]
    pub runtimes: Vec<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Sectors to scan; all sectors when omitted.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sectors: Vec<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GhzArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// Register (`G`) and ancilla (`+`, `-`) layout.
    #[arg(long, default_value = "GG--")]
    pub pattern: String,
    #[arg(long, value_delimiter = ',', default_value = "50,50,50")]
    pub durations: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub b1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b3: f64,
    #[arg(long, default_value_t = 0.05)]
    pub max_leakage: f64,
    #[arg(long, default_value_t = 200)]
    pub steps_per_unit: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub meta: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowArg {
    None,
    Hann,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineArg {
    Quadratic,
    Lsq,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Midpoint,
    Cf4,
    Rk4,
}

impl From<WindowArg> for Window {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::None => Window::None,
            WindowArg::Hann => Window::Hann,
        }
    }
}

impl From<RefineArg> for Refinement {
    fn from(r: RefineArg) -> Self {
        match r {
            RefineArg::Quadratic => Refinement::Quadratic,
            RefineArg::Lsq => Refinement::Lsq,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Midpoint => Method::Midpoint,
            MethodArg::Cf4 => Method::CommutatorFree4,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

impl Command {
    pub fn io(&self) -> Option<&IoArgs> {
        match self {
            Command::Sweep(a) => Some(&a.io),
            Command::Compare(a) => Some(&a.io),
            Command::Scan(a) => Some(&a.io),
            Command::Oracle(a) => Some(&a.io),
            Command::PrepGhz(a) => Some(&a.io),
            Command::Replay(_) => None,
        }
    }

    pub fn io_mut(&mut self) -> Option<&mut IoArgs> {
        match self {
            Command::Sweep(a) => Some(&mut a.io),
            Command::Compare(a) => Some(&mut a.io),
            Command::Scan(a) => Some(&mut a.io),
            Command::Oracle(a) => Some(&mut a.io),
            Command::PrepGhz(a) => Some(&mut a.io),
            Command::Replay(_) => None,
        }
    }
}
