use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pulsekit::sequences::OrderOptions;
use pulsekit::shapes::DEFAULT_QUAD_POINTS;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "pulsekit", version, about = "Shaped pulses, decoupling sequences and composite pulses")]
pub struct Cli {
    /// Worker threads for scans, tables and restarts (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Print (upsilon, alpha, zeta) for pulse shapes.
    ShapeParams(ShapeParamsArgs),
    /// Decoupling order of sequences on random spin chains.
    OrderTable(OrderTableArgs),
    /// Infidelity scans written as CSV.
    #[command(subcommand)]
    Scan(ScanCommand),
    /// Search for a self-refocusing pulse shape.
    Synthesize(SynthesizeArgs),
    /// Re-run the manifest embedded in an output file and compare hashes.
    Replay(ReplayArgs),
}

impl Command {
    /// Input files whose contents determine the output.
    pub fn input_files(&self) -> Vec<&Path> {
        match self {
            Command::ShapeParams(a) => a.shape.iter().map(PathBuf::as_path).collect(),
            Command::OrderTable(a) => a.shape.iter().map(PathBuf::as_path).collect(),
            Command::Synthesize(a) => a.problem.iter().map(PathBuf::as_path).collect(),
            Command::Scan(_) | Command::Replay(_) => Vec::new(),
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            Command::ShapeParams(a) => a.out.as_deref(),
            Command::OrderTable(a) => a.out.as_deref(),
            Command::Scan(ScanCommand::AmpFreq(a)) => a.out.as_deref(),
            Command::Scan(ScanCommand::Tau(a)) => a.out.as_deref(),
            Command::Scan(ScanCommand::ChainLength(a)) => a.out.as_deref(),
            Command::Synthesize(a) => a.out.as_deref(),
            Command::Replay(a) => a.out.as_deref(),
        }
    }

    pub fn set_out(&mut self, path: PathBuf) {
        let slot = match self {
            Command::ShapeParams(a) => &mut a.out,
            Command::OrderTable(a) => &mut a.out,
            Command::Scan(ScanCommand::AmpFreq(a)) => &mut a.out,
            Command::Scan(ScanCommand::Tau(a)) => &mut a.out,
            Command::Scan(ScanCommand::ChainLength(a)) => &mut a.out,
            Command::Synthesize(a) => &mut a.out,
            Command::Replay(a) => &mut a.out,
        };
        *slot = Some(path);
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ShapeParamsArgs {
    /// Shape file(s) in JSON form.
    #[arg(long)]
    pub shape: Vec<PathBuf>,
    /// Shipped shape label(s), e.g. "Q1(180)"; every shipped shape if nothing is selected.
    #[arg(long)]
    pub label: Vec<String>,
    /// Hard pulse with this rotation angle in degrees.
    #[arg(long)]
    pub hard: Vec<f64>,
    /// Gaussian of this relative width, at each of --angles.
    #[arg(long)]
    pub gaussian: Vec<f64>,
    /// Rotation angles in degrees for Gaussian rows.
    #[arg(long, value_delimiter = ',', default_values_t = [90.0, 180.0, 360.0])]
    pub angles: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_QUAD_POINTS)]
    pub quad_points: usize,
    /// JSON output file with embedded manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct OrderTableArgs {
    #[arg(long, value_delimiter = ',', default_values_t = ["ising", "ising+dz", "xxz", "xxz+dz", "xxz+vec"].map(String::from))]
    pub model: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = ["seq4", "seq8", "seq16", "seq32"].map(String::from))]
    pub seq: Vec<String>,
    /// Pulse families: S1, S2, Q1, Q2, G<width> or hard.
    #[arg(long, value_delimiter = ',', default_values_t = ["Q1", "S1", "G0.1"].map(String::from))]
    pub family: Vec<String>,
    /// Shape file(s) forming one extra family; must include a 180 degree shape.
    #[arg(long)]
    pub shape: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = OrderOptions::default().k_max)]
    pub kmax: usize,
    #[arg(long, default_value_t = OrderOptions::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = OrderOptions::default().rel_tol)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = OrderOptions::default().conv_tol)]
    pub conv_tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanCommand {
    /// Composite pulse infidelity over amplitude error and detuning.
    AmpFreq(AmpFreqArgs),
    /// Infidelity at fixed total time versus slot width tau = 2^-j.
    Tau(TauArgs),
    /// Infidelity at fixed total time versus chain length.
    ChainLength(ChainLengthArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct Evolution {
    /// Time steps per slot.
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    /// Disable step-doubling extrapolation.
    #[arg(long)]
    pub no_richardson: bool,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AmpFreqArgs {
    /// Composite pulse: scrofulous, bb1_W, bb1_CLJ, bb1_Wp or bb1_CLJp.
    #[arg(long, default_value = "bb1_Wp")]
    pub seq: String,
    #[arg(long, default_value = "Q1")]
    pub family: String,
    /// Amplitude error grid.
    #[arg(long, default_value = "-0.2:0.2:41", allow_hyphen_values = true)]
    pub grid: Grid,
    /// Detuning grid in units of the slot width.
    #[arg(long, default_value = "-0.2:0.2:41", allow_hyphen_values = true)]
    pub dtau_grid: Grid,
    #[command(flatten)]
    pub evolution: Evolution,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TauArgs {
    #[arg(long, default_value = "seq8")]
    pub seq: String,
    #[arg(long, default_value = "Q1")]
    pub family: String,
    #[arg(long, default_value = "ising")]
    pub model: String,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Exponent range jmin:jmax for tau = 2^-j.
    #[arg(long, default_value = "0:11")]
    pub exponents: Range,
    /// Total evolution time; 128 cycles of the longest slot width if omitted.
    #[arg(long)]
    pub t: Option<f64>,
    #[command(flatten)]
    pub evolution: Evolution,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ChainLengthArgs {
    #[arg(long, default_value = "seq8")]
    pub seq: String,
    #[arg(long, default_value = "Q1")]
    pub family: String,
    #[arg(long, default_value = "xxz+dz")]
    pub model: String,
    /// Chain lengths nmin:nmax.
    #[arg(long, default_value = "2:6")]
    pub n: Range,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0 / 32.0)]
    pub tau: f64,
    /// Total evolution time; 128 slot widths if omitted.
    #[arg(long)]
    pub t: Option<f64>,
    #[command(flatten)]
    pub evolution: Evolution,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthesizeArgs {
    /// JSON problem file; replaces the problem flags below.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Rotation angle in degrees.
    #[arg(long, default_value_t = 180.0)]
    pub phi0: f64,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub l: usize,
    /// Number of harmonics; one above the smallest converging count if omitted.
    #[arg(long)]
    pub m: Option<usize>,
    /// Largest harmonic count tried when searching for the smallest.
    #[arg(long, default_value_t = 10)]
    pub m_max: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent restarts with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub restarts: u64,
    /// Require d upsilon / d f = 0.
    #[arg(long)]
    pub protect_upsilon: bool,
    /// Require d alpha / d f = 0.
    #[arg(long)]
    pub protect_alpha: bool,
    #[arg(long, default_value_t = pulsekit::optimizer::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub budget: usize,
    #[arg(long, default_value_t = pulsekit::optimizer::DEFAULT_STEPS)]
    pub steps: usize,
    /// Shape file output with certification and manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A previous output file.
    pub file: PathBuf,
    /// Where to write the regenerated output; a sibling ".replay" file if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `min:max:steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected min:max:steps, got '{s}'"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}' in '{s}'"));
        let steps = n.trim().parse().map_err(|_| format!("bad step count '{n}' in '{s}'"))?;
        Ok(Grid { min: num(a)?, max: num(b)?, steps })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.steps)
    }
}

/// Inclusive integer range `lo:hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: usize,
    pub hi: usize,
}

impl Range {
    pub fn values(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
        let int = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad integer '{t}' in '{s}'"));
        let r = Range { lo: int(a)?, hi: int(b)? };
        if r.hi < r.lo {
            return Err(format!("empty range '{s}'"));
        }
        Ok(r)
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}
