//! Batch runner behind the `ensemble-ctl` binary.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::{simulate, ControlSchedule, EnsembleState, OmegaGrid, PulseEvent};
use crate::bracket::{descent_csv, h1_descent_loop};
use crate::compare::{comparison_csv, strategy_comparison};
use crate::error::{Error, Result};
use crate::fourier::{even_extension_spectrum, n_norm};
use crate::halving::{cycle_csv, drive_to_pole, random_south_state, HalvingConfig};
use crate::linear::approx_reach;
use crate::linear::SampledControl;
use crate::reach::{default_window, fixed_point_solve, tangent_demo};
use crate::so3::Vec3;
use crate::verify::verify_suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PRECONDITION: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub n_max: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridConfig { omega_min: 0.0, omega_max: PI, nodes: crate::bloch::DEFAULT_NODES },
            n_max: crate::fourier::DEFAULT_N_MAX,
            tolerances: BTreeMap::new(),
            seed: 0,
            output: OutputConfig { directory: PathBuf::from("out"), format: OutputFormat::Csv },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.nodes < 2 {
            return Err(Error::InvalidGrid(format!("{} nodes", self.grid.nodes)));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::PreconditionViolated { quantity: format!("tolerance {k}"), value: *v });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<OmegaGrid> {
        OmegaGrid::uniform(self.grid.omega_min, self.grid.omega_max, self.grid.nodes)
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub started: String,
    pub finished: String,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
}

#[derive(Parser, Debug)]
#[command(name = "ensemble-ctl", about = "Control experiments on Bloch ensembles")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate an initial state through a schedule
    Simulate {
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Initial vector: north, south or x
        #[arg(long, default_value = "x")]
        init: String,
    },
    /// Halving cycles from a random state near the south pole
    Halve {
        #[arg(long, default_value_t = 10)]
        cycles: usize,
    },
    /// H¹ descent from a tilted state
    Descent {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 3)]
        deg: usize,
        #[arg(long, default_value_t = 100)]
        cycles: usize,
    },
    /// Approximate steering of the linearized system to Z_f = 0.1 e^{iω}
    Linctrl {
        #[arg(long = "T", default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 12)]
        deg: usize,
    },
    /// Mild solution for a constant control, or the cubic obstruction with --phi
    Reach {
        #[arg(long = "T", default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        phi: bool,
    },
    /// Explicit two-trip schedule against one descent step
    Compare {
        #[arg(long = "N", default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Run the invariant checks
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Halve { .. } => "halve",
            Command::Descent { .. } => "descent",
            Command::Linctrl { .. } => "linctrl",
            Command::Reach { .. } => "reach",
            Command::Compare { .. } => "compare",
            Command::Verify => "verify",
        }
    }
}

struct Output {
    metrics: BTreeMap<String, f64>,
    tables: Vec<(String, String)>,
    failed: bool,
}

impl Output {
    fn new() -> Self {
        Output { metrics: BTreeMap::new(), tables: Vec::new(), failed: false }
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    fn table(&mut self, stem: &str, csv: String) {
        self.tables.push((stem.into(), csv));
    }
}

/// CSV text to a JSON array of records; numeric fields become numbers.
pub fn csv_to_json(csv: &str) -> serde_json::Value {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let obj: serde_json::Map<String, serde_json::Value> = header
                .iter()
                .zip(l.split(','))
                .map(|(k, v)| {
                    let val = match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => serde_json::json!(v),
                    };
                    (k.to_string(), val)
                })
                .collect();
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::Value::Array(rows)
}

fn init_threads() {
    if let Some(n) = std::env::var("ENSEMBLE_CTL_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // A second call in the same process finds the pool already built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn pi_pulse_example() -> ControlSchedule {
    ControlSchedule { events: vec![PulseEvent::dirac(1.0, PI, 0.0)], horizon: 2.0 }
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, tol: Option<f64>) -> Result<Output> {
    let mut out = Output::new();
    match cmd {
        Command::Simulate { schedule, init } => {
            let sched = match schedule {
                Some(p) => ControlSchedule::read(p)?,
                None => pi_pulse_example(),
            };
            let v = match init.as_str() {
                "north" => Vec3::z(),
                "south" => -Vec3::z(),
                "x" => Vec3::x(),
                other => {
                    return Err(Error::InvalidState(format!("unknown initial vector {other:?}")));
                }
            };
            let start = EnsembleState::constant(cfg.grid()?, v)?;
            let end = simulate(&start, &sched)?;
            let mut csv = String::from("omega,mx,my,mz\n");
            for (w, m) in end.grid.nodes.iter().zip(&end.m) {
                csv.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}\n", w, m.x, m.y, m.z));
            }
            out.metric("max_norm_defect", end.max_norm_defect());
            out.metric("h1_seminorm", end.h1_seminorm());
            out.table("endpoint", csv);
        }
        Command::Halve { cycles } => {
            let grid = cfg.grid()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let start = random_south_state(&mut rng, &grid, 0.005, 0.02);
            let hcfg = HalvingConfig { n_max: cfg.n_max, ..HalvingConfig::default() };
            let n0 = n_norm(&even_extension_spectrum(&grid, &start.transverse(), cfg.n_max)?);
            let target = tol.unwrap_or_else(|| cfg.tolerance("halve", n0 * 2f64.powi(-10) * 1.05));
            let (end, reports) = drive_to_pole(&start, &hcfg, target, *cycles)?;
            out.metric("n_initial", n0);
            out.metric("n_final", n_norm(&even_extension_spectrum(&grid, &end.transverse(), cfg.n_max)?));
            out.metric("cycles", reports.len() as f64);
            out.metric("max_ratio", reports.iter().map(|r| r.ratio()).fold(0.0, f64::max));
            out.table("cycles", cycle_csv(&reports));
        }
        Command::Descent { eps, deg, cycles } => {
            let start = EnsembleState::from_fn(cfg.grid()?, |w| Vec3::new((eps * w).sin(), 0.0, (eps * w).cos()))?;
            // Default target: half the initial seminorm.
            let target = tol.unwrap_or_else(|| cfg.tolerance("descent", 0.5 * start.h1_seminorm()));
            let res = h1_descent_loop(&start, target, *cycles, *deg)?;
            out.metric("h1_initial", start.h1_seminorm());
            out.metric("h1_final", res.state.h1_seminorm());
            out.metric("pole_distance", res.pole_distance);
            out.metric("iterations", res.reports.len() as f64);
            out.metric("duration", res.schedule.horizon);
            out.table("descent", descent_csv(&res.reports));
            out.table("schedule", res.schedule.to_json());
        }
        Command::Linctrl { t, deg } => {
            let grid = cfg.grid()?;
            let zf: Vec<Complex64> = grid.nodes.iter().map(|&w| Complex64::from_polar(0.1, w)).collect();
            let eta = tol.unwrap_or_else(|| cfg.tolerance("linctrl", 0.02));
            let (w, rep) = approx_reach(&zf, &grid, *t, eta, *deg)?;
            out.metric("degree", rep.degree as f64);
            out.metric("eps", rep.eps);
            out.metric("sampled_error", rep.sampled_error);
            out.metric("closed_form_error", rep.closed_form_error);
            out.metric("cross_check", rep.cross_check);
            out.table("control", w.to_csv());
        }
        Command::Reach { t, phi } => {
            if *phi {
                let rep = tangent_demo(*t)?;
                out.metric("phi_mid", rep.phi_mid);
                out.metric("phi_mid_expected", rep.phi_mid_expected);
                out.metric("max_beyond_t", rep.max_beyond_t);
                out.table("phi", rep.to_csv());
            } else {
                let w = SampledControl::from_fn(0.0, *t, crate::reach::TIME_STEPS + 1, |_| Complex64::new(0.1, 0.0))?;
                let sol = fixed_point_solve(&w, *t, default_window(*t), tol.unwrap_or(1e-12), 200)?;
                let mut csv = String::from("omega,re_z,im_z\n");
                for (om, z) in sol.omegas.iter().zip(sol.final_values()) {
                    csv.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", om, z.re, z.im));
                }
                out.metric("iterations", sol.iterations as f64);
                out.metric("sup_norm", sol.sup_norm());
                out.metric("bound", t.sqrt() * sol.w_l2);
                out.table("mild", csv);
            }
        }
        Command::Compare { n, eps } => {
            let (a, b) = strategy_comparison(*n, *eps)?;
            out.metric("a_ratio", a.n_distance_after / a.n_distance_before);
            out.metric("a_trips", a.trip_count as f64);
            out.metric("a_model_time", a.model_time);
            out.metric("b_h1_ratio", b.h1_after / b.h1_before);
            out.metric("b_model_time", b.model_time);
            out.table("compare", comparison_csv(&[a, b]));
        }
        Command::Verify => {
            let summary = verify_suite(cfg);
            out.metric("checks", summary.checks.len() as f64);
            out.metric("failed", summary.failures().len() as f64);
            out.failed = !summary.passed();
            out.table("verify", summary.to_csv());
        }
    }
    Ok(out)
}

fn write_outputs(cmd: &str, cfg: &ExperimentConfig, out: &Output, started: String) -> Result<()> {
    let dir = &cfg.output.directory;
    std::fs::create_dir_all(dir)?;
    let mut artifacts = Vec::new();
    for (stem, body) in &out.tables {
        // Schedules are already JSON.
        let (name, text) = if body.starts_with('{') {
            (format!("{cmd}_{stem}.json"), body.clone())
        } else {
            match cfg.output.format {
                OutputFormat::Csv => (format!("{cmd}_{stem}.csv"), body.clone()),
                OutputFormat::Json => {
                    (format!("{cmd}_{stem}.json"), serde_json::to_string_pretty(&csv_to_json(body))? + "\n")
                }
            }
        };
        std::fs::write(dir.join(&name), text)?;
        artifacts.push(dir.join(&name).display().to_string());
    }
    let report = ExperimentReport {
        command: cmd.into(),
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        metrics: out.metrics.iter().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k.clone(), *v)).collect(),
        artifacts,
    };
    std::fs::write(dir.join(format!("{cmd}_report.json")), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &c.out {
        cfg.output.directory = d.clone();
    }
    if let Some(f) = c.format {
        cfg.output.format = f;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.tol {
        if !(t > 0.0) {
            return Err(Error::PreconditionViolated { quantity: "tol".into(), value: t });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_precondition() {
        EXIT_PRECONDITION
    } else {
        EXIT_INTERNAL
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run_experiment<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_threads();
    let started = chrono::Utc::now().to_rfc3339();
    let cfg = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let name = cli.command.name();
    let result = dispatch(&cli.command, &cfg, cli.common.tol).and_then(|out| {
        write_outputs(name, &cfg, &out, started)?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            for (k, v) in &out.metrics {
                println!("{k} = {v}");
            }
            if out.failed {
                EXIT_INTERNAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Reads a JSON schedule, or writes one when `schedule` is given.
pub fn schedule_io(path: &Path, schedule: Option<&ControlSchedule>) -> Result<ControlSchedule> {
    match schedule {
        Some(s) => {
            s.write(path)?;
            Ok(s.clone())
        }
        None => ControlSchedule::read(path),
    }
}
