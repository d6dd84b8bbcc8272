use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liectl_core::control::{ControlFile, PwcControl};
use liectl_core::fixed_point::{x_of_general, x_of_periodic};
use liectl_core::flow::{automorphism_flow, identity_solution_at};
use liectl_core::reach::PointCloud;
use liectl_core::scenario::{bundled, Scenario, ScenarioFile, BUNDLED};
use liectl_core::verify::{
    control_set_summary, decompose_report, estimate_control_set, verify, Level,
};
use liectl_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "liectl",
    version,
    about = "Linear control systems on Lie groups: splits, control sets, bounded orbits"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Overrides of the scenario's numeric defaults.
#[derive(Args)]
struct Overrides {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integration step `h`.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Reachable-set horizon `T`; also the default simulation time.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Sampled solutions per reachable cloud.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Newton tolerance for `x(u)`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Directory for output files; stdout otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the names of the bundled scenarios.
    Scenarios,
    /// Dynamical split of the drift: bases, eigenvalues, closure residuals, flags.
    Decompose { scenario: String },
    /// Trajectory of one control from an initial point, as CSV.
    Simulate {
        scenario: String,
        /// JSON control file `{breakpoints, values, period}`.
        #[arg(long)]
        control: PathBuf,
        /// Final time (may be negative).
        #[arg(long)]
        time: Option<f64>,
        /// Initial point in chart coordinates, comma-separated; `e` by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
        /// Number of output intervals.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Control-set estimate as a CSV cloud plus a JSON summary.
    ControlSet {
        scenario: String,
        #[arg(long, value_enum, default_value_t = LevelArg::Full)]
        level: LevelArg,
    },
    /// The bounded-orbit point `x(u)` for a control file.
    FixedPoint {
        scenario: String,
        #[arg(long)]
        control: PathBuf,
    },
    /// Run every check; exit status 0 iff all pass.
    Verify {
        scenario: String,
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Quick => Level::Quick,
            LevelArg::Full => Level::Full,
        }
    }
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_HYPOTHESIS: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Argument(_) | Error::Structural(_) => EXIT_CONFIG,
        Error::Convergence { .. } | Error::Integration { .. } | Error::Domain(_) => EXIT_NUMERIC,
        Error::Precondition(_) => EXIT_HYPOTHESIS,
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::config(path.display().to_string(), e.to_string())
}

/// A file path, or the name of a bundled scenario.
fn load_scenario(arg: &str, o: &Overrides) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| io_error(path, e))?
    } else if let Some(text) = bundled(arg) {
        text.to_string()
    } else {
        return Err(io_error(path, "no such file or bundled scenario"));
    };
    let mut file = ScenarioFile::parse(&text)?;
    let d = &mut file.defaults;
    if let Some(s) = o.seed {
        d.seed = s;
    }
    if let Some(h) = o.step {
        d.step = h;
    }
    if let Some(t) = o.horizon {
        d.horizon = t;
    }
    if let Some(n) = o.samples {
        d.cloud.samples = n;
    }
    if let Some(t) = o.tol {
        d.newton_tol = t;
    }
    file.build()
}

fn load_control(path: &Path, sc: &Scenario) -> Result<PwcControl, Error> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: ControlFile = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::config(
            format!("{}: {}", path.display(), e.path()),
            e.into_inner().to_string(),
        )
    })?;
    let u = file.to_control()?;
    if u.dim() != sc.system.control_vectors().len() {
        return Err(io_error(
            path,
            "control dimension does not match the scenario",
        ));
    }
    if !u.is_admissible(sc.system.constraint()) {
        return Err(io_error(path, "control values leave the control range"));
    }
    Ok(u)
}

/// Writes `name` under `--out`, or to stdout.
fn emit(o: &Overrides, name: &str, contents: &str) -> Result<(), Error> {
    match &o.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| io_error(&path, e))
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::config("csv", e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))
            .map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::config("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("c{i}")).collect()
}

fn cloud_csv(cloud: &PointCloud, n: usize) -> Result<String, Error> {
    csv_text(
        &coord_header(n),
        cloud
            .points()
            .iter()
            .map(|p| p.coords().iter().copied().collect()),
    )
}

fn simulate(
    sc: &Scenario,
    o: &Overrides,
    control: &Path,
    time: Option<f64>,
    initial: Option<Vec<f64>>,
    points: usize,
) -> Result<(), Error> {
    let u = load_control(control, sc)?;
    let sys = &sc.system;
    let group = sys.group();
    let g = match initial {
        Some(c) => group
            .element(&c)
            .map_err(|e| Error::config("--initial", e.to_string()))?,
        None => group.identity(),
    };
    let t = time.unwrap_or(sc.defaults().horizon);
    if !t.is_finite() || points == 0 {
        return Err(Error::config(
            "--time",
            "need a finite time and at least one output interval",
        ));
    }
    let times: Vec<f64> = (0..=points).map(|i| t * i as f64 / points as f64).collect();
    let traj = identity_solution_at(sys, &u, &times, &sc.step_options())?;
    let mut rows = Vec::with_capacity(times.len());
    for (&ti, e_t) in times.iter().zip(&traj.states) {
        let p = group.multiply(e_t, &automorphism_flow(sys, ti, &g)?)?;
        let mut row = vec![ti];
        row.extend(p.coords().iter());
        row.extend(u.evaluate(ti).iter());
        rows.push(row);
    }
    let mut header = vec!["time".to_string()];
    header.extend(coord_header(sys.dim()));
    header.extend((1..=u.dim()).map(|j| format!("u{j}")));
    emit(o, "trajectory.csv", &csv_text(&header, rows.into_iter())?)
}

fn run(cli: Cli) -> Result<bool, Error> {
    let o = &cli.overrides;
    match cli.command {
        Command::Scenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
        }
        Command::Decompose { scenario } => {
            let sc = load_scenario(&scenario, o)?;
            emit(o, "decompose.json", &json(&decompose_report(&sc)?))?;
        }
        Command::Simulate {
            scenario,
            control,
            time,
            initial,
            points,
        } => {
            let sc = load_scenario(&scenario, o)?;
            simulate(&sc, o, &control, time, initial, points)?;
        }
        Command::ControlSet { scenario, level } => {
            let sc = load_scenario(&scenario, o)?;
            let set = estimate_control_set(&sc, level.into())?;
            let summary = json(&control_set_summary(&sc, &set)?);
            if o.out.is_some() {
                let n = sc.system.dim();
                emit(o, "control_set.csv", &cloud_csv(&set.estimate.cloud, n)?)?;
                emit(o, "forward.csv", &cloud_csv(&set.forward, n)?)?;
                emit(o, "backward.csv", &cloud_csv(&set.backward, n)?)?;
                emit(o, "control_set.json", &summary)?;
            } else {
                print!("{summary}");
            }
        }
        Command::FixedPoint { scenario, control } => {
            let sc = load_scenario(&scenario, o)?;
            let u = load_control(&control, &sc)?;
            let opts = sc.fixed_point_options();
            let result = match u.period() {
                Some(_) => x_of_periodic(&sc.system, &u, &sc.split, &opts)?,
                None => {
                    let lp = sc.lift_params();
                    x_of_general(&sc.system, &u, &sc.split, lp.k_max, lp.base, &opts)?
                }
            };
            emit(o, "fixed_point.json", &json(&result.report()))?;
        }
        Command::Verify { scenario, level } => {
            let sc = load_scenario(&scenario, o)?;
            let report = verify(&sc, level.into())?;
            emit(o, "verify.json", &json(&report))?;
            for c in report.checks.iter().filter(|c| !c.pass) {
                eprintln!(
                    "check failed: {} (value {:e}, limit {:e})",
                    c.id, c.value, c.limit
                );
            }
            return Ok(report.pass);
        }
    }
    Ok(true)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("LIECTL_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::config(
            "LIECTL_THREADS",
            format!("expected a positive integer, got {v:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config("LIECTL_THREADS", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
