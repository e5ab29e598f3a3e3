//! Command-line front end.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::hjb::{brute_force_value, extract_feedback, solve_value, GridParams, ValueTable};
use crate::integrator::{integrate, ControlSignal};
use crate::reachability::{attainable, reach};
use crate::repro::{run_toy_repro, ReproOptions};
use crate::sampling;
use crate::scenario::{estimate_constants, Scenario};
use crate::toy::ToyValue;
use crate::verify::{
    check_HJ_pointwise, check_T14, invariance_sample_test, ipc_check, p7_ratio_sweep, HjOptions, InvarianceOptions,
    SweepOptions, T14Options, VerificationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

const EXIT_HELP: &str = "\
Exit codes:
  0  success (validate reports failing checks as rows and still exits 0)
  1  hard error, failed verification without --report-only, or a failed toy-repro criterion
  2  scenario parse or validation error";

#[derive(Debug, Parser)]
#[command(name = "avfric", version, about = "Control systems with averaged dynamic friction", after_help = EXIT_HELP)]
pub struct Cli {
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, env = "AVFRIC_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file.
    pub scenario: PathBuf,
    /// Override a scenario parameter, `name=value`.
    #[arg(long = "set", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
    /// Time step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Spatial grid spacing.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Last time at which the target may be hit.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for CSV artifacts.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate structural constants and check OSL and the inward pointing condition.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        osl_pairs: usize,
        #[arg(long, default_value_t = 100)]
        ipc_samples: usize,
    },
    /// Integrate one trajectory with the proximal scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
        x0: Vec<f64>,
        /// `const:u1,u2,..`, `toy`, `feedback`, or a CSV file with columns `t,u_1,..`.
        #[arg(long, default_value = "feedback")]
        control: String,
        /// End time.
        #[arg(long = "T")]
        t_end: f64,
    },
    /// Reachable cells and attainable target points from one start.
    Reach {
        #[command(flatten)]
        common: Common,
        /// Start time followed by the start state.
        #[arg(long, num_args = 2.., allow_negative_numbers = true, required = true)]
        from: Vec<f64>,
        #[arg(long)]
        until: f64,
    },
    /// Solve the value function and extract the feedback law.
    Value {
        #[command(flatten)]
        common: Common,
        /// Query point `t x..`; repeatable.
        #[arg(long, num_args = 2.., allow_negative_numbers = true, action = ArgAction::Append)]
        query: Vec<f64>,
        /// Compare queries against the brute-force oracle, `depth,branching`.
        #[arg(long, value_parser = parse_pair)]
        oracle: Option<(usize, usize)>,
    },
    /// Check the viscosity conditions, invariance and steering estimates.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check the toy closed form instead of a solved table.
        #[arg(long)]
        closed_form: bool,
        /// Exit 0 even when rows fail.
        #[arg(long)]
        report_only: bool,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        sweep: usize,
    },
    /// Reproduce the one-sided friction example end to end.
    ToyRepro {
        /// Weight of elapsed time in the cost.
        #[arg(long = "C", default_value_t = 1.0)]
        c: f64,
        /// Minimum velocity required by the target.
        #[arg(long, default_value_t = 0.8)]
        r: f64,
        /// Time step of the value solve.
        #[arg(long, default_value_t = 2e-3)]
        h: f64,
        /// Velocity grid spacing of the value solve.
        #[arg(long, default_value_t = 2e-3)]
        delta: f64,
        /// Invariance trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

fn parse_assignment(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected depth,branching, got `{s}`"))?;
    let a = a.trim().parse().map_err(|e| format!("bad depth: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("bad branching: {e}"))?;
    Ok((a, b))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = Cli::command().try_get_matches_from(args).and_then(|m| {
        let queries: Vec<Vec<f64>> = m
            .subcommand_matches("value")
            .and_then(|v| v.get_occurrences::<f64>("query"))
            .map(|occ| occ.map(|o| o.copied().collect()).collect())
            .unwrap_or_default();
        Cli::from_arg_matches(&m).map(|c| (c, queries))
    });
    let (cli, queries) = match parsed {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli.command, &queries, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_ERROR
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(io_err(&path))
}

fn load(c: &Common) -> Result<Scenario> {
    let overrides: BTreeMap<String, f64> = c.set.iter().cloned().collect();
    let mut s = Scenario::load_with(&c.scenario, &overrides)?;
    let n = &mut s.numerics;
    if let Some(h) = c.h {
        n.h = h;
    }
    if let Some(d) = c.delta {
        n.delta = d;
    }
    if let Some(t) = c.horizon {
        n.horizon = t;
    }
    if let Some(seed) = c.seed {
        n.seed = seed;
    }
    if !(n.h > 0.0 && n.delta > 0.0 && n.horizon > n.t_start) {
        return Err(Error::InvalidArgument(format!(
            "need h > 0, delta > 0 and horizon > t_start, got h = {}, delta = {}, horizon = {}",
            n.h, n.delta, n.horizon
        )));
    }
    Ok(s)
}

fn toy_closed_form(s: &Scenario) -> Result<ToyValue> {
    match (s.param("C"), s.param("r"), s.dim) {
        (Some(c), Some(r), 1) => Ok(ToyValue::new(c, r)),
        _ => Err(Error::InvalidArgument("the closed form needs a 1D scenario with parameters C and r".into())),
    }
}

fn dispatch(cmd: Command, queries: &[Vec<f64>], out: &mut dyn Write) -> Result<i32> {
    let w = |e: io::Error| Error::Io { path: "<stdout>".into(), source: e };
    match cmd {
        Command::Validate { common, osl_pairs, ipc_samples } => {
            let s = load(&common)?;
            let consts = estimate_constants(&s, s.numerics.samples)?;
            writeln!(out, "L = {}", consts.l).map_err(w)?;
            writeln!(out, "C1 = {}, C2 = {}", consts.c1, consts.c2).map_err(w)?;
            writeln!(out, "kappa = {}", consts.kappa).map_err(w)?;
            writeln!(out, "L_F = {}", consts.l_f).map_err(w)?;
            writeln!(out, "L_Fbar = {}", consts.l_fbar).map_err(w)?;
            let osl = crate::dynamics::osl_check(&s, &consts, osl_pairs);
            osl.write_csv(create(&common.out, "osl.csv")?)?;
            let osl_ok = osl.max_violation <= 1e-9;
            writeln!(out, "OSL {} max violation = {:e}", pass_str(osl_ok), osl.max_violation).map_err(w)?;
            let ipc = ipc_check(&s, ipc_samples)?;
            ipc.report.write_csv(create(&common.out, "ipc.csv")?)?;
            if ipc.report.rows.is_empty() {
                writeln!(out, "IPC PASS vacuous: {}", ipc.report.notes.join("; ")).map_err(w)?;
            } else {
                let ok = ipc.report.all_pass();
                writeln!(out, "IPC {} worst = {}", pass_str(ok), ipc.worst).map_err(w)?;
            }
            writeln!(out, "rho_estimate = {}", ipc.rho_estimate).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { common, t0, x0, control, t_end } => {
            let s = load(&common)?;
            let t0 = t0.unwrap_or(s.numerics.t_start);
            if x0.len() != s.dim {
                return Err(Error::InvalidArgument(format!("--x0 needs {} components, got {}", s.dim, x0.len())));
            }
            if !s.state_box.contains(&x0) {
                return Err(Error::InvalidArgument(format!("initial state {x0:?} lies outside the state box")));
            }
            let ctrl = control_signal(&s, &control)?;
            let traj = integrate(&s, t0, &x0, &ctrl, t_end, s.numerics.h)?;
            traj.write_csv(create(&common.out, "trajectory.csv")?)?;
            writeln!(out, "t = {} x = {:?}", traj.last_time(), traj.last_state().as_slice()).map_err(w)?;
            Ok(EXIT_OK)
        }
        Command::Reach { common, from, until } => {
            let s = load(&common)?;
            let (t0, x0) = (from[0], &from[1..]);
            if x0.len() != s.dim {
                return Err(Error::InvalidArgument(format!("--from needs t and {} state components", s.dim)));
            }
            let rt = reach(&s, t0, x0, until, s.numerics.reach_h, s.numerics.reach_delta)?;
            rt.write_csv(create(&common.out, "reach.csv")?)?;
            let att = attainable(&s, &rt);
            att.write_csv(create(&common.out, "attainable.csv")?)?;
            match att.points.first() {
                None => writeln!(out, "attainable set empty up to {until}").map_err(w)?,
                Some((t, y)) => {
                    writeln!(out, "attainable: {} points, earliest t = {t} y = {:?}", att.points.len(), y.as_slice())
                        .map_err(w)?
                }
            }
            Ok(EXIT_OK)
        }
        Command::Value { common, query: _, oracle } => {
            let s = load(&common)?;
            let vt = solve_value(&s, &GridParams::from_scenario(&s))?;
            let stride = vt.grid.slices().div_ceil(256);
            vt.write_csv(create(&common.out, "value.csv")?, stride)?;
            extract_feedback(&s, &vt).write_csv(create(&common.out, "feedback.csv")?)?;
            for q in queries {
                let (t, x) = (q[0], &q[1..]);
                let v = vt.query(t, x)?;
                write!(out, "V({t}, {x:?}) = {v}").map_err(w)?;
                if let Some((depth, branching)) = oracle {
                    let o = brute_force_value(&s, t, x, depth, branching)?;
                    write!(out, "  oracle = {o}").map_err(w)?;
                }
                writeln!(out).map_err(w)?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { common, closed_form, report_only, probes, trials, sweep } => {
            let s = load(&common)?;
            let report =
                if closed_form { verify_closed_form(&s, probes)? } else { verify_table(&s, probes, trials, sweep)? };
            report.write_csv(create(&common.out, "report.csv")?)?;
            write!(out, "{}", report.summary()).map_err(w)?;
            let ok = report.rows.iter().all(|r| r.pass);
            writeln!(out, "{}", if ok { "all rows pass" } else { "some rows fail" }).map_err(w)?;
            Ok(if ok || report_only { EXIT_OK } else { EXIT_ERROR })
        }
        Command::ToyRepro { c, r, h, delta, trials } => {
            let o = ReproOptions { c, r, h, delta, invariance_trials: trials, ..ReproOptions::default() };
            let rep = run_toy_repro(&o)?;
            write!(out, "{}", rep.render()).map_err(w)?;
            Ok(if rep.all_pass() { EXIT_OK } else { EXIT_ERROR })
        }
    }
}

fn pass_str(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn control_signal(s: &Scenario, spec: &str) -> Result<ControlSignal> {
    if let Some(rest) = spec.strip_prefix("const:") {
        let u: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Parse(format!("control `{p}`: {e}"))))
            .collect::<Result<_>>()?;
        if u.len() != s.control_dim() {
            return Err(Error::InvalidArgument(format!("constant control needs {} components", s.control_dim())));
        }
        return Ok(ControlSignal::constant(&u));
    }
    match spec {
        "toy" => {
            let exact = toy_closed_form(s)?;
            Ok(ControlSignal::feedback(move |_, x| geometry::point(&[exact.feedback(x[0])])))
        }
        "feedback" => {
            let vt = solve_value(s, &GridParams::from_scenario(s))?;
            let law = Arc::new(extract_feedback(s, &vt));
            Ok(ControlSignal::feedback(move |t, x| law.control_at(t, x)))
        }
        path => read_control_csv(Path::new(path), s.control_dim()),
    }
}

fn read_control_csv(path: &Path, dim: usize) -> Result<ControlSignal> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{}: `{f}`: {e}", path.display()))))
            .collect::<Result<_>>()?;
        if nums.len() != dim + 1 {
            return Err(Error::Parse(format!("{}: expected {} columns, got {}", path.display(), dim + 1, nums.len())));
        }
        times.push(nums[0]);
        values.push(geometry::point(&nums[1..]));
    }
    ControlSignal::piecewise_constant(times, values)
}

fn random_probes(s: &Scenario, count: usize, t_hi: f64) -> Vec<(f64, Point)> {
    let mut rng = sampling::stream_rng(s.numerics.seed, sampling::STREAM_PROBES);
    (0..count)
        .map(|_| {
            let t = rng.random_range(s.numerics.t_start..=t_hi);
            (t, sampling::uniform_in_box(&mut rng, &s.state_box))
        })
        .collect()
}

fn verify_closed_form(s: &Scenario, probes: usize) -> Result<VerificationReport> {
    let exact = toy_closed_form(s)?;
    let t_hi = s.numerics.t_start + 1.0;
    let mut pts = random_probes(s, probes, t_hi);
    for v in [0.0, exact.level(), -1.0, 0.5 * exact.level()] {
        if s.state_box.contains(&[v]) {
            pts.push((s.numerics.t_start, geometry::point(&[v])));
        }
    }
    Ok(check_T14(s, &exact, &pts, &T14Options::closed_form()).report)
}

fn verify_table(s: &Scenario, probes: usize, trials: usize, sweep: usize) -> Result<VerificationReport> {
    let (h, delta) = (s.numerics.h, s.numerics.delta);
    let vt: ValueTable = solve_value(s, &GridParams::from_scenario(s))?;
    let t_hi = s.numerics.t_start + 0.5 * (s.numerics.horizon - s.numerics.t_start);
    let pts = random_probes(s, probes, t_hi);
    let mut report = check_T14(s, &vt, &pts, &T14Options::tabulated(h, delta)).report;
    report.merge(check_HJ_pointwise(s, &vt, &pts, &HjOptions::tabulated(h, delta)));
    let law = Arc::new(extract_feedback(s, &vt));
    report.merge(invariance_sample_test(s, &vt, &law, &InvarianceOptions::for_table(&vt, trials))?);
    match ipc_check(s, 100) {
        Ok(ipc) if ipc.rho_estimate > 0.0 => {
            let consts = estimate_constants(s, s.numerics.samples)?;
            let o = SweepOptions { samples: sweep, rho: ipc.rho_estimate, h: h.min(1e-3), tol: 1e-9, ratio_tol: 0.05 };
            report.merge(p7_ratio_sweep(s, &consts, &o)?.0);
        }
        Ok(_) => report.notes.push("inward pointing estimate is not positive; steering sweep skipped".into()),
        Err(Error::NoBoundary) => report.notes.push("target has no boundary; steering sweep skipped".into()),
        Err(e) => return Err(e),
    }
    Ok(report)
}
