//! `pencilbench`: batch front end for distortion analysis, step bounds, root
//! loci, time-domain simulation and the property suite.

mod manifest;
mod source;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;

use manifest::{manifest_path, RunManifest};
use pencilbench::analysis::{
    damping_bound_step, reports_to_json, root_locus, stability_margin, step_for_target_distortion,
    sweep, write_locus_csv, write_reports_csv, Bound, Subject,
};
use pencilbench::exec::init_thread_pool;
use pencilbench::methods::{parse_method_list, stability_region_sample, MethodSpec, RegionGrid};
use pencilbench::models::Mutation;
use pencilbench::tdi::{reference_for, simulate, trajectory_mismatch, SimulationConfig};
use pencilbench::textfmt::{format_report, parse_complex};
use pencilbench::validate::{run_validation, ValidationConfig};
use pencilbench::{Error, Execution};
use source::Source;

const THREADS_ENV: &str = "PENCILBENCH_THREADS";

#[derive(Parser)]
#[command(name = "pencilbench", version, about = "Matrix-pencil distortion analysis of integration methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distortion report per (method, h).
    Analyze(AnalyzeArgs),
    /// Largest step meeting an accuracy or stability criterion.
    Bounds(BoundsArgs),
    /// Root locus of the mapped eigenvalues over a step range.
    Locus(LocusArgs),
    /// Time-domain integration of the nonlinear model.
    Simulate(SimulateArgs),
    /// Seeded property suite.
    Validate(ValidateArgs),
    /// Stability region of a method on a grid of λh.
    Region(RegionArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Input {
    /// `builtin:<name>[:args]`, `mode:<re+imj>`, a `.json` model, or the stem
    /// of a `<stem>.E.mtx`/`<stem>.A.mtx` pair.
    #[arg(long)]
    model: Option<String>,
    /// Single mode `re+imj`, analyzed on its real 2×2 (or 1×1) fixture.
    #[arg(long, allow_hyphen_values = true)]
    mode: Option<String>,
}

impl Input {
    fn resolve(&self) -> Result<Source, Error> {
        match (&self.model, &self.mode) {
            (Some(m), _) => source::resolve(m),
            (None, Some(s)) => source::from_mode(parse_complex(s)?),
            (None, None) => unreachable!("clap enforces one input"),
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output file; a `<file>.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value = "fem,rk4,bem,itm,dirk2s,bdf2")]
    methods: String,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    h: Vec<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
#[group(id = "criterion", required = true, multiple = false)]
struct Criterion {
    /// Target |d_s|.
    #[arg(long)]
    ds: Option<f64>,
    /// Damping-distortion limit in percent.
    #[arg(long, allow_hyphen_values = true)]
    dzeta: Option<f64>,
    /// Stability margin of the selected modes.
    #[arg(long)]
    stability: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: Input,
    /// With `--model`, restrict the criterion to the mode nearest this value.
    #[arg(long, allow_hyphen_values = true)]
    focus: Option<String>,
    #[arg(long)]
    method: String,
    #[command(flatten)]
    criterion: Criterion,
    #[arg(long, default_value_t = 1e-5)]
    h_min: f64,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct LocusArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, allow_hyphen_values = true)]
    focus: Option<String>,
    #[arg(long, default_value = "fem,rk4,bem,itm,dirk2s,bdf2")]
    methods: String,
    #[arg(long, default_value_t = 1e-3)]
    h_min: f64,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    /// Number of log-spaced steps.
    #[arg(long, default_value_t = 60)]
    points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    /// `builtin:...`, `mode:...` or a model file.
    #[arg(long)]
    model: String,
    #[arg(long)]
    method: String,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    t_end: f64,
    /// Initial state, comma-separated; defaults to the equilibrium.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// `<time>:<parameter>=<value>`, repeatable.
    #[arg(long = "disturbance")]
    disturbances: Vec<String>,
    /// Also integrate the reference solution and report mismatches.
    #[arg(long)]
    reference: bool,
    #[arg(long, default_value_t = 1e-8)]
    newton_tol: f64,
    #[arg(long, default_value_t = 20)]
    newton_max_iter: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = ValidationConfig::default().seed)]
    seed: u64,
    /// Perturb the trapezoidal pencil (negative control).
    #[arg(long)]
    perturb_itm: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    method: String,
    /// Real-axis range `lo:hi`.
    #[arg(long, default_value = "-4:2", allow_hyphen_values = true)]
    re: String,
    /// Imaginary-axis range `lo:hi`.
    #[arg(long, default_value = "-4:4", allow_hyphen_values = true)]
    im: String,
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_input_error() => 2,
            Failure::Input(_) => 2,
            Failure::Core(_) | Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Input(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => init_thread_pool(n),
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Bounds(a) => bounds(a),
        Command::Locus(a) => locus(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Validate(a) => validate(a),
        Command::Region(a) => region(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn emit(output: &Output, mut manifest: RunManifest, body: &[u8]) -> CmdResult {
    match &output.out {
        None => {
            std::io::stdout()
                .write_all(body)
                .map_err(|e| Failure::Numerical(format!("writing stdout: {e}")))?;
        }
        Some(path) => {
            write_file(path, body)?;
            manifest.outputs.push(path.display().to_string());
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
            write_file(&manifest_path(path), text.as_bytes())?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, body: &[u8]) -> CmdResult {
    std::fs::write(path, body).map_err(|source| {
        Failure::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn methods(list: &str) -> Result<Vec<MethodSpec>, Failure> {
    let specs = parse_method_list(list)?;
    if specs.is_empty() {
        return Err(Failure::Input("no methods given".into()));
    }
    Ok(specs)
}

fn single_method(text: &str) -> Result<MethodSpec, Failure> {
    let mut specs = methods(text)?;
    if specs.len() != 1 {
        return Err(Failure::Input(format!("expected one method, got `{text}`")));
    }
    Ok(specs.remove(0))
}

fn method_tags(specs: &[MethodSpec]) -> Vec<String> {
    specs.iter().map(|s| s.to_string()).collect()
}

fn analyze(a: &AnalyzeArgs) -> CmdResult {
    let src = a.input.resolve()?;
    let specs = methods(&a.methods)?;
    if let Some(h) = a.h.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(Failure::Input(format!("step sizes must be positive, got {h}")));
    }
    let reports = sweep(&specs, &src.linearized, &a.h, Execution::default())?;
    let body = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_reports_csv(&reports, &mut buf).expect("in-memory write");
            buf
        }
        Format::Json => (serde_json::to_string_pretty(&reports_to_json(&reports)).expect("json") + "\n").into_bytes(),
    };
    let mut m = RunManifest::new("analyze");
    m.input("model", src.label.as_str())
        .input("methods", method_tags(&specs))
        .input("h", a.h.clone())
        .input("format", match a.format {
            Format::Csv => "csv",
            Format::Json => "json",
        });
    emit(&a.output, m, &body)
}

fn subject<'a>(src: &'a Source, focus: &Option<String>) -> Result<Subject<'a>, Failure> {
    Ok(match (src.mode, focus) {
        (Some(s), None) => Subject::Mode(s),
        (Some(_), Some(_)) => return Err(Failure::Input("--focus applies to --model inputs only".into())),
        (None, f) => Subject::Model {
            model: &src.linearized,
            focus: f.as_deref().map(parse_complex).transpose()?,
        },
    })
}

fn bounds(a: &BoundsArgs) -> CmdResult {
    let src = a.input.resolve()?;
    let spec = single_method(&a.method)?;
    let subj = subject(&src, &a.focus)?;
    let range = (a.h_min, a.h_max);
    let exec = Execution::default();
    let c = &a.criterion;
    let (criterion, target, bound) = if let Some(t) = c.ds {
        let bound = match step_for_target_distortion(&spec, subj, t, range, exec) {
            Ok(h) => Bound {
                h,
                open: false,
                non_monotone: false,
            },
            Err(Error::NoCrossing { at_lo, hi, .. }) if at_lo < t => Bound {
                h: hi,
                open: true,
                non_monotone: false,
            },
            Err(Error::NoCrossing { at_lo, lo, .. }) => {
                return Err(Failure::Input(format!(
                    "|d_s| = {} already exceeds {t} at h_min = {lo}; lower --h-min",
                    format_report(at_lo)
                )))
            }
            Err(e) => return Err(e.into()),
        };
        ("ds", t, bound)
    } else if let Some(pct) = c.dzeta {
        ("dzeta_pct", pct, damping_bound_step(&spec, subj, pct / 100.0, range, exec)?)
    } else {
        ("stability", 1.0, stability_margin(&spec, subj, range, exec)?)
    };
    if bound.open {
        eprintln!("note: criterion holds on the whole range; bound is open at h_max");
    }
    let body = format!(
        "method,criterion,target,h,open,non_monotone\n{},{criterion},{},{},{},{}\n",
        spec.tag(),
        format_report(target),
        format_report(bound.h),
        bound.open,
        bound.non_monotone
    );
    let mut m = RunManifest::new("bounds");
    m.input("model", src.label.as_str())
        .input("method", spec.to_string())
        .input("criterion", criterion)
        .input("target", target)
        .input("h_range", vec![a.h_min, a.h_max]);
    if let Some(f) = &a.focus {
        m.input("focus", f.as_str());
    }
    emit(&a.output, m, body.as_bytes())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, Failure> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || n < 2 {
        return Err(Failure::Input(format!(
            "step range needs 0 < h_min < h_max and at least 2 points, got [{lo}, {hi}] with {n}"
        )));
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n)
        .map(|k| if k == n - 1 { hi } else { lo * (ratio * k as f64).exp() })
        .collect())
}

fn locus(a: &LocusArgs) -> CmdResult {
    let src = a.input.resolve()?;
    let specs = methods(&a.methods)?;
    let grid = log_grid(a.h_min, a.h_max, a.points)?;
    let mut loci = Vec::new();
    for spec in &specs {
        let subj = subject(&src, &a.focus)?;
        loci.push((spec.tag(), root_locus(spec, subj, &grid, Execution::default())?));
    }
    let mut body = Vec::new();
    write_locus_csv(&loci, &mut body).expect("in-memory write");
    let mut m = RunManifest::new("locus");
    m.input("model", src.label.as_str())
        .input("methods", method_tags(&specs))
        .input("h_range", vec![a.h_min, a.h_max])
        .input("points", a.points);
    emit(&a.output, m, &body)
}

fn parse_disturbance(text: &str) -> Result<(f64, Mutation), Failure> {
    let bad = || Failure::Input(format!("disturbance `{text}` is not `<time>:<parameter>=<value>`"));
    let (t, rest) = text.split_once(':').ok_or_else(bad)?;
    let t: f64 = t.trim().parse().map_err(|_| bad())?;
    Ok((t, rest.parse::<Mutation>()?))
}

fn simulate_cmd(a: &SimulateArgs) -> CmdResult {
    let src = source::resolve(&a.model)?;
    let spec = single_method(&a.method)?;
    let mut cfg = SimulationConfig::new(spec.clone(), a.h, a.t_end);
    cfg.newton_tol = a.newton_tol;
    cfg.newton_max_iter = a.newton_max_iter;
    cfg.disturbances = a.disturbances.iter().map(|d| parse_disturbance(d)).collect::<Result<_, _>>()?;
    let x0 = match &a.x0 {
        Some(v) => DVector::from_vec(v.clone()),
        None => src.linearized.x_o.clone(),
    };
    let traj = simulate(&src.model, &cfg, &x0)?;
    let mut m = RunManifest::new("simulate");
    m.input("model", src.label.as_str())
        .input("method", spec.to_string())
        .input("h", a.h)
        .input("t_end", a.t_end)
        .input("x0", x0.iter().copied().collect::<Vec<f64>>())
        .input("disturbances", a.disturbances.clone())
        .input("newton_tol", a.newton_tol)
        .input("newton_max_iter", a.newton_max_iter)
        .input("reference", a.reference);
    if let Some(d) = &traj.divergence {
        eprintln!("diverged at t = {}: {}", format_report(d.time), d.reason);
        m.summary.insert("divergence_time".into(), json!(d.time));
        m.summary.insert("divergence_reason".into(), json!(d.reason));
    }
    if a.reference {
        let reference = reference_for(&src.model, &cfg, &x0)?;
        let mut mismatch = Vec::new();
        for i in 0..x0.len() {
            let e = trajectory_mismatch(&traj, &reference, i)?;
            eprintln!("mismatch x_{i}: {}", format_report(e));
            mismatch.push(format_report(e));
        }
        m.summary.insert("mismatch".into(), json!(mismatch));
    }
    let mut body = Vec::new();
    traj.write_csv(&mut body).expect("in-memory write");
    emit(&a.output, m, &body)
}

fn validate(a: &ValidateArgs) -> CmdResult {
    let cfg = ValidationConfig {
        trials: a.trials,
        seed: a.seed,
        perturb_itm: a.perturb_itm,
        ..ValidationConfig::default()
    };
    if cfg.trials == 0 {
        return Err(Failure::Input("--trials must be positive".into()));
    }
    let report = run_validation(&cfg, Execution::default());
    let body = format!("{report}\n");
    let mut m = RunManifest::new("validate");
    m.input("trials", a.trials).input("seed", a.seed).input("perturb_itm", a.perturb_itm);
    m.summary.insert("all_passed".into(), json!(report.all_passed()));
    emit(&a.output, m, body.as_bytes())?;
    if report.all_passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Numerical(format!("failed checks: {}", failed.join(", "))))
    }
}

fn parse_range(text: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Input(format!("range `{text}` is not `lo:hi`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn region(a: &RegionArgs) -> CmdResult {
    let spec = single_method(&a.method)?;
    let grid = RegionGrid {
        re: parse_range(&a.re)?,
        im: parse_range(&a.im)?,
        n_re: a.n,
        n_im: a.n,
    };
    let sample = stability_region_sample(&spec, &grid, Execution::default())?;
    let mut body = Vec::new();
    sample.write_csv(&mut body).expect("in-memory write");
    let mut m = RunManifest::new("region");
    m.input("method", spec.to_string())
        .input("re", vec![grid.re.0, grid.re.1])
        .input("im", vec![grid.im.0, grid.im.1])
        .input("n", a.n);
    emit(&a.output, m, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_both_ends() {
        let g = log_grid(1e-3, 1.0, 4).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[3], 1.0);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!(log_grid(1.0, 0.5, 4).is_err());
    }

    #[test]
    fn disturbances_parse() {
        let (t, m) = parse_disturbance("1.5:p_m=0.9").unwrap();
        assert_eq!(t, 1.5);
        assert_eq!(m.parameter, "p_m");
        assert_eq!(m.value, 0.9);
        assert!(parse_disturbance("p_m=0.9").is_err());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(Failure::Core(Error::UnknownMethod("x".into())).code(), 2);
        assert_eq!(Failure::Core(Error::Annihilated).code(), 3);
        assert_eq!(Failure::Input("x".into()).code(), 2);
    }
}
