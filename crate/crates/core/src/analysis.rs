//! Distortion engine: maps discrete eigenvalues back to the S-plane, pairs
//! them with the original modes, and searches step-size bounds.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::methods::{build_pencil, MethodSpec};
use crate::models::LinearizedModel;
use crate::pencil::{finite_eigenvalues, sort_lexicographic, Spectrum, DEFAULT_INFINITE_TOL};
use crate::textfmt::format_report;

/// Geometric bracketing density for bound searches.
pub const GRID_POINTS_PER_DECADE: usize = 40;
/// Relative width at which bisection stops.
pub const BISECTION_RTOL: f64 = 1e-4;
/// Default spurious-zero threshold for the stiffness ratio, relative to σ_max.
pub const DEFAULT_ZERO_TOL_REL: f64 = 1e-9;

/// `ln(z̃)/h` on the principal branch, `Im ∈ (−π/h, π/h]`.
pub fn map_z_to_s(z: Complex64, h: f64) -> Result<Complex64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {h}")));
    }
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Annihilated);
    }
    // atan2 returns −π for a negative real with −0.0 imaginary part.
    let arg = if z.im == 0.0 && z.re < 0.0 { PI } else { z.arg() };
    Ok(Complex64::new(z.norm().ln(), arg) / h)
}

/// `ζ = −Re(s)/|s|`.
pub fn damping(s: Complex64) -> Result<f64> {
    let n = s.norm();
    if n == 0.0 {
        return Err(Error::ZeroMode);
    }
    Ok(-s.re / n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mode {
    pub s: [f64; 2],
    pub damping: f64,
    pub frequency_hz: f64,
}

impl Mode {
    pub fn new(s: Complex64) -> Result<Self> {
        Ok(Self {
            s: [s.re, s.im],
            damping: damping(s)?,
            frequency_hz: s.im / (2.0 * PI),
        })
    }
}

/// Linear fixture whose finite spectrum is `{s}` (real `s`) or `{s, s̄}`.
pub fn mode_fixture(s: Complex64) -> Result<LinearizedModel> {
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("mode {s} is not finite")));
    }
    let a = if s.im == 0.0 {
        DMatrix::from_element(1, 1, s.re)
    } else {
        DMatrix::from_row_slice(2, 2, &[s.re, -s.im, s.im, s.re])
    };
    LinearizedModel::ode(a)
}

/// Result of [`match_modes`].
#[derive(Clone, Debug, PartialEq)]
pub struct Pairing {
    /// `matches[i]` is the discrete index paired with original mode `i`.
    pub matches: Vec<Option<usize>>,
    /// Discrete indices left unpaired (parasitic roots, annihilated modes).
    pub spurious: Vec<usize>,
    /// Images `s̃` of the discrete eigenvalues (`None` when `z̃ = 0`).
    pub mapped: Vec<Option<Complex64>>,
}

impl Pairing {
    pub fn unmatched_originals(&self) -> Vec<usize> {
        (0..self.matches.len()).filter(|&i| self.matches[i].is_none()).collect()
    }
}

/// Greedy globally-nearest pairing in the S-plane. Candidate pairs are taken
/// in order of (distance, original index, discrete index).
pub fn match_modes(original: &Spectrum, discrete: &Spectrum, h: f64, multiplicity: usize) -> Result<Pairing> {
    if original.finite.is_empty() {
        return Err(Error::EmptySpectrum("original pencil has no finite eigenvalues"));
    }
    if discrete.finite.is_empty() {
        return Err(Error::EmptySpectrum("discrete pencil has no finite eigenvalues"));
    }
    if discrete.dim != multiplicity * original.dim {
        return Err(Error::DimensionMismatch {
            what: "discrete pencil",
            expected: format!("{} x {} = {}", multiplicity, original.dim, multiplicity * original.dim),
            found: discrete.dim.to_string(),
        });
    }
    let mapped: Vec<Option<Complex64>> = discrete
        .finite
        .iter()
        .map(|&z| match map_z_to_s(z, h) {
            Ok(s) => Ok(Some(s)),
            Err(Error::Annihilated) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(original.finite.len() * mapped.len());
    for (i, s) in original.finite.iter().enumerate() {
        for (j, st) in mapped.iter().enumerate() {
            if let Some(st) = st {
                candidates.push(((st - s).norm(), i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut matches = vec![None; original.finite.len()];
    let mut taken = vec![false; mapped.len()];
    for (_, i, j) in candidates {
        if matches[i].is_none() && !taken[j] {
            matches[i] = Some(j);
            taken[j] = true;
        }
    }
    let spurious = (0..mapped.len()).filter(|&j| !taken[j]).collect();
    Ok(Pairing {
        matches,
        spurious,
        mapped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionRow {
    pub s: Complex64,
    pub z_tilde: Complex64,
    pub s_tilde: Complex64,
    pub d_s: Complex64,
    pub abs_ds: f64,
    /// `None` when either damping is undefined (`s = 0` or `s̃ = 0`).
    pub d_zeta: Option<f64>,
    pub aliased: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionReport {
    pub method: String,
    pub h: f64,
    pub rows: Vec<DistortionRow>,
    /// Unpaired discrete eigenvalues `z̃`.
    pub spurious: Vec<Complex64>,
    /// Original modes left without a discrete counterpart.
    pub unmatched: Vec<Complex64>,
}

pub fn distortion_report(spec: &MethodSpec, lm: &LinearizedModel, h: f64) -> Result<DistortionReport> {
    let original = finite_eigenvalues(&lm.pencil, DEFAULT_INFINITE_TOL)?;
    report_with_spectrum(spec, lm, &original, h)
}

fn report_with_spectrum(spec: &MethodSpec, lm: &LinearizedModel, original: &Spectrum, h: f64) -> Result<DistortionReport> {
    let pencil = build_pencil(spec, lm, h)?;
    let discrete = finite_eigenvalues(&pencil, DEFAULT_INFINITE_TOL)?;
    let pairing = match_modes(original, &discrete, h, spec.step_multiplicity())?;
    let mut rows = Vec::new();
    let mut unmatched = Vec::new();
    for (i, m) in pairing.matches.iter().enumerate() {
        let s = original.finite[i];
        let Some(j) = *m else {
            unmatched.push(s);
            continue;
        };
        let s_tilde = pairing.mapped[j].expect("matched eigenvalues are nonzero");
        let d_s = s_tilde - s;
        let d_zeta = match (damping(s_tilde), damping(s)) {
            (Ok(a), Ok(b)) => Some(a - b),
            _ => None,
        };
        rows.push(DistortionRow {
            s,
            z_tilde: discrete.finite[j],
            s_tilde,
            d_s,
            abs_ds: d_s.norm(),
            d_zeta,
            aliased: s.im.abs() * h > PI,
        });
    }
    Ok(DistortionReport {
        method: spec.tag(),
        h,
        rows,
        spurious: pairing.spurious.iter().map(|&j| discrete.finite[j]).collect(),
        unmatched,
    })
}

/// One report per `(method, h)` pair, ordered method-major.
pub fn sweep(specs: &[MethodSpec], lm: &LinearizedModel, hs: &[f64], exec: Execution) -> Result<Vec<DistortionReport>> {
    let original = finite_eigenvalues(&lm.pencil, DEFAULT_INFINITE_TOL)?;
    let items: Vec<(usize, f64)> = (0..specs.len()).flat_map(|m| hs.iter().map(move |&h| (m, h))).collect();
    exec.map(&items, |&(m, h)| report_with_spectrum(&specs[m], lm, &original, h))
        .into_iter()
        .collect()
}

pub const CSV_HEADER: &str = "method,h,re_s,im_s,re_stilde,im_stilde,abs_ds,d_zeta_pct,aliased,spurious_count";

pub fn write_reports_csv<W: Write>(reports: &[DistortionReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        for row in &r.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                format_report(r.h),
                format_report(row.s.re),
                format_report(row.s.im),
                format_report(row.s_tilde.re),
                format_report(row.s_tilde.im),
                format_report(row.abs_ds),
                format_report(row.d_zeta.map_or(f64::NAN, |d| 100.0 * d)),
                row.aliased,
                r.spurious.len()
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RowJson {
    s: [f64; 2],
    z_tilde: [f64; 2],
    s_tilde: [f64; 2],
    d_s: [f64; 2],
    abs_ds: f64,
    d_zeta: Option<f64>,
    aliased: bool,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    method: &'a str,
    h: f64,
    rows: Vec<RowJson>,
    spurious: Vec<[f64; 2]>,
    unmatched: Vec<[f64; 2]>,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn reports_to_json(reports: &[DistortionReport]) -> serde_json::Value {
    let out: Vec<ReportJson> = reports
        .iter()
        .map(|r| ReportJson {
            method: &r.method,
            h: r.h,
            rows: r
                .rows
                .iter()
                .map(|row| RowJson {
                    s: pair(row.s),
                    z_tilde: pair(row.z_tilde),
                    s_tilde: pair(row.s_tilde),
                    d_s: pair(row.d_s),
                    abs_ds: row.abs_ds,
                    d_zeta: row.d_zeta,
                    aliased: row.aliased,
                })
                .collect(),
            spurious: r.spurious.iter().copied().map(pair).collect(),
            unmatched: r.unmatched.iter().copied().map(pair).collect(),
        })
        .collect();
    serde_json::to_value(out).expect("report serializes")
}

/// `max|Re λ| / min|Re λ|` over finite eigenvalues with `|Re λ| > zero_tol`
/// (default `1e−9·σ_max`).
pub fn stiffness_ratio(lm: &LinearizedModel, zero_tol: Option<f64>) -> Result<f64> {
    let spectrum = finite_eigenvalues(&lm.pencil, DEFAULT_INFINITE_TOL)?;
    let sigma: Vec<f64> = spectrum.finite.iter().map(|z| z.re.abs()).collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let tol = match zero_tol {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => return Err(Error::InvalidParameter(format!("zero tolerance must be positive, got {t}"))),
        None => DEFAULT_ZERO_TOL_REL * sigma_max,
    };
    let kept: Vec<f64> = sigma.into_iter().filter(|&x| x > tol).collect();
    if kept.is_empty() {
        return Err(Error::EmptySpectrum("every eigenvalue is below the zero tolerance"));
    }
    let min = kept.iter().copied().fold(f64::INFINITY, f64::min);
    let max = kept.iter().copied().fold(0.0, f64::max);
    Ok(max / min)
}

/// What a bound search evaluates.
#[derive(Clone, Copy, Debug)]
pub enum Subject<'a> {
    /// A single mode, analyzed on [`mode_fixture`].
    Mode(Complex64),
    /// A model; `focus` restricts metrics to the original mode nearest it.
    Model {
        model: &'a LinearizedModel,
        focus: Option<Complex64>,
    },
}

struct Prepared {
    model: LinearizedModel,
    original: Spectrum,
    focus: Option<Complex64>,
}

impl Subject<'_> {
    fn prepare(&self) -> Result<Prepared> {
        let (model, focus) = match *self {
            Subject::Mode(s) => (mode_fixture(s)?, Some(s)),
            Subject::Model { model, focus } => (model.clone(), focus),
        };
        let original = finite_eigenvalues(&model.pencil, DEFAULT_INFINITE_TOL)?;
        if original.finite.is_empty() {
            return Err(Error::EmptySpectrum("model has no finite eigenvalues"));
        }
        Ok(Prepared {
            model,
            original,
            focus,
        })
    }
}

impl Prepared {
    fn report(&self, spec: &MethodSpec, h: f64) -> Result<DistortionReport> {
        report_with_spectrum(spec, &self.model, &self.original, h)
    }

    /// Rows the metric looks at: the focused mode, or all of them.
    fn selected<'r>(&self, report: &'r DistortionReport) -> Vec<&'r DistortionRow> {
        match self.focus {
            None => report.rows.iter().collect(),
            Some(f) => {
                let best = report
                    .rows
                    .iter()
                    .enumerate()
                    .min_by(|(i, a), (j, b)| (a.s - f).norm().total_cmp(&(b.s - f).norm()).then(i.cmp(j)));
                best.map(|(_, r)| vec![r]).unwrap_or_default()
            }
        }
    }
}

/// Outcome of an upper-bound search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bound {
    pub h: f64,
    /// The criterion never failed inside the range; `h` is its upper end.
    pub open: bool,
    /// The criterion failed and later held again on the bracketing grid.
    pub non_monotone: bool,
}

/// Inclusive geometric grid with [`GRID_POINTS_PER_DECADE`] density.
pub fn geometric_grid(lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("invalid step range [{lo}, {hi}]")));
    }
    let decades = (hi / lo).log10();
    let n = ((decades * GRID_POINTS_PER_DECADE as f64).ceil() as usize).max(1);
    let mut grid: Vec<f64> = (0..=n).map(|k| lo * (hi / lo).powf(k as f64 / n as f64)).collect();
    grid[0] = lo;
    grid[n] = hi;
    Ok(grid)
}

struct Crossing {
    below: f64,
    above: f64,
    non_monotone: bool,
}

/// First place on `[lo, hi]` where `metric` reaches `threshold`, refined by
/// bisection. `Ok(None)` when the metric stays below throughout.
fn first_crossing<F>(metric: F, threshold: f64, range: (f64, f64), exec: Execution) -> Result<Option<Crossing>>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let grid = geometric_grid(range.0, range.1)?;
    let values = exec.map(&grid, |&h| metric(h));
    if values[0] >= threshold {
        return Err(Error::NoCrossing {
            lo: range.0,
            hi: range.1,
            at_lo: values[0],
            at_hi: values[values.len() - 1],
        });
    }
    let Some(k) = values.iter().position(|&v| v >= threshold) else {
        return Ok(None);
    };
    let non_monotone = values[k..].iter().any(|&v| v < threshold);
    let (mut a, mut b) = (grid[k - 1], grid[k]);
    while b - a > BISECTION_RTOL * b {
        let mid = 0.5 * (a + b);
        if metric(mid) >= threshold {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(Crossing {
        below: a,
        above: b,
        non_monotone,
    }))
}

fn no_crossing<F: Fn(f64) -> f64>(metric: F, range: (f64, f64)) -> Error {
    Error::NoCrossing {
        lo: range.0,
        hi: range.1,
        at_lo: metric(range.0),
        at_hi: metric(range.1),
    }
}

/// Smallest `h` in `h_range` with `|d_s| ≥ target` (maximum over selected
/// modes). A step where the method annihilates a mode counts as infinite
/// distortion.
pub fn step_for_target_distortion(
    spec: &MethodSpec,
    subject: Subject<'_>,
    target: f64,
    h_range: (f64, f64),
    exec: Execution,
) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(Error::InvalidParameter(format!("distortion target must be non-negative, got {target}")));
    }
    let prep = subject.prepare()?;
    let metric = |h: f64| match prep.report(spec, h) {
        Ok(r) => prep.selected(&r).iter().map(|row| row.abs_ds).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    match first_crossing(metric, target, h_range, exec)? {
        Some(c) => Ok(c.above),
        None => Err(no_crossing(metric, h_range)),
    }
}

/// Largest `h` with every matched discrete eigenvalue of a stable original
/// mode strictly inside the unit circle.
pub fn stability_margin(spec: &MethodSpec, subject: Subject<'_>, h_range: (f64, f64), exec: Execution) -> Result<Bound> {
    let prep = subject.prepare()?;
    if prep.original.finite.iter().all(|s| s.re >= 0.0) {
        return Err(Error::EmptySpectrum("no stable original mode to guard"));
    }
    let metric = |h: f64| match prep.report(spec, h) {
        Ok(r) => prep
            .selected(&r)
            .iter()
            .filter(|row| row.s.re < 0.0)
            .map(|row| row.z_tilde.norm())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    upper_bound(metric, 1.0, h_range, exec)
}

/// Largest `h` with `max d_ζ < dzeta_max` over selected modes (`dzeta_max`
/// as a fraction, not percent).
pub fn damping_bound_step(
    spec: &MethodSpec,
    subject: Subject<'_>,
    dzeta_max: f64,
    h_range: (f64, f64),
    exec: Execution,
) -> Result<Bound> {
    if !dzeta_max.is_finite() {
        return Err(Error::InvalidParameter(format!("damping bound must be finite, got {dzeta_max}")));
    }
    let prep = subject.prepare()?;
    let metric = |h: f64| match prep.report(spec, h) {
        Ok(r) => prep
            .selected(&r)
            .iter()
            .filter_map(|row| row.d_zeta)
            .fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::INFINITY,
    };
    upper_bound(metric, dzeta_max, h_range, exec)
}

fn upper_bound<F>(metric: F, threshold: f64, range: (f64, f64), exec: Execution) -> Result<Bound>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    Ok(match first_crossing(metric, threshold, range, exec)? {
        Some(c) => Bound {
            h: c.below,
            open: false,
            non_monotone: c.non_monotone,
        },
        None => Bound {
            h: range.1,
            open: true,
            non_monotone: false,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocusPoint {
    pub h: f64,
    pub s: [f64; 2],
    pub s_tilde: [f64; 2],
    pub abs_ds: f64,
}

/// Matched `s̃` of every selected mode along `h_grid`.
pub fn root_locus(spec: &MethodSpec, subject: Subject<'_>, h_grid: &[f64], exec: Execution) -> Result<Vec<LocusPoint>> {
    let prep = subject.prepare()?;
    let per_h = exec.map(h_grid, |&h| {
        prep.report(spec, h).map(|r| {
            prep.selected(&r)
                .iter()
                .map(|row| LocusPoint {
                    h,
                    s: pair(row.s),
                    s_tilde: pair(row.s_tilde),
                    abs_ds: row.abs_ds,
                })
                .collect::<Vec<_>>()
        })
    });
    let mut out = Vec::new();
    for pts in per_h {
        out.extend(pts?);
    }
    Ok(out)
}

/// One CSV for several methods: `(method tag, points)` in output order.
pub fn write_locus_csv<W: Write>(loci: &[(String, Vec<LocusPoint>)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "method,h,re_s,im_s,re_stilde,im_stilde,abs_ds")?;
    for (method, p) in loci.iter().flat_map(|(m, pts)| pts.iter().map(move |p| (m, p))) {
        writeln!(
            w,
            "{method},{},{},{},{},{},{}",
            format_report(p.h),
            format_report(p.s[0]),
            format_report(p.s[1]),
            format_report(p.s_tilde[0]),
            format_report(p.s_tilde[1]),
            format_report(p.abs_ds)
        )?;
    }
    Ok(())
}

/// Finite eigenvalues of the model, sorted, as plain modes.
pub fn modes(lm: &LinearizedModel) -> Result<Vec<Complex64>> {
    let mut s = finite_eigenvalues(&lm.pencil, DEFAULT_INFINITE_TOL)?.finite;
    sort_lexicographic(&mut s);
    Ok(s)
}
