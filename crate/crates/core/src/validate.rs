//! Seeded property suite: growth/pencil equivalence, BDF2 companion roots,
//! Möbius specializations and mapping, and convergence slopes.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{distortion_report, mode_fixture};
use crate::error::Result;
use crate::exec::Execution;
use crate::methods::{
    build_pencil, growth_roots, moebius_is_symmetric_a_stable, MethodSpec, Moebius,
};
use crate::models::LinearizedModel;
use crate::pencil::{finite_eigenvalues, DEFAULT_INFINITE_TOL};

/// Relative eigenvalue agreement required by the equivalence checks.
pub const EQUIVALENCE_TOL: f64 = 1e-8;
/// Slope slack below the declared order.
pub const SLOPE_SLACK: f64 = 0.1;
/// Coefficient offset injected into the ITM pencil by the negative control.
pub const ITM_PERTURBATION: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct ValidationConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_dim: usize,
    pub steps: Vec<f64>,
    pub mapping_samples: usize,
    /// Build the ITM pencil with a perturbed coefficient (negative control).
    pub perturb_itm: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0x5eed,
            max_dim: 6,
            steps: vec![1e-3, 1e-2, 1e-1],
            mapping_samples: 1000,
            perturb_itm: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e}, tolerance {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn find(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Random real matrix `V·D·V⁻¹` with `V = I + 0.3·U(−1, 1)` and `D` block
/// diagonal (real decay rates and 2×2 rotation blocks). Returns the matrix
/// and its exact eigenvalues.
pub fn random_diagonalizable(rng: &mut impl Rng, dim: usize) -> (DMatrix<f64>, Vec<Complex64>) {
    let mut d = DMatrix::<f64>::zeros(dim, dim);
    let mut eig = Vec::with_capacity(dim);
    let mut i = 0;
    while i < dim {
        let re = -rng.random_range(0.1..20.0);
        if i + 1 < dim && rng.random_bool(0.5) {
            let im = rng.random_range(0.5..20.0);
            d[(i, i)] = re;
            d[(i + 1, i + 1)] = re;
            d[(i, i + 1)] = -im;
            d[(i + 1, i)] = im;
            eig.push(Complex64::new(re, im));
            eig.push(Complex64::new(re, -im));
            i += 2;
        } else {
            d[(i, i)] = re;
            eig.push(Complex64::new(re, 0.0));
            i += 1;
        }
    }
    loop {
        let v = DMatrix::<f64>::identity(dim, dim) + DMatrix::from_fn(dim, dim, |_, _| 0.3 * rng.random_range(-1.0..1.0));
        if let Some(vi) = v.clone().try_inverse() {
            return (&v * d * vi, eig);
        }
    }
}

/// Greedy nearest pairing of two equal-size sets; returns the worst
/// `|a − b| / max(1, |b|)`, or infinity on a size mismatch.
pub fn set_distance(got: &[Complex64], expected: &[Complex64]) -> f64 {
    if got.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in got.iter().enumerate() {
        for (j, b) in expected.iter().enumerate() {
            pairs.push(((a - b).norm() / b.norm().max(1.0), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; got.len()];
    let mut used_b = vec![false; expected.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

fn trial_rng(seed: u64, stream: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((trial as u128) << 20);
    rng
}

fn pencil_for(spec: &MethodSpec, lm: &LinearizedModel, h: f64, perturb_itm: bool) -> Result<crate::pencil::LinearPencil> {
    if perturb_itm && *spec == MethodSpec::Trapezoidal {
        let q = Moebius::new(1.0, -1.0, 0.5 + ITM_PERTURBATION, 0.5);
        return build_pencil(&MethodSpec::Moebius(q), lm, h);
    }
    build_pencil(spec, lm, h)
}

/// Worst relative mismatch between the discrete pencil's eigenvalues and the
/// growth roots of the model's eigenvalues, over one random trial.
fn equivalence_trial(spec: &MethodSpec, cfg: &ValidationConfig, trial: usize) -> Result<f64> {
    let mut rng = trial_rng(cfg.seed, 1, trial);
    let dim = rng.random_range(1..=cfg.max_dim);
    let (a, eig) = random_diagonalizable(&mut rng, dim);
    let lm = LinearizedModel::ode(a)?;
    let mut worst: f64 = 0.0;
    for &h in &cfg.steps {
        let spectrum = finite_eigenvalues(&pencil_for(spec, &lm, h, cfg.perturb_itm)?, DEFAULT_INFINITE_TOL)?;
        let mut expected = Vec::new();
        for l in &eig {
            expected.extend(growth_roots(spec, l * h)?);
        }
        worst = worst.max(set_distance(&spectrum.finite, &expected));
    }
    Ok(worst)
}

fn equivalence_check(name: String, spec: &MethodSpec, cfg: &ValidationConfig, exec: Execution) -> CheckResult {
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let results = exec.map(&trials, |&t| equivalence_trial(spec, cfg, t));
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(w) => worst = worst.max(w),
            Err(e) => {
                worst = f64::INFINITY;
                if detail.is_empty() {
                    detail = format!("trial {t}: {e}");
                }
            }
        }
    }
    CheckResult {
        name,
        passed: worst <= EQUIVALENCE_TOL,
        worst,
        tolerance: EQUIVALENCE_TOL,
        detail,
    }
}

fn moebius_identity_check() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut cases = 0;
    for _ in 0..10 {
        let dim = rng.random_range(1..=6);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-5.0..5.0));
        let e = DMatrix::from_fn(dim, dim, |i, j| if i == j && rng.random_bool(0.7) { 1.0 } else { 0.0 });
        let Ok(pencil) = crate::pencil::LinearPencil::new(e, a) else { continue };
        let lm = LinearizedModel::from_pencil(pencil);
        for h in [1e-3, 0.05, 0.7] {
            for (q, named) in [
                (Moebius::FEM, MethodSpec::ForwardEuler),
                (Moebius::BEM, MethodSpec::BackwardEuler),
                (Moebius::ITM, MethodSpec::Trapezoidal),
            ] {
                cases += 1;
                let same = match (build_pencil(&MethodSpec::Moebius(q), &lm, h), build_pencil(&named, &lm, h)) {
                    (Ok(x), Ok(y)) => x == y,
                    _ => false,
                };
                if !same {
                    mismatches += 1;
                }
            }
        }
    }
    CheckResult {
        name: "moebius-specializations".into(),
        passed: mismatches == 0,
        worst: mismatches as f64,
        tolerance: 0.0,
        detail: format!("{cases} pencils compared entrywise"),
    }
}

/// Quadruples passing [`moebius_is_symmetric_a_stable`]: ITM and random
/// members of both coefficient patterns.
pub fn symmetric_quadruples(rng: &mut impl Rng, count: usize) -> Vec<Moebius> {
    let mut out = vec![Moebius::ITM, Moebius::new(2.0, 2.0, 3.0, -3.0)];
    while out.len() < count {
        let a: f64 = rng.random_range(0.2..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let c = rng.random_range(0.05..3.0) * a.signum();
        let q = if rng.random_bool(0.5) {
            Moebius::new(a, a, c, -c)
        } else {
            Moebius::new(a, -a, c, c)
        };
        if moebius_is_symmetric_a_stable(&q).unwrap_or(false) {
            out.push(q);
        }
    }
    out
}

fn moebius_mapping_check(cfg: &ValidationConfig) -> CheckResult {
    let mut rng = trial_rng(cfg.seed, 2, 0);
    let quads = symmetric_quadruples(&mut rng, 12);
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    for q in &quads {
        for _ in 0..cfg.mapping_samples {
            let mag = 10f64.powf(rng.random_range(-3.0..3.0));
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let s = Complex64::from_polar(mag, theta);
            if s.re == 0.0 {
                continue;
            }
            let Ok(z) = q.growth(s) else {
                violations += 1;
                continue;
            };
            let margin = if s.re < 0.0 { 1.0 - z.norm() } else { z.norm() - 1.0 };
            worst_margin = worst_margin.min(margin);
            if margin <= 0.0 {
                violations += 1;
            }
        }
    }
    CheckResult {
        name: "moebius-mapping".into(),
        passed: violations == 0,
        worst: violations as f64,
        tolerance: 0.0,
        detail: format!(
            "{} quadruples x {} samples, smallest margin {:.3e}",
            quads.len(),
            cfg.mapping_samples,
            worst_margin
        ),
    }
}

/// Steps used for slope fits: `0.1·2^−k`, `k = 0..5`.
pub fn slope_steps() -> Vec<f64> {
    (0..6).map(|k| 0.1 * 0.5_f64.powi(k)).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `|d_s|` of the mode `s` under `spec` at each step.
pub fn distortion_curve(spec: &MethodSpec, s: Complex64, steps: &[f64]) -> Result<Vec<f64>> {
    let lm = mode_fixture(s)?;
    steps
        .iter()
        .map(|&h| {
            let r = distortion_report(spec, &lm, h)?;
            let row = r
                .rows
                .iter()
                .min_by(|a, b| (a.s - s).norm().total_cmp(&(b.s - s).norm()))
                .expect("fixture has rows");
            Ok(row.abs_ds)
        })
        .collect()
}

pub const SLOPE_MODE: Complex64 = Complex64::new(-1.0, 2.0);

fn slope_check(spec: &MethodSpec) -> CheckResult {
    let steps = slope_steps();
    let required = spec.order() as f64 - SLOPE_SLACK;
    let name = format!("order-slope-{}", spec.tag());
    match distortion_curve(spec, SLOPE_MODE, &steps) {
        Ok(ds) => {
            let slope = loglog_slope(&steps, &ds);
            CheckResult {
                name,
                passed: slope >= required,
                worst: slope,
                tolerance: required,
                detail: "log-log slope of |d_s| against h".into(),
            }
        }
        Err(e) => CheckResult {
            name,
            passed: false,
            worst: f64::NAN,
            tolerance: required,
            detail: e.to_string(),
        },
    }
}

fn consistency_check() -> CheckResult {
    let mut bad = Vec::new();
    for spec in MethodSpec::CATALOG {
        let ok = growth_roots(&spec, Complex64::new(0.0, 0.0))
            .is_ok_and(|r| r.iter().any(|z| (z - 1.0).norm() < 1e-15));
        if !ok {
            bad.push(spec.tag());
        }
    }
    CheckResult {
        name: "consistency".into(),
        passed: bad.is_empty(),
        worst: bad.len() as f64,
        tolerance: 0.0,
        detail: if bad.is_empty() { String::new() } else { format!("failing: {}", bad.join(", ")) },
    }
}

/// The one-step methods covered by the equivalence property.
pub const ONE_STEP: [MethodSpec; 5] = [
    MethodSpec::ForwardEuler,
    MethodSpec::Rk4,
    MethodSpec::BackwardEuler,
    MethodSpec::Trapezoidal,
    MethodSpec::TwoStageDirk,
];

pub fn run_validation(cfg: &ValidationConfig, exec: Execution) -> ValidationReport {
    let mut checks = Vec::new();
    for spec in &ONE_STEP {
        checks.push(equivalence_check(format!("growth-pencil-{}", spec.tag()), spec, cfg, exec));
    }
    checks.push(equivalence_check("bdf2-companion".into(), &MethodSpec::Bdf2, cfg, exec));
    checks.push(moebius_identity_check());
    checks.push(moebius_mapping_check(cfg));
    checks.push(consistency_check());
    for spec in &MethodSpec::CATALOG {
        checks.push(slope_check(spec));
    }
    ValidationReport { checks }
}
