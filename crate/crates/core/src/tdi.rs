//! Nonlinear time-domain integration of `E·x′ = φ(x)`.
//!
//! Implicit methods solve one residual `a·E·x − c·h·φ(x) − v = 0` per stage
//! by Newton. Explicit methods run on the reduced ODE of the differential
//! variables and re-solve the algebraic constraints at every stage.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factored};
use crate::methods::{ButcherTableau, MethodSpec, Moebius, DIRK_ALPHA, DIRK_BETA};
use crate::models::{DaeModel, Mutation};
use crate::textfmt::format_report;

/// `‖x‖∞` above which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Step of [`reference_trajectory`].
pub const REFERENCE_STEP: f64 = 0.001;

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub h: f64,
    pub t_end: f64,
    pub method: MethodSpec,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// `(time, mutation)`, applied at the first step boundary at or after `time`.
    pub disturbances: Vec<(f64, Mutation)>,
}

impl SimulationConfig {
    pub fn new(method: MethodSpec, h: f64, t_end: f64) -> Self {
        Self {
            h,
            t_end,
            method,
            newton_tol: 1e-8,
            newton_max_iter: 20,
            disturbances: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.h)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.h) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} must be at least one step (h = {})",
                self.t_end, self.h
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("Newton tolerance and iteration cap must be positive".into()));
        }
        for (t, m) in &self.disturbances {
            if !(t.is_finite() && *t >= 0.0 && *t <= self.t_end) {
                return Err(Error::InvalidParameter(format!(
                    "disturbance `{}` at t = {t} lies outside [0, {}]",
                    m.parameter, self.t_end
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.h) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Newton iterations spent reaching each sample (0 for `t = 0`).
    pub newton_iters: Vec<usize>,
    pub divergence: Option<Divergence>,
}

impl Trajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories hold the initial state")
    }

    pub fn variable(&self, index: usize) -> Result<Vec<f64>> {
        let dim = self.states[0].len();
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        Ok(self.states.iter().map(|x| x[index]).collect())
    }

    /// Linear interpolation of variable `index` at `t`.
    pub fn sample(&self, index: usize, t: f64) -> Result<f64> {
        let dim = self.states[0].len();
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        let first = self.times[0];
        let last = *self.times.last().expect("non-empty");
        let slack = 1e-9 * self.h.max(last.abs());
        if t < first - slack || t > last + slack {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside the trajectory span [{first}, {last}]"
            )));
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Ok(self.states[0][index]);
        }
        if k >= self.times.len() {
            return Ok(self.last()[index]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.states[k - 1][index] * (1.0 - w) + self.states[k][index] * w)
    }

    /// CSV `t,x_0,...,x_{r−1},newton_iters`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let r = self.states[0].len();
        let cols: Vec<String> = (0..r).map(|i| format!("x_{i}")).collect();
        writeln!(w, "t,{},newton_iters", cols.join(","))?;
        for ((t, x), n) in self.times.iter().zip(&self.states).zip(&self.newton_iters) {
            let vals: Vec<String> = x.iter().map(|v| format_report(*v)).collect();
            writeln!(w, "{},{},{}", format_report(*t), vals.join(","), n)?;
        }
        Ok(())
    }

    /// Two-column `t x_i` data for one variable.
    pub fn write_gnuplot<W: Write>(&self, index: usize, mut w: W) -> Result<()> {
        let values = self.variable(index)?;
        let io = |source| Error::Io {
            path: "<gnuplot output>".into(),
            source,
        };
        writeln!(w, "# t x_{index}").map_err(io)?;
        for (t, v) in self.times.iter().zip(values) {
            writeln!(w, "{} {}", format_report(*t), format_report(v)).map_err(io)?;
        }
        Ok(())
    }
}

/// Variable partition used by explicit stepping and constraint projection.
struct Structure {
    diff_rows: Vec<usize>,
    diff_vars: Vec<usize>,
    alg_rows: Vec<usize>,
    alg_vars: Vec<usize>,
    e_dd: Factored,
}

impl Structure {
    /// Algebraic rows are the zero rows of `E`, algebraic variables its zero
    /// columns; the remaining block must be nonsingular.
    fn of(m: &DaeModel) -> Option<Self> {
        let e = m.mass();
        let r = e.nrows();
        let zero_row = |i: usize| e.row(i).iter().all(|v| *v == 0.0);
        let zero_col = |j: usize| e.column(j).iter().all(|v| *v == 0.0);
        let alg_rows: Vec<usize> = (0..r).filter(|&i| zero_row(i)).collect();
        let alg_vars: Vec<usize> = (0..r).filter(|&j| zero_col(j)).collect();
        if alg_rows.len() != alg_vars.len() || alg_rows.len() == r {
            return None;
        }
        let diff_rows: Vec<usize> = (0..r).filter(|i| !alg_rows.contains(i)).collect();
        let diff_vars: Vec<usize> = (0..r).filter(|j| !alg_vars.contains(j)).collect();
        let e_dd = DMatrix::from_fn(diff_rows.len(), diff_vars.len(), |i, j| e[(diff_rows[i], diff_vars[j])]);
        let e_dd = Factored::new(&e_dd, || "differential block of E".into()).ok()?;
        Some(Self {
            diff_rows,
            diff_vars,
            alg_rows,
            alg_vars,
            e_dd,
        })
    }

    fn gather(idx: &[usize], v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
    }
}

struct NewtonOutcome {
    x: DVector<f64>,
    iterations: usize,
}

#[derive(Debug)]
enum StepFailure {
    Newton { residual: f64, iterations: usize },
    Numerical(Error),
}

impl From<Error> for StepFailure {
    fn from(e: Error) -> Self {
        StepFailure::Numerical(e)
    }
}

impl StepFailure {
    fn describe(&self) -> String {
        match self {
            StepFailure::Newton { residual, iterations } => {
                format!("Newton did not converge after {iterations} iterations (residual {residual:.3e})")
            }
            StepFailure::Numerical(e) => e.to_string(),
        }
    }
}

/// One implicit stage `a·E·x − ch·φ(x) − v = 0`.
#[derive(Clone, Debug)]
pub struct ImplicitStage {
    pub a: f64,
    pub ch: f64,
    pub rhs: DVector<f64>,
}

impl ImplicitStage {
    pub fn residual(&self, m: &DaeModel, x: &DVector<f64>) -> DVector<f64> {
        m.mass() * x * self.a - m.residual(x) * self.ch - &self.rhs
    }

    pub fn jacobian(&self, m: &DaeModel, x: &DVector<f64>) -> DMatrix<f64> {
        m.mass() * self.a - m.jacobian(x) * self.ch
    }
}

struct Stepper<'a> {
    model: DaeModel,
    cfg: &'a SimulationConfig,
    structure: Option<Structure>,
}

impl Stepper<'_> {
    fn newton(&self, stage: &ImplicitStage, guess: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let mut x = guess.clone();
        let mut res = stage.residual(&self.model, &x);
        let mut norm = inf_norm(&res);
        let mut iterations = 0;
        while !(norm <= self.cfg.newton_tol) {
            if iterations == self.cfg.newton_max_iter || !norm.is_finite() {
                return Err(StepFailure::Newton {
                    residual: norm,
                    iterations,
                });
            }
            let j = stage.jacobian(&self.model, &x);
            let dx = Factored::new(&j, || "implicit step Jacobian".into())?.solve(&res);
            x -= dx;
            res = stage.residual(&self.model, &x);
            norm = inf_norm(&res);
            iterations += 1;
        }
        Ok(NewtonOutcome { x, iterations })
    }

    /// Solves the algebraic rows for the algebraic variables, differential
    /// variables held fixed.
    fn project(&self, x: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let Some(st) = &self.structure else {
            return Ok(NewtonOutcome {
                x: x.clone(),
                iterations: 0,
            });
        };
        if st.alg_vars.is_empty() {
            return Ok(NewtonOutcome {
                x: x.clone(),
                iterations: 0,
            });
        }
        let mut x = x.clone();
        let mut iterations = 0;
        loop {
            let g = Structure::gather(&st.alg_rows, &self.model.residual(&x));
            let norm = inf_norm(&g);
            if norm <= self.cfg.newton_tol {
                return Ok(NewtonOutcome { x, iterations });
            }
            if iterations == self.cfg.newton_max_iter || !norm.is_finite() {
                return Err(StepFailure::Newton {
                    residual: norm,
                    iterations,
                });
            }
            let j = self.model.jacobian(&x);
            let jyy = DMatrix::from_fn(st.alg_rows.len(), st.alg_vars.len(), |i, k| j[(st.alg_rows[i], st.alg_vars[k])]);
            let dy = Factored::new(&jyy, || "algebraic Jacobian ∂g/∂y".into())?.solve(&g);
            for (k, &v) in st.alg_vars.iter().enumerate() {
                x[v] -= dy[k];
            }
            iterations += 1;
        }
    }

    fn structure(&self) -> std::result::Result<&Structure, StepFailure> {
        self.structure.as_ref().ok_or_else(|| {
            StepFailure::Numerical(Error::Unsupported(format!(
                "explicit method {} needs E with zero rows and columns matching and a nonsingular remainder",
                self.cfg.method
            )))
        })
    }

    /// Reduced-ODE derivative of the differential variables at a consistent state.
    fn reduced_derivative(&self, x: &DVector<f64>) -> std::result::Result<DVector<f64>, StepFailure> {
        let st = self.structure()?;
        let phi = Structure::gather(&st.diff_rows, &self.model.residual(x));
        Ok(st.e_dd.solve(&phi))
    }

    fn with_diff(&self, base: &DVector<f64>, diff: &DVector<f64>) -> DVector<f64> {
        let st = self.structure.as_ref().expect("structure checked");
        let mut x = base.clone();
        for (k, &v) in st.diff_vars.iter().enumerate() {
            x[v] = diff[k];
        }
        x
    }

    fn explicit_rk(&self, t: &ButcherTableau, x: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let st = self.structure()?;
        let h = self.cfg.h;
        let xd = Structure::gather(&st.diff_vars, x);
        let mut ks: Vec<DVector<f64>> = Vec::with_capacity(t.stages());
        let mut iterations = 0;
        for i in 0..t.stages() {
            let mut stage_d = xd.clone();
            for (j, k) in ks.iter().enumerate() {
                let q = t.q[(i, j)];
                if q != 0.0 {
                    stage_d += k * (h * q);
                }
            }
            let stage = if i == 0 {
                x.clone()
            } else {
                let p = self.project(&self.with_diff(x, &stage_d))?;
                iterations += p.iterations;
                p.x
            };
            ks.push(self.reduced_derivative(&stage)?);
        }
        let mut next_d = xd;
        for (i, k) in ks.iter().enumerate() {
            next_d += k * (h * t.weights[i]);
        }
        let p = self.project(&self.with_diff(x, &next_d))?;
        Ok(NewtonOutcome {
            x: p.x,
            iterations: iterations + p.iterations,
        })
    }

    /// Möbius-form step: implicit when `c ≠ 0`, otherwise an explicit update
    /// of the differential rows followed by projection.
    fn moebius(&self, q: &Moebius, x: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let h = self.cfg.h;
        let e = self.model.mass();
        let rhs = self.model.residual(x) * (q.d * h) - e * x * q.b;
        if q.c != 0.0 {
            return self.newton(
                &ImplicitStage {
                    a: q.a,
                    ch: q.c * h,
                    rhs,
                },
                x,
            );
        }
        let st = self.structure()?;
        let v = Structure::gather(&st.diff_rows, &rhs) / q.a;
        let next_d = st.e_dd.solve(&v);
        self.project(&self.with_diff(x, &next_d))
    }

    fn dirk(&self, x: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let h = self.cfg.h;
        let e = self.model.mass();
        let s1 = self.newton(
            &ImplicitStage {
                a: 1.0,
                ch: DIRK_ALPHA * h,
                rhs: e * x,
            },
            x,
        )?;
        // u = βx_prev + γx_s with β + γ = 1.
        let u = &s1.x + (x - &s1.x) * DIRK_BETA;
        let s2 = self.newton(
            &ImplicitStage {
                a: 1.0,
                ch: DIRK_ALPHA * h,
                rhs: e * u,
            },
            &s1.x,
        )?;
        Ok(NewtonOutcome {
            x: s2.x,
            iterations: s1.iterations + s2.iterations,
        })
    }

    fn bdf2(&self, x1: &DVector<f64>, x2: &DVector<f64>) -> std::result::Result<NewtonOutcome, StepFailure> {
        let e = self.model.mass();
        let rhs = e * (x1 * (4.0 / 3.0) - x2 * (1.0 / 3.0));
        self.newton(
            &ImplicitStage {
                a: 1.0,
                ch: 2.0 / 3.0 * self.cfg.h,
                rhs,
            },
            x1,
        )
    }

    fn step(&self, history: &[DVector<f64>]) -> std::result::Result<NewtonOutcome, StepFailure> {
        let x = history.last().expect("history holds the current state");
        match &self.cfg.method {
            MethodSpec::ForwardEuler => self.explicit_rk(&forward_euler_tableau(), x),
            MethodSpec::Rk4 => self.explicit_rk(&ButcherTableau::classical_rk4(), x),
            MethodSpec::Tableau(t) => self.explicit_rk(t, x),
            MethodSpec::BackwardEuler => self.moebius(&Moebius::BEM, x),
            MethodSpec::Trapezoidal => self.moebius(&Moebius::ITM, x),
            MethodSpec::Moebius(q) => self.moebius(q, x),
            MethodSpec::TwoStageDirk => self.dirk(x),
            MethodSpec::Bdf2 => match history.len() {
                1 => self.moebius(&Moebius::ITM, x),
                n => self.bdf2(x, &history[n - 2]),
            },
        }
    }
}

fn forward_euler_tableau() -> ButcherTableau {
    ButcherTableau::new(DMatrix::zeros(1, 1), DVector::from_element(1, 1.0), Some("fem".into()))
        .expect("valid tableau")
}

/// Integrates from `x0` (projected onto the constraints first). Newton
/// failure and blow-up end the run early with the divergence flag set.
pub fn simulate(m: &DaeModel, cfg: &SimulationConfig, x0: &DVector<f64>) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: m.dim().to_string(),
            found: x0.len().to_string(),
        });
    }
    if let MethodSpec::Tableau(t) = &cfg.method {
        if !t.is_explicit() {
            return Err(Error::Unsupported(format!(
                "time-domain stepping of implicit tableau {}",
                cfg.method
            )));
        }
    }
    if let MethodSpec::Moebius(q) = &cfg.method {
        q.validate()?;
    }
    let mut stepper = Stepper {
        model: m.clone(),
        cfg,
        structure: Structure::of(m),
    };
    if !cfg.method.is_implicit() {
        stepper.structure().map_err(|f| match f {
            StepFailure::Numerical(e) => e,
            other => Error::Unsupported(other.describe()),
        })?;
    }

    let mut disturbances: Vec<&(f64, Mutation)> = cfg.disturbances.iter().collect();
    disturbances.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pending = disturbances.into_iter().peekable();
    let eps = 1e-9 * cfg.h;

    let mut apply_due = |stepper: &mut Stepper, t: f64| -> Result<bool> {
        let mut applied = false;
        while let Some((_, mutation)) = pending.next_if(|(td, _)| *td <= t + eps) {
            stepper.model.apply(mutation)?;
            applied = true;
        }
        Ok(applied)
    };

    apply_due(&mut stepper, 0.0)?;
    let start = stepper.project(x0).map_err(|f| match f {
        StepFailure::Newton { residual, .. } => Error::InconsistentInitial { residual },
        StepFailure::Numerical(e) => e,
    })?;

    let n = cfg.steps();
    let mut traj = Trajectory {
        h: cfg.h,
        times: vec![0.0],
        states: vec![start.x],
        newton_iters: vec![start.iterations],
        divergence: None,
    };
    for k in 1..=n {
        let t_prev = (k - 1) as f64 * cfg.h;
        let t = k as f64 * cfg.h;
        let mut extra = 0;
        if k > 1 && apply_due(&mut stepper, t_prev)? {
            let last = traj.states.len() - 1;
            match stepper.project(&traj.states[last]) {
                Ok(p) => {
                    traj.states[last] = p.x;
                    extra = p.iterations;
                }
                Err(f) => {
                    traj.divergence = Some(Divergence {
                        time: t_prev,
                        reason: format!("constraint projection after disturbance: {}", f.describe()),
                    });
                    break;
                }
            }
        }
        let from = traj.states.len().saturating_sub(2);
        match stepper.step(&traj.states[from..]) {
            Ok(out) => {
                let norm = inf_norm(&out.x);
                traj.times.push(t);
                traj.states.push(out.x);
                traj.newton_iters.push(out.iterations + extra);
                if !(norm <= DIVERGENCE_NORM) {
                    traj.divergence = Some(Divergence {
                        time: t,
                        reason: format!("state norm {norm:.3e} exceeds {DIVERGENCE_NORM:e}"),
                    });
                    break;
                }
            }
            Err(StepFailure::Numerical(e)) if e.is_input_error() => return Err(e),
            Err(f) => {
                traj.divergence = Some(Divergence {
                    time: t,
                    reason: f.describe(),
                });
                break;
            }
        }
    }
    Ok(traj)
}

/// 2S-DIRK at `h = 0.001`.
pub fn reference_trajectory(m: &DaeModel, t_end: f64, x0: &DVector<f64>) -> Result<Trajectory> {
    simulate(m, &SimulationConfig::new(MethodSpec::TwoStageDirk, REFERENCE_STEP, t_end), x0)
}

/// Reference run for `cfg`, keeping its horizon, tolerances and disturbances.
pub fn reference_for(m: &DaeModel, cfg: &SimulationConfig, x0: &DVector<f64>) -> Result<Trajectory> {
    let mut r = cfg.clone();
    r.method = MethodSpec::TwoStageDirk;
    r.h = REFERENCE_STEP;
    simulate(m, &r, x0)
}

/// `Σ_{k≥1} |x_i(t_k) − x_i^ref(t_k)|·h`, the reference linearly
/// interpolated; a divergent run scores `+∞`.
pub fn trajectory_mismatch(traj: &Trajectory, reference: &Trajectory, index: usize) -> Result<f64> {
    let dim = traj.states[0].len();
    if index >= dim || index >= reference.states[0].len() {
        return Err(Error::IndexOutOfRange { index, dim });
    }
    if traj.divergence.is_some() || reference.divergence.is_some() {
        return Ok(f64::INFINITY);
    }
    let mut total = 0.0;
    for k in 1..traj.times.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        let r = reference.sample(index, traj.times[k])?;
        total += (traj.states[k][index] - r).abs() * dt;
    }
    Ok(total)
}
