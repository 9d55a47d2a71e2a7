//! Nonlinear DAE models `E·x′ = φ(x)`, their linearization at an
//! equilibrium, built-in fixtures, and linear-model file ingestion.
//!
//! Models are plain values: residual and Jacobian evaluation take `&self`
//! and keep no caches, so sweeps may evaluate one model from many threads.
//! Disturbances mutate a private clone (see [`DaeModel::apply`]).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Factored};
use crate::pencil::{check_finite, LinearPencil};
use crate::textfmt::parse_complex;

/// Residual tolerance an equilibrium must meet before linearization.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Step halvings allowed per damped Newton iteration.
const MAX_HALVINGS: usize = 20;

pub type ResidualFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// Single-machine infinite-bus parameters (per-unit, seconds, rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct SmibParams {
    pub omega_b: f64,
    pub inertia: f64,
    pub damping: f64,
    pub p_m: f64,
    pub e: f64,
    pub v: f64,
    pub x_eq: f64,
}

impl Default for SmibParams {
    fn default() -> Self {
        Self {
            omega_b: 2.0 * std::f64::consts::PI * 60.0,
            inertia: 3.5,
            damping: 1.0,
            p_m: 0.8,
            e: 1.05,
            v: 1.0,
            x_eq: 0.65,
        }
    }
}

impl SmibParams {
    /// Peak transferable power `e′v/x_eq`.
    pub fn k(&self) -> f64 {
        self.e * self.v / self.x_eq
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "omega_b" => &mut self.omega_b,
            "h" | "inertia" => &mut self.inertia,
            "d" | "damping" => &mut self.damping,
            "p_m" | "pm" => &mut self.p_m,
            "e" => &mut self.e,
            "v" => &mut self.v,
            "x_eq" | "xeq" => &mut self.x_eq,
            other => {
                return Err(Error::InvalidParameter(format!("unknown SMIB parameter `{other}`")))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Checks the documented physical ranges: `omega_b ∈ (0, 1e4]`,
    /// `h ∈ (0, 100]`, `d ∈ [0, 100]`, `e, v ∈ (0, 2]`, `x_eq ∈ (0, 5]`,
    /// `p_m ∈ [0, e′v/x_eq)`.
    pub fn validate(&self) -> Result<()> {
        let in_range = |name: &str, x: f64, lo: f64, hi: f64, lo_open: bool| -> Result<()> {
            let ok = x.is_finite() && (if lo_open { x > lo } else { x >= lo }) && x <= hi;
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("SMIB parameter {name} = {x} out of range")))
            }
        };
        in_range("omega_b", self.omega_b, 0.0, 1e4, true)?;
        in_range("h", self.inertia, 0.0, 100.0, true)?;
        in_range("d", self.damping, 0.0, 100.0, false)?;
        in_range("e", self.e, 0.0, 2.0, true)?;
        in_range("v", self.v, 0.0, 2.0, true)?;
        in_range("x_eq", self.x_eq, 0.0, 5.0, true)?;
        if !(self.p_m.is_finite() && self.p_m >= 0.0 && self.p_m < self.k()) {
            return Err(Error::InvalidParameter(format!(
                "SMIB p_m = {} must lie in [0, e'v/x_eq = {})",
                self.p_m,
                self.k()
            )));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum Dynamics {
    /// `φ(x) = A x + b`.
    Linear { a: DMatrix<f64>, b: DVector<f64> },
    /// States `[δ, ω, p_e]`.
    Smib(SmibParams),
    /// User residual; Jacobian by central differences.
    Custom(Arc<ResidualFn>),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Linear { a, b } => f.debug_struct("Linear").field("a", a).field("b", b).finish(),
            Dynamics::Smib(p) => f.debug_tuple("Smib").field(p).finish(),
            Dynamics::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A parameter change applied to a model between integration steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Mutation {
    pub parameter: String,
    pub value: f64,
}

impl FromStr for Mutation {
    type Err = Error;

    /// `name=value`, e.g. `x_eq=0.9`, `a[0,1]=2.5`, `b[1]=0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("mutation `{s}` is not name=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("mutation `{s}` has a non-numeric value")))?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("mutation `{s}` value is not finite")));
        }
        Ok(Self {
            parameter: name.trim().to_string(),
            value,
        })
    }
}

#[derive(Clone, Debug)]
pub struct DaeModel {
    name: String,
    mass: DMatrix<f64>,
    m_x: usize,
    m_y: usize,
    dynamics: Dynamics,
}

impl DaeModel {
    fn build(name: String, mass: DMatrix<f64>, m_x: usize, m_y: usize, dynamics: Dynamics) -> Result<Self> {
        let r = mass.nrows();
        if !mass.is_square() || r == 0 {
            return Err(Error::DimensionMismatch {
                what: "mass matrix",
                expected: "non-empty square matrix".into(),
                found: format!("{}x{}", mass.nrows(), mass.ncols()),
            });
        }
        if m_x + m_y != r {
            return Err(Error::DimensionMismatch {
                what: "m_x + m_y",
                expected: r.to_string(),
                found: (m_x + m_y).to_string(),
            });
        }
        check_finite(&mass, "mass matrix")?;
        Ok(Self {
            name,
            mass,
            m_x,
            m_y,
            dynamics,
        })
    }

    pub fn linear(
        name: impl Into<String>,
        mass: DMatrix<f64>,
        a: DMatrix<f64>,
        b: Option<DVector<f64>>,
        m_x: usize,
        m_y: usize,
    ) -> Result<Self> {
        let r = mass.nrows();
        if a.shape() != (r, r) {
            return Err(Error::DimensionMismatch {
                what: "state matrix A",
                expected: format!("{r}x{r}"),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        check_finite(&a, "state matrix A")?;
        let b = b.unwrap_or_else(|| DVector::zeros(r));
        if b.len() != r {
            return Err(Error::DimensionMismatch {
                what: "offset vector b",
                expected: r.to_string(),
                found: b.len().to_string(),
            });
        }
        if let Some(i) = b.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "offset vector b",
                row: i,
                col: 0,
            });
        }
        Self::build(name.into(), mass, m_x, m_y, Dynamics::Linear { a, b })
    }

    pub fn custom(
        name: impl Into<String>,
        mass: DMatrix<f64>,
        m_x: usize,
        m_y: usize,
        residual: Arc<ResidualFn>,
    ) -> Result<Self> {
        Self::build(name.into(), mass, m_x, m_y, Dynamics::Custom(residual))
    }

    pub fn smib(params: SmibParams) -> Result<Self> {
        params.validate()?;
        Self::build("smib".into(), explicit_mass(2, 1), 2, 1, Dynamics::Smib(params))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn m_x(&self) -> usize {
        self.m_x
    }

    pub fn m_y(&self) -> usize {
        self.m_y
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// True when `E = [[I_mx, 0], [0, 0]]` exactly.
    pub fn is_semi_explicit(&self) -> bool {
        self.mass == explicit_mass(self.m_x, self.m_y)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        !matches!(self.dynamics, Dynamics::Custom(_))
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.dynamics {
            Dynamics::Linear { a, b } => a * x + b,
            Dynamics::Smib(p) => {
                let (delta, omega, p_e) = (x[0], x[1], x[2]);
                DVector::from_vec(vec![
                    p.omega_b * (omega - 1.0),
                    (p.p_m - p_e - p.damping * (omega - 1.0)) / (2.0 * p.inertia),
                    p_e - p.k() * delta.sin(),
                ])
            }
            Dynamics::Custom(f) => f(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.dynamics {
            Dynamics::Linear { a, .. } => a.clone(),
            Dynamics::Smib(p) => {
                let m = 2.0 * p.inertia;
                let mut j = DMatrix::zeros(3, 3);
                j[(0, 1)] = p.omega_b;
                j[(1, 1)] = -p.damping / m;
                j[(1, 2)] = -1.0 / m;
                j[(2, 0)] = -p.k() * x[0].cos();
                j[(2, 2)] = 1.0;
                j
            }
            Dynamics::Custom(_) => self.fd_jacobian(x),
        }
    }

    /// Central differences with step `√ε·max(1, |x_i|)`.
    pub fn fd_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let r = self.dim();
        let mut j = DMatrix::zeros(r, r);
        let sqrt_eps = f64::EPSILON.sqrt();
        let mut xp = x.clone();
        for col in 0..r {
            let step = sqrt_eps * x[col].abs().max(1.0);
            let orig = x[col];
            xp[col] = orig + step;
            let fp = self.residual(&xp);
            xp[col] = orig - step;
            let fm = self.residual(&xp);
            xp[col] = orig;
            let span = 2.0 * step;
            j.set_column(col, &((fp - fm) / span));
        }
        j
    }

    /// Applies a parameter change in place.
    ///
    /// Linear models accept `a[i,j]` and `b[i]`; the SMIB model accepts its
    /// parameter names (`omega_b`, `h`, `d`, `p_m`, `e`, `v`, `x_eq`).
    pub fn apply(&mut self, mutation: &Mutation) -> Result<()> {
        let name = mutation.parameter.as_str();
        match &mut self.dynamics {
            Dynamics::Smib(p) => {
                let mut next = p.clone();
                next.set(name, mutation.value)?;
                next.validate()?;
                *p = next;
                Ok(())
            }
            Dynamics::Linear { a, b } => {
                let indices = parse_indexed(name)?;
                match indices {
                    ('a', [Some(i), Some(j)]) if i < a.nrows() && j < a.ncols() => a[(i, j)] = mutation.value,
                    ('b', [Some(i), None]) if i < b.len() => b[i] = mutation.value,
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "`{name}` is not an entry of this {}x{} linear model",
                            a.nrows(),
                            a.ncols()
                        )))
                    }
                }
                Ok(())
            }
            Dynamics::Custom(_) => Err(Error::Unsupported(format!(
                "custom model `{}` has no mutable parameters",
                self.name
            ))),
        }
    }
}

/// Parses `a[i,j]` or `b[i]`.
fn parse_indexed(name: &str) -> Result<(char, [Option<usize>; 2])> {
    let bad = || Error::InvalidParameter(format!("cannot parse linear-model parameter `{name}`"));
    let (head, rest) = name.split_once('[').ok_or_else(bad)?;
    let inner = rest.strip_suffix(']').ok_or_else(bad)?;
    let which = match head.trim() {
        "a" | "A" => 'a',
        "b" => 'b',
        _ => return Err(bad()),
    };
    let mut idx = inner.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| bad()));
    let i = idx.next().ok_or_else(bad)??;
    let j = idx.next().transpose()?;
    if idx.next().is_some() {
        return Err(bad());
    }
    match (which, j) {
        ('a', Some(j)) => Ok(('a', [Some(i), Some(j)])),
        ('b', None) => Ok(('b', [Some(i), None])),
        _ => Err(bad()),
    }
}

/// The explicit-DAE mass matrix `[[I_mx, 0], [0, 0]]`.
pub fn explicit_mass(m_x: usize, m_y: usize) -> DMatrix<f64> {
    let r = m_x + m_y;
    let mut e = DMatrix::zeros(r, r);
    for i in 0..m_x {
        e[(i, i)] = 1.0;
    }
    e
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedModel {
    pub pencil: LinearPencil,
    pub x_o: DVector<f64>,
}

impl LinearizedModel {
    /// `E = I`, `A = a`, equilibrium at the origin.
    pub fn ode(a: DMatrix<f64>) -> Result<Self> {
        let r = a.nrows();
        Ok(Self {
            pencil: LinearPencil::new(DMatrix::identity(r, r), a)?,
            x_o: DVector::zeros(r),
        })
    }

    pub fn from_pencil(pencil: LinearPencil) -> Self {
        let r = pencil.dim();
        Self {
            pencil,
            x_o: DVector::zeros(r),
        }
    }

    pub fn e(&self) -> &DMatrix<f64> {
        self.pencil.lhs()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        self.pencil.rhs()
    }

    pub fn dim(&self) -> usize {
        self.pencil.dim()
    }
}

/// Damped Newton on `φ(x) = 0`, halving the step until the max-norm
/// residual decreases.
pub fn find_equilibrium(m: &DaeModel, guess: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    if guess.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "equilibrium guess",
            expected: m.dim().to_string(),
            found: guess.len().to_string(),
        });
    }
    let mut x = guess.clone();
    let mut f = m.residual(&x);
    let mut norm = inf_norm(&f);
    for iter in 0..max_iter {
        if norm <= tol {
            return Ok(x);
        }
        let j = m.jacobian(&x);
        let lu = Factored::new(&j, || format!("equilibrium Jacobian at Newton iteration {iter}"))?;
        let dx = lu.solve(&(-&f));
        let mut lambda = 1.0;
        for halving in 0..=MAX_HALVINGS {
            let trial = &x + &dx * lambda;
            let ft = m.residual(&trial);
            let nt = inf_norm(&ft);
            if nt < norm || halving == MAX_HALVINGS {
                x = trial;
                f = ft;
                norm = nt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm <= tol {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: norm,
        })
    }
}

/// `(E, A = ∂φ/∂x at x_o)`, refusing points that are not equilibria.
pub fn linearize(m: &DaeModel, x_o: &DVector<f64>) -> Result<LinearizedModel> {
    linearize_with_tol(m, x_o, EQUILIBRIUM_TOL)
}

pub fn linearize_with_tol(m: &DaeModel, x_o: &DVector<f64>, tol: f64) -> Result<LinearizedModel> {
    if x_o.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            what: "equilibrium point",
            expected: m.dim().to_string(),
            found: x_o.len().to_string(),
        });
    }
    let residual = inf_norm(&m.residual(x_o));
    if !(residual <= tol) {
        return Err(Error::NotEquilibrium { residual, tol });
    }
    Ok(LinearizedModel {
        pencil: LinearPencil::new(m.mass().clone(), m.jacobian(x_o))?,
        x_o: x_o.clone(),
    })
}

/// Built-in fixtures.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    /// `x′ = λx`; a complex `λ` becomes the real 2×2 block `[[α, −β], [β, α]]`.
    Dahlquist(Complex64),
    /// Decoupled decay rates `−σ_fast`, `−σ_slow`.
    Stiff2 { fast: f64, slow: f64 },
    Smib(SmibParams),
}

impl FromStr for Builtin {
    type Err = Error;

    /// `dahlquist:<λ>`, `stiff2:<fast>,<slow>`, `smib` or `smib:<name>=<v>,...`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "dahlquist" => {
                let lambda = if args.is_empty() { Complex64::new(-1.0, 0.0) } else { parse_complex(args)? };
                Ok(Builtin::Dahlquist(lambda))
            }
            "stiff2" => {
                let parts: Vec<&str> = args.split(',').collect();
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("stiff2 rate `{t}` is not a number")))
                };
                match parts.as_slice() {
                    [f, s] => Ok(Builtin::Stiff2 {
                        fast: parse(f)?,
                        slow: parse(s)?,
                    }),
                    _ => Err(Error::InvalidParameter("stiff2 expects `stiff2:<fast>,<slow>`".into())),
                }
            }
            "smib" => {
                let mut p = SmibParams::default();
                for kv in args.split(',').filter(|t| !t.trim().is_empty()) {
                    let m: Mutation = kv.parse()?;
                    p.set(&m.parameter, m.value)?;
                }
                Ok(Builtin::Smib(p))
            }
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

pub fn builtin_model(b: &Builtin) -> Result<DaeModel> {
    match b {
        Builtin::Dahlquist(lambda) => {
            if !(lambda.re.is_finite() && lambda.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("λ = {lambda} is not finite")));
            }
            let a = if lambda.im == 0.0 {
                DMatrix::from_element(1, 1, lambda.re)
            } else {
                DMatrix::from_row_slice(2, 2, &[lambda.re, -lambda.im, lambda.im, lambda.re])
            };
            let r = a.nrows();
            DaeModel::linear("dahlquist", DMatrix::identity(r, r), a, None, r, 0)
        }
        Builtin::Stiff2 { fast, slow } => {
            if !(fast.is_finite() && slow.is_finite() && *fast > 0.0 && *slow > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "stiff2 rates must be positive and finite, got {fast}, {slow}"
                )));
            }
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-fast, -slow]));
            DaeModel::linear("stiff2", DMatrix::identity(2, 2), a, None, 2, 0)
        }
        Builtin::Smib(p) => DaeModel::smib(p.clone()),
    }
}

/// Analytic SMIB operating point: `ω = 1`, `p_e = p_m`, `sin δ = p_m/K`.
pub fn smib_operating_point(p: &SmibParams) -> DVector<f64> {
    let delta = (p.p_m / p.k()).asin();
    DVector::from_vec(vec![delta, 1.0, p.p_m])
}

/// Initial guess used for built-in equilibria.
pub fn default_guess(m: &DaeModel) -> DVector<f64> {
    match m.dynamics() {
        Dynamics::Smib(_) => DVector::from_vec(vec![0.3, 1.0, 0.5]),
        _ => DVector::zeros(m.dim()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelFormat {
    Json,
    /// Two Matrix Market files `<stem>.E.mtx` and `<stem>.A.mtx`.
    MatrixMarketPair,
}

impl ModelFormat {
    pub fn detect(path: &Path) -> Self {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            ModelFormat::Json
        } else {
            ModelFormat::MatrixMarketPair
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub linearized: LinearizedModel,
    pub model: DaeModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonModel {
    r: usize,
    m_x: usize,
    m_y: usize,
    #[serde(rename = "E")]
    e: JsonMatrix,
    #[serde(rename = "A")]
    a: JsonMatrix,
    #[serde(default)]
    b: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonMatrix {
    Dense(Vec<Vec<f64>>),
    Coo { coo: Vec<(usize, usize, f64)>, shape: [usize; 2] },
}

impl JsonMatrix {
    fn into_dense(self, key: &str, path: &str) -> Result<DMatrix<f64>> {
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            message,
        };
        match self {
            JsonMatrix::Dense(rows) => {
                let nrows = rows.len();
                let ncols = rows.first().map_or(0, Vec::len);
                if let Some(i) = rows.iter().position(|row| row.len() != ncols) {
                    return Err(err(format!("{key}[{i}]: row length {} differs from {ncols}", rows[i].len())));
                }
                Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
            }
            JsonMatrix::Coo { coo, shape } => {
                let mut m = DMatrix::zeros(shape[0], shape[1]);
                for (k, &(i, j, v)) in coo.iter().enumerate() {
                    if i >= shape[0] || j >= shape[1] {
                        return Err(err(format!(
                            "{key}.coo[{k}]: index ({i}, {j}) outside shape {}x{}",
                            shape[0], shape[1]
                        )));
                    }
                    m[(i, j)] += v;
                }
                Ok(m)
            }
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a linear model `E·x′ = A·x (+ b)`.
///
/// For the Matrix Market pair, `path` is the stem: the files read are
/// `<stem>.E.mtx` and `<stem>.A.mtx`, and `m_y` is the number of zero rows
/// of `E`.
pub fn load_linear_model(path: &Path, format: ModelFormat) -> Result<LoadedModel> {
    let model = match format {
        ModelFormat::Json => {
            let text = read_file(path)?;
            parse_json_model(&text, &path.display().to_string())?
        }
        ModelFormat::MatrixMarketPair => {
            let (e_path, a_path) = mtx_pair_paths(path);
            let e = parse_matrix_market(&read_file(&e_path)?, &e_path.display().to_string())?;
            let a = parse_matrix_market(&read_file(&a_path)?, &a_path.display().to_string())?;
            let zero_rows = (0..e.nrows()).filter(|&i| e.row(i).iter().all(|v| *v == 0.0)).count();
            let name = path.file_name().map_or("model".into(), |n| n.to_string_lossy().into_owned());
            check_pair(&e, &a)?;
            DaeModel::linear(name, e.clone(), a, None, e.nrows() - zero_rows, zero_rows)?
        }
    };
    let linearized = match model.dynamics() {
        Dynamics::Linear { b, .. } if b.iter().any(|v| *v != 0.0) => {
            let x_o = find_equilibrium(&model, &DVector::zeros(model.dim()), EQUILIBRIUM_TOL, 10)?;
            linearize(&model, &x_o)?
        }
        _ => LinearizedModel {
            pencil: LinearPencil::new(model.mass().clone(), model.jacobian(&DVector::zeros(model.dim())))?,
            x_o: DVector::zeros(model.dim()),
        },
    };
    Ok(LoadedModel { linearized, model })
}

pub fn mtx_pair_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.E.mtx")), PathBuf::from(format!("{s}.A.mtx")))
}

fn check_pair(e: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<()> {
    if !e.is_square() {
        return Err(Error::DimensionMismatch {
            what: "E",
            expected: "square matrix".into(),
            found: format!("{}x{}", e.nrows(), e.ncols()),
        });
    }
    if a.shape() != e.shape() {
        return Err(Error::DimensionMismatch {
            what: "A",
            expected: format!("{}x{}", e.nrows(), e.ncols()),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    Ok(())
}

pub fn parse_json_model(text: &str, path: &str) -> Result<DaeModel> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: JsonModel = serde_path_to_error::deserialize(de).map_err(|err| {
        let key = err.path().to_string();
        let inner = err.into_inner();
        Error::Parse {
            path: path.to_string(),
            message: if key == "." { inner.to_string() } else { format!("key `{key}`: {inner}") },
        }
    })?;
    let e = raw.e.into_dense("E", path)?;
    let a = raw.a.into_dense("A", path)?;
    check_pair(&e, &a)?;
    if e.nrows() != raw.r {
        return Err(Error::DimensionMismatch {
            what: "r",
            expected: e.nrows().to_string(),
            found: raw.r.to_string(),
        });
    }
    let name = Path::new(path)
        .file_stem()
        .map_or("model".into(), |n| n.to_string_lossy().into_owned());
    DaeModel::linear(name, e, a, raw.b.map(DVector::from_vec), raw.m_x, raw.m_y)
}

/// Reads `coordinate` (general or symmetric) and `array` real Matrix Market data.
pub fn parse_matrix_market(text: &str, path: &str) -> Result<DMatrix<f64>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(1, "missing `%%MatrixMarket matrix` header".into()));
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(err(1, format!("unsupported layout `{other}`"))),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer") {
        return Err(err(1, format!("unsupported field `{}`", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));
    let (size_line, size) = data.next().ok_or_else(|| err(2, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(size_line, format!("bad size entry `{t}`"))))
        .collect::<Result<_>>()?;
    let parse_value = |line: usize, t: &str| -> Result<f64> {
        let v: f64 = t.parse().map_err(|_| err(line, format!("bad value `{t}`")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(line, format!("non-finite value `{t}`")))
        }
    };

    if coordinate {
        let [rows, cols, nnz] = dims[..] else {
            return Err(err(size_line, "expected `rows cols nnz`".into()));
        };
        let mut m = DMatrix::zeros(rows, cols);
        let mut count = 0;
        for (line, l) in data {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(err(line, "expected `row col value`".into()));
            }
            let idx = |s: &str, bound: usize| -> Result<usize> {
                let i: usize = s.parse().map_err(|_| err(line, format!("bad index `{s}`")))?;
                if i == 0 || i > bound {
                    return Err(err(line, format!("index {i} outside 1..={bound}")));
                }
                Ok(i - 1)
            };
            let (i, j) = (idx(t[0], rows)?, idx(t[1], cols)?);
            let v = parse_value(line, t[2])?;
            m[(i, j)] += v;
            if symmetric && i != j {
                m[(j, i)] += v;
            }
            count += 1;
        }
        if count != nnz {
            return Err(err(size_line, format!("declared {nnz} entries, found {count}")));
        }
        Ok(m)
    } else {
        let [rows, cols] = dims[..] else {
            return Err(err(size_line, "expected `rows cols`".into()));
        };
        let values: Vec<(usize, f64)> = data
            .map(|(line, l)| parse_value(line, l).map(|v| (line, v)))
            .collect::<Result<_>>()?;
        let expected = if symmetric { rows * (rows + 1) / 2 } else { rows * cols };
        if values.len() != expected {
            return Err(err(size_line, format!("expected {expected} values, found {}", values.len())));
        }
        let mut m = DMatrix::zeros(rows, cols);
        let mut it = values.into_iter().map(|(_, v)| v);
        for j in 0..cols {
            let start = if symmetric { j } else { 0 };
            for i in start..rows {
                let v = it.next().expect("count checked");
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::{finite_eigenvalues, DEFAULT_INFINITE_TOL};
    use nalgebra::dmatrix;

    #[test]
    fn dahlquist_equilibrium_and_linearization() {
        let m = builtin_model(&Builtin::Dahlquist(Complex64::new(-1.0, 0.0))).unwrap();
        let x = find_equilibrium(&m, &DVector::from_vec(vec![0.3]), 1e-12, 20).unwrap();
        assert!(x[0].abs() < 1e-15);
        let lm = linearize(&m, &x).unwrap();
        assert_eq!(lm.e(), &dmatrix![1.0]);
        assert_eq!(lm.a(), &dmatrix![-1.0]);
    }

    #[test]
    fn affine_model_equilibrium_in_one_step() {
        let a = dmatrix![-2.0, 1.0; 0.5, -3.0];
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let m = DaeModel::linear("affine", DMatrix::identity(2, 2), a.clone(), Some(b.clone()), 2, 0).unwrap();
        let x = find_equilibrium(&m, &DVector::zeros(2), 1e-12, 20).unwrap();
        let expected = -a.lu().solve(&b).unwrap();
        assert!((x - expected).amax() < 1e-14);
    }

    #[test]
    fn smib_equilibrium_matches_power_angle() {
        let p = SmibParams::default();
        let m = DaeModel::smib(p.clone()).unwrap();
        let x = find_equilibrium(&m, &default_guess(&m), EQUILIBRIUM_TOL, 50).unwrap();
        assert!(inf_norm(&m.residual(&x)) <= 1e-10);
        assert!((x - smib_operating_point(&p)).amax() < 1e-9);
        assert!(m.is_semi_explicit());
    }

    #[test]
    fn smib_jacobian_matches_differences() {
        let m = DaeModel::smib(SmibParams::default()).unwrap();
        let x = DVector::from_vec(vec![0.6, 1.01, 0.7]);
        let (ja, jf) = (m.jacobian(&x), m.fd_jacobian(&x));
        let tol = 1e-5_f64.max(1e-4 * ja.norm());
        assert!((ja - jf).amax() <= tol);
    }

    #[test]
    fn smib_linearization_has_damped_pair_and_infinite_root() {
        let p = SmibParams::default();
        let m = DaeModel::smib(p.clone()).unwrap();
        let x = find_equilibrium(&m, &default_guess(&m), EQUILIBRIUM_TOL, 50).unwrap();
        let s = finite_eigenvalues(&linearize(&m, &x).unwrap().pencil, DEFAULT_INFINITE_TOL).unwrap();
        assert_eq!(s.finite.len(), 2);
        assert_eq!(s.infinite_count, 1);
        // s² + (D/2H) s + Ω_b K cos δ / (2H) = 0.
        let kc = p.k() * x[0].cos();
        let sigma = -p.damping / (4.0 * p.inertia);
        let omega = (p.omega_b * kc / (2.0 * p.inertia) - sigma * sigma).sqrt();
        assert!((s.finite[1] - Complex64::new(sigma, omega)).norm() < 1e-9);
        assert!(s.finite[0].re < 0.0);
    }

    #[test]
    fn smib_parameter_ranges() {
        let p = SmibParams {
            p_m: 5.0,
            ..SmibParams::default()
        };
        assert!(matches!(DaeModel::smib(p), Err(Error::InvalidParameter(_))));
        let p = SmibParams {
            inertia: -1.0,
            ..SmibParams::default()
        };
        assert!(DaeModel::smib(p).is_err());
    }

    #[test]
    fn builtin_parsing() {
        assert_eq!("dahlquist:-1".parse::<Builtin>().unwrap(), Builtin::Dahlquist(Complex64::new(-1.0, 0.0)));
        assert_eq!(
            "stiff2:1000,0.02".parse::<Builtin>().unwrap(),
            Builtin::Stiff2 { fast: 1000.0, slow: 0.02 }
        );
        let Builtin::Smib(p) = "smib:h=4,x_eq=0.5".parse::<Builtin>().unwrap() else {
            panic!()
        };
        assert_eq!((p.inertia, p.x_eq), (4.0, 0.5));
        assert!(matches!("nope".parse::<Builtin>(), Err(Error::UnknownModel(_))));
        assert!(builtin_model(&Builtin::Stiff2 { fast: -1.0, slow: 1.0 }).is_err());
    }

    #[test]
    fn complex_dahlquist_is_a_rotation_block() {
        let m = builtin_model(&Builtin::Dahlquist(Complex64::new(-1.0, 2.0))).unwrap();
        let s = finite_eigenvalues(&linearize(&m, &DVector::zeros(2)).unwrap().pencil, 1e-8).unwrap();
        assert!((s.finite[0] - Complex64::new(-1.0, -2.0)).norm() < 1e-14);
        assert!((s.finite[1] - Complex64::new(-1.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn mutations() {
        let mut m = DaeModel::smib(SmibParams::default()).unwrap();
        m.apply(&"x_eq=0.8".parse().unwrap()).unwrap();
        let Dynamics::Smib(p) = m.dynamics() else { panic!() };
        assert_eq!(p.x_eq, 0.8);
        assert!(m.apply(&"x_eq=-1".parse().unwrap()).is_err());

        let mut lin = DaeModel::linear("l", DMatrix::identity(2, 2), DMatrix::zeros(2, 2), None, 2, 0).unwrap();
        lin.apply(&"a[0,1]=2.5".parse().unwrap()).unwrap();
        lin.apply(&"b[1]=0.5".parse().unwrap()).unwrap();
        assert_eq!(lin.residual(&DVector::from_vec(vec![0.0, 1.0])), DVector::from_vec(vec![2.5, 0.5]));
        assert!(lin.apply(&"a[2,0]=1".parse().unwrap()).is_err());
        assert!(lin.apply(&"b[0,0]=1".parse().unwrap()).is_err());
        assert!("x_eq".parse::<Mutation>().is_err());
    }

    #[test]
    fn linearize_rejects_non_equilibrium() {
        let m = DaeModel::smib(SmibParams::default()).unwrap();
        assert!(matches!(
            linearize(&m, &DVector::from_vec(vec![0.0, 1.0, 0.0]).add_scalar(0.1)),
            Err(Error::NotEquilibrium { .. })
        ));
    }

    #[test]
    fn json_dense_and_coo() {
        let m = parse_json_model(
            r#"{"r": 2, "m_x": 2, "m_y": 0, "E": [[1,0],[0,1]], "A": {"coo": [[0,0,-1],[1,1,-2]], "shape": [2,2]}}"#,
            "t.json",
        )
        .unwrap();
        let lm = linearize(&m, &DVector::zeros(2)).unwrap();
        let s = finite_eigenvalues(&lm.pencil, DEFAULT_INFINITE_TOL).unwrap();
        assert_eq!(s.finite, vec![Complex64::new(-2.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn json_errors_name_the_key() {
        let err = parse_json_model(r#"{"r": 2, "m_x": 2, "m_y": 0, "E": [[1,0],[0,1]], "A": "oops"}"#, "t.json")
            .unwrap_err()
            .to_string();
        assert!(err.contains("A"), "{err}");
        let err = parse_json_model(r#"{"r": 2, "m_x": 2, "m_y": 0, "E": [[1,0],[0,1]]}"#, "t.json")
            .unwrap_err()
            .to_string();
        assert!(err.contains("`A`"), "{err}");
        let err = parse_json_model(r#"{"r": 3, "m_x": 3, "m_y": 0, "E": [[1,0],[0,1]], "A": [[1,0],[0,1]]}"#, "t.json");
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let err = parse_json_model(r#"{"r": 2, "m_x": 2, "m_y": 0, "E": [[1,0],[0]], "A": [[1,0],[0,1]]}"#, "t.json")
            .unwrap_err()
            .to_string();
        assert!(err.contains("E[1]"), "{err}");
    }

    #[test]
    fn matrix_market_parsing() {
        let m = parse_matrix_market(
            "%%MatrixMarket matrix coordinate real general\n% c\n2 2 3\n1 1 1.5\n2 1 -1\n2 2 4\n",
            "x.mtx",
        )
        .unwrap();
        assert_eq!(m, dmatrix![1.5, 0.0; -1.0, 4.0]);
        let m = parse_matrix_market("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n", "x.mtx").unwrap();
        assert_eq!(m, dmatrix![1.0, 3.0; 2.0, 4.0]);
        let m = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 1 5\n", "x.mtx")
            .unwrap();
        assert_eq!(m, dmatrix![1.0, 5.0; 5.0, 0.0]);
        let err = parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n", "x.mtx")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(parse_matrix_market("garbage", "x.mtx").is_err());
    }
}
