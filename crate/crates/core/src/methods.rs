//! Integration-method catalog: discrete pencils, growth functions,
//! classification and stability-region sampling.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::Factored;
use crate::models::LinearizedModel;
use crate::pencil::{check_finite, companion_pencil, DelayBlock, LinearPencil};
use crate::textfmt::format_report;

/// 2S-DIRK stage coefficient `α = 1 − 1/√2`.
pub const DIRK_ALPHA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
/// 2S-DIRK history weight `β = −√2`.
pub const DIRK_BETA: f64 = -std::f64::consts::SQRT_2;
/// 2S-DIRK stage weight `γ = 1 + √2`.
pub const DIRK_GAMMA: f64 = 1.0 + std::f64::consts::SQRT_2;

/// Relative size below which a growth-function denominator is a pole.
pub const POLE_TOL: f64 = 1e-14;

/// Tolerance for coefficient comparisons on float quadruples and tableaus.
pub const COEFF_TOL: f64 = 1e-12;

/// Möbius quadruple of the h-free form: the discrete pencil is
/// `z(aE − c·h·A) − (d·h·A − b·E)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moebius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Moebius {
    pub const FEM: Moebius = Moebius::new(1.0, -1.0, 0.0, 1.0);
    pub const BEM: Moebius = Moebius::new(1.0, -1.0, 1.0, 0.0);
    pub const ITM: Moebius = Moebius::new(1.0, -1.0, 0.5, 0.5);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn validate(&self) -> Result<()> {
        let Moebius { a, b, c, d } = *self;
        if ![a, b, c, d].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite Möbius coefficient in {self:?}")));
        }
        let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
        if scale == 0.0 || self.determinant().abs() <= COEFF_TOL * scale * scale {
            return Err(Error::DegenerateMoebius);
        }
        Ok(())
    }

    /// `z = (d·λh − b)/(a − c·λh)`.
    pub fn growth(&self, lambda_h: Complex64) -> Result<Complex64> {
        let den = self.a - self.c * lambda_h;
        let scale = self.a.abs().max((self.c * lambda_h).norm()).max(f64::MIN_POSITIVE);
        if den.norm() <= POLE_TOL * scale {
            return Err(Error::Pole { lambda_h });
        }
        Ok((self.d * lambda_h - self.b) / den)
    }

    /// Inverse map `λh = (a·z + b)/(c·z + d)`.
    pub fn preimage(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// 2 for trapezoidal-type quadruples, 1 for other consistent ones, 0
    /// when the quadruple does not fix `λh = 0 ↦ z = 1`.
    pub fn order(&self) -> u32 {
        let Moebius { a, b, c, d } = *self;
        let close = |x: f64, y: f64| (x - y).abs() <= COEFF_TOL * a.abs().max(1.0);
        if !close(a, -b) {
            0
        } else if close(c, 0.5 * a) && close(d, 0.5 * a) {
            2
        } else if close(c + d, a) {
            1
        } else {
            0
        }
    }
}

/// True when the Möbius pencil maps the open left half-plane onto the open
/// unit disc and the right half-plane outside it.
///
/// Requires `a = b, c = −d` or `a = −b, c = d` (to 1e−12 relative), and
/// additionally `a·c > 0`; with `a·c < 0` the same coefficient pattern maps
/// the left half-plane outside the disc.
pub fn moebius_is_symmetric_a_stable(q: &Moebius) -> Result<bool> {
    Ok(moebius_has_symmetric_form(q)? && q.a * q.c > 0.0)
}

/// The coefficient-pattern half of [`moebius_is_symmetric_a_stable`]:
/// `a = b, c = −d` or `a = −b, c = d`, without the sign condition.
pub fn moebius_has_symmetric_form(q: &Moebius) -> Result<bool> {
    q.validate()?;
    let Moebius { a, b, c, d } = *q;
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    let eq = |x: f64, y: f64| (x - y).abs() <= COEFF_TOL * scale;
    Ok((eq(a, b) && eq(c, -d)) || (eq(a, -b) && eq(c, d)))
}

/// Runge–Kutta scheme given by its stage matrix `Q` and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    pub name: Option<String>,
    pub q: DMatrix<f64>,
    pub weights: DVector<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableauFile {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(default)]
    name: Option<String>,
}

impl ButcherTableau {
    pub fn new(q: DMatrix<f64>, weights: DVector<f64>, name: Option<String>) -> Result<Self> {
        let rho = q.nrows();
        if rho == 0 || !q.is_square() || weights.len() != rho {
            return Err(Error::DimensionMismatch {
                what: "Butcher tableau",
                expected: format!("square Q and {} weights", q.nrows()),
                found: format!("{}x{} Q and {} weights", q.nrows(), q.ncols(), weights.len()),
            });
        }
        check_finite(&q, "Butcher tableau Q")?;
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                what: "Butcher tableau weights",
                row: i,
                col: 0,
            });
        }
        Ok(Self { name, q, weights })
    }

    pub fn classical_rk4() -> Self {
        let q = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let w = DVector::from_vec(vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]);
        Self::new(q, w, Some("rk4".into())).expect("valid tableau")
    }

    /// JSON `{"Q": [[...], ...], "b": [...], "name": "..."}`.
    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: TableauFile = serde_path_to_error::deserialize(de).map_err(|err| Error::Parse {
            path: path.to_string(),
            message: format!("key `{}`: {}", err.path(), err.inner()),
        })?;
        let rho = raw.q.len();
        if let Some(i) = raw.q.iter().position(|row| row.len() != rho) {
            return Err(Error::Parse {
                path: path.to_string(),
                message: format!("Q[{i}] has {} entries, expected {rho}", raw.q[i].len()),
            });
        }
        let q = DMatrix::from_fn(rho, rho, |i, j| raw.q[i][j]);
        Self::new(q, DVector::from_vec(raw.b), raw.name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn stages(&self) -> usize {
        self.q.nrows()
    }

    /// Explicit iff `Q` is strictly lower triangular.
    pub fn is_explicit(&self) -> bool {
        let rho = self.stages();
        (0..rho).all(|i| (i..rho).all(|j| self.q[(i, j)] == 0.0))
    }

    /// Highest order (up to 4) whose classical order conditions hold to 1e−12.
    pub fn order(&self) -> u32 {
        let b = &self.weights;
        let q = &self.q;
        let c = q * DVector::from_element(self.stages(), 1.0);
        let qc = q * &c;
        let c2 = c.component_mul(&c);
        let ok = |x: f64, y: f64| (x - y).abs() <= COEFF_TOL;
        let conditions: [&[(f64, f64)]; 4] = [
            &[(b.sum(), 1.0)],
            &[(b.dot(&c), 0.5)],
            &[(b.dot(&c2), 1.0 / 3.0), (b.dot(&qc), 1.0 / 6.0)],
            &[
                (b.dot(&c2.component_mul(&c)), 0.25),
                (b.dot(&c.component_mul(&qc)), 0.125),
                (b.dot(&(q * &c2)), 1.0 / 12.0),
                (b.dot(&(q * &qc)), 1.0 / 24.0),
            ],
        ];
        let mut order = 0;
        for level in conditions {
            if level.iter().all(|&(x, y)| ok(x, y)) {
                order += 1;
            } else {
                break;
            }
        }
        order
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MethodSpec {
    ForwardEuler,
    Rk4,
    BackwardEuler,
    Trapezoidal,
    TwoStageDirk,
    Bdf2,
    Moebius(Moebius),
    Tableau(ButcherTableau),
}

impl MethodSpec {
    /// The five one-step catalog methods plus BDF2.
    pub const CATALOG: [MethodSpec; 6] = [
        MethodSpec::ForwardEuler,
        MethodSpec::Rk4,
        MethodSpec::BackwardEuler,
        MethodSpec::Trapezoidal,
        MethodSpec::TwoStageDirk,
        MethodSpec::Bdf2,
    ];

    /// Name accepted by [`FromStr`].
    pub fn tag(&self) -> String {
        match self {
            MethodSpec::ForwardEuler => "fem".into(),
            MethodSpec::Rk4 => "rk4".into(),
            MethodSpec::BackwardEuler => "bem".into(),
            MethodSpec::Trapezoidal => "itm".into(),
            MethodSpec::TwoStageDirk => "dirk2s".into(),
            MethodSpec::Bdf2 => "bdf2".into(),
            MethodSpec::Moebius(m) => format!(
                "moebius:{},{},{},{}",
                format_report(m.a),
                format_report(m.b),
                format_report(m.c),
                format_report(m.d)
            ),
            MethodSpec::Tableau(t) => format!("rk:{}", t.name.as_deref().unwrap_or("tableau")),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::ForwardEuler => "FEM".into(),
            MethodSpec::Rk4 => "RK4".into(),
            MethodSpec::BackwardEuler => "BEM".into(),
            MethodSpec::Trapezoidal => "ITM".into(),
            MethodSpec::TwoStageDirk => "2S-DIRK".into(),
            MethodSpec::Bdf2 => "BDF2".into(),
            MethodSpec::Moebius(m) => format!("Moebius({}, {}, {}, {})", m.a, m.b, m.c, m.d),
            MethodSpec::Tableau(t) => match &t.name {
                Some(n) => format!("RK[{n}]"),
                None => format!("RK({} stages)", t.stages()),
            },
        }
    }

    pub fn is_implicit(&self) -> bool {
        match self {
            MethodSpec::ForwardEuler | MethodSpec::Rk4 => false,
            MethodSpec::BackwardEuler | MethodSpec::Trapezoidal | MethodSpec::TwoStageDirk | MethodSpec::Bdf2 => {
                true
            }
            MethodSpec::Moebius(m) => m.c != 0.0,
            MethodSpec::Tableau(t) => !t.is_explicit(),
        }
    }

    pub fn order(&self) -> u32 {
        match self {
            MethodSpec::ForwardEuler | MethodSpec::BackwardEuler => 1,
            MethodSpec::Trapezoidal | MethodSpec::TwoStageDirk | MethodSpec::Bdf2 => 2,
            MethodSpec::Rk4 => 4,
            MethodSpec::Moebius(m) => m.order(),
            MethodSpec::Tableau(t) => t.order(),
        }
    }

    /// History points the recursion needs.
    pub fn step_multiplicity(&self) -> usize {
        match self {
            MethodSpec::Bdf2 => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// `fem`, `rk4`, `bem`, `itm`, `dirk2s`, `bdf2`, `moebius:a,b,c,d` or
    /// `rk:<tableau.json>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "fem" => return Ok(MethodSpec::ForwardEuler),
            "rk4" => return Ok(MethodSpec::Rk4),
            "bem" => return Ok(MethodSpec::BackwardEuler),
            "itm" => return Ok(MethodSpec::Trapezoidal),
            "dirk2s" | "2s-dirk" => return Ok(MethodSpec::TwoStageDirk),
            "bdf2" => return Ok(MethodSpec::Bdf2),
            _ => {}
        }
        if let Some(args) = lower.strip_prefix("moebius:") {
            let v: Vec<f64> = args
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("Möbius coefficient `{t}` is not a number")))
                })
                .collect::<Result<_>>()?;
            let [a, b, c, d] = v[..] else {
                return Err(Error::InvalidParameter("moebius expects four coefficients a,b,c,d".into()));
            };
            let m = Moebius::new(a, b, c, d);
            m.validate()?;
            return Ok(MethodSpec::Moebius(m));
        }
        if let Some(path) = s.strip_prefix("rk:") {
            return Ok(MethodSpec::Tableau(ButcherTableau::load(Path::new(path))?));
        }
        Err(Error::UnknownMethod(s.to_string()))
    }
}

/// Parses a comma-separated method list. Möbius quadruples contain commas,
/// so a `moebius:` entry consumes the next three fields.
pub fn parse_method_list(s: &str) -> Result<Vec<MethodSpec>> {
    let fields: Vec<&str> = s.split(',').map(str::trim).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < fields.len() {
        if fields[i].to_ascii_lowercase().starts_with("moebius:") {
            let end = (i + 4).min(fields.len());
            out.push(fields[i..end].join(",").parse()?);
            i = end;
        } else {
            if fields[i].is_empty() {
                return Err(Error::InvalidParameter(format!("empty entry in method list `{s}`")));
            }
            out.push(fields[i].parse()?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("empty method list".into()));
    }
    Ok(out)
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step size must be positive and finite, got {h}")))
    }
}

/// The discrete pencil `(Ẽ, Ã)` of `spec` applied with step `h`.
pub fn build_pencil(spec: &MethodSpec, lm: &LinearizedModel, h: f64) -> Result<LinearPencil> {
    check_step(h)?;
    let e = lm.e();
    let a = lm.a();
    let ha = a * h;
    match spec {
        MethodSpec::ForwardEuler => LinearPencil::new(e.clone(), e + &ha),
        MethodSpec::Rk4 => {
            let ha2 = &ha * &ha;
            let ha3 = &ha2 * &ha;
            let ha4 = &ha3 * &ha;
            LinearPencil::new(e.clone(), e + &ha + ha2 / 2.0 + ha3 / 6.0 + ha4 / 24.0)
        }
        MethodSpec::BackwardEuler => LinearPencil::new(e - &ha, e.clone()),
        MethodSpec::Trapezoidal => {
            let half = a * (0.5 * h);
            LinearPencil::new(e - &half, &half + e)
        }
        MethodSpec::TwoStageDirk => {
            let lhs = e - a * (DIRK_ALPHA * h);
            let factor = Factored::new(&lhs, || format!("E - αhA is singular at h = {h}"))?;
            let rhs = (e - a * (DIRK_ALPHA * DIRK_BETA * h)) * factor.solve_mat(e);
            LinearPencil::new(lhs, rhs)
        }
        MethodSpec::Bdf2 => companion_pencil(&[
            DelayBlock::new(0.0, e - &ha * (2.0 / 3.0)),
            DelayBlock::new(1.0, e * (-4.0 / 3.0)),
            DelayBlock::new(2.0, e * (1.0 / 3.0)),
        ]),
        MethodSpec::Moebius(m) => {
            m.validate()?;
            LinearPencil::new(e * m.a - a * (m.c * h), a * (m.d * h) - e * m.b)
        }
        MethodSpec::Tableau(t) => tableau_pencil(t, e, a, h),
    }
}

/// Stage elimination: `Ẽ = E`, `Ã = E + h(bᵀ⊗I)(I − hQ⊗A)⁻¹(1⊗A)`.
fn tableau_pencil(t: &ButcherTableau, e: &DMatrix<f64>, a: &DMatrix<f64>, h: f64) -> Result<LinearPencil> {
    let r = e.nrows();
    let rho = t.stages();
    let n = rho * r;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, r);
    for i in 0..rho {
        rhs.view_mut((i * r, 0), (r, r)).copy_from(a);
        for j in 0..rho {
            let qij = t.q[(i, j)];
            if qij != 0.0 {
                let mut blk = m.view_mut((i * r, j * r), (r, r));
                blk -= a * (h * qij);
            }
        }
    }
    let stages = Factored::new(&m, || format!("stage system I - hQ⊗A is singular at h = {h}"))?.solve_mat(&rhs);
    let mut increment = DMatrix::<f64>::zeros(r, r);
    for i in 0..rho {
        increment += stages.view((i * r, 0), (r, r)) * t.weights[i];
    }
    LinearPencil::new(e.clone(), e + increment * h)
}

fn pole_check(den: Complex64, scale: f64, lambda_h: Complex64) -> Result<()> {
    if den.norm() <= POLE_TOL * scale.max(f64::MIN_POSITIVE) {
        Err(Error::Pole { lambda_h })
    } else {
        Ok(())
    }
}

/// Roots of the method's characteristic equation for the test equation;
/// for BDF2 the principal root (nearest `exp(λh)`) comes first.
pub fn growth_roots(spec: &MethodSpec, lambda_h: Complex64) -> Result<Vec<Complex64>> {
    let z = lambda_h;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("λh = {z} is not finite")));
    }
    let one = Complex64::new(1.0, 0.0);
    let root = match spec {
        MethodSpec::ForwardEuler => one + z,
        MethodSpec::Rk4 => one + z * (one + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))),
        MethodSpec::BackwardEuler => {
            let den = one - z;
            pole_check(den, z.norm().max(1.0), z)?;
            one / den
        }
        MethodSpec::Trapezoidal => {
            let den = one - 0.5 * z;
            pole_check(den, (0.5 * z).norm().max(1.0), z)?;
            (one + 0.5 * z) / den
        }
        MethodSpec::TwoStageDirk => {
            let den = one - DIRK_ALPHA * z;
            pole_check(den, (DIRK_ALPHA * z).norm().max(1.0), z)?;
            (one - DIRK_ALPHA * DIRK_BETA * z) / (den * den)
        }
        MethodSpec::Bdf2 => return bdf2_roots(z),
        MethodSpec::Moebius(m) => {
            m.validate()?;
            m.growth(z)?
        }
        MethodSpec::Tableau(t) => rk_growth_from_tableau(&t.q, &t.weights, z)?,
    };
    Ok(vec![root])
}

/// Roots of `(1 − 2z/3)w² − (4/3)w + 1/3 = 0`, principal first.
fn bdf2_roots(z: Complex64) -> Result<Vec<Complex64>> {
    let qa = Complex64::new(1.0, 0.0) - z * (2.0 / 3.0);
    pole_check(qa, (z * (2.0 / 3.0)).norm().max(1.0), z)?;
    let qb = Complex64::new(-4.0 / 3.0, 0.0);
    let qc = Complex64::new(1.0 / 3.0, 0.0);
    let disc = (qb * qb - 4.0 * qa * qc).sqrt();
    // Cancellation-free pair: q = −(b + sign·√Δ)/2, roots q/a and c/q.
    let q = if (qb.conj() * disc).re >= 0.0 {
        -0.5 * (qb + disc)
    } else {
        -0.5 * (qb - disc)
    };
    let mut roots = vec![q / qa, qc / q];
    let target = z.exp();
    if (roots[1] - target).norm() < (roots[0] - target).norm() {
        roots.swap(0, 1);
    }
    Ok(roots)
}

/// `det(I − λhQ + λh·1·bᵀ) / det(I − λhQ)`.
pub fn rk_growth_from_tableau(q: &DMatrix<f64>, weights: &DVector<f64>, lambda_h: Complex64) -> Result<Complex64> {
    let rho = q.nrows();
    if !q.is_square() || weights.len() != rho || rho == 0 {
        return Err(Error::DimensionMismatch {
            what: "Butcher tableau",
            expected: format!("square Q and {} weights", q.nrows()),
            found: format!("{}x{} Q and {} weights", q.nrows(), q.ncols(), weights.len()),
        });
    }
    let z = lambda_h;
    let den_m = DMatrix::<Complex64>::from_fn(rho, rho, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex64::new(id, 0.0) - z * q[(i, j)]
    });
    let num_m = DMatrix::<Complex64>::from_fn(rho, rho, |i, j| den_m[(i, j)] + z * weights[j]);
    let den = den_m.clone().determinant();
    let scale = den_m.iter().fold(1.0_f64, |m, x| m.max(x.norm())).powi(rho as i32);
    pole_check(den, scale, z)?;
    Ok(num_m.determinant() / den)
}

/// Rectangle in the λh-plane sampled on an `n_re × n_im` lattice
/// (endpoints included).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionGrid {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

impl RegionGrid {
    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn re_axis(&self) -> Vec<f64> {
        Self::axis(self.re.0, self.re.1, self.n_re)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        Self::axis(self.im.0, self.im.1, self.n_im)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSample {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// `stable[i][j]` for `λh = re[j] + j·im[i]`.
    pub stable: Vec<Vec<bool>>,
}

impl RegionSample {
    /// Long-format CSV `re,im,stable`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "re,im,stable")?;
        for (i, row) in self.stable.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{}",
                    format_report(self.re[j]),
                    format_report(self.im[i]),
                    u8::from(*s)
                )?;
            }
        }
        Ok(())
    }
}

/// True iff every growth root has modulus below one; poles count as unstable.
pub fn is_stable_at(spec: &MethodSpec, lambda_h: Complex64) -> bool {
    growth_roots(spec, lambda_h).is_ok_and(|roots| roots.iter().all(|z| z.norm() < 1.0))
}

pub fn stability_region_sample(spec: &MethodSpec, grid: &RegionGrid, exec: Execution) -> Result<RegionSample> {
    let finite = [grid.re.0, grid.re.1, grid.im.0, grid.im.1].iter().all(|x| x.is_finite());
    if !finite {
        return Err(Error::InvalidParameter("stability-region grid bounds must be finite".into()));
    }
    let re = grid.re_axis();
    let im = grid.im_axis();
    let stable = exec.map(&im, |&y| re.iter().map(|&x| is_stable_at(spec, Complex64::new(x, y))).collect());
    Ok(RegionSample { re, im, stable })
}
