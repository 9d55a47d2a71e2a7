//! Linear matrix pencils `λ·lhs − rhs` and their generalized eigenvalues.
//!
//! The same type represents the continuous-time pencil `sE − A` of a
//! linearized DAE and the discrete-time pencil `z̃Ẽ − Ã` a numerical method
//! induces. Eigenvalues come from a real QZ decomposition returning
//! `(α, β)` pairs, so singular `lhs` matrices (algebraic rows) show up as
//! infinite eigenvalues instead of overflow.

use lapack_src as _;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_INFINITE_TOL: f64 = 1e-8;

/// Tolerance used to decide whether delay multipliers sit on a common grid.
pub const COMMENSURABILITY_TOL: f64 = 1e-12;

/// Largest grid denominator tried when looking for a common delay grid.
const MAX_GRID_DENOMINATOR: u64 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearPencil {
    lhs: DMatrix<f64>,
    rhs: DMatrix<f64>,
}

impl LinearPencil {
    pub fn new(lhs: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<Self> {
        if !lhs.is_square() || lhs.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                what: "pencil lhs",
                expected: "non-empty square matrix".into(),
                found: format!("{}x{}", lhs.nrows(), lhs.ncols()),
            });
        }
        if rhs.shape() != lhs.shape() {
            return Err(Error::DimensionMismatch {
                what: "pencil rhs",
                expected: format!("{}x{}", lhs.nrows(), lhs.ncols()),
                found: format!("{}x{}", rhs.nrows(), rhs.ncols()),
            });
        }
        check_finite(&lhs, "pencil lhs")?;
        check_finite(&rhs, "pencil rhs")?;
        Ok(Self { lhs, rhs })
    }

    pub fn dim(&self) -> usize {
        self.lhs.nrows()
    }

    /// Coefficient of the eigenvalue variable (`E` or `Ẽ`).
    pub fn lhs(&self) -> &DMatrix<f64> {
        &self.lhs
    }

    pub fn rhs(&self) -> &DMatrix<f64> {
        &self.rhs
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.lhs, self.rhs)
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { what, row: i, col: j });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Finite eigenvalues, sorted by real then imaginary part.
    pub finite: Vec<Complex64>,
    pub infinite_count: usize,
    pub dim: usize,
}

impl Spectrum {
    /// Builds a spectrum from a list of finite eigenvalues, sorting them.
    pub fn from_finite(mut finite: Vec<Complex64>, infinite_count: usize) -> Self {
        sort_lexicographic(&mut finite);
        let dim = finite.len() + infinite_count;
        Self {
            finite,
            infinite_count,
            dim,
        }
    }
}

pub fn sort_lexicographic(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Generalized eigenvalues of the pencil, i.e. the roots of
/// `det(λ·lhs − rhs) = 0`.
///
/// An eigenvalue `α/β` is classified infinite when
/// `|β| ≤ infinite_tol·‖(α, β)‖`.
pub fn finite_eigenvalues(p: &LinearPencil, infinite_tol: f64) -> Result<Spectrum> {
    if !(infinite_tol > 0.0 && infinite_tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "infinite_tol must lie in (0, 1), got {infinite_tol}"
        )));
    }
    let n = p.dim();
    let alpha = qz_eigenvalues(&p.rhs, &p.lhs)?;

    let mut finite = Vec::with_capacity(n);
    let mut infinite_count = 0;
    for &(re, im, be) in &alpha {
        if !(re.is_finite() && im.is_finite() && be.is_finite()) {
            return Err(Error::Decomposition { dim: n });
        }
        let norm = (re * re + im * im + be * be).sqrt();
        if norm == 0.0 {
            return Err(Error::SingularPencil { dim: n });
        }
        if be.abs() <= infinite_tol * norm {
            infinite_count += 1;
        } else {
            finite.push(Complex64::new(re / be, im / be));
        }
    }
    sort_lexicographic(&mut finite);
    Ok(Spectrum {
        finite,
        infinite_count,
        dim: n,
    })
}

/// `(α_re, α_im, β)` of `det(β·a − α·b) = 0` from LAPACK `dggev`.
fn qz_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<(f64, f64, f64)>> {
    let n = a.nrows();
    let ni = n as i32;
    let mut a = a.as_slice().to_vec();
    let mut b = b.as_slice().to_vec();
    let (mut ar, mut ai, mut be) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut vl, mut vr) = ([0.0; 1], [0.0; 1]);
    let mut info = 0;
    let mut query = [0.0];
    // SAFETY: every buffer has the length dggev expects for order `n`.
    unsafe {
        lapack::dggev(
            b'N', b'N', ni, &mut a, ni, &mut b, ni, &mut ar, &mut ai, &mut be, &mut vl, 1, &mut vr, 1, &mut query, -1,
            &mut info,
        );
    }
    let lwork = (query[0] as usize).max(8 * n);
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack::dggev(
            b'N', b'N', ni, &mut a, ni, &mut b, ni, &mut ar, &mut ai, &mut be, &mut vl, 1, &mut vr, 1, &mut work,
            lwork as i32, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Decomposition { dim: n });
    }
    Ok((0..n).map(|i| (ar[i], ai[i], be[i])).collect())
}

/// True iff every finite eigenvalue lies in the open unit disc.
pub fn is_discrete_stable(s: &Spectrum) -> bool {
    s.finite.iter().all(|z| z.norm() < 1.0)
}

/// True iff every finite eigenvalue has strictly negative real part.
pub fn is_continuous_stable(s: &Spectrum) -> bool {
    s.finite.iter().all(|z| z.re < 0.0)
}

/// One coefficient of a delayed-argument recursion: `coefficient · x(t − delay·h)`.
#[derive(Clone, Debug)]
pub struct DelayBlock {
    pub delay: f64,
    pub coefficient: DMatrix<f64>,
}

impl DelayBlock {
    pub fn new(delay: f64, coefficient: DMatrix<f64>) -> Self {
        Self { delay, coefficient }
    }
}

/// Common grid for a set of delay multipliers: every delay equals an
/// integer number of `spacing`-wide slots.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayGrid {
    pub spacing: f64,
    pub slots: Vec<u64>,
}

pub fn delay_grid(delays: &[f64]) -> Result<DelayGrid> {
    let incommensurable = || Error::Incommensurable {
        delays: delays.to_vec(),
    };
    if delays.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delay multipliers must be finite and non-negative, got {delays:?}"
        )));
    }
    for q in 1..=MAX_GRID_DENOMINATOR {
        let qf = q as f64;
        let fits = delays.iter().all(|&d| {
            let scaled = d * qf;
            (scaled - scaled.round()).abs() <= COMMENSURABILITY_TOL * scaled.max(1.0)
        });
        if fits {
            let slots = delays.iter().map(|&d| (d * qf).round() as u64).collect();
            return Ok(DelayGrid {
                spacing: 1.0 / qf,
                slots,
            });
        }
    }
    Err(incommensurable())
}

/// Block-companion pencil of the recursion `Σ C_k · x(t − a_k·h) = 0`.
///
/// The delays are placed on a common grid of spacing `ε`, giving `N`
/// slots. With state `[x(t − (N−1)ε h); …; x(t)]` the pencil is
///
/// ```text
/// Ẽ = diag(I, …, I, C₀)      Ã = [ 0  I  0 …  0 ]
///                                [ 0  0  I …  0 ]
///                                [ …            ]
///                                [ −C_N … −C₂ −C₁ ]
/// ```
///
/// and its finite eigenvalues are the roots `w` of
/// `det(Σ_k w^(N − k) C_k) = 0`, where `w` is the multiplier over one grid
/// step (`w = z` when all delays are integers).
pub fn companion_pencil(blocks: &[DelayBlock]) -> Result<LinearPencil> {
    let first = blocks.first().ok_or(Error::EmptyBlocks)?;
    let r = first.coefficient.nrows();
    for b in blocks {
        if b.coefficient.shape() != (r, r) || r == 0 {
            return Err(Error::DimensionMismatch {
                what: "companion block",
                expected: format!("{r}x{r}"),
                found: format!("{}x{}", b.coefficient.nrows(), b.coefficient.ncols()),
            });
        }
    }
    let delays: Vec<f64> = blocks.iter().map(|b| b.delay).collect();
    let grid = delay_grid(&delays)?;
    if !grid.slots.contains(&0) {
        return Err(Error::InvalidParameter(
            "companion blocks must include the zero delay".into(),
        ));
    }
    let slots = *grid.slots.iter().max().unwrap_or(&0) as usize;
    if slots == 0 {
        return Err(Error::InvalidParameter(
            "companion blocks need at least one positive delay".into(),
        ));
    }
    if slots * r > 10_000 {
        return Err(Error::InvalidParameter(format!(
            "companion pencil would have dimension {}",
            slots * r
        )));
    }

    // Coefficient per slot, summing blocks that land on the same slot.
    let mut coeff = vec![DMatrix::<f64>::zeros(r, r); slots + 1];
    for (b, &k) in blocks.iter().zip(&grid.slots) {
        coeff[k as usize] += &b.coefficient;
    }

    let n = slots * r;
    let mut lhs = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, n);
    for blk in 0..slots - 1 {
        let off = blk * r;
        for i in 0..r {
            lhs[(off + i, off + i)] = 1.0;
            rhs[(off + i, off + r + i)] = 1.0;
        }
    }
    let last = (slots - 1) * r;
    lhs.view_mut((last, last), (r, r)).copy_from(&coeff[0]);
    // Column block `blk` holds x(t − (N − 1 − blk)ε h), i.e. slot N − blk.
    for blk in 0..slots {
        let k = slots - blk;
        rhs.view_mut((last, blk * r), (r, r))
            .copy_from(&(-&coeff[k]));
    }
    LinearPencil::new(lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_close(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn diagonal_pencil() {
        let p = LinearPencil::new(DMatrix::identity(2, 2), dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap();
        let s = finite_eigenvalues(&p, DEFAULT_INFINITE_TOL).unwrap();
        assert_close(&s.finite, &[c(-2.0, 0.0), c(-1.0, 0.0)], 1e-14);
        assert_eq!(s.infinite_count, 0);
    }

    #[test]
    fn singular_lhs_gives_infinite_eigenvalue() {
        let p = LinearPencil::new(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![-2.0, 1.0; 1.0, 1.0]).unwrap();
        let s = finite_eigenvalues(&p, DEFAULT_INFINITE_TOL).unwrap();
        assert_close(&s.finite, &[c(-3.0, 0.0)], 1e-12);
        assert_eq!(s.infinite_count, 1);

        let p = LinearPencil::new(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![-1.0, 0.0; 0.0, 1.0]).unwrap();
        let s = finite_eigenvalues(&p, DEFAULT_INFINITE_TOL).unwrap();
        assert_close(&s.finite, &[c(-1.0, 0.0)], 1e-14);
        assert_eq!(s.infinite_count, 1);
    }

    #[test]
    fn rejects_bad_pencils() {
        assert!(matches!(
            LinearPencil::new(DMatrix::identity(2, 2), DMatrix::identity(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LinearPencil::new(DMatrix::identity(2, 3), DMatrix::identity(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut bad = DMatrix::identity(2, 2);
        bad[(1, 0)] = f64::NAN;
        assert!(matches!(
            LinearPencil::new(DMatrix::identity(2, 2), bad),
            Err(Error::NonFinite { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn identically_singular_pencil_is_reported() {
        let p = LinearPencil::new(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![1.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(matches!(
            finite_eigenvalues(&p, DEFAULT_INFINITE_TOL),
            Err(Error::SingularPencil { dim: 2 })
        ));
    }

    #[test]
    fn stability_predicates() {
        let s = Spectrum::from_finite(vec![c(0.5, 0.0), c(-0.3, 0.4)], 0);
        assert!(is_discrete_stable(&s));
        assert!(!is_discrete_stable(&Spectrum::from_finite(vec![c(1.0, 0.0)], 0)));
        let itm = (1.0 - 0.05) / (1.0 + 0.05);
        assert!(is_discrete_stable(&Spectrum::from_finite(vec![c(itm, 0.0)], 0)));

        assert!(is_continuous_stable(&Spectrum::from_finite(
            vec![c(-1000.0, 0.0), c(-0.02, 0.0)],
            0
        )));
        assert!(!is_continuous_stable(&Spectrum::from_finite(vec![c(0.0, 0.0)], 0)));
        assert!(is_continuous_stable(&Spectrum::from_finite(
            vec![c(-0.1699, 7.6696), c(-0.1699, -7.6696)],
            0
        )));
    }

    #[test]
    fn bdf2_companion_with_zero_dynamics() {
        let h = 0.1;
        let e = DMatrix::<f64>::identity(1, 1);
        let a = DMatrix::<f64>::zeros(1, 1);
        let blocks = [
            DelayBlock::new(0.0, &e - &a * (2.0 / 3.0 * h)),
            DelayBlock::new(1.0, &e * (-4.0 / 3.0)),
            DelayBlock::new(2.0, &e * (1.0 / 3.0)),
        ];
        let p = companion_pencil(&blocks).unwrap();
        assert_eq!(p.dim(), 2);
        let s = finite_eigenvalues(&p, DEFAULT_INFINITE_TOL).unwrap();
        assert_close(&s.finite, &[c(1.0 / 3.0, 0.0), c(1.0, 0.0)], 1e-12);
    }

    #[test]
    fn bdf2_companion_matches_quadratic_formula() {
        let (lambda, h) = (-1.0, 0.1);
        let blocks = [
            DelayBlock::new(0.0, dmatrix![1.0 - 2.0 / 3.0 * h * lambda]),
            DelayBlock::new(1.0, dmatrix![-4.0 / 3.0]),
            DelayBlock::new(2.0, dmatrix![1.0 / 3.0]),
        ];
        let s = finite_eigenvalues(&companion_pencil(&blocks).unwrap(), DEFAULT_INFINITE_TOL).unwrap();
        // Quadratic (1 + 2h/3) z² − (4/3) z + 1/3 = 0.
        let qa = 1.0 + 2.0 * h / 3.0;
        let disc = (16.0 / 9.0 - 4.0 * qa / 3.0_f64).sqrt();
        let principal = (4.0 / 3.0 + disc) / (2.0 * qa);
        assert!((principal - (5.0 + 5.0_f64.sqrt()) / 8.0).abs() < 1e-15);
        let got = s.finite.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!((got - principal).abs() < 1e-10);
    }

    #[test]
    fn one_step_companion_is_the_matrix_itself() {
        let m = dmatrix![0.2, -0.5; 0.7, 0.1];
        let blocks = [
            DelayBlock::new(0.0, DMatrix::identity(2, 2)),
            DelayBlock::new(1.0, -&m),
        ];
        let p = companion_pencil(&blocks).unwrap();
        assert_eq!(p.lhs(), &DMatrix::<f64>::identity(2, 2));
        assert_eq!(p.rhs(), &m);
    }

    #[test]
    fn fractional_delays_use_a_finer_grid() {
        let g = delay_grid(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.slots, vec![0, 1, 2]);
        assert!((g.spacing - 0.5).abs() < 1e-15);
        let p = companion_pencil(&[
            DelayBlock::new(0.0, dmatrix![1.0]),
            DelayBlock::new(0.5, dmatrix![-0.25]),
        ])
        .unwrap();
        assert_eq!(p.dim(), 1);
    }

    #[test]
    fn companion_errors() {
        assert!(matches!(companion_pencil(&[]), Err(Error::EmptyBlocks)));
        assert!(matches!(
            companion_pencil(&[
                DelayBlock::new(0.0, dmatrix![1.0]),
                DelayBlock::new(std::f64::consts::SQRT_2, dmatrix![1.0]),
            ]),
            Err(Error::Incommensurable { .. })
        ));
        assert!(companion_pencil(&[DelayBlock::new(1.0, dmatrix![1.0])]).is_err());
    }

    #[test]
    fn complex_pairs_are_conjugate() {
        let lhs = dmatrix![
            1.0, 0.0, 0.0, 0.0;
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.7277879017829938, 0.39947776618476555;
            0.0, 0.0, -0.5197181879417189, 1.2731736074145634
        ];
        let rhs = dmatrix![
            0.0, 0.0, 1.0, 0.0;
            0.0, 0.0, 0.0, 1.0;
            -1.0 / 3.0, 0.0, 4.0 / 3.0, 0.0;
            0.0, -1.0 / 3.0, 0.0, 4.0 / 3.0
        ];
        let standard = lhs.clone().try_inverse().unwrap() * &rhs;
        let expected: Vec<Complex64> = standard.complex_eigenvalues().iter().copied().collect();
        let s = finite_eigenvalues(&LinearPencil::new(lhs, rhs).unwrap(), DEFAULT_INFINITE_TOL).unwrap();
        assert_eq!(s.finite.len(), 4);
        for e in &expected {
            assert!(s.finite.iter().any(|z| (z - e).norm() < 1e-13), "{e} missing from {:?}", s.finite);
        }
        for z in &s.finite {
            assert!(s.finite.iter().any(|w| (w - z.conj()).norm() < 1e-15));
        }
    }

    #[test]
    fn large_companion_pencil_is_regular() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        let (a, _) = crate::validate::random_diagonalizable(&mut rng, 40);
        let lm = crate::models::LinearizedModel::ode(a).unwrap();
        let p = crate::methods::build_pencil(&crate::methods::MethodSpec::Bdf2, &lm, 0.05).unwrap();
        let s = finite_eigenvalues(&p, DEFAULT_INFINITE_TOL).unwrap();
        assert_eq!(s.finite.len(), 80);
    }
}
