#![allow(dead_code)]

use num_complex::Complex64;

/// Rounds `value` to the number of decimals printed in `printed` and checks
/// that it lies within `k` units of the last printed digit.
pub fn within_last_digit(value: f64, printed: &str, k: i64) -> bool {
    let decimals = printed.split('.').nth(1).map_or(0, str::len) as i32;
    let scale = 10f64.powi(decimals);
    let expected: f64 = printed.parse().expect("printed value parses");
    let a = (value * scale).round() as i64;
    let b = (expected * scale).round() as i64;
    (a - b).abs() <= k
}

/// Textbook roots of `a·z² + b·z + c`.
pub fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 2] {
    let d = (b * b - 4.0 * a * c).sqrt();
    [(-b + d) / (2.0 * a), (-b - d) / (2.0 * a)]
}

/// Order-2 linear-prediction (Prony) fit `y_k = c₁y_{k−1} + c₂y_{k−2}`;
/// returns the continuous-time root with non-negative imaginary part.
pub fn prony2(y: &[f64], h: f64) -> Complex64 {
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 2..y.len() {
        let (a, b, t) = (y[k - 1], y[k - 2], y[k]);
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        r1 += a * t;
        r2 += b * t;
    }
    let det = s11 * s22 - s12 * s12;
    let c1 = (r1 * s22 - r2 * s12) / det;
    let c2 = (s11 * r2 - s12 * r1) / det;
    let one = Complex64::new(1.0, 0.0);
    let roots = quadratic_roots(one, Complex64::new(-c1, 0.0), Complex64::new(-c2, 0.0));
    let z = if roots[0].im >= roots[1].im { roots[0] } else { roots[1] };
    z.ln() / h
}

pub fn nearest(values: &[Complex64], target: Complex64) -> Complex64 {
    *values
        .iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .expect("non-empty")
}

pub fn rel_err(got: f64, expected: f64) -> f64 {
    (got - expected).abs() / expected.abs()
}
