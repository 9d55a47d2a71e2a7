mod common;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use pencilbench::analysis::{distortion_report, sweep, write_reports_csv, CSV_HEADER};
use pencilbench::methods::MethodSpec;
use pencilbench::models::{load_linear_model, LinearizedModel, ModelFormat};
use pencilbench::tdi::{simulate, SimulationConfig};
use pencilbench::{Execution, LinearPencil};

fn block_model() -> LinearizedModel {
    let e = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.5, -2.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
    LinearizedModel::from_pencil(LinearPencil::new(e, a).unwrap())
}

#[test]
fn json_and_matrix_market_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("m.json");
    std::fs::write(
        &json,
        r#"{"r": 3, "m_x": 2, "m_y": 1,
            "E": {"coo": [[0, 0, 1.0], [1, 1, 1.0]], "shape": [3, 3]},
            "A": [[-1, 2, 0.5], [-2, -1, 0], [1, 0, -1]]}"#,
    )
    .unwrap();
    let stem = dir.path().join("m");
    let mut e = std::fs::File::create(dir.path().join("m.E.mtx")).unwrap();
    writeln!(e, "%%MatrixMarket matrix coordinate real general\n3 3 2\n1 1 1.0\n2 2 1.0").unwrap();
    let mut a = std::fs::File::create(dir.path().join("m.A.mtx")).unwrap();
    writeln!(
        a,
        "%%MatrixMarket matrix array real general\n3 3\n-1\n-2\n1\n2\n-1\n0\n0.5\n0\n-1"
    )
    .unwrap();
    let from_json = load_linear_model(&json, ModelFormat::detect(&json)).unwrap();
    let from_mtx = load_linear_model(&stem, ModelFormat::detect(&stem)).unwrap();
    assert_eq!(from_json.linearized.pencil, from_mtx.linearized.pencil);
    assert_eq!(from_json.linearized.pencil, block_model().pencil);
    assert_eq!(from_mtx.model.m_y(), 1);
}

#[test]
fn malformed_json_names_the_key() {
    let err = pencilbench::models::parse_json_model(r#"{"r": 1, "m_x": 1, "m_y": 0, "E": [[1]], "A": "x"}"#, "bad.json")
        .unwrap_err()
        .to_string();
    assert!(err.contains("bad.json") && err.contains('A'), "{err}");
}

#[test]
fn sequential_and_parallel_sweeps_are_identical() {
    let lm = block_model();
    let hs: Vec<f64> = (1..=20).map(|k| 0.01 * k as f64).collect();
    let a = sweep(&MethodSpec::CATALOG, &lm, &hs, Execution::Sequential).unwrap();
    let b = sweep(&MethodSpec::CATALOG, &lm, &hs, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    let mut out = Vec::new();
    write_reports_csv(&a, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + a.iter().map(|r| r.rows.len()).sum::<usize>());
}

#[test]
fn dae_reports_match_the_reduced_ode() {
    let lm = block_model();
    let e = lm.e();
    let a = lm.a();
    // Eliminate the algebraic variable: x3 = x1.
    let reduced = DMatrix::from_row_slice(2, 2, &[a[(0, 0)] + a[(0, 2)], a[(0, 1)], a[(1, 0)], a[(1, 1)]]);
    assert_eq!(e[(2, 2)], 0.0);
    let ode = LinearizedModel::ode(reduced).unwrap();
    for spec in [MethodSpec::BackwardEuler, MethodSpec::Trapezoidal, MethodSpec::TwoStageDirk, MethodSpec::Bdf2] {
        let r1 = distortion_report(&spec, &lm, 0.05).unwrap();
        let r2 = distortion_report(&spec, &ode, 0.05).unwrap();
        assert_eq!(r1.rows.len(), r2.rows.len());
        for (x, y) in r1.rows.iter().zip(&r2.rows) {
            assert!((x.s_tilde - y.s_tilde).norm() < 1e-10, "{spec}: {} vs {}", x.s_tilde, y.s_tilde);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulated_linear_decay_follows_the_growth_function(lambda in -50.0..-0.1f64, h in 0.001..0.2f64) {
        let model = pencilbench::models::builtin_model(&pencilbench::models::Builtin::Dahlquist(Complex64::new(lambda, 0.0))).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        for spec in [MethodSpec::BackwardEuler, MethodSpec::Trapezoidal] {
            let traj = simulate(&model, &SimulationConfig::new(spec.clone(), h, 10.0 * h), &x0).unwrap();
            let z = pencilbench::growth_roots(&spec, Complex64::new(lambda * h, 0.0)).unwrap()[0].re;
            for (k, x) in traj.states.iter().enumerate() {
                let want = z.powi(k as i32);
                prop_assert!((x[0] - want).abs() <= 1e-7, "{} step {}: {} vs {}", spec, k, x[0], want);
            }
        }
    }
}
