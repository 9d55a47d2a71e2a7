//! Resolution of `--model` / `--mode` arguments.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use pencilbench::analysis::mode_fixture;
use pencilbench::models::{
    builtin_model, default_guess, find_equilibrium, linearize, load_linear_model, Builtin, DaeModel, LinearizedModel,
    ModelFormat, EQUILIBRIUM_TOL,
};
use pencilbench::textfmt::parse_complex;
use pencilbench::{Error, Result};

pub struct Source {
    /// Canonical description recorded in the manifest.
    pub label: String,
    pub model: DaeModel,
    pub linearized: LinearizedModel,
    /// Set for `mode:` sources.
    pub mode: Option<Complex64>,
}

/// `builtin:<spec>`, `mode:<re+imj>` or a file path (`.json`, or the stem of
/// a Matrix Market pair).
pub fn resolve(arg: &str) -> Result<Source> {
    if let Some(spec) = arg.strip_prefix("builtin:") {
        let model = builtin_model(&spec.parse::<Builtin>()?)?;
        let x_o = find_equilibrium(&model, &default_guess(&model), EQUILIBRIUM_TOL, 50)?;
        let linearized = linearize(&model, &x_o)?;
        return Ok(Source {
            label: arg.to_string(),
            model,
            linearized,
            mode: None,
        });
    }
    if let Some(s) = arg.strip_prefix("mode:") {
        return from_mode(parse_complex(s)?);
    }
    let path = Path::new(arg);
    let format = ModelFormat::detect(path);
    if format == ModelFormat::Json && !path.exists() {
        return Err(missing(path));
    }
    let loaded = load_linear_model(path, format)?;
    Ok(Source {
        label: arg.to_string(),
        model: loaded.model,
        linearized: loaded.linearized,
        mode: None,
    })
}

pub fn from_mode(s: Complex64) -> Result<Source> {
    let linearized = mode_fixture(s)?;
    let r = linearized.dim();
    let model = DaeModel::linear(
        "mode",
        linearized.e().clone(),
        linearized.a().clone(),
        Some(DVector::zeros(r)),
        r,
        0,
    )?;
    Ok(Source {
        label: format!("mode:{}", pencilbench::textfmt::format_complex(s)),
        model,
        linearized,
        mode: Some(s),
    })
}

fn missing(path: &Path) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
    }
}
