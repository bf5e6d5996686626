//! Named analytic coefficient sets selectable from configuration files.

use std::sync::Arc;

use nalgebra::DMatrix;
use youngbsde::bsde_solver::{DriftFn, YoungCoefFn};
use youngbsde::diffusion::{norm, CoefFn, DiffusionSpec};
use youngbsde::drivers::{make_separable_driver, Regularity, SpaceTimeDriver};
use youngbsde::fractional_sheet::{sample_sheet, SheetSpec};
use youngbsde::pde_fk::ScalarFn;

use crate::config::Params;
use crate::error::CliError;

fn unknown<T>(what: &str, name: &str, known: &[&str]) -> Result<T, CliError> {
    Err(CliError::Config(format!("unknown {what} '{name}'; known: {}", known.join(", "))))
}

pub const DIFFUSIONS: [&str; 3] = ["brownian", "drifted-brownian", "ou-truncated"];

/// Reads `diffusion`, `dim` and the selected diffusion's own keys.
pub fn diffusion(p: &Params) -> Result<DiffusionSpec, CliError> {
    let name = p.str_or("diffusion", "brownian")?;
    let dim = p.usize_or("dim", 1)?;
    if dim == 0 {
        return Err(CliError::Config("dim must be positive".into()));
    }
    match name.as_str() {
        "brownian" => Ok(DiffusionSpec::brownian(dim)),
        "drifted-brownian" => {
            let drift = p.f64_list_or("drift", &[0.5])?;
            let drift = if drift.len() == 1 { vec![drift[0]; dim] } else { drift };
            if drift.len() != dim {
                return Err(CliError::Config(format!("drift has {} entries for dim = {dim}", drift.len())));
            }
            Ok(DiffusionSpec::drifted_brownian(drift))
        }
        "ou-truncated" => {
            // dX = -theta clamp(X, -K, K) dt + dW, coordinatewise.
            let theta = p.f64_or("ou_theta", 1.0)?;
            let clip = p.f64_or("ou_clip", 3.0)?;
            if !(theta > 0.0 && clip > 0.0) {
                return Err(CliError::Config("ou_theta and ou_clip must be positive".into()));
            }
            let sigma: CoefFn = Arc::new(move |_, _, o: &mut [f64]| {
                o.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..dim {
                    o[k * dim + k] = 1.0;
                }
            });
            let b: CoefFn = Arc::new(move |_, x: &[f64], o: &mut [f64]| {
                for (o, x) in o.iter_mut().zip(x) {
                    *o = -theta * x.clamp(-clip, clip);
                }
            });
            let bound = (dim as f64).sqrt().max(theta * clip * (dim as f64).sqrt());
            Ok(DiffusionSpec::new(dim, sigma, b, bound, theta.max(1.0), 1.0)?)
        }
        other => unknown("diffusion", other, &DIFFUSIONS),
    }
}

pub const DRIVERS: [&str; 7] = ["zero", "linear-time", "cos-potential", "x-squared", "tent-v", "sqrt-abs", "fbs"];

fn separable(v: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, reg: Regularity, horizon: f64) -> SpaceTimeDriver {
    make_separable_driver(1, Arc::new(move |x: &[f64], o: &mut [f64]| o[0] = v(x)), Arc::new(|t| t), reg, true, horizon)
}

/// Reads `driver`, `driver_scale` and, for sampled sheets, the `sheet_*`
/// keys. The horizon is passed in by the caller.
pub fn driver(p: &Params, horizon: f64, dim: usize, seed: u64) -> Result<SpaceTimeDriver, CliError> {
    driver_or(p, "zero", horizon, dim, seed)
}

pub fn driver_or(p: &Params, default: &str, horizon: f64, dim: usize, seed: u64) -> Result<SpaceTimeDriver, CliError> {
    let name = p.str_or("driver", default)?;
    let c = p.f64_or("driver_scale", 1.0)?;
    let lip = Regularity::lipschitz();
    Ok(match name.as_str() {
        "zero" => SpaceTimeDriver::zero(1, horizon),
        "linear-time" => SpaceTimeDriver::time_only(Arc::new(move |t| c * t), true, horizon),
        "cos-potential" => separable(move |x| c * x[0].cos(), lip, horizon),
        "x-squared" => separable(move |x| c * x.iter().map(|v| v * v).sum::<f64>(), Regularity::new(1.0, 1.0, 1.0)?, horizon),
        "tent-v" => separable(move |x| c * (1.0 - norm(x)).max(0.0), lip, horizon),
        "sqrt-abs" => separable(move |x| c * norm(x).sqrt(), Regularity::new(1.0, 0.5, 0.0)?, horizon),
        "fbs" => {
            let h0 = p.f64_or("sheet_h0", 0.9)?;
            let h = p.f64_or("sheet_h", 0.2)?;
            let nt = p.usize_or("sheet_nt", 16)?;
            let nx = p.usize_or("sheet_nx", 17)?;
            let x_max = p.f64_or("sheet_x_max", 4.0)?;
            let spec = SheetSpec::uniform(h0, vec![h; dim], horizon, nt, x_max, nx)?;
            sample_sheet(&spec, seed, 0.0)?
        }
        other => return unknown("driver", other, &DRIVERS),
    })
}

pub const TERMINALS: [&str; 5] = ["identity", "one", "sin", "gaussian", "abs"];

/// `(h, Lipschitz constant of h)` from the `terminal` key.
pub fn terminal(p: &Params) -> Result<(ScalarFn, f64), CliError> {
    let name = p.str_or("terminal", "identity")?;
    Ok(match name.as_str() {
        "identity" => (Arc::new(|x: &[f64]| x[0]), 1.0),
        "one" => (Arc::new(|_: &[f64]| 1.0), 0.0),
        "sin" => (Arc::new(|x: &[f64]| x[0].sin()), 1.0),
        "gaussian" => (Arc::new(|x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp()), (2.0f64).sqrt() * (-0.5f64).exp()),
        "abs" => (Arc::new(|x: &[f64]| norm(x)), 1.0),
        other => return unknown("terminal", other, &TERMINALS),
    })
}

pub const DRIFTS: [&str; 4] = ["none", "linear", "tanh", "v-tanh"];

/// Reaction term `f(t, x, y, z)` from `f` and `f_rate`.
pub fn reaction(p: &Params) -> Result<Option<DriftFn>, CliError> {
    let name = p.str_or("f", "none")?;
    let r = p.f64_or("f_rate", 0.1)?;
    Ok(match name.as_str() {
        "none" => None,
        "linear" => Some(Arc::new(move |_, _, y, _| r * y)),
        "tanh" => Some(Arc::new(move |_, _, y, _| r * y.tanh())),
        // Sublinear spatial weight times a bounded function of y.
        "v-tanh" => Some(Arc::new(move |_, x: &[f64], y, _| r * norm(x).sqrt() * y.tanh())),
        other => return unknown("reaction term", other, &DRIFTS),
    })
}

pub const YOUNG_COEFS: [&str; 5] = ["none", "one", "linear", "tanh", "sin"];

pub fn young_coef(p: &Params) -> Result<Option<YoungCoefFn>, CliError> {
    let name = p.str_or("g", "none")?;
    Ok(match name.as_str() {
        "none" => None,
        "one" => Some(Arc::new(|_, o: &mut [f64]| o[0] = 1.0)),
        "linear" => Some(Arc::new(|y, o: &mut [f64]| o[0] = y)),
        "tanh" => Some(Arc::new(|y: f64, o: &mut [f64]| o[0] = y.tanh())),
        "sin" => Some(Arc::new(|y: f64, o: &mut [f64]| o[0] = y.sin())),
        other => return unknown("Young coefficient", other, &YOUNG_COEFS),
    })
}

pub const GIRSANOV: [&str; 3] = ["none", "const", "sin"];

/// `(G, sup |G|)` from `girsanov` and `girsanov_value`.
pub fn girsanov(p: &Params, dim: usize) -> Result<Option<(CoefFn, f64)>, CliError> {
    let name = p.str_or("girsanov", "none")?;
    let g = p.f64_or("girsanov_value", 0.5)?;
    Ok(match name.as_str() {
        "none" => None,
        "const" => Some((Arc::new(move |_, _: &[f64], o: &mut [f64]| o.iter_mut().for_each(|v| *v = g)) as CoefFn, g.abs() * (dim as f64).sqrt())),
        "sin" => Some((
            Arc::new(move |_, x: &[f64], o: &mut [f64]| {
                o.iter_mut().for_each(|v| *v = 0.0);
                o[0] = g * x[0].sin();
            }) as CoefFn,
            g.abs(),
        )),
        other => return unknown("Girsanov kernel", other, &GIRSANOV),
    })
}

pub const SCALAR_PATHS: [&str; 6] = ["t", "one", "sin", "cos", "sin4t", "square"];

/// Scalar functions of time used as integrands and space paths.
pub fn scalar_path(name: &str) -> Result<fn(f64) -> f64, CliError> {
    Ok(match name {
        "t" => |t| t,
        "one" => |_| 1.0,
        "sin" => f64::sin,
        "cos" => f64::cos,
        "sin4t" => |t| (4.0 * t).sin(),
        "square" => |t| t * t,
        other => return unknown("path", other, &SCALAR_PATHS),
    })
}

pub const FLOW_COEFS: [&str; 3] = ["scalar", "rotation", "smooth2"];

/// `alpha(t)` for flow experiments: `(N, t -> N x N matrix)`.
pub fn flow_coef(p: &Params) -> Result<(usize, Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>), CliError> {
    let name = p.str_or("alpha", "rotation")?;
    let c = p.f64_or("alpha_scale", 1.0)?;
    Ok(match name.as_str() {
        "scalar" => (1, Arc::new(move |_| DMatrix::from_element(1, 1, c))),
        "rotation" => (2, Arc::new(move |_| DMatrix::from_row_slice(2, 2, &[0.3, -1.1, 0.8, -0.2]) * c)),
        "smooth2" => (2, Arc::new(move |t: f64| DMatrix::from_row_slice(2, 2, &[t.sin(), 0.5, -0.4, t.cos()]) * c)),
        other => return unknown("flow coefficient", other, &FLOW_COEFS),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves() {
        for d in DIFFUSIONS {
            let mut p = Params::default();
            p.apply_override(&format!("diffusion=\"{d}\"")).unwrap();
            assert!(diffusion(&p).is_ok(), "{d}");
        }
        for d in DRIVERS {
            let mut p = Params::default();
            p.apply_override(&format!("driver=\"{d}\"")).unwrap();
            if d == "fbs" {
                p.apply_override("sheet_nt=4").unwrap();
                p.apply_override("sheet_nx=5").unwrap();
            }
            assert!(driver(&p, 1.0, 1, 3).is_ok(), "{d}");
        }
        for t in TERMINALS {
            let mut p = Params::default();
            p.apply_override(&format!("terminal={t}")).unwrap();
            let (h, _) = terminal(&p).unwrap();
            assert!(h(&[0.3]).is_finite());
        }
        for n in SCALAR_PATHS {
            assert!(scalar_path(n).unwrap()(0.5).is_finite());
        }
        let mut p = Params::default();
        p.apply_override("driver=nope").unwrap();
        assert!(matches!(driver(&p, 1.0, 1, 0), Err(CliError::Config(_))));
    }
}
