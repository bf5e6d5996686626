//! Least-squares projection on polynomial bases, used for the conditional
//! expectations in the backward (LSMC) schemes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Monomials of total degree `<= degree` in `dim` variables, constant first.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyBasis {
    dim: usize,
    exponents: Vec<Vec<u32>>,
}

impl PolyBasis {
    pub fn new(dim: usize, degree: u32) -> Self {
        let mut exponents = Vec::new();
        for total in 0..=degree {
            let mut cur = vec![0u32; dim];
            push_compositions(&mut exponents, &mut cur, 0, total);
        }
        if dim == 0 {
            exponents = vec![Vec::new()];
        }
        PolyBasis { dim, exponents }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e.iter().zip(z).map(|(&k, &v)| v.powi(k as i32)).product();
        }
    }
}

fn push_compositions(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        push_compositions(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

/// A fitted projection `x -> sum_k coef_k * basis_k((x - shift) / scale)`.
#[derive(Clone, Debug)]
pub struct RegressionFit {
    pub basis: PolyBasis,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    /// One coefficient column per regressed target.
    pub coef: DMatrix<f64>,
    pub ridge: f64,
}

impl RegressionFit {
    pub fn predict(&self, x: &[f64], target: usize) -> f64 {
        let mut phi = vec![0.0; self.basis.len()];
        self.features(x, &mut phi);
        phi.iter().enumerate().map(|(k, p)| p * self.coef[(k, target)]).sum()
    }

    pub fn predict_all(&self, x: &[f64], phi: &mut [f64], out: &mut [f64]) {
        self.features(x, phi);
        for (j, o) in out.iter_mut().enumerate() {
            *o = phi.iter().enumerate().map(|(k, p)| p * self.coef[(k, j)]).sum();
        }
    }

    fn features(&self, x: &[f64], phi: &mut [f64]) {
        let z: Vec<f64> = x
            .iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (s, c))| (v - s) / c)
            .collect();
        self.basis.eval_into(&z, phi);
    }
}

/// Base ridge, relative to the largest diagonal entry of the normal matrix.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Regresses each target column on the basis evaluated at the states.
///
/// `states` is row-major with `basis.dim()` entries per row and `targets`
/// has `n_targets` entries per row. The intercept is not penalized, so the
/// fitted values reproduce the sample mean of every target exactly.
pub fn fit(
    basis: &PolyBasis,
    states: &[f64],
    targets: &[f64],
    n_targets: usize,
    ridge: f64,
) -> Result<RegressionFit> {
    let d = basis.dim();
    let n = if d == 0 { targets.len() / n_targets.max(1) } else { states.len() / d };
    if n == 0 {
        return Err(Error::Numerical("regression on an empty sample".into()));
    }
    let mut shift = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for k in 0..d {
        let m = (0..n).map(|i| states[i * d + k]).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (states[i * d + k] - m).powi(2)).sum::<f64>() / n as f64;
        shift[k] = m;
        scale[k] = if v > 0.0 { v.sqrt() } else { 1.0 };
    }
    let kb = basis.len();
    let mut xtx = DMatrix::<f64>::zeros(kb, kb);
    let mut xty = DMatrix::<f64>::zeros(kb, n_targets);
    let mut phi = vec![0.0; kb];
    let mut z = vec![0.0; d];
    for i in 0..n {
        for k in 0..d {
            z[k] = (states[i * d + k] - shift[k]) / scale[k];
        }
        basis.eval_into(&z, &mut phi);
        for a in 0..kb {
            for b in a..kb {
                xtx[(a, b)] += phi[a] * phi[b];
            }
            for j in 0..n_targets {
                xty[(a, j)] += phi[a] * targets[i * n_targets + j];
            }
        }
    }
    for a in 0..kb {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    let diag_max = (0..kb).map(|a| xtx[(a, a)]).fold(0.0, f64::max).max(1.0);
    let mut lam = ridge;
    while lam <= 1e-2 {
        let mut m = xtx.clone();
        for a in 1..kb {
            m[(a, a)] += lam * diag_max;
        }
        if let Some(ch) = m.cholesky() {
            let coef = ch.solve(&xty);
            if coef.iter().all(|c| c.is_finite()) {
                return Ok(RegressionFit { basis: basis.clone(), shift, scale, coef, ridge: lam });
            }
        }
        lam *= 100.0;
    }
    Err(Error::Numerical(format!("regression normal matrix rank deficient ({n} samples, {kb} basis functions)")))
}

/// Convenience for a single target.
pub fn fit_scalar(basis: &PolyBasis, states: &[f64], targets: &[f64]) -> Result<RegressionFit> {
    fit(basis, states, targets, 1, DEFAULT_RIDGE)
}
