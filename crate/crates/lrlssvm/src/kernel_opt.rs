//! Kernel-adaptation objectives, their gradients, and the constrained
//! normalized gradient step.
//!
//! All three objectives are maximized with (a, b) held at the current
//! dual solve. Gradients use the rank-one structure dK/dnu =
//! d phi' + phi d', so each unit costs O(N D) and nothing N x N is built.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{sign0, BasisFamily, BasisUnit, LowRankKernel};
use crate::error::{Error, Result};
use crate::solver::DualSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// sum_n |y_n|
    Abs,
    /// sum_n t_n y_n
    Target,
    /// sum_n y_n^2
    Square,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::Abs => write!(f, "abs"),
            Objective::Target => write!(f, "target"),
            Objective::Square => write!(f, "square"),
        }
    }
}

/// Gradient of the objective w.r.t. one unit's center and shape vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitGradient {
    pub dc: DVector<f64>,
    pub dmu: DVector<f64>,
}

fn model_outputs(phi: &DMatrix<f64>, sol: &DualSolution, t: &DVector<f64>) -> DVector<f64> {
    let v = DVector::from_fn(t.len(), |i, _| sol.a[i] * t[i]);
    let mut y = phi * (phi.transpose() * &v);
    y.add_scalar_mut(sol.b);
    y
}

/// Evaluate the training objective; y is computed as Phi (Phi' (a o t)) + b 1.
pub fn objective_value(
    phi: &DMatrix<f64>,
    sol: &DualSolution,
    t: &DVector<f64>,
    obj: Objective,
) -> f64 {
    let y = model_outputs(phi, sol, t);
    match obj {
        Objective::Abs => y.iter().map(|v| v.abs()).sum(),
        Objective::Target => t.dot(&y),
        Objective::Square => y.norm_squared(),
    }
}

/// Analytic gradient of the objective w.r.t. unit j's parameters, with
/// (a, b) fixed.
pub fn unit_gradient(
    j: usize,
    x: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    kernel: &LowRankKernel,
    sol: &DualSolution,
    t: &DVector<f64>,
    obj: Objective,
) -> Result<UnitGradient> {
    let n = x.nrows();
    let d = kernel.d();
    if j >= kernel.m() {
        return Err(Error::Dimension(format!("unit index {j} out of range")));
    }
    if phi.nrows() != n || phi.ncols() != kernel.m() || t.len() != n || sol.a.len() != n {
        return Err(Error::Dimension("unit_gradient shape mismatch".into()));
    }
    let unit = &kernel.units[j];
    let v = DVector::from_fn(n, |i, _| sol.a[i] * t[i]);
    let phi_j = phi.column(j).into_owned();
    let phi_v = phi_j.dot(&v);

    // weight vector w with grad_nu = (w'd)(phi'v) + (w'phi)(d'v) for the
    // linear objectives; Square needs Kv = Phi (Phi' v) and the bias term
    enum Mode {
        Linear { w: DVector<f64> },
        Square { kv: DVector<f64>, b: f64 },
    }
    let mode = match obj {
        Objective::Abs => {
            let y = model_outputs(phi, sol, t);
            Mode::Linear {
                w: y.map(sign0),
            }
        }
        Objective::Target => Mode::Linear { w: t.clone() },
        Objective::Square => Mode::Square {
            kv: phi * (phi.transpose() * &v),
            b: sol.b,
        },
    };

    let mut dc = DVector::zeros(d);
    let mut dmu = DVector::zeros(d);
    // derivative vectors over n for coordinate i, from the column values:
    // RRBF: dphi/dmu_i = -|x - c| phi, dphi/dc_i = mu sign(x - c) phi
    // SBF: same factors with the hinge indicator in place of phi
    let mut deriv = DVector::zeros(n);
    for i in 0..d {
        for coord in [Coord::Mu, Coord::C] {
            for row in 0..n {
                let diff = x[(row, i)] - unit.center[i];
                let outer = match kernel.family {
                    BasisFamily::RobustRbf => phi_j[row],
                    BasisFamily::Sbf => {
                        if phi_j[row] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                deriv[row] = match coord {
                    Coord::Mu => -diff.abs() * outer,
                    Coord::C => unit.shape[i] * sign0(diff) * outer,
                };
            }
            let g = match &mode {
                Mode::Linear { w } => w.dot(&deriv) * phi_v + w.dot(&phi_j) * deriv.dot(&v),
                Mode::Square { kv, b } => {
                    let ones_d: f64 = deriv.sum();
                    let ones_phi: f64 = phi_j.sum();
                    2.0 * (kv.dot(&deriv) * phi_v + kv.dot(&phi_j) * deriv.dot(&v))
                        + 2.0 * b * (ones_d * phi_v + ones_phi * deriv.dot(&v))
                }
            };
            match coord {
                Coord::Mu => dmu[i] = g,
                Coord::C => dc[i] = g,
            }
        }
    }
    Ok(UnitGradient { dc, dmu })
}

enum Coord {
    Mu,
    C,
}

const GRAD_NORM_EPS: f64 = 1e-12;

/// One constrained normalized ascent step: each block moves by eta along
/// its unit-norm gradient, and shapes are clamped at zero. A block whose
/// gradient norm falls below 1e-12 is left unchanged.
pub fn gd_step(unit: &BasisUnit, grad: &UnitGradient, eta: f64) -> Result<BasisUnit> {
    if eta <= 0.0 {
        return Err(Error::Config(format!("eta must be > 0, got {eta}")));
    }
    let mut center = unit.center.clone();
    let mut shape = unit.shape.clone();
    let cn = grad.dc.norm();
    if cn >= GRAD_NORM_EPS {
        center.axpy(eta / cn, &grad.dc, 1.0);
    }
    let mn = grad.dmu.norm();
    if mn >= GRAD_NORM_EPS {
        shape.axpy(eta / mn, &grad.dmu, 1.0);
    }
    shape.apply(|s| *s = s.max(0.0));
    BasisUnit::new(center, shape)
}
