//! Learnable basis functions and the low-rank kernel they induce.
//!
//! Two families share the weighted L1 distance s(x) = sum_i mu_i |x_i - c_i|:
//! the simplex basis function max{0, 1 - s} and the robust RBF exp(-s).
//! The kernel k(x', x'') = sum_j phi_j(x') phi_j(x'') has Gram rank <= M,
//! and all hot-path code works through the N x M feature matrix rather
//! than any N x N matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisFamily {
    #[serde(rename = "SBF")]
    Sbf,
    #[serde(rename = "RobustRBF")]
    RobustRbf,
}

impl std::fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisFamily::Sbf => write!(f, "SBF"),
            BasisFamily::RobustRbf => write!(f, "RobustRBF"),
        }
    }
}

/// One basis unit: a center and a non-negative per-dimension shape vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisUnit {
    pub center: DVector<f64>,
    pub shape: DVector<f64>,
}

impl BasisUnit {
    pub fn new(center: DVector<f64>, shape: DVector<f64>) -> Result<Self> {
        if center.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "center has D={}, shape has D={}",
                center.len(),
                shape.len()
            )));
        }
        if center.iter().chain(shape.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("basis unit parameters must be finite".into()));
        }
        if shape.iter().any(|&m| m < 0.0) {
            return Err(Error::Data("shape parameters must be non-negative".into()));
        }
        Ok(BasisUnit { center, shape })
    }

    pub fn d(&self) -> usize {
        self.center.len()
    }

    /// Weighted L1 distance sum_i mu_i |x_i - c_i|.
    fn l1(&self, x: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d() {
            s += self.shape[i] * (x[i] - self.center[i]).abs();
        }
        s
    }
}

/// An M-unit learnable low-rank kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankKernel {
    pub family: BasisFamily,
    pub units: Vec<BasisUnit>,
}

impl LowRankKernel {
    pub fn new(family: BasisFamily, units: Vec<BasisUnit>) -> Result<Self> {
        let d = match units.first() {
            Some(u) => u.d(),
            None => return Err(Error::Config("kernel needs M >= 1 units".into())),
        };
        if units.iter().any(|u| u.d() != d) {
            return Err(Error::Dimension("kernel units must share D".into()));
        }
        Ok(LowRankKernel { family, units })
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn d(&self) -> usize {
        self.units[0].d()
    }
}

/// Evaluate one basis function at x.
pub fn eval_basis(x: &DVector<f64>, unit: &BasisUnit, family: BasisFamily) -> Result<f64> {
    if x.len() != unit.d() {
        return Err(Error::Dimension(format!(
            "point has D={}, unit has D={}",
            x.len(),
            unit.d()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite input point".into()));
    }
    let s = unit.l1(x);
    Ok(match family {
        BasisFamily::Sbf => (1.0 - s).max(0.0),
        BasisFamily::RobustRbf => (-s).exp(),
    })
}

/// The N x M matrix of basis values over a dataset's rows.
pub fn feature_matrix(x: &DMatrix<f64>, kernel: &LowRankKernel) -> Result<DMatrix<f64>> {
    if x.ncols() != kernel.d() {
        return Err(Error::Dimension(format!(
            "data has D={}, kernel has D={}",
            x.ncols(),
            kernel.d()
        )));
    }
    let n = x.nrows();
    let mut phi = DMatrix::zeros(n, kernel.m());
    for (j, unit) in kernel.units.iter().enumerate() {
        fill_feature_column(x, unit, kernel.family, &mut phi, j);
    }
    Ok(phi)
}

/// Recompute one column of a feature matrix in place (used when a single
/// unit's parameters change).
pub fn refresh_feature_column(
    x: &DMatrix<f64>,
    kernel: &LowRankKernel,
    j: usize,
    phi: &mut DMatrix<f64>,
) {
    fill_feature_column(x, &kernel.units[j], kernel.family, phi, j);
}

fn fill_feature_column(
    x: &DMatrix<f64>,
    unit: &BasisUnit,
    family: BasisFamily,
    phi: &mut DMatrix<f64>,
    j: usize,
) {
    let d = unit.d();
    for n in 0..x.nrows() {
        let mut s = 0.0;
        for i in 0..d {
            s += unit.shape[i] * (x[(n, i)] - unit.center[i]).abs();
        }
        phi[(n, j)] = match family {
            BasisFamily::Sbf => (1.0 - s).max(0.0),
            BasisFamily::RobustRbf => (-s).exp(),
        };
    }
}

/// k(x', x'') = sum_j phi_j(x') phi_j(x'').
pub fn kernel_value(xa: &DVector<f64>, xb: &DVector<f64>, kernel: &LowRankKernel) -> Result<f64> {
    let mut k = 0.0;
    for unit in &kernel.units {
        k += eval_basis(xa, unit, kernel.family)? * eval_basis(xb, unit, kernel.family)?;
    }
    Ok(k)
}

/// sign with sign(0) = 0, the symmetric subgradient choice.
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Partial derivatives of phi w.r.t. (mu_i, c_i) at x.
///
/// For the robust RBF these are -|x_i - c_i| phi and mu_i sign(x_i - c_i) phi.
/// The SBF variant is the hinge subgradient: the same factors without the
/// phi multiplier on the active region, 0 where the hinge saturates.
pub fn basis_grad(
    x: &DVector<f64>,
    unit: &BasisUnit,
    family: BasisFamily,
    i: usize,
) -> Result<(f64, f64)> {
    if i >= unit.d() {
        return Err(Error::Dimension(format!("dimension index {i} out of range")));
    }
    let phi = eval_basis(x, unit, family)?;
    let diff = x[i] - unit.center[i];
    let outer = match family {
        BasisFamily::RobustRbf => phi,
        // active iff s < 1, i.e. phi > 0; exact hinge boundary counts as
        // inactive.
        BasisFamily::Sbf => {
            if phi > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    };
    let dmu = -diff.abs() * outer;
    let dc = unit.shape[i] * sign0(diff) * outer;
    Ok((dmu, dc))
}

/// Piecewise-linear reading of an SBF model at x: coefficients (alpha, beta)
/// with alpha' x + beta equal to the model output sum_j theta_j phi_j(x) + b.
pub fn piecewise_decompose(
    x: &DVector<f64>,
    theta: &DVector<f64>,
    b: f64,
    kernel: &LowRankKernel,
) -> Result<(DVector<f64>, f64)> {
    if kernel.family != BasisFamily::Sbf {
        return Err(Error::Config(
            "piecewise decomposition is defined for the SBF family only".into(),
        ));
    }
    if theta.len() != kernel.m() {
        return Err(Error::Dimension(format!(
            "theta has length {}, kernel has M={}",
            theta.len(),
            kernel.m()
        )));
    }
    let d = kernel.d();
    let mut alpha = DVector::zeros(d);
    let mut beta = b;
    for (j, unit) in kernel.units.iter().enumerate() {
        if unit.l1(x) >= 1.0 {
            continue;
        }
        let mut ct = 0.0;
        for i in 0..d {
            let s = sign0(unit.center[i] - x[i]);
            alpha[i] += theta[j] * unit.shape[i] * s;
            ct += unit.shape[i] * unit.center[i] * s;
        }
        beta += theta[j] * (1.0 - ct);
    }
    Ok((alpha, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(center: &[f64], shape: &[f64]) -> BasisUnit {
        BasisUnit::new(
            DVector::from_column_slice(center),
            DVector::from_column_slice(shape),
        )
        .unwrap()
    }

    fn random_unit<R: Rng>(rng: &mut R, d: usize) -> BasisUnit {
        unit(
            &(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(),
            &(0..d).map(|_| rng.gen_range(0.0..2.0)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn basis_at_center_is_one() {
        let u = unit(&[0.3, -0.2], &[1.0, 2.0]);
        let x = u.center.clone();
        assert_eq!(eval_basis(&x, &u, BasisFamily::Sbf).unwrap(), 1.0);
        assert_eq!(eval_basis(&x, &u, BasisFamily::RobustRbf).unwrap(), 1.0);
    }

    #[test]
    fn sbf_hinge_saturates() {
        let u = unit(&[0.0], &[0.5]);
        let x = DVector::from_column_slice(&[3.0]);
        assert_eq!(eval_basis(&x, &u, BasisFamily::Sbf).unwrap(), 0.0);
    }

    #[test]
    fn rrbf_exp_of_minus_one() {
        let u = unit(&[0.0, 0.0], &[1.0, 2.0]);
        let x = DVector::from_column_slice(&[0.5, 0.25]);
        let v = eval_basis(&x, &u, BasisFamily::RobustRbf).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn feature_matrix_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
        for family in [BasisFamily::Sbf, BasisFamily::RobustRbf] {
            let kernel = LowRankKernel::new(
                family,
                (0..2).map(|_| random_unit(&mut rng, 3)).collect(),
            )
            .unwrap();
            let phi = feature_matrix(&x, &kernel).unwrap();
            for n in 0..5 {
                for j in 0..2 {
                    let p = eval_basis(&x.row(n).transpose(), &kernel.units[j], family).unwrap();
                    assert_eq!(phi[(n, j)], p);
                }
            }
        }
    }

    #[test]
    fn kernel_value_symmetric_and_nonnegative_on_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = LowRankKernel::new(
            BasisFamily::RobustRbf,
            (0..3).map(|_| random_unit(&mut rng, 4)).collect(),
        )
        .unwrap();
        let a = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
        let b = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
        let kab = kernel_value(&a, &b, &kernel).unwrap();
        let kba = kernel_value(&b, &a, &kernel).unwrap();
        assert_eq!(kab, kba);
        assert!(kernel_value(&a, &a, &kernel).unwrap() >= 0.0);
    }

    #[test]
    fn grad_at_center_is_zero() {
        let u = unit(&[0.5], &[1.0]);
        let (dmu, dc) = basis_grad(&u.center.clone(), &u, BasisFamily::RobustRbf, 0).unwrap();
        assert_eq!((dmu, dc), (0.0, 0.0));
    }

    #[test]
    fn grad_matches_stated_formula() {
        let u = unit(&[0.0], &[1.0]);
        let x = DVector::from_column_slice(&[1.0]);
        let (dmu, dc) = basis_grad(&x, &u, BasisFamily::RobustRbf, 0).unwrap();
        let e = (-1.0f64).exp();
        assert!((dmu + e).abs() < 1e-15);
        assert!((dc - e).abs() < 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        for family in [BasisFamily::Sbf, BasisFamily::RobustRbf] {
            for _ in 0..50 {
                let d = rng.gen_range(1..5);
                let u = random_unit(&mut rng, d);
                let x = DVector::from_fn(d, |i, _| {
                    // keep away from kinks: x_i != c_i
                    u.center[i] + rng.gen_range(0.05..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                });
                if family == BasisFamily::Sbf && (u.l1(&x) - 1.0).abs() < 0.05 {
                    continue; // hinge boundary
                }
                for i in 0..d {
                    if u.shape[i] < 0.05 {
                        continue; // mu clamp boundary under the FD probe
                    }
                    let (dmu, dc) = basis_grad(&x, &u, family, i).unwrap();
                    let mut up = u.clone();
                    up.shape[i] += h;
                    let mut dn = u.clone();
                    dn.shape[i] -= h;
                    let fd_mu = (eval_basis(&x, &up, family).unwrap()
                        - eval_basis(&x, &dn, family).unwrap())
                        / (2.0 * h);
                    let mut up = u.clone();
                    up.center[i] += h;
                    let mut dn = u.clone();
                    dn.center[i] -= h;
                    let fd_c = (eval_basis(&x, &up, family).unwrap()
                        - eval_basis(&x, &dn, family).unwrap())
                        / (2.0 * h);
                    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-8);
                    assert!(rel(dmu, fd_mu) < 1e-5, "dmu {dmu} vs fd {fd_mu}");
                    assert!(rel(dc, fd_c) < 1e-5, "dc {dc} vs fd {fd_c}");
                }
            }
        }
    }

    #[test]
    fn decompose_outside_support_reduces_to_bias() {
        let kernel = LowRankKernel::new(
            BasisFamily::Sbf,
            vec![unit(&[0.0, 0.0], &[1.0, 1.0])],
        )
        .unwrap();
        let theta = DVector::from_column_slice(&[2.0]);
        let x = DVector::from_column_slice(&[10.0, 10.0]);
        let (alpha, beta) = piecewise_decompose(&x, &theta, 0.5, &kernel).unwrap();
        assert!(alpha.iter().all(|&v| v == 0.0));
        assert_eq!(beta, 0.5);
    }

    #[test]
    fn decompose_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let d = rng.gen_range(1..4);
            let m = rng.gen_range(1..5);
            let kernel = LowRankKernel::new(
                BasisFamily::Sbf,
                (0..m).map(|_| random_unit(&mut rng, d)).collect(),
            )
            .unwrap();
            let theta = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let b = rng.gen_range(-1.0..1.0);
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let (alpha, beta) = piecewise_decompose(&x, &theta, b, &kernel).unwrap();
            let direct: f64 = (0..m)
                .map(|j| theta[j] * eval_basis(&x, &kernel.units[j], BasisFamily::Sbf).unwrap())
                .sum::<f64>()
                + b;
            assert!((alpha.dot(&x) + beta - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_with_zero_theta() {
        let kernel =
            LowRankKernel::new(BasisFamily::Sbf, vec![unit(&[0.0], &[1.0])]).unwrap();
        let (alpha, beta) = piecewise_decompose(
            &DVector::from_column_slice(&[0.1]),
            &DVector::from_column_slice(&[0.0]),
            -1.5,
            &kernel,
        )
        .unwrap();
        assert_eq!(alpha[0], 0.0);
        assert_eq!(beta, -1.5);
    }

    #[test]
    fn decompose_rejects_rrbf() {
        let kernel =
            LowRankKernel::new(BasisFamily::RobustRbf, vec![unit(&[0.0], &[1.0])]).unwrap();
        assert!(piecewise_decompose(
            &DVector::from_column_slice(&[0.1]),
            &DVector::from_column_slice(&[1.0]),
            0.0,
            &kernel,
        )
        .is_err());
    }

    #[test]
    fn taylor_gap_between_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let d = rng.gen_range(1..4);
            let u = random_unit(&mut rng, d);
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let s = u.l1(&x);
            if s > 1.0 {
                continue;
            }
            let rrbf = eval_basis(&x, &u, BasisFamily::RobustRbf).unwrap();
            let sbf = eval_basis(&x, &u, BasisFamily::Sbf).unwrap();
            let gap = rrbf - sbf;
            assert!(gap >= 0.0 && gap <= s * s / 2.0 + 1e-15, "s={s} gap={gap}");
        }
    }
}
