//! Closed-form LSSVM dual solves and the sparse inference model.
//!
//! `solve_direct` factors the full (N+1) saddle-point system and is the
//! reference path, gated to N <= 5000. `solve_fast` uses the low-rank
//! structure: it inverts only an M x M matrix and applies the structured
//! inverse P through rank-one identities, so no N x N matrix is ever
//! formed and the cost is O(M^2 N + M^3).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis, BasisFamily, BasisUnit, LowRankKernel};
use crate::data::{normalize_point, NormStats};
use crate::error::{Error, Result};

/// Lagrange multipliers and bias from an LSSVM solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub b: f64,
    pub a: DVector<f64>,
}

/// Largest N accepted by the dense reference solver.
pub const DIRECT_SOLVE_MAX_N: usize = 5000;

fn check_inputs(phi: &DMatrix<f64>, t: &DVector<f64>, gamma: f64) -> Result<()> {
    if gamma <= 0.0 {
        return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
    }
    if phi.nrows() != t.len() {
        return Err(Error::Dimension(format!(
            "Phi has {} rows, t has {} entries",
            phi.nrows(),
            t.len()
        )));
    }
    Ok(())
}

/// Reference solve of the (N+1) saddle system
/// [[0, t'], [t, diag(t) Phi Phi' diag(t) + I/gamma]] [b; a] = [0; 1].
pub fn solve_direct(phi: &DMatrix<f64>, t: &DVector<f64>, gamma: f64) -> Result<DualSolution> {
    check_inputs(phi, t, gamma)?;
    let n = phi.nrows();
    if n > DIRECT_SOLVE_MAX_N {
        return Err(Error::Config(format!(
            "direct solver is gated to N <= {DIRECT_SOLVE_MAX_N}, got N = {n}"
        )));
    }
    let gram = phi * phi.transpose();
    let mut sys = DMatrix::zeros(n + 1, n + 1);
    for r in 0..n {
        sys[(0, r + 1)] = t[r];
        sys[(r + 1, 0)] = t[r];
        for c in 0..n {
            sys[(r + 1, c + 1)] = t[r] * t[c] * gram[(r, c)];
        }
        sys[(r + 1, r + 1)] += 1.0 / gamma;
    }
    let mut rhs = DVector::from_element(n + 1, 1.0);
    rhs[0] = 0.0;
    let lu = sys.full_piv_lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("solve_direct", "singular saddle-point system"))?;
    Ok(DualSolution {
        b: sol[0],
        a: sol.rows(1, n).into_owned(),
    })
}

/// Apply P = (1/N) [[-1/gamma, t'], [t, gamma (N I - t t')]] to a vector
/// without forming P.
fn apply_p(t: &DVector<f64>, gamma: f64, z0: f64, z1: &DVector<f64>) -> (f64, DVector<f64>) {
    let n = t.len() as f64;
    let tz = t.dot(z1);
    let out0 = (-z0 / gamma + tz) / n;
    let out1 = DVector::from_fn(t.len(), |i, _| {
        (z0 * t[i] + gamma * (n * z1[i] - tz * t[i])) / n
    });
    (out0, out1)
}

/// Low-rank solve of the same system via the matrix inversion lemma:
/// [b; a] = q - P Phi~ (I_M + Phi~' P Phi~)^-1 Phi~' q with q = P [0; 1].
pub fn solve_fast(phi: &DMatrix<f64>, t: &DVector<f64>, gamma: f64) -> Result<DualSolution> {
    check_inputs(phi, t, gamma)?;
    let n = phi.nrows();
    let m = phi.ncols();

    // q = P [0; 1]
    let ones = DVector::from_element(n, 1.0);
    let (q0, q1) = apply_p(t, gamma, 0.0, &ones);

    // Phi~ columns are [0; t o phi_j]; P Phi~ column-by-column
    let mut ptilde0 = DVector::zeros(m); // top entries of P Phi~
    let mut ptilde1 = DMatrix::zeros(n, m); // lower block of P Phi~
    let mut tphi = DMatrix::zeros(n, m); // diag(t) Phi
    for j in 0..m {
        let col = DVector::from_fn(n, |i, _| t[i] * phi[(i, j)]);
        let (p0, p1) = apply_p(t, gamma, 0.0, &col);
        ptilde0[j] = p0;
        ptilde1.set_column(j, &p1);
        tphi.set_column(j, &col);
    }

    // A = I_M + Phi~' (P Phi~); the top zero row of Phi~ drops the 0-block
    let mut a_small = tphi.transpose() * &ptilde1;
    for j in 0..m {
        a_small[(j, j)] += 1.0;
    }
    // rhs = Phi~' q
    let rhs = tphi.transpose() * &q1;
    let lu = a_small.full_piv_lu();
    let z = lu.solve(&rhs).ok_or_else(|| {
        Error::numerical("solve_fast", "I_M + Phi~' P Phi~ is numerically singular")
    })?;

    let b = q0 - ptilde0.dot(&z);
    let a = q1 - &ptilde1 * &z;
    Ok(DualSolution { b, a })
}

/// theta = Phi' (a o t), packaged with the kernel for O(M D) inference.
pub fn sparse_coefficients(
    phi: &DMatrix<f64>,
    sol: &DualSolution,
    t: &DVector<f64>,
    kernel: &LowRankKernel,
) -> Result<SparseModel> {
    if phi.nrows() != t.len() || phi.nrows() != sol.a.len() || phi.ncols() != kernel.m() {
        return Err(Error::Dimension("sparse_coefficients shape mismatch".into()));
    }
    let v = DVector::from_fn(t.len(), |i, _| sol.a[i] * t[i]);
    let theta = phi.transpose() * v;
    Ok(SparseModel {
        theta,
        b: sol.b,
        kernel: kernel.clone(),
        norm: None,
    })
}

/// The M-term inference model y(x) = sum_j theta_j phi_j(x) + b.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub theta: DVector<f64>,
    pub b: f64,
    pub kernel: LowRankKernel,
    pub norm: Option<NormStats>,
}

/// Units whose coefficient magnitude falls below this are flagged
/// inactive in the serialized model.
const INACTIVE_THETA: f64 = 1e-8;

impl SparseModel {
    pub fn m(&self) -> usize {
        self.kernel.m()
    }

    pub fn d(&self) -> usize {
        self.kernel.d()
    }

    pub fn predict_score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::Dimension(format!(
                "point has D={}, model has D={}",
                x.len(),
                self.d()
            )));
        }
        let z = match &self.norm {
            Some(s) => normalize_point(x, s),
            None => x.clone(),
        };
        let mut y = self.b;
        for (j, unit) in self.kernel.units.iter().enumerate() {
            y += self.theta[j] * eval_basis(&z, unit, self.kernel.family)?;
        }
        Ok(y)
    }

    /// sign of the score, with sign(0) = +1.
    pub fn classify_point(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(if self.predict_score(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    pub fn classify(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(x.nrows());
        for nrow in 0..x.nrows() {
            out[nrow] = self.classify_point(&x.row(nrow).transpose())?;
        }
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        let d = self.d();
        let doc = ModelJson {
            family: self.kernel.family,
            m: self.m(),
            d,
            centers: self
                .kernel
                .units
                .iter()
                .map(|u| u.center.iter().copied().collect())
                .collect(),
            shapes: self
                .kernel
                .units
                .iter()
                .map(|u| u.shape.iter().copied().collect())
                .collect(),
            theta: self.theta.iter().copied().collect(),
            b: self.b,
            norm: self.norm.clone(),
            inactive_units: (0..self.m())
                .filter(|&j| self.theta[j].abs() < INACTIVE_THETA)
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text)
            .map_err(|e| Error::Data(format!("malformed model JSON: {e}")))?;
        if doc.centers.len() != doc.m || doc.shapes.len() != doc.m || doc.theta.len() != doc.m {
            return Err(Error::Data("model JSON: M does not match array lengths".into()));
        }
        let units = doc
            .centers
            .iter()
            .zip(&doc.shapes)
            .map(|(c, s)| {
                if c.len() != doc.d || s.len() != doc.d {
                    return Err(Error::Data(
                        "model JSON: D does not match center/shape lengths".into(),
                    ));
                }
                BasisUnit::new(
                    DVector::from_column_slice(c),
                    DVector::from_column_slice(s),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseModel {
            theta: DVector::from_vec(doc.theta),
            b: doc.b,
            kernel: LowRankKernel::new(doc.family, units)?,
            norm: doc.norm,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    family: BasisFamily,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "D")]
    d: usize,
    centers: Vec<Vec<f64>>,
    shapes: Vec<Vec<f64>>,
    theta: Vec<f64>,
    b: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    norm: Option<NormStats>,
    #[serde(default)]
    inactive_units: Vec<usize>,
}

/// Which exponent the Gaussian baseline kernel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GaussianKernelForm {
    /// exp(-||x - x'||^2 / (2 sigma^2))
    #[default]
    HalfSigmaSq,
    /// exp(-||x - x'||^2 / sigma^2)
    SigmaSq,
}

/// Full-rank Gaussian-RBF LSSVM baseline.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub a: DVector<f64>,
    pub b: f64,
    pub sigma: f64,
    pub form: GaussianKernelForm,
    pub support_x: DMatrix<f64>,
    pub support_t: DVector<f64>,
}

fn gaussian_kernel(xa: &DVector<f64>, xb: &DVector<f64>, sigma: f64, form: GaussianKernelForm) -> f64 {
    let sq = (xa - xb).norm_squared();
    match form {
        GaussianKernelForm::HalfSigmaSq => (-sq / (2.0 * sigma * sigma)).exp(),
        GaussianKernelForm::SigmaSq => (-sq / (sigma * sigma)).exp(),
    }
}

/// Solve the full (N+1) saddle system with the Gaussian kernel.
pub fn solve_gaussian_lssvm(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    gamma: f64,
    sigma: f64,
    form: GaussianKernelForm,
) -> Result<GaussianModel> {
    if sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
    }
    if gamma <= 0.0 {
        return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
    }
    let n = x.nrows();
    if n != t.len() {
        return Err(Error::Dimension("X rows must match t length".into()));
    }
    let mut sys = DMatrix::zeros(n + 1, n + 1);
    for r in 0..n {
        sys[(0, r + 1)] = t[r];
        sys[(r + 1, 0)] = t[r];
        let xr = x.row(r).transpose();
        for c in r..n {
            let k = gaussian_kernel(&xr, &x.row(c).transpose(), sigma, form);
            sys[(r + 1, c + 1)] = t[r] * t[c] * k;
            sys[(c + 1, r + 1)] = sys[(r + 1, c + 1)];
        }
        sys[(r + 1, r + 1)] += 1.0 / gamma;
    }
    let mut rhs = DVector::from_element(n + 1, 1.0);
    rhs[0] = 0.0;
    let sol = sys
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("solve_gaussian_lssvm", "singular saddle-point system"))?;
    Ok(GaussianModel {
        a: sol.rows(1, n).into_owned(),
        b: sol[0],
        sigma,
        form,
        support_x: x.clone(),
        support_t: t.clone(),
    })
}

impl GaussianModel {
    pub fn predict_score(&self, x: &DVector<f64>) -> f64 {
        let mut y = self.b;
        for n in 0..self.support_x.nrows() {
            y += self.a[n]
                * self.support_t[n]
                * gaussian_kernel(x, &self.support_x.row(n).transpose(), self.sigma, self.form);
        }
        y
    }

    pub fn classify(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |n, _| {
            if self.predict_score(&x.row(n).transpose()) >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::feature_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point_instance() -> (DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
    }

    #[test]
    fn direct_two_point_hand_solve() {
        let (phi, t) = two_point_instance();
        let sol = solve_direct(&phi, &t, 1.0).unwrap();
        assert!((sol.b + 1.0 / 3.0).abs() < 1e-12);
        assert!((sol.a[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.a[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn direct_degenerate_zero_phi() {
        let phi = DMatrix::zeros(2, 1);
        let t = DVector::from_vec(vec![1.0, -1.0]);
        for gamma in [0.5, 1.0, 10.0] {
            let sol = solve_direct(&phi, &t, gamma).unwrap();
            assert!(sol.b.abs() < 1e-10);
            assert!((sol.a[0] - gamma).abs() < 1e-8 * gamma);
            assert!((sol.a[1] - gamma).abs() < 1e-8 * gamma);
        }
    }

    #[test]
    fn stationarity_in_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(3..40);
            let m = rng.gen_range(1..5);
            let phi = DMatrix::from_fn(n, m, |_, _| rng.gen_range(0.0..1.0));
            let t = DVector::from_fn(n, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            let gamma = rng.gen_range(0.1..100.0);
            for sol in [
                solve_direct(&phi, &t, gamma).unwrap(),
                solve_fast(&phi, &t, gamma).unwrap(),
            ] {
                let at: f64 = (0..n).map(|i| sol.a[i] * t[i]).sum();
                assert!(at.abs() < 1e-8, "sum a t = {at}");
            }
        }
    }

    #[test]
    fn fast_matches_direct_on_two_point_example() {
        let (phi, t) = two_point_instance();
        let d = solve_direct(&phi, &t, 1.0).unwrap();
        let f = solve_fast(&phi, &t, 1.0).unwrap();
        assert!((d.b - f.b).abs() < 1e-10);
        assert!((d.a - f.a).norm() < 1e-10);
    }

    #[test]
    fn fast_matches_direct_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(5..=200);
            let m = rng.gen_range(1..=8);
            let phi = DMatrix::from_fn(n, m, |_, _| rng.gen_range(0.0..1.0));
            let mut t = DVector::from_fn(n, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
            t[0] = 1.0;
            t[1] = -1.0; // keep both classes present
            let gamma = 10f64.powf(rng.gen_range(-1.0..3.0));
            let d = solve_direct(&phi, &t, gamma).unwrap();
            let f = solve_fast(&phi, &t, gamma).unwrap();
            let dd = DVector::from_fn(n + 1, |i, _| if i == 0 { d.b } else { d.a[i - 1] });
            let ff = DVector::from_fn(n + 1, |i, _| if i == 0 { f.b } else { f.a[i - 1] });
            let rel = (&dd - &ff).norm() / dd.norm();
            assert!(rel <= 1e-8, "relative deviation {rel}");
        }
    }

    #[test]
    fn sparse_coefficients_two_point() {
        let (phi, t) = two_point_instance();
        let sol = solve_direct(&phi, &t, 1.0).unwrap();
        let kernel = LowRankKernel::new(
            BasisFamily::Sbf,
            vec![BasisUnit::new(
                DVector::from_column_slice(&[1.0]),
                DVector::from_column_slice(&[1.0]),
            )
            .unwrap()],
        )
        .unwrap();
        let model = sparse_coefficients(&phi, &sol, &t, &kernel).unwrap();
        assert!((model.theta[0] - 2.0 / 3.0).abs() < 1e-12);
        // score at the first training point (phi = 1): 2/3 - 1/3 = 1/3
        let score = model
            .predict_score(&DVector::from_column_slice(&[1.0]))
            .unwrap();
        assert!((score - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            model
                .classify_point(&DVector::from_column_slice(&[1.0]))
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_dual_gives_zero_theta() {
        let (phi, t) = two_point_instance();
        let kernel = LowRankKernel::new(
            BasisFamily::Sbf,
            vec![BasisUnit::new(
                DVector::from_column_slice(&[0.0]),
                DVector::from_column_slice(&[1.0]),
            )
            .unwrap()],
        )
        .unwrap();
        let sol = DualSolution {
            b: 0.0,
            a: DVector::zeros(2),
        };
        let model = sparse_coefficients(&phi, &sol, &t, &kernel).unwrap();
        assert_eq!(model.theta[0], 0.0);
    }

    #[test]
    fn constant_negative_model_classifies_negative() {
        let kernel = LowRankKernel::new(
            BasisFamily::RobustRbf,
            vec![BasisUnit::new(
                DVector::from_column_slice(&[0.0]),
                DVector::from_column_slice(&[1.0]),
            )
            .unwrap()],
        )
        .unwrap();
        let model = SparseModel {
            theta: DVector::zeros(1),
            b: -2.0,
            kernel,
            norm: None,
        };
        let x = DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 5.0]);
        let labels = model.classify(&x).unwrap();
        assert!(labels.iter().all(|&l| l == -1.0));
    }

    #[test]
    fn zero_score_classifies_positive() {
        let kernel = LowRankKernel::new(
            BasisFamily::Sbf,
            vec![BasisUnit::new(
                DVector::from_column_slice(&[0.0]),
                DVector::from_column_slice(&[1.0]),
            )
            .unwrap()],
        )
        .unwrap();
        let model = SparseModel {
            theta: DVector::zeros(1),
            b: 0.0,
            kernel,
            norm: None,
        };
        assert_eq!(
            model
                .classify_point(&DVector::from_column_slice(&[0.3]))
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn dual_and_sparse_predictions_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mut t = DVector::from_fn(30, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        t[0] = 1.0;
        t[1] = -1.0;
        let kernel = LowRankKernel::new(
            BasisFamily::RobustRbf,
            (0..3)
                .map(|j| {
                    BasisUnit::new(
                        x.row(j).transpose(),
                        DVector::from_element(2, 0.7),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let phi = feature_matrix(&x, &kernel).unwrap();
        let sol = solve_fast(&phi, &t, 10.0).unwrap();
        let model = sparse_coefficients(&phi, &sol, &t, &kernel).unwrap();
        // dual prediction k(x, X)' (a o t) + b at arbitrary points
        for _ in 0..20 {
            let p = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let mut dual = sol.b;
            for n in 0..30 {
                dual += sol.a[n]
                    * t[n]
                    * crate::basis::kernel_value(&p, &x.row(n).transpose(), &kernel).unwrap();
            }
            let sparse = model.predict_score(&p).unwrap();
            assert!((dual - sparse).abs() <= 1e-10, "{dual} vs {sparse}");
        }
    }

    #[test]
    fn gaussian_symmetric_two_point() {
        let x = DMatrix::from_column_slice(2, 1, &[0.5, 0.5]);
        let t = DVector::from_vec(vec![1.0, -1.0]);
        let m = solve_gaussian_lssvm(&x, &t, 2.0, 1.0, GaussianKernelForm::HalfSigmaSq).unwrap();
        assert!(m.b.abs() < 1e-10);
        assert!((m.a[0] - m.a[1]).abs() < 1e-10);
    }

    #[test]
    fn gaussian_kkt_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = DMatrix::from_fn(25, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut t = DVector::from_fn(25, |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        t[0] = 1.0;
        t[1] = -1.0;
        let gamma = 50.0;
        let m = solve_gaussian_lssvm(&x, &t, gamma, 1.2, GaussianKernelForm::HalfSigmaSq).unwrap();
        for n in 0..25 {
            let y = m.predict_score(&x.row(n).transpose());
            let resid = t[n] * y - (1.0 - m.a[n] / gamma);
            assert!(resid.abs() < 1e-8, "KKT residual {resid}");
        }
    }

    #[test]
    fn model_json_round_trip() {
        let kernel = LowRankKernel::new(
            BasisFamily::RobustRbf,
            vec![
                BasisUnit::new(
                    DVector::from_column_slice(&[0.123456789012345, -1.0]),
                    DVector::from_column_slice(&[0.2, 0.0]),
                )
                .unwrap(),
                BasisUnit::new(
                    DVector::from_column_slice(&[2.0, 3.0]),
                    DVector::from_column_slice(&[1e-300, 7.5]),
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let model = SparseModel {
            theta: DVector::from_column_slice(&[1.0 / 3.0, -2.5e-9]),
            b: -0.25,
            kernel,
            norm: Some(NormStats {
                shift: vec![0.5, -0.5],
                scale: vec![1.0, 2.0],
            }),
        };
        let text = model.to_json_string();
        let back = SparseModel::from_json_str(&text).unwrap();
        assert_eq!(model, back);
        // near-zero units flagged inactive
        assert!(text.contains("inactive_units"));
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["inactive_units"], serde_json::json!([1]));
    }

    #[test]
    fn direct_solver_gate() {
        let phi = DMatrix::zeros(DIRECT_SOLVE_MAX_N + 1, 1);
        let t = DVector::from_element(DIRECT_SOLVE_MAX_N + 1, 1.0);
        assert!(solve_direct(&phi, &t, 1.0).is_err());
    }
}
