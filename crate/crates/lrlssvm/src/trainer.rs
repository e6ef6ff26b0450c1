//! Training orchestration: alternate the fast closed-form dual solve with
//! per-unit kernel gradient steps, then evaluate and benchmark.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{feature_matrix, refresh_feature_column, BasisFamily, LowRankKernel};
use crate::data::{apply_normalizer, fit_normalizer, BenchmarkSuite, Dataset};
use crate::error::{Error, Result};
use crate::init::init_kernel;
use crate::kernel_opt::{gd_step, objective_value, unit_gradient, Objective};
use crate::solver::{solve_fast, sparse_coefficients, DualSolution, SparseModel};

/// The knobs of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub family: BasisFamily,
    pub mu0: f64,
    pub gamma: f64,
    pub eta: f64,
    /// Outer iteration count T.
    pub iters: usize,
    pub objective: Objective,
    pub seed: u64,
    pub normalize: bool,
    /// Refresh the feature matrix (and so y) after each unit's update
    /// within a sweep; when false, all unit gradients in a sweep are
    /// computed from the sweep-start kernel.
    pub refresh_within_sweep: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("M must be >= 1".into()));
        }
        if self.mu0 < 0.0 {
            return Err(Error::Config("mu0 must be >= 0".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config("gamma must be > 0".into()));
        }
        if self.eta <= 0.0 {
            return Err(Error::Config("eta must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub objective: f64,
    pub train_error: f64,
    pub b: f64,
}

/// Per-solve training trace; length T + 1, starting from the solve on the
/// freshly initialized kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("iter,objective,train_error,b\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.iter, r.objective, r.train_error, r.b
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub misclassification_rate: f64,
    pub n_errors: usize,
    pub n_total: usize,
}

fn train_error(y: &DVector<f64>, t: &DVector<f64>) -> f64 {
    let errors = (0..t.len())
        .filter(|&n| {
            let pred = if y[n] >= 0.0 { 1.0 } else { -1.0 };
            pred != t[n]
        })
        .count();
    errors as f64 / t.len() as f64
}

fn model_outputs(phi: &DMatrix<f64>, sol: &DualSolution, t: &DVector<f64>) -> DVector<f64> {
    let v = DVector::from_fn(t.len(), |i, _| sol.a[i] * t[i]);
    let mut y = phi * (phi.transpose() * &v);
    y.add_scalar_mut(sol.b);
    y
}

/// Run the alternating loop from a given initial kernel. Exposed so the
/// iterative phase can be timed or warm-started independently of the
/// clustering initialization.
pub fn fit_with_initial_kernel(
    train: &Dataset,
    mut kernel: LowRankKernel,
    cfg: &TrainConfig,
) -> Result<(SparseModel, TrainHistory)> {
    cfg.validate()?;
    let norm = cfg.normalize.then(|| fit_normalizer(train));
    let data = match &norm {
        Some(s) => apply_normalizer(train, s)?,
        None => train.clone(),
    };
    let x = data.features();
    let t = data.labels();
    let m = kernel.m();

    let mut records = Vec::with_capacity(cfg.iters + 1);
    let mut phi = feature_matrix(x, &kernel)?;
    let mut sol = solve_fast(&phi, t, cfg.gamma)?;
    let record = |iter: usize,
                      phi: &DMatrix<f64>,
                      sol: &DualSolution,
                      records: &mut Vec<HistoryRecord>|
     -> Result<()> {
        let obj = objective_value(phi, sol, t, cfg.objective);
        if !obj.is_finite() {
            return Err(Error::numerical(
                "fit",
                format!("objective diverged to {obj} at iteration {iter}"),
            ));
        }
        let y = model_outputs(phi, sol, t);
        records.push(HistoryRecord {
            iter,
            objective: obj,
            train_error: train_error(&y, t),
            b: sol.b,
        });
        Ok(())
    };
    record(0, &phi, &sol, &mut records)?;

    for iter in 1..=cfg.iters {
        if cfg.refresh_within_sweep {
            for j in 0..m {
                let g = unit_gradient(j, x, &phi, &kernel, &sol, t, cfg.objective)?;
                kernel.units[j] = gd_step(&kernel.units[j], &g, cfg.eta)?;
                refresh_feature_column(x, &kernel, j, &mut phi);
            }
        } else {
            let grads = (0..m)
                .map(|j| unit_gradient(j, x, &phi, &kernel, &sol, t, cfg.objective))
                .collect::<Result<Vec<_>>>()?;
            for (j, g) in grads.iter().enumerate() {
                kernel.units[j] = gd_step(&kernel.units[j], g, cfg.eta)?;
            }
            phi = feature_matrix(x, &kernel)?;
        }
        sol = solve_fast(&phi, t, cfg.gamma)?;
        record(iter, &phi, &sol, &mut records)?;
    }

    let mut model = sparse_coefficients(&phi, &sol, t, &kernel)?;
    model.norm = norm;
    Ok((model, TrainHistory { records }))
}

/// Full training run: k-medoids initialization followed by the
/// alternating loop.
pub fn fit(train: &Dataset, cfg: &TrainConfig) -> Result<(SparseModel, TrainHistory)> {
    cfg.validate()?;
    if cfg.m > train.n() {
        return Err(Error::Config(format!(
            "M = {} exceeds N = {}",
            cfg.m,
            train.n()
        )));
    }
    let norm = cfg.normalize.then(|| fit_normalizer(train));
    let data = match &norm {
        Some(s) => apply_normalizer(train, s)?,
        None => train.clone(),
    };
    let kernel = init_kernel(data.features(), cfg.family, cfg.m, cfg.mu0, cfg.seed)?;
    fit_with_initial_kernel(train, kernel, cfg)
}

/// Misclassification metrics of a model on a dataset.
pub fn evaluate(model: &SparseModel, test: &Dataset) -> Result<Metrics> {
    let preds = model.classify(test.features())?;
    let n_errors = (0..test.n()).filter(|&n| preds[n] != test.labels()[n]).count();
    Ok(Metrics {
        misclassification_rate: n_errors as f64 / test.n() as f64,
        n_errors,
        n_total: test.n(),
    })
}

/// Round to `sig` significant decimal digits; used for human-facing
/// report numbers.
pub fn round_sig(x: f64, sig: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", sig.saturating_sub(1), x).parse().unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRate {
    pub index: usize,
    pub rate: f64,
}

/// Aggregated benchmark result: per-realization misclassification rates
/// with mean and sample standard deviation in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub suite: String,
    pub config: TrainConfig,
    pub per_realization: Vec<RealizationRate>,
    pub mean_pct: f64,
    pub std_pct: f64,
    /// False when only one realization succeeded, in which case std_pct
    /// is reported as 0.
    pub std_is_defined: bool,
    pub incomplete: Vec<usize>,
}

impl BenchmarkReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Train and evaluate one model per realization. Realization k uses seed
/// cfg.seed + k, so runs are reproducible and order-independent under
/// parallel execution.
pub fn run_benchmark(
    suite: &BenchmarkSuite,
    cfg: &TrainConfig,
    range: Option<(usize, usize)>,
) -> Result<BenchmarkReport> {
    if suite.is_empty() {
        return Err(Error::Data("benchmark suite is empty".into()));
    }
    let (lo, hi) = range.unwrap_or((1, suite.len()));
    if lo < 1 || hi > suite.len() || lo > hi {
        return Err(Error::Config(format!(
            "range {lo}..{hi} outside suite of {} realizations",
            suite.len()
        )));
    }
    let outcomes: Vec<(usize, Result<f64>)> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let (train, test) = &suite.realizations[k - 1];
            let mut rcfg = cfg.clone();
            rcfg.seed = cfg.seed.wrapping_add(k as u64);
            let rate = fit(train, &rcfg)
                .and_then(|(model, _)| evaluate(&model, test))
                .map(|m| m.misclassification_rate);
            (k, rate)
        })
        .collect();

    let mut per_realization = Vec::new();
    let mut incomplete = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(rate) => per_realization.push(RealizationRate {
                index: k,
                rate: round_sig(rate, 4),
            }),
            Err(_) => incomplete.push(k),
        }
    }
    if per_realization.is_empty() {
        return Err(Error::numerical(
            "run_benchmark",
            "every realization failed",
        ));
    }
    let rates_pct: Vec<f64> = per_realization.iter().map(|r| r.rate * 100.0).collect();
    let n = rates_pct.len() as f64;
    let mean = rates_pct.iter().sum::<f64>() / n;
    let (std, defined) = if rates_pct.len() > 1 {
        let var = rates_pct.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        (var.sqrt(), true)
    } else {
        (0.0, false)
    };
    Ok(BenchmarkReport {
        suite: suite.name.clone(),
        config: cfg.clone(),
        per_realization,
        mean_pct: round_sig(mean, 4),
        std_pct: round_sig(std, 4),
        std_is_defined: defined,
        incomplete,
    })
}
