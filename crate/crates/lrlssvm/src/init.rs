//! Kernel initialization: k-medoids centers plus a constant shape.
//!
//! The clustering alternates nearest-medoid assignment (unsquared
//! Euclidean distance) with an exact per-cluster medoid update, until no
//! medoid moves or `max_sweeps` is hit. All ties break toward the lowest
//! index so runs are reproducible.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisFamily, BasisUnit, LowRankKernel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MedoidResult {
    /// Row indices into the dataset, one per cluster.
    pub medoid_indices: Vec<usize>,
    /// Sum of Euclidean distances from each point to its medoid.
    pub cost: f64,
}

fn dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..x.ncols() {
        let d = x[(a, i)] - x[(b, i)];
        s += d * d;
    }
    s.sqrt()
}

fn assign(x: &DMatrix<f64>, medoids: &[usize]) -> (Vec<usize>, f64) {
    let n = x.nrows();
    let mut owner = vec![0usize; n];
    let mut cost = 0.0;
    for p in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, &m) in medoids.iter().enumerate() {
            let d = dist(x, p, m);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        owner[p] = best;
        cost += best_d;
    }
    (owner, cost)
}

/// Cluster rows of `x` into `m` groups around dataset-member medoids.
pub fn kmedoids(x: &DMatrix<f64>, m: usize, seed: u64, max_sweeps: usize) -> Result<MedoidResult> {
    let n = x.nrows();
    if m < 1 {
        return Err(Error::Config("k-medoids needs M >= 1".into()));
    }
    if m > n {
        return Err(Error::Config(format!("k-medoids needs M <= N ({m} > {n})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
    medoids.sort_unstable();

    let (mut owner, mut cost) = assign(x, &medoids);
    for _ in 0..max_sweeps {
        let mut changed = false;
        for c in 0..m {
            let members: Vec<usize> = (0..n).filter(|&p| owner[p] == c).collect();
            if members.is_empty() {
                continue;
            }
            // exact medoid of the cluster: member minimizing summed
            // intra-cluster distance, lowest index on ties
            let mut best = medoids[c];
            let mut best_sum = f64::INFINITY;
            for &cand in &members {
                let sum: f64 = members.iter().map(|&p| dist(x, cand, p)).sum();
                if sum < best_sum {
                    best_sum = sum;
                    best = cand;
                }
            }
            if best != medoids[c] {
                medoids[c] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (new_owner, new_cost) = assign(x, &medoids);
        owner = new_owner;
        cost = new_cost;
    }
    Ok(MedoidResult {
        medoid_indices: medoids,
        cost,
    })
}

/// Build the initial kernel: centers at the k-medoids, every shape entry
/// set to `mu0`.
pub fn init_kernel(
    x: &DMatrix<f64>,
    family: BasisFamily,
    m: usize,
    mu0: f64,
    seed: u64,
) -> Result<LowRankKernel> {
    if mu0 < 0.0 {
        return Err(Error::Config(format!("mu0 must be >= 0, got {mu0}")));
    }
    let medoids = kmedoids(x, m, seed, 100)?;
    let d = x.ncols();
    let units = medoids
        .medoid_indices
        .iter()
        .map(|&idx| {
            BasisUnit::new(
                x.row(idx).transpose(),
                DVector::from_element(d, mu0),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    LowRankKernel::new(family, units)
}
