//! Lloyd's k-means with Forgy initialization and seeded restarts.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 3,
            seed: 0,
            restarts: 10,
            max_iter: 300,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub k: usize,
    /// `k` rows of length `d`.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid by squared Euclidean distance, lowest index on ties.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        self.check_dim(point)?;
        Ok(nearest(&self.centroids, point).0)
    }

    /// Squared distances from `point` to every centroid.
    pub fn distances(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point)?;
        Ok(self.centroids.iter().map(|c| squared_distance(c, point)).collect())
    }

    pub fn inertia(&self, points: &[Vec<f64>]) -> Result<f64> {
        points.iter().try_fold(0.0, |acc, p| {
            self.check_dim(p)?;
            Ok(acc + nearest(&self.centroids, p).1)
        })
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "k-means model has dimension {}, point has {}",
                self.dim(),
                point.len()
            )));
        }
        Ok(())
    }
}

pub fn assign(model: &KMeansModel, point: &[f64]) -> Result<usize> {
    model.assign(point)
}

pub fn inertia(model: &KMeansModel, points: &[Vec<f64>]) -> Result<f64> {
    model.inertia(points)
}

fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Objective values of one Lloyd run, recorded after every assignment step
/// (including empty-cluster repair) and every update step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub restart: usize,
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl RunTrace {
    /// True when no recorded step raised the objective beyond rounding.
    pub fn is_monotone(&self) -> bool {
        self.inertia_history
            .windows(2)
            .all(|w| w[1] <= w[0] + MONOTONE_SLACK * w[0].max(1.0))
    }
}

const MONOTONE_SLACK: f64 = 1e-12;

pub fn fit_kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansModel> {
    fit_kmeans_traced(points, params).map(|(m, _)| m)
}

/// Like [`fit_kmeans`], also returning the trace of every restart.
pub fn fit_kmeans_traced(
    points: &[Vec<f64>],
    params: &KMeansParams,
) -> Result<(KMeansModel, Vec<RunTrace>)> {
    let k = params.k;
    if k == 0 || params.restarts == 0 || params.max_iter == 0 {
        return Err(Error::Parameter("k, restarts and max_iter must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            got: points.len(),
        });
    }
    let d = points[0].len();
    if let Some(i) = points.iter().position(|p| p.len() != d) {
        return Err(Error::Dimension(format!("point {i} has dimension {}, expected {d}", points[i].len())));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("k-means input contains non-finite values".into()));
    }

    let runs: Vec<(Run, RunTrace)> = (0..params.restarts)
        .into_par_iter()
        .map(|r| lloyd_run(points, params, r))
        .collect();

    // lowest inertia, then lowest restart index
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.0.inertia.total_cmp(&b.0.inertia).then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .expect("restarts > 0");
    let traces = runs.iter().map(|(_, t)| t.clone()).collect();
    let run = &runs[best].0;
    Ok((
        KMeansModel {
            k,
            centroids: run.centroids.clone(),
            inertia: run.inertia,
            iterations_run: run.iterations,
            seed: params.seed,
        },
        traces,
    ))
}

struct Run {
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    iterations: usize,
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn lloyd_run(points: &[Vec<f64>], params: &KMeansParams, restart: usize) -> (Run, RunTrace) {
    let k = params.k;
    let n = points.len();
    let mut rng = restart_rng(params.seed, restart);
    let mut centroids: Vec<Vec<f64>> = index::sample(&mut rng, n, k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;

        for (i, p) in points.iter().enumerate() {
            let (j, dist) = nearest(&centroids, p);
            labels[i] = j;
            dists[i] = dist;
        }
        repair_empty_clusters(points, &mut centroids, &mut labels, &mut dists, k);
        push_checked(&mut history, dists.iter().sum());

        let mut sums = vec![vec![0.0; points[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&labels) {
            counts[j] += 1;
            sums[j].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut movement = 0.0f64;
        for j in 0..k {
            // repair leaves every cluster non-empty
            let updated: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            movement = movement.max(squared_distance(&updated, &centroids[j]).sqrt());
            centroids[j] = updated;
        }
        for (i, p) in points.iter().enumerate() {
            dists[i] = squared_distance(p, &centroids[labels[i]]);
        }
        push_checked(&mut history, dists.iter().sum());

        if movement < params.tol {
            converged = true;
            break;
        }
    }

    // final assignment against the settled centroids
    let inertia: f64 = points.iter().map(|p| nearest(&centroids, p).1).sum();
    push_checked(&mut history, inertia);
    (
        Run {
            centroids,
            inertia,
            iterations,
        },
        RunTrace {
            restart,
            inertia_history: history,
            converged,
        },
    )
}

fn push_checked(history: &mut Vec<f64>, value: f64) {
    if let Some(&prev) = history.last() {
        debug_assert!(
            value <= prev + MONOTONE_SLACK * prev.max(1.0),
            "k-means objective increased: {prev} -> {value}"
        );
    }
    history.push(value);
}

/// Gives every empty cluster the point lying farthest from its own centroid,
/// taken from a cluster that can spare it.
fn repair_empty_clusters(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    labels: &mut [usize],
    dists: &mut [f64],
    k: usize,
) {
    let mut counts = vec![0usize; k];
    for &j in labels.iter() {
        counts[j] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..points.len() {
            if counts[labels[i]] > 1 && donor.is_none_or(|d| dists[i] > dists[d]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("n >= k leaves a cluster with a spare point");
        counts[labels[i]] -= 1;
        counts[empty] += 1;
        labels[i] = empty;
        dists[i] = 0.0;
        centroids[empty] = points[i].clone();
    }
}
