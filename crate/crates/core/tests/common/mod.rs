#![allow(dead_code)]

use nptl::cp_solver::SolverSettings;
use nptl::np_core::{ClassLabel, ClassSamples, Domain, ErrorBudgets, LossKind, LossSpec};
use nptl::np_transfer::{default_grad_bound, default_smoothness, RValues, TrainingData, TransferConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` rows of `N(mean, sd^2 I)` with an intercept column appended.
pub fn gaussian_rows(rng: &mut ChaCha8Rng, mean: &[f64], sd: f64, n: usize) -> Vec<Vec<f64>> {
    let z = Normal::new(0.0, sd).unwrap();
    (0..n)
        .map(|_| {
            let mut r: Vec<f64> = mean.iter().map(|m| m + z.sample(rng)).collect();
            r.push(1.0);
            r
        })
        .collect()
}

pub fn samples(rows: Vec<Vec<f64>>, class: ClassLabel, domain: Domain) -> ClassSamples {
    ClassSamples::new(rows, class, domain).unwrap()
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect()
}

/// Random point in the ball of radius `radius` (not uniform, only spread out).
pub fn point_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let r = radius * rng.gen_range(0.0..1.0_f64);
    v.iter().map(|x| x * r / n).collect()
}

/// One-dimensional Gaussian instance with an intercept (`d = 2`).
///
/// Class 0 is `N(0, 1)` in both domains, class 1 is `N(mu1_t, 1)` on the
/// target and `N(mu1_s, 1)` on the source.
pub fn one_d_instance(seed: u64, n_t: usize, n_s: usize, mu1_t: f64, mu1_s: f64, scale: f64) -> TrainingData {
    let mut r = rng(seed);
    let mut draw = |mean: f64, n: usize, class, domain| {
        let rows = gaussian_rows(&mut r, &[mean], 1.0, n)
            .into_iter()
            .map(|row| vec![row[0] * scale, row[1]])
            .collect();
        samples(rows, class, domain)
    };
    let s0 = draw(0.0, n_s, ClassLabel::Zero, Domain::Source);
    let s1 = draw(mu1_s, n_s, ClassLabel::One, Domain::Source);
    let t0 = draw(0.0, n_t, ClassLabel::Zero, Domain::Target);
    let t1 = draw(mu1_t, n_t, ClassLabel::One, Domain::Target);
    TrainingData::new(s0, s1, t0, t1).unwrap()
}

pub fn transfer_config(
    data: &TrainingData,
    kind: LossKind,
    alpha: f64,
    c_tilde: f64,
    radius: f64,
    max_iterations: usize,
    seed: u64,
) -> TransferConfig {
    let loss = LossSpec::for_ball(kind, radius, data.max_norm()).unwrap();
    let budgets = ErrorBudgets::from_constant(c_tilde, data.sizes(), 0.05).unwrap();
    TransferConfig {
        alpha,
        budgets,
        loss,
        radius,
        r: RValues::uniform(0.5),
        grad_bound: default_grad_bound(&loss, data),
        smoothness: default_smoothness(&loss, data).unwrap_or(1.0),
        solver: SolverSettings {
            step_constant: Some(0.5),
            k_n: None,
            max_iterations: Some(max_iterations),
        },
        seed,
    }
}
