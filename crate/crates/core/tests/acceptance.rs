//! Acceptance criteria, one PASS/FAIL line each. Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nptl::constraints::{
    make_g0s_alpha, make_g0s_fixed, make_g0t, make_g1t_hat, max_compose, AffineFunction, ConstraintFn, Objective,
    RiskTerm, StochasticFunction, Tightening,
};
use nptl::cp_solver::{cp_solve, CpProblem, SearchDomain, SolverSettings, PROJECTION_TOLERANCE};
use nptl::experiment::{median, oracle_check, run_trial, summarize, ExperimentConfig, Method, Scenario};
use nptl::np_core::{
    empirical_risk, risk_gradient, ClassLabel, Domain, ErrorBudgets, LossKind, LossSpec, ParamVector, SampleSizes,
};
use nptl::np_transfer::{compute_alpha_hat, run_transfer, tolerance_cascade, warm_start_target, TrainingData};
use nptl::set_oracle::{oracle_procedure, tabulate_risks, FiniteClass};
use rand::Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let pass = out.pass && elapsed < budget;
    println!(
        "{} criterion {id} ({name}): {}; {:.1}s of {}s",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn threshold_grid() -> Vec<f64> {
    (0..201).map(|i| -3.0 + 8.0 * i as f64 / 200.0).collect()
}

fn set_procedure() -> Outcome {
    let ts = threshold_grid();
    let scale = 2.0;
    let class = FiniteClass::thresholds(&ts, scale).unwrap();
    let radius = scale * 5.0_f64.hypot(1.0);
    let (mut feasible, mut matched, mut worst) = (0, 0, 0.0_f64);
    for seed in 0..50u64 {
        let mut r = rng(1000 + seed);
        let n_s = r.gen_range(50..500);
        let data = one_d_instance(seed, 40, n_s, r.gen_range(0.5..3.0), r.gen_range(-2.0..3.0), 1.0);
        let alpha = r.gen_range(0.05..0.3);
        let budgets = ErrorBudgets::from_constant(r.gen_range(0.05..0.5), data.sizes(), 0.05).unwrap();
        let loss = LossSpec::for_ball(LossKind::ScaledLogistic, radius, data.max_norm()).unwrap();
        let table = tabulate_risks(&class, &data, &loss).unwrap();
        let out = oracle_procedure(&table, alpha, &budgets).unwrap();
        let i = out.chosen_index;
        if table.r0t[i] <= alpha + budgets.eps_0t && table.r0s[i] <= out.alpha_hat_s + budgets.eps_0s {
            feasible += 1;
        }
        // Smallest alpha' on a 1e-5 grid whose source set meets H*.
        let step = 1e-5;
        let steps = ((1.0 - alpha) / step).ceil() as usize;
        let grid_alpha = (0..=steps)
            .map(|k| (alpha + k as f64 * step).min(1.0))
            .find(|a| out.h_star_indices.iter().any(|&j| table.r0s[j] <= a + budgets.eps_0s))
            .unwrap_or(f64::NAN);
        let err = (grid_alpha - out.alpha_hat_s).abs();
        worst = worst.max(err);
        if err <= 1e-4 {
            matched += 1;
        }
    }
    Outcome {
        pass: feasible == 50 && matched == 50,
        detail: format!("constraints held {feasible}/50, alpha_hat matched {matched}/50 (worst {worst:.1e})"),
    }
}

fn optimizer_vs_oracle() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.radius = 5.0;
    cfg.solver.max_iterations = Some(1_000_000);
    let mut ok = 0;
    let mut errors = 0;
    for trial in 0..20 {
        match oracle_check(&cfg, 100, trial, 0.05) {
            Ok(c) if c.type2_within_tolerance() && c.constraints_hold(cfg.alpha) => ok += 1,
            Ok(_) => {}
            Err(_) => errors += 1,
        }
    }
    Outcome {
        pass: ok >= 18,
        detail: format!("{ok}/20 within tolerance and feasible ({errors} errors)"),
    }
}

fn closed_form_gap(eps: f64, seed: u64) -> f64 {
    let p = CpProblem::configured(
        AffineFunction::new(vec![-1.0], 0.0),
        AffineFunction::new(vec![1.0], -0.5),
        SearchDomain::ball(1, 1.0),
        0.0,
        eps,
        0.05,
        1.0,
        1.5,
        &SolverSettings::default(),
        seed,
    )
    .unwrap();
    let res = cp_solve(&p).unwrap();
    res.objective_value + 0.5
}

struct LogisticProgram {
    objective: Objective,
    constraint: ConstraintFn,
    optimum: f64,
}

fn clipped_rows(r: &mut rand_chacha::ChaCha8Rng, mean: f64, n: usize) -> Vec<Vec<f64>> {
    gaussian_rows(r, &[mean], 0.4, n)
        .into_iter()
        .map(|row| vec![row[0].clamp(-0.8, 0.8), 0.5])
        .collect()
}

/// `min R1` s.t. `R0 <= alpha` over the unit disc, with a two-level grid optimum.
fn logistic_program() -> LogisticProgram {
    let mut r = rng(77);
    let s0 = samples(clipped_rows(&mut r, -0.3, 100), ClassLabel::Zero, Domain::Target);
    let s1 = samples(clipped_rows(&mut r, 0.3, 100), ClassLabel::One, Domain::Target);
    let loss = LossSpec::for_ball(LossKind::ScaledLogistic, 1.0, s0.max_norm().max(s1.max_norm())).unwrap();
    let objective = Objective::Risk(RiskTerm::new(s1, loss));
    let constraint = make_g0t(s0, loss, 0.85, 1e-3, Tightening::Relaxed).unwrap();
    let search = |center: [f64; 2], half: f64, steps: i64| -> ([f64; 2], f64) {
        let mut best = (center, f64::INFINITY);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let q = [
                    center[0] + half * i as f64 / steps as f64,
                    center[1] + half * j as f64 / steps as f64,
                ];
                if q[0] * q[0] + q[1] * q[1] > 1.0 || constraint.eval(&q) > 0.0 {
                    continue;
                }
                let v = objective.eval(&q);
                if v < best.1 {
                    best = (q, v);
                }
            }
        }
        best
    };
    let (coarse, _) = search([0.0, 0.0], 1.0, 200);
    let (_, optimum) = search(coarse, 0.01, 50);
    LogisticProgram {
        objective,
        constraint,
        optimum,
    }
}

fn logistic_gap(p: &LogisticProgram, eps: f64, seed: u64) -> f64 {
    let problem = CpProblem::configured(
        p.objective.clone(),
        p.constraint.clone(),
        SearchDomain::ball(2, 1.0),
        0.0,
        eps,
        0.05,
        1.0,
        p.constraint.value_bound(),
        &SolverSettings::default(),
        seed,
    )
    .unwrap();
    let res = cp_solve(&problem).unwrap();
    assert!(p.constraint.eval(&res.theta_hat) <= PROJECTION_TOLERANCE);
    res.objective_value - p.optimum
}

fn solver_convergence() -> Outcome {
    let program = logistic_program();
    // The constraint must bind for the check to mean anything.
    let free = {
        let mut best = f64::INFINITY;
        for i in -200..=200 {
            for j in -200..=200 {
                let q = [i as f64 / 200.0, j as f64 / 200.0];
                if q[0] * q[0] + q[1] * q[1] <= 1.0 {
                    best = best.min(program.objective.eval(&q));
                }
            }
        }
        best
    };
    let mut pass = program.optimum > free + 0.01;
    let mut parts = vec![format!("logistic optimum {:.4} (unconstrained {free:.4})", program.optimum)];
    for (name, gap) in [
        ("closed-form", &(|e, s| closed_form_gap(e, s)) as &dyn Fn(f64, u64) -> f64),
        ("logistic", &|e, s| logistic_gap(&program, e, s)),
    ] {
        let mut medians = Vec::new();
        let mut counts = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let gaps: Vec<f64> = (0..20).map(|s| gap(eps, s)).collect();
            let within = gaps.iter().filter(|g| **g <= eps).count();
            pass &= within >= 18;
            counts.push(within);
            medians.push(median(&gaps));
        }
        let shrinking = medians.windows(2).all(|w| w[1] <= w[0] + PROJECTION_TOLERANCE);
        pass &= shrinking;
        parts.push(format!(
            "{name}: within eps {counts:?}/20, median gaps {:.2e} {:.2e} {:.2e}",
            medians[0], medians[1], medians[2]
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

struct SweepMedians {
    type2: [f64; 3],
    tla_type1: Vec<f64>,
    failures: usize,
}

fn sweep(cfg: &ExperimentConfig, n_source: usize) -> SweepMedians {
    let mut type2 = [Vec::new(), Vec::new(), Vec::new()];
    let mut tla_type1 = Vec::new();
    let mut failures = 0;
    for t in 0..cfg.trials {
        for run in run_trial(cfg, n_source, t).unwrap() {
            let Some(m) = run.metrics else {
                failures += 1;
                continue;
            };
            let slot = Method::ALL.iter().position(|x| *x == run.method).unwrap();
            type2[slot].push(m.type2_test);
            if run.method == Method::Tla {
                tla_type1.push(m.type1_test);
            }
        }
    }
    SweepMedians {
        type2: [median(&type2[0]), median(&type2[1]), median(&type2[2])],
        tla_type1,
        failures,
    }
}

fn slot(m: Method) -> usize {
    Method::ALL.iter().position(|x| *x == m).unwrap()
}

fn no_negative_transfer() -> Outcome {
    let cfg = ExperimentConfig {
        scenario: Scenario::UninformativeSource,
        n_target: 40,
        trials: 10,
        ..ExperimentConfig::default()
    };
    let s = sweep(&cfg, 500);
    let (tla, target, source) = (s.type2[slot(Method::Tla)], s.type2[slot(Method::OnlyTarget)], s.type2[slot(Method::OnlySource)]);
    Outcome {
        pass: s.failures == 0 && tla <= target + 0.05 && source - target >= 0.2,
        detail: format!(
            "median Type-II TLA {tla:.4}, only-target {target:.4}, only-source {source:.4}; {} failed runs",
            s.failures
        ),
    }
}

fn informative_transfer() -> Outcome {
    let cfg = ExperimentConfig {
        scenario: Scenario::InformativeSource,
        n_target: 40,
        trials: 10,
        alpha: 0.1,
        ..ExperimentConfig::default()
    };
    let mut tla = Vec::new();
    let mut target_900 = 0.0;
    let mut type1_ok = true;
    let mut type1_text = Vec::new();
    let mut failures = 0;
    for n in [100, 400, 900] {
        let s = sweep(&cfg, n);
        failures += s.failures;
        tla.push(s.type2[slot(Method::Tla)]);
        target_900 = s.type2[slot(Method::OnlyTarget)];
        let (_, med, se) = summarize(&s.tla_type1);
        type1_ok &= med <= cfg.alpha + 2.0 * se;
        type1_text.push(format!("{med:.4}+-{se:.4}"));
    }
    let monotone = tla.windows(2).all(|w| w[1] <= w[0]);
    let improves = tla[2] <= target_900 - 0.02;
    Outcome {
        pass: failures == 0 && monotone && improves && type1_ok,
        detail: format!(
            "median TLA Type-II {:.4} {:.4} {:.4} (nonincreasing: {monotone}); only-target at 900 {target_900:.4} \
             (TLA <= it - 0.02: {improves}); TLA Type-I {}; {failures} failed runs",
            tla[0],
            tla[1],
            tla[2],
            type1_text.join(" ")
        ),
    }
}

fn shared_mu0() -> Outcome {
    let alpha = 0.1;
    let ts = threshold_grid();
    let class = FiniteClass::thresholds(&ts, 2.0).unwrap();
    let (mut solver_ok, mut oracle_ok) = (0, 0);
    let mut worst = 0.0_f64;
    for seed in 0..10u64 {
        let base = one_d_instance(500 + seed, 40, 40, 2.0, 2.5, 1.0);
        let source0 = base.target0.relabel(ClassLabel::Zero, Domain::Source);
        let data = TrainingData::new(source0, base.source1, base.target0, base.target1).unwrap();
        let cfg = transfer_config(&data, LossKind::ScaledLogistic, alpha, 0.05, 5.0, 200_000, seed);
        let tol = tolerance_cascade(&cfg.budgets, &cfg);
        let warm = warm_start_target(&data, &cfg).unwrap();
        let (alpha_hat, _) = compute_alpha_hat(&data, &cfg, &warm.theta).unwrap();
        worst = worst.max((alpha_hat - alpha).abs());
        if (alpha_hat - alpha).abs() <= tol.eps_alpha_hat {
            solver_ok += 1;
        }
        let loss = LossSpec::for_ball(LossKind::ScaledLogistic, 2.0 * 5.0_f64.hypot(1.0), data.max_norm()).unwrap();
        let table = tabulate_risks(&class, &data, &loss).unwrap();
        if oracle_procedure(&table, alpha, &cfg.budgets).unwrap().alpha_hat_s == alpha {
            oracle_ok += 1;
        }
    }
    Outcome {
        pass: solver_ok >= 9 && oracle_ok == 10,
        detail: format!("solver alpha_hat within eps {solver_ok}/10 (worst {worst:.1e}), oracle exact {oracle_ok}/10"),
    }
}

fn leaves(seed: u64, dim: usize, kind: LossKind) -> Vec<ConstraintFn> {
    let mut r = rng(seed);
    let loss = LossSpec::new(kind, 8.0).unwrap();
    let t0 = samples(uniform_rows(&mut r, 12, dim, 1.0), ClassLabel::Zero, Domain::Target);
    let t1 = samples(uniform_rows(&mut r, 9, dim, 1.0), ClassLabel::One, Domain::Target);
    let s0 = samples(uniform_rows(&mut r, 15, dim, 1.0), ClassLabel::Zero, Domain::Source);
    let reference = ParamVector::new(point_in_ball(&mut r, dim, 1.0), 2.0).unwrap();
    let mut v = vec![
        make_g0t(t0, loss, 0.3, 0.05, Tightening::Relaxed).unwrap(),
        make_g0s_fixed(s0, loss, 0.35, 0.04),
        make_g1t_hat(t1, loss, &reference, 0.02, 6.0).unwrap(),
    ];
    v.push(max_compose(v.clone()).unwrap());
    v
}

fn unit_level() -> Outcome {
    let mut r = rng(2024);
    // Gradients against central differences, away from hinge kinks.
    let mut fd_ok = 0;
    let mut fd_cases = 0;
    while fd_cases < 100 {
        let dim = r.gen_range(1..6);
        let hinge = r.gen_bool(0.5);
        let kind = if hinge { LossKind::HingeStyle } else { LossKind::ScaledLogistic };
        let loss = LossSpec::new(kind, 50.0).unwrap();
        let class = if r.gen_bool(0.5) { ClassLabel::One } else { ClassLabel::Zero };
        let n = r.gen_range(1..20);
        let s = samples(uniform_rows(&mut r, n, dim, 2.0), class, Domain::Target);
        let theta = point_in_ball(&mut r, dim, 3.0);
        let sign = if class == ClassLabel::One { -1.0 } else { 1.0 };
        let kink = s.rows().any(|x| {
            let z = sign * x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
            (z + 1.0).abs() < 1e-3 || (z - 49.0).abs() < 1e-3
        });
        if hinge && kink {
            continue;
        }
        fd_cases += 1;
        let g = risk_gradient(&ParamVector::new(theta.clone(), 3.0).unwrap(), &s, &loss).unwrap();
        let risk = |q: &[f64]| empirical_risk(&ParamVector::new(q.to_vec(), 10.0).unwrap(), &s, &loss).unwrap();
        let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-3);
        let good = (0..dim).all(|i| {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            ((risk(&a) - risk(&b)) / 2e-6 - g[i]).abs() <= 1e-5 * scale
        });
        fd_ok += good as usize;
    }

    // Midpoint convexity, including the max and the joint (theta, alpha') constraint.
    let mut convex_ok = 0;
    for case in 0..100u64 {
        let dim = r.gen_range(1..5);
        let kind = if case % 2 == 0 { LossKind::HingeStyle } else { LossKind::ScaledLogistic };
        let t = r.gen_range(0.01..0.99);
        let a = point_in_ball(&mut r, dim, 2.0);
        let b = point_in_ball(&mut r, dim, 2.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let mut good = leaves(case, dim, kind)
            .iter()
            .all(|g| g.eval(&mid) <= t * g.eval(&a) + (1.0 - t) * g.eval(&b) + 1e-12);
        let s0 = samples(uniform_rows(&mut r, 10, dim, 1.0), ClassLabel::Zero, Domain::Source);
        let joint = make_g0s_alpha(s0, LossSpec::new(kind, 8.0).unwrap(), 0.03);
        let mut pa = a.clone();
        pa.push(r.gen_range(0.1..1.0));
        let mut pb = b.clone();
        pb.push(r.gen_range(0.1..1.0));
        let pm: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        good &= joint.eval(&pm) <= t * joint.eval(&pa) + (1.0 - t) * joint.eval(&pb) + 1e-12;
        convex_ok += good as usize;
    }

    // Quadrupling every sample size halves every budget exactly.
    let scale_law = [1usize, 7, 40, 333, 10_000].iter().all(|&n| {
        let b1 = ErrorBudgets::from_constant(0.37, SampleSizes::uniform(n), 0.05).unwrap();
        let b4 = ErrorBudgets::from_constant(0.37, SampleSizes::uniform(4 * n), 0.05).unwrap();
        b4.eps_0s == b1.eps_0s / 2.0
            && b4.eps_0t == b1.eps_0t / 2.0
            && b4.eps_1s == b1.eps_1s / 2.0
            && b4.eps_1t == b1.eps_1t / 2.0
    });

    // The cascade never loosens toward the warm start.
    let data = one_d_instance(3, 40, 200, 2.0, 2.0, 1.0);
    let cascade = (0..50).all(|_| {
        let mut cfg = transfer_config(&data, LossKind::ScaledLogistic, 0.1, r.gen_range(0.01..3.0), 5.0, 10, 0);
        cfg.r = nptl::np_transfer::RValues::uniform(r.gen_range(0.05..2.0));
        let tol = tolerance_cascade(&cfg.budgets, &cfg);
        tol.eps_warm <= tol.eps_alpha_hat && tol.eps_alpha_hat <= tol.xi_st
    });

    // Five replays of the whole pipeline agree bit for bit.
    let cfg = transfer_config(&data, LossKind::ScaledLogistic, 0.1, 0.05, 5.0, 20_000, 11);
    let bits = |res: &nptl::np_transfer::TransferResult| {
        let mut v: Vec<u64> = res.theta_hat.as_slice().iter().map(|x| x.to_bits()).collect();
        v.push(res.alpha_hat.to_bits());
        v
    };
    let first = bits(&run_transfer(&data, &cfg).unwrap());
    let deterministic = (0..4).all(|_| bits(&run_transfer(&data, &cfg).unwrap()) == first);

    Outcome {
        pass: fd_ok == 100 && convex_ok == 100 && scale_law && cascade && deterministic,
        detail: format!(
            "gradients {fd_ok}/100, convexity {convex_ok}/100, scale law {scale_law}, cascade {cascade}, \
             determinism {deterministic}"
        ),
    }
}

fn main() -> ExitCode {
    let results = [
        report(1, "set procedure oracle", Duration::from_secs(10), set_procedure),
        report(2, "optimizer vs oracle", Duration::from_secs(300), optimizer_vs_oracle),
        report(3, "solver convergence", Duration::from_secs(120), solver_convergence),
        report(4, "no negative transfer", Duration::from_secs(600), no_negative_transfer),
        report(5, "informative transfer", Duration::from_secs(900), informative_transfer),
        report(6, "shared class-0 recovery", Duration::from_secs(60), shared_mu0),
        report(7, "unit level", Duration::from_secs(60), unit_level),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
