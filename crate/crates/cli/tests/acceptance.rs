//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! `ACCEPTANCE_ONLY=AC6,AC7` restricts the run to the listed criteria.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use otlimit_cli::config::ExperimentConfig;
use otlimit_cli::experiment::{random_direction, random_measure};
use otlimit_core::applications::grids::random_rotation;
use otlimit_core::applications::{ot_1d, procrustes_ot, sliced_max, Refine, RotationGrid, SphereGrid};
use otlimit_core::bootstrap::d_bl_1d;
use otlimit_core::ctransform::double_c_transform;
use otlimit_core::limitlaw::{sample_limit_process, ExtremalMode};
use otlimit_core::regelev::{elevation_convergence_probe, fixed_point_defect, ProbeRate};
use otlimit_core::rng::substream;
use otlimit_core::stats::{mean, variance};
use otlimit_core::transport::{is_plan_unique, potentials_unique};
use otlimit_core::{
    c_transform, distance_matrix, elevate, gateaux_derivative, modulus_bound_check, ot_value, sample_limit_extremal,
    sample_limit_wcc, sandwich_bounds, solve_ot, CostMatrix, CostProcess, DiscreteMeasure, ElevationSpec,
    EmpiricalLaw1D, EmpiricalSample, GaussianTripleModel, LimitOptions, ModulusOfContinuity, Point, Scaling,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(stream: u64) -> ChaCha8Rng {
    substream(20_240_611, stream)
}

fn line(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::on_line(xs, ws).unwrap()
}

fn uniform_on(n: usize) -> DiscreteMeasure {
    DiscreteMeasure::uniform((0..n).map(|i| Point::scalar(i as f64)).collect()).unwrap()
}

/// Minimum over permutations of the mean assignment cost (Heap's algorithm).
fn permutation_oracle(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>() / n as f64;
    let mut best = eval(&perm);
    let mut idx = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if idx[i] < i {
            let swap = if i % 2 == 0 { 0 } else { idx[i] };
            perm.swap(swap, i);
            best = best.min(eval(&perm));
            idx[i] += 1;
            i = 1;
        } else {
            idx[i] = 0;
            i += 1;
        }
    }
    best
}

fn ac1() -> Outcome {
    let results: Vec<(f64, f64, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(1_000 + s);
            let n = r.random_range(1..=7);
            let tied = s % 2 == 0;
            let c = DMatrix::from_fn(n, n, |_, _| {
                if tied {
                    r.random_range(0..4) as f64
                } else {
                    r.random::<f64>()
                }
            });
            let (mu, nu) = (uniform_on(n), uniform_on(n));
            let cm = CostMatrix::new(c.clone()).unwrap();
            let sol = solve_ot(&mu, &nu, &cm).unwrap();
            let err = (sol.value - permutation_oracle(&c)).abs();
            let gap = (sol.dual.value(&mu, &nu) - sol.value).abs() / (1.0 + sol.value.abs());
            (err, gap, sol.dual.infeasibility(&cm))
        })
        .collect();
    let err = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let gap = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let infeas = results.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        err <= 1e-9 && gap <= 1e-8 && infeas <= 1e-9,
        format!("1000 instances, max |value - oracle| = {err:.2e}, max relative gap = {gap:.2e}, max dual infeasibility = {infeas:.2e}"),
    )
}

fn dyadic(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(-256i32..=256) as f64 / 64.0
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ac2() -> Outcome {
    let results: Vec<(bool, bool, f64)> = (0..10_000u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(2_000 + s);
            let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
            let f: Vec<f64> = (0..n).map(|_| dyadic(&mut r)).collect();
            let ft: Vec<f64> = (0..n).map(|_| dyadic(&mut r)).collect();
            let c = CostMatrix::new(DMatrix::from_fn(n, m, |_, _| dyadic(&mut r))).unwrap();
            let ct = CostMatrix::new(DMatrix::from_fn(n, m, |_, _| dyadic(&mut r))).unwrap();
            let kappa = dyadic(&mut r);
            let lhs = sup_diff(&c_transform(&f, &c).unwrap(), &c_transform(&ft, &ct).unwrap());
            let lipschitz = lhs <= sup_diff(&f, &ft) + c.sup_distance(&ct);
            let shifted: Vec<f64> = f.iter().map(|v| v + kappa).collect();
            let shift = c_transform(&shifted, &c)
                .unwrap()
                .iter()
                .zip(c_transform(&f, &c).unwrap())
                .all(|(a, b)| *a == b - kappa);
            let fr: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            let cr = CostMatrix::new(DMatrix::from_fn(n, m, |_, _| r.random_range(-2.0..2.0))).unwrap();
            let fcc = double_c_transform(&fr, &cr).unwrap();
            let idem = sup_diff(&double_c_transform(&fcc, &cr).unwrap(), &fcc);
            (lipschitz, shift, idem)
        })
        .collect();
    let lip = results.iter().filter(|r| !r.0).count();
    let shift = results.iter().filter(|r| !r.1).count();
    let idem = results.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        lip == 0 && shift == 0 && idem <= 1e-12,
        format!("10^4 instances, Lipschitz violations = {lip}, shift-law violations = {shift}, max idempotence defect = {idem:.2e}"),
    )
}

/// Random instance with either generic squared-Euclidean costs or integer costs with ties.
fn random_instance(r: &mut ChaCha8Rng, tied: bool) -> (DiscreteMeasure, DiscreteMeasure, CostMatrix) {
    let (n, m) = (r.random_range(2..=5), r.random_range(2..=5));
    let mu = random_measure(n, 2, r).unwrap();
    let nu = random_measure(m, 2, r).unwrap();
    let c = if tied {
        CostMatrix::new(DMatrix::from_fn(n, m, |_, _| r.random_range(0..3) as f64)).unwrap()
    } else {
        CostMatrix::squared_euclidean(&mu, &nu).unwrap()
    };
    (mu, nu, c)
}

fn ac3() -> Outcome {
    // The bound is stated for exact optimal faces, so the face programs use the
    // smallest inflation that stays numerically feasible.
    let results: Vec<(f64, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(3_000 + s);
            let (mu, nu, c) = random_instance(&mut r, s % 3 == 0);
            let delta = random_direction(mu.len(), nu.len(), &mut r);
            let t = r.random_range(0.05..0.95) * delta.max_step(&mu, &nu).min(1.0);
            let (mu_t, nu_t, c_t) = delta.apply(&mu, &nu, &c, t).unwrap();
            let base = ot_value(&mu, &nu, &c).unwrap();
            let diff = ot_value(&mu_t, &nu_t, &c_t).unwrap() - base;
            let b = sandwich_bounds(&mu, &nu, &mu_t, &nu_t, &c, &c_t, Some(1e-12)).unwrap();
            let excess = (b.lower - diff).max(diff - b.upper).max(0.0);
            let fixed = (ot_value(&mu, &nu, &c_t).unwrap() - base).abs();
            (excess, fixed <= c.sup_distance(&c_t) + 1e-9)
        })
        .collect();
    let excess = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let corollary = results.iter().filter(|r| !r.1).count();
    outcome(
        excess <= 1e-9 && corollary == 0,
        format!("1000 instances, max bracket excess = {excess:.2e}, fixed-measure violations = {corollary}"),
    )
}

fn ac4() -> Outcome {
    let rows: Vec<(f64, bool)> = (0..20u64)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut r = rng(4_000 + s);
            let (mu, nu, c) = random_instance(&mut r, s % 4 == 0);
            let base = ot_value(&mu, &nu, &c).unwrap();
            (0..5)
                .map(|_| {
                    let delta = random_direction(mu.len(), nu.len(), &mut r);
                    let d = gateaux_derivative(&mu, &nu, &c, &delta, None).unwrap();
                    let quotient = |t: f64| {
                        let (a, b, cc) = delta.apply(&mu, &nu, &c, t).unwrap();
                        (ot_value(&a, &b, &cc).unwrap() - base) / t
                    };
                    let (small, large) = ((quotient(1e-4) - d).abs(), (quotient(1e-2) - d).abs());
                    let contracts = large <= 1e-9 || large >= 5.0 * small;
                    (small / (1.0 + d.abs()), contracts)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let contracting = rows.iter().filter(|r| r.1).count();
    outcome(
        rows.len() == 100 && worst <= 5e-3 && contracting == rows.len(),
        format!(
            "{} directions, max relative error at t=1e-4 = {worst:.2e}, contracting (or exact) = {contracting}/{}",
            rows.len(),
            rows.len()
        ),
    )
}

fn ac5() -> Outcome {
    let mu = line(&[0.0, 1.0], &[0.6, 0.4]);
    let nu = line(&[0.0, 1.0], &[0.3, 0.7]);
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let sd: f64 = 0.5;
    let lambda = 0.5;
    // Optimal plan and potentials worked out by hand for this instance.
    let plan: [[f64; 2]; 2] = [[0.3, 0.3], [0.0, 0.4]];
    let (phi, psi) = ([0.0, -1.0], [0.0, 1.0]);
    let var_of = |f: &[f64; 2], w: &[f64]| {
        let m = f[0] * w[0] + f[1] * w[1];
        w[0] * (f[0] - m).powi(2) + w[1] * (f[1] - m).powi(2)
    };
    let cost_var: f64 = plan.iter().flatten().map(|p| (p * sd).powi(2)).sum();
    let closed = cost_var + lambda * var_of(&phi, mu.weights()) + (1.0 - lambda) * var_of(&psi, nu.weights());

    let sol = solve_ot(&mu, &nu, &c).unwrap();
    let plan_matches = (0..2).all(|i| (0..2).all(|j| (sol.plan.entries()[(i, j)] - plan[i][j]).abs() < 1e-12));
    let unique = is_plan_unique(&mu, &nu, &c, 16, 1e-6).unwrap().unique && potentials_unique(&mu, &nu, &c).unwrap();
    let model = GaussianTripleModel::bridges(
        &mu,
        &nu,
        CostProcess::IndependentEntries {
            std: DMatrix::from_element(2, 2, sd),
        },
    );
    let draws = sample_limit_wcc(&mu, &nu, &c, &model, Scaling::TwoSample { lambda }, 100_000, &LimitOptions::default(), 5)
        .unwrap()
        .draws;
    let v = variance(&draws);
    let rel = (v - closed).abs() / closed;
    outcome(
        plan_matches && unique && rel <= 0.05,
        format!("unique = {unique}, closed form = {closed:.4}, sample variance = {v:.4}, relative error = {rel:.3}"),
    )
}

const TWO_POINT: &str = r#"
    "mu": {"support": [[0.0], [1.0]], "weights": [0.3, 0.7]},
    "nu": {"support": [[0.5], [2.0]], "weights": [0.6, 0.4]}"#;

fn ac6() -> Outcome {
    let cfg = ExperimentConfig::from_json(&format!(
        r#"{{"scenario": "wcc_clt", "seed": 606, {TWO_POINT},
            "cost": {{"kind": "power", "p": 2.0}},
            "sizes": [[500, 500], [2000, 2000]], "reps": 1000, "limit_draws": 100000}}"#
    ))
    .unwrap();
    let pop = otlimit_cli::experiment::Population::from_config(&cfg).unwrap();
    let unique = is_plan_unique(&pop.mu, &pop.nu, pop.cost_matrix(), 16, 1e-6).unwrap().unique
        && potentials_unique(&pop.mu, &pop.nu, pop.cost_matrix()).unwrap();
    let report = otlimit_cli::run(&cfg).unwrap();
    let (small, large) = (&report.rows[0], &report.rows[1]);
    let (d500, d2000) = (small.d_bl.unwrap(), large.d_bl.unwrap());
    let ks2000 = large.ks.unwrap();
    outcome(
        unique && d500 <= 0.15 && d2000 < d500 && ks2000 <= 0.10,
        format!("unique = {unique}, d_BL(500) = {d500:.4}, d_BL(2000) = {d2000:.4}, KS(2000) = {ks2000:.4}"),
    )
}

fn ac7() -> Outcome {
    let main = ExperimentConfig::from_json(&format!(
        r#"{{"scenario": "bootstrap_wcc", "seed": 707, {TWO_POINT},
            "cost": {{"kind": "mean_shift"}},
            "sizes": [[4000, 4000]], "limit_draws": 100000,
            "bootstrap": {{"replicates": 2000, "datasets": 20}}}}"#
    ))
    .unwrap();
    let report = otlimit_cli::run(&main).unwrap();
    let row = &report.rows[0];
    let (k, d) = (row.k.unwrap(), row.d_bl.unwrap());

    let control = ExperimentConfig::from_json(
        r#"{"scenario": "bootstrap_wcc", "seed": 708,
            "mu": {"support": [[0.0], [1.0]], "weights": [0.5, 0.5]},
            "nu": {"support": [[2.0], [3.0]], "weights": [0.5, 0.5]},
            "cost": {"kind": "mean_shift"},
            "sizes": [[4000, 4000]], "limit_draws": 100000,
            "bootstrap": {"replicates": 2000, "datasets": 20, "negative_control": true}}"#,
    )
    .unwrap();
    let pop = otlimit_cli::experiment::Population::from_config(&control).unwrap();
    let non_unique = !potentials_unique(&pop.mu, &pop.nu, pop.cost_matrix()).unwrap();
    let rc = otlimit_cli::run(&control).unwrap();
    let (dk, dn) = (rc.rows[0].d_bl.unwrap(), rc.rows[1].d_bl.unwrap());
    outcome(
        k == 251 && d <= 0.10 && non_unique && dn > dk,
        format!(
            "k = {k}, mean d_BL = {d:.4} over 20 datasets; control (non-unique dual face = {non_unique}): k={} gives {dk:.4}, k=n gives {dn:.4}",
            rc.rows[0].k.unwrap()
        ),
    )
}

fn ac8() -> Outcome {
    let mu = line(&[0.0, 1.0], &[0.6, 0.4]);
    let nu = line(&[0.0, 1.0], &[0.3, 0.7]);
    let costs = vec![
        CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
        CostMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 3.0]]).unwrap(),
    ];
    let values: Vec<f64> = costs.iter().map(|c| ot_value(&mu, &nu, c).unwrap()).collect();
    let model = GaussianTripleModel::bridges(&mu, &nu, CostProcess::Zero);
    let scaling = Scaling::TwoSample { lambda: 0.5 };
    let opts = LimitOptions::default();
    let n = 100_000;
    let process = sample_limit_process(&mu, &nu, &costs, &model, scaling, n, &opts, 81).unwrap();
    let per_theta: Vec<Vec<f64>> = (0..2).map(|t| process.iter().map(|row| row[t]).collect()).collect();
    let run = |mode| sample_limit_extremal(&mu, &nu, &costs, mode, &model, scaling, n, None, &opts, 82).unwrap();
    let (sup, inf) = (run(ExtremalMode::Sup), run(ExtremalMode::Inf));
    let se = |a: &[f64], b: &[f64]| (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    let margins = |ext: &[f64], sign: f64| -> Vec<f64> {
        per_theta
            .iter()
            .map(|p| sign * (mean(ext) - mean(p)) / se(ext, p))
            .collect()
    };
    let up = margins(&sup.samples.draws, 1.0);
    let down = margins(&inf.samples.draws, -1.0);
    let tie = (values[0] - values[1]).abs() < 1e-12 && sup.active.len() == 2 && inf.active.len() == 2;
    let pass = tie && up.iter().chain(&down).all(|z| *z > 3.0);
    outcome(
        pass,
        format!(
            "OT values = {:.6}/{:.6}, sup margins = {:.1}/{:.1} SE, inf margins = {:.1}/{:.1} SE",
            values[0], values[1], up[0], up[1], down[0], down[1]
        ),
    )
}

fn ac9() -> Outcome {
    let errs: Vec<f64> = (0..500u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(9_000 + s);
            let x: Vec<f64> = (0..r.random_range(1..=8)).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..r.random_range(1..=8)).map(|_| r.random_range(-1.0..1.0)).collect();
            let p = [1.0, 1.5, 2.0, 3.0][s as usize % 4];
            let mu = EmpiricalSample::from_scalars(&x).unwrap().to_measure().unwrap();
            let nu = EmpiricalSample::from_scalars(&y).unwrap().to_measure().unwrap();
            let c = CostMatrix::between(&mu, &nu, |a, b| a.dist(b).powf(p)).unwrap();
            (ot_1d(&x, &y, p).unwrap() - ot_value(&mu, &nu, &c).unwrap()).abs()
        })
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);

    let mut r = rng(9_999);
    let mut sliced_ok = 0;
    let trials = 40;
    for t in 0..trials {
        let dim = 2 + t % 2;
        let p = [1.0, 2.0][t / 2 % 2];
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let norm_p = v.iter().map(|a| a * a).sum::<f64>().sqrt().powf(p);
        let zero = EmpiricalSample::new(vec![Point::new(vec![0.0; dim])]).unwrap();
        let at_v = EmpiricalSample::new(vec![Point::new(v)]).unwrap();
        let grid = SphereGrid::uniform(dim, 64, t as u64).unwrap();
        let mesh = grid.mesh();
        let coarse = sliced_max(&zero, &at_v, &grid, p, false).unwrap();
        let refined = sliced_max(&zero, &at_v, &grid, p, true).unwrap();
        let within = coarse.value >= norm_p - p * norm_p * mesh - 1e-12 && coarse.value <= norm_p + 1e-12;
        let refine_ok = refined.value >= coarse.value - 1e-12 && refined.value <= norm_p + 1e-12;
        if within && refine_ok {
            sliced_ok += 1;
        }
    }
    outcome(
        worst <= 1e-9 && sliced_ok == trials,
        format!("500 instances, max |ot_1d - solve_ot| = {worst:.2e}; max-sliced within mesh bound on {sliced_ok}/{trials}"),
    )
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn ac10() -> Outcome {
    let rows: Vec<(usize, f64, f64)> = (0..40u64)
        .into_par_iter()
        .map(|s| {
            let dim = if s < 20 { 2 } else { 3 };
            let mut r = rng(10_000 + s);
            let mu = random_measure(6, dim, &mut r).unwrap();
            let rot = random_rotation(dim, &mut r).unwrap();
            let moved: Vec<Point> = mu
                .support()
                .iter()
                .map(|p| Point::new((&rot * nalgebra::DVector::from_column_slice(p.coords())).iter().copied().collect()))
                .collect();
            let nu = DiscreteMeasure::new(moved, mu.weights().to_vec()).unwrap();
            let grid = RotationGrid::new(dim, if dim == 2 { 360 } else { 2000 }).unwrap();
            let res = procrustes_ot(&mu, &nu, &grid, Refine::Alternating).unwrap();
            (dim, res.value, op_norm(&(res.alignment() - &rot)))
        })
        .collect();
    let value = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let err = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    outcome(
        value <= 1e-8 && err <= 1e-4,
        format!("20 rotations each in 2D and 3D, max value = {value:.2e}, max operator-norm error = {err:.2e}"),
    )
}

fn ac11() -> Outcome {
    let w = ModulusOfContinuity::Linear { l: 1.0 };
    let mut exact = 0;
    let mut certified_ok = 0;
    let trials = 200;
    for s in 0..trials {
        let mut r = rng(11_000 + s);
        let (n, m) = (r.random_range(2..=6), r.random_range(2..=6));
        let xs: Vec<Point> = (0..n).map(|_| Point::scalar(r.random_range(0.0..4.0))).collect();
        let ys: Vec<Point> = (0..m).map(|_| Point::scalar(r.random_range(0.0..4.0))).collect();
        let metric = distance_matrix(&xs);
        let c = CostMatrix::from_supports(&xs, &ys, |a, b| a.dist(b)).unwrap();
        let spec = ElevationSpec::bounded_modulus(&c, w.clone(), metric.clone());
        if fixed_point_defect(&c, &spec).unwrap() == 0.0 {
            exact += 1;
        }
        let bound = 2.0 * (c.sup_norm() + 0.5);
        let noisy = CostMatrix::new(c.values().map(|v| v + r.random_range(-3.0..3.0) * v.max(1.0))).unwrap();
        let out = elevate(&noisy, &spec).unwrap();
        if modulus_bound_check(&out, &w.scaled(2.0), &metric).unwrap() && out.sup_norm() <= bound {
            certified_ok += 1;
        }
    }

    let xs: Vec<Point> = [0.0, 0.7, 1.5, 2.6, 3.1].iter().map(|&v| Point::scalar(v)).collect();
    let ys: Vec<Point> = [0.2, 1.1, 2.0, 3.4].iter().map(|&v| Point::scalar(v)).collect();
    let c = CostMatrix::from_supports(&xs, &ys, |a, b| a.dist(b)).unwrap();
    let spec = ElevationSpec::bounded_modulus(&c, w, distance_matrix(&xs));
    let rates: Vec<ProbeRate> = [100usize, 1_000, 10_000]
        .iter()
        .map(|&n| ProbeRate { n, a_n: (n as f64).sqrt() })
        .collect();
    let probe = elevation_convergence_probe(&c, 5.0, &spec, &rates, 500, 1111).unwrap();
    let medians: Vec<f64> = probe.iter().map(|row| row.summary.median).collect();
    let monotone = medians.windows(2).all(|p| p[1] <= p[0]);
    outcome(
        exact == trials && certified_ok == trials && monotone,
        format!("fixed points exact {exact}/{trials}, elevated outputs certified {certified_ok}/{trials}, probe medians {medians:?}"),
    )
}

/// Exact d_BL between finitely supported laws on the line by enumerating the
/// vertices of `{|f| <= 1, |f_{k+1} - f_k| <= gap_k}`.
///
/// Each adjacent pair is either slack or tight in one of two directions; tight
/// pairs chain atoms into blocks, and a vertex pins one atom per block at +-1.
fn d_bl_vertex_oracle(atoms: &[(f64, f64)]) -> f64 {
    let k = atoms.len();
    let gaps: Vec<f64> = atoms.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mut best = f64::NEG_INFINITY;
    let edge_states = 3usize.pow((k - 1) as u32);
    for code in 0..edge_states {
        let mut state = Vec::with_capacity(k - 1);
        let mut c = code;
        for _ in 0..k - 1 {
            state.push(c % 3);
            c /= 3;
        }
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for e in 0..k - 1 {
            if state[e] == 0 {
                blocks.push((start, e));
                start = e + 1;
            }
        }
        blocks.push((start, k - 1));
        let mut feasible_blocks: Vec<Vec<Vec<f64>>> = Vec::new();
        for &(a, b) in &blocks {
            let mut options = Vec::new();
            for anchor in a..=b {
                for sign in [-1.0, 1.0] {
                    let mut f = vec![0.0; b - a + 1];
                    f[anchor - a] = sign;
                    for i in anchor + 1..=b {
                        let step = if state[i - 1] == 1 { gaps[i - 1] } else { -gaps[i - 1] };
                        f[i - a] = f[i - a - 1] + step;
                    }
                    for i in (a..anchor).rev() {
                        let step = if state[i] == 1 { gaps[i] } else { -gaps[i] };
                        f[i - a] = f[i - a + 1] - step;
                    }
                    if f.iter().all(|v| v.abs() <= 1.0 + 1e-12) {
                        options.push(f);
                    }
                }
            }
            if options.is_empty() {
                break;
            }
            feasible_blocks.push(options);
        }
        if feasible_blocks.len() != blocks.len() {
            continue;
        }
        let mut choice = vec![0usize; blocks.len()];
        loop {
            let mut f = Vec::with_capacity(k);
            for (bi, &ci) in choice.iter().enumerate() {
                f.extend_from_slice(&feasible_blocks[bi][ci]);
            }
            let ok = (0..k - 1).all(|e| state[e] != 0 || (f[e + 1] - f[e]).abs() <= gaps[e] + 1e-12);
            if ok {
                let val: f64 = f.iter().zip(atoms).map(|(v, a)| v * a.1).sum();
                best = best.max(val);
            }
            let mut i = 0;
            while i < choice.len() {
                choice[i] += 1;
                if choice[i] < feasible_blocks[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == choice.len() {
                break;
            }
        }
    }
    best
}

fn signed_atoms(p: &EmpiricalLaw1D, q: &EmpiricalLaw1D) -> Vec<(f64, f64)> {
    let mut map: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let key = |v: f64| {
        let b = v.to_bits();
        if v < 0.0 { !b } else { b | (1 << 63) }
    };
    for v in p.values() {
        *map.entry(key(*v)).or_default() += 1.0 / p.len() as f64;
    }
    for v in q.values() {
        *map.entry(key(*v)).or_default() -= 1.0 / q.len() as f64;
    }
    let unkey = |k: u64| {
        if k & (1 << 63) != 0 {
            f64::from_bits(k & !(1 << 63))
        } else {
            f64::from_bits(!k)
        }
    };
    map.into_iter().map(|(k, w)| (unkey(k), w)).collect()
}

fn random_law(r: &mut ChaCha8Rng) -> EmpiricalLaw1D {
    let n = r.random_range(1..=4);
    EmpiricalLaw1D::new((0..n).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
}

fn ac12() -> Outcome {
    let errs: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let mut r = rng(12_000 + s);
            let (p, q) = (random_law(&mut r), random_law(&mut r));
            (d_bl_1d(&p, &q) - d_bl_vertex_oracle(&signed_atoms(&p, &q))).abs()
        })
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let mut axioms = 0;
    let mut r = rng(12_999);
    for _ in 0..200 {
        let (p, q, u) = (random_law(&mut r), random_law(&mut r), random_law(&mut r));
        let (pq, qp) = (d_bl_1d(&p, &q), d_bl_1d(&q, &p));
        let ok = d_bl_1d(&p, &p) < 1e-12
            && (pq - qp).abs() < 1e-12
            && pq <= d_bl_1d(&p, &u) + d_bl_1d(&u, &q) + 1e-12
            && (0.0..=2.0 + 1e-12).contains(&pq)
            && (p.values() == q.values() || pq > 0.0);
        axioms += usize::from(ok);
    }
    outcome(
        worst <= 1e-9 && axioms == 200,
        format!("200 pairs, max |d_BL - vertex oracle| = {worst:.2e}; metric axioms hold on {axioms}/200 triples"),
    )
}

fn main() {
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("AC1", 30, ac1),
        ("AC2", 10, ac2),
        ("AC3", 60, ac3),
        ("AC4", 60, ac4),
        ("AC5", 60, ac5),
        ("AC6", 600, ac6),
        ("AC7", 600, ac7),
        ("AC8", 60, ac8),
        ("AC9", 30, ac9),
        ("AC10", 60, ac10),
        ("AC11", 120, ac11),
        ("AC12", 30, ac12),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|n| n == name)) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.2}s, budget {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
