//! Cross-module consistency: the same quantities computed along independent
//! routes must agree.

use popdyn::dynamics::{integrate, integrate_ode, integrate_on_grid, IntegrateOptions};
use popdyn::markov::{build_generator, check_irreducible, stationary_distribution};
use popdyn::reduction::{ppp_rhs, ppp_to_spp};
use popdyn::sim::{simulate_ppp, simulate_spp, PopulationCounts};
use popdyn::stability::{assess, eigenvalues, FixedPoint, StabilityClass};
use popdyn::viral::{
    condition_margin, lyapunov_certificate, relative_entropy, to_lotka_volterra,
    CertificateOutcome,
};
use popdyn::{DensityVector, ImmunityMatrix, PppRule, ProtocolKind, ProtocolSpec, StateSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn states(k: usize) -> StateSet {
    StateSet::new((0..k).map(|i| format!("q{}", i + 1)).collect()).unwrap()
}

fn worked_ppp() -> ProtocolSpec {
    ProtocolSpec::ppp(
        states(3),
        vec![
            PppRule::new((0, 1), (2, 1)),
            PppRule::new((2, 0), (0, 1)),
            PppRule::new((1, 2), (1, 0)),
        ],
    )
    .unwrap()
}

fn random_simplex_point(rng: &mut ChaCha8Rng, k: usize) -> DensityVector {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = e.iter().sum();
    DensityVector::new(e.into_iter().map(|v| v / sum).collect()).unwrap()
}

fn random_irreducible_mpp(rng: &mut ChaCha8Rng, k: usize) -> ProtocolSpec {
    let rates: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
    let switch: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let sum: f64 = row.iter().sum();
            row.into_iter().map(|v| v / sum).collect()
        })
        .collect();
    ProtocolSpec::mpp(states(k), rates, switch).unwrap()
}

/// Smallest nonzero |Re| of the generator spectrum.
fn spectral_gap(spec: &ProtocolSpec) -> f64 {
    let q = build_generator(spec).unwrap();
    let eigs = eigenvalues(q.matrix()).unwrap();
    eigs.iter()
        .map(|e| e.re.abs())
        .filter(|&r| r > 1e-9)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn constant_rate_ode_limit_matches_linear_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    for k in [3usize, 5] {
        let spec = random_irreducible_mpp(&mut rng, k);
        let q = build_generator(&spec).unwrap();
        assert!(check_irreducible(&q));
        let stationary = stationary_distribution(&q).unwrap();
        let t_end = 50.0 / spectral_gap(&spec);
        let opts = IntegrateOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegrateOptions::to(t_end) };
        for _ in 0..3 {
            let x0 = random_simplex_point(&mut rng, k);
            let out = integrate(&spec, &x0, &opts).unwrap();
            for (a, b) in out.trajectory.final_point().iter().zip(stationary.iter()) {
                assert!((a - b).abs() < 1e-6, "k={k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn stationary_point_is_fixed_and_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let spec = random_irreducible_mpp(&mut rng, 4);
    let q = build_generator(&spec).unwrap();
    let stationary = stationary_distribution(&q).unwrap();
    let fp = FixedPoint::at(&spec, stationary);
    assert!(fp.residual <= 1e-12, "residual {}", fp.residual);
    let a = assess(&spec, &fp, 1e-7).unwrap();
    assert_eq!(a.class, StabilityClass::AsymptoticallyStable);
}

#[test]
fn entropy_descends_along_certified_trajectories() {
    // Negative-identity immunity: the uniform mixture is certified stable.
    let mut a = ImmunityMatrix::constant(3, 0);
    for i in 0..3 {
        a.set(i, i, -1);
    }
    let spec = ProtocolSpec::lvp(states(3), a, 1.0, 1.0).unwrap();
    let star = DensityVector::uniform(3);
    let verdict = lyapunov_certificate(&spec, &star, 0.05, 2000, 11).unwrap();
    assert!(matches!(verdict.outcome, CertificateOutcome::Certified { .. }));

    let mut rng = ChaCha8Rng::seed_from_u64(403);
    for _ in 0..3 {
        // Start inside the certified ball.
        let mut x0: Vec<f64> = star.to_vec();
        for v in &mut x0 {
            *v += rng.gen_range(-0.02..0.02);
        }
        let sum: f64 = x0.iter().sum();
        let x0 = DensityVector::new(x0.into_iter().map(|v| v / sum).collect()).unwrap();

        let traj = integrate_on_grid(&spec, &x0, 200.0, 0.5, &IntegrateOptions::to(1.0)).unwrap();
        let entropies: Vec<f64> =
            traj.points.iter().map(|p| relative_entropy(&star, p)).collect();
        for w in entropies.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "entropy rose: {} -> {}", w[0], w[1]);
        }
        assert!(
            *entropies.last().unwrap() < 1e-6,
            "entropy failed to vanish: {}",
            entropies.last().unwrap()
        );
    }
}

#[test]
fn entropy_derivative_matches_condition_margin() {
    // dE/dt = -delta * (sum_i x*_i t_i(x) - t(x)) along trajectories.
    let mut a = ImmunityMatrix::constant(3, 0);
    for i in 0..3 {
        a.set(i, i, -1);
    }
    let delta = 1.0;
    let spec = ProtocolSpec::lvp(states(3), a.clone(), 1.0, delta).unwrap();
    let star = DensityVector::uniform(3);
    let x0 = DensityVector::new(vec![0.36, 0.33, 0.31]).unwrap();

    let dt = 1e-3;
    let opts = IntegrateOptions { rel_tol: 1e-11, abs_tol: 1e-13, ..IntegrateOptions::to(1.0) };
    let traj = integrate_on_grid(&spec, &x0, 2.0, dt, &opts).unwrap();
    for idx in (1..traj.points.len() - 1).step_by(100) {
        let e_prev = relative_entropy(&star, &traj.points[idx - 1]);
        let e_next = relative_entropy(&star, &traj.points[idx + 1]);
        let fd = (e_next - e_prev) / (2.0 * dt);
        let expected = -delta * condition_margin(&a, &star, &traj.points[idx]);
        assert!(
            (fd - expected).abs() < 1e-6,
            "dE/dt mismatch at index {idx}: fd {fd}, expected {expected}"
        );
    }
}

#[test]
fn lotka_volterra_image_reproduces_density_ratios() {
    // Identity immunity, k = 3; pivot on the dominant state so the ratios
    // stay bounded over the horizon.
    let spec = ProtocolSpec::lvp(states(3), ImmunityMatrix::identity(3), 1.0, 1.0).unwrap();
    let pivot = 2usize;
    let lv = to_lotka_volterra(&spec, Some(pivot)).unwrap();
    let x0 = DensityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
    let t_end = 10.0;

    // Augment the replicator state with tau(t) = integral of x_pivot.
    let ProtocolKind::Lvp { immunity, delta, .. } = spec.kind().clone() else { unreachable!() };
    let aug_rhs = move |z: &[f64]| -> Vec<f64> {
        let x = &z[..3];
        let t: Vec<f64> = (0..3).map(|i| immunity.row_dot(i, x)).collect();
        let t_bar: f64 = (0..3).map(|i| x[i] * t[i]).sum();
        let mut dz: Vec<f64> = (0..3).map(|i| delta * (t[i] - t_bar) * x[i]).collect();
        dz.push(x[pivot]);
        dz
    };
    // March both systems on a shared grid: the replicator (with tau) in
    // steps of t, the image system in the matching steps of tau.
    let mut z: Vec<f64> = x0.to_vec();
    z.push(0.0);
    let mut y: Vec<f64> = vec![x0[0] / x0[pivot], x0[1] / x0[pivot]];
    let grid_dt = 0.1;
    let steps = (t_end / grid_dt) as usize;
    let mut checked = 0;
    for _ in 0..steps {
        let opts = IntegrateOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegrateOptions::to(grid_dt) };
        let tau_before = z[3];
        let (_, pts) = integrate_ode(&aug_rhs, &z, &opts).unwrap();
        z = pts.last().unwrap().clone();
        let dtau = z[3] - tau_before;
        let lv_opts = IntegrateOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            dt_init: (dtau / 4.0).min(1e-2),
            ..IntegrateOptions::to(dtau)
        };
        let (_, lv_pts) = integrate_ode(|w| lv.rhs(w), &y, &lv_opts).unwrap();
        y = lv_pts.last().unwrap().clone();

        for i in 0..2 {
            let ratio = z[i] / z[pivot];
            assert!(
                (ratio - y[i]).abs() < 1e-4,
                "ratio {} vs image {} at tau {}",
                ratio,
                y[i],
                z[3]
            );
        }
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn empirical_densities_track_the_continuum_limit() {
    // Moderate-n smoke test; the acceptance suite runs the full ladder.
    let spec = worked_ppp();
    let x0 = DensityVector::uniform(3);
    let t_end = 5.0;
    let sample_dt = 0.25;
    let n = 20_000u64;
    let counts = PopulationCounts::from_density(&x0, n);
    let ode = integrate_on_grid(&spec, &counts.densities(), t_end, sample_dt, &IntegrateOptions::to(1.0))
        .unwrap();

    let run = simulate_ppp(&spec, &counts, t_end, sample_dt, 7).unwrap();
    assert_eq!(run.trajectory.times.len(), ode.times.len());
    let mut sup = 0.0f64;
    for (emp, det) in run.trajectory.densities.iter().zip(&ode.points) {
        for (a, b) in emp.iter().zip(det.iter()) {
            sup = sup.max((a - b).abs());
        }
    }
    assert!(sup < 0.05, "gap {sup}");

    // The reduced spec under switching semantics stays near the same limit.
    let reduced = ppp_to_spp(&spec).unwrap();
    let run2 = simulate_spp(&reduced, &counts, t_end, sample_dt, 7).unwrap();
    let mut sup2 = 0.0f64;
    for (emp, det) in run2.trajectory.densities.iter().zip(&ode.points) {
        for (a, b) in emp.iter().zip(det.iter()) {
            sup2 = sup2.max((a - b).abs());
        }
    }
    assert!(sup2 < 0.05, "reduced gap {sup2}");
}

#[test]
fn tolerance_ladder_pins_down_the_solution() {
    // Two more decades of tolerance move the endpoint by less than 1e-6,
    // the working proxy for a well-posed initial value problem.
    let mut rng = ChaCha8Rng::seed_from_u64(405);
    let spec = random_irreducible_mpp(&mut rng, 5);
    let x0 = random_simplex_point(&mut rng, 5);
    let loose = integrate(&spec, &x0, &IntegrateOptions::to(50.0)).unwrap();
    let tight_opts =
        IntegrateOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegrateOptions::to(50.0) };
    let tight = integrate(&spec, &x0, &tight_opts).unwrap();
    for (a, b) in loose
        .trajectory
        .final_point()
        .iter()
        .zip(tight.trajectory.final_point().iter())
    {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn stable_verdicts_imply_empirical_attraction() {
    // Perturbations within 1e-2 of a point classified stable flow back to
    // within 1e-4 of it by t = 200.
    let spec = random_irreducible_mpp(&mut ChaCha8Rng::seed_from_u64(406), 3);
    let q = build_generator(&spec).unwrap();
    let star = stationary_distribution(&q).unwrap();
    let fp = FixedPoint::at(&spec, star.clone());
    let verdict = assess(&spec, &fp, 1e-7).unwrap();
    assert_eq!(verdict.class, StabilityClass::AsymptoticallyStable);

    let mut rng = ChaCha8Rng::seed_from_u64(407);
    for _ in 0..20 {
        let mut x0: Vec<f64> = star.to_vec();
        for v in x0.iter_mut() {
            *v = (*v + rng.gen_range(-5e-3..5e-3)).max(0.0);
        }
        let sum: f64 = x0.iter().sum();
        let x0 = DensityVector::new(x0.into_iter().map(|v| v / sum).collect()).unwrap();
        let out = integrate(&spec, &x0, &IntegrateOptions::to(200.0)).unwrap();
        for (a, b) in out.trajectory.final_point().iter().zip(star.iter()) {
            assert!((a - b).abs() < 1e-4, "did not return to the stable point");
        }
    }
}

#[test]
fn rule_dynamics_faces_absorb_boundary_mass() {
    // Coordinates that start at zero stay at zero under replicator dynamics.
    let spec = ProtocolSpec::lvp(states(3), ImmunityMatrix::identity(3), 1.0, 1.0).unwrap();
    let x0 = DensityVector::new(vec![0.0, 0.4, 0.6]).unwrap();
    let out = integrate(&spec, &x0, &IntegrateOptions::to(20.0)).unwrap();
    for p in &out.trajectory.points {
        assert_eq!(p[0], 0.0);
    }
}

#[test]
fn reduction_equivalence_on_random_rule_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..10 {
        let k = rng.gen_range(2..=6);
        let spec = random_ppp(&mut rng, k, 12);
        let reduced = ppp_to_spp(&spec).unwrap();
        for _ in 0..20 {
            let x = random_simplex_point(&mut rng, k);
            let a = ppp_rhs(&spec, &x).unwrap();
            let b = popdyn::dynamics::spp_rhs(&reduced, &x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}

fn random_ppp(rng: &mut ChaCha8Rng, k: usize, max_rules: usize) -> ProtocolSpec {
    let mut pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|r| (0..k).filter(move |&m| m != r).map(move |m| (r, m)))
        .collect();
    // Fisher-Yates with the seeded generator keeps the corpus reproducible.
    for i in (1..pairs.len()).rev() {
        let j = rng.gen_range(0..=i);
        pairs.swap(i, j);
    }
    let count = rng.gen_range(1..=max_rules.min(pairs.len()));
    let rules: Vec<PppRule> = pairs[..count]
        .iter()
        .map(|&left| {
            let rp = rng.gen_range(0..k);
            let mut mp = rng.gen_range(0..k - 1);
            if mp >= rp {
                mp += 1;
            }
            PppRule::new(left, (rp, mp))
        })
        .collect();
    ProtocolSpec::ppp(states(k), rules).unwrap()
}
