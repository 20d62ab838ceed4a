//! Implementation results checked against independently computed values:
//! quadrature of explicitly written hat functions, dense linear algebra,
//! closed-form decay rates and sample statistics.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;

use curve_spde::assembly::{advection_load, assemble_mass, assemble_stiffness};
use curve_spde::experiments::{
    apriori_monitor, temporal_convergence, vanish_probability, AprioriStudy, ConvergenceStudy,
    NoiseSettings, Physics, StudyMode, VanishStudy,
};
use curve_spde::geometry::{discretize_curve, interpolate_nodal, l2_norm, CurvePath, FieldCoeffs, Mesh};
use curve_spde::linalg::solve_spd_cyclic;
use curve_spde::noise::{basis_eval, basis_hat_inner, keyed_standard_normal, NoiseSpectrum, SigmaSpec};
use curve_spde::quadrature::integrate5;
use curve_spde::ritz::{curve_errors, curve_means, galerkin_residual, ritz_project, SmoothFn};
use curve_spde::stepper::{step, Advection, InitialCondition, Reaction, StepperConfig};
use curve_spde::CyclicTridiagonal;

/// Periodic hat of storage slot `i`, centred at `x_{i+1} = (i + 1) h`.
fn hat(i: usize, n: usize, x: f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    let d = (x - (i + 1) as f64 * h).rem_euclid(2.0 * PI);
    let d = d.min(2.0 * PI - d);
    (1.0 - d / h).max(0.0)
}

fn hat_slope(i: usize, n: usize, x: f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    let d = (x - (i + 1) as f64 * h).rem_euclid(2.0 * PI);
    if d < h {
        -1.0 / h
    } else if d > 2.0 * PI - h {
        1.0 / h
    } else {
        0.0
    }
}

/// Integrate over every element `[e h, (e + 1) h]` separately.
fn integrate_elements(n: usize, f: impl Fn(usize, f64) -> f64) -> f64 {
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|e| {
            let (a, b) = (e as f64 * h, (e + 1) as f64 * h);
            integrate5(a, b, |x| f(e, x))
        })
        .sum()
}

fn to_matrix(a: &CyclicTridiagonal) -> DMatrix<f64> {
    let rows = a.to_dense();
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[test]
fn mass_and_stiffness_match_quadrature_on_flower() {
    let n = 16;
    let mesh = Mesh::uniform(n).unwrap();
    let dc = discretize_curve(&CurvePath::Flower, 0.3, &mesh).unwrap();
    let h = mesh.h();
    // |u_hx| on element e (the one left of slot e) is its chord over h
    let speed = |e: usize| dc.edge_lengths()[e] / h;
    let m = to_matrix(&assemble_mass(&dc).unwrap());
    let s = to_matrix(&assemble_stiffness(&dc, 1.0).unwrap());
    for i in 0..n {
        for j in 0..n {
            let mij = integrate_elements(n, |e, x| {
                // sample strictly inside the element
                hat(i, n, x) * hat(j, n, x) * speed(e)
            });
            let sij = integrate_elements(n, |e, x| {
                hat_slope(i, n, x) * hat_slope(j, n, x) / speed(e)
            });
            assert!((m[(i, j)] - mij).abs() < 1e-12, "M[{i},{j}]");
            assert!((s[(i, j)] - sij).abs() < 1e-12 * sij.abs().max(1.0), "S[{i},{j}]");
        }
    }
}

#[test]
fn advection_load_matches_quadrature() {
    let n = 8;
    let mesh = Mesh::uniform(n).unwrap();
    let c = FieldCoeffs::new(vec![0.3, -1.2, 2.0, 0.7, 0.0, 1.5, -0.4, 0.9]);
    let w = FieldCoeffs::new(vec![1.0, 0.5, -0.25, 2.0, 1.1, -1.0, 0.3, 0.6]);
    let a = advection_load(&c, &w, &mesh).unwrap();
    for (i, ai) in a.iter().enumerate() {
        let oracle = integrate_elements(n, |_, x| c.eval(&mesh, x) * w.eval(&mesh, x) * hat_slope(i, n, x));
        assert!((ai - oracle).abs() < 1e-12, "a[{i}] = {ai}, oracle {oracle}");
    }
}

#[test]
fn laplace_beltrami_spectrum_on_unit_circle() {
    let n = 256;
    let mesh = Mesh::uniform(n).unwrap();
    let dc = discretize_curve(&CurvePath::unit_circle(), 0.0, &mesh).unwrap();
    let m = to_matrix(&assemble_mass(&dc).unwrap());
    let s = to_matrix(&assemble_stiffness(&dc, 1.0).unwrap());
    let l = m.cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let c = &linv * s * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut eig: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    assert!(eig[0].abs() < 1e-10);
    // the first nonzero eigenvalue of -Δ on the unit circle is 1, twice
    assert!((eig[1] - 1.0).abs() < 0.02, "{}", eig[1]);
    assert!((eig[2] - 1.0).abs() < 0.02, "{}", eig[2]);
}

#[test]
fn interpolation_error_is_second_order() {
    let levels = [16, 32, 64, 128];
    let errs: Vec<f64> = levels
        .iter()
        .map(|&n| {
            let mesh = Mesh::uniform(n).unwrap();
            let ih = interpolate_nodal(f64::sin, &mesh).unwrap();
            let sub = |e: usize, x: f64| {
                let _ = e;
                (x.sin() - ih.eval(&mesh, x)).powi(2)
            };
            integrate_elements(n, sub).sqrt()
        })
        .collect();
    let hs: Vec<f64> = levels.iter().map(|&n| 2.0 * PI / n as f64).collect();
    let slope = curve_spde::experiments::loglog_slope(&hs, &errs).unwrap();
    assert!(slope >= 1.9, "slope {slope}");

    let mesh = Mesh::uniform(128).unwrap();
    let norm = l2_norm(&interpolate_nodal(f64::sin, &mesh).unwrap(), &mesh).unwrap();
    assert!((norm / PI.sqrt() - 1.0).abs() <= 1e-3);
}

#[test]
fn eigenbasis_is_orthonormal() {
    for l in 1..=9 {
        for m in 1..=9 {
            let ip: f64 = (0..200)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / 200.0;
                    let b = 2.0 * PI * (k + 1) as f64 / 200.0;
                    integrate5(a, b, |x| basis_eval(l, x).unwrap() * basis_eval(m, x).unwrap())
                })
                .sum();
            let expect = if l == m { 1.0 } else { 0.0 };
            assert!((ip - expect).abs() < 1e-10, "<g_{l}, g_{m}> = {ip}");
        }
    }
}

#[test]
fn basis_hat_inner_matches_quadrature() {
    let n = 12;
    let mesh = Mesh::uniform(n).unwrap();
    for l in 1..=25 {
        for i in 0..n {
            // eight sub-intervals per element resolve the trig factor to rounding
            let fine: f64 = (0..n * 8)
                .map(|k| {
                    let h = 2.0 * PI / (n * 8) as f64;
                    integrate5(k as f64 * h, (k + 1) as f64 * h, |x| {
                        basis_eval(l, x).unwrap() * hat(i, n, x)
                    })
                })
                .sum();
            let v = basis_hat_inner(l, i, &mesh).unwrap();
            assert!((v - fine).abs() < 1e-12, "l = {l}, i = {i}: {v} vs {fine}");
        }
    }
}

#[test]
fn spectral_tail_below_integral_bound() {
    for rbar in [0.5, 0.75, 1.0, 2.0] {
        for modes in [3, 5, 10, 51, 258, 259] {
            let spec = NoiseSpectrum::new(1.0, rbar, modes).unwrap();
            let partial = spec.tail_mass(1_000_000);
            let bound = spec.tail_integral_bound();
            assert!(partial <= bound, "rbar {rbar}, L {modes}: {partial} > {bound}");
        }
    }
}

#[test]
fn keyed_normals_have_gaussian_moments() {
    let n = 1_000_000u64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let z = keyed_standard_normal(31337, (k % 7) as u32, (k % 13) as u32 + 1, k);
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
        s4 += z * z * z * z;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = s2 / nf - mean * mean;
    let m3 = s3 / nf - 3.0 * mean * s2 / nf + 2.0 * mean.powi(3);
    let m4 = s4 / nf - 4.0 * mean * s3 / nf + 6.0 * mean * mean * s2 / nf - 3.0 * mean.powi(4);
    let skew = m3 / var.powf(1.5);
    let kurt = m4 / (var * var) - 3.0;
    assert!(mean.abs() < 5e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 1e-2, "variance {var}");
    assert!(skew.abs() < 0.05, "skewness {skew}");
    assert!(kurt.abs() < 0.1, "excess kurtosis {kurt}");
}

fn laplacian_like(n: usize) -> CyclicTridiagonal {
    let off: Vec<f64> = (0..n).map(|i| -1.0 - 0.5 * ((i as f64) * 0.1).sin()).collect();
    let diag = (0..n).map(|i| 0.1 - off[i] - off[(i + n - 1) % n]).collect();
    CyclicTridiagonal::new(diag, off).unwrap()
}

fn best_solve_time(n: usize) -> f64 {
    let a = laplacian_like(n);
    let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    // the minimum over many repetitions discards preemption by other tests
    (0..40)
        .map(|_| {
            let t = Instant::now();
            let x = solve_spd_cyclic(&a, &b).unwrap();
            std::hint::black_box(x);
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn solver_cost_is_linear() {
    let small = best_solve_time(10_000);
    let large = best_solve_time(100_000);
    assert!(large / small <= 15.0, "ratio {}", large / small);
}

fn flower_config(reaction: Reaction) -> StepperConfig {
    StepperConfig::new(
        0.01,
        0.1,
        0.02,
        Advection::Sine {
            amplitude: 0.7,
            frequency: 2.0,
        },
        reaction,
        InitialCondition::Constant { value: 0.0 },
    )
    .unwrap()
}

#[test]
fn deterministic_step_is_linear() {
    let mesh = Mesh::uniform(24).unwrap();
    let cfg = flower_config(Reaction::Linear { rate: -0.8 });
    let a = interpolate_nodal(|x| (2.0 * x).sin() + 0.3, &mesh).unwrap();
    let b = interpolate_nodal(|x| (-(x - 2.0).powi(2)).exp(), &mesh).unwrap();
    let (alpha, beta) = (1.7, -0.45);
    let combo = FieldCoeffs::new(
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| alpha * x + beta * y)
            .collect(),
    );
    let curve = CurvePath::Flower;
    for k in [1, 4] {
        let sa = step(&a, &curve, &cfg, &mesh, None, k).unwrap();
        let sb = step(&b, &curve, &cfg, &mesh, None, k).unwrap();
        let sc = step(&combo, &curve, &cfg, &mesh, None, k).unwrap();
        for i in 0..24 {
            let lin = alpha * sa.values()[i] + beta * sb.values()[i];
            assert!((sc.values()[i] - lin).abs() < 1e-12);
        }
    }
}

#[test]
fn ritz_projection_properties() {
    let cases = [
        (SmoothFn::sine(1.0), CurvePath::unit_circle(), 0.0),
        (SmoothFn::sine(3.0), CurvePath::Flower, 0.5),
        (
            SmoothFn::new(|x| (x.cos()).exp(), |x| -x.sin() * x.cos().exp()),
            CurvePath::ShrinkingCircle,
            1.2,
        ),
    ];
    for (z, curve, t) in &cases {
        for n in [16, 48] {
            let mesh = Mesh::uniform(n).unwrap();
            let proj = ritz_project(z, curve, *t, &mesh).unwrap();
            assert!(galerkin_residual(z, &proj.coeffs, curve, *t, &mesh).unwrap() <= 1e-9);
            let (discrete, exact) = curve_means(z, &proj.coeffs, curve, *t, &mesh).unwrap();
            assert!((discrete - exact).abs() <= 1e-12 * exact.abs().max(1.0));
            let ih = interpolate_nodal(|x| z.value(x), &mesh).unwrap();
            let (_, h1_ritz) = curve_errors(z, &proj.coeffs, curve, *t, &mesh).unwrap();
            let (_, h1_interp) = curve_errors(z, &ih, curve, *t, &mesh).unwrap();
            assert!(h1_ritz <= h1_interp * (1.0 + 1e-6), "n = {n}: {h1_ritz} > {h1_interp}");
        }
    }
}

fn decay_study(ladder: Vec<usize>) -> ConvergenceStudy {
    ConvergenceStudy {
        physics: Physics {
            curve: CurvePath::Flower,
            diffusion: 0.01,
            advection: Advection::None,
            reaction: Reaction::Linear { rate: -1.0 },
            initial: InitialCondition::Gaussian {
                amplitude: 1.0,
                sharpness: 50.0,
                center: PI,
            },
        },
        noise: NoiseSettings {
            b1: 1.0,
            rbar: 1.0,
            sigma: SigmaSpec::Constant { sigma_bar: 0.0 },
            modes: None,
        },
        n_ref: 32,
        dt_ref: 1e-5,
        final_time: 0.5,
        samples: 1,
        master_seed: 5,
        ladder,
        mode: StudyMode::Temporal,
    }
}

#[test]
fn deterministic_linear_reaction_is_first_order() {
    let table = temporal_convergence(&decay_study(vec![500, 200, 100, 50])).unwrap();
    let slope = table.fitted_eoc().unwrap();
    assert!((0.9..=1.1).contains(&slope), "slope {slope}");
    assert_eq!(table.inversions(), 0);
}

#[test]
fn eoc_column_is_a_function_of_the_table() {
    let table = temporal_convergence(&decay_study(vec![500, 200, 100])).unwrap();
    let mut copy = table.clone();
    for r in &mut copy.rows {
        r.eoc = None;
    }
    copy.recompute_eoc();
    for (a, b) in table.rows.iter().zip(&copy.rows) {
        match (a.eoc, b.eoc) {
            (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12),
            (None, None) => {}
            other => panic!("eoc mismatch {other:?}"),
        }
    }
    for w in table.rows.windows(2) {
        let (e0, e1) = (w[0].error.unwrap(), w[1].error.unwrap());
        let direct = (e0 / e1).ln() / (w[0].dt / w[1].dt).ln();
        assert!((w[1].eoc.unwrap() - direct).abs() <= 1e-12);
    }
}

fn wavefront_physics() -> Physics {
    Physics {
        curve: CurvePath::ShrinkingCircle,
        diffusion: 0.05,
        advection: Advection::None,
        reaction: Reaction::Bistable {
            scale: 20.0,
            root: 0.25,
        },
        initial: InitialCondition::Gaussian {
            amplitude: 0.3,
            sharpness: 100.0,
            center: PI,
        },
    }
}

fn wavefront_noise(sigma_bar: f64) -> NoiseSettings {
    NoiseSettings {
        b1: 0.0,
        rbar: 0.75,
        sigma: SigmaSpec::LinearClamp { sigma_bar },
        modes: None,
    }
}

#[test]
fn wavefront_apriori_ratios_bounded() {
    let study = AprioriStudy {
        physics: wavefront_physics(),
        noise: wavefront_noise(0.5),
        nodes: 60,
        final_time: 0.6,
        dt_ref: 1e-3,
        factors: vec![4, 2, 1],
        samples: 50,
        master_seed: 44,
    };
    let report = apriori_monitor(&study).unwrap();
    assert!(!report.flagged, "ratios {:?}", report.ratios);
    assert!(report.max_ratio() <= 1.5);
}

#[test]
fn vanishing_limits() {
    let base = VanishStudy {
        physics: wavefront_physics(),
        noise: wavefront_noise(0.0),
        nodes: 60,
        dt: 1e-3,
        final_time: 1.8,
        samples: 3,
        master_seed: 9,
        threshold: 0.1,
    };
    let det = vanish_probability(&base).unwrap();
    assert_eq!(det.fraction, 0.0);
    // the deterministic front persists well above the threshold
    assert!(det.norms.iter().all(|n| n.unwrap() > 0.5));

    let all = vanish_probability(&VanishStudy {
        noise: wavefront_noise(0.5),
        threshold: 1e6,
        ..base
    })
    .unwrap();
    assert_eq!(all.fraction, 1.0);
}

#[test]
fn rungs_with_many_blowups_are_dropped() {
    let mut study = decay_study(vec![50, 2]);
    study.dt_ref = 1e-3;
    study.final_time = 1.0;
    study.physics.curve = CurvePath::unit_circle();
    study.physics.initial = InitialCondition::Constant { value: 1.0 };
    // explicit Euler on c' = -100 c³ is unstable once 100 Δt c² > 2
    study.physics.reaction = Reaction::Custom(Arc::new(|c| -100.0 * c * c * c));
    let table = temporal_convergence(&study).unwrap();
    assert_eq!(table.rows[0].error, None);
    assert_eq!(table.rows[0].blowups, 1);
    assert!(table.rows[1].error.is_some());
    assert_eq!(table.rows[1].eoc, None);
    assert_eq!(table.meta.reference_blowups, 0);
}

#[test]
fn stochastic_rungs_are_coupled_and_reproducible() {
    let mut study = decay_study(vec![100, 50]);
    study.dt_ref = 1e-4;
    study.samples = 4;
    study.noise.sigma = SigmaSpec::Constant { sigma_bar: 0.2 };
    let a = temporal_convergence(&study).unwrap();
    let b = temporal_convergence(&study).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.error.unwrap().to_bits(), y.error.unwrap().to_bits());
        assert!(x.error.unwrap() > 0.0);
    }
    // uncoupled paths would not shrink the error with Δt
    let mut other = study.clone();
    other.master_seed += 1;
    let c = temporal_convergence(&other).unwrap();
    assert_ne!(a.rows[0].error, c.rows[0].error);
    assert!(a.rows[1].error.unwrap() < a.rows[0].error.unwrap());
}
