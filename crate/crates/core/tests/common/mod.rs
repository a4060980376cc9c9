//! Random trap generators and the invariant batteries shared between the
//! property suite and the timed acceptance run.
//!
//! Each battery panics on the first violation and returns a one-line summary
//! of what it swept and the worst deviation it saw.

#![allow(dead_code)]

use phononwalk::coupling::{hopping_matrix, max_adjacent_hopping_time, to_walk_generator};
use phononwalk::crystal::{
    dimensionless_equilibrium, dimensionless_potential, equilibrium_positions, potential_gradient,
    potential_hessian,
};
use phononwalk::dynamics::{
    expected_populations, mode_decomposition, ode_oracle, propagate, simulate_dataset,
    MeasurementModel,
};
use phononwalk::fitting::{fit_observation, FitBounds, FitOptions};
use phononwalk::linalg::symmetric_eigen;
use phononwalk::spectral::analytic_spectrum;
use phononwalk::{HoppingMatrix, TrapConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random but always valid trap: light to heavy ions, radial confinement
/// 3x to 40x stiffer than axial.
pub fn random_config(r: &mut ChaCha8Rng, n_ions: usize) -> TrapConfig {
    let mass_amu = r.random_range(10.0..180.0);
    let f_z_mhz = r.random_range(0.03..0.5);
    let f_y_mhz = f_z_mhz * r.random_range(3.0..40.0);
    let f_x_mhz = f_y_mhz * r.random_range(1.05..1.3);
    TrapConfig::from_lab_units(n_ions, mass_amu, f_x_mhz, f_y_mhz, f_z_mhz)
        .expect("generated frequencies are ordered")
}

fn grad_norm(u: &[f64]) -> f64 {
    potential_gradient(u).unwrap().iter().map(|g| g * g).sum::<f64>().sqrt()
}

pub fn battery_equilibrium_geometry() -> String {
    let mut worst = 0.0f64;
    for n in 1..=10 {
        let u = dimensionless_equilibrium(n).unwrap();
        assert_eq!(u.len(), n);
        for w in u.windows(2) {
            assert!(w[0] < w[1], "positions not ascending at N={n}");
        }
        let mean = u.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-14, "mean {mean:e} at N={n}");
        for i in 0..n {
            assert_eq!(u[i], -u[n - 1 - i], "mirror symmetry broken at N={n}, i={i}");
        }
        let g = grad_norm(&u);
        assert!(g < 1e-10, "gradient norm {g:e} at N={n}");
        worst = worst.max(g);
    }
    format!("N in 1..=10, worst gradient norm {worst:.1e}")
}

pub fn battery_gradient_finite_difference() -> String {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(2..=8);
        let mut u: Vec<f64> = dimensionless_equilibrium(n).unwrap();
        let min_gap = u.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        for x in &mut u {
            // Small enough that the ordering cannot flip.
            *x += r.random_range(-0.2..0.2) * min_gap;
        }
        let g = potential_gradient(&u).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (dimensionless_potential(&up).unwrap()
                - dimensionless_potential(&dn).unwrap())
                / (2.0 * h);
            let diff = (fd - g[i]).abs();
            assert!(diff < 1e-6, "gradient vs finite difference {diff:e} at N={n}, i={i}");
            worst = worst.max(diff);
        }
    }
    format!("100 perturbed chains, worst gradient vs central difference {worst:.1e}")
}

pub fn battery_hessian_positive_definite() -> String {
    let mut smallest = f64::INFINITY;
    for n in 2..=10 {
        let u = dimensionless_equilibrium(n).unwrap();
        let hess = potential_hessian(&u).unwrap();
        let (eigs, _) = symmetric_eigen(&hess);
        assert!(eigs[0] > 0.0, "non-positive curvature {:e} at N={n}", eigs[0]);
        smallest = smallest.min(eigs[0]);
    }
    format!("N in 2..=10, smallest curvature {smallest:.6}")
}

pub fn battery_length_scaling() -> String {
    let mut r = rng(13);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = r.random_range(2..=9);
        let mass = r.random_range(10.0..180.0);
        let f_z = r.random_range(0.03..0.12);
        let base = TrapConfig::from_lab_units(n, mass, 3.4, 3.1, f_z).unwrap();
        let c: f64 = r.random_range(1.2..4.0);
        let scaled = TrapConfig::from_lab_units(n, mass, 3.4, 3.1, f_z * c).unwrap();
        let z_base = equilibrium_positions(&base).unwrap();
        let z_scaled = equilibrium_positions(&scaled).unwrap();
        let factor = c.powf(-2.0 / 3.0);
        for (a, b) in z_base.z0().iter().zip(z_scaled.z0()) {
            if a.abs() < 1e-300 {
                continue;
            }
            let rel = (b / (a * factor) - 1.0).abs();
            assert!(rel < 1e-12, "axial scaling off by {rel:e} at N={n}, c={c}");
            worst = worst.max(rel);
        }
    }
    format!("20 frequency rescalings, worst relative error {worst:.1e}")
}

pub fn battery_hopping_invariants() -> String {
    let mut r = rng(17);
    let mut worst_row = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(2..=10);
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let hm = hopping_matrix(&chain, &config).unwrap();
        let h = hm.matrix();
        assert!(hm.kappa0() > 0.0);
        let hmax = h.max_abs();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| h[(i, j)]).sum();
            assert!(
                row_sum.abs() <= 1e-12 * hmax,
                "row {i} sums to {row_sum:e} for N={n}"
            );
            worst_row = worst_row.max(row_sum.abs() / hmax);
            assert!(h[(i, i)] < 0.0, "diagonal must be negative");
            for j in 0..n {
                let mirror = h[(n - 1 - i, n - 1 - j)];
                assert!(
                    (h[(i, j)] - mirror).abs() <= 1e-13 * hmax,
                    "mirror asymmetry at ({i},{j}) for N={n}"
                );
                if i != j {
                    assert!(h[(i, j)] > 0.0, "off-diagonal must be positive");
                }
            }
        }
    }
    format!("1000 random traps, worst relative row sum {worst_row:.1e}")
}

pub fn battery_normalized_shape_fixed_n() -> String {
    let mut r = rng(19);
    let mut worst = 0.0f64;
    for n in [2usize, 3, 5, 7, 10] {
        let mut reference: Option<phononwalk::Matrix> = None;
        for _ in 0..20 {
            let config = random_config(&mut r, n);
            let chain = equilibrium_positions(&config).unwrap();
            let hm = hopping_matrix(&chain, &config).unwrap();
            let normalized = hm.normalized().unwrap();
            if let Some(reference) = &reference {
                for i in 0..n {
                    for j in 0..n {
                        let diff = (normalized[(i, j)] - reference[(i, j)]).abs();
                        assert!(
                            diff < 1e-9,
                            "normalized entry ({i},{j}) varies by {diff:e} at N={n}"
                        );
                        worst = worst.max(diff);
                    }
                }
            } else {
                reference = Some(normalized);
            }
        }
    }
    format!("5 sizes x 20 traps, worst normalized-entry spread {worst:.1e}")
}

pub fn battery_kappa_scaling_grid() -> String {
    let mut worst = 0.0f64;
    let mut reference = None;
    for i in 0..10 {
        for j in 0..10 {
            let f_y = 1.0 + 0.25 * i as f64;
            let f_z = 0.03 + 0.02 * j as f64;
            let config = TrapConfig::from_lab_units(4, 40.0, 1.1 * f_y, f_y, f_z).unwrap();
            let chain = equilibrium_positions(&config).unwrap();
            let hm = hopping_matrix(&chain, &config).unwrap();
            // kappa0 * omega_y / omega_z^2 is a pure function of N and mass.
            let invariant = hm.kappa0() * config.omega_y / (config.omega_z * config.omega_z);
            match reference {
                None => reference = Some(invariant),
                Some(reference) => {
                    let rel = (invariant / reference - 1.0).abs();
                    assert!(rel < 1e-9, "scaling law off by {rel:e} at grid ({i},{j})");
                    worst = worst.max(rel);
                }
            }
        }
    }
    format!("10x10 frequency grid, worst relative deviation {worst:.1e}")
}

pub fn battery_mode_orthonormality() -> String {
    let mut r = rng(23);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..=10);
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let basis = mode_decomposition(&hopping_matrix(&chain, &config).unwrap());
        let b = basis.vectors();
        for p in 0..n {
            for q in 0..n {
                let dot: f64 = (0..n).map(|i| b[(i, p)] * b[(i, q)]).sum();
                let target = if p == q { 1.0 } else { 0.0 };
                let diff = (dot - target).abs();
                assert!(diff < 1e-10, "mode overlap ({p},{q}) off by {diff:e}");
                worst = worst.max(diff);
            }
        }
    }
    format!("50 random traps, worst mode-overlap deviation {worst:.1e}")
}

pub fn battery_generator_row_sums() -> String {
    let mut r = rng(29);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..=10);
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let hm = hopping_matrix(&chain, &config).unwrap();
        let gen = to_walk_generator(&hm);
        let mmax = gen.m.max_abs();
        assert_eq!(gen.gamma.len(), n * (n - 1) / 2);
        for (&(a, b), &w) in &gen.gamma {
            assert!(a < b && b < n && w > 0.0);
        }
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| gen.m[(i, j)]).sum();
            assert!(row_sum.abs() <= 1e-12 * mmax, "generator row {i} sums to {row_sum:e}");
            worst = worst.max(row_sum.abs() / mmax);
        }
    }
    format!("50 random traps, worst relative generator row sum {worst:.1e}")
}

pub fn battery_propagation_invariants() -> String {
    let mut r = rng(31);
    let mut worst_unit = 0.0f64;
    for case in 0..10 {
        let n = 2 + case % 5;
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let hm = hopping_matrix(&chain, &config).unwrap();
        let basis = mode_decomposition(&hm);
        let dt = r.random_range(5e-6..200e-6);
        // Symmetric grid so every sample has its time-reversed partner.
        let times: Vec<f64> = (-16..=16).map(|k| k as f64 * dt).collect();
        let traces: Vec<_> =
            (0..n).map(|s| propagate(&basis, s, &times).unwrap()).collect();
        for (k, _) in times.iter().enumerate() {
            let k_neg = times.len() - 1 - k;
            for src in 0..n {
                let p = traces[src].populations();
                let total: f64 = (0..n).map(|m| p[(k, m)]).sum();
                worst_unit = worst_unit.max((total - 1.0).abs());
                assert!((total - 1.0).abs() < 1e-10, "population sum {total} off unity");
                for m in 0..n {
                    assert!(
                        (p[(k, m)] - traces[m].populations()[(k, src)]).abs() < 1e-12,
                        "exchange asymmetry between sites {src} and {m}"
                    );
                    let mirrored = traces[n - 1 - src].populations()[(k, n - 1 - m)];
                    assert!(
                        (p[(k, m)] - mirrored).abs() < 1e-10,
                        "mirror asymmetry between sites {src} and {m}"
                    );
                    assert!(
                        (p[(k, m)] - p[(k_neg, m)]).abs() < 1e-12,
                        "time reversal broken at site {m}"
                    );
                }
            }
        }
    }
    format!("10 random traps, worst unitarity defect {worst_unit:.1e}")
}

pub fn battery_oracle_equivalence() -> String {
    let mut r = rng(37);
    let mut worst = 0.0f64;
    for n in 2..=6 {
        for _ in 0..2 {
            let config = random_config(&mut r, n);
            let chain = equilibrium_positions(&config).unwrap();
            let hm = hopping_matrix(&chain, &config).unwrap();
            let basis = mode_decomposition(&hm);
            let source = n / 2;
            let dt = 0.004 / hm.kappa0();
            let steps = 512;
            let oracle = ode_oracle(&hm, source, steps as f64 * dt, dt).unwrap();
            let direct = propagate(&basis, source, oracle.times()).unwrap();
            for k in 0..oracle.len() {
                let mut total = 0.0;
                for m in 0..n {
                    let diff =
                        (oracle.populations()[(k, m)] - direct.populations()[(k, m)]).abs();
                    assert!(diff < 1e-8, "integrator mismatch {diff:e} at N={n}");
                    worst = worst.max(diff);
                    total += oracle.populations()[(k, m)];
                }
                assert!((total - 1.0).abs() < 1e-9, "integrator norm drift {:e}", total - 1.0);
            }
        }
    }
    format!("N in 2..=6, worst integrator vs eigenbasis gap {worst:.1e}")
}

pub fn battery_spectral_weights() -> String {
    let mut r = rng(41);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let n = r.random_range(2..=8);
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let basis = mode_decomposition(&hopping_matrix(&chain, &config).unwrap());
        let b = basis.vectors();
        for src in 0..n {
            let mut dc_total = 0.0;
            for m in 0..n {
                let fwd = analytic_spectrum(&basis, src, m).unwrap();
                let rev = analytic_spectrum(&basis, m, src).unwrap();
                dc_total += fwd.dc;
                assert_eq!(fwd.lines.len(), rev.lines.len());
                for (a, c) in fwd.lines.iter().zip(&rev.lines) {
                    assert_eq!(a.amplitude, c.amplitude, "amplitude depends on site order");
                    assert_eq!(a.freq, c.freq);
                }
            }
            assert!((dc_total - 1.0).abs() < 1e-10, "mode weights sum to {dc_total}");
            worst = worst.max((dc_total - 1.0).abs());
        }
        for q in 0..n {
            for p in 0..q {
                for src in 0..n {
                    let overlap: f64 =
                        (0..n).map(|m| b[(src, q)] * b[(m, q)] * b[(m, p)] * b[(src, p)]).sum();
                    assert!(overlap.abs() < 1e-10, "cross-mode weight {overlap:e}");
                }
            }
        }
    }
    format!("30 random traps, worst completeness defect {worst:.1e}")
}

pub fn battery_fit_identifiability() -> String {
    let config = TrapConfig::from_lab_units(4, 40.0, 3.1, 2.9, 0.09).unwrap();
    let chain = equilibrium_positions(&config).unwrap();
    let hm: HoppingMatrix = hopping_matrix(&chain, &config).unwrap();
    let basis = mode_decomposition(&hm);
    let times: Vec<f64> = (0..400).map(|k| k as f64 * 12.5e-6).collect();
    // Seeds are independent fits; the median does not care about order.
    let mut errors: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let model = MeasurementModel::new(0.66, 50e-6, 5.0, 50, seed).unwrap();
            let ds = simulate_dataset(&basis, 1, &times, &model).unwrap();
            let fit = fit_observation(&ds, &FitBounds::default(), &FitOptions::default()).unwrap();
            (fit.kappa0 / hm.kappa0() - 1.0).abs()
        })
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = errors[50];
    assert!(median < 0.005, "median hopping-rate error {median:e}");
    format!("100 seeds, median relative hopping-rate error {median:.1e}")
}

/// Sanity anchor for the batteries above: the measurement chain keeps
/// expectations inside [0,1] whatever the parameters.
pub fn battery_measurement_bounds() -> String {
    let mut r = rng(43);
    let mut basis = None;
    for _ in 0..50 {
        let n = r.random_range(2..=6);
        let config = random_config(&mut r, n);
        let chain = equilibrium_positions(&config).unwrap();
        let b = mode_decomposition(&hopping_matrix(&chain, &config).unwrap());
        let model = MeasurementModel::new(
            r.random_range(0.05..1.0),
            r.random_range(0.0..100e-6),
            r.random_range(0.0..80.0),
            25,
            r.random(),
        )
        .unwrap();
        let times: Vec<f64> = (0..64).map(|k| k as f64 * 50e-6).collect();
        let (q, _) = expected_populations(&b, 0, &times, &model).unwrap();
        for k in 0..times.len() {
            for m in 0..n {
                assert!((0.0..=1.0).contains(&q[(k, m)]), "expectation escaped [0,1]");
            }
        }
        basis = Some(b);
    }
    // Deliberately overdriven model: the offset parks the undisturbed source
    // population (one) at the last sample, where the heating background is
    // largest, so the raw expectation exceeds the clamp margin for sure.
    let basis = basis.unwrap();
    let times: Vec<f64> = (0..64).map(|k| k as f64 * 200e-6).collect();
    let hot = MeasurementModel::new(1.0, times[63], 80.0, 25, 7).unwrap();
    let (_, flagged) = expected_populations(&basis, 0, &times, &hot).unwrap();
    assert!(flagged, "overdriven model must trip the regime flag");
    "50 random measurement models clamped, overdriven model flagged".to_string()
}

pub fn hop_time_for(config: &TrapConfig) -> f64 {
    let chain = equilibrium_positions(config).unwrap();
    let hm = hopping_matrix(&chain, config).unwrap();
    max_adjacent_hopping_time(&hm).unwrap()
}
