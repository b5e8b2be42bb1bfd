use cavity_forge_core::analysis::{
    collection_curve, collection_efficiency, correlation, incoherent_sum, interpolate_farfield, rotation_asymmetry,
    tolerance_sweep, FarFieldInterpolant,
};
use cavity_forge_core::geometry::{periodic_bullseye_template, ParamId};
use cavity_forge_core::gme::{GmeConfig, GmeSystem, RadiationChannel};
use num_complex::Complex64;
use proptest::prelude::*;

/// Channels on the square lattice (2π/L)(m, n) inside the light cone of `f`.
fn lattice_channels(f: f64, step: f64, intensity: impl Fn(f64, f64) -> f64) -> Vec<RadiationChannel> {
    let n = (f / step).floor() as i32;
    let mut out = Vec::new();
    for m in -n..=n {
        for k in -n..=n {
            let (kx, ky) = (m as f64 * step, k as f64 * step);
            let s = kx.hypot(ky) / f;
            if s > 1.0 {
                continue;
            }
            let i = intensity(kx / f, ky / f);
            out.push(RadiationChannel {
                k_parallel: [kx, ky],
                theta: s.asin(),
                phi: ky.atan2(kx),
                amp_s: Complex64::new(i.sqrt() * 0.6, 0.0),
                amp_p: Complex64::new(0.0, i.sqrt() * 0.8),
            });
        }
    }
    out
}

#[test]
fn interpolant_reproduces_nodes() {
    let ch = lattice_channels(1.09, 0.125, |x, y| (-(x * x + 2.0 * y * y) / 0.3).exp() + 0.1 * (x + 1.0));
    let interp = FarFieldInterpolant::new(&ch).unwrap();
    for c in &ch {
        let s = c.theta.sin();
        let v = interp.eval(s * c.phi.cos(), s * c.phi.sin());
        assert!((v - c.intensity()).abs() < 1e-6, "{v} vs {}", c.intensity());
    }
}

#[test]
fn constant_intensity_gives_constant_grid() {
    let ch = lattice_channels(1.09, 0.125, |_, _| 0.37);
    let grid = interpolate_farfield(&ch, 61).unwrap();
    let hull = ch.iter().map(|c| c.theta.sin()).fold(0.0, f64::max);
    for iy in 0..61 {
        for ix in 0..61 {
            let (x, y) = (grid.coordinate(ix), grid.coordinate(iy));
            match grid.get(ix, iy) {
                Some(v) if x.hypot(y) < 0.9 * hull => assert!((v - 1.0).abs() < 1e-9, "({x}, {y}): {v}"),
                Some(v) => assert!((0.0..=1.0).contains(&v)),
                None => assert!(x * x + y * y > 1.0),
            }
        }
    }
}

#[test]
fn grid_is_peak_normalized() {
    let ch = lattice_channels(1.09, 0.125, |x, y| 2.5 + x * y + (3.0 * x).sin());
    let grid = interpolate_farfield(&ch, 101).unwrap();
    let vals: Vec<f64> = grid.values.iter().flatten().copied().collect();
    assert_eq!(vals.iter().copied().fold(0.0, f64::max), 1.0);
    assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn too_few_channels_fail() {
    let ch = lattice_channels(0.1, 0.125, |_, _| 1.0);
    assert!(ch.len() < 3);
    assert!(interpolate_farfield(&ch, 11).is_err());
}

#[test]
fn collection_edge_values() {
    let ch = lattice_channels(1.09, 0.125, |x, y| 1.0 + x + 0.5 * y * y);
    assert_eq!(collection_efficiency(&ch, 1.0).unwrap(), 1.0);
    let total: f64 = ch.iter().map(|c| c.intensity()).sum();
    let normal: f64 = ch.iter().filter(|c| c.theta == 0.0).map(|c| c.intensity()).sum();
    assert!((collection_efficiency(&ch, 0.0).unwrap() - normal / total).abs() < 1e-15);
    let off_axis: Vec<RadiationChannel> = ch.iter().filter(|c| c.theta > 0.0).cloned().collect();
    let curve = collection_curve(&off_axis, &[0.0, 1.0]).unwrap();
    assert_eq!(curve, vec![(0.0, 0.0), (1.0, 1.0)]);
    assert!(collection_efficiency(&ch, 1.5).is_err());
    assert!(collection_curve(&ch, &[0.5, 0.2]).is_err());
}

#[test]
fn correlation_values() {
    assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((correlation(&[1.0, 2.0, 3.0], &[3.0, 1.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!(correlation(&[1.0, 1.0], &[1.0, 2.0]).is_none());
}

#[test]
fn incoherent_sum_adds_intensities() {
    let a = lattice_channels(1.09, 0.25, |x, _| 1.0 + x);
    let b = lattice_channels(1.09, 0.25, |_, y| 2.0 - y);
    let s = incoherent_sum(&a, &b);
    assert_eq!(s.len(), a.len());
    for ((ca, cb), cs) in a.iter().zip(&b).zip(&s) {
        assert!((cs.intensity() - ca.intensity() - cb.intensity()).abs() < 1e-12);
    }
}

#[test]
fn dipole_pair_far_field_has_fourfold_symmetry() {
    let g = periodic_bullseye_template();
    let cfg = GmeConfig::default().with_gmax(4.5);
    let (x, y) = GmeSystem::new(&g, &cfg).unwrap().dipole_pair(&g, cfg.mode_window).unwrap();
    let grid = interpolate_farfield(&incoherent_sum(&x.channels, &y.channels), 101).unwrap();
    let asym = rotation_asymmetry(&grid);
    assert!(asym < 0.02, "asymmetry {asym}");
}

#[test]
fn collection_of_solved_mode_is_monotone() {
    let g = periodic_bullseye_template();
    let cfg = GmeConfig::default().with_gmax(4.5);
    let mode = GmeSystem::new(&g, &cfg).unwrap().fundamental_mode(&g, cfg.mode_window).unwrap();
    let na: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let curve = collection_curve(&mode.channels, &na).unwrap();
    assert!(curve.windows(2).all(|w| w[1].1 >= w[0].1));
    assert_eq!(curve.last().unwrap().1, 1.0);
}

#[test]
fn tolerance_sweep_is_per_cell() {
    let g = periodic_bullseye_template();
    let cfg = GmeConfig::default().with_gmax(3.5);
    let params = [ParamId::RingWidth(1), ParamId::DiskRadius];
    let deltas = [-2.0, 0.0, 3.0];
    let a = tolerance_sweep(&g, &params, &deltas, &cfg, 0.68, 1).unwrap();
    assert_eq!(a.cells.len(), 6);
    for c in a.cells.iter().filter(|c| c.delta_nm == 0.0) {
        assert_eq!(c.result.as_ref().unwrap(), &a.baseline);
    }
    assert_eq!(a.baseline.q_normalized, 1.0);

    let rev_params = [ParamId::DiskRadius, ParamId::RingWidth(1)];
    let rev_deltas = [3.0, 0.0, -2.0];
    let b = tolerance_sweep(&g, &rev_params, &rev_deltas, &cfg, 0.68, 2).unwrap();
    assert_eq!(a.baseline, b.baseline);
    for c in &a.cells {
        let other = b.cells.iter().find(|o| o.param == c.param && o.delta_nm == c.delta_nm).unwrap();
        assert_eq!(c.result, other.result);
    }
}

#[test]
fn tolerance_sweep_records_invalid_cells() {
    let g = periodic_bullseye_template();
    let cfg = GmeConfig::default().with_gmax(3.5);
    let report = tolerance_sweep(&g, &[ParamId::RingWidth(1)], &[-80.0, 0.0], &cfg, 0.68, 1).unwrap();
    assert!(report.cells[0].result.is_err());
    assert!(report.cells[1].result.is_ok());
    assert!(tolerance_sweep(&g, &[ParamId::RingWidth(1)], &[0.0], &cfg, 1.2, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn collection_is_cumulative(weights in prop::collection::vec(0.0f64..1.0, 49), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let ch = lattice_channels(1.0, 0.3, |x, y| {
            let i = (((x + 1.0) * 3.0) as usize * 7 + ((y + 1.0) * 3.0) as usize) % 49;
            weights[i] + 1e-3
        });
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(collection_efficiency(&ch, lo).unwrap() <= collection_efficiency(&ch, hi).unwrap());
        prop_assert_eq!(collection_efficiency(&ch, 1.0).unwrap(), 1.0);
    }
}
