use kramers_core::constants::MU_B_OVER_H;
use kramers_core::powder::{branch_extent, edfs, field_grid, EdfsParams, GGroup, Site, CONVERGENCE_TOL};
use kramers_core::spin::{resonance_fields, ResonanceSearch};
use kramers_core::{OrientationSet, Rotation3, SpinSystem, Tensor, Vector3};
use proptest::prelude::*;

const F: f64 = 5.67e9;

fn zeeman_site(g: [f64; 3]) -> Vec<Site> {
    vec![Site {
        label: "z".into(),
        fraction: 1.0,
        system: SpinSystem::zeeman_only(Tensor::diagonal(g)),
    }]
}

fn er167() -> SpinSystem {
    SpinSystem::new(
        0.5,
        3.5,
        Tensor::diagonal([12.2, 4.78, 1.64]),
        Tensor::diagonal([1.27e9, 0.50e9, 0.132e9]),
        Tensor::diagonal([-8e6, -4e6, 12e6]),
        -0.1618,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zeeman_powder_vanishes_outside_extreme_fields(
        g in [1.2..13.0f64, 1.2..13.0f64, 1.2..13.0f64],
    ) {
        let fields = field_grid(0.02, 0.40, 761).unwrap();
        let params = EdfsParams::new(F, 2e6);
        let s = edfs(&zeeman_site(g), &fields, &OrientationSet::grid(600).unwrap(), &params).unwrap();
        let g_max = g.iter().cloned().fold(0.0, f64::max);
        let g_min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let cell = fields[1] - fields[0];
        let lo = (F - params.bandwidth) / (g_max * MU_B_OVER_H) - cell;
        let hi = (F + params.bandwidth) / (g_min * MU_B_OVER_H) + cell;
        let (a, b) = s.support().unwrap();
        prop_assert!(a >= lo && b <= hi, "support [{a}, {b}] outside [{lo}, {hi}]");
    }
}

#[test]
fn doubling_orientations_converges() {
    let fields = field_grid(0.02, 0.30, 561).unwrap();
    let params = EdfsParams::new(F, EdfsParams::bandwidth_for_pulse(20e-9));
    let sites = zeeman_site([12.2, 4.78, 1.64]);
    let a = edfs(&sites, &fields, &OrientationSet::grid(4000).unwrap(), &params).unwrap();
    let b = edfs(&sites, &fields, &OrientationSet::grid(8000).unwrap(), &params).unwrap();
    let d = a.max_abs_difference(&b);
    assert!(d < CONVERGENCE_TOL, "difference {d}");
}

#[test]
fn global_rotation_changes_spectrum_within_sampling_error() {
    let fields = field_grid(0.02, 0.30, 561).unwrap();
    let params = EdfsParams::new(F, EdfsParams::bandwidth_for_pulse(20e-9));
    let sites = zeeman_site([12.2, 4.78, 1.64]);
    let rot = Rotation3::from_euler_angles(0.4, 1.1, -0.7);
    let run = |set: &OrientationSet| edfs(&sites, &fields, set, &params).unwrap();

    let grid = OrientationSet::grid(8000).unwrap();
    let d = run(&grid).max_abs_difference(&run(&grid.rotated(&rot)));
    assert!(d < CONVERGENCE_TOL, "grid difference {d}");

    // quasi-random sets are noisier; compare against the spread between seeds
    let a = run(&OrientationSet::quasi_random(8000, 7).unwrap());
    let b = run(&OrientationSet::quasi_random(8000, 8).unwrap());
    let rotated = run(&OrientationSet::quasi_random(8000, 7).unwrap().rotated(&rot));
    let sampling = a.max_abs_difference(&b);
    let d = a.max_abs_difference(&rotated);
    assert!(d < 1.5 * sampling, "rotation {d} vs seed spread {sampling}");
}

#[test]
fn isotropic_branch_is_a_point() {
    let sys = SpinSystem::zeeman_only(Tensor::isotropic(2.0));
    let (lo, hi) = branch_extent(
        &sys,
        F,
        &GGroup::new("g2", 1.9, 2.1),
        &OrientationSet::grid(50).unwrap(),
        (0.05, 0.4),
    )
    .unwrap();
    let b0 = F / (2.0 * MU_B_OVER_H);
    assert!((lo - b0).abs() < 1e-9 && (hi - b0).abs() < 1e-9, "{lo} {hi}");
}

// Hyperfine splitting of the lowest-g transitions stretches them far past
// the Zeeman-only turning point into a resolved high-field tail.
#[test]
fn hyperfine_long_tail() {
    let sys = er167();
    let zeeman_edge = F / (1.64 * MU_B_OVER_H);
    let along_z = resonance_fields(&sys, &Vector3::z(), &ResonanceSearch::new(F, 0.1, 0.35).samples(400)).unwrap();
    let strong: Vec<f64> = along_z.iter().filter(|r| r.drive_strength > 0.3).map(|r| r.field).collect();
    let lo = strong.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = strong.iter().cloned().fold(0.0, f64::max);
    assert!(hi > zeeman_edge + 0.01, "tail ends at {hi} T");
    assert!(hi - lo > 0.08, "branch spans only [{lo}, {hi}] T");

    let (_, b_max) = branch_extent(
        &sys,
        F,
        &GGroup::new("1.64", 1.4, 2.6),
        &OrientationSet::grid(100).unwrap(),
        (0.02, 0.35),
    )
    .unwrap();
    let zeeman_max = branch_extent(
        &SpinSystem::zeeman_only(Tensor::diagonal([12.2, 4.78, 1.64])),
        F,
        &GGroup::new("1.64", 1.4, 2.6),
        &OrientationSet::grid(100).unwrap(),
        (0.02, 0.35),
    )
    .unwrap()
    .1;
    assert!(zeeman_max <= zeeman_edge * (1.0 + 1e-9));
    assert!(b_max > zeeman_edge + 0.005, "powder tail ends at {b_max} T");
}
