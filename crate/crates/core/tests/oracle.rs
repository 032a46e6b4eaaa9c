//! Finite-difference oracle at its default resolution.

use resample_pinn::fdsolver::{self, DiffusionProbe, FdConfig};
use resample_pinn::pde::{inlet_value, DomainSpec, InletPulseSpec, MediumProperties};

#[test]
fn default_solution_stays_within_data_bounds() {
    let (props, domain, inlet) = (MediumProperties::default(), DomainSpec::default(), InletPulseSpec::default());
    let sol = fdsolver::solve(&props, &domain, &inlet, &FdConfig::default()).unwrap();
    assert!(!sol.peclet_warning);
    let hi = sol.times.iter().map(|&t| inlet_value(&inlet, t)).fold(0.0, f64::max);
    let (min, max) = sol
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!("min {min:e} max {max} inlet max {hi}");
    assert!(min >= -1e-9, "undershoot {min:e}");
    assert!(max <= hi + 1e-9, "overshoot {:e}", max - hi);
}

#[test]
fn probe_at_default_resolution() {
    let err = DiffusionProbe::default().relative_error(&FdConfig::default()).unwrap();
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn coarse_grids_still_converge_at_second_order() {
    let report = DiffusionProbe::default().convergence(20, 20, 4).unwrap();
    assert!(report.errors[0].1 > 1e-3);
    assert!(report.within(1.7, 2.3), "{:?}", report.orders);
}
