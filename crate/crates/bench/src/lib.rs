//! Fixtures shared by the benchmarks in `benches/`.

use std::f64::consts::FRAC_PI_3;

use triflex_core::analysis::jacobian_rotated;
use triflex_core::{FormationSpec, InitialCondition, Matrix3, Scenario};

pub fn fig2_scenario() -> Scenario {
    let spec = FormationSpec::biased_collinear(30.0, 10.0, 1.0).expect("valid");
    Scenario::new(spec, InitialCondition::Random { spread: 100.0 }).with_seed(1)
}

pub fn triangle_spec() -> FormationSpec {
    FormationSpec::rotated(30.0, 10.0, FRAC_PI_3, 0.1).expect("valid")
}

/// Rotated Jacobians over the (-π, π) grid with step π/36, c = 0.01.
pub fn sweep_jacobians() -> Vec<Matrix3> {
    (-35..=35)
        .map(|k| {
            jacobian_rotated(30.0, 10.0, k as f64 * std::f64::consts::PI / 36.0, 0.01)
                .expect("valid")
        })
        .collect()
}
