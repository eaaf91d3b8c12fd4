//! Controller laws and closed-loop vector fields, in position space and in
//! distance-error space.
//!
//! Link vectors follow the convention `z1 = p1 - p2`, `z2 = p2 - p3` and the
//! uncontrolled side `z3 = p3 - p1`, so `z1 + z2 + z3 = 0`. Agent 2 is the only
//! agent that sees both links; biases and the rotated terms act through it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::geometry::{rot2, unit, Vec2};

/// Which closed loop drives the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerVariant {
    /// Plain gradient descent on both link potentials.
    Unbiased,
    /// Gradient descent with constant biases `mu1 = -mu2 = c` at agent 2.
    BiasedCollinear,
    /// `c (W(θ/2) ẑ1 - W(θ/2)ᵀ ẑ2)` added at agent 2.
    RotatedSplit,
    /// `W(θ) ẑ1 - ẑ2` added at agent 2 (unit gain).
    RotatedOneSided,
}

impl ControllerVariant {
    pub fn is_rotated(self) -> bool {
        matches!(self, Self::RotatedSplit | Self::RotatedOneSided)
    }
}

/// Desired shape and controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    /// Desired `‖z1‖`.
    pub d1: f64,
    /// Desired `‖z2‖`.
    pub d2: f64,
    /// Desired signed angle from `ẑ1` to `ẑ2`; zero for the collinear controllers.
    pub theta: f64,
    /// Bias gain.
    pub c: f64,
    pub variant: ControllerVariant,
}

impl FormationSpec {
    pub fn new(d1: f64, d2: f64, theta: f64, c: f64, variant: ControllerVariant) -> Result<Self> {
        let spec = Self {
            d1,
            d2,
            theta,
            c,
            variant,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unbiased(d1: f64, d2: f64) -> Result<Self> {
        Self::new(d1, d2, 0.0, 0.0, ControllerVariant::Unbiased)
    }

    /// Biased collinear controller with `mu1 = -mu2 = c`.
    pub fn biased_collinear(d1: f64, d2: f64, c: f64) -> Result<Self> {
        Self::new(d1, d2, 0.0, c, ControllerVariant::BiasedCollinear)
    }

    pub fn rotated(d1: f64, d2: f64, theta: f64, c: f64) -> Result<Self> {
        Self::new(d1, d2, theta, c, ControllerVariant::RotatedSplit)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("d1", self.d1), ("d2", self.d2)] {
            if !(d.is_finite() && d > 0.0) {
                return Err(FormationError::InvalidSpec(format!(
                    "{name} must be finite and strictly positive, got {d}"
                )));
            }
        }
        if !(self.theta.is_finite() && self.theta > -PI && self.theta < PI) {
            return Err(FormationError::InvalidSpec(format!(
                "theta must lie strictly inside (-pi, pi), got {}",
                self.theta
            )));
        }
        if !self.c.is_finite() {
            return Err(FormationError::InvalidSpec(format!(
                "c must be finite, got {}",
                self.c
            )));
        }
        if self.variant == ControllerVariant::BiasedCollinear && self.theta != 0.0 {
            return Err(FormationError::InvalidSpec(format!(
                "the biased collinear controller requires theta = 0, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// Desired length of the uncontrolled side.
    pub fn d3(&self) -> f64 {
        d3_of(self)
    }

    /// Gain actually applied by the variant (zero for the unbiased controller).
    pub fn gain(&self) -> f64 {
        match self.variant {
            ControllerVariant::Unbiased => 0.0,
            ControllerVariant::RotatedOneSided => 1.0,
            _ => self.c,
        }
    }

    pub fn desired_lengths(&self) -> [f64; 3] {
        [self.d1, self.d2, self.d3()]
    }
}

/// Positions of the three agents in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FormationState {
    pub p1: Vec2,
    pub p2: Vec2,
    pub p3: Vec2,
}

impl FormationState {
    pub fn new(p1: Vec2, p2: Vec2, p3: Vec2) -> Self {
        Self { p1, p2, p3 }
    }

    pub fn positions(&self) -> [Vec2; 3] {
        [self.p1, self.p2, self.p3]
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.p1.x, self.p1.y, self.p2.x, self.p2.y, self.p3.x, self.p3.y,
        ]
    }

    pub fn from_array(x: &[f64; 6]) -> Self {
        Self {
            p1: Vec2::new(x[0], x[1]),
            p2: Vec2::new(x[2], x[3]),
            p3: Vec2::new(x[4], x[5]),
        }
    }

    pub fn centroid(&self) -> Vec2 {
        (self.p1 + self.p2 + self.p3) * (1.0 / 3.0)
    }

    pub fn is_finite(&self) -> bool {
        self.positions().iter().all(|p| p.is_finite())
    }
}

/// Agent velocities `(u1, u2, u3)`.
pub type Velocities = [Vec2; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelVectors {
    pub z1: Vec2,
    pub z2: Vec2,
    pub z3: Vec2,
}

/// Distance errors `e_k = ‖z_k‖ - d_k` of the two controlled links and the third side.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorVec {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl ErrorVec {
    pub const ZERO: ErrorVec = ErrorVec {
        e1: 0.0,
        e2: 0.0,
        e3: 0.0,
    };

    pub fn new(e1: f64, e2: f64, e3: f64) -> Self {
        Self { e1, e2, e3 }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.e1, self.e2, self.e3]
    }

    pub fn from_array(e: &[f64; 3]) -> Self {
        Self::new(e[0], e[1], e[2])
    }

    /// Link lengths `e_k + d_k`, all of which must be strictly positive.
    pub fn link_lengths(&self, spec: &FormationSpec) -> Result<[f64; 3]> {
        let d = spec.desired_lengths();
        let e = self.to_array();
        let mut l = [0.0; 3];
        for k in 0..3 {
            l[k] = e[k] + d[k];
            if !(l[k] > 0.0) {
                return Err(FormationError::InvalidErrorVec {
                    link: k + 1,
                    length: l[k],
                });
            }
        }
        Ok(l)
    }

    pub fn max_abs(&self) -> f64 {
        self.e1.abs().max(self.e2.abs()).max(self.e3.abs())
    }
}

pub fn relative_vectors(s: &FormationState) -> RelVectors {
    RelVectors {
        z1: s.p1 - s.p2,
        z2: s.p2 - s.p3,
        z3: s.p3 - s.p1,
    }
}

/// Law of cosines for the third side: `√(d1² + d2² + 2 d1 d2 cos θ)`.
pub fn d3_of(spec: &FormationSpec) -> f64 {
    let (d1, d2) = (spec.d1, spec.d2);
    if spec.theta == 0.0 {
        return d1 + d2;
    }
    (d1 * d1 + d2 * d2 + 2.0 * d1 * d2 * spec.theta.cos())
        .max(0.0)
        .sqrt()
}

pub fn distance_errors(s: &FormationState, spec: &FormationSpec) -> ErrorVec {
    let z = relative_vectors(s);
    ErrorVec {
        e1: z.z1.norm() - spec.d1,
        e2: z.z2.norm() - spec.d2,
        e3: z.z3.norm() - spec.d3(),
    }
}

/// `Σ_k ½(‖z_k‖ - d_k)²` over the two controlled links.
pub fn shape_potential(s: &FormationState, spec: &FormationSpec) -> Result<f64> {
    let z = relative_vectors(s);
    unit(z.z1)?;
    unit(z.z2)?;
    let e1 = z.z1.norm() - spec.d1;
    let e2 = z.z2.norm() - spec.d2;
    Ok(0.5 * (e1 * e1 + e2 * e2))
}

/// Unit link directions and distance errors of the two controlled links.
#[derive(Debug, Clone, Copy)]
struct Links {
    z1: Vec2,
    z2: Vec2,
    e1: f64,
    e2: f64,
}

impl Links {
    fn of(s: &FormationState, spec: &FormationSpec) -> Result<Self> {
        let z = relative_vectors(s);
        Ok(Self {
            z1: unit(z.z1)?,
            z2: unit(z.z2)?,
            e1: z.z1.norm() - spec.d1,
            e2: z.z2.norm() - spec.d2,
        })
    }

    fn gradient_velocities(&self) -> Velocities {
        let a = self.z1 * self.e1;
        let b = self.z2 * self.e2;
        [-a, a - b, b]
    }
}

pub fn control_unbiased(s: &FormationState, spec: &FormationSpec) -> Result<Velocities> {
    Ok(Links::of(s, spec)?.gradient_velocities())
}

/// Gradient control with the constant range biases `mu1`, `mu2` seen by agent 2.
pub fn control_biased(
    s: &FormationState,
    mu1: f64,
    mu2: f64,
    spec: &FormationSpec,
) -> Result<Velocities> {
    let links = Links::of(s, spec)?;
    let mut u = links.gradient_velocities();
    u[1] += links.z1 * mu1 + links.z2 * mu2;
    Ok(u)
}

/// Rotation-matrix shape controller. `RotatedOneSided` uses `W(θ)ẑ1 - ẑ2` with unit
/// gain; every other variant is treated as the split form `c(W(θ/2)ẑ1 - W(θ/2)ᵀẑ2)`.
pub fn control_rotated(s: &FormationState, spec: &FormationSpec) -> Result<Velocities> {
    let links = Links::of(s, spec)?;
    let mut u = links.gradient_velocities();
    u[1] += match spec.variant {
        ControllerVariant::RotatedOneSided => rot2(spec.theta).apply(links.z1) - links.z2,
        _ => {
            let half = rot2(0.5 * spec.theta);
            (half.apply(links.z1) - half.transpose().apply(links.z2)) * spec.c
        }
    };
    Ok(u)
}

/// Agent velocities under the controller selected by `spec.variant`.
pub fn velocities(s: &FormationState, spec: &FormationSpec) -> Result<Velocities> {
    match spec.variant {
        ControllerVariant::Unbiased => control_unbiased(s, spec),
        ControllerVariant::BiasedCollinear => control_biased(s, spec.c, -spec.c, spec),
        ControllerVariant::RotatedSplit | ControllerVariant::RotatedOneSided => {
            control_rotated(s, spec)
        }
    }
}

// Law-of-cosines expressions for inner products of unit link vectors in terms of
// the side lengths l = (‖z1‖, ‖z2‖, ‖z3‖).

/// `ẑ1ᵀẑ2`.
pub(crate) fn cos12(l: &[f64; 3]) -> f64 {
    (l[2] * l[2] - l[0] * l[0] - l[1] * l[1]) / (2.0 * l[0] * l[1])
}

/// `ẑ3ᵀẑ1`.
pub(crate) fn cos31(l: &[f64; 3]) -> f64 {
    (l[1] * l[1] - l[0] * l[0] - l[2] * l[2]) / (2.0 * l[0] * l[2])
}

/// `ẑ3ᵀẑ2`.
pub(crate) fn cos32(l: &[f64; 3]) -> f64 {
    (l[0] * l[0] - l[1] * l[1] - l[2] * l[2]) / (2.0 * l[1] * l[2])
}

/// Unsigned inter-link angle recovered from the error coordinates, in `[0, π]`.
pub fn gamma_of_e(e: &ErrorVec, spec: &FormationSpec) -> Result<f64> {
    let l = e.link_lengths(spec)?;
    Ok(cos12(&l).clamp(-1.0, 1.0).acos())
}

/// Time derivatives of the mixed `(z, e)` closed loop of the biased collinear system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedRates {
    pub z1_dot: Vec2,
    pub z2_dot: Vec2,
    pub e1_dot: f64,
    pub e2_dot: f64,
}

pub fn error_field_mixed(z1: Vec2, z2: Vec2, e1: f64, e2: f64, c: f64) -> Result<MixedRates> {
    let (h1, h2) = (unit(z1)?, unit(z2)?);
    let dot = h1.dot(h2);
    Ok(MixedRates {
        z1_dot: h1 * (-2.0 * e1) + h2 * e2 - h1 * c + h2 * c,
        z2_dot: h2 * (-2.0 * e2) + h1 * e1 + h1 * c - h2 * c,
        e1_dot: -2.0 * e1 + dot * e2 - c + c * dot,
        e2_dot: -2.0 * e2 + dot * e1 - c + c * dot,
    })
}

fn third_side_rate(e: &ErrorVec, l: &[f64; 3]) -> f64 {
    e.e1 * cos31(l) + e.e2 * cos32(l)
}

/// Self-contained augmented error system of the biased collinear controller.
///
/// Uses `d3 = spec.d3()`, which is `d1 + d2` for `theta = 0`, and the gain
/// [`FormationSpec::gain`].
pub fn error_field_collinear(e: &ErrorVec, spec: &FormationSpec) -> Result<ErrorVec> {
    let l = e.link_lengths(spec)?;
    let c = spec.gain();
    let f = cos12(&l);
    Ok(ErrorVec {
        e1: -2.0 * e.e1 - c + (e.e2 + c) * f,
        e2: -2.0 * e.e2 - c + (e.e1 + c) * f,
        e3: third_side_rate(e, &l),
    })
}

/// Augmented error system of the split rotated controller.
///
/// The sign of the inter-link angle is not recoverable from distances, so the
/// branch is pinned to `sign(theta)` (with `sign(0) = +1`). The field is exact
/// only while the configuration's signed angle has that sign.
pub fn error_field_rotated(e: &ErrorVec, spec: &FormationSpec) -> Result<ErrorVec> {
    let l = e.link_lengths(spec)?;
    let c = spec.c;
    let half = 0.5 * spec.theta;
    let cos_gamma = cos12(&l).clamp(-1.0, 1.0);
    let gamma_s = signed_gamma(cos_gamma, spec.theta);
    let bias = -c * half.cos() + c * (gamma_s - half).cos();
    Ok(ErrorVec {
        e1: -2.0 * e.e1 + cos_gamma * e.e2 + bias,
        e2: -2.0 * e.e2 + cos_gamma * e.e1 + bias,
        e3: third_side_rate(e, &l),
    })
}

/// Augmented error system of the one-sided rotated controller (unit gain).
fn error_field_one_sided(e: &ErrorVec, spec: &FormationSpec) -> Result<ErrorVec> {
    let l = e.link_lengths(spec)?;
    let cos_gamma = cos12(&l).clamp(-1.0, 1.0);
    let gamma_s = signed_gamma(cos_gamma, spec.theta);
    Ok(ErrorVec {
        e1: -2.0 * e.e1 + cos_gamma * e.e2 - spec.theta.cos() + cos_gamma,
        e2: -2.0 * e.e2 + cos_gamma * e.e1 + (gamma_s - spec.theta).cos() - 1.0,
        e3: third_side_rate(e, &l),
    })
}

fn signed_gamma(cos_gamma: f64, theta: f64) -> f64 {
    let gamma = cos_gamma.acos();
    if theta < 0.0 {
        -gamma
    } else {
        gamma
    }
}

/// Augmented error field matching `spec.variant`.
pub fn error_field(e: &ErrorVec, spec: &FormationSpec) -> Result<ErrorVec> {
    match spec.variant {
        ControllerVariant::Unbiased | ControllerVariant::BiasedCollinear => {
            error_field_collinear(e, spec)
        }
        ControllerVariant::RotatedSplit => error_field_rotated(e, spec),
        ControllerVariant::RotatedOneSided => error_field_one_sided(e, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cross2, signed_angle, SE2Transform};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn st(p: [(f64, f64); 3]) -> FormationState {
        FormationState::new(
            Vec2::new(p[0].0, p[0].1),
            Vec2::new(p[1].0, p[1].1),
            Vec2::new(p[2].0, p[2].1),
        )
    }

    fn collinear_spec() -> FormationSpec {
        FormationSpec::biased_collinear(30.0, 10.0, 1.0).unwrap()
    }

    fn vel_close(a: &Velocities, b: &Velocities, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (*x - *y).norm() <= tol)
    }

    /// Places agents so that |z1| = d1, |z2| = d2 and the signed angle from z1 to z2 is `gamma`.
    fn shape(d1: f64, d2: f64, gamma: f64, heading: f64, origin: Vec2) -> FormationState {
        let z1 = rot2(heading).apply(Vec2::new(d1, 0.0));
        let z2 = rot2(gamma).apply(z1.unit().unwrap()) * d2;
        let p2 = origin;
        FormationState::new(p2 + z1, p2, p2 - z2)
    }

    #[test]
    fn spec_validation() {
        assert!(FormationSpec::biased_collinear(-3.0, 10.0, 1.0).is_err());
        assert!(FormationSpec::biased_collinear(30.0, 0.0, 1.0).is_err());
        assert!(FormationSpec::rotated(1.0, 1.0, PI, 0.1).is_err());
        assert!(FormationSpec::rotated(1.0, 1.0, f64::NAN, 0.1).is_err());
        assert!(
            FormationSpec::new(1.0, 1.0, 0.5, 1.0, ControllerVariant::BiasedCollinear).is_err()
        );
        assert!(FormationSpec::rotated(1.0, 1.0, -3.1, 0.1).is_ok());
    }

    #[test]
    fn relative_vectors_examples() {
        let z = relative_vectors(&st([(0.0, 0.0), (2.0, 0.0), (3.0, 1.0)]));
        assert_eq!(z.z1, Vec2::new(-2.0, 0.0));
        assert_eq!(z.z2, Vec2::new(-1.0, -1.0));
        assert_eq!(z.z3, Vec2::new(3.0, 1.0));
        assert_eq!(z.z1 + z.z2 + z.z3, Vec2::ZERO);
        let z = relative_vectors(&st([(5.0, 5.0); 3]));
        assert_eq!([z.z1, z.z2, z.z3], [Vec2::ZERO; 3]);
    }

    #[test]
    fn d3_examples() {
        let mut spec = FormationSpec::rotated(30.0, 10.0, 0.0, 0.1).unwrap();
        assert_eq!(d3_of(&spec), 40.0);
        spec.theta = PI; // formula limit, not a valid spec
        assert!((d3_of(&spec) - 20.0).abs() < 1e-12);
        spec.theta = FRAC_PI_3;
        assert!((d3_of(&spec) - 1300f64.sqrt()).abs() < 1e-12);
        assert!((d3_of(&spec) - 36.05551).abs() < 1e-5);
    }

    #[test]
    fn distance_errors_examples() {
        let e = distance_errors(
            &st([(0.0, 0.0), (30.0, 0.0), (40.0, 0.0)]),
            &collinear_spec(),
        );
        assert_eq!(e, ErrorVec::ZERO);
        let e = distance_errors(
            &st([(0.0, 0.0), (31.0, 0.0), (40.0, 0.0)]),
            &collinear_spec(),
        );
        assert_eq!(e, ErrorVec::new(1.0, -1.0, 0.0));
        let spec = FormationSpec::rotated(1.0, 1.0, FRAC_PI_3, 0.1).unwrap();
        let e = distance_errors(&shape(1.0, 1.0, FRAC_PI_3, 0.3, Vec2::new(2.0, 1.0)), &spec);
        assert!(e.max_abs() < 1e-14, "{e:?}");
    }

    #[test]
    fn shape_potential_examples() {
        let spec = collinear_spec();
        let s = st([(0.0, 0.0), (30.0, 0.0), (40.0, 0.0)]);
        assert_eq!(shape_potential(&s, &spec).unwrap(), 0.0);
        let s = st([(0.0, 0.0), (31.0, 0.0), (41.0, 0.0)]);
        assert_eq!(shape_potential(&s, &spec).unwrap(), 0.5);
        assert!(shape_potential(&st([(1.0, 1.0), (1.0, 1.0), (3.0, 0.0)]), &spec).is_err());
    }

    #[test]
    fn potential_gradient_matches_unbiased_control() {
        // Central differences of the potential, agent by agent.
        let spec = FormationSpec::unbiased(30.0, 10.0).unwrap();
        let s = st([(3.0, -4.0), (25.0, 12.0), (31.0, 30.0)]);
        let u = control_unbiased(&s, &spec).unwrap();
        let h = 1e-6;
        let x = s.to_array();
        for i in 0..6 {
            let (mut xp, mut xm) = (x, x);
            xp[i] += h;
            xm[i] -= h;
            let g = (shape_potential(&FormationState::from_array(&xp), &spec).unwrap()
                - shape_potential(&FormationState::from_array(&xm), &spec).unwrap())
                / (2.0 * h);
            let ui = if i % 2 == 0 { u[i / 2].x } else { u[i / 2].y };
            assert!((g + ui).abs() < 1e-6, "coord {i}: {g} vs {ui}");
        }
    }

    #[test]
    fn unbiased_examples() {
        let spec = collinear_spec();
        let u = control_unbiased(&st([(0.0, 0.0), (30.0, 0.0), (40.0, 0.0)]), &spec).unwrap();
        assert_eq!(u, [Vec2::ZERO; 3]);
        let spec = FormationSpec::unbiased(1.0, 10.0).unwrap();
        let u = control_unbiased(&st([(0.0, 0.0), (2.0, 0.0), (12.0, 0.0)]), &spec).unwrap();
        assert_eq!(u[0], Vec2::new(1.0, 0.0));
    }

    #[test]
    fn biased_examples() {
        let spec = collinear_spec();
        let u = control_biased(
            &st([(0.0, 0.0), (30.0, 0.0), (40.0, 0.0)]),
            1.0,
            -1.0,
            &spec,
        )
        .unwrap();
        assert_eq!(u, [Vec2::ZERO; 3]);

        let spec = FormationSpec::biased_collinear(30.0, 10.0, -1.0).unwrap();
        let s = st([(30.0 + 2.0 / 3.0, 0.0), (0.0, 0.0), (10.0 + 2.0 / 3.0, 0.0)]);
        let u = velocities(&s, &spec).unwrap();
        for ui in u {
            assert!((ui - Vec2::new(-2.0 / 3.0, 0.0)).norm() < 1e-14, "{ui:?}");
        }
    }

    #[test]
    fn rotated_reduces_to_biased_at_zero_angle() {
        let spec = FormationSpec::rotated(30.0, 10.0, 0.0, 1.0).unwrap();
        let mut k = 0u64;
        for i in 0..100 {
            k = k
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let r = |shift: u32| ((k >> shift) & 0xffff) as f64 / 655.36 - 50.0;
            let s = st([(r(0), r(16)), (r(32), r(48)), (r(8) + i as f64, r(24))]);
            let a = control_rotated(&s, &spec).unwrap();
            let b = control_biased(&s, 1.0, -1.0, &spec).unwrap();
            assert!(vel_close(&a, &b, 1e-14));
        }
    }

    #[test]
    fn rotated_is_zero_on_target_set() {
        for theta in [FRAC_PI_3, -FRAC_PI_3, 2.5, -0.1, FRAC_PI_2] {
            let spec = FormationSpec::rotated(30.0, 10.0, theta, 0.1).unwrap();
            let s = shape(30.0, 10.0, theta, 1.2, Vec2::new(-4.0, 9.0));
            let u = control_rotated(&s, &spec).unwrap();
            assert!(vel_close(&u, &[Vec2::ZERO; 3], 1e-12), "{theta}: {u:?}");
            let one =
                FormationSpec::new(30.0, 10.0, theta, 1.0, ControllerVariant::RotatedOneSided)
                    .unwrap();
            assert!(vel_close(
                &control_rotated(&s, &one).unwrap(),
                &[Vec2::ZERO; 3],
                1e-12
            ));
        }
    }

    #[test]
    fn gamma_examples() {
        let spec = FormationSpec::rotated(30.0, 10.0, FRAC_PI_3, 0.1).unwrap();
        assert!((gamma_of_e(&ErrorVec::ZERO, &spec).unwrap() - FRAC_PI_3).abs() < 1e-12);
        assert_eq!(gamma_of_e(&ErrorVec::ZERO, &collinear_spec()).unwrap(), 0.0);
        let e = ErrorVec::new(2.0 / 3.0, 2.0 / 3.0, -20.0);
        assert_eq!(gamma_of_e(&e, &collinear_spec()).unwrap(), PI);
        assert!(matches!(
            gamma_of_e(&ErrorVec::new(-30.0, 0.0, 0.0), &collinear_spec()),
            Err(FormationError::InvalidErrorVec { link: 1, .. })
        ));
    }

    #[test]
    fn mixed_field_vanishes_on_collinear_equilibria() {
        let x = Vec2::new(0.6, -0.8);
        let r = error_field_mixed(x * 30.0, x * 10.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(
            (r.z1_dot, r.z2_dot, r.e1_dot, r.e2_dot),
            (Vec2::ZERO, Vec2::ZERO, 0.0, 0.0)
        );
        let c = 1.0;
        let e = -2.0 * c / 3.0;
        let r = error_field_mixed(x * (30.0 + e), -x * (10.0 + e), e, e, c).unwrap();
        assert!(r.z1_dot.norm() < 1e-15 && r.z2_dot.norm() < 1e-15);
        assert!(r.e1_dot.abs() < 1e-15 && r.e2_dot.abs() < 1e-15);
    }

    #[test]
    fn collinear_field_examples() {
        for c in [-2.0, 0.0, 1.0, 3.0] {
            let spec = FormationSpec::biased_collinear(30.0, 10.0, c).unwrap();
            assert_eq!(
                error_field_collinear(&ErrorVec::ZERO, &spec).unwrap(),
                ErrorVec::ZERO
            );
        }
        let spec = FormationSpec::biased_collinear(30.0, 10.0, -1.0).unwrap();
        let r = error_field_collinear(&ErrorVec::new(2.0 / 3.0, 2.0 / 3.0, -20.0), &spec).unwrap();
        assert!(r.max_abs() < 1e-14, "{r:?}");
        assert!(error_field_collinear(&ErrorVec::new(0.0, -10.0, 0.0), &spec).is_err());
    }

    #[test]
    fn rotated_field_vanishes_at_zero_error() {
        for theta in [FRAC_PI_3, -FRAC_PI_3, 2.9, -2.9, 1e-3] {
            let spec = FormationSpec::rotated(30.0, 10.0, theta, 0.1).unwrap();
            let r = error_field_rotated(&ErrorVec::ZERO, &spec).unwrap();
            assert!(r.max_abs() < 1e-12, "{theta}: {r:?}");
        }
    }

    fn pseudo_states(n: usize) -> Vec<FormationState> {
        let mut k = 88172645463325252u64;
        let mut next = || {
            k ^= k << 13;
            k ^= k >> 7;
            k ^= k << 17;
            (k >> 11) as f64 / (1u64 << 53) as f64 * 100.0 - 50.0
        };
        (0..n)
            .map(|_| st([(next(), next()), (next(), next()), (next(), next())]))
            .filter(|s| {
                let z = relative_vectors(s);
                z.z1.norm() > 1.0 && z.z2.norm() > 1.0 && z.z3.norm() > 1.0
            })
            .collect()
    }

    #[test]
    fn mixed_error_rates_follow_from_link_rates() {
        for s in pseudo_states(100) {
            let spec = collinear_spec();
            let z = relative_vectors(&s);
            let e = distance_errors(&s, &spec);
            let r = error_field_mixed(z.z1, z.z2, e.e1, e.e2, spec.c).unwrap();
            assert!((r.e1_dot - z.z1.unit().unwrap().dot(r.z1_dot)).abs() < 1e-12);
            assert!((r.e2_dot - z.z2.unit().unwrap().dot(r.z2_dot)).abs() < 1e-12);
            // and the link rates are differences of the agent velocities
            let u = velocities(&s, &spec).unwrap();
            assert!((r.z1_dot - (u[0] - u[1])).norm() < 1e-12);
            assert!((r.z2_dot - (u[1] - u[2])).norm() < 1e-12);
        }
    }

    #[test]
    fn collinear_field_matches_geometric_rates() {
        for c in [1.0, -1.0, 0.3] {
            let spec = FormationSpec::biased_collinear(30.0, 10.0, c).unwrap();
            for s in pseudo_states(100) {
                let z = relative_vectors(&s);
                let e = distance_errors(&s, &spec);
                let mixed = error_field_mixed(z.z1, z.z2, e.e1, e.e2, c).unwrap();
                let (h1, h2, h3) = (
                    z.z1.unit().unwrap(),
                    z.z2.unit().unwrap(),
                    z.z3.unit().unwrap(),
                );
                let e3_dot = h3.dot(h1) * e.e1 + h3.dot(h2) * e.e2;
                let r = error_field_collinear(&e, &spec).unwrap();
                assert!((r.e1 - mixed.e1_dot).abs() < 1e-10);
                assert!((r.e2 - mixed.e2_dot).abs() < 1e-10);
                assert!((r.e3 - e3_dot).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rotated_field_matches_geometric_rates_on_its_branch() {
        for theta in [FRAC_PI_3, -FRAC_PI_3, 2.0, -2.5] {
            let spec = FormationSpec::rotated(30.0, 10.0, theta, 0.1).unwrap();
            for s in pseudo_states(100) {
                let z = relative_vectors(&s);
                if cross2(z.z1, z.z2).signum() != theta.signum() {
                    continue;
                }
                let e = distance_errors(&s, &spec);
                let u = velocities(&s, &spec).unwrap();
                let (h1, h2, h3) = (
                    z.z1.unit().unwrap(),
                    z.z2.unit().unwrap(),
                    z.z3.unit().unwrap(),
                );
                let want = [
                    h1.dot(u[0] - u[1]),
                    h2.dot(u[1] - u[2]),
                    h3.dot(u[2] - u[0]),
                ];
                let got = error_field_rotated(&e, &spec).unwrap().to_array();
                for k in 0..3 {
                    assert!(
                        (got[k] - want[k]).abs() < 1e-10,
                        "{theta} k={k}: {got:?} {want:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn one_sided_field_matches_geometric_rates_on_its_branch() {
        let theta = 1.1;
        let spec =
            FormationSpec::new(30.0, 10.0, theta, 1.0, ControllerVariant::RotatedOneSided).unwrap();
        for s in pseudo_states(100) {
            let z = relative_vectors(&s);
            if cross2(z.z1, z.z2) <= 0.0 {
                continue;
            }
            let e = distance_errors(&s, &spec);
            let u = velocities(&s, &spec).unwrap();
            let got = error_field(&e, &spec).unwrap();
            assert!((got.e1 - z.z1.unit().unwrap().dot(u[0] - u[1])).abs() < 1e-10);
            assert!((got.e2 - z.z2.unit().unwrap().dot(u[1] - u[2])).abs() < 1e-10);
        }
    }

    #[test]
    fn rotated_field_tends_to_collinear_field() {
        let rot = FormationSpec::rotated(30.0, 10.0, 0.0, 0.7).unwrap();
        let col = FormationSpec::biased_collinear(30.0, 10.0, 0.7).unwrap();
        for s in pseudo_states(100) {
            let e = distance_errors(&s, &col);
            let a = error_field_rotated(&e, &rot).unwrap().to_array();
            let b = error_field_collinear(&e, &col).unwrap().to_array();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn law_of_cosines_identity() {
        for s in pseudo_states(200) {
            let z = relative_vectors(&s);
            let l = [z.z1.norm(), z.z2.norm(), z.z3.norm()];
            let (h1, h2, h3) = (
                z.z1.unit().unwrap(),
                z.z2.unit().unwrap(),
                z.z3.unit().unwrap(),
            );
            assert!((h1.dot(h2) - cos12(&l)).abs() < 1e-12);
            assert!((h3.dot(h1) - cos31(&l)).abs() < 1e-12);
            assert!((h3.dot(h2) - cos32(&l)).abs() < 1e-12);
        }
    }

    #[test]
    fn centroid_drift() {
        for s in pseudo_states(100) {
            let spec = collinear_spec();
            let u = control_unbiased(&s, &spec).unwrap();
            assert!((u[0] + u[1] + u[2]).norm() < 1e-13);
            let (mu1, mu2) = (0.7, -1.3);
            let u = control_biased(&s, mu1, mu2, &spec).unwrap();
            let z = relative_vectors(&s);
            let drift = z.z1.unit().unwrap() * mu1 + z.z2.unit().unwrap() * mu2;
            assert!((u[0] + u[1] + u[2] - drift).norm() < 1e-12);
            // zero bias is exactly the unbiased law
            assert_eq!(
                control_biased(&s, 0.0, 0.0, &spec).unwrap(),
                control_unbiased(&s, &spec).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn controllers_are_se2_equivariant(
            angle in -PI..PI, tx in -1e3..1e3f64, ty in -1e3..1e3f64,
            idx in 0usize..50, variant in 0usize..4,
        ) {
            let states = pseudo_states(60);
            let s = states[idx % states.len()];
            let spec = match variant {
                0 => FormationSpec::unbiased(30.0, 10.0).unwrap(),
                1 => collinear_spec(),
                2 => FormationSpec::rotated(30.0, 10.0, FRAC_PI_3, 0.1).unwrap(),
                _ => FormationSpec::new(30.0, 10.0, -1.0, 1.0, ControllerVariant::RotatedOneSided).unwrap(),
            };
            let g = SE2Transform::new(angle, Vec2::new(tx, ty));
            let moved = FormationState::new(g.apply(s.p1), g.apply(s.p2), g.apply(s.p3));
            let u = velocities(&s, &spec).unwrap();
            let v = velocities(&moved, &spec).unwrap();
            for k in 0..3 {
                prop_assert!((v[k] - g.rotation.apply(u[k])).norm() <= 1e-12);
            }
            // the signed inter-link angle is invariant as well
            let z = relative_vectors(&s);
            let w = relative_vectors(&moved);
            prop_assert!((signed_angle(z.z1, z.z2).unwrap() - signed_angle(w.z1, w.z2).unwrap()).abs() < 1e-9);
        }
    }
}
