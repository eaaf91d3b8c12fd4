//! Planar vectors, rotations and rigid transforms.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};

/// Norm at or below which a vector is treated as degenerate (coincident agents).
pub const DEGENERACY_EPS: f64 = 1e-9;

/// A point or displacement in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the direction of `self`.
    pub fn unit(self) -> Result<Vec2> {
        unit(self)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// `v / ‖v‖`, rejecting vectors with norm at or below [`DEGENERACY_EPS`].
pub fn unit(v: Vec2) -> Result<Vec2> {
    let n = v.norm();
    if !(n > DEGENERACY_EPS) {
        return Err(FormationError::DegenerateVector {
            norm: n,
            threshold: DEGENERACY_EPS,
        });
    }
    Ok(Vec2::new(v.x / n, v.y / n))
}

/// 2D cross product `u_x v_y - u_y v_x`.
pub fn cross2(u: Vec2, v: Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Counterclockwise angle carrying the direction of `u` onto the direction of `v`,
/// wrapped to `(-π, π]`.
pub fn signed_angle(u: Vec2, v: Vec2) -> Result<f64> {
    let (u, v) = (unit(u)?, unit(v)?);
    Ok(wrap_angle(cross2(u, v).atan2(u.dot(v))))
}

/// Wraps any finite angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard the round-off case landing on -π.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// A planar rotation, stored as `(cos θ, sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot2 {
    cos: f64,
    sin: f64,
}

impl Rot2 {
    pub const IDENTITY: Rot2 = Rot2 { cos: 1.0, sin: 0.0 };

    pub fn new(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self { cos, sin }
    }

    /// Row-major entries `[[cos, -sin], [sin, cos]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.cos, -self.sin], [self.sin, self.cos]]
    }

    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn transpose(&self) -> Rot2 {
        Rot2 {
            cos: self.cos,
            sin: -self.sin,
        }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.cos * v.x - self.sin * v.y,
            self.sin * v.x + self.cos * v.y,
        )
    }

    pub fn determinant(&self) -> f64 {
        self.cos * self.cos + self.sin * self.sin
    }
}

impl Mul for Rot2 {
    type Output = Rot2;
    fn mul(self, rhs: Rot2) -> Rot2 {
        Rot2 {
            cos: self.cos * rhs.cos - self.sin * rhs.sin,
            sin: self.sin * rhs.cos + self.cos * rhs.sin,
        }
    }
}

impl Mul<Vec2> for Rot2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.apply(v)
    }
}

/// The rotation matrix `W(θ)`.
pub fn rot2(theta: f64) -> Rot2 {
    Rot2::new(theta)
}

/// Rigid motion `p ↦ R p + τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SE2Transform {
    pub rotation: Rot2,
    pub translation: Vec2,
}

impl SE2Transform {
    pub const IDENTITY: SE2Transform = SE2Transform {
        rotation: Rot2::IDENTITY,
        translation: Vec2::ZERO,
    };

    pub fn new(angle: f64, translation: Vec2) -> Self {
        Self {
            rotation: Rot2::new(angle),
            translation,
        }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.rotation.apply(p) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SE2Transform) -> SE2Transform {
        SE2Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(other.translation) + self.translation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_mat_close(a: [[f64; 2]; 2], b: [[f64; 2]; 2], tol: f64) {
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - b[i][j]).abs() <= tol, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn rot2_examples() {
        assert_eq!(rot2(0.0).matrix(), [[1.0, -0.0], [0.0, 1.0]]);
        assert_mat_close(rot2(FRAC_PI_2).matrix(), [[0.0, -1.0], [1.0, 0.0]], 1e-16);
        assert_mat_close((rot2(0.3) * rot2(0.5)).matrix(), rot2(0.8).matrix(), 1e-14);
    }

    #[test]
    fn rot2_is_orthogonal() {
        for k in 0..100 {
            let r = rot2(-7.0 + 0.137 * k as f64).matrix();
            let rtr = [
                [
                    r[0][0] * r[0][0] + r[1][0] * r[1][0],
                    r[0][0] * r[0][1] + r[1][0] * r[1][1],
                ],
                [
                    r[0][1] * r[0][0] + r[1][1] * r[1][0],
                    r[0][1] * r[0][1] + r[1][1] * r[1][1],
                ],
            ];
            assert_mat_close(rtr, [[1.0, 0.0], [0.0, 1.0]], 1e-12);
        }
    }

    #[test]
    fn unit_examples() {
        let u = unit(Vec2::new(3.0, 4.0)).unwrap();
        assert!((u.x - 0.6).abs() < 1e-15 && (u.y - 0.8).abs() < 1e-15);
        assert!(matches!(
            unit(Vec2::ZERO),
            Err(FormationError::DegenerateVector { .. })
        ));
        assert_eq!(unit(Vec2::new(-2.0, 0.0)).unwrap(), Vec2::new(-1.0, 0.0));
        assert!(unit(Vec2::new(5e-10, 0.0)).is_err());
        assert!(unit(Vec2::new(f64::NAN, 1.0)).is_err());
    }

    #[test]
    fn signed_angle_examples() {
        let a = signed_angle(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)).unwrap();
        assert!((a - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(
            signed_angle(Vec2::new(2.0, 3.0), Vec2::new(2.0, 3.0)).unwrap(),
            0.0
        );
        let b = signed_angle(Vec2::new(1.0, 0.0), Vec2::new(0.0, -1.0)).unwrap();
        assert!((b + FRAC_PI_2).abs() < 1e-15);
        // exactly opposite wraps to +π, whichever side the zero lands on
        assert_eq!(
            signed_angle(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)).unwrap(),
            PI
        );
        assert_eq!(
            signed_angle(Vec2::new(1.0, 0.0), Vec2::new(-1.0, -0.0)).unwrap(),
            PI
        );
        assert!(signed_angle(Vec2::ZERO, Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn cross2_examples() {
        assert_eq!(cross2(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)), 1.0);
        assert_eq!(cross2(Vec2::new(2.0, 2.0), Vec2::new(3.0, 3.0)), 0.0);
        assert_eq!(cross2(Vec2::new(1.0, 0.0), Vec2::new(0.0, -4.0)), -4.0);
    }

    #[test]
    fn se2_identity_and_composition() {
        let p = Vec2::new(1.5, -2.0);
        assert_eq!(SE2Transform::IDENTITY.apply(p), p);
        let g = SE2Transform::new(0.4, Vec2::new(1.0, 2.0));
        let h = SE2Transform::new(-1.1, Vec2::new(-3.0, 0.5));
        let k = SE2Transform::new(2.0, Vec2::new(0.0, 7.0));
        let lhs = g.compose(&h).compose(&k).apply(p);
        let rhs = g.compose(&h.compose(&k)).apply(p);
        assert!((lhs - rhs).norm() < 1e-12);
        assert!((g.compose(&h).apply(p) - g.apply(h.apply(p))).norm() < 1e-12);
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec2> {
        (-1e3..1e3f64, -1e3..1e3f64)
            .prop_map(|(x, y)| Vec2::new(x, y))
            .prop_filter("non-degenerate", |v| v.norm() > 1e-6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn unit_has_unit_norm(v in nonzero_vec()) {
            prop_assert!((unit(v).unwrap().norm() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn signed_angle_is_antisymmetric(u in nonzero_vec(), v in nonzero_vec()) {
            let a = signed_angle(u, v).unwrap();
            let b = signed_angle(v, u).unwrap();
            prop_assert!(a > -PI && a <= PI);
            if a != PI {
                prop_assert!((a + b).abs() <= 1e-12);
            }
        }

        #[test]
        fn signed_angle_rotates_u_onto_v(u in nonzero_vec(), v in nonzero_vec()) {
            let a = signed_angle(u, v).unwrap();
            let w = rot2(a).apply(unit(u).unwrap());
            prop_assert!((w - unit(v).unwrap()).norm() <= 1e-12);
        }

        #[test]
        fn cross_of_units_is_sine_of_angle(u in nonzero_vec(), v in nonzero_vec()) {
            let s = cross2(unit(u).unwrap(), unit(v).unwrap());
            prop_assert!((s - signed_angle(u, v).unwrap().sin()).abs() <= 1e-12);
        }

        #[test]
        fn rotations_compose_additively(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let lhs = (rot2(a) * rot2(b)).matrix();
            let rhs = rot2(a + b).matrix();
            for i in 0..2 { for j in 0..2 {
                prop_assert!((lhs[i][j] - rhs[i][j]).abs() <= 1e-13);
            }}
        }
    }
}
