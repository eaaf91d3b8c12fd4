//! Linearizations of the augmented error systems, a closed-form 3×3 eigensolver,
//! Hurwitz verdicts and equilibrium classification.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    distance_errors, error_field_collinear, relative_vectors, velocities, ErrorVec, FormationSpec,
    FormationState,
};
use crate::error::{FormationError, Result};
use crate::geometry::{rot2, unit, Vec2};

/// Default tolerance for [`classify_equilibrium`].
pub const CLASSIFY_TOL: f64 = 1e-6;

/// Dense 3×3 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Matrix3(pub [[f64; 3]; 3]);

impl Matrix3 {
    pub const ZERO: Matrix3 = Matrix3([[0.0; 3]; 3]);

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = Self::ZERO;
        for (i, x) in d.into_iter().enumerate() {
            m.0[i][i] = x;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Sum of the three principal 2×2 minors.
    pub fn principal_minor_sum(&self) -> f64 {
        let m = &self.0;
        (m[0][0] * m[1][1] - m[0][1] * m[1][0])
            + (m[0][0] * m[2][2] - m[0][2] * m[2][0])
            + (m[1][1] * m[2][2] - m[1][2] * m[2][1])
    }

    /// Monic characteristic polynomial `λ³ + c2 λ² + c1 λ + c0` of `det(λI - M)`,
    /// returned as `[c2, c1, c0]`.
    pub fn characteristic(&self) -> [f64; 3] {
        [
            -self.trace(),
            self.principal_minor_sum(),
            -self.determinant(),
        ]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn scale(&self, k: f64) -> Matrix3 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|x| *x *= k);
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Matrix3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

/// Three eigenvalues, sorted by real part then imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple(pub [Complex64; 3]);

impl EigenTriple {
    pub fn new(mut values: [Complex64; 3]) -> Self {
        values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Self(values)
    }

    pub fn from_real(values: [f64; 3]) -> Self {
        Self::new(values.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn max_real(&self) -> f64 {
        self.0
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The eigenvalue whose real part is closest to zero.
    pub fn closest_to_zero(&self) -> Complex64 {
        *self
            .0
            .iter()
            .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
            .expect("three eigenvalues")
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    /// Largest distance between matched eigenvalues (both sets sorted the same way).
    pub fn max_deviation(&self, other: &EigenTriple) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn eval_cubic(coef: &[f64; 3], x: f64) -> (f64, f64) {
    let [c2, c1, c0] = *coef;
    let p = ((x + c2) * x + c1) * x + c0;
    let dp = (3.0 * x + 2.0 * c2) * x + c1;
    (p, dp)
}

fn eval_cubic_c(coef: &[f64; 3], x: Complex64) -> (Complex64, Complex64) {
    let [c2, c1, c0] = *coef;
    let p = ((x + c2) * x + c1) * x + c0;
    let dp = (x * 3.0 + 2.0 * c2) * x + c1;
    (p, dp)
}

/// Newton refinement that only accepts steps that shrink the residual.
fn polish_real(coef: &[f64; 3], mut x: f64) -> f64 {
    let (mut p, mut dp) = eval_cubic(coef, x);
    for _ in 0..4 {
        if p == 0.0 || dp == 0.0 || !dp.is_finite() {
            break;
        }
        let y = x - p / dp;
        let (q, dq) = eval_cubic(coef, y);
        if !(q.abs() < p.abs()) {
            break;
        }
        (x, p, dp) = (y, q, dq);
    }
    x
}

fn polish_complex(coef: &[f64; 3], mut z: Complex64) -> Complex64 {
    let (mut p, mut dp) = eval_cubic_c(coef, z);
    for _ in 0..4 {
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let w = z - p / dp;
        let (q, dq) = eval_cubic_c(coef, w);
        if !(q.norm() < p.norm()) {
            break;
        }
        (z, p, dp) = (w, q, dq);
    }
    z
}

/// Roots of `x² + b x + c`, computed without cancellation.
fn quadratic_roots(b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            [Complex64::new(0.0, 0.0); 2]
        } else {
            [Complex64::new(q, 0.0), Complex64::new(c / q, 0.0)]
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(-0.5 * b, im), Complex64::new(-0.5 * b, -im)]
    }
}

/// Given one real root, deflate and solve the remaining quadratic.
fn deflate(coef: &[f64; 3], root: f64) -> [Complex64; 3] {
    let b1 = coef[0] + root;
    let b0 = coef[1] + root * b1;
    let [q1, q2] = quadratic_roots(b1, b0);
    let refine = |z: Complex64| {
        if z.im == 0.0 {
            Complex64::new(polish_real(coef, z.re), 0.0)
        } else {
            let w = polish_complex(coef, z);
            // keep the pair exactly conjugate
            Complex64::new(w.re, w.im.abs() * z.im.signum())
        }
    };
    let (r1, r2) = (refine(q1), refine(q2));
    let r2 = if r1.im != 0.0 { r1.conj() } else { r2 };
    [Complex64::new(root, 0.0), r1, r2]
}

/// Closed-form roots of the monic cubic (trigonometric or Cardano form).
fn analytic_cubic(coef: &[f64; 3]) -> Option<[Complex64; 3]> {
    let [c2, c1, c0] = *coef;
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (0.5 * q).powi(2) + (p / 3.0).powi(3);
    if !disc.is_finite() {
        return None;
    }
    if disc <= 0.0 && p < 0.0 {
        let r = (-p / 3.0).sqrt();
        let phi = (-0.5 * q / (r * r * r)).clamp(-1.0, 1.0).acos() / 3.0;
        let roots = [0.0, 1.0, 2.0]
            .map(|k| 2.0 * r * (phi - 2.0 * PI * k / 3.0).cos() - shift)
            .map(|x| Complex64::new(polish_real(coef, x), 0.0));
        Some(roots)
    } else {
        let s = disc.max(0.0).sqrt();
        let a = -(0.5 * q).signum() * (0.5 * q.abs() + s).cbrt();
        let b = if a != 0.0 { -p / (3.0 * a) } else { 0.0 };
        let real = polish_real(coef, a + b - shift);
        Some(deflate(coef, real))
    }
}

/// A real root bracketed by bisection inside the Cauchy bound.
fn bisect_real_root(coef: &[f64; 3]) -> f64 {
    let bound = 1.0 + coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval_cubic(coef, mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    polish_real(coef, 0.5 * (lo + hi))
}

fn residual(coef: &[f64; 3], z: Complex64) -> f64 {
    eval_cubic_c(coef, z).0.norm()
}

/// Eigenvalues of a real 3×3 matrix as the roots of its characteristic polynomial.
pub fn eig3(m: &Matrix3) -> EigenTriple {
    let coef = m.characteristic();
    if coef[2] == 0.0 {
        return EigenTriple::new(deflate(&coef, 0.0));
    }
    let tol = 1e-10 * (1.0 + m.norm().powi(3));
    let roots = analytic_cubic(&coef)
        .filter(|r| r.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .filter(|r| r.iter().all(|z| residual(&coef, *z) <= tol));
    EigenTriple::new(roots.unwrap_or_else(|| deflate(&coef, bisect_real_root(&coef))))
}

/// Outcome of a Hurwitz test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub jacobian: Matrix3,
    pub eigenvalues: EigenTriple,
    pub hurwitz: bool,
    /// Most positive real part among the eigenvalues.
    pub max_real_part: f64,
    /// Distance from the imaginary axis that was required.
    pub required_margin: f64,
    pub params: Option<FormationSpec>,
}

/// `hurwitz` holds when every eigenvalue has real part below `-margin`.
pub fn is_hurwitz(m: &Matrix3, margin: f64) -> StabilityReport {
    let eigenvalues = eig3(m);
    let max_real_part = eigenvalues.max_real();
    StabilityReport {
        jacobian: *m,
        eigenvalues,
        hurwitz: max_real_part < -margin,
        max_real_part,
        required_margin: margin,
        params: None,
    }
}

fn check_lengths(d1: f64, d2: f64) -> Result<()> {
    if d1.is_finite() && d2.is_finite() && d1 > 0.0 && d2 > 0.0 {
        Ok(())
    } else {
        Err(FormationError::PreconditionViolated(format!(
            "desired distances must be positive, got d1={d1}, d2={d2}"
        )))
    }
}

/// `(d1 + d2) / (d1 d2)`.
pub fn collinear_a(d1: f64, d2: f64) -> f64 {
    (d1 + d2) / (d1 * d2)
}

/// Jacobian of the collinear augmented error system at `e = 0`.
pub fn jacobian_collinear(d1: f64, d2: f64, c: f64) -> Matrix3 {
    let ca = c * collinear_a(d1, d2);
    Matrix3([
        [-2.0 - ca, 1.0 - ca, ca],
        [1.0 - ca, -2.0 - ca, ca],
        [-1.0, -1.0, 0.0],
    ])
}

/// Closed-form spectrum `{-1, -3, -2ca}` of [`jacobian_collinear`].
pub fn collinear_eigenvalues(d1: f64, d2: f64, c: f64) -> EigenTriple {
    EigenTriple::from_real([-1.0, -3.0, -2.0 * c * collinear_a(d1, d2)])
}

/// Choice of the constant angle `α` in `ẑ2ᵀ W(α) ẑ1 = cos(γ - α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    /// `α = θ/2`, the choice made by the split rotated controller.
    HalfTheta,
    Fixed(f64),
}

impl From<f64> for Alpha {
    fn from(a: f64) -> Self {
        Alpha::Fixed(a)
    }
}

/// Partial derivatives `(a1, a2, a3)` of `cos(γ(e) - α)` at `e = 0`.
pub fn partials_a(d1: f64, d2: f64, theta: f64, alpha: Alpha) -> Result<(f64, f64, f64)> {
    check_lengths(d1, d2)?;
    if !(theta > -PI && theta < PI) {
        return Err(FormationError::SingularAngle(format!(
            "theta must lie inside (-pi, pi), got {theta}"
        )));
    }
    // sin(θ - α) / sin θ
    let ratio = match alpha {
        // sin(θ/2)/sin θ = 1/(2 cos(θ/2)): no singularity at θ = 0
        Alpha::HalfTheta if theta.abs() < 1e-6 => 0.5 / (0.5 * theta).cos(),
        Alpha::HalfTheta => (0.5 * theta).sin() / theta.sin(),
        Alpha::Fixed(0.0) => 1.0,
        Alpha::Fixed(a) if theta == 0.0 => {
            return Err(FormationError::SingularAngle(format!(
                "sin(theta - alpha)/sin(theta) is unbounded at theta = 0 with alpha = {a}"
            )))
        }
        Alpha::Fixed(a) => (theta - a).sin() / theta.sin(),
    };
    let cos = theta.cos();
    let d3 = (d1 * d1 + d2 * d2 + 2.0 * d1 * d2 * cos).sqrt();
    let den = d1 * d2;
    Ok((
        -ratio * (d1 + d2 * cos) / den,
        -ratio * (d2 + d1 * cos) / den,
        ratio * d3 / den,
    ))
}

/// Jacobian of the split rotated augmented error system at `e = 0`.
///
/// `theta = 0` is answered by [`jacobian_collinear`]; the rotated partials do not
/// converge to it (the unsigned angle is not differentiable at collinear shapes).
pub fn jacobian_rotated(d1: f64, d2: f64, theta: f64, c: f64) -> Result<Matrix3> {
    check_lengths(d1, d2)?;
    if theta == 0.0 {
        return Ok(jacobian_collinear(d1, d2, c));
    }
    let (a1, a2, a3) = partials_a(d1, d2, theta, Alpha::HalfTheta)?;
    let cos = theta.cos();
    let d3 = (d1 * d1 + d2 * d2 + 2.0 * d1 * d2 * cos).sqrt();
    Ok(Matrix3([
        [-2.0 + c * a1, cos + c * a2, c * a3],
        [cos + c * a1, -2.0 + c * a2, c * a3],
        [-(d1 + d2 * cos) / d3, -(d2 + d1 * cos) / d3, 0.0],
    ]))
}

/// Linearization of the active variant's augmented error system at its zero-error
/// equilibrium, with its Hurwitz verdict (margin 0).
pub fn stability_at_target(spec: &FormationSpec) -> Result<StabilityReport> {
    let j = if spec.variant.is_rotated() {
        jacobian_rotated(spec.d1, spec.d2, spec.theta, spec.gain())?
    } else {
        jacobian_collinear(spec.d1, spec.d2, spec.gain())
    };
    let mut report = is_hurwitz(&j, 0.0);
    report.params = Some(*spec);
    Ok(report)
}

/// The matrix `[[p1, p2, a], [p2, p1, a], [b, c, 0]]`.
pub fn lemma1_matrix(p1: f64, p2: f64, a: f64, b: f64, c: f64) -> Result<Matrix3> {
    if !(p1 > 0.0 && p1 > p2 && p1 * p1 > p2 * p2) {
        return Err(FormationError::PreconditionViolated(format!(
            "need p1 > 0, p1 > p2 and p1² > p2², got p1={p1}, p2={p2}"
        )));
    }
    Ok(Matrix3([[p1, p2, a], [p2, p1, a], [b, c, 0.0]]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Check {
    /// First-order estimate `a(b+c)(p2-p1)/(p1²-p2²)` of the perturbed zero eigenvalue.
    pub approx_lambda3: f64,
    /// Eigenvalue of the matrix closest to zero.
    pub exact_lambda3: f64,
    pub sign_agrees: bool,
}

/// Compares the first-order estimate of the perturbed zero eigenvalue with the exact one.
pub fn lemma1_check(p1: f64, p2: f64, a: f64, b: f64, c: f64) -> Result<Lemma1Check> {
    let m = lemma1_matrix(p1, p2, a, b, c)?;
    let gap = p1 * p1 - p2 * p2;
    let limit = 0.1 * gap.min(1.0) / (b.abs() + c.abs() + 1.0);
    if a.abs() > limit {
        return Err(FormationError::PreconditionViolated(format!(
            "perturbation |a| = {} exceeds the small-perturbation bound {limit}",
            a.abs()
        )));
    }
    let approx_lambda3 = a * (b + c) * (p2 - p1) / gap;
    let exact_lambda3 = eig3(&m).closest_to_zero().re;
    let sign_agrees = if approx_lambda3 == 0.0 {
        exact_lambda3.abs() < 1e-9
    } else {
        approx_lambda3.signum() == exact_lambda3.signum() && exact_lambda3 != 0.0
    };
    Ok(Lemma1Check {
        approx_lambda3,
        exact_lambda3,
        sign_agrees,
    })
}

/// Coefficient matrix of `d/dt [z1; z2]` when both distance errors equal `e_star`
/// and the link norms are frozen at `n1`, `n2`.
pub fn zdyn_coefficient_matrix(e_star: f64, n1: f64, n2: f64, c: f64) -> [[f64; 2]; 2] {
    let diag = -(2.0 * e_star - c);
    let off = e_star + c;
    [[diag / n1, off / n2], [off / n1, diag / n2]]
}

/// Central-difference Jacobian of a field on `R³`.
pub fn fd_jacobian3<F>(f: F, x: [f64; 3], h: f64) -> Result<Matrix3>
where
    F: Fn([f64; 3]) -> Result<[f64; 3]>,
{
    let mut j = Matrix3::ZERO;
    for col in 0..3 {
        let (mut xp, mut xm) = (x, x);
        xp[col] += h;
        xm[col] -= h;
        let (fp, fm) = (f(xp)?, f(xm)?);
        for row in 0..3 {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Error coordinates of the travelling collinear equilibrium: `e1 = e2 = -2c/3`,
/// agents 1 and 3 on the same side of agent 2, and `d3 = d1 + d2`.
pub fn uu_error_point(d1: f64, d2: f64, c: f64) -> Result<ErrorVec> {
    check_lengths(d1, d2)?;
    let e = -2.0 * c / 3.0;
    let (l1, l2) = (d1 + e, d2 + e);
    let l3 = (l1 - l2).abs();
    if !(l1 > 0.0 && l2 > 0.0 && l3 > 0.0) {
        return Err(FormationError::PreconditionViolated(format!(
            "no travelling equilibrium with positive link lengths for d1={d1}, d2={d2}, c={c}"
        )));
    }
    Ok(ErrorVec::new(e, e, l3 - (d1 + d2)))
}

/// Positions realizing [`uu_error_point`]: agent 2 at the origin, agents 1 and 3 on
/// the positive x axis.
pub fn uu_configuration(d1: f64, d2: f64, c: f64) -> Result<FormationState> {
    let e = uu_error_point(d1, d2, c)?;
    Ok(FormationState::new(
        Vec2::new(d1 + e.e1, 0.0),
        Vec2::ZERO,
        Vec2::new(d2 + e.e2, 0.0),
    ))
}

/// Common velocity magnitude of the agents at the travelling equilibrium, `2|c|/3`.
pub fn uu_speed(c: f64) -> f64 {
    2.0 * c.abs() / 3.0
}

/// Finite-difference linearization of the collinear error system at the travelling
/// equilibrium.
pub fn uu_linearization(d1: f64, d2: f64, c: f64) -> Result<Matrix3> {
    let spec = FormationSpec::biased_collinear(d1, d2, c)?;
    let e0 = uu_error_point(d1, d2, c)?;
    fd_jacobian3(
        |x| Ok(error_field_collinear(&ErrorVec::from_array(&x), &spec)?.to_array()),
        e0.to_array(),
        1e-6,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    /// Stationary collinear, agent 2 in the middle.
    Ud,
    /// Travelling collinear, agents 1 and 3 on the same side of agent 2.
    Uu,
    /// Prescribed triangle of the rotated controller.
    UTheta,
    NotEquilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    /// `(2 + ẑ1ᵀẑ2)(e2 - e1)`.
    pub cond1: f64,
    /// `‖(ẑ2 - ẑ1)(3e* + 2c)‖` with `e* = (e1 + e2)/2`.
    pub zeq: f64,
    /// Norm of the relative-motion field `(ż1, ż2)`.
    pub field_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumClass {
    pub kind: EquilibriumKind,
    pub residuals: EquilibriumResiduals,
}

/// Classifies a configuration against the stationary, travelling and triangular
/// equilibrium sets of the active controller.
///
/// The field test uses the link rates `ż1 = u1 - u2`, `ż2 = u2 - u3`, so a
/// formation translating rigidly counts as an equilibrium.
pub fn classify_equilibrium(
    s: &FormationState,
    spec: &FormationSpec,
    tol: f64,
) -> Result<EquilibriumClass> {
    let z = relative_vectors(s);
    let (h1, h2) = (unit(z.z1)?, unit(z.z2)?);
    let e = distance_errors(s, spec);
    let c = spec.gain();
    let u = velocities(s, spec)?;
    let (dz1, dz2) = (u[0] - u[1], u[1] - u[2]);
    let e_star = 0.5 * (e.e1 + e.e2);
    let residuals = EquilibriumResiduals {
        cond1: (2.0 + h1.dot(h2)) * (e.e2 - e.e1),
        zeq: ((h2 - h1) * (3.0 * e_star + 2.0 * c)).norm(),
        field_norm: (dz1.norm_squared() + dz2.norm_squared()).sqrt(),
    };
    let small_errors = e.e1.abs() < tol && e.e2.abs() < tol;
    let kind = if residuals.field_norm >= tol {
        EquilibriumKind::NotEquilibrium
    } else if small_errors && (h1 - h2).norm() < tol {
        EquilibriumKind::Ud
    } else if (e.e1 + 2.0 * c / 3.0).abs() < tol
        && (e.e2 + 2.0 * c / 3.0).abs() < tol
        && (h1 + h2).norm() < tol
    {
        EquilibriumKind::Uu
    } else if small_errors && (rot2(spec.theta).apply(h1) - h2).norm() < tol {
        EquilibriumKind::UTheta
    } else {
        EquilibriumKind::NotEquilibrium
    };
    Ok(EquilibriumClass { kind, residuals })
}
