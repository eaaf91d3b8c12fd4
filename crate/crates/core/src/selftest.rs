//! Runtime invariant suite: every module's stated properties as named checks.
//!
//! [`Fault`] deliberately corrupts the rotated Jacobian so that the suite's ability
//! to catch a broken linearization can itself be exercised.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    collinear_a, eig3, fd_jacobian3, is_hurwitz, jacobian_collinear, jacobian_rotated,
    lemma1_check, uu_configuration, uu_error_point, uu_linearization, EquilibriumKind, Matrix3,
};
use crate::dynamics::{
    control_biased, control_unbiased, error_field_collinear, error_field_mixed,
    error_field_rotated, relative_vectors, velocities, ControllerVariant, ErrorVec, FormationSpec,
    FormationState,
};
use crate::error::FormationError;
use crate::geometry::{cross2, rot2, signed_angle, unit, SE2Transform, Vec2};
use crate::sim::{random_initial, se2_apply, simulate, InitialCondition, Scenario};

/// Faults that can be injected into the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates the `a3` partial in the rotated Jacobian.
    FlipA3Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl PropertyResult {
    pub fn line(&self) -> String {
        format!(
            "{} {}::{} ({:.2}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.module,
            self.name,
            self.seconds,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(": {}", self.detail)
            }
        )
    }
}

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fe(e: FormationError) -> String {
    e.to_string()
}

/// Runs one named check, timing it.
pub fn check(
    module: &'static str,
    name: &'static str,
    f: impl FnOnce() -> Check,
) -> PropertyResult {
    let start = Instant::now();
    let outcome = f();
    PropertyResult {
        module,
        name,
        passed: outcome.is_ok(),
        detail: outcome.err().unwrap_or_default(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

fn random_vec(r: &mut ChaCha8Rng, half: f64) -> Vec2 {
    Vec2::new(r.random_range(-half..half), r.random_range(-half..half))
}

/// Rotated Jacobian with the selected fault applied.
fn rotated_jacobian(
    d1: f64,
    d2: f64,
    theta: f64,
    c: f64,
    fault: Fault,
) -> Result<Matrix3, FormationError> {
    let mut j = jacobian_rotated(d1, d2, theta, c)?;
    if fault == Fault::FlipA3Sign && theta != 0.0 {
        j[(0, 2)] = -j[(0, 2)];
        j[(1, 2)] = -j[(1, 2)];
    }
    Ok(j)
}

fn geometry_checks(out: &mut Vec<PropertyResult>) {
    out.push(check("geometry", "unit_has_norm_one", || {
        let mut r = rng();
        for _ in 0..1000 {
            let v = random_vec(&mut r, 1e3);
            let n = unit(v).map_err(fe)?.norm();
            ensure((n - 1.0).abs() <= 1e-14, || format!("‖unit({v:?})‖ = {n}"))?;
        }
        Ok(())
    }));
    out.push(check("geometry", "signed_angle_antisymmetric", || {
        let mut r = rng();
        for _ in 0..1000 {
            let (u, v) = (random_vec(&mut r, 10.0), random_vec(&mut r, 10.0));
            let (a, b) = (
                signed_angle(u, v).map_err(fe)?,
                signed_angle(v, u).map_err(fe)?,
            );
            if a == PI || b == PI {
                continue;
            }
            ensure(a == -b, || format!("{a} vs {b}"))?;
        }
        let x = Vec2::new(1.0, 0.0);
        ensure(signed_angle(x, -x).map_err(fe)? == PI, || {
            "antiparallel must wrap to +π".into()
        })
    }));
    out.push(check("geometry", "cross_of_units_is_sine", || {
        let mut r = rng();
        for _ in 0..1000 {
            let (u, v) = (random_vec(&mut r, 10.0), random_vec(&mut r, 10.0));
            let lhs = cross2(unit(u).map_err(fe)?, unit(v).map_err(fe)?);
            let rhs = signed_angle(u, v).map_err(fe)?.sin();
            ensure((lhs - rhs).abs() <= 1e-12, || format!("{lhs} vs {rhs}"))?;
        }
        Ok(())
    }));
    out.push(check("geometry", "rotation_composition", || {
        let mut r = rng();
        for _ in 0..1000 {
            let (a, b) = (r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
            let (lhs, rhs) = ((rot2(a) * rot2(b)).matrix(), rot2(a + b).matrix());
            for i in 0..2 {
                for j in 0..2 {
                    ensure((lhs[i][j] - rhs[i][j]).abs() <= 1e-13, || {
                        format!("a={a}, b={b}")
                    })?;
                }
            }
        }
        Ok(())
    }));
}

fn random_state(r: &mut ChaCha8Rng) -> FormationState {
    loop {
        let s = FormationState::new(
            random_vec(r, 50.0),
            random_vec(r, 50.0),
            random_vec(r, 50.0),
        );
        let z = relative_vectors(&s);
        if z.z1.norm() > 0.5 && z.z2.norm() > 0.5 && z.z3.norm() > 0.5 {
            return s;
        }
    }
}

fn all_variants() -> [FormationSpec; 4] {
    [
        FormationSpec::unbiased(30.0, 10.0).expect("valid"),
        FormationSpec::biased_collinear(30.0, 10.0, 0.7).expect("valid"),
        FormationSpec::rotated(30.0, 10.0, 1.1, 0.1).expect("valid"),
        FormationSpec::new(30.0, 10.0, -2.0, 0.0, ControllerVariant::RotatedOneSided)
            .expect("valid"),
    ]
}

fn dynamics_checks(out: &mut Vec<PropertyResult>) {
    out.push(check("dynamics", "centroid_drift", || {
        let mut r = rng();
        let spec = FormationSpec::unbiased(30.0, 10.0).map_err(fe)?;
        for _ in 0..200 {
            let s = random_state(&mut r);
            let u = control_unbiased(&s, &spec).map_err(fe)?;
            let sum = u[0] + u[1] + u[2];
            let scale = u.iter().map(|v| v.norm()).fold(1.0, f64::max);
            ensure(sum.norm() <= 1e-13 * scale, || {
                format!("unbiased drift {sum:?}")
            })?;
            let (mu1, mu2) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            let u = control_biased(&s, mu1, mu2, &spec).map_err(fe)?;
            let z = relative_vectors(&s);
            let expect = unit(z.z1).map_err(fe)? * mu1 + unit(z.z2).map_err(fe)? * mu2;
            let drift = u[0] + u[1] + u[2] - expect;
            ensure(drift.norm() <= 1e-12 * scale, || {
                format!("biased drift off by {drift:?}")
            })?;
        }
        Ok(())
    }));
    out.push(check("dynamics", "se2_equivariance_of_controls", || {
        let mut r = rng();
        for spec in all_variants() {
            for _ in 0..100 {
                let s = random_state(&mut r);
                let g = SE2Transform::new(r.random_range(-PI..PI), random_vec(&mut r, 100.0));
                let u = velocities(&s, &spec).map_err(fe)?;
                let ug = velocities(&se2_apply(&s, &g), &spec).map_err(fe)?;
                for i in 0..3 {
                    let d = (ug[i] - g.rotation.apply(u[i])).norm();
                    ensure(d <= 1e-12 * (1.0 + u[i].norm()), || {
                        format!("{:?}: agent {} off by {d:e}", spec.variant, i + 1)
                    })?;
                }
            }
        }
        Ok(())
    }));
    out.push(check("dynamics", "law_of_cosines", || {
        let mut r = rng();
        for _ in 0..1000 {
            let z = relative_vectors(&random_state(&mut r));
            let (n1, n2, n3) = (z.z1.norm(), z.z2.norm(), z.z3.norm());
            let lhs = unit(z.z1).map_err(fe)?.dot(unit(z.z2).map_err(fe)?);
            let rhs = (n3 * n3 - n1 * n1 - n2 * n2) / (2.0 * n1 * n2);
            ensure((lhs - rhs).abs() <= 1e-12, || format!("{lhs} vs {rhs}"))?;
        }
        Ok(())
    }));
    out.push(check(
        "dynamics",
        "mixed_rates_match_norm_derivatives",
        || {
            let mut r = rng();
            let h = 1e-6;
            for _ in 0..200 {
                let c = r.random_range(-2.0..2.0);
                let spec = FormationSpec::biased_collinear(30.0, 10.0, c).map_err(fe)?;
                let s = random_state(&mut r);
                let z = relative_vectors(&s);
                let (e1, e2) = (z.z1.norm() - spec.d1, z.z2.norm() - spec.d2);
                let m = error_field_mixed(z.z1, z.z2, e1, e2, c).map_err(fe)?;
                let u = velocities(&s, &spec).map_err(fe)?;
                let (dz1, dz2) = (u[0] - u[1], u[1] - u[2]);
                ensure(
                    (m.z1_dot - dz1).norm() <= 1e-12 * (1.0 + dz1.norm()),
                    || "ż1 differs from u1 - u2".into(),
                )?;
                ensure(
                    (m.z2_dot - dz2).norm() <= 1e-12 * (1.0 + dz2.norm()),
                    || "ż2 differs from u2 - u3".into(),
                )?;
                // step scaled so that the FD truncation error stays far below the tolerance
                let fd = |z: Vec2, dz: Vec2| {
                    let h = h * z.norm() / (1.0 + dz.norm());
                    ((z + dz * h).norm() - (z - dz * h).norm()) / (2.0 * h)
                };
                let (fd1, fd2) = (fd(z.z1, dz1), fd(z.z2, dz2));
                ensure((fd1 - m.e1_dot).abs() <= 1e-6, || {
                    format!("ė1 {} vs FD {fd1}", m.e1_dot)
                })?;
                ensure((fd2 - m.e2_dot).abs() <= 1e-6, || {
                    format!("ė2 {} vs FD {fd2}", m.e2_dot)
                })?;
            }
            Ok(())
        },
    ));
    out.push(check("dynamics", "fields_vanish_at_equilibria", || {
        let mut r = rng();
        for _ in 0..50 {
            let (d1, d2) = (r.random_range(1.0..50.0), r.random_range(1.0..50.0));
            let c = r.random_range(0.05..1.0);
            let zero = ErrorVec::new(0.0, 0.0, 0.0);
            let spec = FormationSpec::biased_collinear(d1, d2, c).map_err(fe)?;
            let f = error_field_collinear(&zero, &spec).map_err(fe)?;
            ensure(f.max_abs() <= 1e-12, || format!("Ud field {f:?}"))?;
            let p2 = random_vec(&mut r, 10.0);
            let dir = rot2(r.random_range(-PI..PI)).apply(Vec2::new(1.0, 0.0));
            let s = FormationState::new(p2 + dir * d1, p2, p2 - dir * d2);
            let u = velocities(&s, &spec).map_err(fe)?;
            ensure(u.iter().all(|v| v.norm() <= 1e-12), || {
                format!("Ud velocities {u:?}")
            })?;

            // travelling set needs c of the opposite sign and room for e = -2c/3
            let cu = -c;
            if uu_error_point(d1, d2, cu).is_ok() {
                let spec = FormationSpec::biased_collinear(d1, d2, cu).map_err(fe)?;
                let e = uu_error_point(d1, d2, cu).map_err(fe)?;
                let f = error_field_collinear(&e, &spec).map_err(fe)?;
                ensure(f.max_abs() <= 1e-12, || format!("Uu error field {f:?}"))?;
                let s = uu_configuration(d1, d2, cu).map_err(fe)?;
                let u = velocities(&s, &spec).map_err(fe)?;
                ensure(
                    (u[0] - u[1]).norm() <= 1e-12 && (u[1] - u[2]).norm() <= 1e-12,
                    || format!("Uu relative motion {u:?}"),
                )?;
            }

            let theta = r.random_range(-3.0..3.0);
            let spec = FormationSpec::rotated(d1, d2, theta, 0.1).map_err(fe)?;
            let f = error_field_rotated(&zero, &spec).map_err(fe)?;
            ensure(f.max_abs() <= 1e-12, || {
                format!("rotated field {f:?} at θ={theta}")
            })?;
            let s = FormationState::new(p2 + dir * d1, p2, p2 - rot2(theta).apply(dir) * d2);
            let u = velocities(&s, &spec).map_err(fe)?;
            ensure(u.iter().all(|v| v.norm() <= 1e-12), || {
                format!("rotated velocities {u:?} at θ={theta}")
            })?;
        }
        Ok(())
    }));
}

fn analysis_checks(out: &mut Vec<PropertyResult>, fault: Fault) {
    out.push(check("analysis", "collinear_eigenvalue_identity", || {
        let mut r = rng();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (d1, d2) = (r.random_range(0.1..100.0), r.random_range(0.1..100.0));
            let c = loop {
                let c: f64 = r.random_range(-5.0..5.0);
                if c != 0.0 {
                    break c;
                }
            };
            let got = eig3(&jacobian_collinear(d1, d2, c));
            let want = crate::analysis::collinear_eigenvalues(d1, d2, c);
            worst = worst.max(got.max_deviation(&want));
        }
        ensure(worst < 1e-8, || format!("max deviation {worst:e}"))
    }));
    out.push(check("analysis", "critical_eigenvalue_signs", || {
        let mut r = rng();
        for _ in 0..100 {
            let (d1, d2): (f64, f64) = (r.random_range(1.0..50.0), r.random_range(1.0..50.0));
            if (d1 - d2).abs() < 2.0 {
                continue;
            }
            let c = r.random_range(0.1..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let third = eig3(&jacobian_collinear(d1, d2, c)).closest_to_zero().re;
            ensure(third.signum() == -c.signum(), || {
                format!("Ud: c={c}, λ3={third}")
            })?;
            let Ok(j) = uu_linearization(d1, d2, c) else {
                continue;
            };
            let crit = eig3(&j).closest_to_zero().re;
            ensure(crit.signum() == c.signum(), || {
                format!("Uu ({d1},{d2},{c}): λ={crit}")
            })?;
        }
        Ok(())
    }));
    out.push(check(
        "analysis",
        "dominant_eigenvalue_bounded_by_minus_one",
        || {
            let mut r = rng();
            for _ in 0..1000 {
                let (d1, d2) = (r.random_range(0.1..100.0), r.random_range(0.1..100.0));
                let c = r.random_range(1e-3..5.0);
                let ca = c * collinear_a(d1, d2);
                let dom = eig3(&jacobian_collinear(d1, d2, c)).max_real();
                let want = -(1.0f64).min(2.0 * ca);
                ensure((dom - want).abs() <= 1e-8 * (1.0 + ca), || {
                    format!("{dom} vs {want} at ca={ca}")
                })?;
            }
            Ok(())
        },
    ));
    out.push(check("analysis", "rotated_jacobian_matches_fd", || {
        for theta in [FRAC_PI_6, FRAC_PI_3, 2.0 * FRAC_PI_3, 5.0 * FRAC_PI_6] {
            for theta in [theta, -theta] {
                for c in [0.01, 0.05, 0.1] {
                    for (d1, d2) in [(30.0, 10.0), (1.0, 1.0), (5.0, 50.0)] {
                        let spec = FormationSpec::rotated(d1, d2, theta, c).map_err(fe)?;
                        let fd = fd_jacobian3(
                            |x| {
                                Ok(error_field_rotated(&ErrorVec::from_array(&x), &spec)?
                                    .to_array())
                            },
                            [0.0; 3],
                            1e-6,
                        )
                        .map_err(fe)?;
                        let j = rotated_jacobian(d1, d2, theta, c, fault).map_err(fe)?;
                        let diff = j.max_abs_diff(&fd);
                        ensure(diff < 1e-5, || {
                            format!("θ={theta:.4}, c={c}, d=({d1},{d2}): {diff:e}")
                        })?;
                    }
                }
            }
        }
        Ok(())
    }));
    out.push(check("analysis", "rotated_hurwitz_sweep", || {
        for (d1, d2) in [(30.0, 10.0), (1.0, 1.0), (5.0, 50.0)] {
            for k in -34i32..=34 {
                let theta = k as f64 * PI / 36.0;
                let j = rotated_jacobian(d1, d2, theta, 0.01, fault).map_err(fe)?;
                let rep = is_hurwitz(&j, 0.0);
                ensure(rep.hurwitz, || {
                    format!(
                        "θ={k}π/36, d=({d1},{d2}): max Re λ = {:e}",
                        rep.max_real_part
                    )
                })?;
            }
        }
        Ok(())
    }));
    out.push(check("analysis", "lemma1_sign_agreement", || {
        let mut r = rng();
        for a in [-1e-2, -1e-3] {
            for _ in 0..1000 {
                let p2: f64 = r.random_range(-2.0..2.0);
                let p1 = p2.abs() + r.random_range(0.5..3.0);
                let b = r.random_range(0.05..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
                let c = r.random_range(0.05..1.0);
                if b + c <= 0.0 {
                    continue;
                }
                let chk = match lemma1_check(p1, p2, a, b, c) {
                    Ok(chk) => chk,
                    Err(FormationError::PreconditionViolated(_)) => continue,
                    Err(e) => return Err(fe(e)),
                };
                ensure(chk.sign_agrees, || {
                    format!("({p1},{p2},{a},{b},{c}): {chk:?}")
                })?;
            }
        }
        Ok(())
    }));
}

fn fig2_spec() -> FormationSpec {
    FormationSpec::biased_collinear(30.0, 10.0, 1.0).expect("valid")
}

fn sim_err<P>(e: crate::sim::SimError<P>) -> String {
    e.to_string()
}

fn sim_checks(out: &mut Vec<PropertyResult>) {
    out.push(check("sim", "rk4_fourth_order", || {
        let base = Scenario::new(fig2_spec(), InitialCondition::Random { spread: 100.0 })
            .with_seed(3)
            .with_horizon(10.0);
        let end = |dt: f64| -> Result<[f64; 6], String> {
            let (t, _) = simulate(&base.with_step(dt, 1)).map_err(sim_err)?;
            Ok(t.last_state().expect("samples").to_array())
        };
        let dt = 0.1;
        let reference = end(dt / 16.0)?;
        let dist = |x: [f64; 6]| {
            x.iter()
                .zip(reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (dist(end(dt)?), dist(end(dt / 2.0)?));
        let ratio = coarse / fine;
        ensure((8.0..=32.0).contains(&ratio), || {
            format!("error ratio {ratio} ({coarse:e} / {fine:e})")
        })
    }));
    out.push(check("sim", "deterministic", || {
        let sc =
            Scenario::new(fig2_spec(), InitialCondition::Random { spread: 100.0 }).with_seed(11);
        let (a, _) = simulate(&sc).map_err(sim_err)?;
        let (b, _) = simulate(&sc).map_err(sim_err)?;
        ensure(a == b, || "two identical runs differ".into())
    }));
    out.push(check("sim", "unbiased_shape_depends_on_start", || {
        let spec = FormationSpec::unbiased(30.0, 10.0).map_err(fe)?;
        let mut gammas = Vec::new();
        for seed in [1, 6] {
            let sc =
                Scenario::new(spec, InitialCondition::Random { spread: 100.0 }).with_seed(seed);
            let (_, rep) = simulate(&sc).map_err(sim_err)?;
            ensure(
                rep.final_errors.e1.abs() < 1e-6 && rep.final_errors.e2.abs() < 1e-6,
                || format!("seed {seed}: errors {:?}", rep.final_errors),
            )?;
            ensure(rep.min_link_distance > 0.0, || {
                format!("seed {seed}: agents met")
            })?;
            gammas.push(rep.final_gamma);
        }
        let spread = (gammas[0] - gammas[1]).abs();
        ensure(spread > 0.1, || format!("final angles {gammas:?}"))
    }));
    out.push(check(
        "sim",
        "travelling_set_unstable_for_positive_bias",
        || {
            let spec = fig2_spec();
            let mut s = uu_configuration(30.0, 10.0, 1.0).map_err(fe)?;
            s.p2.y += 1e-3;
            let sc = Scenario::new(spec, InitialCondition::Positions(s)).with_horizon(600.0);
            let (_, rep) = simulate(&sc).map_err(sim_err)?;
            ensure(rep.min_link_distance > 0.0, || "agents met".into())?;
            ensure(rep.classified.kind == EquilibriumKind::Ud, || {
                format!("ended as {:?}", rep.classified.kind)
            })
        },
    ));
    out.push(check("sim", "collinear_start_reaches_triangle", || {
        let spec = FormationSpec::rotated(30.0, 10.0, FRAC_PI_3, 0.1).map_err(fe)?;
        for seed in 0..2 {
            let sc = Scenario::new(spec, InitialCondition::RandomCollinear { spread: 100.0 })
                .with_seed(seed)
                .with_horizon(3000.0);
            let s0 = sc.initial_state().map_err(fe)?;
            let z0 = relative_vectors(&s0);
            ensure(
                cross2(unit(z0.z1).map_err(fe)?, unit(z0.z2).map_err(fe)?).abs() < 1e-12,
                || format!("seed {seed}: start is not collinear"),
            )?;
            let (_, rep) = simulate(&sc).map_err(sim_err)?;
            ensure(rep.min_link_distance > 0.0, || {
                format!("seed {seed}: agents met")
            })?;
            ensure(
                (rep.final_gamma - FRAC_PI_3).abs() < 0.05f64.to_radians(),
                || format!("seed {seed}: final angle {}°", rep.final_gamma.to_degrees()),
            )?;
        }
        Ok(())
    }));
    out.push(check("sim", "random_initial_never_degenerate", || {
        for seed in 0..1000 {
            let s = random_initial(seed, 100.0).map_err(fe)?;
            let z = relative_vectors(&s);
            ensure(
                z.z1.norm() > 1.0 && z.z2.norm() > 1.0 && z.z3.norm() > 1.0,
                || format!("seed {seed}: agents too close"),
            )?;
        }
        Ok(())
    }));
}

/// Runs every core property and returns one result per property.
pub fn run(fault: Fault) -> Vec<PropertyResult> {
    let mut out = Vec::new();
    geometry_checks(&mut out);
    dynamics_checks(&mut out);
    analysis_checks(&mut out, fault);
    sim_checks(&mut out);
    out
}

pub fn all_passed(results: &[PropertyResult]) -> bool {
    results.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flipped_a3_is_caught() {
        let mut out = Vec::new();
        analysis_checks(&mut out, Fault::FlipA3Sign);
        let failed: Vec<_> = out.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert!(
            failed.contains(&"rotated_jacobian_matches_fd"),
            "{failed:?}"
        );
    }

    #[test]
    fn clean_analysis_passes() {
        let mut out = Vec::new();
        geometry_checks(&mut out);
        dynamics_checks(&mut out);
        analysis_checks(&mut out, Fault::None);
        for r in &out {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn line_format() {
        let r = check("m", "p", || Err("boom".into()));
        assert!(r.line().starts_with("FAIL m::p ("));
        assert!(r.line().ends_with(": boom"));
    }
}
