//! Fixed-step RK4 integration of the position-space and error-space systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{classify_equilibrium, EquilibriumClass, CLASSIFY_TOL};
use crate::dynamics::{
    distance_errors, error_field, relative_vectors, velocities, ErrorVec, FormationSpec,
    FormationState,
};
use crate::error::FormationError;
use crate::geometry::{cross2, rot2, signed_angle, unit, SE2Transform, Vec2};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 120.0;
pub const DEFAULT_RECORD_EVERY: usize = 10;
/// Fraction of the horizon averaged for steady-state quantities.
pub const STEADY_WINDOW: f64 = 0.1;

const MAX_SAMPLING_ATTEMPTS: usize = 1000;

/// Failure of a run. `Aborted` carries everything recorded up to `time`.
#[derive(Debug, Error)]
pub enum SimError<P> {
    #[error(transparent)]
    Setup(#[from] FormationError),
    #[error("integration aborted at t = {time}: {cause}")]
    Aborted {
        time: f64,
        cause: FormationError,
        partial: P,
    },
}

impl<P> SimError<P> {
    fn map_partial<Q>(self, f: impl FnOnce(P) -> Q) -> SimError<Q> {
        match self {
            SimError::Setup(e) => SimError::Setup(e),
            SimError::Aborted {
                time,
                cause,
                partial,
            } => SimError::Aborted {
                time,
                cause,
                partial: f(partial),
            },
        }
    }
}

/// Time-stamped samples of a flat state vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTrajectory<const N: usize> {
    pub times: Vec<f64>,
    pub samples: Vec<[f64; N]>,
}

impl<const N: usize> RawTrajectory<N> {
    fn push(&mut self, t: f64, x: [f64; N]) {
        self.times.push(t);
        self.samples.push(x);
    }
}

fn axpy<const N: usize>(x: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

fn rk4_step<const N: usize, F>(
    field: &mut F,
    x: &[f64; N],
    dt: f64,
) -> Result<[f64; N], FormationError>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N], FormationError>,
{
    let k1 = field(x)?;
    let k2 = field(&axpy(x, 0.5 * dt, &k1))?;
    let k3 = field(&axpy(x, 0.5 * dt, &k2))?;
    let k4 = field(&axpy(x, dt, &k3))?;
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(FormationError::NonFiniteState)
    }
}

/// Number of RK4 steps for a horizon; the horizon must be a whole multiple of
/// `dt * record_every`.
pub fn step_count(dt: f64, horizon: f64, record_every: usize) -> Result<usize, FormationError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(FormationError::InvalidScenario(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(FormationError::InvalidScenario(format!(
            "horizon must be at least dt, got {horizon}"
        )));
    }
    if record_every == 0 {
        return Err(FormationError::InvalidScenario(
            "record_every must be at least 1".into(),
        ));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(FormationError::InvalidScenario(format!(
            "horizon {horizon} is not a whole number of steps of {dt}"
        )));
    }
    let steps = steps as usize;
    if !steps.is_multiple_of(record_every) {
        return Err(FormationError::InvalidScenario(format!(
            "{steps} steps are not a multiple of record_every = {record_every}"
        )));
    }
    Ok(steps)
}

/// Classical fixed-step RK4. Records `t = 0`, every `record_every` steps, and the
/// final time. Sample times are `k * dt`, not accumulated sums.
pub fn integrate<const N: usize, F>(
    mut field: F,
    x0: [f64; N],
    dt: f64,
    horizon: f64,
    record_every: usize,
) -> Result<RawTrajectory<N>, SimError<RawTrajectory<N>>>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N], FormationError>,
{
    let steps = step_count(dt, horizon, record_every)?;
    let mut traj = RawTrajectory::default();
    traj.times.reserve(steps / record_every + 1);
    traj.samples.reserve(steps / record_every + 1);
    traj.push(0.0, x0);
    let mut x = x0;
    for k in 0..steps {
        match rk4_step(&mut field, &x, dt) {
            Ok(next) => x = next,
            Err(cause) => {
                let time = k as f64 * dt;
                if traj.times.last() != Some(&time) {
                    traj.push(time, x);
                }
                return Err(SimError::Aborted {
                    time,
                    cause,
                    partial: traj,
                });
            }
        }
        if (k + 1) % record_every == 0 {
            traj.push((k + 1) as f64 * dt, x);
        }
    }
    Ok(traj)
}

/// Where a scenario starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Positions(FormationState),
    /// Seeded random non-degenerate, non-collinear positions in a box of side `spread`.
    Random {
        spread: f64,
    },
    /// Seeded random collinear positions with agent 2 between agents 1 and 3.
    RandomCollinear {
        spread: f64,
    },
    /// Error coordinates, for error-space runs.
    Errors(ErrorVec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: FormationSpec,
    pub initial: InitialCondition,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(spec: FormationSpec, initial: InitialCondition) -> Self {
        Self {
            spec,
            initial,
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            record_every: DEFAULT_RECORD_EVERY,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_step(mut self, dt: f64, record_every: usize) -> Self {
        self.dt = dt;
        self.record_every = record_every;
        self
    }

    pub fn validate(&self) -> Result<(), FormationError> {
        self.spec.validate()?;
        step_count(self.dt, self.horizon, self.record_every)?;
        Ok(())
    }

    /// Initial positions, drawing random ones from `seed` when requested.
    pub fn initial_state(&self) -> Result<FormationState, FormationError> {
        match self.initial {
            InitialCondition::Positions(s) => Ok(s),
            InitialCondition::Random { spread } => random_initial(self.seed, spread),
            InitialCondition::RandomCollinear { spread } => random_collinear(self.seed, spread),
            InitialCondition::Errors(_) => Err(FormationError::InvalidScenario(
                "a position-space run needs initial positions, not errors".into(),
            )),
        }
    }
}

/// Signals derived from one recorded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedSignals {
    pub errors: ErrorVec,
    /// Signed angle from `z1` to `z2`.
    pub gamma: f64,
    /// `cross2(ẑ1, ẑ2)`; zero exactly on collinear shapes.
    pub cross: f64,
    pub speeds: [f64; 3],
}

impl DerivedSignals {
    pub fn of(s: &FormationState, spec: &FormationSpec) -> Result<Self, FormationError> {
        let z = relative_vectors(s);
        let u = velocities(s, spec)?;
        Ok(Self {
            errors: distance_errors(s, spec),
            gamma: signed_angle(z.z1, z.z2)?,
            cross: cross2(unit(z.z1)?, unit(z.z2)?),
            speeds: u.map(Vec2::norm),
        })
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(0.0, f64::max)
    }
}

/// A recorded position-space run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FormationState>,
    pub derived: Vec<DerivedSignals>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&FormationState> {
        self.states.last()
    }

    fn from_raw(
        raw: RawTrajectory<6>,
        spec: &FormationSpec,
    ) -> Result<Self, (Self, f64, FormationError)> {
        let mut out = Trajectory::default();
        for (t, x) in raw.times.into_iter().zip(raw.samples) {
            let s = FormationState::from_array(&x);
            match DerivedSignals::of(&s, spec) {
                Ok(d) => {
                    out.times.push(t);
                    out.states.push(s);
                    out.derived.push(d);
                }
                Err(e) => return Err((out, t, e)),
            }
        }
        Ok(out)
    }
}

/// A recorded error-space run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTrajectory {
    pub times: Vec<f64>,
    pub errors: Vec<ErrorVec>,
}

impl From<RawTrajectory<3>> for ErrorTrajectory {
    fn from(raw: RawTrajectory<3>) -> Self {
        Self {
            times: raw.times,
            errors: raw.samples.iter().map(ErrorVec::from_array).collect(),
        }
    }
}

/// Asymptotic summary of a position-space run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub final_time: f64,
    pub final_errors: ErrorVec,
    /// Signed inter-link angle at the final sample.
    pub final_gamma: f64,
    /// Mean centroid velocity over the trailing window.
    pub steady_velocity: Vec2,
    /// `‖steady_velocity‖`.
    pub steady_speed: f64,
    /// Mean velocity of each agent over the trailing window.
    pub steady_velocities: [Vec2; 3],
    pub steady_speeds: [f64; 3],
    /// Controller speeds at the final sample.
    pub final_speeds: [f64; 3],
    /// `|cross2(ẑ1, ẑ2)|` at the final sample.
    pub collinearity_residual: f64,
    /// Smallest pairwise agent distance over the recorded samples.
    pub min_link_distance: f64,
    pub classified: EquilibriumClass,
}

impl ConvergenceReport {
    pub fn from_trajectory(
        traj: &Trajectory,
        spec: &FormationSpec,
    ) -> Result<Self, FormationError> {
        let n = traj.len();
        if n < 2 {
            return Err(FormationError::InvalidScenario(
                "a report needs at least two recorded samples".into(),
            ));
        }
        let t_end = traj.times[n - 1];
        let window = STEADY_WINDOW * t_end;
        let start = traj
            .times
            .iter()
            .position(|&t| t >= t_end - window - 1e-9 * t_end)
            .unwrap_or(0)
            .min(n - 2);
        let span = t_end - traj.times[start];
        let (first, last) = (
            traj.states[start].positions(),
            traj.states[n - 1].positions(),
        );
        let steady_velocities: [Vec2; 3] =
            std::array::from_fn(|i| (last[i] - first[i]) * (1.0 / span));
        let steady_velocity =
            (steady_velocities[0] + steady_velocities[1] + steady_velocities[2]) * (1.0 / 3.0);
        let final_state = &traj.states[n - 1];
        let d = &traj.derived[n - 1];
        let min_link_distance = traj
            .states
            .iter()
            .map(|s| {
                let z = relative_vectors(s);
                z.z1.norm().min(z.z2.norm()).min(z.z3.norm())
            })
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            final_time: t_end,
            final_errors: d.errors,
            final_gamma: d.gamma,
            steady_velocity,
            steady_speed: steady_velocity.norm(),
            steady_velocities,
            steady_speeds: steady_velocities.map(Vec2::norm),
            final_speeds: d.speeds,
            collinearity_residual: d.cross.abs(),
            min_link_distance,
            classified: classify_equilibrium(final_state, spec, CLASSIFY_TOL)?,
        })
    }

    pub fn max_final_speed(&self) -> f64 {
        self.final_speeds.iter().copied().fold(0.0, f64::max)
    }
}

fn position_field(
    spec: FormationSpec,
) -> impl FnMut(&[f64; 6]) -> Result<[f64; 6], FormationError> {
    move |x| {
        let u = velocities(&FormationState::from_array(x), &spec)?;
        Ok([u[0].x, u[0].y, u[1].x, u[1].y, u[2].x, u[2].y])
    }
}

/// Integrates the variant's position-space closed loop and summarizes the end state.
pub fn simulate(sc: &Scenario) -> Result<(Trajectory, ConvergenceReport), SimError<Trajectory>> {
    sc.validate()?;
    let s0 = sc.initial_state()?;
    let spec = sc.spec;
    let raw = integrate(
        position_field(spec),
        s0.to_array(),
        sc.dt,
        sc.horizon,
        sc.record_every,
    );
    let raw = match raw {
        Ok(raw) => raw,
        Err(e) => {
            return Err(e.map_partial(|p| match Trajectory::from_raw(p, &spec) {
                Ok(t) => t,
                Err((t, _, _)) => t,
            }))
        }
    };
    let traj =
        Trajectory::from_raw(raw, &spec).map_err(|(partial, time, cause)| SimError::Aborted {
            time,
            cause,
            partial,
        })?;
    let report = ConvergenceReport::from_trajectory(&traj, &spec)?;
    Ok((traj, report))
}

/// Integrates the variant's augmented error system from `InitialCondition::Errors`.
pub fn simulate_errors(sc: &Scenario) -> Result<ErrorTrajectory, SimError<ErrorTrajectory>> {
    sc.validate()?;
    let InitialCondition::Errors(e0) = sc.initial else {
        return Err(SimError::Setup(FormationError::InvalidScenario(
            "an error-space run needs an initial error vector".into(),
        )));
    };
    e0.link_lengths(&sc.spec)?;
    let spec = sc.spec;
    integrate(
        |x: &[f64; 3]| Ok(error_field(&ErrorVec::from_array(x), &spec)?.to_array()),
        e0.to_array(),
        sc.dt,
        sc.horizon,
        sc.record_every,
    )
    .map(ErrorTrajectory::from)
    .map_err(|e| e.map_partial(ErrorTrajectory::from))
}

pub fn se2_apply(s: &FormationState, g: &SE2Transform) -> FormationState {
    FormationState::new(g.apply(s.p1), g.apply(s.p2), g.apply(s.p3))
}

fn min_separation(spread: f64) -> f64 {
    (1e-3 * spread).max(1.0)
}

fn check_spread(spread: f64) -> Result<(), FormationError> {
    if spread.is_finite() && spread > 0.0 {
        Ok(())
    } else {
        Err(FormationError::InvalidScenario(format!(
            "spread must be positive, got {spread}"
        )))
    }
}

/// Deterministic random positions in the box `[-spread/2, spread/2]²`, resampled
/// until every pair is farther apart than `max(1, 1e-3 spread)` and the shape is
/// not collinear (`|cross2(ẑ1, ẑ2)| > 1e-3`).
pub fn random_initial(seed: u64, spread: f64) -> Result<FormationState, FormationError> {
    check_spread(spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = min_separation(spread);
    let half = 0.5 * spread;
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let mut point = || Vec2::new(rng.random_range(-half..half), rng.random_range(-half..half));
        let s = FormationState::new(point(), point(), point());
        let z = relative_vectors(&s);
        if z.z1.norm() <= min_sep || z.z2.norm() <= min_sep || z.z3.norm() <= min_sep {
            continue;
        }
        if cross2(unit(z.z1)?, unit(z.z2)?).abs() > 1e-3 {
            return Ok(s);
        }
    }
    Err(FormationError::SamplingFailed {
        attempts: MAX_SAMPLING_ATTEMPTS,
    })
}

/// Deterministic random collinear positions with agent 2 strictly between agents
/// 1 and 3 (`ẑ1 = ẑ2`).
pub fn random_collinear(seed: u64, spread: f64) -> Result<FormationState, FormationError> {
    check_spread(spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = min_separation(spread);
    let quarter = 0.25 * spread;
    let p2 = Vec2::new(
        rng.random_range(-quarter..quarter),
        rng.random_range(-quarter..quarter),
    );
    let dir = rot2(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .apply(Vec2::new(1.0, 0.0));
    let r1 = rng.random_range(min_sep.max(0.1 * spread)..(0.5 * spread).max(2.0 * min_sep));
    let r3 = rng.random_range(min_sep.max(0.1 * spread)..(0.5 * spread).max(2.0 * min_sep));
    Ok(FormationState::new(p2 + dir * r1, p2, p2 - dir * r3))
}
