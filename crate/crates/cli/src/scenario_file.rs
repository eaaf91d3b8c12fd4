//! TOML scenario files.
//!
//! Every key is optional:
//!
//! | key            | default            | meaning                                              |
//! |----------------|--------------------|------------------------------------------------------|
//! | `variant`      | `biased-collinear` | `unbiased`, `biased-collinear`, `rotated-split`, `rotated-one-sided` |
//! | `d1`, `d2`     | 30, 10             | desired distances of links 1–2 and 2–3                |
//! | `theta`        | 0                  | target inter-link angle in radians                   |
//! | `theta_deg`    |                    | the same in degrees (exclusive with `theta`)         |
//! | `c`            | 1 (biased), 0.1 (rotated-split), 0 otherwise | bias gain                   |
//! | `dt`           | 0.01               | RK4 step                                             |
//! | `horizon`      | 120                | simulated time                                       |
//! | `record_every` | 10                 | steps between recorded samples                       |
//! | `seed`         | 0                  | seed for random initial positions                    |
//! | `spread`       | 100                | side of the box random positions are drawn from      |
//! | `initial`      | `random`           | `random` or `collinear` (agent 2 in the middle)      |
//! | `positions`    |                    | `[[x1, y1], [x2, y2], [x3, y3]]`, overrides `initial` |

use std::f64::consts::PI;
use std::fmt;

use serde::Deserialize;
use toml::Spanned;
use triflex_core::dynamics::ControllerVariant;
use triflex_core::sim::{step_count, DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_RECORD_EVERY};
use triflex_core::{FormationSpec, FormationState, InitialCondition, Scenario, Vec2};

pub const DEFAULT_SPREAD: f64 = 100.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    variant: Option<Spanned<String>>,
    d1: Option<Spanned<f64>>,
    d2: Option<Spanned<f64>>,
    theta: Option<Spanned<f64>>,
    theta_deg: Option<Spanned<f64>>,
    c: Option<Spanned<f64>>,
    dt: Option<Spanned<f64>>,
    horizon: Option<Spanned<f64>>,
    record_every: Option<Spanned<i64>>,
    seed: Option<Spanned<i64>>,
    spread: Option<Spanned<f64>>,
    initial: Option<Spanned<String>>,
    positions: Option<Spanned<Vec<[f64; 2]>>>,
}

/// A problem with a scenario file, located by line when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFileError {
    pub line: Option<usize>,
    pub key: Option<&'static str>,
    pub message: String,
}

impl fmt::Display for ScenarioFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.key) {
            (Some(line), Some(key)) => write!(f, "line {line}: `{key}`: {}", self.message),
            (None, Some(key)) => write!(f, "`{key}`: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ScenarioFileError {}

struct Source<'a>(&'a str);

impl Source<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.0[..offset.min(self.0.len())].matches('\n').count() + 1
    }

    fn err<T>(
        &self,
        key: &'static str,
        value: &Spanned<T>,
        message: impl Into<String>,
    ) -> ScenarioFileError {
        ScenarioFileError {
            line: Some(self.line_of(value.span().start)),
            key: Some(key),
            message: message.into(),
        }
    }
}

fn parse_variant(
    src: &Source,
    v: &Spanned<String>,
) -> Result<ControllerVariant, ScenarioFileError> {
    match v.get_ref().as_str() {
        "unbiased" => Ok(ControllerVariant::Unbiased),
        "biased-collinear" => Ok(ControllerVariant::BiasedCollinear),
        "rotated-split" => Ok(ControllerVariant::RotatedSplit),
        "rotated-one-sided" => Ok(ControllerVariant::RotatedOneSided),
        other => Err(src.err(
            "variant",
            v,
            format!(
                "unknown variant {other:?}; expected unbiased, biased-collinear, rotated-split or rotated-one-sided"
            ),
        )),
    }
}

fn positive(
    src: &Source,
    key: &'static str,
    v: &Option<Spanned<f64>>,
    default: f64,
) -> Result<f64, ScenarioFileError> {
    match v {
        None => Ok(default),
        Some(s) if s.get_ref().is_finite() && *s.get_ref() > 0.0 => Ok(*s.get_ref()),
        Some(s) => Err(src.err(
            key,
            s,
            format!("must be a positive number, got {}", s.get_ref()),
        )),
    }
}

fn default_gain(variant: ControllerVariant) -> f64 {
    match variant {
        ControllerVariant::BiasedCollinear => 1.0,
        ControllerVariant::RotatedSplit => 0.1,
        ControllerVariant::Unbiased | ControllerVariant::RotatedOneSided => 0.0,
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioFileError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioFileError {
        line: None,
        key: None,
        message: e.to_string().trim_end().to_string(),
    })?;
    let src = Source(text);

    let variant = match &raw.variant {
        Some(v) => parse_variant(&src, v)?,
        None => ControllerVariant::BiasedCollinear,
    };
    let d1 = positive(&src, "d1", &raw.d1, 30.0)?;
    let d2 = positive(&src, "d2", &raw.d2, 10.0)?;

    let (theta, theta_key, theta_span) = match (&raw.theta, &raw.theta_deg) {
        (Some(_), Some(deg)) => {
            return Err(src.err(
                "theta_deg",
                deg,
                "give either `theta` or `theta_deg`, not both",
            ))
        }
        (Some(t), None) => (*t.get_ref(), "theta", Some(t)),
        (None, Some(deg)) => (deg.get_ref().to_radians(), "theta_deg", Some(deg)),
        (None, None) => (0.0, "theta", None),
    };
    if let Some(span) = theta_span {
        if !(theta > -PI && theta < PI) {
            return Err(src.err(
                theta_key,
                span,
                format!(
                    "angle must lie strictly inside (-180°, 180°), got {}",
                    span.get_ref()
                ),
            ));
        }
        if variant == ControllerVariant::BiasedCollinear && theta != 0.0 {
            return Err(src.err(
                theta_key,
                span,
                "the biased-collinear variant needs a zero angle; use rotated-split",
            ));
        }
    }

    let c = match &raw.c {
        None => default_gain(variant),
        Some(s) if s.get_ref().is_finite() => *s.get_ref(),
        Some(s) => return Err(src.err("c", s, "must be a finite number")),
    };
    if let (ControllerVariant::Unbiased, Some(s)) = (variant, &raw.c) {
        if *s.get_ref() != 0.0 {
            return Err(src.err(
                "c",
                s,
                "the unbiased variant has no gain; remove `c` or set it to 0",
            ));
        }
    }

    let dt = positive(&src, "dt", &raw.dt, DEFAULT_DT)?;
    let horizon = positive(&src, "horizon", &raw.horizon, DEFAULT_HORIZON)?;
    let record_every = match &raw.record_every {
        None => DEFAULT_RECORD_EVERY,
        Some(s) if *s.get_ref() >= 1 => *s.get_ref() as usize,
        Some(s) => {
            return Err(src.err(
                "record_every",
                s,
                format!("must be at least 1, got {}", s.get_ref()),
            ))
        }
    };
    if let Err(e) = step_count(dt, horizon, record_every) {
        let message = e.to_string();
        return Err(match &raw.horizon {
            Some(h) => src.err("horizon", h, message),
            None => ScenarioFileError {
                line: None,
                key: Some("horizon"),
                message,
            },
        });
    }
    let seed = match &raw.seed {
        None => 0,
        Some(s) if *s.get_ref() >= 0 => *s.get_ref() as u64,
        Some(s) => return Err(src.err("seed", s, "must be a non-negative integer")),
    };
    let spread = positive(&src, "spread", &raw.spread, DEFAULT_SPREAD)?;

    let initial = match (&raw.positions, &raw.initial) {
        (Some(_), Some(i)) => {
            return Err(src.err("initial", i, "`initial` and `positions` are exclusive"))
        }
        (Some(p), None) => {
            let pts = p.get_ref();
            if pts.len() != 3 {
                return Err(src.err(
                    "positions",
                    p,
                    format!("need exactly 3 points, got {}", pts.len()),
                ));
            }
            if pts.iter().flatten().any(|v| !v.is_finite()) {
                return Err(src.err("positions", p, "coordinates must be finite"));
            }
            let v = |i: usize| Vec2::new(pts[i][0], pts[i][1]);
            InitialCondition::Positions(FormationState::new(v(0), v(1), v(2)))
        }
        (None, Some(i)) => match i.get_ref().as_str() {
            "random" => InitialCondition::Random { spread },
            "collinear" => InitialCondition::RandomCollinear { spread },
            other => {
                return Err(src.err(
                    "initial",
                    i,
                    format!("expected \"random\" or \"collinear\", got {other:?}"),
                ))
            }
        },
        (None, None) => InitialCondition::Random { spread },
    };

    let spec = FormationSpec::new(d1, d2, theta, c, variant).map_err(|e| ScenarioFileError {
        line: None,
        key: None,
        message: e.to_string(),
    })?;
    Ok(Scenario {
        spec,
        initial,
        dt,
        horizon,
        record_every,
        seed,
    })
}
