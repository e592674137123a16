//! Direct-simulation behavior oracle based on the integrated readout
//! difference V_AVA − V_AVB.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::odesim;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Reversal,
    Acceleration,
    NoResponse,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::Reversal, Behavior::Acceleration, Behavior::NoResponse];

    pub fn as_str(&self) -> &'static str {
        match self {
            Behavior::Reversal => "reversal",
            Behavior::Acceleration => "acceleration",
            Behavior::NoResponse => "no_response",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Behavior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reversal" => Ok(Behavior::Reversal),
            "acceleration" => Ok(Behavior::Acceleration),
            "no_response" => Ok(Behavior::NoResponse),
            _ => Err(Error::config(format!("unknown behavior {s}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub behavior: Behavior,
    /// ∫ (V_AVA − V_AVB) dt in V·s.
    pub integral: f64,
    /// Time at which integration stopped.
    pub stop: f64,
}

/// Trapezoidal integral of `diff` from `onset` to the first sign change
/// after `onset + grace` (or the end of the samples). Sign changes inside
/// the grace window are ignored.
pub fn classify_behavior(ts: &[f64], diff: &[f64], onset: f64, grace: f64, threshold: f64) -> Result<Classification> {
    if ts.len() != diff.len() || ts.len() < 2 {
        return Err(Error::domain("trajectory needs at least two samples of matching length"));
    }
    if !(threshold >= 0.0) || !(grace >= 0.0) {
        return Err(Error::domain("threshold and grace must be nonnegative"));
    }
    let t_end = *ts.last().unwrap();
    if t_end - onset < grace {
        return Err(Error::domain(format!(
            "trajectory ends at {t_end} s, before the grace period {grace} s after onset {onset} s"
        )));
    }
    let armed = onset + grace;
    let mut integral = 0.0;
    let mut stop = t_end;
    for k in 1..ts.len() {
        let (t0, t1) = (ts[k - 1], ts[k]);
        if t1 <= onset {
            continue;
        }
        let (mut a, b) = (diff[k - 1], diff[k]);
        let mut t0 = t0;
        if t0 < onset {
            // clip the first interval at onset by linear interpolation
            a += (b - a) * (onset - t0) / (t1 - t0);
            t0 = onset;
        }
        if a * b < 0.0 {
            let tc = t0 + (t1 - t0) * a / (a - b);
            if tc >= armed {
                integral += 0.5 * a * (tc - t0);
                stop = tc;
                break;
            }
        }
        integral += 0.5 * (a + b) * (t1 - t0);
    }
    let behavior = if integral > threshold {
        Behavior::Reversal
    } else if integral < -threshold {
        Behavior::Acceleration
    } else {
        Behavior::NoResponse
    };
    Ok(Classification { behavior, integral, stop })
}

/// Simulate `field` from `x0` on a uniform grid and classify the readout
/// difference of coordinates `ava` and `avb`.
#[allow(clippy::too_many_arguments)]
pub fn classify_trajectory(
    field: &dyn VectorField,
    x0: &[f64],
    horizon: f64,
    ava: usize,
    avb: usize,
    onset: f64,
    grace: f64,
    threshold: f64,
) -> Result<Classification> {
    let samples = 2000;
    let ts: Vec<f64> = (0..=samples).map(|k| horizon * k as f64 / samples as f64).collect();
    let xs = odesim::solve_points(field, x0, &ts, 1e-10)?;
    let diff: Vec<f64> = xs.iter().map(|x| x[ava] - x[avb]).collect();
    classify_behavior(&ts, &diff, onset, grace, threshold)
}
