//! Outcome labels for closed-loop water-exit runs.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::HybridMode;
use crate::linalg::Vec7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeLabel {
    Success,
    FallForward,
    FallBackward,
    Timeout,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 4] =
        [OutcomeLabel::Success, OutcomeLabel::FallForward, OutcomeLabel::FallBackward, OutcomeLabel::Timeout];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeLabel::Success => "success",
            OutcomeLabel::FallForward => "fall_forward",
            OutcomeLabel::FallBackward => "fall_backward",
            OutcomeLabel::Timeout => "timeout",
        }
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutcomeLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}

/// Thresholds of the outcome rules, radians and seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeRules {
    pub target_pitch: f64,
    pub pitch_band: f64,
    pub hold_time: f64,
    pub inversion_pitch: f64,
}

impl Default for OutcomeRules {
    fn default() -> Self {
        OutcomeRules {
            target_pitch: 45f64.to_radians(),
            pitch_band: 15f64.to_radians(),
            hold_time: 1.0,
            inversion_pitch: 80f64.to_radians(),
        }
    }
}

/// Incremental classifier. After the vehicle first reaches air, the first of these decides:
/// pitch held in the target band above the surface for the hold time is a success; the
/// centre of mass dropping through the surface after pitch exceeded the inversion angle is a
/// backward fall; dropping through with pitch below target and falling is a forward fall.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTracker {
    pub rules: OutcomeRules,
    air_reached: bool,
    hold_start: Option<f64>,
    inverted: bool,
    prev_rz: Option<f64>,
    label: Option<OutcomeLabel>,
}

impl OutcomeTracker {
    pub fn new(rules: OutcomeRules) -> Self {
        OutcomeTracker { rules, air_reached: false, hold_start: None, inverted: false, prev_rz: None, label: None }
    }

    pub fn air_reached(&self) -> bool {
        self.air_reached
    }

    /// Decided label, if any.
    pub fn label(&self) -> Option<OutcomeLabel> {
        self.label
    }

    pub fn push(&mut self, t: f64, x: &Vec7, mode: HybridMode) -> Option<OutcomeLabel> {
        if self.label.is_some() {
            return self.label;
        }
        if mode == HybridMode::Air {
            self.air_reached = true;
        }
        if !self.air_reached {
            return None;
        }
        let (rz, pitch, rate) = (x[1], x[2], x[6]);
        let r = &self.rules;
        if (pitch - r.target_pitch).abs() <= r.pitch_band && rz > 0.0 {
            let start = *self.hold_start.get_or_insert(t);
            if t - start >= r.hold_time - 1e-9 {
                self.label = Some(OutcomeLabel::Success);
            }
        } else {
            self.hold_start = None;
        }
        if pitch > r.inversion_pitch {
            self.inverted = true;
        }
        let crossed_down = self.prev_rz.is_some_and(|p| p > 0.0) && rz <= 0.0;
        self.prev_rz = Some(rz);
        if self.label.is_none() && crossed_down {
            if self.inverted {
                self.label = Some(OutcomeLabel::FallBackward);
            } else if pitch < r.target_pitch && rate < 0.0 {
                self.label = Some(OutcomeLabel::FallForward);
            }
        }
        self.label
    }

    /// Final label: undecided runs time out.
    pub fn finish(&self) -> OutcomeLabel {
        self.label.unwrap_or(OutcomeLabel::Timeout)
    }
}

/// Labels a sampled truth trajectory.
pub fn classify_outcome(t: &[f64], x: &[Vec7], q: &[HybridMode]) -> OutcomeLabel {
    let mut tr = OutcomeTracker::new(OutcomeRules::default());
    for ((t, x), q) in t.iter().zip(x).zip(q) {
        if tr.push(*t, x, *q).is_some() {
            break;
        }
    }
    tr.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(f: impl Fn(f64) -> (f64, f64, f64, HybridMode), t_end: f64) -> OutcomeLabel {
        let dt = 0.01;
        let n = (t_end / dt) as usize;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let (mut x, mut q) = (vec![], vec![]);
        for &ti in &t {
            let (rz, pitch, rate, mode) = f(ti);
            x.push(Vec7::from([0.0, rz, pitch, 0.0, 0.0, 0.0, rate]));
            q.push(mode);
        }
        classify_outcome(&t, &x, &q)
    }

    #[test]
    fn held_pitch_is_success() {
        assert_eq!(run(|_| (1.0, 45f64.to_radians(), 0.0, HybridMode::Air), 2.0), OutcomeLabel::Success);
    }

    #[test]
    fn inversion_then_fall_is_backward() {
        let label = run(
            |t| {
                let pitch = (90.0 * t.min(1.0)).to_radians();
                let rz = 1.0 - (t - 1.0).max(0.0) * 2.0;
                (rz, pitch, 1.0, HybridMode::Air)
            },
            2.0,
        );
        assert_eq!(label, OutcomeLabel::FallBackward);
    }

    #[test]
    fn nose_down_fall_is_forward() {
        let label = run(|t| (0.5 - t, 0.3 - t, -1.0, if t < 0.5 { HybridMode::Air } else { HybridMode::TransitionEntry }), 1.0);
        assert_eq!(label, OutcomeLabel::FallForward);
    }

    #[test]
    fn never_leaving_water_times_out() {
        assert_eq!(run(|_| (-1.0, 0.8, 0.0, HybridMode::Water), 3.0), OutcomeLabel::Timeout);
    }

    #[test]
    fn success_requires_air() {
        assert_eq!(run(|_| (0.1, 45f64.to_radians(), 0.0, HybridMode::TransitionExit), 3.0), OutcomeLabel::Timeout);
    }

    #[test]
    fn labels_parse_back() {
        for l in OutcomeLabel::ALL {
            assert_eq!(l.name().parse::<OutcomeLabel>().unwrap(), l);
        }
    }
}
