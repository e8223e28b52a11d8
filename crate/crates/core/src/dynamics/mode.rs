use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{guard_psi1, guard_psi2, PlanarState, VehicleParams};
use crate::linalg::Vec7;

/// Fluid-domain mode. The sign pattern of the nose guard `psi1` and the
/// elevon-tip guard `psi2` identifies the mode uniquely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridMode {
    Water,
    TransitionExit,
    Air,
    TransitionEntry,
}

impl HybridMode {
    pub const ALL: [HybridMode; 4] =
        [HybridMode::Water, HybridMode::TransitionExit, HybridMode::Air, HybridMode::TransitionEntry];

    /// `(nose above surface, tail above surface)`.
    pub fn signature(self) -> (bool, bool) {
        match self {
            HybridMode::Water => (false, false),
            HybridMode::TransitionExit => (true, false),
            HybridMode::Air => (true, true),
            HybridMode::TransitionEntry => (false, true),
        }
    }

    pub fn from_signature(nose_up: bool, tail_up: bool) -> HybridMode {
        match (nose_up, tail_up) {
            (false, false) => HybridMode::Water,
            (true, false) => HybridMode::TransitionExit,
            (true, true) => HybridMode::Air,
            (false, true) => HybridMode::TransitionEntry,
        }
    }

    /// Mode whose signature matches the guard values (`>= 0` counts as above).
    pub fn from_guards(psi1: f64, psi2: f64) -> HybridMode {
        HybridMode::from_signature(psi1 >= 0.0, psi2 >= 0.0)
    }

    /// Modes reachable through a single guard crossing.
    pub fn is_adjacent(self, other: HybridMode) -> bool {
        let (a1, a2) = self.signature();
        let (b1, b2) = other.signature();
        (a1 != b1) ^ (a2 != b2)
    }

    /// Guard separating two adjacent modes: 1 for the nose, 2 for the elevon tip.
    pub fn shared_guard(self, other: HybridMode) -> Option<u8> {
        if !self.is_adjacent(other) {
            return None;
        }
        if self.signature().0 != other.signature().0 {
            Some(1)
        } else {
            Some(2)
        }
    }

    pub fn index(self) -> u8 {
        match self {
            HybridMode::Water => 0,
            HybridMode::TransitionExit => 1,
            HybridMode::Air => 2,
            HybridMode::TransitionEntry => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HybridMode::Water => "water",
            HybridMode::TransitionExit => "transition_exit",
            HybridMode::Air => "air",
            HybridMode::TransitionEntry => "transition_entry",
        }
    }
}

impl fmt::Display for HybridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for HybridMode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "water" | "0" => Ok(HybridMode::Water),
            "transition_exit" | "1" => Ok(HybridMode::TransitionExit),
            "air" | "2" => Ok(HybridMode::Air),
            "transition_entry" | "3" => Ok(HybridMode::TransitionEntry),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}

/// Fluid density around the fore wing, aft wing and elevon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityAssignment {
    pub rho_fore: f64,
    pub rho_aft: f64,
    pub rho_elevon: f64,
}

pub fn density_assignment(mode: HybridMode, params: &VehicleParams) -> DensityAssignment {
    let (w, a) = (params.rho_water, params.rho_air);
    let (fore, aft) = match mode {
        HybridMode::Water => (w, w),
        HybridMode::TransitionExit => (a, w),
        HybridMode::Air => (a, a),
        HybridMode::TransitionEntry => (w, a),
    };
    DensityAssignment { rho_fore: fore, rho_aft: aft, rho_elevon: aft }
}

/// Mode after the guards are evaluated at `x_minus`.
///
/// A guard fires when it reaches zero from the side the current mode sits on,
/// so the result is always the mode whose signature agrees with the guard signs.
pub fn mode_transition(x_minus: &PlanarState, q_minus: HybridMode, params: &VehicleParams) -> HybridMode {
    mode_transition_vec(&x_minus.to_vector(), q_minus, params)
}

pub fn mode_transition_vec(x: &Vec7, q_minus: HybridMode, params: &VehicleParams) -> HybridMode {
    let q = HybridMode::from_guards(guard_psi1(x, params), guard_psi2(x, params));
    if q == q_minus {
        q_minus
    } else {
        q
    }
}

/// The continuous state passes through mode changes unchanged.
pub fn reset_map(x_minus: &PlanarState) -> PlanarState {
    *x_minus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_rows() {
        let p = VehicleParams::default();
        let d = density_assignment(HybridMode::Air, &p);
        assert_eq!((d.rho_fore, d.rho_aft, d.rho_elevon), (1.22, 1.22, 1.22));
        let d = density_assignment(HybridMode::Water, &p);
        assert_eq!((d.rho_fore, d.rho_aft, d.rho_elevon), (1000.0, 1000.0, 1000.0));
        let d = density_assignment(HybridMode::TransitionExit, &p);
        assert_eq!((d.rho_fore, d.rho_aft, d.rho_elevon), (1.22, 1000.0, 1000.0));
        let d = density_assignment(HybridMode::TransitionEntry, &p);
        assert_eq!((d.rho_fore, d.rho_aft, d.rho_elevon), (1000.0, 1.22, 1.22));
    }

    #[test]
    fn parse_and_display_round_trip() {
        for m in HybridMode::ALL {
            assert_eq!(m.name().parse::<HybridMode>().unwrap(), m);
            assert_eq!(m.index().to_string().parse::<HybridMode>().unwrap(), m);
        }
        assert!("lava".parse::<HybridMode>().is_err());
    }

    #[test]
    fn adjacency_follows_single_guard() {
        use HybridMode::*;
        assert!(Water.is_adjacent(TransitionExit));
        assert!(TransitionExit.is_adjacent(Air));
        assert!(Air.is_adjacent(TransitionEntry));
        assert!(TransitionEntry.is_adjacent(Water));
        assert!(!Water.is_adjacent(Air));
        assert!(!Water.is_adjacent(Water));
        assert_eq!(Water.shared_guard(TransitionExit), Some(1));
        assert_eq!(TransitionExit.shared_guard(Air), Some(2));
    }

    fn state(r_z: f64, theta: f64) -> PlanarState {
        PlanarState { r_z, theta, ..PlanarState::default() }
    }

    #[test]
    fn transition_examples() {
        let p = VehicleParams::default();
        // nose 1 cm above the surface, tail well below
        let arm = p.nose_arm();
        let theta: f64 = 0.3;
        let x = state(0.01 - theta.sin() * arm, theta);
        assert!((guard_psi1(&x.to_vector(), &p) - 0.01).abs() < 1e-12);
        assert_eq!(mode_transition(&x, HybridMode::Water, &p), HybridMode::TransitionExit);

        let deep = state(-0.5, 0.0);
        assert_eq!(mode_transition(&deep, HybridMode::Water, &p), HybridMode::Water);

        // tail tip just above with the nose already out
        let theta: f64 = 1.0;
        let tip = {
            let r = crate::linalg::rot(theta);
            let h = nalgebra::Vector2::new(p.hinge_offset[0], p.hinge_offset[1]);
            (r * h + r * nalgebra::Vector2::new(-p.elevon_length, 0.0)).y
        };
        let x = state(0.001 - tip, theta);
        assert!((guard_psi2(&x.to_vector(), &p) - 0.001).abs() < 1e-12);
        assert_eq!(mode_transition(&x, HybridMode::TransitionExit, &p), HybridMode::Air);
    }

    #[test]
    fn reset_is_identity() {
        let x = PlanarState { r_x: 1.0, r_z: -0.3, theta: 0.2, delta: -0.1, v_x: 2.0, v_z: 0.1, omega_y: -0.4 };
        let y = reset_map(&x);
        assert_eq!(x.to_vector().as_slice(), y.to_vector().as_slice());
        assert_eq!(reset_map(&PlanarState::default()), PlanarState::default());
    }
}
