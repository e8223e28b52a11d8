use serde::{Deserialize, Serialize};

use super::HybridMode;

/// Per-mode 3x3 added-mass matrices over the planar `(v_x, v_z, omega_y)` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AddedMass {
    pub water: [[f64; 3]; 3],
    pub transition_exit: [[f64; 3]; 3],
    pub air: [[f64; 3]; 3],
    pub transition_entry: [[f64; 3]; 3],
}

impl Default for AddedMass {
    fn default() -> Self {
        let diag = |a: f64, b: f64, c: f64| [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]];
        AddedMass {
            water: diag(0.1, 1.5, 0.03),
            transition_exit: diag(0.05, 0.75, 0.015),
            air: diag(0.0, 0.0, 0.0),
            transition_entry: diag(0.05, 0.75, 0.015),
        }
    }
}

impl AddedMass {
    pub fn for_mode(&self, mode: HybridMode) -> &[[f64; 3]; 3] {
        match mode {
            HybridMode::Water => &self.water,
            HybridMode::TransitionExit => &self.transition_exit,
            HybridMode::Air => &self.air,
            HybridMode::TransitionEntry => &self.transition_entry,
        }
    }
}

/// Flat-plate lifting surfaces. Panel centres are body-frame offsets from the center of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelGeometry {
    pub fore_area: f64,
    pub fore_center: [f64; 2],
    pub aft_area: f64,
    pub aft_center: [f64; 2],
    pub elevon_area: f64,
    /// Zero-lift drag coefficient shared by all panels.
    pub cd0: f64,
}

impl Default for PanelGeometry {
    fn default() -> Self {
        PanelGeometry {
            fore_area: 0.038,
            fore_center: [0.17, 0.0],
            aft_area: 0.0914,
            aft_center: [-0.05, 0.0],
            elevon_area: 0.02,
            cd0: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia_yy: f64,
    /// Wing length `L` from trailing edge to nose.
    pub wing_length: f64,
    pub span: f64,
    pub chord: f64,
    /// Distance from the trailing edge forward to the center of mass.
    pub cg_offset: f64,
    /// Center of mass to elevon hinge, body frame.
    pub hinge_offset: [f64; 2],
    /// Hinge to elevon center of pressure.
    pub elevon_length: f64,
    pub displaced_volume: f64,
    pub buoyancy_center: [f64; 2],
    /// Share of the displaced volume attributed to the fore section.
    pub fore_volume_fraction: f64,
    pub added_mass: AddedMass,
    pub panels: PanelGeometry,
    /// Propeller pitch in metres per revolution.
    pub prop_pitch: f64,
    pub rho_water: f64,
    pub rho_air: f64,
    pub gravity: f64,
    pub drag_multiplier: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 0.375,
            inertia_yy: 0.006,
            wing_length: 0.5,
            span: 0.61,
            chord: 0.5,
            cg_offset: 0.16,
            hinge_offset: [-0.16, 0.0],
            elevon_length: 0.05,
            displaced_volume: 4.0e-4,
            buoyancy_center: [-0.03, 0.0],
            fore_volume_fraction: 0.3,
            added_mass: AddedMass::default(),
            panels: PanelGeometry::default(),
            prop_pitch: 0.1016,
            rho_water: 1000.0,
            rho_air: 1.22,
            gravity: 9.81,
            drag_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid vehicle parameter `{field}`: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

fn check(ok: bool, field: &'static str, reason: &str) -> Result<(), ParamError> {
    if ok {
        Ok(())
    } else {
        Err(ParamError { field, reason: reason.to_string() })
    }
}

impl VehicleParams {
    /// Distance from the center of mass forward to the nose.
    pub fn nose_arm(&self) -> f64 {
        self.wing_length - self.cg_offset
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check(self.mass > 0.0, "mass", "must be positive")?;
        check(self.inertia_yy > 0.0, "inertia_yy", "must be positive")?;
        check(self.wing_length > 0.0, "wing_length", "must be positive")?;
        check(
            self.cg_offset > 0.0 && self.cg_offset < self.wing_length,
            "cg_offset",
            "must lie strictly between 0 and wing_length",
        )?;
        check(self.elevon_length >= 0.0, "elevon_length", "must be non-negative")?;
        check(self.displaced_volume >= 0.0, "displaced_volume", "must be non-negative")?;
        check(
            (0.0..=1.0).contains(&self.fore_volume_fraction),
            "fore_volume_fraction",
            "must lie in [0, 1]",
        )?;
        check(self.rho_water > 0.0, "rho_water", "must be positive")?;
        check(self.rho_air > 0.0, "rho_air", "must be positive")?;
        check(self.gravity >= 0.0, "gravity", "must be non-negative")?;
        check(self.prop_pitch > 0.0, "prop_pitch", "must be positive")?;
        check(self.drag_multiplier >= 0.0, "drag_multiplier", "must be non-negative")?;
        let p = &self.panels;
        check(
            p.fore_area >= 0.0 && p.aft_area >= 0.0 && p.elevon_area >= 0.0,
            "panels",
            "areas must be non-negative",
        )?;
        check(p.cd0 >= 0.0, "panels.cd0", "must be non-negative")?;
        for mode in HybridMode::ALL {
            let m = nalgebra::Matrix3::from_fn(|i, j| self.added_mass.for_mode(mode)[i][j]);
            check(m.iter().all(|v| v.is_finite()), "added_mass", "entries must be finite")?;
            check((m - m.transpose()).amax() <= 1e-12, "added_mass", "matrices must be symmetric")?;
            check(
                m.symmetric_eigenvalues().min() >= -1e-12,
                "added_mass",
                "matrices must be positive semidefinite",
            )?;
        }
        let all = [
            self.mass,
            self.inertia_yy,
            self.span,
            self.chord,
            self.hinge_offset[0],
            self.hinge_offset[1],
            self.buoyancy_center[0],
            self.buoyancy_center[1],
            p.fore_center[0],
            p.fore_center[1],
            p.aft_center[0],
            p.aft_center[1],
        ];
        check(all.iter().all(|v| v.is_finite()), "geometry", "entries must be finite")?;
        Ok(())
    }
}
