use nalgebra::Vector2;

use super::{density_assignment, HybridMode, VehicleParams};
use crate::linalg::{rot, Vec2, Vec7};

/// Net body-frame force and pitching moment about the center of mass,
/// excluding added-mass effects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vec2,
    pub moment: f64,
}

impl Wrench {
    fn add_at(&mut self, r: Vec2, f: Vec2) {
        self.force += f;
        self.moment += cross(r, f);
    }
}

/// Planar cross product with positive meaning nose-up.
fn cross(r: Vec2, f: Vec2) -> f64 {
    r.x * f.y - r.y * f.x
}

/// Flat-plate force on a panel aligned with its local x axis moving at `v`
/// (panel frame) through fluid of density `rho`.
pub fn flat_plate_force(v: Vec2, rho: f64, area: f64, cd0: f64, drag_multiplier: f64) -> Vec2 {
    let speed = v.norm();
    if speed < 1e-12 || area == 0.0 {
        return Vec2::zeros();
    }
    // C_L = 2 sin(a) cos(a), C_D = 2 sin^2(a) + C_D0 with sin(a) = -v_z/|v|.
    let lift = Vector2::new(-v.y, v.x) * (rho * area * (-v.y * v.x) / speed);
    let drag_mag = 0.5 * rho * area * (2.0 * v.y * v.y + cd0 * speed * speed);
    let drag = -v * (drag_multiplier * drag_mag / speed);
    lift + drag
}

pub fn forces_moments_vec(x: &Vec7, u_thrust: f64, mode: HybridMode, params: &VehicleParams) -> Wrench {
    let rho = density_assignment(mode, params);
    let panels = &params.panels;
    let v = Vec2::new(x[4], x[5]);
    let w = x[6];
    let local_velocity = |r: Vec2| v + Vec2::new(-r.y, r.x) * w;
    let to_body = rot(x[2]).transpose();
    let mut out = Wrench { force: Vec2::zeros(), moment: 0.0 };
    let k = params.drag_multiplier;

    let fore = Vec2::from(panels.fore_center);
    let f = flat_plate_force(local_velocity(fore), rho.rho_fore, panels.fore_area, panels.cd0, k);
    out.add_at(fore, f);

    let aft = Vec2::from(panels.aft_center);
    let f = flat_plate_force(local_velocity(aft), rho.rho_aft, panels.aft_area, panels.cd0, k);
    out.add_at(aft, f);

    let deflect = rot(x[3]);
    let elevon = Vec2::from(params.hinge_offset) + deflect * Vec2::new(-params.elevon_length, 0.0);
    let ve = deflect.transpose() * local_velocity(elevon);
    let f = deflect * flat_plate_force(ve, rho.rho_elevon, panels.elevon_area, panels.cd0, k);
    out.add_at(elevon, f);

    let g = params.gravity;
    out.force += to_body * Vec2::new(0.0, -params.mass * g);

    let frac = params.fore_volume_fraction;
    let buoyancy = g * params.displaced_volume * (frac * rho.rho_fore + (1.0 - frac) * rho.rho_aft);
    out.add_at(Vec2::from(params.buoyancy_center), to_body * Vec2::new(0.0, buoyancy));

    out.force.x += u_thrust;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plate_force_is_normal_without_parasitic_drag() {
        for &(vx, vz) in &[(2.0, -0.5), (-1.0, 0.3), (0.0, 1.0), (3.0, 0.0)] {
            let f = flat_plate_force(Vec2::new(vx, vz), 1000.0, 0.1, 0.0, 1.0);
            assert!(f.x.abs() < 1e-9, "{f:?}");
            let speed = (vx * vx + vz * vz).sqrt();
            assert!((f.y + 1000.0 * 0.1 * vz * speed).abs() < 1e-9);
        }
    }

    #[test]
    fn rest_in_air_is_weight_plus_buoyancy() {
        let p = VehicleParams::default();
        let x = Vec7::zeros();
        let w = forces_moments_vec(&x, 0.0, HybridMode::Air, &p);
        let b = p.rho_air * p.displaced_volume * p.gravity;
        assert!(w.force.x.abs() < 1e-15);
        assert!((w.force.y - (b - p.mass * p.gravity)).abs() < 1e-12);
        assert!((w.moment - p.buoyancy_center[0] * b).abs() < 1e-12);
    }

    #[test]
    fn rest_submerged_is_hydrostatic() {
        let p = VehicleParams::default();
        let x = Vec7::from([0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = forces_moments_vec(&x, 0.0, HybridMode::Water, &p);
        let b = p.rho_water * p.displaced_volume * p.gravity;
        assert!((w.force.y - (b - p.mass * p.gravity)).abs() < 1e-12);
        assert!((w.moment - b * p.buoyancy_center[0]).abs() < 1e-12);
    }

    #[test]
    fn thrust_superposes_on_body_x() {
        let p = VehicleParams::default();
        let x = Vec7::from([0.0, -0.5, 0.0, 0.1, 0.0, 0.0, 0.0]);
        for mode in HybridMode::ALL {
            let a = forces_moments_vec(&x, 0.0, mode, &p);
            let b = forces_moments_vec(&x, 1.0, mode, &p);
            assert!((b.force.x - a.force.x - 1.0).abs() < 1e-15);
            assert_eq!(a.force.y, b.force.y);
            assert_eq!(a.moment, b.moment);
        }
    }

    #[test]
    fn drag_multiplier_only_scales_drag() {
        let base = VehicleParams::default();
        let heavy = VehicleParams { drag_multiplier: 2.0, ..Default::default() };
        // pure axial motion: only drag acts aerodynamically
        let x = Vec7::from([0.0, -1.0, 0.0, 0.0, 1.5, 0.0, 0.0]);
        let a = forces_moments_vec(&x, 0.0, HybridMode::Water, &base);
        let b = forces_moments_vec(&x, 0.0, HybridMode::Water, &heavy);
        assert!((b.force.x - 2.0 * a.force.x).abs() < 1e-12);
    }
}
