//! Parametric inverted-delta kinematics.
//!
//! The actuator is a three-limb delta mounted on a setup ring with the end
//! effector extending along +Z toward the target. Each limb is an upper arm
//! driven by a servo on the ring plus a passive forearm to the effector rim.
//! Degrees at the API boundary, radians internally.
//!
//! Inverse kinematics reduces each limb to a circle-sphere intersection in
//! the limb's vertical plane; forward kinematics trilaterates the effector
//! center from the three knee spheres and doubles as the IK round-trip
//! oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Link lengths and mounting constants, millimeters and degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaGeometry {
    /// Servo pivot radius on the setup ring.
    pub base_radius_mm: f64,
    /// Forearm anchor radius on the effector platform.
    pub effector_radius_mm: f64,
    /// Driven upper arm length.
    pub upper_arm_mm: f64,
    /// Passive forearm length. Must exceed the upper arm.
    pub forearm_mm: f64,
    /// Azimuth of each limb around the ring, degrees.
    pub limb_azimuths_deg: [f64; 3],
    /// Home offset of the workspace box along +Z.
    pub z_home_mm: f64,
    /// Servo travel limits, degrees from the ring plane.
    pub servo_min_deg: f64,
    pub servo_max_deg: f64,
}

impl Default for DeltaGeometry {
    fn default() -> Self {
        // Chosen so the full 120 x 120 x 110 mm box clears both the fold
        // limit near the ring and the reach limit at the far corners with
        // margin; validate_workspace() sweeps the box and must report 1.0.
        Self {
            base_radius_mm: 100.0,
            effector_radius_mm: 40.0,
            upper_arm_mm: 120.0,
            forearm_mm: 170.0,
            limb_azimuths_deg: [0.0, 120.0, 240.0],
            z_home_mm: 60.0,
            servo_min_deg: -90.0,
            servo_max_deg: 90.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("target unreachable by limb {limb}")]
    Unreachable { limb: usize },
    #[error("limb {limb} solution {angle_deg:.2} deg outside servo limits")]
    JointLimit { limb: usize, angle_deg: f64 },
    #[error("forearm spheres do not intersect for these joint angles")]
    NoIntersection,
}

impl DeltaGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let lengths = [
            ("base_radius", self.base_radius_mm),
            ("effector_radius", self.effector_radius_mm),
            ("upper_arm", self.upper_arm_mm),
            ("forearm", self.forearm_mm),
        ];
        for (name, v) in lengths {
            if !(v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.forearm_mm <= self.upper_arm_mm {
            return Err(KinematicsError::InvalidGeometry(format!(
                "forearm ({}) must exceed upper arm ({})",
                self.forearm_mm, self.upper_arm_mm
            )));
        }
        for i in 0..3 {
            let gap = self.limb_azimuths_deg[(i + 1) % 3] - self.limb_azimuths_deg[i];
            let gap = gap.rem_euclid(360.0);
            if (gap - 120.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "limb azimuths must be 120 deg apart, gap {i} is {gap}"
                )));
            }
        }
        if self.servo_min_deg >= self.servo_max_deg {
            return Err(KinematicsError::InvalidGeometry(
                "servo_min must be below servo_max".into(),
            ));
        }
        Ok(())
    }

    fn radial_offset(&self) -> f64 {
        self.base_radius_mm - self.effector_radius_mm
    }
}

/// Effector position in the actuator frame, millimeters, +Z toward target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
}

impl Pose {
    pub fn new(x_mm: f64, y_mm: f64, z_mm: f64) -> Self {
        Self { x_mm, y_mm, z_mm }
    }
}

/// Servo angles in degrees from the ring plane, positive toward the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub theta_deg: [f64; 3],
}

/// Result of sweeping the declared workspace box on a fixed grid.
#[derive(Debug, Clone)]
pub struct WorkspaceReport {
    pub total: usize,
    pub reachable: usize,
    pub fraction: f64,
    /// First few unreachable grid poses, for diagnostics.
    pub failures: Vec<Pose>,
}

impl WorkspaceReport {
    pub fn passed(&self) -> bool {
        self.reachable == self.total
    }
}

const DEG: f64 = std::f64::consts::PI / 180.0;

/// The workspace box the actuator must cover: +/-60 mm laterally, 110 mm of
/// travel along +Z starting at the home offset.
pub const WORKSPACE_XY_MM: f64 = 60.0;
pub const WORKSPACE_Z_MM: f64 = 110.0;

fn limb_axes(azimuth_deg: f64) -> ([f64; 2], [f64; 2]) {
    let a = azimuth_deg * DEG;
    // Radial unit vector and its horizontal tangent.
    ([a.cos(), a.sin()], [-a.sin(), a.cos()])
}

/// Per-limb solution: servo angle for one limb, elbow-out branch.
///
/// `w` is the forearm anchor relative to the servo pivot, decomposed into
/// (radial, tangential, vertical) components of the limb frame.
fn solve_limb(geom: &DeltaGeometry, limb: usize, w: [f64; 3]) -> Result<f64, KinematicsError> {
    let l1 = geom.upper_arm_mm;
    let l2 = geom.forearm_mm;
    let (wu, wt, wz) = (w[0], w[1], w[2]);
    let w_sq = wu * wu + wt * wt + wz * wz;
    let c = (w_sq + l1 * l1 - l2 * l2) / (2.0 * l1);
    let rho = wu.hypot(wz);
    if rho < c.abs() {
        return Err(KinematicsError::Unreachable { limb });
    }
    let phi0 = wz.atan2(wu);
    let delta = (c / rho).clamp(-1.0, 1.0).acos();
    // Elbow-out: of the two intersections the knee with the larger radial
    // coordinate, i.e. the larger cos(theta).
    let mut theta = phi0 - delta;
    if theta > std::f64::consts::PI {
        theta -= std::f64::consts::TAU;
    } else if theta <= -std::f64::consts::PI {
        theta += std::f64::consts::TAU;
    }
    let theta_deg = theta / DEG;
    if theta_deg < geom.servo_min_deg - 1e-9 || theta_deg > geom.servo_max_deg + 1e-9 {
        return Err(KinematicsError::JointLimit {
            limb,
            angle_deg: theta_deg,
        });
    }
    Ok(theta_deg)
}

/// Servo angles that place the effector center at `target`.
pub fn inverse_kinematics(
    geom: &DeltaGeometry,
    target: Pose,
) -> Result<JointAngles, KinematicsError> {
    geom.validate()?;
    let offset = geom.radial_offset();
    let mut theta_deg = [0.0; 3];
    for limb in 0..3 {
        let (u, t) = limb_axes(geom.limb_azimuths_deg[limb]);
        // Anchor relative to the servo pivot of this limb.
        let wx = target.x_mm - offset * u[0];
        let wy = target.y_mm - offset * u[1];
        let w = [
            wx * u[0] + wy * u[1],
            wx * t[0] + wy * t[1],
            target.z_mm,
        ];
        theta_deg[limb] = solve_limb(geom, limb, w)?;
    }
    Ok(JointAngles { theta_deg })
}

/// Effector center for the given servo angles.
///
/// Trilaterates the three forearm spheres around the effector-offset knee
/// centers; of the two mirror solutions the one on the target side (larger
/// Z) is returned. Servo limits are the caller's precondition and are not
/// enforced here, so inconsistent angles surface as `NoIntersection`.
pub fn forward_kinematics(
    geom: &DeltaGeometry,
    joints: JointAngles,
) -> Result<Pose, KinematicsError> {
    geom.validate()?;
    let l1 = geom.upper_arm_mm;
    let l2 = geom.forearm_mm;
    // Sphere centers: knees translated inward by the effector radius.
    let mut centers = [[0.0f64; 3]; 3];
    for limb in 0..3 {
        let (u, _) = limb_axes(geom.limb_azimuths_deg[limb]);
        let theta = joints.theta_deg[limb] * DEG;
        let radial = geom.base_radius_mm + l1 * theta.cos() - geom.effector_radius_mm;
        centers[limb] = [radial * u[0], radial * u[1], l1 * theta.sin()];
    }
    trilaterate(centers, l2)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn trilaterate(centers: [[f64; 3]; 3], radius: f64) -> Result<Pose, KinematicsError> {
    let ex_raw = sub(centers[1], centers[0]);
    let d = dot(ex_raw, ex_raw).sqrt();
    if d < 1e-9 {
        return Err(KinematicsError::NoIntersection);
    }
    let ex = scale(ex_raw, 1.0 / d);
    let r03 = sub(centers[2], centers[0]);
    let i = dot(ex, r03);
    let ey_raw = sub(r03, scale(ex, i));
    let ey_len = dot(ey_raw, ey_raw).sqrt();
    if ey_len < 1e-9 {
        return Err(KinematicsError::NoIntersection);
    }
    let ey = scale(ey_raw, 1.0 / ey_len);
    let ez = cross(ex, ey);
    let j = dot(ey, r03);
    // Equal radii: the plane of equidistance from c0 and c1 is at d/2.
    let x = d / 2.0;
    let y = (i * i + j * j) / (2.0 * j) - (i / j) * x;
    let h_sq = radius * radius - x * x - y * y;
    if h_sq < -1e-9 {
        return Err(KinematicsError::NoIntersection);
    }
    let h = h_sq.max(0.0).sqrt();
    let base = [
        centers[0][0] + x * ex[0] + y * ey[0],
        centers[0][1] + x * ex[1] + y * ey[1],
        centers[0][2] + x * ex[2] + y * ey[2],
    ];
    let p1 = [base[0] + h * ez[0], base[1] + h * ez[1], base[2] + h * ez[2]];
    let p2 = [base[0] - h * ez[0], base[1] - h * ez[1], base[2] - h * ez[2]];
    let p = if p1[2] >= p2[2] { p1 } else { p2 };
    Ok(Pose::new(p[0], p[1], p[2]))
}

/// Sweeps the declared workspace box on a 5 mm grid and reports the fraction
/// of poses with a valid IK solution. Passes only when every pose resolves.
pub fn validate_workspace(geom: &DeltaGeometry) -> Result<WorkspaceReport, KinematicsError> {
    geom.validate()?;
    let step = 5.0;
    let n_xy = (2.0 * WORKSPACE_XY_MM / step) as usize + 1;
    let n_z = (WORKSPACE_Z_MM / step) as usize + 1;
    let mut total = 0;
    let mut reachable = 0;
    let mut failures = Vec::new();
    for iz in 0..n_z {
        for iy in 0..n_xy {
            for ix in 0..n_xy {
                let pose = Pose::new(
                    -WORKSPACE_XY_MM + ix as f64 * step,
                    -WORKSPACE_XY_MM + iy as f64 * step,
                    geom.z_home_mm + iz as f64 * step,
                );
                total += 1;
                if inverse_kinematics(geom, pose).is_ok() {
                    reachable += 1;
                } else if failures.len() < 16 {
                    failures.push(pose);
                }
            }
        }
    }
    Ok(WorkspaceReport {
        total,
        reachable,
        fraction: reachable as f64 / total as f64,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn home_pose(geom: &DeltaGeometry) -> Pose {
        Pose::new(0.0, 0.0, geom.z_home_mm)
    }

    #[test]
    fn centered_pose_has_equal_angles() {
        let geom = DeltaGeometry::default();
        let joints = inverse_kinematics(&geom, home_pose(&geom)).unwrap();
        assert_abs_diff_eq!(joints.theta_deg[0], joints.theta_deg[1], epsilon = 1e-9);
        assert_abs_diff_eq!(joints.theta_deg[1], joints.theta_deg[2], epsilon = 1e-9);
    }

    #[test]
    fn equal_angles_give_centered_pose() {
        let geom = DeltaGeometry::default();
        let pose = forward_kinematics(
            &geom,
            JointAngles {
                theta_deg: [30.0; 3],
            },
        )
        .unwrap();
        assert_abs_diff_eq!(pose.x_mm, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pose.y_mm, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn far_pose_is_unreachable() {
        let geom = DeltaGeometry::default();
        let err = inverse_kinematics(&geom, Pose::new(0.0, 0.0, 500.0)).unwrap_err();
        assert!(matches!(err, KinematicsError::Unreachable { .. }));
    }

    #[test]
    fn round_trip_inside_workspace() {
        let geom = DeltaGeometry::default();
        let target = Pose::new(10.0, -5.0, 80.0);
        let joints = inverse_kinematics(&geom, target).unwrap();
        let back = forward_kinematics(&geom, joints).unwrap();
        assert_abs_diff_eq!(back.x_mm, target.x_mm, epsilon = 1e-6);
        assert_abs_diff_eq!(back.y_mm, target.y_mm, epsilon = 1e-6);
        assert_abs_diff_eq!(back.z_mm, target.z_mm, epsilon = 1e-6);
    }

    #[test]
    fn perturbed_angle_has_no_intersection() {
        // A tighter forearm makes the flipped-knee sphere genuinely miss the
        // other two; the default 170 mm forearm is forgiving enough to keep
        // intersecting after a flip.
        let geom = DeltaGeometry {
            forearm_mm: 130.0,
            ..DeltaGeometry::default()
        };
        let mut joints = inverse_kinematics(&geom, Pose::new(20.0, 10.0, 80.0)).unwrap();
        joints.theta_deg[1] += 180.0;
        let err = forward_kinematics(&geom, joints).unwrap_err();
        assert_eq!(err, KinematicsError::NoIntersection);
    }

    #[test]
    fn rotating_target_permutes_angles() {
        let geom = DeltaGeometry::default();
        let p = Pose::new(17.0, 6.0, 95.0);
        let a = inverse_kinematics(&geom, p).unwrap();
        let rot = 120.0f64.to_radians();
        let q = Pose::new(
            p.x_mm * rot.cos() - p.y_mm * rot.sin(),
            p.x_mm * rot.sin() + p.y_mm * rot.cos(),
            p.z_mm,
        );
        let b = inverse_kinematics(&geom, q).unwrap();
        assert_abs_diff_eq!(b.theta_deg[1], a.theta_deg[0], epsilon = 1e-9);
        assert_abs_diff_eq!(b.theta_deg[2], a.theta_deg[1], epsilon = 1e-9);
        assert_abs_diff_eq!(b.theta_deg[0], a.theta_deg[2], epsilon = 1e-9);
    }

    #[test]
    fn centered_angle_grows_with_depth() {
        let geom = DeltaGeometry::default();
        let mut last = f64::NEG_INFINITY;
        let mut z = geom.z_home_mm;
        while z <= geom.z_home_mm + WORKSPACE_Z_MM {
            let joints = inverse_kinematics(&geom, Pose::new(0.0, 0.0, z)).unwrap();
            assert!(joints.theta_deg[0] > last);
            last = joints.theta_deg[0];
            z += 5.0;
        }
    }

    #[test]
    fn default_geometry_covers_workspace() {
        let report = validate_workspace(&DeltaGeometry::default()).unwrap();
        assert!(
            report.passed(),
            "fraction {} failures {:?}",
            report.fraction,
            report.failures
        );
    }

    #[test]
    fn short_forearm_fails_workspace() {
        let geom = DeltaGeometry {
            forearm_mm: 121.0,
            ..DeltaGeometry::default()
        };
        let report = validate_workspace(&geom).unwrap();
        assert!(!report.passed());
        assert!(report.fraction < 1.0);
    }

    #[test]
    fn zero_upper_arm_is_invalid() {
        let geom = DeltaGeometry {
            upper_arm_mm: 0.0,
            ..DeltaGeometry::default()
        };
        assert!(matches!(
            validate_workspace(&geom),
            Err(KinematicsError::InvalidGeometry(_))
        ));
    }
}
