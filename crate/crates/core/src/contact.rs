//! Contact simulation: tactile frame synthesis, the short-circuit safety
//! oracle, and the servo current model.
//!
//! This module is the ground truth that stands in for hardware. The end
//! effector carries two 10x10 tactile arrays left and right of the electrode
//! pair; the target presents two horizontal electrode bars. A misalignment
//! state (rotation about the approach axis plus a lateral offset) moves the
//! bars' pressing faces across the sensor grids: a vertical offset shifts
//! both patterns equally, a rotation shifts them in opposite directions, and
//! a horizontal offset slides the bar ends across the outer columns.
//!
//! The geometry is calibrated so that the rotation at which one charger
//! electrode starts bridging both target electrodes is 12 degrees, which
//! [`short_onset_angle`] verifies by bisection.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Sampling rate tag carried by every frame. Metadata only; the simulator is
/// stepped, not real-time.
pub const SENSOR_RATE_HZ: u32 = 120;

/// Grid dimension of one tactile array.
pub const GRID: usize = 10;

/// Relative pose error between the charger and target electrodes.
///
/// `dz_mm` is the commanded depth minus the true contact depth: zero or
/// positive means the faces are pressed together with that much penetration,
/// negative means free air.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentState {
    /// Rotation about the approach axis, degrees.
    pub phi_deg: f64,
    /// Horizontal offset, millimeters.
    pub dx_mm: f64,
    /// Vertical offset, millimeters.
    pub dy_mm: f64,
    /// Penetration depth, millimeters (negative = no contact).
    pub dz_mm: f64,
}

impl MisalignmentState {
    pub fn new(phi_deg: f64, dx_mm: f64, dy_mm: f64, dz_mm: f64) -> Self {
        Self {
            phi_deg,
            dx_mm,
            dy_mm,
            dz_mm,
        }
    }

    pub fn penetration_mm(&self) -> f64 {
        self.dz_mm
    }

    /// Whether the state lies in the envelope the simulator samples from:
    /// phi in [0, 15] degrees, offsets within +/-25 mm.
    pub fn in_simulator_range(&self) -> bool {
        (0.0..=15.0).contains(&self.phi_deg)
            && self.dx_mm.abs() <= 25.0
            && self.dy_mm.abs() <= 25.0
    }
}

/// One synthetic tactile sample: two 10x10 force grids in newtons.
///
/// Sensor 0 is the left array, sensor 1 the right. Row 0 is the top of the
/// array; cells below the 1 N detection floor read exactly zero and nothing
/// exceeds 9 N.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub sensors: [[[f64; GRID]; GRID]; 2],
    pub timestamp_hz: u32,
}

impl TactileFrame {
    pub fn zero() -> Self {
        Self {
            sensors: [[[0.0; GRID]; GRID]; 2],
            timestamp_hz: SENSOR_RATE_HZ,
        }
    }

    /// Flattens to the 200-wide classifier input: sensor 0 row-major, then
    /// sensor 1 row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * GRID * GRID);
        for sensor in &self.sensors {
            for row in sensor {
                out.extend_from_slice(row);
            }
        }
        out
    }

    pub fn from_flat(values: &[f64]) -> Option<Self> {
        if values.len() != 2 * GRID * GRID {
            return None;
        }
        let mut frame = Self::zero();
        for (i, &v) in values.iter().enumerate() {
            let (s, rest) = (i / (GRID * GRID), i % (GRID * GRID));
            frame.sensors[s][rest / GRID][rest % GRID] = v;
        }
        Some(frame)
    }

    pub fn is_zero(&self) -> bool {
        self.sensors.iter().flatten().flatten().all(|&v| v == 0.0)
    }

    /// Force-weighted mean row index of one sensor, `None` when dark.
    pub fn centroid_row(&self, sensor: usize) -> Option<f64> {
        let mut mass = 0.0;
        let mut moment = 0.0;
        for (r, row) in self.sensors[sensor].iter().enumerate() {
            for &v in row {
                mass += v;
                moment += v * r as f64;
            }
        }
        (mass > 0.0).then(|| moment / mass)
    }
}

/// Electrode and sensor geometry plus the render noise model.
///
/// Lengths in millimeters. The target presents two horizontal bars whose
/// centers sit `electrode_gap_mm` apart; each charger electrode nominally
/// mates face-on with one bar. The short-circuit oracle models each charger
/// electrode as its pressing centerline and each target electrode as the bar
/// extended to the midline between the pair (the conductor envelope), which
/// puts the bridging onset for this shape at 12 degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectrodePlan {
    /// Charger electrode footprint: length along the electrode axis, height.
    pub charger_electrode_mm: (f64, f64),
    /// Target electrode bar: length, height of the pressing face.
    pub target_bar_mm: (f64, f64),
    /// Vertical distance between the two target bar centers.
    pub electrode_gap_mm: f64,
    /// Side of one square tactile array (100 taxels over 5.8 cm^2).
    pub sensor_side_mm: f64,
    /// Horizontal distance from the effector center to each array center.
    pub sensor_offset_mm: f64,
    /// Beyond this lateral offset the faces cannot touch at all.
    pub contact_envelope_mm: f64,
    /// Nominal face force once the hold penetration is reached, newtons.
    pub nominal_force_n: f64,
    /// Penetration at which the effector rests against the electrodes.
    pub hold_penetration_mm: f64,
    /// Weak force gain past the hold point, N/mm. Deliberately small: depth
    /// overload is barely visible in pressure data, matching the decision to
    /// police depth with servo current instead.
    pub depth_gain_n_per_mm: f64,
    /// Log-normal sigma of the per-cell multiplicative gain.
    pub noise_sigma: f64,
    /// Probability that a cell drops to zero (salt dropout).
    pub dropout: f64,
}

impl Default for ElectrodePlan {
    fn default() -> Self {
        Self {
            charger_electrode_mm: (40.0, 3.2),
            target_bar_mm: (60.0, 3.2),
            electrode_gap_mm: 8.5,
            sensor_side_mm: 580.0f64.sqrt(),
            sensor_offset_mm: 18.0,
            contact_envelope_mm: 10.0,
            nominal_force_n: 5.0,
            hold_penetration_mm: 15.0,
            depth_gain_n_per_mm: 0.05,
            noise_sigma: 0.15,
            dropout: 0.02,
        }
    }
}

/// Force ceiling of one taxel, newtons.
pub const FORCE_MAX_N: f64 = 9.0;
/// Detection floor: anything weaker reads zero.
pub const FORCE_FLOOR_N: f64 = 1.0;

impl ElectrodePlan {
    fn pressure_n(&self, penetration_mm: f64) -> f64 {
        if penetration_mm < 0.0 {
            0.0
        } else if penetration_mm < self.hold_penetration_mm {
            self.nominal_force_n * penetration_mm / self.hold_penetration_mm
        } else {
            self.nominal_force_n
                + self.depth_gain_n_per_mm * (penetration_mm - self.hold_penetration_mm)
        }
    }

    /// Checks the calibration invariant: the Safe->Short onset at zero offset
    /// must sit at 12.0 +/- 0.5 degrees.
    pub fn validate(&self) -> Result<(), String> {
        let onset = short_onset_angle(self);
        if (onset - 12.0).abs() > 0.5 {
            return Err(format!(
                "short-circuit onset {onset:.3} deg outside 12.0 +/- 0.5"
            ));
        }
        Ok(())
    }
}

/// Verdict of the geometric safety oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyVerdict {
    Safe,
    Short,
    NoContact,
}

impl std::fmt::Display for SafetyVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SafetyVerdict::Safe => "safe",
            SafetyVerdict::Short => "short",
            SafetyVerdict::NoContact => "nocontact",
        };
        f.write_str(s)
    }
}

/// Servo current as a function of penetration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurrentModel {
    /// Draw during free motion, amperes.
    pub free_current_a: f64,
    /// Extra draw per millimeter of penetration.
    pub slope_a_per_mm: f64,
    /// Firm-but-safe band: resting here holds for hours without overheating.
    pub hold_band_a: (f64, f64),
    /// Above this the servos overheat within minutes.
    pub overheat_threshold_a: f64,
}

impl Default for CurrentModel {
    fn default() -> Self {
        Self {
            free_current_a: 0.10,
            // slope * 5 mm step = 0.1 A < hold band width, so the docking
            // loop cannot step over the band.
            slope_a_per_mm: 0.02,
            hold_band_a: (0.4, 0.5),
            overheat_threshold_a: 0.5,
        }
    }
}

/// Consumed current for a penetration depth; negative depth is free motion.
pub fn servo_current(model: &CurrentModel, penetration_mm: f64) -> f64 {
    if penetration_mm < 0.0 {
        model.free_current_a
    } else {
        model.free_current_a + model.slope_a_per_mm * penetration_mm
    }
}

/// Renders the two tactile arrays for a misalignment state, without noise.
///
/// Pure rasterization: per-cell fractional coverage of the target bars'
/// pressing faces (4x4 supersampling) scaled by the penetration pressure,
/// then floored and clamped to the sensor range. Used directly by tests that
/// need the geometric signal and internally by [`render_frame`].
pub fn render_frame_clean(plan: &ElectrodePlan, state: &MisalignmentState) -> TactileFrame {
    let mut frame = TactileFrame::zero();
    if !in_contact(plan, state) {
        return frame;
    }
    let pressure = plan.pressure_n(state.penetration_mm());
    let (sin_phi, cos_phi) = (state.phi_deg.to_radians()).sin_cos();
    let half_len = plan.target_bar_mm.0 / 2.0;
    let half_h = plan.target_bar_mm.1 / 2.0;
    let bar_centers = [plan.electrode_gap_mm / 2.0, -plan.electrode_gap_mm / 2.0];
    let cell = plan.sensor_side_mm / GRID as f64;
    const SS: usize = 4;
    for (s, sensor) in frame.sensors.iter_mut().enumerate() {
        let x_center = if s == 0 {
            -plan.sensor_offset_mm
        } else {
            plan.sensor_offset_mm
        };
        for (r, row) in sensor.iter_mut().enumerate() {
            for (c, out) in row.iter_mut().enumerate() {
                let mut hits = 0usize;
                for i in 0..SS {
                    for j in 0..SS {
                        let qx = x_center - plan.sensor_side_mm / 2.0
                            + (c as f64 + (j as f64 + 0.5) / SS as f64) * cell;
                        let qy = plan.sensor_side_mm / 2.0
                            - (r as f64 + (i as f64 + 0.5) / SS as f64) * cell;
                        // Sensor point in the target frame.
                        let tx = qx * cos_phi - qy * sin_phi + state.dx_mm;
                        let ty = qx * sin_phi + qy * cos_phi + state.dy_mm;
                        if tx.abs() <= half_len
                            && bar_centers.iter().any(|&bc| (ty - bc).abs() <= half_h)
                        {
                            hits += 1;
                        }
                    }
                }
                let force = pressure * hits as f64 / (SS * SS) as f64;
                *out = quantize_cell(force);
            }
        }
    }
    frame
}

/// Renders a tactile frame with the plan's noise model applied.
///
/// Deterministic: the same (plan, state, seed) triple always produces a
/// bit-identical frame. Per-cell noise is a log-normal gain plus salt
/// dropout, drawn in a fixed sensor/row/column order.
pub fn render_frame(plan: &ElectrodePlan, state: &MisalignmentState, seed: u64) -> TactileFrame {
    let mut frame = render_frame_clean(plan, state);
    if !in_contact(plan, state) {
        return frame;
    }
    let mut gen: ChaCha8Rng = rng::from_seed(seed);
    for sensor in frame.sensors.iter_mut() {
        for row in sensor.iter_mut() {
            for cell in row.iter_mut() {
                let gain = (plan.noise_sigma * rng::standard_normal(&mut gen)).exp();
                let drop = rng::uniform(&mut gen) < plan.dropout;
                let force = if drop { 0.0 } else { *cell * gain };
                *cell = quantize_cell(force);
            }
        }
    }
    frame
}

fn in_contact(plan: &ElectrodePlan, state: &MisalignmentState) -> bool {
    state.penetration_mm() >= 0.0
        && state.dx_mm.abs() <= plan.contact_envelope_mm
        && state.dy_mm.abs() <= plan.contact_envelope_mm
}

fn quantize_cell(force: f64) -> f64 {
    if force < FORCE_FLOOR_N {
        0.0
    } else {
        force.min(FORCE_MAX_N)
    }
}

/// Geometric short-circuit decision for a state.
///
/// `NoContact` when the lateral offset exceeds the contact envelope or the
/// faces are apart; `Short` when either charger electrode's contact line,
/// rotated and translated into the target frame, touches the conductor
/// envelopes of both target electrodes; `Safe` otherwise.
pub fn short_circuit_oracle(plan: &ElectrodePlan, state: &MisalignmentState) -> SafetyVerdict {
    if !in_contact(plan, state) {
        return SafetyVerdict::NoContact;
    }
    let half_len_t = plan.target_bar_mm.0 / 2.0;
    // Conductor envelope: each target bar extended inward to the midline.
    let zone_outer = plan.electrode_gap_mm / 2.0 + plan.target_bar_mm.1 / 2.0;
    let (sin_phi, cos_phi) = (state.phi_deg.to_radians()).sin_cos();
    let half_len_c = plan.charger_electrode_mm.0 / 2.0;
    for bar_center in [plan.electrode_gap_mm / 2.0, -plan.electrode_gap_mm / 2.0] {
        let ends = [-half_len_c, half_len_c].map(|x| {
            (
                x * cos_phi - bar_center * sin_phi + state.dx_mm,
                x * sin_phi + bar_center * cos_phi + state.dy_mm,
            )
        });
        let touches_top = segment_hits_rect(ends, -half_len_t, half_len_t, 0.0, zone_outer);
        let touches_bottom = segment_hits_rect(ends, -half_len_t, half_len_t, -zone_outer, 0.0);
        if touches_top && touches_bottom {
            return SafetyVerdict::Short;
        }
    }
    SafetyVerdict::Safe
}

/// Liang-Barsky segment/rectangle overlap (closed rectangle).
fn segment_hits_rect(ends: [(f64, f64); 2], x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
    let (px, py) = ends[0];
    let (dx, dy) = (ends[1].0 - px, ends[1].1 - py);
    let mut t_min = 0.0f64;
    let mut t_max = 1.0f64;
    for (p, q0, q1) in [(dx, x0 - px, x1 - px), (dy, y0 - py, y1 - py)] {
        if p.abs() < 1e-12 {
            if q0 > 0.0 || q1 < 0.0 {
                return false;
            }
            continue;
        }
        let (mut t0, mut t1) = (q0 / p, q1 / p);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_min = t_min.max(t0);
        t_max = t_max.min(t1);
        if t_min > t_max {
            return false;
        }
    }
    true
}

/// Locates the Safe->Short transition angle at zero lateral offset by
/// bisection over phi in [0, 15] degrees.
pub fn short_onset_angle(plan: &ElectrodePlan) -> f64 {
    let probe = |phi: f64| {
        short_circuit_oracle(
            plan,
            &MisalignmentState::new(phi, 0.0, 0.0, plan.hold_penetration_mm),
        ) == SafetyVerdict::Short
    };
    let (mut lo, mut hi) = (0.0f64, 15.0f64);
    if probe(lo) {
        return lo;
    }
    if !probe(hi) {
        return f64::INFINITY;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if probe(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn contact_state(phi: f64, dx: f64, dy: f64) -> MisalignmentState {
        MisalignmentState::new(phi, dx, dy, 15.0)
    }

    #[test]
    fn aligned_frames_mirror_across_the_pair() {
        let plan = ElectrodePlan::default();
        let frame = render_frame_clean(&plan, &contact_state(0.0, 0.0, 0.0));
        assert!(!frame.is_zero());
        for r in 0..GRID {
            for c in 0..GRID {
                assert_abs_diff_eq!(
                    frame.sensors[0][r][c],
                    frame.sensors[1][r][GRID - 1 - c],
                    epsilon = 1e-9
                );
            }
        }
        let a = frame.centroid_row(0).unwrap();
        let b = frame.centroid_row(1).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn tilt_skews_the_pair_oppositely() {
        let plan = ElectrodePlan::default();
        let pos = render_frame_clean(&plan, &contact_state(4.0, 0.0, 0.0));
        let neg = render_frame_clean(&plan, &contact_state(-4.0, 0.0, 0.0));
        let skew_pos = pos.centroid_row(0).unwrap() - pos.centroid_row(1).unwrap();
        let skew_neg = neg.centroid_row(0).unwrap() - neg.centroid_row(1).unwrap();
        assert!(skew_pos.abs() > 1e-3);
        assert!(skew_pos * skew_neg < 0.0, "{skew_pos} vs {skew_neg}");
    }

    #[test]
    fn no_contact_renders_all_zero() {
        let plan = ElectrodePlan::default();
        let apart = MisalignmentState::new(3.0, 4.0, -2.0, -1.0);
        assert!(render_frame(&plan, &apart, 7).is_zero());
        let off_envelope = contact_state(0.0, 0.0, 15.0);
        assert!(render_frame(&plan, &off_envelope, 7).is_zero());
    }

    #[test]
    fn frames_are_deterministic() {
        let plan = ElectrodePlan::default();
        let state = contact_state(2.5, 3.0, -4.0);
        let a = render_frame(&plan, &state, 1234);
        let b = render_frame(&plan, &state, 1234);
        assert_eq!(a, b);
        let c = render_frame(&plan, &state, 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn cells_respect_floor_and_ceiling() {
        let plan = ElectrodePlan::default();
        for seed in 0..20 {
            let state = contact_state(seed as f64 * 0.7, 2.0, -3.0);
            let frame = render_frame(&plan, &state, seed);
            for v in frame.flatten() {
                assert!(v == 0.0 || (FORCE_FLOOR_N..=FORCE_MAX_N).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn oracle_matches_reference_scenarios() {
        let plan = ElectrodePlan::default();
        assert_eq!(
            short_circuit_oracle(&plan, &contact_state(0.0, 0.0, 0.0)),
            SafetyVerdict::Safe
        );
        assert_eq!(
            short_circuit_oracle(&plan, &contact_state(14.0, 0.0, 0.0)),
            SafetyVerdict::Short
        );
        assert_eq!(
            short_circuit_oracle(&plan, &contact_state(0.0, 0.0, 15.0)),
            SafetyVerdict::NoContact
        );
    }

    #[test]
    fn onset_sits_at_the_critical_angle() {
        let plan = ElectrodePlan::default();
        let onset = short_onset_angle(&plan);
        assert!((11.5..=12.5).contains(&onset), "onset {onset}");
        plan.validate().unwrap();
        // Monotone: Safe strictly below, Short strictly above, up to 15 deg.
        for k in 0..=30 {
            let phi = k as f64 * 0.5;
            let verdict = short_circuit_oracle(&plan, &contact_state(phi, 0.0, 0.0));
            if phi < onset - 1e-6 {
                assert_eq!(verdict, SafetyVerdict::Safe, "phi {phi}");
            } else if phi > onset + 1e-6 {
                assert_eq!(verdict, SafetyVerdict::Short, "phi {phi}");
            }
        }
    }

    #[test]
    fn vertical_offset_alone_stays_safe() {
        let plan = ElectrodePlan::default();
        for dy in [-10.0, -5.0, 0.0, 5.0, 10.0] {
            assert_eq!(
                short_circuit_oracle(&plan, &contact_state(0.0, 0.0, dy)),
                SafetyVerdict::Safe,
                "dy {dy}"
            );
        }
    }

    #[test]
    fn current_model_reference_points() {
        let model = CurrentModel::default();
        assert_abs_diff_eq!(servo_current(&model, -5.0), 0.10);
        assert_abs_diff_eq!(servo_current(&model, 15.0), 0.40);
        assert_abs_diff_eq!(servo_current(&model, 25.0), 0.60);
        // Non-decreasing over a fine sweep.
        let mut last = f64::NEG_INFINITY;
        for k in -40..200 {
            let c = servo_current(&model, k as f64 * 0.25);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn angle_class_centers_have_distinct_skews() {
        let plan = ElectrodePlan::default();
        let mut skews = Vec::new();
        for k in 0..6 {
            let phi = k as f64 + 0.5;
            let frame = render_frame_clean(&plan, &contact_state(phi, 0.0, 0.0));
            let skew = frame.centroid_row(0).unwrap() - frame.centroid_row(1).unwrap();
            skews.push(skew);
        }
        for i in 0..skews.len() {
            for j in (i + 1)..skews.len() {
                assert!(
                    (skews[i] - skews[j]).abs() > 1e-6,
                    "classes {i} and {j} collide: {skews:?}"
                );
            }
        }
    }
}
