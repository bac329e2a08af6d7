//! Sectorised GBS antenna gain, urban micro/macro path loss and RSRP.
//!
//! Angles are in degrees. Zenith `theta` is 0 straight up and 90 at the
//! horizon; azimuth `phi` is measured from a sector's boresight. All
//! logarithms are base 10.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance_3d, Scenario, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("uav position coincides with gbs {0}")]
    CoincidentPositions(u32),
    #[error("altitude {0} m outside the modeled range [1.5, 300] m")]
    AltitudeOutOfRange(f64),
    #[error("scenario has no gbs")]
    NoGbs,
    #[error("unknown gbs id {0}")]
    UnknownGbs(u32),
    #[error("invalid radio configuration: {0}")]
    InvalidConfig(String),
}

/// Antenna and link-budget constants shared by every GBS in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub fc_ghz: f64,
    /// Reference signal power per GBS.
    pub p_ref_dbm: f64,
    pub ge_max_dbi: f64,
    /// Front-to-back ratio; also caps the combined element attenuation.
    pub a_m_db: f64,
    pub sla_v_db: f64,
    pub theta_3db: f64,
    pub phi_3db: f64,
    pub n_elements: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub downtilt_deg: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            fc_ghz: 2.0,
            p_ref_dbm: 15.2,
            ge_max_dbi: 8.0,
            a_m_db: 30.0,
            sla_v_db: 30.0,
            theta_3db: 65.0,
            phi_3db: 65.0,
            n_elements: 8,
            element_spacing: 0.5,
            downtilt_deg: 10.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        let bad = |m: &str| Err(RadioError::InvalidConfig(m.to_string()));
        if !(self.fc_ghz > 0.0) {
            return bad("fc_ghz must be positive");
        }
        if self.n_elements == 0 {
            return bad("n_elements must be at least 1");
        }
        if !(self.theta_3db > 0.0 && self.phi_3db > 0.0) {
            return bad("beamwidths must be positive");
        }
        if !(self.a_m_db >= 0.0 && self.sla_v_db >= 0.0 && self.element_spacing > 0.0) {
            return bad("attenuation caps must be non-negative and spacing positive");
        }
        Ok(())
    }

    /// Peak of element gain plus array factor.
    pub fn max_gain_db(&self) -> f64 {
        self.ge_max_dbi + 10.0 * (self.n_elements as f64).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GbsClass {
    /// Antenna below the surrounding rooftops.
    Micro,
    /// Antenna above the surrounding rooftops.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbsConfig {
    pub id: u32,
    pub position: Vec3,
    pub class: GbsClass,
    /// Boresight azimuth of each of the three sectors, degrees from +x.
    pub sector_azimuths: [f64; 3],
}

impl GbsConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !self.position.is_finite() || self.sector_azimuths.iter().any(|a| !a.is_finite()) {
            return Err(RadioError::InvalidConfig(format!("gbs {} has non-finite fields", self.id)));
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                if wrap_degrees(self.sector_azimuths[i] - self.sector_azimuths[j]).abs() < 1e-9 {
                    return Err(RadioError::InvalidConfig(format!(
                        "gbs {} has coincident sector azimuths",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// Zenith angle in [0, 180].
    pub theta: f64,
    /// Azimuth from boresight in (-180, 180].
    pub phi: f64,
}

impl AnglePair {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }
}

/// Wraps an angle into (-180, 180].
pub fn wrap_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn vertical_pattern(theta: f64, cfg: &RadioConfig) -> f64 {
    -(12.0 * ((theta - 90.0) / cfg.theta_3db).powi(2)).min(cfg.sla_v_db)
}

pub fn horizontal_pattern(phi: f64, cfg: &RadioConfig) -> f64 {
    -(12.0 * (phi / cfg.phi_3db).powi(2)).min(cfg.a_m_db)
}

/// Single-element gain in dBi, angles in the panel frame.
pub fn element_gain(angles: AnglePair, cfg: &RadioConfig) -> f64 {
    let combined = vertical_pattern(angles.theta, cfg) + horizontal_pattern(angles.phi, cfg);
    cfg.ge_max_dbi - (-combined).min(cfg.a_m_db)
}

/// Lower clamp on the array factor; exact nulls would otherwise be -inf.
pub const ARRAY_FACTOR_FLOOR_DB: f64 = -30.0;

/// Vertical uniform linear array factor in dB, electrically steered to
/// zenith `90 + downtilt`. Independent of azimuth.
pub fn array_factor(angles: AnglePair, cfg: &RadioConfig) -> f64 {
    let n = cfg.n_elements;
    if n == 1 {
        return 0.0;
    }
    let two_pi_d = 2.0 * std::f64::consts::PI * cfg.element_spacing;
    let steer = (90.0 + cfg.downtilt_deg).to_radians().cos();
    let obs = angles.theta.to_radians().cos();
    let amp = 1.0 / (n as f64).sqrt();
    let (mut re, mut im) = (0.0, 0.0);
    for k in 0..n {
        // w_k * exp(j 2 pi k d cos(theta)) with w_k = exp(-j 2 pi k d cos(steer)) / sqrt(n)
        let phase = two_pi_d * k as f64 * (obs - steer);
        re += amp * phase.cos();
        im += amp * phase.sin();
    }
    let power = re * re + im * im;
    (10.0 * power.log10()).max(ARRAY_FACTOR_FLOOR_DB)
}

/// Zenith/azimuth of `target` as seen from `origin`, in degrees.
pub fn global_angles(origin: Vec3, target: Vec3) -> (f64, f64) {
    let d = target - origin;
    let r = d.norm();
    let theta = (d.z / r).clamp(-1.0, 1.0).acos().to_degrees();
    let azimuth = d.y.atan2(d.x).to_degrees();
    (theta, azimuth)
}

/// Gain of one sector toward `uav_pos`: element gain in the mechanically
/// tilted panel frame plus the electrically steered array factor.
pub fn sector_gain(gbs: &GbsConfig, sector: usize, uav_pos: Vec3, cfg: &RadioConfig) -> f64 {
    let (theta, azimuth) = global_angles(gbs.position, uav_pos);
    let phi = wrap_degrees(azimuth - gbs.sector_azimuths[sector]);
    let panel = AnglePair::new((theta - cfg.downtilt_deg).clamp(0.0, 180.0), phi);
    element_gain(panel, cfg) + array_factor(AnglePair::new(theta, phi), cfg)
}

/// Best-sector antenna gain of `gbs` toward `uav_pos`.
pub fn antenna_gain(gbs: &GbsConfig, uav_pos: Vec3, cfg: &RadioConfig) -> Result<f64, RadioError> {
    if distance_3d(gbs.position, uav_pos) == 0.0 {
        return Err(RadioError::CoincidentPositions(gbs.id));
    }
    Ok((0..3)
        .map(|s| sector_gain(gbs, s, uav_pos, cfg))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Free-space loss, `d` clamped to at least 1 m.
pub fn fspl(d: f64, fc_ghz: f64) -> f64 {
    32.4 + 20.0 * d.max(1.0).log10() + 20.0 * fc_ghz.log10()
}

/// Upper edge of the low altitude bracket.
pub const LOW_BRACKET_TOP: f64 = 22.5;
pub const MIN_ALTITUDE: f64 = 1.5;
pub const MAX_ALTITUDE: f64 = 300.0;
/// Macro NLoS above this altitude is evaluated at this altitude.
pub const MACRO_NLOS_MAX_ALTITUDE: f64 = 100.0;

fn check_altitude(z: f64) -> Result<bool, RadioError> {
    if !(MIN_ALTITUDE..=MAX_ALTITUDE).contains(&z) {
        return Err(RadioError::AltitudeOutOfRange(z));
    }
    Ok(z <= LOW_BRACKET_TOP)
}

pub fn path_loss_los(class: GbsClass, d: f64, z: f64, fc_ghz: f64) -> Result<f64, RadioError> {
    let low = check_altitude(z)?;
    let ld = d.max(1.0).log10();
    let lf = 20.0 * fc_ghz.log10();
    Ok(match (class, low) {
        (GbsClass::Micro, true) => 32.4 + 21.0 * ld + lf,
        (GbsClass::Micro, false) => {
            let w2 = 30.9 + (22.25 - 0.5 * z.log10()) * ld + lf;
            fspl(d, fc_ghz).max(w2)
        }
        (GbsClass::Macro, true) => 32.4 + 20.0 * ld + lf,
        (GbsClass::Macro, false) => 28.0 + 22.0 * ld + lf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub db: f64,
    /// Set when a macro NLoS link above 100 m was evaluated at 100 m.
    pub altitude_clamped: bool,
}

pub fn path_loss_nlos(class: GbsClass, d: f64, z: f64, fc_ghz: f64) -> Result<PathLoss, RadioError> {
    let low = check_altitude(z)?;
    let ld = d.max(1.0).log10();
    let lf = 20.0 * fc_ghz.log10();
    let guarded = |w: f64| -> Result<PathLoss, RadioError> {
        Ok(PathLoss {
            db: path_loss_los(class, d, z, fc_ghz)?.max(w),
            altitude_clamped: false,
        })
    };
    match (class, low) {
        (GbsClass::Micro, true) => guarded(22.4 + 35.3 * ld + 21.3 * fc_ghz.log10() - 0.3 * (z - 1.5)),
        (GbsClass::Micro, false) => guarded(32.4 + (43.2 - 7.6 * z.log10()) * ld + lf),
        (GbsClass::Macro, true) => guarded(13.54 + 39.08 * ld + lf - 0.6 * (z - 1.5)),
        (GbsClass::Macro, false) => {
            let zc = z.min(MACRO_NLOS_MAX_ALTITUDE);
            let w8 = -17.5
                + (46.0 - 7.0 * zc.log10()) * ld
                + 20.0 * (40.0 * std::f64::consts::PI * fc_ghz / 3.0).log10();
            Ok(PathLoss {
                db: w8,
                altitude_clamped: z > MACRO_NLOS_MAX_ALTITUDE,
            })
        }
    }
}

/// Full link evaluation between one GBS and a UAV position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub gain_db: f64,
    pub path_loss_db: f64,
    pub los: bool,
    pub altitude_clamped: bool,
    pub rsrp_dbm: f64,
}

pub fn link_budget(gbs: &GbsConfig, scenario: &Scenario, uav_pos: Vec3) -> Result<LinkBudget, RadioError> {
    let cfg = &scenario.radio;
    let gain_db = antenna_gain(gbs, uav_pos, cfg)?;
    let d = distance_3d(gbs.position, uav_pos);
    let z = uav_pos.z;
    let los = scenario.is_los(gbs.position, uav_pos);
    let (path_loss_db, altitude_clamped) = if los {
        (path_loss_los(gbs.class, d, z, cfg.fc_ghz)?, false)
    } else {
        let pl = path_loss_nlos(gbs.class, d, z, cfg.fc_ghz)?;
        (pl.db, pl.altitude_clamped)
    };
    Ok(LinkBudget {
        gain_db,
        path_loss_db,
        los,
        altitude_clamped,
        rsrp_dbm: rsrp_from_budget(cfg.p_ref_dbm, gain_db, path_loss_db),
    })
}

pub fn rsrp_from_budget(p_ref_dbm: f64, gain_db: f64, path_loss_db: f64) -> f64 {
    p_ref_dbm + gain_db - path_loss_db
}

pub fn rsrp(gbs: &GbsConfig, scenario: &Scenario, uav_pos: Vec3) -> Result<f64, RadioError> {
    link_budget(gbs, scenario, uav_pos).map(|l| l.rsrp_dbm)
}

pub fn rsrp_by_id(scenario: &Scenario, id: u32, uav_pos: Vec3) -> Result<f64, RadioError> {
    let gbs = scenario.gbs(id).ok_or(RadioError::UnknownGbs(id))?;
    rsrp(gbs, scenario, uav_pos)
}

pub fn all_rsrp(scenario: &Scenario, uav_pos: Vec3) -> Result<Vec<(u32, f64)>, RadioError> {
    if scenario.gbs_list.is_empty() {
        return Err(RadioError::NoGbs);
    }
    scenario
        .gbs_list
        .iter()
        .map(|g| rsrp(g, scenario, uav_pos).map(|v| (g.id, v)))
        .collect()
}

/// Argmax of a measurement list; ties go to the lowest id.
pub fn argmax_rsrp(measurements: &[(u32, f64)]) -> Option<(u32, f64)> {
    measurements.iter().copied().fold(None, |best, (id, v)| match best {
        Some((bid, bv)) if bv > v || (bv == v && bid < id) => Some((bid, bv)),
        _ => Some((id, v)),
    })
}

pub fn best_gbs(scenario: &Scenario, uav_pos: Vec3) -> Result<(u32, f64), RadioError> {
    let all = all_rsrp(scenario, uav_pos)?;
    argmax_rsrp(&all).ok_or(RadioError::NoGbs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Building;
    use approx::assert_abs_diff_eq;

    const EPS: f64 = 1e-6;

    fn cfg() -> RadioConfig {
        RadioConfig::default()
    }

    fn one_gbs_scenario() -> Scenario {
        Scenario {
            area: [1000.0, 1000.0],
            z_min: 10.0,
            z_max: 120.0,
            time_limit_steps: 100,
            source: Vec3::new(100.0, 500.0, 30.0),
            destination: Vec3::new(900.0, 500.0, 30.0),
            buildings: vec![],
            gbs_list: vec![GbsConfig {
                id: 0,
                position: Vec3::new(500.0, 500.0, 30.0),
                class: GbsClass::Macro,
                sector_azimuths: [0.0, 120.0, 240.0],
            }],
            seed: 0,
            radio: cfg(),
        }
    }

    #[test]
    fn element_gain_examples() {
        assert_abs_diff_eq!(element_gain(AnglePair::new(90.0, 0.0), &cfg()), 8.0, epsilon = EPS);
        assert_abs_diff_eq!(element_gain(AnglePair::new(90.0, 65.0), &cfg()), -4.0, epsilon = EPS);
        assert_abs_diff_eq!(element_gain(AnglePair::new(90.0, 180.0), &cfg()), -22.0, epsilon = EPS);
    }

    #[test]
    fn array_factor_examples() {
        let mut c = cfg();
        c.n_elements = 1;
        for th in [0.0, 45.0, 90.0, 135.0, 180.0] {
            assert_eq!(array_factor(AnglePair::new(th, 0.0), &c), 0.0);
        }
        let c = cfg();
        let steer = 90.0 + c.downtilt_deg;
        assert_abs_diff_eq!(
            array_factor(AnglePair::new(steer, 0.0), &c),
            10.0 * 8f64.log10(),
            epsilon = EPS
        );
        assert_abs_diff_eq!(10.0 * 8f64.log10(), 9.030_899_869_919_435, epsilon = 1e-12);
        // first null: psi = 2 pi d (cos theta - cos steer) = 2 pi / n
        let cos_null = steer.to_radians().cos() + 1.0 / (8.0 * c.element_spacing);
        let null_theta = cos_null.acos().to_degrees();
        assert!(array_factor(AnglePair::new(null_theta, 0.0), &c) <= -30.0 + 1e-9);
    }

    #[test]
    fn boresight_gain_at_steering_elevation() {
        let s = one_gbs_scenario();
        let g = &s.gbs_list[0];
        // 10 degrees below the horizon along sector 0's boresight (+x)
        let r = 100.0;
        let tilt = s.radio.downtilt_deg.to_radians();
        let p = g.position + Vec3::new(r * tilt.cos(), 0.0, -r * tilt.sin());
        let gain = antenna_gain(g, p, &s.radio).unwrap();
        assert_abs_diff_eq!(gain, 8.0 + 10.0 * 8f64.log10(), epsilon = 1e-9);

        let above = g.position + Vec3::new(0.0, 0.0, 50.0);
        assert!(antenna_gain(g, above, &s.radio).unwrap() <= s.radio.max_gain_db());

        assert_eq!(
            antenna_gain(g, g.position, &s.radio),
            Err(RadioError::CoincidentPositions(0))
        );
    }

    #[test]
    fn gain_has_sector_symmetry() {
        let s = one_gbs_scenario();
        let g = &s.gbs_list[0];
        let rel = Vec3::new(130.0, 40.0, -12.0);
        let rot = |v: Vec3, deg: f64| {
            let (sn, cs) = deg.to_radians().sin_cos();
            Vec3::new(v.x * cs - v.y * sn, v.x * sn + v.y * cs, v.z)
        };
        let g0 = antenna_gain(g, g.position + rel, &s.radio).unwrap();
        for k in [120.0, 240.0] {
            let gk = antenna_gain(g, g.position + rot(rel, k), &s.radio).unwrap();
            assert_abs_diff_eq!(g0, gk, epsilon = 1e-9);
        }
    }

    #[test]
    fn fspl_examples() {
        assert_abs_diff_eq!(fspl(100.0, 2.0), 78.420_599_913_279_62, epsilon = EPS);
        assert_abs_diff_eq!(fspl(1.0, 1.0), 32.4, epsilon = EPS);
        assert_abs_diff_eq!(fspl(1000.0, 2.0), 98.420_599_913_279_62, epsilon = EPS);
        assert_eq!(fspl(0.2, 2.0), fspl(1.0, 2.0));
    }

    #[test]
    fn los_examples() {
        let l = path_loss_los(GbsClass::Micro, 100.0, 10.0, 2.0).unwrap();
        assert_abs_diff_eq!(l, 80.420_599_913_279_62, epsilon = EPS);
        let l = path_loss_los(GbsClass::Macro, 1000.0, 10.0, 2.0).unwrap();
        assert_abs_diff_eq!(l, 98.420_599_913_279_62, epsilon = EPS);
        let l = path_loss_los(GbsClass::Macro, 500.0, 100.0, 2.0).unwrap();
        assert_abs_diff_eq!(l, 28.0 + 22.0 * 500f64.log10() + 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 93.4, epsilon = 0.02);
    }

    #[test]
    fn nlos_examples() {
        let l = path_loss_nlos(GbsClass::Micro, 100.0, 10.0, 2.0).unwrap();
        assert_abs_diff_eq!(l.db, 22.4 + 70.6 + 21.3 * 2f64.log10() - 2.55, epsilon = 1e-12);
        assert_abs_diff_eq!(l.db, 96.862, epsilon = 1e-3);
        let l = path_loss_nlos(GbsClass::Macro, 100.0, 10.0, 2.0).unwrap();
        assert_abs_diff_eq!(l.db, 13.54 + 78.16 + 20.0 * 2f64.log10() - 5.1, epsilon = 1e-12);
        assert_abs_diff_eq!(l.db, 92.62, epsilon = 1e-3);
    }

    #[test]
    fn altitude_brackets_are_exact() {
        let at = path_loss_los(GbsClass::Macro, 300.0, 22.5, 2.0).unwrap();
        let above = path_loss_los(GbsClass::Macro, 300.0, 22.5 + 1e-9, 2.0).unwrap();
        assert_abs_diff_eq!(at, 32.4 + 20.0 * 300f64.log10() + 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(above, 28.0 + 22.0 * 300f64.log10() + 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert_eq!(
            path_loss_los(GbsClass::Micro, 10.0, 1.4, 2.0),
            Err(RadioError::AltitudeOutOfRange(1.4))
        );
        assert!(path_loss_nlos(GbsClass::Micro, 10.0, 300.1, 2.0).is_err());
    }

    #[test]
    fn macro_nlos_above_100m_is_clamped_and_flagged() {
        let hi = path_loss_nlos(GbsClass::Macro, 400.0, 150.0, 2.0).unwrap();
        let at = path_loss_nlos(GbsClass::Macro, 400.0, 100.0, 2.0).unwrap();
        assert!(hi.altitude_clamped);
        assert!(!at.altitude_clamped);
        assert_eq!(hi.db, at.db);
    }

    #[test]
    fn rsrp_arithmetic() {
        assert_abs_diff_eq!(rsrp_from_budget(15.2, 10.0, 90.0), -64.8, epsilon = 1e-12);
        assert_abs_diff_eq!(
            rsrp_from_budget(15.2, 13.0, 90.0) - rsrp_from_budget(15.2, 10.0, 90.0),
            3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn blocking_never_raises_rsrp_on_guarded_branches() {
        let mut s = one_gbs_scenario();
        s.gbs_list[0].class = GbsClass::Micro;
        let p = Vec3::new(800.0, 500.0, 20.0);
        let open = rsrp(&s.gbs_list[0], &s, p).unwrap();
        s.buildings.push(Building::new(600.0, 480.0, 650.0, 520.0, 80.0));
        let blocked = rsrp(&s.gbs_list[0], &s, p).unwrap();
        assert!(blocked <= open);
        assert!(!link_budget(&s.gbs_list[0], &s, p).unwrap().los);
    }

    #[test]
    fn best_gbs_tie_breaks_low_id() {
        assert_eq!(argmax_rsrp(&[(3, -70.0), (1, -70.0), (2, -90.0)]), Some((1, -70.0)));
        assert_eq!(argmax_rsrp(&[(5, -70.0)]), Some((5, -70.0)));
        let mut s = one_gbs_scenario();
        let p = Vec3::new(700.0, 500.0, 30.0);
        assert_eq!(best_gbs(&s, p).unwrap().0, 0);
        let mut twin = s.gbs_list[0].clone();
        twin.id = 7;
        s.gbs_list.insert(0, twin);
        assert_eq!(best_gbs(&s, p).unwrap().0, 0);
        s.gbs_list.clear();
        assert_eq!(best_gbs(&s, p), Err(RadioError::NoGbs));
    }
}
