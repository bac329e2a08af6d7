//! World geometry: axis-aligned buildings, segment/ray queries and scenario I/O.
//!
//! Coordinates are meters with `z` as altitude above a flat ground plane at
//! `z = 0`. The flyable area spans `[0, w] x [0, h]` horizontally.

use std::fs;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{GbsClass, GbsConfig, RadioConfig};
use crate::rng::rng_from_seed;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies inside a building")]
    InsideBuilding { x: f64, y: f64, z: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario generation failed: {0}")]
    Generation(String),
}

/// A point or direction in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const DOWN: Vec3 = Vec3 { x: 0.0, y: 0.0, z: -1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

pub fn distance_3d(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm()
}

/// Axis-aligned box standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    #[serde(rename = "min")]
    pub min_corner: Vec3,
    #[serde(rename = "max")]
    pub max_corner: Vec3,
}

impl Building {
    /// Footprint `[x0, x1] x [y0, y1]` with roof at `height`.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, height: f64) -> Self {
        Self {
            min_corner: Vec3::new(x0, y0, 0.0),
            max_corner: Vec3::new(x1, y1, height),
        }
    }

    pub fn height(&self) -> f64 {
        self.max_corner.z
    }

    /// Strict interior membership; points on a face are outside.
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| self.min_corner.axis(i) < p.axis(i) && p.axis(i) < self.max_corner.axis(i))
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let (lo, hi) = (self.min_corner, self.max_corner);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(GeometryError::InvalidScenario("non-finite building corner".into()));
        }
        if lo.z != 0.0 {
            return Err(GeometryError::InvalidScenario("building must stand on z = 0".into()));
        }
        if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
            return Err(GeometryError::InvalidScenario(format!(
                "building corners not ordered: min {:?} max {:?}",
                lo.to_array(),
                hi.to_array()
            )));
        }
        Ok(())
    }

    /// Distance along `dir` (unit) from `origin` to the box, if hit.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            let o = origin.axis(i);
            let d = dir.axis(i);
            let (lo, hi) = (self.min_corner.axis(i), self.max_corner.axis(i));
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let t0 = (lo - o) / d;
                let t1 = (hi - o) / d;
                let (a, b) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                t_near = t_near.max(a);
                t_far = t_far.min(b);
            }
        }
        if t_near > t_far || t_far < 0.0 {
            None
        } else {
            Some(t_near.max(0.0))
        }
    }
}

/// True iff the open segment `p0`-`p1` passes through the open interior of `b`.
/// Touching a face, edge or corner does not count.
pub fn segment_intersects_building(p0: Vec3, p1: Vec3, b: &Building) -> bool {
    let d = p1 - p0;
    let mut t_enter = 0.0_f64;
    let mut t_exit = 1.0_f64;
    for i in 0..3 {
        let o = p0.axis(i);
        let di = d.axis(i);
        let (lo, hi) = (b.min_corner.axis(i), b.max_corner.axis(i));
        if di == 0.0 {
            if !(lo < o && o < hi) {
                return false;
            }
        } else {
            let t0 = (lo - o) / di;
            let t1 = (hi - o) / di;
            let (a, c) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            t_enter = t_enter.max(a);
            t_exit = t_exit.min(c);
            if t_enter >= t_exit {
                return false;
            }
        }
    }
    t_enter < t_exit
}

/// Sensor reading of the closest obstacle around the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleReading {
    pub distance: f64,
    pub direction: Vec3,
}

/// Sensing defaults: 16 rays out to 50 m.
pub const DEFAULT_SENSOR_RAYS: usize = 16;
pub const DEFAULT_SENSOR_RANGE: f64 = 50.0;

/// Ray directions used by [`Scenario::nearest_obstacle`]: the six axis
/// directions first (down, up, +x, -x, +y, -y), then a Fibonacci lattice over
/// the sphere for the remainder. Ties resolve to the earlier ray.
pub fn sensor_directions(n_rays: usize) -> Vec<Vec3> {
    let axes = [
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
    ];
    let mut dirs: Vec<Vec3> = axes.iter().copied().take(n_rays).collect();
    let rest = n_rays.saturating_sub(axes.len());
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    for k in 0..rest {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / rest as f64;
        let r = (1.0 - z * z).sqrt();
        let a = golden * k as f64;
        dirs.push(Vec3::new(r * a.cos(), r * a.sin(), z));
    }
    dirs
}

/// World description for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Horizontal extents `[w, h]`.
    pub area: [f64; 2],
    pub z_min: f64,
    pub z_max: f64,
    pub time_limit_steps: usize,
    pub source: Vec3,
    pub destination: Vec3,
    pub buildings: Vec<Building>,
    #[serde(rename = "gbs")]
    pub gbs_list: Vec<GbsConfig>,
    pub seed: u64,
    #[serde(default)]
    pub radio: RadioConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |m: String| Err(GeometryError::InvalidScenario(m));
        let [w, h] = self.area;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return invalid(format!("area extents must be positive, got [{w}, {h}]"));
        }
        if !(self.z_min < self.z_max) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return invalid(format!("z_min {} must be below z_max {}", self.z_min, self.z_max));
        }
        if self.time_limit_steps == 0 {
            return invalid("time_limit_steps must be positive".into());
        }
        for b in &self.buildings {
            b.validate()?;
        }
        for (name, p) in [("source", self.source), ("destination", self.destination)] {
            if !p.is_finite() || !self.in_area(p) {
                return invalid(format!("{name} {:?} outside area bounds", p.to_array()));
            }
            if self.inside_any_building(p) {
                return invalid(format!("{name} {:?} lies inside a building", p.to_array()));
            }
        }
        let mut ids: Vec<u32> = self.gbs_list.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return invalid("duplicate gbs id".into());
        }
        for g in &self.gbs_list {
            g.validate().map_err(|e| GeometryError::InvalidScenario(e.to_string()))?;
        }
        self.radio
            .validate()
            .map_err(|e| GeometryError::InvalidScenario(e.to_string()))?;
        Ok(())
    }

    pub fn in_area(&self, p: Vec3) -> bool {
        p.x >= 0.0 && p.x <= self.area[0] && p.y >= 0.0 && p.y <= self.area[1]
    }

    pub fn inside_any_building(&self, p: Vec3) -> bool {
        self.buildings.iter().any(|b| b.contains(p))
    }

    /// Line-of-sight between `a` and `b`; symmetric in its arguments.
    pub fn is_los(&self, a: Vec3, b: Vec3) -> bool {
        if a == b {
            return !self.inside_any_building(a);
        }
        !self
            .buildings
            .iter()
            .any(|bld| segment_intersects_building(a, b, bld))
    }

    /// Shortest ray hit against buildings, the ground plane and the area walls.
    pub fn nearest_obstacle(
        &self,
        p: Vec3,
        max_range: f64,
        n_rays: usize,
    ) -> Result<ObstacleReading, GeometryError> {
        if self.inside_any_building(p) {
            return Err(GeometryError::InsideBuilding { x: p.x, y: p.y, z: p.z });
        }
        let mut best = ObstacleReading {
            distance: max_range,
            direction: Vec3::DOWN,
        };
        let mut hit = false;
        for dir in sensor_directions(n_rays) {
            let t = self.ray_distance(p, dir);
            if t <= max_range && (!hit || t < best.distance) {
                best = ObstacleReading { distance: t, direction: dir };
                hit = true;
            }
        }
        Ok(best)
    }

    fn ray_distance(&self, p: Vec3, dir: Vec3) -> f64 {
        let mut t = f64::INFINITY;
        if dir.z < 0.0 {
            t = t.min(p.z / -dir.z);
        }
        let [w, h] = self.area;
        if dir.x < 0.0 {
            t = t.min(p.x / -dir.x);
        } else if dir.x > 0.0 {
            t = t.min((w - p.x) / dir.x);
        }
        if dir.y < 0.0 {
            t = t.min(p.y / -dir.y);
        } else if dir.y > 0.0 {
            t = t.min((h - p.y) / dir.y);
        }
        for b in &self.buildings {
            if let Some(tb) = b.ray_hit(p, dir) {
                t = t.min(tb);
            }
        }
        t.max(0.0)
    }

    pub fn gbs(&self, id: u32) -> Option<&GbsConfig> {
        self.gbs_list.iter().find(|g| g.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, GeometryError> {
    Scenario::from_json(&fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    scenario.validate()?;
    fs::write(path, scenario.to_json())?;
    Ok(())
}

/// Knobs for the synthetic city generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub area_size: [f64; 2],
    pub n_buildings: usize,
    /// Roof heights are uniform in this range.
    pub height_range: [f64; 2],
    /// Footprint side lengths are uniform in this range.
    pub footprint_range: [f64; 2],
    /// Minimum horizontal gap between building footprints.
    pub street_width: f64,
    pub n_gbs: usize,
    pub micro_fraction: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub flight_altitude: f64,
    pub min_separation: f64,
    pub time_limit_steps: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            area_size: [1400.0, 1400.0],
            n_buildings: 60,
            height_range: [15.0, 90.0],
            footprint_range: [30.0, 80.0],
            street_width: 15.0,
            n_gbs: 30,
            micro_fraction: 0.3,
            z_min: 10.0,
            z_max: 120.0,
            flight_altitude: 30.0,
            min_separation: 200.0,
            time_limit_steps: 200,
        }
    }
}

const MICRO_HEIGHT: f64 = 10.0;
const MACRO_MAST: f64 = 3.0;
const OPEN_FIELD_MACRO_HEIGHT: f64 = 25.0;
const CLEARANCE: f64 = 5.0;
const MAX_ATTEMPTS_PER_ITEM: usize = 1000;

impl SyntheticParams {
    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::Generation(m.to_string()));
        if !(self.area_size[0] > 0.0 && self.area_size[1] > 0.0) {
            return bad("area_size must be positive");
        }
        if !(self.height_range[0] > MICRO_HEIGHT && self.height_range[0] <= self.height_range[1]) {
            return bad("height_range must be ordered with minimum above the micro antenna height (10 m)");
        }
        if !(self.footprint_range[0] > 0.0 && self.footprint_range[0] <= self.footprint_range[1]) {
            return bad("footprint_range must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.micro_fraction) {
            return bad("micro_fraction must lie in [0, 1]");
        }
        if !(self.z_min < self.z_max && (self.z_min..=self.z_max).contains(&self.flight_altitude)) {
            return bad("flight_altitude must lie in [z_min, z_max]");
        }
        if self.time_limit_steps == 0 || self.street_width < 0.0 || self.min_separation < 0.0 {
            return bad("time_limit_steps must be positive and distances non-negative");
        }
        Ok(())
    }
}

fn footprints_clear(a: &Building, b: &Building, gap: f64) -> bool {
    a.max_corner.x + gap <= b.min_corner.x
        || b.max_corner.x + gap <= a.min_corner.x
        || a.max_corner.y + gap <= b.min_corner.y
        || b.max_corner.y + gap <= a.min_corner.y
}

/// Deterministic random city: non-overlapping blocks, macro sites on
/// rooftops, micro sites on facades at 10 m, and free-space endpoints.
pub fn generate_synthetic_scenario(
    params: &SyntheticParams,
    seed: u64,
) -> Result<Scenario, GeometryError> {
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let [w, h] = params.area_size;

    let mut buildings: Vec<Building> = Vec::with_capacity(params.n_buildings);
    let mut attempts = 0;
    while buildings.len() < params.n_buildings {
        attempts += 1;
        if attempts > MAX_ATTEMPTS_PER_ITEM * params.n_buildings.max(1) {
            return Err(GeometryError::Generation(format!(
                "placed only {} of {} buildings",
                buildings.len(),
                params.n_buildings
            )));
        }
        let sx = rng.gen_range(params.footprint_range[0]..=params.footprint_range[1]);
        let sy = rng.gen_range(params.footprint_range[0]..=params.footprint_range[1]);
        if sx >= w || sy >= h {
            continue;
        }
        let x0 = rng.gen_range(0.0..(w - sx));
        let y0 = rng.gen_range(0.0..(h - sy));
        let height = rng.gen_range(params.height_range[0]..=params.height_range[1]);
        let cand = Building::new(x0, y0, x0 + sx, y0 + sy, height);
        if buildings
            .iter()
            .all(|b| footprints_clear(b, &cand, params.street_width))
        {
            buildings.push(cand);
        }
    }

    let n_micro = (params.n_gbs as f64 * params.micro_fraction).round() as usize;
    let mut gbs_list = Vec::with_capacity(params.n_gbs);
    for id in 0..params.n_gbs {
        let class = if id < n_micro { GbsClass::Micro } else { GbsClass::Macro };
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS_PER_ITEM {
            let p = place_gbs(&mut rng, class, &buildings, params);
            let clash = gbs_list
                .iter()
                .any(|g: &GbsConfig| distance_3d(g.position, p) < 1.0);
            if !clash && p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h
                && !buildings.iter().any(|b| b.contains(p))
            {
                placed = Some(p);
                break;
            }
        }
        let position = placed.ok_or_else(|| {
            GeometryError::Generation(format!("could not place gbs {id}"))
        })?;
        let base: f64 = rng.gen_range(0.0..120.0);
        gbs_list.push(GbsConfig {
            id: id as u32,
            position,
            class,
            sector_azimuths: [base, base + 120.0, base + 240.0],
        });
    }

    let margin = CLEARANCE.min(w / 4.0).min(h / 4.0);
    let free_point = |rng: &mut crate::rng::SimRng| -> Option<Vec3> {
        for _ in 0..MAX_ATTEMPTS_PER_ITEM {
            let p = Vec3::new(
                rng.gen_range(margin..=(w - margin)),
                rng.gen_range(margin..=(h - margin)),
                params.flight_altitude,
            );
            if has_clearance(&buildings, p, CLEARANCE) {
                return Some(p);
            }
        }
        None
    };
    let mut endpoints = None;
    for _ in 0..MAX_ATTEMPTS_PER_ITEM {
        let (Some(s), Some(d)) = (free_point(&mut rng), free_point(&mut rng)) else {
            break;
        };
        if distance_3d(s, d) >= params.min_separation {
            endpoints = Some((s, d));
            break;
        }
    }
    let (source, destination) = endpoints.ok_or_else(|| {
        GeometryError::Generation("no free source/destination pair at the requested separation".into())
    })?;

    let scenario = Scenario {
        area: params.area_size,
        z_min: params.z_min,
        z_max: params.z_max,
        time_limit_steps: params.time_limit_steps,
        source,
        destination,
        buildings,
        gbs_list,
        seed,
        radio: RadioConfig::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// True if `p` is at least `clearance` away (horizontally, below the roof
/// plus clearance) from every building.
pub fn has_clearance(buildings: &[Building], p: Vec3, clearance: f64) -> bool {
    buildings.iter().all(|b| {
        p.z >= b.height() + clearance
            || p.x <= b.min_corner.x - clearance
            || p.x >= b.max_corner.x + clearance
            || p.y <= b.min_corner.y - clearance
            || p.y >= b.max_corner.y + clearance
    })
}

fn place_gbs(
    rng: &mut crate::rng::SimRng,
    class: GbsClass,
    buildings: &[Building],
    params: &SyntheticParams,
) -> Vec3 {
    let [w, h] = params.area_size;
    if buildings.is_empty() {
        let z = match class {
            GbsClass::Micro => MICRO_HEIGHT,
            GbsClass::Macro => OPEN_FIELD_MACRO_HEIGHT,
        };
        return Vec3::new(rng.gen_range(0.0..=w), rng.gen_range(0.0..=h), z);
    }
    let b = buildings[rng.gen_range(0..buildings.len())];
    let (lo, hi) = (b.min_corner, b.max_corner);
    match class {
        GbsClass::Macro => {
            let inset_x = ((hi.x - lo.x) * 0.25).min(2.0);
            let inset_y = ((hi.y - lo.y) * 0.25).min(2.0);
            Vec3::new(
                rng.gen_range((lo.x + inset_x)..=(hi.x - inset_x)),
                rng.gen_range((lo.y + inset_y)..=(hi.y - inset_y)),
                hi.z + MACRO_MAST,
            )
        }
        GbsClass::Micro => {
            // one metre off a random facade
            let off = 1.0;
            match rng.gen_range(0..4) {
                0 => Vec3::new(lo.x - off, rng.gen_range(lo.y..=hi.y), MICRO_HEIGHT),
                1 => Vec3::new(hi.x + off, rng.gen_range(lo.y..=hi.y), MICRO_HEIGHT),
                2 => Vec3::new(rng.gen_range(lo.x..=hi.x), lo.y - off, MICRO_HEIGHT),
                _ => Vec3::new(rng.gen_range(lo.x..=hi.x), hi.y + off, MICRO_HEIGHT),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn open_scenario() -> Scenario {
        Scenario {
            area: [200.0, 200.0],
            z_min: 10.0,
            z_max: 120.0,
            time_limit_steps: 50,
            source: Vec3::new(20.0, 20.0, 30.0),
            destination: Vec3::new(180.0, 180.0, 30.0),
            buildings: vec![],
            gbs_list: vec![GbsConfig {
                id: 0,
                position: Vec3::new(100.0, 100.0, 25.0),
                class: GbsClass::Macro,
                sector_azimuths: [0.0, 120.0, 240.0],
            }],
            seed: 1,
            radio: RadioConfig::default(),
        }
    }

    /// 1 cm point sampling along the open segment.
    fn sampled_hit(p0: Vec3, p1: Vec3, b: &Building) -> bool {
        let len = distance_3d(p0, p1);
        let n = (len / 0.01).ceil() as usize;
        (1..n).any(|k| b.contains(p0 + (p1 - p0) * (k as f64 / n as f64)))
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_3d(Vec3::ZERO, Vec3::ZERO), 0.0);
        assert_eq!(distance_3d(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(distance_3d(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 6.0, 3.0)), 5.0);
    }

    #[test]
    fn segment_examples() {
        let b = Building::new(0.0, 0.0, 10.0, 10.0, 20.0);
        let above = (Vec3::new(-5.0, 5.0, 25.0), Vec3::new(15.0, 5.0, 25.0));
        assert!(!segment_intersects_building(above.0, above.1, &b));
        let through = (Vec3::new(-5.0, 5.0, 10.0), Vec3::new(15.0, 5.0, 10.0));
        assert!(segment_intersects_building(through.0, through.1, &b));
        // grazing along the x = 10 face
        let graze = (Vec3::new(10.0, -5.0, 5.0), Vec3::new(10.0, 15.0, 5.0));
        assert!(!segment_intersects_building(graze.0, graze.1, &b));
        assert_eq!(sampled_hit(graze.0, graze.1, &b), false);
        // grazing along the roof
        let roof = (Vec3::new(-5.0, 5.0, 20.0), Vec3::new(15.0, 5.0, 20.0));
        assert!(!segment_intersects_building(roof.0, roof.1, &b));
        // endpoint resting on a face
        let touch = (Vec3::new(10.0, 5.0, 5.0), Vec3::new(30.0, 5.0, 5.0));
        assert!(!segment_intersects_building(touch.0, touch.1, &b));
    }

    #[test]
    fn los_examples() {
        let mut s = open_scenario();
        let a = Vec3::new(10.0, 100.0, 20.0);
        let c = Vec3::new(190.0, 100.0, 20.0);
        assert!(s.is_los(a, c));
        s.buildings.push(Building::new(90.0, 90.0, 110.0, 110.0, 50.0));
        assert!(!s.is_los(a, c));
        assert!(!s.is_los(c, a));
        let hi_a = Vec3::new(10.0, 100.0, 60.0);
        let hi_c = Vec3::new(190.0, 100.0, 60.0);
        assert!(s.is_los(hi_a, hi_c));
    }

    #[test]
    fn obstacle_examples() {
        let mut s = open_scenario();
        let r = s.nearest_obstacle(Vec3::new(100.0, 100.0, 50.0), 30.0, 16).unwrap();
        assert_eq!(r.distance, 30.0);
        assert_eq!(r.direction, Vec3::DOWN);

        let r = s.nearest_obstacle(Vec3::new(100.0, 100.0, 20.0), 30.0, 16).unwrap();
        assert_abs_diff_eq!(r.distance, 20.0, epsilon = 1e-12);
        assert_eq!(r.direction, Vec3::DOWN);

        s.buildings.push(Building::new(110.0, 80.0, 130.0, 120.0, 100.0));
        let r = s.nearest_obstacle(Vec3::new(100.0, 100.0, 50.0), 30.0, 16).unwrap();
        assert_abs_diff_eq!(r.distance, 10.0, epsilon = 1e-12);
        assert_eq!(r.direction, Vec3::new(1.0, 0.0, 0.0));

        let err = s.nearest_obstacle(Vec3::new(120.0, 100.0, 50.0), 30.0, 16);
        assert!(matches!(err, Err(GeometryError::InsideBuilding { .. })));
    }

    #[test]
    fn sensor_directions_are_unit() {
        let dirs = sensor_directions(16);
        assert_eq!(dirs.len(), 16);
        for d in dirs {
            assert_abs_diff_eq!(d.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scenario_rejects_destination_in_building() {
        let mut s = open_scenario();
        s.buildings.push(Building::new(170.0, 170.0, 190.0, 190.0, 60.0));
        assert!(matches!(s.validate(), Err(GeometryError::InvalidScenario(_))));
    }

    #[test]
    fn missing_gbs_list_is_a_parse_error() {
        let mut v: serde_json::Value = serde_json::from_str(&open_scenario().to_json()).unwrap();
        v.as_object_mut().unwrap().remove("gbs");
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("gbs"), "{err}");
    }

    #[test]
    fn generator_is_deterministic_and_counts_match() {
        let p = SyntheticParams::default();
        let a = generate_synthetic_scenario(&p, 11).unwrap();
        let b = generate_synthetic_scenario(&p, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gbs_list.len(), 30);
        assert_eq!(a.buildings.len(), 60);
        for (i, x) in a.buildings.iter().enumerate() {
            for y in &a.buildings[i + 1..] {
                assert!(footprints_clear(x, y, p.street_width));
            }
        }
        let micro_max = a
            .gbs_list
            .iter()
            .filter(|g| g.class == GbsClass::Micro)
            .map(|g| g.position.z)
            .fold(f64::MIN, f64::max);
        let macro_min = a
            .gbs_list
            .iter()
            .filter(|g| g.class == GbsClass::Macro)
            .map(|g| g.position.z)
            .fold(f64::MAX, f64::min);
        assert!(micro_max < macro_min);
    }

    #[test]
    fn generator_open_field() {
        let p = SyntheticParams {
            area_size: [500.0, 500.0],
            n_buildings: 0,
            n_gbs: 4,
            ..SyntheticParams::default()
        };
        let s = generate_synthetic_scenario(&p, 3).unwrap();
        assert!(s.buildings.is_empty());
        assert_eq!(s.gbs_list.len(), 4);
    }

    #[test]
    fn generator_reports_overcrowding() {
        let p = SyntheticParams {
            area_size: [100.0, 100.0],
            n_buildings: 500,
            ..SyntheticParams::default()
        };
        assert!(matches!(
            generate_synthetic_scenario(&p, 3),
            Err(GeometryError::Generation(_))
        ));
    }
}
