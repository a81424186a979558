//! Planar rolling-without-slip kinematics of the sensorized wheel over a
//! terrain strip with obstacles.
//!
//! The wheel centre follows the envelope of circles of radius `r` resting on
//! the ground profile, at path speed `ω·r`. The rangefinder is fixed in the
//! wheel frame; a contact's angle `θ` is measured from the rangefinder along
//! the waveguide, so a material point keeps its `θ` while the wheel turns and
//! the ground contact angle decreases by `ω·dt` per step.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Flag, FlagKind, SensorGeometry, Terrain, PREAMBLE_MS, TRIGGER_PERIOD_MS};

/// Footprint length of rectangular blocks.
pub const RECTANGLE_LENGTH: f64 = 0.10;
/// Rectangles at least this fraction of the wheel diameter cannot be climbed.
pub const CLIMB_LIMIT_FRACTION: f64 = 0.25;
/// Grid step used to tabulate the wheel-centre path.
const PATH_STEP: f64 = 1e-4;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Perimeter distance from the rangefinder to a contact at angle `theta`.
pub fn contact_angle_to_perimeter_distance(theta: f64, geom: &SensorGeometry) -> f64 {
    wrap_angle(theta) * geom.wheel_diameter / 2.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("obstacles {first} and {second} overlap along the ground")]
    Overlap { first: usize, second: usize },
    #[error("obstacle {index}: height {height} m must be positive and below the wheel radius")]
    InvalidHeight { index: usize, height: f64 },
    #[error("obstacle {index}: rectangle of {height} m exceeds the climb limit but is marked surmountable")]
    ClimbLimit { index: usize, height: f64 },
    #[error("obstacle {index} at {position} m lies outside the trial length")]
    OutOfTrack { index: usize, position: f64 },
    #[error("initial wheel angle {0} rad is outside [0, 2π)")]
    InitialAngle(f64),
    #[error("trial length must be positive, got {0} m")]
    TrialLength(f64),
    #[error("duration {0} ms does not cover the stationary preamble")]
    DurationTooShort(f64),
    #[error("invalid geometry: {0}")]
    Geometry(#[from] crate::model::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureProfile {
    Flat,
    Sine,
    /// Narrow periodic seams: high for 15% of the period.
    Spikes,
}

impl TextureProfile {
    /// Zero-mean modulation in `[-1, 1]` at phase `u` (periods).
    fn value(self, u: f64) -> f64 {
        match self {
            TextureProfile::Flat => 0.0,
            TextureProfile::Sine => (TAU * u).sin(),
            TextureProfile::Spikes => {
                if u.rem_euclid(1.0) < 0.15 {
                    1.0
                } else {
                    -0.15 / 0.85
                }
            }
        }
    }
}

/// Indentation-depth modulation of the ground contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainTexture {
    /// Nominal indentation of the tube on this surface (m).
    pub depth: f64,
    /// Amplitude of the periodic depth modulation (m).
    pub roughness: f64,
    /// Spatial period of the modulation (m).
    pub period: f64,
    /// Fraction of the reflected energy absorbed by the surface.
    pub absorption: f64,
    pub profile: TextureProfile,
}

impl TerrainTexture {
    pub fn depth_at(&self, x: f64) -> f64 {
        let m = if self.period > 0.0 { self.profile.value(x / self.period) } else { 0.0 };
        (self.depth + self.roughness * m).max(0.0)
    }
}

impl Terrain {
    pub fn default_texture(self) -> TerrainTexture {
        use TextureProfile::*;
        let (depth, roughness, period, absorption, profile) = match self {
            Terrain::Wood => (0.00102, 0.0, 0.0, 0.0, Flat),
            Terrain::Outdoor => (0.0047, 0.0003, 0.006, 0.03, Sine),
            Terrain::Nfm => (0.0037, 0.0002, 0.02, 0.10, Sine),
            Terrain::Ribbed => (0.0025, 0.0004, 0.04, 0.10, Spikes),
            Terrain::Soft => (0.0030, 0.0004, 0.08, 0.90, Sine),
        };
        TerrainTexture { depth, roughness, period, absorption, profile }
    }
}

/// In scene files `texture` may be left out to take the material's default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TerrainSpecFile")]
pub struct TerrainSpec {
    pub material: Terrain,
    /// Ground position where the material begins; wood before it.
    pub start: f64,
    pub texture: TerrainTexture,
}

#[derive(Deserialize)]
struct TerrainSpecFile {
    material: Terrain,
    #[serde(default)]
    start: f64,
    texture: Option<TerrainTexture>,
}

impl From<TerrainSpecFile> for TerrainSpec {
    fn from(f: TerrainSpecFile) -> Self {
        Self { material: f.material, start: f.start, texture: f.texture.unwrap_or_else(|| f.material.default_texture()) }
    }
}

impl TerrainSpec {
    pub fn new(material: Terrain, start: f64) -> Self {
        Self { material, start, texture: material.default_texture() }
    }

    pub fn wood() -> Self {
        Self::new(Terrain::Wood, 0.0)
    }

    fn texture_at(&self, x: f64) -> TerrainTexture {
        if x >= self.start {
            self.texture
        } else {
            Terrain::Wood.default_texture()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObstacleKind {
    SemiCircle,
    Triangle,
    Rectangle,
}

/// Obstacle resting on the ground. `ground_position` is its leading edge.
///
/// Triangles are isosceles with 45° faces; semicircles have radius equal to
/// the height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub shape: ObstacleKind,
    pub height: f64,
    pub ground_position: f64,
    pub surmountable: bool,
}

impl ObstacleSpec {
    pub fn new(shape: ObstacleKind, height: f64, ground_position: f64) -> Self {
        Self { shape, height, ground_position, surmountable: true }
    }

    /// Rectangle flagged insurmountable when it reaches the climb limit.
    pub fn block(height: f64, ground_position: f64, geom: &SensorGeometry) -> Self {
        let surmountable = height < CLIMB_LIMIT_FRACTION * geom.wheel_diameter;
        Self { shape: ObstacleKind::Rectangle, height, ground_position, surmountable }
    }

    pub fn footprint(&self) -> (f64, f64) {
        let len = match self.shape {
            ObstacleKind::Rectangle => RECTANGLE_LENGTH,
            ObstacleKind::Triangle | ObstacleKind::SemiCircle => 2.0 * self.height,
        };
        (self.ground_position, self.ground_position + len)
    }

    /// Highest centre height demanded by this obstacle at centre abscissa
    /// `xc`, with the direction (from the centre) of the touching point.
    fn support(&self, xc: f64, r: f64) -> Option<(f64, f64)> {
        let h = self.height;
        let mut best: Option<(f64, f64)> = None;
        let mut offer = |y: f64, beta: f64| {
            if best.map_or(true, |(b, _)| y > b) {
                best = Some((y, beta));
            }
        };
        let mut point = |px: f64, py: f64| {
            let dx = px - xc;
            if dx.abs() <= r {
                let y = py + (r * r - dx * dx).sqrt();
                offer(y, (py - y).atan2(dx));
            }
        };
        match self.shape {
            ObstacleKind::Rectangle => {
                let (x0, x1) = self.footprint();
                point(x0, h);
                point(x1, h);
                if (x0..=x1).contains(&xc) {
                    offer(h + r, -FRAC_PI_2);
                }
            }
            ObstacleKind::Triangle => {
                let apex = self.ground_position + h;
                point(apex, h);
                // Left face y = x - (apex - h); tangent point right of centre.
                let tx = xc + r / SQRT_2;
                if (apex - h..=apex).contains(&tx) {
                    offer(xc - (apex - h) + r * SQRT_2, -FRAC_PI_4);
                }
                // Right face y = (apex + h) - x.
                let tx = xc - r / SQRT_2;
                if (apex..=apex + h).contains(&tx) {
                    offer(apex + h - xc + r * SQRT_2, -3.0 * FRAC_PI_4);
                }
            }
            ObstacleKind::SemiCircle => {
                let centre = self.ground_position + h;
                let reach = r + h;
                let dx = centre - xc;
                if dx.abs() <= reach {
                    let y = (reach * reach - dx * dx).sqrt();
                    offer(y, (-y).atan2(dx));
                }
            }
        }
        best
    }
}

/// Compliance of the tube: a surface within this clearance still indents it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    pub compliance: f64,
    pub rectangle_depth: f64,
    pub triangle_depth: f64,
    pub semicircle_depth: f64,
    pub obstacle_absorption: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            compliance: 0.003,
            rectangle_depth: 0.00102,
            triangle_depth: 0.0060,
            semicircle_depth: 0.0015,
            obstacle_absorption: 0.0,
        }
    }
}

impl ContactModel {
    fn depth_for(&self, shape: ObstacleKind) -> f64 {
        match shape {
            ObstacleKind::Rectangle => self.rectangle_depth,
            ObstacleKind::Triangle => self.triangle_depth,
            ObstacleKind::SemiCircle => self.semicircle_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub terrain: TerrainSpec,
    pub obstacles: Vec<ObstacleSpec>,
    pub trial_length: f64,
    pub initial_wheel_angle: f64,
    #[serde(default)]
    pub contact: ContactModel,
}

impl ScenePlan {
    pub fn flat(trial_length: f64) -> Self {
        Self {
            terrain: TerrainSpec::wood(),
            obstacles: vec![],
            trial_length,
            initial_wheel_angle: 0.0,
            contact: ContactModel::default(),
        }
    }

    pub fn with_obstacle(mut self, obstacle: ObstacleSpec) -> Self {
        self.obstacles.push(obstacle);
        self
    }

    pub fn with_terrain(mut self, terrain: TerrainSpec) -> Self {
        self.terrain = terrain;
        self
    }

    pub fn with_initial_angle(mut self, theta0: f64) -> Self {
        self.initial_wheel_angle = theta0;
        self
    }

    pub fn validate(&self, geom: &SensorGeometry) -> Result<(), SceneError> {
        geom.validate()?;
        if !(self.trial_length > 0.0) {
            return Err(SceneError::TrialLength(self.trial_length));
        }
        if !(0.0..TAU).contains(&self.initial_wheel_angle) {
            return Err(SceneError::InitialAngle(self.initial_wheel_angle));
        }
        let r = geom.wheel_radius;
        for (index, o) in self.obstacles.iter().enumerate() {
            if !(o.height > 0.0 && o.height < r) {
                return Err(SceneError::InvalidHeight { index, height: o.height });
            }
            if o.shape == ObstacleKind::Rectangle
                && o.surmountable
                && o.height >= CLIMB_LIMIT_FRACTION * geom.wheel_diameter
            {
                return Err(SceneError::ClimbLimit { index, height: o.height });
            }
            if o.ground_position < 0.0 || o.footprint().1 > self.trial_length {
                return Err(SceneError::OutOfTrack { index, position: o.ground_position });
            }
        }
        for i in 0..self.obstacles.len() {
            for j in i + 1..self.obstacles.len() {
                let (a0, a1) = self.obstacles[i].footprint();
                let (b0, b1) = self.obstacles[j].footprint();
                if a0 < b1 && b0 < a1 {
                    return Err(SceneError::Overlap { first: i, second: j });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    Ground,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Angle from the rangefinder to the contact, in `[0, 2π)`.
    pub theta: f64,
    pub kind: ContactKind,
    pub indentation_depth: f64,
    pub absorption: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ObstacleKind>,
}

/// Wheel pose and waveguide contacts at one trigger instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub contacts: Vec<Contact>,
    pub wheel_center: (f64, f64),
    pub t_ex_ms: f64,
    /// Wheel rotation accumulated since rolling began (rad).
    pub rotation: f64,
    /// Arc length travelled by the wheel centre (m).
    pub path_position: f64,
    pub stalled: bool,
}

impl ContactState {
    pub fn ground(&self) -> Option<&Contact> {
        self.contacts.iter().find(|c| c.kind == ContactKind::Ground)
    }

    pub fn obstacle(&self) -> Option<&Contact> {
        self.contacts.iter().find(|c| c.kind == ContactKind::Obstacle)
    }
}

#[derive(Debug, Clone, Copy)]
struct PathPoint {
    x: f64,
    s: f64,
}

/// Obstacle-contact interval in ground coordinates (wheel-centre abscissa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpan {
    pub obstacle: usize,
    pub start_x: f64,
    pub end_x: Option<f64>,
}

/// Tabulated wheel-centre path for one scene.
#[derive(Debug, Clone)]
pub struct Track {
    geom: SensorGeometry,
    scene: ScenePlan,
    path: Vec<PathPoint>,
    spans: Vec<ContactSpan>,
    /// Index into `spans` of the obstacle that stalls the robot.
    stall: Option<usize>,
}

impl Track {
    pub fn new(scene: &ScenePlan, geom: &SensorGeometry) -> Result<Self, SceneError> {
        scene.validate(geom)?;
        let mut track = Track { geom: *geom, scene: scene.clone(), path: vec![], spans: vec![], stall: None };

        let n = (scene.trial_length / PATH_STEP).ceil() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| (i as f64 * PATH_STEP).min(scene.trial_length)).collect();

        let mut order: Vec<usize> = (0..scene.obstacles.len()).collect();
        order.sort_by(|&a, &b| scene.obstacles[a].ground_position.total_cmp(&scene.obstacles[b].ground_position));
        for &j in &order {
            if let Some(span) = track.contact_span(j, &xs) {
                track.spans.push(span);
            }
        }
        let mut limit = scene.trial_length;
        for (k, span) in track.spans.iter().enumerate() {
            if !scene.obstacles[span.obstacle].surmountable {
                track.stall = Some(k);
                limit = span.start_x;
                break;
            }
        }

        let mut path: Vec<PathPoint> = Vec::with_capacity(xs.len());
        let mut prev: Option<(f64, f64)> = None;
        for x in xs.into_iter().filter(|&x| x < limit).chain(std::iter::once(limit)) {
            let y = track.envelope(x);
            let s = match (prev, path.last()) {
                (Some((px, py)), Some(last)) => last.s + (x - px).hypot(y - py),
                _ => 0.0,
            };
            if prev.map_or(true, |(px, _)| x > px) {
                path.push(PathPoint { x, s });
                prev = Some((x, y));
            }
        }
        track.path = path;
        track.spans.iter_mut().for_each(|s| {
            if s.start_x > limit {
                s.end_x = None;
            }
        });
        track.spans.retain(|s| s.start_x <= limit);
        Ok(track)
    }

    pub fn geometry(&self) -> &SensorGeometry {
        &self.geom
    }

    pub fn scene(&self) -> &ScenePlan {
        &self.scene
    }

    pub fn spans(&self) -> &[ContactSpan] {
        &self.spans
    }

    /// Path length available to the wheel centre.
    pub fn path_length(&self) -> f64 {
        self.path.last().map_or(0.0, |p| p.s)
    }

    pub fn is_stall_track(&self) -> bool {
        self.stall.is_some()
    }

    fn ground_support(&self) -> f64 {
        self.geom.wheel_radius
    }

    /// Rigid wheel-centre height at abscissa `x`.
    pub fn envelope(&self, x: f64) -> f64 {
        let r = self.geom.wheel_radius;
        self.scene
            .obstacles
            .iter()
            .filter_map(|o| o.support(x, r))
            .map(|(y, _)| y)
            .fold(self.ground_support(), f64::max)
    }

    fn supports(&self, j: usize, x: f64) -> bool {
        let r = self.geom.wheel_radius;
        match self.scene.obstacles[j].support(x, r) {
            Some((y, _)) => y >= self.envelope(x) - 1e-12 && y >= self.ground_support() - 1e-12,
            None => false,
        }
    }

    fn contact_span(&self, j: usize, xs: &[f64]) -> Option<ContactSpan> {
        let first = xs.iter().position(|&x| self.supports(j, x))?;
        let start_x = if first == 0 { xs[0] } else { self.bisect(j, xs[first - 1], xs[first], true) };
        let last = xs.iter().rposition(|&x| self.supports(j, x))?;
        let end_x = if last + 1 < xs.len() { Some(self.bisect(j, xs[last], xs[last + 1], false)) } else { None };
        Some(ContactSpan { obstacle: j, start_x, end_x })
    }

    /// Transition abscissa of obstacle `j` becoming (or ceasing to be) a support.
    fn bisect(&self, j: usize, mut lo: f64, mut hi: f64, rising: bool) -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.supports(j, mid) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if rising {
            hi
        } else {
            lo
        }
    }

    fn x_at(&self, s: f64) -> f64 {
        let path = &self.path;
        if s <= 0.0 || path.len() < 2 {
            return path.first().map_or(0.0, |p| p.x);
        }
        let i = path.partition_point(|p| p.s <= s);
        if i >= path.len() {
            return path[path.len() - 1].x;
        }
        let (a, b) = (path[i - 1], path[i]);
        a.x + (s - a.s) / (b.s - a.s) * (b.x - a.x)
    }

    /// Arc length at which the centre reaches abscissa `x`.
    pub fn s_at(&self, x: f64) -> f64 {
        let path = &self.path;
        let i = path.partition_point(|p| p.x <= x);
        if i == 0 {
            return 0.0;
        }
        if i >= path.len() {
            return self.path_length();
        }
        let (a, b) = (path[i - 1], path[i]);
        a.s + (x - a.x) / (b.x - a.x) * (b.s - a.s)
    }

    /// Experiment time (ms) at which the centre reaches arc length `s`.
    pub fn time_at(&self, s: f64) -> f64 {
        PREAMBLE_MS + s / (self.geom.angular_speed * self.geom.wheel_radius) * 1000.0
    }

    fn contacts_at(&self, x: f64, y: f64, rotation: f64) -> Vec<Contact> {
        let r = self.geom.wheel_radius;
        let cm = &self.scene.contact;
        let theta_of = |beta: f64| wrap_angle(self.scene.initial_wheel_angle - FRAC_PI_2 - beta - rotation);
        let mut found: Vec<(f64, Contact)> = Vec::with_capacity(3);
        let gap = y - self.ground_support();
        if gap <= cm.compliance {
            let tex = self.scene.terrain.texture_at(x);
            found.push((
                gap,
                Contact {
                    theta: theta_of(-FRAC_PI_2),
                    kind: ContactKind::Ground,
                    indentation_depth: tex.depth_at(x) * (1.0 - gap / cm.compliance),
                    absorption: tex.absorption,
                    shape: None,
                },
            ));
        }
        for o in &self.scene.obstacles {
            if let Some((oy, beta)) = o.support(x, r) {
                let gap = y - oy;
                if gap <= cm.compliance {
                    found.push((
                        gap,
                        Contact {
                            theta: theta_of(beta),
                            kind: ContactKind::Obstacle,
                            indentation_depth: cm.depth_for(o.shape) * (1.0 - gap / cm.compliance),
                            absorption: cm.obstacle_absorption,
                            shape: Some(o.shape),
                        },
                    ));
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        found.truncate(2);
        let mut contacts: Vec<Contact> = found.into_iter().map(|(_, c)| c).collect();
        contacts.sort_by_key(|c| c.kind == ContactKind::Obstacle);
        contacts
    }

    fn state_at_path(&self, s: f64, rotation: f64, t_ex_ms: f64, stalled: bool) -> ContactState {
        let x = self.x_at(s);
        let y = self.envelope(x);
        ContactState {
            contacts: self.contacts_at(x, y, rotation),
            wheel_center: (x, y),
            t_ex_ms,
            rotation,
            path_position: s,
            stalled,
        }
    }

    /// State at experiment time `t_ex_ms`, rolling from the end of the preamble.
    pub fn state_at(&self, t_ex_ms: f64) -> ContactState {
        let rolling_s = ((t_ex_ms - PREAMBLE_MS) / 1000.0).max(0.0);
        let omega = self.geom.angular_speed;
        let commanded = omega * self.geom.wheel_radius * rolling_s;
        let end = self.path_length();
        let stalled = self.stall.is_some() && commanded >= end;
        let (s, rotation) = if commanded < end || stalled {
            (commanded.min(end), omega * rolling_s)
        } else {
            // End of the surface: the robot stops.
            (end, end / self.geom.wheel_radius)
        };
        self.state_at_path(s, rotation, t_ex_ms, stalled)
    }

    /// Advances `state` by `dt_ms` of commanded rotation.
    pub fn roll_step(&self, state: &ContactState, dt_ms: f64) -> ContactState {
        let dphi = self.geom.angular_speed * dt_ms / 1000.0;
        let end = self.path_length();
        let want = state.path_position + dphi * self.geom.wheel_radius;
        let stalled = self.stall.is_some() && want >= end;
        let s = want.min(end);
        let rotation = if want <= end || stalled { state.rotation + dphi } else { state.rotation };
        self.state_at_path(s, rotation, state.t_ex_ms + dt_ms, stalled)
    }

    /// State at the exact instant the wheel first touches obstacle `j`.
    pub fn collision_state(&self, j: usize) -> Option<ContactState> {
        let span = self.spans.iter().find(|s| s.obstacle == j)?;
        let s = self.s_at(span.start_x);
        let x = span.start_x;
        let y = self.envelope(x);
        let rotation = s / self.geom.wheel_radius;
        Some(ContactState {
            contacts: self.contacts_at(x, y, rotation),
            wheel_center: (x, y),
            t_ex_ms: self.time_at(s),
            rotation,
            path_position: s,
            stalled: false,
        })
    }

    /// Ground-truth flags: contact start/end with every obstacle reached,
    /// and the transition onto a non-wood surface.
    pub fn flags(&self) -> Vec<Flag> {
        let mut flags = Vec::new();
        let terrain = &self.scene.terrain;
        if terrain.material != Terrain::Wood && terrain.start <= self.path.last().map_or(0.0, |p| p.x) {
            flags.push(Flag { t_ex_ms: self.time_at(self.s_at(terrain.start)), kind: FlagKind::ContactStart });
        }
        for span in &self.spans {
            flags.push(Flag { t_ex_ms: self.time_at(self.s_at(span.start_x)), kind: FlagKind::ContactStart });
            if let Some(end) = span.end_x {
                if self.stall.map_or(true, |k| self.spans[k].start_x > end) {
                    flags.push(Flag { t_ex_ms: self.time_at(self.s_at(end)), kind: FlagKind::ContactEnd });
                }
            }
        }
        flags.sort_by(|a, b| a.t_ex_ms.total_cmp(&b.t_ex_ms));
        flags
    }
}

/// Kinematic ground truth for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialKinematics {
    pub states: Vec<ContactState>,
    pub flags: Vec<Flag>,
}

/// Advances `state` by `dt_ms`. Builds the scene's track on every call; use
/// [`Track::roll_step`] in loops.
pub fn roll_step(
    state: &ContactState,
    scene: &ScenePlan,
    geom: &SensorGeometry,
    dt_ms: f64,
) -> Result<ContactState, SceneError> {
    Ok(Track::new(scene, geom)?.roll_step(state, dt_ms))
}

/// Contact states at every 50 ms trigger over `duration_ms`, plus flags.
pub fn run_trial(scene: &ScenePlan, geom: &SensorGeometry, duration_ms: f64) -> Result<TrialKinematics, SceneError> {
    if !(duration_ms >= PREAMBLE_MS) {
        return Err(SceneError::DurationTooShort(duration_ms));
    }
    let track = Track::new(scene, geom)?;
    let n = (duration_ms / TRIGGER_PERIOD_MS).floor() as usize;
    let states = (0..n).map(|k| track.state_at(k as f64 * TRIGGER_PERIOD_MS)).collect();
    let flags = track.flags().into_iter().filter(|f| f.t_ex_ms < duration_ms).collect();
    Ok(TrialKinematics { states, flags })
}

/// Angle between ground and obstacle contacts for a block of height `h`
/// first touched by a wheel of diameter `d`.
pub fn block_contact_separation(h: f64, d: f64) -> f64 {
    2.0 * (h / d).sqrt().asin()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn geom() -> SensorGeometry {
        SensorGeometry::prototype()
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = wrap_angle(a - b);
        if d > PI {
            d - TAU
        } else {
            d
        }
    }

    #[test]
    fn perimeter_distance_examples() {
        let g = geom();
        assert_eq!(contact_angle_to_perimeter_distance(0.0, &g), 0.0);
        assert!((contact_angle_to_perimeter_distance(PI, &g) - 0.4241).abs() < 1e-4);
        let unit = SensorGeometry { wheel_diameter: 2.0, wheel_radius: 1.0, ..g };
        assert!((contact_angle_to_perimeter_distance(1.0, &unit) - 1.0).abs() < 1e-15);
        assert!((contact_angle_to_perimeter_distance(1.0 + TAU, &unit) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_stays_in_range() {
        for a in [-1e-17, -TAU, TAU, 3.0 * TAU + 0.5, -0.5] {
            let w = wrap_angle(a);
            assert!((0.0..TAU).contains(&w), "{a} -> {w}");
        }
    }

    #[test]
    fn flat_step_decreases_theta_by_omega_dt() {
        let g = geom();
        let scene = ScenePlan::flat(2.0).with_initial_angle(2.0);
        let track = Track::new(&scene, &g).unwrap();
        let s0 = track.state_at(PREAMBLE_MS);
        let s1 = track.roll_step(&s0, 50.0);
        let dphi = g.angular_speed * 0.05;
        let d = angle_diff(s0.ground().unwrap().theta, s1.ground().unwrap().theta);
        assert!((d - dphi).abs() < 1e-12, "{d} vs {dphi}");
        let free = roll_step(&s0, &scene, &g, 50.0).unwrap();
        assert_eq!(free, s1);
    }

    #[test]
    fn block_separation_examples() {
        assert!((block_contact_separation(0.025, 0.27) - 0.6186).abs() < 5e-4);
        assert!((block_contact_separation(0.07, 0.27) - 1.0682).abs() < 5e-4);
        for h in [0.01, 0.025, 0.07, 0.1] {
            let dt = block_contact_separation(h, 0.27);
            assert!((0.27 * (dt / 2.0).sin().powi(2) - h).abs() < 1e-15);
        }
    }

    #[test]
    fn block_collision_angles_follow_chord_geometry() {
        let g = geom();
        for (h, surmountable) in [(0.025, true), (0.07, false)] {
            let block = ObstacleSpec { shape: ObstacleKind::Rectangle, height: h, ground_position: 0.5, surmountable };
            let scene = ScenePlan::flat(1.5).with_obstacle(block).with_initial_angle(5.0);
            let track = Track::new(&scene, &g).unwrap();
            let st = track.collision_state(0).unwrap();
            assert_eq!(st.contacts.len(), 2, "{st:?}");
            let dtheta = wrap_angle(st.ground().unwrap().theta - st.obstacle().unwrap().theta);
            assert!((dtheta - block_contact_separation(h, 0.27)).abs() < 1e-9);
            assert!((g.wheel_diameter * (dtheta / 2.0).sin().powi(2) - h).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_obstacles_are_rejected() {
        let g = geom();
        let scene = ScenePlan::flat(2.0)
            .with_obstacle(ObstacleSpec::new(ObstacleKind::Triangle, 0.02, 0.5))
            .with_obstacle(ObstacleSpec::new(ObstacleKind::SemiCircle, 0.02, 0.52));
        assert!(matches!(run_trial(&scene, &g, 20_000.0), Err(SceneError::Overlap { .. })));
    }

    #[test]
    fn tall_surmountable_block_is_rejected() {
        let g = geom();
        let scene = ScenePlan::flat(2.0).with_obstacle(ObstacleSpec::new(ObstacleKind::Rectangle, 0.07, 0.5));
        assert!(matches!(scene.validate(&g), Err(SceneError::ClimbLimit { .. })));
        assert!(!ObstacleSpec::block(0.07, 0.5, &g).surmountable);
        assert!(ObstacleSpec::block(0.025, 0.5, &g).surmountable);
    }

    #[test]
    fn duration_must_cover_preamble() {
        let g = geom();
        assert!(matches!(run_trial(&ScenePlan::flat(1.0), &g, 5_000.0), Err(SceneError::DurationTooShort(_))));
    }
}
