//! Problem instances: vehicles, horizon, weights, and the JSON document
//! format they are stored in.
//!
//! A [`Scenario`] is immutable once validated. Benchmark instances are
//! produced by [`generate_benchmark`] from a seed so runs can be reproduced.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dca::DcaConfig;
use crate::error::{invalid, PlanError, Result};

/// One vehicle: mass, boundary conditions, and physical limits.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub mass: f64,
    pub start_position: Vector3<f64>,
    pub start_velocity: Vector3<f64>,
    pub goal_position: Vector3<f64>,
    pub goal_velocity: Vector3<f64>,
    pub goal_force: Vector3<f64>,
    pub v_max: f64,
    pub f_max: f64,
}

/// Axis-aligned box that positions must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaBounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub zmin: f64,
    pub zmax: f64,
}

impl ArenaBounds {
    pub fn lower(&self) -> Vector3<f64> {
        Vector3::new(self.xmin, self.ymin, self.zmin)
    }

    pub fn upper(&self) -> Vector3<f64> {
        Vector3::new(self.xmax, self.ymax, self.zmax)
    }

    pub fn from_corners(lower: Vector3<f64>, upper: Vector3<f64>) -> Self {
        Self {
            xmin: lower.x,
            xmax: upper.x,
            ymin: lower.y,
            ymax: upper.y,
            zmin: lower.z,
            zmax: upper.z,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.lower()[a] && p[a] <= self.upper()[a])
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub vehicles: Vec<VehicleSpec>,
    /// Number of time steps `K`.
    pub horizon: usize,
    pub dt: f64,
    pub safety_distance: f64,
    pub force_weight: f64,
    /// Slope `a` of the goal-distance weight `a * k`.
    pub goal_weight_slope: f64,
    pub arena_bounds: Option<ArenaBounds>,
    /// Planner settings stored alongside the instance. Command-line flags win.
    pub dca: Option<DcaConfig>,
}

/// Number of unordered vehicle pairs.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl Scenario {
    pub fn num_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn num_pairs(&self) -> usize {
        pair_count(self.vehicles.len())
    }

    /// Unordered pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.vehicles.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Position of pair `(i, j)` in [`Scenario::pairs`] order.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        let n = self.vehicles.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// Checks every invariant, reporting the first offending field.
    pub fn validate(&self) -> Result<()> {
        if self.vehicles.is_empty() {
            return Err(invalid("vehicles", "at least one vehicle is required"));
        }
        if self.horizon < 2 {
            return Err(invalid("horizon", "must be at least 2"));
        }
        positive("dt", self.dt)?;
        positive("safety_distance", self.safety_distance)?;
        positive("force_weight", self.force_weight)?;
        positive("goal_weight_slope", self.goal_weight_slope)?;

        for (i, v) in self.vehicles.iter().enumerate() {
            let path = |f: &str| format!("vehicles[{i}].{f}");
            positive(&path("mass"), v.mass)?;
            positive(&path("v_max"), v.v_max)?;
            positive(&path("f_max"), v.f_max)?;
            for (name, vec) in [
                ("start_position", &v.start_position),
                ("start_velocity", &v.start_velocity),
                ("goal_position", &v.goal_position),
                ("goal_velocity", &v.goal_velocity),
                ("goal_force", &v.goal_force),
            ] {
                if !vec.iter().all(|c| c.is_finite()) {
                    return Err(invalid(path(name), "components must be finite"));
                }
            }
            if v.start_velocity.norm() > v.v_max {
                return Err(invalid(path("start_velocity"), "norm exceeds v_max"));
            }
            if v.goal_velocity.norm() > v.v_max {
                return Err(invalid(path("goal_velocity"), "norm exceeds v_max"));
            }
            if v.goal_force.norm() > v.f_max {
                return Err(invalid(path("goal_force"), "norm exceeds f_max"));
            }
        }

        if let Some(b) = &self.arena_bounds {
            for (name, lo, hi) in [("x", b.xmin, b.xmax), ("y", b.ymin, b.ymax), ("z", b.zmin, b.zmax)] {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(invalid(
                        format!("arena_bounds.{name}min"),
                        format!("{name}min must be finite and not exceed {name}max"),
                    ));
                }
            }
            for (i, v) in self.vehicles.iter().enumerate() {
                if !b.contains(&v.start_position) {
                    return Err(invalid(format!("vehicles[{i}].start_position"), "outside arena_bounds"));
                }
                if !b.contains(&v.goal_position) {
                    return Err(invalid(format!("vehicles[{i}].goal_position"), "outside arena_bounds"));
                }
            }
        }

        let d = self.safety_distance;
        for (i, j) in self.pairs() {
            let (a, b) = (&self.vehicles[i], &self.vehicles[j]);
            let gap = (a.start_position - b.start_position).norm();
            if gap < d {
                return Err(invalid(
                    format!("vehicles[{j}].start_position"),
                    format!("vehicles {i} and {j} start {gap:.6} apart, closer than safety distance {d}"),
                ));
            }
            let gap = (a.goal_position - b.goal_position).norm();
            if gap < d {
                return Err(invalid(
                    format!("vehicles[{j}].goal_position"),
                    format!("vehicles {i} and {j} have goals {gap:.6} apart, closer than safety distance {d}"),
                ));
            }
        }

        if let Some(cfg) = &self.dca {
            cfg.validate().map_err(|e| match e {
                PlanError::Validation { path, message } => invalid(format!("dca.{path}"), message),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Serializes to the scenario JSON document (pretty-printed).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioDoc::from(self))?)
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_json()?.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

fn positive(path: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be a positive finite number, got {value}")))
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario<R: Read>(source: R) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_reader(source);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        PlanError::Parse(format!("at `{path}`: {}", e.into_inner()))
    })?;
    de.end().map_err(|e| PlanError::Parse(e.to_string()))?;
    let scenario = Scenario::from(doc);
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_str(source: &str) -> Result<Scenario> {
    load_scenario(source.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleDoc {
    mass: f64,
    start_position: [f64; 3],
    start_velocity: [f64; 3],
    goal_position: [f64; 3],
    goal_velocity: [f64; 3],
    goal_force: [f64; 3],
    v_max: f64,
    f_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    dt: f64,
    horizon: usize,
    safety_distance: f64,
    force_weight: f64,
    goal_weight_slope: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arena_bounds: Option<ArenaBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dca: Option<DcaConfig>,
    vehicles: Vec<VehicleDoc>,
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        Self {
            dt: s.dt,
            horizon: s.horizon,
            safety_distance: s.safety_distance,
            force_weight: s.force_weight,
            goal_weight_slope: s.goal_weight_slope,
            arena_bounds: s.arena_bounds,
            dca: s.dca.clone(),
            vehicles: s
                .vehicles
                .iter()
                .map(|v| VehicleDoc {
                    mass: v.mass,
                    start_position: arr(&v.start_position),
                    start_velocity: arr(&v.start_velocity),
                    goal_position: arr(&v.goal_position),
                    goal_velocity: arr(&v.goal_velocity),
                    goal_force: arr(&v.goal_force),
                    v_max: v.v_max,
                    f_max: v.f_max,
                })
                .collect(),
        }
    }
}

impl From<ScenarioDoc> for Scenario {
    fn from(d: ScenarioDoc) -> Self {
        Self {
            vehicles: d
                .vehicles
                .into_iter()
                .map(|v| VehicleSpec {
                    mass: v.mass,
                    start_position: v.start_position.into(),
                    start_velocity: v.start_velocity.into(),
                    goal_position: v.goal_position.into(),
                    goal_velocity: v.goal_velocity.into(),
                    goal_force: v.goal_force.into(),
                    v_max: v.v_max,
                    f_max: v.f_max,
                })
                .collect(),
            horizon: d.horizon,
            dt: d.dt,
            safety_distance: d.safety_distance,
            force_weight: d.force_weight,
            goal_weight_slope: d.goal_weight_slope,
            arena_bounds: d.arena_bounds,
            dca: d.dca,
        }
    }
}

/// Layout used by [`generate_benchmark`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkPattern {
    /// Vehicles evenly spaced on a horizontal circle, each flying to the
    /// antipodal point.
    CircleSwap,
    /// Starts and goals drawn uniformly from a box with rejection of
    /// close pairs.
    RandomBox,
}

impl std::str::FromStr for BenchmarkPattern {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle_swap" => Ok(Self::CircleSwap),
            "random_box" => Ok(Self::RandomBox),
            other => Err(PlanError::Parse(format!("unknown benchmark pattern `{other}`"))),
        }
    }
}

/// Shared parameters for generated instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkBase {
    pub horizon: usize,
    pub dt: f64,
    pub safety_distance: f64,
    pub force_weight: f64,
    pub goal_weight_slope: f64,
    pub mass: f64,
    pub v_max: f64,
    pub f_max: f64,
    /// Circle radius for `CircleSwap`; defaults to `1.5 * n * d / pi`.
    pub radius: Option<f64>,
    /// Wrap the instance in an arena box padded by this distance.
    pub arena_padding: Option<f64>,
}

impl Default for BenchmarkBase {
    fn default() -> Self {
        Self {
            horizon: 30,
            dt: 1.0,
            safety_distance: 5.0,
            force_weight: 1.0,
            goal_weight_slope: 0.05,
            mass: 1.0,
            v_max: 10.0,
            f_max: 5.0,
            radius: None,
            arena_padding: None,
        }
    }
}

const MAX_REJECTIONS: usize = 100_000;

/// Builds a reproducible instance with zero boundary velocities and forces.
pub fn generate_benchmark(
    n_vehicles: usize,
    pattern: BenchmarkPattern,
    seed: u64,
    base: &BenchmarkBase,
) -> Result<Scenario> {
    if n_vehicles == 0 {
        return Err(PlanError::Domain("n_vehicles must be at least 1".into()));
    }
    let d = base.safety_distance;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let endpoints: Vec<(Vector3<f64>, Vector3<f64>)> = match pattern {
        BenchmarkPattern::CircleSwap => {
            let min_radius = n_vehicles as f64 * d / PI;
            let radius = base.radius.unwrap_or(1.5 * min_radius);
            if radius < min_radius {
                return Err(PlanError::Geometry(format!(
                    "circle radius {radius} is below n*d/pi = {min_radius:.6} for {n_vehicles} vehicles"
                )));
            }
            let phase = rng.gen_range(0.0..2.0 * PI / n_vehicles as f64);
            (0..n_vehicles)
                .map(|i| {
                    let angle = phase + 2.0 * PI * i as f64 / n_vehicles as f64;
                    let start = Vector3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
                    (start, -start)
                })
                .collect()
        }
        BenchmarkPattern::RandomBox => {
            let side = 2.0 * d * (n_vehicles as f64).cbrt().ceil().max(2.0);
            let mut sample = |placed: &[Vector3<f64>]| -> Result<Vector3<f64>> {
                for _ in 0..MAX_REJECTIONS {
                    let p = Vector3::new(
                        rng.gen_range(-side / 2.0..side / 2.0),
                        rng.gen_range(-side / 2.0..side / 2.0),
                        rng.gen_range(0.0..side / 2.0),
                    );
                    if placed.iter().all(|q| (p - q).norm() >= 1.2 * d) {
                        return Ok(p);
                    }
                }
                Err(PlanError::Geometry(format!(
                    "could not place {n_vehicles} separated points in a box of side {side}"
                )))
            };
            let mut starts = Vec::with_capacity(n_vehicles);
            for _ in 0..n_vehicles {
                let p = sample(&starts)?;
                starts.push(p);
            }
            let mut goals = Vec::with_capacity(n_vehicles);
            for _ in 0..n_vehicles {
                let p = sample(&goals)?;
                goals.push(p);
            }
            starts.into_iter().zip(goals).collect()
        }
    };

    let vehicles: Vec<VehicleSpec> = endpoints
        .into_iter()
        .map(|(start, goal)| VehicleSpec {
            mass: base.mass,
            start_position: start,
            start_velocity: Vector3::zeros(),
            goal_position: goal,
            goal_velocity: Vector3::zeros(),
            goal_force: Vector3::zeros(),
            v_max: base.v_max,
            f_max: base.f_max,
        })
        .collect();

    let arena_bounds = base.arena_padding.map(|pad| {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &vehicles {
            for p in [&v.start_position, &v.goal_position] {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
        }
        ArenaBounds::from_corners(lo.add_scalar(-pad), hi.add_scalar(pad))
    });

    let scenario = Scenario {
        vehicles,
        horizon: base.horizon,
        dt: base.dt,
        safety_distance: d,
        force_weight: base.force_weight,
        goal_weight_slope: base.goal_weight_slope,
        arena_bounds,
        dca: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dt": 1.0, "horizon": 2, "safety_distance": 5.0,
        "force_weight": 1.0, "goal_weight_slope": 0.1,
        "vehicles": [{
            "mass": 1.0,
            "start_position": [0, 0, 0], "start_velocity": [0, 0, 0],
            "goal_position": [1, 0, 0], "goal_velocity": [0, 0, 0],
            "goal_force": [0, 0, 0], "v_max": 2.0, "f_max": 2.0
        }]
    }"#;

    fn vehicle_json(x: f64) -> String {
        format!(
            r#"{{"mass": 1.0, "start_position": [{x}, 0, 0], "start_velocity": [0, 0, 0],
                "goal_position": [{x}, 40, 0], "goal_velocity": [0, 0, 0],
                "goal_force": [0, 0, 0], "v_max": 10.0, "f_max": 5.0}}"#
        )
    }

    #[test]
    fn minimal_document_loads() {
        let s = load_scenario_str(MINIMAL).unwrap();
        assert_eq!(s.num_vehicles(), 1);
        assert_eq!(s.horizon, 2);
        assert_eq!(s.vehicles[0].mass, 1.0);
    }

    #[test]
    fn five_vehicle_document_matches_experiment_setup() {
        let vehicles: Vec<String> = (0..5).map(|i| vehicle_json(10.0 * i as f64)).collect();
        let doc = format!(
            r#"{{"dt": 1.0, "horizon": 30, "safety_distance": 5.0, "force_weight": 1.0,
                "goal_weight_slope": 0.05, "vehicles": [{}]}}"#,
            vehicles.join(",")
        );
        let s = load_scenario_str(&doc).unwrap();
        assert_eq!(s.num_vehicles(), 5);
        assert_eq!(s.horizon, 30);
        assert_eq!(s.safety_distance, 5.0);
        assert_eq!(s.num_pairs(), 10);
    }

    #[test]
    fn shared_start_names_the_pair() {
        let doc = format!(
            r#"{{"dt": 1.0, "horizon": 5, "safety_distance": 5.0, "force_weight": 1.0,
                "goal_weight_slope": 0.05, "vehicles": [{}, {}]}}"#,
            vehicle_json(0.0),
            vehicle_json(0.0)
        );
        match load_scenario_str(&doc) {
            Err(PlanError::Validation { path, message }) => {
                assert_eq!(path, "vehicles[1].start_position");
                assert!(message.contains("vehicles 0 and 1"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_rejected_fields() {
        assert!(matches!(load_scenario_str("{ not json"), Err(PlanError::Parse(_))));
        let with_start_force = MINIMAL.replace("\"v_max\"", "\"start_force\": [0,0,0], \"v_max\"");
        match load_scenario_str(&with_start_force) {
            Err(PlanError::Parse(msg)) => assert!(msg.contains("start_force"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
        let wrong_type = MINIMAL.replace("\"mass\": 1.0", "\"mass\": \"heavy\"");
        match load_scenario_str(&wrong_type) {
            Err(PlanError::Parse(msg)) => assert!(msg.contains("vehicles[0].mass"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_mass = MINIMAL.replace("\"mass\": 1.0", "\"mass\": -1.0");
        match load_scenario_str(&bad_mass) {
            Err(PlanError::Validation { path, .. }) => assert_eq!(path, "vehicles[0].mass"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let short = MINIMAL.replace("\"horizon\": 2", "\"horizon\": 1");
        assert!(matches!(load_scenario_str(&short), Err(PlanError::Validation { .. })));
    }

    #[test]
    fn arena_bounds_must_contain_endpoints() {
        let doc = MINIMAL.replace(
            "\"vehicles\"",
            "\"arena_bounds\": {\"xmin\": -1, \"xmax\": 0.5, \"ymin\": -1, \"ymax\": 1, \"zmin\": -1, \"zmax\": 1}, \"vehicles\"",
        );
        match load_scenario_str(&doc) {
            Err(PlanError::Validation { path, .. }) => assert_eq!(path, "vehicles[0].goal_position"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn pair_index_matches_enumeration_order() {
        let s = generate_benchmark(6, BenchmarkPattern::CircleSwap, 1, &BenchmarkBase::default()).unwrap();
        for (idx, (i, j)) in s.pairs().enumerate() {
            assert_eq!(s.pair_index(i, j), idx);
        }
    }

    #[test]
    fn two_vehicle_circle_swap_is_head_on() {
        let s = generate_benchmark(2, BenchmarkPattern::CircleSwap, 0, &BenchmarkBase::default()).unwrap();
        let (a, b) = (&s.vehicles[0], &s.vehicles[1]);
        assert!((a.start_position + b.start_position).norm() < 1e-12);
        assert!((a.goal_position - b.start_position).norm() < 1e-12);
        assert!((b.goal_position - a.start_position).norm() < 1e-12);
    }

    #[test]
    fn pair_counts() {
        for (n, expected) in [(1, 0), (2, 1), (5, 10), (10, 45), (15, 105)] {
            assert_eq!(pair_count(n), expected);
        }
        let s = generate_benchmark(5, BenchmarkPattern::CircleSwap, 0, &BenchmarkBase::default()).unwrap();
        assert_eq!(s.pairs().count(), 10);
    }

    #[test]
    fn random_box_is_deterministic() {
        let base = BenchmarkBase::default();
        let a = generate_benchmark(15, BenchmarkPattern::RandomBox, 7, &base).unwrap();
        let b = generate_benchmark(15, BenchmarkPattern::RandomBox, 7, &base).unwrap();
        assert_eq!(a, b);
        let c = generate_benchmark(15, BenchmarkPattern::RandomBox, 8, &base).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn circle_too_small_is_a_geometry_error() {
        let base = BenchmarkBase {
            radius: Some(1.0),
            ..BenchmarkBase::default()
        };
        assert!(matches!(
            generate_benchmark(5, BenchmarkPattern::CircleSwap, 0, &base),
            Err(PlanError::Geometry(_))
        ));
    }

    #[test]
    fn arena_padding_wraps_endpoints() {
        let base = BenchmarkBase {
            arena_padding: Some(5.0),
            ..BenchmarkBase::default()
        };
        let s = generate_benchmark(3, BenchmarkPattern::CircleSwap, 2, &base).unwrap();
        let b = s.arena_bounds.unwrap();
        assert!(b.zmin == -5.0 && b.zmax == 5.0);
        assert!(s.vehicles.iter().all(|v| b.contains(&v.start_position)));
    }
}
