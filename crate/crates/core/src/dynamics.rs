//! Point-mass double-integrator model, discretized with a forward Euler step.
//!
//! The state is `[x, y, z, vx, vy, vz]` and the input is the force
//! `[fx, fy, fz]`. One step maps `x_{k+1} = A_hat x_k + B_hat u_k` with
//! `A_hat = I + dt * A` and `B_hat = (dt / m) [0; I3]`.

use std::io::{Read, Write};

use nalgebra::{Matrix6, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl StateVector {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into(),
            velocity: v.fixed_rows::<3>(3).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InputVector {
    pub force: Vector3<f64>,
}

impl InputVector {
    pub fn new(force: Vector3<f64>) -> Self {
        Self { force }
    }
}

/// Discrete-time matrices for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_hat: Matrix6<f64>,
    pub b_hat: Matrix6x3<f64>,
    pub dt: f64,
    pub mass: f64,
}

/// Continuous state matrix: positions integrate velocities.
pub fn continuous_state_matrix() -> Matrix6<f64> {
    let mut a = Matrix6::zeros();
    for axis in 0..3 {
        a[(axis, axis + 3)] = 1.0;
    }
    a
}

pub fn discretize(mass: f64, dt: f64) -> Result<DiscreteModel> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(PlanError::Domain(format!("mass must be positive, got {mass}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PlanError::Domain(format!("dt must be positive, got {dt}")));
    }
    let a_hat = Matrix6::identity() + continuous_state_matrix() * dt;
    let mut b_hat = Matrix6x3::zeros();
    for axis in 0..3 {
        b_hat[(axis + 3, axis)] = dt / mass;
    }
    Ok(DiscreteModel { a_hat, b_hat, dt, mass })
}

pub fn propagate(state: &StateVector, input: &InputVector, model: &DiscreteModel) -> StateVector {
    StateVector::from_vector(&(model.a_hat * state.to_vector() + model.b_hat * input.force))
}

/// Returns `inputs.len() + 1` states starting from `initial`.
pub fn rollout(initial: &StateVector, inputs: &[InputVector], model: &DiscreteModel) -> Vec<StateVector> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*initial);
    for u in inputs {
        let next = propagate(states.last().expect("nonempty"), u, model);
        states.push(next);
    }
    states
}

/// Like [`rollout`] but checks the input count against a horizon of `horizon` steps.
pub fn rollout_horizon(
    initial: &StateVector,
    inputs: &[InputVector],
    model: &DiscreteModel,
    horizon: usize,
) -> Result<Vec<StateVector>> {
    if inputs.len() + 1 != horizon {
        return Err(PlanError::LengthMismatch {
            expected: horizon.saturating_sub(1),
            actual: inputs.len(),
        });
    }
    Ok(rollout(initial, inputs, model))
}

/// States and inputs for every vehicle and step. Index `[i][k]` is step `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<StateVector>>,
    pub inputs: Vec<Vec<InputVector>>,
}

impl Trajectory {
    pub fn zeros(num_vehicles: usize, horizon: usize) -> Self {
        Self {
            states: vec![vec![StateVector::default(); horizon]; num_vehicles],
            inputs: vec![vec![InputVector::default(); horizon]; num_vehicles],
        }
    }

    pub fn num_vehicles(&self) -> usize {
        self.states.len()
    }

    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn position(&self, i: usize, k: usize) -> Vector3<f64> {
        self.states[i][k].position
    }

    /// Errors unless the trajectory is `N x K` for the scenario.
    pub fn check_dims(&self, scenario: &Scenario) -> Result<()> {
        let (n, k) = (scenario.num_vehicles(), scenario.horizon);
        let states_ok = self.states.len() == n && self.states.iter().all(|s| s.len() == k);
        let inputs_ok = self.inputs.len() == n && self.inputs.iter().all(|u| u.len() == k);
        if states_ok && inputs_ok {
            Ok(())
        } else {
            Err(PlanError::Dimension(format!(
                "trajectory is {} vehicles x {} steps, scenario expects {n} x {k}",
                self.states.len(),
                self.horizon()
            )))
        }
    }

    /// Mirrors every position through the origin and negates velocities and forces.
    pub fn point_reflected(&self) -> Self {
        Self {
            states: self
                .states
                .iter()
                .map(|row| row.iter().map(|s| StateVector::new(-s.position, -s.velocity)).collect())
                .collect(),
            inputs: self
                .inputs
                .iter()
                .map(|row| row.iter().map(|u| InputVector::new(-u.force)).collect())
                .collect(),
        }
    }
}

/// Largest infinity-norm defect of the state-update equation over all
/// vehicles and steps `1..K-1`.
pub fn dynamics_residual(traj: &Trajectory, scenario: &Scenario) -> Result<f64> {
    traj.check_dims(scenario)?;
    let mut worst = 0.0_f64;
    for (i, vehicle) in scenario.vehicles.iter().enumerate() {
        let model = discretize(vehicle.mass, scenario.dt)?;
        for k in 0..scenario.horizon - 1 {
            let predicted = propagate(&traj.states[i][k], &traj.inputs[i][k], &model).to_vector();
            let defect = (traj.states[i][k + 1].to_vector() - predicted).amax();
            worst = worst.max(defect);
        }
    }
    Ok(worst)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    vehicle: usize,
    k: usize,
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    fx: f64,
    fy: f64,
    fz: f64,
}

/// Writes `vehicle,k,x,y,z,vx,vy,vz,fx,fy,fz` rows; `vehicle` is 0-based and
/// `k` is 1-based.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, (states, inputs)) in traj.states.iter().zip(&traj.inputs).enumerate() {
        for (k, (s, u)) in states.iter().zip(inputs).enumerate() {
            w.serialize(TrajectoryRow {
                vehicle: i,
                k: k + 1,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                vx: s.velocity.x,
                vy: s.velocity.y,
                vz: s.velocity.z,
                fx: u.force.x,
                fy: u.force.y,
                fz: u.force.z,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV. Rows may come in any order but every
/// `(vehicle, k)` cell of the grid must appear exactly once.
pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(reader);
    let rows: Vec<TrajectoryRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(PlanError::Parse("trajectory CSV has no rows".into()));
    }
    if rows.iter().any(|row| row.k == 0) {
        return Err(PlanError::Parse("step index k is 1-based".into()));
    }
    let n = rows.iter().map(|row| row.vehicle).max().unwrap_or(0) + 1;
    let horizon = rows.iter().map(|row| row.k).max().unwrap_or(0);
    if rows.len() != n * horizon {
        return Err(PlanError::Parse(format!(
            "expected {} rows for {n} vehicles x {horizon} steps, found {}",
            n * horizon,
            rows.len()
        )));
    }
    let mut traj = Trajectory::zeros(n, horizon);
    let mut seen = vec![false; n * horizon];
    for row in rows {
        let cell = row.vehicle * horizon + row.k - 1;
        if std::mem::replace(&mut seen[cell], true) {
            return Err(PlanError::Parse(format!("duplicate row for vehicle {} step {}", row.vehicle, row.k)));
        }
        traj.states[row.vehicle][row.k - 1] = StateVector::new(
            Vector3::new(row.x, row.y, row.z),
            Vector3::new(row.vx, row.vy, row.vz),
        );
        traj.inputs[row.vehicle][row.k - 1] = InputVector::new(Vector3::new(row.fx, row.fy, row.fz));
    }
    Ok(traj)
}
