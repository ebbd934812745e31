//! Droop-controlled inverter terminal model: three states (angle,
//! frequency, voltage magnitude) behind a coupling impedance.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};
use crate::network::Branch;
use crate::perunit::DroopGains;

/// One droop-controlled inverter. The terminal dynamics are
///
/// ```text
/// d theta / dt = w - w0
/// tau dw / dt  = w_set - w - mp * P
/// tau dU / dt  = u_set - U - nq * Q
/// ```
///
/// with powers in per-unit and the power filter bandwidth `1 / tau`.
#[derive(Debug, Clone)]
pub struct DroopInverter {
    /// Terminal node identifier in the network.
    pub node: String,
    pub gains: DroopGains,
    /// Power filter time constant, seconds.
    pub tau: f64,
    /// Frequency setpoint, rad/s.
    pub w_set: f64,
    /// Voltage setpoint, pu.
    pub u_set: f64,
    /// Coupling impedance from the terminal into the network.
    pub coupling: Branch,
}

impl DroopInverter {
    pub fn new(
        node: impl Into<String>,
        gains: DroopGains,
        tau: f64,
        w0: f64,
        coupling: Branch,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::domain("filter time constant must be positive"));
        }
        if !(coupling.x > 0.0) {
            return Err(Error::domain("coupling reactance must be positive"));
        }
        Ok(Self {
            node: node.into(),
            gains,
            tau,
            w_set: w0,
            u_set: 1.0,
            coupling,
        })
    }

    /// Same inverter with both droop gains scaled.
    pub fn with_scaled_gains(&self, kp_scale: f64, kq_scale: f64, w0: f64) -> Result<Self> {
        let mut inv = self.clone();
        inv.gains = self.gains.scaled(kp_scale, kq_scale, w0)?;
        Ok(inv)
    }

    /// Setpoints that make `(p0, q0)` an exact equilibrium at `(w0, u0 = 1)`.
    pub fn backsolve_setpoints(&mut self, p0: f64, q0: f64, w0: f64) {
        self.w_set = w0 + self.gains.mp * p0;
        self.u_set = 1.0 + self.gains.nq * q0;
    }

    /// Local 3x3 A-block of the terminal states `(d theta, d w, d U)` and
    /// the input columns coupling `(dP, dQ)` into them.
    pub fn block(&self) -> (Matrix3<f64>, DMatrix<f64>) {
        let t = self.tau;
        let a = Matrix3::new(
            0.0, 1.0, 0.0, //
            0.0, -1.0 / t, 0.0, //
            0.0, 0.0, -1.0 / t,
        );
        let mut b = DMatrix::zeros(3, 2);
        b[(1, 0)] = -self.gains.mp / t;
        b[(2, 1)] = -self.gains.nq / t;
        (a, b)
    }
}

/// Free-function form of [`DroopInverter::backsolve_setpoints`], returning
/// the pair `(w_set, u_set)`.
pub fn backsolve_setpoints(inv: &DroopInverter, p0: f64, q0: f64, w0: f64) -> (f64, f64) {
    (w0 + inv.gains.mp * p0, 1.0 + inv.gains.nq * q0)
}
