//! Dynamic model builders.
//!
//! Three model families share the same terminal dynamics and differ in the
//! treatment of network electromagnetics:
//!
//! - `full`: every branch and inductive load carries a dq current pair as
//!   explicit states;
//! - `simple3`: quasi-stationary network (currents eliminated at `s = 0`),
//!   three states per inverter;
//! - `hifi3`: three states per inverter plus the first-order `dY/ds`
//!   correction of the network, which is what keeps the stability
//!   boundary close to the full model in resistive grids.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

mod net_full;
mod net_reduced;
mod twobus;

pub use net_full::{build_network_full, FullModelOptions};
pub use net_reduced::build_network_reduced;
pub use twobus::{build_twobus, TwoBusParams};

/// What a state represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Angle,
    Frequency,
    Voltage,
    CurrentD,
    CurrentQ,
}

impl StateKind {
    pub fn is_current(self) -> bool {
        matches!(self, StateKind::CurrentD | StateKind::CurrentQ)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Angle => "angle",
            StateKind::Frequency => "frequency",
            StateKind::Voltage => "voltage",
            StateKind::CurrentD => "current_d",
            StateKind::CurrentQ => "current_q",
        }
    }
}

/// Per-state tag: kind, owning bus or branch, and, for current states,
/// the physical time constant (inductance in seconds) used when the
/// state is designated fast in a reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLabel {
    pub kind: StateKind,
    pub owner: String,
    pub time_const: Option<f64>,
}

impl StateLabel {
    pub fn new(kind: StateKind, owner: impl Into<String>) -> Self {
        Self {
            kind,
            owner: owner.into(),
            time_const: None,
        }
    }

    pub fn with_time_const(kind: StateKind, owner: impl Into<String>, tc: f64) -> Self {
        Self {
            kind,
            owner: owner.into(),
            time_const: Some(tc),
        }
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.kind.as_str(), self.owner)
    }
}

/// Which model family a system matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Full,
    Simple3,
    Hifi3,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Full => "full",
            ModelKind::Simple3 => "simple3",
            ModelKind::Hifi3 => "hifi3",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelKind::Full),
            "simple3" => Ok(ModelKind::Simple3),
            "hifi3" => Ok(ModelKind::Hifi3),
            other => Err(Error::domain(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Real system matrix with labeled states. States are deviations from the
/// model's equilibrium.
#[derive(Debug, Clone)]
pub struct LinearStateSpace {
    pub a: DMatrix<f64>,
    pub labels: Vec<StateLabel>,
    pub kind: ModelKind,
}

impl LinearStateSpace {
    pub fn new(a: DMatrix<f64>, labels: Vec<StateLabel>, kind: ModelKind) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if labels.len() != a.nrows() {
            return Err(Error::Dimension {
                expected: a.nrows(),
                got: labels.len(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly("system matrix has non-finite entries".into()));
        }
        Ok(Self { a, labels, kind })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Per-inverter output sample along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterOutput {
    /// Active power, pu.
    pub p: f64,
    /// Reactive power, pu.
    pub q: f64,
    /// Frequency, rad/s.
    pub freq: f64,
    /// Terminal voltage magnitude, pu.
    pub v_mag: f64,
}

/// Maps inverters onto source nodes by terminal name, in node order.
pub(crate) fn order_inverters<'a>(
    nodes: &[String],
    inverters: &'a [crate::inverter::DroopInverter],
) -> Result<Vec<&'a crate::inverter::DroopInverter>> {
    if inverters.len() != nodes.len() {
        return Err(Error::Assembly(format!(
            "{} inverters for {} source nodes",
            inverters.len(),
            nodes.len()
        )));
    }
    nodes
        .iter()
        .map(|node| {
            inverters
                .iter()
                .find(|inv| &inv.node == node)
                .ok_or_else(|| Error::Assembly(format!("no inverter at source node '{node}'")))
        })
        .collect()
}

type RhsFn = dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type OutputFn = dyn Fn(&DVector<f64>) -> Vec<InverterOutput> + Send + Sync;

/// Time-invariant nonlinear model `dx/dt = rhs(x)` with a known
/// equilibrium and an analytic Jacobian.
#[derive(Clone)]
pub struct NonlinearModel {
    pub kind: ModelKind,
    pub dim: usize,
    pub equilibrium: DVector<f64>,
    /// Per-row weights putting the rhs into its physical (descriptor)
    /// units: time constants on filtered rows, inductances on current
    /// rows. All ones unless a builder sets them.
    pub residual_weights: DVector<f64>,
    rhs: Arc<RhsFn>,
    jac: Arc<JacFn>,
    outputs: Arc<OutputFn>,
}

impl NonlinearModel {
    pub fn new(
        kind: ModelKind,
        equilibrium: DVector<f64>,
        rhs: Arc<RhsFn>,
        jac: Arc<JacFn>,
        outputs: Arc<OutputFn>,
    ) -> Self {
        let dim = equilibrium.len();
        Self {
            kind,
            dim,
            equilibrium,
            residual_weights: DVector::from_element(dim, 1.0),
            rhs,
            jac,
            outputs,
        }
    }

    pub fn with_residual_weights(mut self, weights: DVector<f64>) -> Self {
        assert_eq!(weights.len(), self.dim);
        self.residual_weights = weights;
        self
    }

    pub fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        (self.rhs)(x, out)
    }

    pub fn rhs_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.rhs(x, &mut out);
        out
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac)(x)
    }

    pub fn outputs(&self, x: &DVector<f64>) -> Vec<InverterOutput> {
        (self.outputs)(x)
    }

    /// Max-norm of the rhs at the stored equilibrium.
    pub fn equilibrium_residual(&self) -> f64 {
        self.rhs_vec(&self.equilibrium).amax()
    }

    /// Max-norm of the rhs in physical (descriptor) units. With virtual
    /// resistors the raw ODE rows amplify single-ulp state changes by
    /// `r_virt / L`, so this is the measure that can meaningfully reach
    /// 1e-10; the raw residual floor is quantization-limited.
    pub fn equilibrium_residual_weighted(&self) -> f64 {
        let r = self.rhs_vec(&self.equilibrium);
        r.iter()
            .zip(self.residual_weights.iter())
            .map(|(v, w)| (v * w).abs())
            .fold(0.0, f64::max)
    }

    /// Wraps a linear system as an affine model around an equilibrium.
    pub fn from_linear(
        kind: ModelKind,
        a: DMatrix<f64>,
        equilibrium: DVector<f64>,
        outputs: Arc<OutputFn>,
    ) -> Self {
        let a_rhs = a.clone();
        let eq = equilibrium.clone();
        let rhs: Arc<RhsFn> = Arc::new(move |x, out| {
            let dev = x - &eq;
            out.copy_from(&(&a_rhs * dev));
        });
        let jac: Arc<JacFn> = Arc::new(move |_| a.clone());
        Self::new(kind, equilibrium, rhs, jac, outputs)
    }
}

impl std::fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .finish()
    }
}

/// First-order corrections of the quasi-stationary power flow for a single
/// series R-L connection: the real and "rotated" parts of `-dY/ds` at
/// `s = 0`, with the inductance expressed as `x / w0`.
///
/// `g_p = (x/w0) (r^2 - x^2) / (r^2 + x^2)^2`,
/// `b_p = 2 r x (x/w0) / (r^2 + x^2)^2`.
pub fn corrections_gb(r: f64, x: f64, w0: f64) -> Result<(f64, f64)> {
    if r < 0.0 || x < 0.0 || r + x <= 0.0 {
        return Err(Error::domain("need r >= 0, x >= 0, r + x > 0"));
    }
    let l = x / w0;
    let d = (r * r + x * x).powi(2);
    Ok((l * (r * r - x * x) / d, 2.0 * r * x * l / d))
}
