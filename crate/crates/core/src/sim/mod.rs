//! Nonlinear and linear time-domain integration plus the benchmark
//! harness.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{InverterOutput, LinearStateSpace, NonlinearModel};

mod bench;
mod rk23;
mod trap;

pub use bench::{bench, BenchRecord};

/// Anything the integrators can advance.
pub trait OdeSystem: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn outputs(&self, x: &DVector<f64>) -> Vec<InverterOutput>;
}

impl OdeSystem for NonlinearModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        NonlinearModel::rhs(self, x, out)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        NonlinearModel::jacobian(self, x)
    }
    fn outputs(&self, x: &DVector<f64>) -> Vec<InverterOutput> {
        NonlinearModel::outputs(self, x)
    }
}

/// Linear systems integrate in deviation coordinates.
impl OdeSystem for LinearStateSpace {
    fn dim(&self) -> usize {
        self.dim()
    }
    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&(&self.a * x));
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn outputs(&self, _x: &DVector<f64>) -> Vec<InverterOutput> {
        Vec::new()
    }
}

/// Solver family: an explicit adaptive Runge-Kutta pair for non-stiff
/// runs and an adaptive implicit trapezoidal method for stiff ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ExplicitAdaptive,
    ImplicitTrapezoidal,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::ExplicitAdaptive => "explicit-adaptive",
            SolverKind::ImplicitTrapezoidal => "implicit-trapezoidal",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit-adaptive" | "explicit" | "rk23" => Ok(SolverKind::ExplicitAdaptive),
            "implicit-trapezoidal" | "implicit" | "trapezoidal" => {
                Ok(SolverKind::ImplicitTrapezoidal)
            }
            other => Err(Error::domain(format!("unknown solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-6,
            abs: 1e-9,
        }
    }
}

/// State norm above which a run is marked divergent and terminated.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Integration result on the accepted-step grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// One row per accepted step.
    pub states: DMatrix<f64>,
    /// Per-inverter output samples per accepted step (empty when the
    /// system provides no output map).
    pub outputs: Vec<Vec<InverterOutput>>,
    /// First step index at which the state exceeded the divergence limit
    /// or went non-finite.
    pub diverged: Option<usize>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.states.ncols(),
            self.states.row(self.states.nrows() - 1).iter().copied(),
        )
    }
}

/// Integrates from `x0` to `t_end` with the requested solver. Divergence
/// terminates the run with a marker rather than an error; a step-size
/// underflow is an error carrying the time reached.
pub fn integrate(
    system: &dyn OdeSystem,
    x0: &DVector<f64>,
    t_end: f64,
    solver: SolverKind,
    tols: Tolerances,
) -> Result<Trajectory> {
    if x0.len() != system.dim() {
        return Err(Error::Dimension {
            expected: system.dim(),
            got: x0.len(),
        });
    }
    if !(t_end > 0.0) {
        return Err(Error::domain("t_end must be positive"));
    }
    match solver {
        SolverKind::ExplicitAdaptive => rk23::integrate(system, x0, t_end, tols),
        SolverKind::ImplicitTrapezoidal => trap::integrate(system, x0, t_end, tols),
    }
}

pub(crate) struct Recorder {
    t: Vec<f64>,
    rows: Vec<DVector<f64>>,
    outputs: Vec<Vec<InverterOutput>>,
    diverged: Option<usize>,
}

impl Recorder {
    pub fn new() -> Self {
        Self {
            t: Vec::new(),
            rows: Vec::new(),
            outputs: Vec::new(),
            diverged: None,
        }
    }

    /// Records a sample; returns false when the state is divergent and
    /// integration should stop.
    pub fn push(&mut self, system: &dyn OdeSystem, t: f64, x: &DVector<f64>) -> bool {
        self.t.push(t);
        self.rows.push(x.clone());
        self.outputs.push(system.outputs(x));
        let bad = !x.iter().all(|v| v.is_finite()) || x.amax() > DIVERGENCE_LIMIT;
        if bad && self.diverged.is_none() {
            self.diverged = Some(self.t.len() - 1);
        }
        !bad
    }

    pub fn finish(self, accepted: usize, rejected: usize) -> Trajectory {
        let dim = self.rows.first().map_or(0, |r| r.len());
        let mut states = DMatrix::zeros(self.rows.len(), dim);
        for (i, row) in self.rows.iter().enumerate() {
            states.row_mut(i).copy_from(&row.transpose());
        }
        Trajectory {
            t: self.t,
            states,
            outputs: self.outputs,
            diverged: self.diverged,
            accepted,
            rejected,
        }
    }
}

/// Error norm used by both steppers: max over components of
/// `|err| / (abs + rel * max(|x|, |x_new|))`; a value below one accepts.
pub(crate) fn error_ratio(
    err: &DVector<f64>,
    x: &DVector<f64>,
    x_new: &DVector<f64>,
    tols: Tolerances,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..err.len() {
        let scale = tols.abs + tols.rel * x[i].abs().max(x_new[i].abs());
        worst = worst.max(err[i].abs() / scale);
    }
    worst
}

/// Disturbance helpers: pure transformations of an initial state.
pub mod disturbance {
    use super::*;

    /// Kicks the angle state of inverter `k` by `magnitude` radians,
    /// assuming the block layout used by every builder in this crate
    /// (angles first).
    pub fn angle_kick(x0: &DVector<f64>, k: usize, magnitude: f64) -> DVector<f64> {
        let mut x = x0.clone();
        x[k] += magnitude;
        x
    }

    /// Perturbs an arbitrary state index.
    pub fn state_kick(x0: &DVector<f64>, index: usize, magnitude: f64) -> DVector<f64> {
        let mut x = x0.clone();
        x[index] += magnitude;
        x
    }
}
