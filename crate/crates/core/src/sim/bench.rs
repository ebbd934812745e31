//! Runtime/state-count benchmark harness comparing the full model against
//! the reduced one on identical-inverter cascades.

use std::time::Instant;

use crate::models::{
    build_network_full, build_network_reduced, FullModelOptions, ModelKind, NonlinearModel,
};
use crate::presets;
use crate::sim::{disturbance, integrate, SolverKind, Tolerances};

/// One benchmark row.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub model: ModelKind,
    pub n_inverters: usize,
    pub n_states: usize,
    pub solver: SolverKind,
    /// Median wall time over the timed repetitions, seconds.
    pub wall_time_s: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Populated instead of timings when the run failed.
    pub error: Option<String>,
}

fn time_model(
    model: &NonlinearModel,
    n_inverters: usize,
    n_states: usize,
    solver: SolverKind,
    t_end: f64,
) -> BenchRecord {
    let x0 = disturbance::angle_kick(&model.equilibrium, 0, 1e-3);
    let tols = Tolerances::default();
    let run = || -> Result<(f64, usize, usize), String> {
        let start = Instant::now();
        let traj = integrate(model, &x0, t_end, solver, tols).map_err(|e| e.to_string())?;
        Ok((start.elapsed().as_secs_f64(), traj.accepted, traj.rejected))
    };
    // one warm-up, then the median of five timed runs
    if let Err(e) = run() {
        return BenchRecord {
            model: model.kind,
            n_inverters,
            n_states,
            solver,
            wall_time_s: 0.0,
            accepted: 0,
            rejected: 0,
            error: Some(e),
        };
    }
    let mut times = Vec::with_capacity(5);
    let mut last = (0usize, 0usize);
    for _ in 0..5 {
        match run() {
            Ok((dt, acc, rej)) => {
                times.push(dt);
                last = (acc, rej);
            }
            Err(e) => {
                return BenchRecord {
                    model: model.kind,
                    n_inverters,
                    n_states,
                    solver,
                    wall_time_s: 0.0,
                    accepted: 0,
                    rejected: 0,
                    error: Some(e),
                }
            }
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    BenchRecord {
        model: model.kind,
        n_inverters,
        n_states,
        solver,
        wall_time_s: times[times.len() / 2],
        accepted: last.0,
        rejected: last.1,
        error: None,
    }
}

/// Builds full and reduced models for each cascade size and times a
/// `t_end`-second integration with each solver. Per-record failures are
/// recorded and the run continues.
pub fn bench(sizes: &[usize], solvers: &[SolverKind], t_end: f64) -> Vec<BenchRecord> {
    let mut records = Vec::new();
    for &n in sizes {
        let (net, invs) = presets::cascade(n);
        let models: Vec<(ModelKind, Option<NonlinearModel>, usize, Option<String>)> = vec![
            match build_network_full(&net, &invs, &FullModelOptions::default()) {
                Ok((lss, nl)) => (ModelKind::Full, Some(nl), lss.dim(), None),
                Err(e) => (ModelKind::Full, None, 0, Some(e.to_string())),
            },
            match build_network_reduced(&net, &invs, ModelKind::Hifi3) {
                Ok((lss, nl)) => (ModelKind::Hifi3, Some(nl), lss.dim(), None),
                Err(e) => (ModelKind::Hifi3, None, 0, Some(e.to_string())),
            },
        ];
        for (kind, model, n_states, err) in models {
            match (model, err) {
                (Some(m), None) => {
                    for &solver in solvers {
                        records.push(time_model(&m, n, n_states, solver, t_end));
                    }
                }
                (_, err) => records.push(BenchRecord {
                    model: kind,
                    n_inverters: n,
                    n_states,
                    solver: solvers.first().copied().unwrap_or(SolverKind::ImplicitTrapezoidal),
                    wall_time_s: 0.0,
                    accepted: 0,
                    rejected: 0,
                    error: err.or_else(|| Some("model build failed".into())),
                }),
            }
        }
    }
    records
}
