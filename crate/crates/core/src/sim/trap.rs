//! Adaptive implicit trapezoidal method (stiff path).
//!
//! Each macro step is taken twice (one full step, two half steps) and the
//! Richardson difference of the second-order results drives the step-size
//! controller. Newton iterations reuse one Jacobian factorization per
//! step attempt, which for a linear system converges in a single solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sim::{error_ratio, OdeSystem, Recorder, Tolerances, Trajectory};

const MAX_STEPS: usize = 5_000_000;
const NEWTON_MAX: usize = 12;

/// One trapezoidal step `x1 = x0 + h/2 (f(x0) + f(x1))` solved by a
/// modified Newton iteration on the residual, with `lu = LU(I - h/2 J)`.
fn trap_step(
    system: &dyn OdeSystem,
    x0: &DVector<f64>,
    f0: &DVector<f64>,
    h: f64,
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tols: Tolerances,
) -> Option<DVector<f64>> {
    let mut x1 = x0 + f0 * h; // explicit Euler predictor
    let mut f1 = DVector::zeros(x0.len());
    for _ in 0..NEWTON_MAX {
        system.rhs(&x1, &mut f1);
        let residual = &x1 - x0 - (f0 + &f1) * (0.5 * h);
        let delta = lu.solve(&residual)?;
        x1 -= &delta;
        let scale = tols.abs + tols.rel * x1.amax();
        if delta.amax() < 1e-3 * scale {
            return Some(x1);
        }
        if !x1.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

pub fn integrate(
    system: &dyn OdeSystem,
    x0: &DVector<f64>,
    t_end: f64,
    tols: Tolerances,
) -> Result<Trajectory> {
    let dim = system.dim();
    let mut t = 0.0;
    let mut x = x0.clone();
    let mut rec = Recorder::new();
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    if !rec.push(system, t, &x) {
        return Ok(rec.finish(0, 0));
    }

    let mut f = DVector::zeros(dim);
    system.rhs(&x, &mut f);
    let mut h = {
        let scale = tols.abs + tols.rel * x.amax();
        let d = f.amax();
        if d > 0.0 {
            (scale / d).sqrt().min(t_end / 10.0).max(1e-10)
        } else {
            t_end / 100.0
        }
    };

    let eye = DMatrix::<f64>::identity(dim, dim);
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow(t));
        }
        h = h.min(t_end - t);
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::StepUnderflow(t));
        }

        let jac = system.jacobian(&x);
        let lu_full = (&eye - &jac * (0.5 * h)).lu();
        let lu_half = (&eye - &jac * (0.25 * h)).lu();

        let full = trap_step(system, &x, &f, h, &lu_full, tols);
        let (x_new, ratio) = match full {
            Some(x_full) => {
                let mut f_mid = DVector::zeros(dim);
                match trap_step(system, &x, &f, 0.5 * h, &lu_half, tols) {
                    Some(x_mid) => {
                        system.rhs(&x_mid, &mut f_mid);
                        match trap_step(system, &x_mid, &f_mid, 0.5 * h, &lu_half, tols) {
                            Some(x_half) => {
                                let err = (&x_half - &x_full) / 3.0;
                                let ratio = error_ratio(&err, &x, &x_half, tols);
                                (Some(x_half), ratio)
                            }
                            None => (None, f64::INFINITY),
                        }
                    }
                    None => (None, f64::INFINITY),
                }
            }
            None => (None, f64::INFINITY),
        };

        match x_new {
            Some(x_next) if ratio <= 1.0 => {
                t += h;
                x = x_next;
                system.rhs(&x, &mut f);
                accepted += 1;
                if !rec.push(system, t, &x) {
                    return Ok(rec.finish(accepted, rejected));
                }
                let grow = if ratio > 0.0 {
                    0.9 * ratio.powf(-1.0 / 3.0)
                } else {
                    5.0
                };
                h *= grow.clamp(0.2, 5.0);
            }
            _ => {
                rejected += 1;
                h *= if ratio.is_finite() {
                    (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.1, 0.5)
                } else {
                    0.25
                };
            }
        }
    }
    Ok(rec.finish(accepted, rejected))
}
