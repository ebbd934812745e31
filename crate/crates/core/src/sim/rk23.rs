//! Adaptive explicit Runge-Kutta 3(2) pair (Bogacki-Shampine) with FSAL.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sim::{error_ratio, OdeSystem, Recorder, Tolerances, Trajectory};

const MAX_STEPS: usize = 20_000_000;

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

    let mut k1 = DVector::zeros(dim);
    system.rhs(&x, &mut k1);
    if !rec.push(system, t, &x) {
        return Ok(rec.finish(0, 0));
    }

    // initial step from the rhs magnitude
    let mut h = {
        let scale = tols.abs + tols.rel * x.amax();
        let d = k1.amax();
        if d > 0.0 {
            (scale / d).min(t_end / 10.0).max(1e-12)
        } else {
            t_end / 100.0
        }
    };

    let mut k2 = DVector::zeros(dim);
    let mut k3 = DVector::zeros(dim);
    let mut k4 = DVector::zeros(dim);
    let mut steps = 0usize;

    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow(t));
        }
        h = h.min(t_end - t);
        if h < 1e-14 * t_end {
            return Err(Error::StepUnderflow(t));
        }

        system.rhs(&(&x + &k1 * (0.5 * h)), &mut k2);
        system.rhs(&(&x + &k2 * (0.75 * h)), &mut k3);
        let x_new = &x + (&k1 * (2.0 / 9.0) + &k2 * (1.0 / 3.0) + &k3 * (4.0 / 9.0)) * h;
        system.rhs(&x_new, &mut k4);
        let err = (&k1 * (-5.0 / 72.0) + &k2 * (1.0 / 12.0) + &k3 * (1.0 / 9.0)
            + &k4 * (-1.0 / 8.0))
            * h;
        let ratio = error_ratio(&err, &x, &x_new, tols);

        if ratio <= 1.0 || h <= 1e-13 * t_end {
            t += h;
            x = x_new;
            k1.copy_from(&k4); // first-same-as-last
            accepted += 1;
            if !rec.push(system, t, &x) {
                return Ok(rec.finish(accepted, rejected));
            }
        } else {
            rejected += 1;
        }
        let grow = if ratio > 0.0 {
            0.9 * ratio.powf(-1.0 / 3.0)
        } else {
            5.0
        };
        h *= grow.clamp(0.2, 5.0);
    }
    Ok(rec.finish(accepted, rejected))
}
