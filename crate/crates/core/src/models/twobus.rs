//! Closed-form models for a single inverter feeding an infinite bus
//! through an aggregate series R-L connection.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{
    corrections_gb, InverterOutput, LinearStateSpace, ModelKind, NonlinearModel, StateKind,
    StateLabel,
};
use crate::perunit::DroopGains;

/// Parameters of the two-bus case: one inverter, one aggregate connection
/// (coupling plus line), fixed remote voltage.
#[derive(Debug, Clone, Copy)]
pub struct TwoBusParams {
    pub gains: DroopGains,
    /// Power filter time constant, seconds.
    pub tau: f64,
    /// Aggregate pu resistance of coupling + line.
    pub r: f64,
    /// Aggregate pu reactance at `w0`.
    pub x: f64,
    pub w0: f64,
    /// Remote (infinite bus) voltage, pu. The reduced kinds require 1.
    pub u_s: f64,
}

impl TwoBusParams {
    pub fn new(gains: DroopGains, tau: f64, r: f64, x: f64, w0: f64) -> Result<Self> {
        if !(tau > 0.0) || !(x > 0.0) || r < 0.0 {
            return Err(Error::domain("two-bus needs tau > 0, x > 0, r >= 0"));
        }
        Ok(Self {
            gains,
            tau,
            r,
            x,
            w0,
            u_s: 1.0,
        })
    }

    pub fn with_scaled_gains(&self, kp_scale: f64, kq_scale: f64) -> Result<Self> {
        let mut p = *self;
        p.gains = self.gains.scaled(kp_scale, kq_scale, self.w0)?;
        Ok(p)
    }

    /// Quasi-stationary stiffness coefficients at `U = U_s = 1`:
    /// `B = x / (r^2 + x^2)`, `G = r / (r^2 + x^2)`.
    pub fn stiffness(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.x / d, self.r / d)
    }
}

/// Builds the requested model kind for the two-bus case, returning both
/// the linearization at the flat-start equilibrium and the nonlinear
/// time-domain model.
pub fn build_twobus(p: &TwoBusParams, kind: ModelKind) -> Result<(LinearStateSpace, NonlinearModel)> {
    match kind {
        ModelKind::Full => build_full(p),
        ModelKind::Simple3 => build_simple3(p),
        ModelKind::Hifi3 => build_hifi3(p),
    }
}

fn reduced_labels() -> Vec<StateLabel> {
    vec![
        StateLabel::new(StateKind::Angle, "inv"),
        StateLabel::new(StateKind::Frequency, "inv"),
        StateLabel::new(StateKind::Voltage, "inv"),
    ]
}

/// Five states: angle, frequency, voltage, and the dq current pair of the
/// connection.
fn build_full(p: &TwoBusParams) -> Result<(LinearStateSpace, NonlinearModel)> {
    let (r, x, w0, tau, u_s) = (p.r, p.x, p.w0, p.tau, p.u_s);
    let (mp, nq) = (p.gains.mp, p.gains.nq);
    let l = x / w0;

    // flat-start equilibrium: theta = 0, U = 1; current from the static
    // network (zero when u_s = 1)
    let i0 = Complex64::new(1.0 - u_s, 0.0) / Complex64::new(r, x);
    let s0 = Complex64::new(1.0, 0.0) * i0.conj();
    let w_set = w0 + mp * s0.re;
    let u_set = 1.0 + nq * s0.im;

    let mut a = DMatrix::zeros(5, 5);
    a[(0, 1)] = 1.0;
    // dP = Iq0 dtheta + Id0 dU + dId ; dQ = Id0 dtheta - Iq0 dU - dIq
    a[(1, 0)] = -mp / tau * i0.im;
    a[(1, 2)] = -mp / tau * i0.re;
    a[(1, 1)] = -1.0 / tau;
    a[(1, 3)] = -mp / tau;
    a[(2, 0)] = -nq / tau * i0.re;
    a[(2, 2)] = -1.0 / tau - nq / tau * (-i0.im);
    a[(2, 4)] = nq / tau;
    a[(3, 2)] = 1.0 / l;
    a[(3, 3)] = -r / l;
    a[(3, 4)] = x / l;
    a[(4, 0)] = 1.0 / l;
    a[(4, 3)] = -x / l;
    a[(4, 4)] = -r / l;

    let labels = vec![
        StateLabel::new(StateKind::Angle, "inv"),
        StateLabel::new(StateKind::Frequency, "inv"),
        StateLabel::new(StateKind::Voltage, "inv"),
        StateLabel::with_time_const(StateKind::CurrentD, "inv->grid", l),
        StateLabel::with_time_const(StateKind::CurrentQ, "inv->grid", l),
    ];
    let lss = LinearStateSpace::new(a, labels, ModelKind::Full)?;

    let equilibrium = DVector::from_vec(vec![0.0, w0, 1.0, i0.re, i0.im]);
    let rhs: Arc<dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync> =
        Arc::new(move |s, out| {
            let (th, w, u, id, iq) = (s[0], s[1], s[2], s[3], s[4]);
            let (ct, st) = (th.cos(), th.sin());
            let p_el = u * ct * id + u * st * iq;
            let q_el = u * st * id - u * ct * iq;
            out[0] = w - w0;
            out[1] = (w_set - w - mp * p_el) / tau;
            out[2] = (u_set - u - nq * q_el) / tau;
            out[3] = (u * ct - u_s - r * id + x * iq) / l;
            out[4] = (u * st - r * iq - x * id) / l;
        });
    let jac: Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync> = Arc::new(move |s| {
        let (th, _, u, id, iq) = (s[0], s[1], s[2], s[3], s[4]);
        let (ct, st) = (th.cos(), th.sin());
        let mut j = DMatrix::zeros(5, 5);
        // dP/d(th,u,id,iq), dQ/d(.)
        let dp = [
            -u * st * id + u * ct * iq,
            ct * id + st * iq,
            u * ct,
            u * st,
        ];
        let dq = [
            u * ct * id + u * st * iq,
            st * id - ct * iq,
            u * st,
            -u * ct,
        ];
        j[(0, 1)] = 1.0;
        j[(1, 1)] = -1.0 / tau;
        j[(2, 2)] = -1.0 / tau;
        for (col, k) in [(0usize, 0usize), (2, 1), (3, 2), (4, 3)] {
            j[(1, col)] += -mp / tau * dp[k];
            j[(2, col)] += -nq / tau * dq[k];
        }
        j[(3, 0)] = -u * st / l;
        j[(3, 2)] = ct / l;
        j[(3, 3)] = -r / l;
        j[(3, 4)] = x / l;
        j[(4, 0)] = u * ct / l;
        j[(4, 2)] = st / l;
        j[(4, 3)] = -x / l;
        j[(4, 4)] = -r / l;
        j
    });
    let outputs: Arc<dyn Fn(&DVector<f64>) -> Vec<InverterOutput> + Send + Sync> =
        Arc::new(move |s| {
            let (th, w, u, id, iq) = (s[0], s[1], s[2], s[3], s[4]);
            let (ct, st) = (th.cos(), th.sin());
            vec![InverterOutput {
                p: u * ct * id + u * st * iq,
                q: u * st * id - u * ct * iq,
                freq: w,
                v_mag: u,
            }]
        });
    let nl = NonlinearModel::new(ModelKind::Full, equilibrium, rhs, jac, outputs);
    Ok((lss, nl))
}

fn require_unit_remote(p: &TwoBusParams) -> Result<()> {
    if (p.u_s - 1.0).abs() > 1e-12 {
        return Err(Error::Assembly(
            "reduced two-bus models are defined around u_s = 1 pu".into(),
        ));
    }
    Ok(())
}

/// Quasi-stationary three-state model: currents eliminated at `s = 0`.
fn build_simple3(p: &TwoBusParams) -> Result<(LinearStateSpace, NonlinearModel)> {
    require_unit_remote(p)?;
    let (b, g) = p.stiffness();
    let (mp, nq, tau, w0) = (p.gains.mp, p.gains.nq, p.tau, p.w0);

    let mut a = DMatrix::zeros(3, 3);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = -mp * b / tau;
    a[(1, 1)] = -1.0 / tau;
    a[(1, 2)] = -mp * g / tau;
    a[(2, 0)] = nq * g / tau;
    a[(2, 2)] = -(1.0 + nq * b) / tau;
    let lss = LinearStateSpace::new(a, reduced_labels(), ModelKind::Simple3)?;

    // genuine nonlinear quasi-stationary model in absolute states
    let (r, x, u_s) = (p.r, p.x, p.u_s);
    let equilibrium = DVector::from_vec(vec![0.0, w0, 1.0]);
    let rhs: Arc<dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync> =
        Arc::new(move |s, out| {
            let (th, w, u) = (s[0], s[1], s[2]);
            let v = Complex64::from_polar(u, th);
            let i = (v - u_s) / Complex64::new(r, x);
            let pw = v * i.conj();
            out[0] = w - w0;
            out[1] = (w0 - w - mp * pw.re) / tau;
            out[2] = (1.0 - u - nq * pw.im) / tau;
        });
    let jac_nl: Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync> = Arc::new(move |s| {
        let (th, _, u) = (s[0], s[1], s[2]);
        let v = Complex64::from_polar(u, th);
        let y = Complex64::new(r, x).inv();
        let i = (v - u_s) * y;
        // dS = dV conj(I) + V conj(Y dV), dV = (j V) dth + e^{j th} dU
        let e = Complex64::from_polar(1.0, th);
        let ds_th = Complex64::i() * v * i.conj() + v * (y * Complex64::i() * v).conj();
        let ds_u = e * i.conj() + v * (y * e).conj();
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -mp / tau * ds_th.re;
        j[(1, 1)] = -1.0 / tau;
        j[(1, 2)] = -mp / tau * ds_u.re;
        j[(2, 0)] = -nq / tau * ds_th.im;
        j[(2, 2)] = -1.0 / tau - nq / tau * ds_u.im;
        j
    });
    let outputs = reduced_outputs(r, x, u_s);
    let nl = NonlinearModel::new(ModelKind::Simple3, equilibrium, rhs, jac_nl, outputs);
    Ok((lss, nl))
}

/// Three-state model retaining the first-order network correction in
/// descriptor form `M dx/dt = K x`, returned as `A = M^-1 K`.
fn build_hifi3(p: &TwoBusParams) -> Result<(LinearStateSpace, NonlinearModel)> {
    require_unit_remote(p)?;
    let (b, g) = p.stiffness();
    let (g_p, b_p) = corrections_gb(p.r, p.x, p.w0)?;
    let (lp, lq) = (p.gains.lambda_p(), p.gains.lambda_q());
    let tau = p.tau;

    let rho_mass = lq * tau - b_p;
    if rho_mass.abs() < 1e-12 * (lq * tau).max(b_p) {
        return Err(Error::SingularMass(format!(
            "voltage-row mass tau/nq - b_p = {rho_mass:.3e} vanishes; the first-order \
             model form breaks at this voltage droop"
        )));
    }
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.0, 0.0, //
            0.0, lp * tau, -g_p, //
            0.0, 0.0, rho_mass,
        ],
    );
    let k = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0, 1.0, 0.0, //
            -b, -(lp - b_p), -g, //
            g, -g_p, -(lq + b),
        ],
    );
    let a = m
        .lu()
        .solve(&k)
        .ok_or_else(|| Error::SingularMass("descriptor mass matrix is singular".into()))?;
    let lss = LinearStateSpace::new(a.clone(), reduced_labels(), ModelKind::Hifi3)?;

    let equilibrium = DVector::from_vec(vec![0.0, p.w0, 1.0]);
    let outputs = reduced_outputs(p.r, p.x, p.u_s);
    let nl = NonlinearModel::from_linear(ModelKind::Hifi3, a, equilibrium, outputs);
    Ok((lss, nl))
}

/// Output map shared by the reduced kinds: powers from the
/// quasi-stationary current at the reconstructed terminal voltage.
fn reduced_outputs(
    r: f64,
    x: f64,
    u_s: f64,
) -> Arc<dyn Fn(&DVector<f64>) -> Vec<InverterOutput> + Send + Sync> {
    Arc::new(move |s| {
        let (th, w, u) = (s[0], s[1], s[2]);
        let v = Complex64::from_polar(u, th);
        let i = (v - u_s) / Complex64::new(r, x);
        let pw = v * i.conj();
        vec![InverterOutput {
            p: pw.re,
            q: pw.im,
            freq: w,
            v_mag: u,
        }]
    })
}
