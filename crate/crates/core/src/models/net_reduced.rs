//! Reduced-order multi-inverter models over the reduced admittance pair.
//!
//! The linearized power injections around the flat start (every inverter
//! at 1 pu, angle zero) are, with `D = diag(iflat)`:
//!
//! ```text
//! dP = (Im D - Im Y0) th + (Re D + Re Y0) rho + Re(Y1) rho' - Im(Y1) th'
//! dQ = (Re D - Re Y0) th - (Im D + Im Y0) rho - Im(Y1) rho' - Re(Y1) th'
//! ```
//!
//! For islanded networks `iflat` equals the shunt currents and these
//! collapse to the structure-matrix form: stiffness `B`, `G + G_t` on the
//! angle row, `B + B_t` on the voltage row, and the `B_p`/`G_p` dynamic
//! corrections entering the mass matrix. A grid connection adds an affine
//! current term instead, which is what makes the single-inverter case
//! coincide with the closed-form two-bus model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::inverter::DroopInverter;
use crate::models::{
    order_inverters, InverterOutput, LinearStateSpace, ModelKind, NonlinearModel, StateKind,
    StateLabel,
};
use crate::network::{assemble_taylor, LaplaceAdmittance, NetworkSpec};

/// Builds the 3n-state reduced model of `kind` (`simple3` zeroes the
/// first-order network correction; `full` is not a reduced kind).
pub fn build_network_reduced(
    net: &NetworkSpec,
    inverters: &[DroopInverter],
    kind: ModelKind,
) -> Result<(LinearStateSpace, NonlinearModel)> {
    if kind == ModelKind::Full {
        return Err(Error::Assembly(
            "build_network_reduced builds simple3 or hifi3; use build_network_full".into(),
        ));
    }
    let adm = assemble_taylor(net)?;
    let ordered = order_inverters(&adm.nodes, inverters)?;
    let n = ordered.len();
    let w0 = net.base.w0;

    let y0 = &adm.y0;
    let y1_owned;
    let y1: &DMatrix<Complex64> = if kind == ModelKind::Simple3 {
        y1_owned = DMatrix::zeros(n, n);
        &y1_owned
    } else {
        &adm.y1
    };

    let re = |m: &DMatrix<Complex64>| m.map(|z| z.re);
    let im = |m: &DMatrix<Complex64>| m.map(|z| z.im);
    let (re_y0, im_y0) = (re(y0), im(y0));
    let (re_y1, im_y1) = (re(y1), im(y1));
    let re_d = DMatrix::from_diagonal(&adm.iflat.map(|z| z.re));
    let im_d = DMatrix::from_diagonal(&adm.iflat.map(|z| z.im));

    let p_th = &im_d - &im_y0;
    let p_rho = &re_d + &re_y0;
    let q_th = &re_d - &re_y0;
    let q_rho = -&im_d - &im_y0;

    let lam_p = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        ordered.iter().map(|inv| inv.gains.lambda_p()),
    ));
    let lam_q = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        ordered.iter().map(|inv| inv.gains.lambda_q()),
    ));
    let tau = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        ordered.iter().map(|inv| inv.tau),
    ));

    // voltage-row mass: tau * Lambda_q - Im(Y1); a non-positive diagonal
    // term means the first-order form broke at that bus
    let rho_mass = &tau * &lam_q - &im_y1;
    for i in 0..n {
        if rho_mass[(i, i)] <= 0.0 {
            return Err(Error::SingularMass(format!(
                "voltage-row mass tau/nq - b_p = {:.3e} at bus '{}'",
                rho_mass[(i, i)],
                adm.nodes[i]
            )));
        }
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let zero = DMatrix::<f64>::zeros(n, n);
    let mass = block3(
        [&eye, &zero, &zero],
        [&zero, &(&tau * &lam_p), &re_y1],
        [&zero, &zero, &rho_mass],
    );
    let neg_p_rho = -&p_rho;
    let neg_p_th = -&p_th;
    let lam_p_eff = -(&lam_p - &im_y1);
    let neg_q_th = -&q_th;
    let lam_q_eff = -(&lam_q + &q_rho);
    let k = block3(
        [&zero, &eye, &zero],
        [&neg_p_th, &lam_p_eff, &neg_p_rho],
        [&neg_q_th, &re_y1, &lam_q_eff],
    );

    let lu = mass.clone().lu();
    let a = lu.solve(&k).ok_or_else(|| {
        Error::SingularMass("reduced-model mass matrix is singular".into())
    })?;
    let cond = condition_estimate(&mass);
    if cond > 1e12 {
        return Err(Error::SingularMass(format!(
            "reduced-model mass matrix condition {cond:.3e} exceeds 1e12"
        )));
    }

    let mut labels = Vec::with_capacity(3 * n);
    for kind_ in [StateKind::Angle, StateKind::Frequency, StateKind::Voltage] {
        for node in &adm.nodes {
            labels.push(StateLabel::new(kind_, node.clone()));
        }
    }
    let lss = LinearStateSpace::new(a.clone(), labels, kind)?;

    let nl = match kind {
        ModelKind::Simple3 => quasi_stationary_model(&adm, &ordered, w0)?,
        _ => {
            // affine wrap of the linearized dynamics in absolute states
            let mut eq = DVector::zeros(3 * n);
            for i in 0..n {
                eq[n + i] = w0;
                eq[2 * n + i] = 1.0;
            }
            NonlinearModel::from_linear(kind, a, eq, reduced_outputs(&adm, w0))
        }
    };
    Ok((lss, nl))
}

fn block3(r0: [&DMatrix<f64>; 3], r1: [&DMatrix<f64>; 3], r2: [&DMatrix<f64>; 3]) -> DMatrix<f64> {
    let n = r0[0].nrows();
    let mut out = DMatrix::zeros(3 * n, 3 * n);
    for (bi, row) in [r0, r1, r2].into_iter().enumerate() {
        for (bj, blk) in row.into_iter().enumerate() {
            out.view_mut((bi * n, bj * n), (n, n)).copy_from(blk);
        }
    }
    out
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    crate::numeric::condition_number(m)
}

/// Genuine nonlinear quasi-stationary model: terminal currents follow the
/// static reduced network `I = Y0 V - t0` instantaneously.
fn quasi_stationary_model(
    adm: &LaplaceAdmittance,
    ordered: &[&DroopInverter],
    w0: f64,
) -> Result<NonlinearModel> {
    let n = ordered.len();
    let y0 = adm.y0.clone();
    // transfer vector towards fixed-voltage buses: t0 = Y0 * 1 - iflat
    let ones = DVector::from_element(n, Complex64::new(1.0, 0.0));
    let t0 = &y0 * &ones - &adm.iflat;

    // back-solved setpoints make the flat start an exact equilibrium
    let s0: Vec<Complex64> = adm.iflat.iter().map(|i| i.conj()).collect();
    let mp: Vec<f64> = ordered.iter().map(|v| v.gains.mp).collect();
    let nq: Vec<f64> = ordered.iter().map(|v| v.gains.nq).collect();
    let tau: Vec<f64> = ordered.iter().map(|v| v.tau).collect();
    let w_set: Vec<f64> = (0..n).map(|i| w0 + mp[i] * s0[i].re).collect();
    let u_set: Vec<f64> = (0..n).map(|i| 1.0 + nq[i] * s0[i].im).collect();

    let mut eq = DVector::zeros(3 * n);
    for i in 0..n {
        eq[n + i] = w0;
        eq[2 * n + i] = 1.0;
    }

    let powers = {
        let y0 = y0.clone();
        let t0 = t0.clone();
        move |x: &DVector<f64>| -> Vec<Complex64> {
            let v = DVector::from_iterator(
                n,
                (0..n).map(|i| Complex64::from_polar(x[2 * n + i], x[i])),
            );
            let i_inj = &y0 * &v - &t0;
            (0..n).map(|k| v[k] * i_inj[k].conj()).collect()
        }
    };

    let rhs: Arc<dyn Fn(&DVector<f64>, &mut DVector<f64>) + Send + Sync> = {
        let powers = powers.clone();
        let (mp, nq, tau) = (mp.clone(), nq.clone(), tau.clone());
        let (w_set, u_set) = (w_set.clone(), u_set.clone());
        Arc::new(move |x, out| {
            let s = powers(x);
            for i in 0..n {
                out[i] = x[n + i] - w0;
                out[n + i] = (w_set[i] - x[n + i] - mp[i] * s[i].re) / tau[i];
                out[2 * n + i] = (u_set[i] - x[2 * n + i] - nq[i] * s[i].im) / tau[i];
            }
        })
    };
    let jac: Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync> = {
        let y0 = y0.clone();
        let t0 = t0.clone();
        let (mp, nq, tau) = (mp.clone(), nq.clone(), tau.clone());
        Arc::new(move |x| {
            let v: Vec<Complex64> =
                (0..n).map(|i| Complex64::from_polar(x[2 * n + i], x[i])).collect();
            let vv = DVector::from_iterator(n, v.iter().copied());
            let i_inj = &y0 * &vv - &t0;
            let mut j = DMatrix::zeros(3 * n, 3 * n);
            for i in 0..n {
                j[(i, n + i)] = 1.0;
                j[(n + i, n + i)] = -1.0 / tau[i];
                j[(2 * n + i, 2 * n + i)] += -1.0 / tau[i];
                for col in 0..n {
                    // dV_col: j V dth, e^{j th} dU
                    let dv_th = Complex64::i() * v[col];
                    let dv_u = Complex64::from_polar(1.0, x[col]);
                    // dS_i = dV_i conj(I_i) [only col == i] + V_i conj(y0_i,col dV_col)
                    let mut ds_th = v[i] * (y0[(i, col)] * dv_th).conj();
                    let mut ds_u = v[i] * (y0[(i, col)] * dv_u).conj();
                    if col == i {
                        ds_th += dv_th * i_inj[i].conj();
                        ds_u += dv_u * i_inj[i].conj();
                    }
                    j[(n + i, col)] += -mp[i] / tau[i] * ds_th.re;
                    j[(n + i, 2 * n + col)] += -mp[i] / tau[i] * ds_u.re;
                    j[(2 * n + i, col)] += -nq[i] / tau[i] * ds_th.im;
                    j[(2 * n + i, 2 * n + col)] += -nq[i] / tau[i] * ds_u.im;
                }
            }
            j
        })
    };
    let outputs = {
        let powers = powers.clone();
        let out_fn: Arc<dyn Fn(&DVector<f64>) -> Vec<InverterOutput> + Send + Sync> =
            Arc::new(move |x| {
                let s = powers(x);
                (0..n)
                    .map(|i| InverterOutput {
                        p: s[i].re,
                        q: s[i].im,
                        freq: x[n + i],
                        v_mag: x[2 * n + i],
                    })
                    .collect()
            });
        out_fn
    };
    Ok(NonlinearModel::new(ModelKind::Simple3, eq, rhs, jac, outputs))
}

/// Output map for linear reduced models: absolute quantities from the
/// quasi-stationary power flow at the reconstructed terminal voltages.
fn reduced_outputs(
    adm: &LaplaceAdmittance,
    w0: f64,
) -> Arc<dyn Fn(&DVector<f64>) -> Vec<InverterOutput> + Send + Sync> {
    let n = adm.nodes.len();
    let y0 = adm.y0.clone();
    let ones = DVector::from_element(n, Complex64::new(1.0, 0.0));
    let t0 = &y0 * &ones - &adm.iflat;
    let _ = w0;
    Arc::new(move |x| {
        let v = DVector::from_iterator(
            n,
            (0..n).map(|i| Complex64::from_polar(x[2 * n + i], x[i])),
        );
        let i_inj = &y0 * &v - &t0;
        (0..n)
            .map(|k| {
                let s = v[k] * i_inj[k].conj();
                InverterOutput {
                    p: s.re,
                    q: s.im,
                    freq: x[n + k],
                    v_mag: x[2 * n + k],
                }
            })
            .collect()
    })
}
