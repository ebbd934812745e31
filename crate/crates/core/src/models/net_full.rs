//! Full electromagnetic model of a multi-inverter network: three terminal
//! states per inverter plus a dq current pair for every branch and every
//! inductive load.
//!
//! Node voltages at non-source buses are resolved through virtual shunt
//! resistors, which turns the branch-current DAE into an ODE. The current
//! balance at such a bus cancels almost exactly (the virtual resistor
//! carries only `V / r_virt`), so the bus-voltage reconstruction uses
//! compensated summation; without it the cancellation noise, amplified by
//! `r_virt / L`, puts the achievable equilibrium residual orders of
//! magnitude above the 1e-10 target.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::inverter::DroopInverter;
use crate::models::{
    order_inverters, InverterOutput, LinearStateSpace, ModelKind, NonlinearModel, StateKind,
    StateLabel,
};
use crate::network::NetworkSpec;
use crate::numeric::{compensated_sum, condition_number};

/// Knobs of the full-model construction.
#[derive(Debug, Clone, Copy)]
pub struct FullModelOptions {
    /// Virtual shunt resistance at non-source buses, pu. The stability
    /// verdicts are insensitive between 1e3 and 1e5; much larger values
    /// push the current-row matrix entries towards the f64 noise floor of
    /// the eigenvalue solve.
    pub virtual_resistance: f64,
    /// Conditioning guard for the static interior solve.
    pub max_condition: f64,
}

impl Default for FullModelOptions {
    fn default() -> Self {
        Self {
            virtual_resistance: 1e4,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeRef {
    Src(usize),
    Int(usize),
    Fixed,
}

/// One series R-L element whose current is a state.
#[derive(Debug, Clone)]
struct CurrentElement {
    from: NodeRef,
    /// `Fixed` acts as ground at 1 pu for branches; loads connect to ground
    /// at 0 via `to = None`.
    to: Option<NodeRef>,
    r: f64,
    x: f64,
    l: f64,
    label: String,
}

/// Precompiled topology shared by the rhs/Jacobian/output closures.
struct Topology {
    n_src: usize,
    n_int: usize,
    elements: Vec<CurrentElement>,
    /// per interior bus: (element index, sign of current INTO the bus)
    int_incidence: Vec<Vec<(usize, f64)>>,
    /// per source bus: (element index, sign of current OUT of the terminal)
    src_incidence: Vec<Vec<(usize, f64)>>,
    /// static load conductance at source terminals
    g_static_src: Vec<f64>,
    /// interior voltage gain 1 / (1/r_virt + g_static)
    zeta: Vec<f64>,
    mp: Vec<f64>,
    nq: Vec<f64>,
    tau: Vec<f64>,
    w_set: Vec<f64>,
    u_set: Vec<f64>,
    w0: f64,
}

impl Topology {
    fn dim(&self) -> usize {
        3 * self.n_src + 2 * self.elements.len()
    }

    fn cur(&self, k: usize) -> usize {
        3 * self.n_src + 2 * k
    }

    fn currents(&self, x: &DVector<f64>) -> Vec<Complex64> {
        (0..self.elements.len())
            .map(|k| Complex64::new(x[self.cur(k)], x[self.cur(k) + 1]))
            .collect()
    }

    fn source_voltages(&self, x: &DVector<f64>) -> Vec<Complex64> {
        (0..self.n_src)
            .map(|i| Complex64::from_polar(x[2 * self.n_src + i], x[i]))
            .collect()
    }

    /// Interior voltages from the incident currents through the virtual
    /// resistors, with compensated summation of the near-cancelling parts.
    fn interior_voltages(&self, cur: &[Complex64]) -> Vec<Complex64> {
        (0..self.n_int)
            .map(|nb| {
                let re = compensated_sum(
                    self.int_incidence[nb].iter().map(|&(k, s)| s * cur[k].re),
                );
                let im = compensated_sum(
                    self.int_incidence[nb].iter().map(|&(k, s)| s * cur[k].im),
                );
                Complex64::new(re * self.zeta[nb], im * self.zeta[nb])
            })
            .collect()
    }

    fn node_voltage(
        &self,
        node: NodeRef,
        v_src: &[Complex64],
        v_int: &[Complex64],
    ) -> Complex64 {
        match node {
            NodeRef::Src(i) => v_src[i],
            NodeRef::Int(i) => v_int[i],
            NodeRef::Fixed => Complex64::new(1.0, 0.0),
        }
    }

    /// Terminal current injections (out of each inverter).
    fn injections(&self, cur: &[Complex64], v_src: &[Complex64]) -> Vec<Complex64> {
        (0..self.n_src)
            .map(|i| {
                let mut inj: Complex64 = self.src_incidence[i]
                    .iter()
                    .map(|&(k, s)| cur[k] * s)
                    .sum();
                inj += v_src[i] * self.g_static_src[i];
                inj
            })
            .collect()
    }

    fn rhs(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n_src;
        let cur = self.currents(x);
        let v_src = self.source_voltages(x);
        let v_int = self.interior_voltages(&cur);
        let inj = self.injections(&cur, &v_src);
        for i in 0..n {
            let s = v_src[i] * inj[i].conj();
            out[i] = x[n + i] - self.w0;
            out[n + i] = (self.w_set[i] - x[n + i] - self.mp[i] * s.re) / self.tau[i];
            out[2 * n + i] = (self.u_set[i] - x[2 * n + i] - self.nq[i] * s.im) / self.tau[i];
        }
        for (k, el) in self.elements.iter().enumerate() {
            let va = self.node_voltage(el.from, &v_src, &v_int);
            let vb = match el.to {
                Some(node) => self.node_voltage(node, &v_src, &v_int),
                None => Complex64::new(0.0, 0.0),
            };
            let di = (va - vb - Complex64::new(el.r, el.x) * cur[k]) / el.l;
            out[self.cur(k)] = di.re;
            out[self.cur(k) + 1] = di.im;
        }
    }

    /// Analytic Jacobian at an arbitrary state.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_src;
        let dim = self.dim();
        let cur = self.currents(x);
        let v_src = self.source_voltages(x);
        let inj = self.injections(&cur, &v_src);
        let mut j = DMatrix::zeros(dim, dim);

        // complex-block helpers: a complex equation pair (rd, rq) depends
        // holomorphically (coefficient a) on the complex state at columns
        // (cd, cq), or on a real state column with complex coefficient c
        let add_holo = |j: &mut DMatrix<f64>, rd: usize, cd: usize, a: Complex64| {
            j[(rd, cd)] += a.re;
            j[(rd, cd + 1)] += -a.im;
            j[(rd + 1, cd)] += a.im;
            j[(rd + 1, cd + 1)] += a.re;
        };
        let add_real_col = |j: &mut DMatrix<f64>, rd: usize, col: usize, c: Complex64| {
            j[(rd, col)] += c.re;
            j[(rd + 1, col)] += c.im;
        };

        // dV of a node as (real-column, complex coefficient) plus, for
        // interior nodes, (element, holo coefficient) current terms
        let dv_src = |i: usize| -> [(usize, Complex64); 2] {
            [
                (i, Complex64::i() * v_src[i]),
                (2 * n + i, Complex64::from_polar(1.0, x[i])),
            ]
        };

        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, n + i)] += -1.0 / self.tau[i];
            j[(2 * n + i, 2 * n + i)] += -1.0 / self.tau[i];
            let sp = -self.mp[i] / self.tau[i];
            let sq = -self.nq[i] / self.tau[i];
            // dS = dV_i conj(inj_i) + V_i conj(d inj_i)
            for (col, c) in dv_src(i) {
                let ds = c * inj[i].conj();
                j[(n + i, col)] += sp * ds.re;
                j[(2 * n + i, col)] += sq * ds.im;
            }
            // current part of d inj_i: antiholomorphic with coefficient s*V_i
            for &(k, s) in &self.src_incidence[i] {
                let b = v_src[i] * s;
                let (cd, cq) = (self.cur(k), self.cur(k) + 1);
                j[(n + i, cd)] += sp * b.re;
                j[(n + i, cq)] += sp * b.im;
                j[(2 * n + i, cd)] += sq * b.im;
                j[(2 * n + i, cq)] += sq * (-b.re);
            }
            // static load at the terminal: inj += g V_i
            let g = self.g_static_src[i];
            if g != 0.0 {
                for (col, c) in dv_src(i) {
                    let ds = v_src[i] * (c * g).conj();
                    j[(n + i, col)] += sp * ds.re;
                    j[(2 * n + i, col)] += sq * ds.im;
                }
            }
        }

        for (k, el) in self.elements.iter().enumerate() {
            let rd = self.cur(k);
            add_holo(&mut j, rd, rd, -Complex64::new(el.r, el.x) / el.l);
            let handle_endpoint = |j: &mut DMatrix<f64>, node: NodeRef, sign: f64| {
                let scale = Complex64::new(sign / el.l, 0.0);
                match node {
                    NodeRef::Src(i) => {
                        for (col, c) in dv_src(i) {
                            add_real_col(j, rd, col, c * scale);
                        }
                    }
                    NodeRef::Int(nb) => {
                        for &(m, s) in &self.int_incidence[nb] {
                            add_holo(
                                j,
                                rd,
                                self.cur(m),
                                scale * (s * self.zeta[nb]),
                            );
                        }
                    }
                    NodeRef::Fixed => {}
                }
            };
            handle_endpoint(&mut j, el.from, 1.0);
            if let Some(to) = el.to {
                handle_endpoint(&mut j, to, -1.0);
            }
        }
        j
    }

    fn outputs(&self, x: &DVector<f64>) -> Vec<InverterOutput> {
        let n = self.n_src;
        let cur = self.currents(x);
        let v_src = self.source_voltages(x);
        let inj = self.injections(&cur, &v_src);
        (0..n)
            .map(|i| {
                let s = v_src[i] * inj[i].conj();
                InverterOutput {
                    p: s.re,
                    q: s.im,
                    freq: x[n + i],
                    v_mag: x[2 * n + i],
                }
            })
            .collect()
    }
}

/// Builds the full electromagnetic model: linearization at the flat-start
/// equilibrium (terminals at 1 pu, angle zero, back-solved setpoints) plus
/// the nonlinear time-domain model.
pub fn build_network_full(
    net: &NetworkSpec,
    inverters: &[DroopInverter],
    opts: &FullModelOptions,
) -> Result<(LinearStateSpace, NonlinearModel)> {
    let ordered = order_inverters(&net.inverter_nodes, inverters)?;
    let n = ordered.len();
    let w0 = net.base.w0;
    if !(opts.virtual_resistance > 0.0) {
        return Err(Error::domain("virtual resistance must be positive"));
    }

    let src_index: std::collections::HashMap<&str, usize> = net
        .inverter_nodes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let int_index: std::collections::HashMap<&str, usize> = net
        .interior_buses
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let inf: std::collections::HashSet<&str> =
        net.infinite_buses.iter().map(|s| s.as_str()).collect();
    let noderef = |name: &str| -> NodeRef {
        if let Some(&i) = src_index.get(name) {
            NodeRef::Src(i)
        } else if let Some(&i) = int_index.get(name) {
            NodeRef::Int(i)
        } else {
            debug_assert!(inf.contains(name));
            NodeRef::Fixed
        }
    };

    // current-carrying elements: all branches, then inductive loads
    let mut elements = Vec::new();
    for b in &net.branches {
        elements.push(CurrentElement {
            from: noderef(&b.from),
            to: Some(noderef(&b.to)),
            r: b.r,
            x: b.x,
            l: b.inductance(w0),
            label: b.id(),
        });
    }
    for l in net.loads.iter().filter(|l| l.is_dynamic()) {
        elements.push(CurrentElement {
            from: noderef(&l.bus),
            to: None,
            r: l.r,
            x: l.x,
            l: l.x / w0,
            label: format!("load@{}", l.bus),
        });
    }

    let mut g_static_int = vec![0.0; net.interior_buses.len()];
    let mut g_static_src = vec![0.0; n];
    for l in net.loads.iter().filter(|l| !l.is_dynamic()) {
        match noderef(&l.bus) {
            NodeRef::Int(i) => g_static_int[i] += 1.0 / l.r,
            NodeRef::Src(i) => g_static_src[i] += 1.0 / l.r,
            NodeRef::Fixed => {}
        }
    }
    let zeta: Vec<f64> = g_static_int
        .iter()
        .map(|g| 1.0 / (1.0 / opts.virtual_resistance + g))
        .collect();

    let mut int_incidence = vec![Vec::new(); net.interior_buses.len()];
    let mut src_incidence = vec![Vec::new(); n];
    for (k, el) in elements.iter().enumerate() {
        // current flows from -> to; it leaves `from` and enters `to`
        match el.from {
            NodeRef::Int(i) => int_incidence[i].push((k, -1.0)),
            NodeRef::Src(i) => src_incidence[i].push((k, 1.0)),
            NodeRef::Fixed => {}
        }
        if let Some(to) = el.to {
            match to {
                NodeRef::Int(i) => int_incidence[i].push((k, 1.0)),
                NodeRef::Src(i) => src_incidence[i].push((k, -1.0)),
                NodeRef::Fixed => {}
            }
        }
        // a dynamic load at a terminal already counts into the injection
        // with sign +1 through its `from` endpoint
    }

    // --- flat-start equilibrium through the static nodal solve ---
    let (mut y0, c0) = net.nodal_admittance(Complex64::new(0.0, 0.0));
    let n_int = net.interior_buses.len();
    for i in 0..n_int {
        y0[(n + i, n + i)] += Complex64::new(1.0 / opts.virtual_resistance, 0.0);
    }
    let v_src0: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); n];
    let v_int0: Vec<Complex64> = if n_int > 0 {
        let d = y0.view((n, n), (n_int, n_int)).into_owned();
        let cond = condition_number(&d.map(|z| z.norm()));
        if cond > opts.max_condition {
            return Err(Error::Reduction(format!(
                "virtual-resistor interior solve is ill conditioned ({cond:.3e} > {:.0e})",
                opts.max_condition
            )));
        }
        let c = y0.view((n, 0), (n_int, n)).into_owned();
        let rhs = -(&c * DVector::from_vec(v_src0.clone())) - c0.rows(n, n_int);
        d.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Reduction("interior static solve is singular".into()))?
            .iter()
            .copied()
            .collect()
    } else {
        Vec::new()
    };

    let volt = |node: NodeRef| -> Complex64 {
        match node {
            NodeRef::Src(i) => v_src0[i],
            NodeRef::Int(i) => v_int0[i],
            NodeRef::Fixed => Complex64::new(1.0, 0.0),
        }
    };
    let cur0: Vec<Complex64> = elements
        .iter()
        .map(|el| {
            let va = volt(el.from);
            let vb = el.to.map(volt).unwrap_or(Complex64::new(0.0, 0.0));
            (va - vb) / Complex64::new(el.r, el.x)
        })
        .collect();

    let mut topo = Topology {
        n_src: n,
        n_int,
        elements,
        int_incidence,
        src_incidence,
        g_static_src,
        zeta,
        mp: ordered.iter().map(|v| v.gains.mp).collect(),
        nq: ordered.iter().map(|v| v.gains.nq).collect(),
        tau: ordered.iter().map(|v| v.tau).collect(),
        w_set: vec![w0; n],
        u_set: vec![1.0; n],
        w0,
    };

    // back-solve setpoints from the injections at the flat start
    let inj0 = topo.injections(&cur0, &v_src0);
    for i in 0..n {
        let s = v_src0[i] * inj0[i].conj();
        topo.w_set[i] = w0 + topo.mp[i] * s.re;
        topo.u_set[i] = 1.0 + topo.nq[i] * s.im;
    }

    let dim = topo.dim();
    let mut x_eq = DVector::zeros(dim);
    for i in 0..n {
        x_eq[n + i] = w0;
        x_eq[2 * n + i] = 1.0;
    }
    for (k, c) in cur0.iter().enumerate() {
        x_eq[topo.cur(k)] = c.re;
        x_eq[topo.cur(k) + 1] = c.im;
    }

    // Newton polish against the model's own rhs. The Jacobian is singular
    // for islanded networks (uniform-angle mode) and its rows span many
    // decades (virtual-resistor current rows against droop rows), so the
    // step solves a row-equilibrated system through SVD.
    let mut res = DVector::zeros(dim);
    topo.rhs(&x_eq, &mut res);
    let mut best = res.amax();
    for _ in 0..8 {
        if best < 5e-13 {
            break;
        }
        let j = topo.jacobian(&x_eq);
        let row_scale: Vec<f64> = (0..dim)
            .map(|i| {
                let m = j.row(i).amax();
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            })
            .collect();
        let js = DMatrix::from_fn(dim, dim, |i, k| j[(i, k)] * row_scale[i]);
        let rs = DVector::from_fn(dim, |i, _| res[i] * row_scale[i]);
        let svd = js.svd(true, true);
        let eps = svd.singular_values.max() * 1e-13;
        let Ok(step) = svd.solve(&rs, eps) else { break };
        let cand = &x_eq - &step;
        let mut cand_res = DVector::zeros(dim);
        topo.rhs(&cand, &mut cand_res);
        if cand_res.amax() < best {
            best = cand_res.amax();
            x_eq = cand;
            res = cand_res;
        } else {
            break;
        }
    }

    let a = topo.jacobian(&x_eq);
    let mut labels = Vec::with_capacity(dim);
    for kind in [StateKind::Angle, StateKind::Frequency, StateKind::Voltage] {
        for node in &net.inverter_nodes {
            labels.push(StateLabel::new(kind, node.clone()));
        }
    }
    for el in &topo.elements {
        labels.push(StateLabel::with_time_const(
            StateKind::CurrentD,
            el.label.clone(),
            el.l,
        ));
        labels.push(StateLabel::with_time_const(
            StateKind::CurrentQ,
            el.label.clone(),
            el.l,
        ));
    }
    let lss = LinearStateSpace::new(a, labels, ModelKind::Full)?;

    let mut weights = DVector::from_element(dim, 1.0);
    for i in 0..n {
        weights[n + i] = topo.tau[i];
        weights[2 * n + i] = topo.tau[i];
    }
    for (k, el) in topo.elements.iter().enumerate() {
        weights[topo.cur(k)] = el.l;
        weights[topo.cur(k) + 1] = el.l;
    }
    let topo = Arc::new(topo);
    let rhs_topo = Arc::clone(&topo);
    let jac_topo = Arc::clone(&topo);
    let out_topo = Arc::clone(&topo);
    let nl = NonlinearModel::new(
        ModelKind::Full,
        x_eq,
        Arc::new(move |x, out| rhs_topo.rhs(x, out)),
        Arc::new(move |x| jac_topo.jacobian(x)),
        Arc::new(move |x| out_topo.outputs(x)),
    )
    .with_residual_weights(weights);
    Ok((lss, nl))
}
