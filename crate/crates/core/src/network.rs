//! Grid topology and the Laplace-domain nodal admittance matrix.
//!
//! A scenario is a graph of buses joined by series R-L branches, with
//! series R-L loads as shunts. Writing every impedance in the Laplace
//! domain, `z(s) = r + jx + s*x/w0`, the nodal admittance matrix `Y(s)`
//! over the inverter terminals is obtained by eliminating interior buses
//! (Kron reduction) and grounding fixed-voltage buses. The first-order
//! Taylor pair `(Y0, Y1)` of the *reduced* matrix is what the reduced
//! dynamic models consume; the s-dependence is reduced before truncation
//! so the pair is exact to first order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::perunit::PerUnitBase;

/// Series R-L branch between two buses, per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// pu resistance
    pub r: f64,
    /// pu reactance at `w0`; the inductance in time units is `x / w0`
    pub x: f64,
}

impl Branch {
    pub fn new(from: impl Into<String>, to: impl Into<String>, r: f64, x: f64) -> Result<Self> {
        let (from, to) = (from.into(), to.into());
        if from == to {
            return Err(Error::network(format!("branch {from} -> {to} is a self-loop")));
        }
        if r < 0.0 || x < 0.0 {
            return Err(Error::network(format!("branch {from} -> {to} has negative impedance")));
        }
        if r == 0.0 && x == 0.0 {
            return Err(Error::network(format!(
                "branch {from} -> {to} has zero impedance; merge the buses instead"
            )));
        }
        Ok(Self { from, to, r, x })
    }

    /// Laplace-domain admittance `1 / (r + jx + s*x/w0)`.
    pub fn admittance(&self, s: Complex64, w0: f64) -> Complex64 {
        series_rl_admittance(self.r, self.x, s, w0)
    }

    /// Inductance in time units, seconds.
    pub fn inductance(&self, w0: f64) -> f64 {
        self.x / w0
    }

    /// Label used for state ownership.
    pub fn id(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

/// Series R-L shunt load, per-unit. `x = 0` is a static resistive load
/// and contributes no dynamic state.
#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub bus: String,
    pub r: f64,
    pub x: f64,
}

impl Load {
    pub fn new(bus: impl Into<String>, r: f64, x: f64) -> Result<Self> {
        let bus = bus.into();
        if !(r > 0.0) || x < 0.0 {
            return Err(Error::network(format!(
                "load at {bus} needs r > 0 and x >= 0 (got r={r}, x={x})"
            )));
        }
        Ok(Self { bus, r, x })
    }

    pub fn admittance(&self, s: Complex64, w0: f64) -> Complex64 {
        series_rl_admittance(self.r, self.x, s, w0)
    }

    pub fn is_dynamic(&self) -> bool {
        self.x > 0.0
    }
}

/// `y(s) = 1 / (r + jx + s * x / w0)` for a series R-L element.
pub fn series_rl_admittance(r: f64, x: f64, s: Complex64, w0: f64) -> Complex64 {
    (Complex64::new(r, x) + s * (x / w0)).inv()
}

/// d/ds of the series R-L admittance at `s = 0`: `-(x/w0) / (r + jx)^2`.
pub fn series_rl_admittance_deriv(r: f64, x: f64, w0: f64) -> Complex64 {
    let z = Complex64::new(r, x);
    -Complex64::new(x / w0, 0.0) / (z * z)
}

/// Scenario topology: the single source of truth for one study case.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub base: PerUnitBase,
    /// Source nodes (inverter terminals), in model order.
    pub inverter_nodes: Vec<String>,
    /// Buses eliminated by Kron reduction.
    pub interior_buses: Vec<String>,
    /// Fixed-voltage buses held at 1 pu, angle zero (grid connection).
    pub infinite_buses: Vec<String>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
}

impl NetworkSpec {
    pub fn new(
        base: PerUnitBase,
        inverter_nodes: Vec<String>,
        interior_buses: Vec<String>,
        infinite_buses: Vec<String>,
        branches: Vec<Branch>,
        loads: Vec<Load>,
    ) -> Result<Self> {
        let spec = Self {
            base,
            inverter_nodes,
            interior_buses,
            infinite_buses,
            branches,
            loads,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.inverter_nodes.is_empty() {
            return Err(Error::network("at least one inverter node is required"));
        }
        let mut all: Vec<&String> = Vec::new();
        all.extend(&self.inverter_nodes);
        all.extend(&self.interior_buses);
        all.extend(&self.infinite_buses);
        let mut seen = std::collections::HashSet::new();
        for id in &all {
            if !seen.insert(id.as_str()) {
                return Err(Error::network(format!("duplicate bus identifier '{id}'")));
            }
        }
        for b in &self.branches {
            for end in [&b.from, &b.to] {
                if !seen.contains(end.as_str()) {
                    return Err(Error::network(format!(
                        "branch endpoint '{end}' is not a declared bus"
                    )));
                }
            }
        }
        for l in &self.loads {
            if !seen.contains(l.bus.as_str()) {
                return Err(Error::network(format!(
                    "load bus '{}' is not a declared bus",
                    l.bus
                )));
            }
        }
        // connectivity over the whole graph
        let index: std::collections::HashMap<&str, usize> =
            all.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let n = all.len();
        let mut adj = vec![Vec::new(); n];
        for b in &self.branches {
            let (i, j) = (index[b.from.as_str()], index[b.to.as_str()]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if visited.iter().any(|v| !v) {
            return Err(Error::network("graph is not connected"));
        }
        Ok(())
    }

    pub fn n_inverters(&self) -> usize {
        self.inverter_nodes.len()
    }

    /// Dynamic (inductive) loads in declaration order.
    pub fn dynamic_loads(&self) -> impl Iterator<Item = &Load> {
        self.loads.iter().filter(|l| l.is_dynamic())
    }

    /// Full nodal admittance matrix over inverter + interior buses at
    /// complex frequency `s`, with fixed-voltage buses grounded, plus the
    /// affine source vector `c(s)` such that the nodal injections are
    /// `I = Y(s) V + c(s)` when every fixed bus sits at 1 pu, angle zero.
    pub fn nodal_admittance(&self, s: Complex64) -> (DMatrix<Complex64>, DVector<Complex64>) {
        let w0 = self.base.w0;
        let order: Vec<&String> = self
            .inverter_nodes
            .iter()
            .chain(self.interior_buses.iter())
            .collect();
        let idx: std::collections::HashMap<&str, usize> =
            order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let inf: std::collections::HashSet<&str> =
            self.infinite_buses.iter().map(|s| s.as_str()).collect();
        let n = order.len();
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        let mut c = DVector::<Complex64>::zeros(n);
        for b in &self.branches {
            let yb = b.admittance(s, w0);
            match (idx.get(b.from.as_str()), idx.get(b.to.as_str())) {
                (Some(&i), Some(&j)) => {
                    y[(i, i)] += yb;
                    y[(j, j)] += yb;
                    y[(i, j)] -= yb;
                    y[(j, i)] -= yb;
                }
                (Some(&i), None) if inf.contains(b.to.as_str()) => {
                    y[(i, i)] += yb;
                    c[i] -= yb; // -y * V_f with V_f = 1
                }
                (None, Some(&j)) if inf.contains(b.from.as_str()) => {
                    y[(j, j)] += yb;
                    c[j] -= yb;
                }
                _ => {} // branch between two fixed buses carries no information
            }
        }
        for l in &self.loads {
            if let Some(&i) = idx.get(l.bus.as_str()) {
                y[(i, i)] += l.admittance(s, w0);
            }
        }
        (y, c)
    }
}

/// First-order Taylor pair of the reduced nodal admittance matrix over
/// the inverter nodes, with the network/shunt split and the flat-start
/// injection currents.
#[derive(Debug, Clone)]
pub struct LaplaceAdmittance {
    /// Inverter node identifiers, fixing row/column order.
    pub nodes: Vec<String>,
    /// Reduced `Y(0)`.
    pub y0: DMatrix<Complex64>,
    /// Reduced `dY/ds` at `s = 0`.
    pub y1: DMatrix<Complex64>,
    /// Zero-row-sum part of `y0`.
    pub y0_net: DMatrix<Complex64>,
    /// Diagonal row-sum surplus of `y0`.
    pub y0_shunt: DMatrix<Complex64>,
    pub y1_net: DMatrix<Complex64>,
    pub y1_shunt: DMatrix<Complex64>,
    /// Injection currents with every inverter node at 1 pu, angle zero
    /// (`Y0 * 1 + c0`). Equals the shunt currents for islanded networks.
    pub iflat: DVector<Complex64>,
}

/// Splits a reduced matrix into a zero-row-sum part and a diagonal
/// surplus. After Kron reduction loads are no longer literally diagonal,
/// so the surplus definition is what preserves the structure for
/// arbitrary topologies.
fn split_rowsum(y: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = y.nrows();
    let mut shunt = DMatrix::<Complex64>::zeros(n, n);
    let mut net = y.clone();
    for i in 0..n {
        let row_sum: Complex64 = (0..n).map(|j| y[(i, j)]).sum();
        shunt[(i, i)] = row_sum;
        net[(i, i)] -= row_sum;
    }
    (net, shunt)
}

/// Builds the reduced Taylor pair for a scenario.
///
/// The full nodal `Y(0)` and `dY/ds(0)` are assembled over all buses and
/// Kron-reduced to the inverter nodes with the Schur-complement
/// derivative rule: for the partition `[[A, B], [C, D]]`,
/// `S0 = A0 - B0 D0^-1 C0` and
/// `S1 = A1 - B1 D0^-1 C0 + B0 D0^-1 (D1 D0^-1 C0 - C1)`.
pub fn assemble_taylor(net: &NetworkSpec) -> Result<LaplaceAdmittance> {
    let ns = net.n_inverters();
    let (y0_full, c0_full) = net.nodal_admittance(Complex64::new(0.0, 0.0));
    let (y1_full, _) = nodal_derivative(net);
    let n = y0_full.nrows();
    let ni = n - ns;

    let a0 = y0_full.view((0, 0), (ns, ns)).into_owned();
    let a1 = y1_full.view((0, 0), (ns, ns)).into_owned();
    let (y0, y1, iflat) = if ni == 0 {
        let iflat = &a0 * DVector::from_element(ns, Complex64::new(1.0, 0.0)) + c0_full;
        (a0, a1, iflat)
    } else {
        let b0 = y0_full.view((0, ns), (ns, ni)).into_owned();
        let c0 = y0_full.view((ns, 0), (ni, ns)).into_owned();
        let d0 = y0_full.view((ns, ns), (ni, ni)).into_owned();
        let b1 = y1_full.view((0, ns), (ns, ni)).into_owned();
        let c1 = y1_full.view((ns, 0), (ni, ns)).into_owned();
        let d1 = y1_full.view((ns, ns), (ni, ni)).into_owned();
        let lu = d0.lu();
        let x0 = lu.solve(&c0).ok_or_else(|| {
            Error::Reduction("interior admittance block is singular (isolated interior bus)".into())
        })?;
        let s0 = &a0 - &b0 * &x0;
        let inner = &d1 * &x0 - &c1;
        let w = lu
            .solve(&inner)
            .ok_or_else(|| Error::Reduction("interior admittance block is singular".into()))?;
        let s1 = &a1 - &b1 * &x0 + &b0 * &w;
        // affine source term: c_S - B0 D0^-1 c_I
        let c_s = c0_full.rows(0, ns).into_owned();
        let c_i = c0_full.rows(ns, ni).into_owned();
        let wc = lu
            .solve(&c_i)
            .ok_or_else(|| Error::Reduction("interior admittance block is singular".into()))?;
        let chat = c_s - &b0 * wc;
        let iflat = &s0 * DVector::from_element(ns, Complex64::new(1.0, 0.0)) + chat;
        (s0, s1, iflat)
    };

    let (y0_net, y0_shunt) = split_rowsum(&y0);
    let (y1_net, y1_shunt) = split_rowsum(&y1);
    Ok(LaplaceAdmittance {
        nodes: net.inverter_nodes.clone(),
        y0,
        y1,
        y0_net,
        y0_shunt,
        y1_net,
        y1_shunt,
        iflat,
    })
}

/// Exact `dY/ds` of the full nodal matrix at `s = 0` (every series R-L
/// element differentiates to `-(x/w0) / (r + jx)^2`).
fn nodal_derivative(net: &NetworkSpec) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let w0 = net.base.w0;
    let order: Vec<&String> = net
        .inverter_nodes
        .iter()
        .chain(net.interior_buses.iter())
        .collect();
    let idx: std::collections::HashMap<&str, usize> =
        order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let inf: std::collections::HashSet<&str> =
        net.infinite_buses.iter().map(|s| s.as_str()).collect();
    let n = order.len();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let mut c = DVector::<Complex64>::zeros(n);
    for b in &net.branches {
        let yb = series_rl_admittance_deriv(b.r, b.x, w0);
        match (idx.get(b.from.as_str()), idx.get(b.to.as_str())) {
            (Some(&i), Some(&j)) => {
                y[(i, i)] += yb;
                y[(j, j)] += yb;
                y[(i, j)] -= yb;
                y[(j, i)] -= yb;
            }
            (Some(&i), None) if inf.contains(b.to.as_str()) => {
                y[(i, i)] += yb;
                c[i] -= yb;
            }
            (None, Some(&j)) if inf.contains(b.from.as_str()) => {
                y[(j, j)] += yb;
                c[j] -= yb;
            }
            _ => {}
        }
    }
    for l in &net.loads {
        if let Some(&i) = idx.get(l.bus.as_str()) {
            y[(i, i)] += series_rl_admittance_deriv(l.r, l.x, w0);
        }
    }
    (y, c)
}

/// The six real structure matrices of the reduced-order network model.
#[derive(Debug, Clone)]
pub struct StructureMatrices {
    /// Susceptance of the network part, `-u0^2 Im(Y0_net)`.
    pub b: DMatrix<f64>,
    /// Conductance of the network part, `u0^2 Re(Y0_net)`.
    pub g: DMatrix<f64>,
    /// Shunt susceptance, `-2 u0^2 Im(Y0_shunt)` (diagonal).
    pub b_t: DMatrix<f64>,
    /// Shunt conductance, `2 u0^2 Re(Y0_shunt)` (diagonal).
    pub g_t: DMatrix<f64>,
    /// Dynamic correction, `u0^2 Im(Y1_net + Y1_shunt)`.
    pub b_p: DMatrix<f64>,
    /// Dynamic correction, `-u0^2 Re(Y1_net + Y1_shunt)`.
    pub g_p: DMatrix<f64>,
}

/// Structure matrices from the reduced Taylor pair at reference voltage `u0`.
pub fn structure_matrices(adm: &LaplaceAdmittance, u0: f64) -> Result<StructureMatrices> {
    if !(u0 > 0.0) {
        return Err(Error::domain("reference voltage u0 must be positive"));
    }
    let u2 = u0 * u0;
    let y1_tot = &adm.y1_net + &adm.y1_shunt;
    Ok(StructureMatrices {
        b: adm.y0_net.map(|z| -u2 * z.im),
        g: adm.y0_net.map(|z| u2 * z.re),
        b_t: adm.y0_shunt.map(|z| -2.0 * u2 * z.im),
        g_t: adm.y0_shunt.map(|z| 2.0 * u2 * z.re),
        b_p: y1_tot.map(|z| u2 * z.im),
        g_p: y1_tot.map(|z| -u2 * z.re),
    })
}
