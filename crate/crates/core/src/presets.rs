//! Default study parameters: a 10 kVA low-voltage inverter fleet in a
//! cascade layout, and the matching two-bus benchmark case.
//!
//! All builders accept scale knobs used by the sweep studies: line length,
//! uniform reactance (X/R) scaling, and inverter rating scaling.

use crate::error::Result;
use crate::inverter::DroopInverter;
use crate::models::TwoBusParams;
use crate::network::{Branch, Load, NetworkSpec};
use crate::perunit::{make_base, DroopGains, PerUnitBase};

pub const U_BASE_V: f64 = 381.58;
pub const S_BASE_VA: f64 = 10e3;
pub const F0_HZ: f64 = 50.0;
pub const COUPLING_L_H: f64 = 0.35e-3;
pub const COUPLING_R_OHM: f64 = 0.030;
pub const FILTER_BANDWIDTH: f64 = 31.4; // rad/s
pub const MP_DEFAULT: f64 = 9.3e-5; // rad/s per watt
pub const NQ_DEFAULT: f64 = 1.3e-3; // volt per var
pub const LINE_L_H_PER_KM: f64 = 0.26e-3;
pub const LINE_R_OHM_PER_KM: f64 = 0.165;
/// Cascade line lengths, km, repeating for fleets larger than five.
pub const LINE_LENGTHS_KM: [f64; 4] = [5.0, 4.1, 3.0, 6.0];
/// Cascade bus loads as complex impedances at 50 Hz, ohms.
pub const LOADS_OHM: [(f64, f64); 5] =
    [(25.0, 0.0), (20.0, 0.0), (20.0, 4.72), (40.0, 12.58), (18.4, 0.157)];

pub fn default_base() -> PerUnitBase {
    make_base(U_BASE_V, S_BASE_VA, F0_HZ).expect("default base is valid")
}

pub fn default_gains(base: &PerUnitBase) -> DroopGains {
    DroopGains::normalize(MP_DEFAULT, NQ_DEFAULT, S_BASE_VA, base).expect("default gains are valid")
}

/// Scale knobs applied on top of the defaults.
#[derive(Debug, Clone, Copy)]
pub struct ScaleOptions {
    /// Multiplies every droop `kp`.
    pub kp_scale: f64,
    /// Multiplies every droop `kq`.
    pub kq_scale: f64,
    /// Multiplies every branch reactance (lines and couplings), moving the
    /// network X/R ratio proportionally.
    pub xr_scale: f64,
    /// Multiplies every inverter rating at fixed dimensionless gains.
    pub rating_scale: f64,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            kp_scale: 1.0,
            kq_scale: 1.0,
            xr_scale: 1.0,
            rating_scale: 1.0,
        }
    }
}

/// Identical-inverter cascade: terminals `inv1..invN` couple onto buses
/// `bus1..busN`, lines join consecutive buses with the default lengths
/// repeating, and each bus carries one of the default loads (repeating).
pub fn cascade(n: usize) -> (NetworkSpec, Vec<DroopInverter>) {
    cascade_scaled(n, &ScaleOptions::default()).expect("default cascade is valid")
}

pub fn cascade_scaled(
    n: usize,
    scale: &ScaleOptions,
) -> Result<(NetworkSpec, Vec<DroopInverter>)> {
    assert!(n >= 1, "cascade needs at least one inverter");
    let base = default_base();
    let (rc, xc) = base.impedance_to_pu(COUPLING_R_OHM, COUPLING_L_H)?;
    let xc = xc * scale.xr_scale;

    let terminals: Vec<String> = (1..=n).map(|i| format!("inv{i}")).collect();
    let buses: Vec<String> = (1..=n).map(|i| format!("bus{i}")).collect();
    let mut branches = Vec::new();
    for i in 0..n {
        branches.push(Branch::new(terminals[i].clone(), buses[i].clone(), rc, xc)?);
    }
    for i in 0..n.saturating_sub(1) {
        let km = LINE_LENGTHS_KM[i % LINE_LENGTHS_KM.len()];
        let (r, x) =
            base.impedance_to_pu(LINE_R_OHM_PER_KM * km, LINE_L_H_PER_KM * km)?;
        branches.push(Branch::new(
            buses[i].clone(),
            buses[i + 1].clone(),
            r,
            x * scale.xr_scale,
        )?);
    }
    let mut loads = Vec::new();
    for i in 0..n {
        let (re, im) = LOADS_OHM[i % LOADS_OHM.len()];
        loads.push(Load::new(
            buses[i].clone(),
            re / base.z_base,
            im / base.z_base,
        )?);
    }
    let net = NetworkSpec::new(base, terminals.clone(), buses, vec![], branches, loads)?;

    let gains = default_gains(&base)
        .scaled(scale.kp_scale, scale.kq_scale, base.w0)?;
    let gains = DroopGains::from_normalized(
        gains.kp,
        gains.kq,
        gains.sn * scale.rating_scale,
        base.w0,
    )?;
    let invs = terminals
        .iter()
        .map(|t| {
            DroopInverter::new(
                t.clone(),
                gains,
                1.0 / FILTER_BANDWIDTH,
                base.w0,
                Branch::new(t.clone(), format!("bus{}", &t[3..]), rc, xc).unwrap(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((net, invs))
}

/// Aggregate two-bus parameters: coupling plus `line_km` of line.
pub fn twobus(line_km: f64) -> TwoBusParams {
    twobus_scaled(line_km, &ScaleOptions::default()).expect("default two-bus is valid")
}

pub fn twobus_scaled(line_km: f64, scale: &ScaleOptions) -> Result<TwoBusParams> {
    let base = default_base();
    let (r, x) = base.impedance_to_pu(
        COUPLING_R_OHM + LINE_R_OHM_PER_KM * line_km,
        COUPLING_L_H + LINE_L_H_PER_KM * line_km,
    )?;
    let gains = default_gains(&base).scaled(scale.kp_scale, scale.kq_scale, base.w0)?;
    let gains =
        DroopGains::from_normalized(gains.kp, gains.kq, gains.sn * scale.rating_scale, base.w0)?;
    TwoBusParams::new(gains, 1.0 / FILTER_BANDWIDTH, r, x * scale.xr_scale, base.w0)
}

/// Network form of the two-bus case: one inverter whose aggregate
/// connection runs straight to a fixed-voltage bus. The full network
/// model of this scenario has the same five states as the closed-form
/// two-bus model.
pub fn twobus_net(line_km: f64) -> (NetworkSpec, Vec<DroopInverter>) {
    let base = default_base();
    let (r, x) = base
        .impedance_to_pu(
            COUPLING_R_OHM + LINE_R_OHM_PER_KM * line_km,
            COUPLING_L_H + LINE_L_H_PER_KM * line_km,
        )
        .expect("two-bus impedance is valid");
    let branch = Branch::new("inv", "grid", r, x).unwrap();
    let net = NetworkSpec::new(
        base,
        vec!["inv".into()],
        vec![],
        vec!["grid".into()],
        vec![branch.clone()],
        vec![],
    )
    .unwrap();
    let gains = default_gains(&base);
    let inv = DroopInverter::new("inv", gains, 1.0 / FILTER_BANDWIDTH, base.w0, branch).unwrap();
    (net, vec![inv])
}
