//! Per-unit bases and conversion of physical quantities into the
//! dimensionless system used by every other module.
//!
//! The base impedance is `z_base = 1.5 * u_base^2 / s_base`: `u_base` is a
//! peak phase-to-ground voltage and `s_base` a three-phase apparent power,
//! so the 3/2 factor of the complex power `S = 1.5 * V * conj(I)` is
//! absorbed into the bases and internal computation uses `S = V * conj(I)`
//! throughout.

use crate::error::{Error, Result};

/// Voltage/power/frequency bases with derived impedance and current bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBase {
    /// Base peak phase-to-ground voltage, volts.
    pub u_base: f64,
    /// Base three-phase apparent power, volt-amperes.
    pub s_base: f64,
    /// Nominal angular frequency, rad/s.
    pub w0: f64,
    /// Derived base impedance, ohms.
    pub z_base: f64,
    /// Derived base current (peak phase), amperes.
    pub i_base: f64,
}

impl PerUnitBase {
    /// Builds a base set from physical inputs. `f0` is in hertz.
    pub fn new(u_base: f64, s_base: f64, f0: f64) -> Result<Self> {
        if !(u_base > 0.0) || !(s_base > 0.0) || !(f0 > 0.0) {
            return Err(Error::domain(format!(
                "per-unit bases must be positive (u_base={u_base}, s_base={s_base}, f0={f0})"
            )));
        }
        let z_base = 1.5 * u_base * u_base / s_base;
        let i_base = s_base / (1.5 * u_base);
        Ok(Self {
            u_base,
            s_base,
            w0: 2.0 * std::f64::consts::PI * f0,
            z_base,
            i_base,
        })
    }

    /// Series R-L impedance to per-unit (r, x) with x evaluated at `w0`.
    ///
    /// `r_ohm >= 0`, `l_henry >= 0`, not both zero.
    pub fn impedance_to_pu(&self, r_ohm: f64, l_henry: f64) -> Result<(f64, f64)> {
        if r_ohm < 0.0 || l_henry < 0.0 {
            return Err(Error::domain("impedance components must be non-negative"));
        }
        if r_ohm == 0.0 && l_henry == 0.0 {
            return Err(Error::DegenerateBranch);
        }
        Ok((r_ohm / self.z_base, self.w0 * l_henry / self.z_base))
    }

    /// Inverse of [`impedance_to_pu`](Self::impedance_to_pu).
    pub fn impedance_from_pu(&self, r: f64, x: f64) -> (f64, f64) {
        (r * self.z_base, x * self.z_base / self.w0)
    }

    pub fn power_to_pu(&self, s_va: f64) -> f64 {
        s_va / self.s_base
    }

    pub fn power_from_pu(&self, s: f64) -> f64 {
        s * self.s_base
    }

    pub fn voltage_to_pu(&self, u_volt: f64) -> f64 {
        u_volt / self.u_base
    }

    pub fn voltage_from_pu(&self, u: f64) -> f64 {
        u * self.u_base
    }

    pub fn current_to_pu(&self, i_amp: f64) -> f64 {
        i_amp / self.i_base
    }

    pub fn current_from_pu(&self, i: f64) -> f64 {
        i * self.i_base
    }
}

/// Builds a [`PerUnitBase`]. Free-function form of [`PerUnitBase::new`].
pub fn make_base(u_base: f64, s_base: f64, f0: f64) -> Result<PerUnitBase> {
    PerUnitBase::new(u_base, s_base, f0)
}

/// Per-inverter droop gains, stored in per-unit form.
///
/// `mp` is in rad/s per pu-watt and `nq` in pu-volt per pu-var (powers in
/// per-unit of `s_base`). The dimensionless gains satisfy
/// `kp = mp * sn / w0` and `kq = nq * sn / u0` with `u0 = 1` pu, so they
/// are invariant under a change of `s_base`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopGains {
    /// Normalized frequency droop, dimensionless.
    pub kp: f64,
    /// Normalized voltage droop, dimensionless.
    pub kq: f64,
    /// Frequency droop slope, rad/s per pu-watt.
    pub mp: f64,
    /// Voltage droop slope, pu-volt per pu-var.
    pub nq: f64,
    /// Apparent rating, pu of `s_base`.
    pub sn: f64,
}

impl DroopGains {
    /// From physical droop slopes: `mp_phys` in rad/s per watt, `nq_phys`
    /// in volts per var, `sn_va` the inverter rating in volt-amperes.
    pub fn normalize(mp_phys: f64, nq_phys: f64, sn_va: f64, base: &PerUnitBase) -> Result<Self> {
        if !(mp_phys > 0.0) || !(nq_phys > 0.0) || !(sn_va > 0.0) {
            return Err(Error::domain("droop slopes and rating must be positive"));
        }
        let sn = sn_va / base.s_base;
        let mp = mp_phys * base.s_base;
        let nq = nq_phys * base.s_base / base.u_base;
        Ok(Self {
            kp: mp_phys * sn_va / base.w0,
            kq: nq_phys * sn_va / base.u_base,
            mp,
            nq,
            sn,
        })
    }

    /// From dimensionless gains directly (`u0 = 1` pu reference).
    pub fn from_normalized(kp: f64, kq: f64, sn: f64, w0: f64) -> Result<Self> {
        if !(kp > 0.0) || !(kq > 0.0) || !(sn > 0.0) {
            return Err(Error::domain("kp, kq, sn must be positive"));
        }
        Ok(Self {
            kp,
            kq,
            mp: kp * w0 / sn,
            nq: kq / sn,
            sn,
        })
    }

    /// Same inverter with both dimensionless gains scaled.
    pub fn scaled(&self, kp_scale: f64, kq_scale: f64, w0: f64) -> Result<Self> {
        Self::from_normalized(self.kp * kp_scale, self.kq * kq_scale, self.sn, w0)
    }

    /// Inverse frequency droop `1/mp`, seconds (per pu-watt-radian).
    pub fn lambda_p(&self) -> f64 {
        1.0 / self.mp
    }

    /// Inverse voltage droop `1/nq`, dimensionless.
    pub fn lambda_q(&self) -> f64 {
        1.0 / self.nq
    }
}

/// Free-function form of [`DroopGains::normalize`].
pub fn normalize_droops(
    mp_phys: f64,
    nq_phys: f64,
    sn_va: f64,
    base: &PerUnitBase,
) -> Result<DroopGains> {
    DroopGains::normalize(mp_phys, nq_phys, sn_va, base)
}
