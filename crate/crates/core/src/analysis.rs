//! Eigenvalue analysis, stability verdicts, critical-gain search, and
//! stability-region sweeps.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::LinearStateSpace;
use crate::numeric::balance;
use crate::perunit::DroopGains;

/// Default magnitude below which an eigenvalue counts as the reference
/// (uniform-angle) mode, 1/s. Exposed because the virtual-resistor full
/// model perturbs the exact zero slightly.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Eigenvalues of a real matrix through a balanced Schur decomposition.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Assembly("matrix has non-finite entries".into()));
    }
    let balanced = balance(a);
    let n = balanced.nrows();
    let max_niter = 200 * n.max(10);
    let schur = nalgebra::linalg::Schur::try_new(balanced, f64::EPSILON, max_niter)
        .ok_or(Error::EigenNonConvergence(max_niter))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalue summary of one model.
#[derive(Debug, Clone)]
pub struct EigenReport {
    pub eigenvalues: Vec<Complex64>,
    /// Max real part over non-reference modes, 1/s.
    pub abscissa: f64,
    /// Count of eigenvalues with `|lambda| < zero_tol`.
    pub n_zero_modes: usize,
    /// `abscissa < 0`; an abscissa of exactly zero counts as unstable.
    pub stable: bool,
}

/// Computes an [`EigenReport`] with the given reference-mode tolerance.
pub fn eigen_report(ss: &LinearStateSpace, zero_tol: f64) -> Result<EigenReport> {
    eigen_report_matrix(&ss.a, zero_tol)
}

pub fn eigen_report_matrix(a: &DMatrix<f64>, zero_tol: f64) -> Result<EigenReport> {
    let eigenvalues = eigenvalues(a)?;
    let n_zero_modes = eigenvalues.iter().filter(|z| z.norm() < zero_tol).count();
    let abscissa = eigenvalues
        .iter()
        .filter(|z| z.norm() >= zero_tol)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EigenReport {
        eigenvalues,
        abscissa,
        n_zero_modes,
        stable: abscissa < 0.0,
    })
}

/// Result of a critical-gain bisection.
#[derive(Debug, Clone, Copy)]
pub struct CriticalGain {
    /// Gain at which the spectral abscissa crosses zero, pu.
    pub gain: f64,
    /// Abscissa at the bracket ends, for diagnostics.
    pub abscissa_lo: f64,
    pub abscissa_hi: f64,
    pub iterations: usize,
}

/// Bisects the spectral abscissa sign over `bracket = (lo, hi)` in the
/// gain. `build` maps an absolute gain value to a system matrix. Fails
/// with both endpoint abscissas when the bracket contains no sign change.
pub fn critical_gain<F>(
    build: F,
    bracket: (f64, f64),
    rel_tol: f64,
    zero_tol: f64,
) -> Result<CriticalGain>
where
    F: Fn(f64) -> Result<DMatrix<f64>>,
{
    let absc = |gain: f64| -> Result<f64> {
        Ok(eigen_report_matrix(&build(gain)?, zero_tol)?.abscissa)
    };
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::domain("bracket must satisfy 0 < lo < hi"));
    }
    let a_lo = absc(lo)?;
    let a_hi = absc(hi)?;
    if !(a_lo < 0.0 && a_hi >= 0.0) {
        return Err(Error::Bracket(a_lo, a_hi));
    }
    let mut iterations = 0;
    while (hi - lo) / hi > rel_tol {
        let mid = 0.5 * (lo + hi);
        if absc(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 200 {
            break;
        }
    }
    Ok(CriticalGain {
        gain: 0.5 * (lo + hi),
        abscissa_lo: a_lo,
        abscissa_hi: a_hi,
        iterations,
    })
}

/// Verdict grid over a `(kp, kq)` window with the refined boundary.
#[derive(Debug, Clone)]
pub struct StabilityBoundary {
    pub kp_axis: Vec<f64>,
    pub kq_axis: Vec<f64>,
    /// Row-major over `kq` rows: `verdicts[i_kq * kp_axis.len() + i_kp]`.
    pub verdicts: Vec<bool>,
    /// Boundary crossings `(kp, kq)` refined by per-row bisection.
    pub boundary: Vec<(f64, f64)>,
}

impl StabilityBoundary {
    pub fn verdict(&self, i_kp: usize, i_kq: usize) -> bool {
        self.verdicts[i_kq * self.kp_axis.len() + i_kp]
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates the abscissa sign on the grid (cells in parallel, merged by
/// index) and refines each sign change along the `kp` direction by
/// bisection. An empty stable set yields an empty boundary.
pub fn stability_region<F>(
    build: F,
    kp_range: (f64, f64),
    kq_range: (f64, f64),
    grid: (usize, usize),
    zero_tol: f64,
) -> Result<StabilityBoundary>
where
    F: Fn(f64, f64) -> Result<DMatrix<f64>> + Sync,
{
    if !(kp_range.0 > 0.0 && kq_range.0 > 0.0) {
        return Err(Error::domain("gain ranges must be positive"));
    }
    let kp_axis = linspace(kp_range.0, kp_range.1, grid.0.max(2));
    let kq_axis = linspace(kq_range.0, kq_range.1, grid.1.max(2));
    let stable_at = |kp: f64, kq: f64| -> Result<bool> {
        Ok(eigen_report_matrix(&build(kp, kq)?, zero_tol)?.stable)
    };

    let cells: Vec<(usize, usize)> = (0..kq_axis.len())
        .flat_map(|iq| (0..kp_axis.len()).map(move |ip| (ip, iq)))
        .collect();
    let verdicts: Vec<Result<bool>> = cells
        .par_iter()
        .map(|&(ip, iq)| stable_at(kp_axis[ip], kq_axis[iq]))
        .collect();
    let verdicts: Vec<bool> = verdicts.into_iter().collect::<Result<_>>()?;

    let mut boundary = Vec::new();
    for (iq, &kq) in kq_axis.iter().enumerate() {
        for ip in 0..kp_axis.len() - 1 {
            let s0 = verdicts[iq * kp_axis.len() + ip];
            let s1 = verdicts[iq * kp_axis.len() + ip + 1];
            if s0 != s1 {
                let (mut lo, mut hi) = (kp_axis[ip], kp_axis[ip + 1]);
                // keep lo on the same side as s0
                for _ in 0..30 {
                    let mid = 0.5 * (lo + hi);
                    if stable_at(mid, kq)? == s0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                boundary.push((0.5 * (lo + hi), kq));
            }
        }
    }
    Ok(StabilityBoundary {
        kp_axis,
        kq_axis,
        verdicts,
        boundary,
    })
}

/// Least-damped non-reference eigenvalue and its left eigenvector,
/// computed by shifted inverse iteration. The left eigenvector extracts
/// the modal coordinate `c(t) = w^H x(t)` of that mode from a trajectory,
/// which is how growth or decay of a single mode is observed without the
/// other transients masking it.
pub fn least_damped_mode(
    a: &DMatrix<f64>,
    zero_tol: f64,
) -> Result<(Complex64, nalgebra::DVector<Complex64>)> {
    let report = eigen_report_matrix(a, zero_tol)?;
    let lambda = *report
        .eigenvalues
        .iter()
        .filter(|z| z.norm() >= zero_tol)
        .max_by(|x, y| x.re.partial_cmp(&y.re).unwrap())
        .ok_or_else(|| Error::Assembly("no non-reference modes".into()))?;
    let n = a.nrows();
    let ac = a.map(|v| Complex64::new(v, 0.0)).transpose();
    // small detuning keeps the shifted matrix factorizable
    let shift = lambda + Complex64::new(1e-8 * a.amax().max(1.0), 0.0);
    let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = nalgebra::DVector::<Complex64>::from_element(n, Complex64::new(1.0, 0.3));
    for _ in 0..8 {
        let w = lu
            .solve(&v)
            .ok_or_else(|| Error::Assembly("inverse iteration hit a singular shift".into()))?;
        let norm = w.norm();
        if !(norm > 0.0) {
            return Err(Error::Assembly("inverse iteration collapsed".into()));
        }
        v = w / Complex64::new(norm, 0.0);
    }
    Ok((lambda, v.map(|z| z.conj())))
}

/// Stability bound of the quasi-stationary model from its effective
/// damping condition: the voltage loop follows the angle with a delay,
/// and the delayed conductance feedback flips the damping sign at
/// `mp = (1 + nq B)^2 / (nq tau G^2)` with `B = x/(r^2+x^2)`,
/// `G = r/(r^2+x^2)` at unit voltages. Returns the largest stable `mp`
/// (rad/s per pu-watt); a lossless connection (`G = 0`) never triggers the
/// mechanism and yields infinity.
pub fn bound_conventional(r: f64, x: f64, gains: &DroopGains, tau: f64) -> Result<f64> {
    if r < 0.0 || x < 0.0 || r + x <= 0.0 || !(tau > 0.0) {
        return Err(Error::domain("need r, x >= 0, r + x > 0, tau > 0"));
    }
    let d = r * r + x * x;
    let b = x / d;
    let g = r / d;
    if g == 0.0 {
        return Ok(f64::INFINITY);
    }
    let nq = gains.nq;
    Ok((1.0 + nq * b).powi(2) / (nq * tau * g * g))
}

/// Closed-form droop bounds of the first-order model: the damping terms
/// stay positive while
/// `kp < sn (r^2+x^2)^2 / (2 r x^2)` and `kq < tau w0 (sn/u0) (r^2+x^2)^2 / (2 r x^2)`.
/// Lossless or purely resistive connections return infinity.
pub fn bound_hifi(r: f64, x: f64, sn: f64, tau: f64, w0: f64, u0: f64) -> Result<(f64, f64)> {
    if r < 0.0 || x < 0.0 || !(sn > 0.0) || !(tau > 0.0) || !(w0 > 0.0) || !(u0 > 0.0) {
        return Err(Error::domain("invalid bound parameters"));
    }
    if r == 0.0 || x == 0.0 {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let kp_max = sn * (r * r + x * x).powi(2) / (2.0 * r * x * x);
    Ok((kp_max, tau * w0 * (sn / u0) * kp_max))
}
