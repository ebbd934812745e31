//! Generic multi-timescale reduction of a partitioned linear system.
//!
//! The system is written with the fast rows scaled by their physical time
//! constants:
//!
//! ```text
//! dx_s/dt         = a_ss x_s + a_sf x_f
//! Gamma dx_f/dt   = a_fs x_s + a_ff x_f
//! ```
//!
//! Dropping the fast derivative entirely gives the zero-order slow system
//! `A0 = a_ss - a_sf a_ff^-1 a_fs`. Letting the fast states also track the
//! first derivative of the slow ones gives the first-order system
//! `A1 = (I + a_sf a_ff^-1 Gamma a_ff^-1 a_fs)^-1 A0`, which keeps the
//! leading effect of the fast dynamics on the slow modes. Zero entries of
//! `Gamma` mark algebraic constraints and are handled by the same
//! formulas.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{LinearStateSpace, StateLabel};
use crate::numeric::condition_number;

/// Slow/fast partition of a linear system.
#[derive(Debug, Clone)]
pub struct PartitionedLinear {
    pub a_ss: DMatrix<f64>,
    pub a_sf: DMatrix<f64>,
    pub a_fs: DMatrix<f64>,
    pub a_ff: DMatrix<f64>,
    /// Fast time-scale parameters, seconds; zero entries are algebraic rows.
    pub gamma: DVector<f64>,
}

impl PartitionedLinear {
    pub fn new(
        a_ss: DMatrix<f64>,
        a_sf: DMatrix<f64>,
        a_fs: DMatrix<f64>,
        a_ff: DMatrix<f64>,
        gamma: DVector<f64>,
    ) -> Result<Self> {
        let (ns, nf) = (a_ss.nrows(), a_ff.nrows());
        if a_ss.ncols() != ns || a_ff.ncols() != nf {
            return Err(Error::Reduction("diagonal blocks must be square".into()));
        }
        if a_sf.shape() != (ns, nf) || a_fs.shape() != (nf, ns) {
            return Err(Error::Reduction("off-diagonal block shapes do not conform".into()));
        }
        if gamma.len() != nf {
            return Err(Error::Dimension {
                expected: nf,
                got: gamma.len(),
            });
        }
        if gamma.iter().any(|&g| g < 0.0) {
            return Err(Error::Reduction("gamma entries must be non-negative".into()));
        }
        Ok(Self {
            a_ss,
            a_sf,
            a_fs,
            a_ff,
            gamma,
        })
    }

    pub fn n_slow(&self) -> usize {
        self.a_ss.nrows()
    }

    pub fn n_fast(&self) -> usize {
        self.a_ff.nrows()
    }

    fn fast_inverse_times(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let lu = self.a_ff.clone().lu();
        lu.solve(m).ok_or_else(|| {
            Error::Reduction(format!(
                "fast block is singular (condition estimate {:.3e})",
                condition_number(&self.a_ff)
            ))
        })
    }
}

/// Quasi-stationary elimination of the fast states:
/// `A0 = a_ss - a_sf a_ff^-1 a_fs`.
pub fn reduce_zero_order(p: &PartitionedLinear) -> Result<DMatrix<f64>> {
    let x = p.fast_inverse_times(&p.a_fs)?;
    Ok(&p.a_ss - &p.a_sf * x)
}

/// First-order elimination:
/// `A1 = (I + a_sf a_ff^-1 Gamma a_ff^-1 a_fs)^-1 (a_ss - a_sf a_ff^-1 a_fs)`.
///
/// The mass inverse is computed by direct factorization with a condition
/// guard; droop parameters near the validity boundary of the first-order
/// form make series approximations slowly convergent.
pub fn reduce_first_order(p: &PartitionedLinear) -> Result<DMatrix<f64>> {
    let x = p.fast_inverse_times(&p.a_fs)?;
    let gx = DMatrix::from_fn(p.n_fast(), p.n_slow(), |i, j| p.gamma[i] * x[(i, j)]);
    let y = p.fast_inverse_times(&gx)?;
    let mass = DMatrix::identity(p.n_slow(), p.n_slow()) + &p.a_sf * y;
    let a0 = &p.a_ss - &p.a_sf * x;

    let svd = mass.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::SingularMass(format!(
            "first-order mass matrix is near singular (smallest singular value {smin:.3e})"
        )));
    }
    mass.lu()
        .solve(&a0)
        .ok_or_else(|| Error::SingularMass("first-order mass matrix is singular".into()))
}

/// Splits a labeled system into (slow, fast) blocks. The predicate selects
/// fast states; the time constants attached to the fast labels build
/// `Gamma` and the fast rows are rescaled by them so the partition is in
/// the physical form expected by the reduction operators.
///
/// Returns the partition together with the original indices of the slow
/// and fast states.
pub fn partition_by_labels<F>(
    ss: &LinearStateSpace,
    fast_predicate: F,
) -> Result<(PartitionedLinear, Vec<usize>, Vec<usize>)>
where
    F: Fn(&StateLabel) -> bool,
{
    let n = ss.dim();
    let (mut slow, mut fast) = (Vec::new(), Vec::new());
    for (i, label) in ss.labels.iter().enumerate() {
        if fast_predicate(label) {
            fast.push(i);
        } else {
            slow.push(i);
        }
    }
    if fast.is_empty() || fast.len() == n {
        return Err(Error::Reduction(format!(
            "fast selection must be a nonempty strict subset ({} of {n} states selected)",
            fast.len()
        )));
    }
    let mut gamma = DVector::zeros(fast.len());
    for (row, &i) in fast.iter().enumerate() {
        gamma[row] = ss.labels[i].time_const.ok_or_else(|| {
            Error::Reduction(format!(
                "state '{}' selected as fast carries no time constant",
                ss.labels[i].name()
            ))
        })?;
    }
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| ss.a[(rows[i], cols[j])])
    };
    let a_ss = pick(&slow, &slow);
    let a_sf = pick(&slow, &fast);
    // fast rows scaled by their time constants: gamma * dx_f/dt = ...
    let mut a_fs = pick(&fast, &slow);
    let mut a_ff = pick(&fast, &fast);
    for row in 0..fast.len() {
        for c in 0..slow.len() {
            a_fs[(row, c)] *= gamma[row];
        }
        for c in 0..fast.len() {
            a_ff[(row, c)] *= gamma[row];
        }
    }
    Ok((
        PartitionedLinear::new(a_ss, a_sf, a_fs, a_ff, gamma)?,
        slow,
        fast,
    ))
}
