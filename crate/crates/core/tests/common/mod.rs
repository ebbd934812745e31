//! Shared oracle helpers for the integration tests: random two-timescale
//! systems in gamma form and eigenvalue-error bookkeeping. Everything
//! here is independent of the reduction implementation it is used to
//! check (errors are measured against a dense eigensolve of the
//! unpartitioned system).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use microgrid_core::reduction::PartitionedLinear;

pub const N_SLOW: usize = 3;
pub const N_FAST: usize = 3;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Base blocks of one two-timescale family member; the timescale ratio is
/// applied afterwards so the same family member can be evaluated across a
/// whole epsilon ladder.
#[derive(Clone)]
pub struct BaseSystem {
    pub a_ss: DMatrix<f64>,
    pub a_sf: DMatrix<f64>,
    pub a_fs: DMatrix<f64>,
    pub a_ff: DMatrix<f64>,
}

impl BaseSystem {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let mut a_ss = random_matrix(rng, N_SLOW, N_SLOW, 1.0);
        for i in 0..N_SLOW {
            a_ss[(i, i)] -= 1.5;
        }
        let mut a_ff = random_matrix(rng, N_FAST, N_FAST, 1.0);
        for i in 0..N_FAST {
            a_ff[(i, i)] -= 2.5;
        }
        Self {
            a_ss,
            a_sf: random_matrix(rng, N_SLOW, N_FAST, 0.5),
            a_fs: random_matrix(rng, N_FAST, N_SLOW, 0.5),
            a_ff,
        }
    }

    /// Full system matrix at ratio `eps` (fast rows divided by eps).
    pub fn full(&self, eps: f64) -> DMatrix<f64> {
        let n = N_SLOW + N_FAST;
        let mut full = DMatrix::zeros(n, n);
        full.view_mut((0, 0), (N_SLOW, N_SLOW)).copy_from(&self.a_ss);
        full.view_mut((0, N_SLOW), (N_SLOW, N_FAST)).copy_from(&self.a_sf);
        full.view_mut((N_SLOW, 0), (N_FAST, N_SLOW))
            .copy_from(&(&self.a_fs / eps));
        full.view_mut((N_SLOW, N_SLOW), (N_FAST, N_FAST))
            .copy_from(&(&self.a_ff / eps));
        full
    }

    pub fn partition(&self, eps: f64) -> PartitionedLinear {
        PartitionedLinear::new(
            self.a_ss.clone(),
            self.a_sf.clone(),
            self.a_fs.clone(),
            self.a_ff.clone(),
            DVector::from_element(N_FAST, eps),
        )
        .unwrap()
    }

    pub fn stable_for(&self, eps_ladder: &[f64]) -> bool {
        eps_ladder.iter().all(|&eps| {
            self.full(eps)
                .complex_eigenvalues()
                .iter()
                .all(|z| z.re < -1e-3)
        })
    }

    /// Resamples until the family member is stable across the ladder.
    pub fn sample_stable(rng: &mut ChaCha8Rng, eps_ladder: &[f64]) -> Self {
        loop {
            let b = Self::sample(rng);
            if b.stable_for(eps_ladder) {
                return b;
            }
        }
    }
}

/// The `count` smallest-magnitude eigenvalues (the slow cluster).
pub fn slow_eigs(m: &DMatrix<f64>, count: usize) -> Vec<Complex64> {
    let mut e: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    e.truncate(count);
    e
}

/// Max over the exact slow eigenvalues of the distance to the nearest
/// approximate one.
pub fn eig_error(exact: &[Complex64], approx: &[Complex64]) -> f64 {
    exact
        .iter()
        .map(|e| {
            approx
                .iter()
                .map(|a| (e - a).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs the paired order-of-accuracy study: `n_systems` family members
/// evaluated on the whole epsilon ladder. Returns the (zero-order,
/// first-order) log-log slopes of the worst-case slow-eigenvalue errors.
pub fn order_study(seed: u64, n_systems: usize, eps_ladder: &[f64]) -> (f64, f64) {
    use microgrid_core::reduction::{reduce_first_order, reduce_zero_order};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<BaseSystem> = (0..n_systems)
        .map(|_| BaseSystem::sample_stable(&mut rng, eps_ladder))
        .collect();
    let (mut lx, mut l0, mut l1) = (Vec::new(), Vec::new(), Vec::new());
    for &eps in eps_ladder {
        let (mut w0, mut w1) = (0.0f64, 0.0f64);
        for b in &bases {
            let exact = slow_eigs(&b.full(eps), N_SLOW);
            let p = b.partition(eps);
            let a0 = reduce_zero_order(&p).unwrap();
            let a1 = reduce_first_order(&p).unwrap();
            let e0: Vec<Complex64> = a0.complex_eigenvalues().iter().copied().collect();
            let e1: Vec<Complex64> = a1.complex_eigenvalues().iter().copied().collect();
            w0 = w0.max(eig_error(&exact, &e0));
            w1 = w1.max(eig_error(&exact, &e1));
        }
        lx.push(eps.ln());
        l0.push(w0.ln());
        l1.push(w1.ln());
    }
    (regression_slope(&lx, &l0), regression_slope(&lx, &l1))
}
