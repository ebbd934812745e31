//! Small numerical utilities shared across modules.

use nalgebra::DMatrix;

/// Neumaier-compensated sum. Used where physically large terms cancel to
/// a small net value and the net value is then amplified (interior-bus
/// current balances against a large virtual resistance).
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Parlett-Reinsch balancing: diagonal similarity scaling by powers of two
/// so row and column norms match. Entry magnitudes in these models span
/// many decades (virtual-resistor couplings against droop rows), which an
/// unbalanced QR iteration turns into absolute eigenvalue error large
/// enough to poison the zero-mode test.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let radix: f64 = 2.0;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 && c.is_finite() && r.is_finite() {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                let mut c_var = c;
                while c_var < g {
                    f *= radix;
                    c_var *= sqrdx;
                }
                g = r * radix;
                while c_var > g {
                    f /= radix;
                    c_var /= sqrdx;
                }
                if (c_var + r) / f < 0.95 * s {
                    done = false;
                    let ginv = 1.0 / f;
                    for j in 0..n {
                        m[(i, j)] *= ginv;
                    }
                    for j in 0..n {
                        m[(j, i)] *= f;
                    }
                }
            }
        }
    }
    m
}

/// `max(sv) / min(sv)` from a full SVD; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
