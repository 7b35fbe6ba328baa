//! Small numerical helpers shared by the modules.

use crate::prelude::*;

/// Midpoint nodes of `n` equal cells on `[lo, hi]`.
pub(crate) fn midpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
///
/// Returns `(argmin, min)`; the endpoints are compared too so a boundary
/// minimum is found exactly.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let (lo, hi) = (a, b);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for x in [lo, hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Ordinary least squares for a small design matrix via the normal equations.
///
/// `rows` holds one design row per observation. Returns `None` when the normal
/// matrix is singular.
pub(crate) fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows.first()?.len();
    let mut a = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            rhs[i] += row[i] * yi;
            for j in 0..k {
                a[i * k + j] += row[i] * row[j];
            }
        }
    }
    solve_dense(&mut a, &mut rhs, k)?;
    Some(rhs)
}

/// Gaussian elimination with partial pivoting, in place.
fn solve_dense(a: &mut [f64], b: &mut [f64], k: usize) -> Option<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| {
            a[i * k + col]
                .abs()
                .partial_cmp(&a[j * k + col].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })?;
        if a[piv * k + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            b.swap(piv, col);
        }
        for i in col + 1..k {
            let factor = a[i * k + col] / a[col * k + col];
            for j in col..k {
                a[i * k + j] -= factor * a[col * k + j];
            }
            b[i] -= factor * b[col];
        }
    }
    for col in (0..k).rev() {
        let mut acc = b[col];
        for j in col + 1..k {
            acc -= a[col * k + j] * b[j];
        }
        b[col] = acc / a[col * k + col];
    }
    Some(())
}

/// Slope of the least-squares line through `(x, y)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `log Σ exp(v_i)`, ignoring `-∞` entries.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Empirical quantile with the "type 1" rule (inverse of the empirical CDF).
///
/// `sorted` must be ascending.
pub(crate) fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let k = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_interior_and_boundary_minima() {
        let (x, fx) = golden_min(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8 && fx < 1e-15);
        let (x, _) = golden_min(|x| x, 0.2, 1.0, 1e-10);
        assert_eq!(x, 0.2);
    }

    #[test]
    fn least_squares_recovers_exact_plane() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| 2.0 - 0.5 * i as f64 + 0.25 * (i * i) as f64).collect();
        let beta = least_squares(&rows, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-10);
        assert!((beta[1] + 0.5).abs() < 1e-10);
        assert!((beta[2] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn quantile_type_one() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.5), 2.0);
        assert_eq!(empirical_quantile(&s, 0.51), 3.0);
        assert_eq!(empirical_quantile(&s, 1.0), 4.0);
    }
}
