//! Dense symmetric eigendecomposition and small helpers shared by the
//! projections. Two solvers: cyclic Jacobi (small matrices, most accurate)
//! and Householder tridiagonalisation followed by implicit QL (large
//! matrices, `O(m³)` with a small constant). [`eigh`] picks one by size.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail_shape, Error, Result};

/// Sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// `vectors[j]` is the unit eigenvector of `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Matrices up to this order go to [`jacobi_eigh`], larger ones to
/// [`tridiagonal_eigh`].
pub const JACOBI_MAX_ORDER: usize = 128;

pub fn eigh(s: &[f64], m: usize) -> Result<Eigen> {
    if m <= JACOBI_MAX_ORDER {
        jacobi_eigh(s, m)
    } else {
        tridiagonal_eigh(s, m)
    }
}

fn check_symmetric(s: &[f64], m: usize) -> Result<()> {
    if s.len() != m * m {
        bail_shape!("expected {}×{} matrix, got {} values", m, m, s.len());
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigensolver input"));
    }
    for i in 0..m {
        for j in 0..i {
            let (a, b) = (s[i * m + j], s[j * m + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                crate::error::bail_arg!("matrix is not symmetric at ({}, {})", i, j);
            }
        }
    }
    Ok(())
}

fn sorted_desc(values: &[f64], vectors: impl Fn(usize) -> Vec<f64>) -> Eigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    Eigen { values: order.iter().map(|&i| values[i]).collect(), vectors: order.iter().map(|&i| vectors(i)).collect() }
}

/// Cyclic Jacobi rotations on a row-major `m × m` symmetric matrix.
/// Converges when the off-diagonal mass falls below `1e-30·‖S‖²_F`.
pub fn jacobi_eigh(s: &[f64], m: usize) -> Result<Eigen> {
    check_symmetric(s, m)?;
    let mut a = s.to_vec();
    // Rows of `v` are the eigenvectors, so rotations touch contiguous memory.
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    let mut converged = m < 2;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                off += a[i * m + j] * a[i * m + j];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * m + p], a[q * m + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let sn = t * c;
                rotate_rows(&mut a, m, p, q, c, sn);
                for k in 0..m {
                    a[k * m + p] = a[p * m + k];
                    a[k * m + q] = a[q * m + k];
                }
                a[p * m + p] = app - t * apq;
                a[q * m + q] = aqq + t * apq;
                a[p * m + q] = 0.0;
                a[q * m + p] = 0.0;
                rotate_rows(&mut v, m, p, q, c, sn);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    let diag: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
    Ok(sorted_desc(&diag, |i| v[i * m..(i + 1) * m].to_vec()))
}

/// QL sweeps allowed per eigenvalue.
const QL_MAX_ITERATIONS: usize = 60;

/// Householder reduction to tridiagonal form, then the implicit QL method
/// (the EISPACK `tred2`/`tql2` pair).
pub fn tridiagonal_eigh(s: &[f64], n: usize) -> Result<Eigen> {
    check_symmetric(s, n)?;
    if n == 0 {
        return Ok(Eigen { values: Vec::new(), vectors: Vec::new() });
    }
    let mut v = s.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e, n);
    // Rows of `w` become the eigenvectors.
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[j * n + i] = v[i * n + j];
        }
    }
    tql2(&mut w, &mut d, &mut e, n)?;
    Ok(sorted_desc(&d, |i| w[i * n..(i + 1) * n].to_vec()))
}

fn tred2(v: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    d.copy_from_slice(&v[(n - 1) * n..]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                let f = d[j];
                v[j * n + i] = f;
                let mut g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// `w` holds the accumulated transform transposed: row `i` is column `i`.
fn tql2(w: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERATIONS {
                    return Err(Error::NoConvergence(QL_MAX_ITERATIONS));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (head, tail) = w.split_at_mut((i + 1) * n);
                    let wi = &mut head[i * n..];
                    let wi1 = &mut tail[..n];
                    for (a, b) in wi.iter_mut().zip(wi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn rotate_rows(a: &mut [f64], m: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = a.split_at_mut(q * m);
    let rp = &mut head[p * m..(p + 1) * m];
    let rq = &mut tail[..m];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Row-major pairwise Euclidean distances of the rows of `points`
/// (`m × d`).
pub fn euclidean_distances(points: &[f64], m: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        let xi = &points[i * d..(i + 1) * d];
        for j in i + 1..m {
            let xj = &points[j * d..(j + 1) * d];
            let dist = libm::sqrt(xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum());
            out[i * m + j] = dist;
            out[j * m + i] = dist;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(m: usize, seed: u64) -> Vec<f64> {
        let mut r = crate::rng::seeded(seed);
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = r.random::<f64>() * 2.0 - 1.0;
                s[i * m + j] = v;
                s[j * m + i] = v;
            }
        }
        s
    }

    pub(crate) fn reconstruction_error(s: &[f64], m: usize, e: &Eigen) -> f64 {
        let mut err = 0.0;
        for i in 0..m {
            for j in 0..m {
                let r: f64 = (0..m).map(|k| e.vectors[k][i] * e.values[k] * e.vectors[k][j]).sum();
                err += (r - s[i * m + j]).powi(2);
            }
        }
        err.sqrt()
    }

    #[test]
    fn identity_and_diagonal() {
        let e = jacobi_eigh(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = jacobi_eigh(&[1.0, 0.0, 0.0, 3.0], 2).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0]);
        assert_eq!(e.vectors[1], vec![1.0, 0.0]);
    }

    #[test]
    fn random_matrices_reconstruct() {
        for seed in 0..10 {
            let s = random_symmetric(20, seed);
            let e = jacobi_eigh(&s, 20).unwrap();
            assert!(reconstruction_error(&s, 20, &e) < 1e-8);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (lambda, v) in e.values.iter().zip(&e.vectors) {
                for i in 0..20 {
                    let sv: f64 = (0..20).map(|j| s[i * 20 + j] * v[j]).sum();
                    assert!((sv - lambda * v[i]).abs() < 1e-9 * norm);
                }
            }
            for a in 0..20 {
                for b in 0..20 {
                    let dot: f64 = e.vectors[a].iter().zip(&e.vectors[b]).map(|(x, y)| x * y).sum();
                    assert!((dot - f64::from(u8::from(a == b))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tridiagonal_solver_agrees() {
        for (m, seed) in [(1, 0), (2, 1), (7, 2), (20, 3), (150, 4)] {
            let s = random_symmetric(m, seed);
            let e = tridiagonal_eigh(&s, m).unwrap();
            let scale = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(reconstruction_error(&s, m, &e) < 1e-10 * scale.max(1.0), "m={m}");
            if m <= 20 {
                let j = jacobi_eigh(&s, m).unwrap();
                for (a, b) in e.values.iter().zip(&j.values) {
                    assert!((a - b).abs() < 1e-12 * scale.max(1.0));
                }
            }
        }
        let e = tridiagonal_eigh(&[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, 2.0]);
        assert!(tridiagonal_eigh(&[0.0; 9], 3).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(jacobi_eigh(&[1.0, 2.0, 0.0, 1.0], 2).is_err());
        assert!(jacobi_eigh(&[1.0, 2.0, 2.0], 2).is_err());
        assert!(jacobi_eigh(&[f64::NAN], 1).is_err());
    }

    #[test]
    fn distances() {
        let d = euclidean_distances(&[0.0, 0.0, 3.0, 4.0], 2, 2);
        assert_eq!(d, vec![0.0, 5.0, 5.0, 0.0]);
    }
}
