//! Restarted GMRES with right preconditioning for the nonsymmetric correction systems.

use crate::fields::poisson::CgStats;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` to `|b - A x| <= tol |b|`, starting from `x`. Returns the statistics of
/// the last iteration whether or not the tolerance was reached.
pub(crate) fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> CgStats {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgStats { iterations: 0, relative_residual: 0.0 };
    }
    let mut total = 0;
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    loop {
        apply(x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = dot(&r, &r).sqrt();
        let rel = beta / bnorm;
        if rel <= tol || total >= max_iter {
            return CgStats { iterations: total, relative_residual: rel };
        }
        let m = restart.min(max_iter - total);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            precondition(&basis[k], &mut z);
            apply(&z, &mut tmp);
            let mut w = tmp.clone();
            for (i, vi) in basis.iter().enumerate() {
                let h = dot(&w, vi);
                hess[i][k] = h;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= h * b);
            }
            let hn = dot(&w, &w).sqrt();
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k].powi(2) + hess[k + 1][k].powi(2)).sqrt();
            if denom == 0.0 {
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            total += 1;
            if g[k].abs() / bnorm <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // Back substitution and update x += M^-1 V y.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut vy = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&basis) {
            vy.iter_mut().zip(vi).for_each(|(a, b)| *a += yi * b);
        }
        precondition(&vy, &mut z);
        x.iter_mut().zip(&z).for_each(|(a, b)| *a += b);
        if k == 0 {
            apply(x, &mut tmp);
            let res: f64 = b.iter().zip(&tmp).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
            return CgStats { iterations: total, relative_residual: res / bnorm };
        }
    }
}
