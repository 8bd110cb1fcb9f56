//! Power-kernel machinery shared by the samplers: hybrid-scheme weights,
//! variance-matched forward-variance loadings and exact kernel covariance
//! integrals for the Cholesky oracle.

use crate::stats::{gauss_legendre, integrate_gl};

/// Kernel exponent of the Volterra integral, alpha = H - 1/2.
#[inline]
pub fn kernel_alpha(h: f64) -> f64 {
    h - 0.5
}

/// Riemann weights `(b_l * dt)^alpha` of the hybrid scheme, indexed by lag
/// l = 2..=n_max (entries 0 and 1 are unused). The evaluation points b_l
/// minimise the mean-square kernel error on each cell.
pub fn riemann_kernel_weights(n_max: usize, dt: f64, h: f64) -> Vec<f64> {
    let a = kernel_alpha(h);
    let mut w = vec![0.0; n_max + 1];
    if a == 0.0 {
        for item in w.iter_mut().skip(2) {
            *item = 1.0;
        }
        return w;
    }
    let a1 = a + 1.0;
    for (l, item) in w.iter_mut().enumerate().skip(2) {
        let lf = l as f64;
        let b_l = ((lf.powf(a1) - (lf - 1.0).powf(a1)) / a1).powf(1.0 / a);
        *item = (b_l * dt).powf(a);
    }
    w
}

/// Coefficients of the exact near-singularity term. The most recent cell's
/// integral `int_{t-dt}^{t} (t-r)^alpha dW_r` is jointly Gaussian with the
/// Brownian increment of the same cell:
/// `term = beta_w * dW + beta_perp * Z` with Z independent standard normal.
pub fn singular_coefs(dt: f64, h: f64) -> (f64, f64) {
    let a = kernel_alpha(h);
    let a1 = a + 1.0;
    let beta_w = dt.powf(a) / a1;
    let var = dt.powf(2.0 * a + 1.0) / (2.0 * a + 1.0);
    let beta_perp = (var - beta_w * beta_w * dt).max(0.0).sqrt();
    (beta_w, beta_perp)
}

/// Per-cell Gaussian loadings of the auxiliary process for maturity `t_m`:
/// theta_k = sum_{j<k} w_j dW_j with w_j^2 dt matching the exact cell variance
/// of sqrt(2H) nu int (t_m - r)^{H-1/2} dW_r. With these loadings the discrete
/// forward variance is an exact martingale.
pub fn theta_cell_weights(grid: &[f64], t_m: f64, h: f64, nu: f64) -> Vec<f64> {
    let n = grid.len() - 1;
    let two_h = 2.0 * h;
    let mut w = vec![0.0; n];
    for j in 0..n {
        let dt = grid[j + 1] - grid[j];
        let cell = (t_m - grid[j]).powf(two_h) - (t_m - grid[j + 1]).powf(two_h);
        w[j] = nu * (cell / dt).max(0.0).sqrt();
    }
    w
}

/// Exact covariance of the Volterra process at two grid nodes,
/// Cov(X_{t_k}, X_{t_l}) = int_0^{t_k} (t_k - r)^a (t_l - r)^a dr for k <= l.
/// Closed form on the diagonal; off the diagonal, per-cell Gauss-Legendre with a
/// power substitution on the cell containing the kernel singularity.
pub fn volterra_node_cov(k: usize, l: usize, dt: f64, h: f64, gl: &(Vec<f64>, Vec<f64>)) -> f64 {
    assert!(k <= l && k >= 1);
    let a = kernel_alpha(h);
    let tk = k as f64 * dt;
    let tl = l as f64 * dt;
    if a == 0.0 {
        return tk; // Brownian case: Cov = min(s, t)
    }
    if k == l {
        return tk.powf(2.0 * a + 1.0) / (2.0 * a + 1.0);
    }
    let (nodes, weights) = gl;
    let mut total = 0.0;
    // Smooth part: cells strictly left of the singular cell.
    for j in 0..k.saturating_sub(1) {
        let lo = j as f64 * dt;
        let hi = lo + dt;
        total += integrate_gl(
            |r| (tk - r).powf(a) * (tl - r).powf(a),
            lo,
            hi,
            nodes,
            weights,
        );
    }
    // Cell [t_k - dt, t_k]: substitute w = t_k - r.
    let delta = tl - tk;
    if a > 0.0 {
        total += integrate_gl(
            |w| w.powf(a) * (delta + w).powf(a),
            0.0,
            dt,
            nodes,
            weights,
        );
    } else {
        // v = w^(a+1) removes the singularity: integrand (delta + v^(1/(1+a)))^a / (1+a)
        let a1 = a + 1.0;
        let v_hi = dt.powf(a1);
        total += integrate_gl(
            |v| (delta + v.powf(1.0 / a1)).powf(a) / a1,
            0.0,
            v_hi,
            nodes,
            weights,
        );
    }
    total
}

/// Cov(X_{t_k}, W increment of cell j) in closed form; zero for cells at or
/// after t_k.
pub fn volterra_increment_cov(k: usize, j: usize, dt: f64, h: f64) -> f64 {
    if j + 1 > k {
        return 0.0;
    }
    let a1 = kernel_alpha(h) + 1.0;
    let tk = k as f64 * dt;
    let lo = j as f64 * dt;
    let hi = lo + dt;
    // (tk - hi) cancels to a signed zero when j + 1 == k
    ((tk - lo).max(0.0).powf(a1) - (tk - hi).max(0.0).powf(a1)) / a1
}

/// Default quadrature rule for the covariance integrals.
pub fn default_gl_rule() -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(24)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_variance_matches_closed_form() {
        let gl = default_gl_rule();
        for &h in &[0.1, 0.3, 0.5, 0.7] {
            let dt = 1.0 / 365.0;
            for k in [1usize, 7, 30] {
                let v = volterra_node_cov(k, k, dt, h, &gl);
                let t = k as f64 * dt;
                let expected = t.powf(2.0 * h) / (2.0 * h);
                assert!(
                    (v - expected).abs() < 1e-12 * expected,
                    "h={h} k={k}: {v} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn brownian_case_reduces_to_min() {
        let gl = default_gl_rule();
        let dt = 0.01;
        let v = volterra_node_cov(3, 9, dt, 0.5, &gl);
        assert!((v - 0.03).abs() < 1e-14);
    }

    #[test]
    fn off_diagonal_cov_matches_fine_riemann_sum() {
        // Brute-force oracle: midpoint Riemann sum on a very fine grid.
        let gl = default_gl_rule();
        let dt = 1.0 / 365.0;
        for &h in &[0.1, 0.25, 0.7] {
            let a = kernel_alpha(h);
            let (k, l) = (5usize, 12usize);
            let (tk, tl) = (k as f64 * dt, l as f64 * dt);
            let m = 4_000_000usize;
            let hstep = tk / m as f64;
            let mut brute = 0.0;
            for i in 0..m {
                let r = (i as f64 + 0.5) * hstep;
                brute += (tk - r).powf(a) * (tl - r).powf(a);
            }
            brute *= hstep;
            let quad = volterra_node_cov(k, l, dt, h, &gl);
            // the midpoint oracle itself converges slowly near the kernel
            // singularity, hence the loose band
            assert!(
                (quad - brute).abs() < 1e-3 * brute.abs(),
                "h={h}: quad={quad} brute={brute}"
            );
        }
    }

    #[test]
    fn increment_cov_matches_quadrature() {
        let dt = 1.0 / 365.0;
        let h = 0.1;
        let a = kernel_alpha(h);
        let k = 6;
        for j in 0..8 {
            let closed = volterra_increment_cov(k, j, dt, h);
            if j >= k {
                assert_eq!(closed, 0.0);
                continue;
            }
            let m = 200_000;
            let lo = j as f64 * dt;
            let tk = k as f64 * dt;
            let hstep = dt / m as f64;
            let mut brute = 0.0;
            for i in 0..m {
                let r = lo + (i as f64 + 0.5) * hstep;
                brute += (tk - r).powf(a);
            }
            brute *= hstep;
            // midpoint error is largest on the cell touching the singularity
            let tol = if j + 1 == k { 2e-3 } else { 1e-7 };
            assert!(
                (closed - brute).abs() < tol * brute.max(1e-12),
                "j={j}: {closed} vs {brute}"
            );
        }
    }

    #[test]
    fn hybrid_weights_have_expected_shape() {
        let dt = 1.0 / 365.0;
        let w = riemann_kernel_weights(12, dt, 0.1);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[1], 0.0);
        // decreasing in lag for rough kernels, and between the cell endpoints values
        for l in 2..12 {
            assert!(w[l] > w[l + 1]);
            let a = kernel_alpha(0.1);
            let lo = ((l as f64) * dt).powf(a); // kernel at the far end (smaller for a<0)
            let hi = ((l as f64 - 1.0) * dt).powf(a);
            assert!(w[l] > lo && w[l] < hi);
        }
        let w_bm = riemann_kernel_weights(6, dt, 0.5);
        assert!(w_bm.iter().skip(2).all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn theta_weights_reproduce_total_variance() {
        // sum w_j^2 dt telescopes to nu^2 (T_m^{2H} - (T_m - t)^{2H})
        let n = 30;
        let dt = 1.0 / 365.0;
        let grid: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let (h, nu, t_m) = (0.1, 1.9, 45.0 / 365.0);
        let w = theta_cell_weights(&grid, t_m, h, nu);
        let total: f64 = w.iter().map(|x| x * x * dt).sum();
        let expected = nu * nu * (t_m.powf(2.0 * h) - (t_m - grid[n]).powf(2.0 * h));
        assert!((total - expected).abs() < 1e-12 * expected);
    }
}
