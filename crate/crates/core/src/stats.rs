//! Small numerical toolbox: moments, quantiles, least squares, special functions,
//! Gauss–Legendre rules and a two-sample Kolmogorov–Smirnov test.
//!
//! Special functions are computed from series / continued fractions rather than
//! tabulated coefficients; unit tests pin them against quadrature and identities.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Linear-interpolated quantile of an unsorted sample, `p` in [0, 1].
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Ordinary least squares fit y = a + b x.
#[derive(Debug, Clone, Copy)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let fit = intercept + slope * x[i];
        ss_res += (y[i] - fit) * (y[i] - fit);
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(OlsFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6;

/// Error function. Maclaurin series for |x| ≤ 3, complementary continued
/// fraction beyond; both pieces converge to f64 precision.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x <= 3.0 {
        // erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 1.0;
        loop {
            term *= -x2 / n;
            let contrib = term / (2.0 * n + 1.0);
            sum += contrib;
            if contrib.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
            n += 1.0;
        }
        FRAC_2_SQRT_PI * sum
    } else {
        1.0 - erfc_large(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 3.0 {
        1.0 - erf(x)
    } else {
        erfc_large(x)
    }
}

/// erfc for x ≥ 3 via the Laplace continued fraction
/// sqrt(pi) e^{x^2} erfc(x) = 1/(x + 1/(2x + 2/(x + 3/(2x + ...)))),
/// evaluated with modified Lentz.
fn erfc_large(x: f64) -> f64 {
    if x > 27.0 {
        return 0.0; // below the smallest positive normal
    }
    let tiny = 1e-300;
    let mut f = x; // b0
    let mut c = f;
    let mut d = 0.0;
    for n in 1..300 {
        let a = n as f64;
        let b = if n % 2 == 1 { 2.0 * x } else { x };
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Gamma function on (0, 3]; enough for kernel exponents H + 1/2.
/// Split as gamma(a) = gamma_lower(a, x) + gamma_upper(a, x) at x = 3: a power
/// series and a continued fraction, neither of which needs tabulated coefficients.
/// The split point keeps the continued fraction inside its convergence region
/// (x > a + 1); larger arguments go through the recurrence.
pub fn gamma_fn(a: f64) -> f64 {
    assert!(a > 0.0 && a <= 3.0, "gamma_fn domain is (0, 3], got {a}");
    if a > 1.5 {
        return (a - 1.0) * gamma_fn(a - 1.0);
    }
    let x = 3.0_f64;
    let prefactor = x.powf(a) * (-x).exp();
    // Lower incomplete gamma(a, x) = x^a e^{-x} sum_{n>=0} x^n / (a (a+1) ... (a+n))
    let mut term = 1.0 / a;
    let mut series = term;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= x / (a + n);
        series += term;
        if term < 1e-18 * series {
            break;
        }
    }
    let lower = prefactor * series;
    // Upper incomplete gamma(a, x) via the Legendre continued fraction.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..300 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let upper = prefactor * h;
    lower + upper
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1], computed by
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_and_derivative(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate f over [a, b] with a fixed-order Gauss–Legendre rule.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov–Smirnov test
// ---------------------------------------------------------------------------

/// Two-sample KS statistic (sup-distance between empirical CDFs).
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        let diff = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        d = d.max(diff);
    }
    d
}

/// Asymptotic two-sided p-value of the two-sample KS statistic, with the
/// Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let sqrt_ne = ne.sqrt();
    let lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    kolmogorov_sf(lambda)
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += term;
        sign = -sign;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_matches_quadrature() {
        // Reference by Simpson integration of the density, step 1e-4.
        let quad_erf = |x: f64| {
            let steps = 40_000usize;
            let h = x / steps as f64;
            let f = |t: f64| (-t * t).exp();
            let mut s = f(0.0) + f(x);
            for i in 1..steps {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            FRAC_2_SQRT_PI * s * h / 3.0
        };
        for &x in &[0.1, 0.5, 1.0, 2.0, 2.9, 3.5, 5.0] {
            let reference = if x <= 3.0 { quad_erf(x) } else { 1.0 - quad_erf_tail(x) };
            assert!(
                (erf(x) - reference).abs() < 1e-12,
                "erf({x}) = {} vs {}",
                erf(x),
                reference
            );
        }
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
    }

    fn quad_erf_tail(x: f64) -> f64 {
        // integral_x^{x+20} of the density; the remainder is below f64 resolution
        let steps = 200_000usize;
        let h = 20.0 / steps as f64;
        let f = |t: f64| (-t * t).exp();
        let mut s = f(x) + f(x + 20.0);
        for i in 1..steps {
            s += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        FRAC_2_SQRT_PI * s * h / 3.0
    }

    #[test]
    fn gamma_identities_hold() {
        assert!((gamma_fn(1.0) - 1.0).abs() < 1e-12);
        assert!((gamma_fn(2.0) - 1.0).abs() < 1e-12);
        assert!((gamma_fn(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // Reflection: gamma(a) gamma(1-a) = pi / sin(pi a)
        for &a in &[0.25, 0.4, 0.6, 0.75, 0.9] {
            let lhs = gamma_fn(a) * gamma_fn(1.0 - a);
            let rhs = std::f64::consts::PI / (std::f64::consts::PI * a).sin();
            assert!((lhs - rhs).abs() < 1e-10 * rhs, "a = {a}");
        }
        // Recurrence: gamma(a+1) = a gamma(a)
        for &a in &[0.3, 0.7, 1.2, 1.9] {
            assert!((gamma_fn(a + 1.0) - a * gamma_fn(a)).abs() < 1e-12 * gamma_fn(a + 1.0));
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (nodes, weights) = gauss_legendre(8);
        // degree-15 polynomial is exact under an 8-point rule
        let val = integrate_gl(|x| x.powi(15) + 3.0 * x.powi(4) + 1.0, 0.0, 2.0, &nodes, &weights);
        let exact = 2.0_f64.powi(16) / 16.0 + 3.0 * 2.0_f64.powi(5) / 5.0 + 2.0;
        assert!((val - exact).abs() < 1e-10 * exact);
        let (n1, w1) = gauss_legendre(1);
        assert!((n1[0]).abs() < 1e-15 && (w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ks_distinguishes_shifted_samples() {
        let mut rng = crate::rng::CounterRng::new(9);
        let a: Vec<f64> = (0..4000).map(|_| rng.next_normal()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.next_normal()).collect();
        let c: Vec<f64> = a.iter().map(|x| x + 0.25).collect();
        let d_same = ks_statistic(&a, &b);
        let d_shift = ks_statistic(&a, &c);
        assert!(ks_pvalue(d_same, a.len(), b.len()) > 0.01);
        assert!(ks_pvalue(d_shift, a.len(), c.len()) < 1e-6);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = vec![4.0, 1.0, 3.0, 2.0];
        assert!((quantile(&xs, 0.0) - 1.0).abs() < 1e-15);
        assert!((quantile(&xs, 1.0) - 4.0).abs() < 1e-15);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.slope_stderr.abs() < 1e-10);
    }
}
