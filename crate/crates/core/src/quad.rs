//! Quadrature toolbox: Gauss-Legendre rules, log-panel composition, and
//! closed forms for the piecewise power-law integrands that the profile
//! representation produces.
//!
//! Everything here is deterministic: fixed node orders, fixed panel
//! layouts, fixed summation order. Parallel callers rely on that.

use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Newton iteration on the Legendre recurrence; standard construction.
    fn build(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for k in 0..m {
            // Tricomi-style initial guess.
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Evaluate P_n(x) and P_n'(x) by recurrence.
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pn_prev = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pn_prev) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }
}

/// Cached rules for the fixed orders used across the crate.
pub fn gauss_rule(order: usize) -> &'static GaussRule {
    static CACHE: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (1..=32).map(GaussRule::build).collect());
    assert!((1..=32).contains(&order), "gauss rule order out of range");
    &cache[order - 1]
}

/// ∫_a^b f(x) dx by a single Gauss-Legendre panel.
pub fn gl_panel<F: FnMut(f64) -> f64>(a: f64, b: f64, order: usize, mut f: F) -> f64 {
    let rule = gauss_rule(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * t);
    }
    acc * half
}

/// ∫_a^b f(x) dx with the panel mapped to the log coordinate, i.e.
/// ∫ f(e^t) e^t dt over [ln a, ln b]. Exact endpoint power behaviour is
/// turned into a smooth exponential, so this is the default for panels
/// on the logarithmic grid. Requires 0 < a < b.
pub fn gl_panel_log<F: FnMut(f64) -> f64>(a: f64, b: f64, order: usize, mut f: F) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    let (la, lb) = (a.ln(), b.ln());
    let rule = gauss_rule(order);
    let mid = 0.5 * (la + lb);
    let half = 0.5 * (lb - la);
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = (mid + half * t).exp();
        acc += w * f(x) * x;
    }
    acc * half
}

/// Composite log-panel rule over [a, b] with roughly `per_decade` panels
/// per decade (at least one panel).
pub fn gl_log_composite<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    per_decade: usize,
    order: usize,
    mut f: F,
) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    let decades = (b / a).log10();
    let n_panels = ((decades * per_decade as f64).ceil() as usize).max(1);
    let step = (b / a).powf(1.0 / n_panels as f64);
    let mut acc = 0.0;
    let mut lo = a;
    for i in 0..n_panels {
        let hi = if i + 1 == n_panels { b } else { lo * step };
        acc += gl_panel_log(lo, hi, order, &mut f);
        lo = hi;
    }
    acc
}

/// (e^u - 1)/u, stable through u = 0.
#[inline]
pub fn expm1_over(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        1.0 + 0.5 * u
    } else {
        u.exp_m1() / u
    }
}

/// ∫_a^b y^chi f(y) dy where f is the log-log linear interpolant through
/// (a, fa) and (b, fb), i.e. a pure power law on the panel. Closed form,
/// anchored at whichever endpoint keeps the exponential bounded, so it
/// stays finite even for the absurd slopes that near-zero profile values
/// produce.
pub fn powerlaw_panel_moment(a: f64, b: f64, fa: f64, fb: f64, chi: f64) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    if fa <= 0.0 || fb <= 0.0 {
        // Degenerate data: fall back to linear-in-x trapezoid of y^chi f.
        return 0.5 * (b - a) * (a.powf(chi) * fa.max(0.0) + b.powf(chi) * fb.max(0.0));
    }
    let span = (b / a).ln();
    let slope = (fb / fa).ln() / span;
    let u = (chi + slope + 1.0) * span;
    if u <= 0.0 {
        fa * a.powf(chi + 1.0) * span * expm1_over(u)
    } else {
        fb * b.powf(chi + 1.0) * span * expm1_over(-u)
    }
}

/// ∫_0^w (1 - e^{-u}) u^{-s} du for s < 2. Series for the inner unit
/// interval, log panels beyond it.
pub fn desingularized_power_integral(w: f64, s: f64) -> f64 {
    debug_assert!(s < 2.0, "integral diverges at zero for s >= 2");
    if w <= 0.0 {
        return 0.0;
    }
    let w0 = w.min(1.0);
    // sum_{m>=1} (-1)^{m+1} w0^{m+1-s} / (m! (m+1-s))
    let mut acc = 0.0;
    let mut term_fact = 1.0; // m!
    let mut w_pow = w0.powf(1.0 - s); // w0^{m+1-s} built incrementally
    let mut sign = 1.0;
    for m in 1..=60 {
        term_fact *= m as f64;
        w_pow *= w0;
        let term = sign * w_pow / (term_fact * (m as f64 + 1.0 - s));
        acc += term;
        if term.abs() < 1e-17 * acc.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    if w > 1.0 {
        acc += gl_log_composite(1.0, w, 3, 10, |u| -(-u).exp_m1() * u.powf(-s));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        // order-n rule is exact through degree 2n-1
        let val = gl_panel(0.0, 1.0, 4, |x| x.powi(7));
        assert!((val - 0.125).abs() < 1e-14);
        let val = gl_panel(-1.0, 2.0, 8, |x| x.powi(15) - 3.0 * x.powi(2));
        let exact = (2.0f64.powi(16) - 1.0) / 16.0 - (8.0 + 1.0);
        assert!((val - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn log_panels_handle_power_laws() {
        // ∫_1e-4^1e4 x^{-0.5} dx = 2 (1e2 - 1e-2)
        let val = gl_log_composite(1e-4, 1e4, 4, 8, |x| x.powf(-0.5));
        let exact = 2.0 * (1e2 - 1e-2);
        assert!((val / exact - 1.0).abs() < 1e-13);
    }

    #[test]
    fn panel_moment_matches_analytic_power_law() {
        // f = x^{-1.5}; ∫_a^b x^0.4 x^{-1.5} dx
        let (a, b) = (0.3f64, 7.0f64);
        let (fa, fb) = (a.powf(-1.5), b.powf(-1.5));
        let got = powerlaw_panel_moment(a, b, fa, fb, 0.4);
        let exact = (b.powf(-0.1) - a.powf(-0.1)) / -0.1;
        assert!((got / exact - 1.0).abs() < 1e-14);
    }

    #[test]
    fn panel_moment_survives_extreme_slopes() {
        // Values spanning ~300 orders of magnitude must not overflow.
        let got = powerlaw_panel_moment(1.0, 1.1, 1e-280, 1.0, 0.0);
        assert!(got.is_finite() && got > 0.0);
        let got = powerlaw_panel_moment(1.0, 1.1, 1.0, 1e-280, 0.0);
        assert!(got.is_finite() && got > 0.0);
    }

    #[test]
    fn panel_moment_near_unit_exponent_is_stable() {
        // chi + slope + 1 ~ 0 triggers the expm1 guard: f = x^{-1}, chi = 0.
        let (a, b) = (2.0, 2.0000001);
        let got = powerlaw_panel_moment(a, b, 0.5, 1.0 / b, 0.0);
        let exact = (b / a).ln();
        assert!((got / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn desingularized_integral_matches_gamma_limit() {
        // ∫_0^∞ (1-e^{-u}) u^{-1-rho} du = Γ(1-rho)/rho; approximate with w large
        let rho: f64 = 0.5;
        let got = desingularized_power_integral(1e8, 1.0 + rho);
        let exact = statrs::function::gamma::gamma(1.0 - rho) / rho;
        assert!((got / exact - 1.0).abs() < 1e-4);
        // small-w asymptotics: ∫_0^w (1-e^{-u}) u^{-s} du ~ w^{2-s}/(2-s)
        let got = desingularized_power_integral(1e-9, 0.5);
        let exact = (1e-9f64).powf(1.5) / 1.5;
        assert!((got / exact - 1.0).abs() < 1e-8);
    }
}
