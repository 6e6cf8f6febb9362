//! Asymptotics extraction and the consolidated certificate report.
//!
//! The headline check is the tail law f(x) ~ (1-rho) x^{-1-rho}: a
//! log-log fit of the exponent over a trusted window, a direct band
//! check of x^{1+rho} f(x) against 1-rho, and the decomposition
//! x^{1+rho} f / (1-rho) = x^{rho-1} M(x) + x^{rho-1} I[f](x)/(1-rho)
//! whose two terms are certified separately (mass term -> 1, gain term
//! -> 0). Upper-bound quantities (pointwise constant C, gain decay
//! delta) are fitted to running-maximum envelopes since the underlying
//! statements are one-sided.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gain::GainContext;
use crate::kernel::KernelSpec;
use crate::laplace;
use crate::moments::{self, InequalityCheck};
use crate::profile::{Profile, ProfileProblem};

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    /// Amplitude of A x^{exponent} read at the window midpoint.
    pub amplitude: f64,
    pub window: (f64, f64),
    /// RMS deviation of the fit in log space.
    pub residual: f64,
    pub nodes_used: usize,
}

fn window_nodes(p: &Profile, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = window;
    let grid = p.grid();
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::domain("fit window needs 0 < lo < hi"));
    }
    // A window leaking into the closure regions would trivially fit the
    // closure power law; reject it.
    if lo < grid.first() * (1.0 + 1e-12) || hi > grid.last() * (1.0 - 1e-12) {
        return Err(Error::domain(format!(
            "fit window [{lo}, {hi}] must lie strictly inside the tabulated range ({}, {})",
            grid.first(),
            grid.last()
        )));
    }
    let pts: Vec<(f64, f64)> = grid
        .nodes()
        .iter()
        .zip(p.values())
        .filter(|&(&x, &f)| x >= lo && x <= hi && f > 0.0)
        .map(|(&x, &f)| (x, f))
        .collect();
    if pts.len() < 4 {
        return Err(Error::domain(
            "fit window contains fewer than four positive nodes",
        ));
    }
    Ok(pts)
}

fn least_squares_loglog(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, f) in pts {
        let (lx, lf) = (x.ln(), f.ln());
        sx += lx;
        sy += lf;
        sxx += lx * lx;
        sxy += lx * lf;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mut rss = 0.0;
    for &(x, f) in pts {
        let r = f.ln() - (intercept + slope * x.ln());
        rss += r * r;
    }
    (slope, intercept, (rss / n).sqrt())
}

/// Least-squares power-law fit over a tail window. For a profile obeying
/// the tail law the exponent comes out at -(1+rho) and the amplitude at
/// 1-rho.
pub fn fit_tail(p: &Profile, window: (f64, f64)) -> Result<FitResult> {
    let pts = window_nodes(p, window)?;
    let (slope, intercept, residual) = least_squares_loglog(&pts);
    let mid = 0.5 * (window.0.ln() + window.1.ln());
    Ok(FitResult {
        exponent: slope,
        amplitude: (intercept + slope * mid).exp() * (-slope * mid).exp(),
        window,
        residual,
        nodes_used: pts.len(),
    })
}

/// Same fit over a near-zero window; target -(1+lambda) for kernels with
/// both growth exponents positive, informational otherwise.
pub fn fit_zero(p: &Profile, window: (f64, f64)) -> Result<FitResult> {
    fit_tail(p, window)
}

/// Extremes of x^{decay} f(x) over the window nodes; the direct band
/// check behind the tail-law tolerance.
pub fn amplitude_band(p: &Profile, decay: f64, window: (f64, f64)) -> Result<(f64, f64)> {
    let pts = window_nodes(p, window)?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(x, f) in &pts {
        let a = x.powf(decay) * f;
        lo = lo.min(a);
        hi = hi.max(a);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct PointwiseDecay {
    /// sup over probes of sup_{x in [R, 2R]} R^{1+rho} f(x).
    pub c_estimate: f64,
    /// Smallest probe from which C(R) stays within 10% of its final
    /// level; None when the constant never stabilizes.
    pub r_star: Option<f64>,
    pub per_probe: Vec<(f64, f64)>,
}

/// Pointwise decay constant C(R) = R^{1+rho} sup_{[R,2R]} f over a probe
/// ladder.
pub fn check_pointwise_decay(rho: f64, p: &Profile, probes: &[f64]) -> Result<PointwiseDecay> {
    if probes.len() < 4 {
        return Err(Error::domain("pointwise decay needs at least four probes"));
    }
    let nodes = p.grid().nodes();
    let mut per_probe = Vec::with_capacity(probes.len());
    for &r in probes {
        if !(r > 0.0) {
            return Err(Error::domain("probes must be positive"));
        }
        let mut sup = p.density(r).max(p.density(2.0 * r));
        let i0 = p.grid().panel_of(r);
        for (&x, &f) in nodes[i0..].iter().zip(&p.values()[i0..]) {
            if x > 2.0 * r {
                break;
            }
            if x >= r {
                sup = sup.max(f);
            }
        }
        per_probe.push((r, r.powf(1.0 + rho) * sup));
    }
    let c_final = per_probe.last().unwrap().1;
    let c_estimate = per_probe.iter().map(|&(_, c)| c).fold(0.0, f64::max);
    let mut r_star = None;
    for i in 0..per_probe.len() {
        if per_probe[i..]
            .iter()
            .all(|&(_, c)| (c / c_final - 1.0).abs() <= 0.10)
        {
            if per_probe.len() - i >= 3 {
                r_star = Some(per_probe[i].0);
            }
            break;
        }
    }
    Ok(PointwiseDecay {
        c_estimate,
        r_star,
        per_probe,
    })
}

/// Envelope power fit: least squares on the running maximum from the
/// right, the right notion for one-sided (upper-bound) statements.
pub fn envelope_power_fit(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if samples.len() < 4 {
        return Err(Error::domain("envelope fit needs at least four samples"));
    }
    let mut env = samples.to_vec();
    for i in (0..env.len() - 1).rev() {
        env[i].1 = env[i].1.max(env[i + 1].1);
    }
    if env.iter().any(|&(_, h)| !(h > 0.0)) {
        return Err(Error::domain("envelope fit needs positive samples"));
    }
    let (slope, intercept, residual) = least_squares_loglog(&env);
    Ok((slope, intercept.exp(), residual))
}

#[derive(Debug, Clone, Serialize)]
pub struct GainDecayFit {
    /// Fitted delta in I[f](x) ~ c x^{1 - rho - delta}.
    pub delta: f64,
    pub amplitude: f64,
    pub fit_residual: f64,
    /// The proof-level regime value for the kernel's exponent signs.
    pub regime_reference: f64,
    pub probes: Vec<f64>,
}

/// Regime value of delta from the kernel's exponent signs: -beta when
/// both are negative, rho - lambda when both positive, rho - beta in the
/// mixed case.
pub fn delta_regime_reference(kernel: &KernelSpec, rho: f64) -> f64 {
    let (alpha, beta) = (kernel.alpha(), kernel.beta());
    if beta < 0.0 {
        -beta
    } else if alpha > 0.0 {
        rho - kernel.lambda()
    } else {
        rho - beta
    }
}

/// Fit the gain-term decay exponent on a probe ladder.
pub fn check_gain_decay(
    prob: &ProfileProblem,
    p: &Profile,
    probes: &[f64],
) -> Result<GainDecayFit> {
    let ctx = GainContext::new(prob, p)?;
    let rho = prob.rho;
    let samples: Vec<(f64, f64)> = probes
        .iter()
        .map(|&x| Ok((x, ctx.eval(x)? / x.powf(1.0 - rho))))
        .collect::<Result<Vec<_>>>()?;
    let (slope, amplitude, fit_residual) = envelope_power_fit(&samples)?;
    Ok(GainDecayFit {
        delta: -slope,
        amplitude,
        fit_residual,
        regime_reference: delta_regime_reference(&prob.kernel, rho),
        probes: probes.to_vec(),
    })
}

/// One row of the asymptotics decomposition
/// x^{1+rho} f/(1-rho) = x^{rho-1} M(x) + x^{rho-1} I[f](x)/(1-rho).
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionRow {
    pub x: f64,
    pub scaled_density: f64,
    pub mass_term: f64,
    pub gain_term: f64,
}

pub fn asymptotics_decomposition(
    prob: &ProfileProblem,
    p: &Profile,
    probes: &[f64],
) -> Result<Vec<DecompositionRow>> {
    let ctx = GainContext::new(prob, p)?;
    let rho = prob.rho;
    probes
        .iter()
        .map(|&x| {
            let mass = p.weighted_moment(1.0, 0.0, x)?;
            Ok(DecompositionRow {
                x,
                scaled_density: x.powf(1.0 + rho) * p.density(x) / (1.0 - rho),
                mass_term: x.powf(rho - 1.0) * mass,
                gain_term: x.powf(rho - 1.0) * ctx.eval(x)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub tail_window: (f64, f64),
    pub zero_window: (f64, f64),
    pub decay_probes: Vec<f64>,
    pub laplace_q: Vec<f64>,
    /// |exponent + 1 + rho| tolerance for the tail fit.
    pub tail_exponent_tol: f64,
    /// Relative band tolerance of x^{1+rho} f around 1 - rho.
    pub amplitude_tol: f64,
    /// RMS log-residual ceiling for a trusted fit.
    pub fit_residual_tol: f64,
    /// Strict positivity floor for the fitted delta.
    pub delta_floor: f64,
    /// Relative tolerance against the regime value of delta, where the
    /// regime value is asserted (constant kernel).
    pub delta_regime_tol: f64,
    pub laplace_tol: f64,
}

impl VerifyConfig {
    /// Sensible defaults for a converged profile on its own grid: tail
    /// window in the upper trusted decades, zero window near x_min.
    pub fn for_profile(p: &Profile, _rho: f64) -> Self {
        let hi = p.grid().last();
        let lo = p.grid().first();
        VerifyConfig {
            tail_window: (hi / 10f64.powf(1.5), hi / 10f64.powf(0.5)),
            zero_window: (lo * 10f64.powf(0.5), lo * 10f64.powf(1.5)),
            decay_probes: crate::kernel::log_samples(hi.sqrt() / 10.0, hi / 10.0, 13),
            laplace_q: laplace::default_q_ladder(p, 25),
            tail_exponent_tol: 0.02,
            amplitude_tol: 0.02,
            fit_residual_tol: 0.02,
            delta_floor: 0.02,
            delta_regime_tol: 0.25,
            laplace_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub tail_fit: FitResult,
    pub tail_band: (f64, f64),
    pub tail_pass: bool,
    pub zero_fit: FitResult,
    pub pointwise: PointwiseDecay,
    pub pointwise_pass: bool,
    pub gain_decay: GainDecayFit,
    pub gain_decay_pass: bool,
    pub inequality_suite: Vec<InequalityCheck>,
    pub suite_pass: bool,
    pub laplace_residual: f64,
    pub laplace_pass: bool,
    pub overall_pass: bool,
    pub config: VerifyConfig,
}

/// Run the whole certificate suite against a profile.
pub fn assemble_report(
    prob: &ProfileProblem,
    p: &Profile,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    let rho = prob.rho;
    let lambda = prob.lambda();

    let tail_fit = fit_tail(p, cfg.tail_window)?;
    let tail_band = amplitude_band(p, 1.0 + rho, cfg.tail_window)?;
    let exponent_ok = (tail_fit.exponent + 1.0 + rho).abs() <= cfg.tail_exponent_tol;
    let band_ok = tail_band.0 >= (1.0 - rho) * (1.0 - cfg.amplitude_tol)
        && tail_band.1 <= (1.0 - rho) * (1.0 + cfg.amplitude_tol);
    let tail_pass = exponent_ok && band_ok && tail_fit.residual <= cfg.fit_residual_tol;

    let zero_fit = fit_zero(p, cfg.zero_window)?;

    let pointwise = check_pointwise_decay(rho, p, &cfg.decay_probes)?;
    let pointwise_pass = pointwise.r_star.is_some() && pointwise.c_estimate.is_finite();

    let gain_decay = check_gain_decay(prob, p, &cfg.decay_probes)?;
    let gain_decay_pass =
        gain_decay.delta >= cfg.delta_floor && gain_decay.fit_residual <= 10.0 * cfg.fit_residual_tol;

    let probes = moments::default_probes(p);
    let mut suite = vec![
        moments::check_zero_averaged(p, lambda, &probes)?,
        moments::check_tail_averaged(p, rho, &probes)?,
    ];
    suite.extend(moments::check_moment_estimates(p, rho, lambda, &probes)?);
    let suite_pass = suite.iter().all(|c| c.pass);

    let laplace_residual = laplace::check_q_identity(prob, p, &cfg.laplace_q)?;
    let laplace_pass = laplace_residual <= cfg.laplace_tol;

    let overall_pass = tail_pass && suite_pass && laplace_pass && gain_decay_pass && pointwise_pass;
    Ok(VerifyReport {
        tail_fit,
        tail_band,
        tail_pass,
        zero_fit,
        pointwise,
        pointwise_pass,
        gain_decay,
        gain_decay_pass,
        inequality_suite: suite,
        suite_pass,
        laplace_residual,
        laplace_pass,
        overall_pass,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn grid() -> Grid {
        Grid::log_uniform(1e-4, 1e4, 241).unwrap()
    }

    #[test]
    fn exact_power_law_fits_with_zero_residual() {
        let rho = 0.5;
        let p = Profile::power_law(grid(), 1.0 - rho, 1.0 + rho).unwrap();
        let fit = fit_tail(&p, (10.0, 1000.0)).unwrap();
        assert!((fit.exponent + 1.5).abs() < 1e-12);
        assert!((fit.amplitude - 0.5).abs() < 1e-12);
        assert!(fit.residual < 1e-13);
        let (lo, hi) = amplitude_band(&p, 1.5, (10.0, 1000.0)).unwrap();
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_inside_closure_region_is_rejected() {
        let p = Profile::power_law(grid(), 0.5, 1.5).unwrap();
        assert!(fit_tail(&p, (1e3, 1e5)).is_err());
        assert!(fit_tail(&p, (1e-6, 1e-3)).is_err());
    }

    #[test]
    fn pointwise_decay_constant_for_power_law() {
        let rho = 0.5;
        let p = Profile::power_law(grid(), 1.0 - rho, 1.0 + rho).unwrap();
        let probes = crate::kernel::log_samples(0.1, 100.0, 9);
        let d = check_pointwise_decay(rho, &p, &probes).unwrap();
        // sup over [R, 2R] of f sits at the left endpoint: C = (1-rho)
        assert!((d.c_estimate - 0.5).abs() < 1e-10);
        assert_eq!(d.r_star, Some(probes[0]));
    }

    #[test]
    fn bump_at_large_sizes_spoils_stabilization() {
        let rho = 0.5;
        let bump = |x: f64| {
            let b = ((x.ln() - 6.0) / 0.2).powi(2);
            1.0 + 40.0 * (-b).exp()
        };
        let p = Profile::tabulate(grid(), |x| 0.5 * x.powf(-1.5) * bump(x), 1.5, 1.5).unwrap();
        let probes = crate::kernel::log_samples(0.1, 1000.0, 11);
        let d = check_pointwise_decay(rho, &p, &probes).unwrap();
        assert!(d.r_star.is_none(), "bump must defeat stabilization: {d:?}");
    }

    #[test]
    fn envelope_fit_recovers_decay_of_clean_power_data() {
        let xs = crate::kernel::log_samples(1.0, 1e4, 12);
        let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0 * x.powf(-0.4))).collect();
        let (slope, amp, res) = envelope_power_fit(&samples).unwrap();
        assert!((slope + 0.4).abs() < 1e-12);
        assert!((amp - 3.0).abs() < 1e-10);
        assert!(res < 1e-12);
    }

    #[test]
    fn regime_reference_covers_all_sign_cases() {
        let neg = KernelSpec::power_sum(-0.5, -0.2, (1.0, 2.0)).unwrap();
        assert!((delta_regime_reference(&neg, 0.3) - 0.2).abs() < 1e-15);
        let pos = KernelSpec::power_sum(0.2, 0.3, (1.0, 2.0)).unwrap();
        assert!((delta_regime_reference(&pos, 0.8) - 0.3).abs() < 1e-15);
        let mixed = KernelSpec::brownian((1.0, 2.0)).unwrap();
        assert!((delta_regime_reference(&mixed, 0.6) - (0.6 - 1.0 / 3.0)).abs() < 1e-15);
        let constant = KernelSpec::constant(2.0).unwrap();
        assert!((delta_regime_reference(&constant, 0.5) - 0.5).abs() < 1e-15);
    }
}
