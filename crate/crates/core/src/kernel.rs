//! Homogeneous symmetric coagulation rate kernels.
//!
//! A kernel is admissible when it is symmetric, homogeneous of degree
//! lambda in (-1, 1), bounded below by `c_lower` on the window [b, B]^2
//! and above by `c_upper (x^alpha y^beta + x^beta y^alpha)` with
//! -1 < alpha <= beta < 1 and alpha + beta = lambda. The classic additive
//! (degree 1) and multiplicative (degree 2) kernels fall outside the
//! admissible homogeneity range and are rejected at construction.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// One product term of a kernel that splits as a finite sum
/// `sum_k coeff_k * y^{y_exp_k} z^{z_exp_k}`. The term list as a whole is
/// symmetric even when individual terms are not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableTerm {
    pub coeff: f64,
    pub y_exp: f64,
    pub z_exp: f64,
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Kernel family tag plus whatever the family needs to evaluate.
#[derive(Clone)]
pub enum KernelForm {
    /// K(x, y) = value.
    Constant { value: f64 },
    /// K(x, y) = (x^{1/3} + y^{1/3})(x^{-1/3} + y^{-1/3}).
    Brownian,
    /// K(x, y) = x^alpha y^beta + x^beta y^alpha.
    PowerSum,
    /// Caller-supplied evaluator; validated by sampling only.
    Custom { func: KernelFn, label: String },
}

impl fmt::Debug for KernelForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelForm::Constant { value } => write!(f, "Constant({value})"),
            KernelForm::Brownian => write!(f, "Brownian"),
            KernelForm::PowerSum => write!(f, "PowerSum"),
            KernelForm::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// Serializable description of a kernel, echoed into reports.
#[derive(Debug, Clone, Serialize)]
pub struct KernelDescriptor {
    pub family: String,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub window: (f64, f64),
}

/// A validated kernel with its structural metadata.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    form: KernelForm,
    lambda: f64,
    alpha: f64,
    beta: f64,
    /// Lower bound constant on the window (c_* in the structural bounds).
    c_lower: f64,
    /// Upper bound constant (C_*) against x^alpha y^beta + x^beta y^alpha.
    c_upper: f64,
    window: (f64, f64),
}

impl KernelSpec {
    fn validated(
        form: KernelForm,
        alpha: f64,
        beta: f64,
        c_lower: f64,
        c_upper: f64,
        window: (f64, f64),
    ) -> Result<Self> {
        let lambda = alpha + beta;
        if !(alpha > -1.0 && alpha <= beta && beta < 1.0) {
            return Err(Error::config(format!(
                "growth exponents must satisfy -1 < alpha <= beta < 1, got alpha={alpha}, beta={beta}"
            )));
        }
        if !(lambda > -1.0 && lambda < 1.0) {
            return Err(Error::config(format!(
                "kernel must be homogeneous of degree lambda in (-1, 1), got lambda={lambda}"
            )));
        }
        if !(c_lower > 0.0 && c_upper > 0.0) {
            return Err(Error::config("bound constants must be positive"));
        }
        if !(window.0 > 0.0 && window.0 < window.1) {
            return Err(Error::config(format!(
                "bound window needs 0 < b < B, got ({}, {})",
                window.0, window.1
            )));
        }
        Ok(KernelSpec {
            form,
            lambda,
            alpha,
            beta,
            c_lower,
            c_upper,
            window,
        })
    }

    /// Constant kernel K = value. Saturates the upper bound with
    /// C_* = value/2 since x^0 y^0 + x^0 y^0 = 2.
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::config("constant kernel needs a positive rate"));
        }
        Self::validated(
            KernelForm::Constant { value },
            0.0,
            0.0,
            value,
            value / 2.0,
            (1.0, 2.0),
        )
    }

    /// Brownian coagulation kernel with its standard certificate
    /// c_* = 2, C_* = 3, alpha = -1/3, beta = 1/3, valid on any window.
    pub fn brownian(window: (f64, f64)) -> Result<Self> {
        Self::validated(
            KernelForm::Brownian,
            -1.0 / 3.0,
            1.0 / 3.0,
            2.0,
            3.0,
            window,
        )
    }

    /// K = x^alpha y^beta + x^beta y^alpha. The upper bound holds with
    /// C_* = 1 exactly; the window minimum sits at a corner because each
    /// product term is monotone in both arguments.
    pub fn power_sum(alpha: f64, beta: f64, window: (f64, f64)) -> Result<Self> {
        let (alpha, beta) = if alpha <= beta {
            (alpha, beta)
        } else {
            (beta, alpha)
        };
        let corners = [
            (window.0, window.0),
            (window.0, window.1),
            (window.1, window.0),
            (window.1, window.1),
        ];
        let c_lower = corners
            .iter()
            .map(|&(x, y)| x.powf(alpha) * y.powf(beta) + x.powf(beta) * y.powf(alpha))
            .fold(f64::INFINITY, f64::min);
        Self::validated(KernelForm::PowerSum, alpha, beta, c_lower, 1.0, window)
    }

    /// The additive kernel x + y is homogeneous of degree 1 and therefore
    /// outside the admissible range; always rejected.
    pub fn additive() -> Result<Self> {
        Err(Error::config(
            "additive kernel x + y has homogeneity degree 1, outside (-1, 1)",
        ))
    }

    /// The multiplicative kernel x y (degree 2, gelling) is likewise
    /// rejected.
    pub fn multiplicative() -> Result<Self> {
        Err(Error::config(
            "multiplicative kernel x*y has homogeneity degree 2, outside (-1, 1)",
        ))
    }

    /// Custom kernel: evaluator plus declared metadata. Validation of the
    /// declared exponents and constants is sampling-based; see
    /// [`check_homogeneity`](Self::check_homogeneity) and
    /// [`check_bounds`](Self::check_bounds).
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        label: impl Into<String>,
        func: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        alpha: f64,
        beta: f64,
        c_lower: f64,
        c_upper: f64,
        window: (f64, f64),
    ) -> Result<Self> {
        Self::validated(
            KernelForm::Custom {
                func: Arc::new(func),
                label: label.into(),
            },
            alpha,
            beta,
            c_lower,
            c_upper,
            window,
        )
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn descriptor(&self) -> KernelDescriptor {
        let family = match &self.form {
            KernelForm::Constant { .. } => "constant",
            KernelForm::Brownian => "brownian",
            KernelForm::PowerSum => "power_sum",
            KernelForm::Custom { .. } => "custom",
        };
        KernelDescriptor {
            family: family.to_string(),
            lambda: self.lambda,
            alpha: self.alpha,
            beta: self.beta,
            c_lower: self.c_lower,
            c_upper: self.c_upper,
            window: self.window,
        }
    }

    /// K(x, y) for positive sizes.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::domain(format!(
                "kernel arguments must be positive, got ({x}, {y})"
            )));
        }
        Ok(self.rate(x, y))
    }

    /// Unchecked evaluation for inner loops; arguments must be positive.
    #[inline]
    pub fn rate(&self, x: f64, y: f64) -> f64 {
        debug_assert!(x > 0.0 && y > 0.0);
        match &self.form {
            KernelForm::Constant { value } => *value,
            KernelForm::Brownian => {
                (x.cbrt() + y.cbrt()) * (1.0 / x.cbrt() + 1.0 / y.cbrt())
            }
            KernelForm::PowerSum => {
                x.powf(self.alpha) * y.powf(self.beta) + x.powf(self.beta) * y.powf(self.alpha)
            }
            KernelForm::Custom { func, .. } => func(x, y),
        }
    }

    /// Finite power-sum decomposition when the family admits one; custom
    /// kernels are evaluated through the generic (slower) path.
    pub fn separable_terms(&self) -> Option<Vec<SeparableTerm>> {
        match &self.form {
            KernelForm::Constant { value } => Some(vec![SeparableTerm {
                coeff: *value,
                y_exp: 0.0,
                z_exp: 0.0,
            }]),
            KernelForm::Brownian => Some(vec![
                SeparableTerm {
                    coeff: 2.0,
                    y_exp: 0.0,
                    z_exp: 0.0,
                },
                SeparableTerm {
                    coeff: 1.0,
                    y_exp: 1.0 / 3.0,
                    z_exp: -1.0 / 3.0,
                },
                SeparableTerm {
                    coeff: 1.0,
                    y_exp: -1.0 / 3.0,
                    z_exp: 1.0 / 3.0,
                },
            ]),
            KernelForm::PowerSum => {
                if self.alpha == self.beta {
                    Some(vec![SeparableTerm {
                        coeff: 2.0,
                        y_exp: self.alpha,
                        z_exp: self.alpha,
                    }])
                } else {
                    Some(vec![
                        SeparableTerm {
                            coeff: 1.0,
                            y_exp: self.alpha,
                            z_exp: self.beta,
                        },
                        SeparableTerm {
                            coeff: 1.0,
                            y_exp: self.beta,
                            z_exp: self.alpha,
                        },
                    ])
                }
            }
            KernelForm::Custom { .. } => None,
        }
    }

    /// Max relative deviation of K(rx, ry) / (r^lambda K(x, y)) from 1
    /// over the supplied sample pairs and scale factors.
    pub fn check_homogeneity(&self, sample_pairs: &[(f64, f64)], scale_factors: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for &(x, y) in sample_pairs {
            let base = self.rate(x, y);
            if base == 0.0 {
                continue;
            }
            for &r in scale_factors {
                let scaled = self.rate(r * x, r * y);
                let dev = (scaled / (r.powf(self.lambda) * base) - 1.0).abs();
                worst = worst.max(dev);
            }
        }
        worst
    }

    /// Certify the declared bound constants on a sample set:
    /// the minimum of K over the tensor square of the in-window samples,
    /// and the maximum of K(x,y) / (x^alpha y^beta + x^beta y^alpha) over
    /// all sample pairs. The first should come out >= c_lower and the
    /// second <= c_upper; the caller supplies a dense enough ladder.
    pub fn check_bounds(&self, samples: &[f64]) -> (f64, f64) {
        let (b, big_b) = self.window;
        let mut in_window: Vec<f64> = samples
            .iter()
            .copied()
            .filter(|&x| x >= b && x <= big_b)
            .collect();
        in_window.push(b);
        in_window.push(big_b);
        let mut window_min = f64::INFINITY;
        for &x in &in_window {
            for &y in &in_window {
                window_min = window_min.min(self.rate(x, y));
            }
        }
        let mut ratio_max = 0.0f64;
        for &x in samples {
            for &y in samples {
                let envelope =
                    x.powf(self.alpha) * y.powf(self.beta) + x.powf(self.beta) * y.powf(self.alpha);
                ratio_max = ratio_max.max(self.rate(x, y) / envelope);
            }
        }
        (window_min, ratio_max)
    }
}

/// Log-spaced positive samples, handy for the sampling-based checks.
pub fn log_samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (step * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_matches_hand_values() {
        let k = KernelSpec::brownian((1.0, 2.0)).unwrap();
        // (1+1)(1+1) = 4
        assert!((k.eval(1.0, 1.0).unwrap() - 4.0).abs() < 1e-14);
        // (2+1)(1/2+1) = 4.5
        assert!((k.eval(8.0, 1.0).unwrap() - 4.5).abs() < 1e-14);
        assert_eq!(k.lambda(), 0.0);
    }

    #[test]
    fn constant_kernel_ignores_arguments() {
        let k = KernelSpec::constant(2.0).unwrap();
        assert_eq!(k.eval(17.3, 0.2).unwrap(), 2.0);
        assert_eq!(k.c_upper(), 1.0);
    }

    #[test]
    fn nonpositive_arguments_are_domain_errors() {
        let k = KernelSpec::constant(2.0).unwrap();
        assert!(k.eval(0.0, 1.0).is_err());
        assert!(k.eval(1.0, -2.0).is_err());
    }

    #[test]
    fn out_of_range_homogeneity_is_rejected() {
        assert!(KernelSpec::additive().is_err());
        assert!(KernelSpec::multiplicative().is_err());
        // power sum with alpha + beta = 1 is equally inadmissible
        assert!(KernelSpec::power_sum(0.5, 0.5, (1.0, 2.0)).is_err());
    }

    #[test]
    fn homogeneity_deviation_vanishes_for_exact_families() {
        let pairs: Vec<(f64, f64)> = log_samples(1e-3, 1e3, 7)
            .iter()
            .zip(log_samples(2e-3, 2e3, 7).iter())
            .map(|(&a, &b)| (a, b))
            .collect();
        let scales = [1e-3, 1.0, 1e3];
        for k in [
            KernelSpec::brownian((1.0, 2.0)).unwrap(),
            KernelSpec::constant(2.0).unwrap(),
            KernelSpec::power_sum(-0.2, 0.5, (1.0, 2.0)).unwrap(),
        ] {
            assert!(k.check_homogeneity(&pairs, &scales) < 1e-12);
        }
    }

    #[test]
    fn symmetry_holds_on_samples() {
        let samples = log_samples(1e-3, 1e3, 13);
        for k in [
            KernelSpec::brownian((1.0, 2.0)).unwrap(),
            KernelSpec::power_sum(-0.2, 0.5, (1.0, 2.0)).unwrap(),
        ] {
            for &x in &samples {
                for &y in &samples {
                    assert_eq!(k.rate(x, y), k.rate(y, x));
                }
            }
        }
    }

    #[test]
    fn brownian_bounds_certificate() {
        let k = KernelSpec::brownian((1.0, 2.0)).unwrap();
        let samples = log_samples(1e-4, 1e4, 41);
        let (window_min, ratio_max) = k.check_bounds(&samples);
        assert!(window_min >= 2.0);
        assert!(ratio_max <= 3.0);
    }

    #[test]
    fn power_sum_saturates_its_upper_bound() {
        let k = KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap();
        let samples = log_samples(1e-2, 1e2, 21);
        let (_, ratio_max) = k.check_bounds(&samples);
        assert!((ratio_max - 1.0).abs() < 1e-12);
        // constant kernel: ratio = value / 2 against the alpha=beta=0 envelope
        let kc = KernelSpec::constant(2.0).unwrap();
        let (_, r) = kc.check_bounds(&samples);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_terms_reproduce_eval() {
        let samples = log_samples(1e-3, 1e3, 9);
        for k in [
            KernelSpec::brownian((1.0, 2.0)).unwrap(),
            KernelSpec::constant(2.0).unwrap(),
            KernelSpec::power_sum(0.3, 0.3, (1.0, 2.0)).unwrap(),
            KernelSpec::power_sum(-0.2, 0.5, (1.0, 2.0)).unwrap(),
        ] {
            let terms = k.separable_terms().unwrap();
            for &x in &samples {
                for &y in &samples {
                    let sum: f64 = terms
                        .iter()
                        .map(|t| t.coeff * x.powf(t.y_exp) * y.powf(t.z_exp))
                        .sum();
                    assert!(
                        (sum / k.rate(x, y) - 1.0).abs() < 1e-12,
                        "separable mismatch at ({x}, {y})"
                    );
                }
            }
        }
    }
}
