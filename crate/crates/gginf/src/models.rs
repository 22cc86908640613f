//! Joint law of the (interarrival, service) pair.
//!
//! Interarrival families have closed-form mean, variance and quantile.
//! Service-time families are given through their tail `1 - F`: a shifted
//! Pareto tail `(1 + t)^{-beta}` with index `beta` in (0, 1), and a
//! logarithmic tail `1 / ln(e + t)` realizing the index-zero case with a
//! slowly varying factor that decays to zero. Couplings between the two
//! marginals are built from shared uniforms, so marginals stay exact under
//! every dependence structure.

use std::collections::HashMap;
use std::sync::Mutex;

use once_cell::sync::Lazy;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Interarrival distribution family. All families are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum InterarrivalSpec {
    Exponential { rate: f64 },
    Pareto { shape: f64, scale: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    Deterministic { value: f64 },
}

impl InterarrivalSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InterarrivalSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            InterarrivalSpec::Pareto { shape, scale } => {
                shape > 1.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()
            }
            InterarrivalSpec::LogNormal { meanlog, sdlog } => {
                meanlog.is_finite() && sdlog > 0.0 && sdlog.is_finite()
            }
            InterarrivalSpec::Deterministic { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "interarrival spec out of range: {self:?}"
            )))
        }
    }

    /// Closed-form mean.
    pub fn mean(&self) -> f64 {
        match *self {
            InterarrivalSpec::Exponential { rate } => 1.0 / rate,
            InterarrivalSpec::Pareto { shape, scale } => shape * scale / (shape - 1.0),
            InterarrivalSpec::LogNormal { meanlog, sdlog } => {
                (meanlog + 0.5 * sdlog * sdlog).exp()
            }
            InterarrivalSpec::Deterministic { value } => value,
        }
    }

    /// Closed-form variance; infinite for Pareto with shape <= 2.
    pub fn variance(&self) -> f64 {
        match *self {
            InterarrivalSpec::Exponential { rate } => 1.0 / (rate * rate),
            InterarrivalSpec::Pareto { shape, scale } => {
                if shape <= 2.0 {
                    f64::INFINITY
                } else {
                    scale * scale * shape / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0))
                }
            }
            InterarrivalSpec::LogNormal { meanlog, sdlog } => {
                let s2 = sdlog * sdlog;
                (s2.exp() - 1.0) * (2.0 * meanlog + s2).exp()
            }
            InterarrivalSpec::Deterministic { .. } => 0.0,
        }
    }

    /// Supremum of the set of finite moment orders, `sup { r : E xi^r < inf }`.
    pub fn moment_order_sup(&self) -> f64 {
        match *self {
            InterarrivalSpec::Pareto { shape, .. } => shape,
            _ => f64::INFINITY,
        }
    }

    /// Inverse cdf on (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            InterarrivalSpec::Exponential { rate } => -(1.0 - u).ln() / rate,
            InterarrivalSpec::Pareto { shape, scale } => scale * (1.0 - u).powf(-1.0 / shape),
            InterarrivalSpec::LogNormal { meanlog, sdlog } => {
                let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
                (meanlog + sdlog * std_normal.inverse_cdf(u)).exp()
            }
            InterarrivalSpec::Deterministic { value } => value,
        }
    }

    /// Marginal cdf, used by goodness-of-fit checks.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            InterarrivalSpec::Exponential { rate } => 1.0 - (-rate * x).exp(),
            InterarrivalSpec::Pareto { shape, scale } => {
                if x < scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            InterarrivalSpec::LogNormal { meanlog, sdlog } => {
                let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
                std_normal.cdf((x.ln() - meanlog) / sdlog)
            }
            InterarrivalSpec::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Service-time tail family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ServiceTailSpec {
    /// `1 - F(t) = (1 + t)^{-beta}` with `beta` in (0, 1): regularly varying
    /// with index `beta` and slowly varying factor tending to 1.
    ParetoShifted { beta: f64 },
    /// `1 - F(t) = 1 / ln(e + t)`: the index-zero case, slowly varying factor
    /// decaying to zero.
    LogTail,
}

impl ServiceTailSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ServiceTailSpec::ParetoShifted { beta } => {
                // beta = 0 is realized by LogTail; a flat shifted-Pareto tail
                // would not decay.
                if beta > 0.0 && beta < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "shifted-Pareto tail index must lie in (0, 1), got {beta}"
                    )))
                }
            }
            ServiceTailSpec::LogTail => Ok(()),
        }
    }

    /// Regular-variation index of the tail.
    pub fn beta(&self) -> f64 {
        match *self {
            ServiceTailSpec::ParetoShifted { beta } => beta,
            ServiceTailSpec::LogTail => 0.0,
        }
    }

    /// Exact tail `1 - F(t)`.
    pub fn tail(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        match *self {
            ServiceTailSpec::ParetoShifted { beta } => (1.0 + t).powf(-beta),
            ServiceTailSpec::LogTail => 1.0 / (std::f64::consts::E + t).ln(),
        }
    }

    /// Exact cdf `F(t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            1.0 - self.tail(t)
        }
    }

    /// Inverse cdf on (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            ServiceTailSpec::ParetoShifted { beta } => (1.0 - u).powf(-1.0 / beta) - 1.0,
            ServiceTailSpec::LogTail => (1.0 / (1.0 - u)).exp() - std::f64::consts::E,
        }
    }

    /// `int_0^t (1 - F(y)) dy`. Closed form for the shifted-Pareto family;
    /// adaptive Simpson (absolute tolerance 1e-10, memoized per t) for the
    /// logarithmic tail.
    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        debug_assert!(t >= 0.0);
        match *self {
            ServiceTailSpec::ParetoShifted { beta } => {
                Ok(((1.0 + t).powf(1.0 - beta) - 1.0) / (1.0 - beta))
            }
            ServiceTailSpec::LogTail => log_tail_integral(t),
        }
    }

    /// `a(t) = sum_{k=0}^{[t]+1} (1 - F(k))`, the discrete normalizer.
    pub fn normalizer_sum(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0);
        let last = t.floor() as u64 + 1;
        let mut acc = 0.0;
        let mut comp = 0.0;
        for k in 0..=last {
            // Kahan compensation, the sum runs over ~t near-equal terms.
            let y = self.tail(k as f64) - comp;
            let s = acc + y;
            comp = (s - acc) - y;
            acc = s;
        }
        acc
    }
}

static LOG_TAIL_CACHE: Lazy<Mutex<HashMap<u64, f64>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn log_tail_integrand(y: f64) -> f64 {
    1.0 / (std::f64::consts::E + y).ln()
}

fn log_tail_integral(t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if let Some(v) = LOG_TAIL_CACHE.lock().unwrap().get(&t.to_bits()) {
        return Ok(*v);
    }
    let v = adaptive_simpson(log_tail_integrand, 0.0, t, 1e-10)
        .ok_or(Error::QuadratureNonconvergence { t })?;
    LOG_TAIL_CACHE.lock().unwrap().insert(t.to_bits(), v);
    Ok(v)
}

/// Adaptive Simpson with absolute tolerance; `None` when the recursion depth
/// bottoms out before the tolerance is met.
pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Option<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        let l = recurse(f, a, m, left, 0.5 * tol, depth - 1)?;
        let r = recurse(f, m, b, right, 0.5 * tol, depth - 1)?;
        Some(l + r)
    }
    let m = 0.5 * (a + b);
    let whole = simpson(&f, a, m, b);
    recurse(&f, a, b, whole, tol, 60)
}

/// Dependence coupling between the interarrival and service marginals.
///
/// Comonotone and antimonotone reuse one uniform per pair; the common-shock
/// family selects the shared uniform with probability `theta`, interpolating
/// between independent (`theta = 0`) and comonotone (`theta = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "coupling", rename_all = "snake_case")]
pub enum DependenceSpec {
    Independent,
    Comonotone,
    Antimonotone,
    CommonShock { theta: f64 },
}

impl DependenceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DependenceSpec::CommonShock { theta } => {
                if (0.0..=1.0).contains(&theta) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "common-shock weight must lie in [0, 1], got {theta}"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            DependenceSpec::CommonShock { theta } => Some(theta),
            _ => None,
        }
    }
}

/// Derived closed-form constants of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// Mean interarrival time.
    pub mu: f64,
    /// Interarrival variance (may be infinite).
    pub sigma2: f64,
    /// Regular-variation index of the service tail.
    pub beta: f64,
    /// Whether the interarrival law has finite moments of some order
    /// `r > 2 / (1 - beta)`, the hypothesis required for nonrandom centering.
    pub nonrandom_centering_valid: bool,
}

/// Full specification of the joint (interarrival, service) law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfigToml")]
pub struct ModelConfig {
    pub interarrival: InterarrivalSpec,
    pub service: ServiceTailSpec,
    pub dependence: DependenceSpec,
    #[serde(skip_deserializing)]
    pub derived: DerivedConstants,
}

#[derive(Deserialize)]
struct ModelConfigToml {
    interarrival: InterarrivalSpec,
    service: ServiceTailSpec,
    #[serde(default)]
    dependence: Option<DependenceSpec>,
    // Accept (and ignore) an echoed derived table so serialized configs
    // round-trip.
    #[serde(default)]
    #[allow(dead_code)]
    derived: Option<toml::Value>,
}

impl TryFrom<ModelConfigToml> for ModelConfig {
    type Error = Error;

    fn try_from(raw: ModelConfigToml) -> Result<Self> {
        ModelConfig::new(
            raw.interarrival,
            raw.service,
            raw.dependence.unwrap_or(DependenceSpec::Independent),
        )
    }
}

impl ModelConfig {
    pub fn new(
        interarrival: InterarrivalSpec,
        service: ServiceTailSpec,
        dependence: DependenceSpec,
    ) -> Result<Self> {
        interarrival.validate()?;
        service.validate()?;
        dependence.validate()?;
        let beta = service.beta();
        let derived = DerivedConstants {
            mu: interarrival.mean(),
            sigma2: interarrival.variance(),
            beta,
            nonrandom_centering_valid: interarrival.moment_order_sup() > 2.0 / (1.0 - beta),
        };
        Ok(ModelConfig {
            interarrival,
            service,
            dependence,
            derived,
        })
    }

    pub fn with_dependence(&self, dependence: DependenceSpec) -> Result<Self> {
        ModelConfig::new(self.interarrival, self.service, dependence)
    }

    pub fn mu(&self) -> f64 {
        self.derived.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.derived.sigma2
    }

    pub fn beta(&self) -> f64 {
        self.derived.beta
    }

    /// Required moment order `2 / (1 - beta)` for nonrandom centering.
    pub fn required_moment_order(&self) -> f64 {
        2.0 / (1.0 - self.beta())
    }

    /// One draw from the joint law: `(interarrival, service)`.
    ///
    /// Every coupling consumes exactly three uniforms per pair so that
    /// common-shock with theta = 0 is draw-for-draw identical to the
    /// independent coupling under a shared seed.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u_shared = unit_open(rng.gen::<f64>());
        let u_indep = unit_open(rng.gen::<f64>());
        let u_select: f64 = rng.gen();
        let eta = self.service.quantile(u_shared);
        let xi = match self.dependence {
            DependenceSpec::Independent => self.interarrival.quantile(u_indep),
            DependenceSpec::Comonotone => self.interarrival.quantile(u_shared),
            DependenceSpec::Antimonotone => self.interarrival.quantile(1.0 - u_shared),
            DependenceSpec::CommonShock { theta } => {
                let u = if u_select < theta { u_shared } else { u_indep };
                self.interarrival.quantile(u)
            }
        };
        (xi, eta)
    }

    /// Exact service tail `1 - F(t)`.
    pub fn tail(&self, t: f64) -> f64 {
        self.service.tail(t)
    }

    /// `int_0^t (1 - F(y)) dy`.
    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        self.service.tail_integral(t)
    }

    /// Discrete normalizer `a(t)`.
    pub fn normalizer_sum(&self, t: f64) -> f64 {
        self.service.normalizer_sum(t)
    }
}

/// Clamp a `[0, 1)` draw into the open interval so quantiles stay finite.
fn unit_open(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
