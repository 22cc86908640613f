//! Replication engine and estimator suite: runs independent replications,
//! aggregates empirical means/covariances/marginals, and scores them against
//! the theoretical limit kernel.
//!
//! Determinism contract: every replication owns a counter-derived RNG
//! (`seed` plus the replication index as the stream), and aggregation is a
//! sequential fold in replication order, so reports are bit-identical for
//! any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::limitproc::CovKernel;
use crate::models::{DependenceSpec, ModelConfig};
use crate::pathgen::{generate_path, renewal_count};
use crate::statistics::{compute_statistic, NormalizerMode, StatisticKind};

fn default_kind() -> StatisticKind {
    StatisticKind::RandomCentered
}

fn default_mode() -> NormalizerMode {
    NormalizerMode::Integral
}

/// One Monte Carlo experiment: model, scale, grid, statistic, and budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Scale parameter; statistics are evaluated at times `u * t`.
    pub t: f64,
    /// Sorted `u`-grid, nonnegative, strictly increasing.
    pub grid: Vec<f64>,
    #[serde(default = "default_kind")]
    pub kind: StatisticKind,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub normalizer_mode: NormalizerMode,
}

impl ExperimentConfig {
    /// Validate hard constraints; returns advisory warnings for runnable but
    /// theoretically uncovered configurations.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {}",
                self.t
            )));
        }
        if self.replications < 2 {
            return Err(Error::InvalidParameter(
                "need at least 2 replications".into(),
            ));
        }
        if self.grid.is_empty()
            || self.grid[0] < 0.0
            || self.grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(
                "grid must be nonempty, strictly increasing, nonnegative".into(),
            ));
        }
        let mut warnings = Vec::new();
        if self.kind == StatisticKind::NonrandomCentered
            && !self.model.derived.nonrandom_centering_valid
        {
            warnings.push(format!(
                "nonrandom centering moment hypothesis unmet: need r > {} \
                 but the interarrival family has finite moments only up to {}",
                self.model.required_moment_order(),
                self.model.interarrival.moment_order_sup()
            ));
        }
        Ok(warnings)
    }
}

/// Empirical moments over replications scored against the limit kernel.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub grid: Vec<f64>,
    pub empirical_mean: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub theoretical_cov: Vec<Vec<f64>>,
    /// Jackknife (leave-one-replication-out) standard error per entry.
    pub standard_errors: Vec<Vec<f64>>,
    /// Largest |empirical - theoretical| over entries with both u > 0.
    pub max_abs_error: f64,
    /// Largest |empirical - theoretical| / se over the same entries.
    pub max_error_in_se_units: f64,
}

/// Goodness of fit of one marginal against Gaussian(0, u^{1-beta}).
#[derive(Debug, Clone, Serialize)]
pub struct MarginalReport {
    pub u: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

/// Everything one experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub covariance: CovarianceReport,
    pub marginals: Vec<MarginalReport>,
    /// Replication-major matrix of statistic values on the grid.
    pub samples: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Empirical mean/covariance of `samples` (replication-major, one value per
/// grid point) with jackknife standard errors, scored against the kernel.
pub fn covariance_report(
    samples: &[Vec<f64>],
    grid: &[f64],
    beta: f64,
) -> Result<CovarianceReport> {
    let m = samples.len();
    if m < 3 {
        return Err(Error::InsufficientSamples { need: 3, got: m });
    }
    let k = grid.len();
    let kernel = CovKernel::new(beta)?;
    let mf = m as f64;

    let mut s1 = vec![0.0; k];
    let mut s2 = vec![vec![0.0; k]; k];
    for row in samples {
        for i in 0..k {
            s1[i] += row[i];
            for j in 0..=i {
                s2[i][j] += row[i] * row[j];
            }
        }
    }
    let mean: Vec<f64> = s1.iter().map(|v| v / mf).collect();
    let cov_entry = |s2ij: f64, s1i: f64, s1j: f64, n: f64| {
        (s2ij - s1i * s1j / n) / (n - 1.0)
    };
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let c = cov_entry(s2[i][j], s1[i], s1[j], mf);
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }

    // leave-one-out covariance per entry from the sufficient statistics
    let mut jk_sum = vec![vec![0.0; k]; k];
    let mut jk_sumsq = vec![vec![0.0; k]; k];
    for row in samples {
        for i in 0..k {
            for j in 0..=i {
                let c = cov_entry(
                    s2[i][j] - row[i] * row[j],
                    s1[i] - row[i],
                    s1[j] - row[j],
                    mf - 1.0,
                );
                jk_sum[i][j] += c;
                jk_sumsq[i][j] += c * c;
            }
        }
    }
    let mut se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mean_jk = jk_sum[i][j] / mf;
            let ss = (jk_sumsq[i][j] - mf * mean_jk * mean_jk).max(0.0);
            let s = ((mf - 1.0) / mf * ss).sqrt();
            se[i][j] = s;
            se[j][i] = s;
        }
    }

    let theo: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| kernel.cov(grid[i], grid[j])).collect())
        .collect();
    let mut max_abs = 0.0f64;
    let mut max_se_units = 0.0f64;
    for i in 0..k {
        for j in 0..=i {
            if grid[i] == 0.0 || grid[j] == 0.0 {
                continue;
            }
            let err = (cov[i][j] - theo[i][j]).abs();
            max_abs = max_abs.max(err);
            if se[i][j] > 0.0 {
                max_se_units = max_se_units.max(err / se[i][j]);
            }
        }
    }

    Ok(CovarianceReport {
        grid: grid.to_vec(),
        empirical_mean: mean,
        empirical_cov: cov,
        theoretical_cov: theo,
        standard_errors: se,
        max_abs_error: max_abs,
        max_error_in_se_units: max_se_units,
    })
}

fn replication_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Run `config.replications` independent replications and aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let warnings = config.validate()?;
    let horizon = config.t * config.grid.last().unwrap().max(f64::MIN_POSITIVE);
    let results: Vec<Result<Vec<f64>>> = (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(config.seed, i);
            let path = generate_path(&config.model, horizon, &mut rng)?;
            let sample = compute_statistic(
                &path,
                &config.model,
                config.t,
                &config.grid,
                config.kind,
                config.normalizer_mode,
            )?;
            Ok(sample.values)
        })
        .collect();
    let mut samples = Vec::with_capacity(config.replications);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => samples.push(v),
            Err(e) => {
                return Err(Error::Replication {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }

    let beta = config.model.beta();
    let covariance = covariance_report(&samples, &config.grid, beta)?;
    // marginal KS fits need a real sample size; skipped for small budgets
    let mut marginals = Vec::new();
    if samples.len() >= 1000 {
        for (i, &u) in config.grid.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            marginals.push(ks_marginal(&col, u, beta)?);
        }
    }
    Ok(ExperimentOutput {
        covariance,
        marginals,
        samples,
        warnings,
    })
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic two-sided Kolmogorov-Smirnov p-value with the usual
/// small-sample correction of the effective sample size.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// KS goodness of fit against the limit marginal Gaussian(0, u^{1-beta}).
pub fn ks_marginal(samples: &[f64], u: f64, beta: f64) -> Result<MarginalReport> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples {
            need: 1000,
            got: samples.len(),
        });
    }
    let sd = u.powf((1.0 - beta) / 2.0);
    if !(sd > 0.0) || samples.iter().all(|&x| x == samples[0]) {
        return Err(Error::DegenerateSample { u });
    }
    let normal = Normal::new(0.0, sd).expect("positive sd");
    let d = ks_statistic(samples, |x| normal.cdf(x));
    Ok(MarginalReport {
        u,
        ks_statistic: d,
        ks_p_value: ks_p_value(samples.len(), d),
    })
}

/// Run the base experiment once per coupling, reusing the same seed stream
/// per branch, all scored against the same kernel.
pub fn compare_dependence(
    base: &ExperimentConfig,
    couplings: &[DependenceSpec],
) -> Result<Vec<(DependenceSpec, ExperimentOutput)>> {
    if couplings.is_empty() {
        return Err(Error::InvalidParameter("empty coupling list".into()));
    }
    let mut out = Vec::with_capacity(couplings.len());
    for &coupling in couplings {
        let mut config = base.clone();
        config.model = base.model.with_dependence(coupling)?;
        out.push((coupling, run_experiment(&config)?));
    }
    Ok(out)
}

/// Variance-level renewal CLT diagnostic: `Var nu(t) / t` vs `sigma^2/mu^3`.
#[derive(Debug, Clone, Serialize)]
pub struct RenewalReport {
    pub t: f64,
    pub replications: usize,
    pub empirical_ratio: f64,
    pub target_ratio: f64,
}

pub fn renewal_clt_diagnostic(
    model: &ModelConfig,
    t: f64,
    replications: usize,
    seed: u64,
) -> Result<RenewalReport> {
    if replications < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 replications".into(),
        ));
    }
    let results: Vec<Result<f64>> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(seed, i);
            let path = generate_path(model, t, &mut rng)?;
            Ok(renewal_count(&path, t)? as f64)
        })
        .collect();
    let mut counts = Vec::with_capacity(replications);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => counts.push(v),
            Err(e) => {
                return Err(Error::Replication {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mu = model.mu();
    Ok(RenewalReport {
        t,
        replications,
        empirical_ratio: var / t,
        target_ratio: model.sigma2() / (mu * mu * mu),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limitproc::sample_cholesky;
    use crate::models::{InterarrivalSpec, ServiceTailSpec};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn exp_pareto_model(coupling: DependenceSpec) -> ModelConfig {
        ModelConfig::new(
            InterarrivalSpec::Exponential { rate: 1.0 },
            ServiceTailSpec::ParetoShifted { beta: 0.5 },
            coupling,
        )
        .unwrap()
    }

    fn small_config(coupling: DependenceSpec) -> ExperimentConfig {
        ExperimentConfig {
            model: exp_pareto_model(coupling),
            t: 200.0,
            grid: vec![0.5, 1.0, 2.0],
            kind: StatisticKind::RandomCentered,
            replications: 64,
            seed: 7,
            normalizer_mode: NormalizerMode::Integral,
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let config = small_config(DependenceSpec::Independent);
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_experiment(&config).unwrap())
        };
        let a = run_with(1);
        let b = run_with(4);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.covariance.empirical_cov, b.covariance.empirical_cov);
        assert_eq!(a.covariance.standard_errors, b.covariance.standard_errors);
        assert_eq!(a.covariance.max_abs_error, b.covariance.max_abs_error);
    }

    #[test]
    fn common_shock_zero_matches_independent() {
        let a = run_experiment(&small_config(DependenceSpec::Independent)).unwrap();
        let b = run_experiment(&small_config(DependenceSpec::CommonShock { theta: 0.0 }))
            .unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn estimator_sanity_on_exact_law() {
        // feed the aggregation path samples from the exact limit law
        let grid = [0.25, 0.5, 1.0, 1.5, 2.0];
        let kernel = CovKernel::new(0.5).unwrap();
        let samples = sample_cholesky(&kernel, &grid, 20_000, 101).unwrap();
        let report = covariance_report(&samples, &grid, 0.5).unwrap();
        assert!(
            report.max_error_in_se_units <= 4.0,
            "exact-law scoring gave {} se units",
            report.max_error_in_se_units
        );
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let diff =
                    (report.empirical_cov[i][j] - report.empirical_cov[j][i]).abs();
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn mean_of_random_centered_statistic_near_zero() {
        let mut config = small_config(DependenceSpec::Independent);
        config.replications = 2000;
        config.t = 100.0;
        let out = run_experiment(&config).unwrap();
        let m = config.replications as f64;
        for (i, &u) in config.grid.iter().enumerate() {
            let mean = out.covariance.empirical_mean[i];
            let sd = out.covariance.empirical_cov[i][i].sqrt();
            assert!(
                mean.abs() <= 3.0 * sd / m.sqrt() + 1e-12,
                "mean {mean} too far from 0 at u = {u}"
            );
        }
    }

    #[test]
    fn ks_statistic_hand_value() {
        // three points against Uniform(0,1): D = 1 - 0.7 = 0.3
        let d = ks_statistic(&[0.7, 0.1, 0.4], |x| x.clamp(0.0, 1.0));
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ks_null_calibration() {
        // samples drawn from the target itself: p should rarely be tiny
        let mut ok = 0;
        for run in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + run);
            let samples: Vec<f64> =
                (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let report = ks_marginal(&samples, 1.0, 0.5).unwrap();
            if report.ks_p_value > 0.001 {
                ok += 1;
            }
        }
        assert!(ok >= 99, "only {ok}/100 calibration runs passed");
    }

    #[test]
    fn ks_marginal_rejects_degenerate() {
        let zeros = vec![0.0; 2000];
        assert!(matches!(
            ks_marginal(&zeros, 1.0, 0.5).unwrap_err(),
            Error::DegenerateSample { .. }
        ));
        assert!(matches!(
            ks_marginal(&[0.0; 10], 1.0, 0.5).unwrap_err(),
            Error::InsufficientSamples { .. }
        ));
    }

    #[test]
    fn renewal_diagnostic_deterministic_interarrivals() {
        let model = ModelConfig::new(
            InterarrivalSpec::Deterministic { value: 1.0 },
            ServiceTailSpec::ParetoShifted { beta: 0.5 },
            DependenceSpec::Independent,
        )
        .unwrap();
        let report = renewal_clt_diagnostic(&model, 100.0, 50, 3).unwrap();
        assert_eq!(report.target_ratio, 0.0);
        assert_eq!(report.empirical_ratio, 0.0);
    }

    #[test]
    fn renewal_diagnostic_poisson() {
        let model = exp_pareto_model(DependenceSpec::Independent);
        let report = renewal_clt_diagnostic(&model, 1000.0, 2000, 5).unwrap();
        assert!((report.target_ratio - 1.0).abs() < 1e-12);
        // Var nu(t)/t = 1 for a Poisson count; se of the ratio ~ sqrt(2/M)
        assert!(
            (report.empirical_ratio - 1.0).abs() < 0.15,
            "ratio = {}",
            report.empirical_ratio
        );
    }

    #[test]
    fn bias_shrinks_with_scale() {
        let mut near = small_config(DependenceSpec::Independent);
        near.grid = vec![0.25, 0.5, 1.0, 1.5, 2.0];
        near.replications = 2000;
        near.t = 100.0;
        let mut far = near.clone();
        far.t = 10_000.0;
        let e_near = run_experiment(&near).unwrap().covariance.max_abs_error;
        let e_far = run_experiment(&far).unwrap().covariance.max_abs_error;
        assert!(
            e_far <= e_near,
            "max_abs_error grew with scale: {e_near} -> {e_far}"
        );
    }

    #[test]
    fn nonrandom_warning_when_moments_short() {
        let model = ModelConfig::new(
            InterarrivalSpec::Pareto {
                shape: 2.0,
                scale: 1.0,
            },
            ServiceTailSpec::ParetoShifted { beta: 0.5 },
            DependenceSpec::Independent,
        )
        .unwrap();
        let config = ExperimentConfig {
            model,
            t: 10.0,
            grid: vec![1.0],
            kind: StatisticKind::NonrandomCentered,
            replications: 2,
            seed: 0,
            normalizer_mode: NormalizerMode::Integral,
        };
        let warnings = config.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("need r > 4"), "{}", warnings[0]);
    }

    #[test]
    fn compare_rejects_empty_couplings() {
        let config = small_config(DependenceSpec::Independent);
        assert!(matches!(
            compare_dependence(&config, &[]).unwrap_err(),
            Error::InvalidParameter(_)
        ));
    }
}
