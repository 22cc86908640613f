//! Queue trajectory generation and exact counting functionals.
//!
//! A path stores the raw (arrival, service) pairs: the arrival epochs are the
//! zero-delayed random walk of interarrival increments, and each arrival
//! carries the service time of the customer entering at that epoch. Counting
//! is done by merged sweeps over the sorted arrival and departure sequences,
//! never by an O(n * m) double loop.

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ModelConfig;

/// One realized trajectory up to (and one arrival past) a horizon.
#[derive(Debug, Clone)]
pub struct QueuePath {
    /// Arrival epochs, strictly increasing, starting at exactly 0.
    pub arrivals: Vec<f64>,
    /// Service time paired with each arrival.
    pub services: Vec<f64>,
    pub horizon: f64,
}

/// Counting functionals evaluated at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountSnapshot {
    pub t: f64,
    /// Number of customers in service at `t`.
    pub busy: u64,
    /// Number of customers already served by `t`.
    pub served: u64,
    /// First walk index whose arrival exceeds `t` (equals arrivals in `[0, t]`).
    pub renewals: u64,
    /// Conditional mean of the busy count given the arrivals:
    /// `sum_k (1 - F(t - S_k)) 1{S_k <= t}`.
    pub conditional_mean: f64,
}

/// Generate a path containing every arrival at or below `horizon` plus the
/// first arrival beyond it.
pub fn generate_path<R: Rng + ?Sized>(
    model: &ModelConfig,
    horizon: f64,
    rng: &mut R,
) -> Result<QueuePath> {
    let cap = path_cap(model, horizon);
    generate_path_with_cap(model, horizon, cap, rng)
}

fn path_cap(model: &ModelConfig, horizon: f64) -> usize {
    (10.0 * horizon / model.mu()) as usize + 1_000_000
}

pub(crate) fn generate_path_with_cap<R: Rng + ?Sized>(
    model: &ModelConfig,
    horizon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<QueuePath> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let expected = (horizon / model.mu()) as usize + 2;
    let mut arrivals = Vec::with_capacity(expected);
    let mut services = Vec::with_capacity(expected);
    let mut s = 0.0;
    loop {
        let (xi, eta) = model.sample_pair(rng);
        arrivals.push(s);
        services.push(eta);
        if s > horizon {
            break;
        }
        if arrivals.len() >= cap {
            return Err(Error::PathCapExceeded { cap, horizon });
        }
        s += xi;
    }
    Ok(QueuePath {
        arrivals,
        services,
        horizon,
    })
}

impl QueuePath {
    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Departure epochs, sorted ascending.
    pub fn sorted_departures(&self) -> Vec<f64> {
        let mut deps: Vec<f64> = self
            .arrivals
            .iter()
            .zip(&self.services)
            .map(|(s, e)| s + e)
            .collect();
        deps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        deps
    }

    /// Debug dump of the raw pairs as CSV (`k,arrival,service`).
    pub fn dump_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "k,arrival,service")?;
        for (k, (s, e)) in self.arrivals.iter().zip(&self.services).enumerate() {
            writeln!(w, "{k},{s},{e}")?;
        }
        Ok(())
    }
}

/// First walk index whose arrival exceeds `t`.
pub fn renewal_count(path: &QueuePath, t: f64) -> Result<u64> {
    if t > path.horizon {
        return Err(Error::BeyondHorizon {
            t,
            horizon: path.horizon,
        });
    }
    Ok(path.arrivals.partition_point(|&s| s <= t) as u64)
}

/// Evaluate the busy/served/renewal counts and the conditional busy mean at a
/// sorted list of times.
pub fn evaluate_counts(
    path: &QueuePath,
    model: &ModelConfig,
    times: &[f64],
) -> Result<Vec<CountSnapshot>> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnsortedTimes);
    }
    if let Some(&last) = times.last() {
        if last > path.horizon {
            return Err(Error::BeyondHorizon {
                t: last,
                horizon: path.horizon,
            });
        }
    }
    let departures = path.sorted_departures();
    let mut out = Vec::with_capacity(times.len());
    let mut arr_idx = 0usize;
    let mut dep_idx = 0usize;
    for &t in times {
        while arr_idx < path.arrivals.len() && path.arrivals[arr_idx] <= t {
            arr_idx += 1;
        }
        while dep_idx < departures.len() && departures[dep_idx] <= t {
            dep_idx += 1;
        }
        let renewals = arr_idx as u64;
        let served = dep_idx as u64;
        // departures are strictly later than their arrivals, so every served
        // customer has arrived: busy = renewals - served
        let busy = renewals - served;
        // Kahan sum; the statistic downstream is a small difference of sums
        // over ~1e5 terms near 1.
        let mut acc = 0.0;
        let mut comp = 0.0;
        for &s in &path.arrivals[..arr_idx] {
            let y = model.tail(t - s) - comp;
            let sum = acc + y;
            comp = (sum - acc) - y;
            acc = sum;
        }
        out.push(CountSnapshot {
            t,
            busy,
            served,
            renewals,
            conditional_mean: acc,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DependenceSpec, InterarrivalSpec, ServiceTailSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pareto_model() -> ModelConfig {
        ModelConfig::new(
            InterarrivalSpec::Exponential { rate: 1.0 },
            ServiceTailSpec::ParetoShifted { beta: 0.5 },
            DependenceSpec::Independent,
        )
        .unwrap()
    }

    fn lattice_model() -> ModelConfig {
        ModelConfig::new(
            InterarrivalSpec::Deterministic { value: 1.0 },
            ServiceTailSpec::ParetoShifted { beta: 0.5 },
            DependenceSpec::Independent,
        )
        .unwrap()
    }

    fn hand_path() -> QueuePath {
        QueuePath {
            arrivals: vec![0.0, 1.0, 2.5],
            services: vec![3.0, 0.4, 1.0],
            horizon: 2.0,
        }
    }

    #[test]
    fn lattice_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = generate_path(&lattice_model(), 3.5, &mut rng).unwrap();
        assert_eq!(p.arrivals, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn first_arrival_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = generate_path(&pareto_model(), 10.0, &mut rng).unwrap();
        assert_eq!(p.arrivals[0], 0.0);
        assert!(p.arrivals.windows(2).all(|w| w[0] < w[1]));
        assert!(*p.arrivals.last().unwrap() > 10.0);
        assert_eq!(p.arrivals.len(), p.services.len());
    }

    #[test]
    fn mean_path_length_matches_renewal_theorem() {
        let m = pareto_model();
        let t = 1e4;
        let reps = 100;
        let mut total = 0.0;
        for i in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
            total += generate_path(&m, t, &mut rng).unwrap().len() as f64;
        }
        let mean = total / reps as f64;
        // sigma/mu = 1 for the unit exponential
        assert!((mean - (t + 1.0)).abs() < 3.0 * t.sqrt(), "mean = {mean}");
    }

    #[test]
    fn path_cap_signals_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = generate_path_with_cap(&pareto_model(), 100.0, 10, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PathCapExceeded { .. }));
    }

    #[test]
    fn hand_counts() {
        let snaps = evaluate_counts(&hand_path(), &pareto_model(), &[2.0]).unwrap();
        let s = snaps[0];
        assert_eq!(s.busy, 1);
        assert_eq!(s.served, 1);
        assert_eq!(s.renewals, 2);
        // (1 + 2)^{-1/2} + (1 + 1)^{-1/2}
        let expect = 3.0f64.powf(-0.5) + 2.0f64.powf(-0.5);
        assert!((s.conditional_mean - expect).abs() < 1e-12);
        assert!((expect - 1.28446).abs() < 1e-5);
    }

    #[test]
    fn renewal_count_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lattice = generate_path(&lattice_model(), 3.5, &mut rng).unwrap();
        assert_eq!(renewal_count(&lattice, 2.0).unwrap(), 3);
        assert_eq!(renewal_count(&lattice, 0.0).unwrap(), 1);
        let p = QueuePath {
            arrivals: vec![0.0, 1.0, 2.5],
            services: vec![1.0, 1.0, 1.0],
            horizon: 2.0,
        };
        assert_eq!(renewal_count(&p, 2.0).unwrap(), 2);
    }

    #[test]
    fn beyond_horizon_rejected() {
        let p = hand_path();
        assert!(matches!(
            renewal_count(&p, 3.0),
            Err(Error::BeyondHorizon { .. })
        ));
        assert!(matches!(
            evaluate_counts(&p, &pareto_model(), &[1.0, 3.0]),
            Err(Error::BeyondHorizon { .. })
        ));
        assert!(matches!(
            evaluate_counts(&p, &pareto_model(), &[1.0, 0.5]),
            Err(Error::UnsortedTimes)
        ));
    }

    /// Naive double-loop oracle for the counting functionals.
    fn naive_counts(path: &QueuePath, model: &ModelConfig, t: f64) -> CountSnapshot {
        let mut busy = 0;
        let mut served = 0;
        let mut renewals = 0;
        let mut conditional_mean = 0.0;
        for (&s, &e) in path.arrivals.iter().zip(&path.services) {
            if s <= t {
                renewals += 1;
                conditional_mean += model.tail(t - s);
                if t < s + e {
                    busy += 1;
                }
            }
            if s + e <= t {
                served += 1;
            }
        }
        CountSnapshot {
            t,
            busy,
            served,
            renewals,
            conditional_mean,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn sweep_matches_naive_oracle(seed in 0u64..10_000, n_times in 1usize..8) {
            let m = pareto_model();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let horizon = 1.0 + 99.0 * rng.gen::<f64>();
            let path = generate_path(&m, horizon, &mut rng).unwrap();
            let mut times: Vec<f64> = (0..n_times).map(|_| rng.gen::<f64>() * horizon).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let snaps = evaluate_counts(&path, &m, &times).unwrap();
            for snap in snaps {
                let oracle = naive_counts(&path, &m, snap.t);
                prop_assert_eq!(snap.busy, oracle.busy);
                prop_assert_eq!(snap.served, oracle.served);
                prop_assert_eq!(snap.renewals, oracle.renewals);
                prop_assert!((snap.conditional_mean - oracle.conditional_mean).abs() < 1e-9);
                // indicator identity
                prop_assert_eq!(snap.busy + snap.served, snap.renewals);
                prop_assert!(snap.conditional_mean >= 0.0);
                prop_assert!(snap.conditional_mean <= snap.renewals as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn conditional_mean_is_the_conditional_busy_expectation() {
        // freeze the arrivals, redraw the services; independent coupling so
        // the conditional law factorizes
        let m = pareto_model();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let path = generate_path(&m, 50.0, &mut rng).unwrap();
        let t = 40.0;
        let snap = evaluate_counts(&path, &m, &[t]).unwrap()[0];
        let redraws = 4_000;
        let mut vals = Vec::with_capacity(redraws);
        for _ in 0..redraws {
            let services: Vec<f64> = path
                .arrivals
                .iter()
                .map(|_| m.service.quantile(rng.gen::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)))
                .collect();
            let redrawn = QueuePath {
                arrivals: path.arrivals.clone(),
                services,
                horizon: path.horizon,
            };
            vals.push(evaluate_counts(&redrawn, &m, &[t]).unwrap()[0].busy as f64);
        }
        let mean = vals.iter().sum::<f64>() / redraws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (redraws as f64 - 1.0);
        let se = (var / redraws as f64).sqrt();
        assert!(
            (mean - snap.conditional_mean).abs() < 3.0 * se,
            "mean {mean} vs conditional {c}, se {se}",
            c = snap.conditional_mean
        );
    }
}
