//! Finite-population stochastic simulation of both protocol semantics, for
//! empirical validation of the deterministic limit.
//!
//! Rule protocols run on a Poisson encounter stream of aggregate rate `n`
//! (so each agent takes part in a constant expected number of encounters
//! per time unit; this is the unique constant-per-agent-rate time scaling
//! under which the empirical densities converge to the mean-field velocity
//! field without rescaling time). Each encounter draws a uniformly random
//! ordered pair of distinct agents; a matching rule transitions both
//! agents, otherwise the encounter is a no-op.
//!
//! Switching protocols run event by event: the total review rate is
//! `R(x) = sum_i n_i lambda_i(x)`, waiting times are exponential with mean
//! `1/R`, the reviewing state is chosen proportionally to `n_i lambda_i(x)`,
//! and the new state follows the switch row evaluated at the current
//! empirical densities. Rates are recomputed at every event; there is no
//! tau-leaping.
//!
//! A single run is strictly sequential (the event order is the semantics);
//! independent seeds parallelize freely through the ensemble helpers.

use crate::protocol::{DensityVector, ProtocolError, ProtocolKind, ProtocolSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("population too small: n = {n}, need at least 2 agents")]
    PopulationTooSmall { n: u64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(
        "switch row of state {state} is not a probability distribution at x = {x:?} (sum = {sum})"
    )]
    NonStochasticRow { state: usize, x: Vec<f64>, sum: f64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Agent counts per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationCounts {
    counts: Vec<u64>,
}

impl PopulationCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self, SimError> {
        if counts.is_empty() {
            return Err(SimError::Shape("no states".into()));
        }
        Ok(Self { counts })
    }

    /// Rounds `n * x` to integer counts summing exactly to `n`
    /// (largest-remainder apportionment, ties to the lower index).
    pub fn from_density(x: &DensityVector, n: u64) -> Self {
        let k = x.len();
        let mut counts: Vec<u64> = x.iter().map(|&v| (v * n as f64).floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut remainders: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, v * n as f64 - (v * n as f64).floor()))
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(i, _) in remainders.iter().take((n - assigned) as usize) {
            counts[i] += 1;
        }
        debug_assert_eq!(counts.iter().sum::<u64>(), n);
        debug_assert_eq!(counts.len(), k);
        Self { counts }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn densities(&self) -> DensityVector {
        let n = self.n() as f64;
        DensityVector::new(self.counts.iter().map(|&c| c as f64 / n).collect())
            .expect("counts/n lies on the simplex")
    }
}

/// Density samples of one run on a fixed time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTrajectory {
    pub times: Vec<f64>,
    pub densities: Vec<DensityVector>,
    pub seed: u64,
    pub n: u64,
}

impl EmpiricalTrajectory {
    pub fn final_density(&self) -> &DensityVector {
        self.densities.last().expect("nonempty trajectory")
    }

    /// Same CSV layout as the deterministic trajectories, preceded by a
    /// metadata comment line carrying `n` and the seed.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = format!("# n={} seed={}\n", self.n, self.seed);
        out.push('t');
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, p) in self.times.iter().zip(&self.densities) {
            out.push_str(&format!("{t}"));
            for v in p.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One rule-semantics run: trajectory plus event accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct PppRun {
    pub trajectory: EmpiricalTrajectory,
    pub events: u64,
    /// Encounters whose ordered state pair had no rule.
    pub noop_events: u64,
}

/// One switching-semantics run.
#[derive(Debug, Clone, PartialEq)]
pub struct SppRun {
    pub trajectory: EmpiricalTrajectory,
    pub events: u64,
}

/// Records the pre-event state at every grid time that has passed.
struct GridSampler {
    sample_dt: f64,
    t_end: f64,
    next: usize,
    times: Vec<f64>,
    densities: Vec<DensityVector>,
}

impl GridSampler {
    fn new(sample_dt: f64, t_end: f64) -> Self {
        Self { sample_dt, t_end, next: 0, times: Vec::new(), densities: Vec::new() }
    }

    fn grid_time(&self) -> f64 {
        self.next as f64 * self.sample_dt
    }

    /// Emits every grid point strictly before `t` with the current counts.
    fn advance_to(&mut self, t: f64, counts: &PopulationCounts) {
        while self.grid_time() < t && self.grid_time() <= self.t_end + 1e-12 {
            self.times.push(self.grid_time());
            self.densities.push(counts.densities());
            self.next += 1;
        }
    }

    fn finish(mut self, counts: &PopulationCounts) -> (Vec<f64>, Vec<DensityVector>) {
        self.advance_to(f64::INFINITY, counts);
        (self.times, self.densities)
    }
}

fn exp_waiting_time(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // 1 - u lies in (0, 1], so the log is finite.
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Draws a state index proportionally to `weights` (which sum to `total`).
fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64], total: f64) -> usize {
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn check_sim_params(
    spec: &ProtocolSpec,
    counts0: &PopulationCounts,
    t_end: f64,
    sample_dt: f64,
) -> Result<(), SimError> {
    if counts0.k() != spec.k() {
        return Err(SimError::Shape(format!(
            "counts have {} states, spec has {}",
            counts0.k(),
            spec.k()
        )));
    }
    if counts0.n() < 2 {
        return Err(SimError::PopulationTooSmall { n: counts0.n() });
    }
    if !(t_end > 0.0) || !(sample_dt > 0.0) {
        return Err(SimError::InvalidParams("t_end and sample_dt must be positive".into()));
    }
    Ok(())
}

/// Simulates the pairwise-encounter semantics.
///
/// Deterministic for fixed `(seed, inputs)`: identical event sequences and
/// bit-identical trajectories.
pub fn simulate_ppp(
    spec: &ProtocolSpec,
    counts0: &PopulationCounts,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<PppRun, SimError> {
    let ProtocolKind::Ppp { rules } = spec.kind() else {
        return Err(ProtocolError::KindMismatch { op: "simulate_ppp", kind: spec.kind_name() }
            .into());
    };
    check_sim_params(spec, counts0, t_end, sample_dt)?;

    let k = spec.k();
    let mut rule_table: Vec<Option<(usize, usize)>> = vec![None; k * k];
    for r in rules {
        rule_table[r.left.0 * k + r.left.1] = Some(r.right);
    }

    let mut counts = counts0.clone();
    let n = counts.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = GridSampler::new(sample_dt, t_end);
    let mut t = 0.0;
    let mut events = 0u64;
    let mut noop_events = 0u64;

    loop {
        // Aggregate encounter rate n keeps per-agent activity constant.
        let dt = exp_waiting_time(&mut rng, n as f64);
        let t_next = t + dt;
        if t_next > t_end {
            break;
        }
        sampler.advance_to(t_next, &counts);
        t = t_next;
        events += 1;

        // Ordered pair of distinct agents, expressed through state counts.
        let first = {
            let pick = rng.gen_range(0..n);
            index_by_counts(counts.counts(), pick)
        };
        let second = {
            let pick = rng.gen_range(0..n - 1);
            let mut reduced = counts.counts().to_vec();
            reduced[first] -= 1;
            index_by_counts(&reduced, pick)
        };

        match rule_table[first * k + second] {
            Some((to_first, to_second)) => {
                counts.counts[first] -= 1;
                counts.counts[second] -= 1;
                counts.counts[to_first] += 1;
                counts.counts[to_second] += 1;
            }
            None => noop_events += 1,
        }
    }

    let (times, densities) = sampler.finish(&counts);
    Ok(PppRun {
        trajectory: EmpiricalTrajectory { times, densities, seed, n },
        events,
        noop_events,
    })
}

fn index_by_counts(counts: &[u64], pick: u64) -> usize {
    let mut acc = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        acc += c;
        if pick < acc {
            return i;
        }
    }
    counts.len() - 1
}

/// Simulates the switching semantics (event-by-event, statistically exact).
///
/// The switch row of the reviewing state must be a probability distribution
/// at the current densities whenever its rate is positive; this is checked
/// at every event.
pub fn simulate_spp(
    spec: &ProtocolSpec,
    counts0: &PopulationCounts,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<SppRun, SimError> {
    if matches!(spec.kind(), ProtocolKind::Ppp { .. }) {
        return Err(ProtocolError::KindMismatch { op: "simulate_spp", kind: "ppp" }.into());
    }
    check_sim_params(spec, counts0, t_end, sample_dt)?;

    let k = spec.k();
    let mut counts = counts0.clone();
    let n = counts.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = GridSampler::new(sample_dt, t_end);
    let mut t = 0.0;
    let mut events = 0u64;

    loop {
        let x = counts.densities();
        let weights: Vec<f64> =
            (0..k).map(|i| counts.counts()[i] as f64 * spec.rate_raw(i, &x)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            break;
        }

        let dt = exp_waiting_time(&mut rng, total);
        let t_next = t + dt;
        if t_next > t_end {
            break;
        }
        sampler.advance_to(t_next, &counts);
        t = t_next;
        events += 1;

        let reviewing = pick_weighted(&mut rng, &weights, total);
        let row: Vec<f64> = (0..k).map(|j| spec.switch_raw(reviewing, j, &x)).collect();
        let row_sum: f64 = row.iter().sum();
        if (row_sum - 1.0).abs() > 1e-9 {
            return Err(SimError::NonStochasticRow {
                state: reviewing,
                x: x.to_vec(),
                sum: row_sum,
            });
        }
        let target = pick_weighted(&mut rng, &row, row_sum);
        counts.counts[reviewing] -= 1;
        counts.counts[target] += 1;
    }

    let (times, densities) = sampler.finish(&counts);
    Ok(SppRun {
        trajectory: EmpiricalTrajectory { times, densities, seed, n },
        events,
    })
}

/// Independent replicas of [`simulate_ppp`], one per seed, fanned out to
/// the worker pool.
pub fn simulate_ppp_ensemble(
    spec: &ProtocolSpec,
    counts0: &PopulationCounts,
    t_end: f64,
    sample_dt: f64,
    seeds: &[u64],
) -> Result<Vec<PppRun>, SimError> {
    crate::par::map_indexed(seeds.len(), |i| {
        simulate_ppp(spec, counts0, t_end, sample_dt, seeds[i])
    })
    .into_iter()
    .collect()
}

/// Independent replicas of [`simulate_spp`].
pub fn simulate_spp_ensemble(
    spec: &ProtocolSpec,
    counts0: &PopulationCounts,
    t_end: f64,
    sample_dt: f64,
    seeds: &[u64],
) -> Result<Vec<SppRun>, SimError> {
    crate::par::map_indexed(seeds.len(), |i| {
        simulate_spp(spec, counts0, t_end, sample_dt, seeds[i])
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{PppRule, StateSet};

    fn states(k: usize) -> StateSet {
        StateSet::new((0..k).map(|i| format!("q{}", i + 1)).collect()).unwrap()
    }

    fn swap_mpp() -> ProtocolSpec {
        ProtocolSpec::mpp(
            states(2),
            vec![1.0, 1.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn from_density_apportions_exactly() {
        let x = DensityVector::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let c = PopulationCounts::from_density(&x, 1000);
        assert_eq!(c.n(), 1000);
        assert!(c.counts().iter().all(|&v| v == 333 || v == 334));
    }

    #[test]
    fn empty_rule_set_keeps_densities_constant() {
        let spec = ProtocolSpec::ppp(states(2), vec![]).unwrap();
        let counts = PopulationCounts::new(vec![30, 70]).unwrap();
        let run = simulate_ppp(&spec, &counts, 5.0, 0.5, 1).unwrap();
        for d in &run.trajectory.densities {
            assert_eq!(d.as_slice(), &[0.3, 0.7]);
        }
        assert_eq!(run.noop_events, run.events);
    }

    #[test]
    fn two_agent_absorption() {
        // Single rule (q1, q2) -> (q2, q2): once the ordered encounter with
        // the q1 agent first fires, the population is absorbed at (0, 2).
        let spec = ProtocolSpec::ppp(states(2), vec![PppRule::new((0, 1), (1, 1))]).unwrap();
        let counts = PopulationCounts::new(vec![1, 1]).unwrap();
        for seed in 0..10 {
            let run = simulate_ppp(&spec, &counts, 50.0, 1.0, seed).unwrap();
            let last = run.trajectory.final_density();
            assert_eq!(last.as_slice(), &[0.0, 1.0], "seed {seed}");
        }
    }

    #[test]
    fn population_is_conserved_through_events() {
        let spec = ProtocolSpec::ppp(
            states(3),
            vec![
                PppRule::new((0, 1), (2, 1)),
                PppRule::new((2, 0), (0, 1)),
                PppRule::new((1, 2), (1, 0)),
            ],
        )
        .unwrap();
        let counts = PopulationCounts::new(vec![40, 30, 30]).unwrap();
        let run = simulate_ppp(&spec, &counts, 10.0, 0.1, 3).unwrap();
        for d in &run.trajectory.densities {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(run.events > 0);
    }

    #[test]
    fn frozen_population_under_zero_rates() {
        let spec = ProtocolSpec::spp(
            states(2),
            vec![crate::protocol::RateExpr::Constant(0.0); 2],
            vec![vec![crate::protocol::SwitchExpr::Constant(0.0); 2]; 2],
        )
        .unwrap();
        let counts = PopulationCounts::new(vec![5, 5]).unwrap();
        let run = simulate_spp(&spec, &counts, 10.0, 1.0, 9).unwrap();
        assert_eq!(run.events, 0);
        assert_eq!(run.trajectory.times.len(), 11);
        for d in &run.trajectory.densities {
            assert_eq!(d.as_slice(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn swap_chain_reaches_even_mixture() {
        let spec = swap_mpp();
        let counts = PopulationCounts::new(vec![10_000, 0]).unwrap();
        let mut hits = 0;
        for seed in 0..20 {
            let run = simulate_spp(&spec, &counts, 20.0, 1.0, seed).unwrap();
            let last = run.trajectory.final_density();
            if (last[0] - 0.5).abs() < 0.02 {
                hits += 1;
            }
        }
        assert!(hits >= 19, "only {hits}/20 runs ended near the even mixture");
    }

    #[test]
    fn identical_seed_reproduces_bit_exactly() {
        let spec = swap_mpp();
        let counts = PopulationCounts::new(vec![500, 500]).unwrap();
        let a = simulate_spp(&spec, &counts, 5.0, 0.25, 42).unwrap();
        let b = simulate_spp(&spec, &counts, 5.0, 0.25, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_spp(&spec, &counts, 5.0, 0.25, 43).unwrap();
        assert_ne!(a.trajectory.densities, c.trajectory.densities);
    }

    #[test]
    fn non_stochastic_row_is_reported() {
        let spec = ProtocolSpec::spp(
            states(2),
            vec![crate::protocol::RateExpr::Constant(1.0); 2],
            vec![
                vec![
                    crate::protocol::SwitchExpr::Constant(0.25),
                    crate::protocol::SwitchExpr::Constant(0.25),
                ],
                vec![
                    crate::protocol::SwitchExpr::Constant(0.5),
                    crate::protocol::SwitchExpr::Constant(0.5),
                ],
            ],
        )
        .unwrap();
        let counts = PopulationCounts::new(vec![5, 5]).unwrap();
        let err = simulate_spp(&spec, &counts, 5.0, 1.0, 1).unwrap_err();
        assert!(matches!(err, SimError::NonStochasticRow { .. }), "{err}");
    }

    #[test]
    fn tiny_population_is_rejected() {
        let spec = swap_mpp();
        let counts = PopulationCounts::new(vec![1, 0]).unwrap();
        assert!(matches!(
            simulate_spp(&spec, &counts, 1.0, 0.5, 0),
            Err(SimError::PopulationTooSmall { n: 1 })
        ));
    }

    #[test]
    fn grid_includes_start_and_end() {
        let spec = swap_mpp();
        let counts = PopulationCounts::new(vec![50, 50]).unwrap();
        let run = simulate_spp(&spec, &counts, 2.0, 0.5, 5).unwrap();
        assert_eq!(run.trajectory.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn ensemble_matches_individual_runs() {
        let spec = swap_mpp();
        let counts = PopulationCounts::new(vec![100, 100]).unwrap();
        let seeds: Vec<u64> = (0..8).collect();
        let ensemble = simulate_spp_ensemble(&spec, &counts, 3.0, 0.5, &seeds).unwrap();
        for (s, run) in seeds.iter().zip(&ensemble) {
            let single = simulate_spp(&spec, &counts, 3.0, 0.5, *s).unwrap();
            assert_eq!(run, &single);
        }
    }
}
