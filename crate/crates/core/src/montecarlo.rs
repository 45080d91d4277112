//! Simulation of branching trajectories and Monte Carlo estimates of
//! extinction and avoidance events.
//!
//! A trajectory is evolved generation by generation with the population
//! stored as counts per type; the offspring of all individuals of a type are
//! drawn in one aggregated step. Trial `t` draws from the ChaCha8 stream `t`
//! of the master seed, and estimates do not depend on the number of worker
//! threads.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::law::OffspringLaw;
use crate::process::ProcessSpec;
use crate::subset::SubsetSpec;
use crate::types::TypeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MCConfig {
    pub trials: u64,
    /// Maximum number of generations per trajectory.
    pub horizon: u32,
    /// Largest generation size before a run is stopped.
    pub population_cap: u64,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig { trials: 10_000, horizon: 200, population_cap: 100_000, seed: 0x5eed_2024, ci_level: 0.95 }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.horizon == 0 || self.population_cap == 0 {
            return Err(Error::Validation("trials, horizon and population cap must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Validation(format!("confidence level {} must lie in (0,1)", self.ci_level)));
        }
        Ok(())
    }
}

/// How a trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Extinct,
    CapExceeded,
    Horizon,
    /// Stopped at the first visit to `B` because the event was decided.
    VisitedB,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrajectorySummary {
    pub generations_run: u32,
    /// First generation from which no individual in `A` was alive until the
    /// end of the run.
    pub extinct_in_a_at: Option<u32>,
    pub visited_b: bool,
    pub terminal: Terminal,
    pub population_last: u64,
    pub a_in_last: u64,
    pub b_in_last: u64,
}

/// Events whose probability can be estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// Extinction in `A`.
    ExtinctA,
    /// Survival in `A` without ever visiting `B`.
    SurviveANeverVisitB,
    /// Survival in `A` together with extinction in `B`.
    SurviveAExtinctB,
    /// `B` is never visited.
    NeverVisitB,
}

impl Event {
    fn stops_at_b(self) -> bool {
        matches!(self, Event::SurviveANeverVisitB | Event::NeverVisitB)
    }
}

/// Point estimate with a Wilson score interval.
///
/// Runs stopped at the horizon or the population cap without a decision
/// are *censored*: they enter `point` through the heuristic classification
/// and are bracketed by `pessimistic_low` (all censored runs count as
/// failures) and `optimistic_high` (all count as successes).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub successes: u64,
    pub censored: u64,
    pub censored_fraction: f64,
    pub pessimistic_low: f64,
    pub optimistic_high: f64,
    pub std_error: f64,
}

impl MCEstimate {
    /// Whether `value` lies within `k` standard errors of the point
    /// estimate, using `value`'s own binomial standard error.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        let n = self.trials as f64;
        let sigma = (value * (1.0 - value) / n).sqrt().max(1.0 / n);
        (self.point - value).abs() <= k * sigma
    }
}

/// Writes estimates as CSV, one row per estimate, with a header.
pub fn write_estimates_csv<W: std::io::Write>(out: W, estimates: &[MCEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "point",
        "ci_low",
        "ci_high",
        "trials",
        "successes",
        "censored",
        "censored_fraction",
        "pessimistic_low",
        "optimistic_high",
    ])?;
    for e in estimates {
        w.write_record([
            e.point.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.trials.to_string(),
            e.successes.to_string(),
            e.censored.to_string(),
            e.censored_fraction.to_string(),
            e.pessimistic_low.to_string(),
            e.optimistic_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wilson score interval for `successes` out of `n` at confidence `level`.
pub fn wilson_interval(successes: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

struct TypeInfo {
    law: OffspringLaw,
    in_a: bool,
    in_b: bool,
}

struct Simulator<'a> {
    spec: &'a ProcessSpec,
    a: &'a SubsetSpec,
    b: Option<&'a SubsetSpec>,
    cache: HashMap<TypeId, TypeInfo>,
}

impl<'a> Simulator<'a> {
    fn info(&mut self, t: &TypeId) -> Result<&TypeInfo> {
        if !self.cache.contains_key(t) {
            let info = TypeInfo {
                law: self.spec.law(t)?,
                in_a: self.a.contains(t),
                in_b: self.b.is_some_and(|b| b.contains(t)),
            };
            self.cache.insert(t.clone(), info);
        }
        Ok(&self.cache[t])
    }

    fn census(&mut self, population: &BTreeMap<TypeId, u64>) -> Result<(u64, u64, u64)> {
        let (mut total, mut in_a, mut in_b) = (0u64, 0u64, 0u64);
        for (t, &n) in population {
            let info = self.info(t)?;
            total = total.saturating_add(n);
            if info.in_a {
                in_a = in_a.saturating_add(n);
            }
            if info.in_b {
                in_b = in_b.saturating_add(n);
            }
        }
        Ok((total, in_a, in_b))
    }

    fn run(
        &mut self,
        initial: &TypeId,
        mc: &MCConfig,
        stop_at_b: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrajectorySummary> {
        self.spec.check_type(initial)?;
        let mut population = BTreeMap::from([(initial.clone(), 1u64)]);
        let (mut total, mut in_a, mut in_b) = self.census(&population)?;
        let mut visited_b = in_b > 0;
        let mut last_a_alive: Option<u32> = (in_a > 0).then_some(0);
        let mut generation = 0u32;
        let terminal = loop {
            if stop_at_b && visited_b {
                break Terminal::VisitedB;
            }
            if total == 0 {
                break Terminal::Extinct;
            }
            if total > mc.population_cap {
                break Terminal::CapExceeded;
            }
            if generation >= mc.horizon {
                break Terminal::Horizon;
            }
            let mut next: BTreeMap<TypeId, u64> = BTreeMap::new();
            for (t, &n) in &population {
                let info = self.info(t)?;
                info.law.sample_offspring(n, rng, |child, k| {
                    let slot = next.entry(child.clone()).or_insert(0);
                    *slot = slot.saturating_add(k);
                });
            }
            population = next;
            generation += 1;
            (total, in_a, in_b) = self.census(&population)?;
            visited_b |= in_b > 0;
            if in_a > 0 {
                last_a_alive = Some(generation);
            }
        };
        let extinct_in_a_at = if in_a == 0 { Some(last_a_alive.map_or(0, |g| g + 1)) } else { None };
        Ok(TrajectorySummary {
            generations_run: generation,
            extinct_in_a_at,
            visited_b,
            terminal,
            population_last: total,
            a_in_last: in_a,
            b_in_last: in_b,
        })
    }
}

fn stream_rng(mc: &MCConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(stream);
    rng
}

/// Runs one trajectory from a single individual of type `initial`, drawing
/// from stream `stream` of the configured seed.
pub fn simulate_trajectory(
    spec: &ProcessSpec,
    initial: &TypeId,
    a: &SubsetSpec,
    b: Option<&SubsetSpec>,
    mc: &MCConfig,
    stream: u64,
) -> Result<TrajectorySummary> {
    mc.validate()?;
    let mut sim = Simulator { spec, a, b, cache: HashMap::new() };
    sim.run(initial, mc, false, &mut stream_rng(mc, stream))
}

/// Classification of one run: whether the event is counted, and whether the
/// decision is heuristic.
fn classify(event: Event, s: &TrajectorySummary) -> (bool, bool) {
    let survived_a = s.a_in_last > 0;
    match (event, s.terminal) {
        (Event::ExtinctA, Terminal::Extinct) => (true, false),
        (Event::ExtinctA, Terminal::CapExceeded) if survived_a => (false, false),
        (Event::ExtinctA, _) => (!survived_a, true),

        (Event::NeverVisitB, Terminal::VisitedB) => (false, false),
        (Event::NeverVisitB, Terminal::Extinct) => (!s.visited_b, false),
        (Event::NeverVisitB, _) => (!s.visited_b, true),

        (Event::SurviveANeverVisitB, Terminal::VisitedB | Terminal::Extinct) => (false, false),
        (Event::SurviveANeverVisitB, Terminal::CapExceeded) if survived_a => (true, false),
        (Event::SurviveANeverVisitB, _) => (survived_a, true),

        (Event::SurviveAExtinctB, Terminal::Extinct) => (false, false),
        (Event::SurviveAExtinctB, _) => (survived_a && s.b_in_last == 0, true),
    }
}

/// Estimates the probability of `event` for a process started from one
/// individual of type `x`.
pub fn estimate_event(
    spec: &ProcessSpec,
    x: &TypeId,
    event: Event,
    a: &SubsetSpec,
    b: Option<&SubsetSpec>,
    mc: &MCConfig,
) -> Result<MCEstimate> {
    mc.validate()?;
    spec.check_type(x)?;
    if event != Event::ExtinctA && b.is_none() {
        return Err(Error::Validation(format!("event {event:?} needs a set B")));
    }
    let stop_at_b = event.stops_at_b();
    let outcomes: Vec<(bool, bool)> = (0..mc.trials)
        .into_par_iter()
        .map_init(
            || Simulator { spec, a, b, cache: HashMap::new() },
            |sim, trial| sim.run(x, mc, stop_at_b, &mut stream_rng(mc, trial)).map(|s| classify(event, &s)),
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise(&outcomes, mc))
}

fn summarise(outcomes: &[(bool, bool)], mc: &MCConfig) -> MCEstimate {
    let n = outcomes.len() as u64;
    let successes = outcomes.iter().filter(|(hit, _)| *hit).count() as u64;
    let censored = outcomes.iter().filter(|(_, heuristic)| *heuristic).count() as u64;
    let resolved_hits = outcomes.iter().filter(|(hit, heuristic)| *hit && !*heuristic).count() as u64;
    let point = successes as f64 / n as f64;
    let (ci_low, ci_high) = wilson_interval(successes, n, mc.ci_level);
    let (pessimistic_low, _) = wilson_interval(resolved_hits, n, mc.ci_level);
    let (_, optimistic_high) = wilson_interval(resolved_hits + censored, n, mc.ci_level);
    MCEstimate {
        point,
        ci_low,
        ci_high,
        trials: n,
        successes,
        censored,
        censored_fraction: censored as f64 / n as f64,
        pessimistic_low,
        optimistic_high,
        std_error: (point * (1.0 - point) / n as f64).sqrt(),
    }
}

/// Estimate of `q_x(A)`.
pub fn estimate_extinction(spec: &ProcessSpec, x: &TypeId, a: &SubsetSpec, mc: &MCConfig) -> Result<MCEstimate> {
    estimate_event(spec, x, Event::ExtinctA, a, None, mc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{CountComponent, CountLaw, JointOutcome};

    fn single(law: OffspringLaw) -> ProcessSpec {
        ProcessSpec::finite("single", vec![(TypeId::Int(0), law)]).unwrap()
    }

    fn cubic() -> ProcessSpec {
        let x = TypeId::Int(0);
        single(
            OffspringLaw::joint(vec![
                JointOutcome::from_multiset(0.5, []),
                JointOutcome::from_multiset(0.5, vec![x; 3]),
            ])
            .unwrap(),
        )
    }

    fn small(trials: u64) -> MCConfig {
        MCConfig { trials, ..MCConfig::default() }
    }

    #[test]
    fn trivial_trajectories() {
        let x = TypeId::Int(0);
        let all = SubsetSpec::all();
        let dead = single(OffspringLaw::sterile());
        let s = simulate_trajectory(&dead, &x, &all, None, &small(1), 0).unwrap();
        assert_eq!((s.terminal, s.generations_run, s.extinct_in_a_at), (Terminal::Extinct, 1, Some(1)));

        let line = single(
            OffspringLaw::product(vec![CountComponent::new(x.clone(), CountLaw::Deterministic { n: 1 })]).unwrap(),
        );
        let s = simulate_trajectory(&line, &x, &all, None, &small(1), 0).unwrap();
        assert_eq!((s.terminal, s.generations_run, s.extinct_in_a_at), (Terminal::Horizon, 200, None));
    }

    #[test]
    fn cubic_extinction_fraction() {
        let est = estimate_extinction(&cubic(), &TypeId::Int(0), &SubsetSpec::all(), &small(10_000)).unwrap();
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((est.point - golden).abs() < 0.015, "{est:?}");
        assert!(est.ci_low <= est.point && est.point <= est.ci_high);
    }

    #[test]
    fn subcritical_dies() {
        let x = TypeId::Int(0);
        let spec = single(
            OffspringLaw::product(vec![CountComponent::new(x.clone(), CountLaw::Bernoulli { p: 0.25 })]).unwrap(),
        );
        let est = estimate_extinction(&spec, &x, &SubsetSpec::all(), &small(10_000)).unwrap();
        assert_eq!(est.point, 1.0);
        assert!(est.ci_low > 0.99);
        assert_eq!(est.censored, 0);
    }

    #[test]
    fn same_set_event_is_impossible() {
        let a = SubsetSpec::all();
        let est =
            estimate_event(&cubic(), &TypeId::Int(0), Event::SurviveAExtinctB, &a, Some(&a), &small(2_000)).unwrap();
        assert_eq!(est.successes, 0);
    }

    #[test]
    fn never_visit_single_bernoulli() {
        let (x, y) = (TypeId::Int(1), TypeId::Int(2));
        let spec = ProcessSpec::finite(
            "two",
            vec![
                (
                    x.clone(),
                    OffspringLaw::product(vec![CountComponent::new(y.clone(), CountLaw::Bernoulli { p: 0.3 })])
                        .unwrap(),
                ),
                (y.clone(), OffspringLaw::sterile()),
            ],
        )
        .unwrap();
        let b = SubsetSpec::singleton(y);
        let est = estimate_event(&spec, &x, Event::NeverVisitB, &SubsetSpec::all(), Some(&b), &small(10_000)).unwrap();
        assert!((est.point - 0.7).abs() < 0.015);
        assert_eq!(est.censored, 0);
    }

    #[test]
    fn reproducible_streams() {
        let spec = cubic();
        let mc = small(500);
        let a = estimate_extinction(&spec, &TypeId::Int(0), &SubsetSpec::all(), &mc).unwrap();
        let b = estimate_extinction(&spec, &TypeId::Int(0), &SubsetSpec::all(), &mc).unwrap();
        assert_eq!(a, b);
        let s1 = simulate_trajectory(&spec, &TypeId::Int(0), &SubsetSpec::all(), None, &mc, 7).unwrap();
        let s2 = simulate_trajectory(&spec, &TypeId::Int(0), &SubsetSpec::all(), None, &mc, 7).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn wilson_brackets() {
        let (lo, hi) = wilson_interval(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        let (lo, hi) = wilson_interval(50, 100, 0.95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn invalid_config() {
        let mc = MCConfig { trials: 0, ..MCConfig::default() };
        assert!(estimate_extinction(&cubic(), &TypeId::Int(0), &SubsetSpec::all(), &mc).is_err());
    }
}
