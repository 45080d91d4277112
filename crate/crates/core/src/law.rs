//! Offspring laws and their generating functions.
//!
//! Every generating function is evaluated in complement form
//! `u -> 1 - G(1 - u)`. Extinction probabilities close to one are then
//! represented by small numbers with full relative precision, which keeps the
//! truncated fixed-point iterations meaningful far out in the typeset.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TypeId;

const SUM_TOL: f64 = 1e-12;

/// `1 - (1 - u)^n` without cancellation.
pub fn one_minus_pow(u: f64, n: u32) -> f64 {
    match n {
        0 => 0.0,
        1 => u,
        _ if u >= 1.0 => 1.0,
        _ => -(f64::from(n) * (-u).ln_1p()).exp_m1(),
    }
}

/// Complement of a product: `1 - (1 - a)(1 - b)` computed as `a + b - ab`.
#[inline]
pub fn union_prob(a: f64, b: f64) -> f64 {
    a + b * (1.0 - a)
}

/// Distribution of the number of children placed on one child type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CountLaw {
    Bernoulli {
        p: f64,
    },
    Deterministic {
        n: u32,
    },
    /// Support `{0, 1, 2, ...}` with `P(n) = (1 - t) t^n`, `t = m / (1 + m)`.
    Geometric {
        mean: f64,
    },
    /// Explicit `(count, probability)` pairs.
    Explicit {
        dist: Vec<(u32, f64)>,
    },
}

impl CountLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            CountLaw::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                Err(Error::Validation(format!("Bernoulli parameter {p} outside [0,1]")))
            }
            CountLaw::Geometric { mean } if !(mean.is_finite() && *mean > 0.0) => {
                Err(Error::Validation(format!("geometric mean {mean} must be positive and finite")))
            }
            CountLaw::Explicit { dist } => {
                if dist.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::Validation("negative or non-finite count probability".into()));
                }
                let total: f64 = dist.iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > SUM_TOL {
                    return Err(Error::Validation(format!("count probabilities sum to {total}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CountLaw::Bernoulli { p } => *p,
            CountLaw::Deterministic { n } => f64::from(*n),
            CountLaw::Geometric { mean } => *mean,
            CountLaw::Explicit { dist } => dist.iter().map(|(c, p)| f64::from(*c) * p).sum(),
        }
    }

    /// `P(count = n)`.
    pub fn prob(&self, n: u32) -> f64 {
        match self {
            CountLaw::Bernoulli { p } => match n {
                0 => 1.0 - p,
                1 => *p,
                _ => 0.0,
            },
            CountLaw::Deterministic { n: c } => f64::from(u8::from(*c == n)),
            CountLaw::Geometric { mean } => {
                let theta = mean / (1.0 + mean);
                (1.0 - theta) * theta.powi(n as i32)
            }
            CountLaw::Explicit { dist } => dist.iter().filter(|(c, _)| *c == n).map(|(_, p)| p).sum(),
        }
    }

    /// `1 - f(1 - u)` where `f` is the probability generating function.
    pub fn pgf_complement(&self, u: f64) -> f64 {
        match self {
            CountLaw::Bernoulli { p } => p * u,
            CountLaw::Deterministic { n } => one_minus_pow(u, *n),
            CountLaw::Geometric { mean } => {
                if u <= 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 + 1.0 / (mean * u))
                }
            }
            CountLaw::Explicit { dist } => dist.iter().map(|(c, p)| p * one_minus_pow(u, *c)).sum::<f64>().min(1.0),
        }
    }

    pub fn pgf(&self, s: f64) -> f64 {
        1.0 - self.pgf_complement(1.0 - s)
    }

    /// Total count over `copies` independent draws.
    pub fn sample_sum<R: Rng + ?Sized>(&self, copies: u64, rng: &mut R) -> u64 {
        if copies == 0 {
            return 0;
        }
        match self {
            CountLaw::Bernoulli { p } => binomial(copies, *p, rng),
            CountLaw::Deterministic { n } => copies.saturating_mul(u64::from(*n)),
            CountLaw::Geometric { mean } => {
                if copies <= 16 {
                    let success = 1.0 / (1.0 + mean);
                    match Geometric::new(success) {
                        Ok(g) => (0..copies).fold(0u64, |acc, _| acc.saturating_add(g.sample(rng))),
                        Err(_) => u64::MAX,
                    }
                } else {
                    // Negative binomial as a gamma mixture of Poisson laws.
                    let lambda = Gamma::new(copies as f64, *mean).map_or(f64::INFINITY, |g| g.sample(rng));
                    poisson(lambda, rng)
                }
            }
            CountLaw::Explicit { dist } => {
                let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
                multinomial(copies, &probs, rng)
                    .into_iter()
                    .zip(dist)
                    .fold(0u64, |acc, (k, (c, _))| acc.saturating_add(k.saturating_mul(u64::from(*c))))
            }
        }
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 || n == 0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).map_or(0, |b| b.sample(rng))
    }
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        0
    } else if lambda > 1e15 {
        lambda as u64
    } else {
        Poisson::new(lambda).map_or(u64::MAX, |d| d.sample(rng) as u64)
    }
}

/// Multinomial counts by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = binomial(remaining, cond, rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

/// One component of an independent-product law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountComponent {
    pub child: TypeId,
    #[serde(flatten)]
    pub law: CountLaw,
}

impl CountComponent {
    pub fn new(child: TypeId, law: CountLaw) -> Self {
        CountComponent { child, law }
    }
}

/// One outcome of an explicit joint law.
#[derive(Clone, Debug, PartialEq)]
pub struct JointOutcome {
    pub prob: f64,
    /// Distinct child types with their multiplicities, sorted by type.
    pub children: Vec<(TypeId, u32)>,
}

impl JointOutcome {
    /// Outcome from a multiset given as a list with repetitions.
    pub fn from_multiset(prob: f64, children: impl IntoIterator<Item = TypeId>) -> Self {
        let mut counts: BTreeMap<TypeId, u32> = BTreeMap::new();
        for c in children {
            *counts.entry(c).or_default() += 1;
        }
        JointOutcome { prob, children: counts.into_iter().collect() }
    }

    pub fn total(&self) -> u64 {
        self.children.iter().map(|(_, n)| u64::from(*n)).sum()
    }
}

/// Offspring law of a single type.
#[derive(Clone, Debug, PartialEq)]
pub enum OffspringLaw {
    Joint(Vec<JointOutcome>),
    Product(Vec<CountComponent>),
}

impl OffspringLaw {
    /// Law with no children at all.
    pub fn sterile() -> Self {
        OffspringLaw::Product(Vec::new())
    }

    pub fn joint(outcomes: Vec<JointOutcome>) -> Result<Self> {
        let law = OffspringLaw::Joint(outcomes);
        law.validate()?;
        Ok(law)
    }

    pub fn product(components: Vec<CountComponent>) -> Result<Self> {
        let law = OffspringLaw::Product(components);
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OffspringLaw::Joint(outcomes) => {
                if outcomes.iter().any(|o| !(o.prob.is_finite() && o.prob >= 0.0)) {
                    return Err(Error::Validation("negative or non-finite outcome probability".into()));
                }
                let total: f64 = outcomes.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > SUM_TOL {
                    return Err(Error::Validation(format!("outcome probabilities sum to {total}")));
                }
                Ok(())
            }
            OffspringLaw::Product(components) => {
                let mut seen = std::collections::HashSet::new();
                for c in components {
                    if !seen.insert(&c.child) {
                        return Err(Error::Validation(format!("two components target child type {}", c.child)));
                    }
                    c.law.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Child types that can appear with positive probability.
    pub fn support(&self) -> Vec<TypeId> {
        match self {
            OffspringLaw::Joint(outcomes) => {
                let mut types: Vec<TypeId> = outcomes
                    .iter()
                    .filter(|o| o.prob > 0.0)
                    .flat_map(|o| o.children.iter().filter(|(_, n)| *n > 0).map(|(t, _)| t.clone()))
                    .collect();
                types.sort();
                types.dedup();
                types
            }
            OffspringLaw::Product(components) => {
                components.iter().filter(|c| c.law.mean() > 0.0).map(|c| c.child.clone()).collect()
            }
        }
    }

    /// Expected number of children of type `y`.
    pub fn mean_of(&self, y: &TypeId) -> f64 {
        match self {
            OffspringLaw::Joint(outcomes) => outcomes
                .iter()
                .map(|o| o.prob * o.children.iter().filter(|(t, _)| t == y).map(|(_, n)| f64::from(*n)).sum::<f64>())
                .sum(),
            OffspringLaw::Product(components) => {
                components.iter().filter(|c| &c.child == y).map(|c| c.law.mean()).sum()
            }
        }
    }

    /// `1 - G(s)` where `1 - s_y = u(y)`.
    pub fn pgf_complement(&self, mut u: impl FnMut(&TypeId) -> f64) -> f64 {
        match self {
            OffspringLaw::Joint(outcomes) => outcomes
                .iter()
                .map(|o| o.prob * o.children.iter().fold(0.0, |w, (t, n)| union_prob(w, one_minus_pow(u(t), *n))))
                .sum::<f64>()
                .min(1.0),
            OffspringLaw::Product(components) => {
                components.iter().fold(0.0, |w, c| union_prob(w, c.law.pgf_complement(u(&c.child))))
            }
        }
    }

    /// `G(s)` with `s_y = s(y)`.
    pub fn pgf(&self, mut s: impl FnMut(&TypeId) -> f64) -> f64 {
        1.0 - self.pgf_complement(|t| 1.0 - s(t))
    }

    /// Probability that exactly one child has a type satisfying `in_class`.
    pub fn prob_exactly_one(&self, in_class: impl Fn(&TypeId) -> bool) -> f64 {
        match self {
            OffspringLaw::Joint(outcomes) => outcomes
                .iter()
                .filter(|o| o.children.iter().filter(|(t, _)| in_class(t)).map(|(_, n)| *n).sum::<u32>() == 1)
                .map(|o| o.prob)
                .sum(),
            OffspringLaw::Product(components) => {
                let inside: Vec<&CountLaw> = components.iter().filter(|c| in_class(&c.child)).map(|c| &c.law).collect();
                (0..inside.len())
                    .map(|k| {
                        inside
                            .iter()
                            .enumerate()
                            .map(|(l, law)| if l == k { law.prob(1) } else { law.prob(0) })
                            .product::<f64>()
                    })
                    .sum()
            }
        }
    }

    /// Draws the offspring of `copies` individuals and reports the child
    /// counts per type through `emit`.
    pub fn sample_offspring<R: Rng + ?Sized>(&self, copies: u64, rng: &mut R, mut emit: impl FnMut(&TypeId, u64)) {
        match self {
            OffspringLaw::Joint(outcomes) => {
                let probs: Vec<f64> = outcomes.iter().map(|o| o.prob).collect();
                for (k, o) in multinomial(copies, &probs, rng).into_iter().zip(outcomes) {
                    if k > 0 {
                        for (t, n) in &o.children {
                            emit(t, k.saturating_mul(u64::from(*n)));
                        }
                    }
                }
            }
            OffspringLaw::Product(components) => {
                for c in components {
                    let k = c.law.sample_sum(copies, rng);
                    if k > 0 {
                        emit(&c.child, k);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cubic() -> OffspringLaw {
        let x = TypeId::Int(0);
        OffspringLaw::joint(vec![
            JointOutcome::from_multiset(0.5, []),
            JointOutcome::from_multiset(0.5, [x.clone(), x.clone(), x]),
        ])
        .unwrap()
    }

    #[test]
    fn cubic_pgf_values() {
        let law = cubic();
        assert_eq!(law.pgf(|_| 1.0), 1.0);
        assert_eq!(law.pgf(|_| 0.0), 0.5);
        assert_abs_diff_eq!(law.pgf(|_| 0.5), 0.5 + 0.5 * 0.125, epsilon = 1e-15);
    }

    #[test]
    fn product_of_bernoulli() {
        let law = OffspringLaw::product(vec![CountComponent::new(TypeId::pair(1, 0), CountLaw::Bernoulli { p: 0.5 })])
            .unwrap();
        assert_abs_diff_eq!(law.pgf(|_| 0.6), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn validation_catches_bad_laws() {
        assert!(OffspringLaw::joint(vec![JointOutcome::from_multiset(0.7, [])]).is_err());
        let dup = vec![
            CountComponent::new(TypeId::Int(1), CountLaw::Bernoulli { p: 0.5 }),
            CountComponent::new(TypeId::Int(1), CountLaw::Deterministic { n: 1 }),
        ];
        assert!(OffspringLaw::product(dup).is_err());
        assert!(CountLaw::Geometric { mean: 0.0 }.validate().is_err());
        assert!(CountLaw::Bernoulli { p: 1.2 }.validate().is_err());
    }

    #[test]
    fn geometric_tail_matches_parameterisation() {
        let m = 2.5;
        let law = CountLaw::Geometric { mean: m };
        assert_abs_diff_eq!(1.0 - law.prob(0), m / (1.0 + m), epsilon = 1e-15);
        let mean: f64 = (0..2000).map(|n| f64::from(n) * law.prob(n)).sum();
        assert_abs_diff_eq!(mean, m, epsilon = 1e-9);
    }

    #[test]
    fn exactly_one_probability() {
        let law = cubic();
        assert_eq!(law.prob_exactly_one(|_| true), 0.0);
        let single =
            OffspringLaw::product(vec![CountComponent::new(TypeId::Int(0), CountLaw::Deterministic { n: 1 })]).unwrap();
        assert_eq!(single.prob_exactly_one(|_| true), 1.0);
        let two = OffspringLaw::product(vec![
            CountComponent::new(TypeId::Int(0), CountLaw::Bernoulli { p: 0.5 }),
            CountComponent::new(TypeId::Int(1), CountLaw::Bernoulli { p: 0.5 }),
        ])
        .unwrap();
        assert_abs_diff_eq!(two.prob_exactly_one(|_| true), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = multinomial(1000, &[0.2, 0.3, 0.5], &mut rng);
        assert_eq!(counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn aggregated_geometric_has_right_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let law = CountLaw::Geometric { mean: 1.5 };
        let draws = 4000u64;
        let total: u64 = (0..draws).map(|_| law.sample_sum(50, &mut rng)).sum();
        let mean = total as f64 / (draws * 50) as f64;
        assert!((mean - 1.5).abs() < 0.03, "{mean}");
    }

    proptest! {
        #[test]
        fn geometric_closed_form(m in 1e-3f64..1e3, s in 0.0f64..=1.0) {
            let law = CountLaw::Geometric { mean: m };
            prop_assert!((law.pgf(s) - 1.0 / (1.0 + m * (1.0 - s))).abs() < 1e-14);
        }

        #[test]
        fn one_minus_pow_matches_direct(u in 0.0f64..=1.0, n in 0u32..20) {
            prop_assert!((one_minus_pow(u, n) - (1.0 - (1.0 - u).powi(n as i32))).abs() < 1e-14);
        }

        #[test]
        fn explicit_pgf_is_monotone(
            w in proptest::collection::vec(0.01f64..1.0, 1..5),
            a in 0.0f64..=1.0, b in 0.0f64..=1.0,
        ) {
            let total: f64 = w.iter().sum();
            let dist: Vec<(u32, f64)> = w.iter().enumerate().map(|(k, p)| (k as u32, p / total)).collect();
            let law = CountLaw::Explicit { dist };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(law.pgf(lo) <= law.pgf(hi) + 1e-15);
        }

        #[test]
        fn joint_mean_is_derivative(
            w in proptest::collection::vec(0.01f64..1.0, 1..5),
            sizes in proptest::collection::vec(0usize..4, 5),
        ) {
            let total: f64 = w.iter().sum();
            let x = TypeId::Int(0);
            let outcomes = w.iter().zip(&sizes)
                .map(|(p, n)| JointOutcome::from_multiset(p / total, std::iter::repeat_n(x.clone(), *n)))
                .collect();
            let law = OffspringLaw::joint(outcomes).unwrap();
            let h = 1e-4;
            let slope = (law.pgf(|_| 1.0 + h) - law.pgf(|_| 1.0 - h)) / (2.0 * h);
            prop_assert!((slope - law.mean_of(&x)).abs() < 1e-6);
        }
    }
}
