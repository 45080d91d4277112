#![allow(dead_code)]

use extinction_core::{JointOutcome, OffspringLaw, ProcessSpec, SubsetSpec, TypeId, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Finite process on `1..=max_types` integer types with up to four joint
/// outcomes per type, each with at most three children.
pub fn random_spec<R: Rng>(rng: &mut R, max_types: usize) -> ProcessSpec {
    let n = rng.random_range(1..=max_types);
    let laws = (0..n)
        .map(|x| {
            let k = rng.random_range(1..=4);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let outcomes = weights
                .iter()
                .map(|w| {
                    let size = rng.random_range(0..=3);
                    let children: Vec<TypeId> = (0..size).map(|_| TypeId::Int(rng.random_range(0..n) as u64)).collect();
                    JointOutcome::from_multiset(w / total, children)
                })
                .collect();
            (TypeId::Int(x as u64), OffspringLaw::joint(outcomes).unwrap())
        })
        .collect();
    ProcessSpec::finite("random", laws).unwrap()
}

pub fn all_types(spec: &ProcessSpec) -> Window {
    Window::initial(spec.typeset(), spec.typeset().len().unwrap())
}

/// Random spec that passes the non-singularity check.
pub fn random_non_singular<R: Rng>(rng: &mut R, max_types: usize) -> ProcessSpec {
    loop {
        let spec = random_spec(rng, max_types);
        if spec.is_non_singular(&all_types(&spec)).unwrap().non_singular {
            return spec;
        }
    }
}

/// Subset of the integer types `0..n` given by the bits of `mask`.
pub fn mask_subset(n: usize, mask: u64) -> SubsetSpec {
    let members: Vec<TypeId> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| TypeId::Int(i as u64)).collect();
    SubsetSpec::finite(format!("mask{mask:b}"), members)
}

/// Acyclic graph on `n` vertices: edges only go from lower to higher index
/// after a random relabelling.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize) -> (Vec<String>, Vec<(usize, usize)>) {
    let density = rng.random_range(0.0..0.6);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                edges.push((order[a], order[b]));
            }
        }
    }
    ((1..=n).map(|i| i.to_string()).collect(), edges)
}
