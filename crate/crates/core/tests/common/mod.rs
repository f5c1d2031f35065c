//! Seeded instance generators shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use contract_forge::model::{DiscreteTypes, Tabulation};
use contract_forge::rational::{int, ratio};
use contract_forge::{validate_instance, Instance, Rational, RawInstance, TypeSpace};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Integer rewards and strictly increasing integer efforts; effortful
/// distributions have denominators up to 12 and never hit outcome 0.
pub fn random_actions(rng: &mut impl Rng, n: usize, m: usize) -> RawInstance {
    let mut rewards = vec![int(0)];
    for _ in 0..m {
        let last = rewards.last().unwrap().clone();
        rewards.push(last + int(rng.gen_range(1..=8)));
    }
    let mut gammas = vec![int(0)];
    for _ in 0..n {
        let last = gammas.last().unwrap().clone();
        gammas.push(last + int(rng.gen_range(1..=3)));
    }
    let mut opt_out = vec![int(0); m + 1];
    opt_out[0] = int(1);
    let mut rows: Vec<Vec<Rational>> = (0..n)
        .map(|_| loop {
            let w: Vec<i64> = (0..m).map(|_| rng.gen_range(0..=4)).collect();
            let total: i64 = w.iter().sum();
            if total > 0 {
                let mut row = vec![int(0)];
                row.extend(w.iter().map(|&x| ratio(x, total)));
                break row;
            }
        })
        .collect();
    let expected =
        |row: &Vec<Rational>| -> Rational { row.iter().zip(&rewards).map(|(p, r)| p * r).sum() };
    rows.sort_by_key(expected);
    let mut dist = vec![opt_out];
    dist.extend(rows);
    RawInstance {
        gammas,
        rewards,
        dist,
        types: TypeSpace::Uniform { upper: int(1) },
    }
}

/// Random instance with `n <= max_actions`, `m <= max_outcomes` and at most
/// `max_types` support points among the halves `1/2, 1, ..., 4`.
pub fn random_discrete(
    seed: u64,
    max_actions: usize,
    max_outcomes: usize,
    max_types: usize,
) -> Instance {
    let mut rng = rng(seed);
    loop {
        let n = rng.gen_range(1..=max_actions);
        let m = rng.gen_range(1..=max_outcomes);
        let k = rng.gen_range(1..=max_types);
        let raw = random_actions(&mut rng, n, m);
        let mut points: Vec<i64> = (1..=8).collect();
        for i in (1..points.len()).rev() {
            points.swap(i, rng.gen_range(0..=i));
        }
        let mut support = points[..k].to_vec();
        support.sort_unstable();
        let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
        let total: i64 = weights.iter().sum();
        let types = TypeSpace::Discrete(DiscreteTypes {
            support: support.iter().map(|&c| ratio(c, 2)).collect(),
            masses: weights.iter().map(|&w| ratio(w, total)).collect(),
        });
        if let Ok(inst) = validate_instance(RawInstance { types, ..raw }) {
            return inst;
        }
    }
}

/// Random action side with costs uniform on `[0, c̄]` and `γ_i c̄ > R_i` for
/// every effortful action.
pub fn random_uniform(seed: u64, max_actions: usize, max_outcomes: usize) -> Instance {
    let mut rng = rng(seed);
    loop {
        let n = rng.gen_range(1..=max_actions);
        let m = rng.gen_range(1..=max_outcomes);
        let raw = random_actions(&mut rng, n, m);
        if let Some(inst) = with_uniform_costs(&mut rng, raw) {
            return inst;
        }
    }
}

/// Three effortful actions where action 2 mixes the outcome distributions of
/// its neighbours but costs more effort than the mixture.
pub fn random_uniform_dominated(seed: u64) -> Instance {
    let mut rng = rng(seed);
    loop {
        let m = rng.gen_range(2..=3);
        let mut raw = random_actions(&mut rng, 3, m);
        raw.dist[2] = raw.dist[1]
            .iter()
            .zip(&raw.dist[3])
            .map(|(a, b)| (a + b) / int(2))
            .collect();
        raw.gammas[2] = (&raw.gammas[1] + int(3) * &raw.gammas[3]) / int(4);
        if let Some(inst) = with_uniform_costs(&mut rng, raw) {
            return inst;
        }
    }
}

fn with_uniform_costs(rng: &mut impl Rng, raw: RawInstance) -> Option<Instance> {
    let probe = validate_instance(raw.clone()).ok()?;
    let bound = (1..probe.num_actions())
        .map(|i| &probe.expected_rewards()[i] / probe.gamma(i))
        .max()?;
    let upper = bound.floor() + int(rng.gen_range(1..=4));
    validate_instance(RawInstance {
        types: TypeSpace::Uniform { upper },
        ..raw
    })
    .ok()
}

/// Nearest multiple of 10^-12.
pub fn approx(x: f64) -> Rational {
    let scale = 1_000_000_000_000i64;
    Rational::new(
        BigInt::from((x * scale as f64).round() as i64),
        BigInt::from(scale),
    )
}

/// Unit-rate exponential costs truncated at 5, tabulated every 1/4 up to 4.
pub fn exponential_tabulation() -> TypeSpace {
    let mut grid: Vec<f64> = (0..=16).map(|k| f64::from(k) / 4.0).collect();
    grid.push(5.0);
    TypeSpace::Tabulated(Tabulation {
        grid: grid.iter().map(|&c| approx(c)).collect(),
        cdf: grid
            .iter()
            .map(|&c| {
                if c == 5.0 {
                    int(1)
                } else {
                    approx(1.0 - (-c).exp())
                }
            })
            .collect(),
        density: grid.iter().map(|&c| approx((-c).exp())).collect(),
    })
}

pub fn running_raw() -> RawInstance {
    RawInstance {
        gammas: vec![int(0), int(1), int(3), int(10)],
        rewards: vec![int(0), int(10), int(30)],
        dist: vec![
            vec![int(1), int(0), int(0)],
            vec![int(0), int(1), int(0)],
            vec![int(0), ratio(1, 2), ratio(1, 2)],
            vec![int(0), int(0), int(1)],
        ],
        types: TypeSpace::Discrete(DiscreteTypes {
            support: vec![int(1), int(4)],
            masses: vec![ratio(1, 2), ratio(1, 2)],
        }),
    }
}

pub fn running() -> Instance {
    validate_instance(running_raw()).unwrap()
}

pub fn uniform_running() -> Instance {
    validate_instance(RawInstance {
        types: TypeSpace::Uniform { upper: int(12) },
        ..running_raw()
    })
    .unwrap()
}

pub fn high_reward() -> Instance {
    validate_instance(RawInstance {
        rewards: vec![int(0), int(20), int(35)],
        types: TypeSpace::Discrete(DiscreteTypes {
            support: vec![int(1), int(3)],
            masses: vec![ratio(1, 2), ratio(1, 2)],
        }),
        ..running_raw()
    })
    .unwrap()
}
