//! Closed-form attack probabilities and their Monte Carlo validators.
//!
//! Validators split their trials into fixed-size shards, each driven by a
//! stream derived from one seed drawn from the caller's rng. The estimate is
//! therefore identical under sequential and parallel execution.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::{generate_id, MAX_DISTANCE};
use crate::idpool::min_beats_network_prob;
use crate::par::Execution;
use crate::rng::derived_rng;

/// Smallest distance whose key-generation expectation fits in a `u64`.
pub const MIN_EXACT_KEYGEN_DISTANCE: u16 = 193;
const SHARD_TRIALS: u64 = 4096;

/// Probability that a uniform id lands at log-distance `i` from a fixed id.
pub fn bucket_entry_prob(i: u16) -> Result<f64> {
    if i > MAX_DISTANCE as u16 {
        return Err(Error::param("i", format!("log-distance {i} is above 255")));
    }
    Ok(2f64.powi(i as i32 - 256))
}

/// Expected key generations to hit log-distance `i`, exactly `2^(256 - i)`.
pub fn expected_keygens(i: u16) -> Result<u64> {
    if !(MIN_EXACT_KEYGEN_DISTANCE..=MAX_DISTANCE as u16).contains(&i) {
        return Err(Error::param(
            "i",
            format!("{i} outside {MIN_EXACT_KEYGEN_DISTANCE}..=255"),
        ));
    }
    Ok(1u64 << (256 - i))
}

fn check_order(l: u64, honest: u64) -> Result<()> {
    if l == 0 {
        return Err(Error::param(
            "l",
            "order-statistic index must be at least 1",
        ));
    }
    if l > honest {
        return Err(Error::param(
            "N",
            format!("honest population {honest} is below l = {l}"),
        ));
    }
    Ok(())
}

/// Probability that a single uniform value falls below the `l`-th smallest
/// of `honest` uniform values: `l / (honest + 1)`.
pub fn single_order_stat_prob(l: u64, honest: u64) -> Result<f64> {
    check_order(l, honest)?;
    Ok(l as f64 / (honest as f64 + 1.0))
}

/// `1 - (1 - l/(N+1))^a`: chance that at least one of `adversarial` ids sits
/// below the `l`-th closest honest id, each treated independently.
pub fn findnode_query_prob(l: u64, honest: u64, adversarial: u64) -> Result<f64> {
    let p = single_order_stat_prob(l, honest)?;
    if adversarial == 0 {
        return Ok(0.0);
    }
    if adversarial <= 64 {
        // p * (1 + q + ... + q^(a-1)), free of cancellation for small p.
        let q = 1.0 - p;
        let sum = (1..adversarial).fold(1.0, |acc, _| acc * q + 1.0);
        return Ok(p * sum);
    }
    Ok(-(adversarial as f64 * (-p).ln_1p()).exp_m1())
}

/// Chance that one fresh id beats the minimum of `m` others: `1 / (m + 1)`.
pub fn min_id_single_draw_prob(m: u64) -> f64 {
    1.0 / (m as f64 + 1.0)
}

/// `min_beats_network_prob(m, n)` evaluated along `pool_sizes`.
pub fn min_beats_curve(m: u64, pool_sizes: &[u64]) -> Vec<(u64, f64)> {
    pool_sizes
        .iter()
        .map(|&n| (n, min_beats_network_prob(m, n)))
        .collect()
}

/// Sampling model for the minimum-id validator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdModel {
    /// Real-valued uniforms on [0, 1).
    Continuous,
    /// Full 256-bit ids ranked by xor-distance to a fresh target.
    Discrete256,
}

fn sharded<R, F>(trials: u64, rng: &mut R, exec: Execution, shard: F) -> f64
where
    R: RngCore + ?Sized,
    F: Fn(&mut crate::rng::SimRng, u64) -> u64 + Sync + Send,
{
    if trials == 0 {
        return 0.0;
    }
    let base = rng.next_u64();
    let shards = trials.div_ceil(SHARD_TRIALS);
    let hits = exec.map_range(shards as usize, |s| {
        let count = SHARD_TRIALS.min(trials - s as u64 * SHARD_TRIALS);
        let mut r = derived_rng(base, s as u64);
        shard(&mut r, count)
    });
    hits.into_iter().sum::<u64>() as f64 / trials as f64
}

/// Fraction of trials in which at least one of `adversarial` uniforms falls
/// below the `l`-th smallest of `honest` uniforms.
pub fn mc_validate_findnode<R: RngCore + ?Sized>(
    l: u64,
    honest: u64,
    adversarial: u64,
    trials: u64,
    rng: &mut R,
) -> Result<f64> {
    mc_validate_findnode_with(l, honest, adversarial, trials, rng, Execution::default())
}

pub fn mc_validate_findnode_with<R: RngCore + ?Sized>(
    l: u64,
    honest: u64,
    adversarial: u64,
    trials: u64,
    rng: &mut R,
    exec: Execution,
) -> Result<f64> {
    check_order(l, honest)?;
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    Ok(sharded(trials, rng, exec, |r, count| {
        let mut ys = vec![0f64; honest as usize];
        let mut hits = 0;
        for _ in 0..count {
            ys.iter_mut().for_each(|y| *y = r.random::<f64>());
            let (_, threshold, _) = ys.select_nth_unstable_by(l as usize - 1, f64::total_cmp);
            let threshold = *threshold;
            let mut hit = false;
            for _ in 0..adversarial {
                hit |= r.random::<f64>() < threshold;
            }
            hits += hit as u64;
        }
        hits
    }))
}

/// Fraction of trials in which at least one of `adversarial` uniforms ranks
/// among the `k` smallest of all `honest + adversarial` values, i.e. gets
/// selected into a lookup's initial candidate set.
pub fn mc_validate_findnode_ranked<R: RngCore + ?Sized>(
    k: u64,
    honest: u64,
    adversarial: u64,
    trials: u64,
    rng: &mut R,
    exec: Execution,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "candidate set size must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    let total = (honest + adversarial) as usize;
    Ok(sharded(trials, rng, exec, |r, count| {
        if k as usize >= total {
            return if adversarial > 0 { count } else { 0 };
        }
        // (value, adversarial?)
        let mut vals = vec![(0f64, false); total];
        let mut hits = 0;
        for _ in 0..count {
            for (i, v) in vals.iter_mut().enumerate() {
                *v = (r.random::<f64>(), i >= honest as usize);
            }
            vals.select_nth_unstable_by(k as usize - 1, |a, b| a.0.total_cmp(&b.0));
            hits += vals[..k as usize].iter().any(|v| v.1) as u64;
        }
        hits
    }))
}

/// Fraction of trials in which the closest of `pool` adversarial ids beats
/// the closest of `honest` ids, using continuous uniforms.
pub fn mc_validate_min_id<R: RngCore + ?Sized>(
    honest: u64,
    pool: u64,
    trials: u64,
    rng: &mut R,
) -> Result<f64> {
    mc_validate_min_id_with(
        honest,
        pool,
        trials,
        rng,
        IdModel::Continuous,
        Execution::default(),
    )
}

pub fn mc_validate_min_id_with<R: RngCore + ?Sized>(
    honest: u64,
    pool: u64,
    trials: u64,
    rng: &mut R,
    model: IdModel,
    exec: Execution,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    if pool == 0 {
        return Ok(0.0);
    }
    Ok(sharded(trials, rng, exec, |r, count| {
        let mut hits = 0;
        for _ in 0..count {
            let win = match model {
                IdModel::Continuous => {
                    let x = (0..honest)
                        .map(|_| r.random::<f64>())
                        .fold(f64::INFINITY, f64::min);
                    let y = (0..pool)
                        .map(|_| r.random::<f64>())
                        .fold(f64::INFINITY, f64::min);
                    y < x
                }
                IdModel::Discrete256 => {
                    let target = generate_id(r);
                    let x = (0..honest).map(|_| generate_id(r).xor(&target)).min();
                    let y = (0..pool).map(|_| generate_id(r).xor(&target)).min();
                    match (x, y) {
                        (None, Some(_)) => true,
                        (Some(x), Some(y)) => y < x,
                        _ => false,
                    }
                }
            };
            hits += win as u64;
        }
        hits
    }))
}
