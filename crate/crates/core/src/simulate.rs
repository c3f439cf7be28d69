//! Continuous-time Monte Carlo simulation of the level-N dynamics and
//! statistical validation of stationarity.
//!
//! The generator is SplitMix64, a counter-based 64-bit generator (state
//! advances by a fixed odd constant, output is an avalanche mix of the
//! counter). Per-path streams are derived as
//! `SplitMix64::new(mix64(seed) ^ mix64(path_index + 1))`, so paths are
//! independent and the aggregate is deterministic for a fixed seed
//! regardless of scheduling. Rates are recomputed at every event; visited
//! states are sparse and unbounded so there is nothing to cache.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::dynamics::rate_row;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::semigroup::{p1_semigroup, pn_entry};
use crate::sig::Signature;
use crate::specfun::gamma_q;
use crate::zmeasure::MeasureTable;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 avalanche mixer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based 64-bit generator (SplitMix64).
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Exponential holding time with the given rate (inverse CDF of
    /// `1 − U`, which never takes the log of zero).
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        -(1.0 - self.next_f64()).ln() / rate
    }
}

/// Independent stream for one path of a seeded ensemble.
pub fn path_stream(seed: u64, path_index: u64) -> SplitMix64 {
    SplitMix64::new(mix64(seed) ^ mix64(path_index.wrapping_add(1)))
}

/// One simulated trajectory: initial state, `(time, coordinate, ±1)`
/// events, final state.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub initial: Signature,
    pub events: Vec<(f64, usize, i8)>,
    pub final_state: Signature,
}

/// Guard against runaway event counts.
pub const MAX_EVENTS: u64 = 10_000_000;

/// Categorical sample from the renormalized truncated table.
pub fn sample_initial(table: &MeasureTable, rng: &mut SplitMix64) -> Signature {
    let total = table.total_mass();
    let r = rng.next_f64() * total;
    let mut acc = 0.0;
    for (sig, p) in &table.entries {
        acc += p;
        if r < acc {
            return sig.clone();
        }
    }
    table.entries.last().unwrap().0.clone()
}

/// Gillespie path: exponential holding times with the state's total jump
/// rate, next move proportional among the admissible `±e_k` moves.
pub fn gillespie_path(
    initial: &Signature,
    t_end: f64,
    params: &Params,
    rng: &mut SplitMix64,
) -> Result<Trajectory> {
    let n = initial.level();
    let (u, up) = params.level_shift(n);
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        if events.len() as u64 >= MAX_EVENTS {
            return Err(Error::StepGuard {
                events: events.len() as u64,
            });
        }
        let row = rate_row(&state, u, up, params.a, params.b)?;
        let total = row.total_rate();
        debug_assert!(total > 0.0, "no admissible move at {state}");
        t += rng.exp(total);
        if t >= t_end {
            break;
        }
        let mut r = rng.next_f64() * total;
        let mut chosen: Option<(usize, i8)> = None;
        for (k, rate) in &row.up {
            if r < *rate {
                chosen = Some((*k, 1));
                break;
            }
            r -= rate;
        }
        if chosen.is_none() {
            for (k, rate) in &row.down {
                if r < *rate {
                    chosen = Some((*k, -1));
                    break;
                }
                r -= rate;
            }
        }
        // numerical edge: fall back to the last admissible move
        let (k, dir) = chosen.unwrap_or_else(|| {
            row.down
                .last()
                .map(|(k, _)| (*k, -1))
                .or_else(|| row.up.last().map(|(k, _)| (*k, 1)))
                .unwrap()
        });
        state = state
            .bump(k, i32::from(dir))
            .expect("admissible move produced an invalid signature");
        events.push((t, k, dir));
    }
    Ok(Trajectory {
        initial: initial.clone(),
        events,
        final_state: state,
    })
}

/// Histogram of end states over a parallel ensemble, merged associatively.
fn ensemble_histogram<F>(
    paths: u64,
    seed: u64,
    make_initial: F,
    t_end: f64,
    params: &Params,
) -> Result<BTreeMap<Signature, u64>>
where
    F: Fn(&mut SplitMix64) -> Signature + Sync,
{
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_stream(seed, i);
            let init = make_initial(&mut rng);
            let traj = gillespie_path(&init, t_end, params, &mut rng)?;
            let mut h = BTreeMap::new();
            h.insert(traj.final_state, 1u64);
            Ok(h)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            Ok(a)
        })
}

/// Report of a stationarity experiment.
#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub tv_distance: f64,
    pub chi2: f64,
    pub pvalue: f64,
    pub bins: usize,
    pub leaked_tail: f64,
    pub paths: u64,
}

/// Start from the truncated measure, evolve to time `t`, compare the end
/// distribution to the measure (total variation and χ² with tail-merged
/// bins).
pub fn stationarity_experiment(
    params: &Params,
    n: usize,
    t: f64,
    paths: u64,
    l: u32,
    seed: u64,
) -> Result<StationarityReport> {
    params.require_h()?;
    let table = crate::zmeasure::measure_table(params, n, l)?;
    if table.total_mass() < 1.0 - 1e-6 {
        return Err(Error::domain(format!(
            "truncated table mass {} < 1 - 1e-6; increase the truncation",
            table.total_mass()
        )));
    }
    let hist = ensemble_histogram(paths, seed, |rng| sample_initial(&table, rng), t, params)?;
    Ok(compare_histogram(&table.entries, hist, paths))
}

fn compare_histogram(
    model: &[(Signature, f64)],
    hist: BTreeMap<Signature, u64>,
    paths: u64,
) -> StationarityReport {
    let pf = paths as f64;
    let model_mass: f64 = model.iter().map(|(_, p)| p).sum();
    // TV over the model support plus one tail bin
    let mut tv = 0.0;
    let mut observed_on_model = 0u64;
    for (sig, p) in model {
        let obs = hist.get(sig).copied().unwrap_or(0);
        observed_on_model += obs;
        tv += (obs as f64 / pf - p).abs();
    }
    let tail_model = (1.0 - model_mass).max(0.0);
    let tail_obs = (paths - observed_on_model) as f64 / pf;
    tv = 0.5 * (tv + (tail_obs - tail_model).abs());
    // χ²: bins with expected count >= 5 kept, the rest merged into a tail
    let mut chi2 = 0.0;
    let mut bins = 0usize;
    let mut tail_exp = tail_model * pf;
    let mut tail_count = paths - observed_on_model;
    for (sig, p) in model {
        let exp = p * pf;
        let obs = hist.get(sig).copied().unwrap_or(0);
        if exp >= 5.0 {
            chi2 += (obs as f64 - exp).powi(2) / exp;
            bins += 1;
        } else {
            tail_exp += exp;
            tail_count += obs;
        }
    }
    if tail_exp >= 5.0 {
        chi2 += (tail_count as f64 - tail_exp).powi(2) / tail_exp;
        bins += 1;
    }
    let df = (bins.max(2) - 1) as f64;
    let pvalue = gamma_q(df / 2.0, chi2 / 2.0);
    StationarityReport {
        tv_distance: tv,
        chi2,
        pvalue,
        bins,
        leaked_tail: tail_obs,
        paths,
    }
}

/// Empirical end distribution from a fixed start against the
/// Karlin–McGregor row.
pub fn km_crosscheck(
    params: &Params,
    t: f64,
    paths: u64,
    from: &Signature,
    l: u32,
    seed: u64,
) -> Result<StationarityReport> {
    params.require_h()?;
    let n = from.level();
    let (u, up) = params.level_shift(n);
    let hist = ensemble_histogram(paths, seed, |_| from.clone(), t, params)?;
    let p1 = p1_semigroup(t, u, up, params.a, params.b, l)?;
    let model: Vec<(Signature, f64)> = crate::sig::enumerate_level(n, l / 2)
        .into_iter()
        .map(|nu| {
            let p = pn_entry(&p1, from, &nu, u, up, params.epsilon(), params.b).max(0.0);
            (nu, p)
        })
        .collect();
    Ok(compare_histogram(&model, hist, paths))
}
