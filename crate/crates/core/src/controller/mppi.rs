use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vehicle::{rollout, Control, VehicleState};

use super::config::PlannerConfig;
use super::cost::{stage_cost, CostContext};

/// Words of keystream reserved per sample; far more than one tape needs.
const WORDS_PER_SAMPLE: u128 = 4096;

/// Result of one MPPI iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan<T> {
    pub controls: Vec<Control<T>>,
    /// States after each control.
    pub states: Vec<VehicleState<T>>,
    /// Lowest sampled cost.
    pub min_cost: T,
    /// `1 / sum w_k^2` of the normalized weights.
    pub effective_samples: T,
}

/// Drops the first control and repeats the last, for warm starting.
pub fn shift_tape<T: Real>(tape: &[Control<T>]) -> Vec<Control<T>> {
    match tape.split_first() {
        None => Vec::new(),
        Some((_, [])) => tape.to_vec(),
        Some((_, rest)) => {
            let mut out = rest.to_vec();
            out.push(*rest.last().unwrap());
            out
        }
    }
}

fn sample_tape<T: Real>(
    nominal: &[Control<T>],
    cfg: &PlannerConfig<T>,
    seed: u64,
    tick: u64,
    k: usize,
) -> Vec<Control<T>> {
    if k == 0 {
        return nominal.iter().map(|u| cfg.vehicle.clamp(*u)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tick);
    rng.set_word_pos(k as u128 * WORDS_PER_SAMPLE);
    let beta = cfg.noise_correlation.as_f64();
    let fresh = (1.0 - beta * beta).sqrt();
    let (mut ea, mut ed) = (0.0f64, 0.0f64);
    nominal
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let xa: f64 = rng.sample(StandardNormal);
            let xd: f64 = rng.sample(StandardNormal);
            if n == 0 {
                (ea, ed) = (xa, xd);
            } else {
                ea = beta * ea + fresh * xa;
                ed = beta * ed + fresh * xd;
            }
            cfg.vehicle.clamp(Control::new(
                u.a + cfg.noise_std[0] * T::lit(ea),
                u.delta + cfg.noise_std[1] * T::lit(ed),
            ))
        })
        .collect()
}

fn tape_cost<T: Real>(
    s0: &VehicleState<T>,
    tape: &[Control<T>],
    ref_states: &[VehicleState<T>],
    ref_controls: &[Control<T>],
    cfg: &PlannerConfig<T>,
    ctx: &CostContext<'_, T>,
) -> T {
    let Ok(states) = rollout(s0, tape, cfg.dt, &cfg.vehicle) else {
        return T::infinity();
    };
    let last = states.len() - 1;
    let mut total = T::zero();
    for (n, s) in states.iter().enumerate() {
        match stage_cost(
            s,
            &tape[n],
            &ref_states[n],
            &ref_controls[n],
            cfg,
            ctx,
            n == last,
        ) {
            Ok(c) => total = total + c,
            Err(_) => return T::infinity(),
        }
    }
    total
}

/// One MPPI iteration around `nominal` (the warm-start tape).
///
/// Sample 0 is the nominal tape itself; sample `k` draws its perturbations
/// from a ChaCha8 stream keyed by `(seed, tick, k)`, so the result does not
/// depend on how samples are spread over threads. Samples are clamped to the
/// actuation box, rolled out, scored, and averaged with weights
/// `exp(-(J_k - J_min) / temperature)` in sample order. If the averaged
/// tape costs more than the best sample, the best sample is returned.
#[allow(clippy::too_many_arguments)]
pub fn mppi_plan<T: Real>(
    s0: &VehicleState<T>,
    ref_states: &[VehicleState<T>],
    ref_controls: &[Control<T>],
    nominal: &[Control<T>],
    cfg: &PlannerConfig<T>,
    ctx: &CostContext<'_, T>,
    seed: u64,
    tick: u64,
) -> Result<Plan<T>> {
    let horizon = cfg.horizon;
    if ref_states.len() < horizon || ref_controls.len() < horizon || nominal.len() < horizon {
        return Err(Error::InvalidParameter(format!(
            "reference and nominal tapes need {horizon} entries"
        )));
    }
    let nominal = &nominal[..horizon];
    let scored: Vec<(T, Vec<Control<T>>)> = (0..cfg.samples)
        .into_par_iter()
        .with_min_len(16)
        .map(|k| {
            let tape = sample_tape(nominal, cfg, seed, tick, k);
            let cost = tape_cost(s0, &tape, ref_states, ref_controls, cfg, ctx);
            (cost, tape)
        })
        .collect();

    let min_cost = scored
        .iter()
        .map(|(c, _)| *c)
        .filter(|c| c.is_finite())
        .fold(T::infinity(), T::min);
    if !min_cost.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let weights: Vec<T> = scored
        .iter()
        .map(|(c, _)| {
            if c.is_finite() {
                (-(*c - min_cost) / cfg.temperature).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    let mut controls = vec![Control::zero(); horizon];
    let mut sum_sq = T::zero();
    for (w, (_, tape)) in weights.iter().zip(&scored) {
        if *w == T::zero() {
            continue;
        }
        let w = *w / total;
        sum_sq = sum_sq + w * w;
        for (acc, u) in controls.iter_mut().zip(tape) {
            acc.a = acc.a + w * u.a;
            acc.delta = acc.delta + w * u.delta;
        }
    }
    let mut controls: Vec<Control<T>> =
        controls.into_iter().map(|u| cfg.vehicle.clamp(u)).collect();
    // Averaging two modes (say, passing left and right) can land between
    // them; fall back to the best sample when the average scores worse.
    let averaged = tape_cost(s0, &controls, ref_states, ref_controls, cfg, ctx);
    if !(averaged <= min_cost) {
        let best = scored
            .iter()
            .position(|(c, _)| *c == min_cost)
            .expect("min_cost comes from a sample");
        controls = scored[best].1.clone();
    }
    let states = rollout(s0, &controls, cfg.dt, &cfg.vehicle)?;
    Ok(Plan {
        controls,
        states,
        min_cost,
        effective_samples: T::one() / sum_sq,
    })
}
