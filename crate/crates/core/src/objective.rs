//! The three-term design loss and its gradient over the eight shape parameters.
//!
//! L = 1 − w_Q·τ_Q − w_FF·τ_FF − w_f·τ_f, where τ_f is a Lorentzian around the
//! target frequency, τ_FF the squared overlap of the far-field channel amplitudes
//! with an apodized Gaussian, and τ_Q a log-compressed quality factor weighted by
//! the overlap A with the reference mode.

use std::f64::consts::LN_2;

use crate::error::ObjectiveError;
use crate::geometry::{validate, CavityGeometry, ParamVector};
use crate::gme::{CavityMode, GmeConfig, GmeSystem, RadiationChannel};

/// Gradient step, nm.
pub const GRADIENT_STEP_NM: f64 = 0.1;
/// Times the gradient step is halved when a probe geometry is invalid.
pub const MAX_STEP_SHRINKS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_q: f64,
    pub w_ff: f64,
    /// c/a
    pub f_target: f64,
    /// Half-width of the frequency Lorentzian, c/a.
    pub delta_f: f64,
    pub na: f64,
    pub q_ref: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_f: 0.20,
            w_q: 0.55,
            w_ff: 0.25,
            f_target: 1.09,
            delta_f: 0.03,
            na: 0.68,
            q_ref: 1000.0,
        }
    }
}

impl LossWeights {
    pub fn with_q_ref(mut self, q_ref: f64) -> Self {
        self.q_ref = q_ref;
        self
    }

    pub fn check(&self) -> Result<(), ObjectiveError> {
        let bad = |m: String| Err(ObjectiveError::Weights(m));
        for (name, w) in [("w_f", self.w_f), ("w_q", self.w_q), ("w_ff", self.w_ff)] {
            if !(w >= 0.0) || !w.is_finite() {
                return bad(format!("{name} must be a finite non-negative number, got {w}"));
            }
        }
        if !(self.na > 0.0 && self.na <= 1.0) {
            return bad(format!("na must lie in (0, 1], got {}", self.na));
        }
        if !(self.delta_f > 0.0) || !self.delta_f.is_finite() {
            return bad(format!("delta_f must be positive, got {}", self.delta_f));
        }
        if !(self.q_ref > 0.0) || !self.q_ref.is_finite() {
            return bad(format!("q_ref must be positive, got {}", self.q_ref));
        }
        if !self.f_target.is_finite() {
            return bad("f_target must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub tau_f: f64,
    pub tau_ff: f64,
    pub tau_q: f64,
    pub overlap_a: f64,
    pub total: f64,
    pub frequency: f64,
    pub q_factor: f64,
    /// False when no candidate mode lay in the frequency window.
    pub in_window: bool,
}

pub fn tau_frequency(f: f64, weights: &LossWeights) -> f64 {
    let x = (f - weights.f_target) / weights.delta_f;
    1.0 / (1.0 + x * x)
}

/// Apodized Gaussian exp[−(sinθ/NA)²]·√cosθ at each channel, unit ℓ2 norm.
pub fn gaussian_reference(channels: &[RadiationChannel], na: f64) -> Vec<f64> {
    let mut e: Vec<f64> = channels
        .iter()
        .map(|c| {
            let s = c.theta.sin() / na;
            (-s * s).exp() * c.theta.cos().max(0.0).sqrt()
        })
        .collect();
    let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        e.iter_mut().for_each(|x| *x /= norm);
    }
    e
}

pub fn tau_farfield(channels: &[RadiationChannel], na: f64) -> Result<f64, ObjectiveError> {
    if channels.is_empty() {
        return Err(ObjectiveError::NoChannels);
    }
    let sim: Vec<f64> = channels.iter().map(|c| c.intensity().sqrt()).collect();
    let norm = sim.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(ObjectiveError::ZeroAmplitude);
    }
    let gauss = gaussian_reference(channels, na);
    let dot: f64 = sim.iter().zip(&gauss).map(|(s, g)| s * g).sum::<f64>() / norm;
    Ok((dot * dot).min(1.0))
}

pub fn tau_q(q: f64, q_ref: f64, a: f64) -> f64 {
    a * ((q / q_ref).ln_1p() / LN_2).min(1.0)
}

/// Loss of an already-solved mode. Q is taken from `mode.losses` (infinite when absent).
pub fn score_mode(mode: &CavityMode, weights: &LossWeights, in_window: bool) -> Result<LossBreakdown, ObjectiveError> {
    let q = mode.q_factor().unwrap_or(f64::INFINITY);
    let a = mode.mode_overlap_with_ref.unwrap_or(1.0);
    let tau_f = tau_frequency(mode.frequency, weights);
    let tau_ff = tau_farfield(&mode.channels, weights.na)?;
    let tau_q = tau_q(q, weights.q_ref, a);
    let total = 1.0 - (weights.w_q * tau_q + weights.w_ff * tau_ff + weights.w_f * tau_f);
    Ok(LossBreakdown {
        tau_f,
        tau_ff,
        tau_q,
        overlap_a: a,
        total,
        frequency: mode.frequency,
        q_factor: q,
        in_window,
    })
}

/// Solved and scored design point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    pub mode: CavityMode,
}

pub fn evaluate(
    params: &ParamVector,
    template: &CavityGeometry,
    cfg: &GmeConfig,
    weights: &LossWeights,
    reference: &[f64],
) -> Result<Evaluation, ObjectiveError> {
    weights.check()?;
    let g = params.apply(template);
    let system = GmeSystem::new(&g, cfg)?;
    let tracked = system.track(reference, &cfg.sectors, cfg.mode_window)?;
    let mode = system.compute_losses(&tracked.mode)?;
    let breakdown = score_mode(&mode, weights, tracked.in_window)?;
    Ok(Evaluation { breakdown, mode })
}

pub fn evaluate_loss(
    params: &ParamVector,
    template: &CavityGeometry,
    cfg: &GmeConfig,
    weights: &LossWeights,
    reference: &[f64],
) -> Result<LossBreakdown, ObjectiveError> {
    evaluate(params, template, cfg, weights, reference).map(|e| e.breakdown)
}

/// ∂total/∂params by central differences with a 0.1 nm step, shrinking the step
/// when a probe geometry is invalid. Probes run on `threads` workers; the result
/// does not depend on the worker count.
pub fn gradient(
    params: &ParamVector,
    template: &CavityGeometry,
    cfg: &GmeConfig,
    weights: &LossWeights,
    reference: &[f64],
    threads: usize,
) -> Result<[f64; 8], ObjectiveError> {
    let h0 = template.nm_to_a(GRADIENT_STEP_NM);
    let mut steps = [0.0; 8];
    for (i, step) in steps.iter_mut().enumerate() {
        *step = probe_step(params, template, i, h0).ok_or(ObjectiveError::ProbeInvalid { index: i })?;
    }
    let probes: Vec<(usize, f64)> = (0..8).flat_map(|i| [(i, steps[i]), (i, -steps[i])]).collect();
    let values = parallel_map(&probes, threads.max(1), |&(i, h)| {
        let mut p = *params;
        p.0[i] += h;
        evaluate_loss(&p, template, cfg, weights, reference).map(|b| b.total)
    });
    let mut grad = [0.0; 8];
    for i in 0..8 {
        let plus = values[2 * i].clone()?;
        let minus = values[2 * i + 1].clone()?;
        grad[i] = (plus - minus) / (2.0 * steps[i]);
    }
    Ok(grad)
}

fn probe_step(params: &ParamVector, template: &CavityGeometry, i: usize, h0: f64) -> Option<f64> {
    let mut h = h0;
    for _ in 0..=MAX_STEP_SHRINKS {
        let ok = [h, -h].iter().all(|&d| {
            let mut p = *params;
            p.0[i] += d;
            validate(&p.apply(template)).is_ok()
        });
        if ok {
            return Some(h);
        }
        h *= 0.5;
    }
    None
}

/// Ordered map over `items` using up to `threads` scoped workers with a fixed
/// round-robin assignment.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    (t..items.len())
                        .step_by(threads)
                        .map(|i| (i, f(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}
