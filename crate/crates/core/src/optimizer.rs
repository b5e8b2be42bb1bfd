//! Staged bounded gradient descent over the disk radius and ring widths.

use std::ops::ControlFlow;

use crate::error::{ObjectiveError, OptimizerError};
use crate::geometry::{CavityGeometry, ParamBounds, ParamVector};
use crate::gme::{GmeConfig, GmeSystem};
use crate::objective::{evaluate, gradient, score_mode, LossBreakdown, LossWeights};

/// One nanometre at a = 1 µm.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_TAU_FF_FLOOR: f64 = 0.7;

const EPSILON: f64 = 1e-12;
/// Width of the soft band inside each bound, as a fraction of the bound interval.
const CLAMP_MARGIN: f64 = 0.05;
/// Largest tanh value used, so that images stay strictly inside the bounds.
const TANH_CAP: f64 = 1.0 - 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSpec {
    pub q_ref: f64,
    pub epochs: usize,
    /// Step size in units of a.
    pub learning_rate: f64,
}

/// `stages` stages sharing `total_epochs` (remainder to the last) with
/// q_ref = q_ref_start·growth^i.
pub fn default_schedule(
    total_epochs: usize,
    stages: usize,
    q_ref_start: f64,
    growth: f64,
) -> Result<Vec<StageSpec>, OptimizerError> {
    if stages == 0 {
        return Err(OptimizerError::Schedule("at least one stage is required".into()));
    }
    if !(q_ref_start > 0.0) || !(growth > 0.0) || !q_ref_start.is_finite() || !growth.is_finite() {
        return Err(OptimizerError::Schedule(format!(
            "q_ref_start and growth must be positive, got {q_ref_start} and {growth}"
        )));
    }
    let per = total_epochs / stages;
    let rem = total_epochs % stages;
    Ok((0..stages)
        .map(|i| StageSpec {
            q_ref: q_ref_start * growth.powi(i as i32),
            epochs: per + if i + 1 == stages { rem } else { 0 },
            learning_rate: DEFAULT_LEARNING_RATE,
        })
        .collect())
}

/// Checks a schedule: positive rates and q_ref, and q_ref never decreasing.
pub fn check_schedule(schedule: &[StageSpec]) -> Result<(), OptimizerError> {
    for (i, s) in schedule.iter().enumerate() {
        if !(s.q_ref > 0.0) || !s.q_ref.is_finite() {
            return Err(OptimizerError::Schedule(format!("stage {i}: q_ref must be positive")));
        }
        if !(s.learning_rate > 0.0) || !s.learning_rate.is_finite() {
            return Err(OptimizerError::Schedule(format!("stage {i}: learning rate must be positive")));
        }
        if i > 0 && s.q_ref < schedule[i - 1].q_ref {
            return Err(OptimizerError::Schedule(format!("stage {i}: q_ref decreases")));
        }
    }
    Ok(())
}

/// Smooth bijection from the real line onto the open interval (lo, hi): the
/// identity in the interior and a tanh roll-off in a band next to each bound.
fn soft_clamp(z: f64, lo: f64, hi: f64) -> (f64, f64) {
    let m = CLAMP_MARGIN * (hi - lo);
    if z > hi - m {
        let t = ((z - (hi - m)) / m).tanh().min(TANH_CAP);
        (hi - m + m * t, 1.0 - t * t)
    } else if z < lo + m {
        let t = ((lo + m - z) / m).tanh().min(TANH_CAP);
        (lo + m - m * t, 1.0 - t * t)
    } else {
        (z, 1.0)
    }
}

fn soft_clamp_inverse(p: f64, lo: f64, hi: f64) -> f64 {
    let m = CLAMP_MARGIN * (hi - lo);
    if p > hi - m {
        hi - m + m * ((p - (hi - m)) / m).min(TANH_CAP).atanh()
    } else if p < lo + m {
        lo + m - m * ((lo + m - p) / m).min(TANH_CAP).atanh()
    } else {
        p
    }
}

/// Decay rates of the first and second moment averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDecay {
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for MomentDecay {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999 }
    }
}

impl MomentDecay {
    pub fn check(&self) -> Result<(), OptimizerError> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(OptimizerError::Schedule(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Moment estimates and unclamped coordinates of the adaptive descent.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentState {
    pub t: u64,
    pub m: [f64; 8],
    pub v: [f64; 8],
    /// Unbounded coordinates whose soft-clamp image is `params`.
    pub latent: [f64; 8],
    pub params: ParamVector,
}

impl DescentState {
    pub fn new(params: &ParamVector, bounds: &ParamBounds) -> Self {
        let mut latent = [0.0; 8];
        for i in 0..8 {
            latent[i] = soft_clamp_inverse(params.0[i], bounds.lower[i], bounds.upper[i]);
        }
        Self {
            t: 0,
            m: [0.0; 8],
            v: [0.0; 8],
            latent,
            params: *params,
        }
    }

    /// Adam update of the unclamped coordinates, mapped back into the bounds.
    pub fn step(
        &mut self,
        params: &ParamVector,
        grad: &[f64; 8],
        learning_rate: f64,
        bounds: &ParamBounds,
    ) -> Result<ParamVector, OptimizerError> {
        self.step_with(params, grad, learning_rate, bounds, MomentDecay::default())
    }

    pub fn step_with(
        &mut self,
        params: &ParamVector,
        grad: &[f64; 8],
        learning_rate: f64,
        bounds: &ParamBounds,
        decay: MomentDecay,
    ) -> Result<ParamVector, OptimizerError> {
        let MomentDecay { beta1, beta2 } = decay;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimizerError::NonFiniteGradient(i));
        }
        if *params != self.params {
            *self = Self {
                latent: Self::new(params, bounds).latent,
                params: *params,
                ..self.clone()
            };
        }
        self.t += 1;
        let t = self.t as i32;
        let mut out = *params;
        for i in 0..8 {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            let (_, slope) = soft_clamp(self.latent[i], lo, hi);
            let g = grad[i] * slope;
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            if g == 0.0 && self.m[i] == 0.0 {
                continue;
            }
            let m_hat = self.m[i] / (1.0 - beta1.powi(t));
            let v_hat = self.v[i] / (1.0 - beta2.powi(t));
            self.latent[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            out.0[i] = soft_clamp(self.latent[i], lo, hi).0;
        }
        self.params = out;
        Ok(out)
    }
}

/// Single descent step from a fresh state.
pub fn step(
    params: &ParamVector,
    grad: &[f64; 8],
    learning_rate: f64,
    bounds: &ParamBounds,
) -> Result<ParamVector, OptimizerError> {
    DescentState::new(params, bounds).step(params, grad, learning_rate, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    pub q_ref: f64,
    pub params: ParamVector,
    pub frequency: f64,
    pub q_factor: f64,
    pub tau_ff: f64,
    pub tau_f: f64,
    pub tau_q: f64,
    pub overlap_a: f64,
    pub total: f64,
}

impl EpochRecord {
    fn new(epoch: usize, stage: usize, params: ParamVector, b: &LossBreakdown, q_ref: f64) -> Self {
        Self {
            epoch,
            stage,
            q_ref,
            params,
            frequency: b.frequency,
            q_factor: b.q_factor,
            tau_ff: b.tau_ff,
            tau_f: b.tau_f,
            tau_q: b.tau_q,
            overlap_a: b.overlap_a,
            total: b.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    records: Vec<EpochRecord>,
    pub tau_ff_floor: f64,
    best: Option<usize>,
}

impl OptimizationTrace {
    pub fn new(tau_ff_floor: f64) -> Self {
        Self {
            records: Vec::new(),
            tau_ff_floor,
            best: None,
        }
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// Appends `r`, which must carry the next epoch index.
    pub fn push(&mut self, r: EpochRecord) -> Result<(), OptimizerError> {
        if r.epoch != self.records.len() {
            return Err(OptimizerError::Schedule(format!(
                "epoch {} appended after {} records",
                r.epoch,
                self.records.len()
            )));
        }
        let qualifies = r.tau_ff >= self.tau_ff_floor;
        let better = match self.best {
            None => true,
            Some(b) => r.q_factor > self.records[b].q_factor,
        };
        if qualifies && better {
            self.best = Some(self.records.len());
        }
        self.records.push(r);
        Ok(())
    }

    /// Epoch with the largest Q among those with tau_ff at or above the floor.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best.map(|b| &self.records[b])
    }

    /// Q of each epoch divided by the largest Q of the trace.
    pub fn normalized_q(&self) -> Vec<f64> {
        let max = self.records.iter().map(|r| r.q_factor).fold(0.0, f64::max);
        self.records.iter().map(|r| r.q_factor / max).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub threads: usize,
    pub tau_ff_floor: f64,
    /// Re-target mode tracking at every accepted mode instead of the initial one.
    pub rolling_reference: bool,
    /// Recorded for provenance; the descent itself draws no random numbers.
    pub seed: u64,
    pub moments: MomentDecay,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            tau_ff_floor: DEFAULT_TAU_FF_FLOOR,
            rolling_reference: false,
            seed: 0,
            moments: MomentDecay::default(),
        }
    }
}

/// Everything needed to continue a run after the last recorded epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub state: DescentState,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: OptimizationTrace,
    pub best: CavityGeometry,
    pub initial_q: f64,
    /// False when the epoch callback stopped the run before the schedule ended.
    pub completed: bool,
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAbort {
    pub trace: OptimizationTrace,
    pub best: CavityGeometry,
    pub error: OptimizerError,
}

fn best_geometry(trace: &OptimizationTrace, init: &CavityGeometry) -> CavityGeometry {
    trace.best().map(|r| r.params.apply(init)).unwrap_or_else(|| init.clone())
}

fn stage_of(schedule: &[StageSpec], epoch: usize) -> (usize, &StageSpec) {
    let mut end = 0;
    for (i, s) in schedule.iter().enumerate() {
        end += s.epochs;
        if epoch <= end {
            return (i, s);
        }
    }
    let last = schedule.len() - 1;
    (last, &schedule[last])
}

/// Reference mode of the initial geometry and its scored initial evaluation.
pub fn initial_reference(
    init: &CavityGeometry,
    cfg: &GmeConfig,
    weights: &LossWeights,
) -> Result<(Vec<f64>, LossBreakdown), OptimizerError> {
    let system = GmeSystem::new(init, cfg).map_err(ObjectiveError::from)?;
    let mut mode = system
        .fundamental_mode(init, cfg.mode_window)
        .map_err(|e| OptimizerError::Init(e.to_string()))?;
    mode.mode_overlap_with_ref = Some(1.0);
    let b = score_mode(&mode, weights, true)?;
    Ok((mode.eigvec, b))
}

pub fn run(
    init: &CavityGeometry,
    schedule: &[StageSpec],
    cfg: &GmeConfig,
    weights: &LossWeights,
    bounds: &ParamBounds,
    opts: &RunOptions,
) -> Result<RunOutput, RunAbort> {
    run_with(init, schedule, cfg, weights, bounds, opts, None, |_, _| ControlFlow::Continue(()))
}

/// [`run`] with an optional resume point and a callback invoked after every
/// recorded epoch (including the initial evaluation) with the record and the
/// checkpoint that continues from it. Returning `Break` ends the run there.
#[allow(clippy::too_many_arguments)]
pub fn run_with(
    init: &CavityGeometry,
    schedule: &[StageSpec],
    cfg: &GmeConfig,
    weights: &LossWeights,
    bounds: &ParamBounds,
    opts: &RunOptions,
    resume: Option<(OptimizationTrace, Checkpoint)>,
    mut on_epoch: impl FnMut(&EpochRecord, &Checkpoint) -> ControlFlow<()>,
) -> Result<RunOutput, RunAbort> {
    let empty = || OptimizationTrace::new(opts.tau_ff_floor);
    let abort = |trace: OptimizationTrace, error: OptimizerError| RunAbort {
        best: best_geometry(&trace, init),
        trace,
        error,
    };
    if schedule.is_empty() {
        return Err(abort(empty(), OptimizerError::Schedule("empty schedule".into())));
    }
    if let Err(e) = check_schedule(schedule).and_then(|_| opts.moments.check()) {
        return Err(abort(empty(), e));
    }
    let start = match ParamVector::from_geometry(init) {
        Ok(p) if p.within(bounds) => p,
        Ok(_) => return Err(abort(empty(), OptimizerError::Init("initial parameters outside bounds".into()))),
        Err(e) => return Err(abort(empty(), OptimizerError::Init(e.to_string()))),
    };
    let stage_weights = |s: &StageSpec| weights.with_q_ref(s.q_ref);

    let (fixed_reference, initial) = match initial_reference(init, cfg, &stage_weights(&schedule[0])) {
        Ok(v) => v,
        Err(e) => return Err(abort(empty(), e)),
    };
    let initial_q = initial.q_factor;

    let (mut trace, mut ckpt) = match resume {
        Some((trace, ckpt)) => (trace, ckpt),
        None => {
            let mut trace = empty();
            let ckpt = Checkpoint {
                epoch: 0,
                state: DescentState::new(&start, bounds),
                reference: fixed_reference.clone(),
            };
            let rec = EpochRecord::new(0, 0, start, &initial, schedule[0].q_ref);
            trace.push(rec).expect("first record");
            if on_epoch(&rec, &ckpt).is_break() {
                let best = best_geometry(&trace, init);
                return Ok(RunOutput { trace, best, initial_q, completed: false });
            }
            (trace, ckpt)
        }
    };
    if trace.records().len() != ckpt.epoch + 1 {
        return Err(abort(trace, OptimizerError::Schedule("checkpoint does not match the trace".into())));
    }

    let total: usize = schedule.iter().map(|s| s.epochs).sum();
    for epoch in ckpt.epoch + 1..=total {
        let (stage_idx, stage) = stage_of(schedule, epoch);
        let w = stage_weights(stage);
        let params = ckpt.state.params;
        let grad = match gradient(&params, init, cfg, &w, &ckpt.reference, opts.threads) {
            Ok(g) => g,
            Err(e) => return Err(abort(trace, e.into())),
        };
        let next = match ckpt.state.step_with(&params, &grad, stage.learning_rate, bounds, opts.moments) {
            Ok(p) => p,
            Err(e) => return Err(abort(trace, e)),
        };
        let eval = match evaluate(&next, init, cfg, &w, &ckpt.reference) {
            Ok(e) => e,
            Err(e) => return Err(abort(trace, e.into())),
        };
        if opts.rolling_reference {
            ckpt.reference = eval.mode.eigvec.clone();
        }
        ckpt.epoch = epoch;
        let rec = EpochRecord::new(epoch, stage_idx, next, &eval.breakdown, stage.q_ref);
        if let Err(e) = trace.push(rec) {
            return Err(abort(trace, e));
        }
        if on_epoch(&rec, &ckpt).is_break() && epoch < total {
            let best = best_geometry(&trace, init);
            return Ok(RunOutput { trace, best, initial_q, completed: false });
        }
    }
    let best = best_geometry(&trace, init);
    Ok(RunOutput { trace, best, initial_q, completed: true })
}
