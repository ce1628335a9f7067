//! Augmented integrate-and-fire neuron: membrane integration, clipped
//! signed multi-spike firing, and soft reset.
//!
//! Each timestep a neuron adds its input current to the membrane potential,
//! emits `clip(floor(m / threshold), min_spikes, max_spikes)` spikes (a
//! signed count), and subtracts the fired charge `threshold * spikes` from
//! the membrane. Membrane arithmetic runs in `f64` so the soft-reset
//! identity `v' + threshold * s == m` holds bit for bit on every step.

use crate::error::{Error, Result};
use crate::quant::{clipped_floor_units, QuantParams};
use crate::tensor::Tensor;

/// Per-layer firing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AifParams {
    /// Firing threshold, `theta / L` of the source quantizer.
    pub threshold: f64,
    /// Most negative spike count per timestep (`alpha * L`, <= 0).
    pub min_spikes: i64,
    /// Largest spike count per timestep (`beta * L`, > 0).
    pub max_spikes: i64,
    /// Initial membrane potential; `threshold / 2` when produced by the
    /// converter.
    pub v_init: f64,
}

impl AifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidParam(format!(
                "threshold: must be finite and > 0, got {}",
                self.threshold
            )));
        }
        if !(self.min_spikes <= 0 && self.max_spikes > 0) {
            return Err(Error::InvalidParam(format!(
                "spike caps: need min <= 0 < max, got {}..{}",
                self.min_spikes, self.max_spikes
            )));
        }
        if !self.v_init.is_finite() {
            return Err(Error::InvalidParam("v_init: must be finite".into()));
        }
        Ok(())
    }

    /// Parameters matched to a quantizer: `threshold = theta / L`,
    /// caps `alpha * L` and `beta * L`, half-threshold initial potential.
    pub fn from_quant(q: &QuantParams) -> Result<Self> {
        q.validate()?;
        let threshold = q.theta_snn();
        let (lo, hi) = q.clip_counts();
        Ok(Self {
            threshold,
            min_spikes: lo,
            max_spikes: hi,
            v_init: 0.5 * threshold,
        })
    }
}

/// Membrane potentials of one layer, one entry per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct AifState {
    v: Vec<f64>,
}

impl AifState {
    pub fn potentials(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Fresh state with every potential at `v_init`.
pub fn aif_init(params: &AifParams, n: usize) -> Result<AifState> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParam("aif_init: n must be >= 1".into()));
    }
    Ok(AifState {
        v: vec![params.v_init; n],
    })
}

/// Restores every potential to `v_init`.
pub fn aif_reset(params: &AifParams, state: &mut AifState) {
    for v in &mut state.v {
        *v = params.v_init;
    }
}

/// One timestep: integrate the input current, fire a clipped signed spike
/// count per neuron, soft-reset the membrane.
pub fn aif_step(
    params: &AifParams,
    state: &mut AifState,
    input_current: &Tensor,
) -> Result<Vec<i64>> {
    if input_current.len() != state.v.len() {
        return Err(Error::Dimension(format!(
            "aif_step: input length {} != state length {}",
            input_current.len(),
            state.v.len()
        )));
    }
    let mut spikes = Vec::with_capacity(state.v.len());
    for (v, &o) in state.v.iter_mut().zip(input_current.data()) {
        if !o.is_finite() {
            return Err(Error::NonFinite(format!("aif_step: input current {o}")));
        }
        let m = *v + o as f64;
        let s = clipped_floor_units(m, params.threshold, params.min_spikes, params.max_spikes);
        *v = m - params.threshold * s as f64;
        spikes.push(s);
    }
    Ok(spikes)
}

/// Spike counts of a single neuron driven by a constant current for `t_steps`
/// timesteps from a fresh state. The workhorse behind the per-layer
/// conversion-error and spike-count-deviation statistics.
pub fn constant_input_trace(params: &AifParams, current: f32, t_steps: usize) -> Result<Vec<i64>> {
    params.validate()?;
    if t_steps == 0 {
        return Err(Error::InvalidParam("trace needs t_steps >= 1".into()));
    }
    if !current.is_finite() {
        return Err(Error::NonFinite(format!("constant current {current}")));
    }
    let mut v = params.v_init;
    let mut out = Vec::with_capacity(t_steps);
    for _ in 0..t_steps {
        let m = v + current as f64;
        let s = clipped_floor_units(m, params.threshold, params.min_spikes, params.max_spikes);
        v = m - params.threshold * s as f64;
        out.push(s);
    }
    Ok(out)
}
