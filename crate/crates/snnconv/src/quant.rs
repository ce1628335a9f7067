//! Polarity quantized activation (PQA), the clipped floor-based QA baseline,
//! and the straight-through gradient used during quantization-aware training.
//!
//! PQA maps `x` to `theta * clip(round(x * L / theta) / L, alpha, beta)`, a
//! lattice of step `theta / L` with signed clip bounds. Rounding is half-up
//! (`floor(u + 1/2)`, ties toward +inf) and is evaluated through the same
//! index primitive the spiking neuron uses, so a single-timestep neuron with
//! membrane offset `theta_snn / 2` reproduces the lattice index bit for bit.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// PQA hyperparameters: `levels` positive lattice steps per threshold, and
/// clip bounds `alpha in (-1, 0]`, `beta in (0, 1]` with `alpha * levels` and
/// `beta * levels` integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub levels: u32,
    pub threshold: f32,
    pub alpha: f32,
    pub beta: f32,
}

const INTEGRALITY_TOL: f64 = 1e-9;

impl QuantParams {
    pub fn new(levels: u32, threshold: f32, alpha: f32, beta: f32) -> Result<Self> {
        let q = Self {
            levels,
            threshold,
            alpha,
            beta,
        };
        q.validate()?;
        Ok(q)
    }

    /// Checks every invariant; the error names the violated constraint.
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::InvalidParam("levels: must satisfy L >= 1".into()));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidParam(format!(
                "threshold: must be finite and > 0, got {}",
                self.threshold
            )));
        }
        if !(self.alpha > -1.0 && self.alpha <= 0.0) {
            return Err(Error::InvalidParam(format!(
                "alpha: must satisfy -1 < alpha <= 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "beta: must satisfy 0 < beta <= 1, got {}",
                self.beta
            )));
        }
        let al = self.alpha as f64 * self.levels as f64;
        if (al - al.round()).abs() > INTEGRALITY_TOL {
            return Err(Error::InvalidParam(format!(
                "alpha: alpha * L = {al} is not an integer"
            )));
        }
        let bl = self.beta as f64 * self.levels as f64;
        if (bl - bl.round()).abs() > INTEGRALITY_TOL {
            return Err(Error::InvalidParam(format!(
                "beta: beta * L = {bl} is not an integer"
            )));
        }
        Ok(())
    }

    /// Signed lattice clip bounds `(alpha * L, beta * L)` as integers.
    pub fn clip_counts(&self) -> (i64, i64) {
        (
            (self.alpha as f64 * self.levels as f64).round() as i64,
            (self.beta as f64 * self.levels as f64).round() as i64,
        )
    }

    /// Lattice step `theta / L`, the firing threshold of the matched neuron.
    pub fn theta_snn(&self) -> f64 {
        self.threshold as f64 / self.levels as f64
    }
}

/// Validates `q`, returning the named constraint violation if any.
pub fn validate_quant_params(q: &QuantParams) -> Result<()> {
    q.validate()
}

/// Largest `k` with a non-negative computed residual `m - theta * k`, i.e.
/// floor of `m / theta` under the residual semantics the soft reset relies
/// on: the returned `k` always satisfies `0 <= m - theta * k < theta` as
/// computed in `f64`.
pub(crate) fn floor_units(m: f64, theta: f64) -> i64 {
    let mut k = (m / theta).floor() as i64;
    loop {
        let r = m - theta * k as f64;
        if r < 0.0 {
            k -= 1;
        } else if r >= theta {
            k += 1;
        } else {
            return k;
        }
    }
}

/// Floor of `m / theta` clipped to `[lo, hi]`. Values far outside the clip
/// range short-circuit so the correction loop stays bounded.
pub(crate) fn clipped_floor_units(m: f64, theta: f64, lo: i64, hi: i64) -> i64 {
    let raw = m / theta;
    if raw >= (hi as f64) + 1.0 {
        return hi;
    }
    if raw <= (lo as f64) - 1.0 {
        return lo;
    }
    floor_units(m, theta).clamp(lo, hi)
}

/// The PQA lattice index of a scalar: `clip(round_half_up(x / theta_snn), lo, hi)`,
/// evaluated as `floor((theta_snn/2 + x) / theta_snn)` so it is bit-identical
/// to a single neuron step from the half-threshold initial potential.
pub(crate) fn pqa_index(x: f64, theta_snn: f64, lo: i64, hi: i64) -> i64 {
    clipped_floor_units(0.5 * theta_snn + x, theta_snn, lo, hi)
}

/// Elementwise PQA lattice indices, `k in [alpha*L, beta*L]`.
pub fn pqa_indices(q: &QuantParams, x: &Tensor) -> Result<Vec<i64>> {
    q.validate()?;
    let (lo, hi) = q.clip_counts();
    let t = q.theta_snn();
    Ok(x.data()
        .iter()
        .map(|&v| pqa_index(v as f64, t, lo, hi))
        .collect())
}

/// Elementwise polarity quantized activation.
pub fn pqa_forward(q: &QuantParams, x: &Tensor) -> Result<Tensor> {
    q.validate()?;
    let (lo, hi) = q.clip_counts();
    let t = q.theta_snn();
    let data = x
        .data()
        .iter()
        .map(|&v| (t * pqa_index(v as f64, t, lo, hi) as f64) as f32)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Floor-based non-polarity baseline: `theta * clip(floor(x*L/theta)/L, 0, 1)`.
pub fn qa_forward(q: &QuantParams, x: &Tensor) -> Result<Tensor> {
    q.validate()?;
    let t = q.theta_snn();
    let hi = q.levels as i64;
    let data = x
        .data()
        .iter()
        .map(|&v| (t * clipped_floor_units(v as f64, t, 0, hi) as f64) as f32)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Straight-through gradient of PQA. Rounding passes the upstream gradient
/// through wherever the input lies inside the clip window
/// `[alpha*theta, beta*theta]`; outside it the input gradient is zero and the
/// threshold collects `alpha` (below) or `beta` (above) times the upstream.
pub fn pqa_backward_ste(
    q: &QuantParams,
    x: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, f32)> {
    q.validate()?;
    if x.shape() != upstream.shape() {
        return Err(Error::Dimension(format!(
            "gradient shape {:?} != input shape {:?}",
            upstream.shape(),
            x.shape()
        )));
    }
    let lo = q.alpha as f64 * q.threshold as f64;
    let hi = q.beta as f64 * q.threshold as f64;
    let mut grad_x = Vec::with_capacity(x.len());
    let mut grad_theta = 0.0f64;
    for (&v, &g) in x.data().iter().zip(upstream.data()) {
        let v = v as f64;
        if v < lo {
            grad_x.push(0.0);
            grad_theta += g as f64 * q.alpha as f64;
        } else if v > hi {
            grad_x.push(0.0);
            grad_theta += g as f64 * q.beta as f64;
        } else {
            grad_x.push(g);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), grad_x)?,
        grad_theta as f32,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q8() -> QuantParams {
        QuantParams::new(8, 8.0, -0.25, 1.0).unwrap()
    }

    #[test]
    fn validate_accepts_reference_setting() {
        assert!(validate_quant_params(&q8()).is_ok());
    }

    #[test]
    fn validate_rejects_non_integral_alpha() {
        let q = QuantParams {
            levels: 8,
            threshold: 8.0,
            alpha: -0.3,
            beta: 1.0,
        };
        let err = validate_quant_params(&q).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn validate_rejects_positive_alpha() {
        let q = QuantParams {
            levels: 8,
            threshold: 8.0,
            alpha: 0.1,
            beta: 1.0,
        };
        assert!(validate_quant_params(&q).is_err());
    }

    #[test]
    fn validate_names_each_constraint() {
        let cases: [(QuantParams, &str); 4] = [
            (QuantParams { levels: 0, threshold: 1.0, alpha: 0.0, beta: 1.0 }, "levels"),
            (QuantParams { levels: 4, threshold: 0.0, alpha: 0.0, beta: 1.0 }, "threshold"),
            (QuantParams { levels: 4, threshold: 1.0, alpha: -1.0, beta: 1.0 }, "alpha"),
            (QuantParams { levels: 4, threshold: 1.0, alpha: 0.0, beta: 0.0 }, "beta"),
        ];
        for (q, word) in cases {
            let err = q.validate().unwrap_err();
            assert!(err.to_string().contains(word), "{err} lacks {word}");
        }
    }

    #[test]
    fn pqa_reference_values() {
        let q = q8();
        let x = Tensor::from_vec(vec![3.4, 0.0, -3.4, 20.0]);
        let y = pqa_forward(&q, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0, -2.0, 8.0]);
    }

    #[test]
    fn qa_reference_values() {
        let q = q8();
        let x = Tensor::from_vec(vec![3.4, -3.4, 100.0]);
        let y = qa_forward(&q, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0, 8.0]);
    }

    #[test]
    fn ste_interior_passes_through() {
        let q = q8();
        let (gx, gt) = pqa_backward_ste(
            &q,
            &Tensor::from_vec(vec![3.4]),
            &Tensor::from_vec(vec![1.0]),
        )
        .unwrap();
        assert_eq!(gx.data(), &[1.0]);
        assert_eq!(gt, 0.0);
    }

    #[test]
    fn ste_boundary_contributions() {
        let q = q8();
        // above beta*theta: gradient to theta is upstream * beta
        let (gx, gt) = pqa_backward_ste(
            &q,
            &Tensor::from_vec(vec![20.0]),
            &Tensor::from_vec(vec![1.0]),
        )
        .unwrap();
        assert_eq!(gx.data(), &[0.0]);
        assert_eq!(gt, 1.0);
        // below alpha*theta: upstream * alpha
        let (gx, gt) = pqa_backward_ste(
            &q,
            &Tensor::from_vec(vec![-5.0]),
            &Tensor::from_vec(vec![2.0]),
        )
        .unwrap();
        assert_eq!(gx.data(), &[0.0]);
        assert_eq!(gt, -0.5);
    }

    #[test]
    fn qa_matches_floor_pqa_off_ties() {
        // Where x*L/theta has fractional part < 1/2, half-up rounding equals
        // floor, so QA agrees with the non-negative part of full-range PQA.
        let q = QuantParams::new(8, 8.0, 0.0, 1.0).unwrap();
        for i in 0..200 {
            let x = -5.0 + 0.07f32 * i as f32; // 0.07 steps avoid exact half-ties
            let u = x as f64; // theta_snn = 1
            if (u - u.floor()) >= 0.5 {
                continue;
            }
            let qa = qa_forward(&q, &Tensor::from_vec(vec![x])).unwrap();
            let pq = pqa_forward(&q, &Tensor::from_vec(vec![x])).unwrap();
            assert_eq!(qa.data()[0], pq.data()[0].max(0.0), "x={x}");
        }
    }

    #[test]
    fn tie_rounds_up_in_pqa_but_floors_in_qa() {
        let q = QuantParams::new(8, 8.0, 0.0, 1.0).unwrap();
        let x = Tensor::from_vec(vec![2.5]);
        assert_eq!(pqa_forward(&q, &x).unwrap().data(), &[3.0]);
        assert_eq!(qa_forward(&q, &x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn idempotent_on_lattice_exactly() {
        for q in [
            q8(),
            QuantParams::new(16, 3.7, -0.5, 0.75).unwrap(),
            QuantParams::new(3, 0.004, 0.0, 1.0).unwrap(),
        ] {
            let x = Tensor::from_vec((-40..40).map(|i| i as f32 * 0.37).collect());
            let once = pqa_forward(&q, &x).unwrap();
            let twice = pqa_forward(&q, &once).unwrap();
            assert_eq!(once.data(), twice.data(), "params {q:?}");
        }
    }

    proptest! {
        #[test]
        fn lattice_property(x in -50.0f32..50.0, li in 0usize..4) {
            let levels = [1u32, 2, 8, 16][li];
            let q = QuantParams::new(levels, 5.0, 0.0, 1.0).unwrap();
            let y = pqa_forward(&q, &Tensor::from_vec(vec![x])).unwrap().data()[0];
            let k = y as f64 * levels as f64 / q.threshold as f64;
            prop_assert!((k - k.round()).abs() < 1e-6);
            let (lo, hi) = q.clip_counts();
            prop_assert!(k.round() as i64 >= lo && k.round() as i64 <= hi);
        }

        #[test]
        fn monotone(a in -30.0f32..30.0, b in -30.0f32..30.0) {
            let q = q8();
            let (lo, hi) = (a.min(b), a.max(b));
            let ya = pqa_forward(&q, &Tensor::from_vec(vec![lo])).unwrap().data()[0];
            let yb = pqa_forward(&q, &Tensor::from_vec(vec![hi])).unwrap().data()[0];
            prop_assert!(ya <= yb);
        }

        #[test]
        fn floor_units_residual_in_range(m in -1e4f64..1e4, t in 1e-3f64..100.0) {
            let k = floor_units(m, t);
            let r = m - t * k as f64;
            prop_assert!((0.0..t).contains(&r), "m={m} t={t} k={k} r={r}");
        }
    }
}
