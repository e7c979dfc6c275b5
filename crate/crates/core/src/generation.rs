//! Top-down sampling trajectories.
//!
//! Step 1 turns the seeding hidden state into `V₁ = σ((H·Wᵀ + b_V)/T)`. Every
//! later step samples binary `H_s ~ Bernoulli(σ((V_{s−1}·W + b_H)/T))` and
//! regenerates a continuous `V_s` from it. Visible units are never binarized.
//!
//! Trajectories of one batch advance together as matrix rows, but trajectory
//! `i` consumes only its own stream, so its states do not depend on the batch
//! it ran in.

use alloc::vec::Vec;

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use crate::biasing::{BiasKind, BiasTarget, HiddenBias};
use crate::rbm::{check_temperature, sample_bernoulli_rows, Rbm};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub steps: usize,
    pub temperature: f32,
    pub n_samples: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            temperature: 1.0,
            n_samples: 100,
        }
    }
}

/// Identifies the stream a trajectory was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub seed: u64,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `steps × n_visible`, values in (0, 1).
    visible: Array2<f32>,
    /// `(steps − 1) × n_hidden`; row `j` is the sampled state `H_{j+2}`.
    hidden: Array2<f32>,
    kind: BiasKind,
    target: BiasTarget,
    temperature: f32,
    stream: Option<StreamId>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.visible.nrows()
    }

    pub fn visible(&self) -> &Array2<f32> {
        &self.visible
    }

    /// Visible state of a 1-based step.
    pub fn visible_at(&self, step: usize) -> ArrayView1<'_, f32> {
        self.visible.row(step - 1)
    }

    pub fn hidden(&self) -> &Array2<f32> {
        &self.hidden
    }

    pub fn kind(&self) -> BiasKind {
        self.kind
    }

    pub fn target(&self) -> BiasTarget {
        self.target
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }

    pub fn stream(&self) -> Option<StreamId> {
        self.stream
    }

    /// Active-hidden percentage attributed to a 1-based step.
    ///
    /// Step `s ≥ 2` reports the sampled state `H_s` that produced `V_s`. Step 1
    /// is produced by the seeding bias, which need not be binary, so it
    /// reports the first sampled state `H₂`. `None` for one-step trajectories.
    pub fn active_fraction_at(&self, step: usize) -> Option<f64> {
        if self.hidden.nrows() == 0 || step == 0 || step > self.steps() {
            return None;
        }
        let row = if step == 1 { 0 } else { step - 2 };
        Some(active_fraction(self.hidden.row(row).as_slice()?))
    }

    /// [`Self::active_fraction_at`] for every step.
    pub fn active_fraction_curve(&self) -> Option<Vec<f64>> {
        (1..=self.steps()).map(|s| self.active_fraction_at(s)).collect()
    }
}

/// Percentage of units equal to 1.
pub fn active_fraction(h: &[f32]) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    100.0 * h.iter().filter(|&&x| x == 1.0).count() as f64 / h.len() as f64
}

/// One trajectory of `steps` visible states drawn from `rng`.
pub fn generate(rbm: &Rbm, bias: &HiddenBias, steps: usize, temperature: f32, rng: &mut Stream) -> Result<Trajectory> {
    let mut streams = [rng.clone()];
    let mut out = generate_streams(rbm, bias, steps, temperature, &mut streams)?;
    *rng = streams[0].clone();
    Ok(out.pop().expect("one stream gives one trajectory"))
}

/// `n_samples` trajectories; trajectory `i` uses stream `i` of `master_seed`.
pub fn run_batch(rbm: &Rbm, bias: &HiddenBias, cfg: &GenerationConfig, master_seed: u64) -> Result<Vec<Trajectory>> {
    if cfg.n_samples == 0 {
        return Err(Error::arg("n_samples must be at least 1"));
    }
    run_indices(rbm, bias, cfg, master_seed, 0..cfg.n_samples as u64)
}

/// Trajectories for an arbitrary range of stream indices of `master_seed`.
pub fn run_indices(
    rbm: &Rbm,
    bias: &HiddenBias,
    cfg: &GenerationConfig,
    master_seed: u64,
    indices: core::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    let mut streams: Vec<Stream> = indices.clone().map(|i| rng::indexed(master_seed, i)).collect();
    let mut out = generate_streams(rbm, bias, cfg.steps, cfg.temperature, &mut streams)?;
    for (t, index) in out.iter_mut().zip(indices) {
        t.stream = Some(StreamId {
            seed: master_seed,
            index,
        });
    }
    Ok(out)
}

/// One trajectory per stream, advanced together.
pub fn generate_streams(
    rbm: &Rbm,
    bias: &HiddenBias,
    steps: usize,
    temperature: f32,
    streams: &mut [Stream],
) -> Result<Vec<Trajectory>> {
    if steps == 0 {
        return Err(Error::arg("a trajectory needs at least one step"));
    }
    check_temperature(temperature)?;
    if bias.len() != rbm.n_hidden() {
        return Err(Error::dim("biasing vector length", rbm.n_hidden(), bias.len()));
    }
    let n = streams.len();
    let (nv, nh) = (rbm.n_visible(), rbm.n_hidden());
    let seed = ArrayView2::from_shape((1, nh), bias.values()).expect("length checked");
    let v1 = rbm.visible_given_hidden(seed, temperature)?;

    let mut visible: Vec<Array2<f32>> = (0..n).map(|_| Array2::zeros((steps, nv))).collect();
    let mut hidden: Vec<Array2<f32>> = (0..n).map(|_| Array2::zeros((steps - 1, nh))).collect();
    let mut v = Array2::<f32>::zeros((n, nv));
    for (mut row, vis) in v.outer_iter_mut().zip(visible.iter_mut()) {
        row.assign(&v1.row(0));
        vis.row_mut(0).assign(&v1.row(0));
    }
    for step in 1..steps {
        let p = rbm.hidden_probs(v.view(), temperature)?;
        let h = sample_bernoulli_rows(&p, streams)?;
        v = rbm.visible_given_hidden(h.view(), temperature)?;
        for (i, (vis, hid)) in visible.iter_mut().zip(hidden.iter_mut()).enumerate() {
            hid.row_mut(step - 1).assign(&h.row(i));
            vis.row_mut(step).assign(&v.row(i));
        }
    }
    Ok(visible
        .into_iter()
        .zip(hidden)
        .map(|(visible, hidden)| Trajectory {
            visible,
            hidden,
            kind: bias.kind(),
            target: bias.target(),
            temperature,
            stream: None,
        })
        .collect())
}

/// Visible states of several trajectories stacked into one matrix (trajectory-major).
pub fn stack_visible(trajectories: &[Trajectory]) -> Array2<f32> {
    let Some(first) = trajectories.first() else {
        return Array2::zeros((0, 0));
    };
    let (steps, nv) = first.visible.dim();
    let mut out = Array2::zeros((steps * trajectories.len(), nv));
    for (k, t) in trajectories.iter().enumerate() {
        out.slice_mut(s![k * steps..(k + 1) * steps, ..]).assign(&t.visible);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biasing::{BiasKind, BiasTarget};
    use ndarray::Array;
    use rand::Rng;

    fn model(seed: u64) -> Rbm {
        let mut r = rng::stream(seed);
        let w = Array::from_shape_simple_fn((12, 9), || r.random_range(-1.5f32..1.5));
        let bv = Array::from_shape_simple_fn(12, || r.random_range(-0.5f32..0.5));
        let bh = Array::from_shape_simple_fn(9, || r.random_range(-0.5f32..0.5));
        Rbm::new(w, bv, bh).unwrap()
    }

    fn bias(n: usize) -> HiddenBias {
        let values = (0..n).map(|i| (i as f32 * 0.37).sin()).collect();
        HiddenBias::new(values, BiasKind::SingleDigit, BiasTarget::Digit(3)).unwrap()
    }

    #[test]
    fn single_step_has_no_hidden_samples() {
        let t = generate(&model(1), &bias(9), 1, 1.0, &mut rng::stream(0)).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.hidden().nrows(), 0);
        assert_eq!(t.active_fraction_at(1), None);
    }

    #[test]
    fn zero_model_emits_half_grey() {
        let m = Rbm::zeros(6, 4);
        let t = generate(&m, &bias(4), 10, 1.0, &mut rng::stream(0)).unwrap();
        assert!(t.visible().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shapes_and_ranges() {
        let t = generate(&model(2), &bias(9), 25, 0.7, &mut rng::stream(4)).unwrap();
        assert_eq!(t.visible().dim(), (25, 12));
        assert_eq!(t.hidden().dim(), (24, 9));
        assert!(t.visible().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(t.hidden().iter().all(|&h| h == 0.0 || h == 1.0));
        assert_eq!(t.active_fraction_curve().unwrap().len(), 25);
        assert_eq!(t.active_fraction_at(1), t.active_fraction_at(2));
    }

    #[test]
    fn fixed_seed_reproduces() {
        let m = model(3);
        let a = generate(&m, &bias(9), 30, 1.0, &mut rng::stream(17)).unwrap();
        let b = generate(&m, &bias(9), 30, 1.0, &mut rng::stream(17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_of_one_matches_generate_on_stream_zero() {
        let m = model(5);
        let cfg = GenerationConfig {
            steps: 20,
            n_samples: 1,
            ..GenerationConfig::default()
        };
        let batch = run_batch(&m, &bias(9), &cfg, 99).unwrap();
        let single = generate(&m, &bias(9), 20, 1.0, &mut rng::indexed(99, 0)).unwrap();
        assert_eq!(batch[0].visible(), single.visible());
        assert_eq!(batch[0].hidden(), single.hidden());
    }

    #[test]
    fn trajectories_do_not_depend_on_batch_split() {
        let m = model(6);
        let cfg = GenerationConfig {
            steps: 15,
            n_samples: 12,
            ..GenerationConfig::default()
        };
        let all = run_batch(&m, &bias(9), &cfg, 3).unwrap();
        let mut pieces = run_indices(&m, &bias(9), &cfg, 3, 7..12).unwrap();
        pieces.splice(0..0, run_indices(&m, &bias(9), &cfg, 3, 0..7).unwrap());
        assert_eq!(all, pieces);
        assert_eq!(all[4].stream(), Some(StreamId { seed: 3, index: 4 }));
    }

    #[test]
    fn bias_length_and_steps_checked() {
        let m = model(7);
        assert!(matches!(
            generate(&m, &bias(8), 5, 1.0, &mut rng::stream(0)),
            Err(Error::Dimension { .. })
        ));
        assert!(generate(&m, &bias(9), 0, 1.0, &mut rng::stream(0)).is_err());
        assert!(generate(&m, &bias(9), 3, 0.0, &mut rng::stream(0)).is_err());
        let cfg = GenerationConfig {
            n_samples: 0,
            ..GenerationConfig::default()
        };
        assert!(run_batch(&m, &bias(9), &cfg, 0).is_err());
    }

    #[test]
    fn active_fraction_arithmetic() {
        assert_eq!(active_fraction(&[0.0; 10]), 0.0);
        assert_eq!(active_fraction(&[1.0; 10]), 100.0);
        let mut h = alloc::vec![0.0f32; 1000];
        h[..149].fill(1.0);
        assert!((active_fraction(&h) - 14.9).abs() < 1e-12);
    }

    #[test]
    fn stacking_is_trajectory_major() {
        let m = model(8);
        let cfg = GenerationConfig {
            steps: 4,
            n_samples: 3,
            ..GenerationConfig::default()
        };
        let ts = run_batch(&m, &bias(9), &cfg, 1).unwrap();
        let st = stack_visible(&ts);
        assert_eq!(st.dim(), (12, 12));
        assert_eq!(st.row(5), ts[1].visible().row(1));
    }
}
