//! Bernoulli RBM: energy, conditional distributions and CD-1 training.
//!
//! Energy is the bilinear form `E(v, h) = -vᵀWh - b_Vᵀv - b_Hᵀh`, so flipping
//! hidden unit `i` from 0 to 1 lowers the energy by exactly the logit
//! `(vW + b_H)_i` used in the conditional `p(h_i = 1 | v)`.
//!
//! Matrices hold one sample per row. Parameters are `f32`; bias statistics
//! and energies are accumulated in `f64`.

use alloc::format;
use alloc::vec::Vec;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::EpochBatches;
use crate::rng::Stream;
use crate::{Error, Result};

pub const MNIST_VISIBLE: usize = 784;
pub const DEFAULT_HIDDEN: usize = 1000;

/// Logistic function, kept strictly inside `(0, 1)` at `f32` precision.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    let s = 1.0 / (1.0 + (-x).exp());
    s.clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    /// `n_visible × n_hidden`, visible-major.
    weights: Array2<f32>,
    visible_bias: Array1<f32>,
    hidden_bias: Array1<f32>,
}

impl Rbm {
    pub fn new(weights: Array2<f32>, visible_bias: Array1<f32>, hidden_bias: Array1<f32>) -> Result<Self> {
        let (nv, nh) = weights.dim();
        if visible_bias.len() != nv {
            return Err(Error::dim("visible bias length", nv, visible_bias.len()));
        }
        if hidden_bias.len() != nh {
            return Err(Error::dim("hidden bias length", nh, hidden_bias.len()));
        }
        let rbm = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        if !rbm.is_finite() {
            return Err(Error::Numerical("non-finite RBM parameter".into()));
        }
        Ok(rbm)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f32> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f32> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f32> {
        &self.hidden_bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.visible_bias).chain(&self.hidden_bias).all(|x| x.is_finite())
    }

    /// `E(v, h) = -vᵀWh - b_Vᵀv - b_Hᵀh`.
    pub fn energy(&self, v: &[f32], h: &[f32]) -> Result<f64> {
        self.check_visible_len(v.len())?;
        self.check_hidden_len(h.len())?;
        let mut e = 0.0f64;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = self.weights.row(i);
            let vwh: f64 = row.iter().zip(h).map(|(&w, &hj)| f64::from(w) * f64::from(hj)).sum();
            e -= f64::from(vi) * (vwh + f64::from(self.visible_bias[i]));
        }
        e -= self.hidden_bias.iter().zip(h).map(|(&b, &hj)| f64::from(b) * f64::from(hj)).sum::<f64>();
        Ok(e)
    }

    /// `vW + b_H` for a batch of visible rows.
    pub fn hidden_logits(&self, v: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        self.check_visible_len(v.ncols())?;
        let mut out = v.dot(&self.weights);
        out += &self.hidden_bias;
        Ok(out)
    }

    /// `σ((vW + b_H) / T)`.
    pub fn hidden_probs(&self, v: ArrayView2<'_, f32>, temperature: f32) -> Result<Array2<f32>> {
        check_temperature(temperature)?;
        let mut p = self.hidden_logits(v)?;
        apply_sigmoid(&mut p, temperature);
        Ok(p)
    }

    /// Hidden probabilities and one joint Bernoulli draw for each row.
    pub fn hidden_given_visible(
        &self,
        v: ArrayView2<'_, f32>,
        temperature: f32,
        rng: &mut Stream,
    ) -> Result<(Array2<f32>, Array2<f32>)> {
        let p = self.hidden_probs(v, temperature)?;
        let h = sample_bernoulli(&p, rng);
        Ok((p, h))
    }

    /// `σ((hWᵀ + b_V) / T)`; continuous, never binarized.
    pub fn visible_given_hidden(&self, h: ArrayView2<'_, f32>, temperature: f32) -> Result<Array2<f32>> {
        check_temperature(temperature)?;
        self.check_hidden_len(h.ncols())?;
        let mut a = h.dot(&self.weights.t());
        a += &self.visible_bias;
        apply_sigmoid(&mut a, temperature);
        Ok(a)
    }

    fn check_visible_len(&self, len: usize) -> Result<()> {
        if len != self.n_visible() {
            return Err(Error::dim("visible vector length", self.n_visible(), len));
        }
        Ok(())
    }

    fn check_hidden_len(&self, len: usize) -> Result<()> {
        if len != self.n_hidden() {
            return Err(Error::dim("hidden vector length", self.n_hidden(), len));
        }
        Ok(())
    }
}

pub(crate) fn check_temperature(t: f32) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::arg(format!("temperature must be positive and finite, got {t}")));
    }
    Ok(())
}

fn apply_sigmoid(a: &mut Array2<f32>, temperature: f32) {
    if temperature == 1.0 {
        a.mapv_inplace(sigmoid);
    } else {
        let inv = 1.0 / temperature;
        a.mapv_inplace(|x| sigmoid(x * inv));
    }
}

/// Independent Bernoulli draws, row-major, from one stream.
pub fn sample_bernoulli(p: &Array2<f32>, rng: &mut Stream) -> Array2<f32> {
    p.mapv(|pi| if rng.random::<f32>() < pi { 1.0 } else { 0.0 })
}

/// Bernoulli draws where row `r` consumes only `streams[r]`.
pub fn sample_bernoulli_rows(p: &Array2<f32>, streams: &mut [Stream]) -> Result<Array2<f32>> {
    if streams.len() != p.nrows() {
        return Err(Error::dim("stream count", p.nrows(), streams.len()));
    }
    let mut h = Array2::zeros(p.raw_dim());
    for ((prow, mut hrow), rng) in p.outer_iter().zip(h.outer_iter_mut()).zip(streams.iter_mut()) {
        for (&pi, hi) in prow.iter().zip(hrow.iter_mut()) {
            *hi = if rng.random::<f32>() < pi { 1.0 } else { 0.0 };
        }
    }
    Ok(h)
}

/// CD-1 hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub learning_rate: f32,
    pub initial_momentum: f32,
    pub final_momentum: f32,
    /// Epochs `1..=momentum_switch_epoch` use the initial momentum.
    pub momentum_switch_epoch: usize,
    pub weight_decay: f32,
    /// Apply weight decay to both bias vectors as well as the weights.
    pub decay_biases: bool,
    /// Multiply the decay term by the learning rate.
    pub scale_decay: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_std: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_visible: MNIST_VISIBLE,
            n_hidden: DEFAULT_HIDDEN,
            learning_rate: 0.1,
            initial_momentum: 0.5,
            final_momentum: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 0.0002,
            decay_biases: false,
            scale_decay: true,
            epochs: 100,
            batch_size: 125,
            init_std: 0.1,
        }
    }
}

impl TrainConfig {
    /// Momentum coefficient for a 1-based epoch number.
    pub fn momentum(&self, epoch: usize) -> f32 {
        if epoch <= self.momentum_switch_epoch {
            self.initial_momentum
        } else {
            self.final_momentum
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.n_visible == 0 || self.n_hidden == 0 {
            return Err(Error::arg("batch size and layer sizes must be positive"));
        }
        if !(self.init_std >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::arg("init_std and weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// Previous parameter updates, used by the momentum term.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub weights: Array2<f32>,
    pub visible_bias: Array1<f32>,
    pub hidden_bias: Array1<f32>,
}

impl MomentumState {
    pub fn zeros_like(rbm: &Rbm) -> Self {
        Self {
            weights: Array2::zeros(rbm.weights.raw_dim()),
            visible_bias: Array1::zeros(rbm.n_visible()),
            hidden_bias: Array1::zeros(rbm.n_hidden()),
        }
    }
}

/// `W ~ N(0, init_std²)` entrywise (row-major draw order), zero biases.
pub fn init_rbm(cfg: &TrainConfig, rng: &mut Stream) -> Result<Rbm> {
    cfg.validate()?;
    let normal = Normal::new(0.0f32, cfg.init_std).map_err(|e| Error::arg(format!("{e}")))?;
    let weights = Array2::from_shape_simple_fn((cfg.n_visible, cfg.n_hidden), || normal.sample(rng));
    Ok(Rbm {
        weights,
        visible_bias: Array1::zeros(cfg.n_visible),
        hidden_bias: Array1::zeros(cfg.n_hidden),
    })
}

/// One CD-1 update on `batch`, in place. Returns the batch's summed squared
/// reconstruction error.
///
/// Positive statistics pair the data with `p(h|v)`. The negative phase samples
/// binary hiddens, reconstructs `v' = p(v|h)` and pairs it with `p(h|v')`.
/// Each parameter moves by `γ·Δ_prev + η·(⟨pos⟩ − ⟨neg⟩)/B − ηλ·θ` where γ
/// follows the epoch's momentum schedule (`epoch` is 1-based). Without
/// `scale_decay` the last term is `λ·θ`.
pub fn cd1_step(
    rbm: &mut Rbm,
    batch: ArrayView2<'_, f32>,
    cfg: &TrainConfig,
    mom: &mut MomentumState,
    epoch: usize,
    rng: &mut Stream,
) -> Result<f64> {
    let b = batch.nrows();
    if b == 0 {
        return Err(Error::arg("empty batch"));
    }
    if mom.weights.dim() != rbm.weights.dim() {
        return Err(Error::arg("momentum state shape does not match the model"));
    }
    let (ph0, h0) = rbm.hidden_given_visible(batch, 1.0, rng)?;
    let v1 = rbm.visible_given_hidden(h0.view(), 1.0)?;
    let ph1 = rbm.hidden_probs(v1.view(), 1.0)?;

    let gamma = cfg.momentum(epoch);
    let scale = cfg.learning_rate / b as f32;
    let decay = if cfg.scale_decay {
        cfg.learning_rate * cfg.weight_decay
    } else {
        cfg.weight_decay
    };
    let bias_decay = if cfg.decay_biases { decay } else { 0.0 };

    mom.weights *= gamma;
    general_mat_mul(scale, &batch.t(), &ph0, 1.0, &mut mom.weights);
    general_mat_mul(-scale, &v1.t(), &ph1, 1.0, &mut mom.weights);
    if decay != 0.0 {
        mom.weights.scaled_add(-decay, &rbm.weights);
    }

    let dv = column_diff_sums(batch, v1.view());
    let dh = column_diff_sums(ph0.view(), ph1.view());
    let scale64 = f64::from(cfg.learning_rate) / b as f64;
    Zip::from(&mut mom.visible_bias)
        .and(&rbm.visible_bias)
        .and(&dv)
        .for_each(|d, &theta, &g| *d = gamma * *d + (scale64 * g) as f32 - bias_decay * theta);
    Zip::from(&mut mom.hidden_bias)
        .and(&rbm.hidden_bias)
        .and(&dh)
        .for_each(|d, &theta, &g| *d = gamma * *d + (scale64 * g) as f32 - bias_decay * theta);

    rbm.weights += &mom.weights;
    rbm.visible_bias += &mom.visible_bias;
    rbm.hidden_bias += &mom.hidden_bias;

    let sq_err = Zip::from(batch).and(&v1).fold(0.0f64, |acc, &a, &r| {
        let d = f64::from(a) - f64::from(r);
        acc + d * d
    });
    Ok(sq_err)
}

/// Column sums of `a - b`, accumulated in `f64`.
fn column_diff_sums(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(a.ncols());
    for (ra, rb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
        Zip::from(&mut acc)
            .and(&ra)
            .and(&rb)
            .for_each(|s, &x, &y| *s += f64::from(x) - f64::from(y));
    }
    acc
}

/// A trained model plus its per-epoch root-mean-square reconstruction error.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rbm: Rbm,
    pub rmse: Vec<f64>,
}

/// Trains from scratch on the rows of `data` (intensities in `[0, 1]`).
pub fn train(data: ArrayView2<'_, f32>, cfg: &TrainConfig, rng: &mut Stream) -> Result<TrainOutcome> {
    train_with(data, cfg, rng, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, rmse)` after every epoch.
pub fn train_with(
    data: ArrayView2<'_, f32>,
    cfg: &TrainConfig,
    rng: &mut Stream,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.ncols() != cfg.n_visible {
        return Err(Error::dim("training data columns", cfg.n_visible, data.ncols()));
    }
    let mut rbm = init_rbm(cfg, rng)?;
    let mut mom = MomentumState::zeros_like(&rbm);
    let mut rmse = Vec::with_capacity(cfg.epochs);
    let mut batch = Array2::<f32>::zeros((cfg.batch_size, cfg.n_visible));
    for epoch in 1..=cfg.epochs {
        let plan = EpochBatches::new(data.nrows(), cfg.batch_size, rng)?;
        let mut sq_err = 0.0;
        for idx in plan.iter() {
            if batch.nrows() != idx.len() {
                batch = Array2::zeros((idx.len(), cfg.n_visible));
            }
            for (mut row, &i) in batch.outer_iter_mut().zip(idx) {
                row.assign(&data.row(i));
            }
            sq_err += cd1_step(&mut rbm, batch.view(), cfg, &mut mom, epoch, rng)?;
        }
        if !rbm.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        let e = (sq_err / (data.nrows() * cfg.n_visible) as f64).sqrt();
        on_epoch(epoch, e);
        rmse.push(e);
    }
    Ok(TrainOutcome { rbm, rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::{array, Array};

    fn random_model(nv: usize, nh: usize, seed: u64) -> Rbm {
        let mut r = rng::stream(seed);
        let w = Array::from_shape_simple_fn((nv, nh), || r.random_range(-2.0f32..2.0));
        let bv = Array::from_shape_simple_fn(nv, || r.random_range(-1.0f32..1.0));
        let bh = Array::from_shape_simple_fn(nh, || r.random_range(-1.0f32..1.0));
        Rbm::new(w, bv, bh).unwrap()
    }

    #[test]
    fn energy_zero_state_is_zero() {
        let m = random_model(3, 2, 1);
        assert_eq!(m.energy(&[0.0; 3], &[0.0; 2]).unwrap(), 0.0);
    }

    #[test]
    fn energy_single_unit_hand_case() {
        let m = Rbm::new(array![[2.0]], array![0.0], array![0.0]).unwrap();
        assert_eq!(m.energy(&[1.0], &[1.0]).unwrap(), -2.0);
    }

    #[test]
    fn energy_dimension_mismatch() {
        let m = Rbm::zeros(3, 2);
        assert!(matches!(m.energy(&[0.0; 2], &[0.0; 2]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flipping_a_hidden_unit_changes_energy_by_its_logit() {
        let mut r = rng::stream(99);
        for case in 0..100 {
            let m = random_model(3, 2, 1000 + case);
            let v: Vec<f32> = (0..3).map(|_| r.random::<f32>()).collect();
            let h: Vec<f32> = (0..2).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
            for i in 0..2 {
                let (mut h0, mut h1) = (h.clone(), h.clone());
                h0[i] = 0.0;
                h1[i] = 1.0;
                let de = m.energy(&v, &h0).unwrap() - m.energy(&v, &h1).unwrap();
                // Independent f64 logit straight from the parameters.
                let logit: f64 = (0..3).map(|k| f64::from(v[k]) * f64::from(m.weights()[[k, i]])).sum::<f64>()
                    + f64::from(m.hidden_bias()[i]);
                assert!((de - logit).abs() < 1e-10, "case {case}: {de} vs {logit}");
                // Unit activation rule at T = 1 equals the conditional.
                let p_flip = 1.0 / (1.0 + (-de).exp());
                let vm = Array2::from_shape_vec((1, 3), v.clone()).unwrap();
                let p = m.hidden_probs(vm.view(), 1.0).unwrap()[[0, i]];
                assert!((p_flip - f64::from(p)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_model_gives_half_probabilities() {
        let m = Rbm::zeros(4, 3);
        let v = Array2::from_elem((2, 4), 0.7f32);
        let p = m.hidden_probs(v.view(), 1.0).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn huge_temperature_flattens_to_half() {
        let m = random_model(5, 4, 3);
        let v = Array2::from_elem((1, 5), 1.0f32);
        let p = m.hidden_probs(v.view(), 1e6).unwrap();
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-6));
    }

    #[test]
    fn non_positive_temperature_rejected() {
        let m = Rbm::zeros(2, 2);
        let v = Array2::zeros((1, 2));
        assert!(matches!(m.hidden_probs(v.view(), 0.0), Err(Error::Argument(_))));
        assert!(matches!(m.visible_given_hidden(v.view(), -1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn bernoulli_draws_match_probabilities() {
        let m = random_model(6, 4, 5);
        let v = Array2::from_shape_vec((1, 6), vec![0.2, 0.9, 0.0, 1.0, 0.5, 0.3]).unwrap();
        let p = m.hidden_probs(v.view(), 1.0).unwrap();
        let reps = Array2::from_shape_fn((100_000, 6), |(_, j)| v[[0, j]]);
        let (_, h) = m.hidden_given_visible(reps.view(), 1.0, &mut rng::stream(8)).unwrap();
        let mean = h.mean_axis(Axis(0)).unwrap();
        for j in 0..4 {
            assert!((mean[j] - p[[0, j]]).abs() < 0.01, "unit {j}: {} vs {}", mean[j], p[[0, j]]);
        }
    }

    #[test]
    fn visible_given_zero_hidden_is_sigmoid_of_bias() {
        let m = random_model(4, 3, 6);
        let out = m.visible_given_hidden(Array2::zeros((1, 3)).view(), 2.0).unwrap();
        for i in 0..4 {
            assert_eq!(out[[0, i]], sigmoid(m.visible_bias()[i] / 2.0));
        }
    }

    #[test]
    fn visible_given_hidden_hand_fixture() {
        // W = [[1, -2], [0.5, 3]], b_V = [0.1, -0.4], h = [1, 1], T = 1:
        // logits = [1 - 2 + 0.1, 0.5 + 3 - 0.4] = [-0.9, 3.1].
        let m = Rbm::new(array![[1.0, -2.0], [0.5, 3.0]], array![0.1, -0.4], array![0.0, 0.0]).unwrap();
        let out = m.visible_given_hidden(array![[1.0f32, 1.0]].view(), 1.0).unwrap();
        let expect = [1.0 / (1.0 + 0.9f64.exp()), 1.0 / (1.0 + (-3.1f64).exp())];
        for i in 0..2 {
            assert!((f64::from(out[[0, i]]) - expect[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn visible_outputs_strictly_inside_unit_interval() {
        let m = Rbm::new(array![[400.0, -400.0]], array![0.0], array![0.0, 0.0]).unwrap();
        for h in [[1.0f32, 0.0], [0.0, 1.0]] {
            let out = m.visible_given_hidden(Array2::from_shape_vec((1, 2), h.to_vec()).unwrap().view(), 1.0).unwrap();
            assert!(out.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn init_has_zero_biases_and_centred_weights() {
        let cfg = TrainConfig::default();
        let m = init_rbm(&cfg, &mut rng::stream(1)).unwrap();
        assert!(m.visible_bias().iter().all(|&b| b == 0.0));
        assert!(m.hidden_bias().iter().all(|&b| b == 0.0));
        let n = m.weights().len() as f64;
        let mean: f64 = m.weights().iter().map(|&w| f64::from(w)).sum::<f64>() / n;
        let var: f64 = m.weights().iter().map(|&w| (f64::from(w) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * 0.1 / n.sqrt(), "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 1e-3, "std {}", var.sqrt());
        assert_eq!(m, init_rbm(&cfg, &mut rng::stream(1)).unwrap());
    }

    #[test]
    fn momentum_switches_after_epoch_five() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.momentum(1), 0.5);
        assert_eq!(cfg.momentum(5), 0.5);
        assert_eq!(cfg.momentum(6), 0.9);
        assert_eq!(cfg.momentum(100), 0.9);
    }

    #[test]
    fn null_update_leaves_parameters() {
        let mut m = random_model(5, 3, 2);
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut mom = MomentumState::zeros_like(&m);
        let batch = Array2::from_elem((4, 5), 0.5f32);
        cd1_step(&mut m, batch.view(), &cfg, &mut mom, 1, &mut rng::stream(0)).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn saturated_model_update_is_momentum_minus_decay() {
        // v = 1 with a huge positive weight: p(h|v) = 1, h = 1 and the
        // reconstruction is 1 again, so the gradient vanishes.
        let mut m = Rbm::new(array![[100.0]], array![0.0], array![0.0]).unwrap();
        let cfg = TrainConfig {
            n_visible: 1,
            n_hidden: 1,
            ..TrainConfig::default()
        };
        let mut mom = MomentumState::zeros_like(&m);
        mom.weights[[0, 0]] = 0.3;
        mom.visible_bias[0] = -0.2;
        let batch = array![[1.0f32]];
        cd1_step(&mut m, batch.view(), &cfg, &mut mom, 6, &mut rng::stream(0)).unwrap();
        let expect_dw = 0.9 * 0.3 - 0.1 * 0.0002 * 100.0;
        assert!((mom.weights[[0, 0]] - expect_dw).abs() < 1e-5);
        assert!((m.weights()[[0, 0]] - (100.0 + expect_dw)).abs() < 1e-4);
        assert!((mom.visible_bias[0] - 0.9 * -0.2).abs() < 1e-5);
    }

    #[test]
    fn unscaled_decay_ignores_learning_rate() {
        let mut m = Rbm::new(array![[100.0]], array![0.0], array![0.0]).unwrap();
        let cfg = TrainConfig {
            n_visible: 1,
            n_hidden: 1,
            scale_decay: false,
            ..TrainConfig::default()
        };
        let mut mom = MomentumState::zeros_like(&m);
        cd1_step(&mut m, array![[1.0f32]].view(), &cfg, &mut mom, 1, &mut rng::stream(0)).unwrap();
        assert!((mom.weights[[0, 0]] + 0.0002 * 100.0).abs() < 1e-6);
    }

    #[test]
    fn bias_decay_toggle() {
        let m0 = Rbm::new(array![[0.0]], array![1.0], array![1.0]).unwrap();
        let batch = array![[0.5f32]];
        let run = |decay_biases| {
            let mut m = m0.clone();
            let cfg = TrainConfig {
                n_visible: 1,
                n_hidden: 1,
                learning_rate: 1e-30,
                weight_decay: 0.5,
                decay_biases,
                scale_decay: false,
                ..TrainConfig::default()
            };
            let mut mom = MomentumState::zeros_like(&m);
            cd1_step(&mut m, batch.view(), &cfg, &mut mom, 1, &mut rng::stream(0)).unwrap();
            m
        };
        assert!((run(true).visible_bias()[0] - 0.5).abs() < 1e-6);
        assert!((run(false).visible_bias()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut m = Rbm::zeros(2, 2);
        let mut mom = MomentumState::zeros_like(&m);
        let batch = Array2::<f32>::zeros((0, 2));
        let err = cd1_step(&mut m, batch.view(), &TrainConfig::default(), &mut mom, 1, &mut rng::stream(0));
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = TrainConfig {
            n_visible: 4,
            n_hidden: 3,
            epochs: 0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let data = Array2::from_elem((6, 4), 0.5f32);
        let out = train(data.view(), &cfg, &mut rng::stream(5)).unwrap();
        assert!(out.rmse.is_empty());
        assert_eq!(out.rbm, init_rbm(&cfg, &mut rng::stream(5)).unwrap());
    }

    /// 4×4 images holding one full horizontal or vertical bar.
    fn bars(n: usize, seed: u64) -> Array2<f32> {
        let mut r = rng::stream(seed);
        let mut data = Array2::zeros((n, 16));
        for mut row in data.outer_iter_mut() {
            let k = r.random_range(0..8);
            for j in 0..4 {
                let idx = if k < 4 { k * 4 + j } else { j * 4 + (k - 4) };
                row[idx] = 1.0;
            }
        }
        data
    }

    #[test]
    fn training_reduces_reconstruction_error_and_is_deterministic() {
        let data = bars(200, 4);
        let cfg = TrainConfig {
            n_visible: 16,
            n_hidden: 8,
            epochs: 30,
            batch_size: 10,
            ..TrainConfig::default()
        };
        let a = train(data.view(), &cfg, &mut rng::stream(21)).unwrap();
        let b = train(data.view(), &cfg, &mut rng::stream(21)).unwrap();
        assert_eq!(a.rbm, b.rbm);
        assert_eq!(a.rmse, b.rmse);
        assert_eq!(a.rmse.len(), 30);
        assert!(a.rmse[29] < a.rmse[0], "{:?}", a.rmse);
        assert!(a.rbm.is_finite());
    }

    #[test]
    fn train_rejects_wrong_width() {
        let data = Array2::from_elem((10, 3), 0.5f32);
        let cfg = TrainConfig {
            n_visible: 4,
            n_hidden: 2,
            batch_size: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(train(data.view(), &cfg, &mut rng::stream(0)), Err(Error::Dimension { .. })));
    }
}
