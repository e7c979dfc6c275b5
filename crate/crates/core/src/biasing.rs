//! Label biasing: linear maps between hidden representations and digit
//! labels, inverted to obtain hidden states that seed top-down generation,
//! plus the two chimera constructions mixing two digits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::dataset::Dataset;
use crate::linalg::{min_norm_row_solution, spd_solve};
use crate::rbm::Rbm;
use crate::{Error, Result, DIGIT_COUNT};

/// Ridge strength for the readout's least-squares fit.
pub const READOUT_RIDGE: f64 = 1e-6;

/// Default number of active units kept in binary chimera states.
pub const DEFAULT_CHIMERA_K: usize = 149;

/// Rows per chunk when accumulating the normal equations.
const GRAM_CHUNK: usize = 4096;

/// Affine map `scores = h·C + c` from hidden representations to the ten digit scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReadout {
    /// `n_hidden × 10`.
    weights: Array2<f32>,
    bias: Array1<f32>,
}

impl LinearReadout {
    pub fn new(weights: Array2<f32>, bias: Array1<f32>) -> Result<Self> {
        if weights.ncols() != DIGIT_COUNT {
            return Err(Error::dim("readout columns", DIGIT_COUNT, weights.ncols()));
        }
        if bias.len() != DIGIT_COUNT {
            return Err(Error::dim("readout bias length", DIGIT_COUNT, bias.len()));
        }
        if !weights.iter().chain(&bias).all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite readout parameter".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array2<f32> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f32> {
        &self.bias
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.nrows()
    }

    pub fn scores(&self, hidden: ArrayView2<'_, f32>) -> Result<Array2<f32>> {
        if hidden.ncols() != self.n_hidden() {
            return Err(Error::dim("hidden vector length", self.n_hidden(), hidden.ncols()));
        }
        let mut s = hidden.dot(&self.weights);
        s += &self.bias;
        Ok(s)
    }

    /// Argmax digit per row (lowest index wins ties).
    pub fn predict(&self, hidden: ArrayView2<'_, f32>) -> Result<Vec<u8>> {
        Ok(self.scores(hidden)?.outer_iter().map(|r| argmax(r.iter().copied()) as u8).collect())
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f32>) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Ridge least-squares fit of one-hot digit labels on `features`.
///
/// Solves `(XᵀX + λI)B = XᵀY` with `X` the features plus a constant column
/// (not penalized), accumulated in `f64`.
pub fn fit_readout(features: ArrayView2<'_, f32>, labels: &[u8], ridge: f64) -> Result<LinearReadout> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(Error::dim("label count", n, labels.len()));
    }
    if n == 0 {
        return Err(Error::arg("cannot fit a readout on zero examples"));
    }
    if let Some(l) = labels.iter().find(|&&l| usize::from(l) >= DIGIT_COUNT) {
        return Err(Error::Data(format!("readout labels must be digits, found {l}")));
    }
    let mut gram = Array2::<f64>::zeros((d + 1, d + 1));
    let mut rhs = Array2::<f64>::zeros((d + 1, DIGIT_COUNT));
    for start in (0..n).step_by(GRAM_CHUNK) {
        let end = (start + GRAM_CHUNK).min(n);
        let mut x = Array2::<f64>::ones((end - start, d + 1));
        x.slice_mut(s![.., ..d]).assign(&features.slice(s![start..end, ..]).mapv(f64::from));
        gram += &x.t().dot(&x);
        for (row, &l) in x.outer_iter().zip(&labels[start..end]) {
            let mut col = rhs.column_mut(usize::from(l));
            col += &row;
        }
    }
    for i in 0..d {
        gram[[i, i]] += ridge;
    }
    let coef = spd_solve(gram.view(), rhs.view())
        .map_err(|e| Error::Numerical(format!("readout normal equations are degenerate: {e}")))?;
    let weights = coef.slice(s![..d, ..]).mapv(|x| x as f32);
    let bias = coef.row(d).mapv(|x| x as f32);
    LinearReadout::new(weights, bias)
}

/// Fits the readout on `p(h | v)` at temperature 1 for the labelled digits in `data`.
pub fn train_readout(rbm: &Rbm, data: &Dataset) -> Result<LinearReadout> {
    let labels = data.labels()?;
    let features = hidden_representation(rbm, data)?;
    fit_readout(features.view(), &labels, READOUT_RIDGE)
}

/// Least-squares linear map from label vectors back to hidden
/// representations, `h ≈ l·P`.
///
/// With one-hot labels the solution `P = Y⁺H` has the mean hidden
/// representation of digit `d` as row `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelProjection {
    /// `10 × n_hidden`.
    rows: Array2<f32>,
}

impl LabelProjection {
    pub fn new(rows: Array2<f32>) -> Result<Self> {
        if rows.nrows() != DIGIT_COUNT {
            return Err(Error::dim("projection rows", DIGIT_COUNT, rows.nrows()));
        }
        if !rows.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("non-finite projection entry".into()));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &Array2<f32> {
        &self.rows
    }

    pub fn n_hidden(&self) -> usize {
        self.rows.ncols()
    }

    /// `l·P` for a label vector `l`.
    pub fn project(&self, label: &[f32]) -> Result<Vec<f32>> {
        check_label(label)?;
        let mut h = vec![0.0f64; self.n_hidden()];
        for (row, &l) in self.rows.outer_iter().zip(label) {
            for (acc, &p) in h.iter_mut().zip(row) {
                *acc += f64::from(l) * f64::from(p);
            }
        }
        Ok(h.iter().map(|&x| x as f32).collect())
    }
}

/// Fits the label-to-hidden map on `features`; every digit must occur.
pub fn fit_label_projection(features: ArrayView2<'_, f32>, labels: &[u8]) -> Result<LabelProjection> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(Error::dim("label count", n, labels.len()));
    }
    let mut sums = Array2::<f64>::zeros((DIGIT_COUNT, d));
    let mut counts = [0usize; DIGIT_COUNT];
    for (row, &l) in features.outer_iter().zip(labels) {
        let k = usize::from(l);
        if k >= DIGIT_COUNT {
            return Err(Error::Data(format!("projection labels must be digits, found {l}")));
        }
        counts[k] += 1;
        sums.row_mut(k).zip_mut_with(&row, |s, &x| *s += f64::from(x));
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("digit {k} has no examples to fit the label projection")));
    }
    let rows = Array2::from_shape_fn((DIGIT_COUNT, d), |(k, j)| (sums[[k, j]] / counts[k] as f64) as f32);
    LabelProjection::new(rows)
}

/// Fits the label projection on `p(h | v)` at temperature 1.
pub fn train_label_projection(rbm: &Rbm, data: &Dataset) -> Result<LabelProjection> {
    let labels = data.labels()?;
    let features = hidden_representation(rbm, data)?;
    fit_label_projection(features.view(), &labels)
}

/// How a label vector is turned into a hidden biasing vector.
#[derive(Debug, Clone, Copy)]
pub enum LabelInversion<'a> {
    /// The least-squares label-to-hidden map.
    Projection(&'a LabelProjection),
    /// The minimum-norm hidden vector the readout maps onto the label.
    MinimumNorm(&'a LinearReadout),
}

impl LabelInversion<'_> {
    pub fn biasing_vector(&self, label: &[f32]) -> Result<Vec<f32>> {
        match self {
            Self::Projection(p) => p.project(label),
            Self::MinimumNorm(r) => label_biasing_vector(r, label),
        }
    }

    pub fn n_hidden(&self) -> usize {
        match self {
            Self::Projection(p) => p.n_hidden(),
            Self::MinimumNorm(r) => r.n_hidden(),
        }
    }
}

/// Hidden probabilities at T = 1 for every image of `data`.
pub fn hidden_representation(rbm: &Rbm, data: &Dataset) -> Result<Array2<f32>> {
    let mut out = Array2::<f32>::zeros((data.len(), rbm.n_hidden()));
    let idx: Vec<usize> = (0..data.len()).collect();
    for (k, chunk) in idx.chunks(GRAM_CHUNK).enumerate() {
        let v = data.gather(chunk);
        let p = rbm.hidden_probs(v.view(), 1.0)?;
        let start = k * GRAM_CHUNK;
        out.slice_mut(s![start..start + chunk.len(), ..]).assign(&p);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BiasKind {
    SingleDigit,
    ChimeraIntersection,
    ChimeraDouble,
}

impl BiasKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasKind::SingleDigit => "single",
            BiasKind::ChimeraIntersection => "intersection",
            BiasKind::ChimeraDouble => "double",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(BiasKind::SingleDigit),
            "intersection" => Some(BiasKind::ChimeraIntersection),
            "double" => Some(BiasKind::ChimeraDouble),
            _ => None,
        }
    }

    pub fn is_chimera(self) -> bool {
        self != BiasKind::SingleDigit
    }
}

/// The digit or unordered digit pair a bias targets. Pairs are stored sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BiasTarget {
    Digit(u8),
    Pair(u8, u8),
}

impl BiasTarget {
    pub fn pair(a: u8, b: u8) -> Result<Self> {
        if a == b {
            return Err(Error::arg(format!("chimera needs two distinct digits, got {a} twice")));
        }
        check_digit(a)?;
        check_digit(b)?;
        Ok(BiasTarget::Pair(a.min(b), a.max(b)))
    }

    pub fn digits(self) -> Vec<u8> {
        match self {
            BiasTarget::Digit(d) => vec![d],
            BiasTarget::Pair(a, b) => vec![a, b],
        }
    }

    /// `"3"` or `"3+6"`.
    pub fn label(self) -> String {
        match self {
            BiasTarget::Digit(d) => format!("{d}"),
            BiasTarget::Pair(a, b) => format!("{a}+{b}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.split_once('+') {
            None => s.parse().ok().filter(|&d: &u8| usize::from(d) < DIGIT_COUNT).map(BiasTarget::Digit),
            Some((a, b)) => BiasTarget::pair(a.parse().ok()?, b.parse().ok()?).ok(),
        }
    }
}

fn check_digit(d: u8) -> Result<()> {
    if usize::from(d) >= DIGIT_COUNT {
        return Err(Error::arg(format!("{d} is not a digit")));
    }
    Ok(())
}

/// A hidden-layer state used to seed generation.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBias {
    values: Vec<f32>,
    kind: BiasKind,
    target: BiasTarget,
}

impl HiddenBias {
    pub fn new(values: Vec<f32>, kind: BiasKind, target: BiasTarget) -> Result<Self> {
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        if kind.is_chimera() && !binary {
            return Err(Error::arg("chimera biases must be binary"));
        }
        match (kind, target) {
            (BiasKind::SingleDigit, BiasTarget::Digit(_)) => {}
            (k, BiasTarget::Pair(..)) if k.is_chimera() => {}
            _ => return Err(Error::arg("bias kind does not match its target")),
        }
        Ok(Self { values, kind, target })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> BiasKind {
        self.kind
    }

    pub fn target(&self) -> BiasTarget {
        self.target
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn active_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1.0).count()
    }

    /// `"single/3"`, `"intersection/3+6"`, ...
    pub fn name(&self) -> String {
        format!("{}/{}", self.kind.as_str(), self.target.label())
    }
}

/// Minimum-norm hidden vector `H` whose readout reproduces `label`: solves
/// `H·C = label − c` through the pseudoinverse of `C`.
pub fn label_biasing_vector(readout: &LinearReadout, label: &[f32]) -> Result<Vec<f32>> {
    check_label(label)?;
    let c = readout.weights.mapv(f64::from);
    let target: Array1<f64> = label
        .iter()
        .zip(&readout.bias)
        .map(|(&l, &b)| f64::from(l) - f64::from(b))
        .collect();
    let h = min_norm_row_solution(c.view(), target.view())
        .map_err(|e| Error::Numerical(format!("readout matrix is rank deficient: {e}")))?;
    Ok(h.iter().map(|&x| x as f32).collect())
}

fn check_label(label: &[f32]) -> Result<()> {
    if label.len() != DIGIT_COUNT {
        return Err(Error::dim("label vector length", DIGIT_COUNT, label.len()));
    }
    if label.iter().all(|&l| l == 0.0) {
        return Err(Error::arg("label vector has no active entry"));
    }
    Ok(())
}

/// One-hot (or multi-hot) digit label.
pub fn label_vector(digits: &[u8]) -> Result<Vec<f32>> {
    let mut l = vec![0.0; DIGIT_COUNT];
    for &d in digits {
        check_digit(d)?;
        l[usize::from(d)] = 1.0;
    }
    Ok(l)
}

/// The real-valued label-biasing vector for a single digit.
pub fn single_digit_bias(inv: LabelInversion<'_>, digit: u8) -> Result<HiddenBias> {
    let values = inv.biasing_vector(&label_vector(&[digit])?)?;
    HiddenBias::new(values, BiasKind::SingleDigit, BiasTarget::Digit(digit))
}

/// Ones at the `k` largest entries (lowest index first among equal values).
pub fn top_k_binarize(h: &[f32], k: usize) -> Result<Vec<f32>> {
    if k == 0 || k > h.len() {
        return Err(Error::arg(format!("k = {k} outside 1..={}", h.len())));
    }
    let mut out = vec![0.0; h.len()];
    for i in top_k_indices(h, k) {
        out[i] = 1.0;
    }
    Ok(out)
}

fn top_k_indices(h: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Binary state with ones on the units shared by the top-`k` sets of two
/// single-digit biasing vectors.
pub fn chimera_intersection(a: &HiddenBias, b: &HiddenBias, k: usize) -> Result<HiddenBias> {
    let (BiasTarget::Digit(da), BiasTarget::Digit(db)) = (a.target, b.target) else {
        return Err(Error::arg("intersection chimeras combine single-digit biases"));
    };
    if a.len() != b.len() {
        return Err(Error::dim("biasing vector length", a.len(), b.len()));
    }
    let ta = top_k_binarize(&a.values, k)?;
    let tb = top_k_binarize(&b.values, k)?;
    let values = ta.iter().zip(&tb).map(|(&x, &y)| x * y).collect();
    HiddenBias::new(values, BiasKind::ChimeraIntersection, BiasTarget::pair(da, db)?)
}

/// Biasing vector of the two-hot label `{a, b}`, binarized to its top `k` units.
pub fn chimera_double(inv: LabelInversion<'_>, a: u8, b: u8, k: usize) -> Result<HiddenBias> {
    let target = BiasTarget::pair(a, b)?;
    let h = inv.biasing_vector(&label_vector(&target.digits())?)?;
    HiddenBias::new(top_k_binarize(&h, k)?, BiasKind::ChimeraDouble, target)
}

/// All 45 unordered pairs of distinct digits, lexicographic.
pub fn digit_pairs() -> Vec<(u8, u8)> {
    let n = DIGIT_COUNT as u8;
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

/// Real-valued biasing vectors of digits 0–9, in order.
pub fn all_single_digit_biases(inv: LabelInversion<'_>) -> Result<Vec<HiddenBias>> {
    (0..DIGIT_COUNT as u8).map(|d| single_digit_bias(inv, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array;
    use rand::Rng;

    fn random_readout(n_hidden: usize, seed: u64) -> LinearReadout {
        let mut r = rng::stream(seed);
        let w = Array::from_shape_simple_fn((n_hidden, 10), || r.random_range(-1.0f32..1.0));
        let b = Array::from_shape_simple_fn(10, || r.random_range(-0.2f32..0.2));
        LinearReadout::new(w, b).unwrap()
    }

    #[test]
    fn separable_toy_data_is_fit_perfectly() {
        // 4-dim hidden codes; digit d ∈ {0..3} lights unit d, plus noise.
        let mut r = rng::stream(1);
        let mut feats = Array2::<f32>::zeros((400, 4));
        let mut labels = Vec::new();
        for (i, mut row) in feats.outer_iter_mut().enumerate() {
            let d = i % 4;
            for j in 0..4 {
                row[j] = if j == d { 0.8 } else { 0.1 } + r.random_range(-0.05..0.05);
            }
            labels.push(d as u8);
        }
        let ro = fit_readout(feats.view(), &labels, READOUT_RIDGE).unwrap();
        assert_eq!((ro.weights().nrows(), ro.weights().ncols(), ro.bias().len()), (4, 10, 10));
        assert_eq!(ro.predict(feats.view()).unwrap(), labels);
    }

    #[test]
    fn readout_rejects_non_digit_labels() {
        let feats = Array2::<f32>::zeros((2, 3));
        assert!(matches!(fit_readout(feats.view(), &[1, 10], 1e-6), Err(Error::Data(_))));
    }

    #[test]
    fn degenerate_readout_system_is_a_numerical_error() {
        let feats = Array2::<f32>::from_elem((5, 3), f32::MAX);
        assert!(fit_readout(feats.view(), &[0, 1, 2, 3, 4], 0.0).is_err());
    }

    #[test]
    fn biasing_vector_reproduces_its_label() {
        let ro = random_readout(50, 2);
        for d in 0..10u8 {
            let label = label_vector(&[d]).unwrap();
            let h = label_biasing_vector(&ro, &label).unwrap();
            let hm = Array2::from_shape_vec((1, 50), h).unwrap();
            let scores = ro.scores(hm.view()).unwrap();
            assert_eq!(argmax(scores.iter().copied()), usize::from(d));
            for (s, l) in scores.iter().zip(&label) {
                assert!((s - l).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn orthonormal_readout_inverts_by_transpose() {
        // Columns e_0..e_9 scaled into a 20-dim space are orthonormal.
        let mut w = Array2::<f32>::zeros((20, 10));
        for j in 0..10 {
            w[[2 * j, j]] = 0.6;
            w[[2 * j + 1, j]] = 0.8;
        }
        let ro = LinearReadout::new(w.clone(), Array1::zeros(10)).unwrap();
        let label = label_vector(&[4]).unwrap();
        let h = label_biasing_vector(&ro, &label).unwrap();
        let expect = Array1::from(label).dot(&w.t());
        for (a, b) in h.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_label_rejected() {
        let ro = random_readout(20, 3);
        assert!(matches!(label_biasing_vector(&ro, &[0.0; 10]), Err(Error::Argument(_))));
    }

    #[test]
    fn top_k_hand_cases() {
        assert_eq!(top_k_binarize(&[0.9, 0.1, 0.5], 2).unwrap(), vec![1.0, 0.0, 1.0]);
        assert_eq!(top_k_binarize(&[0.3; 5], 3).unwrap(), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(top_k_binarize(&[0.2, -1.0, 7.0], 3).unwrap(), vec![1.0; 3]);
        assert!(top_k_binarize(&[1.0, 2.0], 0).is_err());
        assert!(top_k_binarize(&[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn intersection_edge_cases() {
        let mut a = vec![0.0f32; 10];
        let mut b = vec![0.0f32; 10];
        a[..3].copy_from_slice(&[3.0, 2.0, 1.0]);
        b[7..].copy_from_slice(&[3.0, 2.0, 1.0]);
        let ha = HiddenBias::new(a, BiasKind::SingleDigit, BiasTarget::Digit(1)).unwrap();
        let hb = HiddenBias::new(b, BiasKind::SingleDigit, BiasTarget::Digit(2)).unwrap();
        assert!(chimera_intersection(&ha, &ha.clone(), 3).is_err(), "same digit twice");
        let same = HiddenBias::new(ha.values().to_vec(), BiasKind::SingleDigit, BiasTarget::Digit(5)).unwrap();
        assert_eq!(chimera_intersection(&ha, &same, 3).unwrap().active_count(), 3);
        assert_eq!(chimera_intersection(&ha, &hb, 3).unwrap().active_count(), 0);
    }

    #[test]
    fn double_chimera_has_k_units_and_is_symmetric() {
        let ro = random_readout(300, 4);
        let inv = LabelInversion::MinimumNorm(&ro);
        let ab = chimera_double(inv, 3, 6, 149).unwrap();
        let ba = chimera_double(inv, 6, 3, 149).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.active_count(), 149);
        assert_eq!(ab.target(), BiasTarget::Pair(3, 6));
        assert!(chimera_double(inv, 2, 2, 149).is_err());
    }

    #[test]
    fn projection_rows_are_class_means() {
        let feats = ndarray::arr2(&[[1.0f32, 0.0], [3.0, 2.0], [5.0, 5.0], [0.5, 0.5]]);
        let mut labels = vec![4u8, 4, 7, 0];
        let mut rows = vec![feats.clone()];
        // Pad so every digit has one example with features (d, −d).
        for d in 0..10u8 {
            rows.push(ndarray::arr2(&[[f32::from(d), -f32::from(d)]]));
            labels.push(d);
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        let all = ndarray::concatenate(ndarray::Axis(0), &views).unwrap();
        let p = fit_label_projection(all.view(), &labels).unwrap();
        assert_eq!(p.rows().row(4).to_vec(), vec![(1.0 + 3.0 + 4.0) / 3.0, (0.0 + 2.0 - 4.0) / 3.0]);
        assert_eq!(p.rows().row(0).to_vec(), vec![0.25, 0.25]);
        assert_eq!(p.rows().row(9).to_vec(), vec![9.0, -9.0]);
        // A two-hot label sums the two rows.
        assert_eq!(p.project(&label_vector(&[0, 9]).unwrap()).unwrap(), vec![9.25, -8.75]);
    }

    #[test]
    fn projection_matches_the_pseudoinverse_solution() {
        // P = Y⁺H solves the normal equations YᵀY·P = YᵀH.
        let mut r = rng::stream(6);
        let labels: Vec<u8> = (0..60).map(|i| (i % 10) as u8).collect();
        let feats = Array::from_shape_simple_fn((60, 5), || r.random_range(0.0f32..1.0));
        let p = fit_label_projection(feats.view(), &labels).unwrap();
        let y = Array2::from_shape_fn((60, 10), |(i, j)| f64::from(u8::from(usize::from(labels[i]) == j)));
        let lhs = y.t().dot(&y).dot(&p.rows().mapv(f64::from));
        let rhs = y.t().dot(&feats.mapv(f64::from));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn projection_needs_every_digit() {
        let feats = Array2::<f32>::zeros((3, 2));
        assert!(matches!(fit_label_projection(feats.view(), &[0, 1, 2]), Err(Error::Data(_))));
        let p = LabelProjection::new(Array2::zeros((10, 4))).unwrap();
        assert!(matches!(p.project(&[0.0; 10]), Err(Error::Argument(_))));
        assert!(LabelProjection::new(Array2::zeros((9, 4))).is_err());
    }

    #[test]
    fn two_hot_label_is_solved_exactly() {
        let ro = random_readout(1000, 5);
        let label = label_vector(&[1, 8]).unwrap();
        let h: Vec<f64> = label_biasing_vector(&ro, &label).unwrap().into_iter().map(f64::from).collect();
        for j in 0..10 {
            let s: f64 = (0..1000).map(|i| h[i] * f64::from(ro.weights()[[i, j]])).sum::<f64>()
                + f64::from(ro.bias()[j]);
            assert!((s - f64::from(label[j])).abs() < 1e-6, "col {j}: {s}");
        }
    }

    #[test]
    fn forty_five_distinct_pairs() {
        let pairs = digit_pairs();
        assert_eq!(pairs.len(), 45);
        let mut sorted = pairs.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 45);
        assert!(pairs.iter().all(|&(a, b)| a < b && b < 10));
    }

    #[test]
    fn target_labels_round_trip() {
        for t in [BiasTarget::Digit(0), BiasTarget::Digit(9), BiasTarget::Pair(3, 6)] {
            assert_eq!(BiasTarget::parse(&t.label()), Some(t));
        }
        assert_eq!(BiasTarget::parse("6+3"), Some(BiasTarget::Pair(3, 6)));
        assert_eq!(BiasTarget::parse("10"), None);
        assert_eq!(BiasTarget::parse("4+4"), None);
    }

    #[test]
    fn chimera_bias_must_be_binary() {
        let err = HiddenBias::new(vec![0.5], BiasKind::ChimeraDouble, BiasTarget::Pair(0, 1));
        assert!(err.is_err());
    }

    proptest::proptest! {
        #[test]
        fn top_k_has_exactly_k_ones(values in proptest::collection::vec(-5.0f32..5.0, 1..60), k_frac in 0.0f64..1.0) {
            let k = 1 + ((values.len() - 1) as f64 * k_frac) as usize;
            let out = top_k_binarize(&values, k).unwrap();
            proptest::prop_assert_eq!(out.iter().filter(|&&v| v == 1.0).count(), k);
            // Every kept value is >= every dropped value.
            let kept_min = values.iter().zip(&out).filter(|(_, &o)| o == 1.0).map(|(v, _)| *v).fold(f32::INFINITY, f32::min);
            let drop_max = values.iter().zip(&out).filter(|(_, &o)| o == 0.0).map(|(v, _)| *v).fold(f32::NEG_INFINITY, f32::max);
            proptest::prop_assert!(kept_min >= drop_max);
            // Re-binarizing a k-hot vector returns it unchanged.
            proptest::prop_assert_eq!(top_k_binarize(&out, k).unwrap(), out);
        }

        #[test]
        fn intersection_matches_set_oracle(seed in 0u64..500, k in 1usize..40) {
            let mut r = rng::stream(seed);
            let a: Vec<f32> = (0..64).map(|_| r.random()).collect();
            let b: Vec<f32> = (0..64).map(|_| r.random()).collect();
            let ha = HiddenBias::new(a.clone(), BiasKind::SingleDigit, BiasTarget::Digit(0)).unwrap();
            let hb = HiddenBias::new(b.clone(), BiasKind::SingleDigit, BiasTarget::Digit(1)).unwrap();
            let out = chimera_intersection(&ha, &hb, k).unwrap();
            let rev = chimera_intersection(&hb, &ha, k).unwrap();
            proptest::prop_assert_eq!(out.values(), rev.values());
            // Oracle: explicit sets of the k largest by full sort.
            let topset = |v: &[f32]| {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap());
                idx.into_iter().take(k).collect::<alloc::collections::BTreeSet<_>>()
            };
            let common = topset(&a).intersection(&topset(&b)).count();
            proptest::prop_assert_eq!(out.active_count(), common);
        }
    }
}
