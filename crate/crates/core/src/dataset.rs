//! Images, labelled datasets and deterministic batching.

use alloc::format;
use alloc::vec::Vec;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::augment::{mask_active_pixels, scramble_digit};
use crate::rng::Stream;
use crate::{Error, Result, CLASS_COUNT, NON_DIGIT};

/// Side length of an MNIST digit.
pub const MNIST_SIDE: usize = 28;

/// A grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    label: Option<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, label: Option<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dim("image pixel count", width * height, pixels.len()));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!("pixel intensity {p} outside [0, 1]")));
        }
        check_label(label)?;
        Ok(Self {
            width,
            height,
            pixels,
            label,
        })
    }

    /// Builds an image from raw 8-bit intensities, dividing by 255.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8], label: Option<u8>) -> Result<Self> {
        let pixels = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(width, height, pixels, label)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: alloc::vec![0.0; width * height],
            label: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn with_label(mut self, label: Option<u8>) -> Result<Self> {
        check_label(label)?;
        self.label = label;
        Ok(self)
    }

    /// Intensities quantized back to bytes (exact for images built by [`Image::from_bytes`]).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| num_traits::Float::round(p * 255.0) as u8)
            .collect()
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, pixels: Vec<f32>, label: Option<u8>) -> Self {
        Self {
            width,
            height,
            pixels,
            label,
        }
    }
}

fn check_label(label: Option<u8>) -> Result<()> {
    match label {
        Some(l) if usize::from(l) >= CLASS_COUNT => Err(Error::Data(format!("label {l} outside 0..=10"))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// An ordered collection of equally sized images.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Image>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<Image>, split: Split) -> Result<Self> {
        if let Some(first) = images.first() {
            let shape = (first.width, first.height);
            if let Some(bad) = images.iter().find(|im| (im.width, im.height) != shape) {
                return Err(Error::Data(format!(
                    "mixed image shapes: {}x{} and {}x{}",
                    shape.0, shape.1, bad.width, bad.height
                )));
            }
        }
        Ok(Self { images, split })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn into_images(self) -> Vec<Image> {
        self.images
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Labels in order; fails if any image is unlabelled.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, im)| im.label.ok_or_else(|| Error::Data(format!("image {i} has no label"))))
            .collect()
    }

    /// The images as a `len × pixels` matrix, one image per row.
    pub fn to_matrix(&self) -> Array2<f32> {
        rows_matrix(self.images.iter())
    }

    /// Rows `indices` of the dataset as a matrix.
    pub fn gather(&self, indices: &[usize]) -> Array2<f32> {
        rows_matrix(indices.iter().map(|&i| &self.images[i]))
    }
}

fn rows_matrix<'a>(images: impl ExactSizeIterator<Item = &'a Image>) -> Array2<f32> {
    let n = images.len();
    let mut data = Vec::new();
    let mut cols = 0;
    for im in images {
        cols = im.pixels.len();
        data.extend_from_slice(&im.pixels);
    }
    Array2::from_shape_vec((n, cols), data).expect("images share one shape")
}

/// Sizes of the classifier training set built from the 60000 MNIST training digits.
pub mod classifier_split {
    pub const MNIST_TRAIN: usize = 60_000;
    pub const DIGITS: usize = 54_000;
    pub const VALIDATION: usize = 6_000;
    pub const SCRAMBLED: usize = 5_400;
    pub const MASKED: usize = 54_000;
}

/// Builds the classifier's augmented training set and its digit validation set.
///
/// A seed-deterministic shuffle splits the 60000 digits into 54000 training
/// and 6000 validation images. The training set is the 54000 digits followed
/// by 5400 scrambled copies (drawn without replacement from those 54000) and
/// one masked copy of each of the 54000, all labelled non-digit.
pub fn build_classifier_dataset(mnist_train: &Dataset, rng: &mut Stream) -> Result<(Dataset, Dataset)> {
    use classifier_split::MNIST_TRAIN;
    if mnist_train.len() != MNIST_TRAIN {
        return Err(Error::Data(format!(
            "classifier dataset needs {MNIST_TRAIN} training digits, got {}",
            mnist_train.len()
        )));
    }
    build_classifier_dataset_scaled(mnist_train, rng)
}

/// [`build_classifier_dataset`] for any number of digits: a tenth is held
/// out for validation and a tenth of the remainder is scrambled.
pub fn build_classifier_dataset_scaled(digits: &Dataset, rng: &mut Stream) -> Result<(Dataset, Dataset)> {
    let n = digits.len();
    let n_validation = n / 10;
    if n_validation == 0 {
        return Err(Error::Data(format!("classifier dataset needs at least 10 digits, got {n}")));
    }
    let labels = digits.labels()?;
    if let Some(l) = labels.iter().find(|&&l| l >= NON_DIGIT) {
        return Err(Error::Data(format!("expected digit labels, found {l}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (train_idx, val_idx) = order.split_at(n - n_validation);

    let src = digits.images();
    let mut train = Vec::with_capacity(2 * train_idx.len() + train_idx.len() / 10);
    train.extend(train_idx.iter().map(|&i| src[i].clone()));
    train.extend(non_digit_copies(src, train_idx, rng)?);
    let validation = val_idx.iter().map(|&i| src[i].clone()).collect();

    Ok((Dataset::new(train, Split::Train)?, Dataset::new(validation, Split::Validation)?))
}

/// Scrambled copies of a tenth of `indices` (drawn without replacement)
/// followed by one masked copy of every index.
fn non_digit_copies(src: &[Image], indices: &[usize], rng: &mut Stream) -> Result<Vec<Image>> {
    let mut scramble_pick = indices.to_vec();
    scramble_pick.shuffle(rng);
    scramble_pick.truncate(indices.len() / 10);
    let mut out = Vec::with_capacity(scramble_pick.len() + indices.len());
    for &i in &scramble_pick {
        out.push(scramble_digit(&src[i], rng)?);
    }
    for &i in indices {
        out.push(mask_active_pixels(&src[i], rng)?);
    }
    Ok(out)
}

/// Held-out non-digit examples built from unseen digits the same way as the
/// training non-digits: scrambled copies of a tenth, masked copies of all.
pub fn build_non_digit_holdout(digits: &Dataset, rng: &mut Stream) -> Result<Dataset> {
    let indices: Vec<usize> = (0..digits.len()).collect();
    Dataset::new(non_digit_copies(digits.images(), &indices, rng)?, Split::Test)
}

/// One epoch's shuffled index order, cut into batches.
///
/// The final batch is shorter when the size does not divide evenly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochBatches {
    order: Vec<usize>,
    batch_size: usize,
}

impl EpochBatches {
    pub fn new(len: usize, batch_size: usize, rng: &mut Stream) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        if batch_size > len {
            return Err(Error::arg(format!("batch size {batch_size} exceeds dataset size {len}")));
        }
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Ok(Self { order, batch_size })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> core::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }
}

/// Shuffled batches of `ds` for one epoch.
pub fn batch_iter(ds: &Dataset, batch_size: usize, rng: &mut Stream) -> Result<EpochBatches> {
    EpochBatches::new(ds.len(), batch_size, rng)
}
