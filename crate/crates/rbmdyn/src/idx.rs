//! IDX files: a big-endian `u32` magic (`0x0000_08nn`, `nn` = number of
//! dimensions), one `u32` per dimension, then raw `u8` values.

use std::fs;
use std::path::{Path, PathBuf};

use rbmdyn_core::dataset::{Dataset, Image, Split};

use crate::error::{AppError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
            .ok_or_else(|| AppError::data("truncated IDX header"))
    };
    let magic = word(0)?;
    if magic != expected_magic {
        return Err(AppError::data(format!(
            "bad IDX magic {magic:#010x}, expected {expected_magic:#010x}"
        )));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (1..=ndim).map(|i| word(i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let header = 4 * (ndim + 1);
    let len: usize = dims.iter().product();
    if bytes.len() != header + len {
        return Err(AppError::data(format!(
            "IDX payload has {} bytes, header declares {len}",
            bytes.len() - header
        )));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    parse_idx(&bytes, expected_magic).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn encode_images(images: &[Image]) -> Result<Vec<u8>> {
    let (w, h) = images.first().map_or((28, 28), |im| (im.width(), im.height()));
    let mut out = Vec::with_capacity(16 + images.len() * w * h);
    for v in [IMAGE_MAGIC, images.len() as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        if (im.width(), im.height()) != (w, h) {
            return Err(AppError::data("images of one IDX file must share a shape"));
        }
        out.extend(im.to_bytes());
    }
    Ok(out)
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Pairs an image file with its label file; intensities are scaled to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = read_idx(images_path, IMAGE_MAGIC)?;
    let labels = read_idx(labels_path, LABEL_MAGIC)?;
    let [n, rows, cols] = images.dims[..] else {
        unreachable!("magic fixes three dimensions")
    };
    if labels.dims[0] != n {
        return Err(AppError::data(format!(
            "{} holds {n} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.dims[0]
        )));
    }
    let size = rows * cols;
    let images = images
        .data
        .chunks_exact(size.max(1))
        .zip(&labels.data)
        .map(|(px, &l)| Image::from_bytes(cols, rows, px, Some(l)))
        .collect::<rbmdyn_core::Result<Vec<_>>>()?;
    Ok(Dataset::new(images, split)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistPaths {
    /// Finds the four files in `dir`, accepting both `train-images-idx3-ubyte`
    /// and `train-images.idx3-ubyte` naming.
    pub fn in_dir(dir: &Path) -> Result<Self> {
        let find = |stem: &str, kind: &str| -> Result<PathBuf> {
            let candidates = [format!("{stem}-{kind}-ubyte"), format!("{stem}.{kind}-ubyte")];
            candidates
                .iter()
                .map(|name| dir.join(name))
                .find(|p| p.is_file())
                .ok_or_else(|| {
                    AppError::data(format!("{} has no {} file", dir.display(), candidates[0]))
                })
        };
        Ok(Self {
            train_images: find("train-images", "idx3")?,
            train_labels: find("train-labels", "idx1")?,
            test_images: find("t10k-images", "idx3")?,
            test_labels: find("t10k-labels", "idx1")?,
        })
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
    }
}

pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_mnist(paths: &MnistPaths) -> Result<Mnist> {
    Ok(Mnist {
        train: load_idx(&paths.train_images, &paths.train_labels, Split::Train)?,
        test: load_idx(&paths.test_images, &paths.test_labels, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_normalization() {
        let ims = vec![
            Image::from_bytes(2, 2, &[0, 255, 7, 9], Some(3)).unwrap(),
            Image::from_bytes(2, 2, &[1, 2, 3, 4], Some(9)).unwrap(),
        ];
        let bytes = encode_images(&ims).unwrap();
        let arr = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        assert_eq!(arr.dims, vec![2, 2, 2]);
        assert_eq!(arr.data, vec![0, 255, 7, 9, 1, 2, 3, 4]);

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, bytes).unwrap();
        fs::write(&lp, encode_labels(&[3, 9])).unwrap();
        let ds = load_idx(&ip, &lp, Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.images()[0].pixels(), &[0.0, 1.0, 7.0 / 255.0, 9.0 / 255.0]);
        assert_eq!(ds.labels().unwrap(), vec![3, 9]);
    }

    #[test]
    fn bad_magic_and_truncation_rejected() {
        let mut bytes = encode_labels(&[1, 2, 3]);
        assert!(matches!(parse_idx(&bytes, IMAGE_MAGIC), Err(AppError::Data(_))));
        bytes.pop();
        assert!(matches!(parse_idx(&bytes, LABEL_MAGIC), Err(AppError::Data(_))));
        assert!(parse_idx(&[0, 0], LABEL_MAGIC).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, encode_images(&[Image::zeros(2, 2)]).unwrap()).unwrap();
        fs::write(&lp, encode_labels(&[1, 2])).unwrap();
        let err = load_idx(&ip, &lp, Split::Train).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("1 images but"));
    }

    #[test]
    fn both_naming_conventions_found() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["train-images-idx3-ubyte", "train-labels.idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let p = MnistPaths::in_dir(dir.path()).unwrap();
        assert!(p.train_labels.ends_with("train-labels.idx1-ubyte"));
        fs::remove_file(dir.path().join("t10k-labels-idx1-ubyte")).unwrap();
        assert!(MnistPaths::in_dir(dir.path()).is_err());
    }
}
