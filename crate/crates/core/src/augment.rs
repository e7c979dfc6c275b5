//! Non-digit augmentation (block scrambling, connected-region masking) and
//! bilinear resizing for the classifier input.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Image;
use crate::rng::Stream;
use crate::{Error, Result, NON_DIGIT};

/// Side of the square blocks permuted by [`scramble_digit`].
pub const SCRAMBLE_BLOCK: usize = 4;

/// Side of the classifier input.
pub const CLASSIFIER_SIDE: usize = 32;

/// Permutes the image's 4×4 pixel blocks uniformly at random; labels the result non-digit.
pub fn scramble_digit(img: &Image, rng: &mut Stream) -> Result<Image> {
    let (bw, bh) = block_grid(img)?;
    let mut perm: Vec<usize> = (0..bw * bh).collect();
    perm.shuffle(rng);
    scramble_with_permutation(img, &perm)
}

/// Moves block `perm[k]` of the input to block position `k` of the output.
pub fn scramble_with_permutation(img: &Image, perm: &[usize]) -> Result<Image> {
    let (bw, bh) = block_grid(img)?;
    let n = bw * bh;
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || core::mem::replace(&mut seen[p], true)) {
        return Err(Error::arg(format!("not a permutation of {n} blocks")));
    }
    let w = img.width();
    let src = img.pixels();
    let mut out = vec![0.0f32; src.len()];
    for (dst_block, &src_block) in perm.iter().enumerate() {
        let (dx, dy) = ((dst_block % bw) * SCRAMBLE_BLOCK, (dst_block / bw) * SCRAMBLE_BLOCK);
        let (sx, sy) = ((src_block % bw) * SCRAMBLE_BLOCK, (src_block / bw) * SCRAMBLE_BLOCK);
        for r in 0..SCRAMBLE_BLOCK {
            let d = (dy + r) * w + dx;
            let s = (sy + r) * w + sx;
            out[d..d + SCRAMBLE_BLOCK].copy_from_slice(&src[s..s + SCRAMBLE_BLOCK]);
        }
    }
    Ok(Image::from_parts_unchecked(w, img.height(), out, Some(NON_DIGIT)))
}

fn block_grid(img: &Image) -> Result<(usize, usize)> {
    if img.width() % SCRAMBLE_BLOCK != 0 || img.height() % SCRAMBLE_BLOCK != 0 {
        return Err(Error::arg(format!(
            "{}x{} image is not divisible into {SCRAMBLE_BLOCK}x{SCRAMBLE_BLOCK} blocks",
            img.width(),
            img.height()
        )));
    }
    Ok((img.width() / SCRAMBLE_BLOCK, img.height() / SCRAMBLE_BLOCK))
}

/// Zeroes a connected region of active (> 0) pixels and labels the result non-digit.
///
/// The region grows breadth-first over 4-neighbours from a uniformly chosen
/// active pixel until it holds a target count drawn uniformly from
/// `[⌈n/4⌉, ⌊3n/4⌋]` (n = active pixels, at least 1) or the component runs out.
/// An image without active pixels keeps its pixels.
pub fn mask_active_pixels(img: &Image, rng: &mut Stream) -> Result<Image> {
    let active: Vec<usize> = active_pixels(img);
    if active.is_empty() {
        return Ok(Image::from_parts_unchecked(
            img.width(),
            img.height(),
            img.pixels().to_vec(),
            Some(NON_DIGIT),
        ));
    }
    let n = active.len();
    let lo = n.div_ceil(4).max(1);
    let hi = (3 * n / 4).max(lo);
    let target = rng.random_range(lo..=hi);
    let seed = active[rng.random_range(0..n)];
    mask_from_seed(img, seed, target)
}

/// Zeroes up to `target` pixels of the active component containing `seed`, in BFS order.
pub fn mask_from_seed(img: &Image, seed: usize, target: usize) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    let mut px = img.pixels().to_vec();
    if seed >= px.len() {
        return Err(Error::arg(format!("seed pixel {seed} outside image")));
    }
    if px[seed] > 0.0 {
        let mut queued = vec![false; px.len()];
        let mut queue = VecDeque::from([seed]);
        queued[seed] = true;
        let mut masked = 0;
        while let Some(p) = queue.pop_front() {
            if masked == target {
                break;
            }
            px[p] = 0.0;
            masked += 1;
            let (x, y) = (p % w, p / w);
            let neighbours = [
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
            ];
            for q in neighbours.into_iter().flatten() {
                if !queued[q] && img.pixels()[q] > 0.0 {
                    queued[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(Image::from_parts_unchecked(w, h, px, Some(NON_DIGIT)))
}

fn active_pixels(img: &Image) -> Vec<usize> {
    img.pixels()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Bilinear resize with half-pixel-centre sampling and edge clamping.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 || img.width() == 0 || img.height() == 0 {
        return Err(Error::arg("resize needs non-empty input and output"));
    }
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|x| taps(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, h, out_h);
        for &(x0, x1, fx) in &xs {
            let top = f64::from(src[y0 * w + x0]) * (1.0 - fx) + f64::from(src[y0 * w + x1]) * fx;
            let bot = f64::from(src[y1 * w + x0]) * (1.0 - fx) + f64::from(src[y1 * w + x1]) * fx;
            let v = top * (1.0 - fy) + bot * fy;
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Ok(Image::from_parts_unchecked(out_w, out_h, out, img.label()))
}

fn taps(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = num_traits::Float::floor(s) as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Resizes to the 32×32 classifier input; 32×32 images pass through unchanged.
pub fn resize_32(img: &Image) -> Result<Image> {
    if img.width() == CLASSIFIER_SIDE && img.height() == CLASSIFIER_SIDE {
        return Ok(img.clone());
    }
    resize_bilinear(img, CLASSIFIER_SIDE, CLASSIFIER_SIDE)
}
