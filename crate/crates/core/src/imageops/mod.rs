//! Mammogram preprocessing: min-max normalization, MONOCHROME1 inversion
//! and resizing to the 512×512 model input grid.
//!
//! Normalized values live on a dyadic grid with spacing 2⁻⁵³. On that grid
//! `1 − v` is exact in `f64`, so inversion is an exact involution and an
//! image plus its inverse sums to exactly 1 at every pixel. Snapping moves a
//! value by at most 2⁻⁵⁴.

pub mod pgm;

use rayon::prelude::*;
use thiserror::Error;

use crate::dicom::{PhotometricInterpretation, PixelMatrix};

pub const MODEL_INPUT_SIZE: usize = 512;

const GRID: f64 = 9_007_199_254_740_992.0; // 2^53

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("target dimension is zero ({rows}x{columns})")]
    ZeroTargetDimension { rows: usize, columns: usize },
    #[error("image has no pixels")]
    Empty,
    #[error("expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("malformed PGM: {0}")]
    Pgm(String),
}

fn snap(v: f64) -> f64 {
    (v * GRID).round() / GRID
}

/// A grayscale image with every value in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    rows: usize,
    columns: usize,
    values: Vec<f64>,
}

impl NormalizedImage {
    pub fn new(rows: usize, columns: usize, values: Vec<f64>) -> Result<Self, ImageError> {
        if rows == 0 || columns == 0 {
            return Err(ImageError::Empty);
        }
        if values.len() != rows * columns {
            return Err(ImageError::ShapeMismatch {
                expected: rows * columns,
                actual: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange(bad));
        }
        Ok(NormalizedImage {
            rows,
            columns,
            values: values.into_iter().map(snap).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ImageError> {
        let columns = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != columns) {
            return Err(ImageError::ShapeMismatch {
                expected: columns,
                actual: rows.iter().map(Vec::len).find(|&l| l != columns).unwrap_or(0),
            });
        }
        NormalizedImage::new(rows.len(), columns, rows.concat())
    }

    pub fn constant(rows: usize, columns: usize, value: f64) -> Result<Self, ImageError> {
        NormalizedImage::new(rows, columns, vec![value; rows * columns])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.columns).map(<[f64]>::to_vec).collect()
    }

    /// Quantizes to `bits`-bit integers (`round(v · (2^bits − 1))`).
    pub fn to_pixel_matrix(&self, bits: u16) -> PixelMatrix {
        let max = f64::from((1u32 << bits) - 1);
        let values = self.values.iter().map(|v| (v * max).round() as u16).collect();
        PixelMatrix::new(self.rows, self.columns, bits, values)
            .expect("quantized values fit the bit depth")
    }
}

/// Per-image min-max scaling; a constant image maps to all zeros.
pub fn normalize_minmax(m: &PixelMatrix) -> NormalizedImage {
    let (min, max) = m
        .values()
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let values = if max == min {
        vec![0.0; m.values().len()]
    } else {
        let range = f64::from(max - min);
        m.values()
            .iter()
            .map(|&v| snap(f64::from(v - min) / range))
            .collect()
    };
    NormalizedImage {
        rows: m.rows(),
        columns: m.columns(),
        values,
    }
}

pub fn invert(img: &NormalizedImage) -> NormalizedImage {
    NormalizedImage {
        rows: img.rows,
        columns: img.columns,
        values: img.values.iter().map(|v| 1.0 - v).collect(),
    }
}

/// Per-output-index source taps along one axis. Weights sum to one; the
/// first tap anchors the anchored-difference evaluation in [`resize`], which
/// keeps constant regions exactly constant.
fn axis_taps(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    use std::cmp::Ordering;
    match dst.cmp(&src) {
        Ordering::Equal => (0..dst).map(|i| vec![(i, 1.0)]).collect(),
        // Area average. Work in units of 1/dst of a source pixel so overlaps
        // are exact integers: output i spans [i·src, (i+1)·src), source pixel
        // j spans [j·dst, (j+1)·dst).
        Ordering::Less => (0..dst)
            .map(|i| {
                let start = i * src;
                let end = start + src;
                (start / dst..end.div_ceil(dst))
                    .filter_map(|j| {
                        let overlap = end.min((j + 1) * dst).saturating_sub(start.max(j * dst));
                        (overlap > 0).then(|| (j, overlap as f64 / src as f64))
                    })
                    .collect()
            })
            .collect(),
        // Bilinear with pixel-centre alignment.
        Ordering::Greater => {
            let scale = src as f64 / dst as f64;
            (0..dst)
                .map(|i| {
                    let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                    let j0 = pos.floor() as usize;
                    let j1 = (j0 + 1).min(src - 1);
                    let t = pos - j0 as f64;
                    if j1 == j0 || t == 0.0 {
                        vec![(j0, 1.0)]
                    } else {
                        vec![(j0, 1.0 - t), (j1, t)]
                    }
                })
                .collect()
        }
    }
}

/// Resizes to `target_rows × target_cols`: area averaging on axes that
/// shrink, bilinear interpolation on axes that grow.
pub fn resize(
    img: &NormalizedImage,
    target_rows: usize,
    target_cols: usize,
) -> Result<NormalizedImage, ImageError> {
    if target_rows == 0 || target_cols == 0 {
        return Err(ImageError::ZeroTargetDimension {
            rows: target_rows,
            columns: target_cols,
        });
    }
    let col_taps = axis_taps(img.columns, target_cols);
    let row_taps = axis_taps(img.rows, target_rows);

    // Horizontal pass: rows × target_cols.
    let mut horizontal = vec![0.0; img.rows * target_cols];
    horizontal
        .par_chunks_mut(target_cols)
        .zip(img.values.par_chunks(img.columns))
        .for_each(|(out, src)| {
            for (o, taps) in out.iter_mut().zip(&col_taps) {
                let anchor = src[taps[0].0];
                *o = anchor + taps[1..].iter().map(|&(j, w)| w * (src[j] - anchor)).sum::<f64>();
            }
        });

    // Vertical pass.
    let mut values = vec![0.0; target_rows * target_cols];
    values
        .par_chunks_mut(target_cols)
        .zip(row_taps.par_iter())
        .for_each(|(out, taps)| {
            let row = |j: usize| &horizontal[j * target_cols..(j + 1) * target_cols];
            let anchor = row(taps[0].0);
            out.copy_from_slice(anchor);
            for &(j, w) in &taps[1..] {
                for ((o, s), a) in out.iter_mut().zip(row(j)).zip(anchor) {
                    *o += w * (s - a);
                }
            }
            for o in out.iter_mut() {
                *o = snap(o.clamp(0.0, 1.0));
            }
        });

    Ok(NormalizedImage {
        rows: target_rows,
        columns: target_cols,
        values,
    })
}

/// Normalize, invert MONOCHROME1, resize to 512×512.
pub fn preprocess(
    m: &PixelMatrix,
    photometric: PhotometricInterpretation,
) -> Result<NormalizedImage, ImageError> {
    let oriented = orient(m, photometric);
    resize(&oriented, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
}

/// The pre-resize half of [`preprocess`].
pub fn orient(m: &PixelMatrix, photometric: PhotometricInterpretation) -> NormalizedImage {
    let normalized = normalize_minmax(m);
    match photometric {
        PhotometricInterpretation::Monochrome1 => invert(&normalized),
        PhotometricInterpretation::Monochrome2 => normalized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pm(rows: &[Vec<u16>], bits: u16) -> PixelMatrix {
        PixelMatrix::from_rows(rows, bits).unwrap()
    }

    #[test]
    fn normalize_twelve_bit() {
        let out = normalize_minmax(&pm(&[vec![0, 4095], vec![2047, 0]], 12));
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(0, 1), 1.0);
        assert_abs_diff_eq!(out.get(1, 0), 2047.0 / 4095.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(1, 0), 0.49988, epsilon = 1e-5);
        assert_eq!(out.get(1, 1), 0.0);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let out = normalize_minmax(&pm(&[vec![7, 7], vec![7, 7]], 8));
        assert_eq!(out.values(), &[0.0; 4]);
    }

    #[test]
    fn normalize_already_spanning() {
        let out = normalize_minmax(&pm(&[vec![0, 1]], 1));
        assert_eq!(out.values(), &[0.0, 1.0]);
    }

    #[test]
    fn invert_examples() {
        let img = NormalizedImage::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(invert(&img).values(), &[1.0, 0.0]);
        let img = NormalizedImage::from_rows(&[vec![0.25]]).unwrap();
        assert_eq!(invert(&img).values(), &[0.75]);
    }

    #[test]
    fn invert_is_exact_for_awkward_values() {
        let img = NormalizedImage::new(1, 3, vec![0.1, 0.3, 1e-300]).unwrap();
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn downscale_two_by_two_to_one() {
        let img = NormalizedImage::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let out = resize(&img, 1, 1).unwrap();
        assert_eq!(out.values(), &[0.5]);
    }

    #[test]
    fn checkerboard_downscale() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|r| (0..4).map(|c| ((r + c) % 2) as f64).collect())
            .collect();
        let out = resize(&NormalizedImage::from_rows(&rows).unwrap(), 2, 2).unwrap();
        assert_eq!(out.values(), &[0.5; 4]);
    }

    #[test]
    fn constant_survives_any_resize() {
        let img = NormalizedImage::constant(7, 13, 0.375).unwrap();
        for (r, c) in [(1, 1), (3, 29), (512, 512), (7, 13), (20, 5)] {
            let out = resize(&img, r, c).unwrap();
            assert!(out.values().iter().all(|&v| v == 0.375), "{r}x{c}");
        }
    }

    #[test]
    fn bilinear_upscale_interpolates() {
        let img = NormalizedImage::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let out = resize(&img, 1, 4).unwrap();
        // centres at 0.25, 0.75, 1.25, 1.75 of a 2-wide row, minus the half pixel
        assert_eq!(out.values(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn non_integer_area_average() {
        let img = NormalizedImage::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
        let out = resize(&img, 1, 2).unwrap();
        // output 1 covers source [1.5, 3): half of pixel 1 plus all of pixel 2
        assert_abs_diff_eq!(out.values()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.values()[1], (0.5 * 0.0 + 1.0) / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_target_is_an_error() {
        let img = NormalizedImage::constant(2, 2, 0.0).unwrap();
        assert_eq!(
            resize(&img, 0, 3),
            Err(ImageError::ZeroTargetDimension { rows: 0, columns: 3 })
        );
    }

    #[test]
    fn preprocess_constant_images() {
        let m = pm(&[vec![9, 9], vec![9, 9]], 8);
        let m2 = preprocess(&m, PhotometricInterpretation::Monochrome2).unwrap();
        assert_eq!((m2.rows(), m2.columns()), (512, 512));
        assert!(m2.values().iter().all(|&v| v == 0.0));
        let m1 = preprocess(&m, PhotometricInterpretation::Monochrome1).unwrap();
        assert!(m1.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn monochrome1_minimum_becomes_white() {
        let m = pm(&[vec![100, 3000], vec![4000, 100]], 12);
        let out = orient(&m, PhotometricInterpretation::Monochrome1);
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(1, 1), 1.0);
        assert_eq!(out.get(1, 0), 0.0);
    }

    proptest! {
        #[test]
        fn integer_ratio_downscale_preserves_mean(
            (r, c, k, values) in (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(r, c, k)| {
                (Just(r), Just(c), Just(k), proptest::collection::vec(0.0f64..=1.0, r * k * c * k))
            })
        ) {
            let img = NormalizedImage::new(r * k, c * k, values).unwrap();
            let out = resize(&img, r, c).unwrap();
            prop_assert!((out.mean() - img.mean()).abs() < 1e-12);
        }

        #[test]
        fn resize_stays_in_unit_interval(
            (r, c, values) in (1usize..9, 1usize..9).prop_flat_map(|(r, c)| {
                (Just(r), Just(c), proptest::collection::vec(0.0f64..=1.0, r * c))
            }),
            tr in 1usize..20,
            tc in 1usize..20,
        ) {
            let img = NormalizedImage::new(r, c, values).unwrap();
            let out = resize(&img, tr, tc).unwrap();
            prop_assert_eq!((out.rows(), out.columns()), (tr, tc));
            prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn invert_is_an_involution(values in proptest::collection::vec(0.0f64..=1.0, 1..64)) {
            let img = NormalizedImage::new(1, values.len(), values).unwrap();
            prop_assert_eq!(invert(&invert(&img)), img.clone());
            let inv = invert(&img);
            prop_assert!(img.values().iter().zip(inv.values()).all(|(a, b)| a + b == 1.0));
        }
    }
}
