//! Region-of-interest detection for ultrasound frames.
//!
//! Ultrasound frames carry dark borders, scanner chrome and annotations around
//! the acquisition cone. The region of interest is found from intensity
//! profiles: column means are computed separately for the left and right
//! halves of the frame, each half is scanned from its peak column outward, and
//! the first column whose mean falls below a fraction of that half's peak
//! marks the edge. The same rule is applied row-wise over the column-cropped
//! region to find the vertical bounds.

use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Edge length of the standardized model input.
pub const STANDARD_SIZE: usize = 224;

/// Default cutoff, relative to the half's peak mean intensity.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Smallest extent (in pixels) along a scanned axis.
pub const MIN_SCAN_EXTENT: usize = 4;

#[derive(Debug, Error)]
pub enum RoiError {
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("expected a single-channel image, got {0} channels")]
    NotSingleChannel(usize),
    #[error("expected raw 0-255 pixel values")]
    NotRaw,
    #[error("image data length {actual} does not match {height}x{width}x{channels}")]
    DataLength {
        height: usize,
        width: usize,
        channels: usize,
        actual: usize,
    },
    #[error("pixel value {value} at index {index} is outside the {range:?} range")]
    ValueOutOfRange {
        index: usize,
        value: f32,
        range: ValueRange,
    },
    #[error("image is {extent} pixels along the {axis} axis, need at least {MIN_SCAN_EXTENT}")]
    TooSmall { axis: &'static str, extent: usize },
    #[error("threshold fraction must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("crop box {bounds:?} does not fit a {width}x{height} image")]
    BoxOutOfRange {
        bounds: CropBox,
        width: usize,
        height: usize,
    },
    #[error("image has zero area")]
    EmptyImage,
    #[error("cannot decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Range of the values held by an [`ImageTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    /// Integral values in `[0, 255]`.
    RawU8,
    /// Values in `[0.0, 1.0]`.
    UnitFloat,
}

/// Row-major `height x width x channels` pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    range: ValueRange,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        range: ValueRange,
    ) -> Result<Self, RoiError> {
        if channels != 1 && channels != 3 {
            return Err(RoiError::UnsupportedChannels(channels));
        }
        if data.len() != height * width * channels {
            return Err(RoiError::DataLength {
                height,
                width,
                channels,
                actual: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            let ok = match range {
                ValueRange::RawU8 => (0.0..=255.0).contains(&value) && value.fract() == 0.0,
                ValueRange::UnitFloat => (0.0..=1.0).contains(&value),
            };
            if !ok {
                return Err(RoiError::ValueOutOfRange { index, value, range });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            range,
        })
    }

    /// Single-channel raw image built from 8-bit values.
    pub fn from_gray_u8(height: usize, width: usize, pixels: &[u8]) -> Result<Self, RoiError> {
        let data = pixels.iter().map(|&p| f32::from(p)).collect();
        Self::new(height, width, 1, data, ValueRange::RawU8)
    }

    /// Three-channel raw image built from interleaved RGB bytes.
    pub fn from_rgb_u8(height: usize, width: usize, pixels: &[u8]) -> Result<Self, RoiError> {
        let data = pixels.iter().map(|&p| f32::from(p)).collect();
        Self::new(height, width, 3, data, ValueRange::RawU8)
    }

    /// Converts a decoded raster. Gray images (with or without alpha) become
    /// one channel, everything else is flattened to 8-bit RGB.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img {
            DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
            _ => (3, img.to_rgb8().into_raw()),
        };
        Self {
            height,
            width,
            channels,
            data: bytes.into_iter().map(f32::from).collect(),
            range: ValueRange::RawU8,
        }
    }

    /// Renders the tensor as an 8-bit raster (unit-range values are scaled by
    /// 255 and rounded).
    pub fn to_dynamic(&self) -> DynamicImage {
        let scale = match self.range {
            ValueRange::RawU8 => 1.0,
            ValueRange::UnitFloat => 255.0,
        };
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("buffer sized by invariant"))
        } else {
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("buffer sized by invariant"))
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }
}

/// Which half of the frame a profile was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
}

/// Mean intensity per column (or row) over one half of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    pub half: Half,
    /// Absolute index of `values[0]` in the full profile.
    pub start: usize,
    pub values: Vec<f64>,
    /// Index into `values` of the first maximum.
    pub peak_index: usize,
    pub peak_value: f64,
}

impl IntensityProfile {
    fn new(half: Half, start: usize, values: &[f64]) -> Self {
        let mut peak_index = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[peak_index] {
                peak_index = i;
            }
        }
        Self {
            half,
            start,
            values: values.to_vec(),
            peak_index,
            peak_value: values[peak_index],
        }
    }

    /// First index, scanning from the peak toward the outer edge of the frame,
    /// whose value is strictly below `fraction * peak_value`.
    pub fn first_crossing(&self, fraction: f64) -> Option<usize> {
        let cutoff = fraction * self.peak_value;
        let below = |&i: &usize| self.values[i] < cutoff;
        match self.half {
            Half::Left => (0..=self.peak_index).rev().find(below),
            Half::Right => (self.peak_index..self.values.len()).find(below),
        }
        .map(|i| i + self.start)
    }
}

/// Inclusive pixel bounds of the detected region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x_left: usize,
    pub x_right: usize,
    pub y_top: usize,
    pub y_bottom: usize,
}

impl CropBox {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x_left: 0,
            x_right: width - 1,
            y_top: 0,
            y_bottom: height - 1,
        }
    }

    pub fn width(&self) -> usize {
        self.x_right - self.x_left + 1
    }

    pub fn height(&self) -> usize {
        self.y_bottom - self.y_top + 1
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x_left <= self.x_right && self.x_right < width && self.y_top <= self.y_bottom && self.y_bottom < height
    }

    pub fn contains(&self, other: &CropBox) -> bool {
        self.x_left <= other.x_left
            && other.x_right <= self.x_right
            && self.y_top <= other.y_top
            && other.y_bottom <= self.y_bottom
    }
}

/// Axes along which [`compute_crop_bounds`] trims the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropAxis {
    Horizontal,
    #[default]
    Both,
}

/// Result of ROI detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropDetection {
    pub bounds: CropBox,
    /// Set when the frame has no signal at all (peak mean of zero); the
    /// bounds are then the full frame.
    pub degenerate: bool,
}

/// ITU-R 601 luma, rounded to the nearest integer. One-channel images are
/// returned unchanged.
pub fn to_grayscale(img: &ImageTensor) -> Result<ImageTensor, RoiError> {
    if img.range != ValueRange::RawU8 {
        return Err(RoiError::NotRaw);
    }
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let data = img
                .data
                .chunks_exact(3)
                .map(|px| {
                    let luma = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
                    luma.round().min(255.0) as f32
                })
                .collect();
            Ok(ImageTensor {
                height: img.height,
                width: img.width,
                channels: 1,
                data,
                range: ValueRange::RawU8,
            })
        }
        c => Err(RoiError::UnsupportedChannels(c)),
    }
}

fn require_gray_raw(img: &ImageTensor) -> Result<(), RoiError> {
    if img.channels != 1 {
        return Err(RoiError::NotSingleChannel(img.channels));
    }
    if img.range != ValueRange::RawU8 {
        return Err(RoiError::NotRaw);
    }
    Ok(())
}

/// Mean intensity of every column over the rows `rows`.
pub fn column_means(gray: &ImageTensor, rows: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    let n = (rows.end() - rows.start() + 1) as f64;
    let mut sums = vec![0.0f64; gray.width];
    for r in rows {
        let row = &gray.data[r * gray.width..(r + 1) * gray.width];
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += f64::from(v);
        }
    }
    sums.into_iter().map(|s| s / n).collect()
}

/// Mean intensity of every row over the columns `cols`.
pub fn row_means(gray: &ImageTensor, cols: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    let n = (cols.end() - cols.start() + 1) as f64;
    (0..gray.height)
        .map(|r| {
            let row = &gray.data[r * gray.width..(r + 1) * gray.width];
            row[cols.clone()].iter().map(|&v| f64::from(v)).sum::<f64>() / n
        })
        .collect()
}

/// Splits a full profile at `len / 2` into its left and right halves.
pub fn split_profile(values: &[f64]) -> (IntensityProfile, IntensityProfile) {
    let mid = values.len() / 2;
    (
        IntensityProfile::new(Half::Left, 0, &values[..mid]),
        IntensityProfile::new(Half::Right, mid, &values[mid..]),
    )
}

/// Inclusive `(low, high)` bounds of the region on a full intensity profile.
///
/// Requires `values.len() >= 2`; callers enforce [`MIN_SCAN_EXTENT`].
pub fn profile_bounds(values: &[f64], fraction: f64) -> (usize, usize) {
    let (left, right) = split_profile(values);
    let low = left.first_crossing(fraction).map_or(0, |c| c + 1);
    let high = right.first_crossing(fraction).map_or(values.len() - 1, |c| c - 1);
    (low, high)
}

fn check_threshold(fraction: f64) -> Result<(), RoiError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(RoiError::InvalidThreshold(fraction))
    }
}

/// Detects the region of interest of a single-channel raw image.
pub fn compute_crop_bounds(gray: &ImageTensor, fraction: f64, axis: CropAxis) -> Result<CropDetection, RoiError> {
    require_gray_raw(gray)?;
    check_threshold(fraction)?;
    if gray.width < MIN_SCAN_EXTENT {
        return Err(RoiError::TooSmall {
            axis: "horizontal",
            extent: gray.width,
        });
    }
    if axis == CropAxis::Both && gray.height < MIN_SCAN_EXTENT {
        return Err(RoiError::TooSmall {
            axis: "vertical",
            extent: gray.height,
        });
    }
    let full = CropBox::full(gray.width, gray.height);
    if gray.data.iter().all(|&v| v == 0.0) {
        log::warn!("image has no signal; using the full frame");
        return Ok(CropDetection {
            bounds: full,
            degenerate: true,
        });
    }

    let columns = column_means(gray, 0..=gray.height - 1);
    let (x_left, x_right) = profile_bounds(&columns, fraction);
    let (y_top, y_bottom) = match axis {
        CropAxis::Horizontal => (0, gray.height - 1),
        CropAxis::Both => profile_bounds(&row_means(gray, x_left..=x_right), fraction),
    };
    Ok(CropDetection {
        bounds: CropBox {
            x_left,
            x_right,
            y_top,
            y_bottom,
        },
        degenerate: false,
    })
}

pub fn apply_crop(img: &ImageTensor, bounds: &CropBox) -> Result<ImageTensor, RoiError> {
    if !bounds.fits(img.width, img.height) {
        return Err(RoiError::BoxOutOfRange {
            bounds: *bounds,
            width: img.width,
            height: img.height,
        });
    }
    let c = img.channels;
    let mut data = Vec::with_capacity(bounds.width() * bounds.height() * c);
    for r in bounds.y_top..=bounds.y_bottom {
        let start = (r * img.width + bounds.x_left) * c;
        data.extend_from_slice(&img.data[start..start + bounds.width() * c]);
    }
    Ok(ImageTensor {
        height: bounds.height(),
        width: bounds.width(),
        channels: c,
        data,
        range: img.range,
    })
}

/// Source coordinate sampling for one output axis: `(i0, i1, t)` per output
/// index, using pixel-center alignment.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear resize to `size x size` followed by division by 255.
pub fn standardize_to(img: &ImageTensor, size: usize) -> Result<ImageTensor, RoiError> {
    if img.range != ValueRange::RawU8 {
        return Err(RoiError::NotRaw);
    }
    if img.width == 0 || img.height == 0 || size == 0 {
        return Err(RoiError::EmptyImage);
    }
    let xs = bilinear_taps(img.width, size);
    let ys = bilinear_taps(img.height, size);
    let c = img.channels;
    let at = |r: usize, col: usize, ch: usize| f64::from(img.data[(r * img.width + col) * c + ch]);
    let mut data = Vec::with_capacity(size * size * c);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for ch in 0..c {
                let top = lerp(at(y0, x0, ch), at(y0, x1, ch), tx);
                let bottom = lerp(at(y1, x0, ch), at(y1, x1, ch), tx);
                let v = lerp(top, bottom, ty) / 255.0;
                data.push((v as f32).clamp(0.0, 1.0));
            }
        }
    }
    Ok(ImageTensor {
        height: size,
        width: size,
        channels: c,
        data,
        range: ValueRange::UnitFloat,
    })
}

/// [`standardize_to`] at the model input size of 224x224.
pub fn standardize(img: &ImageTensor) -> Result<ImageTensor, RoiError> {
    standardize_to(img, STANDARD_SIZE)
}

pub fn load_image(path: &Path) -> Result<ImageTensor, RoiError> {
    let img = image::open(path).map_err(|source| RoiError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ImageTensor::from_dynamic(&img))
}

/// Grayscale, detect, crop; the raw cropped frame before standardization.
pub fn crop_roi(img: &ImageTensor, fraction: f64, axis: CropAxis) -> Result<(ImageTensor, CropDetection), RoiError> {
    let gray = to_grayscale(img)?;
    let detection = compute_crop_bounds(&gray, fraction, axis)?;
    Ok((apply_crop(&gray, &detection.bounds)?, detection))
}

/// Full image preprocessing: decode, grayscale, ROI crop, standardize.
pub fn preprocess_image(path: &Path, fraction: f64, axis: CropAxis) -> Result<ImageTensor, RoiError> {
    let img = load_image(path)?;
    let (cropped, _) = crop_roi(&img, fraction, axis)?;
    standardize(&cropped)
}
