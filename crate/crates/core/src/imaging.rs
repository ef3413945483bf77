//! Linear RGB image loading, preprocessing, and diagonal white balance.
//!
//! Images are normalized to [0, 1] at load time: the per-channel black
//! level is subtracted, the result is divided by the usable range, and a
//! validity mask flags saturated or noise-floor pixels so estimators can
//! skip them.

use std::io::Cursor;
use std::path::Path;

use crate::defaults;
use crate::error::{Error, Result};
use crate::parallel;
use crate::util::write_atomic;

/// A linear RGB image plus a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
    mask: Vec<bool>,
}

impl LinearImage {
    /// Builds an image from prepared pixel data and an explicit mask.
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension: {width}x{height}"
            )));
        }
        if data.len() != width * height || mask.len() != data.len() {
            return Err(Error::InvalidImage(format!(
                "buffer length {} does not match {width}x{height}",
                data.len()
            )));
        }
        for px in &data {
            if px.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidImage(format!(
                    "non-finite or negative intensity {px:?}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
            mask,
        })
    }

    /// Builds an image from normalized [0, 1] pixels, deriving the mask
    /// from the saturation and dark thresholds in `cfg`.
    pub fn from_pixels(
        width: usize,
        height: usize,
        data: Vec<[f64; 3]>,
        cfg: &PreprocessConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mask = data
            .iter()
            .map(|px| pixel_valid(px, cfg.saturation_fraction, cfg.dark_threshold))
            .collect();
        Self::new(width, height, data, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }
}

/// A global illuminant direction, stored with unit Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminantEstimate {
    rgb: [f64; 3],
}

impl IlluminantEstimate {
    /// Normalizes an RGB triple into a unit-norm estimate.
    pub fn from_rgb(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEstimate(format!("non-finite {rgb:?}")));
        }
        if rgb.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidEstimate(format!(
                "negative component {rgb:?}"
            )));
        }
        let norm = (rgb[0] * rgb[0] + rgb[1] * rgb[1] + rgb[2] * rgb[2]).sqrt();
        if norm <= 0.0 {
            return Err(Error::InvalidEstimate("zero vector".into()));
        }
        Ok(Self {
            rgb: [rgb[0] / norm, rgb[1] / norm, rgb[2] / norm],
        })
    }

    /// The neutral illuminant (1,1,1)/sqrt(3).
    pub fn gray() -> Self {
        let c = 1.0 / 3f64.sqrt();
        Self { rgb: [c, c, c] }
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }
}

/// Load-time normalization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Per-channel black level in raw counts.
    pub black_level: [f64; 3],
    /// Fraction of the post-black-level range treated as clipped.
    pub saturation_fraction: f64,
    /// Pixels with every channel below this are masked out.
    pub dark_threshold: f64,
    /// Optional decode exponent applied as v^gamma after normalization.
    pub gamma: Option<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            black_level: [0.0; 3],
            saturation_fraction: defaults::SATURATION_FRACTION,
            dark_threshold: defaults::DARK_THRESHOLD,
            gamma: None,
        }
    }
}

impl PreprocessConfig {
    /// Scalar shorthand for a shared black level on all channels.
    pub fn with_black_level(mut self, level: f64) -> Self {
        self.black_level = [level; 3];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.saturation_fraction <= 0.0 || self.saturation_fraction > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "saturation_fraction {} outside (0, 1]",
                self.saturation_fraction
            )));
        }
        if self.black_level.iter().any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "black_level {:?} must be finite and >= 0",
                self.black_level
            )));
        }
        if self.dark_threshold < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "dark_threshold {} must be >= 0",
                self.dark_threshold
            )));
        }
        if let Some(g) = self.gamma {
            if g <= 0.0 || !g.is_finite() {
                return Err(Error::InvalidConfig(format!("gamma {g} must be > 0")));
            }
        }
        Ok(())
    }
}

fn pixel_valid(px: &[f64; 3], saturation: f64, dark: f64) -> bool {
    let saturated = px.iter().any(|v| *v >= saturation);
    let dark_pixel = px.iter().all(|v| *v < dark);
    !saturated && !dark_pixel
}

/// Loads a PPM (P6) or PNG file and normalizes it per `cfg`.
///
/// The saturation and dark tests run on the normalized raw values, before
/// any gamma decode, since clipping is a property of sensor counts.
pub fn load_image(path: &Path, cfg: &PreprocessConfig) -> Result<LinearImage> {
    cfg.validate()?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let (width, height, raw, max_value) = match ext.as_str() {
        "ppm" | "pnm" => decode_ppm(path)?,
        "png" => decode_png(path)?,
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                detail: format!("unsupported format \"{other}\" (expected ppm or png)"),
            })
        }
    };
    normalize_raw(width, height, raw, max_value, cfg)
}

fn normalize_raw(
    width: usize,
    height: usize,
    raw: Vec<[f64; 3]>,
    max_value: f64,
    cfg: &PreprocessConfig,
) -> Result<LinearImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "zero dimension: {width}x{height}"
        )));
    }
    let mut range = [0.0f64; 3];
    for (r, black) in range.iter_mut().zip(cfg.black_level) {
        *r = max_value - black;
        if *r <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "black level {black} leaves no usable range below white point {max_value}"
            )));
        }
    }
    let mut data = vec![[0.0f64; 3]; raw.len()];
    let mut mask = vec![false; raw.len()];
    for (i, px) in raw.iter().enumerate() {
        let mut out = [0.0f64; 3];
        for c in 0..3 {
            out[c] = ((px[c] - cfg.black_level[c]).max(0.0) / range[c]).min(1.0);
        }
        mask[i] = pixel_valid(&out, cfg.saturation_fraction, cfg.dark_threshold);
        if let Some(g) = cfg.gamma {
            for v in &mut out {
                *v = v.powf(g);
            }
        }
        data[i] = out;
    }
    LinearImage::new(width, height, data, mask)
}

fn decode_png(path: &Path) -> Result<(usize, usize, Vec<[f64; 3]>, f64)> {
    let decoded = image::ImageReader::open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    use image::DynamicImage::*;
    let eight_bit = matches!(decoded, ImageLuma8(_) | ImageLumaA8(_) | ImageRgb8(_) | ImageRgba8(_));
    if eight_bit {
        let img = decoded.to_rgb8();
        let raw = img
            .pixels()
            .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
            .collect();
        Ok((img.width() as usize, img.height() as usize, raw, 255.0))
    } else {
        let img = decoded.to_rgb16();
        let raw = img
            .pixels()
            .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
            .collect();
        Ok((img.width() as usize, img.height() as usize, raw, 65535.0))
    }
}

fn decode_ppm(path: &Path) -> Result<(usize, usize, Vec<[f64; 3]>, f64)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fail = |detail: &str| Error::Decode {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut pos = 0usize;
    let magic = next_header_token(&bytes, &mut pos).ok_or_else(|| fail("missing magic"))?;
    if magic != b"P6" {
        return Err(fail("not a P6 file"));
    }
    let mut field = |name: &str| -> Result<u64> {
        let token = next_header_token(&bytes, &mut pos)
            .ok_or_else(|| fail(&format!("missing {name}")))?;
        std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail(&format!("malformed {name}")))
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let max_value = field("maxval")?;
    if !(1..=65535).contains(&max_value) {
        return Err(fail("maxval outside 1..=65535"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail("missing separator before pixel data"));
    }
    pos += 1;
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| fail("dimensions overflow"))?;
    let wide = max_value > 255;
    let needed = samples * if wide { 2 } else { 1 };
    let body = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| fail("truncated pixel data"))?;
    let mut raw = vec![[0.0f64; 3]; width * height];
    for (i, px) in raw.iter_mut().enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            let s = i * 3 + c;
            *v = if wide {
                u16::from_be_bytes([body[2 * s], body[2 * s + 1]]) as f64
            } else {
                body[s] as f64
            };
        }
    }
    Ok((width, height, raw, max_value as f64))
}

/// Advances past whitespace and `#` comments, returning the next token.
fn next_header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

/// Saves an image as 16-bit PNG, clamping values to [0, 1].
pub fn save_png16(img: &LinearImage, path: &Path) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(
        img.width() as u32,
        img.height() as u32,
    );
    for (x, y, out) in buf.enumerate_pixels_mut() {
        let px = img.pixel(x as usize, y as usize);
        let mut q = [0u16; 3];
        for c in 0..3 {
            q[c] = (px[c].clamp(0.0, 1.0) * 65535.0).round() as u16;
        }
        *out = image::Rgb(q);
    }
    let mut encoded = Vec::new();
    image::DynamicImage::ImageRgb16(buf)
        .write_to(&mut Cursor::new(&mut encoded), image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            detail: format!("png encode: {e}"),
        })?;
    write_atomic(path, &encoded)
}

/// Divides each channel by the illuminant, anchored so the green channel
/// is left unchanged, then clamps to [0, out_max]. The mask is preserved.
pub fn apply_white_balance(
    img: &LinearImage,
    est: &IlluminantEstimate,
    out_max: f64,
) -> Result<LinearImage> {
    let rgb = est.rgb();
    let tol = defaults::WB_COMPONENT_TOLERANCE;
    if let Some(&value) = rgb.iter().find(|v| **v <= tol) {
        return Err(Error::IlluminantComponentTooSmall {
            value,
            tolerance: tol,
        });
    }
    let gain = [rgb[1] / rgb[0], 1.0, rgb[1] / rgb[2]];
    let mut out = img.clone();
    let width = out.width();
    parallel::for_each_row(out.pixels_mut(), width, |_, row| {
        for px in row {
            for c in 0..3 {
                px[c] = (px[c] * gain[c]).clamp(0.0, out_max);
            }
        }
    });
    Ok(out)
}

/// Box-filter downsampling over factor-by-factor blocks of valid pixels.
///
/// A block's output is the mean of its valid source pixels; its mask is
/// true when at least half the source pixels are valid. Blocks with no
/// valid pixels fall back to the plain mean and stay masked.
pub fn downsample(img: &LinearImage, factor: usize) -> Result<LinearImage> {
    if factor == 0 {
        return Err(Error::InvalidConfig("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    if factor > img.width() && factor > img.height() {
        return Err(Error::DownsampleFactorTooLarge {
            factor,
            width: img.width(),
            height: img.height(),
        });
    }
    let out_w = img.width().div_ceil(factor);
    let out_h = img.height().div_ceil(factor);
    let mut data = vec![[0.0f64; 3]; out_w * out_h];
    let mut mask = vec![false; out_w * out_h];
    for by in 0..out_h {
        for bx in 0..out_w {
            let x1 = ((bx + 1) * factor).min(img.width());
            let y1 = ((by + 1) * factor).min(img.height());
            let mut sum_valid = [0.0f64; 3];
            let mut sum_all = [0.0f64; 3];
            let mut n_valid = 0usize;
            let mut n_all = 0usize;
            for y in by * factor..y1 {
                for x in bx * factor..x1 {
                    let px = img.pixel(x, y);
                    n_all += 1;
                    for c in 0..3 {
                        sum_all[c] += px[c];
                    }
                    if img.is_valid(x, y) {
                        n_valid += 1;
                        for c in 0..3 {
                            sum_valid[c] += px[c];
                        }
                    }
                }
            }
            let i = by * out_w + bx;
            if n_valid > 0 {
                for c in 0..3 {
                    data[i][c] = sum_valid[c] / n_valid as f64;
                }
            } else {
                for c in 0..3 {
                    data[i][c] = sum_all[c] / n_all as f64;
                }
            }
            mask[i] = 2 * n_valid >= n_all;
        }
    }
    LinearImage::new(out_w, out_h, data, mask)
}
