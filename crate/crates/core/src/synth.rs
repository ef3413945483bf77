//! Synthetic Lambertian scenes with known illuminants.
//!
//! Scenes are rendered as albedo times illuminant, per pixel and channel,
//! so the ground truth holds by construction. Albedo is drawn per patch,
//! not per pixel: estimators that look for locally gray neighborhoods
//! need spatially coherent achromatic regions to find. Texture raises
//! each patch's albedo to a spatially varying power, the way pigment
//! density varies across a real surface: achromatic patches pick up pure
//! luminance contrast while colored patches also vary in chroma along
//! their own hue, so the two stay distinguishable even without sensor
//! noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::defaults;
use crate::error::{Error, Result};
use crate::imaging::{save_png16, IlluminantEstimate, LinearImage, PreprocessConfig};
use crate::parallel;
use crate::util::write_atomic;

/// Full description of one synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Probability that a patch's albedo is achromatic.
    pub gray_fraction: f64,
    /// Colored-albedo choices, components in (0, 1].
    pub albedo_palette: Vec<[f64; 3]>,
    /// Scene illuminant; any positive scale, normalized on output.
    pub illuminant: [f64; 3],
    /// Sigma of the pigment-density exponent around 1; log-albedo
    /// contrast scales with each channel's optical depth `|ln albedo|`.
    pub texture_amplitude: f64,
    /// Additive Gaussian sensor noise sigma.
    pub noise_sigma: f64,
    /// Albedo tile edge length in pixels.
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            gray_fraction: 0.3,
            albedo_palette: default_palette(),
            illuminant: [1.0, 1.0, 1.0],
            texture_amplitude: 0.2,
            noise_sigma: 0.0,
            patch_size: defaults::SYNTH_PATCH_SIZE,
            seed: 0,
        }
    }
}

fn default_palette() -> Vec<[f64; 3]> {
    vec![
        [0.70, 0.25, 0.20],
        [0.25, 0.55, 0.25],
        [0.20, 0.30, 0.65],
        [0.65, 0.60, 0.25],
        [0.50, 0.30, 0.55],
    ]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("scene dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gray_fraction) {
            return Err(Error::InvalidConfig(format!(
                "gray_fraction {} outside [0, 1]",
                self.gray_fraction
            )));
        }
        if self.albedo_palette.is_empty() {
            return Err(Error::InvalidConfig("albedo palette is empty".into()));
        }
        for entry in &self.albedo_palette {
            if entry.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return Err(Error::InvalidConfig(format!(
                    "palette entry {entry:?} outside (0, 1]"
                )));
            }
        }
        if self.illuminant.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "illuminant {:?} must be all-positive",
                self.illuminant
            )));
        }
        if self.texture_amplitude < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "texture_amplitude and noise_sigma must be >= 0".into(),
            ));
        }
        if self.patch_size == 0 {
            return Err(Error::InvalidConfig("patch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A rendered scene plus the hidden quantities tests verify against.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: LinearImage,
    pub truth: IlluminantEstimate,
    /// Effective albedo after texture, before lighting.
    pub albedo: Vec<[f64; 3]>,
    /// True where the albedo is achromatic and no channel was clipped.
    pub gray_mask: Vec<bool>,
}

/// Renders a scene; the convenience form of [`generate_scene`].
pub fn generate(spec: &SceneSpec) -> Result<(LinearImage, IlluminantEstimate)> {
    let scene = generate_scene(spec)?;
    Ok((scene.image, scene.truth))
}

/// Renders a scene, keeping the albedo field and gray mask for oracles.
///
/// The illuminant is scaled so its largest channel is 1 before shading,
/// which keeps unclipped pixel chromaticity exactly on the illuminant
/// direction for achromatic albedo.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let truth = IlluminantEstimate::from_rgb(spec.illuminant)?;
    let t = truth.rgb();
    let peak = t[0].max(t[1]).max(t[2]);
    let light = [t[0] / peak, t[1] / peak, t[2] / peak];

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let patches_x = spec.width.div_ceil(spec.patch_size);
    let patches_y = spec.height.div_ceil(spec.patch_size);
    let mut patch_albedo = Vec::with_capacity(patches_x * patches_y);
    let mut patch_gray = Vec::with_capacity(patches_x * patches_y);
    for _ in 0..patches_x * patches_y {
        let gray = rng.random_bool(spec.gray_fraction);
        patch_gray.push(gray);
        if gray {
            let w = rng.random_range(defaults::SYNTH_GRAY_ALBEDO.0..defaults::SYNTH_GRAY_ALBEDO.1);
            patch_albedo.push([w, w, w]);
        } else {
            let idx = rng.random_range(0..spec.albedo_palette.len());
            patch_albedo.push(spec.albedo_palette[idx]);
        }
    }

    let n_px = spec.width * spec.height;
    let mut albedo = vec![[0.0f64; 3]; n_px];
    let mut data = vec![[0.0f64; 3]; n_px];
    let mut gray_mask = vec![false; n_px];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let patch = (y / spec.patch_size) * patches_x + x / spec.patch_size;
            let base = patch_albedo[patch];
            let z: f64 = rng.sample(StandardNormal);
            let density = 1.0 + spec.texture_amplitude * z;
            let i = y * spec.width + x;
            let mut clipped = false;
            for c in 0..3 {
                albedo[i][c] = base[c].powf(density);
                let mut v = albedo[i][c] * light[c];
                if spec.noise_sigma > 0.0 {
                    let noise: f64 = rng.sample(StandardNormal);
                    v += spec.noise_sigma * noise;
                }
                if !(0.0..=1.0).contains(&v) {
                    clipped = true;
                    v = v.clamp(0.0, 1.0);
                }
                data[i][c] = v;
            }
            gray_mask[i] = patch_gray[patch] && !clipped;
        }
    }
    let image = LinearImage::from_pixels(spec.width, spec.height, data, &PreprocessConfig::default())?;
    Ok(Scene {
        image,
        truth,
        albedo,
        gray_mask,
    })
}

/// Randomization bounds for dataset generation.
///
/// Palette colors are drawn saturated: uniform hue with a log-chroma
/// magnitude in `palette_chroma`. A desaturated surface reflecting a
/// neutral light is indistinguishable from a gray surface under a tinted
/// one, so the chroma floor is what keeps the generated scenes
/// identifiable; the ceiling limits how far colors wrap around the
/// chroma torus. Gray patches dominate on average, echoing the abundance
/// of near-neutral surfaces in natural scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRanges {
    pub width: usize,
    pub height: usize,
    pub gray_fraction: (f64, f64),
    pub texture_amplitude: (f64, f64),
    pub noise_sigma: (f64, f64),
    /// Angular radius of the illuminant cap around neutral, in degrees.
    pub cap_degrees: f64,
    pub patch_size: usize,
    pub palette_size: (usize, usize),
    /// Log-chroma offset magnitude of palette colors.
    pub palette_chroma: (f64, f64),
    /// Brightest channel of a palette color.
    pub palette_luma: (f64, f64),
}

impl Default for DatasetRanges {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            gray_fraction: (0.4, 0.75),
            texture_amplitude: (0.1, 0.3),
            noise_sigma: (0.0, 0.002),
            cap_degrees: defaults::SYNTH_CAP_DEGREES,
            patch_size: defaults::SYNTH_PATCH_SIZE,
            palette_size: (2, 6),
            palette_chroma: defaults::SYNTH_PALETTE_CHROMA,
            palette_luma: defaults::SYNTH_PALETTE_LUMA,
        }
    }
}

impl DatasetRanges {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: (f64, f64)| r.0 <= r.1;
        if self.width == 0 || self.height == 0 || self.patch_size == 0 {
            return Err(Error::InvalidConfig("zero dimension in dataset ranges".into()));
        }
        if !ordered(self.gray_fraction)
            || !ordered(self.texture_amplitude)
            || !ordered(self.noise_sigma)
            || self.palette_size.0 > self.palette_size.1
        {
            return Err(Error::InvalidConfig("range lower bound exceeds upper bound".into()));
        }
        if !(0.0..=1.0).contains(&self.gray_fraction.0)
            || !(0.0..=1.0).contains(&self.gray_fraction.1)
        {
            return Err(Error::InvalidConfig("gray_fraction range outside [0, 1]".into()));
        }
        if self.gray_fraction.0 < 0.0 || self.texture_amplitude.0 < 0.0 || self.noise_sigma.0 < 0.0
        {
            return Err(Error::InvalidConfig("negative lower bound".into()));
        }
        if !(0.0..90.0).contains(&self.cap_degrees) {
            return Err(Error::InvalidConfig(format!(
                "cap_degrees {} outside [0, 90)",
                self.cap_degrees
            )));
        }
        if self.palette_size.0 == 0 {
            return Err(Error::InvalidConfig("palette_size lower bound must be >= 1".into()));
        }
        if !ordered(self.palette_chroma) || self.palette_chroma.0 < 0.0 {
            return Err(Error::InvalidConfig("bad palette_chroma range".into()));
        }
        if !ordered(self.palette_luma)
            || self.palette_luma.0 <= 0.0
            || self.palette_luma.1 > 1.0
        {
            return Err(Error::InvalidConfig("palette_luma range outside (0, 1]".into()));
        }
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment, blank lines skipped.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut ranges = Self::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| Error::ConfigFile {
                line: idx + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got \"{line}\"")))?;
            let key = key.trim();
            let value = value.trim();
            let parse_f64 = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| err(format!("malformed number \"{v}\"")))
            };
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| err(format!("malformed integer \"{v}\"")))
            };
            let parse_pair = |v: &str| -> Result<(f64, f64)> {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| err(format!("expected lo,hi pair, got \"{v}\"")))?;
                Ok((parse_f64(a.trim())?, parse_f64(b.trim())?))
            };
            match key {
                "width" => ranges.width = parse_usize(value)?,
                "height" => ranges.height = parse_usize(value)?,
                "gray_fraction" => ranges.gray_fraction = parse_pair(value)?,
                "texture_amplitude" => ranges.texture_amplitude = parse_pair(value)?,
                "noise_sigma" => ranges.noise_sigma = parse_pair(value)?,
                "cap_degrees" => ranges.cap_degrees = parse_f64(value)?,
                "patch_size" => ranges.patch_size = parse_usize(value)?,
                "palette_size" => {
                    let (a, b) = value
                        .split_once(',')
                        .ok_or_else(|| err(format!("expected lo,hi pair, got \"{value}\"")))?;
                    ranges.palette_size = (parse_usize(a.trim())?, parse_usize(b.trim())?);
                }
                "palette_chroma" => ranges.palette_chroma = parse_pair(value)?,
                "palette_luma" => ranges.palette_luma = parse_pair(value)?,
                other => return Err(err(format!("unknown key \"{other}\""))),
            }
        }
        ranges.validate()?;
        Ok(ranges)
    }
}

/// Uniform direction in the spherical cap of `cap_degrees` around neutral.
pub fn sample_cap_direction(rng: &mut ChaCha8Rng, cap_degrees: f64) -> [f64; 3] {
    let axis = 1.0 / 3f64.sqrt();
    let e1 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let e2 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let cos_cap = (cap_degrees * PI / 180.0).cos();
    let cos_theta = rng.random_range(cos_cap..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    let (s, c) = phi.sin_cos();
    let mut dir = [0.0f64; 3];
    for i in 0..3 {
        dir[i] = cos_theta * axis + sin_theta * (c * e1[i] + s * e2[i]);
    }
    dir
}

/// A color with uniform hue and the given log-chroma offset magnitude,
/// scaled so its brightest channel is `luma`.
fn sample_palette_color(rng: &mut ChaCha8Rng, chroma: (f64, f64), luma: (f64, f64)) -> [f64; 3] {
    let phi = rng.random_range(0.0..2.0 * PI);
    let rho = if chroma.0 == chroma.1 {
        chroma.0
    } else {
        rng.random_range(chroma.0..chroma.1)
    };
    let (u, v) = (rho * phi.cos(), rho * phi.sin());
    let raw = [(-u).exp(), 1.0, (-v).exp()];
    let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
    let m = if luma.0 == luma.1 {
        luma.0
    } else {
        rng.random_range(luma.0..luma.1)
    };
    [
        raw[0] / peak * m,
        raw[1] / peak * m,
        raw[2] / peak * m,
    ]
}

/// Draws `count` scene specs from the ranges, one derived seed each.
pub fn sample_specs(count: usize, ranges: &DatasetRanges, seed: u64) -> Result<Vec<SceneSpec>> {
    ranges.validate()?;
    if count == 0 {
        return Err(Error::InvalidConfig("dataset count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let palette_len = rng.random_range(ranges.palette_size.0..=ranges.palette_size.1);
        let palette = (0..palette_len)
            .map(|_| sample_palette_color(&mut rng, ranges.palette_chroma, ranges.palette_luma))
            .collect();
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let gray_fraction = uniform(&mut rng, ranges.gray_fraction);
        let texture_amplitude = uniform(&mut rng, ranges.texture_amplitude);
        let noise_sigma = uniform(&mut rng, ranges.noise_sigma);
        let illuminant = sample_cap_direction(&mut rng, ranges.cap_degrees);
        let seed = rng.random();
        specs.push(SceneSpec {
            width: ranges.width,
            height: ranges.height,
            gray_fraction,
            albedo_palette: palette,
            illuminant,
            texture_amplitude,
            noise_sigma,
            patch_size: ranges.patch_size,
            seed,
        });
    }
    Ok(specs)
}

/// Writes `count` scenes as `img_%05d.png` plus `gt.csv` under `dir`,
/// returning the (file name, truth) rows in written order.
pub fn generate_dataset(
    dir: &Path,
    count: usize,
    ranges: &DatasetRanges,
    seed: u64,
) -> Result<Vec<(String, IlluminantEstimate)>> {
    let specs = sample_specs(count, ranges, seed)?;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let jobs: Vec<(String, SceneSpec)> = specs
        .into_iter()
        .enumerate()
        .map(|(i, spec)| (format!("img_{i:05}.png"), spec))
        .collect();
    let results = parallel::map_ordered(&jobs, |(name, spec)| -> Result<(String, IlluminantEstimate)> {
        let (image, truth) = generate(spec)?;
        save_png16(&image, &dir.join(name))?;
        Ok((name.clone(), truth))
    });
    let mut rows = Vec::with_capacity(count);
    for r in results {
        rows.push(r?);
    }
    let mut csv = String::from("image,r,g,b\n");
    for (name, truth) in &rows {
        let [r, g, b] = truth.rgb();
        csv.push_str(&format!("{name},{r},{g},{b}\n"));
    }
    write_atomic(&dir.join("gt.csv"), csv.as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grayness::{estimate_gi, GiConfig};

    #[test]
    fn same_seed_renders_identical_scenes() {
        let spec = SceneSpec::default();
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a.image.pixels(), b.image.pixels());
        assert_eq!(a.image.mask(), b.image.mask());
        assert_eq!(a.gray_mask, b.gray_mask);
    }

    #[test]
    fn noise_free_image_factors_into_albedo_times_light() {
        let spec = SceneSpec {
            noise_sigma: 0.0,
            seed: 42,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let t = scene.truth.rgb();
        let peak = t[0].max(t[1]).max(t[2]);
        let light = [t[0] / peak, t[1] / peak, t[2] / peak];
        for (i, px) in scene.image.pixels().iter().enumerate() {
            for c in 0..3 {
                if px[c] < 1.0 {
                    assert!((px[c] / light[c] - scene.albedo[i][c]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gray_world_over_gray_pixels_recovers_the_light() {
        let spec = SceneSpec {
            gray_fraction: 0.5,
            illuminant: [0.8, 1.0, 0.6],
            noise_sigma: 0.0,
            seed: 7,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let mut sum = [0.0f64; 3];
        let mut count = 0usize;
        for (px, &gray) in scene.image.pixels().iter().zip(&scene.gray_mask) {
            if gray {
                for c in 0..3 {
                    sum[c] += px[c];
                }
                count += 1;
            }
        }
        assert!(count > 100);
        let mean = IlluminantEstimate::from_rgb(sum).unwrap();
        for c in 0..3 {
            assert!((mean.rgb()[c] - scene.truth.rgb()[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn textureless_patches_are_flat() {
        let spec = SceneSpec {
            gray_fraction: 1.0,
            texture_amplitude: 0.0,
            noise_sigma: 0.0,
            seed: 3,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let d = crate::grayness::log_of_gaussian_response(&scene.image, 0.5, 1e-4).unwrap();
        let (x, y) = (8, 8);
        assert!(d.is_valid(x, y));
        for c in 0..3 {
            assert!(d.response(x, y)[c].abs() < 1e-12);
        }
    }

    #[test]
    fn textured_gray_scene_is_recovered_by_gi() {
        let spec = SceneSpec {
            width: 64,
            height: 64,
            gray_fraction: 1.0,
            illuminant: [0.8, 1.0, 0.6],
            texture_amplitude: 0.2,
            noise_sigma: 0.0,
            seed: 11,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let est = estimate_gi(&scene.image, &GiConfig::default()).unwrap();
        let dot: f64 = est
            .rgb()
            .iter()
            .zip(scene.truth.rgb())
            .map(|(a, b)| a * b)
            .sum();
        let angle = dot.clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 0.5, "angular error {angle}");
    }

    #[test]
    fn cap_directions_stay_positive_and_in_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let axis = 1.0 / 3f64.sqrt();
        for _ in 0..500 {
            let d = sample_cap_direction(&mut rng, defaults::SYNTH_CAP_DEGREES);
            let norm: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|v| *v > 0.0), "direction {d:?}");
            let cos: f64 = d.iter().map(|v| v * axis).sum();
            assert!(cos >= (defaults::SYNTH_CAP_DEGREES.to_radians()).cos() - 1e-12);
        }
    }

    #[test]
    fn dataset_generation_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let ranges = DatasetRanges {
            width: 32,
            height: 32,
            ..DatasetRanges::default()
        };
        let rows = generate_dataset(dir.path(), 3, &ranges, 5).unwrap();
        assert_eq!(rows.len(), 3);
        let csv1 = std::fs::read(dir.path().join("gt.csv")).unwrap();
        let img1 = std::fs::read(dir.path().join("img_00002.png")).unwrap();
        generate_dataset(dir.path(), 3, &ranges, 5).unwrap();
        assert_eq!(std::fs::read(dir.path().join("gt.csv")).unwrap(), csv1);
        assert_eq!(std::fs::read(dir.path().join("img_00002.png")).unwrap(), img1);
    }

    #[test]
    fn config_text_overrides_ranges() {
        let text = "width=48\nheight = 40\ngray_fraction=0.2,0.4 # mostly colored\n\ncap_degrees=10\n";
        let ranges = DatasetRanges::from_config_text(text).unwrap();
        assert_eq!(ranges.width, 48);
        assert_eq!(ranges.height, 40);
        assert_eq!(ranges.gray_fraction, (0.2, 0.4));
        assert_eq!(ranges.cap_degrees, 10.0);
        assert!(DatasetRanges::from_config_text("bogus").is_err());
        assert!(DatasetRanges::from_config_text("width=0").is_err());
        assert!(matches!(
            DatasetRanges::from_config_text("mystery=1"),
            Err(Error::ConfigFile { line: 1, .. })
        ));
    }
}
