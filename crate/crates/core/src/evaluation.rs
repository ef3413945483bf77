//! Angular-error metric, aggregate statistics, the gray-world baseline,
//! and a k-fold cross-validation harness.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{load_image, IlluminantEstimate, LinearImage, PreprocessConfig};
use crate::parallel;
use crate::IlluminantEstimator;

/// Recovery angular error between two unit-norm illuminants, in degrees.
pub fn angular_error(a: &IlluminantEstimate, b: &IlluminantEstimate) -> f64 {
    let dot: f64 = a.rgb().iter().zip(b.rgb()).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Location statistics over a pooled error list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25_mean: f64,
    pub worst25_mean: f64,
}

/// Linear interpolation of order statistics at position (k-1)*q.
fn quartile(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Computes mean, median, trimean, and best/worst quarter means.
pub fn aggregate(errors: &[f64]) -> Result<Aggregates> {
    if errors.is_empty() {
        return Err(Error::EmptyErrorList);
    }
    let mut sorted = errors.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let k = sorted.len();
    let quarter = k.div_ceil(4);
    let mean = sorted.iter().sum::<f64>() / k as f64;
    let median = quartile(&sorted, 0.5);
    let trimean = (quartile(&sorted, 0.25) + 2.0 * median + quartile(&sorted, 0.75)) / 4.0;
    let best25_mean = sorted[..quarter].iter().sum::<f64>() / quarter as f64;
    let worst25_mean = sorted[k - quarter..].iter().sum::<f64>() / quarter as f64;
    Ok(Aggregates {
        mean,
        median,
        trimean,
        best25_mean,
        worst25_mean,
    })
}

/// Per-image errors plus their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_image: Vec<(String, f64)>,
    pub aggregates: Aggregates,
}

impl EvaluationReport {
    pub fn from_errors(per_image: Vec<(String, f64)>) -> Result<Self> {
        let errors: Vec<f64> = per_image.iter().map(|(_, e)| *e).collect();
        Ok(Self {
            per_image,
            aggregates: aggregate(&errors)?,
        })
    }

    /// CSV body of per-image errors followed by a footer of aggregates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,angular_error_degrees\n");
        for (name, err) in &self.per_image {
            out.push_str(&format!("{name},{err:.6}\n"));
        }
        let a = self.aggregates;
        out.push_str(&format!("mean,{:.6}\n", a.mean));
        out.push_str(&format!("median,{:.6}\n", a.median));
        out.push_str(&format!("trimean,{:.6}\n", a.trimean));
        out.push_str(&format!("best25_mean,{:.6}\n", a.best25_mean));
        out.push_str(&format!("worst25_mean,{:.6}\n", a.worst25_mean));
        out
    }
}

/// Image identifier to ground-truth illuminant mapping.
#[derive(Debug, Clone)]
pub struct GroundTruthTable {
    rows: Vec<(String, IlluminantEstimate)>,
}

impl GroundTruthTable {
    /// Parses the `image,r,g,b` CSV format; values are normalized.
    pub fn from_csv_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::GroundTruth {
            line: 1,
            detail: "empty file".into(),
        })?;
        if header.trim() != "image,r,g,b" {
            return Err(Error::GroundTruth {
                line: 1,
                detail: format!("expected header \"image,r,g,b\", got \"{header}\""),
            });
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |detail: String| Error::GroundTruth {
                line: idx + 1,
                detail,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, got {}", fields.len())));
            }
            let name = fields[0].trim().to_string();
            if !seen.insert(name.clone()) {
                return Err(err(format!("duplicate image \"{name}\"")));
            }
            let mut rgb = [0.0f64; 3];
            for (c, field) in fields[1..].iter().enumerate() {
                rgb[c] = field
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("malformed number \"{field}\"")))?;
            }
            let est = IlluminantEstimate::from_rgb(rgb)
                .map_err(|e| err(format!("bad illuminant: {e}")))?;
            rows.push((name, est));
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_text(&text)
    }

    pub fn get(&self, name: &str) -> Option<&IlluminantEstimate> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn rows(&self) -> &[(String, IlluminantEstimate)] {
        &self.rows
    }
}

/// Mean valid-pixel color, normalized.
pub fn gray_world_baseline(img: &LinearImage) -> Result<IlluminantEstimate> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for (px, &valid) in img.pixels().iter().zip(img.mask()) {
        if valid {
            for c in 0..3 {
                sum[c] += px[c];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    IlluminantEstimate::from_rgb(sum)
}

/// [`IlluminantEstimator`] wrapper around [`gray_world_baseline`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GrayWorldEstimator;

impl IlluminantEstimator for GrayWorldEstimator {
    fn estimate(&self, img: &LinearImage) -> Result<IlluminantEstimate> {
        gray_world_baseline(img)
    }

    fn name(&self) -> &'static str {
        "grayworld"
    }
}

/// One labeled evaluation input.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub path: String,
    pub image: LinearImage,
    pub truth: IlluminantEstimate,
}

/// Loads every image named by the table from `dir`, in table order.
pub fn load_samples(
    dir: &Path,
    table: &GroundTruthTable,
    cfg: &PreprocessConfig,
) -> Result<Vec<EvalSample>> {
    let results = parallel::map_ordered(table.rows(), |(name, truth)| -> Result<EvalSample> {
        let image = load_image(&dir.join(name), cfg)?;
        Ok(EvalSample {
            path: name.clone(),
            image,
            truth: *truth,
        })
    });
    results.into_iter().collect()
}

/// Runs the estimator over every sample and aggregates the errors.
pub fn evaluate(
    estimator: &dyn IlluminantEstimator,
    samples: &[EvalSample],
) -> Result<EvaluationReport> {
    let results = parallel::map_ordered(samples, |s| -> Result<(String, f64)> {
        let est = estimator.estimate(&s.image)?;
        Ok((s.path.clone(), angular_error(&est, &s.truth)))
    });
    let per_image = results.into_iter().collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_errors(per_image)
}

/// Seeded shuffle, then contiguous folds with sizes differing by at most
/// one (the first `len % k` folds take the extra sample).
pub fn fold_indices(len: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > len {
        return Err(Error::BadFoldCount { k, len });
    }
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = len / k;
    let extra = len % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// k-fold cross-validation: each fold is scored by a model trained on the
/// remaining folds, and per-image errors are pooled before aggregation.
/// The report lists images in input order, so a training-free estimator
/// produces a report identical to [`evaluate`].
pub fn cross_validate<T>(
    samples: &[EvalSample],
    k: usize,
    seed: u64,
    trainer: T,
) -> Result<EvaluationReport>
where
    T: Fn(&[&EvalSample]) -> Result<Box<dyn IlluminantEstimator>>,
{
    let folds = fold_indices(samples.len(), k, seed)?;
    let mut pooled: Vec<(usize, String, f64)> = Vec::with_capacity(samples.len());
    for fold in &folds {
        let held_out: HashSet<usize> = fold.iter().copied().collect();
        let train_set: Vec<&EvalSample> = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !held_out.contains(i))
            .map(|(_, s)| s)
            .collect();
        let model = trainer(&train_set)?;
        let fold_samples: Vec<&EvalSample> = fold.iter().map(|&i| &samples[i]).collect();
        let results = parallel::map_ordered(&fold_samples, |s| -> Result<f64> {
            let est = model.estimate(&s.image)?;
            Ok(angular_error(&est, &s.truth))
        });
        for (&idx, err) in fold.iter().zip(results) {
            pooled.push((idx, samples[idx].path.clone(), err?));
        }
    }
    pooled.sort_unstable_by_key(|(idx, _, _)| *idx);
    EvaluationReport::from_errors(pooled.into_iter().map(|(_, name, e)| (name, e)).collect())
}
