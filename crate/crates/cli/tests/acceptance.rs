//! Shipping gate: one test per release criterion, each printing a
//! `[PASS]` line with the measured numbers (visible with `--nocapture`).

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use illumest::chroma::{circular_convolve_fft, ChromaHistogram, Feature, HistogramGeometry};
use illumest::evaluation::{
    aggregate, angular_error, cross_validate, evaluate, fold_indices, gray_world_baseline,
    EvalSample,
};
use illumest::ffcc::{
    batch_loss_and_gradient, estimate_ffcc, train, FfccModel, LabeledSample, TrainConfig,
};
use illumest::grayness::{estimate_gi, grayness_index, log_of_gaussian_response, GiConfig};
use illumest::grid::Grid;
use illumest::synth::{generate, generate_scene, sample_cap_direction, sample_specs, DatasetRanges, SceneSpec};
use illumest::{IlluminantEstimate, IlluminantEstimator, LinearImage};

fn median(sorted: &[f64]) -> f64 {
    sorted[sorted.len() / 2]
}

/// Gray-bearing 512x512 scenes shared by the exactness and bias checks:
/// per-image GI errors plus the slowest single estimate in milliseconds.
fn gray_pool() -> &'static (Vec<f64>, u128) {
    static POOL: OnceLock<(Vec<f64>, u128)> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let cfg = GiConfig::default();
        let mut errs = Vec::new();
        let mut worst_ms = 0u128;
        for s in 0..50 {
            let spec = SceneSpec {
                width: 512,
                height: 512,
                gray_fraction: rng.random_range(0.2..0.8),
                texture_amplitude: 0.2,
                noise_sigma: 0.0,
                illuminant: sample_cap_direction(&mut rng, 25.0),
                seed: 9000 + s,
                ..SceneSpec::default()
            };
            let scene = generate_scene(&spec).unwrap();
            let t0 = Instant::now();
            let est = estimate_gi(&scene.image, &cfg).unwrap();
            worst_ms = worst_ms.max(t0.elapsed().as_millis());
            errs.push(angular_error(&est, &scene.truth));
        }
        (errs, worst_ms)
    })
}

#[test]
fn gi_is_exact_on_gray_bearing_scenes() {
    let (errs, worst_ms) = gray_pool();
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let max = sorted[sorted.len() - 1];
    assert!(med < 0.5, "median {med}");
    assert!(max < 1.0, "max {max}");
    assert!(*worst_ms < 1000, "slowest estimate {worst_ms} ms");
    println!(
        "[PASS] gi exact on 50 gray-bearing 512x512 scenes: median {med:.4} deg, max {max:.4} deg, slowest {worst_ms} ms"
    );
}

#[test]
fn gi_is_biased_without_gray_surfaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = GiConfig::default();
    let mut color_errs = Vec::new();
    for s in 0..20 {
        let spec = SceneSpec {
            width: 512,
            height: 512,
            gray_fraction: 0.0,
            albedo_palette: vec![[0.70, 0.32, 0.26]],
            texture_amplitude: 0.2,
            noise_sigma: 0.0,
            illuminant: sample_cap_direction(&mut rng, 25.0),
            seed: 7000 + s,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec).unwrap();
        let est = estimate_gi(&scene.image, &cfg).unwrap();
        color_errs.push(angular_error(&est, &scene.truth));
    }
    let mean = color_errs.iter().sum::<f64>() / color_errs.len() as f64;
    assert!(mean > 5.0, "color-dominated mean {mean}");

    let mut pool = gray_pool().0.clone();
    pool.extend_from_slice(&color_errs);
    pool.sort_by(f64::total_cmp);
    let pool_median = median(&pool);
    assert!(pool_median < 1.5, "pool median {pool_median}");
    println!(
        "[PASS] gi bias without gray surfaces: color-dominated mean {mean:.2} deg, 70-scene pool median {pool_median:.4} deg"
    );
}

#[test]
fn ffcc_learns_and_beats_gray_world_on_held_out_scenes() {
    let specs = sample_specs(300, &DatasetRanges::default(), 5).unwrap();
    let scenes: Vec<_> = specs.iter().map(|s| generate(s).unwrap()).collect();
    let geom = HistogramGeometry::default();
    let samples: Vec<_> = scenes[..250]
        .iter()
        .enumerate()
        .map(|(i, (img, truth))| {
            LabeledSample::from_image(img, truth, geom, format!("train_{i}")).unwrap()
        })
        .collect();
    let t0 = Instant::now();
    let (model, _) = train(&samples, &TrainConfig::default()).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();

    let mut ffcc = Vec::new();
    let mut gray_world = Vec::new();
    for (img, truth) in &scenes[250..] {
        ffcc.push(angular_error(&estimate_ffcc(&model, img).unwrap(), truth));
        gray_world.push(angular_error(&gray_world_baseline(img).unwrap(), truth));
    }
    ffcc.sort_by(f64::total_cmp);
    gray_world.sort_by(f64::total_cmp);
    let med = median(&ffcc);
    let gw_med = median(&gray_world);
    assert!(med < 2.0, "ffcc median {med}");
    assert!(med < gw_med, "ffcc {med} vs gray-world {gw_med}");
    assert!(train_secs < 300.0, "trained in {train_secs} s");
    println!(
        "[PASS] ffcc on 250 train / 50 held-out: median {med:.3} deg vs gray-world {gw_med:.3} deg, trained in {train_secs:.0} s"
    );
}

#[test]
fn fft_convolution_matches_direct_spatial_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 32] {
        let geom = HistogramGeometry::new(n, 2.0 / n as f64, (-1.0, -1.0)).unwrap();
        let mass = Grid::from_vec(n, (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect());
        let h = ChromaHistogram::from_mass(geom, mass, Feature::Intensity).unwrap();
        let filter =
            Grid::from_vec(n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let fast = circular_convolve_fft(&h, &filter).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut direct = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let fi = (n + i - a) % n;
                        let fj = (n + j - b) % n;
                        direct += h.mass().get(a, b) * filter.get(fi, fj);
                    }
                }
                worst = worst.max((fast.get(i, j) - direct).abs());
            }
        }
    }
    assert!(worst < 1e-8, "max deviation {worst:e}");
    println!("[PASS] fft convolution matches the direct O(n^4) oracle: max |diff| {worst:.2e}");
}

fn tiny_sample(geom: HistogramGeometry, seed: u64) -> LabeledSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12usize;
    let data: Vec<[f64; 3]> = (0..n * n)
        .map(|_| {
            [
                rng.random_range(0.05..0.9),
                rng.random_range(0.05..0.9),
                rng.random_range(0.05..0.9),
            ]
        })
        .collect();
    let img = LinearImage::new(n, n, data, vec![true; n * n]).unwrap();
    let truth = IlluminantEstimate::from_rgb([
        rng.random_range(0.4..1.0),
        rng.random_range(0.4..1.0),
        rng.random_range(0.4..1.0),
    ])
    .unwrap();
    LabeledSample::from_image(&img, &truth, geom, format!("fd_{seed}")).unwrap()
}

#[test]
fn training_gradients_match_central_finite_differences() {
    let geom = HistogramGeometry::new(8, 0.25, (-1.0, -1.0)).unwrap();
    let samples = vec![tiny_sample(geom, 1), tiny_sample(geom, 2)];
    let (l2f, l2b) = (1e-3, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut filters = vec![Grid::zeros(8), Grid::zeros(8)];
    let mut bias = Grid::zeros(8);
    for g in filters.iter_mut().chain(std::iter::once(&mut bias)) {
        for i in 0..8 {
            for j in 0..8 {
                g.set(i, j, rng.random_range(-0.5..0.5));
            }
        }
    }
    let model = FfccModel::from_parts(geom, filters.clone(), bias.clone(), true).unwrap();
    let (_, grad_f, grad_b) = batch_loss_and_gradient(&model, &samples, l2f, l2b).unwrap();

    let step = 1e-5;
    let loss_at = |fs: &[Grid], b: &Grid| -> f64 {
        let m = FfccModel::from_parts(geom, fs.to_vec(), b.clone(), true).unwrap();
        batch_loss_and_gradient(&m, &samples, l2f, l2b).unwrap().0
    };
    let mut worst_rel: f64 = 0.0;
    // Five probed coordinates per parameter map.
    for map in 0..3 {
        for _ in 0..5 {
            let (i, j) = (rng.random_range(0..8), rng.random_range(0..8));
            let (mut fs, mut b) = (filters.clone(), bias.clone());
            let (plus, minus, analytic) = if map < 2 {
                let cur = fs[map].get(i, j);
                fs[map].set(i, j, cur + step);
                let plus = loss_at(&fs, &b);
                fs[map].set(i, j, cur - step);
                let minus = loss_at(&fs, &b);
                (plus, minus, grad_f[map].get(i, j))
            } else {
                let cur = b.get(i, j);
                b.set(i, j, cur + step);
                let plus = loss_at(&fs, &b);
                b.set(i, j, cur - step);
                let minus = loss_at(&fs, &b);
                (plus, minus, grad_b.get(i, j))
            };
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
            worst_rel = worst_rel.max(rel);
        }
    }
    assert!(worst_rel < 1e-4, "worst relative error {worst_rel:e}");
    println!(
        "[PASS] analytic gradients match central differences: worst relative error {worst_rel:.2e}"
    );
}

#[test]
fn log_chroma_round_trips_and_adds() {
    use illumest::chroma::{rgb_to_uv, uv_to_rgb};
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_rt: f64 = 0.0;
    let mut worst_add: f64 = 0.0;
    for _ in 0..1000 {
        let rgb = [
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
        ];
        let unit = IlluminantEstimate::from_rgb(rgb).unwrap();
        let back = uv_to_rgb(rgb_to_uv(rgb).unwrap()).unwrap();
        for (a, b) in back.rgb().iter().zip(unit.rgb()) {
            worst_rt = worst_rt.max((a - b).abs());
        }
        let lit = [
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
            rng.random_range(0.01..1.0),
        ];
        let prod = rgb_to_uv([rgb[0] * lit[0], rgb[1] * lit[1], rgb[2] * lit[2]]).unwrap();
        let (wa, wb) = (rgb_to_uv(rgb).unwrap(), rgb_to_uv(lit).unwrap());
        worst_add = worst_add.max((prod.u - (wa.u + wb.u)).abs());
        worst_add = worst_add.max((prod.v - (wa.v + wb.v)).abs());
    }
    assert!(worst_rt < 1e-9, "round trip {worst_rt:e}");
    assert!(worst_add < 1e-12, "additivity {worst_add:e}");
    println!(
        "[PASS] log-chroma round trip and additivity over 1000 draws: max {worst_rt:.2e} / {worst_add:.2e}"
    );
}

#[test]
fn grayness_map_is_invariant_to_per_channel_rescaling() {
    let spec = SceneSpec {
        gray_fraction: 0.4,
        noise_sigma: 0.0,
        seed: 31,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let img = &scene.image;
    let scale = [0.9, 0.55, 0.7];
    let scaled: Vec<[f64; 3]> = img
        .pixels()
        .iter()
        .map(|px| [px[0] * scale[0], px[1] * scale[1], px[2] * scale[2]])
        .collect();
    let tinted =
        LinearImage::new(img.width(), img.height(), scaled, img.mask().to_vec()).unwrap();

    let cfg = GiConfig::default();
    let a = grayness_index(&log_of_gaussian_response(img, cfg.sigma, cfg.epsilon).unwrap(), cfg.epsilon);
    let b = grayness_index(
        &log_of_gaussian_response(&tinted, cfg.sigma, cfg.epsilon).unwrap(),
        cfg.epsilon,
    );
    assert_eq!(a.validity(), b.validity());
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for ((ga, gb), &valid) in a.scores().iter().zip(b.scores()).zip(a.validity()) {
        if valid {
            worst = worst.max((ga - gb).abs());
            compared += 1;
        }
    }
    assert!(compared > 1000, "only {compared} valid pixels");
    assert!(worst < 1e-8, "max score shift {worst:e}");
    println!(
        "[PASS] grayness map invariant under per-channel rescaling: max shift {worst:.2e} over {compared} pixels"
    );
}

#[test]
fn error_statistics_match_a_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(1usize..300);
        let errors: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..90.0)).collect();
        let agg = aggregate(&errors).unwrap();
        let mut sorted = errors;
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / len as f64;
        let at = |q: f64| {
            let pos = (len - 1) as f64 * q;
            let lo = pos.floor() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[pos.ceil() as usize] - sorted[lo])
        };
        let quarter = len.div_ceil(4);
        let best = sorted[..quarter].iter().sum::<f64>() / quarter as f64;
        let worst25 = sorted[len - quarter..].iter().sum::<f64>() / quarter as f64;
        for (got, want) in [
            (agg.mean, mean),
            (agg.median, at(0.5)),
            (agg.trimean, (at(0.25) + 2.0 * at(0.5) + at(0.75)) / 4.0),
            (agg.best25_mean, best),
            (agg.worst25_mean, worst25),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
    let tm = aggregate(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap().trimean;
    assert_eq!(tm, 3.0);
    println!(
        "[PASS] statistics match the sort oracle over 1000 lists: max |diff| {worst:.2e}, trimean([1..5]) = {tm}"
    );
}

#[test]
fn cross_validation_splits_evenly_and_preserves_learning_free_reports() {
    let folds = fold_indices(1707, 3, 0).unwrap();
    assert_eq!(folds.len(), 3);
    let mut seen = vec![false; 1707];
    for fold in &folds {
        assert_eq!(fold.len(), 569);
        for &i in fold {
            assert!(!seen[i], "index {i} appears twice");
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|s| *s));

    let specs = sample_specs(12, &DatasetRanges::default(), 99).unwrap();
    let samples: Vec<EvalSample> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (image, truth) = generate(s).unwrap();
            EvalSample {
                path: format!("scene_{i:02}"),
                image,
                truth,
            }
        })
        .collect();
    let gi = illumest::grayness::GiEstimator::new(GiConfig::default());
    let direct = evaluate(&gi, &samples).unwrap();
    let cv = cross_validate(&samples, 3, 0, |_| {
        Ok(Box::new(illumest::grayness::GiEstimator::new(GiConfig::default()))
            as Box<dyn IlluminantEstimator>)
    })
    .unwrap();
    assert_eq!(direct, cv);
    println!(
        "[PASS] 1707/3 folds are 569+569+569 and learning-free cross-validation equals direct evaluation"
    );
}

#[test]
fn every_subcommand_rerun_is_byte_identical() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let run = |args: &[String]| {
        let out = Command::new(env!("CARGO_BIN_EXE_illumest"))
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let path = |name: &str| base.join(name).to_str().unwrap().to_string();
    let data = path("data");
    let commands: Vec<Vec<String>> = [
        vec!["synth", "--out", &data, "--count", "6", "--seed", "12"],
        vec!["estimate", &data, "--out", &path("est.csv")],
        vec![
            "train", "--data", &data, "--gt", &format!("{data}/gt.csv"),
            "--out", &path("model.ffcc"), "--epochs", "15",
        ],
        vec![
            "evaluate", "--data", &data, "--gt", &format!("{data}/gt.csv"),
            "--json", "--out", &path("eval.json"),
        ],
        vec![
            "correct", &format!("{data}/img_00000.png"),
            "--out", &path("fixed.png"),
        ],
    ]
    .into_iter()
    .map(|argv| argv.into_iter().map(String::from).collect())
    .collect();
    let outputs = [
        "data/gt.csv",
        "data/img_00003.png",
        "est.csv",
        "model.ffcc",
        "eval.json",
        "fixed.png",
    ];

    for argv in &commands {
        run(argv);
    }
    let first: Vec<Vec<u8>> = outputs
        .iter()
        .map(|name| std::fs::read(base.join(name)).unwrap())
        .collect();
    // Rerun the identical commands over the same paths.
    for argv in &commands {
        run(argv);
    }
    for (name, before) in outputs.iter().zip(first) {
        let after = std::fs::read(base.join(name)).unwrap();
        assert_eq!(before, after, "{name} differs between reruns");
    }
    println!(
        "[PASS] byte-identical reruns for synth, estimate, train, evaluate, and correct outputs"
    );
}
