//! Release acceptance suite. One test per criterion; each prints a single
//! `criterion NN (...): PASS` line so a `--nocapture` run doubles as the
//! release checklist. Oracles here are written from the documented behavior,
//! not from the library code: pair counting by hand, exhaustive sorts,
//! finite differences, process-level reruns.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use sid_core::alterations::{
    augment, brightness_contrast, gamma_map, gaussian_blur, horizontal_flip, jpeg_compress,
    sample_plan, susy_policy, AppliedAlteration,
};
use sid_core::backends::{load_backend, Backend, BackendDescriptor, StubRule};
use sid_core::datasets::{split_manifest, undersample, DatasetManifest, ManifestRecord, Split};
use sid_core::evaluation::{
    build_cross_matrix, evaluate_dataset, resize_vs_crop_report, threshold_sweep, vote, EvalMode,
    Verdict, VotingPolicy,
};
use sid_core::fixtures::{self, TextureFamily};
use sid_core::imageops::{
    center_crop, compute_glcm, decode_image, encode_png, select_top_patches, to_grayscale,
    GlcmParams, GrayBuffer, ImageFileFormat, PatchSelectParams, RgbBuffer, PATCH_SIDE,
};
use sid_core::refmodel::{
    extract_features, loss_and_gradient, train, EarlyStopping, FeatureSet, FeatureVector,
    LinearSoftmax, StopDecision, TrainConfig,
};
use sid_core::Error;

fn pass(n: u32, what: &str) {
    println!("criterion {n:02} ({what}): PASS");
}

/// splitmix64; good enough to fuzz rasters and parameters deterministically.
struct TestRng(u64);

impl TestRng {
    fn new(seed: u64) -> Self {
        TestRng(seed)
    }

    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn gray_noise(rng: &mut TestRng, w: u32, h: u32) -> GrayBuffer {
    let data = (0..w as usize * h as usize)
        .map(|_| (rng.next() & 0xff) as u8)
        .collect();
    GrayBuffer::from_raw(w, h, data).unwrap()
}

// --- criterion 1 -----------------------------------------------------------

/// Count co-occurring quantized pairs the slow way: walk every pixel for
/// every offset, bounds-check by hand, normalize once at the end. Returns
/// `None` when any offset finds no pair, mirroring the documented contract.
fn oracle_glcm(img: &GrayBuffer, params: &GlcmParams) -> Option<(Vec<f64>, f64)> {
    let l = params.levels;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut counts = vec![0u64; l * l];
    let mut total = 0u64;
    for &(dx, dy) in &params.offsets {
        let mut here = 0u64;
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (x + dx as i64, y + dy as i64);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let a = img.value(x as u32, y as u32) as usize * l / 256;
                let b = img.value(nx as u32, ny as u32) as usize * l / 256;
                counts[a * l + b] += 1;
                if params.symmetric {
                    counts[b * l + a] += 1;
                }
                here += 1;
            }
        }
        if here == 0 {
            return None;
        }
        total += if params.symmetric { 2 * here } else { here };
    }
    let t = total as f64;
    let cells: Vec<f64> = counts.iter().map(|&c| c as f64 / t).collect();
    let mut contrast = 0.0;
    for i in 0..l {
        for j in 0..l {
            let d = i as f64 - j as f64;
            contrast += cells[i * l + j] * d * d;
        }
    }
    Some((cells, contrast))
}

#[test]
fn criterion_01_glcm_matches_pair_counting_oracle() {
    let start = Instant::now();
    let offset_sets: &[&[(i32, i32)]] = &[
        &[(1, 0)],
        &[(0, 1)],
        &[(1, -1)],
        &[(1, 1)],
        &[(1, 0), (1, -1), (0, 1), (1, 1)],
        &[(2, 1), (-2, 3)],
        &[(15, 15)],
        &[(0, -4)],
    ];
    let levels_pool = [2usize, 8, 16, 32, 256];
    let mut rng = TestRng::new(0xA11CE);
    let (mut compared, mut empty_seen) = (0usize, 0usize);
    for case in 0..1700 {
        let w = 1 + rng.below(16) as u32;
        let h = 1 + rng.below(16) as u32;
        let img = gray_noise(&mut rng, w, h);
        let params = GlcmParams {
            levels: levels_pool[rng.below(levels_pool.len() as u64) as usize],
            offsets: offset_sets[rng.below(offset_sets.len() as u64) as usize].to_vec(),
            symmetric: rng.below(2) == 0,
        };
        match (compute_glcm::<f64>(&img, &params), oracle_glcm(&img, &params)) {
            (Ok(m), Some((cells, contrast))) => {
                assert_eq!(m.cells(), &cells[..], "case {case}: {w}x{h} {params:?}");
                let got = m.contrast();
                assert!(
                    (got - contrast).abs() <= 1e-9 * contrast.abs().max(1.0),
                    "case {case}: contrast {got} vs oracle {contrast}"
                );
                compared += 1;
            }
            (Err(Error::EmptyPairs { .. }), None) => empty_seen += 1,
            (lib, oracle) => panic!(
                "case {case}: {w}x{h} {params:?} disagree: lib {lib:?} oracle empty={}",
                oracle.is_none()
            ),
        }
    }
    assert!(compared >= 1000, "only {compared} comparable cases");
    assert!(empty_seen > 0, "empty-pair contract never exercised");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "oracle sweep took {elapsed:.1}s");
    pass(1, "glcm pair-counting oracle, exact over 1000+ images");
}

// --- criterion 2 -----------------------------------------------------------

#[test]
fn criterion_02_contrast_closed_forms() {
    let flat = GrayBuffer::from_raw(224, 224, vec![7u8; 224 * 224]).unwrap();
    let m = compute_glcm::<f64>(&flat, &GlcmParams::default()).unwrap();
    assert_eq!(m.contrast(), 0.0);

    // Alternating 0/255 columns: every horizontal pair spans bins 0 and 31,
    // so the whole mass sits at |i - j| = 31 and contrast is exactly 961.
    let mut data = Vec::with_capacity(224 * 224);
    for _y in 0..224 {
        for x in 0..224u32 {
            data.push(if x % 2 == 0 { 0u8 } else { 255 });
        }
    }
    let stripes = GrayBuffer::from_raw(224, 224, data).unwrap();
    let params = GlcmParams {
        levels: 32,
        offsets: vec![(1, 0)],
        symmetric: true,
    };
    let m = compute_glcm::<f64>(&stripes, &params).unwrap();
    assert_eq!(m.contrast(), 961.0);
    pass(2, "contrast closed forms: flat 0, alternating columns 961");
}

// --- criterion 3 -----------------------------------------------------------

/// Grid origins per the documented policy: stride steps plus the edge-aligned
/// tail, stride doubling until at most 64 candidates.
fn oracle_origins(w: u32, h: u32) -> Vec<(u32, u32)> {
    fn axis(extent: u32, side: u32, stride: u32) -> Vec<u32> {
        if extent <= side {
            return vec![0];
        }
        let last = extent - side;
        let mut out = Vec::new();
        let mut x = 0;
        while x < last {
            out.push(x);
            x += stride;
        }
        out.push(last);
        out
    }
    let mut stride = 112;
    loop {
        let xs = axis(w, 224, stride);
        let ys = axis(h, 224, stride);
        if xs.len() * ys.len() <= 64 {
            let mut grid = Vec::new();
            for &y in &ys {
                for &x in &xs {
                    grid.push((x, y));
                }
            }
            return grid;
        }
        stride *= 2;
    }
}

/// Exhaustive reference selection: crop every candidate, score it, sort by
/// (contrast desc, y, x), keep the prefix.
fn oracle_select(img: &RgbBuffer, count: usize) -> Vec<(u32, u32, f64)> {
    let params = GlcmParams::default();
    let mut ranked: Vec<(u32, u32, f64)> = oracle_origins(img.width(), img.height())
        .into_iter()
        .map(|(ox, oy)| {
            let mut crop = RgbBuffer::new(224, 224);
            for py in 0..224 {
                for px in 0..224 {
                    crop.set_pixel(px, py, img.pixel(ox + px, oy + py));
                }
            }
            let c = compute_glcm::<f64>(&to_grayscale(&crop), &params)
                .unwrap()
                .contrast();
            (ox, oy, c)
        })
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    ranked.truncate(count);
    ranked
}

/// Zoned noise: per-cell amplitude palette makes some regions much busier
/// than others, so rankings are non-trivial.
fn textured(seed: u64, w: u32, h: u32) -> RgbBuffer {
    let mut img = RgbBuffer::new(w, h);
    let cell = 64 + 32 * (seed % 3) as u32;
    for y in 0..h {
        for x in 0..w {
            let key = seed ^ ((u64::from(x / cell)) << 40) ^ ((u64::from(y / cell)) << 20);
            let zone = TestRng::new(key).next();
            let amp = [0i64, 6, 30, 120][(zone % 4) as usize];
            let base = 40 + (zone >> 8) % 160;
            let noise = TestRng::new(seed ^ ((u64::from(y)) << 32) ^ u64::from(x)).next();
            let v = (base as i64 + (noise % (2 * amp as u64 + 1) as u64) as i64 - amp)
                .clamp(0, 255) as u8;
            img.set_pixel(x, y, [v, v, v]);
        }
    }
    img
}

#[test]
fn criterion_03_patch_selection_matches_exhaustive_sort() {
    let mut rng = TestRng::new(0x5E1EC7);
    for case in 0..100 {
        let w = 224 + rng.below(320) as u32;
        let h = 224 + rng.below(320) as u32;
        let img = textured(rng.next(), w, h);
        let count = [1usize, 3, 5, 12][rng.below(4) as usize];
        let params = PatchSelectParams {
            count,
            ..PatchSelectParams::default()
        };
        let got = select_top_patches(&img, &params, "case").unwrap();
        let want = oracle_select(&img, count);
        assert_eq!(got.len(), want.len(), "case {case}: {w}x{h} count {count}");
        for (g, w_) in got.iter().zip(&want) {
            assert_eq!((g.origin_x, g.origin_y), (w_.0, w_.1), "case {case}");
            assert!(!g.padded, "case {case}: unexpected padding");
        }
    }

    // Uniform image: all contrasts tie at zero, so selection must be the
    // row-major candidate prefix, stable across runs.
    let mut flat = RgbBuffer::new(600, 400);
    for y in 0..400 {
        for x in 0..600 {
            flat.set_pixel(x, y, [77, 77, 77]);
        }
    }
    let got = select_top_patches(&flat, &PatchSelectParams::default(), "flat").unwrap();
    let origins: Vec<(u32, u32)> = got.iter().map(|p| (p.origin_x, p.origin_y)).collect();
    assert_eq!(
        origins,
        vec![(0, 0), (112, 0), (224, 0), (336, 0), (376, 0)]
    );

    // Sources smaller than the patch collapse to one padded center patch.
    let small = textured(9, 100, 80);
    let got = select_top_patches(&small, &PatchSelectParams::default(), "small").unwrap();
    assert_eq!(got.len(), 1);
    assert!(got[0].padded);
    assert_eq!((got[0].origin_x, got[0].origin_y), (0, 0));
    pass(3, "patch selection equals exhaustive sort, deterministic ties");
}

// --- criterion 4 -----------------------------------------------------------

#[test]
fn criterion_04_vote_truth_tables() {
    let base = VotingPolicy::default();
    assert_eq!((base.n_patches, base.threshold_k), (5, 3));

    // Full-size images: every verdict combination at every threshold.
    for mask in 0u32..32 {
        let verdicts: Vec<Verdict> = (0..5)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    Verdict::Synthetic
                } else {
                    Verdict::Authentic
                }
            })
            .collect();
        let s = mask.count_ones() as usize;
        for k in 1..=5usize {
            let policy = VotingPolicy {
                threshold_k: k,
                ..base.clone()
            };
            let want = if s >= k {
                Verdict::Synthetic
            } else {
                Verdict::Authentic
            };
            assert_eq!(
                vote(&verdicts, &policy).unwrap(),
                want,
                "mask {mask:05b} k {k}"
            );
        }
    }

    // Small images fall back to the fractional rule; at the default 0.6 the
    // effective thresholds by available patch count are fixed.
    let effective: Vec<usize> = (1..=5).map(|a| base.effective_threshold(a)).collect();
    assert_eq!(effective, vec![1, 2, 2, 3, 3]);

    // Three available patches means 2-of-3, enumerated.
    for mask in 0u32..8 {
        let verdicts: Vec<Verdict> = (0..3)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    Verdict::Synthetic
                } else {
                    Verdict::Authentic
                }
            })
            .collect();
        let want = if mask.count_ones() >= 2 {
            Verdict::Synthetic
        } else {
            Verdict::Authentic
        };
        assert_eq!(vote(&verdicts, &base).unwrap(), want, "mask {mask:03b}");
    }

    // Strict preset: synthetic only on a unanimous synthetic vote.
    let strict = VotingPolicy {
        threshold_k: 5,
        ..base.clone()
    };
    for mask in 0u32..32 {
        let verdicts: Vec<Verdict> = (0..5)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    Verdict::Synthetic
                } else {
                    Verdict::Authentic
                }
            })
            .collect();
        let want = if mask == 0b11111 {
            Verdict::Synthetic
        } else {
            Verdict::Authentic
        };
        assert_eq!(vote(&verdicts, &strict).unwrap(), want, "strict {mask:05b}");
    }
    pass(4, "vote truth tables, 2-of-3 fallback, 5-of-5 strict");
}

// --- shared band fixtures --------------------------------------------------

/// 672x224 image made of six vertical 112px strips. Patch k covers strips
/// k and k+1 exactly, so strip values directly script per-patch verdicts.
fn band_image(values: [u8; 6]) -> RgbBuffer {
    let mut img = RgbBuffer::new(672, 224);
    for (band, &v) in values.iter().enumerate() {
        for x in band as u32 * 112..(band as u32 + 1) * 112 {
            for y in 0..224 {
                img.set_pixel(x, y, [v, v, v]);
            }
        }
    }
    img
}

fn write_image(dir: &Path, name: &str, img: &RgbBuffer) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, encode_png(img).unwrap()).unwrap();
    path
}

fn record(path: PathBuf, label: &str, split: Split) -> ManifestRecord {
    ManifestRecord {
        path,
        label: label.into(),
        generator: if label == "authentic" {
            "none".into()
        } else {
            "bandgen".into()
        },
        year: Some(2024),
        format: ImageFileFormat::Png,
        split,
    }
}

/// Stub that votes synthetic on dark patches (mean luma under 50).
fn dark_synthetic_stub() -> BackendDescriptor {
    BackendDescriptor::Stub {
        label_space: vec!["authentic".into(), "synthetic".into()],
        rule: StubRule::LumaThreshold {
            threshold: 50.0,
            below: vec![0.05, 0.95],
            at_or_above: vec![0.95, 0.05],
        },
    }
}

// --- criterion 5 -----------------------------------------------------------

#[test]
fn criterion_05_threshold_sweep_is_monotone() {
    // Strip values script the synthetic patch count s per image: a patch is
    // dark (synthetic vote) only when both covered strips are 0.
    let dir = tempfile::tempdir().unwrap();
    let auth_values: [[u8; 6]; 3] = [
        [0, 0, 200, 200, 200, 200],    // s = 1
        [0, 0, 0, 0, 200, 200],        // s = 3
        [0, 0, 0, 0, 0, 200],          // s = 4
    ];
    let syn_values: [[u8; 6]; 3] = [
        [0, 0, 0, 0, 0, 0],            // s = 5
        [0, 0, 0, 0, 0, 200],          // s = 4
        [0, 0, 0, 0, 200, 200],        // s = 3
    ];
    let auth_records = auth_values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            record(
                write_image(dir.path(), &format!("a{i}.png"), &band_image(v)),
                "authentic",
                Split::Test,
            )
        })
        .collect();
    let syn_records = syn_values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            record(
                write_image(dir.path(), &format!("s{i}.png"), &band_image(v)),
                "synthetic",
                Split::Test,
            )
        })
        .collect();
    let authentic = DatasetManifest::from_records(auth_records, "sweep authentic");
    let synthetic = DatasetManifest::from_records(syn_records, "sweep synthetic");
    let backend = load_backend(&dark_synthetic_stub()).unwrap();

    let rows = threshold_sweep(&backend, &authentic, &synthetic, &VotingPolicy::default()).unwrap();
    assert_eq!(rows.len(), 5);
    let auth: Vec<f64> = rows.iter().map(|r| r.authentic_recall_pct.unwrap()).collect();
    let syn: Vec<f64> = rows.iter().map(|r| r.synthetic_recall_pct.unwrap()).collect();

    // Hand-counted from the s values above.
    let expect_auth = [0.0, 100.0 / 3.0, 100.0 / 3.0, 200.0 / 3.0, 100.0];
    let expect_syn = [100.0, 100.0, 100.0, 200.0 / 3.0, 100.0 / 3.0];
    for k in 0..5 {
        assert!((auth[k] - expect_auth[k]).abs() < 1e-9, "auth k={} got {}", k + 1, auth[k]);
        assert!((syn[k] - expect_syn[k]).abs() < 1e-9, "syn k={} got {}", k + 1, syn[k]);
    }
    for k in 1..5 {
        assert!(auth[k] >= auth[k - 1], "authentic recall dipped at k {}", k + 1);
        assert!(syn[k] <= syn[k - 1], "synthetic recall rose at k {}", k + 1);
    }
    // Majority to strict: authentic recall rises, synthetic recall falls.
    assert!(auth[4] > auth[2]);
    assert!(syn[4] < syn[2]);
    pass(5, "k sweep monotone, majority-to-strict direction reproduced");
}

// --- criterion 6 -----------------------------------------------------------

#[test]
fn criterion_06_training_protocol() {
    // Finite-difference gradient check on a random linear-softmax state.
    let mut rng = TestRng::new(0xC6);
    let (classes, dim) = (3usize, 4usize);
    let mut model = LinearSoftmax::zeros(classes, dim);
    for w in &mut model.weights {
        *w = rng.unit() * 2.0 - 1.0;
    }
    for b in &mut model.bias {
        *b = rng.unit() - 0.5;
    }
    let xs: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..dim).map(|_| rng.unit() * 4.0 - 2.0).collect())
        .collect();
    let batch: Vec<(&[f64], usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), i % classes))
        .collect();
    let (_, grad) = loss_and_gradient(&model, &batch).unwrap();
    let eps = 1e-5;
    let numeric = |plus: &LinearSoftmax<f64>, minus: &LinearSoftmax<f64>| {
        let lp = loss_and_gradient(plus, &batch).unwrap().0;
        let lm = loss_and_gradient(minus, &batch).unwrap().0;
        (lp - lm) / (2.0 * eps)
    };
    for i in 0..classes * dim {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.weights[i] += eps;
        minus.weights[i] -= eps;
        let n = numeric(&plus, &minus);
        let a = grad.weights[i];
        let rel = (n - a).abs() / n.abs().max(a.abs()).max(1e-8);
        assert!(rel < 1e-4, "weight {i}: analytic {a} numeric {n} rel {rel}");
    }
    for i in 0..classes {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.bias[i] += eps;
        minus.bias[i] -= eps;
        let n = numeric(&plus, &minus);
        let a = grad.bias[i];
        let rel = (n - a).abs() / n.abs().max(a.abs()).max(1e-8);
        assert!(rel < 1e-4, "bias {i}: analytic {a} numeric {n} rel {rel}");
    }

    // Patience-2 stopping on a scripted monitor: improves twice, then never
    // again, so the stop lands exactly on epoch 4 with best at epoch 2.
    let mut stopper = EarlyStopping::new(2, true);
    assert_eq!(stopper.observe(1, 0.5), StopDecision::Improved);
    assert_eq!(stopper.observe(2, 0.6), StopDecision::Improved);
    assert_eq!(stopper.observe(3, 0.58), StopDecision::NoImprovement);
    assert_eq!(stopper.observe(4, 0.59), StopDecision::Stop);
    assert_eq!(stopper.best_epoch(), 2);

    // Loss monitoring flips the comparison direction.
    let mut stopper = EarlyStopping::new(2, false);
    assert_eq!(stopper.observe(1, 1.0), StopDecision::Improved);
    assert_eq!(stopper.observe(2, 0.9), StopDecision::Improved);
    assert_eq!(stopper.observe(3, 0.95), StopDecision::NoImprovement);
    assert_eq!(stopper.observe(4, 0.92), StopDecision::Stop);
    assert_eq!(stopper.best_epoch(), 2);

    // A linearly separable fixture reaches full training recall within the
    // 20-epoch budget, and retraining is byte-identical.
    let mut train_set = FeatureSet::new(vec!["neg".into(), "pos".into()]);
    let mut val_set = FeatureSet::new(vec!["neg".into(), "pos".into()]);
    for i in 0..40 {
        let j = i as f64 * 0.01;
        train_set.push(FeatureVector { values: vec![-1.0 - j, 0.4 + j] }, 0);
        train_set.push(FeatureVector { values: vec![1.0 + j, -0.4 - j] }, 1);
    }
    for i in 0..10 {
        let j = 0.05 + i as f64 * 0.02;
        val_set.push(FeatureVector { values: vec![-1.0 - j, 0.4 + j] }, 0);
        val_set.push(FeatureVector { values: vec![1.0 + j, -0.4 - j] }, 1);
    }
    let cfg = TrainConfig {
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, report) = train(&train_set, &val_set, &cfg).unwrap();
    assert!(report.epochs.len() <= 20);
    let hits = train_set
        .samples
        .iter()
        .filter(|(fv, y)| model.predict(fv).unwrap().argmax() == *y)
        .count();
    assert_eq!(hits, train_set.samples.len(), "train recall below 100%");

    let (model2, report2) = train(&train_set, &val_set, &cfg).unwrap();
    assert_eq!(model.to_json().unwrap(), model2.to_json().unwrap());
    assert_eq!(report, report2);
    pass(6, "gradient check, scripted stopping, separable convergence, determinism");
}

// --- criterion 7 -----------------------------------------------------------

#[test]
fn criterion_07_end_to_end_protocol_replica() {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let dir = tempfile::tempdir().unwrap();

        // Corpus: one authentic texture family plus five synthetic ones,
        // 120 images each, patch-sized so the center crop is the image.
        let mut records = Vec::new();
        for (fi, &family) in TextureFamily::ALL.iter().enumerate() {
            let class_dir = dir.path().join(family.name());
            fs::create_dir_all(&class_dir).unwrap();
            let label = if family == TextureFamily::Smooth {
                "authentic"
            } else {
                family.name()
            };
            for i in 0..120u64 {
                let img = fixtures::render(family, fi as u64 * 1000 + i, 224, 224);
                let path = write_image(&class_dir, &format!("{i:03}.png"), &img);
                records.push(record(path, label, Split::Unassigned));
            }
        }
        let manifest = DatasetManifest::from_records(records, "protocol replica corpus");
        let outcome = split_manifest(&manifest, (0.6, 0.2, 0.2), 7).unwrap();
        assert!(outcome.warnings.is_empty(), "{:?}", outcome.warnings);
        let manifest = outcome.manifest;
        for label in &manifest.label_space {
            let n = |s: Split| {
                manifest
                    .records
                    .iter()
                    .filter(|r| &r.label == label && r.split == s)
                    .count()
            };
            assert_eq!(
                (n(Split::Train), n(Split::Val), n(Split::Test)),
                (72, 24, 24),
                "split sizes for {label}"
            );
        }

        // Features once per train/val image; the models share the cache.
        let mut cache: HashMap<PathBuf, FeatureVector<f64>> = HashMap::new();
        for r in manifest.records.iter().filter(|r| r.split != Split::Test) {
            let img = decode_image(&fs::read(&r.path).unwrap(), Some(ImageFileFormat::Png)).unwrap();
            let patch = center_crop(&img, PATCH_SIDE, "cache");
            cache.insert(r.path.clone(), extract_features::<f64>(&patch.pixels).unwrap());
        }
        let set_for = |labels: &[&str], split: Split| {
            let mut set = FeatureSet::new(labels.iter().map(|s| s.to_string()).collect());
            for r in manifest.records.iter().filter(|r| r.split == split) {
                if let Some(ix) = labels.iter().position(|&l| l == r.label) {
                    set.push(cache[&r.path].clone(), ix);
                }
            }
            set
        };

        let synthetic_families = &TextureFamily::ALL[1..];

        // One binary detector per synthetic source.
        let mut detectors = Vec::new();
        for (mi, family) in synthetic_families.iter().enumerate() {
            let labels = ["authentic", family.name()];
            let cfg = TrainConfig {
                seed: 40 + mi as u64,
                ..TrainConfig::default()
            };
            let (model, _) = train(
                &set_for(&labels, Split::Train),
                &set_for(&labels, Split::Val),
                &cfg,
            )
            .unwrap();
            detectors.push(model);
        }

        // Grid: detector trained on source X, evaluated on test images of
        // source Y; cells are binary synthetic recall.
        let test_manifests: Vec<DatasetManifest> = synthetic_families
            .iter()
            .map(|f| {
                let recs = manifest
                    .records
                    .iter()
                    .filter(|r| r.split == Split::Test && r.label == f.name())
                    .cloned()
                    .collect();
                DatasetManifest::from_records(recs, format!("test[{}]", f.name()))
            })
            .collect();
        let policy = VotingPolicy::default();
        let matrix = build_cross_matrix(
            synthetic_families.iter().map(|f| format!("det-{}", f.name())).collect(),
            synthetic_families.iter().map(|f| format!("src-{}", f.name())).collect(),
            |r, c| {
                let backend = Backend::Reference(detectors[r].clone());
                let report =
                    evaluate_dataset(&backend, &test_manifests[c], EvalMode::Center, &policy)?;
                report
                    .binary
                    .recall_pct_of("synthetic")
                    .ok_or_else(|| Error::Parameter("cell without synthetic support".into()))
            },
        );
        assert!(matrix.complete, "grid has missing cells");
        for i in 0..5 {
            let diag = matrix.value(i, i).unwrap();
            assert!(
                diag >= 95.0,
                "diagonal {} ({}) below 95: {diag}",
                i,
                synthetic_families[i].name()
            );
        }
        // Averages must be recomputable from the cells, bit for bit.
        for r in 0..5 {
            let (mut sum, mut n) = (0.0, 0usize);
            for c in 0..5 {
                if let Some(v) = matrix.value(r, c) {
                    sum += v;
                    n += 1;
                }
            }
            assert_eq!(matrix.row_averages[r], Some(sum / n as f64), "row {r}");
        }
        for c in 0..5 {
            let (mut sum, mut n) = (0.0, 0usize);
            for r in 0..5 {
                if let Some(v) = matrix.value(r, c) {
                    sum += v;
                    n += 1;
                }
            }
            assert_eq!(matrix.col_averages[c], Some(sum / n as f64), "col {c}");
        }

        // Six-class detector: collapsing its verdict to authentic-vs-rest
        // can only gain recall over exact source attribution.
        let all_labels = ["authentic", "grain", "stripes", "blocks", "softnoise", "checker"];
        let cfg = TrainConfig {
            seed: 60,
            ..TrainConfig::default()
        };
        let (six, _) = train(
            &set_for(&all_labels, Split::Train),
            &set_for(&all_labels, Split::Val),
            &cfg,
        )
        .unwrap();
        let test_all = manifest.subset(Split::Test);
        let report = evaluate_dataset(
            &Backend::Reference(six),
            &test_all,
            EvalMode::Center,
            &policy,
        )
        .unwrap();
        assert!(report.strict.is_some(), "strict summary missing");
        for family in synthetic_families {
            let name = family.name();
            let strict_hits = report
                .outcomes
                .iter()
                .filter(|o| o.truth == name && o.strict_prediction.as_deref() == Some(name))
                .count();
            let binary_hits = report
                .outcomes
                .iter()
                .filter(|o| o.truth == name && o.verdict == Verdict::Synthetic)
                .count();
            assert!(
                binary_hits >= strict_hits,
                "{name}: binary {binary_hits} < strict {strict_hits}"
            );
        }
    });
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "protocol replica took {elapsed:.0}s");
    pass(7, "protocol replica: 95%+ diagonal, exact averages, binary >= strict");
}

// --- criterion 8 -----------------------------------------------------------

#[test]
fn criterion_08_alteration_suite() {
    let img = fixtures::natural(1, 96, 64);

    // Identity parameters must reproduce the input byte for byte.
    assert_eq!(gamma_map(&img, 1.0), img);
    assert_eq!(brightness_contrast(&img, 0.0, 0.0), img);
    assert_eq!(horizontal_flip(&horizontal_flip(&img)), img);

    // Blur of a constant raster is the same raster.
    let mut flat = RgbBuffer::new(32, 32);
    for y in 0..32 {
        for x in 0..32 {
            flat.set_pixel(x, y, [90, 120, 200]);
        }
    }
    assert_eq!(gaussian_blur(&flat, 1.3), flat);

    // Top-quality recompression stays close to the source.
    let photo = fixtures::natural(3, 224, 160);
    let round = jpeg_compress(&photo, 100).unwrap();
    let mut se = 0.0f64;
    for y in 0..160 {
        for x in 0..224 {
            let (a, b) = (photo.pixel(x, y), round.pixel(x, y));
            for c in 0..3 {
                let d = a[c] as f64 - b[c] as f64;
                se += d * d;
            }
        }
    }
    let mse = se / (224.0 * 160.0 * 3.0);
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    };
    assert!(psnr > 40.0, "q100 psnr {psnr:.1} dB");

    // Augmentation is a pure function of (seed, image index).
    let policy = susy_policy(11);
    let subject = fixtures::natural(4, 96, 96);
    let (out_a, plan_a) = augment(&subject, &policy, 5).unwrap();
    let (out_b, plan_b) = augment(&subject, &policy, 5).unwrap();
    assert_eq!(out_a, out_b);
    assert_eq!(plan_a, plan_b);

    // Recipe shape: coin-flip mirror first, photometric steps at 0.2.
    assert_eq!(policy.steps[0].probability, 0.5);
    assert_eq!(policy.steps.len(), 6);
    for step in &policy.steps[1..] {
        assert_eq!(step.probability, 0.2);
    }
    // And the sampler honors those probabilities.
    let variant = |a: &AppliedAlteration| match a {
        AppliedAlteration::HorizontalFlip => 0usize,
        AppliedAlteration::JpegCompress { .. } => 1,
        AppliedAlteration::GaussianBlur { .. } => 2,
        AppliedAlteration::AdvancedBlur { .. } => 3,
        AppliedAlteration::BrightnessContrast { .. } => 4,
        AppliedAlteration::Gamma { .. } => 5,
    };
    let trials = 5000u64;
    let mut hits = [0u64; 6];
    for index in 0..trials {
        for applied in sample_plan(&policy, index).unwrap() {
            hits[variant(&applied)] += 1;
        }
    }
    let flip_rate = hits[0] as f64 / trials as f64;
    assert!((flip_rate - 0.5).abs() < 0.04, "flip rate {flip_rate:.3}");
    for (i, &h) in hits.iter().enumerate().skip(1) {
        let rate = h as f64 / trials as f64;
        assert!((rate - 0.2).abs() < 0.04, "step {i} rate {rate:.3}");
    }
    pass(8, "identities byte-exact, q100 psnr, seeded augmentation");
}

// --- criterion 9 -----------------------------------------------------------

fn synthetic_records(label: &str, count: usize, split: Split) -> Vec<ManifestRecord> {
    (0..count)
        .map(|i| record(PathBuf::from(format!("mem/{label}/{i:05}.png")), label, split))
        .collect()
}

#[test]
fn criterion_09_split_and_undersample_arithmetic() {
    // 100 records at 60/20/20 split exactly.
    let manifest = DatasetManifest::from_records(
        synthetic_records("authentic", 100, Split::Unassigned),
        "split fixture",
    );
    let out = split_manifest(&manifest, (0.6, 0.2, 0.2), 11).unwrap().manifest;
    let n = |m: &DatasetManifest, s: Split| m.records.iter().filter(|r| r.split == s).count();
    assert_eq!(
        (n(&out, Split::Train), n(&out, Split::Val), n(&out, Split::Test)),
        (60, 20, 20)
    );

    // Preexisting assignments survive; only the rest is partitioned.
    let mut records = synthetic_records("authentic", 10, Split::Train);
    records.extend(synthetic_records("fresh", 0, Split::Unassigned));
    let pinned: Vec<PathBuf> = records.iter().map(|r| r.path.clone()).collect();
    records.extend({
        let mut extra = synthetic_records("authentic", 90, Split::Unassigned);
        for (i, r) in extra.iter_mut().enumerate() {
            r.path = PathBuf::from(format!("mem/extra/{i:05}.png"));
        }
        extra
    });
    let manifest = DatasetManifest::from_records(records, "partial split fixture");
    let out = split_manifest(&manifest, (0.6, 0.2, 0.2), 11).unwrap().manifest;
    for r in out.records.iter().filter(|r| pinned.contains(&r.path)) {
        assert_eq!(r.split, Split::Train, "{:?} reassigned", r.path);
    }
    assert_eq!(
        (n(&out, Split::Train), n(&out, Split::Val), n(&out, Split::Test)),
        (64, 18, 18)
    );

    // Splitting an already fully assigned manifest changes nothing.
    let again = split_manifest(&out, (0.6, 0.2, 0.2), 999).unwrap().manifest;
    assert_eq!(again, out);

    // Undersampling 6000 to a 5435 cap removes exactly 565 records and
    // leaves other classes alone.
    let mut records = synthetic_records("synthetic", 6000, Split::Unassigned);
    records.extend({
        let mut auth = synthetic_records("authentic", 500, Split::Unassigned);
        for (i, r) in auth.iter_mut().enumerate() {
            r.path = PathBuf::from(format!("mem/auth/{i:05}.png"));
        }
        auth
    });
    let manifest = DatasetManifest::from_records(records, "undersample fixture");
    let capped = undersample(&manifest, "synthetic", 5435, 13).unwrap();
    let count = |m: &DatasetManifest, label: &str| {
        m.records.iter().filter(|r| r.label == label).count()
    };
    assert_eq!(count(&capped, "synthetic"), 5435);
    assert_eq!(count(&capped, "authentic"), 500);

    // Idempotent, seed-deterministic, seed-sensitive.
    assert_eq!(undersample(&capped, "synthetic", 5435, 13).unwrap(), capped);
    assert_eq!(undersample(&manifest, "synthetic", 5435, 13).unwrap(), capped);
    let other = undersample(&manifest, "synthetic", 5435, 14).unwrap();
    assert_eq!(count(&other, "synthetic"), 5435);
    assert_ne!(other, capped, "different seeds picked identical samples");

    // Stratified caps follow split proportions with largest remainders.
    let split_first = split_manifest(&manifest, (0.6, 0.2, 0.2), 11).unwrap().manifest;
    let capped = undersample(&split_first, "synthetic", 5435, 13).unwrap();
    let per = |s: Split| {
        capped
            .records
            .iter()
            .filter(|r| r.label == "synthetic" && r.split == s)
            .count()
    };
    assert_eq!(
        (per(Split::Train), per(Split::Val), per(Split::Test)),
        (3261, 1087, 1087)
    );
    pass(9, "60/20/20 exact, splits preserved, 6000 to 5435 exact");
}

// --- criterion 10 ----------------------------------------------------------

#[test]
fn criterion_10_resize_vs_crop_deltas() {
    // Synthetic images are bright only in the left quarter: the center
    // patch is all dark, the resized whole image averages bright columns
    // in. With a bright-means-synthetic stub the recall moves 0 -> 100.
    let dir = tempfile::tempdir().unwrap();
    let mut bright_left = RgbBuffer::new(448, 16);
    for y in 0..16 {
        for x in 0..448 {
            let v = if x < 112 { 255 } else { 0 };
            bright_left.set_pixel(x, y, [v, v, v]);
        }
    }
    let mut dark = RgbBuffer::new(448, 16);
    for y in 0..16 {
        for x in 0..448 {
            dark.set_pixel(x, y, [0, 0, 0]);
        }
    }
    let records = vec![
        record(write_image(dir.path(), "s0.png", &bright_left), "synthetic", Split::Test),
        record(write_image(dir.path(), "s1.png", &bright_left), "synthetic", Split::Test),
        record(write_image(dir.path(), "a0.png", &dark), "authentic", Split::Test),
        record(write_image(dir.path(), "a1.png", &dark), "authentic", Split::Test),
    ];
    let manifest = DatasetManifest::from_records(records, "resize fixture");
    let backend = load_backend(&BackendDescriptor::Stub {
        label_space: vec!["authentic".into(), "synthetic".into()],
        rule: StubRule::LumaThreshold {
            threshold: 50.0,
            below: vec![0.95, 0.05],
            at_or_above: vec![0.05, 0.95],
        },
    })
    .unwrap();
    let policy = VotingPolicy::default();
    let center = evaluate_dataset(&backend, &manifest, EvalMode::Center, &policy).unwrap();
    let resized = evaluate_dataset(&backend, &manifest, EvalMode::Resized, &policy).unwrap();
    let delta = resize_vs_crop_report(&center, &resized).unwrap();

    let of = |label: &str| delta.per_class.iter().find(|c| c.label == label).unwrap();
    // Hand count: synthetic center 0/2, resized 2/2 -> +100. Authentic is
    // identical in both modes -> 0.
    assert_eq!(of("synthetic").center_pct, Some(0.0));
    assert_eq!(of("synthetic").resized_pct, Some(100.0));
    assert_eq!(of("synthetic").delta_pct, Some(100.0));
    assert_eq!(of("authentic").delta_pct, Some(0.0));
    assert_eq!(delta.macro_delta_pct, Some(50.0));

    // All-constant imagery: the two modes agree everywhere, deltas vanish.
    let records = vec![
        record(write_image(dir.path(), "c0.png", &dark), "authentic", Split::Test),
        record(write_image(dir.path(), "c1.png", &dark), "synthetic", Split::Test),
    ];
    let manifest = DatasetManifest::from_records(records, "constant fixture");
    let center = evaluate_dataset(&backend, &manifest, EvalMode::Center, &policy).unwrap();
    let resized = evaluate_dataset(&backend, &manifest, EvalMode::Resized, &policy).unwrap();
    let delta = resize_vs_crop_report(&center, &resized).unwrap();
    for class in &delta.per_class {
        assert_eq!(class.delta_pct, Some(0.0), "{}", class.label);
    }
    assert_eq!(delta.macro_delta_pct, Some(0.0));
    pass(10, "resize-vs-crop deltas match hand counts, zero when identical");
}

// --- criterion 11 ----------------------------------------------------------

fn run_sid(dir: &Path, workers: &str, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_sid"))
        .args(args)
        .current_dir(dir)
        .env("SID_WORKERS", workers)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sid {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

#[test]
fn criterion_11_cli_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir_all(root.join("out")).unwrap();

    // Twelve band images, half authentic, half synthetic, two manifests
    // plus two mixed halves for the grid.
    let auth_values: [[u8; 6]; 3] =
        [[200; 6], [0, 0, 200, 200, 200, 200], [0, 0, 0, 200, 200, 200]];
    let syn_values: [[u8; 6]; 3] =
        [[0; 6], [0, 0, 0, 0, 0, 200], [0, 0, 0, 0, 200, 200]];
    let mut auth = Vec::new();
    let mut syn = Vec::new();
    for rep in 0..2 {
        for (i, &v) in auth_values.iter().enumerate() {
            let path = write_image(root, &format!("a{rep}{i}.png"), &band_image(v));
            auth.push(record(path, "authentic", Split::Test));
        }
        for (i, &v) in syn_values.iter().enumerate() {
            let path = write_image(root, &format!("s{rep}{i}.png"), &band_image(v));
            syn.push(record(path, "synthetic", Split::Test));
        }
    }
    let mut all = auth.clone();
    all.extend(syn.iter().cloned());
    let mixed_a: Vec<ManifestRecord> = auth[..3].iter().chain(&syn[..3]).cloned().collect();
    let mixed_b: Vec<ManifestRecord> = auth[3..].iter().chain(&syn[3..]).cloned().collect();
    DatasetManifest::from_records(auth, "bands authentic").save(&root.join("auth.json")).unwrap();
    DatasetManifest::from_records(syn, "bands synthetic").save(&root.join("syn.json")).unwrap();
    DatasetManifest::from_records(all, "bands all").save(&root.join("all.json")).unwrap();
    DatasetManifest::from_records(mixed_a, "bands mixed a").save(&root.join("mix_a.json")).unwrap();
    DatasetManifest::from_records(mixed_b, "bands mixed b").save(&root.join("mix_b.json")).unwrap();

    let stub = serde_json::to_value(dark_synthetic_stub()).unwrap();
    let fixed = serde_json::to_value(BackendDescriptor::Stub {
        label_space: vec!["authentic".into(), "synthetic".into()],
        rule: StubRule::Fixed {
            probabilities: vec![0.25, 0.75],
        },
    })
    .unwrap();

    let write_cfg = |name: &str, value: serde_json::Value| {
        fs::write(root.join(name), serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    };
    write_cfg(
        "eval.json",
        serde_json::json!({
            "schema_version": 1,
            "seed": 3,
            "backend": stub,
            "manifest": root.join("all.json"),
            "mode": "voted",
            "output": root.join("out/eval.json"),
        }),
    );
    write_cfg(
        "cross.json",
        serde_json::json!({
            "schema_version": 1,
            "seed": 3,
            "models": [
                {"id": "dark-synth", "backend": stub},
                {"id": "fixed", "backend": fixed},
            ],
            "datasets": [
                {"id": "mix-a", "manifest": root.join("mix_a.json")},
                {"id": "mix-b", "manifest": root.join("mix_b.json")},
            ],
            "mode": "center",
            "cell_metric": "synthetic_recall",
            "output": root.join("out/cross.json"),
            "csv_output": root.join("out/cross.csv"),
        }),
    );
    write_cfg(
        "sweep.json",
        serde_json::json!({
            "schema_version": 1,
            "seed": 3,
            "backend": stub,
            "authentic_manifest": root.join("auth.json"),
            "synthetic_manifest": root.join("syn.json"),
            "output": root.join("out/sweep.json"),
            "csv_output": root.join("out/sweep.csv"),
        }),
    );

    // Each command runs three times: twice at one worker (pure rerun) and
    // once at eight. Artifact bytes and printed CSVs must never move.
    let cases: [(&str, &[&str]); 3] = [
        ("eval", &["out/eval.json"]),
        ("cross", &["out/cross.json", "out/cross.csv"]),
        ("sweep", &["out/sweep.json", "out/sweep.csv"]),
    ];
    for (cmd, artifacts) in cases {
        let cfg = format!("{cmd}.json");
        let mut baseline: Option<(Vec<u8>, Vec<Vec<u8>>)> = None;
        for workers in ["1", "1", "8"] {
            for rel in artifacts {
                let _ = fs::remove_file(root.join(rel));
            }
            let stdout = run_sid(root, workers, &[cmd, "--config", &cfg]);
            let files: Vec<Vec<u8>> = artifacts
                .iter()
                .map(|rel| fs::read(root.join(rel)).unwrap())
                .collect();
            match &baseline {
                None => baseline = Some((stdout, files)),
                Some((s0, f0)) => {
                    assert_eq!(&stdout, s0, "{cmd}: stdout drifted at workers={workers}");
                    assert_eq!(&files, f0, "{cmd}: artifacts drifted at workers={workers}");
                }
            }
        }
    }
    pass(11, "eval, cross, sweep byte-identical across reruns and worker counts");
}
