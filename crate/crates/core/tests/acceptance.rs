//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails or exceeds its time budget.

mod support;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use apc_detect::anchors::{self, AnchorConfig};
use apc_detect::cli;
use apc_detect::clustering::{self, ApcParams};
use apc_detect::eval::{average_precision, label_detections, EvalConfig, GtBox, ScoredBox};
use apc_detect::features::{appearance_similarity, hog, HogConfig, ImageRaster};
use apc_detect::geometry::{corner_iou, iou, BBox, CornerBox, Offsets};
use apc_detect::io::{small_object_fixture, synth, SynthSpec};
use apc_detect::losses::{smooth_l1, smooth_l1_grad, total_loss, LossOptions, PredictionMatrix};
use apc_detect::matching::{match_boxes, Assignment, GroundTruthObject, MatchResult, BACKGROUND};
use apc_detect::suppression::{apc_suppress, nms, nms_all, ApcSuppressionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use support::{
    brute_force_optimum, pixel_iou, points_similarity, random_detection_set, reference_nms,
    two_groups, within_five_percent,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run_cli(args: &[&str]) -> Result<Value, String> {
    let mut out = Vec::new();
    let mut full = vec!["apc-detect"];
    full.extend_from_slice(args);
    let code = cli::run(full, &mut out);
    check(code == 0, format!("{args:?} exited {code}"))?;
    serde_json::from_slice(&out).map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn anchor_arithmetic() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("ssd300.json");
    fs::write(
        &cfg,
        r#"{"anchors": {"feature_maps": [38, 19, 10, 5, 3, 1], "s_min": 0.2, "s_max": 0.9}}"#,
    )
    .map_err(|e| e.to_string())?;
    let report = run_cli(&[
        "gen-anchors",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("a.jsonl")),
    ])?;
    let count = report["count"].as_u64().unwrap_or(0);
    check(count == 11640, format!("count {count}"))?;
    let want = [0.20, 0.34, 0.48, 0.62, 0.76, 0.90];
    let scales: Vec<f64> = report["scales"]
        .as_array()
        .ok_or("no scales")?
        .iter()
        .filter_map(Value::as_f64)
        .collect();
    check(scales.len() == 6, "six scales")?;
    for (s, w) in scales.iter().zip(want) {
        check((s - w).abs() <= 1e-12, format!("scale {s} vs {w}"))?;
    }
    let set = anchors::generate(&AnchorConfig::ssd300()).map_err(|e| e.to_string())?;
    check(set.len() == 11640, "library count")?;
    Ok(format!("{count} boxes, scales {scales:.2?}"))
}

fn geometry_oracle() -> Outcome {
    let a = CornerBox::new(0.0, 0.0, 2.0, 2.0);
    let b = CornerBox::new(1.0, 1.0, 3.0, 3.0);
    let v = corner_iou(&a, &b);
    check((v - 1.0 / 7.0).abs() <= 1e-12, format!("iou {v}"))?;

    const RES: usize = 600;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // Corners on the pixel grid, where centre counting is exact.
        let mut corner = || {
            let (x0, y0) = (rng.random_range(0..RES - 10), rng.random_range(0..RES - 10));
            let (x1, y1) = (
                rng.random_range(x0 + 1..=RES),
                rng.random_range(y0 + 1..=RES),
            );
            let f = |v: usize| v as f64 / RES as f64;
            BBox::from_corners(CornerBox::new(f(x0), f(y0), f(x1), f(y1)))
        };
        let (a, b) = (corner(), corner());
        worst = worst.max((iou(&a, &b) - pixel_iou(&a, &b, RES)).abs());
    }
    check(worst <= 1e-3, format!("max deviation {worst}"))?;
    Ok(format!(
        "1/7 exact, max pixel-oracle deviation {worst:.2e} over 100 pairs"
    ))
}

fn nms_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let q = rng.random_range(1..=50);
        let l = rng.random_range(2..=4);
        let set = random_detection_set(&mut rng, q, l, case % 2 == 0);
        for class in 2..=l {
            let mut got: Vec<usize> = nms(&set, class, 0.5, 0.01).iter().map(|d| d.row).collect();
            let mut want = reference_nms(&set, class, 0.5, 0.01);
            got.sort_unstable();
            want.sort_unstable();
            check(
                got == want,
                format!("case {case} class {class}: {got:?} vs {want:?}"),
            )?;
        }
    }
    Ok("500 sets identical to the reference".into())
}

fn apc_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut good = 0;
    for _ in 0..200 {
        let q = rng.random_range(2..=8);
        let pts: Vec<(f64, f64)> = (0..q).map(|_| (rng.random(), rng.random())).collect();
        let s = points_similarity(&pts, None);
        let out = clustering::run(&s, &ApcParams::default()).map_err(|e| e.to_string())?;
        let (opt, _) = brute_force_optimum(&s);
        if within_five_percent(s.net_similarity(&out.assignments), opt) {
            good += 1;
        }
    }
    check(good >= 180, format!("{good}/200 within 95%"))?;
    for seed in 0..20 {
        let (pts, groups) = two_groups(seed, (3 + seed as usize % 3, 2 + seed as usize % 4));
        let s = points_similarity(&pts, None);
        let out = clustering::run(&s, &ApcParams::default()).map_err(|e| e.to_string())?;
        check(
            out.exemplars.len() == 2,
            format!("two-group seed {seed}: {:?}", out.exemplars),
        )?;
        for (i, g) in groups.iter().enumerate() {
            check(
                groups[out.assignments[i]] == *g,
                format!("two-group seed {seed}: membership"),
            )?;
        }
    }
    Ok(format!(
        "{good}/200 instances within 95% of optimum; two-group fixture 20/20"
    ))
}

fn loss_correctness() -> Outcome {
    // Perfect predictions on SSD-300 defaults.
    let defaults = anchors::generate(&AnchorConfig::ssd300())
        .map_err(|e| e.to_string())?
        .boxes;
    let gts = [
        GroundTruthObject {
            label: 2,
            bbox: BBox::new(0.3, 0.4, 0.25, 0.3),
        },
        GroundTruthObject {
            label: 3,
            bbox: BBox::new(0.7, 0.6, 0.4, 0.5),
        },
    ];
    let m = match_boxes(&defaults, &gts, 0.5, 3).map_err(|e| e.to_string())?;
    let class_probs = m
        .labels()
        .into_iter()
        .map(|l| {
            let mut row = vec![0.0; 3];
            row[l.unwrap_or(BACKGROUND) - 1] = 1.0;
            row
        })
        .collect();
    let perfect = PredictionMatrix {
        class_probs,
        offsets: m.targets.clone(),
    };
    let t = total_loss(&perfect, &m, &LossOptions::default()).map_err(|e| e.to_string())?;
    check(
        t.total.abs() <= 1e-9 && t.num_positive > 0,
        format!("perfect total {}", t.total),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 100 {
        let x: f64 = rng.random_range(-3.0..3.0);
        if (x.abs() - 1.0).abs() < 1e-3 {
            continue;
        }
        let fd = (smooth_l1(x + h) - smooth_l1(x - h)) / (2.0 * h);
        worst = worst.max((fd - smooth_l1_grad(x)).abs());
        n += 1;
    }
    check(worst <= 1e-6, format!("gradient deviation {worst}"))?;

    let e = std::f64::consts::E;
    let pred = PredictionMatrix {
        class_probs: vec![vec![1.0 - 1.0 / e, 1.0 / e]],
        offsets: vec![Offsets([0.5, 0.0, 0.0, 0.0])],
    };
    let matched = MatchResult {
        num_classes: 2,
        assignments: vec![Some(Assignment {
            gt_index: 0,
            label: 2,
            overlap: 1.0,
        })],
        targets: vec![Offsets([0.0; 4])],
        pos: vec![0],
        neg: vec![],
    };
    let c = total_loss(&pred, &matched, &LossOptions::default()).map_err(|e| e.to_string())?;
    check(
        (c.total - 1.125).abs() <= 1e-12,
        format!("composed total {}", c.total),
    )?;
    Ok(format!(
        "perfect total {:.1e}, max FD gradient deviation {worst:.1e}, composed total {}",
        t.total, c.total
    ))
}

fn ap_fixture() -> Outcome {
    let a = BBox::new(0.2, 0.2, 0.2, 0.2);
    let b = BBox::new(0.7, 0.7, 0.2, 0.2);
    let miss = BBox::new(0.2, 0.8, 0.1, 0.1);
    let s = |c, bbox, row| ScoredBox {
        image_id: "x".into(),
        confidence: c,
        bbox,
        row,
    };
    let g = |bbox| GtBox {
        image_id: "x".into(),
        bbox,
    };
    let r = average_precision(
        &[s(0.9, a, 0), s(0.8, miss, 1), s(0.7, b, 2)],
        &[g(a), g(b)],
        &EvalConfig::default(),
    );
    let ap = r.ap.ok_or("undefined AP")?;
    check((ap - 5.0 / 6.0).abs() <= 1e-12, format!("AP {ap}"))?;
    let dup = label_detections(&[s(0.9, a, 0), s(0.8, a, 1)], &[g(a)], 0.5);
    check(
        dup == vec![true, false],
        format!("duplicate labels {dup:?}"),
    )?;
    Ok(format!("AP {ap:.12} (5/6), duplicate counted as FP"))
}

struct PipelineRun {
    nms_map: f64,
    apc_map: f64,
    bytes: Vec<Vec<u8>>,
}

fn pipeline(dir: &Path, seed: &str, jobs: &str) -> Result<PipelineRun, String> {
    let d = |name: &str| dir.join(name);
    run_cli(&[
        "synth",
        "--seed",
        seed,
        "--scenes",
        "50",
        "--out-dir",
        p(dir),
    ])?;
    let mut maps = Vec::new();
    let mut bytes = Vec::new();
    for m in ["nms", "apc"] {
        let dets = d(&format!("{m}.jsonl"));
        let report = d(&format!("{m}.json"));
        run_cli(&[
            "--jobs",
            jobs,
            "suppress",
            "--method",
            m,
            "--dump",
            p(&d("dump.jsonl")),
            "--images-dir",
            p(&d("images")),
            "--out",
            p(&dets),
        ])?;
        let r = run_cli(&[
            "evaluate",
            "--detections",
            p(&dets),
            "--annotations",
            p(&d("annotations.jsonl")),
            "--out",
            p(&report),
        ])?;
        maps.push(r["map"].as_f64().ok_or("map undefined")?);
        bytes.push(fs::read(&dets).map_err(|e| e.to_string())?);
        bytes.push(fs::read(&report).map_err(|e| e.to_string())?);
    }
    let cmp = run_cli(&[
        "compare",
        "--a",
        p(&d("nms.json")),
        "--b",
        p(&d("apc.json")),
    ])?;
    bytes.push(cmp.to_string().into_bytes());
    bytes.push(fs::read(d("dump.jsonl")).map_err(|e| e.to_string())?);
    Ok(PipelineRun {
        nms_map: maps[0],
        apc_map: maps[1],
        bytes,
    })
}

fn synthetic_small_objects() -> Outcome {
    let (_, scene) = small_object_fixture();
    let cfg = ApcSuppressionConfig::default();
    let n = nms_all(&scene.detections, &cfg.suppression).len();
    let a = apc_suppress(&scene.detections, Some(&scene.image), &cfg)
        .map_err(|e| e.to_string())?
        .len();
    check(n == 1 && a == 2, format!("fixture: nms {n}, apc {a}"))?;

    let spec = SynthSpec {
        seed: 2020,
        ..SynthSpec::default()
    };
    for i in 0..50 {
        let s = synth(&spec, i).map_err(|e| e.to_string())?;
        let o = &s.annotations.objects;
        let v = iou(&o[0].bbox, &o[1].bbox);
        check(v > 0.5 && v < 0.8, format!("scene {i}: pair iou {v}"))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let r = pipeline(dir.path(), "2020", "4")?;
    let gain = (r.apc_map - r.nms_map) * 100.0;
    check(
        gain >= 2.0,
        format!("mAP nms {:.4}, apc {:.4}", r.nms_map, r.apc_map),
    )?;
    Ok(format!(
        "fixture nms 1 / apc 2; 50 scenes mAP nms {:.2}% -> apc {:.2}% (+{gain:.2} pts)",
        r.nms_map * 100.0,
        r.apc_map * 100.0
    ))
}

fn determinism() -> Outcome {
    let jobs = std::thread::available_parallelism()
        .map_or(4, |n| n.get().max(2))
        .to_string();
    let dirs: Vec<_> = (0..3)
        .map(|_| tempfile::tempdir())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let a = pipeline(dirs[0].path(), "77", "1")?;
    let b = pipeline(dirs[1].path(), "77", "1")?;
    let c = pipeline(dirs[2].path(), "77", &jobs)?;
    check(a.bytes == b.bytes, "two runs differ")?;
    check(
        a.bytes == c.bytes,
        format!("--jobs 1 vs --jobs {jobs} differ"),
    )?;
    Ok(format!(
        "{} artifacts byte-identical across runs and --jobs 1/{jobs}",
        a.bytes.len()
    ))
}

fn hog_sanity() -> Outcome {
    let cfg = HogConfig::default();
    let flat = ImageRaster::filled(64, 64, 1, 0.37);
    let d = hog(&flat, &cfg).map_err(|e| e.to_string())?;
    check(d.len() == 1764, format!("length {}", d.len()))?;
    check(
        d.values.iter().all(|v| *v == 0.0),
        "constant patch gives non-zero descriptor",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut patch = || {
        let data = (0..64 * 64).map(|_| rng.random::<f64>()).collect();
        ImageRaster::new(64, 64, 1, data).map_err(|e| e.to_string())
    };
    for k in 0..100 {
        let (a, b) = (
            hog(&patch()?, &cfg).map_err(|e| e.to_string())?,
            hog(&patch()?, &cfg).map_err(|e| e.to_string())?,
        );
        let ab = appearance_similarity(&a, &b).map_err(|e| e.to_string())?;
        let ba = appearance_similarity(&b, &a).map_err(|e| e.to_string())?;
        check(ab == ba, format!("pair {k}: asymmetric"))?;
        check(ab <= 0.0, format!("pair {k}: positive similarity {ab}"))?;
        check(
            appearance_similarity(&a, &a).map_err(|e| e.to_string())? == 0.0,
            "self similarity",
        )?;
    }
    Ok("zero descriptor for constant patch, length 1764, 100 pairs symmetric and <= 0".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1 anchor arithmetic",
            anchor_arithmetic,
            Duration::from_secs(1),
        ),
        (
            "2 geometry oracle",
            geometry_oracle,
            Duration::from_secs(10),
        ),
        (
            "3 nms brute-force equivalence",
            nms_equivalence,
            Duration::from_secs(30),
        ),
        ("4 apc oracle quality", apc_quality, Duration::from_secs(60)),
        (
            "5 loss correctness",
            loss_correctness,
            Duration::from_secs(5),
        ),
        ("6 ap hand fixture", ap_fixture, Duration::from_secs(1)),
        (
            "7 synthetic small-object benefit",
            synthetic_small_objects,
            Duration::from_secs(300),
        ),
        ("8 determinism", determinism, Duration::from_secs(300)),
        ("9 hog sanity", hog_sanity, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > budget => {
                Err(format!("{detail}; took {took:.2?}, budget {budget:?}"))
            }
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} ({took:.2?}): {why}");
            }
        }
    }
    println!("{} of 9 acceptance criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
