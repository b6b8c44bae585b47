//! Command-line front end. Every command prints exactly one JSON report on
//! standard output (or a table with `--pretty`) and logs to standard error.
//!
//! Exit codes: 0 success, 1 invalid or missing input, 2 failure while
//! writing output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::anchors::{self, AnchorConfig};
use crate::clustering::{self, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::features::ImageRaster;
use crate::io::{self, Config, ImageDetections, ImagePredictions, SynthSpec, Vocabulary};
use crate::losses::{self, LossOptions, PredictionMatrix};
use crate::matching::{self, BACKGROUND};
use crate::suppression::{self, DetectionSet};

#[derive(Debug, Parser)]
#[command(
    name = "apc-detect",
    version,
    about = "Detection post-processing toolkit"
)]
pub struct Cli {
    /// Worker threads for per-image work (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print a human-readable table instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the default-box set from the `anchors` config section.
    GenAnchors {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce raw detection rows to final detections.
    Suppress(SuppressArgs),
    /// Score final detections against annotations.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one precision/recall CSV per class into this directory.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Compare two evaluation reports (b relative to a).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Match annotations to default boxes and emit the target matrices.
    Match {
        #[arg(long)]
        annotations: PathBuf,
        /// Config whose `anchors` section defines the default boxes
        /// (SSD-300 layout when absent).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Write targets as a predictions file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the training loss of predictions against annotations.
    Loss {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Hard-negative cap as negatives per positive.
        #[arg(long)]
        neg_pos_ratio: Option<f64>,
    },
    /// Run affinity propagation on a CSV similarity matrix.
    Cluster {
        #[arg(long)]
        similarity: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a seeded synthetic corpus (images, annotations, dump).
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Nms,
    Apc,
}

#[derive(Debug, Args)]
pub struct SuppressArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub dump: PathBuf,
    /// Directory holding `<image_id>.ppm` or `<image_id>.png`.
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Ppm,
    Png,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, required_unless_present = "fixture")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    pub scenes: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON scene specification; defaults otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Emit the single large/small object fixture instead of a corpus.
    #[arg(long)]
    pub fixture: bool,
    #[arg(long, value_enum, default_value_t = ImageFormat::Ppm)]
    pub format: ImageFormat,
}

/// Command result: the JSON report and its table rendering.
struct Outcome {
    report: Value,
    table: String,
}

fn outcome(report: impl Serialize, table: String) -> Result<Outcome> {
    Ok(Outcome {
        report: serde_json::to_value(report)?,
        table,
    })
}

/// Parses `args`, runs the command and writes the report to `stdout`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(out) => {
            let text = if cli.pretty {
                out.table
            } else {
                out.report.to_string() + "\n"
            };
            match stdout.write_all(text.as_bytes()) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: cannot write report: {e}");
                    2
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenAnchors { config, out } => gen_anchors(config, out.as_deref()),
        Command::Suppress(args) => suppress(args),
        Command::Evaluate {
            detections,
            annotations,
            config,
            out,
            curves,
        } => evaluate(
            detections,
            annotations,
            config.as_deref(),
            out.as_deref(),
            curves.as_deref(),
        ),
        Command::Compare { a, b } => compare(a, b),
        Command::Match {
            annotations,
            config,
            threshold,
            out,
        } => match_cmd(annotations, config.as_deref(), *threshold, out.as_deref()),
        Command::Loss {
            predictions,
            annotations,
            config,
            threshold,
            alpha,
            neg_pos_ratio,
        } => loss(
            predictions,
            annotations,
            config.as_deref(),
            *threshold,
            LossOptions {
                alpha: *alpha,
                background: BACKGROUND,
                neg_pos_ratio: *neg_pos_ratio,
            },
        ),
        Command::Cluster { similarity, config } => cluster(similarity, config.as_deref()),
        Command::Synth(args) => synth(args),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::write(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::write(path, e))
}

fn gen_anchors(config: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = Config::load(config)?;
    let anchors: AnchorConfig = cfg
        .anchors
        .ok_or_else(|| Error::Config(format!("{}: missing `anchors` section", config.display())))?;
    let set = anchors::generate(&anchors)?;
    if let Some(out) = out {
        let mut text = String::new();
        for (k, range) in set.per_map_ranges.iter().enumerate() {
            for b in &set.boxes[range.clone()] {
                text += &serde_json::to_string(&json!({"map": k + 1, "box": b}))?;
                text.push('\n');
            }
        }
        write_file(out, text.as_bytes())?;
    }
    let scales: Vec<f64> = (1..=anchors.num_maps())
        .map(|k| anchors.scale(k).0)
        .collect();
    let table = format!(
        "{} default boxes over {} feature maps\nscales: {}\n",
        set.len(),
        anchors.num_maps(),
        scales
            .iter()
            .map(|s| format!("{s:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    outcome(
        json!({"command": "gen-anchors", "count": set.len(), "scales": scales}),
        table,
    )
}

/// Finds `<image_id>.ppm` or `<image_id>.png` in `dir`.
fn image_for(dir: Option<&Path>, image_id: &str) -> Result<ImageRaster> {
    let dir = dir.ok_or_else(|| Error::MissingImage(image_id.to_string()))?;
    for ext in ["ppm", "png"] {
        let p = dir.join(format!("{image_id}.{ext}"));
        if p.is_file() {
            return io::load_image(&p);
        }
    }
    Err(Error::MissingImage(image_id.to_string()))
}

fn suppress(args: &SuppressArgs) -> Result<Outcome> {
    let cfg = Config::load_or_default(args.config.as_deref())?;
    let (vocab, mut sets) = io::load_dump(&args.dump)?;
    sets.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let apc_cfg = cfg.apc_suppression();
    let needs_pixels = args.method == Method::Apc && apc_cfg.needs_pixels();
    log::info!("suppressing {} images with {:?}", sets.len(), args.method);

    let run_one = |set: &DetectionSet| -> Result<ImageDetections> {
        let detections = match args.method {
            Method::Nms => suppression::nms_all(set, &cfg.suppression),
            Method::Apc => {
                let image = if needs_pixels {
                    Some(image_for(args.images_dir.as_deref(), &set.image_id)?)
                } else {
                    None
                };
                suppression::apc_suppress(set, image.as_ref(), &apc_cfg)?
            }
        };
        Ok(ImageDetections {
            image_id: set.image_id.clone(),
            detections,
        })
    };
    let results: Vec<ImageDetections> = sets.par_iter().map(run_one).collect::<Result<_>>()?;
    io::save_detections(&args.out, &vocab, &results)?;

    let total: usize = results.iter().map(|r| r.detections.len()).sum();
    let rows: usize = sets.iter().map(|s| s.rows.len()).sum();
    let method = match args.method {
        Method::Nms => "nms",
        Method::Apc => "apc",
    };
    let table = format!(
        "{method}: {rows} rows in {} images -> {total} detections\n",
        sets.len()
    );
    outcome(
        json!({"command": "suppress", "method": method, "images": sets.len(),
               "rows": rows, "detections": total}),
        table,
    )
}

fn check_same_vocab(a: &Vocabulary, b: &Vocabulary) -> Result<()> {
    if a != b {
        return Err(Error::Vocabulary(format!(
            "{:?} vs {:?}",
            a.classes, b.classes
        )));
    }
    Ok(())
}

fn evaluate(
    detections: &Path,
    annotations: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    curves: Option<&Path>,
) -> Result<Outcome> {
    let cfg = Config::load_or_default(config)?;
    let (dv, dets) = io::load_detections(detections)?;
    let (av, gts) = io::load_annotations(annotations)?;
    check_same_vocab(&dv, &av)?;
    let report = eval::evaluate(&dets, &gts, &av, &cfg.eval)?;
    if let Some(out) = out {
        write_file(out, (serde_json::to_string(&report)? + "\n").as_bytes())?;
    }
    if let Some(dir) = curves {
        create_dir(dir)?;
        for c in &report.classes {
            let curve = eval::class_curve(&dets, &gts, c.class_id, &cfg.eval);
            write_file(
                &dir.join(format!("{}.csv", c.name)),
                eval::curve_csv(&curve).as_bytes(),
            )?;
        }
    }
    let table = eval::render_table(&[("detections", &report)]);
    outcome(&report, table)
}

fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

fn compare(a: &Path, b: &Path) -> Result<Outcome> {
    let (ra, rb) = (load_report(a)?, load_report(b)?);
    let cmp = eval::compare(&ra, &rb)?;
    let name = |p: &Path| {
        p.file_stem()
            .map_or("?".into(), |s| s.to_string_lossy().into_owned())
    };
    let (na, nb) = (name(a), name(b));
    let table = eval::render_table(&[(&na, &ra), (&nb, &rb)]);
    outcome(&cmp, table)
}

fn anchors_of(cfg: &Config) -> Result<Vec<crate::geometry::BBox>> {
    let a = cfg.anchors.clone().unwrap_or_else(AnchorConfig::ssd300);
    Ok(anchors::generate(&a)?.boxes)
}

fn match_cmd(
    annotations: &Path,
    config: Option<&Path>,
    threshold: f64,
    out: Option<&Path>,
) -> Result<Outcome> {
    let cfg = Config::load_or_default(config)?;
    let defaults = anchors_of(&cfg)?;
    let (vocab, images) = io::load_annotations(annotations)?;
    let mut per_image = Vec::new();
    let mut targets = Vec::new();
    for img in &images {
        let m = matching::match_boxes(&defaults, &img.objects, threshold, vocab.num_classes)?;
        per_image.push(json!({"image_id": img.image_id, "positives": m.pos.len(),
                              "negatives": m.neg.len()}));
        if out.is_some() {
            let class_probs = m
                .labels()
                .into_iter()
                .map(|l| {
                    let mut row = vec![0.0; vocab.num_classes];
                    row[l.unwrap_or(BACKGROUND) - 1] = 1.0;
                    row
                })
                .collect();
            targets.push(ImagePredictions {
                image_id: img.image_id.clone(),
                predictions: PredictionMatrix {
                    class_probs,
                    offsets: m.targets.clone(),
                },
            });
        }
    }
    if let Some(out) = out {
        io::save_predictions(out, &vocab, &targets)?;
    }
    let positives: usize = per_image
        .iter()
        .map(|v| v["positives"].as_u64().unwrap_or(0) as usize)
        .sum();
    let table = format!(
        "{} default boxes, {} images, {positives} positive matches\n",
        defaults.len(),
        images.len()
    );
    outcome(
        json!({"command": "match", "defaults": defaults.len(), "positives": positives,
               "images": per_image}),
        table,
    )
}

fn loss(
    predictions: &Path,
    annotations: &Path,
    config: Option<&Path>,
    threshold: f64,
    opts: LossOptions,
) -> Result<Outcome> {
    let cfg = Config::load_or_default(config)?;
    let defaults = anchors_of(&cfg)?;
    let (pv, preds) = io::load_predictions(predictions)?;
    let (av, gts) = io::load_annotations(annotations)?;
    check_same_vocab(&pv, &av)?;
    let mut rows = Vec::new();
    let mut table = String::new();
    for p in &preds {
        let objects = gts
            .iter()
            .find(|g| g.image_id == p.image_id)
            .map_or(&[][..], |g| &g.objects[..]);
        let m = matching::match_boxes(&defaults, objects, threshold, av.num_classes)?;
        let b = losses::total_loss(&p.predictions, &m, &opts)?;
        table += &format!(
            "{}: total {:.6} (classification {:.6}, localization {:.6}, N = {})\n",
            p.image_id, b.total, b.classification, b.localization, b.num_positive
        );
        rows.push(json!({"image_id": p.image_id, "loss": b}));
    }
    outcome(json!({"command": "loss", "images": rows}), table)
}

/// Parses a square comma-separated matrix.
fn parse_csv_matrix(path: &Path) -> Result<SimilarityMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        rows.push(row);
    }
    SimilarityMatrix::from_rows(rows)
}

fn cluster(similarity: &Path, config: Option<&Path>) -> Result<Outcome> {
    let cfg = Config::load_or_default(config)?;
    let s = parse_csv_matrix(similarity)?;
    let r = clustering::run(&s, &cfg.apc)?;
    let net = s.net_similarity(&r.assignments);
    let table = format!(
        "{} points, {} exemplars {:?} after {} iterations ({})\nassignments: {:?}\n",
        s.len(),
        r.exemplars.len(),
        r.exemplars,
        r.iterations,
        if r.converged {
            "converged"
        } else {
            "not converged"
        },
        r.assignments
    );
    outcome(
        json!({"command": "cluster", "exemplars": r.exemplars, "assignments": r.assignments,
               "iterations": r.iterations, "converged": r.converged, "net_similarity": net}),
        table,
    )
}

fn synth(args: &SynthArgs) -> Result<Outcome> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (vocab, scenes) = if args.fixture {
        let (v, s) = io::small_object_fixture();
        (v, vec![s])
    } else {
        io::synth_corpus(&spec, args.scenes)?
    };
    let images_dir = args.out_dir.join("images");
    create_dir(&images_dir)?;
    scenes
        .par_iter()
        .map(|s| {
            let id = &s.annotations.image_id;
            match args.format {
                ImageFormat::Ppm => io::save_ppm(&images_dir.join(format!("{id}.ppm")), &s.image),
                ImageFormat::Png => io::save_png(&images_dir.join(format!("{id}.png")), &s.image),
            }
        })
        .collect::<Result<Vec<()>>>()?;
    let anns: Vec<_> = scenes.iter().map(|s| s.annotations.clone()).collect();
    let dets: Vec<_> = scenes.iter().map(|s| s.detections.clone()).collect();
    io::save_annotations(&args.out_dir.join("annotations.jsonl"), &vocab, &anns)?;
    io::save_dump(&args.out_dir.join("dump.jsonl"), &vocab, &dets)?;

    let objects: usize = anns.iter().map(|a| a.objects.len()).sum();
    let rows: usize = dets.iter().map(|d| d.rows.len()).sum();
    let table = format!(
        "{} scenes (seed {}), {objects} objects, {rows} detection rows -> {}\n",
        scenes.len(),
        spec.seed,
        args.out_dir.display()
    );
    outcome(
        json!({"command": "synth", "seed": args.seed.map(|_| spec.seed), "scenes": scenes.len(),
               "objects": objects, "rows": rows}),
        table,
    )
}
