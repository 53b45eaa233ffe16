use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use detpipe::config::parse_config;
use detpipe::data::{
    parse_voc, preprocess as preprocess_pair, split, synthesize_scene, write_manifest, write_voc, Annotation,
    PreprocessConfig, RgbImage, SplitRatio, SynthConfig, VocMode,
};
use detpipe::eval::{match_detections, report, Detection, EvalConfig};
use detpipe::model::ModelWeights;
use detpipe::oracle::oracle_weights;
use detpipe::pipeline::{detect as run_detect, detections_csv_rows, propose_rois, PipelineConfig, DETECTIONS_HEADER};

use crate::bench::{ordering_violations, rotation, table, BudgetStats};
use crate::detfile::{parse_detections, DetectionRow};
use crate::error::{pipeline, Classify, CliError};
use crate::manifest::RunManifest;
use crate::render::draw_detections;

pub const SPLIT_FILE: &str = "split.txt";
pub const PROPOSALS_HEADER: &str = "image,rank,score,anchor,xmin,ymin,xmax,ymax";
/// Scene drawn by `bench` when no image is given.
const BENCH_SCENE_SEED: u64 = 2024;

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let base = PipelineConfig::fastener_preset();
    let Some(path) = path else {
        return Ok(base);
    };
    let text = fs::read_to_string(path).config(format!("reading config {}", path.display()))?;
    parse_config(&text, base).config(format!("config {}", path.display()))
}

fn load_weights(path: Option<&Path>, config: &PipelineConfig) -> Result<ModelWeights, CliError> {
    let weights = match path {
        Some(p) => ModelWeights::load(p).input(format!("loading weights {}", p.display()))?,
        None => {
            oracle_weights(config)
                .config("building glyph weights for this config (pass --weights to use saved ones)")?
                .0
        }
    };
    config.check_weights(&weights).map_err(|e| pipeline(e, "weights do not fit the config"))?;
    Ok(weights)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).input(format!("creating {}", dir.display()))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Files in `dir` with extension `ext`, sorted by name.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).input(format!("reading directory {}", dir.display()))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.input(format!("reading directory {}", dir.display()))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// A single image, or every `.ppm` in a directory.
fn image_inputs(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        list_files(path, "ppm")
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(CliError::input(format!("{} does not exist", path.display())))
    }
}

fn read_image(path: &Path) -> Result<RgbImage, CliError> {
    RgbImage::read_ppm(path).input(format!("reading image {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).input(format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).input("writing standard output"),
    }
}

pub fn preprocess(cfg_path: Option<&Path>, input: &Path, out: &Path, keep_going: bool) -> Result<(), CliError> {
    load_config(cfg_path)?;
    let images = list_files(input, "ppm")?;
    ensure_dir(out)?;
    let cfg = PreprocessConfig::default();

    let one = |img_path: &PathBuf| -> Result<String, CliError> {
        let xml_path = img_path.with_extension("xml");
        let xml = fs::read(&xml_path).input(format!("reading {}", xml_path.display()))?;
        let ann = parse_voc(&xml, VocMode::Strict).input(format!("{}", xml_path.display()))?;
        let img = read_image(img_path)?;
        if (img.width, img.height) != (ann.width, ann.height) {
            return Err(CliError::input(format!(
                "{}: image is {}x{} but annotation says {}x{}",
                img_path.display(),
                img.width,
                img.height,
                ann.width,
                ann.height
            )));
        }
        let (small, mut t) = preprocess_pair(&img, &ann, &cfg);
        let name = file_name(img_path);
        t.filename = name.clone();
        let dst = out.join(&name);
        small.write_ppm(&dst).input(format!("writing {}", dst.display()))?;
        let dst_xml = dst.with_extension("xml");
        fs::write(&dst_xml, write_voc(&t)).input(format!("writing {}", dst_xml.display()))?;
        Ok(format!(
            "{name}: {}x{} -> {}x{}, {} of {} boxes kept",
            img.width,
            img.height,
            small.width,
            small.height,
            t.objects.len(),
            ann.objects.len()
        ))
    };

    let mut done = 0;
    let mut failures = Vec::new();
    if keep_going {
        let results: Vec<_> = images.par_iter().map(one).collect();
        for r in results {
            match r {
                Ok(line) => {
                    info!("{line}");
                    done += 1;
                }
                Err(e) => {
                    warn!("{e}");
                    failures.push(e);
                }
            }
        }
    } else {
        for img in &images {
            let line = one(img)?;
            info!("{line}");
            done += 1;
        }
    }
    let mut m = RunManifest::new("preprocess", cfg_path).input(input).output(out);
    for img in &images {
        m = m.input(img);
    }
    m.write(out)?;
    println!("{done} images processed");
    match failures.len() {
        0 => Ok(()),
        n => Err(CliError::input(format!("{n} of {} images failed", images.len()))),
    }
}

pub fn synth(cfg_path: Option<&Path>, out: &Path, count: usize, seed: u64) -> Result<(), CliError> {
    load_config(cfg_path)?;
    ensure_dir(out)?;
    let synth = SynthConfig::default();
    let names: Vec<String> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let (img, ann) = synthesize_scene(seed.wrapping_add(i), &synth);
            let dst = out.join(&ann.filename);
            img.write_ppm(&dst).input(format!("writing {}", dst.display()))?;
            let xml = dst.with_extension("xml");
            fs::write(&xml, write_voc(&ann)).input(format!("writing {}", xml.display()))?;
            Ok(ann.filename)
        })
        .collect::<Result<_, CliError>>()?;
    let parts = split(&names, SplitRatio::default(), seed);
    let manifest_path = out.join(SPLIT_FILE);
    fs::write(&manifest_path, write_manifest(&parts)).input(format!("writing {}", manifest_path.display()))?;
    RunManifest::new("synth", cfg_path).output(out).seed(seed).write(out)?;
    println!(
        "{count} scenes written to {} ({} train / {} val)",
        out.display(),
        parts.train.len(),
        parts.val.len()
    );
    Ok(())
}

pub fn propose(cfg_path: Option<&Path>, images: &Path, w: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let config = load_config(cfg_path)?;
    let weights = load_weights(w, &config)?;
    let files = image_inputs(images)?;
    let rows: Vec<String> = files
        .par_iter()
        .map(|p| {
            let img = read_image(p)?;
            let props = propose_rois(&img, &weights, &config).map_err(|e| pipeline(e, p.display()))?;
            let name = file_name(p);
            let mut s = String::new();
            for (rank, r) in props.rois.iter().enumerate() {
                let b = r.bbox;
                s.push_str(&format!(
                    "{name},{rank},{:.6},{},{:.6},{:.6},{:.6},{:.6}\n",
                    r.score, r.source_index, b.x_min, b.y_min, b.x_max, b.y_max
                ));
            }
            info!("{name}: {} proposals", props.rois.len());
            Ok(s)
        })
        .collect::<Result<_, CliError>>()?;
    emit(out, &format!("{PROPOSALS_HEADER}\n{}", rows.concat()))?;
    if let Some(out) = out {
        let mut m = RunManifest::new("propose", cfg_path).input(images).output(out);
        if let Some(w) = w {
            m = m.input(w);
        }
        m.write_beside(out)?;
    }
    Ok(())
}

pub fn detect(cfg_path: Option<&Path>, images: &Path, w: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let config = load_config(cfg_path)?;
    let weights = load_weights(w, &config)?;
    let files = image_inputs(images)?;
    let rows: Vec<String> = files
        .par_iter()
        .map(|p| {
            let img = read_image(p)?;
            let dets = run_detect(&img, &weights, &config).map_err(|e| pipeline(e, p.display()))?;
            let name = file_name(p);
            info!("{name}: {} detections", dets.len());
            Ok(detections_csv_rows(&name, &dets))
        })
        .collect::<Result<_, CliError>>()?;
    emit(out, &format!("{DETECTIONS_HEADER}\n{}", rows.concat()))?;
    if let Some(out) = out {
        let mut m = RunManifest::new("detect", cfg_path).input(images).output(out);
        if let Some(w) = w {
            m = m.input(w);
        }
        m.write_beside(out)?;
    }
    Ok(())
}

fn read_detection_file(path: &Path) -> Result<Vec<DetectionRow>, CliError> {
    let text = fs::read_to_string(path).input(format!("reading {}", path.display()))?;
    parse_detections(&text, path)
}

pub fn eval(cfg_path: Option<&Path>, dets: &Path, gt: &Path, iou: Option<f64>, csv: bool) -> Result<(), CliError> {
    let config = load_config(cfg_path)?;
    let eval_cfg = EvalConfig {
        iou_threshold: iou.unwrap_or(config.eval.iou_threshold),
    };
    eval_cfg.validate().config("--iou")?;

    let mut truth: BTreeMap<String, Annotation> = BTreeMap::new();
    for xml in list_files(gt, "xml")? {
        let bytes = fs::read(&xml).input(format!("reading {}", xml.display()))?;
        let ann = parse_voc(&bytes, VocMode::Strict).input(format!("{}", xml.display()))?;
        let key = if ann.filename.is_empty() {
            xml.with_extension("ppm").file_name().unwrap().to_string_lossy().into_owned()
        } else {
            ann.filename.clone()
        };
        truth.insert(key, ann);
    }

    let mut by_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for row in read_detection_file(dets)? {
        by_image.entry(row.image).or_default().push(row.detection);
    }
    let stray: Vec<&str> = by_image.keys().filter(|k| !truth.contains_key(*k)).map(String::as_str).collect();
    if !stray.is_empty() {
        return Err(CliError::input(format!(
            "detections reference images without ground truth in {}: {}",
            gt.display(),
            stray.join(", ")
        )));
    }
    let mut results = Vec::with_capacity(truth.len());
    for (name, ann) in &truth {
        let d = by_image.get(name).map_or(&[][..], Vec::as_slice);
        results.push(match_detections(d, &ann.objects, &eval_cfg).config("--iou")?);
    }
    let rep = report(&results);
    info!("{} images scored at IOU > {}", truth.len(), eval_cfg.iou_threshold);
    if csv {
        print!("{}", rep.to_csv());
    } else {
        print!("{}", rep.to_table());
    }
    Ok(())
}

pub fn bench(
    cfg_path: Option<&Path>,
    rois: &[usize],
    repeat: usize,
    check: bool,
    image: Option<&Path>,
    w: Option<&Path>,
) -> Result<(), CliError> {
    if rois.is_empty() || repeat == 0 {
        return Err(CliError::config("--rois needs at least one budget and --repeat at least 1"));
    }
    let base = load_config(cfg_path)?;
    let weights = load_weights(w, &base)?;
    let img = match image {
        Some(p) => read_image(p)?,
        None => synthesize_scene(BENCH_SCENE_SEED, &SynthConfig::default()).0,
    };
    let configs: Vec<PipelineConfig> = rois
        .iter()
        .map(|&n| {
            let mut c = base.clone();
            c.proposal.post_nms_top = n;
            c.validate().map_err(|e| pipeline(e, format!("budget {n}")))?;
            Ok(c)
        })
        .collect::<Result<_, CliError>>()?;
    for c in &configs {
        run_detect(&img, &weights, c).map_err(|e| pipeline(e, "warm-up"))?;
    }
    let mut samples = vec![Vec::with_capacity(repeat); configs.len()];
    for r in 0..repeat {
        for b in rotation(configs.len(), r) {
            let t = Instant::now();
            let dets = run_detect(&img, &weights, &configs[b]).map_err(|e| pipeline(e, "bench"))?;
            samples[b].push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(dets);
        }
    }
    let stats: Vec<BudgetStats> = rois.iter().zip(&samples).map(|(&n, s)| BudgetStats::from_samples(n, s)).collect();
    print!("{}", table(&stats));
    if check {
        let bad = ordering_violations(&stats);
        if !bad.is_empty() {
            let pairs: Vec<String> = bad
                .iter()
                .map(|&i| format!("{} vs {}", stats[i].rois, stats[i + 1].rois))
                .collect();
            return Err(CliError::input(format!(
                "latency not decreasing with the budget: {}",
                pairs.join(", ")
            )));
        }
    }
    Ok(())
}

pub fn render(image: &Path, dets: &Path, out: &Path, labels: bool) -> Result<(), CliError> {
    let mut img = read_image(image)?;
    let name = file_name(image);
    let rows = read_detection_file(dets)?;
    let (w, h) = (img.width as f64, img.height as f64);
    let mine: Vec<Detection> = rows.into_iter().filter(|r| r.image == name).map(|r| r.detection).collect();
    for d in &mine {
        let b = d.bbox;
        if b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > w || b.y_max > h {
            return Err(CliError::input(format!(
                "{}: {} box ({}, {}, {}, {}) lies outside the {}x{} image",
                dets.display(),
                d.class,
                b.x_min,
                b.y_min,
                b.x_max,
                b.y_max,
                img.width,
                img.height
            )));
        }
    }
    draw_detections(&mut img, &mine, labels);
    img.write_ppm(out).input(format!("writing {}", out.display()))?;
    info!("{name}: {} boxes drawn", mine.len());
    RunManifest::new("render", None).input(image).input(dets).output(out).write_beside(out)
}

pub fn weights(cfg_path: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let config = load_config(cfg_path)?;
    let (w, cal) = oracle_weights(&config).config("building glyph weights")?;
    w.save(out).input(format!("saving {}", out.display()))?;
    for (class, d) in detpipe::classes::FastenerClass::ALL.iter().zip(&cal.nearest_impostor) {
        info!("{class}: nearest impostor distance {d:.4}");
    }
    RunManifest::new("weights", cfg_path).output(out).write_beside(out)
}
