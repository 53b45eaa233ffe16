use detpipe::data::{synthesize_scene, SynthConfig};
use detpipe::eval::{match_detections, report};
use detpipe::oracle::oracle_weights;
use detpipe::pipeline::{detect, PipelineConfig};

#[test]
fn oracle_detects_synthetic_scenes_perfectly() {
    let config = PipelineConfig::fastener_preset();
    let (weights, cal) = oracle_weights(&config).unwrap();
    eprintln!("nearest impostor distances {:?}", cal.nearest_impostor);
    let synth = SynthConfig::default();
    let mut results = Vec::new();
    for seed in 0..100 {
        let (img, ann) = synthesize_scene(seed, &synth);
        let dets = detect(&img, &weights, &config).unwrap();
        let m = match_detections(&dets, &ann.objects, &config.eval).unwrap();
        if m.detections.iter().any(|d| !d.1) || m.ground_truth.iter().any(|g| !g.1) {
            eprintln!("seed {seed}: dets {dets:?}\n gt {:?}", ann.objects);
        }
        results.push(m);
    }
    let r = report(&results);
    eprintln!("{}", r.to_table());
    assert_eq!(r.mean_precision, 1.0);
    assert_eq!(r.mean_recall, 1.0);
}
