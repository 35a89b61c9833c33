use std::time::{Duration, Instant};

use glam_core::eval::mean_ap;
use glam_core::featurize::FeatureSchema;
use glam_core::labeler::DEFAULT_IOU_FLOOR;
use glam_core::pipeline::gold_results;
use glam_core::synth::{generate_corpus, perturb};
use glam_core::ClassSchema;

#[test]
fn five_hundred_pages_reproduce_ground_truth() {
    let schema = ClassSchema::doclaynet();
    let start = Instant::now();
    let corpus = generate_corpus(500, 1, &schema).unwrap();
    let results = gold_results(&corpus.pages, &corpus.coco, &schema, &FeatureSchema::v1(), DEFAULT_IOU_FLOOR).unwrap();
    let report = mean_ap(&results, &corpus.coco, &schema).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(report.overall_map, 1.0, "{}", report.to_table());
    assert!(elapsed < Duration::from_secs(30), "{elapsed:?}");
}

#[test]
fn jittered_labels_degrade_smoothly() {
    let schema = ClassSchema::doclaynet();
    let corpus = generate_corpus(100, 4, &schema).unwrap();
    let mut at_50 = Vec::new();
    for jitter in [0.0, 2.0, 5.0, 10.0] {
        let noisy = perturb(&corpus, jitter, 0.0, 17);
        let results = gold_results(&noisy.pages, &noisy.coco, &schema, &FeatureSchema::v1(), DEFAULT_IOU_FLOOR).unwrap();
        let report = mean_ap(&results, &corpus.coco, &schema).unwrap();
        let (lo, hi) = (report.overall_at(0.5).unwrap(), report.overall_at(0.95).unwrap());
        if jitter == 10.0 {
            assert!(lo >= 0.5, "mAP@0.5 {lo}");
            assert!(hi < lo, "mAP@0.95 {hi} vs mAP@0.5 {lo}");
        }
        at_50.push((jitter, lo, hi));
    }
    for w in at_50.windows(2) {
        assert!(w[1].2 <= w[0].2 + 1e-9, "mAP@0.95 rose with more jitter: {at_50:?}");
    }
}
