use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use glam_bench::{corpus, default_model, inputs, labeled_graphs};
use glam_core::eval::mean_ap;
use glam_core::featurize::FeatureSchema;
use glam_core::graph_build::build_graph_with;
use glam_core::labeler::{label_graph, DEFAULT_IOU_FLOOR};
use glam_core::pipeline::{gold_results, infer_page, InferOptions};
use glam_core::segmenter::segment_gold;
use glam_core::ClassSchema;

fn graph_construction(c: &mut Criterion) {
    let corpus = corpus(20);
    let features = FeatureSchema::v1();
    let mut g = c.benchmark_group("graph");
    g.throughput(Throughput::Elements(corpus.pages.len() as u64));
    g.bench_function("build_graph", |b| {
        b.iter(|| {
            for p in &corpus.pages {
                black_box(build_graph_with(p, &features).unwrap());
            }
        })
    });
    let graphs = labeled_graphs(&corpus);
    let schema = ClassSchema::doclaynet();
    let boxes = corpus.coco.boxes_by_page(&schema).unwrap();
    g.bench_function("label_graph", |b| {
        b.iter(|| {
            for gr in &graphs {
                black_box(label_graph(gr, &boxes[&gr.page.page_id], schema.background_id(), DEFAULT_IOU_FLOOR));
            }
        })
    });
    g.bench_function("segment_gold", |b| {
        b.iter(|| {
            for gr in &graphs {
                black_box(segment_gold(gr, &schema));
            }
        })
    });
    g.finish();
}

fn model(c: &mut Criterion) {
    let corpus = corpus(8);
    let graphs = labeled_graphs(&corpus);
    let inputs = inputs(&graphs);
    let model = default_model();
    let mut g = c.benchmark_group("model");
    g.sample_size(20);
    for (i, x) in inputs.iter().enumerate().take(3) {
        g.bench_with_input(BenchmarkId::new("predict", format!("page{i}_{}n", x.num_nodes())), x, |b, x| {
            b.iter(|| black_box(model.predict(x).unwrap()))
        });
    }
    let schema = ClassSchema::doclaynet();
    let features = FeatureSchema::v1();
    let opts = InferOptions::default();
    g.throughput(Throughput::Elements(corpus.pages.len() as u64));
    g.bench_function("infer_pages", |b| {
        b.iter(|| {
            for p in &corpus.pages {
                black_box(infer_page(&model, &features, &schema, p, &opts).unwrap());
            }
        })
    });
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let schema = ClassSchema::doclaynet();
    let corpus = corpus(100);
    let results = gold_results(&corpus.pages, &corpus.coco, &schema, &FeatureSchema::v1(), DEFAULT_IOU_FLOOR).unwrap();
    c.bench_function("mean_ap_100_pages", |b| b.iter(|| black_box(mean_ap(&results, &corpus.coco, &schema).unwrap())));
}

criterion_group!(benches, graph_construction, model, evaluation);
criterion_main!(benches);
