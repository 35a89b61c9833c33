use criterion::{black_box, criterion_group, criterion_main, Criterion};

use glam_bench::{corpus, inputs, labeled_graphs};
use glam_core::model::tag_conv;
use glam_core::Tensor;

fn filled(rows: usize, cols: usize, seed: u32) -> Tensor<f32> {
    let data = (0..rows * cols).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) % 1000) as f32 / 1000.0 - 0.5).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn sparse(c: &mut Criterion) {
    let corpus = corpus(1);
    let graphs = labeled_graphs(&corpus);
    let g = &inputs(&graphs)[0];
    let n = g.num_nodes();
    let x = filled(n, 256, 1);
    c.bench_function("spmm_page_x256", |b| b.iter(|| black_box(g.adj.spmm(&x).unwrap())));
    let weights: Vec<Tensor<f32>> = (0..4).map(|k| filled(256, 64, k)).collect();
    let bias = Tensor::zeros(1, 64);
    c.bench_function("tag_conv_k3_256_to_64", |b| b.iter(|| black_box(tag_conv(&x, &g.adj, &weights, &bias).unwrap())));
}

fn dense(c: &mut Criterion) {
    let a = filled(256, 1024, 3);
    let w = filled(1024, 512, 4);
    c.bench_function("matmul_256x1024x512", |b| b.iter(|| black_box(a.matmul(&w).unwrap())));
}

criterion_group!(benches, sparse, dense);
criterion_main!(benches);
