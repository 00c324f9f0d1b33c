//! Micro-benchmark of the pairwise distance kernel.

use std::time::Instant;

use privmix::linalg::dist2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quad_bench() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 64usize;
    let m = 256usize;
    let a: Vec<f32> = (0..m * d).map(|_| rng.random::<f32>()).collect();
    let b: Vec<f32> = (0..m * d).map(|_| rng.random::<f32>()).collect();
    let reps = 1200;
    let t0 = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..reps {
        for pa in a.chunks_exact(d) {
            for quad in b.chunks_exact(4 * d) {
                let ds = privmix::location::dist2_f32_quad(pa, quad, d);
                sink += ds[0] + ds[1] + ds[2] + ds[3];
            }
        }
    }
    let pairs = (reps * m * m) as f64;
    let el = t0.elapsed().as_secs_f64();
    println!(
        "crate quad: {:.1} Mpairs/s ({:.1} cycles/pair) {sink}",
        pairs / el / 1e6,
        3e9 * el / pairs
    );
}

fn main() {
    quad_bench();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = 64usize;
    let m = 256usize;
    let a: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>()).collect();
    let edges2 = [16.0f64, 64.0, 256.0, 400.0, 1024.0, 1600.0, 6400.0, 25600.0];
    let reps = 300usize;

    // Pure distance throughput.
    let t0 = Instant::now();
    let mut sink = 0.0f64;
    for _ in 0..reps {
        for pa in a.chunks_exact(d) {
            for pb in b.chunks_exact(d) {
                sink += dist2(pa, pb);
            }
        }
    }
    let pairs = (reps * m * m) as f64;
    let el = t0.elapsed().as_secs_f64();
    println!(
        "dist only: {:.1} Mpairs/s ({:.0} cycles/pair @3GHz) sink={sink:.1}",
        pairs / el / 1e6,
        3e9 * el / pairs
    );

    // Full kernel with edge bucketing and accumulator writes.
    let ne = edges2.len();
    let mut acc = vec![0u32; 2 * m * ne];
    let t0 = Instant::now();
    for _ in 0..reps {
        for (ia, pa) in a.chunks_exact(d).enumerate() {
            for (ib, pb) in b.chunks_exact(d).enumerate() {
                let d2 = dist2(pa, pb);
                if d2 <= edges2[ne - 1] {
                    let mut e = 0;
                    while edges2[e] < d2 {
                        e += 1;
                    }
                    acc[ia * ne + e] += 1;
                    acc[(m + ib) * ne + e] += 1;
                }
            }
        }
    }
    let el = t0.elapsed().as_secs_f64();
    println!(
        "full kernel: {:.1} Mpairs/s ({:.0} cycles/pair @3GHz) acc0={}",
        pairs / el / 1e6,
        3e9 * el / pairs,
        acc[0]
    );
}
