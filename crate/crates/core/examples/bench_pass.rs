use std::time::Instant;
use nalgebra::DMatrix;
use privmix::location::{BlockIndex, PointSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 50_000usize;
    let d = 64usize;
    let x = DMatrix::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let ps = PointSet::from_matrix(&x);
    let idx = BlockIndex::build(&ps);
    for threads in [1usize, 2] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let t0 = Instant::now();
        let multi = pool.install(|| idx.counts_multi(&[4.0, 8.0, 16.0, 20.0, 32.0, 40.0, 80.0, 160.0]));
        let el = t0.elapsed().as_secs_f64();
        let pairs = (n as f64) * (n as f64) / 2.0;
        println!(
            "threads={threads}: {:.2}s  {:.1} Mpairs/s  head={:?}",
            el,
            pairs / el / 1e6,
            &multi.counts_at(2)[..2]
        );
    }
}
