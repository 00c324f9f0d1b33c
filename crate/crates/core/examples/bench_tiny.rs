use nalgebra::DMatrix;
use privmix::location::{BlockIndex, PointSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 8_000usize;
    let d = 64usize;
    let x = DMatrix::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let ps = PointSet::from_matrix(&x);
    let idx = BlockIndex::build(&ps);
    let multi = idx.counts_multi(&[4.0, 8.0, 16.0, 20.0, 32.0, 40.0, 80.0, 160.0]);
    println!("{:?}", &multi.counts_at(2)[..2]);
}
