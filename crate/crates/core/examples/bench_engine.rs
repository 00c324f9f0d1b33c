//! Rough timing of the counting engine and the partitioner at scale.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use privmix::dp::{BudgetLedger, PrivacyParams};
use privmix::learn::{rpgmp, PartitionConfig};
use privmix::location::{BlockIndex, PointSet};
use privmix::model::BoundsConfig;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200_000usize;
    let d = 64usize;
    let k = 4usize;
    let sep = 2200.0f64;

    // Four spherical clusters at the hard-case separation scale.
    let mut centers = vec![vec![0.0; d]; k];
    for (c, center) in centers.iter_mut().enumerate() {
        for (j, v) in center.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z * 100.0 + if j % k == c { sep * 2.0 } else { 0.0 };
        }
    }
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let c = i % k;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = centers[c][j] + z;
        }
    }

    let t0 = Instant::now();
    let ps = PointSet::from_matrix(&x);
    let idx = BlockIndex::build(&ps);
    println!("build: {:?}", t0.elapsed());

    let t0 = Instant::now();
    let edges = [4.0, 8.0, 16.0, 20.0, 32.0, 40.0, 80.0, 160.0];
    let multi = idx.counts_multi(&edges);
    println!(
        "counts_multi(8 edges): {:?} (count0 head {:?})",
        t0.elapsed(),
        &multi.counts_at(3)[..3]
    );

    let bounds = BoundsConfig {
        mean_radius: 4500.0,
        sigma_min: 1.0,
        sigma_max: 2.0,
        w_min: 0.25,
        separation: sep,
        kappa: 4.0,
    };
    let pp = PrivacyParams::new(1.0, 1e-6).unwrap();
    let mut ledger = BudgetLedger::new();
    let t0 = Instant::now();
    let out = rpgmp(
        &x,
        k,
        &bounds,
        pp,
        &PartitionConfig::default(),
        &mut ledger,
        &mut rng,
    )
    .unwrap();
    println!(
        "rpgmp: {:?} clusters {:?} omitted {}",
        t0.elapsed(),
        out.partition.clusters.iter().map(Vec::len).collect::<Vec<_>>(),
        out.partition.omitted.len()
    );
}
