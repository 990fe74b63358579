use std::time::Instant;

use nsrbm::model::{normalize, CoefficientSpec, Tolerances};
use nsrbm::rbm::{sample_triplet_alg1, sample_triplet_alg2, Alg2Config};
use nsrbm::tdbm::TdbmParams;
use nsrbm::RandomStream;

fn main() {
    let n = 5000;
    for (name, spec) in [
        ("constant", CoefficientSpec::constant(-1.0, 1.0).unwrap()),
        ("cosine", CoefficientSpec::cosine(1.0, 1.0, -0.5).unwrap()),
    ] {
        let model = normalize(&spec, Tolerances::default()).unwrap();
        let mut rng = RandomStream::new(1);
        let start = Instant::now();
        let (mut sum, mut k) = (0.0, 0usize);
        for _ in 0..n {
            let t = sample_triplet_alg2(&model, f64::INFINITY, Alg2Config::default(), &mut rng).unwrap();
            sum += t.max;
            k += t.diagnostics.iterations;
        }
        println!("{name} alg2: {:?}/draw mean {} K {}", start.elapsed() / n, sum / n as f64, k as f64 / n as f64);
        let start = Instant::now();
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_triplet_alg1(&model, f64::INFINITY, TdbmParams::default(), &mut rng).unwrap().max;
        }
        println!("{name} alg1: {:?}/draw mean {}", start.elapsed() / n, sum / n as f64);
    }
}
