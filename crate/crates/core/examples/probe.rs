use rayon::prelude::*;
use stratmc::allocate::*;
use stratmc::finance::*;
use stratmc::rng::stream;

fn mse(env: &AsianEnvironment, alloc: &Allocator, n: usize, reps: usize, seed: u64) -> (f64, f64) {
    let sq: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let run = alloc.run(env, n, &mut rng).unwrap();
            (run.estimate - REFERENCE_PRICE.price).powi(2)
        })
        .collect();
    let m = sq.iter().sum::<f64>() / reps as f64;
    let v = sq.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
    (m, (v / reps as f64).sqrt())
}

fn main() {
    let n: usize = std::env::args().nth(1).unwrap().parse().unwrap();
    let reps: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let t = std::time::Instant::now();
    let params = McUcbParams::new(1.0, 1.0)
        .unwrap()
        .with_a_override(150.0 * (n as f64).ln())
        .unwrap();
    for k in [1usize, 2, 3, 4, 5, 6, 8, 10, 15, 20, 25, 30, 40, 50, 70, 100] {
        if 2 * k > n {
            break;
        }
        let env = AsianEnvironment::new(AsianOptionSpec::default(), k).unwrap();
        let a = mse(&env, &Allocator::McUcb(params), n, reps, 1);
        let u = mse(&env, &Allocator::Uniform, n, reps, 1);
        println!(
            "K={k:3} mcucb {:.5} ± {:.5}   uniform {:.5} ± {:.5}",
            a.0, a.1, u.0, u.1
        );
    }
    eprintln!("{:?}", t.elapsed());
}
