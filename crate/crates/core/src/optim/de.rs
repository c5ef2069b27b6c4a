use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BaselineConfig, Fitness, Ledger, OptimError, RunTrace};

/// Copies a contiguous (cyclic) run of mutant genes into the parent. The
/// run starts at a random gene and is extended while a uniform draw stays
/// below `cr`, so it always holds at least one mutant gene.
pub fn exponential_crossover(rng: &mut impl Rng, parent: &[f64], mutant: &[f64], cr: f64) -> Vec<f64> {
    let n = parent.len();
    let mut trial = parent.to_vec();
    let start = rng.random_range(0..n);
    let mut len = 1;
    while len < n && rng.random::<f64>() < cr {
        len += 1;
    }
    for j in 0..len {
        let g = (start + j) % n;
        trial[g] = mutant[g];
    }
    trial
}

fn distinct(rng: &mut impl Rng, n: usize, exclude: usize) -> [usize; 3] {
    let mut out = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let c = rng.random_range(0..n);
        if c != exclude && !out[..k].contains(&c) {
            out[k] = c;
            k += 1;
        }
    }
    out
}

/// DE/rand/1 with two-point (contiguous segment) crossover and greedy
/// one-to-one replacement.
pub fn run_de<F: Fitness>(theta0: &[f64], fitness: &mut F, cfg: &BaselineConfig) -> Result<RunTrace, OptimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger = Ledger::new(fitness, cfg.budget);
    let init_sigma = cfg.init_sigma_deg.to_radians();
    let np = cfg.de_population;

    let mut pop = vec![theta0.to_vec()];
    while pop.len() < np {
        pop.push(theta0.iter().map(|v| v + init_sigma * rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let mut fit = Vec::with_capacity(np);
    for x in &pop {
        match ledger.eval(x)? {
            Some(f) => fit.push(f),
            None => return Ok(ledger.finish("de")),
        }
    }
    'outer: loop {
        for i in 0..np {
            let [a, b, c] = distinct(&mut rng, np, i);
            let mutant: Vec<f64> = (0..theta0.len()).map(|g| pop[a][g] + cfg.de_f * (pop[b][g] - pop[c][g])).collect();
            let trial = exponential_crossover(&mut rng, &pop[i], &mutant, cfg.de_cr);
            match ledger.eval(&trial)? {
                Some(f) => {
                    if f <= fit[i] {
                        pop[i] = trial;
                        fit[i] = f;
                    }
                }
                None => break 'outer,
            }
        }
    }
    Ok(ledger.finish("de"))
}
