use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{wrap_angle, BaselineConfig, Fitness, Ledger, OptimError, RunTrace};

/// Gene-wise coin flip between two parents.
pub fn uniform_crossover(rng: &mut impl Rng, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y }).collect()
}

fn tournament(rng: &mut impl Rng, fit: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..size {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

/// Generational GA: warm-started population, tournament selection,
/// uniform crossover, Gaussian mutation with σ annealed linearly over the
/// evaluation budget, elitism. Periodic genes are wrapped into [0, 2π).
pub fn run_ga<F: Fitness>(theta0: &[f64], fitness: &mut F, cfg: &BaselineConfig) -> Result<RunTrace, OptimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = theta0.len();
    let mut ledger = Ledger::new(fitness, cfg.budget);
    let periodic: Vec<bool> = (0..dim).map(|i| ledger.periodic(i)).collect();
    let rate = if cfg.ga_mutation_rate > 0.0 { cfg.ga_mutation_rate } else { 1.0 / dim.max(1) as f64 };
    let (s0, s1) = (cfg.ga_sigma_start_deg.to_radians(), cfg.ga_sigma_end_deg.to_radians());
    let init_sigma = cfg.init_sigma_deg.to_radians();
    let fix = |x: &mut Vec<f64>| {
        for (v, &p) in x.iter_mut().zip(&periodic) {
            if p {
                *v = wrap_angle(*v);
            }
        }
    };

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(cfg.ga_population);
    pop.push(theta0.to_vec());
    while pop.len() < cfg.ga_population {
        let mut x: Vec<f64> = theta0.iter().map(|v| v + init_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        fix(&mut x);
        pop.push(x);
    }
    let mut fit = Vec::with_capacity(pop.len());
    for x in &pop {
        match ledger.eval(x)? {
            Some(f) => fit.push(f),
            None => return Ok(ledger.finish("ga")),
        }
    }

    while ledger.remaining() > 0 {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
        let mut next: Vec<Vec<f64>> = order[..cfg.ga_elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..cfg.ga_elitism].iter().map(|&i| fit[i]).collect();
        while next.len() < cfg.ga_population {
            let a = tournament(&mut rng, &fit, cfg.ga_tournament);
            let b = tournament(&mut rng, &fit, cfg.ga_tournament);
            let mut child = uniform_crossover(&mut rng, &pop[a], &pop[b]);
            let progress = ledger.evals() as f64 / cfg.budget as f64;
            let sigma = s0 + (s1 - s0) * progress;
            for v in child.iter_mut() {
                if rng.random_bool(rate) {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            fix(&mut child);
            match ledger.eval(&child)? {
                Some(f) => {
                    next.push(child);
                    next_fit.push(f);
                }
                None => return Ok(ledger.finish("ga")),
            }
        }
        pop = next;
        fit = next_fit;
    }
    Ok(ledger.finish("ga"))
}
