use rand_mt::Mt;
use serde::{Deserialize, Serialize};

/// One seed per source of randomness, so that changing how the initial
/// constellation is drawn never perturbs optimizer proposals and vice versa.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Random initial angles (mean anomalies first, then RAANs).
    pub init: u32,
    /// Random sidereal-angle offset when the window asks for one.
    pub gmst: u32,
    /// Baseline proposals, mutations and crossovers.
    pub optimizer: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { init: 42, gmst: 0, optimizer: 0 }
    }
}

/// Uniform draws from a 32-bit Mersenne Twister seeded the way NumPy's
/// legacy `RandomState(seed)` does, with its 53-bit double construction, so
/// initial configurations can be shared with Python tooling.
pub struct LegacyUniform(Mt);

impl LegacyUniform {
    pub fn new(seed: u32) -> Self {
        Self(Mt::new(seed))
    }

    /// Uniform on [0, 1).
    pub fn sample(&mut self) -> f64 {
        let a = self.0.next_u32() >> 5;
        let b = self.0.next_u32() >> 6;
        (f64::from(a) * 67_108_864.0 + f64::from(b)) / 9_007_199_254_740_992.0
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.sample()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_numpy_random_state() {
        // RandomState(42).uniform(0, 360, 3)
        let mut u = LegacyUniform::new(42);
        let want = [134.8344427850505, 342.2571503075698, 263.51781905210584];
        for w in want {
            assert_eq!(u.uniform(0.0, 360.0), w);
        }
        assert_eq!(LegacyUniform::new(42).sample(), 0.3745401188473625);
    }

    #[test]
    fn samples_stay_in_unit_interval() {
        let mut u = LegacyUniform::new(7);
        assert!((0..10_000).map(|_| u.sample()).all(|x| (0.0..1.0).contains(&x)));
    }
}
