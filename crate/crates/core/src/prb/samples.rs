use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PrbError, ProcessId};

/// Sample sizes and thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub echo_size: usize,
    pub ready_size: usize,
    pub delivery_size: usize,
    /// `E`: Echo messages from the Echo sample needed to send Ready.
    pub echo_threshold: usize,
    /// `R`: Ready messages from the Ready sample needed to send Ready.
    pub ready_threshold: usize,
    /// `D`: delivery needs strictly more Ready messages than this from the
    /// Delivery sample.
    pub delivery_threshold: usize,
}

impl SampleConfig {
    /// `size = ⌈K·ln n⌉` for all three samples, capped at the `n − 1`
    /// available peers, with the default thresholds.
    pub fn for_network(n: usize, k: f64) -> Self {
        let size = ((k * (n as f64).ln()).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
        Self::with_size(size)
    }

    /// Same size for every sample: `E = ⌈2s/3⌉`, `R = ⌈s/3⌉`, `D = ⌈2s/3⌉`.
    pub fn with_size(size: usize) -> Self {
        Self::with_sizes(size, size, size)
    }

    pub fn with_sizes(echo: usize, ready: usize, delivery: usize) -> Self {
        Self {
            echo_size: echo,
            ready_size: ready,
            delivery_size: delivery,
            echo_threshold: (2 * echo).div_ceil(3),
            ready_threshold: ready.div_ceil(3),
            delivery_threshold: (2 * delivery).div_ceil(3),
        }
    }

    pub fn validate(&self) -> Result<(), PrbError> {
        let ok = self.echo_threshold < self.echo_size
            && self.ready_threshold < self.ready_size
            && self.delivery_threshold < self.delivery_size
            && self.echo_threshold > 0
            && self.ready_threshold > 0;
        if ok {
            Ok(())
        } else {
            Err(PrbError::InvalidThresholds(*self))
        }
    }

    pub fn max_size(&self) -> usize {
        self.echo_size.max(self.ready_size).max(self.delivery_size)
    }
}

/// The three listen-from samples of one process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessSamples {
    pub echo: BTreeSet<ProcessId>,
    pub ready: BTreeSet<ProcessId>,
    pub delivery: BTreeSet<ProcessId>,
}

fn draw<R: Rng + ?Sized>(peers: &[ProcessId], size: usize, rng: &mut R) -> BTreeSet<ProcessId> {
    index::sample(rng, peers.len(), size)
        .into_iter()
        .map(|i| peers[i])
        .collect()
}

/// Draws the Echo, Ready and Delivery samples uniformly without replacement
/// from the registered peers other than `me`.
pub fn init_samples<R: Rng + ?Sized>(
    me: ProcessId,
    registry: &BTreeSet<ProcessId>,
    config: &SampleConfig,
    rng: &mut R,
) -> Result<ProcessSamples, PrbError> {
    config.validate()?;
    let peers: Vec<_> = registry.iter().copied().filter(|p| *p != me).collect();
    if peers.len() < config.max_size() {
        return Err(PrbError::RegistryTooSmall {
            peers: peers.len(),
            needed: config.max_size(),
        });
    }
    Ok(ProcessSamples {
        echo: draw(&peers, config.echo_size, rng),
        ready: draw(&peers, config.ready_size, rng),
        delivery: draw(&peers, config.delivery_size, rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn default_sizes_and_thresholds() {
        let c = SampleConfig::for_network(128, 4.0);
        assert_eq!(c.echo_size, 20);
        assert_eq!((c.echo_threshold, c.ready_threshold, c.delivery_threshold), (14, 7, 14));
        let c = SampleConfig::for_network(2048, 4.0);
        assert_eq!(c.echo_size, 31);
        assert_eq!(SampleConfig::for_network(6, 4.0).echo_size, 5);
        assert!(SampleConfig::with_size(2).validate().is_err());
        assert!(SampleConfig::with_size(3).validate().is_ok());
    }

    #[test]
    fn small_registry_samples() {
        let reg: BTreeSet<_> = (0..4).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = init_samples(0, &reg, &SampleConfig::with_size(3), &mut rng).unwrap();
        for set in [&s.echo, &s.ready, &s.delivery] {
            assert_eq!(set.len(), 3);
            assert!(!set.contains(&0));
        }
        let mut small = reg.clone();
        small.remove(&3);
        assert!(matches!(
            init_samples(0, &small, &SampleConfig::with_size(3), &mut rng),
            Err(PrbError::RegistryTooSmall { peers: 2, needed: 3 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let reg: BTreeSet<_> = (0..50).collect();
        let c = SampleConfig::for_network(50, 4.0);
        let a = init_samples(3, &reg, &c, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = init_samples(3, &reg, &c, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_is_uniform() {
        let n = 1024usize;
        let reg: BTreeSet<_> = (0..n as u32).collect();
        let c = SampleConfig::for_network(n, 4.0);
        let mut counts = vec![0u32; n];
        let draws = 1000;
        for seed in 0..draws {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for p in init_samples(0, &reg, &c, &mut rng).unwrap().echo {
                counts[p as usize] += 1;
            }
        }
        assert_eq!(counts[0], 0);
        let p = c.echo_size as f64 / (n - 1) as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let peers = &counts[1..];
        let within = peers
            .iter()
            .filter(|k| (f64::from(**k) - mean).abs() <= 3.0 * sigma)
            .count();
        assert!(within as f64 / peers.len() as f64 >= 0.99, "{within} of {}", peers.len());
        assert!(peers.iter().all(|k| (f64::from(*k) - mean).abs() <= 5.0 * sigma));
        let observed: f64 = peers.iter().map(|k| f64::from(*k)).sum::<f64>() / peers.len() as f64;
        assert!((observed - mean).abs() < 1e-9);
    }
}
