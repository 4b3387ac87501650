use rand::Rng;

use crate::error::{Error, Result};

/// One whole episode. All per-step vectors have the episode's length and
/// only the last step is terminal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeRecord {
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<Vec<f64>>>,
    pub avail_actions: Vec<Vec<Vec<bool>>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.states.len(),
            self.observations.len(),
            self.avail_actions.len(),
            self.actions.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::usage(format!(
                "episode fields have lengths {lens:?} and {n} rewards"
            )));
        }
        if n == 0 {
            return Err(Error::usage("empty episode"));
        }
        if self.dones.iter().filter(|&&d| d).count() != 1 || !self.dones[n - 1] {
            return Err(Error::usage("episode must end with its only terminal step"));
        }
        Ok(())
    }
}

/// Fixed-capacity ring of episodes; the oldest episode is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: Vec<EpisodeRecord>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            episodes: Vec::with_capacity(capacity.min(1024)),
            capacity,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of episodes ever inserted.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn insert(&mut self, ep: EpisodeRecord) {
        if self.episodes.len() < self.capacity {
            self.episodes.push(ep);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.episodes[slot] = ep;
        }
        self.inserted += 1;
    }

    /// Stored episodes from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        let split = if self.episodes.len() < self.capacity {
            0
        } else {
            (self.inserted % self.capacity as u64) as usize
        };
        self.episodes[split..].iter().chain(&self.episodes[..split])
    }

    /// `k` storage indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.episodes.len() < k || self.episodes.is_empty() {
            return Err(Error::usage(format!(
                "buffer holds {} episodes, {k} requested",
                self.episodes.len()
            )));
        }
        Ok((0..k).map(|_| rng.gen_range(0..self.episodes.len())).collect())
    }

    pub fn get(&self, index: usize) -> &EpisodeRecord {
        &self.episodes[index]
    }

    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Result<Vec<&EpisodeRecord>> {
        Ok(self
            .sample_indices(k, rng)?
            .into_iter()
            .map(|i| &self.episodes[i])
            .collect())
    }
}
