use std::collections::VecDeque;

use rand::Rng;

use crate::env::{EnvAction, Observation, Trajectory};
use crate::error::{Error, Result};
use crate::models::LatentCode;

/// One state-action pair with whatever annotations its trajectory carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub obs: Observation,
    pub action: EnvAction,
    pub code: Option<LatentCode>,
    pub label: Option<usize>,
}

impl Pair {
    pub fn code(&self) -> Result<LatentCode> {
        self.code
            .ok_or_else(|| Error::Missing("latent code on a generated pair".into()))
    }
}

/// Draws `n` pairs uniformly (with replacement) over every pair in `trajs`.
pub fn sample_pairs<'a, R, I>(trajs: I, n: usize, rng: &mut R) -> Result<Vec<Pair>>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a Trajectory>,
    I::IntoIter: Clone,
{
    let iter = trajs.into_iter();
    let mut ends = Vec::new();
    let mut total = 0usize;
    for t in iter.clone() {
        total += t.len();
        ends.push(total);
    }
    if total == 0 {
        return Err(Error::InvalidArgument("cannot sample from an empty set of pairs".into()));
    }
    let all: Vec<&Trajectory> = iter.collect();
    Ok((0..n)
        .map(|_| {
            let g = rng.random_range(0..total);
            let ti = ends.partition_point(|&e| e <= g);
            let start = if ti == 0 { 0 } else { ends[ti - 1] };
            let t = all[ti];
            let s = g - start;
            Pair {
                obs: t.observations[s],
                action: t.actions[s],
                code: t.code,
                label: t.mode_label,
            }
        })
        .collect())
}

/// Bounded FIFO of generated trajectories.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Trajectory>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest entries beyond capacity.
    pub fn push<I: IntoIterator<Item = Trajectory>>(&mut self, trajs: I) {
        for t in trajs {
            if self.items.len() == self.capacity {
                self.items.pop_front();
            }
            self.items.push_back(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> + Clone {
        self.items.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Pair>> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        sample_pairs(self.items.iter(), n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn traj(tag: f64, len: usize) -> Trajectory {
        let mut obs = [0.0; 10];
        obs[0] = tag;
        Trajectory {
            observations: vec![Observation(obs); len],
            actions: vec![EnvAction([tag, 0.0]); len],
            code: Some(LatentCode::new(0, 3).unwrap()),
            mode_label: None,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(5).unwrap();
        b.push((0..7).map(|i| traj(i as f64, 2)));
        assert_eq!(b.len(), 5);
        let tags: Vec<f64> = b.iter().map(|t| t.actions[0].0[0]).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn sample_size_and_empty_error() {
        let mut b = ReplayBuffer::new(3).unwrap();
        let mut r = rng::seeded(0);
        assert!(b.sample(4, &mut r).is_err());
        b.push([traj(1.0, 3)]);
        assert_eq!(b.sample(17, &mut r).unwrap().len(), 17);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn sampling_is_uniform_over_trajectories() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push((0..10).map(|i| traj(i as f64, 5)));
        let n = 100_000;
        let mut counts = [0usize; 10];
        for p in b.sample(n, &mut rng::seeded(9)).unwrap() {
            counts[p.action.0[0] as usize] += 1;
        }
        let p = 0.1;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn uneven_trajectories_weight_by_length() {
        let trajs = vec![traj(0.0, 1), traj(1.0, 3)];
        let pairs = sample_pairs(&trajs, 40_000, &mut rng::seeded(2)).unwrap();
        let ones = pairs.iter().filter(|p| p.action.0[0] == 1.0).count();
        assert!((ones as f64 / 40_000.0 - 0.75).abs() < 0.01);
    }
}
