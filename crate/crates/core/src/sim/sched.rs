use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Tid;

/// Round-robin over the candidate set with a seeded skip, for fuzzing interleavings.
///
/// The skip lets the same thread keep the CPU or lets a neighbour jump the
/// queue, so different seeds explore different orders. The stream is ChaCha8,
/// which is stable across platforms.
#[derive(Debug, Clone)]
pub struct SeededRoundRobin {
    rng: ChaCha8Rng,
    last: Option<Tid>,
}

impl SeededRoundRobin {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            last: None,
        }
    }

    /// Picks one of `candidates` (sorted, non-empty).
    pub fn pick(&mut self, candidates: &[Tid]) -> Tid {
        assert!(!candidates.is_empty(), "pick from empty candidate set");
        let base = match self.last {
            // first candidate strictly after the previous pick, wrapping
            Some(prev) => candidates.iter().position(|&t| t > prev).unwrap_or(0),
            None => 0,
        };
        let skip = self.rng.gen_range(0..candidates.len());
        let choice = candidates[(base + skip) % candidates.len()];
        self.last = Some(choice);
        choice
    }
}

pub enum SchedDirective<'a> {
    /// Run exactly this thread, as ordered by the scenario script.
    Deterministic(Tid),
    SeededRoundRobin(&'a mut SeededRoundRobin),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let c = [Tid(1), Tid(2), Tid(3), Tid(7)];
        let mut a = SeededRoundRobin::new(42);
        let mut b = SeededRoundRobin::new(42);
        let xs: Vec<_> = (0..64).map(|_| a.pick(&c)).collect();
        let ys: Vec<_> = (0..64).map(|_| b.pick(&c)).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|t| c.contains(t)));
    }

    #[test]
    fn single_candidate() {
        let mut rr = SeededRoundRobin::new(9);
        for _ in 0..8 {
            assert_eq!(rr.pick(&[Tid(5)]), Tid(5));
        }
    }
}
