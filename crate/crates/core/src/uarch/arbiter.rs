use serde::{Deserialize, Serialize};

/// Round-robin arbiter. A grant to `unit` costs its positional distance from
/// the priority pointer, then moves the pointer just past the granted unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundRobinArbiter {
    ptr: usize,
    n_requestors: usize,
}

impl RoundRobinArbiter {
    pub fn new(n_requestors: usize) -> Self {
        assert!(n_requestors > 0);
        Self {
            ptr: 0,
            n_requestors,
        }
    }

    pub fn ptr(&self) -> usize {
        self.ptr
    }

    pub fn n_requestors(&self) -> usize {
        self.n_requestors
    }

    pub fn grant(&mut self, unit: usize) -> u64 {
        assert!(unit < self.n_requestors, "requestor {unit} out of range");
        let n = self.n_requestors;
        let delay = (unit + n - self.ptr) % n;
        self.ptr = (unit + 1) % n;
        delay as u64
    }

    pub fn reset(&mut self) {
        self.ptr = 0;
    }
}
