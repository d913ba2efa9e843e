//! Tree pseudo-LRU.
//!
//! Nodes are stored in heap order (root at 0, children of `i` at `2i+1` and
//! `2i+2`). A node flag of 0 sends the victim search into the left subtree,
//! 1 into the right. Touching a way rewrites every flag on its root-to-leaf
//! path to point away from it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlruTree {
    bits: Vec<bool>,
    ways: usize,
}

impl PlruTree {
    pub fn new(ways: usize) -> Self {
        assert!(ways.is_power_of_two(), "PLRU ways must be a power of two");
        Self {
            bits: vec![false; ways - 1],
            ways,
        }
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn touch(&mut self, way: usize) {
        assert!(
            way < self.ways,
            "way {way} out of range for {} ways",
            self.ways
        );
        let mut node = way + self.ways - 1;
        while node > 0 {
            let parent = (node - 1) / 2;
            let came_from_left = node == 2 * parent + 1;
            self.bits[parent] = came_from_left;
            node = parent;
        }
    }

    pub fn victim(&self) -> usize {
        let mut node = 0;
        while node < self.ways - 1 {
            node = 2 * node + 1 + usize::from(self.bits[node]);
        }
        node - (self.ways - 1)
    }

    pub fn reset(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
    }
}
