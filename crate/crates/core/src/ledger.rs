//! Arithmetic cost accounting.
//!
//! A multiply-add counts as one flop. Comparisons and index bookkeeping are
//! not counted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCost {
    pub flops: u64,
    pub entries_computed: u64,
}

impl PhaseCost {
    fn merge(&mut self, other: &PhaseCost) {
        self.flops += other.flops;
        self.entries_computed += other.entries_computed;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub flops: u64,
    pub entries_computed: u64,
    pub max_support: u64,
    pub phases: BTreeMap<String, PhaseCost>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_flops(&mut self, phase: &str, n: u64) {
        if n == 0 {
            return;
        }
        self.flops += n;
        self.phase(phase).flops += n;
    }

    pub fn add_entries(&mut self, phase: &str, n: u64) {
        if n == 0 {
            return;
        }
        self.entries_computed += n;
        self.phase(phase).entries_computed += n;
    }

    pub fn note_support(&mut self, support: usize) {
        self.max_support = self.max_support.max(support as u64);
    }

    fn phase(&mut self, name: &str) -> &mut PhaseCost {
        if !self.phases.contains_key(name) {
            self.phases.insert(name.to_string(), PhaseCost::default());
        }
        self.phases.get_mut(name).expect("phase inserted above")
    }

    /// Sums counters and takes the maximum support. Associative and commutative.
    pub fn merge(&mut self, other: &CostLedger) {
        self.flops += other.flops;
        self.entries_computed += other.entries_computed;
        self.max_support = self.max_support.max(other.max_support);
        for (name, cost) in &other.phases {
            self.phase(name).merge(cost);
        }
    }

    pub fn merged(mut self, other: &CostLedger) -> CostLedger {
        self.merge(other);
        self
    }

    pub fn phase_flops(&self, name: &str) -> u64 {
        self.phases.get(name).map_or(0, |p| p.flops)
    }
}
