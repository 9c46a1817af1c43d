//! Scripted loss, duplication and delay on the send path.

use std::time::Duration;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// Drop the first `n` transmissions of every reliable message.
    pub drop_first_n: u32,
    /// Send every transmitted datagram twice.
    pub duplicate: bool,
    /// Extra latency before each transmission.
    pub delay: Duration,
}

impl FaultPlan {
    pub fn drop_first(n: u32) -> Self {
        Self {
            drop_first_n: n,
            ..Self::default()
        }
    }

    /// Whether transmission number `attempt` (1-based) is lost.
    pub fn drops(&self, attempt: u32) -> bool {
        attempt <= self.drop_first_n
    }

    pub fn copies(&self) -> usize {
        if self.duplicate {
            2
        } else {
            1
        }
    }
}
