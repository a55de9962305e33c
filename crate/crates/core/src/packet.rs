use serde::{Deserialize, Serialize};

pub type NodeId = usize;

/// A data packet travelling from `src` to `dest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub flow: usize,
    pub src: NodeId,
    pub dest: NodeId,
    pub created_at: f64,
    /// Successful hop transfers so far.
    pub hops: u32,
    /// Data transmissions spent on this packet so far, over all hops.
    pub tx_count: u32,
    /// Transmissions spent on the current hop.
    pub hop_attempts: u32,
    /// Times the current holder found no eligible candidates.
    pub stalls: u32,
}

impl Packet {
    pub fn new(id: u64, flow: usize, src: NodeId, dest: NodeId, created_at: f64) -> Self {
        Self {
            id,
            flow,
            src,
            dest,
            created_at,
            hops: 0,
            tx_count: 0,
            hop_attempts: 0,
            stalls: 0,
        }
    }
}
