use std::collections::hash_map::DefaultHasher;
use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use super::InboundEnvelope;

/// Unbounded FIFO with a blocking `pop`. After `close`, pushes are refused
/// and `pop` keeps returning queued items until the queue is empty.
#[derive(Debug)]
pub struct BlockingFifo<T> {
    state: Mutex<FifoState<T>>,
    ready: Condvar,
}

#[derive(Debug)]
struct FifoState<T> {
    items: VecDeque<T>,
    closed: bool,
}

impl<T> Default for BlockingFifo<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> BlockingFifo<T> {
    pub fn new() -> Self {
        BlockingFifo {
            state: Mutex::new(FifoState {
                items: VecDeque::new(),
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    /// Never blocks on capacity. Hands the item back if the queue is closed.
    pub fn push(&self, item: T) -> Result<(), T> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if state.closed {
            return Err(item);
        }
        state.items.push_back(item);
        drop(state);
        self.ready.notify_one();
        Ok(())
    }

    /// Blocks until an item is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(item) = state.items.pop_front() {
                return Some(item);
            }
            if state.closed {
                return None;
            }
            state = self.ready.wait(state).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The general inbound queue shared by all vehicle workers.
///
/// In shared mode there is one lane that every dispatcher consumes. In
/// sticky mode there is one lane per dispatcher and a vehicle always maps to
/// the same lane, so its messages are handled in wire order.
#[derive(Debug)]
pub struct GlobalQueue {
    lanes: Vec<BlockingFifo<InboundEnvelope>>,
    next_sequence: AtomicU64,
}

impl GlobalQueue {
    pub fn shared() -> Self {
        Self::with_lanes(1)
    }

    pub fn sticky(lanes: usize) -> Self {
        Self::with_lanes(lanes.max(1))
    }

    fn with_lanes(n: usize) -> Self {
        GlobalQueue {
            lanes: (0..n).map(|_| BlockingFifo::new()).collect(),
            next_sequence: AtomicU64::new(0),
        }
    }

    pub fn lane_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn lane_for(&self, vehicle_id: &str) -> usize {
        if self.lanes.len() == 1 {
            return 0;
        }
        let mut h = DefaultHasher::new();
        vehicle_id.hash(&mut h);
        (h.finish() % self.lanes.len() as u64) as usize
    }

    /// Stamps `envelope.sequence` in queue order and appends it. Returns the
    /// envelope if the queue has been closed.
    pub fn push(&self, mut envelope: InboundEnvelope) -> Result<u64, InboundEnvelope> {
        let lane = &self.lanes[self.lane_for(&envelope.vehicle_id)];
        let mut state = lane.state.lock().unwrap_or_else(|e| e.into_inner());
        if state.closed {
            return Err(envelope);
        }
        // stamped under the lane lock so sequence order equals queue order
        let seq = self.next_sequence.fetch_add(1, Ordering::Relaxed);
        envelope.sequence = seq;
        state.items.push_back(envelope);
        drop(state);
        lane.ready.notify_one();
        Ok(seq)
    }

    pub fn pop(&self, lane: usize) -> Option<InboundEnvelope> {
        self.lanes[lane % self.lanes.len()].pop()
    }

    pub fn close(&self) {
        for lane in &self.lanes {
            lane.close();
        }
    }

    pub fn len(&self) -> usize {
        self.lanes.iter().map(BlockingFifo::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
