use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

use crate::registry::Registry;

use super::BufferMode;

/// A buffering scheme for streaming inference.
pub trait BufferStrategy: Send + Sync {
    fn mode(&self) -> BufferMode;

    /// Fresh buffer for one stream.
    fn open(&self, window: usize) -> Box<dyn FrameBuffer>;
}

/// Per-stream buffer state. Rows are pushed once each, in frame order.
pub trait FrameBuffer {
    /// Adds the next frame. Returns true once the window is full and a
    /// decision can be made for this frame.
    fn push(&mut self, row: &[f64]) -> bool;

    /// Most recently pushed row.
    fn newest(&self) -> Option<&[f64]>;

    /// Rows currently held.
    fn buffered(&self) -> usize;

    /// Frames passed through the per-frame encoder so far.
    fn encoded_frames(&self) -> u64;
}

struct RowQueue {
    window: usize,
    rows: VecDeque<Vec<f64>>,
}

impl RowQueue {
    fn new(window: usize) -> Self {
        Self { window, rows: VecDeque::with_capacity(window) }
    }

    fn push(&mut self, row: &[f64]) {
        if self.rows.len() == self.window {
            // reuse the evicted allocation
            let mut slot = self.rows.pop_front().expect("window is non-empty");
            slot.clear();
            slot.extend_from_slice(row);
            self.rows.push_back(slot);
        } else {
            self.rows.push_back(row.to_vec());
        }
    }

    fn is_full(&self) -> bool {
        self.rows.len() == self.window
    }
}

/// Each frame is encoded once on arrival and its features are queued; the
/// oldest entry is dropped when the window is full.
pub struct FeatureQueue;

struct FeatureQueueBuffer {
    queue: RowQueue,
    encoded: u64,
}

impl BufferStrategy for FeatureQueue {
    fn mode(&self) -> BufferMode {
        BufferMode::FeatureQueue
    }

    fn open(&self, window: usize) -> Box<dyn FrameBuffer> {
        Box::new(FeatureQueueBuffer { queue: RowQueue::new(window), encoded: 0 })
    }
}

impl FrameBuffer for FeatureQueueBuffer {
    fn push(&mut self, row: &[f64]) -> bool {
        self.queue.push(row);
        self.encoded += 1;
        self.queue.is_full()
    }

    fn newest(&self) -> Option<&[f64]> {
        self.queue.rows.back().map(Vec::as_slice)
    }

    fn buffered(&self) -> usize {
        self.queue.rows.len()
    }

    fn encoded_frames(&self) -> u64 {
        self.encoded
    }
}

/// Raw frames are held until the window is full; every inference then
/// re-encodes the whole clip after sliding it by one frame.
pub struct FullWindowWait;

struct FullWindowBuffer {
    queue: RowQueue,
    encoded: u64,
}

impl BufferStrategy for FullWindowWait {
    fn mode(&self) -> BufferMode {
        BufferMode::FullWindowWait
    }

    fn open(&self, window: usize) -> Box<dyn FrameBuffer> {
        Box::new(FullWindowBuffer { queue: RowQueue::new(window), encoded: 0 })
    }
}

impl FrameBuffer for FullWindowBuffer {
    fn push(&mut self, row: &[f64]) -> bool {
        self.queue.push(row);
        if self.queue.is_full() {
            self.encoded += self.queue.window as u64;
            true
        } else {
            false
        }
    }

    fn newest(&self) -> Option<&[f64]> {
        self.queue.rows.back().map(Vec::as_slice)
    }

    fn buffered(&self) -> usize {
        self.queue.rows.len()
    }

    fn encoded_frames(&self) -> u64 {
        self.encoded
    }
}

/// Registry of the builtin buffering strategies.
///
/// `feature_queue` is also reachable as `queue`, `full_window_wait` as `wait`.
pub fn buffer_strategies() -> &'static Registry<dyn BufferStrategy> {
    static REGISTRY: OnceLock<Registry<dyn BufferStrategy>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn BufferStrategy> = Registry::new("buffer");
        r.register_aliases(&["feature_queue", "queue"], Arc::new(FeatureQueue));
        r.register_aliases(&["full_window_wait", "wait"], Arc::new(FullWindowWait));
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_aliases() {
        let r = buffer_strategies();
        assert_eq!(r.get("wait").unwrap().mode(), BufferMode::FullWindowWait);
        assert_eq!(r.get("full_window_wait").unwrap().mode(), BufferMode::FullWindowWait);
        assert_eq!(r.get("queue").unwrap().mode(), BufferMode::FeatureQueue);
        assert!(r.get("lookahead").is_err());
    }

    #[test]
    fn buffers_never_exceed_window() {
        for strategy in [buffer_strategies().get("queue").unwrap(), buffer_strategies().get("wait").unwrap()]
        {
            let mut b = strategy.open(3);
            let ready: Vec<bool> = (0..6).map(|i| b.push(&[i as f64])).collect();
            assert_eq!(ready, vec![false, false, true, true, true, true]);
            assert_eq!(b.buffered(), 3);
            assert_eq!(b.newest(), Some(&[5.0][..]));
        }
    }

    #[test]
    fn encoding_cost_differs() {
        let mut q = FeatureQueue.open(4);
        let mut w = FullWindowWait.open(4);
        for i in 0..10 {
            q.push(&[i as f64]);
            w.push(&[i as f64]);
        }
        assert_eq!(q.encoded_frames(), 10);
        // 7 inferences, 4 frames each
        assert_eq!(w.encoded_frames(), 28);
    }
}
