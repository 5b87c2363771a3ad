use std::collections::{BTreeMap, VecDeque};

use super::EngineError;

pub const RATE_WINDOW: usize = 60;

#[derive(Debug, Clone, Default, PartialEq)]
struct Window {
    recent: VecDeque<bool>,
    detected: usize,
    frames_seen: u64,
}

/// Per-object detection history over the last 60 frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionRateTracker {
    objects: BTreeMap<u32, Window>,
}

impl DetectionRateTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_objects(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut t = Self::new();
        for id in ids {
            t.register(id);
        }
        t
    }

    /// Idempotent; history of an already known object is kept.
    pub fn register(&mut self, id: u32) {
        self.objects.entry(id).or_insert_with(|| Window {
            recent: VecDeque::with_capacity(RATE_WINDOW),
            ..Window::default()
        });
    }

    /// Drops objects not in `ids` and registers the new ones.
    pub fn retain_objects(&mut self, ids: &[u32]) {
        self.objects.retain(|id, _| ids.contains(id));
        for &id in ids {
            self.register(id);
        }
    }

    pub fn record(&mut self, id: u32, detected: bool) -> Result<(), EngineError> {
        let w = self
            .objects
            .get_mut(&id)
            .ok_or(EngineError::UnknownObject(id))?;
        if w.recent.len() == RATE_WINDOW && w.recent.pop_front() == Some(true) {
            w.detected -= 1;
        }
        w.recent.push_back(detected);
        if detected {
            w.detected += 1;
        }
        w.frames_seen += 1;
        Ok(())
    }

    /// Detections over `min(frames_seen, 60)`; 0 before the first frame.
    pub fn rate(&self, id: u32) -> Result<f64, EngineError> {
        let w = self.objects.get(&id).ok_or(EngineError::UnknownObject(id))?;
        if w.recent.is_empty() {
            return Ok(0.0);
        }
        Ok(w.detected as f64 / w.recent.len() as f64)
    }

    pub fn frames_seen(&self, id: u32) -> Result<u64, EngineError> {
        Ok(self
            .objects
            .get(&id)
            .ok_or(EngineError::UnknownObject(id))?
            .frames_seen)
    }

    pub fn object_ids(&self) -> Vec<u32> {
        self.objects.keys().copied().collect()
    }

    /// `(object_id, rate)` for every known object, by id.
    pub fn rates(&self) -> Vec<(u32, f64)> {
        self.objects
            .keys()
            .map(|&id| (id, self.rate(id).unwrap_or(0.0)))
            .collect()
    }
}

/// Detection rate computed from scratch over a full history.
pub fn brute_force_rate(history: &[bool]) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let tail = &history[history.len().saturating_sub(RATE_WINDOW)..];
    tail.iter().filter(|d| **d).count() as f64 / tail.len() as f64
}
