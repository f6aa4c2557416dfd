use std::collections::VecDeque;

use super::{JointVec, MAX_ACTION_DELAY};

/// Time-stamped history of issued joint targets, trimmed to the longest
/// supported delay.
#[derive(Clone, Debug, Default)]
pub struct ActionDelayBuffer {
    entries: VecDeque<(f64, JointVec)>,
}

impl ActionDelayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears the history so that every past query returns `targets`.
    pub fn reset(&mut self, time: f64, targets: JointVec) {
        self.entries.clear();
        self.entries.push_back((time, targets));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, time: f64, targets: JointVec) {
        while self.entries.back().is_some_and(|&(t, _)| t >= time) {
            self.entries.pop_back();
        }
        self.entries.push_back((time, targets));
        let horizon = time - MAX_ACTION_DELAY - 1e-9;
        while self.entries.len() > 1 && self.entries[1].0 <= horizon {
            self.entries.pop_front();
        }
    }

    /// Targets in effect at `time`, interpolated between samples.
    pub fn query(&self, time: f64) -> Option<JointVec> {
        let (first_t, first) = self.entries.front()?;
        if time <= *first_t {
            return Some(*first);
        }
        for pair in self.entries.iter().zip(self.entries.iter().skip(1)) {
            let ((t0, a), (t1, b)) = pair;
            if time <= *t1 {
                let w = (time - t0) / (t1 - t0);
                return Some(a + (b - a) * w);
            }
        }
        self.entries.back().map(|(_, v)| *v)
    }
}

/// Records `new_targets` at `now` and returns the targets issued `delay`
/// seconds earlier.
pub fn apply_action_delay(
    buffer: &mut ActionDelayBuffer,
    now: f64,
    new_targets: &JointVec,
    delay: f64,
) -> JointVec {
    buffer.push(now, *new_targets);
    if delay <= 0.0 {
        return *new_targets;
    }
    buffer.query(now - delay).unwrap_or(*new_targets)
}
