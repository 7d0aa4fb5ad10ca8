//! Rotation counting and drop detection.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// A full turn; `+1` counter-clockwise, `-1` clockwise.
    Rotation(i8),
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Accumulates unwrapped yaw and emits one event per signed full turn.
#[derive(Clone, Debug, Default)]
pub struct RotationCounter {
    pub accumulated: f64,
}

impl RotationCounter {
    pub fn push(&mut self, d_yaw: f64, out: &mut Vec<i8>) {
        self.accumulated += d_yaw;
        while self.accumulated >= TAU {
            self.accumulated -= TAU;
            out.push(1);
        }
        while self.accumulated <= -TAU {
            self.accumulated += TAU;
            out.push(-1);
        }
    }
}

/// Support-loss and displacement drop rule.
#[derive(Clone, Debug)]
pub struct DropDetector {
    pub drop_distance: f64,
    pub support_timeout: f64,
    unsupported_for: f64,
}

impl DropDetector {
    pub fn new(drop_distance: f64, support_timeout: f64) -> Self {
        Self {
            drop_distance,
            support_timeout,
            unsupported_for: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.unsupported_for = 0.0;
    }

    /// Advances by `dt` seconds and reports whether the object counts as dropped.
    pub fn update(&mut self, n_contacts: usize, center_dist: f64, dt: f64) -> bool {
        if n_contacts < 2 {
            self.unsupported_for += dt;
        } else {
            self.unsupported_for = 0.0;
        }
        let dropped = self.unsupported_for > self.support_timeout || center_dist > self.drop_distance;
        if dropped {
            self.unsupported_for = 0.0;
        }
        dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_turn_emits_signed_event() {
        let mut c = RotationCounter::default();
        let mut ev = Vec::new();
        for _ in 0..100 {
            c.push(TAU / 100.0 * 1.0000001, &mut ev);
        }
        assert_eq!(ev, vec![1]);
        ev.clear();
        let mut c = RotationCounter::default();
        c.push(-TAU - 1e-9, &mut ev);
        assert_eq!(ev, vec![-1]);
    }

    #[test]
    fn back_and_forth_does_not_count() {
        let mut c = RotationCounter::default();
        let mut ev = Vec::new();
        for _ in 0..50 {
            c.push(3.0, &mut ev);
            c.push(-3.0, &mut ev);
        }
        assert!(ev.is_empty());
    }

    #[test]
    fn displacement_and_support_loss_drop() {
        let mut d = DropDetector::new(0.03, 0.25);
        assert!(d.update(4, 0.06, 0.05));
        let mut d = DropDetector::new(0.03, 0.25);
        let hits: Vec<bool> = (0..3).map(|_| d.update(1, 0.0, 0.1)).collect();
        assert_eq!(hits, vec![false, false, true]);
    }
}
