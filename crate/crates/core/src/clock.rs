//! Time sources for campaigns and the scheduler budget.
//!
//! Real fuzzers run against [`WallClock`]. Replayed stub campaigns run against
//! [`VirtualClock`], where `sleep` advances time instantly, so a one-hour
//! budget costs nothing and every timestamp is reproducible.

use std::sync::Mutex;
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Seconds since the clock was created.
    fn now(&self) -> f64;
    fn sleep(&self, secs: f64);
}

#[derive(Debug)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep(&self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<f64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, secs: f64) {
        let mut now = self.now.lock().unwrap();
        *now += secs.max(0.0);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> f64 {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, secs: f64) {
        self.advance(secs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_advances_only_on_sleep() {
        let clock = VirtualClock::new();
        assert_eq!(clock.now(), 0.0);
        clock.sleep(10.0);
        clock.sleep(2.5);
        assert_eq!(clock.now(), 12.5);
        clock.sleep(-4.0);
        assert_eq!(clock.now(), 12.5);
    }
}
