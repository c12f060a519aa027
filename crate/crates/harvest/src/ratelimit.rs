use std::time::{Duration, Instant};

/// Classic token bucket: holds up to `capacity` tokens, refilled at `rate`
/// tokens per second.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    capacity: f64,
    rate: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    /// Starts full. `rate` must be positive and `capacity` at least 1.
    pub fn new(rate: f64, capacity: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        let capacity = capacity.max(1.0);
        TokenBucket { capacity, rate, tokens: capacity, last: Instant::now() }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    fn refill(&mut self, now: Instant) {
        let dt = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + dt * self.rate).min(self.capacity);
        self.last = now;
    }

    /// Takes a token, or reports how long until one is available.
    pub fn try_acquire_at(&mut self, now: Instant) -> Result<(), Duration> {
        self.refill(now);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - self.tokens) / self.rate))
        }
    }

    pub fn try_acquire(&mut self) -> Result<(), Duration> {
        self.try_acquire_at(Instant::now())
    }
}
