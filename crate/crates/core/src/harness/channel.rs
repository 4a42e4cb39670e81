//! Delayed FIFO link and a latest-wins rate limiter, both on the simulated
//! microsecond clock.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Micros = u64;

pub fn micros(seconds: f64) -> Micros {
    (seconds * 1e6).round() as Micros
}

pub fn seconds(t: Micros) -> f64 {
    t as f64 * 1e-6
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// One-way latency (seconds).
    pub latency: f64,
    /// Uniform extra delay in [0, jitter] (seconds).
    pub jitter: f64,
    /// Maximum send rate (Hz); excess messages wait for the next slot.
    pub rate_cap: f64,
    /// Drop probability. Defaults to 0.
    pub loss: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { latency: 0.0, jitter: 0.0, rate_cap: 1000.0, loss: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    pub seq: u64,
    pub sent_at: Micros,
    pub deliver_at: Micros,
    pub msg: T,
}

#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    latency: Micros,
    jitter: Micros,
    min_gap: Micros,
    loss: f64,
    rng: ChaCha8Rng,
    queue: VecDeque<Envelope<T>>,
    last_slot: Option<Micros>,
    last_delivery: Micros,
    seq: u64,
    dropped: u64,
}

impl<T> DelayChannel<T> {
    pub fn new(p: &ChannelParams, seed: u64) -> Self {
        DelayChannel {
            latency: micros(p.latency),
            jitter: micros(p.jitter),
            min_gap: if p.rate_cap.is_finite() && p.rate_cap > 0.0 { (1e6 / p.rate_cap).ceil() as Micros } else { 0 },
            loss: p.loss,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            last_slot: None,
            last_delivery: 0,
            seq: 0,
            dropped: 0,
        }
    }

    /// Queues `msg`; returns its delivery time, or `None` if it was lost.
    /// Delivery = max(previous delivery, slot + latency + jitter).
    pub fn send(&mut self, now: Micros, msg: T) -> Option<Micros> {
        let slot = match self.last_slot {
            Some(prev) => now.max(prev + self.min_gap),
            None => now,
        };
        self.last_slot = Some(slot);
        let seq = self.seq;
        self.seq += 1;
        if self.loss > 0.0 && self.rng.gen_bool(self.loss.min(1.0)) {
            self.dropped += 1;
            return None;
        }
        let jitter = if self.jitter > 0 { self.rng.gen_range(0..=self.jitter) } else { 0 };
        let deliver_at = self.last_delivery.max(slot + self.latency + jitter);
        self.last_delivery = deliver_at;
        self.queue.push_back(Envelope { seq, sent_at: now, deliver_at, msg });
        Some(deliver_at)
    }

    /// Messages due by `now`, in send order.
    pub fn deliver(&mut self, now: Micros) -> Vec<Envelope<T>> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|e| e.deliver_at <= now) {
            out.push(self.queue.pop_front().expect("non-empty"));
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn sent(&self) -> u64 {
        self.seq
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Applies at most one value per `min_gap`; values offered in between
/// replace each other and the newest is applied when the slot opens.
#[derive(Debug, Clone)]
pub struct RateLimiter<T> {
    min_gap: Micros,
    last: Option<Micros>,
    pending: Option<T>,
}

impl<T> RateLimiter<T> {
    pub fn new(rate_hz: f64) -> Self {
        RateLimiter { min_gap: (1e6 / rate_hz).ceil() as Micros, last: None, pending: None }
    }

    fn open(&self, now: Micros) -> bool {
        self.last.map_or(true, |l| now >= l + self.min_gap)
    }

    pub fn offer(&mut self, now: Micros, v: T) -> Option<T> {
        if self.open(now) {
            self.last = Some(now);
            self.pending = None;
            Some(v)
        } else {
            self.pending = Some(v);
            None
        }
    }

    pub fn poll(&mut self, now: Micros) -> Option<T> {
        if self.pending.is_some() && self.open(now) {
            self.last = Some(now);
            self.pending.take()
        } else {
            None
        }
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }
}
