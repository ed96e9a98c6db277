//! Reservoir policies behind a common interface, so the engine can swap the
//! damped reservoir for the comparison samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adr::AdaptableDampedReservoir;
use crate::query::{Period, SamplingPolicy};

/// Values that can be averaged for the time-average policy.
pub trait Averageable: Clone + Send + 'static {
    fn accumulate(acc: &mut Option<Self>, x: &Self);
    fn divide(self, n: f64) -> Self;
}

impl Averageable for f64 {
    fn accumulate(acc: &mut Option<Self>, x: &Self) {
        *acc = Some(acc.unwrap_or(0.0) + x);
    }

    fn divide(self, n: f64) -> Self {
        self / n
    }
}

impl Averageable for Vec<f64> {
    fn accumulate(acc: &mut Option<Self>, x: &Self) {
        match acc {
            Some(a) => a.iter_mut().zip(x).for_each(|(a, b)| *a += b),
            None => *acc = Some(x.clone()),
        }
    }

    fn divide(mut self, n: f64) -> Self {
        self.iter_mut().for_each(|v| *v /= n);
        self
    }
}

pub trait Sampler<T>: Send {
    /// Offers one item; `now` is the item's event time in seconds.
    fn observe(&mut self, x: T, now: f64);
    /// Decay boundary.
    fn tick(&mut self);
    fn sample(&self) -> &[T];
}

pub struct AdrSampler<T> {
    adr: AdaptableDampedReservoir<T>,
}

impl<T: Send> AdrSampler<T> {
    pub fn new(capacity: usize, retention: f64, seed: u64) -> Self {
        Self {
            adr: AdaptableDampedReservoir::new(capacity, retention, seed),
        }
    }

    pub fn reservoir(&self) -> &AdaptableDampedReservoir<T> {
        &self.adr
    }
}

impl<T: Send> Sampler<T> for AdrSampler<T> {
    fn observe(&mut self, x: T, _now: f64) {
        self.adr.observe(x, 1.0).expect("unit weight");
    }

    fn tick(&mut self) {
        self.adr.decay();
    }

    fn sample(&self) -> &[T] {
        self.adr.items()
    }
}

/// Classic Algorithm R uniform reservoir.
#[derive(Debug, Clone)]
pub struct UniformReservoir<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
    rng: ChaCha8Rng,
}

impl<T> UniformReservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: Vec::new(),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn insert(&mut self, x: T) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(x);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = x;
            }
        }
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, T> {
        self.seen = 0;
        self.items.drain(..)
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }
}

impl<T: Send> Sampler<T> for UniformReservoir<T> {
    fn observe(&mut self, x: T, _now: f64) {
        self.insert(x);
    }

    fn tick(&mut self) {}

    fn sample(&self) -> &[T] {
        &self.items
    }
}

/// Uniform sample of the current period, folded into the damped reservoir
/// at each tick. Bursts within a period cannot contribute more than
/// `period_sample_size` items.
pub struct PerPeriodSampler<T> {
    adr: AdaptableDampedReservoir<T>,
    period: UniformReservoir<T>,
}

impl<T: Send> PerPeriodSampler<T> {
    pub fn new(capacity: usize, period_sample_size: usize, retention: f64, seed: u64) -> Self {
        Self {
            adr: AdaptableDampedReservoir::new(capacity, retention, seed),
            period: UniformReservoir::new(period_sample_size, seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn period_len(&self) -> usize {
        self.period.items().len()
    }
}

impl<T: Send> Sampler<T> for PerPeriodSampler<T> {
    fn observe(&mut self, x: T, _now: f64) {
        self.period.insert(x);
    }

    fn tick(&mut self) {
        for x in self.period.drain() {
            self.adr.observe(x, 1.0).expect("unit weight");
        }
        self.adr.decay();
    }

    fn sample(&self) -> &[T] {
        self.adr.items()
    }
}

/// Each sub-period's mean enters the damped reservoir as one observation.
pub struct TimeAverageSampler<T> {
    adr: AdaptableDampedReservoir<T>,
    subperiod: Period,
    acc: Option<T>,
    n: u64,
    boundary: Option<f64>,
}

impl<T: Averageable> TimeAverageSampler<T> {
    pub fn new(capacity: usize, subperiod: Period, retention: f64, seed: u64) -> Self {
        Self {
            adr: AdaptableDampedReservoir::new(capacity, retention, seed),
            subperiod,
            acc: None,
            n: 0,
            boundary: None,
        }
    }

    fn flush(&mut self) {
        if let Some(sum) = self.acc.take() {
            let mean = sum.divide(self.n as f64);
            self.adr.observe(mean, 1.0).expect("unit weight");
        }
        self.n = 0;
    }
}

impl<T: Averageable> Sampler<T> for TimeAverageSampler<T> {
    fn observe(&mut self, x: T, now: f64) {
        if let Period::Seconds(len) = self.subperiod {
            let boundary = *self.boundary.get_or_insert(now + len);
            if now >= boundary {
                self.flush();
                let skipped = ((now - boundary) / len).floor();
                self.boundary = Some(boundary + (skipped + 1.0) * len);
            }
        }
        T::accumulate(&mut self.acc, &x);
        self.n += 1;
        if let Period::Tuples(len) = self.subperiod {
            if self.n >= len {
                self.flush();
            }
        }
    }

    fn tick(&mut self) {
        self.adr.decay();
    }

    fn sample(&self) -> &[T] {
        self.adr.items()
    }
}

/// Per-tuple exponentially biased reservoir: every arrival is stored and
/// overwrites a random slot with probability equal to the fill fraction,
/// so the sample's memory is about `capacity` tuples regardless of time.
pub struct PerTupleDecaySampler<T> {
    capacity: usize,
    items: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T> PerTupleDecaySampler<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<T: Send> Sampler<T> for PerTupleDecaySampler<T> {
    fn observe(&mut self, x: T, _now: f64) {
        let fill = self.items.len() as f64 / self.capacity as f64;
        if self.rng.random::<f64>() < fill {
            let slot = self.rng.random_range(0..self.items.len());
            self.items[slot] = x;
        } else {
            self.items.push(x);
        }
    }

    fn tick(&mut self) {}

    fn sample(&self) -> &[T] {
        &self.items
    }
}

pub fn build_sampler<T: Averageable>(
    policy: &SamplingPolicy,
    capacity: usize,
    retention: f64,
    seed: u64,
) -> Box<dyn Sampler<T>> {
    match *policy {
        SamplingPolicy::Adr => Box::new(AdrSampler::new(capacity, retention, seed)),
        SamplingPolicy::PerPeriod { period_sample_size } => Box::new(PerPeriodSampler::new(
            capacity,
            period_sample_size,
            retention,
            seed,
        )),
        SamplingPolicy::TimeAverage { subperiod } => {
            Box::new(TimeAverageSampler::new(capacity, subperiod, retention, seed))
        }
        SamplingPolicy::PerTupleDecay => Box::new(PerTupleDecaySampler::new(capacity, seed)),
        SamplingPolicy::Uniform => Box::new(UniformReservoir::new(capacity, seed)),
    }
}
