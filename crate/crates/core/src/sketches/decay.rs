use std::time::Instant;

use crate::query::Period;

/// Turns arrivals (and the passage of time) into decay ticks.
///
/// Tuple periods count observations. Time periods use the point's event
/// timestamp when it has one and the wall clock otherwise; a gap spanning
/// several periods yields several ticks.
#[derive(Debug, Clone)]
pub struct DecayDriver {
    period: Period,
    seen: u64,
    boundary: Option<f64>,
    started: Instant,
    ticks: u64,
}

impl DecayDriver {
    pub fn new(period: Period) -> Self {
        Self {
            period,
            seen: 0,
            boundary: None,
            started: Instant::now(),
            ticks: 0,
        }
    }

    pub fn period(&self) -> Period {
        self.period
    }

    /// Records one arrival and returns the number of ticks it completes.
    pub fn observe(&mut self, timestamp: Option<f64>) -> u32 {
        self.seen += 1;
        let n = match self.period {
            Period::Tuples(len) => u32::from(self.seen.is_multiple_of(len)),
            Period::Seconds(_) => {
                let now = timestamp.unwrap_or_else(|| self.wall_clock());
                let len = self.period_secs();
                self.boundary.get_or_insert(now + len);
                self.advance_to(now)
            }
        };
        self.ticks += n as u64;
        n
    }

    /// Ticks owed at time `now` without any arrival. No-op for tuple periods.
    pub fn poll(&mut self, now: f64) -> u32 {
        if let Period::Tuples(_) = self.period {
            return 0;
        }
        let len = self.period_secs();
        self.boundary.get_or_insert(now + len);
        let n = self.advance_to(now);
        self.ticks += n as u64;
        n
    }

    pub fn wall_clock(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    fn period_secs(&self) -> f64 {
        match self.period {
            Period::Seconds(s) => s,
            Period::Tuples(_) => unreachable!(),
        }
    }

    fn advance_to(&mut self, now: f64) -> u32 {
        let len = self.period_secs();
        let boundary = self.boundary.as_mut().expect("initialized");
        let mut n = 0;
        while now >= *boundary {
            *boundary += len;
            n += 1;
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_ticks_exactly_on_period() {
        let mut d = DecayDriver::new(Period::Tuples(100_000));
        for i in 1..=250_000u64 {
            let t = d.observe(None);
            assert_eq!(t == 1, i % 100_000 == 0, "{i}");
        }
        assert_eq!(d.ticks(), 2);
    }

    #[test]
    fn time_ticks_follow_event_time() {
        let mut d = DecayDriver::new(Period::Seconds(1.0));
        assert_eq!(d.observe(Some(10.0)), 0);
        assert_eq!(d.observe(Some(10.5)), 0);
        assert_eq!(d.observe(Some(11.0)), 1);
        assert_eq!(d.observe(Some(14.2)), 3);
        assert_eq!(d.poll(16.0), 2);
        assert_eq!(d.ticks(), 6);
    }

    #[test]
    fn idle_time_still_ticks() {
        let mut d = DecayDriver::new(Period::Seconds(0.5));
        assert_eq!(d.poll(0.0), 0);
        assert_eq!(d.poll(2.0), 4);
    }
}
