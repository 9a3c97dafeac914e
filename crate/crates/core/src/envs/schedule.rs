use rand::Rng;

use crate::error::{Error, Result};

/// Arrival and departure rounds for every entity (agents or targets).
///
/// Base entities are present for the whole horizon `[0, T)`; extras arrive
/// inside an early window and stay at least the minimum lifespan (unless the
/// horizon ends first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenSchedule {
    pub horizon: usize,
    /// `(arrival, departure)`; active on rounds `arrival <= t < departure`.
    pub spans: Vec<(usize, usize)>,
    pub min_lifespan: usize,
}

impl OpenSchedule {
    /// Every entity present throughout.
    pub fn closed(horizon: usize, count: usize) -> Self {
        Self {
            horizon,
            spans: vec![(0, horizon); count],
            min_lifespan: horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn is_active(&self, entity: usize, t: usize) -> bool {
        let (a, d) = self.spans[entity];
        a <= t && t < d
    }

    pub fn active(&self, t: usize) -> Vec<usize> {
        (0..self.spans.len()).filter(|&e| self.is_active(e, t)).collect()
    }

    pub fn max_active(&self) -> usize {
        (0..self.horizon).map(|t| self.active(t).len()).max().unwrap_or(0)
    }
}

/// Samples an open-system schedule.
///
/// Extras arrive uniformly in rounds `[1, window_fraction·T]` and live
/// `max(min_lifespan, residual)` rounds with residual uniform in
/// `[1, T − arrival]`, capped at the horizon.
pub fn open_schedule<R: Rng + ?Sized>(
    horizon: usize,
    base_count: usize,
    extra_count: usize,
    min_lifespan: usize,
    window_fraction: f64,
    rng: &mut R,
) -> Result<OpenSchedule> {
    if extra_count > 0 {
        if horizon <= min_lifespan {
            return Err(Error::Config(format!(
                "horizon {horizon} must exceed the minimum lifespan {min_lifespan}"
            )));
        }
        if !(window_fraction > 0.0 && window_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "arrival window fraction {window_fraction} must lie in (0, 1]"
            )));
        }
    }
    let last_arrival = ((window_fraction * horizon as f64).floor() as usize).max(1);
    if extra_count > 0 && last_arrival + min_lifespan > horizon {
        return Err(Error::Config(format!(
            "arrivals up to round {last_arrival} cannot live {min_lifespan} rounds within {horizon}"
        )));
    }
    let mut spans = vec![(0, horizon); base_count];
    for _ in 0..extra_count {
        let arrival = rng.random_range(1..=last_arrival);
        let residual = rng.random_range(1..=horizon - arrival);
        let departure = (arrival + min_lifespan.max(residual)).min(horizon);
        spans.push((arrival, departure));
    }
    Ok(OpenSchedule {
        horizon,
        spans,
        min_lifespan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn no_extras_is_closed() {
        let mut rng = seeded(0);
        let s = open_schedule(100, 3, 0, 20, 0.5, &mut rng).unwrap();
        assert_eq!(s, OpenSchedule { horizon: 100, spans: vec![(0, 100); 3], min_lifespan: 20 });
        assert_eq!(s.spans, OpenSchedule::closed(100, 3).spans);
    }

    #[test]
    fn long_horizon_lifespans() {
        for seed in 0..20 {
            let mut rng = seeded(seed);
            let s = open_schedule(2500, 4, 8, 400, 0.75, &mut rng).unwrap();
            for &(a, d) in &s.spans[4..] {
                assert!((1..=1875).contains(&a));
                assert!(d - a >= 400, "lifespan {}", d - a);
                assert!(d <= 2500);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = open_schedule(200, 2, 3, 20, 0.5, &mut seeded(9)).unwrap();
        let b = open_schedule(200, 2, 3, 20, 0.5, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.active(0), vec![0, 1]);
    }

    #[test]
    fn contradictions_are_config_errors() {
        let mut rng = seeded(1);
        assert!(open_schedule(100, 1, 1, 100, 0.5, &mut rng).is_err());
        assert!(open_schedule(100, 1, 1, 60, 0.5, &mut rng).is_err());
        assert!(open_schedule(100, 1, 1, 10, 0.0, &mut rng).is_err());
    }
}
