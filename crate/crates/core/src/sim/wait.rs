//! Virtual and offered waiting times by FCFS replay of a finished record.
//!
//! A hypothetical customer placed at queue position `p` (real customers
//! with smaller ids are ahead of it, larger ids behind) that is infinitely
//! patient and never occupies a server would enter service at the first
//! instant `s ≥ τ` at which either a server is idle or a customer behind
//! it enters service, where `τ` is the last service entry of a customer
//! ahead of it. Abandonments of customers ahead are already reflected in
//! the recorded entries, so no further bookkeeping is needed.

use serde::{Deserialize, Serialize};

use super::record::{Outcome, SimRecord};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wait {
    Exact(f64),
    /// Not determined by the events up to the horizon.
    Truncated,
}

impl Wait {
    pub fn value(self) -> Option<f64> {
        match self {
            Wait::Exact(w) => Some(w),
            Wait::Truncated => None,
        }
    }

    pub fn is_truncated(self) -> bool {
        matches!(self, Wait::Truncated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfferedWait {
    pub id: i64,
    pub wait: Wait,
}

struct Replay {
    /// Ids of customers that entered service (at or after 0), ascending;
    /// FCFS makes their entry epochs ascending too.
    served_ids: Vec<i64>,
    served_starts: Vec<f64>,
    /// Smallest id still waiting at the horizon.
    first_unresolved: Option<i64>,
    /// Arrival epochs of customers 1, 2, ...
    arrivals: Vec<f64>,
    /// Breakpoints of the busy-server path at which it drops below `N`.
    idle_from: Vec<f64>,
    busy_times: Vec<f64>,
    busy_values: Vec<f64>,
    servers: f64,
    horizon: f64,
}

impl Replay {
    fn new(record: &SimRecord) -> Self {
        let mut served_ids = Vec::new();
        let mut served_starts = Vec::new();
        let mut first_unresolved = None;
        let mut arrivals = Vec::new();
        for c in &record.customers {
            if let Some(s) = c.start {
                served_ids.push(c.id);
                served_starts.push(s);
            }
            if c.outcome == Outcome::Waiting && first_unresolved.is_none() {
                first_unresolved = Some(c.id);
            }
            if c.id >= 1 {
                arrivals.push(c.arrival);
            }
        }
        let busy = record.busy();
        let servers = record.servers() as f64;
        let idle_from = busy
            .times()
            .iter()
            .zip(busy.values())
            .filter(|(_, &v)| v < servers)
            .map(|(&t, _)| t)
            .collect();
        Replay {
            served_ids,
            served_starts,
            first_unresolved,
            arrivals,
            idle_from,
            busy_times: busy.times().to_vec(),
            busy_values: busy.values().to_vec(),
            servers,
            horizon: record.horizon(),
        }
    }

    fn busy_at(&self, t: f64) -> f64 {
        let k = self.busy_times.partition_point(|&s| s <= t).saturating_sub(1);
        self.busy_values[k]
    }

    /// First `s ≥ tau` with an idle server.
    fn first_idle(&self, tau: f64) -> Option<f64> {
        if self.busy_at(tau) < self.servers {
            return Some(tau);
        }
        let k = self.idle_from.partition_point(|&s| s <= tau);
        self.idle_from.get(k).copied()
    }

    /// Entry epoch of a hypothetical customer at position `p` present from
    /// time `t`.
    fn entry(&self, p: f64, t: f64) -> Option<f64> {
        if let Some(u) = self.first_unresolved {
            if (u as f64) < p {
                return None;
            }
        }
        let ahead = self.served_ids.partition_point(|&id| (id as f64) < p);
        let tau = if ahead > 0 {
            self.served_starts[ahead - 1].max(t)
        } else {
            t
        };
        let behind = self.served_ids.partition_point(|&id| (id as f64) <= p);
        let by_overtake = self.served_starts.get(behind).copied();
        let by_idle = self.first_idle(tau);
        match (by_overtake, by_idle) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
        .filter(|&s| s <= self.horizon)
    }

    fn virtual_wait(&self, t: f64) -> Wait {
        let arrived = self.arrivals.partition_point(|&a| a <= t);
        match self.entry(arrived as f64 + 0.5, t) {
            Some(s) => Wait::Exact(s - t),
            None => Wait::Truncated,
        }
    }
}

fn check_time(record: &SimRecord, t: f64) -> Result<(), SimError> {
    if !(0.0..=record.horizon()).contains(&t) {
        return Err(SimError::OutOfRange {
            t,
            horizon: record.horizon(),
        });
    }
    Ok(())
}

/// `ω(t)`: the wait of an infinitely patient customer arriving at `t`
/// (after any real arrival at `t`).
pub fn virtual_wait(record: &SimRecord, t: f64) -> Result<Wait, SimError> {
    check_time(record, t)?;
    Ok(Replay::new(record).virtual_wait(t))
}

/// `ω(t)` on every point of `grid`, sharing one replay index.
pub fn virtual_waits(record: &SimRecord, grid: &[f64]) -> Result<Vec<Wait>, SimError> {
    for &t in grid {
        check_time(record, t)?;
    }
    let replay = Replay::new(record);
    Ok(grid.iter().map(|&t| replay.virtual_wait(t)).collect())
}

/// Offered waits `ω_i` of the customers queued at time 0 (remaining
/// waits) and of every arrival. Abandoning customers get the wait they
/// would have had, with everyone else's actual behaviour unchanged.
pub fn offered_waits(record: &SimRecord) -> Vec<OfferedWait> {
    let replay = Replay::new(record);
    let first = -(record.meta.initial_queue as i64) + 1;
    record
        .customers
        .iter()
        .filter(|c| c.id >= first)
        .map(|c| {
            let wait = match (c.outcome, c.start) {
                (_, Some(s)) => Wait::Exact(s - c.arrival),
                (Outcome::Abandoned, None) => match replay.entry(c.id as f64, c.arrival) {
                    Some(s) => Wait::Exact(s - c.arrival),
                    None => Wait::Truncated,
                },
                _ => Wait::Truncated,
            };
            OfferedWait { id: c.id, wait }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{Distribution, PatienceSpec, StreamSet};
    use crate::sim::{simulate, InitialCount, InitialService, QueueModel};

    fn single_server(residual: f64, horizon: f64) -> QueueModel {
        QueueModel {
            servers: 1,
            interarrival: None,
            service: Distribution::exponential(1.0).unwrap(),
            initial_service: InitialService::Law(Distribution::deterministic(residual).unwrap()),
            patience: None,
            initial: InitialCount::Count(1),
            horizon,
        }
    }

    #[test]
    fn one_ahead_in_service() {
        let rec = simulate(&single_server(1.7, 5.0), &mut StreamSet::new(0, 0)).unwrap();
        assert_eq!(virtual_wait(&rec, 0.0).unwrap(), Wait::Exact(1.7));
        let w = virtual_wait(&rec, 0.5).unwrap().value().unwrap();
        assert!((w - 1.2).abs() < 1e-12);
        assert_eq!(virtual_wait(&rec, 2.0).unwrap(), Wait::Exact(0.0));
    }

    #[test]
    fn horizon_truncation_is_explicit() {
        let rec = simulate(&single_server(7.0, 5.0), &mut StreamSet::new(0, 0)).unwrap();
        assert_eq!(virtual_wait(&rec, 1.0).unwrap(), Wait::Truncated);
        assert!(virtual_wait(&rec, 6.0).is_err());
    }

    #[test]
    fn deterministic_single_server_offered_waits() {
        let model = |v: f64| {
            QueueModel::plain(
                1,
                Distribution::deterministic(1.0).unwrap(),
                Distribution::deterministic(v).unwrap(),
                40.0,
            )
        };
        let rec = simulate(&model(0.6), &mut StreamSet::new(0, 0)).unwrap();
        assert!(offered_waits(&rec)
            .iter()
            .all(|w| w.wait == Wait::Exact(0.0)));

        let rec = simulate(&model(1.4), &mut StreamSet::new(0, 0)).unwrap();
        let waits = offered_waits(&rec);
        // Lindley: w_{i+1} = (w_i + v − a)⁺
        let mut lindley = 0.0_f64;
        for w in &waits {
            match w.wait {
                Wait::Exact(x) => {
                    assert!((x - 0.4 * (w.id - 1) as f64).abs() < 1e-9);
                    assert!((x - lindley).abs() < 1e-9);
                }
                Wait::Truncated => assert!(rec.customer(w.id).unwrap().start.is_none()),
            }
            lindley = (lindley + 1.4 - 1.0).max(0.0);
        }
    }

    #[test]
    fn abandoning_customer_gets_replayed_wait() {
        // server busy until 3 by customer 1 (service 2.0, arrives 1);
        // customer 2 arrives at 2 with patience 0.5, so would have waited 1.
        let model = QueueModel {
            patience: Some(
                PatienceSpec::no_scaling(Distribution::deterministic(0.5).unwrap())
                    .law_for(1)
                    .unwrap(),
            ),
            ..QueueModel::plain(
                1,
                Distribution::deterministic(1.0).unwrap(),
                Distribution::deterministic(2.0).unwrap(),
                10.0,
            )
        };
        let rec = simulate(&model, &mut StreamSet::new(0, 0)).unwrap();
        assert_eq!(rec.customer(2).unwrap().outcome, Outcome::Abandoned);
        let w2 = offered_waits(&rec).into_iter().find(|w| w.id == 2).unwrap();
        assert!((w2.wait.value().unwrap() - 1.0).abs() < 1e-12);
        // virtual wait at 2.2 (customer 2 ahead, abandons at 2.5): server at 3
        let v = virtual_wait(&rec, 2.2).unwrap().value().unwrap();
        assert!((v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn free_server_means_zero_wait() {
        let model = QueueModel::plain(
            4,
            Distribution::exponential(1.0).unwrap(),
            Distribution::exponential(0.5).unwrap(),
            50.0,
        );
        let rec = simulate(&model, &mut StreamSet::new(3, 0)).unwrap();
        let busy = rec.busy();
        let grid: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
        let waits = virtual_waits(&rec, &grid).unwrap();
        for (t, w) in grid.iter().zip(waits) {
            if busy.eval(*t) < 4.0 {
                assert_eq!(w, Wait::Exact(0.0));
            } else if let Wait::Exact(x) = w {
                assert!(x > 0.0);
            }
        }
    }
}
