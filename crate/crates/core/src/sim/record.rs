use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::path::CadlagPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    ServiceStart,
    ServiceEnd,
    Abandonment,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service_start",
            EventKind::ServiceEnd => "service_end",
            EventKind::Abandonment => "abandonment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub customer: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Served,
    Abandoned,
    /// Still in service at the horizon.
    InService,
    /// Still waiting at the horizon.
    Waiting,
}

/// One customer. Ids `−X(0)+1 ..= −Q(0)` are in service at time 0,
/// `−Q(0)+1 ..= 0` are queued at time 0, arrivals are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: i64,
    /// 0 for initial customers.
    pub arrival: f64,
    /// `+∞` for infinitely patient customers.
    pub patience: f64,
    /// Service requirement (remaining requirement for those in service at 0).
    pub service: f64,
    /// Service entry epoch; `None` if the customer never entered service.
    pub start: Option<f64>,
    /// Service completion or abandonment epoch, if within the horizon.
    pub exit: Option<f64>,
    pub outcome: Outcome,
}

impl CustomerRecord {
    pub fn is_initial(&self) -> bool {
        self.id <= 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub seed: u64,
    pub replication: u64,
    pub config_hash: Option<String>,
    pub servers: usize,
    pub horizon: f64,
    /// `X(0)`
    pub initial_count: u64,
    /// `Q(0)`
    pub initial_queue: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub meta: RecordMeta,
    /// Events in processing order; times are nondecreasing.
    pub events: Vec<Event>,
    /// Sorted by id.
    pub customers: Vec<CustomerRecord>,
}

impl SimRecord {
    pub fn horizon(&self) -> f64 {
        self.meta.horizon
    }

    pub fn servers(&self) -> usize {
        self.meta.servers
    }

    pub fn customer(&self, id: i64) -> Option<&CustomerRecord> {
        let offset = self.meta.initial_count as i64 - 1;
        usize::try_from(id + offset)
            .ok()
            .and_then(|i| self.customers.get(i))
    }

    fn epochs(&self, kind: EventKind) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.time)
            .collect()
    }

    /// `E(t)`: arrivals in `(0, t]`.
    pub fn arrivals(&self) -> CadlagPath {
        CadlagPath::counting(&self.epochs(EventKind::Arrival), self.horizon())
    }

    /// `S(t)`: service completions in `(0, t]`.
    pub fn departures(&self) -> CadlagPath {
        CadlagPath::counting(&self.epochs(EventKind::ServiceEnd), self.horizon())
    }

    /// `G(t)`: abandonments in `(0, t]`.
    pub fn abandonments(&self) -> CadlagPath {
        CadlagPath::counting(&self.epochs(EventKind::Abandonment), self.horizon())
    }

    /// `K(t)`: service entries in `(0, t]`.
    pub fn entries(&self) -> CadlagPath {
        CadlagPath::counting(&self.epochs(EventKind::ServiceStart), self.horizon())
    }

    /// `X(t)`: customers in the system.
    pub fn head_count(&self) -> CadlagPath {
        let mut times = vec![0.0];
        let mut values = vec![self.meta.initial_count as f64];
        let mut x = self.meta.initial_count as i64;
        for e in &self.events {
            match e.kind {
                EventKind::Arrival => x += 1,
                EventKind::ServiceEnd | EventKind::Abandonment => x -= 1,
                EventKind::ServiceStart => continue,
            }
            if e.time > *times.last().unwrap() {
                times.push(e.time);
                values.push(x as f64);
            } else {
                *values.last_mut().unwrap() = x as f64;
            }
        }
        CadlagPath::step(times, values, self.horizon()).expect("event times are ordered")
    }

    /// `Q(t) = (X(t) − N)⁺`
    pub fn queue_length(&self) -> CadlagPath {
        let n = self.servers() as f64;
        self.head_count().compose(|x| (x - n).max(0.0))
    }

    /// `min(X(t), N)`
    pub fn busy(&self) -> CadlagPath {
        let n = self.servers() as f64;
        self.head_count().compose(|x| x.min(n))
    }

    pub fn abandonment_count(&self) -> usize {
        self.customers
            .iter()
            .filter(|c| c.outcome == Outcome::Abandoned)
            .count()
    }

    pub fn write_events_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,kind,customer")?;
        for e in &self.events {
            writeln!(out, "{},{},{}", e.time, e.kind.as_str(), e.customer)?;
        }
        Ok(())
    }
}
