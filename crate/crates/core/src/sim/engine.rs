use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::config::{QueueModel, SystemConfig};
use super::record::{CustomerRecord, Event, EventKind, Outcome, RecordMeta, SimRecord};
use super::SimError;
use crate::inputs::StreamSet;

/// Events closer than this are treated as simultaneous.
const TIE_WINDOW: f64 = 1e-12;

/// Pending event kinds, in tie-break priority order. Service entries are
/// not scheduled: they happen inside the handler that frees a server or
/// brings a customer, which slots them between service ends and arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    ServiceEnd,
    Arrival,
    PatienceExpiry,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    kind: Pending,
    customer: i64,
    seq: u64,
}

impl Scheduled {
    fn tie_key(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then(self.time.total_cmp(&other.time))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Engine<'a> {
    model: &'a QueueModel,
    streams: &'a mut StreamSet,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    clock: f64,
    busy: usize,
    queue: VecDeque<i64>,
    customers: Vec<CustomerRecord>,
    offset: i64,
    events: Vec<Event>,
}

impl Engine<'_> {
    fn schedule(&mut self, time: f64, kind: Pending, customer: i64) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            kind,
            customer,
            seq: self.seq,
        });
    }

    /// Earliest event, with near-simultaneous events resolved by kind.
    fn next_event(&mut self) -> Option<Scheduled> {
        let first = self.heap.pop()?;
        let mut batch = Vec::new();
        while let Some(top) = self.heap.peek() {
            if top.time - first.time > TIE_WINDOW {
                break;
            }
            batch.push(self.heap.pop().unwrap());
        }
        if batch.is_empty() {
            return Some(first);
        }
        batch.push(first);
        let best = (0..batch.len())
            .min_by(|&i, &j| batch[i].tie_key(&batch[j]))
            .unwrap();
        let chosen = batch.swap_remove(best);
        self.heap.extend(batch);
        Some(chosen)
    }

    fn slot(&self, id: i64) -> usize {
        (id + self.offset) as usize
    }

    fn log(&mut self, kind: EventKind, customer: i64) {
        self.events.push(Event {
            time: self.clock,
            kind,
            customer,
        });
    }

    fn start_service(&mut self, id: i64) {
        let k = self.slot(id);
        let c = &mut self.customers[k];
        c.start = Some(self.clock);
        c.outcome = Outcome::InService;
        let end = self.clock + c.service;
        self.busy += 1;
        self.log(EventKind::ServiceStart, id);
        self.schedule(end, Pending::ServiceEnd, id);
    }

    fn fill_servers(&mut self) {
        while self.busy < self.model.servers {
            let Some(id) = self.queue.pop_front() else {
                break;
            };
            if self.customers[self.slot(id)].outcome == Outcome::Waiting {
                self.start_service(id);
            }
        }
    }

    fn corrupt(&self, ev: &Scheduled, detail: &str) -> SimError {
        let tail = self.events.len().saturating_sub(20);
        let dump = self.events[tail..]
            .iter()
            .map(|e| format!("  {:.15} {} {}", e.time, e.kind.as_str(), e.customer))
            .collect::<Vec<_>>()
            .join("\n");
        SimError::Corrupt {
            time: ev.time,
            customer: ev.customer,
            detail: detail.to_string(),
            dump: format!("last events:\n{dump}"),
        }
    }

    fn arrival(&mut self, ev: &Scheduled) -> Result<(), SimError> {
        let id = ev.customer;
        if self.slot(id) != self.customers.len() {
            return Err(self.corrupt(ev, "arrival out of sequence"));
        }
        let service = self.model.service.sample(&mut self.streams.services);
        let patience = match &self.model.patience {
            Some(law) => law.sample(&mut self.streams.patience),
            None => f64::INFINITY,
        };
        self.customers.push(CustomerRecord {
            id,
            arrival: self.clock,
            patience,
            service,
            start: None,
            exit: None,
            outcome: Outcome::Waiting,
        });
        self.log(EventKind::Arrival, id);
        if self.busy < self.model.servers {
            self.start_service(id);
        } else {
            self.queue.push_back(id);
            if patience.is_finite() {
                self.schedule(self.clock + patience, Pending::PatienceExpiry, id);
            }
        }
        if let Some(gap) = &self.model.interarrival {
            let next = self.clock + gap.sample(&mut self.streams.arrivals);
            self.schedule(next, Pending::Arrival, id + 1);
        }
        Ok(())
    }

    fn service_end(&mut self, ev: &Scheduled) -> Result<(), SimError> {
        let k = self.slot(ev.customer);
        match self.customers.get(k) {
            Some(c) if c.outcome == Outcome::InService => {}
            _ => return Err(self.corrupt(ev, "service end for a customer not in service")),
        }
        self.customers[k].outcome = Outcome::Served;
        self.customers[k].exit = Some(self.clock);
        self.busy -= 1;
        self.log(EventKind::ServiceEnd, ev.customer);
        self.fill_servers();
        Ok(())
    }

    fn patience_expiry(&mut self, ev: &Scheduled) -> Result<(), SimError> {
        let k = self.slot(ev.customer);
        let Some(c) = self.customers.get_mut(k) else {
            return Err(self.corrupt(ev, "patience expiry for an unknown customer"));
        };
        // stale unless still waiting (entries cancel the expiry lazily)
        if c.outcome == Outcome::Waiting {
            c.outcome = Outcome::Abandoned;
            c.exit = Some(self.clock);
            self.log(EventKind::Abandonment, ev.customer);
        }
        Ok(())
    }
}

/// Runs one replication of `model` on `[0, T]`.
///
/// Service requirements and patience times are drawn when a customer
/// arrives, each from its own stream, so runs that differ only in the
/// abandonment rule see identical customers.
pub fn simulate(model: &QueueModel, streams: &mut StreamSet) -> Result<SimRecord, SimError> {
    if model.servers == 0 {
        return Err(SimError::config("need at least one server"));
    }
    if !(model.horizon > 0.0) {
        return Err(SimError::config("horizon must be positive"));
    }
    let x0 = model.initial_count(&mut streams.initial);
    let in_service = x0.min(model.servers as u64);
    let q0 = x0 - in_service;
    let x0i = x0 as i64;
    let q0i = q0 as i64;

    let mut engine = Engine {
        model,
        streams,
        heap: BinaryHeap::new(),
        seq: 0,
        clock: 0.0,
        busy: 0,
        queue: VecDeque::new(),
        customers: Vec::with_capacity(x0 as usize + 64),
        offset: x0i - 1,
        events: Vec::new(),
    };

    for id in (-x0i + 1)..=(-q0i) {
        let remaining = model.initial_service.sample(&mut engine.streams.initial);
        engine.customers.push(CustomerRecord {
            id,
            arrival: 0.0,
            patience: f64::INFINITY,
            service: remaining,
            start: Some(0.0),
            exit: None,
            outcome: Outcome::InService,
        });
        engine.busy += 1;
        engine.schedule(remaining, Pending::ServiceEnd, id);
    }
    for id in (-q0i + 1)..=0 {
        let service = model.service.sample(&mut engine.streams.services);
        engine.customers.push(CustomerRecord {
            id,
            arrival: 0.0,
            patience: f64::INFINITY,
            service,
            start: None,
            exit: None,
            outcome: Outcome::Waiting,
        });
        engine.queue.push_back(id);
    }
    if let Some(gap) = &model.interarrival {
        let first = gap.sample(&mut engine.streams.arrivals);
        engine.schedule(first, Pending::Arrival, 1);
    }

    while let Some(ev) = engine.next_event() {
        if ev.time > model.horizon {
            break;
        }
        engine.clock = engine.clock.max(ev.time);
        match ev.kind {
            Pending::Arrival => engine.arrival(&ev)?,
            Pending::ServiceEnd => engine.service_end(&ev)?,
            Pending::PatienceExpiry => engine.patience_expiry(&ev)?,
        }
    }

    let seed = engine.streams.arrivals.seed();
    let replication = engine.streams.arrivals.id().replication;
    Ok(SimRecord {
        meta: RecordMeta {
            seed,
            replication,
            config_hash: None,
            servers: model.servers,
            horizon: model.horizon,
            initial_count: x0,
            initial_queue: q0,
        },
        events: engine.events,
        customers: engine.customers,
    })
}

/// Builds the model from `config` and runs replication `replication`.
pub fn simulate_config(
    config: &SystemConfig,
    seed: u64,
    replication: u64,
) -> Result<SimRecord, SimError> {
    let model = config.model()?;
    let mut streams = StreamSet::new(seed, replication);
    let mut rec = simulate(&model, &mut streams)?;
    rec.meta.config_hash = Some(config.hash());
    Ok(rec)
}
