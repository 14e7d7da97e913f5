//! Event routing between modules.
//!
//! Modules are connected into a directed graph; when a module emits events,
//! each event is delivered to every downstream module in registration order.
//! The two schemes differ in when child events are processed:
//!
//! * breadth-first: all events a module emitted are delivered to all of its
//!   targets before any child event is processed (FIFO over batches);
//! * depth-first: a child event and all of its descendants are processed
//!   before the producer's next event (LIFO over children).
//!
//! Dispatch is synchronous: [`Router::dispatch`] returns once nothing is pending.

use std::collections::VecDeque;
use std::fmt::{self, Debug, Display};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    BreadthFirst,
    DepthFirst,
}

impl Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::BreadthFirst => "breadth-first",
            Scheme::DepthFirst => "depth-first",
        })
    }
}

/// Which side of the phase barrier a delivery happened on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    Forward,
    Backward,
}

/// One event in flight to one target.
#[derive(Debug, Clone, PartialEq)]
pub struct EventEnvelope<Id, E> {
    pub producer: Id,
    pub target: Id,
    pub payload: E,
    /// Position of the payload in its producer's emission sequence.
    pub enqueue_order: u64,
}

/// One delivered event, as recorded in the audit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery<Id, E> {
    pub seq: u64,
    pub producer: Id,
    pub target: Id,
    pub payload: E,
    pub enqueue_order: u64,
    pub phase: Phase,
}

struct Batch<Id, E> {
    producer: Id,
    target: Id,
    events: Vec<(u64, E)>,
}

pub struct Router<Id, E> {
    scheme: Scheme,
    edges: Vec<(Id, Vec<Id>)>,
    handlers: Vec<Id>,
    queue: VecDeque<Batch<Id, E>>,
    stack: Vec<EventEnvelope<Id, E>>,
    emitted: Vec<(Id, u64)>,
    phase: Phase,
    trace: Option<Vec<Delivery<Id, E>>>,
    seq: u64,
}

impl<Id, E> Default for Router<Id, E> {
    fn default() -> Self {
        Self {
            scheme: Scheme::default(),
            edges: Vec::new(),
            handlers: Vec::new(),
            queue: VecDeque::new(),
            stack: Vec::new(),
            emitted: Vec::new(),
            phase: Phase::Forward,
            trace: None,
            seq: 0,
        }
    }
}

impl<Id, E> Router<Id, E>
where
    Id: Copy + PartialEq + Debug,
    E: Clone,
{
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Route everything `from` emits to `to`. Targets are visited in the order
    /// they were connected.
    pub fn connect(&mut self, from: Id, to: Id) {
        match self.edges.iter_mut().find(|(p, _)| *p == from) {
            Some((_, targets)) => targets.push(to),
            None => self.edges.push((from, vec![to])),
        }
    }

    /// Declare that `id` has a handler. Dispatching to an undeclared target is
    /// a configuration error.
    pub fn register(&mut self, id: Id) {
        if !self.handlers.contains(&id) {
            self.handlers.push(id);
        }
    }

    pub fn targets(&self, from: Id) -> &[Id] {
        self.edges
            .iter()
            .find(|(p, _)| *p == from)
            .map_or(&[], |(_, t)| t.as_slice())
    }

    /// Check that every connected target has a handler.
    pub fn validate(&self) -> Result<()> {
        for (_, targets) in &self.edges {
            for t in targets {
                if !self.handlers.contains(t) {
                    return Err(Error::UnknownTarget(format!("{t:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<Delivery<Id, E>> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.stack.is_empty()
    }

    /// Close the forward phase of a timestep: everything forward has been
    /// drained, and subsequent deliveries belong to the backward phase.
    pub fn phase_barrier(&mut self) {
        assert!(self.is_idle(), "phase barrier with events still pending");
        self.phase = Phase::Backward;
    }

    /// Start a new timestep in the forward phase.
    pub fn begin_step(&mut self) {
        assert!(self.is_idle(), "new step with events still pending");
        self.phase = Phase::Forward;
    }

    fn next_order(&mut self, producer: Id) -> u64 {
        match self.emitted.iter_mut().find(|(p, _)| *p == producer) {
            Some((_, n)) => {
                *n += 1;
                *n
            }
            None => {
                self.emitted.push((producer, 0));
                0
            }
        }
    }

    /// Emit `events` from `producer` and process them, and everything they
    /// cause, to completion. `handler(target, payload)` returns the events
    /// the target emits in response.
    pub fn dispatch<F>(&mut self, producer: Id, events: Vec<E>, mut handler: F) -> Result<()>
    where
        F: FnMut(Id, &E) -> Vec<E>,
    {
        self.check_targets(producer)?;
        match self.scheme {
            Scheme::BreadthFirst => {
                self.enqueue(producer, events);
                while let Some(batch) = self.queue.pop_front() {
                    let mut children = Vec::new();
                    for (order, payload) in batch.events {
                        self.record(batch.producer, batch.target, &payload, order);
                        children.extend(handler(batch.target, &payload));
                    }
                    if !children.is_empty() {
                        self.check_targets(batch.target)?;
                        self.enqueue(batch.target, children);
                    }
                }
            }
            Scheme::DepthFirst => {
                self.push_children(producer, events);
                while let Some(env) = self.stack.pop() {
                    self.record(env.producer, env.target, &env.payload, env.enqueue_order);
                    let children = handler(env.target, &env.payload);
                    if !children.is_empty() {
                        self.check_targets(env.target)?;
                        self.push_children(env.target, children);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_targets(&self, producer: Id) -> Result<()> {
        for t in self.targets(producer) {
            if !self.handlers.contains(t) {
                return Err(Error::UnknownTarget(format!("{t:?}")));
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, producer: Id, events: Vec<E>) {
        let numbered: Vec<(u64, E)> = events.into_iter().map(|e| (self.next_order(producer), e)).collect();
        let targets = self.targets(producer).to_vec();
        for target in targets {
            self.queue.push_back(Batch {
                producer,
                target,
                events: numbered.clone(),
            });
        }
    }

    fn push_children(&mut self, producer: Id, events: Vec<E>) {
        let targets = self.targets(producer).to_vec();
        let mut envs = Vec::with_capacity(events.len() * targets.len());
        for payload in events {
            let order = self.next_order(producer);
            for &target in &targets {
                envs.push(EventEnvelope {
                    producer,
                    target,
                    payload: payload.clone(),
                    enqueue_order: order,
                });
            }
        }
        // Reversed so the first child pops first.
        self.stack.extend(envs.into_iter().rev());
    }

    fn record(&mut self, producer: Id, target: Id, payload: &E, enqueue_order: u64) {
        if let Some(trace) = &mut self.trace {
            trace.push(Delivery {
                seq: self.seq,
                producer,
                target,
                payload: payload.clone(),
                enqueue_order,
                phase: self.phase,
            });
        }
        self.seq += 1;
    }
}

/// Write a delivery trace as CSV `seq,producer,target,kind`.
pub fn write_trace_csv<Id, E, W>(trace: &[Delivery<Id, E>], mut w: W) -> std::io::Result<()>
where
    Id: Display,
    E: Display,
    W: Write,
{
    writeln!(w, "seq,producer,target,kind")?;
    for d in trace {
        writeln!(w, "{},{},{},{}", d.seq, d.producer, d.target, d.payload)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    enum M {
        A,
        B,
        C,
        D,
    }

    impl Display for M {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "{self:?}")
        }
    }

    fn example_graph(scheme: Scheme) -> Vec<String> {
        let mut r: Router<M, &'static str> = Router::new(scheme);
        r.connect(M::A, M::B);
        r.connect(M::A, M::C);
        r.connect(M::B, M::D);
        for m in [M::B, M::C, M::D] {
            r.register(m);
        }
        r.enable_trace();
        r.dispatch(M::A, vec!["a1", "a2"], |target, e| match (target, *e) {
            (M::B, "a1") => vec!["b1", "b2"],
            (M::B, "a2") => vec!["b3"],
            _ => vec![],
        })
        .unwrap();
        assert!(r.is_idle());
        r.take_trace()
            .iter()
            .map(|d| format!("{}({})", d.target, d.payload))
            .collect()
    }

    #[test]
    fn breadth_first_matches_example() {
        assert_eq!(
            example_graph(Scheme::BreadthFirst),
            ["B(a1)", "B(a2)", "C(a1)", "C(a2)", "D(b1)", "D(b2)", "D(b3)"]
        );
    }

    #[test]
    fn depth_first_matches_example() {
        assert_eq!(
            example_graph(Scheme::DepthFirst),
            ["B(a1)", "D(b1)", "D(b2)", "C(a1)", "B(a2)", "D(b3)", "C(a2)"]
        );
    }

    #[test]
    fn chain_is_scheme_independent() {
        let run = |scheme| {
            let mut r: Router<M, u32> = Router::new(scheme);
            r.connect(M::A, M::B);
            r.register(M::B);
            r.enable_trace();
            r.dispatch(M::A, vec![1, 2, 3], |_, _| vec![]).unwrap();
            r.take_trace().into_iter().map(|d| d.payload).collect::<Vec<_>>()
        };
        assert_eq!(run(Scheme::BreadthFirst), run(Scheme::DepthFirst));
    }

    #[test]
    fn unknown_target_is_an_error() {
        let mut r: Router<M, u32> = Router::new(Scheme::BreadthFirst);
        r.connect(M::A, M::B);
        assert!(matches!(r.validate(), Err(Error::UnknownTarget(_))));
        assert!(r.dispatch(M::A, vec![1], |_, _| vec![]).is_err());
    }

    #[test]
    fn trace_csv() {
        let mut r: Router<M, u32> = Router::new(Scheme::BreadthFirst);
        r.connect(M::A, M::B);
        r.register(M::B);
        r.enable_trace();
        r.dispatch(M::A, vec![7], |_, _| vec![]).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.take_trace(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "seq,producer,target,kind\n0,A,B,7\n");
    }

    #[test]
    fn barrier_switches_phase() {
        let mut r: Router<M, u32> = Router::new(Scheme::BreadthFirst);
        r.connect(M::A, M::B);
        r.connect(M::C, M::D);
        r.register(M::B);
        r.register(M::D);
        r.enable_trace();
        r.begin_step();
        r.dispatch(M::A, vec![1, 2], |_, _| vec![]).unwrap();
        r.phase_barrier();
        r.dispatch(M::C, vec![3], |_, _| vec![]).unwrap();
        let phases: Vec<Phase> = r.take_trace().iter().map(|d| d.phase).collect();
        assert_eq!(phases, [Phase::Forward, Phase::Forward, Phase::Backward]);
    }
}
