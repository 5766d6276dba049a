use std::collections::{BTreeMap, BTreeSet};

use super::{
    all_paths, compute_loss, CounterSnapshot, LossReport, MeasureConfig, MeasureError, PathId, ReportedLoss,
    Role,
};
use crate::control::ControlBody;
use crate::select::select_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Idle,
    InitSent,
    Measuring,
    StopWait,
    TimeWait,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimerKind {
    Cycle,
    Retransmit,
    Period,
    Query(u32),
    TimeWait,
    Watchdog,
}

/// Timers carry the epoch they were armed in; a state change bumps the
/// epoch and silently invalidates everything armed before.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimerId {
    pub kind: TimerKind,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Timer(TimerId),
    Received(ControlBody),
    /// Counter snapshot assembled from a measurement reply.
    Snapshot { qid: u32, snap: CounterSnapshot },
    StopAckSent,
    KeepaliveFailure(PathId),
    PathRecovered(PathId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send on every available path.
    Broadcast(ControlBody),
    /// Send a measurement request on `path` carrying the local counters.
    Query { path: PathId, qid: u32 },
    SetTimer { id: TimerId, after_ms: u64 },
    /// Forward data on `path` from now on.
    Apply { path: PathId },
    /// Loss figures of a finished measuring phase, with the query ids
    /// whose replies opened and closed each window.
    Report(Vec<MeasuredWindow>),
    Completed { cycle: u32 },
    Aborted { cycle: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasuredWindow {
    pub report: LossReport,
    pub open_qid: u32,
    pub close_qid: u32,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    path: PathId,
    closing: bool,
    tries: u32,
}

/// Measurement state machine shared by all paths to one peer.
#[derive(Debug, Clone)]
pub struct MeasurementSession {
    pub peer: u64,
    pub role: Role,
    pub state: State,
    pub cycle: u32,
    pub active: PathId,
    pub last_reports: Vec<LossReport>,
    n_fia: u8,
    cfg: MeasureConfig,
    unavailable: BTreeSet<PathId>,
    epoch: u64,
    retries: u32,
    next_qid: u32,
    pending: BTreeMap<u32, Pending>,
    open: BTreeMap<PathId, (u32, CounterSnapshot)>,
    close: BTreeMap<PathId, (u32, CounterSnapshot)>,
    closing: bool,
    decision: PathId,
    sent_reports: Vec<ReportedLoss>,
}

impl MeasurementSession {
    pub fn new(local_id: u64, peer_id: u64, n_fia: u8, cfg: MeasureConfig) -> Self {
        Self {
            peer: peer_id,
            role: Role::for_ids(local_id, peer_id),
            state: State::Idle,
            cycle: 0,
            active: PathId::Ip,
            last_reports: Vec::new(),
            n_fia,
            cfg,
            unavailable: BTreeSet::new(),
            epoch: 0,
            retries: 0,
            next_qid: 1,
            pending: BTreeMap::new(),
            open: BTreeMap::new(),
            close: BTreeMap::new(),
            closing: false,
            decision: PathId::Ip,
            sent_reports: Vec::new(),
        }
    }

    pub fn config(&self) -> &MeasureConfig {
        &self.cfg
    }

    pub fn paths(&self) -> Vec<PathId> {
        all_paths(self.n_fia)
    }

    pub fn is_available(&self, p: PathId) -> bool {
        !self.unavailable.contains(&p)
    }

    pub fn available_paths(&self) -> Vec<PathId> {
        self.paths().into_iter().filter(|p| self.is_available(*p)).collect()
    }

    /// Fail-over paths currently eligible for sampled copies.
    pub fn failover_paths(&self) -> Vec<PathId> {
        self.available_paths()
            .into_iter()
            .filter(|p| *p != self.active)
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn force_state(&mut self, s: State) {
        self.set_state(s);
    }

    /// Actions to run once the peer is known.
    pub fn begin(&mut self) -> Vec<Action> {
        match self.role {
            Role::Initiator => vec![self.timer(TimerKind::Cycle, 0)],
            Role::Responder => Vec::new(),
        }
    }

    fn set_state(&mut self, s: State) {
        self.state = s;
        self.epoch += 1;
        self.retries = 0;
    }

    fn timer(&self, kind: TimerKind, after_ms: u64) -> Action {
        Action::SetTimer {
            id: TimerId {
                kind,
                epoch: self.epoch,
            },
            after_ms,
        }
    }

    fn violation(&self, what: impl Into<String>) -> MeasureError {
        MeasureError::ProtocolViolation {
            state: self.state,
            msg: what.into(),
        }
    }

    pub fn step(&mut self, ev: Event) -> Result<Vec<Action>, MeasureError> {
        match ev {
            Event::Timer(id) => {
                if id.epoch != self.epoch {
                    return Ok(Vec::new());
                }
                Ok(self.on_timer(id.kind))
            }
            Event::Received(body) => match self.role {
                Role::Initiator => self.initiator_recv(body),
                Role::Responder => self.responder_recv(body),
            },
            Event::Snapshot { qid, snap } => {
                if self.role != Role::Initiator {
                    return Err(self.violation("snapshot at responder"));
                }
                Ok(self.on_snapshot(qid, snap))
            }
            Event::StopAckSent => {
                if self.role == Role::Responder && self.state == State::StopWait {
                    self.set_state(State::TimeWait);
                    Ok(vec![self.timer(TimerKind::TimeWait, self.cfg.interval_ms)])
                } else {
                    Ok(Vec::new())
                }
            }
            Event::KeepaliveFailure(p) => {
                self.unavailable.insert(p);
                Ok(self.abort())
            }
            Event::PathRecovered(p) => {
                self.unavailable.remove(&p);
                Ok(Vec::new())
            }
        }
    }

    fn abort(&mut self) -> Vec<Action> {
        if matches!(self.state, State::Idle | State::Done) {
            return Vec::new();
        }
        let cycle = self.cycle;
        self.set_state(State::Idle);
        self.pending.clear();
        let mut out = vec![Action::Aborted { cycle }];
        if self.role == Role::Initiator {
            out.push(self.timer(TimerKind::Cycle, 0));
        }
        out
    }

    fn on_timer(&mut self, kind: TimerKind) -> Vec<Action> {
        match (self.role, self.state, kind) {
            (Role::Initiator, State::Idle | State::Done, TimerKind::Cycle) => {
                self.cycle += 1;
                self.set_state(State::InitSent);
                vec![
                    Action::Broadcast(ControlBody::Start { cycle: self.cycle }),
                    self.timer(TimerKind::Retransmit, self.cfg.retransmit_ms),
                ]
            }
            (Role::Initiator, State::InitSent | State::StopWait, TimerKind::Retransmit) => {
                if self.retries >= self.cfg.max_retries {
                    let cycle = self.cycle;
                    self.set_state(State::Idle);
                    return vec![
                        Action::Aborted { cycle },
                        self.timer(TimerKind::Cycle, self.cfg.interval_ms),
                    ];
                }
                self.retries += 1;
                let msg = if self.state == State::InitSent {
                    ControlBody::Start { cycle: self.cycle }
                } else {
                    self.stop_message()
                };
                vec![
                    Action::Broadcast(msg),
                    self.timer(TimerKind::Retransmit, self.cfg.retransmit_ms),
                ]
            }
            (Role::Initiator, State::Measuring, TimerKind::Period) => {
                self.closing = true;
                self.pending.retain(|_, p| p.closing);
                let paths: Vec<PathId> = self
                    .open
                    .keys()
                    .copied()
                    .filter(|p| self.is_available(*p))
                    .collect();
                let mut out = Vec::new();
                for p in paths {
                    out.extend(self.query(p, true, 0));
                }
                if self.pending.is_empty() {
                    out.extend(self.finish());
                }
                out
            }
            (Role::Initiator, State::Measuring, TimerKind::Query(qid)) => {
                let Some(p) = self.pending.remove(&qid) else {
                    return Vec::new();
                };
                let mut out = Vec::new();
                if p.tries < self.cfg.max_query_retries && self.is_available(p.path) {
                    out.extend(self.query(p.path, p.closing, p.tries + 1));
                }
                if self.closing && !self.pending.values().any(|q| q.closing) {
                    out.extend(self.finish());
                }
                out
            }
            (_, State::TimeWait, TimerKind::TimeWait) => {
                self.set_state(State::Done);
                let mut out = vec![Action::Completed { cycle: self.cycle }];
                if self.role == Role::Initiator {
                    out.push(self.timer(TimerKind::Cycle, 0));
                }
                out
            }
            (Role::Responder, State::Measuring | State::StopWait, TimerKind::Watchdog) => {
                let cycle = self.cycle;
                self.set_state(State::Idle);
                vec![Action::Aborted { cycle }]
            }
            _ => Vec::new(),
        }
    }

    fn query(&mut self, path: PathId, closing: bool, tries: u32) -> Vec<Action> {
        let qid = self.next_qid;
        self.next_qid = self.next_qid.wrapping_add(1);
        self.pending.insert(qid, Pending { path, closing, tries });
        vec![
            Action::Query { path, qid },
            self.timer(TimerKind::Query(qid), self.cfg.query_timeout_ms),
        ]
    }

    fn on_snapshot(&mut self, qid: u32, snap: CounterSnapshot) -> Vec<Action> {
        if self.state != State::Measuring {
            return Vec::new();
        }
        let Some(p) = self.pending.remove(&qid) else {
            return Vec::new();
        };
        if p.closing {
            self.close.insert(p.path, (qid, snap));
            if !self.pending.values().any(|q| q.closing) {
                return self.finish();
            }
        } else {
            self.open.insert(p.path, (qid, snap));
        }
        Vec::new()
    }

    fn finish(&mut self) -> Vec<Action> {
        let mut windows = Vec::new();
        for (path, (close_qid, end)) in &self.close {
            if let Some((open_qid, start)) = self.open.get(path) {
                if let Ok(Some(report)) = compute_loss(*path, start, end) {
                    windows.push(MeasuredWindow {
                        report,
                        open_qid: *open_qid,
                        close_qid: *close_qid,
                    });
                }
            }
        }
        let reports: Vec<LossReport> = windows.iter().map(|w| w.report).collect();
        self.decision = self.decide(&reports);
        self.sent_reports = reports.iter().map(ReportedLoss::from).collect();
        self.last_reports = reports;
        self.set_state(State::StopWait);
        vec![
            Action::Report(windows),
            Action::Broadcast(self.stop_message()),
            self.timer(TimerKind::Retransmit, self.cfg.retransmit_ms),
        ]
    }

    fn decide(&self, reports: &[LossReport]) -> PathId {
        let loss_of = |p: PathId| {
            if !self.is_available(p) {
                return Some(1.0);
            }
            reports.iter().find(|r| r.path == p).map(LossReport::loss_f64)
        };
        let fia: Vec<f64> = (0..self.n_fia)
            .map(|i| loss_of(PathId::Fia(i)).unwrap_or(1.0))
            .collect();
        match loss_of(PathId::Ip) {
            // No IP sample: stay, unless the current path is gone.
            None if self.is_available(self.active) => self.active,
            ip => select_path(ip, &fia, &self.cfg.select).unwrap_or(self.active),
        }
    }

    fn stop_message(&self) -> ControlBody {
        ControlBody::Stop {
            cycle: self.cycle,
            decision: self.decision,
            reports: self.sent_reports.clone(),
        }
    }

    fn initiator_recv(&mut self, body: ControlBody) -> Result<Vec<Action>, MeasureError> {
        match body {
            ControlBody::StartAck { cycle } if cycle == self.cycle => match self.state {
                State::InitSent => {
                    self.set_state(State::Measuring);
                    self.closing = false;
                    self.pending.clear();
                    self.open.clear();
                    self.close.clear();
                    let mut out = Vec::new();
                    for p in self.available_paths() {
                        out.extend(self.query(p, false, 0));
                    }
                    out.push(self.timer(TimerKind::Period, self.cfg.period_ms));
                    Ok(out)
                }
                State::Measuring | State::StopWait | State::TimeWait | State::Done => Ok(Vec::new()),
                State::Idle => Err(self.violation("StartAck")),
            },
            ControlBody::StopAck { cycle, .. } if cycle == self.cycle => match self.state {
                State::StopWait => {
                    self.set_state(State::TimeWait);
                    self.active = self.decision;
                    Ok(vec![
                        Action::Apply { path: self.decision },
                        self.timer(TimerKind::TimeWait, self.cfg.interval_ms),
                    ])
                }
                State::TimeWait | State::Done | State::Idle => Ok(Vec::new()),
                _ => Err(self.violation("StopAck")),
            },
            other => Err(self.violation(format!("{:?}", other.msg_type()))),
        }
    }

    fn responder_recv(&mut self, body: ControlBody) -> Result<Vec<Action>, MeasureError> {
        match body {
            ControlBody::Start { cycle } if cycle > self.cycle => {
                self.cycle = cycle;
                self.set_state(State::Measuring);
                Ok(vec![
                    Action::Broadcast(ControlBody::StartAck { cycle }),
                    self.timer(
                        TimerKind::Watchdog,
                        self.cfg.period_ms + 2 * self.cfg.interval_ms,
                    ),
                ])
            }
            ControlBody::Start { cycle } if cycle == self.cycle && self.state == State::Measuring => {
                Ok(vec![Action::Broadcast(ControlBody::StartAck { cycle })])
            }
            ControlBody::Stop {
                cycle,
                decision,
                reports,
            } if cycle == self.cycle => match self.state {
                State::Measuring => {
                    self.set_state(State::StopWait);
                    self.decision = decision;
                    self.active = decision;
                    self.sent_reports = reports.clone();
                    Ok(vec![
                        Action::Apply { path: decision },
                        Action::Broadcast(ControlBody::StopAck { cycle, reports }),
                    ])
                }
                State::StopWait | State::TimeWait => {
                    Ok(vec![Action::Broadcast(ControlBody::StopAck { cycle, reports })])
                }
                State::Done => Ok(vec![Action::Broadcast(ControlBody::StopAck { cycle, reports })]),
                _ => Err(self.violation("Stop")),
            },
            other => Err(self.violation(format!("{:?}", other.msg_type()))),
        }
    }
}
