//! Deterministic discrete-event simulation of beacon areas, moving users
//! and message delivery.
//!
//! Time is kept in integer microseconds. Honest delivery is instant and
//! lossless; only the attacker drops or injects traffic.

mod geometry;
mod log;
mod queue;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::adversary::{AttackScript, Attacker, Plan, ReplayTarget, CHANNELS};
use crate::protocol::wire::{BroadcastMessage, LoginMessage};
use crate::protocol::{AuthResult, Authentication, Client, ClientOutcome, LocAuthService, ProtocolError};
use crate::sessions::{AdjacencyGraph, SessionStore, TravelKind};
use crate::tokens::{BeaconId, TokenConfig};

pub use geometry::{ms_to_us, position_at, within, Point2D, Trace, TraceError, Waypoint};
pub use log::{digest, from_jsonl, to_jsonl, BeaconInfo, Event, LogEntry, Transmitter};
pub use queue::EventQueue;

pub const DEFAULT_RANGE_M: f64 = 10.0;
/// 100 TU of 1024 µs each.
pub const DEFAULT_INTERVAL_US: u64 = 102_400;
/// Consecutive missed broadcasts before a client asks for a full login.
pub const FALLBACK_AFTER_MISSES: u32 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct BeaconNode {
    pub label: String,
    pub id: BeaconId,
    pub pos: Point2D,
    pub range_m: f64,
    pub interval_us: u64,
    pub policy: String,
}

impl BeaconNode {
    /// Beacon with the default range and interval. Labels that are not
    /// UUIDs get a name-derived id.
    pub fn new(label: &str, pos: Point2D, policy: &str) -> Self {
        BeaconNode {
            label: label.to_string(),
            id: BeaconId::from_name(label),
            pos,
            range_m: DEFAULT_RANGE_M,
            interval_us: DEFAULT_INTERVAL_US,
            policy: policy.to_string(),
        }
    }

    pub fn in_range(&self, p: &Point2D) -> bool {
        within(&self.pos, self.range_m, p)
    }

    pub fn interval_ms(&self) -> f64 {
        self.interval_us as f64 / 1000.0
    }
}

/// Inclusive range test.
pub fn in_range(beacon: &BeaconNode, p: &Point2D) -> bool {
    beacon.in_range(p)
}

#[derive(Clone, Debug)]
pub struct MobileNode {
    pub username: String,
    pub client: Client,
    pub trace: Trace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorldConfig {
    pub seed: u64,
    pub duration_ms: u64,
    pub token: TokenConfig,
    pub ttl_ms: u64,
    pub sliding: bool,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("duplicate beacon {0}")]
    DuplicateBeacon(String),
    #[error("duplicate user {0}")]
    DuplicateUser(String),
    #[error("unknown beacon {0}")]
    UnknownBeacon(String),
    #[error("beacon {0}: range and interval must be positive")]
    BadBeacon(String),
    #[error("beacon {label}: {source}")]
    Policy {
        label: String,
        #[source]
        source: ProtocolError,
    },
    #[error("adjacency: {0}")]
    Adjacency(String),
    #[error("attack {index}: {message}")]
    Attack { index: usize, message: String },
}

/// Everything the simulation needs; consumed by [`World::run`].
#[derive(Debug)]
pub struct World {
    config: WorldConfig,
    service: LocAuthService,
    beacons: Vec<BeaconNode>,
    beacon_index: BTreeMap<BeaconId, usize>,
    users: Vec<MobileNode>,
    graph: AdjacencyGraph,
    attacks: Vec<AttackScript>,
    plans: Vec<Plan>,
}

impl World {
    pub fn new(service: LocAuthService, config: WorldConfig) -> Self {
        World {
            config,
            service,
            beacons: Vec::new(),
            beacon_index: BTreeMap::new(),
            users: Vec::new(),
            graph: AdjacencyGraph::new(),
            attacks: Vec::new(),
            plans: Vec::new(),
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn service(&self) -> &LocAuthService {
        &self.service
    }

    pub fn beacons(&self) -> &[BeaconNode] {
        &self.beacons
    }

    pub fn users(&self) -> &[MobileNode] {
        &self.users
    }

    pub fn beacon(&self, label: &str) -> Option<&BeaconNode> {
        self.beacon_by_label(label).map(|i| &self.beacons[i])
    }

    fn beacon_by_label(&self, label: &str) -> Option<usize> {
        self.beacons.iter().position(|b| b.label == label)
    }

    fn resolve(&self, label: &str) -> Result<usize, WorldError> {
        self.beacon_by_label(label)
            .ok_or_else(|| WorldError::UnknownBeacon(label.to_string()))
    }

    /// Adds a beacon and installs its policy with the service.
    pub fn add_beacon(&mut self, beacon: BeaconNode) -> Result<(), WorldError> {
        if !(beacon.range_m > 0.0 && beacon.range_m.is_finite()) || beacon.interval_us == 0 || !beacon.pos.is_finite() {
            return Err(WorldError::BadBeacon(beacon.label));
        }
        if self.beacon_by_label(&beacon.label).is_some() || self.beacon_index.contains_key(&beacon.id) {
            return Err(WorldError::DuplicateBeacon(beacon.label));
        }
        self.service
            .register_backend(beacon.id, &beacon.policy)
            .map_err(|source| WorldError::Policy {
                label: beacon.label.clone(),
                source,
            })?;
        self.beacon_index.insert(beacon.id, self.beacons.len());
        self.beacons.push(beacon);
        Ok(())
    }

    pub fn add_adjacency(&mut self, a: &str, b: &str) -> Result<(), WorldError> {
        let (ia, ib) = (self.resolve(a)?, self.resolve(b)?);
        self.graph
            .add_edge(self.beacons[ia].id, self.beacons[ib].id)
            .map_err(|_| WorldError::Adjacency(format!("self-loop on {}", a)))
    }

    pub fn add_user(&mut self, user: MobileNode) -> Result<(), WorldError> {
        if self.users.iter().any(|u| u.username == user.username) {
            return Err(WorldError::DuplicateUser(user.username));
        }
        self.users.push(user);
        Ok(())
    }

    pub fn add_attack(&mut self, script: AttackScript) -> Result<(), WorldError> {
        let index = self.attacks.len();
        let bad = |message: String| WorldError::Attack { index, message };
        let plan = match &script {
            AttackScript::Replay {
                beacon,
                record_from_ms,
                replay_at_ms,
                target,
            } => {
                if replay_at_ms < record_from_ms {
                    return Err(bad("replay_at_ms precedes record_from_ms".into()));
                }
                Plan::Replay {
                    beacon: self.resolve(beacon)?,
                    record_from_us: record_from_ms * 1000,
                    replay_at_us: replay_at_ms * 1000,
                    target: *target,
                }
            }
            AttackScript::Wormhole {
                from,
                to,
                record_from_ms,
                tunnel_delay_ms,
                target,
            } => Plan::Wormhole {
                from: self.resolve(from)?,
                to: self.resolve(to)?,
                record_from_us: record_from_ms * 1000,
                delay_us: tunnel_delay_ms * 1000,
                target: *target,
            },
            AttackScript::DosJam {
                area,
                channels,
                from_ms,
                to_ms,
            } => {
                if from_ms >= to_ms {
                    return Err(bad("jam window is empty".into()));
                }
                let mut mask = [false; CHANNELS];
                for &c in channels {
                    let slot = mask
                        .get_mut(c as usize)
                        .ok_or_else(|| bad(format!("channel {} does not exist", c)))?;
                    *slot = true;
                }
                if !mask.iter().any(|&m| m) {
                    return Err(bad("no channels to jam".into()));
                }
                Plan::Jam {
                    beacon: self.resolve(area)?,
                    channels: mask,
                    from_us: from_ms * 1000,
                    to_us: to_ms * 1000,
                }
            }
        };
        self.attacks.push(script);
        self.plans.push(plan);
        Ok(())
    }

    /// Runs until `duration_ms` and returns the event log.
    pub fn run(self) -> Vec<LogEntry> {
        Runner::new(self).run()
    }
}

#[derive(Debug)]
enum SimEvent {
    BeaconTick { beacon: usize, tick: u64 },
    DeliverBroadcast { msg_id: u64, user: usize, zone: usize },
    DeliverLogin { login_id: u64, beacon: usize },
    AttackAction { attack: usize, action: AttackAction },
    SessionSweep { user: usize },
}

#[derive(Clone, Copy, Debug)]
enum AttackAction {
    Transmit,
    JamStart,
    JamEnd,
}

struct Runner {
    world: World,
    queue: EventQueue<SimEvent>,
    log: Vec<LogEntry>,
    rng: ChaCha20Rng,
    until_us: u64,
    sessions: SessionStore,
    attacker: Attacker,
    broadcasts: Vec<BroadcastMessage>,
    logins: Vec<Vec<u8>>,
    missed: Vec<u32>,
    sweep_pending: BTreeSet<usize>,
    now_us: u64,
}

impl Runner {
    fn new(world: World) -> Self {
        let sessions = SessionStore::new(world.config.ttl_ms, world.config.sliding);
        let attacker = Attacker::new(world.plans.clone());
        let missed = vec![0; world.users.len()];
        Runner {
            rng: ChaCha20Rng::seed_from_u64(world.config.seed),
            until_us: world.config.duration_ms * 1000,
            queue: EventQueue::new(),
            log: Vec::new(),
            sessions,
            attacker,
            broadcasts: Vec::new(),
            logins: Vec::new(),
            missed,
            sweep_pending: BTreeSet::new(),
            now_us: 0,
            world,
        }
    }

    fn emit(&mut self, event: Event) {
        self.log.push(LogEntry {
            t_us: self.now_us,
            event,
        });
    }

    fn schedule(&mut self, t_us: u64, event: SimEvent) {
        if t_us < self.until_us {
            self.queue.push(t_us, event);
        }
    }

    fn now_ms(&self) -> u64 {
        self.now_us / 1000
    }

    fn label(&self, beacon: usize) -> String {
        self.world.beacons[beacon].label.clone()
    }

    fn label_for_id(&self, id: &BeaconId) -> String {
        match self.world.beacon_index.get(id) {
            Some(&i) => self.label(i),
            None => id.to_string(),
        }
    }

    fn position(&self, user: usize) -> Point2D {
        self.world.users[user].trace.position_at_us(self.now_us)
    }

    fn users_in_range(&self, beacon: usize) -> Vec<usize> {
        let b = &self.world.beacons[beacon];
        (0..self.world.users.len())
            .filter(|&u| b.in_range(&self.position(u)))
            .collect()
    }

    fn run(mut self) -> Vec<LogEntry> {
        self.start();
        while let Some((t_us, event)) = self.queue.pop() {
            self.now_us = t_us;
            match event {
                SimEvent::BeaconTick { beacon, tick } => self.on_tick(beacon, tick),
                SimEvent::DeliverBroadcast { msg_id, user, zone } => self.on_broadcast(msg_id, user, zone),
                SimEvent::DeliverLogin { login_id, beacon } => self.on_login(login_id, beacon),
                SimEvent::AttackAction { attack, action } => self.on_attack(attack, action),
                SimEvent::SessionSweep { user } => self.on_sweep(user),
            }
        }
        self.log
    }

    fn start(&mut self) {
        let cfg = self.world.config;
        let beacons = self
            .world
            .beacons
            .iter()
            .map(|b| BeaconInfo {
                label: b.label.clone(),
                id: b.id.to_string(),
                x_m: b.pos.x_m,
                y_m: b.pos.y_m,
                range_m: b.range_m,
                interval_us: b.interval_us,
                policy: b.policy.clone(),
            })
            .collect();
        let users = self.world.users.iter().map(|u| u.username.clone()).collect();
        self.emit(Event::ScenarioStarted {
            seed: cfg.seed,
            period_ms: cfg.token.period_ms,
            skew_periods: cfg.token.skew_periods,
            ttl_ms: cfg.ttl_ms,
            sliding: cfg.sliding,
            duration_ms: cfg.duration_ms,
            beacons,
            users,
        });
        for (attack, script) in self.world.attacks.clone().into_iter().enumerate() {
            self.emit(Event::AttackScheduled { attack, script });
        }
        for attack in 0..self.world.plans.len() {
            match self.world.plans[attack] {
                Plan::Replay { replay_at_us, .. } => self.schedule(
                    replay_at_us,
                    SimEvent::AttackAction {
                        attack,
                        action: AttackAction::Transmit,
                    },
                ),
                Plan::Jam { from_us, to_us, .. } => {
                    self.schedule(
                        from_us,
                        SimEvent::AttackAction {
                            attack,
                            action: AttackAction::JamStart,
                        },
                    );
                    self.schedule(
                        to_us,
                        SimEvent::AttackAction {
                            attack,
                            action: AttackAction::JamEnd,
                        },
                    );
                }
                Plan::Wormhole { .. } => {}
            }
        }
        for beacon in 0..self.world.beacons.len() {
            self.schedule(0, SimEvent::BeaconTick { beacon, tick: 0 });
        }
    }

    fn on_tick(&mut self, beacon: usize, tick: u64) {
        let label = self.label(beacon);
        self.emit(Event::BeaconTick {
            beacon: label.clone(),
            tick,
        });
        let interval = self.world.beacons[beacon].interval_us;
        self.schedule((tick + 1) * interval, SimEvent::BeaconTick { beacon, tick: tick + 1 });

        let receivers = self.users_in_range(beacon);
        let jammed = self.attacker.jammed(beacon, self.now_us);
        let Some(channel) = pick_channel(tick, &jammed) else {
            let channels = (0..CHANNELS as u8).collect();
            self.emit(Event::BroadcastJammed {
                beacon: label.clone(),
                tick,
                channels,
            });
            for u in receivers {
                self.missed[u] += 1;
                if self.missed[u] == FALLBACK_AFTER_MISSES {
                    self.emit(Event::FallbackRequired {
                        user: self.world.users[u].username.clone(),
                        beacon: label.clone(),
                        missed: FALLBACK_AFTER_MISSES,
                    });
                }
            }
            return;
        };
        let eavesdropping = self.attacker.listens(ReplayTarget::Broadcast, beacon, self.now_us);
        if receivers.is_empty() && !eavesdropping {
            return;
        }

        let id = self.world.beacons[beacon].id;
        let msg = self
            .world
            .service
            .broadcast_step(id, self.now_ms(), &mut self.rng)
            .expect("every beacon has a policy");
        let bytes = msg.to_bytes();
        let msg_id = self.broadcasts.len() as u64;
        self.emit(Event::BroadcastSent {
            msg_id,
            beacon: label.clone(),
            origin_beacon: label.clone(),
            period: msg.period.0,
            transmitter: Transmitter::Beacon,
            original: None,
            attack: None,
            channel,
            digest: digest(&bytes),
        });
        let period = msg.period.0;
        self.broadcasts.push(msg);
        if eavesdropping {
            self.record(ReplayTarget::Broadcast, beacon, msg_id, period, bytes);
        }
        for user in receivers {
            self.schedule(
                self.now_us,
                SimEvent::DeliverBroadcast {
                    msg_id,
                    user,
                    zone: beacon,
                },
            );
        }
    }

    fn record(&mut self, target: ReplayTarget, beacon: usize, original: u64, period: u64, bytes: Vec<u8>) {
        let d = digest(&bytes);
        for attack in self.attacker.record(target, beacon, self.now_us, original, bytes) {
            self.emit(Event::AttackerRecorded {
                attack,
                target,
                beacon: self.label(beacon),
                original,
                period,
                digest: d.clone(),
            });
            if let Plan::Wormhole { delay_us, .. } = self.world.plans[attack] {
                self.schedule(
                    self.now_us + delay_us,
                    SimEvent::AttackAction {
                        attack,
                        action: AttackAction::Transmit,
                    },
                );
            }
        }
    }

    fn on_broadcast(&mut self, msg_id: u64, user: usize, zone: usize) {
        let username = self.world.users[user].username.clone();
        let zone_label = self.label(zone);
        self.emit(Event::BroadcastReceived {
            msg_id,
            user: username.clone(),
            beacon: zone_label.clone(),
        });
        self.missed[user] = 0;
        let now_ms = self.now_ms();
        let outcome =
            self.world.users[user]
                .client
                .handle_broadcast(&self.broadcasts[msg_id as usize], now_ms, &mut self.rng);
        let login = match outcome {
            ClientOutcome::NoAction(reason) => {
                self.emit(Event::NoAction {
                    msg_id,
                    user: username,
                    reason,
                });
                return;
            }
            ClientOutcome::Login(login) => login,
        };
        if !self.world.beacons[zone].in_range(&self.position(user)) {
            return;
        }
        let bytes = login.to_bytes();
        let login_id = self.logins.len() as u64;
        self.emit(Event::LoginSent {
            login_id,
            user: username,
            in_reply_to: msg_id,
            to_beacon: zone_label,
            period: login.period.0,
            digest: digest(&bytes),
        });
        self.logins.push(bytes.clone());
        self.schedule(self.now_us, SimEvent::DeliverLogin { login_id, beacon: zone });
        if self.attacker.listens(ReplayTarget::LoginReply, zone, self.now_us) {
            self.record(ReplayTarget::LoginReply, zone, login_id, login.period.0, bytes);
        }
    }

    fn on_login(&mut self, login_id: u64, beacon: usize) {
        let label = self.label(beacon);
        let id = self.world.beacons[beacon].id;
        let now_ms = self.now_ms();
        let result = self
            .world
            .service
            .verify_login(&self.logins[login_id as usize], id, now_ms);
        match result {
            AuthResult::Authenticated(auth) => {
                self.emit(Event::Authenticated {
                    login_id,
                    user: auth.username.clone(),
                    beacon: label,
                    period: auth.period.0,
                });
                self.on_authenticated(&auth);
            }
            AuthResult::Rejected(reason) => self.emit(Event::Rejected {
                login_id,
                beacon: label,
                reason,
            }),
        }
    }

    fn on_authenticated(&mut self, auth: &Authentication) {
        let now_ms = self.now_ms();
        self.sweep(now_ms);
        let to = self.label_for_id(&auth.beacon_id);
        let user = auth.username.clone();
        let Some(current) = self.sessions.lookup(&user, now_ms).map(|s| s.beacon_id) else {
            let session = self.sessions.establish(auth, now_ms);
            self.emit(Event::SessionEstablished {
                user,
                beacon: to,
                expires_at_ms: session.expires_at_ms,
            });
            if let Some(u) = self.world.users.iter().position(|m| m.username == auth.username) {
                if self.sweep_pending.insert(u) {
                    self.schedule(session.expires_at_ms * 1000, SimEvent::SessionSweep { user: u });
                }
            }
            return;
        };
        match self.sessions.travel(auth, &self.world.graph, now_ms) {
            Ok((session, TravelKind::Keepalive)) => self.emit(Event::SessionKeepalive {
                user,
                beacon: to,
                expires_at_ms: session.expires_at_ms,
            }),
            Ok((session, TravelKind::Relocated { from })) => {
                let from = self.label_for_id(&from);
                self.emit(Event::SessionTraveled {
                    user,
                    from,
                    to,
                    expires_at_ms: session.expires_at_ms,
                })
            }
            Err(reason) => {
                let from = self.label_for_id(&current);
                self.emit(Event::TravelRejected { user, from, to, reason })
            }
        }
    }

    fn sweep(&mut self, now_ms: u64) {
        for session in self.sessions.sweep_expired(now_ms) {
            let beacon = self.label_for_id(&session.beacon_id);
            self.emit(Event::SessionExpired {
                user: session.username,
                beacon,
            });
        }
    }

    fn on_sweep(&mut self, user: usize) {
        self.sweep_pending.remove(&user);
        let now_ms = self.now_ms();
        self.sweep(now_ms);
        let name = &self.world.users[user].username;
        if let Some(expires) = self.sessions.lookup(name, now_ms).map(|s| s.expires_at_ms) {
            self.sweep_pending.insert(user);
            self.schedule(expires * 1000, SimEvent::SessionSweep { user });
        }
    }

    fn on_attack(&mut self, attack: usize, action: AttackAction) {
        let plan = self.world.plans[attack].clone();
        match (action, plan) {
            (
                AttackAction::JamStart,
                Plan::Jam {
                    beacon,
                    channels,
                    to_us,
                    ..
                },
            ) => {
                let channels = (0..CHANNELS as u8).filter(|&c| channels[c as usize]).collect();
                self.emit(Event::JamStarted {
                    attack,
                    beacon: self.label(beacon),
                    channels,
                    to_ms: to_us / 1000,
                })
            }
            (AttackAction::JamEnd, Plan::Jam { beacon, .. }) => self.emit(Event::JamEnded {
                attack,
                beacon: self.label(beacon),
            }),
            (AttackAction::Transmit, Plan::Replay { beacon, target, .. }) => self.transmit(attack, beacon, target),
            (AttackAction::Transmit, Plan::Wormhole { to, target, .. }) => self.transmit(attack, to, target),
            _ => {}
        }
    }

    /// Re-sends a recording in the area of `zone`.
    fn transmit(&mut self, attack: usize, zone: usize, target: ReplayTarget) {
        let Some(recording) = self.attacker.recording(attack).cloned() else {
            self.emit(Event::AttackFailed {
                attack,
                reason: "nothing recorded".into(),
            });
            return;
        };
        let zone_label = self.label(zone);
        match target {
            ReplayTarget::Broadcast => {
                let msg = match BroadcastMessage::from_bytes(&recording.bytes) {
                    Ok(m) => m,
                    Err(e) => {
                        self.emit(Event::AttackFailed {
                            attack,
                            reason: e.to_string(),
                        });
                        return;
                    }
                };
                let msg_id = self.broadcasts.len() as u64;
                self.emit(Event::BroadcastSent {
                    msg_id,
                    beacon: zone_label,
                    origin_beacon: self.label_for_id(&msg.beacon_id),
                    period: msg.period.0,
                    transmitter: Transmitter::Attacker,
                    original: Some(recording.original),
                    attack: Some(attack),
                    channel: 0,
                    digest: digest(&recording.bytes),
                });
                self.broadcasts.push(msg);
                for user in self.users_in_range(zone) {
                    self.schedule(self.now_us, SimEvent::DeliverBroadcast { msg_id, user, zone });
                }
            }
            ReplayTarget::LoginReply => {
                if LoginMessage::from_bytes(&recording.bytes).is_err() {
                    self.emit(Event::AttackFailed {
                        attack,
                        reason: "recording is not a login".into(),
                    });
                    return;
                }
                let login_id = self.logins.len() as u64;
                self.emit(Event::AttackerLoginTransmit {
                    attack,
                    login_id,
                    original: recording.original,
                    to_beacon: zone_label,
                    digest: digest(&recording.bytes),
                });
                self.logins.push(recording.bytes);
                self.schedule(self.now_us, SimEvent::DeliverLogin { login_id, beacon: zone });
            }
        }
    }
}

/// Channel-hopping start point rotates with the tick; the first free
/// channel from there is used.
fn pick_channel(tick: u64, jammed: &[bool; CHANNELS]) -> Option<u8> {
    (0..CHANNELS)
        .map(|i| (tick as usize + i) % CHANNELS)
        .find(|&c| !jammed[c])
        .map(|c| c as u8)
}
