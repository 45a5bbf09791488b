//! Scripted attackers (replay, wormhole, jamming) and the verdicts of the
//! corresponding security games.
//!
//! The attacker can record, retransmit, tunnel and jam. It holds recorded
//! bytes and nothing else. Verdicts are computed from the event log alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Environment, Scenario, ScenarioError};
use crate::simworld::{Event, LogEntry, World};

/// Logical advertising channels of the radio medium.
pub const CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayTarget {
    /// The beacon's encrypted broadcast `m`.
    #[default]
    Broadcast,
    /// A user's login reply `m_r`.
    LoginReply,
}

/// One scripted attack. Beacons are referenced by scenario label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackScript {
    /// Record the first `target` message heard at `beacon` from
    /// `record_from_ms` on, and send it again there at `replay_at_ms`.
    Replay {
        beacon: String,
        record_from_ms: u64,
        replay_at_ms: u64,
        #[serde(default)]
        target: ReplayTarget,
    },
    /// Record at `from` and re-emit at `to` after `tunnel_delay_ms`.
    Wormhole {
        from: String,
        to: String,
        record_from_ms: u64,
        #[serde(default)]
        tunnel_delay_ms: u64,
        #[serde(default)]
        target: ReplayTarget,
    },
    /// Jam `channels` in the area of beacon `area` during `[from_ms, to_ms)`.
    DosJam {
        area: String,
        channels: Vec<u8>,
        from_ms: u64,
        to_ms: u64,
    },
}

impl AttackScript {
    pub fn beacons(&self) -> Vec<&str> {
        match self {
            AttackScript::Replay { beacon, .. } => vec![beacon],
            AttackScript::Wormhole { from, to, .. } => vec![from, to],
            AttackScript::DosJam { area, .. } => vec![area],
        }
    }

    pub fn game(&self) -> GameKind {
        match self {
            AttackScript::Replay { .. } => GameKind::Replay,
            AttackScript::Wormhole { .. } => GameKind::Wormhole,
            AttackScript::DosJam { .. } => GameKind::Dos,
        }
    }
}

/// An attack script with beacon labels resolved to world indices.
#[derive(Clone, Debug)]
pub(crate) enum Plan {
    Replay {
        beacon: usize,
        record_from_us: u64,
        replay_at_us: u64,
        target: ReplayTarget,
    },
    Wormhole {
        from: usize,
        to: usize,
        record_from_us: u64,
        delay_us: u64,
        target: ReplayTarget,
    },
    Jam {
        beacon: usize,
        channels: [bool; CHANNELS],
        from_us: u64,
        to_us: u64,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct Recording {
    pub bytes: Vec<u8>,
    pub original: u64,
}

/// Attacker state inside the simulation: one optional recording per script.
#[derive(Clone, Debug)]
pub(crate) struct Attacker {
    plans: Vec<Plan>,
    recordings: Vec<Option<Recording>>,
}

impl Attacker {
    pub fn new(plans: Vec<Plan>) -> Self {
        let recordings = vec![None; plans.len()];
        Attacker { plans, recordings }
    }

    fn wants(&self, i: usize, target: ReplayTarget, beacon: usize, now_us: u64) -> bool {
        if self.recordings[i].is_some() {
            return false;
        }
        match self.plans[i] {
            Plan::Replay {
                beacon: b,
                record_from_us,
                target: t,
                ..
            }
            | Plan::Wormhole {
                from: b,
                record_from_us,
                target: t,
                ..
            } => b == beacon && t == target && now_us >= record_from_us,
            Plan::Jam { .. } => false,
        }
    }

    pub fn listens(&self, target: ReplayTarget, beacon: usize, now_us: u64) -> bool {
        (0..self.plans.len()).any(|i| self.wants(i, target, beacon, now_us))
    }

    /// Stores `bytes` for every script waiting for it; returns their indices.
    pub fn record(
        &mut self,
        target: ReplayTarget,
        beacon: usize,
        now_us: u64,
        original: u64,
        bytes: Vec<u8>,
    ) -> Vec<usize> {
        let takers: Vec<usize> = (0..self.plans.len())
            .filter(|&i| self.wants(i, target, beacon, now_us))
            .collect();
        for &i in &takers {
            self.recordings[i] = Some(Recording {
                bytes: bytes.clone(),
                original,
            });
        }
        takers
    }

    pub fn recording(&self, i: usize) -> Option<&Recording> {
        self.recordings[i].as_ref()
    }

    pub fn jammed(&self, beacon: usize, now_us: u64) -> [bool; CHANNELS] {
        let mut out = [false; CHANNELS];
        for plan in &self.plans {
            if let Plan::Jam {
                beacon: b,
                channels,
                from_us,
                to_us,
            } = plan
            {
                if *b == beacon && (*from_us..*to_us).contains(&now_us) {
                    for c in 0..CHANNELS {
                        out[c] |= channels[c];
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Replay,
    Wormhole,
    Dos,
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GameKind::Replay => "replay",
            GameKind::Wormhole => "wormhole",
            GameKind::Dos => "dos",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub ok: bool,
}

impl Check {
    fn new(name: impl Into<String>, expected: impl fmt::Display, observed: impl fmt::Display, ok: bool) -> Self {
        Check {
            name: name.into(),
            expected: expected.to_string(),
            observed: observed.to_string(),
            ok,
        }
    }

    fn equal(name: impl Into<String>, expected: impl fmt::Display, observed: impl fmt::Display) -> Self {
        let (e, o) = (expected.to_string(), observed.to_string());
        let ok = e == o;
        Check {
            name: name.into(),
            expected: e,
            observed: o,
            ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub game: GameKind,
    pub attacks: Vec<usize>,
    /// A retransmission stayed in the place and period of its original.
    pub control: bool,
    /// The verdict depends on the service's nonce cache.
    pub replay_cache_extension: bool,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl GameOutcome {
    fn from_checks(game: GameKind, attacks: Vec<usize>, control: bool, extension: bool, checks: Vec<Check>) -> Self {
        let reason = checks
            .iter()
            .find(|c| !c.ok)
            .map(|c| format!("{}: expected {}, observed {}", c.name, c.expected, c.observed));
        GameOutcome {
            game,
            attacks,
            control,
            replay_cache_extension: extension,
            checks,
            verdict: if reason.is_none() { Verdict::Pass } else { Verdict::Fail },
            reason,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug)]
struct SentBroadcast {
    t_us: u64,
    zone: String,
    origin: String,
    period: u64,
    attack: Option<usize>,
}

#[derive(Clone, Debug)]
struct SentLogin {
    t_us: u64,
    in_reply_to: Option<u64>,
    to_beacon: String,
    period: u64,
    /// Set for attacker retransmissions: (attack, original login id).
    attacker: Option<(usize, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum LoginOutcome {
    Authenticated { beacon: String, period: u64 },
    Rejected(String),
}

impl fmt::Display for LoginOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoginOutcome::Authenticated { .. } => f.write_str("authenticated"),
            LoginOutcome::Rejected(r) => f.write_str(r),
        }
    }
}

/// Indexed view of an event log.
struct LogView<'a> {
    entries: &'a [LogEntry],
    period_ms: u64,
    intervals: BTreeMap<String, u64>,
    attacks: BTreeMap<usize, AttackScript>,
    broadcasts: BTreeMap<u64, SentBroadcast>,
    logins: BTreeMap<u64, SentLogin>,
    outcomes: BTreeMap<u64, (u64, LoginOutcome)>,
    recorded: BTreeSet<usize>,
    failures: BTreeMap<usize, String>,
}

impl<'a> LogView<'a> {
    fn new(entries: &'a [LogEntry]) -> Self {
        let mut view = LogView {
            entries,
            period_ms: 1,
            intervals: BTreeMap::new(),
            attacks: BTreeMap::new(),
            broadcasts: BTreeMap::new(),
            logins: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            recorded: BTreeSet::new(),
            failures: BTreeMap::new(),
        };
        for e in entries {
            match &e.event {
                Event::ScenarioStarted { period_ms, beacons, .. } => {
                    view.period_ms = (*period_ms).max(1);
                    view.intervals = beacons.iter().map(|b| (b.label.clone(), b.interval_us)).collect();
                }
                Event::AttackScheduled { attack, script } => {
                    view.attacks.insert(*attack, script.clone());
                }
                Event::BroadcastSent {
                    msg_id,
                    beacon,
                    origin_beacon,
                    period,
                    attack,
                    ..
                } => {
                    view.broadcasts.insert(
                        *msg_id,
                        SentBroadcast {
                            t_us: e.t_us,
                            zone: beacon.clone(),
                            origin: origin_beacon.clone(),
                            period: *period,
                            attack: *attack,
                        },
                    );
                }
                Event::LoginSent {
                    login_id,
                    in_reply_to,
                    to_beacon,
                    period,
                    ..
                } => {
                    view.logins.insert(
                        *login_id,
                        SentLogin {
                            t_us: e.t_us,
                            in_reply_to: Some(*in_reply_to),
                            to_beacon: to_beacon.clone(),
                            period: *period,
                            attacker: None,
                        },
                    );
                }
                Event::AttackerLoginTransmit {
                    attack,
                    login_id,
                    original,
                    to_beacon,
                    ..
                } => {
                    let period = view.logins.get(original).map_or(u64::MAX, |l| l.period);
                    view.logins.insert(
                        *login_id,
                        SentLogin {
                            t_us: e.t_us,
                            in_reply_to: None,
                            to_beacon: to_beacon.clone(),
                            period,
                            attacker: Some((*attack, *original)),
                        },
                    );
                }
                Event::AttackerRecorded { attack, .. } => {
                    view.recorded.insert(*attack);
                }
                Event::AttackFailed { attack, reason } => {
                    view.failures.insert(*attack, reason.clone());
                }
                Event::Authenticated {
                    login_id,
                    beacon,
                    period,
                    ..
                } => {
                    view.outcomes.insert(
                        *login_id,
                        (
                            e.t_us,
                            LoginOutcome::Authenticated {
                                beacon: beacon.clone(),
                                period: *period,
                            },
                        ),
                    );
                }
                Event::Rejected { login_id, reason, .. } => {
                    view.outcomes
                        .insert(*login_id, (e.t_us, LoginOutcome::Rejected(reason.as_str().to_string())));
                }
                _ => {}
            }
        }
        view
    }

    fn period_at(&self, t_us: u64) -> u64 {
        t_us / 1000 / self.period_ms
    }

    fn outcome(&self, login_id: u64) -> String {
        self.outcomes
            .get(&login_id)
            .map_or_else(|| "no verdict".to_string(), |(_, o)| o.to_string())
    }

    /// Authenticated logins that carry attacker-originated traffic into a
    /// place or period other than the one it was made for.
    fn attributable(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for (&login_id, (_, outcome)) in &self.outcomes {
            let LoginOutcome::Authenticated { beacon, period } = outcome else {
                continue;
            };
            let Some(login) = self.logins.get(&login_id) else {
                continue;
            };
            let origin = match (login.attacker, login.in_reply_to) {
                (Some((_, original)), _) => self.logins.get(&original).map(|o| (o.to_beacon.clone(), o.period)),
                (None, Some(msg)) => match self.broadcasts.get(&msg) {
                    Some(b) if b.attack.is_some() => Some((b.origin.clone(), b.period)),
                    _ => continue,
                },
                (None, None) => continue,
            };
            match origin {
                Some((b, p)) if &b == beacon && p == *period => {}
                _ => out.push(login_id),
            }
        }
        out
    }

    fn attribution_check(&self) -> Check {
        let ids = self.attributable();
        Check::new(
            "attacker_attributable_authentications",
            0,
            if ids.is_empty() {
                "0".to_string()
            } else {
                format!("{} (logins {:?})", ids.len(), ids)
            },
            ids.is_empty(),
        )
    }

    fn count_in(&self, from_us: u64, to_us: u64, pred: impl Fn(&Event) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|e| e.t_us >= from_us && e.t_us < to_us && pred(&e.event))
            .count()
    }

    fn evaluate(&self, attack: usize) -> GameOutcome {
        let Some(script) = self.attacks.get(&attack) else {
            return GameOutcome::from_checks(
                GameKind::Replay,
                vec![attack],
                false,
                false,
                vec![Check::new("attack_scheduled", "present", "absent", false)],
            );
        };
        match script {
            AttackScript::Replay { target, .. } | AttackScript::Wormhole { target, .. } => {
                self.evaluate_retransmission(attack, script.game(), *target)
            }
            AttackScript::DosJam {
                area,
                channels,
                from_ms,
                to_ms,
            } => self.evaluate_jam(attack, area, channels, from_ms * 1000, to_ms * 1000),
        }
    }

    fn evaluate_retransmission(&self, attack: usize, game: GameKind, target: ReplayTarget) -> GameOutcome {
        let mut checks = Vec::new();
        let mut control = false;
        let mut extension = false;
        checks.push(Check::new(
            "recorded",
            "yes",
            if self.recorded.contains(&attack) { "yes" } else { "no" },
            self.recorded.contains(&attack),
        ));
        if let Some(reason) = self.failures.get(&attack) {
            checks.push(Check::new("retransmitted", "yes", reason, false));
        }
        match target {
            ReplayTarget::Broadcast => {
                let sent: Vec<(&u64, &SentBroadcast)> = self
                    .broadcasts
                    .iter()
                    .filter(|(_, b)| b.attack == Some(attack))
                    .collect();
                checks.push(Check::new("retransmitted", "yes", sent.len(), !sent.is_empty()));
                for (&msg_id, b) in sent {
                    let same = b.zone == b.origin && self.period_at(b.t_us) == b.period;
                    control |= same;
                    let expected = if same { "authenticated" } else { "token_mismatch" };
                    let replies: Vec<u64> = self
                        .logins
                        .iter()
                        .filter(|(_, l)| l.in_reply_to == Some(msg_id))
                        .map(|(&id, _)| id)
                        .collect();
                    checks.push(Check::new(
                        format!("honest_reply_to_broadcast_{}", msg_id),
                        "at least 1",
                        replies.len(),
                        !replies.is_empty(),
                    ));
                    for id in replies {
                        checks.push(Check::equal(format!("login_{}", id), expected, self.outcome(id)));
                    }
                }
            }
            ReplayTarget::LoginReply => {
                let sent: Vec<(&u64, &SentLogin)> = self
                    .logins
                    .iter()
                    .filter(|(_, l)| l.attacker.map(|(a, _)| a) == Some(attack))
                    .collect();
                checks.push(Check::new("retransmitted", "yes", sent.len(), !sent.is_empty()));
                for (&id, l) in sent {
                    let same_place =
                        l.attacker.and_then(|(_, o)| self.logins.get(&o)).map(|o| &o.to_beacon) == Some(&l.to_beacon);
                    let same = same_place && self.period_at(l.t_us) == l.period;
                    control |= same;
                    extension |= same;
                    let expected = if same { "replayed_nonce" } else { "token_mismatch" };
                    checks.push(Check::equal(format!("login_{}", id), expected, self.outcome(id)));
                }
            }
        }
        checks.push(self.attribution_check());
        GameOutcome::from_checks(game, vec![attack], control, extension, checks)
    }

    fn evaluate_jam(&self, attack: usize, area: &str, channels: &[u8], from_us: u64, to_us: u64) -> GameOutcome {
        let full = (0..CHANNELS as u8).all(|c| channels.contains(&c));
        let interval = self.intervals.get(area).copied().unwrap_or(0);
        let at_area_auth = |e: &Event| matches!(e, Event::Authenticated { beacon, .. } if beacon == area);
        let mut checks = Vec::new();
        let auth_during = self.count_in(from_us, to_us, at_area_auth);
        if full {
            checks.push(Check::new("authenticated_during_jam", 0, auth_during, auth_during == 0));
            let received = self.count_in(
                from_us,
                to_us,
                |e| matches!(e, Event::BroadcastReceived { beacon, .. } if beacon == area),
            );
            checks.push(Check::new("broadcasts_received_during_jam", 0, received, received == 0));
            let deadline = from_us + 3 * interval;
            let fallback = self
                .entries
                .iter()
                .find(|e| {
                    e.t_us >= from_us
                        && e.t_us < to_us
                        && matches!(&e.event, Event::FallbackRequired { beacon, .. } if beacon == area)
                })
                .map(|e| e.t_us);
            checks.push(Check::new(
                "fallback_required",
                format!("by t_us {}", deadline),
                fallback.map_or_else(|| "none".to_string(), |t| format!("at t_us {}", t)),
                fallback.is_some_and(|t| t <= deadline),
            ));
            let recovered = self.count_in(to_us, u64::MAX, at_area_auth);
            checks.push(Check::new(
                "authenticated_after_jam",
                "at least 1",
                recovered,
                recovered > 0,
            ));
        } else {
            let jammed = self.count_in(
                from_us,
                to_us,
                |e| matches!(e, Event::BroadcastJammed { beacon, .. } if beacon == area),
            );
            checks.push(Check::new("broadcasts_lost_during_jam", 0, jammed, jammed == 0));
            checks.push(Check::new(
                "authenticated_during_jam",
                "at least 1",
                auth_during,
                auth_during > 0,
            ));
        }
        GameOutcome::from_checks(GameKind::Dos, vec![attack], false, false, checks)
    }
}

/// One outcome per attack script found in the log.
pub fn evaluate_attacks(log: &[LogEntry]) -> Vec<GameOutcome> {
    let view = LogView::new(log);
    view.attacks.keys().map(|&a| view.evaluate(a)).collect()
}

/// Login ids of Authenticated events attributable to the attacker.
pub fn attacker_attributable(log: &[LogEntry]) -> Vec<u64> {
    LogView::new(log).attributable()
}

/// Structural properties every log must have.
pub fn check_invariants(log: &[LogEntry]) -> Vec<String> {
    let view = LogView::new(log);
    let mut out = Vec::new();
    for id in view.attributable() {
        out.push(format!("login {} authenticated attacker-originated traffic", id));
    }
    let mut seen_broadcasts = BTreeSet::new();
    let mut seen_logins = BTreeSet::new();
    let mut received: BTreeMap<(u64, String), String> = BTreeMap::new();
    let mut last_t = 0;
    for e in log {
        if e.t_us < last_t {
            out.push(format!("time goes backwards at t_us {}", e.t_us));
        }
        last_t = e.t_us;
        match &e.event {
            Event::BeaconTick { beacon, tick } => {
                let interval = view.intervals.get(beacon).copied().unwrap_or(0);
                if e.t_us != tick * interval {
                    out.push(format!("tick {} of {} at t_us {}", tick, beacon, e.t_us));
                }
            }
            Event::BroadcastSent { msg_id, .. } => {
                seen_broadcasts.insert(*msg_id);
            }
            Event::BroadcastReceived { msg_id, user, beacon } => {
                if !seen_broadcasts.contains(msg_id) {
                    out.push(format!("broadcast {} delivered before it was sent", msg_id));
                }
                received.insert((*msg_id, user.clone()), beacon.clone());
            }
            Event::LoginSent {
                login_id,
                user,
                in_reply_to,
                to_beacon,
                ..
            } => {
                seen_logins.insert(*login_id);
                if received.get(&(*in_reply_to, user.clone())) != Some(to_beacon) {
                    out.push(format!(
                        "login {} sent to {} without hearing it there",
                        login_id, to_beacon
                    ));
                }
            }
            Event::AttackerLoginTransmit { login_id, .. } => {
                seen_logins.insert(*login_id);
            }
            Event::Authenticated { login_id, .. } | Event::Rejected { login_id, .. }
                if !seen_logins.contains(login_id) =>
            {
                out.push(format!("login {} verified before it was sent", login_id));
            }
            _ => {}
        }
    }
    out
}

/// Counts shown after a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub broadcasts: u64,
    pub logins_attempted: u64,
    pub authenticated: u64,
    pub rejections: BTreeMap<String, u64>,
    pub no_action: BTreeMap<String, u64>,
    pub sessions_established: u64,
    pub travels: u64,
    pub travel_rejections: u64,
    pub sessions_expired: u64,
    pub fallbacks: u64,
    pub games: Vec<(String, Verdict)>,
    pub invariant_violations: u64,
}

impl Summary {
    pub fn from_log(log: &[LogEntry]) -> Self {
        let mut s = Summary::default();
        for e in log {
            match &e.event {
                Event::BroadcastSent { .. } => s.broadcasts += 1,
                Event::Authenticated { .. } => {
                    s.logins_attempted += 1;
                    s.authenticated += 1;
                }
                Event::Rejected { reason, .. } => {
                    s.logins_attempted += 1;
                    *s.rejections.entry(reason.as_str().to_string()).or_default() += 1;
                }
                Event::NoAction { reason, .. } => {
                    let key = serde_json::to_value(reason)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default();
                    *s.no_action.entry(key).or_default() += 1;
                }
                Event::SessionEstablished { .. } => s.sessions_established += 1,
                Event::SessionTraveled { .. } => s.travels += 1,
                Event::TravelRejected { .. } => s.travel_rejections += 1,
                Event::SessionExpired { .. } => s.sessions_expired += 1,
                Event::FallbackRequired { .. } => s.fallbacks += 1,
                Event::InvariantViolation { .. } => s.invariant_violations += 1,
                Event::GameVerdict { outcome } => {
                    let attacks: Vec<String> = outcome.attacks.iter().map(|a| a.to_string()).collect();
                    s.games
                        .push((format!("{} [{}]", outcome.game, attacks.join(",")), outcome.verdict));
                }
                _ => {}
            }
        }
        s
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "broadcasts:            {}", self.broadcasts)?;
        writeln!(f, "logins attempted:      {}", self.logins_attempted)?;
        writeln!(f, "logins authenticated:  {}", self.authenticated)?;
        for (reason, n) in &self.rejections {
            writeln!(f, "  rejected {:<20} {}", reason, n)?;
        }
        for (reason, n) in &self.no_action {
            writeln!(f, "  no action {:<19} {}", reason, n)?;
        }
        writeln!(f, "sessions established:  {}", self.sessions_established)?;
        writeln!(f, "travels:               {}", self.travels)?;
        writeln!(f, "travel rejections:     {}", self.travel_rejections)?;
        writeln!(f, "sessions expired:      {}", self.sessions_expired)?;
        writeln!(f, "fallbacks required:    {}", self.fallbacks)?;
        for (game, verdict) in &self.games {
            let v = if *verdict == Verdict::Pass { "PASS" } else { "FAIL" };
            writeln!(f, "game {:<17} {}", game, v)?;
        }
        write!(f, "invariant violations:  {}", self.invariant_violations)
    }
}

/// 0 iff every game passed and no invariant was violated.
pub fn exit_code(log: &[LogEntry]) -> i32 {
    let bad = log.iter().any(|e| match &e.event {
        Event::InvariantViolation { .. } => true,
        Event::GameVerdict { outcome } => !outcome.passed(),
        _ => false,
    });
    i32::from(bad)
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub log: Vec<LogEntry>,
    pub outcomes: Vec<GameOutcome>,
    pub violations: Vec<String>,
}

impl RunReport {
    pub fn summary(&self) -> Summary {
        Summary::from_log(&self.log)
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(&self.log)
    }

    pub fn to_jsonl(&self) -> String {
        crate::simworld::to_jsonl(&self.log)
    }
}

/// Runs the world, then appends invariant violations and one verdict per
/// scripted attack to the log.
pub fn run_world(world: World) -> RunReport {
    let end_us = world.config().duration_ms * 1000;
    let mut log = world.run();
    let violations = check_invariants(&log);
    let outcomes = evaluate_attacks(&log);
    let t_us = log.last().map_or(end_us, |e| e.t_us.max(end_us));
    for message in &violations {
        log.push(LogEntry {
            t_us,
            event: Event::InvariantViolation {
                message: message.clone(),
            },
        });
    }
    for outcome in &outcomes {
        log.push(LogEntry {
            t_us,
            event: Event::GameVerdict {
                outcome: outcome.clone(),
            },
        });
    }
    RunReport {
        log,
        outcomes,
        violations,
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario has no {0} attack")]
    NoAttack(GameKind),
    #[error("no qualified user in range of {beacon} at t_us {t_us}")]
    NoColocatedUser { beacon: String, t_us: u64 },
    #[error("ranges of {from} and {to} overlap")]
    OverlappingRanges { from: String, to: String },
    #[error("replay at {replay_at_ms} ms would not follow the recording at {record_ms} ms")]
    ReplayBeforeRecording { replay_at_ms: i64, record_ms: u64 },
}

/// A game's combined verdict plus the full run.
#[derive(Clone, Debug)]
pub struct GameRun {
    pub outcome: GameOutcome,
    pub report: RunReport,
}

/// First tick of `beacon` at or after `t_ms`.
fn first_tick_us(scenario: &Scenario, beacon: &str, t_ms: u64) -> Result<u64, GameError> {
    let spec = scenario
        .beacon(beacon)
        .ok_or_else(|| ScenarioError::UnknownBeacon(beacon.to_string()))?;
    let interval = spec.interval_us();
    Ok((t_ms * 1000).div_ceil(interval) * interval)
}

fn require_colocated(
    scenario: &Scenario,
    env: &Environment,
    area: &str,
    policy_beacon: &str,
    t_us: u64,
) -> Result<(), GameError> {
    if scenario
        .qualified_users_in_range(env, area, policy_beacon, t_us)?
        .is_empty()
    {
        return Err(GameError::NoColocatedUser {
            beacon: area.to_string(),
            t_us,
        });
    }
    Ok(())
}

fn finish(game: GameKind, report: RunReport, extra: Vec<Check>) -> GameRun {
    let mut checks = Vec::new();
    let mut control = false;
    let mut extension = false;
    let mut attacks = Vec::new();
    for o in &report.outcomes {
        attacks.extend(&o.attacks);
        control |= o.control;
        extension |= o.replay_cache_extension;
        for c in &o.checks {
            let mut c = c.clone();
            c.name = format!("attack{}.{}", o.attacks[0], c.name);
            checks.push(c);
        }
    }
    checks.extend(extra);
    checks.push(Check::new(
        "invariant_violations",
        0,
        report.violations.len(),
        report.violations.is_empty(),
    ));
    let outcome = GameOutcome::from_checks(game, attacks, control, extension, checks);
    let mut report = report;
    let t_us = report.log.last().map_or(0, |e| e.t_us);
    report.log.push(LogEntry {
        t_us,
        event: Event::GameVerdict {
            outcome: outcome.clone(),
        },
    });
    GameRun { outcome, report }
}

/// Replay game. Every replay script in `scenario` is run against both the
/// broadcast and the login reply, with the retransmission placed `delta_ms`
/// after the end of the recorded token's period. Non-positive `delta_ms`
/// gives the control run inside the same period.
pub fn run_replay_game(scenario: &Scenario, env: &Environment, delta_ms: i64) -> Result<GameRun, GameError> {
    let period = scenario.token.period_ms;
    let mut attacks = Vec::new();
    let mut end_ms = scenario.duration_ms;
    let mut seen = BTreeSet::new();
    for script in &scenario.attacks {
        let AttackScript::Replay {
            beacon, record_from_ms, ..
        } = script
        else {
            continue;
        };
        if !seen.insert((beacon.clone(), *record_from_ms)) {
            continue;
        }
        let record_us = first_tick_us(scenario, beacon, *record_from_ms)?;
        require_colocated(scenario, env, beacon, beacon, record_us)?;
        let p = record_us / 1000 / period;
        let replay_at = ((p + 1) * period) as i64 + delta_ms;
        if replay_at < 0 || replay_at as u64 * 1000 <= record_us {
            return Err(GameError::ReplayBeforeRecording {
                replay_at_ms: replay_at,
                record_ms: record_us / 1000,
            });
        }
        let replay_at_ms = replay_at as u64;
        end_ms = end_ms.max(replay_at_ms + period);
        for target in [ReplayTarget::Broadcast, ReplayTarget::LoginReply] {
            attacks.push(AttackScript::Replay {
                beacon: beacon.clone(),
                record_from_ms: *record_from_ms,
                replay_at_ms,
                target,
            });
        }
    }
    if attacks.is_empty() {
        return Err(GameError::NoAttack(GameKind::Replay));
    }
    let mut s = scenario.clone();
    s.attacks = attacks;
    s.duration_ms = end_ms;
    let report = run_world(s.build(env, None)?);
    Ok(finish(GameKind::Replay, report, Vec::new()))
}

/// Wormhole game. Every wormhole script is run against both message kinds.
/// Source and destination areas must not overlap unless they are the same
/// beacon, which is the control case.
pub fn run_wormhole_game(scenario: &Scenario, env: &Environment) -> Result<GameRun, GameError> {
    let mut attacks = Vec::new();
    let mut end_ms = scenario.duration_ms;
    let mut seen = BTreeSet::new();
    for script in &scenario.attacks {
        let AttackScript::Wormhole {
            from,
            to,
            record_from_ms,
            tunnel_delay_ms,
            ..
        } = script
        else {
            continue;
        };
        if !seen.insert((from.clone(), to.clone(), *record_from_ms, *tunnel_delay_ms)) {
            continue;
        }
        let (l, p) = (
            scenario
                .beacon(from)
                .ok_or_else(|| ScenarioError::UnknownBeacon(from.clone()))?,
            scenario
                .beacon(to)
                .ok_or_else(|| ScenarioError::UnknownBeacon(to.clone()))?,
        );
        if from != to && l.pos().distance(&p.pos()) <= l.range_m + p.range_m {
            return Err(GameError::OverlappingRanges {
                from: from.clone(),
                to: to.clone(),
            });
        }
        let record_us = first_tick_us(scenario, from, *record_from_ms)?;
        require_colocated(scenario, env, from, from, record_us)?;
        require_colocated(scenario, env, to, from, record_us + tunnel_delay_ms * 1000)?;
        end_ms = end_ms.max(record_us / 1000 + tunnel_delay_ms + scenario.token.period_ms);
        for target in [ReplayTarget::Broadcast, ReplayTarget::LoginReply] {
            attacks.push(AttackScript::Wormhole {
                from: from.clone(),
                to: to.clone(),
                record_from_ms: *record_from_ms,
                tunnel_delay_ms: *tunnel_delay_ms,
                target,
            });
        }
    }
    if attacks.is_empty() {
        return Err(GameError::NoAttack(GameKind::Wormhole));
    }
    let mut s = scenario.clone();
    s.attacks = attacks;
    s.duration_ms = end_ms;
    let report = run_world(s.build(env, None)?);
    Ok(finish(GameKind::Wormhole, report, Vec::new()))
}

/// Jamming game. Passes iff the scenario scripts both a partial and a full
/// jam and each behaves as expected.
pub fn run_dos_game(scenario: &Scenario, env: &Environment) -> Result<GameRun, GameError> {
    let jams: Vec<&AttackScript> = scenario
        .attacks
        .iter()
        .filter(|a| matches!(a, AttackScript::DosJam { .. }))
        .collect();
    if jams.is_empty() {
        return Err(GameError::NoAttack(GameKind::Dos));
    }
    let full = jams
        .iter()
        .filter(|a| match a {
            AttackScript::DosJam { channels, .. } => (0..CHANNELS as u8).all(|c| channels.contains(&c)),
            _ => false,
        })
        .count();
    let partial = jams.len() - full;
    let mut end_ms = scenario.duration_ms;
    for a in &jams {
        if let AttackScript::DosJam { to_ms, .. } = a {
            end_ms = end_ms.max(to_ms + scenario.token.period_ms);
        }
    }
    let mut s = scenario.clone();
    s.attacks = jams.into_iter().cloned().collect();
    s.duration_ms = end_ms;
    let report = run_world(s.build(env, None)?);
    let extra = vec![
        Check::new("partial_jams", "at least 1", partial, partial > 0),
        Check::new("full_jams", "at least 1", full, full > 0),
    ];
    Ok(finish(GameKind::Dos, report, extra))
}
