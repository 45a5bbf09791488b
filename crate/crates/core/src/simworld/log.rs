use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{AttackScript, GameOutcome, ReplayTarget};
use crate::protocol::{NoActionReason, RejectReason};
use crate::sessions::TravelRejected;

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t_us: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeaconInfo {
    pub label: String,
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub range_m: f64,
    pub interval_us: u64,
    pub policy: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transmitter {
    Beacon,
    Attacker,
}

/// Beacons and users are named by their scenario labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    ScenarioStarted {
        seed: u64,
        period_ms: u64,
        skew_periods: u8,
        ttl_ms: u64,
        sliding: bool,
        duration_ms: u64,
        beacons: Vec<BeaconInfo>,
        users: Vec<String>,
    },
    AttackScheduled {
        attack: usize,
        script: AttackScript,
    },
    BeaconTick {
        beacon: String,
        tick: u64,
    },
    BroadcastSent {
        msg_id: u64,
        /// Area the transmission is heard in.
        beacon: String,
        /// Beacon named in the message header.
        origin_beacon: String,
        period: u64,
        transmitter: Transmitter,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        original: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        attack: Option<usize>,
        channel: u8,
        digest: String,
    },
    BroadcastJammed {
        beacon: String,
        tick: u64,
        channels: Vec<u8>,
    },
    BroadcastReceived {
        msg_id: u64,
        user: String,
        beacon: String,
    },
    NoAction {
        msg_id: u64,
        user: String,
        reason: NoActionReason,
    },
    LoginSent {
        login_id: u64,
        user: String,
        in_reply_to: u64,
        to_beacon: String,
        period: u64,
        digest: String,
    },
    AttackerRecorded {
        attack: usize,
        target: ReplayTarget,
        beacon: String,
        original: u64,
        period: u64,
        digest: String,
    },
    AttackerLoginTransmit {
        attack: usize,
        login_id: u64,
        original: u64,
        to_beacon: String,
        digest: String,
    },
    AttackFailed {
        attack: usize,
        reason: String,
    },
    Authenticated {
        login_id: u64,
        user: String,
        beacon: String,
        period: u64,
    },
    Rejected {
        login_id: u64,
        beacon: String,
        reason: RejectReason,
    },
    SessionEstablished {
        user: String,
        beacon: String,
        expires_at_ms: u64,
    },
    SessionKeepalive {
        user: String,
        beacon: String,
        expires_at_ms: u64,
    },
    SessionTraveled {
        user: String,
        from: String,
        to: String,
        expires_at_ms: u64,
    },
    TravelRejected {
        user: String,
        from: String,
        to: String,
        reason: TravelRejected,
    },
    SessionExpired {
        user: String,
        beacon: String,
    },
    FallbackRequired {
        user: String,
        beacon: String,
        missed: u32,
    },
    JamStarted {
        attack: usize,
        beacon: String,
        channels: Vec<u8>,
        to_ms: u64,
    },
    JamEnded {
        attack: usize,
        beacon: String,
    },
    InvariantViolation {
        message: String,
    },
    GameVerdict {
        outcome: GameOutcome,
    },
}

impl Event {
    /// The `kind` tag as written to the log.
    pub fn kind(&self) -> &'static str {
        match self {
            Event::ScenarioStarted { .. } => "scenario_started",
            Event::AttackScheduled { .. } => "attack_scheduled",
            Event::BeaconTick { .. } => "beacon_tick",
            Event::BroadcastSent { .. } => "broadcast_sent",
            Event::BroadcastJammed { .. } => "broadcast_jammed",
            Event::BroadcastReceived { .. } => "broadcast_received",
            Event::NoAction { .. } => "no_action",
            Event::LoginSent { .. } => "login_sent",
            Event::AttackerRecorded { .. } => "attacker_recorded",
            Event::AttackerLoginTransmit { .. } => "attacker_login_transmit",
            Event::AttackFailed { .. } => "attack_failed",
            Event::Authenticated { .. } => "authenticated",
            Event::Rejected { .. } => "rejected",
            Event::SessionEstablished { .. } => "session_established",
            Event::SessionKeepalive { .. } => "session_keepalive",
            Event::SessionTraveled { .. } => "session_traveled",
            Event::TravelRejected { .. } => "travel_rejected",
            Event::SessionExpired { .. } => "session_expired",
            Event::FallbackRequired { .. } => "fallback_required",
            Event::JamStarted { .. } => "jam_started",
            Event::JamEnded { .. } => "jam_ended",
            Event::InvariantViolation { .. } => "invariant_violation",
            Event::GameVerdict { .. } => "game_verdict",
        }
    }
}

/// First 8 bytes of SHA-256, hex encoded.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn to_jsonl(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<LogEntry>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
