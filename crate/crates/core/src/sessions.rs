//! Authenticated sessions: expiry, keepalive and travel between adjacent
//! beacon cells.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Authentication;
use crate::tokens::BeaconId;

pub const DEFAULT_TTL_MS: u64 = 300_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOrigin {
    FullLogin,
    Traveled { from: BeaconId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub username: String,
    pub beacon_id: BeaconId,
    pub established_at_ms: u64,
    pub expires_at_ms: u64,
    pub origin: SessionOrigin,
}

impl Session {
    pub fn is_active(&self, now_ms: u64) -> bool {
        now_ms < self.expires_at_ms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelRejected {
    #[error("no active session")]
    SessionExpired,
    #[error("beacons are not adjacent")]
    NonAdjacent,
    #[error("login belongs to another user")]
    UserMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("self-loop on {0}")]
pub struct SelfLoop(pub BeaconId);

/// Undirected neighbour relation between beacon cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdjacencyGraph {
    edges: BTreeMap<BeaconId, BTreeSet<BeaconId>>,
}

impl AdjacencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: BeaconId, b: BeaconId) -> Result<(), SelfLoop> {
        if a == b {
            return Err(SelfLoop(a));
        }
        self.edges.entry(a).or_default().insert(b);
        self.edges.entry(b).or_default().insert(a);
        Ok(())
    }

    pub fn adjacent(&self, a: &BeaconId, b: &BeaconId) -> bool {
        self.edges.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn neighbours(&self, a: &BeaconId) -> impl Iterator<Item = &BeaconId> {
        self.edges.get(a).into_iter().flatten()
    }
}

/// What `travel` did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TravelKind {
    /// Same beacon; expiry refreshed.
    Keepalive,
    /// Moved to an adjacent beacon.
    Relocated { from: BeaconId },
}

/// At most one session per user.
#[derive(Clone, Debug)]
pub struct SessionStore {
    sessions: BTreeMap<String, Session>,
    ttl_ms: u64,
    sliding: bool,
}

impl Default for SessionStore {
    fn default() -> Self {
        SessionStore::new(DEFAULT_TTL_MS, true)
    }
}

impl SessionStore {
    /// `sliding`: travel and keepalive push the expiry to `now + ttl`;
    /// otherwise the original deadline is kept.
    pub fn new(ttl_ms: u64, sliding: bool) -> Self {
        assert!(ttl_ms > 0, "ttl must be positive");
        SessionStore {
            sessions: BTreeMap::new(),
            ttl_ms,
            sliding,
        }
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    /// Starts a session from a full login, replacing any previous one.
    pub fn establish(&mut self, auth: &Authentication, now_ms: u64) -> Session {
        let session = Session {
            username: auth.username.clone(),
            beacon_id: auth.beacon_id,
            established_at_ms: now_ms,
            expires_at_ms: now_ms + self.ttl_ms,
            origin: SessionOrigin::FullLogin,
        };
        self.sessions.insert(auth.username.clone(), session.clone());
        session
    }

    /// The user's session if it has not expired.
    pub fn lookup(&self, username: &str, now_ms: u64) -> Option<&Session> {
        self.sessions.get(username).filter(|s| s.is_active(now_ms))
    }

    /// Moves an active session to the beacon of a fresh location-only
    /// authentication, if that beacon is the current one or a neighbour.
    pub fn travel(
        &mut self,
        auth: &Authentication,
        graph: &AdjacencyGraph,
        now_ms: u64,
    ) -> Result<(Session, TravelKind), TravelRejected> {
        let ttl = self.ttl_ms;
        let sliding = self.sliding;
        let session = self
            .sessions
            .get_mut(&auth.username)
            .filter(|s| s.is_active(now_ms))
            .ok_or(TravelRejected::SessionExpired)?;
        if session.username != auth.username {
            return Err(TravelRejected::UserMismatch);
        }
        let kind = if session.beacon_id == auth.beacon_id {
            TravelKind::Keepalive
        } else if graph.adjacent(&session.beacon_id, &auth.beacon_id) {
            let from = session.beacon_id;
            session.beacon_id = auth.beacon_id;
            session.origin = SessionOrigin::Traveled { from };
            TravelKind::Relocated { from }
        } else {
            return Err(TravelRejected::NonAdjacent);
        };
        if sliding {
            session.established_at_ms = now_ms;
            session.expires_at_ms = now_ms + ttl;
        }
        Ok((session.clone(), kind))
    }

    /// Removes and returns every session with `expires_at <= now`.
    pub fn sweep_expired(&mut self, now_ms: u64) -> Vec<Session> {
        let expired: Vec<String> = self
            .sessions
            .iter()
            .filter(|(_, s)| !s.is_active(now_ms))
            .map(|(u, _)| u.clone())
            .collect();
        expired.into_iter().filter_map(|u| self.sessions.remove(&u)).collect()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::PeriodIndex;

    fn auth(user: &str, beacon: &str) -> Authentication {
        Authentication {
            username: user.to_string(),
            beacon_id: BeaconId::from_name(beacon),
            period: PeriodIndex(0),
        }
    }

    fn graph() -> AdjacencyGraph {
        let mut g = AdjacencyGraph::new();
        g.add_edge(BeaconId::from_name("b1"), BeaconId::from_name("b2"))
            .unwrap();
        g.add_edge(BeaconId::from_name("b2"), BeaconId::from_name("b3"))
            .unwrap();
        g
    }

    #[test]
    fn establish_sets_expiry_from_ttl() {
        let mut store = SessionStore::default();
        let s = store.establish(&auth("alice", "b1"), 1_000);
        assert_eq!(s.expires_at_ms, 301_000);
        assert_eq!(s.origin, SessionOrigin::FullLogin);
    }

    #[test]
    fn second_establish_replaces_first() {
        let mut store = SessionStore::default();
        store.establish(&auth("alice", "b1"), 0);
        store.establish(&auth("alice", "b2"), 10);
        assert_eq!(store.len(), 1);
        assert_eq!(store.lookup("alice", 20).unwrap().beacon_id, BeaconId::from_name("b2"));
    }

    #[test]
    fn expired_sessions_are_invisible() {
        let mut store = SessionStore::new(100, true);
        store.establish(&auth("alice", "b1"), 0);
        assert!(store.lookup("alice", 99).is_some());
        assert!(store.lookup("alice", 100).is_none());
    }

    #[test]
    fn travel_to_neighbour_relocates() {
        let mut store = SessionStore::new(1_000, true);
        store.establish(&auth("alice", "b1"), 0);
        let (s, kind) = store.travel(&auth("alice", "b2"), &graph(), 500).unwrap();
        assert_eq!(s.beacon_id, BeaconId::from_name("b2"));
        assert_eq!(
            kind,
            TravelKind::Relocated {
                from: BeaconId::from_name("b1")
            }
        );
        assert_eq!(
            s.origin,
            SessionOrigin::Traveled {
                from: BeaconId::from_name("b1")
            }
        );
        assert_eq!(s.expires_at_ms, 1_500);
        assert_eq!(s.username, "alice");
    }

    #[test]
    fn travel_to_non_neighbour_is_rejected() {
        let mut store = SessionStore::new(1_000, true);
        store.establish(&auth("alice", "b1"), 0);
        assert_eq!(
            store.travel(&auth("alice", "b3"), &graph(), 10),
            Err(TravelRejected::NonAdjacent)
        );
        assert_eq!(store.lookup("alice", 10).unwrap().beacon_id, BeaconId::from_name("b1"));
    }

    #[test]
    fn keepalive_refreshes_expiry_only() {
        let mut store = SessionStore::new(1_000, true);
        store.establish(&auth("alice", "b1"), 0);
        let (s, kind) = store.travel(&auth("alice", "b1"), &graph(), 900).unwrap();
        assert_eq!(kind, TravelKind::Keepalive);
        assert_eq!(s.beacon_id, BeaconId::from_name("b1"));
        assert_eq!(s.expires_at_ms, 1_900);
    }

    #[test]
    fn fixed_deadline_mode() {
        let mut store = SessionStore::new(1_000, false);
        store.establish(&auth("alice", "b1"), 0);
        let (s, _) = store.travel(&auth("alice", "b2"), &graph(), 900).unwrap();
        assert_eq!(s.expires_at_ms, 1_000);
    }

    #[test]
    fn travel_needs_an_active_session() {
        let mut store = SessionStore::new(100, true);
        assert_eq!(
            store.travel(&auth("alice", "b1"), &graph(), 0),
            Err(TravelRejected::SessionExpired)
        );
        store.establish(&auth("alice", "b1"), 0);
        assert_eq!(
            store.travel(&auth("alice", "b2"), &graph(), 100),
            Err(TravelRejected::SessionExpired)
        );
    }

    #[test]
    fn sweep_returns_and_removes_expired() {
        let mut store = SessionStore::new(100, true);
        assert!(store.sweep_expired(0).is_empty());
        store.establish(&auth("alice", "b1"), 0);
        store.establish(&auth("bob", "b1"), 50);
        let swept = store.sweep_expired(120);
        assert_eq!(swept.len(), 1);
        assert_eq!(swept[0].username, "alice");
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn graph_is_symmetric_without_self_loops() {
        let g = graph();
        let (b1, b2, b3) = (
            BeaconId::from_name("b1"),
            BeaconId::from_name("b2"),
            BeaconId::from_name("b3"),
        );
        assert!(g.adjacent(&b1, &b2) && g.adjacent(&b2, &b1));
        assert!(!g.adjacent(&b1, &b3));
        assert!(AdjacencyGraph::new().add_edge(b1, b1).is_err());
        assert_eq!(g.neighbours(&b2).count(), 2);
    }
}
