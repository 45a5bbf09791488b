use std::collections::{BTreeMap, BTreeSet};

use locauth_abe::Attribute;
use rand::{CryptoRng, RngCore};

use super::crypto::{auth_hash, digest_eq, inner_key, open, outer_key, NONCE_BYTES};
use super::registry::{Registry, UserRecord};
use super::wire::{BroadcastMessage, LoginMessage, OuterPlaintext, AUTH_HASH_BYTES};
use super::{
    broadcast_step, enroll_user, register_backend, AuthResult, Authentication, Authority, BeaconPolicyConfig,
    ProtocolError, Registration, RejectReason,
};
use crate::tokens::{derive_c_token, derive_session_token, BeaconId, MasterSecret, PeriodIndex, TokenConfig};

/// Outer-layer nonces seen in the current period, per beacon.
#[derive(Clone, Debug, Default)]
pub struct ReplayCache {
    period: Option<PeriodIndex>,
    seen: BTreeSet<(BeaconId, PeriodIndex, [u8; NONCE_BYTES])>,
}

impl ReplayCache {
    /// Drops every entry once the clock enters a later period.
    pub fn roll(&mut self, current: PeriodIndex) {
        if self.period.is_none_or(|p| current > p) {
            self.seen.clear();
            self.period = Some(current);
        }
    }

    /// Records an entry; false if it was already present.
    pub fn insert(&mut self, beacon: BeaconId, period: PeriodIndex, nonce: [u8; NONCE_BYTES]) -> bool {
        self.seen.insert((beacon, period, nonce))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Verifies a login received by the beacon `received_at`.
///
/// The session token is regenerated for the receiving beacon and the
/// service's own current period(s), never taken from the message header, so a
/// login built from a stale or relocated broadcast fails to open.
pub fn service_verify_login(
    bytes: &[u8],
    received_at: BeaconId,
    registry: &Registry,
    master_secret: &MasterSecret,
    token_config: &TokenConfig,
    replay: &mut ReplayCache,
    now_ms: u64,
) -> AuthResult {
    let msg = match LoginMessage::from_bytes(bytes) {
        Ok(m) => m,
        Err(_) => return AuthResult::Rejected(RejectReason::MalformedMessage),
    };
    replay.roll(token_config.period_at(now_ms));

    let header = msg.header();
    let opened = token_config.acceptable_periods(now_ms).into_iter().find_map(|period| {
        let token = derive_session_token(master_secret, &received_at, period);
        open(&outer_key(&token), &msg.outer_nonce, &msg.outer_ct, &header).map(|pt| (period, token, pt))
    });
    let Some((period, token, outer_bytes)) = opened else {
        return AuthResult::Rejected(RejectReason::TokenMismatch);
    };
    if !replay.insert(received_at, period, msg.outer_nonce) {
        return AuthResult::Rejected(RejectReason::ReplayedNonce);
    }
    let outer = match OuterPlaintext::from_bytes(&outer_bytes) {
        Ok(o) => o,
        Err(_) => return AuthResult::Rejected(RejectReason::MalformedMessage),
    };
    let Some(record) = registry.get(&outer.username) else {
        return AuthResult::Rejected(RejectReason::UnknownUser);
    };
    let c_token = derive_c_token(&record.seed(), period);
    let Some(received_hash) = open(&inner_key(&c_token), &outer.inner_nonce, &outer.inner_ct, &[]) else {
        return AuthResult::Rejected(RejectReason::CTokenMismatch);
    };
    if received_hash.len() != AUTH_HASH_BYTES {
        return AuthResult::Rejected(RejectReason::MalformedMessage);
    }
    let expected = auth_hash(&token, &record.pwd_verifier);
    if !digest_eq(&expected, &received_hash) {
        return AuthResult::Rejected(RejectReason::HashMismatch);
    }
    AuthResult::Authenticated(Authentication {
        username: record.username.clone(),
        beacon_id: received_at,
        period,
    })
}

/// The Loc-Auth service: key authority, username database, beacon policies
/// and replay cache. Mutating operations take `&mut self`, so one instance
/// serializes its verifications.
#[derive(Debug)]
pub struct LocAuthService {
    authority: Authority,
    token_config: TokenConfig,
    registry: Registry,
    policies: BTreeMap<BeaconId, BeaconPolicyConfig>,
    replay: ReplayCache,
}

impl LocAuthService {
    pub fn new(authority: Authority, token_config: TokenConfig) -> Self {
        Self::with_registry(authority, token_config, Registry::new())
    }

    pub fn with_registry(authority: Authority, token_config: TokenConfig, registry: Registry) -> Self {
        LocAuthService {
            authority,
            token_config,
            registry,
            policies: BTreeMap::new(),
            replay: ReplayCache::default(),
        }
    }

    pub fn authority(&self) -> &Authority {
        &self.authority
    }

    pub fn token_config(&self) -> &TokenConfig {
        &self.token_config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Installs or replaces the access rule broadcast by `beacon`.
    pub fn register_backend(
        &mut self,
        beacon: BeaconId,
        policy_text: &str,
    ) -> Result<&BeaconPolicyConfig, ProtocolError> {
        let config = register_backend(policy_text)?;
        self.policies.insert(beacon, config);
        Ok(&self.policies[&beacon])
    }

    pub fn policy(&self, beacon: &BeaconId) -> Option<&BeaconPolicyConfig> {
        self.policies.get(beacon)
    }

    pub fn register_user<R: RngCore + CryptoRng>(
        &mut self,
        username: &str,
        password: &str,
        attrs: &BTreeSet<Attribute>,
        rng: &mut R,
    ) -> Result<Registration, ProtocolError> {
        if self.registry.contains(username) {
            return Err(ProtocolError::DuplicateUser(username.to_string()));
        }
        let registration = enroll_user(&self.authority, username, password, attrs, rng)?;
        self.registry.insert(registration.record.clone())?;
        Ok(registration)
    }

    /// Adds an already-enrolled record, e.g. loaded from disk.
    pub fn add_record(&mut self, record: UserRecord) -> Result<(), ProtocolError> {
        self.registry.insert(record)
    }

    pub fn broadcast_step<R: RngCore + CryptoRng>(
        &self,
        beacon: BeaconId,
        now_ms: u64,
        rng: &mut R,
    ) -> Result<BroadcastMessage, ProtocolError> {
        let policy = self.policies.get(&beacon).ok_or(ProtocolError::NoPolicy(beacon))?;
        broadcast_step(
            beacon,
            policy,
            self.token_config.period_at(now_ms),
            &self.authority.master_secret,
            &self.authority.params,
            rng,
        )
    }

    pub fn verify_login(&mut self, bytes: &[u8], received_at: BeaconId, now_ms: u64) -> AuthResult {
        service_verify_login(
            bytes,
            received_at,
            &self.registry,
            &self.authority.master_secret,
            &self.token_config,
            &mut self.replay,
            now_ms,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_cache_clears_on_new_period() {
        let mut cache = ReplayCache::default();
        let b = BeaconId::from_name("b");
        cache.roll(PeriodIndex(1));
        assert!(cache.insert(b, PeriodIndex(1), [0; 12]));
        assert!(!cache.insert(b, PeriodIndex(1), [0; 12]));
        cache.roll(PeriodIndex(1));
        assert_eq!(cache.len(), 1);
        cache.roll(PeriodIndex(2));
        assert!(cache.is_empty());
    }

    #[test]
    fn garbage_is_malformed() {
        let mut service = LocAuthService::new(Authority::from_seed(1), TokenConfig::default());
        let result = service.verify_login(b"nope", BeaconId::from_name("b"), 0);
        assert_eq!(result, AuthResult::Rejected(RejectReason::MalformedMessage));
    }
}
