//! Beacon broadcast, client sign-on and service verification, plus
//! registration of backends and users.

pub mod client;
pub mod crypto;
pub mod registry;
pub mod service;
pub mod wire;

use std::collections::BTreeSet;

use locauth_abe::{encrypt, keygen, parse_policy, setup, AbeError, AccessTree, Attribute, MasterKey, PublicParams};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::{derive_session_token, BeaconId, MasterSecret, PeriodIndex, UserSeed};
use crypto::{password_verifier, SALT_BYTES};
use registry::{validate_username, ClientBundle, UserRecord};
use wire::{BroadcastMessage, BroadcastPayload};

pub use client::{client_handle_broadcast, Client, ClientOutcome, NoActionReason};
pub use service::{service_verify_login, LocAuthService, ReplayCache};

/// Passwords shorter than this are accepted but logged as weak.
pub const WEAK_PASSWORD_LEN: usize = 8;
pub const DEFAULT_SECURITY_BITS: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("username {0:?} already registered")]
    DuplicateUser(String),
    #[error("invalid username {0:?}")]
    InvalidUsername(String),
    #[error("empty policy")]
    EmptyPolicy,
    #[error("no policy registered for beacon {0}")]
    NoPolicy(BeaconId),
    #[error("registry: {0}")]
    Registry(String),
    #[error("client bundle: {0}")]
    Bundle(String),
}

/// Key material held by the Loc-Auth authority.
#[derive(Clone)]
pub struct Authority {
    pub params: PublicParams,
    pub msk: MasterKey,
    pub master_secret: MasterSecret,
}

impl std::fmt::Debug for Authority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Authority(..)")
    }
}

impl Authority {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, ProtocolError> {
        let (params, msk) = setup(DEFAULT_SECURITY_BITS, rng)?;
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Ok(Authority {
            params,
            msk,
            master_secret: MasterSecret(secret),
        })
    }

    /// Reproducible authority for tests and simulations.
    pub fn from_seed(seed: u64) -> Self {
        Self::generate(&mut ChaCha20Rng::seed_from_u64(seed)).expect("default security level is supported")
    }
}

/// A backend's access rule for one beacon area.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeaconPolicyConfig {
    pub policy_text: String,
    pub tree: AccessTree,
}

/// Compiles a backend's policy string.
pub fn register_backend(policy_text: &str) -> Result<BeaconPolicyConfig, ProtocolError> {
    if policy_text.trim().is_empty() {
        return Err(ProtocolError::EmptyPolicy);
    }
    Ok(BeaconPolicyConfig {
        policy_text: policy_text.to_string(),
        tree: parse_policy(policy_text)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authentication {
    pub username: String,
    pub beacon_id: BeaconId,
    pub period: PeriodIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownUser,
    TokenMismatch,
    CTokenMismatch,
    HashMismatch,
    ReplayedNonce,
    MalformedMessage,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownUser => "unknown_user",
            RejectReason::TokenMismatch => "token_mismatch",
            RejectReason::CTokenMismatch => "c_token_mismatch",
            RejectReason::HashMismatch => "hash_mismatch",
            RejectReason::ReplayedNonce => "replayed_nonce",
            RejectReason::MalformedMessage => "malformed_message",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuthResult {
    Authenticated(Authentication),
    Rejected(RejectReason),
}

impl AuthResult {
    pub fn is_authenticated(&self) -> bool {
        matches!(self, AuthResult::Authenticated(_))
    }

    pub fn rejection(&self) -> Option<RejectReason> {
        match self {
            AuthResult::Rejected(r) => Some(*r),
            AuthResult::Authenticated(_) => None,
        }
    }
}

/// Output of user registration.
#[derive(Clone, Debug)]
pub struct Registration {
    pub record: UserRecord,
    pub bundle: ClientBundle,
    pub weak_password: bool,
}

/// Creates the stored record and the client bundle for a new user. The
/// caller inserts the record into its registry.
pub fn enroll_user<R: RngCore + CryptoRng>(
    authority: &Authority,
    username: &str,
    password: &str,
    attrs: &BTreeSet<Attribute>,
    rng: &mut R,
) -> Result<Registration, ProtocolError> {
    validate_username(username)?;
    let usk = keygen(&authority.msk, &authority.params, attrs, rng)?;
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let mut salt = [0u8; SALT_BYTES];
    rng.fill_bytes(&mut salt);
    let weak_password = password.chars().count() < WEAK_PASSWORD_LEN;
    if weak_password {
        tracing::warn!(username, "registered with a weak password");
    }
    let record = UserRecord {
        username: username.to_string(),
        user_seed: seed,
        salt,
        pwd_verifier: password_verifier(password, &salt),
        attrs: attrs.iter().map(|a| a.to_string()).collect(),
    };
    let bundle = ClientBundle {
        username: username.to_string(),
        usk,
        user_seed: UserSeed(seed),
        salt,
    };
    Ok(Registration {
        record,
        bundle,
        weak_password,
    })
}

/// One iteration of the beacon loop: derive the current token, bind it to
/// the beacon and period, and encrypt it under the beacon's policy.
pub fn broadcast_step<R: RngCore + CryptoRng>(
    beacon_id: BeaconId,
    policy: &BeaconPolicyConfig,
    period: PeriodIndex,
    master_secret: &MasterSecret,
    params: &PublicParams,
    rng: &mut R,
) -> Result<BroadcastMessage, ProtocolError> {
    let payload = BroadcastPayload {
        token: derive_session_token(master_secret, &beacon_id, period),
        beacon_id,
        period,
    };
    let ciphertext = encrypt(params, &policy.tree, &payload.to_bytes(), rng)?;
    Ok(BroadcastMessage {
        beacon_id,
        period,
        ciphertext,
    })
}
