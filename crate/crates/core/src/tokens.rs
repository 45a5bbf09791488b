//! Time-period token derivations and the injectable clock.
//!
//! Both tokens are truncated HMAC-SHA-256 outputs. The session token binds a
//! beacon and a period; the c-token binds a user seed and a period.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use uuid::Uuid;

type HmacSha256 = Hmac<Sha256>;

pub const TOKEN_BYTES: usize = 16;
pub const DEFAULT_PERIOD_MS: u64 = 30_000;

/// 16-byte beacon identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeaconId(pub Uuid);

impl BeaconId {
    /// Parses a UUID, or derives a stable name-based UUID for anything else.
    pub fn from_name(name: &str) -> Self {
        match Uuid::parse_str(name) {
            Ok(id) => BeaconId(id),
            Err(_) => BeaconId(Uuid::new_v5(
                &Uuid::NAMESPACE_OID,
                format!("loc-auth/beacon/{}", name).as_bytes(),
            )),
        }
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        self.0.as_bytes()
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        BeaconId(Uuid::from_bytes(bytes))
    }
}

impl fmt::Debug for BeaconId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BeaconId({})", self.0)
    }
}

impl fmt::Display for BeaconId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `floor(now_ms / period_ms)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeriodIndex(pub u64);

impl PeriodIndex {
    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn next(self) -> PeriodIndex {
        PeriodIndex(self.0 + 1)
    }

    pub fn start_ms(self, period_ms: u64) -> u64 {
        self.0 * period_ms
    }
}

macro_rules! secret_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "(..)"))
            }
        }
    };
}

secret_bytes!(
    /// Loc-Auth's token authenticator key.
    MasterSecret,
    32
);
secret_bytes!(
    /// Per-user seed shared at registration.
    UserSeed,
    32
);
secret_bytes!(
    /// Per-beacon, per-period session token.
    SessionToken,
    TOKEN_BYTES
);
secret_bytes!(
    /// Per-user, per-period token.
    CToken,
    TOKEN_BYTES
);

fn truncated_hmac(key: &[u8], parts: &[&[u8]]) -> [u8; TOKEN_BYTES] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    for part in parts {
        mac.update(part);
    }
    let full = mac.finalize().into_bytes();
    let mut out = [0u8; TOKEN_BYTES];
    out.copy_from_slice(&full[..TOKEN_BYTES]);
    out
}

/// First 16 bytes of `HMAC-SHA-256(master_secret, beacon_id || period_be64)`.
pub fn derive_session_token(master: &MasterSecret, beacon: &BeaconId, period: PeriodIndex) -> SessionToken {
    SessionToken(truncated_hmac(&master.0, &[beacon.as_bytes(), &period.to_be_bytes()]))
}

/// First 16 bytes of `HMAC-SHA-256(user_seed, period_be64)`.
pub fn derive_c_token(seed: &UserSeed, period: PeriodIndex) -> CToken {
    CToken(truncated_hmac(&seed.0, &[&period.to_be_bytes()]))
}

/// Period containing `now_ms`; a boundary instant belongs to the new period.
pub fn current_period(now_ms: u64, period_ms: u64) -> PeriodIndex {
    assert!(period_ms > 0, "period_ms must be positive");
    PeriodIndex(now_ms / period_ms)
}

/// Token timing parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenConfig {
    pub period_ms: u64,
    /// Periods accepted on either side of the current one. 0 or 1.
    pub skew_periods: u8,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            period_ms: DEFAULT_PERIOD_MS,
            skew_periods: 0,
        }
    }
}

impl TokenConfig {
    pub fn period_at(&self, now_ms: u64) -> PeriodIndex {
        current_period(now_ms, self.period_ms)
    }

    /// Candidate periods for verification, current period first.
    pub fn acceptable_periods(&self, now_ms: u64) -> Vec<PeriodIndex> {
        let current = self.period_at(now_ms);
        let mut out = vec![current];
        if self.skew_periods > 0 {
            if current.0 > 0 {
                out.push(PeriodIndex(current.0 - 1));
            }
            out.push(current.next());
        }
        out
    }
}

pub trait Clock {
    fn now_ms(&self) -> u64;
}

/// Wall clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock advanced explicitly; never moves backwards.
#[derive(Debug, Default)]
pub struct ManualClock {
    now_ms: AtomicU64,
}

impl ManualClock {
    pub fn new(now_ms: u64) -> Self {
        ManualClock {
            now_ms: AtomicU64::new(now_ms),
        }
    }

    pub fn set(&self, now_ms: u64) {
        self.now_ms.fetch_max(now_ms, Ordering::SeqCst);
    }

    pub fn advance(&self, delta_ms: u64) {
        self.now_ms.fetch_add(delta_ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now_ms.load(Ordering::SeqCst)
    }
}
