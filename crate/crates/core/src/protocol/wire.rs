//! Byte layouts of the broadcast and login messages. All integers are
//! big-endian.
//!
//! ```text
//! broadcast: 0x01 | 0x01 | beacon_id(16) | period(8) | abe_ciphertext
//!   payload: session_token(16) | beacon_id(16) | period(8)
//! login:     0x01 | 0x02 | beacon_id(16) | period(8) | outer_nonce(12) | outer_ct
//!   outer:   username_len(2) | username | inner_nonce(12) | inner_ct
//!   inner:   auth_hash(32)
//! ```

use locauth_abe::AbeCiphertext;
use thiserror::Error;

use super::crypto::{NONCE_BYTES, TAG_BYTES};
use crate::tokens::{BeaconId, PeriodIndex, SessionToken, TOKEN_BYTES};

pub const WIRE_VERSION: u8 = 0x01;
pub const TYPE_BROADCAST: u8 = 0x01;
pub const TYPE_LOGIN: u8 = 0x02;
pub const HEADER_BYTES: usize = 2 + 16 + 8;
pub const PAYLOAD_BYTES: usize = TOKEN_BYTES + 16 + 8;
pub const AUTH_HASH_BYTES: usize = 32;
pub const MAX_USERNAME_BYTES: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message too short")]
    Truncated,
    #[error("unsupported version {0:#04x}")]
    Version(u8),
    #[error("unexpected message type {0:#04x}")]
    Type(u8),
    #[error("bad ABE ciphertext: {0}")]
    Ciphertext(String),
    #[error("bad field: {0}")]
    Field(&'static str),
}

fn encode_header(kind: u8, beacon: &BeaconId, period: PeriodIndex) -> [u8; HEADER_BYTES] {
    let mut out = [0u8; HEADER_BYTES];
    out[0] = WIRE_VERSION;
    out[1] = kind;
    out[2..18].copy_from_slice(beacon.as_bytes());
    out[18..26].copy_from_slice(&period.to_be_bytes());
    out
}

fn decode_header(bytes: &[u8], kind: u8) -> Result<(BeaconId, PeriodIndex, &[u8]), WireError> {
    if bytes.len() < HEADER_BYTES {
        return Err(WireError::Truncated);
    }
    if bytes[0] != WIRE_VERSION {
        return Err(WireError::Version(bytes[0]));
    }
    if bytes[1] != kind {
        return Err(WireError::Type(bytes[1]));
    }
    let beacon = BeaconId::from_bytes(bytes[2..18].try_into().unwrap());
    let period = PeriodIndex(u64::from_be_bytes(bytes[18..26].try_into().unwrap()));
    Ok((beacon, period, &bytes[HEADER_BYTES..]))
}

/// What a beacon broadcasts each tick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BroadcastMessage {
    pub beacon_id: BeaconId,
    pub period: PeriodIndex,
    pub ciphertext: AbeCiphertext,
}

impl BroadcastMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encode_header(TYPE_BROADCAST, &self.beacon_id, self.period).to_vec();
        out.extend_from_slice(&self.ciphertext.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let (beacon_id, period, rest) = decode_header(bytes, TYPE_BROADCAST)?;
        let ciphertext = AbeCiphertext::from_bytes(rest).map_err(|e| WireError::Ciphertext(e.to_string()))?;
        Ok(BroadcastMessage {
            beacon_id,
            period,
            ciphertext,
        })
    }
}

/// Decrypted broadcast content; binds the token to its beacon and period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BroadcastPayload {
    pub token: SessionToken,
    pub beacon_id: BeaconId,
    pub period: PeriodIndex,
}

impl BroadcastPayload {
    pub fn to_bytes(&self) -> [u8; PAYLOAD_BYTES] {
        let mut out = [0u8; PAYLOAD_BYTES];
        out[..16].copy_from_slice(&self.token.0);
        out[16..32].copy_from_slice(self.beacon_id.as_bytes());
        out[32..].copy_from_slice(&self.period.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != PAYLOAD_BYTES {
            return Err(WireError::Field("broadcast payload must be 40 bytes"));
        }
        Ok(BroadcastPayload {
            token: SessionToken(bytes[..16].try_into().unwrap()),
            beacon_id: BeaconId::from_bytes(bytes[16..32].try_into().unwrap()),
            period: PeriodIndex(u64::from_be_bytes(bytes[32..].try_into().unwrap())),
        })
    }
}

/// The client's sign-on reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoginMessage {
    pub beacon_id: BeaconId,
    pub period: PeriodIndex,
    pub outer_nonce: [u8; NONCE_BYTES],
    pub outer_ct: Vec<u8>,
}

impl LoginMessage {
    /// Header bytes; also the outer layer's associated data.
    pub fn header(&self) -> [u8; HEADER_BYTES] {
        encode_header(TYPE_LOGIN, &self.beacon_id, self.period)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header().to_vec();
        out.extend_from_slice(&self.outer_nonce);
        out.extend_from_slice(&self.outer_ct);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let (beacon_id, period, rest) = decode_header(bytes, TYPE_LOGIN)?;
        if rest.len() < NONCE_BYTES + TAG_BYTES {
            return Err(WireError::Truncated);
        }
        Ok(LoginMessage {
            beacon_id,
            period,
            outer_nonce: rest[..NONCE_BYTES].try_into().unwrap(),
            outer_ct: rest[NONCE_BYTES..].to_vec(),
        })
    }
}

/// Plaintext of the outer login layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuterPlaintext {
    pub username: String,
    pub inner_nonce: [u8; NONCE_BYTES],
    pub inner_ct: Vec<u8>,
}

impl OuterPlaintext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let name = self.username.as_bytes();
        let mut out = Vec::with_capacity(2 + name.len() + NONCE_BYTES + self.inner_ct.len());
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&self.inner_nonce);
        out.extend_from_slice(&self.inner_ct);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < 2 {
            return Err(WireError::Truncated);
        }
        let len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        if len == 0 || len > MAX_USERNAME_BYTES {
            return Err(WireError::Field("username length"));
        }
        let rest = &bytes[2..];
        if rest.len() != len + NONCE_BYTES + AUTH_HASH_BYTES + TAG_BYTES {
            return Err(WireError::Field("outer plaintext length"));
        }
        let username = std::str::from_utf8(&rest[..len])
            .map_err(|_| WireError::Field("username is not utf-8"))?
            .to_string();
        Ok(OuterPlaintext {
            username,
            inner_nonce: rest[len..len + NONCE_BYTES].try_into().unwrap(),
            inner_ct: rest[len + NONCE_BYTES..].to_vec(),
        })
    }
}
