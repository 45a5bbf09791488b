use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use locauth_abe::{Attribute, UserSecretKey};
use serde::{Deserialize, Serialize};

use super::crypto::{SALT_BYTES, VERIFIER_BYTES};
use super::wire::MAX_USERNAME_BYTES;
use super::ProtocolError;
use crate::tokens::UserSeed;

/// What the service stores per user. The password itself is never kept.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    #[serde(with = "hex::serde")]
    pub user_seed: [u8; 32],
    #[serde(with = "hex::serde")]
    pub salt: [u8; SALT_BYTES],
    #[serde(with = "hex::serde")]
    pub pwd_verifier: [u8; VERIFIER_BYTES],
    pub attrs: BTreeSet<String>,
}

impl UserRecord {
    pub fn seed(&self) -> UserSeed {
        UserSeed(self.user_seed)
    }

    pub fn attributes(&self) -> Result<BTreeSet<Attribute>, ProtocolError> {
        self.attrs
            .iter()
            .map(|a| Attribute::new(a).map_err(ProtocolError::from))
            .collect()
    }
}

impl std::fmt::Debug for UserRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserRecord")
            .field("username", &self.username)
            .field("attrs", &self.attrs)
            .finish_non_exhaustive()
    }
}

pub fn validate_username(username: &str) -> Result<(), ProtocolError> {
    if username.is_empty() || username.len() > MAX_USERNAME_BYTES {
        return Err(ProtocolError::InvalidUsername(username.to_string()));
    }
    Ok(())
}

/// The username database.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    users: BTreeMap<String, UserRecord>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: UserRecord) -> Result<(), ProtocolError> {
        validate_username(&record.username)?;
        match self.users.entry(record.username.clone()) {
            Entry::Occupied(_) => Err(ProtocolError::DuplicateUser(record.username)),
            Entry::Vacant(slot) => {
                slot.insert(record);
                Ok(())
            }
        }
    }

    pub fn get(&self, username: &str) -> Option<&UserRecord> {
        self.users.get(username)
    }

    pub fn contains(&self, username: &str) -> bool {
        self.users.contains_key(username)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn to_json(&self) -> String {
        let records: Vec<&UserRecord> = self.users.values().collect();
        serde_json::to_string_pretty(&records).expect("records serialize")
    }

    /// Parses a JSON array of records, rejecting duplicate usernames.
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let records: Vec<UserRecord> =
            serde_json::from_str(text).map_err(|e| ProtocolError::Registry(e.to_string()))?;
        let mut registry = Registry::new();
        for record in records {
            registry.insert(record)?;
        }
        Ok(registry)
    }
}

/// Everything a user's device needs to run the sign-on procedure.
#[derive(Clone, PartialEq, Eq)]
pub struct ClientBundle {
    pub username: String,
    pub usk: UserSecretKey,
    pub user_seed: UserSeed,
    pub salt: [u8; SALT_BYTES],
}

impl std::fmt::Debug for ClientBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientBundle")
            .field("username", &self.username)
            .finish_non_exhaustive()
    }
}

const BUNDLE_VERSION: u8 = 0x01;

impl ClientBundle {
    /// `version | name_len(1) | name | seed(32) | salt(16) | usk`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![BUNDLE_VERSION, self.username.len() as u8];
        out.extend_from_slice(self.username.as_bytes());
        out.extend_from_slice(&self.user_seed.0);
        out.extend_from_slice(&self.salt);
        out.extend_from_slice(&self.usk.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::Bundle(m.to_string());
        if bytes.len() < 2 || bytes[0] != BUNDLE_VERSION {
            return Err(bad("bad header"));
        }
        let len = bytes[1] as usize;
        let rest = &bytes[2..];
        if rest.len() < len + 32 + SALT_BYTES {
            return Err(bad("truncated"));
        }
        let username = std::str::from_utf8(&rest[..len])
            .map_err(|_| bad("username is not utf-8"))?
            .to_string();
        validate_username(&username)?;
        let seed: [u8; 32] = rest[len..len + 32].try_into().unwrap();
        let salt: [u8; SALT_BYTES] = rest[len + 32..len + 32 + SALT_BYTES].try_into().unwrap();
        let usk = UserSecretKey::from_bytes(&rest[len + 32 + SALT_BYTES..])?;
        Ok(ClientBundle {
            username,
            usk,
            user_seed: UserSeed(seed),
            salt,
        })
    }
}
