//! Fixed-input token and KDF vectors for cross-implementation checks.

use std::fmt::Write;

use locauth::protocol::crypto::{auth_hash, inner_key, outer_key, password_verifier, PBKDF2_ITERATIONS};
use locauth::tokens::{derive_c_token, derive_session_token, BeaconId, MasterSecret, PeriodIndex, UserSeed};

pub const BEACON_NAME: &str = "finance";
pub const PASSWORD: &str = "correct horse battery";
pub const PERIODS: [u64; 4] = [0, 1, 2880, u64::MAX];

pub fn master_secret() -> MasterSecret {
    MasterSecret(core::array::from_fn(|i| i as u8))
}

pub fn user_seed() -> UserSeed {
    UserSeed(core::array::from_fn(|i| 0x20 + i as u8))
}

pub fn salt() -> [u8; 16] {
    core::array::from_fn(|i| 0x40 + i as u8)
}

/// `key = value` lines; each period gets its own `[period N]` section.
pub fn render() -> String {
    let master = master_secret();
    let seed = user_seed();
    let salt = salt();
    let beacon = BeaconId::from_name(BEACON_NAME);
    let verifier = password_verifier(PASSWORD, &salt);

    let mut out = String::new();
    let mut line = |k: &str, v: String| writeln!(out, "{} = {}", k, v).unwrap();
    line("master_secret", hex::encode(master.0));
    line("beacon_name", BEACON_NAME.to_string());
    line("beacon_id", hex::encode(beacon.as_bytes()));
    line("user_seed", hex::encode(seed.0));
    line("password", PASSWORD.to_string());
    line("salt", hex::encode(salt));
    line("pbkdf2_iterations", PBKDF2_ITERATIONS.to_string());
    line("password_verifier", hex::encode(verifier));
    for p in PERIODS {
        let period = PeriodIndex(p);
        let token = derive_session_token(&master, &beacon, period);
        let c_token = derive_c_token(&seed, period);
        writeln!(out, "\n[period {}]", p).unwrap();
        writeln!(out, "session_token = {}", hex::encode(token.0)).unwrap();
        writeln!(out, "c_token = {}", hex::encode(c_token.0)).unwrap();
        writeln!(out, "outer_key = {}", hex::encode(outer_key(&token))).unwrap();
        writeln!(out, "inner_key = {}", hex::encode(inner_key(&c_token))).unwrap();
        writeln!(out, "auth_hash = {}", hex::encode(auth_hash(&token, &verifier))).unwrap();
    }
    out
}
