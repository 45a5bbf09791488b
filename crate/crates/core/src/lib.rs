//! Location-enabled authentication.
//!
//! Beacons broadcast a short-lived session token encrypted under an
//! attribute policy. Users whose keys satisfy the policy return a login
//! bound to that token, their own per-period token and their password
//! verifier. Authenticated users hold a session that may travel between
//! adjacent beacon cells.

pub mod adversary;
pub mod protocol;
pub mod scenario;
pub mod sessions;
pub mod simworld;
pub mod tokens;
