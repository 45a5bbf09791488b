use locauth_abe::{decrypt, AbeError, PublicParams};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::crypto::{auth_hash, inner_key, outer_key, password_verifier, seal, NONCE_BYTES, VERIFIER_BYTES};
use super::registry::ClientBundle;
use super::wire::{BroadcastMessage, BroadcastPayload, LoginMessage, OuterPlaintext};
use crate::tokens::{current_period, derive_c_token};

/// Why a client stayed silent after hearing a broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoActionReason {
    PolicyNotSatisfied,
    IntegrityFailure,
    Malformed,
    BindingMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClientOutcome {
    Login(LoginMessage),
    NoAction(NoActionReason),
}

impl ClientOutcome {
    pub fn login(self) -> Option<LoginMessage> {
        match self {
            ClientOutcome::Login(m) => Some(m),
            ClientOutcome::NoAction(_) => None,
        }
    }
}

/// A user's device. The password verifier is derived once at construction.
#[derive(Clone)]
pub struct Client {
    bundle: ClientBundle,
    params: PublicParams,
    verifier: [u8; VERIFIER_BYTES],
    period_ms: u64,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client")
            .field("username", &self.bundle.username)
            .finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(bundle: ClientBundle, params: PublicParams, password: &str, period_ms: u64) -> Self {
        let verifier = password_verifier(password, &bundle.salt);
        Client {
            bundle,
            params,
            verifier,
            period_ms,
        }
    }

    pub fn username(&self) -> &str {
        &self.bundle.username
    }

    pub fn bundle(&self) -> &ClientBundle {
        &self.bundle
    }

    /// Runs the device side of the sign-on for one received broadcast.
    pub fn handle_broadcast<R: RngCore + CryptoRng>(
        &self,
        msg: &BroadcastMessage,
        now_ms: u64,
        rng: &mut R,
    ) -> ClientOutcome {
        let plaintext = match decrypt(&self.params, &self.bundle.usk, &msg.ciphertext) {
            Ok(p) => p,
            Err(AbeError::PolicyNotSatisfied) => return ClientOutcome::NoAction(NoActionReason::PolicyNotSatisfied),
            Err(AbeError::IntegrityFailure) => return ClientOutcome::NoAction(NoActionReason::IntegrityFailure),
            Err(_) => return ClientOutcome::NoAction(NoActionReason::Malformed),
        };
        let payload = match BroadcastPayload::from_bytes(&plaintext) {
            Ok(p) => p,
            Err(_) => return ClientOutcome::NoAction(NoActionReason::Malformed),
        };
        if payload.beacon_id != msg.beacon_id || payload.period != msg.period {
            return ClientOutcome::NoAction(NoActionReason::BindingMismatch);
        }

        let period = current_period(now_ms, self.period_ms);
        let c_token = derive_c_token(&self.bundle.user_seed, period);
        let hash = auth_hash(&payload.token, &self.verifier);

        let mut inner_nonce = [0u8; NONCE_BYTES];
        rng.fill_bytes(&mut inner_nonce);
        let inner_ct = seal(&inner_key(&c_token), &inner_nonce, &hash, &[]);

        let outer = OuterPlaintext {
            username: self.bundle.username.clone(),
            inner_nonce,
            inner_ct,
        };
        let mut outer_nonce = [0u8; NONCE_BYTES];
        rng.fill_bytes(&mut outer_nonce);
        let mut login = LoginMessage {
            beacon_id: msg.beacon_id,
            period: msg.period,
            outer_nonce,
            outer_ct: Vec::new(),
        };
        login.outer_ct = seal(
            &outer_key(&payload.token),
            &outer_nonce,
            &outer.to_bytes(),
            &login.header(),
        );
        ClientOutcome::Login(login)
    }
}

/// Stateless form of [`Client::handle_broadcast`]; derives the password
/// verifier on every call.
pub fn client_handle_broadcast<R: RngCore + CryptoRng>(
    msg: &BroadcastMessage,
    bundle: &ClientBundle,
    params: &PublicParams,
    password: &str,
    now_ms: u64,
    period_ms: u64,
    rng: &mut R,
) -> ClientOutcome {
    Client::new(bundle.clone(), params.clone(), password, period_ms).handle_broadcast(msg, now_ms, rng)
}
