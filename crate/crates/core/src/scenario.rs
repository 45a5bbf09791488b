//! Scenario documents: the JSON description of beacons, users, their
//! movements and scripted attacks, and its translation into a [`World`].

use std::collections::{BTreeMap, BTreeSet};

use locauth_abe::{parse_attribute_set, parse_policy, satisfies, Attribute, DEFAULT_NUMERIC_WIDTH};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AttackScript;
use crate::protocol::registry::{ClientBundle, Registry};
use crate::protocol::{Authority, Client, LocAuthService, ProtocolError};
use crate::sessions::DEFAULT_TTL_MS;
use crate::simworld::{
    ms_to_us, BeaconNode, MobileNode, Point2D, Trace, Waypoint, World, WorldConfig, WorldError, DEFAULT_RANGE_M,
};
use crate::tokens::{BeaconId, TokenConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub token: TokenConfig,
    #[serde(default)]
    pub session: SessionSection,
    pub beacons: Vec<BeaconSpec>,
    #[serde(default)]
    pub adjacency: Vec<(String, String)>,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub attacks: Vec<AttackScript>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub ttl_ms: u64,
    pub sliding: bool,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            ttl_ms: DEFAULT_TTL_MS,
            sliding: true,
        }
    }
}

fn default_range() -> f64 {
    DEFAULT_RANGE_M
}

fn default_interval() -> f64 {
    102.4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconSpec {
    /// A UUID or a free-form name.
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    #[serde(default = "default_range")]
    pub range_m: f64,
    #[serde(default = "default_interval")]
    pub interval_ms: f64,
    pub policy: String,
}

impl BeaconSpec {
    pub fn pos(&self) -> Point2D {
        Point2D::new(self.x_m, self.y_m)
    }

    pub fn interval_us(&self) -> u64 {
        ms_to_us(self.interval_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    pub t_ms: f64,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub username: String,
    pub password: String,
    /// Attribute specs such as `"dept:financial"` or `"clearance=4"`.
    /// Without them the user must already be in the registry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<Vec<String>>,
    pub trace: Vec<WaypointSpec>,
}

impl UserSpec {
    pub fn trace(&self) -> Result<Trace, ScenarioError> {
        let mut points = Vec::with_capacity(self.trace.len());
        for w in &self.trace {
            if !w.t_ms.is_finite() || w.t_ms < 0.0 {
                return Err(ScenarioError::Schema(format!(
                    "user {}: bad waypoint time",
                    self.username
                )));
            }
            points.push(Waypoint {
                t_us: ms_to_us(w.t_ms),
                pos: Point2D::new(w.x_m, w.y_m),
            });
        }
        Trace::new(points).map_err(|e| ScenarioError::Schema(format!("user {}: {}", self.username, e)))
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown beacon {0}")]
    UnknownBeacon(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
}

impl From<WorldError> for ScenarioError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnknownBeacon(b) => ScenarioError::UnknownBeacon(b),
            other => ScenarioError::Schema(other.to_string()),
        }
    }
}

impl From<ProtocolError> for ScenarioError {
    fn from(e: ProtocolError) -> Self {
        ScenarioError::Schema(e.to_string())
    }
}

/// Key material and enrolled users a scenario runs against.
#[derive(Clone, Debug)]
pub struct Environment {
    pub authority: Authority,
    pub registry: Registry,
    pub bundles: BTreeMap<String, ClientBundle>,
}

impl Environment {
    /// Fresh authority derived from `seed`, no registered users.
    pub fn ephemeral(seed: u64) -> Self {
        Environment {
            authority: Authority::from_seed(seed),
            registry: Registry::new(),
            bundles: BTreeMap::new(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural checks that need no key material.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::Schema(m));
        if self.schema != SCHEMA_VERSION {
            return fail(format!("unsupported schema version {}", self.schema));
        }
        if self.duration_ms == 0 {
            return fail("duration_ms must be positive".into());
        }
        if self.token.period_ms == 0 {
            return fail("token.period_ms must be positive".into());
        }
        if self.token.skew_periods > 1 {
            return fail("token.skew_periods must be 0 or 1".into());
        }
        if self.session.ttl_ms == 0 {
            return fail("session.ttl_ms must be positive".into());
        }
        if self.beacons.is_empty() {
            return fail("at least one beacon is required".into());
        }
        let mut labels = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for b in &self.beacons {
            if !labels.insert(b.id.as_str()) || !ids.insert(BeaconId::from_name(&b.id)) {
                return fail(format!("duplicate beacon {}", b.id));
            }
            if !(b.interval_ms.is_finite() && b.interval_ms > 0.0) || b.interval_us() == 0 {
                return fail(format!("beacon {}: interval_ms must be positive", b.id));
            }
            if !(b.range_m.is_finite() && b.range_m > 0.0) || !b.pos().is_finite() {
                return fail(format!("beacon {}: bad geometry", b.id));
            }
        }
        for (a, b) in &self.adjacency {
            for label in [a, b] {
                if !labels.contains(label.as_str()) {
                    return Err(ScenarioError::UnknownBeacon(label.clone()));
                }
            }
        }
        let mut names = BTreeSet::new();
        for u in &self.users {
            if !names.insert(u.username.as_str()) {
                return fail(format!("duplicate user {}", u.username));
            }
            u.trace()?;
        }
        for attack in &self.attacks {
            for label in attack.beacons() {
                if !labels.contains(label) {
                    return Err(ScenarioError::UnknownBeacon(label.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn beacon(&self, label: &str) -> Option<&BeaconSpec> {
        self.beacons.iter().find(|b| b.id == label)
    }

    pub fn user(&self, username: &str) -> Option<&UserSpec> {
        self.users.iter().find(|u| u.username == username)
    }

    /// Attribute set a user will hold when the scenario runs.
    pub fn user_attributes(&self, env: &Environment, username: &str) -> Result<BTreeSet<Attribute>, ScenarioError> {
        let user = self
            .user(username)
            .ok_or_else(|| ScenarioError::UnknownUser(username.to_string()))?;
        match &user.attrs {
            Some(specs) => {
                parse_attribute_set(specs, DEFAULT_NUMERIC_WIDTH).map_err(|e| ScenarioError::Schema(e.to_string()))
            }
            None => env
                .bundles
                .get(username)
                .map(|b| b.usk.attributes())
                .ok_or_else(|| ScenarioError::UnknownUser(username.to_string())),
        }
    }

    /// Users inside `beacon`'s range at `t_us` whose attributes satisfy the
    /// policy of `policy_beacon`.
    pub fn qualified_users_in_range(
        &self,
        env: &Environment,
        beacon: &str,
        policy_beacon: &str,
        t_us: u64,
    ) -> Result<Vec<String>, ScenarioError> {
        let area = self
            .beacon(beacon)
            .ok_or_else(|| ScenarioError::UnknownBeacon(beacon.to_string()))?;
        let policy = self
            .beacon(policy_beacon)
            .ok_or_else(|| ScenarioError::UnknownBeacon(policy_beacon.to_string()))?;
        let tree = parse_policy(&policy.policy).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        let mut out = Vec::new();
        for u in &self.users {
            let pos = u.trace()?.position_at_us(t_us);
            if crate::simworld::within(&area.pos(), area.range_m, &pos)
                && satisfies(&self.user_attributes(env, &u.username)?, &tree)
            {
                out.push(u.username.clone());
            }
        }
        Ok(out)
    }

    /// Enrolls declared users, loads registered ones, and assembles the
    /// world. `seed` overrides the scenario's own seed.
    pub fn build(&self, env: &Environment, seed: Option<u64>) -> Result<World, ScenarioError> {
        self.validate()?;
        let seed = seed.or(self.seed).unwrap_or(0);
        let mut enroll_rng = ChaCha20Rng::seed_from_u64(seed);
        enroll_rng.set_stream(1);

        let mut service = LocAuthService::with_registry(env.authority.clone(), self.token, env.registry.clone());
        let mut users = Vec::with_capacity(self.users.len());
        for u in &self.users {
            let bundle = match &u.attrs {
                Some(specs) => {
                    if service.registry().contains(&u.username) {
                        return Err(ScenarioError::Schema(format!(
                            "user {} is already registered; omit attrs to use the stored key",
                            u.username
                        )));
                    }
                    let attrs = parse_attribute_set(specs, DEFAULT_NUMERIC_WIDTH)
                        .map_err(|e| ScenarioError::Schema(format!("user {}: {}", u.username, e)))?;
                    service
                        .register_user(&u.username, &u.password, &attrs, &mut enroll_rng)?
                        .bundle
                }
                None => {
                    if !service.registry().contains(&u.username) {
                        return Err(ScenarioError::UnknownUser(u.username.clone()));
                    }
                    env.bundles
                        .get(&u.username)
                        .cloned()
                        .ok_or_else(|| ScenarioError::UnknownUser(u.username.clone()))?
                }
            };
            let client = Client::new(bundle, env.authority.params.clone(), &u.password, self.token.period_ms);
            users.push(MobileNode {
                username: u.username.clone(),
                client,
                trace: u.trace()?,
            });
        }

        let config = WorldConfig {
            seed,
            duration_ms: self.duration_ms,
            token: self.token,
            ttl_ms: self.session.ttl_ms,
            sliding: self.session.sliding,
        };
        let mut world = World::new(service, config);
        for b in &self.beacons {
            world.add_beacon(BeaconNode {
                label: b.id.clone(),
                id: BeaconId::from_name(&b.id),
                pos: b.pos(),
                range_m: b.range_m,
                interval_us: b.interval_us(),
                policy: b.policy.clone(),
            })?;
        }
        for (a, b) in &self.adjacency {
            world.add_adjacency(a, b)?;
        }
        for user in users {
            world.add_user(user)?;
        }
        for attack in &self.attacks {
            world.add_attack(attack.clone())?;
        }
        Ok(world)
    }
}
