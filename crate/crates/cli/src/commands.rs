//! Subcommand implementations. Each returns the process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use locauth::adversary::{run_dos_game, run_replay_game, run_world, run_wormhole_game, GameError, RunReport};
use locauth::protocol::{Authority, LocAuthService, ProtocolError};
use locauth::scenario::{Environment, Scenario, ScenarioError};
use locauth::simworld::to_jsonl;
use locauth::tokens::TokenConfig;
use locauth_abe::{parse_attribute_set, parse_policy, satisfies, AbeError, DEFAULT_NUMERIC_WIDTH};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::keystore::{Keystore, KeystoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_INVALID
    }
}

pub type CliResult = Result<i32, CliError>;

/// Options shared by `run` and `attack`.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub keystore: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub period_ms: Option<u64>,
    pub ttl_ms: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Game {
    Replay { delta_ms: i64 },
    Wormhole,
    Dos,
}

pub fn setup(dir: &Path, force: bool, seed: Option<u64>, out: &mut dyn Write) -> CliResult {
    let keystore = Keystore::at(dir);
    let _lock = keystore.lock(true)?;
    if keystore.exists() && !force {
        return Err(KeystoreError::Exists(dir.to_path_buf()).into());
    }
    let authority = match seed {
        Some(s) => Authority::from_seed(s),
        None => Authority::generate(&mut ChaCha20Rng::from_entropy())?,
    };
    keystore.create(&authority, force)?;
    writeln!(out, "keystore written to {}", dir.display()).ok();
    Ok(EXIT_OK)
}

pub fn register(
    dir: &Path,
    username: &str,
    password: &str,
    attrs: &[String],
    seed: Option<u64>,
    out: &mut dyn Write,
) -> CliResult {
    let keystore = Keystore::at(dir);
    let _lock = keystore.lock(true)?;
    let authority = keystore.load_authority()?;
    let registry = keystore.load_registry()?;
    let attrs = parse_attribute_set(attrs, DEFAULT_NUMERIC_WIDTH)?;
    let mut service = LocAuthService::with_registry(authority, TokenConfig::default(), registry);
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    let registration = service.register_user(username, password, &attrs, &mut rng)?;
    let path = keystore.save_bundle(&registration.bundle)?;
    keystore.save_registry(service.registry())?;
    if registration.weak_password {
        eprintln!("warning: password for {} is shorter than 8 characters", username);
    }
    writeln!(out, "registered {}; client bundle at {}", username, path.display()).ok();
    Ok(EXIT_OK)
}

fn load_scenario(path: &Path, opts: &RunOptions) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(p) = opts.period_ms {
        scenario.token.period_ms = p;
    }
    if let Some(t) = opts.ttl_ms {
        scenario.session.ttl_ms = t;
    }
    if let Some(s) = opts.seed {
        scenario.seed = Some(s);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn environment(
    scenario: &Scenario,
    opts: &RunOptions,
) -> Result<(Environment, Option<crate::keystore::KeystoreLock>), CliError> {
    match &opts.keystore {
        None => Ok((Environment::ephemeral(scenario.seed.unwrap_or(0)), None)),
        Some(dir) => {
            let keystore = Keystore::at(dir);
            let lock = keystore.lock(false)?;
            let authority = keystore.load_authority()?;
            let registry = keystore.load_registry()?;
            let bundles = keystore.load_bundles(&registry)?;
            Ok((
                Environment {
                    authority,
                    registry,
                    bundles,
                },
                Some(lock),
            ))
        }
    }
}

fn finish(report: &RunReport, opts: &RunOptions, out: &mut dyn Write) -> CliResult {
    fs::write(&opts.out, to_jsonl(&report.log)).map_err(|source| CliError::Io {
        path: opts.out.clone(),
        source,
    })?;
    writeln!(out, "{}", report.summary()).ok();
    writeln!(out, "log: {}", opts.out.display()).ok();
    Ok(report.exit_code())
}

/// Runs a scenario with every embedded attack and writes the JSONL log.
pub fn run(scenario_path: &Path, opts: &RunOptions, out: &mut dyn Write) -> CliResult {
    let scenario = load_scenario(scenario_path, opts)?;
    let (env, _lock) = environment(&scenario, opts)?;
    let report = run_world(scenario.build(&env, None)?);
    finish(&report, opts, out)
}

/// Runs one attack game built from the scenario's scripts of that kind.
pub fn attack(game: Game, scenario_path: &Path, opts: &RunOptions, out: &mut dyn Write) -> CliResult {
    let scenario = load_scenario(scenario_path, opts)?;
    let (env, _lock) = environment(&scenario, opts)?;
    let run = match game {
        Game::Replay { delta_ms } => run_replay_game(&scenario, &env, delta_ms)?,
        Game::Wormhole => run_wormhole_game(&scenario, &env)?,
        Game::Dos => run_dos_game(&scenario, &env)?,
    };
    for check in &run.outcome.checks {
        writeln!(
            out,
            "{} {}: expected {}, observed {}",
            if check.ok { "ok  " } else { "FAIL" },
            check.name,
            check.expected,
            check.observed
        )
        .ok();
    }
    finish(&run.report, opts, out)
}

pub fn vectors(out: &mut dyn Write) -> CliResult {
    write!(out, "{}", crate::vectors::render()).ok();
    Ok(EXIT_OK)
}

/// Exit 0 if the attributes satisfy the policy, 1 if not.
pub fn policy_check(policy: &str, attrs: &[String], out: &mut dyn Write) -> CliResult {
    let tree = parse_policy(policy)?;
    let attrs = parse_attribute_set(attrs, DEFAULT_NUMERIC_WIDTH)?;
    let ok = satisfies(&attrs, &tree);
    writeln!(out, "{}", if ok { "satisfied" } else { "not satisfied" }).ok();
    Ok(if ok { EXIT_OK } else { EXIT_FAIL })
}
