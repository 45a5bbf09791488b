use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locauth_cli::commands;
use locauth_cli::{Game, RunOptions};

#[derive(Parser)]
#[command(name = "locauth", version, about = "Location-enabled authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate authority keys into a keystore directory.
    Setup {
        #[arg(long, default_value = "keystore")]
        keystore: PathBuf,
        /// Replace an existing keystore, discarding its users.
        #[arg(long)]
        force: bool,
        /// Derive the keys from a seed instead of system entropy.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Register a user and write their client bundle.
    Register {
        #[arg(long, default_value = "keystore")]
        keystore: PathBuf,
        #[arg(long)]
        username: String,
        #[arg(long)]
        password: String,
        /// Comma-separated attributes, e.g. firm:xyz,clearance=4.
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario and write its event log.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Run one attack game from a scenario's scripts.
    Attack {
        #[arg(value_parser = ["replay", "wormhole", "dos"])]
        game: String,
        scenario: PathBuf,
        /// Replay offset past the end of the recorded token's period.
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        delta_ms: i64,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// Print fixed-input token and KDF vectors.
    Vectors,
    /// Check whether an attribute set satisfies a policy.
    PolicyCheck {
        #[arg(long)]
        policy: String,
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Use keys and registered users from this keystore.
    #[arg(long)]
    keystore: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "events.jsonl")]
    out: PathBuf,
    #[arg(long)]
    period_ms: Option<u64>,
    #[arg(long)]
    ttl_ms: Option<u64>,
}

impl From<RunArgs> for RunOptions {
    fn from(a: RunArgs) -> Self {
        RunOptions {
            keystore: a.keystore,
            seed: a.seed,
            out: a.out,
            period_ms: a.period_ms,
            ttl_ms: a.ttl_ms,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let result = match cli.command {
        Command::Setup { keystore, force, seed } => commands::setup(&keystore, force, seed, &mut out),
        Command::Register {
            keystore,
            username,
            password,
            attrs,
            seed,
        } => commands::register(&keystore, &username, &password, &attrs, seed, &mut out),
        Command::Run { scenario, opts } => commands::run(&scenario, &opts.into(), &mut out),
        Command::Attack {
            game,
            scenario,
            delta_ms,
            opts,
        } => {
            let game = match game.as_str() {
                "replay" => Game::Replay { delta_ms },
                "wormhole" => Game::Wormhole,
                _ => Game::Dos,
            };
            commands::attack(game, &scenario, &opts.into(), &mut out)
        }
        Command::Vectors => commands::vectors(&mut out),
        Command::PolicyCheck { policy, attrs } => commands::policy_check(&policy, &attrs, &mut out),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
