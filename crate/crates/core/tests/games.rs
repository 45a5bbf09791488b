use std::collections::BTreeMap;

use locauth::adversary::{
    attacker_attributable, exit_code, run_dos_game, run_replay_game, run_world, run_wormhole_game, AttackScript,
    GameError, GameKind, ReplayTarget, Verdict,
};
use locauth::protocol::RejectReason;
use locauth::scenario::{Environment, Scenario};
use locauth::simworld::{Event, LogEntry, Transmitter};

const REPLAY: &str = include_str!("../../../scenarios/replay.json");
const WORMHOLE: &str = include_str!("../../../scenarios/wormhole.json");
const DOS: &str = include_str!("../../../scenarios/dos.json");

fn load(doc: &str) -> (Scenario, Environment) {
    let s = Scenario::from_json(doc).unwrap();
    let env = Environment::ephemeral(s.seed.unwrap_or(0));
    (s, env)
}

#[derive(Debug, PartialEq, Eq)]
enum Fate {
    Authenticated,
    Rejected(RejectReason),
    Missing,
}

fn fates(log: &[LogEntry]) -> BTreeMap<u64, Fate> {
    let mut out = BTreeMap::new();
    for e in log {
        match &e.event {
            Event::Authenticated { login_id, .. } => {
                out.insert(*login_id, Fate::Authenticated);
            }
            Event::Rejected { login_id, reason, .. } => {
                out.insert(*login_id, Fate::Rejected(*reason));
            }
            _ => {}
        }
    }
    out
}

/// Fates of honest replies to attacker broadcasts, and of attacker-sent logins.
fn attack_fates(log: &[LogEntry]) -> (Vec<Fate>, Vec<Fate>) {
    let mut fates = fates(log);
    let attacker_msgs: Vec<u64> = log
        .iter()
        .filter_map(|e| match &e.event {
            Event::BroadcastSent {
                msg_id,
                transmitter: Transmitter::Attacker,
                ..
            } => Some(*msg_id),
            _ => None,
        })
        .collect();
    let mut replies = Vec::new();
    let mut direct = Vec::new();
    for e in log {
        match &e.event {
            Event::LoginSent {
                login_id, in_reply_to, ..
            } if attacker_msgs.contains(in_reply_to) => {
                replies.push(fates.remove(login_id).unwrap_or(Fate::Missing));
            }
            Event::AttackerLoginTransmit { login_id, .. } => {
                direct.push(fates.remove(login_id).unwrap_or(Fate::Missing));
            }
            _ => {}
        }
    }
    (replies, direct)
}

#[test]
fn replay_after_expiry_is_rejected_for_every_delta() {
    let (s, env) = load(REPLAY);
    let period = s.token.period_ms as i64;
    for delta in [1, period, 10 * period] {
        let run = run_replay_game(&s, &env, delta).unwrap();
        assert!(run.outcome.passed(), "delta {}: {:?}", delta, run.outcome.reason);
        assert!(!run.outcome.control);
        let (replies, direct) = attack_fates(&run.report.log);
        assert!(!replies.is_empty());
        assert!(replies
            .iter()
            .all(|f| *f == Fate::Rejected(RejectReason::TokenMismatch)));
        assert_eq!(direct, vec![Fate::Rejected(RejectReason::TokenMismatch)]);
        assert!(attacker_attributable(&run.report.log).is_empty());
        assert_eq!(exit_code(&run.report.log), 0);
    }
}

#[test]
fn replay_inside_the_period_is_the_control_case() {
    let (s, env) = load(REPLAY);
    let run = run_replay_game(&s, &env, -500).unwrap();
    assert!(run.outcome.passed(), "{:?}", run.outcome.reason);
    assert!(run.outcome.control);
    assert!(run.outcome.replay_cache_extension);
    let (replies, direct) = attack_fates(&run.report.log);
    assert!(!replies.is_empty());
    assert!(replies.iter().all(|f| *f == Fate::Authenticated));
    assert_eq!(direct, vec![Fate::Rejected(RejectReason::ReplayedNonce)]);
    assert!(attacker_attributable(&run.report.log).is_empty());
}

#[test]
fn replies_to_the_same_payload_differ() {
    let (s, env) = load(REPLAY);
    let run = run_replay_game(&s, &env, -500).unwrap();
    let log = &run.report.log;
    let (original, replayed) = log
        .iter()
        .find_map(|e| match &e.event {
            Event::BroadcastSent {
                msg_id,
                original: Some(o),
                ..
            } => Some((*o, *msg_id)),
            _ => None,
        })
        .unwrap();
    let digest_of = |msg: u64| {
        log.iter()
            .find_map(|e| match &e.event {
                Event::LoginSent {
                    in_reply_to, digest, ..
                } if *in_reply_to == msg => Some(digest.clone()),
                _ => None,
            })
            .unwrap()
    };
    assert_ne!(digest_of(original), digest_of(replayed));
}

#[test]
fn replay_game_rejects_bad_setups() {
    let (s, env) = load(REPLAY);
    assert!(matches!(
        run_replay_game(&s, &env, -1500),
        Err(GameError::ReplayBeforeRecording { .. })
    ));
    let away = Scenario::from_json(&REPLAY.replace("\"x_m\": 2, \"y_m\": 0", "\"x_m\": 200, \"y_m\": 0")).unwrap();
    assert!(matches!(
        run_replay_game(&away, &env, 1),
        Err(GameError::NoColocatedUser { .. })
    ));
    let mut none = s.clone();
    none.attacks.clear();
    assert!(matches!(
        run_replay_game(&none, &env, 1),
        Err(GameError::NoAttack(GameKind::Replay))
    ));
}

#[test]
fn embedded_replay_scenario_passes_as_is() {
    let (s, env) = load(REPLAY);
    let report = run_world(s.build(&env, None).unwrap());
    assert_eq!(report.outcomes.len(), 2);
    assert!(report.outcomes.iter().all(|o| o.passed()));
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn wormhole_to_another_area_is_rejected() {
    let (s, env) = load(WORMHOLE);
    let run = run_wormhole_game(&s, &env).unwrap();
    assert!(run.outcome.passed(), "{:?}", run.outcome.reason);
    assert!(!run.outcome.control);
    let (replies, direct) = attack_fates(&run.report.log);
    assert!(!replies.is_empty());
    assert!(replies
        .iter()
        .all(|f| *f == Fate::Rejected(RejectReason::TokenMismatch)));
    assert_eq!(direct, vec![Fate::Rejected(RejectReason::TokenMismatch)]);
    // Carol answered the tunneled broadcast at p.
    let carol_replies = run
        .report
        .log
        .iter()
        .filter(|e| {
            matches!(&e.event, Event::LoginSent { user, to_beacon, in_reply_to, .. }
                if user == "carol" && to_beacon == "p" && *in_reply_to == tunneled_id(&run.report.log))
        })
        .count();
    assert_eq!(carol_replies, 1);
    // Her own beacon keeps authenticating her.
    assert!(run.report.log.iter().any(|e| {
        matches!(&e.event, Event::Authenticated { user, beacon, .. } if user == "carol" && beacon == "p")
    }));
}

fn tunneled_id(log: &[LogEntry]) -> u64 {
    log.iter()
        .find_map(|e| match &e.event {
            Event::BroadcastSent {
                msg_id,
                transmitter: Transmitter::Attacker,
                ..
            } => Some(*msg_id),
            _ => None,
        })
        .unwrap()
}

fn retarget(s: &Scenario, to: &str, delay: u64) -> Scenario {
    let mut s = s.clone();
    for a in &mut s.attacks {
        if let AttackScript::Wormhole {
            to: t, tunnel_delay_ms, ..
        } = a
        {
            *t = to.to_string();
            *tunnel_delay_ms = delay;
        }
    }
    s
}

#[test]
fn wormhole_back_to_the_same_area_is_the_control_case() {
    let (s, env) = load(WORMHOLE);
    let run = run_wormhole_game(&retarget(&s, "l", 0), &env).unwrap();
    assert!(run.outcome.passed(), "{:?}", run.outcome.reason);
    assert!(run.outcome.control);
    let (replies, direct) = attack_fates(&run.report.log);
    assert!(replies.iter().all(|f| *f == Fate::Authenticated));
    assert!(!replies.is_empty());
    assert_eq!(direct, vec![Fate::Rejected(RejectReason::ReplayedNonce)]);
}

#[test]
fn wormhole_after_the_window_fails_on_the_period() {
    let (s, env) = load(WORMHOLE);
    let run = run_wormhole_game(&retarget(&s, "p", 2500), &env).unwrap();
    assert!(run.outcome.passed(), "{:?}", run.outcome.reason);
    let (replies, direct) = attack_fates(&run.report.log);
    assert!(!replies.is_empty());
    assert!(replies
        .iter()
        .all(|f| *f == Fate::Rejected(RejectReason::TokenMismatch)));
    assert_eq!(direct, vec![Fate::Rejected(RejectReason::TokenMismatch)]);
}

#[test]
fn wormhole_needs_disjoint_areas() {
    let (_, env) = load(WORMHOLE);
    let close = Scenario::from_json(&WORMHOLE.replace("\"x_m\": 50", "\"x_m\": 15")).unwrap();
    assert!(matches!(
        run_wormhole_game(&close, &env),
        Err(GameError::OverlappingRanges { .. })
    ));
}

#[test]
fn jamming_two_channels_is_harmless_and_three_forces_fallback() {
    let (s, env) = load(DOS);
    let run = run_dos_game(&s, &env).unwrap();
    assert!(run.outcome.passed(), "{:?}", run.outcome.reason);
    let log = &run.report.log;
    let in_window = |from: u64, to: u64, pred: &dyn Fn(&Event) -> bool| {
        log.iter()
            .filter(|e| e.t_us >= from && e.t_us < to && pred(&e.event))
            .count()
    };
    let auth = |e: &Event| matches!(e, Event::Authenticated { .. });
    // Partial jam over [1 s, 2 s): every tick still gets through.
    assert_eq!(in_window(1_000_000, 2_000_000, &auth), 10);
    assert_eq!(
        in_window(1_000_000, 2_000_000, &|e| matches!(e, Event::BroadcastJammed { .. })),
        0
    );
    let channels: Vec<u8> = log
        .iter()
        .filter(|e| (1_000_000..2_000_000).contains(&e.t_us))
        .filter_map(|e| match &e.event {
            Event::BroadcastSent { channel, .. } => Some(*channel),
            _ => None,
        })
        .collect();
    assert!(channels.iter().all(|&c| c == 2));
    // Full jam over [3 s, 4 s): nothing gets through.
    assert_eq!(in_window(3_000_000, 4_000_000, &auth), 0);
    assert_eq!(
        in_window(3_000_000, 4_000_000, &|e| matches!(e, Event::BroadcastJammed { .. })),
        10
    );
    let fallback: Vec<u64> = log
        .iter()
        .filter(|e| matches!(e.event, Event::FallbackRequired { .. }))
        .map(|e| e.t_us)
        .collect();
    // Third jammed tick: ticks 30, 31, 32 at 102.4 ms spacing.
    assert_eq!(fallback, vec![32 * 102_400]);
    assert!(fallback[0] <= 3_000_000 + 3 * 102_400);
    // Recovery at the first tick after the jam.
    let first_after = log
        .iter()
        .find(|e| e.t_us >= 4_000_000 && auth(&e.event))
        .map(|e| e.t_us);
    assert_eq!(first_after, Some(40 * 102_400));
}

#[test]
fn dos_game_requires_both_jam_kinds() {
    let (mut s, env) = load(DOS);
    s.attacks.truncate(1);
    let run = run_dos_game(&s, &env).unwrap();
    assert_eq!(run.outcome.verdict, Verdict::Fail);
    assert!(run.outcome.reason.unwrap().contains("full_jams"));
}

#[test]
fn verdicts_are_appended_to_the_log() {
    let (s, env) = load(DOS);
    let run = run_dos_game(&s, &env).unwrap();
    let verdicts: Vec<_> = run
        .report
        .log
        .iter()
        .filter_map(|e| match &e.event {
            Event::GameVerdict { outcome } => Some(outcome.clone()),
            _ => None,
        })
        .collect();
    // One per attack plus the combined game.
    assert_eq!(verdicts.len(), 3);
    assert_eq!(verdicts.last().unwrap(), &run.outcome);
    assert_eq!(verdicts.last().unwrap().attacks, vec![0, 1]);
}

#[test]
fn login_reply_target_is_recorded_from_the_honest_reply() {
    let (s, env) = load(REPLAY);
    let run = run_replay_game(&s, &env, 1).unwrap();
    let recorded: Vec<ReplayTarget> = run
        .report
        .log
        .iter()
        .filter_map(|e| match &e.event {
            Event::AttackerRecorded { target, .. } => Some(*target),
            _ => None,
        })
        .collect();
    assert_eq!(recorded, vec![ReplayTarget::Broadcast, ReplayTarget::LoginReply]);
}
