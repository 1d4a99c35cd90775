//! The external policy host against in-process fake clients.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use visor_core::episode::{run_episode, EpisodeMode, RunOptions, Termination};
use visor_core::eval::{evaluate, Benchmark, EvalConfig};
use visor_core::policies::{
    ExternalPolicy, HeuristicConfig, HeuristicPolicy, Policy, PolicyError, PolicyQuery, Transport,
    WireQuery, WireResponse,
};
use visor_core::sensors::RgbImage;
use visor_core::world::{generate_world, WorldConfig};

/// Serve every connection on a fresh port; `answer` maps each query line
/// (after the handshake) to the reply line.
fn serve(answer: impl Fn(&str) -> String + Send + Sync + Clone + 'static) -> Transport {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { return };
            let answer = answer.clone();
            thread::spawn(move || {
                let mut out = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { return };
                    let reply = if line.contains("\"hello\"") {
                        r#"{"type":"hello","v":1}"#.to_string()
                    } else {
                        answer(&line)
                    };
                    if writeln!(out, "{reply}").is_err() {
                        return;
                    }
                }
            });
        }
    });
    format!("tcp:{port}").parse().unwrap()
}

fn episode() -> (
    visor_core::world::GridWorld,
    visor_core::episode::EpisodeSpec,
) {
    let bench = Benchmark::generate(1, 8, "ext", &WorldConfig::default(), 3.0).unwrap();
    let spec = bench.episodes[0].clone();
    (generate_world(spec.world_seed, &bench.world).unwrap(), spec)
}

fn query() -> PolicyQuery {
    PolicyQuery {
        instruction: "Find the chair.".into(),
        panorama: RgbImage::new(8, 4, [0, 0, 0]),
        topdown: RgbImage::new(4, 4, [0, 0, 0]),
        stop_allowed: true,
        decision_index: 0,
    }
}

#[test]
fn transport_strings_parse() {
    assert_eq!(
        "tcp:9000".parse::<Transport>().unwrap(),
        Transport::Tcp("127.0.0.1:9000".into())
    );
    assert_eq!(
        "tcp:host:1".parse::<Transport>().unwrap(),
        Transport::Tcp("host:1".into())
    );
    assert_eq!(
        "stdio:python3 client.py --x".parse::<Transport>().unwrap(),
        Transport::Stdio {
            program: "python3".into(),
            args: vec!["client.py".into(), "--x".into()]
        }
    );
    assert!("udp:1".parse::<Transport>().is_err());
}

#[test]
fn fixed_valid_response_is_forwarded_as_tagged_text() {
    let t = serve(|_| serde_json::to_string(&WireResponse::new("a", "b", "D")).unwrap());
    let mut p = ExternalPolicy::connect(&t, Duration::from_secs(5)).unwrap();
    let text = p.respond(&query()).unwrap();
    assert_eq!(
        text,
        "<think>a</think><think_summary>b</think_summary><action>D</action>"
    );
    assert!(!p.concurrent_safe());
}

#[test]
fn query_carries_decodable_images() {
    let t = serve(|line| {
        let q: WireQuery = serde_json::from_str(line).unwrap();
        let png = WireQuery::decode_png(&q.panorama_png_b64).unwrap();
        let img = RgbImage::from_png(&png).unwrap();
        let action = format!("{}x{}", img.width, img.height);
        serde_json::to_string(&WireResponse::new("", "", &action)).unwrap()
    });
    let mut p = ExternalPolicy::connect(&t, Duration::from_secs(5)).unwrap();
    assert!(p
        .respond(&query())
        .unwrap()
        .contains("<action>8x4</action>"));
}

#[test]
fn junk_fails_the_episode_after_one_retry() {
    let t = serve(|_| "this is not json".to_string());
    let mut p = ExternalPolicy::connect(&t, Duration::from_secs(5)).unwrap();
    assert!(matches!(
        p.respond(&query()),
        Err(PolicyError::ProtocolViolation(_))
    ));

    let (world, spec) = episode();
    let r = run_episode(
        &world,
        &spec,
        &mut p,
        EpisodeMode::Normal,
        0,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(r.termination, Termination::PolicyError);
    assert!(!r.success);
    assert_eq!(r.decisions.len(), 1);
    assert_eq!(r.decisions[0].errors.len(), 2);
    assert!(r.decisions[0]
        .errors
        .iter()
        .all(|e| e.contains("protocol violation")));
}

#[test]
fn silent_client_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let _keep = thread::spawn(move || {
        let s = listener.accept().unwrap().0;
        thread::sleep(Duration::from_secs(2));
        drop(s);
    });
    let t: Transport = format!("tcp:{port}").parse().unwrap();
    let e = ExternalPolicy::connect(&t, Duration::from_millis(200))
        .err()
        .unwrap();
    assert!(matches!(e, PolicyError::Timeout(_)));
}

#[test]
fn wrong_handshake_version_is_rejected() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        let mut out = s.try_clone().unwrap();
        let mut line = String::new();
        BufReader::new(s).read_line(&mut line).unwrap();
        writeln!(out, r#"{{"type":"hello","v":2}}"#).unwrap();
        thread::sleep(Duration::from_millis(200));
    });
    let t: Transport = format!("tcp:{port}").parse().unwrap();
    let e = ExternalPolicy::connect(&t, Duration::from_secs(5))
        .err()
        .unwrap();
    assert!(matches!(e, PolicyError::ProtocolViolation(_)));
}

#[test]
fn stdio_client_speaks_the_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("client.sh");
    std::fs::write(
        &script,
        "read hello\necho '{\"type\":\"hello\",\"v\":1}'\nwhile read q; do\n  echo '{\"v\":1,\"type\":\"response\",\"think\":\"t\",\"think_summary\":\"s\",\"action\":\"stop\"}'\ndone\n",
    )
    .unwrap();
    let t: Transport = format!("stdio:sh {}", script.display()).parse().unwrap();
    let mut p = ExternalPolicy::connect(&t, Duration::from_secs(5)).unwrap();
    assert!(p
        .respond(&query())
        .unwrap()
        .ends_with("<action>stop</action>"));
    assert!(p
        .respond(&query())
        .unwrap()
        .ends_with("<action>stop</action>"));
}

/// A client that decodes the wire images and runs the heuristic must
/// reproduce the in-process heuristic exactly over 20 episodes.
#[test]
fn remote_heuristic_matches_in_process_heuristic() {
    // The heuristic keeps a per-episode exploration counter, so the client
    // holds one instance per connection and resets it at decision 0.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let stream = stream.unwrap();
            thread::spawn(move || {
                let mut out = stream.try_clone().unwrap();
                let mut policy = HeuristicPolicy::new(HeuristicConfig::default());
                for line in BufReader::new(stream).lines() {
                    let line = line.unwrap();
                    if line.contains("\"hello\"") {
                        writeln!(out, r#"{{"type":"hello","v":1}}"#).unwrap();
                        continue;
                    }
                    let q: WireQuery = serde_json::from_str(&line).unwrap();
                    let img =
                        |b: &str| RgbImage::from_png(&WireQuery::decode_png(b).unwrap()).unwrap();
                    if q.decision_index == 0 {
                        policy.reset(0);
                    }
                    let query = PolicyQuery {
                        instruction: q.instruction,
                        panorama: img(&q.panorama_png_b64),
                        topdown: img(&q.topdown_png_b64),
                        stop_allowed: true,
                        decision_index: q.decision_index,
                    };
                    let text = policy.respond(&query).unwrap();
                    writeln!(
                        out,
                        "{}",
                        serde_json::to_string(&WireResponse::from_tagged(&text)).unwrap()
                    )
                    .unwrap();
                }
            });
        }
    });
    let t: Transport = format!("tcp:{port}").parse().unwrap();
    let bench = Benchmark::generate(20, 21, "ext", &WorldConfig::default(), 3.0).unwrap();
    let cfg = EvalConfig {
        mode: EpisodeMode::OracleStop,
        seed: 3,
        jobs: 4,
        ..Default::default()
    };
    let remote = move || -> Result<Box<dyn Policy>, PolicyError> {
        Ok(Box::new(ExternalPolicy::connect(
            &t,
            Duration::from_secs(30),
        )?))
    };
    let local = || -> Result<Box<dyn Policy>, PolicyError> {
        Ok(Box::new(HeuristicPolicy::new(HeuristicConfig::default())))
    };
    let (rr, rres) = evaluate(&bench, &remote, &cfg).unwrap();
    let (lr, _) = evaluate(&bench, &local, &cfg).unwrap();
    assert_eq!(rr.count, 20);
    let protocol_errors: usize = rres
        .iter()
        .flat_map(|r| &r.decisions)
        .flat_map(|d| &d.errors)
        .filter(|e| e.contains("protocol") || e.contains("transport") || e.contains("timed out"))
        .count();
    assert_eq!(protocol_errors, 0);
    assert_eq!(rr.sr, lr.sr);
    assert_eq!(rr.spl, lr.spl);
    assert_eq!(rr.episodes, lr.episodes);
}
