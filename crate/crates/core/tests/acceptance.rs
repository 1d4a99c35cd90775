//! Acceptance suite: one PASS/FAIL line per criterion, printed as each
//! finishes, then a single assertion over all of them.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visor_core::dataset::{
    balance_by, generate_corpus, instruction_tokens, CorpusConfig, CorpusStats,
};
use visor_core::episode::{parse_response, EpisodeMode, HighLevelDecision};
use visor_core::eval::{evaluate, spl_terms, Benchmark, EvalConfig, EvalReport};
use visor_core::learn::{
    evaluate_toy, group_advantages, gspo_objective, sequence_ratio, synthetic_prompts, train_gspo,
    train_sft, GroupRollout, KlPlacement, LearnError, Member, RLConfig, RatioLevel, RewardWeights,
    SftConfig, SyntheticConfig, ToyPolicy, ToyPrompt, TrainConfig,
};
use visor_core::policies::{builtin, Policy, PolicyError};
use visor_core::waypoints::{dbscan, GroundTruth};
use visor_core::world::{geodesic_distance, WorldConfig};

/// Bypasses the test harness's output capture so the lines always show.
fn report(n: usize, pass: bool, secs: f64, detail: &str) {
    let line = format!(
        "criterion {n}: {} ({secs:.1}s) {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn formula_fidelity() -> (bool, String) {
    let mut ok = true;
    let mut check = |name: &str, cond: bool, notes: &mut Vec<String>| {
        if !cond {
            notes.push(name.to_string());
        }
        ok &= cond;
    };
    let mut bad = Vec::new();
    let a = group_advantages(&[1.0, 0.0, 0.0, 1.0]).unwrap();
    // The 1e-8 stabiliser shifts unit advantages by 2e-8.
    check(
        "adv [1,0,0,1]",
        a.iter()
            .zip([1.0, -1.0, -1.0, 1.0])
            .all(|(x, y)| close(*x, y, 1e-7)),
        &mut bad,
    );
    check(
        "adv flat",
        group_advantages(&[0.5; 3])
            .unwrap()
            .iter()
            .all(|x| close(*x, 0.0, 1e-9)),
        &mut bad,
    );
    let a = group_advantages(&[1.0, 0.0]).unwrap();
    check(
        "adv [1,0]",
        close(a[0], 1.0, 1e-7) && close(a[1], -1.0, 1e-7),
        &mut bad,
    );
    check(
        "adv G=1",
        group_advantages(&[1.0]) == Err(LearnError::GroupTooSmall(1)),
        &mut bad,
    );

    let l = [-0.3, -1.2, -2.0];
    check(
        "ratio same",
        close(sequence_ratio(&l, &l).unwrap(), 1.0, 1e-9),
        &mut bad,
    );
    check(
        "ratio [2,.5]",
        close(
            sequence_ratio(&[2f64.ln(), 0.5f64.ln()], &[0.0, 0.0]).unwrap(),
            1.0,
            1e-9,
        ),
        &mut bad,
    );
    check(
        "ratio [2,2,2]",
        close(
            sequence_ratio(&[2f64.ln(); 3], &[0.0; 3]).unwrap(),
            2.0,
            1e-9,
        ),
        &mut bad,
    );

    let (p, g) = group_with_ratios([1.0, 1.0]);
    let cfg = RLConfig {
        beta: 0.0,
        ..Default::default()
    };
    check(
        "J ratios 1",
        close(gspo_objective(&p, &[g], &cfg, &p).unwrap().value, 0.0, 1e-6),
        &mut bad,
    );
    let (p, g) = group_with_ratios([1.5, 1.0]);
    check(
        "J clip 1.2",
        close(
            gspo_objective(&p, &[g], &cfg, &p).unwrap().value,
            (1.2 - 1.0) / 2.0,
            1e-6,
        ),
        &mut bad,
    );

    check(
        "spl success",
        close(spl_terms(&[(true, 4.0, 5.0)]).unwrap(), 0.8, 1e-9),
        &mut bad,
    );
    check(
        "spl fail",
        close(spl_terms(&[(false, 4.0, 4.0)]).unwrap(), 0.0, 1e-9),
        &mut bad,
    );
    check(
        "spl mean",
        close(
            spl_terms(&[(true, 3.0, 3.0), (true, 2.0, 4.0)]).unwrap(),
            0.75,
            1e-9,
        ),
        &mut bad,
    );
    (
        ok,
        if bad.is_empty() {
            "all tabulated examples match".into()
        } else {
            format!("mismatch: {}", bad.join(", "))
        },
    )
}

/// Two members with advantages ±1 whose sequence ratios are set exactly.
fn group_with_ratios(ratios: [f64; 2]) -> (ToyPolicy, GroupRollout) {
    let policy = ToyPolicy::uniform();
    let prompt = synthetic_prompts(&SyntheticConfig {
        n: 1,
        seed: 3,
        ..Default::default()
    })
    .remove(0);
    let tokens = visor_core::learn::sft_target(&prompt).unwrap();
    let lp = policy.token_logps(&prompt, &tokens);
    let members = ratios
        .iter()
        .zip([1.0, 0.0])
        .map(|(&s, reward)| Member {
            tokens: tokens.clone(),
            logp_old: lp.iter().map(|l| l - s.ln()).collect(),
            reward,
        })
        .collect();
    (policy, GroupRollout { prompt, members })
}

fn gradients() -> (bool, String) {
    let sft = (0..10).map(sft_gradient_error).fold(0.0, f64::max);
    let gspo = (0..10)
        .map(|s| gspo_gradient_error(100 + s, RatioLevel::Sequence, KlPlacement::Objective))
        .fold(0.0, f64::max);
    (
        sft < 1e-4 && gspo < 1e-4,
        format!("max relative error sft {sft:.2e}, gspo {gspo:.2e}"),
    )
}

fn geometry() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut geo_bad = 0;
    for maze in 0..50 {
        let w = random_maze(1000 + maze, 20);
        let free = free_cells(&w);
        let (a, b) = (
            *free.choose(&mut rng).unwrap(),
            *free.choose(&mut rng).unwrap(),
        );
        let got = geodesic_distance(&w, w.center(a), w.center(b));
        let ok = match (got, dijkstra(&w, a, b)) {
            (Some(g), Some(d)) => close(g, d, 1e-9),
            (None, None) => true,
            _ => false,
        };
        geo_bad += usize::from(!ok);
    }
    let px = pixel_round_trip_errors(77, 100);
    let px_worst = px.iter().cloned().fold(0.0, f64::max);
    let mut db_bad = 0;
    for _ in 0..50 {
        let pts = random_points(&mut rng);
        let (eps, min_pts) = (rng.gen_range(0.1..0.6), rng.gen_range(1..6));
        db_bad += usize::from(
            dbscan_matches_oracle(&pts, eps, min_pts, &dbscan(&pts, eps, min_pts)).is_err(),
        );
    }
    (
        geo_bad == 0 && px.len() == 100 && px_worst < 1.0 && db_bad == 0,
        format!("geodesic mismatches {geo_bad}/50, pixel worst {px_worst:.3} cells over {}, dbscan mismatches {db_bad}/50", px.len()),
    )
}

type Reports = BTreeMap<(String, bool), EvalReport>;

fn run_benchmarks() -> Reports {
    let bench = Benchmark::generate(100, 2024, "bench", &WorldConfig::default(), 3.0).unwrap();
    let jobs = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .max(2);
    let mut out = BTreeMap::new();
    for name in ["oracle", "random", "heuristic"] {
        for (oracle_stop, mode) in [
            (false, EpisodeMode::Normal),
            (true, EpisodeMode::OracleStop),
        ] {
            let make = move || -> Result<Box<dyn Policy>, PolicyError> { builtin(name) };
            let cfg = EvalConfig {
                mode,
                seed: 2024,
                jobs,
                ..Default::default()
            };
            out.insert(
                (name.to_string(), oracle_stop),
                evaluate(&bench, &make, &cfg).unwrap().0,
            );
        }
    }
    out
}

fn benchmark_ordering(r: &Reports) -> (bool, String) {
    let get = |n: &str| &r[&(n.to_string(), false)];
    let (o, rn, h) = (get("oracle"), get("random"), get("heuristic"));
    let pass = o.sr >= 95.0 && o.spl >= 70.0 && rn.sr <= 20.0 && h.sr > rn.sr && h.sr < o.sr;
    (
        pass,
        format!(
            "oracle SR {:.0} SPL {:.1}; random SR {:.0}; heuristic SR {:.0} SPL {:.1}",
            o.sr, o.spl, rn.sr, h.sr, h.spl
        ),
    )
}

fn oracle_stop_ordering(r: &Reports) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["oracle", "random", "heuristic"] {
        let (n, s) = (
            &r[&(name.to_string(), false)],
            &r[&(name.to_string(), true)],
        );
        pass &= s.sr >= n.sr && s.spl >= n.spl;
        if name == "heuristic" {
            pass &= s.sr > n.sr && s.spl > n.spl;
        }
        parts.push(format!(
            "{name} SR {:.0}->{:.0} SPL {:.1}->{:.1}",
            n.sr, s.sr, n.spl, s.spl
        ));
    }
    (pass, parts.join("; "))
}

struct LearnRuns {
    starved_recall: f64,
    balanced_recall: f64,
    balanced_separable_reward: f64,
    beta0: Result<f64, LearnError>,
    beta001: f64,
}

fn learn_runs() -> LearnRuns {
    let base = SyntheticConfig {
        n: 4000,
        seed: 1,
        ..Default::default()
    };
    let sft_data = synthetic_prompts(&base);
    let starved = synthetic_prompts(&SyntheticConfig {
        n: 2000,
        seed: 2,
        ..base.clone()
    });
    let balanced = balance_by(&starved, ToyPrompt::is_stop, 9).unwrap();
    let held_stop = synthetic_prompts(&SyntheticConfig {
        n: 1000,
        stop_fraction: 1.0,
        seed: 3,
        ..base.clone()
    });
    let held_sep = synthetic_prompts(&SyntheticConfig {
        n: 1000,
        stop_fraction: 0.5,
        seed: 4,
        ..base.separable()
    });
    let held_nat = synthetic_prompts(&SyntheticConfig {
        n: 2000,
        seed: 5,
        ..base.clone()
    });
    let w = RewardWeights::default();

    let mut warm = ToyPolicy::uniform();
    train_sft(
        &mut warm,
        &sft_data,
        &SftConfig {
            steps: 100,
            ..Default::default()
        },
    )
    .unwrap();
    let rl = |data: &[ToyPrompt], beta: f64| {
        let cfg = TrainConfig {
            steps: 300,
            rl: RLConfig {
                beta,
                ..Default::default()
            },
            seed: 7,
            ..Default::default()
        };
        train_gspo(&warm, data, &cfg)
    };
    let starved_policy = rl(&starved, 0.01).unwrap().policy;
    let balanced_policy = rl(&balanced, 0.01).unwrap().policy;
    let beta0 = rl(&balanced, 0.0);
    LearnRuns {
        starved_recall: evaluate_toy(&starved_policy, &held_stop, w).stop_recall,
        balanced_recall: evaluate_toy(&balanced_policy, &held_stop, w).stop_recall,
        balanced_separable_reward: evaluate_toy(&balanced_policy, &held_sep, w).mean_reward,
        beta0: beta0.map(|o| evaluate_toy(&o.policy, &held_nat, w).mean_reward),
        beta001: evaluate_toy(&balanced_policy, &held_nat, w).mean_reward,
    }
}

fn reward_hacking(l: &LearnRuns) -> (bool, String) {
    (
        l.starved_recall < 0.2 && l.balanced_recall >= 0.6 && l.balanced_separable_reward >= 0.9,
        format!(
            "starved recall {:.3}; balanced recall {:.3}, separable reward {:.3}",
            l.starved_recall, l.balanced_recall, l.balanced_separable_reward
        ),
    )
}

fn kl_ablation(l: &LearnRuns) -> (bool, String) {
    match &l.beta0 {
        Ok(r0) => (
            *r0 < l.beta001,
            format!(
                "held-out reward beta 0: {r0:.4}, beta 0.01: {:.4}",
                l.beta001
            ),
        ),
        Err(e @ LearnError::Divergence { .. }) => (true, format!("beta 0 run flagged: {e}")),
        Err(e) => (false, format!("beta 0 run failed: {e}")),
    }
}

fn corpus_invariants() -> (bool, String) {
    let cfg = CorpusConfig {
        episodes: 200,
        seed: 1,
        jobs: std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
        ..Default::default()
    };
    let corpus = generate_corpus(&cfg).unwrap();
    let stats = CorpusStats::of("train", &corpus.records);
    let mut episodes: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &corpus.records {
        episodes.entry(r.episode_id.as_str()).or_default().push(r);
    }
    let max_stops = episodes
        .values()
        .map(|v| v.iter().filter(|r| r.is_stop()).count())
        .max()
        .unwrap_or(0);
    let tokens: Vec<usize> = episodes
        .values()
        .map(|v| instruction_tokens(&v[0].instruction).len())
        .collect();
    let token_mean = tokens.iter().sum::<usize>() as f64 / tokens.len() as f64;
    let unparsed = corpus
        .records
        .iter()
        .filter(|r| {
            let want = match r.gt_label {
                GroundTruth::Label(c) => HighLevelDecision::GoTo(c),
                GroundTruth::Stop => HighLevelDecision::Stop,
                GroundTruth::TurnAround => HighLevelDecision::TurnAround,
            };
            !matches!(parse_response(&r.trace.response(), &r.labels()), Ok(p) if p.decision == want)
        })
        .count();
    let avg = stats.avg_action_space_size;
    (
        max_stops <= 1 && (2.0..=6.0).contains(&avg) && (15.0..=27.0).contains(&token_mean) && unparsed == 0,
        format!(
            "{} episodes ({} aborted), {} decisions, max stops/episode {max_stops}, avg action space {avg:.2}, token mean {token_mean:.2}, unparsed traces {unparsed}",
            episodes.len(),
            corpus.aborted.len(),
            corpus.records.len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    let mut timed = |n: usize, f: &mut dyn FnMut() -> (bool, String)| {
        let t = Instant::now();
        let (pass, detail) = f();
        report(n, pass, t.elapsed().as_secs_f64(), &detail);
        results.push((n, pass));
    };
    timed(1, &mut formula_fidelity);
    timed(2, &mut gradients);
    timed(3, &mut geometry);

    let t = Instant::now();
    let reports = run_benchmarks();
    let bench_secs = t.elapsed().as_secs_f64();
    // Criteria 4 and 5 share the six benchmark runs; each line shows the total.
    let (p4, d4) = benchmark_ordering(&reports);
    report(4, p4, bench_secs, &d4);
    results.push((4, p4));
    let (p5, d5) = oracle_stop_ordering(&reports);
    report(5, p5, bench_secs, &d5);
    results.push((5, p5));

    let t = Instant::now();
    let runs = learn_runs();
    let learn_secs = t.elapsed().as_secs_f64();
    let (p6, d6) = reward_hacking(&runs);
    report(6, p6, learn_secs, &d6);
    results.push((6, p6));
    let (p7, d7) = kl_ablation(&runs);
    report(7, p7, learn_secs, &d7);
    results.push((7, p7));

    let mut timed = |n: usize, f: &mut dyn FnMut() -> (bool, String)| {
        let t = Instant::now();
        let (pass, detail) = f();
        report(n, pass, t.elapsed().as_secs_f64(), &detail);
        results.push((n, pass));
    };
    timed(8, &mut corpus_invariants);

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, p)| !p)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
