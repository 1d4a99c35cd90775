//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use visor_core::dataset::{
    balance_by, balance_rl, generate_corpus, read_corpus, read_records_file, sample_episode,
    split_seed, world_seed_for, CorpusConfig, CorpusStats, DecisionRecord, StatsTable,
};
use visor_core::episode::{
    derive_seed, read_episode_log, run_episode, write_episode_log, EpisodeMode, RunOptions,
};
use visor_core::eval::{compare, evaluate, Benchmark, EvalConfig, EvalReport};
use visor_core::learn::{
    evaluate_toy, featurize, load_checkpoint, save_checkpoint, synthetic_prompts, train_gspo,
    train_sft, write_curve_csv, CheckpointMeta, KlPlacement, LearnError, RLConfig, RatioLevel,
    SftConfig, SyntheticConfig, ToyPolicy, ToyPrompt, TrainConfig,
};
use visor_core::policies::{
    builtin, ExternalPolicy, Policy, PolicyError, Transport, BUILTIN_POLICIES,
};
use visor_core::sensors::RgbImage;
use visor_core::world::{generate_world, GridWorld};

use crate::config::{FileConfig, Given};
use crate::CliError;
use crate::{
    Cmd, CompareArgs, DataArgs, EvaluateArgs, GenCorpusArgs, GenWorldArgs, KlArg, ModeArg,
    RatioArg, ReplayArgs, RunEpisodeArgs, StatsArgs, TrainGspoArgs, TrainSftArgs,
};

type Res = Result<(), CliError>;

pub fn run(cmd: Cmd, given: Given<'_>) -> Res {
    match cmd {
        Cmd::GenWorld(a) => gen_world(a, &given),
        Cmd::GenCorpus(a) => gen_corpus(a, &given),
        Cmd::Stats(a) => stats(a),
        Cmd::RunEpisode(a) => run_one(a, &given),
        Cmd::Evaluate(a) => evaluate_cmd(a, &given),
        Cmd::TrainSft(a) => train_sft_cmd(a, &given),
        Cmd::TrainGspo(a) => train_gspo_cmd(a, &given),
        Cmd::Replay(a) => replay(a),
        Cmd::Compare(a) => compare_cmd(a),
    }
}

fn out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn mode(m: ModeArg) -> EpisodeMode {
    match m {
        ModeArg::Normal => EpisodeMode::Normal,
        ModeArg::OracleStop => EpisodeMode::OracleStop,
    }
}

enum PolicySpec {
    Builtin(String),
    External(Transport),
}

fn policy_spec(s: &str) -> Result<PolicySpec, CliError> {
    if BUILTIN_POLICIES.contains(&s) {
        Ok(PolicySpec::Builtin(s.to_string()))
    } else if s.contains(':') {
        s.parse()
            .map(PolicySpec::External)
            .map_err(CliError::config)
    } else {
        Err(CliError::config(format!(
            "unknown policy {s:?}; use one of {} or an external transport",
            BUILTIN_POLICIES.join(", ")
        )))
    }
}

fn make_policy(spec: &PolicySpec, timeout: Duration) -> Result<Box<dyn Policy>, PolicyError> {
    match spec {
        PolicySpec::Builtin(name) => builtin(name),
        PolicySpec::External(t) => Ok(Box::new(ExternalPolicy::connect(t, timeout)?)),
    }
}

fn check_jobs(jobs: usize) -> Res {
    if jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    Ok(())
}

fn gen_world(a: GenWorldArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = g.pick("seed", a.common.seed, file.seed);
    let cfg = file.world();
    cfg.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let world = generate_world(seed, &cfg)?;
    out_dir(&a.out)?;
    write(&a.out.join("world.json"), world.to_json())?;
    println!(
        "world seed {seed}: {}x{} cells, {} rooms, {} objects",
        world.width,
        world.height,
        world.rooms.len(),
        world.objects.len()
    );
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let cfg = CorpusConfig {
        episodes: g.pick("episodes", a.episodes, file.episodes),
        seed: g.pick("seed", a.common.seed, file.seed),
        split: g.pick("split", a.split.clone(), file.split.clone()),
        jobs: g.pick("jobs", a.jobs, file.jobs),
        world: file.world(),
        run: RunOptions {
            keep_frames: true,
            ..file.run_options()
        },
        min_start_distance: g.pick(
            "min_start_distance",
            a.min_start_distance,
            file.min_start_distance,
        ),
    };
    check_jobs(cfg.jobs)?;
    if cfg.episodes == 0 {
        return Err(CliError::config("--episodes must be at least 1"));
    }
    let corpus = generate_corpus(&cfg)?;
    if corpus.records.is_empty() {
        return Err(anyhow::anyhow!("every episode aborted").into());
    }
    corpus.write(&a.out)?;
    let stats = CorpusStats::of(&cfg.split, &corpus.records);
    let split_dir = a.out.join(&cfg.split);
    write(
        &split_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    // Thread count does not affect the data, so it stays out of the record.
    let mut recorded = serde_json::to_value(&cfg)?;
    if let Some(m) = recorded.as_object_mut() {
        m.remove("jobs");
    }
    write(
        &split_dir.join("config.json"),
        serde_json::to_string_pretty(&recorded)?,
    )?;
    print!("{}", StatsTable(&[stats]));
    if !corpus.aborted.is_empty() {
        println!("{} episodes aborted and skipped", corpus.aborted.len());
    }
    Ok(())
}

fn stats(a: StatsArgs) -> Res {
    let mut splits: Vec<String> = fs::read_dir(&a.corpus)
        .with_context(|| format!("reading {}", a.corpus.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("records.jsonl").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    splits.sort();
    if splits.is_empty() {
        return Err(
            anyhow::anyhow!("no split with records.jsonl under {}", a.corpus.display()).into(),
        );
    }
    let mut all = Vec::new();
    for s in &splits {
        all.push(CorpusStats::of(s, &read_corpus(&a.corpus, s)?));
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&all)?);
    } else {
        print!("{}", StatsTable(&all));
    }
    Ok(())
}

fn load_bench(path: &Path) -> Result<Benchmark, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Benchmark::from_json(&text).map_err(|e| CliError::config(e.to_string()))
}

fn run_one(a: RunEpisodeArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = g.pick("seed", a.common.seed, file.seed);
    let spec = policy_spec(&a.policy.policy)?;
    let (world, episode): (GridWorld, _) = match &a.bench {
        Some(p) => {
            let b = load_bench(p)?;
            let e = b.episodes.get(a.episode).cloned().ok_or_else(|| {
                CliError::config(format!("benchmark has {} episodes", b.episodes.len()))
            })?;
            (generate_world(e.world_seed, &b.world)?, e)
        }
        None => {
            let base = split_seed(seed, "run");
            let s = sample_episode(
                world_seed_for(base, 0),
                derive_seed(base, 0),
                &file.world(),
                "run_00000",
                file.min_start_distance.unwrap_or(3.0),
            )?;
            (s.world, s.spec)
        }
    };
    let mut policy = make_policy(&spec, Duration::from_secs(a.policy.timeout))?;
    let opts = RunOptions {
        keep_frames: true,
        ..file.run_options()
    };
    let mut result = run_episode(
        &world,
        &episode,
        policy.as_mut(),
        mode(a.policy.mode),
        seed,
        &opts,
    )?;
    out_dir(&a.out)?;
    for d in &mut result.decisions {
        if let Some(f) = d.frames.take() {
            write(
                &a.out.join(format!("step_{:03}_pano.png", d.decision_index)),
                &f.panorama_png,
            )?;
            write(
                &a.out
                    .join(format!("step_{:03}_topdown.png", d.decision_index)),
                &f.topdown_png,
            )?;
        }
    }
    let mut log = Vec::new();
    write_episode_log(&mut log, &result)?;
    write(&a.out.join("episode.jsonl"), log)?;
    write(
        &a.out.join("episode_spec.json"),
        serde_json::to_string_pretty(&episode)?,
    )?;
    println!("instruction: {}", episode.instruction);
    println!(
        "{:?}: success={} decisions={} steps={} path={:.2} m shortest={:.2} m",
        result.termination,
        result.success,
        result.decisions.len(),
        result.low_level_steps,
        result.path_length,
        result.shortest_path
    );
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let seed = g.pick("seed", a.common.seed, file.seed);
    let jobs = g.pick("jobs", a.jobs, file.jobs);
    check_jobs(jobs)?;
    let spec = policy_spec(&a.policy.policy)?;
    let bench = match &a.bench {
        Some(p) => load_bench(p)?,
        None => {
            let n = g.pick("episodes", a.episodes, file.episodes);
            if n == 0 {
                return Err(CliError::config("--episodes must be at least 1"));
            }
            let split = g.pick("split", a.split.clone(), file.split.clone());
            let min = g.pick(
                "min_start_distance",
                a.min_start_distance,
                file.min_start_distance,
            );
            Benchmark::generate(n, seed, &split, &file.world(), min)?
        }
    };
    let timeout = Duration::from_secs(a.policy.timeout);
    let cfg = EvalConfig {
        mode: mode(a.policy.mode),
        seed,
        jobs,
        run: file.run_options(),
    };
    let make = move || make_policy(&spec, timeout);
    let (report, _) = evaluate(&bench, &make, &cfg)?;
    out_dir(&a.out)?;
    if a.bench.is_none() {
        write(&a.out.join("benchmark.json"), bench.to_json())?;
    }
    write(
        &a.out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write(&a.out.join("report.txt"), report.to_string())?;
    print!("{report}");
    Ok(())
}

/// Featurized prompts of a corpus split.
fn corpus_prompts(
    corpus: &Path,
    split: &str,
    records: &[DecisionRecord],
) -> Result<Vec<ToyPrompt>, CliError> {
    let dir = corpus.join(split);
    records
        .iter()
        .map(|r| {
            let png = fs::read(dir.join(&r.panorama_png))
                .with_context(|| format!("reading {}", r.panorama_png))?;
            let img = RgbImage::from_png(&png)?;
            Ok(featurize(&r.instruction, &img, &r.labels(), r.gt_label))
        })
        .collect()
}

/// Training and held-out prompts.
fn load_data(
    d: &DataArgs,
    seed: u64,
    balance: bool,
    synthetic: Option<SyntheticConfig>,
) -> Result<(Vec<ToyPrompt>, Vec<ToyPrompt>), CliError> {
    match &d.corpus {
        Some(dir) => {
            let path = dir.join(&d.split).join("records.jsonl");
            let mut records = read_records_file(&path)
                .map_err(|e| CliError::config(format!("cannot load {}: {e}", path.display())))?;
            if balance {
                records = balance_rl(&records, seed)?;
            }
            let train = corpus_prompts(dir, &d.split, &records)?;
            let held = match &d.eval_split {
                Some(s) => corpus_prompts(dir, s, &read_corpus(dir, s)?)?,
                None => Vec::new(),
            };
            Ok((train, held))
        }
        None => {
            let base = synthetic.unwrap_or_default();
            let mut train = synthetic_prompts(&SyntheticConfig {
                n: d.synthetic_n,
                seed,
                ..base.clone()
            });
            if balance {
                train = balance_by(&train, ToyPrompt::is_stop, seed)?;
            }
            let held = synthetic_prompts(&SyntheticConfig {
                n: 1000,
                seed: derive_seed(seed, 1),
                ..base
            });
            Ok((train, held))
        }
    }
}

fn held_out_report(
    out: &Path,
    name: &str,
    policy: &ToyPolicy,
    held: &[ToyPrompt],
    weights: visor_core::learn::RewardWeights,
) -> Res {
    if held.is_empty() {
        return Ok(());
    }
    let ev = evaluate_toy(policy, held, weights);
    println!(
        "held-out: mean reward {:.4}, stop recall {:.3}, stop rate {:.3}, accuracy {:.3}",
        ev.mean_reward, ev.stop_recall, ev.stop_rate, ev.accuracy
    );
    write(&out.join(name), serde_json::to_string_pretty(&ev)?)
}

fn train_sft_cmd(a: TrainSftArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let base = file.sft.clone().unwrap_or_default();
    let cfg = SftConfig {
        steps: g.pick("steps", a.steps, Some(base.steps)),
        batch_size: g.pick("batch_size", a.batch_size, Some(base.batch_size)),
        learning_rate: g.pick("lr", a.lr, Some(base.learning_rate)),
        seed: g.pick("seed", a.common.seed, file.seed),
    };
    if cfg.batch_size == 0 || cfg.learning_rate <= 0.0 {
        return Err(CliError::config("--batch-size and --lr must be positive"));
    }
    let (train, held) = load_data(&a.data, cfg.seed, false, file.synthetic.clone())?;
    let mut policy = ToyPolicy::uniform();
    let losses = train_sft(&mut policy, &train, &cfg)?;
    out_dir(&a.out)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write(&a.out.join("sft_loss.csv"), csv)?;
    let meta = CheckpointMeta {
        version: 0,
        n_params: 0,
        temperature: policy.temperature,
        stage: "sft".into(),
        step: cfg.steps,
        seed: cfg.seed,
        config: serde_json::to_value(&cfg)?,
    };
    save_checkpoint(&a.out.join("sft"), &policy, &meta)?;
    println!(
        "sft: {} decisions, final loss {:.4}",
        train.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    held_out_report(&a.out, "sft_eval.json", &policy, &held, Default::default())
}

fn train_gspo_cmd(a: TrainGspoArgs, g: &Given<'_>) -> Res {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let base = file.gspo.clone().unwrap_or_default();
    let cfg = TrainConfig {
        rl: RLConfig {
            clip_eps: g.pick("clip_eps", a.clip_eps, Some(base.rl.clip_eps)),
            beta: g.pick("beta", a.beta, Some(base.rl.beta)),
            group_size: g.pick("group_size", a.group_size, Some(base.rl.group_size)),
            learning_rate: g.pick("lr", a.lr, Some(base.rl.learning_rate)),
            ref_refresh: base.rl.ref_refresh,
            ratio: g.pick(
                "ratio",
                match a.ratio {
                    RatioArg::Sequence => RatioLevel::Sequence,
                    RatioArg::Token => RatioLevel::Token,
                },
                Some(base.rl.ratio),
            ),
            kl: g.pick(
                "kl",
                match a.kl {
                    KlArg::Objective => KlPlacement::Objective,
                    KlArg::Surrogate => KlPlacement::Surrogate,
                },
                Some(base.rl.kl),
            ),
        },
        steps: g.pick("steps", a.steps, Some(base.steps)),
        prompts_per_step: g.pick(
            "prompts_per_step",
            a.prompts_per_step,
            Some(base.prompts_per_step),
        ),
        inner_updates: base.inner_updates,
        weights: base.weights,
        seed: g.pick("seed", a.common.seed, file.seed),
    };
    let init = match &a.init {
        Some(stem) => {
            load_checkpoint(stem)
                .map_err(|e| CliError::config(format!("--init: {e}")))?
                .0
        }
        None => ToyPolicy::uniform(),
    };
    let (train, held) = load_data(&a.data, cfg.seed, a.balance, file.synthetic.clone())?;
    let outcome = match train_gspo(&init, &train, &cfg) {
        Ok(o) => o,
        Err(e @ (LearnError::GroupTooSmall(_) | LearnError::Config(_))) => {
            return Err(CliError::config(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    out_dir(&a.out)?;
    let f = fs::File::create(a.out.join("curve.csv")).context("creating curve.csv")?;
    write_curve_csv(f, &outcome.curve)?;
    let meta = CheckpointMeta {
        version: 0,
        n_params: 0,
        temperature: outcome.policy.temperature,
        stage: "gspo".into(),
        step: cfg.steps,
        seed: cfg.seed,
        config: serde_json::to_value(&cfg)?,
    };
    save_checkpoint(&a.out.join("gspo"), &outcome.policy, &meta)?;
    let last = outcome.curve.last();
    println!(
        "gspo: {} decisions, final batch reward {:.4}",
        train.len(),
        last.map(|c| c.mean_reward).unwrap_or(f64::NAN)
    );
    held_out_report(
        &a.out,
        "gspo_eval.json",
        &outcome.policy,
        &held,
        cfg.weights,
    )
}

fn replay(a: ReplayArgs) -> Res {
    let f = fs::File::open(&a.log)
        .map_err(|e| CliError::config(format!("cannot open {}: {e}", a.log.display())))?;
    let r = read_episode_log(BufReader::new(f)).map_err(|e| anyhow::anyhow!(e))?;
    let mut text = format!(
        "episode {} ({:?}): {:?}, success={}, {} steps, path {:.2} m, shortest {:.2} m\n",
        r.episode_id,
        r.mode,
        r.termination,
        r.success,
        r.low_level_steps,
        r.path_length,
        r.shortest_path
    );
    for d in &r.decisions {
        let action = d
            .parsed
            .as_ref()
            .map(|p| p.decision.action_text())
            .unwrap_or_else(|| "<invalid>".into());
        let labels: String = d.set.labels().into_iter().collect();
        text.push_str(&format!(
            "#{:<3} pose ({:.2}, {:.2}, {:>4.0}°) goal {:.2} m labels [{labels}] gt {} -> {action} (+{} steps, goal {:.2} m)\n",
            d.decision_index,
            d.pose.x,
            d.pose.y,
            d.pose.heading.to_degrees(),
            d.set.pose_goal_distance,
            d.set.gt,
            d.low_level_actions,
            d.goal_distance_after
        ));
        for e in &d.errors {
            text.push_str(&format!("     error: {e}\n"));
        }
    }
    print!("{text}");
    if let Some(out) = &a.out {
        out_dir(out)?;
        write(&out.join("timeline.txt"), text)?;
    }
    Ok(())
}

fn read_report(p: &Path) -> Result<EvalReport, CliError> {
    let text = fs::read_to_string(p)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{} is not a report: {e}", p.display())))
}

fn compare_cmd(a: CompareArgs) -> Res {
    let (x, y) = (read_report(&a.a)?, read_report(&a.b)?);
    let diff = compare(&x, &y);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&diff)?);
    } else {
        print!("{diff}");
    }
    Ok(())
}
