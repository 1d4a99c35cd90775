//! Success rate, SPL, benchmark episode sets and report comparison.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{sample_episode, split_seed, world_seed_for, DatasetError};
use crate::episode::{
    derive_seed, run_episode, EpisodeMode, EpisodeResult, EpisodeSpec, RunOptions, Termination,
};
use crate::policies::{Policy, PolicyError};
use crate::world::{generate_world, WorldConfig};

pub const BENCHMARK_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episode results")]
    EmptyResults,
    #[error("episode {0} has a non-positive shortest path")]
    NonPositiveShortestPath(String),
    #[error("episode {0}: {1}")]
    Episode(String, String),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("benchmark: {0}")]
    Benchmark(String),
}

/// Success weighted by path length over `(success, shortest, taken)` triples,
/// as a fraction in [0, 1].
pub fn spl_terms(items: &[(bool, f64, f64)]) -> Result<f64, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut total = 0.0;
    for (i, &(s, l, p)) in items.iter().enumerate() {
        if l.is_nan() || l <= 0.0 {
            return Err(EvalError::NonPositiveShortestPath(i.to_string()));
        }
        if s {
            total += l / p.max(l);
        }
    }
    Ok(total / items.len() as f64)
}

pub fn spl(results: &[EpisodeResult]) -> Result<f64, EvalError> {
    if let Some(r) = results
        .iter()
        .find(|r| r.shortest_path.is_nan() || r.shortest_path <= 0.0)
    {
        return Err(EvalError::NonPositiveShortestPath(r.episode_id.clone()));
    }
    let items: Vec<(bool, f64, f64)> = results
        .iter()
        .map(|r| (r.success, r.shortest_path, r.path_length))
        .collect();
    spl_terms(&items)
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// A fixed episode set. Worlds are regenerated from their seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub version: u32,
    pub split: String,
    pub seed: u64,
    pub world: WorldConfig,
    pub episodes: Vec<EpisodeSpec>,
}

impl Benchmark {
    /// `n` episodes with start-to-goal distance above `min_distance`.
    pub fn generate(
        n: usize,
        seed: u64,
        split: &str,
        world: &WorldConfig,
        min_distance: f64,
    ) -> Result<Self, EvalError> {
        let base = split_seed(seed, split);
        let mut episodes = Vec::with_capacity(n);
        let mut e = 0;
        while episodes.len() < n {
            if e > 4 * n + 100 {
                return Err(EvalError::Benchmark(format!(
                    "only {} usable episodes",
                    episodes.len()
                )));
            }
            let id = format!("{split}_{e:05}");
            match sample_episode(
                world_seed_for(base, e),
                derive_seed(base, e as u64),
                world,
                &id,
                min_distance,
            ) {
                Ok(s) => episodes.push(s.spec),
                Err(DatasetError::NoEpisode(_)) => {}
                Err(err) => return Err(EvalError::Benchmark(err.to_string())),
            }
            e += 1;
        }
        Ok(Self {
            version: BENCHMARK_VERSION,
            split: split.to_string(),
            seed,
            world: world.clone(),
            episodes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benchmark serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        let b: Self = serde_json::from_str(s).map_err(|e| EvalError::Benchmark(e.to_string()))?;
        if b.version != BENCHMARK_VERSION {
            return Err(EvalError::Benchmark(format!(
                "unsupported benchmark version {}",
                b.version
            )));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EpisodeMode,
    pub seed: u64,
    pub jobs: usize,
    pub run: RunOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EpisodeMode::Normal,
            seed: 0,
            jobs: 1,
            run: RunOptions::default(),
        }
    }
}

/// Per-episode outcome kept in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub success: bool,
    pub termination: Termination,
    pub low_level_steps: usize,
    pub decisions: usize,
    pub path_length: f64,
    pub shortest_path: f64,
    pub hallucinations: usize,
}

impl From<&EpisodeResult> for EpisodeSummary {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            episode_id: r.episode_id.clone(),
            success: r.success,
            termination: r.termination,
            low_level_steps: r.low_level_steps,
            decisions: r.decisions.len(),
            path_length: r.path_length,
            shortest_path: r.shortest_path,
            hallucinations: r.hallucinations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub policy: String,
    pub mode: EpisodeMode,
    pub count: usize,
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub spl: f64,
    pub mean_steps: f64,
    pub terminations: BTreeMap<String, usize>,
    pub episodes: Vec<EpisodeSummary>,
}

impl EvalReport {
    pub fn from_results(
        split: &str,
        policy: &str,
        mode: EpisodeMode,
        results: &[EpisodeResult],
    ) -> Result<Self, EvalError> {
        let sr = success_rate(results)?;
        let spl = spl(results)?;
        let mut terminations = BTreeMap::new();
        for r in results {
            *terminations
                .entry(format!("{:?}", r.termination))
                .or_insert(0) += 1;
        }
        Ok(Self {
            split: split.to_string(),
            policy: policy.to_string(),
            mode,
            count: results.len(),
            sr: 100.0 * sr,
            spl: 100.0 * spl,
            mean_steps: results
                .iter()
                .map(|r| r.low_level_steps as f64)
                .sum::<f64>()
                / results.len() as f64,
            terminations,
            episodes: results.iter().map(EpisodeSummary::from).collect(),
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:<10} {:<11} {:>5} {:>6} {:>6} {:>10}",
            "Split", "Policy", "Mode", "N", "SR", "SPL", "Steps"
        )?;
        writeln!(
            f,
            "{:<12} {:<10} {:<11} {:>5} {:>6.1} {:>6.1} {:>10.1}",
            self.split,
            self.policy,
            format!("{:?}", self.mode),
            self.count,
            self.sr,
            self.spl,
            self.mean_steps
        )?;
        let hist: Vec<String> = self
            .terminations
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        writeln!(f, "terminations: {}", hist.join(" "))
    }
}

/// Run every benchmark episode. `make` builds a fresh policy; policies that
/// are not safe to run concurrently are driven by a single instance.
pub fn evaluate(
    bench: &Benchmark,
    make: &(dyn Fn() -> Result<Box<dyn Policy>, PolicyError> + Sync),
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<EpisodeResult>), EvalError> {
    if bench.episodes.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let run_one = |policy: &mut dyn Policy,
                   i: usize,
                   spec: &EpisodeSpec|
     -> Result<EpisodeResult, EvalError> {
        let world = generate_world(spec.world_seed, &bench.world)
            .map_err(|e| EvalError::Episode(spec.episode_id.clone(), e.to_string()))?;
        run_episode(
            &world,
            spec,
            policy,
            cfg.mode,
            derive_seed(cfg.seed, i as u64),
            &cfg.run,
        )
        .map_err(|e| EvalError::Episode(spec.episode_id.clone(), e.to_string()))
    };
    let mut first = make()?;
    let name = first.name();
    let results: Vec<EpisodeResult> = if cfg.jobs <= 1 || !first.concurrent_safe() {
        bench
            .episodes
            .iter()
            .enumerate()
            .map(|(i, s)| run_one(first.as_mut(), i, s))
            .collect::<Result<_, _>>()?
    } else {
        drop(first);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| EvalError::Benchmark(e.to_string()))?;
        pool.install(|| {
            bench
                .episodes
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut p = make()?;
                    run_one(p.as_mut(), i, s)
                })
                .collect::<Result<_, _>>()
        })?
    };
    let report = EvalReport::from_results(&bench.split, &name, cfg.mode, &results)?;
    Ok((report, results))
}

/// Side-by-side difference of two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub a: String,
    pub b: String,
    pub rows: Vec<(String, f64, f64)>,
    /// Episodes solved by exactly one side.
    pub only_a: Vec<String>,
    pub only_b: Vec<String>,
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> ReportDiff {
    let label = |r: &EvalReport| format!("{} ({:?})", r.policy, r.mode);
    let solved = |r: &EvalReport| -> Vec<String> {
        r.episodes
            .iter()
            .filter(|e| e.success)
            .map(|e| e.episode_id.clone())
            .collect()
    };
    let (sa, sb) = (solved(a), solved(b));
    ReportDiff {
        a: label(a),
        b: label(b),
        rows: vec![
            ("SR".into(), a.sr, b.sr),
            ("SPL".into(), a.spl, b.spl),
            ("episodes".into(), a.count as f64, b.count as f64),
            ("mean steps".into(), a.mean_steps, b.mean_steps),
        ],
        only_a: sa.iter().filter(|e| !sb.contains(e)).cloned().collect(),
        only_b: sb.iter().filter(|e| !sa.contains(e)).cloned().collect(),
    }
}

impl fmt::Display for ReportDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>22} {:>22} {:>9}",
            "metric", self.a, self.b, "delta"
        )?;
        for (k, x, y) in &self.rows {
            writeln!(f, "{k:<12} {x:>22.2} {y:>22.2} {:>+9.2}", y - x)?;
        }
        writeln!(f, "solved only by {}: {}", self.a, self.only_a.len())?;
        writeln!(f, "solved only by {}: {}", self.b, self.only_b.len())
    }
}
