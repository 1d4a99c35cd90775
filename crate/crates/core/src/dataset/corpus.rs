//! Corpus generation with the shortest-path follower.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instruction::synthesize_instruction;
use super::trace::{synthesize_trace, TraceContext};
use super::{read_records_file, write_records, DatasetError, DecisionRecord};
use crate::episode::{
    derive_seed, episode_spec, run_episode, EpisodeMode, EpisodeSpec, HighLevelDecision,
    RunOptions, Termination,
};
use crate::policies::OraclePolicy;
use crate::waypoints::GroundTruth;
use crate::world::{generate_world, GoalField, GridWorld, Pose, WorldConfig, TURN_STEP};

const START_CLEARANCE: f64 = 0.3;
const TARGET_TRIES: usize = 40;
const START_TRIES: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub episodes: usize,
    pub seed: u64,
    pub split: String,
    pub jobs: usize,
    pub world: WorldConfig,
    pub run: RunOptions,
    /// Minimum start-to-goal distance in meters.
    pub min_start_distance: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0,
            split: "train".into(),
            jobs: 1,
            world: WorldConfig::default(),
            run: RunOptions {
                keep_frames: true,
                ..RunOptions::default()
            },
            min_start_distance: 3.0,
        }
    }
}

/// Base seed of a split: distinct split names give unrelated streams.
pub fn split_seed(seed: u64, split: &str) -> u64 {
    let h = split.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    });
    derive_seed(seed, h)
}

/// World seed of episode `e` in a split.
pub fn world_seed_for(split_seed: u64, e: usize) -> u64 {
    derive_seed(split_seed ^ 0x0077_6f72_6c64, e as u64)
}

/// A navigation task with its world.
#[derive(Debug, Clone)]
pub struct EpisodeSample {
    pub world: GridWorld,
    pub spec: EpisodeSpec,
}

/// Pick a target with a unique instruction and a start pose at least
/// `min_distance` from it.
pub fn sample_episode(
    world_seed: u64,
    episode_seed: u64,
    world_cfg: &WorldConfig,
    episode_id: &str,
    min_distance: f64,
) -> Result<EpisodeSample, DatasetError> {
    let world =
        generate_world(world_seed, world_cfg).map_err(|_| DatasetError::NoEpisode(world_seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let free: Vec<_> = world.free_cells().collect();
    if world.objects.is_empty() || free.is_empty() {
        return Err(DatasetError::NoEpisode(world_seed));
    }
    for _ in 0..TARGET_TRIES {
        let ti = rng.gen_range(0..world.objects.len());
        let Ok((instruction, true)) = synthesize_instruction(&world, ti, &mut rng) else {
            continue;
        };
        let field = GoalField::new(&world, &world.objects[ti]);
        for _ in 0..START_TRIES {
            let c = free[rng.gen_range(0..free.len())];
            let p = world.center(c);
            if field.at_cell(c).is_some_and(|d| d > min_distance)
                && world.clearance(p) >= START_CLEARANCE
            {
                let heading = rng.gen_range(0..24) as f64 * TURN_STEP;
                let spec = episode_spec(
                    episode_id,
                    world_seed,
                    Pose::new(p.x, p.y, heading),
                    world.objects[ti].id,
                    instruction,
                );
                return Ok(EpisodeSample { world, spec });
            }
        }
    }
    Err(DatasetError::NoEpisode(world_seed))
}

/// Records and images of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: String,
    pub records: Vec<DecisionRecord>,
    /// Sidecar images keyed by their path relative to the split directory.
    pub images: Vec<(String, Vec<u8>)>,
    /// Ids of skipped episodes with the reason.
    pub aborted: Vec<(String, String)>,
}

impl Corpus {
    /// Write `<dir>/<split>/records.jsonl` and `<dir>/<split>/img/`.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        let root = dir.join(&self.split);
        fs::create_dir_all(root.join("img"))?;
        for (rel, bytes) in &self.images {
            fs::write(root.join(rel), bytes)?;
        }
        write_records(fs::File::create(root.join("records.jsonl"))?, &self.records)
    }
}

pub fn read_corpus(dir: &Path, split: &str) -> Result<Vec<DecisionRecord>, DatasetError> {
    read_records_file(&dir.join(split).join("records.jsonl"))
}

type EpisodeOutput = (Vec<DecisionRecord>, Vec<(String, Vec<u8>)>);

fn one_episode(cfg: &CorpusConfig, base: u64, e: usize) -> Result<EpisodeOutput, DatasetError> {
    let id = format!("{}_{e:05}", cfg.split);
    let episode_seed = derive_seed(base, e as u64);
    let sample = sample_episode(
        world_seed_for(base, e),
        episode_seed,
        &cfg.world,
        &id,
        cfg.min_start_distance,
    )?;
    let world = &sample.world;
    let target = world
        .object(sample.spec.target_id)
        .expect("sampled target exists");
    let mut opts = cfg.run.clone();
    opts.keep_frames = true;
    let result = run_episode(
        world,
        &sample.spec,
        &mut OraclePolicy::new(),
        EpisodeMode::Normal,
        episode_seed,
        &opts,
    )
    .map_err(|err| DatasetError::EpisodeAborted(id.clone(), err.to_string()))?;
    if result.termination != Termination::StoppedCorrect {
        return Err(DatasetError::EpisodeAborted(
            id,
            format!("{:?}", result.termination),
        ));
    }

    let mut records = Vec::new();
    let mut images = Vec::new();
    for d in &result.decisions {
        let Some(parsed) = &d.parsed else { continue };
        let follows_gt = match (parsed.decision, d.set.gt) {
            (HighLevelDecision::Stop, GroundTruth::Stop) => true,
            (HighLevelDecision::GoTo(a), GroundTruth::Label(b)) => a == b,
            _ => false,
        };
        if !follows_gt {
            continue;
        }
        let trace = synthesize_trace(&TraceContext {
            world,
            pose: d.pose,
            set: &d.set,
            target,
            instruction: &sample.spec.instruction,
        });
        let pano = format!("img/{id}_{}_pano.png", d.decision_index);
        let top = format!("img/{id}_{}_topdown.png", d.decision_index);
        if let Some(f) = &d.frames {
            images.push((pano.clone(), f.panorama_png.clone()));
            images.push((top.clone(), f.topdown_png.clone()));
        }
        let distractors = d
            .set
            .labels()
            .into_iter()
            .filter(|&l| d.set.gt != GroundTruth::Label(l))
            .collect();
        records.push(DecisionRecord {
            instruction: sample.spec.instruction.clone(),
            panorama_png: pano,
            topdown_png: top,
            distance_to_goal: d.set.pose_goal_distance,
            gt_label: d.set.gt,
            distractors,
            trace,
            episode_id: id.clone(),
            step_index: d.decision_index,
            seed: episode_seed,
        });
    }
    Ok((records, images))
}

/// Roll out `cfg.episodes` demonstration episodes. Episodes that fail are
/// logged and skipped; output order and content depend only on the config.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus, DatasetError> {
    if cfg.episodes == 0 {
        return Err(DatasetError::NoEpisodes);
    }
    let base = split_seed(cfg.seed, &cfg.split);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| DatasetError::Io(std::io::Error::other(e)))?;
    let outputs: Vec<Result<EpisodeOutput, DatasetError>> = pool.install(|| {
        (0..cfg.episodes)
            .into_par_iter()
            .map(|e| one_episode(cfg, base, e))
            .collect()
    });
    let mut corpus = Corpus {
        split: cfg.split.clone(),
        records: Vec::new(),
        images: Vec::new(),
        aborted: Vec::new(),
    };
    for (e, out) in outputs.into_iter().enumerate() {
        match out {
            Ok((r, i)) => {
                corpus.records.extend(r);
                corpus.images.extend(i);
            }
            Err(err) => {
                log::warn!("skipping episode {e}: {err}");
                corpus
                    .aborted
                    .push((format!("{}_{e:05}", cfg.split), err.to_string()));
            }
        }
    }
    Ok(corpus)
}
