//! Decision corpora: records, statistics, balancing and JSONL storage.
//!
//! A corpus directory holds one subdirectory per split with
//! `records.jsonl` and an `img/` folder of PNG sidecars. Records refer to
//! their images by paths relative to the split directory.

mod corpus;
mod instruction;
mod trace;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::waypoints::GroundTruth;

pub use corpus::{
    generate_corpus, read_corpus, sample_episode, split_seed, world_seed_for, Corpus, CorpusConfig,
    EpisodeSample,
};
pub use instruction::{
    describe, filter_unique, instruction_tokens, parse_mentions, synthesize_instruction,
};
pub use trace::{synthesize_trace, Trace, TraceContext};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("object {0} has no attributes or relations to describe")]
    NoAttributes(u32),
    #[error("corpus holds no stop records")]
    NoStopRecords,
    #[error("episode {0} aborted: {1}")]
    EpisodeAborted(String, String),
    #[error("no usable episode found for world seed {0}")]
    NoEpisode(u64),
    #[error("need at least one episode")]
    NoEpisodes,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// One decision of a demonstration episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub instruction: String,
    /// Labelled panorama, relative to the split directory.
    pub panorama_png: String,
    /// Top-down map, relative to the split directory.
    pub topdown_png: String,
    pub distance_to_goal: f64,
    pub gt_label: GroundTruth,
    pub distractors: Vec<char>,
    pub trace: Trace,
    pub episode_id: String,
    pub step_index: usize,
    pub seed: u64,
}

impl DecisionRecord {
    pub fn is_stop(&self) -> bool {
        self.gt_label == GroundTruth::Stop
    }

    /// Labels overlaid on the panorama.
    pub fn labels(&self) -> Vec<char> {
        let mut l = self.distractors.clone();
        if let GroundTruth::Label(c) = self.gt_label {
            l.push(c);
        }
        l.sort_unstable();
        l
    }

    /// Available actions: every label plus Stop.
    pub fn action_space_size(&self) -> usize {
        self.labels().len() + 1
    }

    /// Violations of the record invariants, empty when valid.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if let GroundTruth::Label(c) = self.gt_label {
            if self.distractors.contains(&c) {
                bad.push(format!("gt {c} listed as distractor"));
            }
        }
        if (self.distance_to_goal < crate::waypoints::STOP_RADIUS) != self.is_stop() {
            bad.push(format!(
                "distance {:.3} disagrees with gt {}",
                self.distance_to_goal, self.gt_label
            ));
        }
        if self.trace.action != self.gt_label.to_string() {
            bad.push(format!(
                "trace action {} differs from gt {}",
                self.trace.action, self.gt_label
            ));
        }
        bad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub split: String,
    pub samples: usize,
    pub stop_actions: usize,
    pub non_stop_actions: usize,
    pub avg_action_space_size: f64,
}

impl CorpusStats {
    pub fn of(split: &str, records: &[DecisionRecord]) -> Self {
        let stop = records.iter().filter(|r| r.is_stop()).count();
        let actions: usize = records.iter().map(|r| r.action_space_size()).sum();
        Self {
            split: split.to_string(),
            samples: records.len(),
            stop_actions: stop,
            non_stop_actions: records.len() - stop,
            avg_action_space_size: if records.is_empty() {
                0.0
            } else {
                actions as f64 / records.len() as f64
            },
        }
    }
}

/// Text table with one row per split.
pub struct StatsTable<'a>(pub &'a [CorpusStats]);

impl fmt::Display for StatsTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>9} {:>13} {:>17} {:>23}",
            "Split", "# Samples", "# Stop Actions", "# Non-Stop Actions", "Avg. Action Space Size"
        )?;
        for s in self.0 {
            writeln!(
                f,
                "{:<12} {:>9} {:>13} {:>17} {:>23.2}",
                s.split, s.samples, s.stop_actions, s.non_stop_actions, s.avg_action_space_size
            )?;
        }
        Ok(())
    }
}

/// Seeded 1:1 subsample of stop and non-stop items. The larger class is
/// subsampled uniformly without replacement; input order is kept.
pub fn balance_by<T: Clone>(
    items: &[T],
    is_stop: impl Fn(&T) -> bool,
    seed: u64,
) -> Result<Vec<T>, DatasetError> {
    let (stops, others): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|&i| is_stop(&items[i]));
    if stops.is_empty() {
        return Err(DatasetError::NoStopRecords);
    }
    let n = stops.len().min(others.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::with_capacity(2 * n);
    for class in [&stops, &others] {
        keep.extend(
            sample(&mut rng, class.len(), n)
                .into_iter()
                .map(|i| class[i]),
        );
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Balanced RL subset of a corpus.
pub fn balance_rl(
    records: &[DecisionRecord],
    seed: u64,
) -> Result<Vec<DecisionRecord>, DatasetError> {
    balance_by(records, DecisionRecord::is_stop, seed)
}

pub fn write_records<W: Write>(out: W, records: &[DecisionRecord]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|source| DatasetError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<DecisionRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<DecisionRecord>, DatasetError> {
    read_records(BufReader::new(File::open(path)?))
}
