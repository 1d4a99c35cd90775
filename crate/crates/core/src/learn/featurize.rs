//! Toy-policy prompts from corpus records, using only what the panorama and
//! instruction show.

use super::toy::{ToyAction, ToyPrompt};
use crate::episode::HighLevelDecision;
use crate::policies::{HeuristicConfig, HeuristicPolicy};
use crate::sensors::RgbImage;
use crate::waypoints::GroundTruth;

/// Target blobs at or nearer than this give full stop evidence.
const STOP_EVIDENCE_NEAR: f64 = 0.75;
/// Target blobs at or beyond this give none.
const STOP_EVIDENCE_FAR: f64 = 2.0;

/// Features per label: column position, relative floor and target-pixel
/// counts in its band (zero when the glyph was not detected). The Stop
/// action's evidence falls linearly with the nearest target blob's distance.
pub fn featurize(
    instruction: &str,
    panorama: &RgbImage,
    labels: &[char],
    gt: GroundTruth,
) -> ToyPrompt {
    let ev = HeuristicPolicy::new(HeuristicConfig::default()).evidence(instruction, panorama);
    let max_floor = ev.labels.iter().map(|l| l.floor).max().unwrap_or(0).max(1) as f64;
    let max_match = ev
        .labels
        .iter()
        .map(|l| l.matching)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let width = panorama.width.max(1) as f64;
    let mut actions: Vec<ToyAction> = labels
        .iter()
        .map(|&c| {
            let features = match ev.labels.iter().find(|l| l.letter == c) {
                Some(l) => [
                    l.col as f64 / width,
                    l.floor as f64 / max_floor,
                    l.matching as f64 / max_match,
                    (l.matching > 0) as u8 as f64,
                    0.0,
                    0.0,
                ],
                None => [0.0; 6],
            };
            ToyAction {
                decision: HighLevelDecision::GoTo(c),
                features,
            }
        })
        .collect();
    let stop_ev = ev
        .nearest
        .map(|d| {
            ((STOP_EVIDENCE_FAR - d) / (STOP_EVIDENCE_FAR - STOP_EVIDENCE_NEAR)).clamp(0.0, 1.0)
        })
        .unwrap_or(0.0);
    actions.push(ToyAction {
        decision: HighLevelDecision::Stop,
        features: [0.0, 0.0, 0.0, 0.0, stop_ev, 1.0],
    });
    ToyPrompt { actions, gt }
}
