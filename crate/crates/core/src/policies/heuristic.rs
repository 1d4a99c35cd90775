//! Non-privileged baseline reading only the instruction and the panorama.
//!
//! The target color is the color word closest before the first category word
//! in the instruction; without one, any pixel that is not a room surface or
//! label overlay counts. Target-colored blobs are kept when their apparent
//! height, read off the floor contact row, fits the named category. Labels
//! are scored by kept pixels in their column band, falling back to visible
//! floor in the band. The policy stops once a kept blob stands close enough.

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError, PolicyQuery};
use crate::episode::{format_response, HighLevelDecision};
use crate::sensors::{CameraRig, RgbImage, CEILING_RGB, FLOOR_RGB, WALL_RGB, WALL_SHADED_RGB};
use crate::waypoints::{detect_labels, DetectedLabel, LABEL_RED, LABEL_WHITE};
use crate::world::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Stop when a matching blob's base is at most this far away (m).
    pub stop_distance: f64,
    /// Accepted error between a blob's estimated height and its category's (m).
    pub height_tol: f64,
    /// Half-width in columns of the band scored around each label.
    pub band: usize,
    /// Per-channel tolerance when matching a palette color.
    pub color_tol: u8,
    /// Turn around to look behind when nothing matches, at most this often
    /// (in decisions).
    pub explore_every: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            stop_distance: 0.75,
            height_tol: 0.3,
            band: 40,
            color_tol: 24,
            explore_every: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    cfg: HeuristicConfig,
    since_turn: usize,
}

/// Pixel evidence around one detected label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEvidence {
    pub letter: char,
    pub col: usize,
    /// Target-like pixels in the label's column band.
    pub matching: usize,
    /// Floor pixels below the horizon in the band.
    pub floor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub color: Option<String>,
    /// Short description of the target, e.g. `red chair`.
    pub what: String,
    pub labels: Vec<LabelEvidence>,
    /// Distance to the closest blob that fits the target.
    pub nearest: Option<f64>,
}

/// What the instruction asks for, as far as pixels can tell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetCue {
    pub category: Option<String>,
    pub color: Option<String>,
}

/// Color word nearest before the first category word (or the first color
/// word when no category is found).
pub fn target_cue(instruction: &str) -> TargetCue {
    let words: Vec<String> = instruction
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect();
    let cat_pos = words.iter().position(|w| Vocabulary::category(w).is_some());
    let color = match cat_pos {
        Some(p) => words[..p]
            .iter()
            .rev()
            .find_map(|w| Vocabulary::color(w))
            .or_else(|| words[p..].iter().find_map(|w| Vocabulary::color(w))),
        None => words.iter().find_map(|w| Vocabulary::color(w)),
    };
    TargetCue {
        category: cat_pos.map(|p| words[p].clone()),
        color: color.map(str::to_string),
    }
}

fn matches(px: [u8; 3], base: [u8; 3], tol: u8) -> bool {
    px[0].abs_diff(base[0]) <= 4 && px[1].abs_diff(base[1]) <= tol && px[2].abs_diff(base[2]) <= tol
}

/// Mask of pixels matching a palette color.
pub fn color_mask(img: &RgbImage, base: [u8; 3], tol: u8) -> Vec<bool> {
    (0..img.width * img.height)
        .map(|k| {
            matches(
                [img.data[3 * k], img.data[3 * k + 1], img.data[3 * k + 2]],
                base,
                tol,
            )
        })
        .collect()
}

/// Pixels that are neither room surfaces nor label overlay.
pub fn object_mask(img: &RgbImage) -> Vec<bool> {
    const SURFACES: [[u8; 3]; 6] = [
        FLOOR_RGB,
        CEILING_RGB,
        WALL_RGB,
        WALL_SHADED_RGB,
        LABEL_RED,
        LABEL_WHITE,
    ];
    (0..img.width * img.height)
        .map(|k| {
            let px = [img.data[3 * k], img.data[3 * k + 1], img.data[3 * k + 2]];
            SURFACES.iter().all(|&s| !matches(px, s, 0))
        })
        .collect()
}

/// A 4-connected component of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub pixels: Vec<usize>,
    pub top: usize,
    pub bottom: usize,
}

impl Blob {
    /// Ground distance to the blob's base and its estimated height, from
    /// where its lowest row meets the floor.
    pub fn distance_and_height(&self, rig: &CameraRig) -> Option<(f64, f64)> {
        let d = rig.floor_depth(self.bottom + 1)?;
        let dr = self.top as f64 - rig.horizon();
        Some((d, rig.cam_height - dr * d / rig.focal_v))
    }
}

/// All 4-connected components of a mask.
pub fn blobs(mask: &[bool], width: usize) -> Vec<Blob> {
    let height = mask.len() / width;
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for s in 0..mask.len() {
        if !mask[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut blob = Blob {
            pixels: Vec::new(),
            top: s / width,
            bottom: s / width,
        };
        while let Some(k) = stack.pop() {
            blob.pixels.push(k);
            let (x, y) = (k % width, k / width);
            blob.top = blob.top.min(y);
            blob.bottom = blob.bottom.max(y);
            let mut push = |nk: usize| {
                if mask[nk] && !seen[nk] {
                    seen[nk] = true;
                    stack.push(nk);
                }
            };
            if x > 0 {
                push(k - 1);
            }
            if x + 1 < width {
                push(k + 1);
            }
            if y > 0 {
                push(k - width);
            }
            if y + 1 < height {
                push(k + width);
            }
        }
        out.push(blob);
    }
    out
}

fn band_count(
    mask: &[bool],
    width: usize,
    col: usize,
    band: usize,
    rows: std::ops::Range<usize>,
) -> usize {
    let lo = col.saturating_sub(band);
    let hi = (col + band + 1).min(width);
    rows.map(|r| (lo..hi).filter(|&c| mask[r * width + c]).count())
        .sum()
}

impl HeuristicPolicy {
    pub fn new(cfg: HeuristicConfig) -> Self {
        Self {
            since_turn: cfg.explore_every,
            cfg,
        }
    }

    /// Pixel evidence for the instruction's target in a labelled panorama.
    pub fn evidence(&self, instruction: &str, panorama: &RgbImage) -> Evidence {
        let cue = target_cue(instruction);
        let detected: Vec<DetectedLabel> = detect_labels(panorama);
        let (w, h) = (panorama.width, panorama.height);
        let horizon = h / 2;
        let floor = color_mask(panorama, FLOOR_RGB, 0);
        let target_rgb = cue.color.as_deref().and_then(Vocabulary::color_rgb);
        let target = match target_rgb {
            Some(rgb) => Some(color_mask(panorama, rgb, self.cfg.color_tol)),
            None if cue.category.is_some() => Some(object_mask(panorama)),
            None => None,
        };
        let what = match (&cue.color, &cue.category) {
            (Some(c), Some(k)) => format!("{c} {k}"),
            (None, Some(k)) => k.clone(),
            (Some(c), None) => format!("{c} object"),
            (None, None) => "target".into(),
        };

        let rig = CameraRig::default();
        let expected = cue
            .category
            .as_deref()
            .and_then(Vocabulary::category_shape)
            .map(|(_, h)| h);
        // Blobs whose estimated height fits the category. A blob cut by the
        // top edge only gives a lower bound. A blob cut by the bottom edge
        // stands closer than the nearest visible floor; its distance then
        // follows from the category height and its top row.
        let nearest_floor = rig.floor_depth(h).unwrap_or(0.0);
        let kept: Vec<(Blob, f64)> = target
            .as_ref()
            .map(|m| blobs(m, w))
            .unwrap_or_default()
            .into_iter()
            .filter(|b| b.pixels.len() >= 20)
            .filter_map(|b| {
                let clipped = b.bottom + 1 == h;
                match expected {
                    None => {
                        let d = if clipped {
                            nearest_floor
                        } else {
                            b.distance_and_height(&rig)?.0
                        };
                        Some((b, d))
                    }
                    Some(hh) if clipped => {
                        if b.top == 0 {
                            return Some((b, nearest_floor));
                        }
                        let dr = b.top as f64 - rig.horizon();
                        let d = (rig.cam_height - hh) * rig.focal_v / dr;
                        (d > 0.0 && d <= nearest_floor * 1.2).then_some((b, d.min(nearest_floor)))
                    }
                    Some(hh) => {
                        let (d, est) = b.distance_and_height(&rig)?;
                        let fits = if b.top == 0 {
                            est + self.cfg.height_tol >= hh
                        } else {
                            (est - hh).abs() <= self.cfg.height_tol
                        };
                        fits.then_some((b, d))
                    }
                }
            })
            .collect();
        let mut kept_mask = vec![false; w * h];
        for (b, _) in &kept {
            for &k in &b.pixels {
                kept_mask[k] = true;
            }
        }
        let labels = detected
            .iter()
            .map(|l| LabelEvidence {
                letter: l.letter,
                col: l.col,
                matching: band_count(&kept_mask, w, l.col, self.cfg.band, 0..h),
                floor: band_count(&floor, w, l.col, self.cfg.band, horizon + 1..h),
            })
            .collect();
        Evidence {
            color: cue.color.clone(),
            what,
            labels,
            nearest: kept.iter().map(|k| k.1).min_by(f64::total_cmp),
        }
    }

    /// Decision plus the think/summary texts.
    pub fn decide(
        &mut self,
        instruction: &str,
        panorama: &RgbImage,
    ) -> (HighLevelDecision, String, String) {
        let ev = self.evidence(instruction, panorama);
        let what = ev.what.clone();
        if let Some(d) = ev.nearest {
            if d <= self.cfg.stop_distance {
                self.since_turn += 1;
                return (
                    HighLevelDecision::Stop,
                    format!("a {} shape of the right height stands {d:.1} m ahead, so the {what} is right here.", ev.color.as_deref().unwrap_or("target")),
                    format!("the {what} is within reach, so i stop."),
                );
            }
        }
        let labels = &ev.labels;
        if labels.is_empty() {
            self.since_turn = 0;
            return (
                HighLevelDecision::TurnAround,
                "no labels are visible in the panorama.".into(),
                "nothing to go to here, so i turn around.".into(),
            );
        }
        let mut think = Vec::new();
        let mut scored = Vec::new();
        for l in labels {
            think.push(format!(
                "label {} at column {}: {} matching pixels, {} floor pixels.",
                l.letter, l.col, l.matching, l.floor
            ));
            scored.push((l.letter, l.matching, l.floor));
        }
        let best_kw = scored.iter().max_by_key(|s| (s.1, s.2)).copied().unwrap();
        let (decision, summary) = if best_kw.1 > 0 {
            self.since_turn += 1;
            (
                HighLevelDecision::GoTo(best_kw.0),
                format!("label {} is next to colors matching the {what}.", best_kw.0),
            )
        } else if self.since_turn >= self.cfg.explore_every {
            self.since_turn = 0;
            (
                HighLevelDecision::TurnAround,
                format!("the {what} is not in view, so i look behind me."),
            )
        } else {
            self.since_turn += 1;
            let open = scored
                .iter()
                .max_by_key(|s| (s.2, std::cmp::Reverse(s.0)))
                .unwrap();
            (
                HighLevelDecision::GoTo(open.0),
                format!(
                    "no label matches the {what}; label {} leads into the most open space.",
                    open.0
                ),
            )
        };
        (decision, think.join(" "), summary)
    }
}

impl Policy for HeuristicPolicy {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn reset(&mut self, _seed: u64) {
        self.since_turn = self.cfg.explore_every;
    }

    fn respond(&mut self, query: &PolicyQuery) -> Result<String, PolicyError> {
        let (d, think, summary) = self.decide(&query.instruction, &query.panorama);
        Ok(format_response(&think, &summary, d))
    }
}
