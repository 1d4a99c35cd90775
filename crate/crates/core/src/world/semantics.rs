//! Object vocabulary and geometric evaluation of attribute/relation cues.

use serde::{Deserialize, Serialize};

use super::{GridWorld, SceneObject};

/// `(category, footprint cells (w, h), height m)`. Footprints are at most two
/// cells thick so every anchor borders free space.
pub const CATEGORIES: &[(&str, (i32, i32), f64)] = &[
    ("bed", (2, 4), 0.6),
    ("sofa", (2, 4), 0.8),
    ("table", (2, 3), 0.75),
    ("chair", (2, 2), 0.9),
    ("cabinet", (2, 3), 1.1),
    ("wardrobe", (2, 3), 2.0),
    ("refrigerator", (2, 2), 1.8),
    ("plant", (2, 2), 1.0),
    ("desk", (2, 3), 0.75),
    ("bookshelf", (2, 3), 1.9),
    ("dresser", (2, 3), 1.0),
    ("armchair", (2, 2), 0.95),
];

/// Color names with their base render color.
pub const COLORS: &[(&str, [u8; 3])] = &[
    ("red", [205, 45, 40]),
    ("blue", [40, 75, 210]),
    ("green", [45, 165, 65]),
    ("yellow", [230, 205, 45]),
    ("white", [245, 245, 240]),
    ("black", [30, 30, 35]),
    ("orange", [240, 135, 30]),
    ("purple", [135, 55, 175]),
    ("brown", [125, 75, 35]),
    ("pink", [240, 130, 185]),
];

pub const MATERIALS: &[&str] = &["wooden", "metal", "leather", "glass", "plastic", "marble"];

/// Things that may stand on top of an object.
pub const FEATURES: &[&str] = &[
    "mirror",
    "vase",
    "clock",
    "chalkboard",
    "books",
    "candle",
    "radio",
];

pub const ROOM_NAMES: &[&str] = &[
    "bedroom",
    "kitchen",
    "living room",
    "bathroom",
    "office",
    "dining room",
    "hallway",
    "laundry room",
    "study",
    "nursery",
];

const NEAR_RADIUS: f64 = 1.5;
/// Minimum x separation for left/right relations.
pub(crate) const SIDE_MARGIN: f64 = 0.25;

pub fn near_radius() -> f64 {
    NEAR_RADIUS
}

/// Word lists used to recognise cues in instruction text.
pub struct Vocabulary;

impl Vocabulary {
    pub fn category(word: &str) -> Option<&'static str> {
        CATEGORIES.iter().map(|c| c.0).find(|&c| c == word)
    }

    pub fn color(word: &str) -> Option<&'static str> {
        COLORS.iter().map(|c| c.0).find(|&c| c == word)
    }

    pub fn material(word: &str) -> Option<&'static str> {
        MATERIALS.iter().copied().find(|&m| m == word)
    }

    pub fn feature(word: &str) -> Option<&'static str> {
        FEATURES.iter().copied().find(|&f| f == word)
    }

    pub fn color_rgb(name: &str) -> Option<[u8; 3]> {
        COLORS.iter().find(|c| c.0 == name).map(|c| c.1)
    }

    pub fn category_shape(name: &str) -> Option<((i32, i32), f64)> {
        CATEGORIES.iter().find(|c| c.0 == name).map(|c| (c.1, c.2))
    }
}

/// One cue an instruction mentions about its target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Mention {
    Color(String),
    Material(String),
    OnTop(String),
    /// Room name.
    InRoom(String),
    /// Category of a nearby object.
    Near(String),
    LeftOf(String),
    RightOf(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Mentions {
    pub category: String,
    pub cues: Vec<Mention>,
}

/// Does object `idx` satisfy the category and every cue?
pub fn object_satisfies(world: &GridWorld, idx: usize, m: &Mentions) -> bool {
    let obj = &world.objects[idx];
    obj.category == m.category && m.cues.iter().all(|cue| cue_holds(world, idx, obj, cue))
}

fn same_room(world: &GridWorld, a: &SceneObject, b: &SceneObject) -> bool {
    match (world.room_at(a.anchor), world.room_at(b.anchor)) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}

fn cue_holds(world: &GridWorld, idx: usize, obj: &SceneObject, cue: &Mention) -> bool {
    let others = || {
        world
            .objects
            .iter()
            .enumerate()
            .filter(move |(j, _)| *j != idx)
            .map(|(_, o)| o)
    };
    match cue {
        Mention::Color(c) => obj.color() == Some(c.as_str()),
        Mention::Material(m) => obj.material() == Some(m.as_str()),
        Mention::OnTop(f) => obj.on_top() == Some(f.as_str()),
        Mention::InRoom(name) => world
            .room_at(obj.anchor)
            .is_some_and(|r| world.rooms[r].name == *name),
        Mention::Near(cat) => {
            others().any(|o| o.category == *cat && o.anchor.dist(obj.anchor) <= NEAR_RADIUS)
        }
        Mention::LeftOf(cat) => others().any(|o| {
            o.category == *cat
                && same_room(world, obj, o)
                && obj.anchor.x < o.anchor.x - SIDE_MARGIN
        }),
        Mention::RightOf(cat) => others().any(|o| {
            o.category == *cat
                && same_room(world, obj, o)
                && obj.anchor.x > o.anchor.x + SIDE_MARGIN
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_words_do_not_collide() {
        let mut all: Vec<&str> = CATEGORIES.iter().map(|c| c.0).collect();
        all.extend(COLORS.iter().map(|c| c.0));
        all.extend(MATERIALS);
        all.extend(FEATURES);
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn palette_avoids_overlay_red() {
        for (_, rgb) in COLORS {
            assert_ne!(*rgb, [255, 0, 0]);
        }
    }
}
