//! Templated object-goal instructions, their parser, and the uniqueness
//! filter.

use rand::seq::SliceRandom;
use rand::Rng;

use super::DatasetError;
use crate::world::{
    full_mentions, object_satisfies, GridWorld, Mention, Mentions, Vocabulary, ROOM_NAMES,
};

/// Sentence frames around the object description `{}`.
const FRAMES: &[&str] = &[
    "{}",
    "Find the {}.",
    "Go to the {} and stop when you are close to it.",
    "Navigate to the {}. Stop as soon as you are next to it.",
    "Search the house for the {}, then stop in front of it.",
    "I am looking for the {}. Please walk over to it and stop there.",
    "Can you take me to the {}? Stop right next to it once you get there.",
];

const MIN_TOKENS: usize = 5;
const MAX_TOKENS: usize = 47;

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn is_intrinsic(m: &Mention) -> bool {
    matches!(
        m,
        Mention::Color(_) | Mention::Material(_) | Mention::OnTop(_)
    )
}

/// Noun phrase for a set of mentions, e.g.
/// `cabinet with a mirror on top of it, in a bedroom`.
pub fn describe(m: &Mentions) -> String {
    let mut s = String::new();
    for cue in &m.cues {
        if let Mention::Color(c) = cue {
            s.push_str(c);
            s.push(' ');
        }
    }
    for cue in &m.cues {
        if let Mention::Material(x) = cue {
            s.push_str(x);
            s.push(' ');
        }
    }
    s.push_str(&m.category);
    for cue in &m.cues {
        if let Mention::OnTop(f) = cue {
            if f.ends_with('s') {
                s.push_str(&format!(" with {f} on top of it"));
            } else {
                s.push_str(&format!(" with {} {f} on top of it", article(f)));
            }
        }
    }
    let order = |c: &Mention| match c {
        Mention::LeftOf(_) => 0,
        Mention::RightOf(_) => 1,
        Mention::Near(_) => 2,
        Mention::InRoom(_) => 3,
        _ => 4,
    };
    let mut rel: Vec<&Mention> = m.cues.iter().filter(|c| !is_intrinsic(c)).collect();
    rel.sort_by_key(|c| order(c));
    for cue in rel {
        match cue {
            Mention::LeftOf(c) => s.push_str(&format!(", to the left of the {c}")),
            Mention::RightOf(c) => s.push_str(&format!(", to the right of the {c}")),
            Mention::Near(c) => s.push_str(&format!(", near the {c}")),
            Mention::InRoom(r) => s.push_str(&format!(", in {} {r}", article(r))),
            _ => {}
        }
    }
    s
}

/// Words and punctuation marks, lowercased.
pub fn instruction_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        let mut cur = String::new();
        for ch in w.chars() {
            if ch.is_alphanumeric() || ch == '\'' || ch == '-' {
                cur.push(ch.to_ascii_lowercase());
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Recover the mentions an instruction makes about its target.
pub fn parse_mentions(text: &str) -> Mentions {
    let lower = format!(" {} ", text.to_ascii_lowercase());
    let mut cues = Vec::new();
    for room in ROOM_NAMES {
        for art in ["a", "an", "the"] {
            let pat = format!(" in {art} {room}");
            if let Some(at) = lower.find(&pat) {
                let end = at + pat.len();
                if !lower[end..].starts_with(|c: char| c.is_ascii_alphabetic()) {
                    cues.push(Mention::InRoom(room.to_string()));
                }
            }
        }
    }

    let toks = instruction_tokens(text);
    let mut category: Option<String> = None;
    let mut pending: Option<fn(String) -> Mention> = None;
    let mut adjectives: Vec<Mention> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        let next = toks.get(i + 1).map(String::as_str);
        let is_punct = !t.chars().next().is_some_and(|c| c.is_alphanumeric());
        if is_punct || t == "it" {
            pending = None;
            if category.is_none() {
                adjectives.clear();
            }
            continue;
        }
        match (t.as_str(), next) {
            ("near", _) => pending = Some(Mention::Near),
            ("next", Some("to")) => pending = Some(Mention::Near),
            ("left", Some("of")) => pending = Some(Mention::LeftOf),
            ("right", Some("of")) => pending = Some(Mention::RightOf),
            _ => {}
        }
        if let Some(f) = Vocabulary::feature(t) {
            let on_top = toks.get(i + 1).map(String::as_str) == Some("on")
                && toks.get(i + 2).map(String::as_str) == Some("top");
            if on_top && category.is_some() {
                cues.push(Mention::OnTop(f.to_string()));
            }
            continue;
        }
        if let Some(c) = Vocabulary::category(t) {
            match pending.take() {
                Some(make) => cues.push(make(c.to_string())),
                None if category.is_none() => {
                    category = Some(c.to_string());
                    cues.append(&mut adjectives);
                }
                None => {}
            }
            continue;
        }
        if category.is_none() && pending.is_none() {
            if let Some(c) = Vocabulary::color(t) {
                adjectives.push(Mention::Color(c.to_string()));
            } else if let Some(m) = Vocabulary::material(t) {
                adjectives.push(Mention::Material(m.to_string()));
            }
        }
    }
    let mut seen = Vec::new();
    cues.retain(|c| {
        if seen.contains(c) {
            false
        } else {
            seen.push(c.clone());
            true
        }
    });
    Mentions {
        category: category.unwrap_or_default(),
        cues: seen,
    }
}

/// True iff the instruction describes object `target` and no other object
/// satisfies every cue it mentions.
pub fn filter_unique(world: &GridWorld, instruction: &str, target: usize) -> bool {
    let m = parse_mentions(instruction);
    !m.category.is_empty()
        && object_satisfies(world, target, &m)
        && (0..world.objects.len()).all(|j| j == target || !object_satisfies(world, j, &m))
}

/// Pick cues for object `target` (at least one intrinsic and one extrinsic
/// cue when available, a few more at random, more still until the
/// description is unique) and wrap them in a sentence frame. Returns the
/// instruction and whether it is unique.
pub fn synthesize_instruction<R: Rng>(
    world: &GridWorld,
    target: usize,
    rng: &mut R,
) -> Result<(String, bool), DatasetError> {
    let full = full_mentions(world, target);
    if full.cues.is_empty() {
        return Err(DatasetError::NoAttributes(world.objects[target].id));
    }
    let mut intr: Vec<Mention> = full
        .cues
        .iter()
        .filter(|c| is_intrinsic(c))
        .cloned()
        .collect();
    let mut extr: Vec<Mention> = full
        .cues
        .iter()
        .filter(|c| !is_intrinsic(c))
        .cloned()
        .collect();
    intr.shuffle(rng);
    extr.shuffle(rng);
    let mut chosen = Vec::new();
    let mut rest = Vec::new();
    for group in [intr, extr] {
        let mut it = group.into_iter();
        if let Some(first) = it.next() {
            chosen.push(first);
        }
        for c in it {
            if rng.gen_bool(0.2) {
                chosen.push(c);
            } else {
                rest.push(c);
            }
        }
    }
    rest.shuffle(rng);
    let frame = FRAMES[rng.gen_range(0..FRAMES.len())];
    let build = |cues: &[Mention]| {
        let m = Mentions {
            category: full.category.clone(),
            cues: cues.to_vec(),
        };
        let d = describe(&m);
        // Keep the length within bounds by falling back to shorter frames.
        [frame, FRAMES[1], FRAMES[0]]
            .iter()
            .map(|f| f.replacen("{}", &d, 1))
            .find(|t| (MIN_TOKENS..=MAX_TOKENS).contains(&instruction_tokens(t).len()))
            .unwrap_or_else(|| FRAMES[1].replacen("{}", &d, 1))
    };
    let mut text = build(&chosen);
    let mut rest = rest.into_iter();
    while !filter_unique(world, &text, target) {
        match rest.next() {
            Some(c) => {
                chosen.push(c);
                text = build(&chosen);
            }
            None => return Ok((text, false)),
        }
    }
    Ok((text, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_example() {
        let m = Mentions {
            category: "cabinet".into(),
            cues: vec![
                Mention::OnTop("mirror".into()),
                Mention::InRoom("bedroom".into()),
            ],
        };
        assert_eq!(
            describe(&m),
            "cabinet with a mirror on top of it, in a bedroom"
        );
    }

    #[test]
    fn parse_inverts_describe() {
        let m = Mentions {
            category: "chair".into(),
            cues: vec![
                Mention::Color("red".into()),
                Mention::Material("wooden".into()),
                Mention::OnTop("books".into()),
                Mention::LeftOf("table".into()),
                Mention::Near("sofa".into()),
                Mention::InRoom("living room".into()),
            ],
        };
        for frame in FRAMES {
            let text = frame.replacen("{}", &describe(&m), 1);
            let mut got = parse_mentions(&text);
            let mut want = m.clone();
            got.cues.sort_by_key(|c| format!("{c:?}"));
            want.cues.sort_by_key(|c| format!("{c:?}"));
            assert_eq!(got, want, "{text}");
        }
    }

    #[test]
    fn tokens_split_punctuation() {
        assert_eq!(
            instruction_tokens("Find the red chair, near the table."),
            vec!["find", "the", "red", "chair", ",", "near", "the", "table", "."]
        );
    }
}
