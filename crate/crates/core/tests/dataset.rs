use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visor_core::dataset::*;
use visor_core::episode::parse_response;
use visor_core::waypoints::GroundTruth;
use visor_core::world::*;

fn object(
    id: u32,
    category: &str,
    x: i32,
    y: i32,
    intrinsic: Vec<Attribute>,
    extrinsic: Vec<Relation>,
) -> SceneObject {
    SceneObject {
        id,
        category: category.into(),
        anchor: Vec2::new((x as f64 + 1.0) * 0.25, (y as f64 + 1.0) * 0.25),
        footprint: CellRect::new(x, y, x + 2, y + 2),
        height: 0.8,
        intrinsic,
        extrinsic,
        render_color: [10, 20, 30],
    }
}

fn room_world(name: &str, objects: Vec<SceneObject>) -> GridWorld {
    let base = GridWorld::open_room(40, 40, 0.25);
    let mut rooms = base.rooms.clone();
    rooms[0].name = name.into();
    let mut cells = base.cells.clone();
    for o in &objects {
        for c in o.footprint.cells() {
            cells[c.row as usize * 40 + c.col as usize] = Cell::Obstacle;
        }
    }
    GridWorld::from_parts(
        40,
        40,
        0.25,
        cells,
        rooms,
        objects,
        0,
        WorldConfig::default(),
    )
}

#[test]
fn cabinet_instruction_names_mirror_and_room() {
    let w = room_world(
        "bedroom",
        vec![object(
            0,
            "cabinet",
            10,
            10,
            vec![Attribute::OnTop("mirror".into())],
            vec![Relation::InRoom(0)],
        )],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let (text, unique) = synthesize_instruction(&w, 0, &mut rng).unwrap();
        assert!(unique);
        assert!(
            text.contains("cabinet with a mirror on top of it, in a bedroom"),
            "{text}"
        );
    }
}

#[test]
fn object_without_relations_gets_intrinsic_only_sentence() {
    let w = room_world(
        "office",
        vec![object(
            0,
            "chair",
            10,
            10,
            vec![Attribute::Color("red".into())],
            vec![],
        )],
    );
    let (text, _) = synthesize_instruction(&w, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(
        text.contains("red chair") && !text.contains(", in "),
        "{text}"
    );
    let bare = room_world("office", vec![object(0, "chair", 10, 10, vec![], vec![])]);
    assert!(matches!(
        synthesize_instruction(&bare, 0, &mut ChaCha8Rng::seed_from_u64(1)),
        Err(DatasetError::NoAttributes(0))
    ));
}

#[test]
fn identical_chairs_are_ambiguous_until_a_relation_separates_them() {
    let red = || vec![Attribute::Color("red".into())];
    let w = room_world(
        "kitchen",
        vec![
            object(0, "chair", 4, 4, red(), vec![]),
            object(1, "chair", 30, 30, red(), vec![]),
            object(2, "table", 8, 4, vec![], vec![]),
        ],
    );
    assert!(!filter_unique(&w, "red chair", 0));
    assert!(filter_unique(&w, "red chair, near the table", 0));
    assert!(!filter_unique(&w, "red chair, near the table", 1));
    assert!(filter_unique(&w, "red chair, to the left of the table", 0));
}

/// Cue check from the relation tags stored at generation time.
fn tagged_cue(w: &GridWorld, i: usize, cue: &Mention) -> bool {
    let o = &w.objects[i];
    let cat = |id: u32| w.object(id).map(|p| p.category.as_str()).unwrap_or("");
    match cue {
        Mention::Color(c) => o.intrinsic.contains(&Attribute::Color(c.clone())),
        Mention::Material(m) => o.intrinsic.contains(&Attribute::Material(m.clone())),
        Mention::OnTop(f) => o.intrinsic.contains(&Attribute::OnTop(f.clone())),
        Mention::InRoom(r) => o
            .extrinsic
            .iter()
            .any(|x| matches!(x, Relation::InRoom(k) if w.rooms[*k].name == *r)),
        Mention::Near(c) => o
            .extrinsic
            .iter()
            .any(|x| matches!(x, Relation::Near(id) if cat(*id) == c)),
        Mention::LeftOf(c) => o
            .extrinsic
            .iter()
            .any(|x| matches!(x, Relation::LeftOf(id) if cat(*id) == c)),
        Mention::RightOf(c) => o
            .extrinsic
            .iter()
            .any(|x| matches!(x, Relation::RightOf(id) if cat(*id) == c)),
    }
}

#[test]
fn filter_matches_exhaustive_predicate_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    for case in 0..200u64 {
        let w = generate_world(1000 + case / 4, &WorldConfig::default()).unwrap();
        let t = rng.gen_range(0..w.objects.len());
        let full = full_mentions(&w, t);
        let mut cues = full.cues.clone();
        cues.shuffle(&mut rng);
        cues.truncate(rng.gen_range(0..=cues.len()));
        let m = Mentions {
            category: full.category.clone(),
            cues,
        };
        let text = format!("Find the {}.", describe(&m));
        let holds = |i: usize| {
            w.objects[i].category == m.category && m.cues.iter().all(|c| tagged_cue(&w, i, c))
        };
        let oracle = holds(t) && (0..w.objects.len()).all(|j| j == t || !holds(j));
        assert_eq!(filter_unique(&w, &text, t), oracle, "{text}");
        agree += 1;
    }
    assert_eq!(agree, 200);
}

#[test]
fn instruction_lengths_match_target_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lens = Vec::new();
    let mut seed = 0;
    while lens.len() < 1000 {
        let w = generate_world(seed, &WorldConfig::default()).unwrap();
        seed += 1;
        for t in 0..w.objects.len() {
            if let Ok((text, true)) = synthesize_instruction(&w, t, &mut rng) {
                lens.push(instruction_tokens(&text).len());
            }
        }
    }
    let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    assert!((15.0..=27.0).contains(&mean), "mean {mean}");
    let (lo, hi) = (lens.iter().min().unwrap(), lens.iter().max().unwrap());
    assert!(*lo >= 5 && *hi <= 47, "range {lo}..{hi}");
}

#[test]
fn split_world_seeds_are_disjoint() {
    let a: std::collections::HashSet<u64> = (0..2000)
        .map(|e| world_seed_for(split_seed(3, "train"), e))
        .collect();
    assert!((0..2000).all(|e| !a.contains(&world_seed_for(split_seed(3, "val"), e))));
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn small(jobs: usize) -> CorpusConfig {
    CorpusConfig {
        episodes: 10,
        seed: 3,
        jobs,
        ..Default::default()
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_corpus(&small(1)).unwrap().write(a.path()).unwrap();
    generate_corpus(&small(4)).unwrap().write(b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 2);
    assert_eq!(fa, fb);
    let back = read_corpus(a.path(), "train").unwrap();
    assert_eq!(back, generate_corpus(&small(1)).unwrap().records);
    for r in &back {
        assert!(a.path().join("train").join(&r.panorama_png).exists());
        assert!(a.path().join("train").join(&r.topdown_png).exists());
    }
}

fn sentences(s: &str) -> usize {
    s.matches(['.', '!', '?']).count()
}

#[test]
fn corpus_records_satisfy_invariants() {
    let cfg = CorpusConfig {
        episodes: 30,
        seed: 8,
        jobs: 4,
        ..Default::default()
    };
    let c = generate_corpus(&cfg).unwrap();
    let mut by_ep: BTreeMap<&str, Vec<&DecisionRecord>> = BTreeMap::new();
    for r in &c.records {
        assert!(r.check().is_empty(), "{:?}", r.check());
        by_ep.entry(&r.episode_id).or_default().push(r);

        let labels = r.labels();
        let parsed = parse_response(&r.trace.response(), &labels).unwrap();
        assert_eq!(parsed.decision.action_text(), r.gt_label.to_string());
        for l in &labels {
            let n = r
                .trace
                .think
                .split(|ch: char| !ch.is_alphanumeric())
                .filter(|w| *w == l.to_string())
                .count();
            assert_eq!(n, 1, "{l} in {}", r.trace.think);
        }
        assert!(sentences(&r.trace.think_summary) <= 2);
        if r.is_stop() {
            let m = parse_mentions(&r.instruction);
            assert!(r.trace.think.contains(&describe(&m)));
            assert!(r.trace.think.contains("m away, so this is the goal"));
        }
    }
    let (mut rises, mut steps) = (0, 0);
    for recs in by_ep.values() {
        assert!(recs.iter().filter(|r| r.is_stop()).count() <= 1);
        assert!(recs.last().unwrap().is_stop());
        for p in recs.windows(2) {
            steps += 1;
            rises += (p[1].distance_to_goal > p[0].distance_to_goal) as usize;
        }
    }
    assert!(rises as f64 <= 0.1 * steps as f64, "{rises}/{steps}");
    let s = CorpusStats::of("train", &c.records);
    assert_eq!(s.samples, s.stop_actions + s.non_stop_actions);
    assert!((2.0..=6.0).contains(&s.avg_action_space_size));
}

proptest! {
    #[test]
    fn balance_is_exactly_even(stops in 1usize..40, others in 0usize..200, seed in any::<u64>()) {
        let items: Vec<bool> = (0..stops + others).map(|i| i % (stops + others) < stops).collect();
        let b = balance_by(&items, |s| *s, seed).unwrap();
        let n = stops.min(others);
        prop_assert_eq!(b.len(), 2 * n);
        prop_assert_eq!(b.iter().filter(|s| **s).count(), n);
    }

    #[test]
    fn records_round_trip_through_jsonl(
        dist in 0.0f64..20.0,
        letters in proptest::collection::btree_set(proptest::char::range('A', 'Z'), 1..6),
        step in 0usize..100,
        seed in any::<u64>(),
        text in "[a-zA-Z ,.\"\\\\]{0,40}",
    ) {
        let letters: Vec<char> = letters.into_iter().collect();
        let gt = if dist < 1.0 { GroundTruth::Stop } else { GroundTruth::Label(letters[0]) };
        let r = DecisionRecord {
            instruction: text.clone(),
            panorama_png: "img/x_0_pano.png".into(),
            topdown_png: "img/x_0_topdown.png".into(),
            distance_to_goal: dist,
            gt_label: gt,
            distractors: letters[1..].to_vec(),
            trace: Trace { think: text.clone(), think_summary: text, action: gt.to_string() },
            episode_id: "x".into(),
            step_index: step,
            seed,
        };
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&r)).unwrap();
        prop_assert_eq!(read_records(&buf[..]).unwrap(), vec![r]);
    }
}
