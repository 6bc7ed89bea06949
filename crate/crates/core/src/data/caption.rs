//! Templated captions and QA pairs, always factually consistent with the
//! scene they describe.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::SceneSpec;
use super::DataError;

/// "a red square and a blue circle ..." in reading order.
fn object_list(scene: &SceneSpec) -> String {
    scene
        .objects
        .iter()
        .map(|o| format!("a {} {}", o.color.word(), o.shape.word()))
        .collect::<Vec<_>>()
        .join(" and ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Template {
    Plain,
    ThereIs,
    OnBackground,
    ImageShows,
    PictureContains,
}

impl Template {
    fn applies(self, scene: &SceneSpec) -> bool {
        match self {
            // "there is" reads wrong for several objects
            Template::ThereIs => scene.objects.len() == 1,
            // keep the longest form bounded to two objects
            Template::OnBackground => scene.objects.len() <= 2,
            _ => true,
        }
    }

    fn realize(self, scene: &SceneSpec) -> String {
        let list = object_list(scene);
        match self {
            Template::Plain => list,
            Template::ThereIs => format!("there is {list}"),
            Template::OnBackground => {
                format!("{list} on a {} background", scene.background.word())
            }
            Template::ImageShows => format!("the image shows {list}"),
            Template::PictureContains => format!("the picture contains {list}"),
        }
    }
}

const TEMPLATES: [Template; 5] = [
    Template::Plain,
    Template::ThereIs,
    Template::OnBackground,
    Template::ImageShows,
    Template::PictureContains,
];

/// Templates usable for this scene, in declaration order.
pub(crate) fn applicable_templates(scene: &SceneSpec) -> Vec<Template> {
    TEMPLATES.iter().copied().filter(|t| t.applies(scene)).collect()
}

/// Draws `n_refs` captions (2..=5), sampling templates without replacement
/// until the applicable set is exhausted, then reusing them.
pub fn caption_scene(scene: &SceneSpec, n_refs: usize, seed: u64) -> Result<Vec<String>, DataError> {
    if !(2..=5).contains(&n_refs) {
        return Err(DataError::BadRefCount { n: n_refs });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let applicable = applicable_templates(scene);
    let mut order = applicable.clone();
    order.shuffle(&mut rng);
    let mut captions = Vec::with_capacity(n_refs);
    for i in 0..n_refs {
        let t = if i < order.len() {
            order[i]
        } else {
            applicable[rng.gen_range(0..applicable.len())]
        };
        captions.push(t.realize(scene));
    }
    Ok(captions)
}

fn count_word(n: usize) -> &'static str {
    match n {
        1 => "one",
        2 => "two",
        _ => "three",
    }
}

/// Generates one question plus ten ground-truth answers for a scene.
///
/// Some answer slots are filled with the literal "unanswerable": most records
/// carry up to three, a slice carries exactly five (the strict-majority
/// boundary), and a slice carries six or more so the majority rule fires.
pub fn qa_for_scene(scene: &SceneSpec, seed: u64) -> (String, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut candidates: Vec<(String, String)> = Vec::new();
    for shape in crate::data::Shape::ALL {
        let with_shape: Vec<_> = scene.objects.iter().filter(|o| o.shape == shape).collect();
        if with_shape.len() == 1 {
            candidates.push((
                format!("what color is the {}", shape.word()),
                with_shape[0].color.word().to_string(),
            ));
        }
    }
    for color in crate::data::ObjectColor::ALL {
        let with_color: Vec<_> = scene.objects.iter().filter(|o| o.color == color).collect();
        if with_color.len() == 1 {
            candidates.push((
                format!("what shape is the {} object", color.word()),
                with_color[0].shape.word().to_string(),
            ));
        }
    }
    candidates.push((
        "how many objects are in the image".to_string(),
        count_word(scene.objects.len()).to_string(),
    ));
    candidates.push((
        "what color is the background".to_string(),
        scene.background.word().to_string(),
    ));

    let (question, answer) = candidates[rng.gen_range(0..candidates.len())].clone();

    let roll = rng.gen_range(0..100u32);
    let n_unanswerable = if roll < 12 {
        rng.gen_range(6..=9)
    } else if roll < 20 {
        5
    } else {
        rng.gen_range(0..=3)
    };
    let mut answers: Vec<String> = Vec::with_capacity(10);
    for _ in 0..n_unanswerable {
        answers.push("unanswerable".to_string());
    }
    while answers.len() < 10 {
        answers.push(answer.clone());
    }
    answers.shuffle(&mut rng);
    (question, answers)
}
