//! Referring-expression grammar:
//!
//! ```text
//! <template> the <color> <shape> <class> [<relation> the <color> <shape> <class>]
//! ```
//!
//! e.g. `grasp the red boxy mug to the left of the blue round apple`. The
//! relation clause names a reference object and is mandatory whenever the
//! target has an identical twin in the scene.

use serde::{Deserialize, Serialize};

use super::vocab::{Color, Relation, Shape, CLASS_NAMES, TEMPLATES};
use super::SceneDescription;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectPhrase {
    pub color: Color,
    pub shape: Shape,
    pub class_name: String,
}

impl ObjectPhrase {
    fn render(&self) -> String {
        format!("the {} {} {}", self.color.word(), self.shape.word(), self.class_name)
    }

    pub fn matches(&self, obj: &super::SceneObject) -> bool {
        obj.color == self.color && obj.shape == self.shape && obj.class_name == self.class_name
    }
}

/// The four grammar slots; the last two are either both present or both
/// absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSlots {
    pub template_id: usize,
    pub target: ObjectPhrase,
    pub relation: Option<Relation>,
    pub reference: Option<ObjectPhrase>,
}

impl AnnotationSlots {
    pub fn render(&self) -> String {
        let mut out = format!("{} {}", TEMPLATES[self.template_id], self.target.render());
        if let (Some(rel), Some(reference)) = (self.relation, &self.reference) {
            out.push(' ');
            out.push_str(rel.phrase());
            out.push(' ');
            out.push_str(&reference.render());
        }
        out
    }

    /// Number of populated slots.
    pub fn slot_count(&self) -> usize {
        2 + usize::from(self.relation.is_some()) + usize::from(self.reference.is_some())
    }
}

/// Renders the scene's referring expression.
pub fn annotate(scene: &SceneDescription) -> Result<String> {
    let target = scene.target();
    let reference = match (scene.relative_index, scene.relation) {
        (Some(r), Some(rel)) => Some((r, rel)),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "relative_index and relation must be set together".into(),
            ))
        }
    };
    if let Some(twin) = scene.twin_of_target() {
        let Some((r, rel)) = reference else {
            return Err(Error::AnnotationAmbiguous);
        };
        let ref_cell = scene.objects[r].grid_cell;
        let ok = rel.holds(target.grid_cell, ref_cell)
            && !rel.holds(scene.objects[twin].grid_cell, ref_cell)
            && r != twin;
        if !ok {
            return Err(Error::AnnotationAmbiguous);
        }
    }
    if scene.template_id >= TEMPLATES.len() {
        return Err(Error::Config(format!("template id {} out of range", scene.template_id)));
    }
    let slots = AnnotationSlots {
        template_id: scene.template_id,
        target: target.phrase(),
        relation: reference.map(|(_, rel)| rel),
        reference: reference.map(|(r, _)| scene.objects[r].phrase()),
    };
    Ok(slots.render())
}

fn parse_err(slot: &'static str, detail: impl Into<String>, input: &str) -> Error {
    Error::Parse {
        slot,
        detail: detail.into(),
        input: input.to_string(),
    }
}

/// Recovers the grammar slots of a description produced by [`annotate`].
pub fn parse_annotation(description: &str) -> Result<AnnotationSlots> {
    if description.trim().is_empty() {
        return Err(parse_err("template", "empty description", description));
    }
    let (template_id, rest) = TEMPLATES
        .iter()
        .enumerate()
        .find_map(|(i, t)| {
            description
                .strip_prefix(t)
                .and_then(|r| r.strip_prefix(' '))
                .map(|r| (i, r))
        })
        .ok_or_else(|| parse_err("template", "unknown sentence opener", description))?;

    let words: Vec<&str> = rest.split(' ').collect();
    let (target, used) = parse_phrase(&words, "target", description)?;
    let tail = &words[used..];
    if tail.is_empty() {
        return Ok(AnnotationSlots {
            template_id,
            target,
            relation: None,
            reference: None,
        });
    }

    let tail_str = tail.join(" ");
    let (relation, after) = Relation::ALL
        .into_iter()
        .find_map(|rel| {
            tail_str
                .strip_prefix(rel.phrase())
                .and_then(|r| r.strip_prefix(' '))
                .map(|r| (rel, r))
        })
        .ok_or_else(|| parse_err("position", format!("unknown relation in `{tail_str}`"), description))?;
    let ref_words: Vec<&str> = after.split(' ').collect();
    let (reference, used) = parse_phrase(&ref_words, "relative", description)?;
    if used != ref_words.len() {
        return Err(parse_err(
            "relative",
            format!("trailing words `{}`", ref_words[used..].join(" ")),
            description,
        ));
    }
    Ok(AnnotationSlots {
        template_id,
        target,
        relation: Some(relation),
        reference: Some(reference),
    })
}

fn parse_phrase(words: &[&str], slot: &'static str, input: &str) -> Result<(ObjectPhrase, usize)> {
    if words.len() < 4 || words[0] != "the" {
        return Err(parse_err(slot, "expected `the <color> <shape> <class>`", input));
    }
    let color = Color::from_word(words[1])
        .ok_or_else(|| parse_err(slot, format!("unknown color `{}`", words[1]), input))?;
    let shape = Shape::from_word(words[2])
        .ok_or_else(|| parse_err(slot, format!("unknown shape `{}`", words[2]), input))?;
    if !CLASS_NAMES.contains(&words[3]) {
        return Err(parse_err(slot, format!("unknown class `{}`", words[3]), input));
    }
    Ok((
        ObjectPhrase {
            color,
            shape,
            class_name: words[3].to_string(),
        },
        4,
    ))
}

/// Finds the object the slots refer to, using the relation clause to choose
/// between identical candidates.
pub fn resolve_target(scene: &SceneDescription, slots: &AnnotationSlots) -> Result<usize> {
    let candidates: Vec<usize> = (0..scene.objects.len())
        .filter(|&i| slots.target.matches(&scene.objects[i]))
        .collect();
    let ambiguous = || Error::AnnotationAmbiguous;
    match candidates.len() {
        0 => Err(parse_err("target", "no object matches", &scene.description)),
        1 => Ok(candidates[0]),
        _ => {
            let (rel, reference) = slots.relation.zip(slots.reference.as_ref()).ok_or_else(ambiguous)?;
            let refs: Vec<usize> = (0..scene.objects.len())
                .filter(|&i| reference.matches(&scene.objects[i]))
                .collect();
            let [r] = refs[..] else {
                return Err(ambiguous());
            };
            let ref_cell = scene.objects[r].grid_cell;
            let hits: Vec<usize> = candidates
                .into_iter()
                .filter(|&i| rel.holds(scene.objects[i].grid_cell, ref_cell))
                .collect();
            match hits[..] {
                [i] => Ok(i),
                _ => Err(ambiguous()),
            }
        }
    }
}
