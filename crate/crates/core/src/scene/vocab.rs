//! Fixed vocabularies of the synthetic world: object classes, colors,
//! shapes, sentence templates and spatial relations.

use serde::{Deserialize, Serialize};

/// 117 object classes. The first [`BASE_CLASS_COUNT`] form the default base
/// split, the remainder the novel split.
pub const CLASS_NAMES: [&str; 117] = [
    // base
    "apple", "banana", "orange", "lemon", "peach", "pear", "plum", "mango", "kiwi", "grape",
    "tomato", "potato", "carrot", "onion", "pepper", "cucumber", "mug", "cup", "bowl", "plate",
    "spoon", "fork", "knife", "bottle", "jar", "can", "kettle", "teapot", "toaster", "sponge",
    "soap", "shampoo", "toothbrush", "towel", "comb", "razor", "stapler", "scissors", "tape",
    "marker", "pen", "pencil", "eraser", "ruler", "notebook", "calculator", "mouse", "keyboard",
    "remote", "phone", "charger", "headphones", "battery", "flashlight", "hammer", "wrench",
    "screwdriver", "pliers", "drill", "clamp", "glove", "hat", "sock", "shoe", "wallet",
    "watch", "camera", "lamp",
    // novel
    "avocado", "coconut", "pineapple", "melon", "cherry", "apricot", "papaya", "radish",
    "garlic", "ginger", "pumpkin", "eggplant", "ladle", "whisk", "spatula", "colander",
    "grater", "corkscrew", "thermos", "vase", "candle", "perfume", "lipstick", "hairbrush",
    "sunglasses", "stopwatch", "compass", "protractor", "sharpener", "highlighter", "joystick",
    "speaker", "microphone", "router", "harmonica", "ukulele", "maraca", "whistle", "dice",
    "puzzle", "yoyo", "kazoo", "figurine", "pinecone", "seashell", "cactus", "succulent",
    "trowel", "chisel",
];

pub const BASE_CLASS_COUNT: usize = 68;

pub fn base_classes() -> &'static [&'static str] {
    &CLASS_NAMES[..BASE_CLASS_COUNT]
}

pub fn novel_classes() -> &'static [&'static str] {
    &CLASS_NAMES[BASE_CLASS_COUNT..]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
    White,
    Black,
    Brown,
    Pink,
}

impl Color {
    pub const ALL: [Color; 10] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Orange,
        Color::Purple,
        Color::White,
        Color::Black,
        Color::Brown,
        Color::Pink,
    ];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Orange => "orange",
            Color::Purple => "purple",
            Color::White => "white",
            Color::Black => "black",
            Color::Brown => "brown",
            Color::Pink => "pink",
        }
    }

    pub fn from_word(w: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.word() == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Sphere,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Box, Shape::Sphere, Shape::Cylinder];

    /// Adjective used in descriptions.
    pub fn word(self) -> &'static str {
        match self {
            Shape::Box => "boxy",
            Shape::Sphere => "round",
            Shape::Cylinder => "cylindrical",
        }
    }

    pub fn from_word(w: &str) -> Option<Shape> {
        Shape::ALL.into_iter().find(|s| s.word() == w)
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Box => "box",
            Shape::Sphere => "sphere",
            Shape::Cylinder => "cylinder",
        }
    }
}

/// Sentence openers. Every template is followed by `the <target>`.
/// Ordered so that no template is a prefix of a later one.
pub const TEMPLATES: [&str; 10] = [
    "grasp",
    "pick up",
    "please grab",
    "can you pick up",
    "i need",
    "hand me",
    "get",
    "fetch",
    "take",
    "lift",
];

/// Spatial relation of the target to a reference object, in image
/// coordinates: left means a smaller grid column, behind a smaller grid row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LeftOf,
    RightOf,
    Behind,
    InFrontOf,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::Behind,
        Relation::InFrontOf,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::Behind => "behind",
            Relation::InFrontOf => "in front of",
        }
    }

    /// Whether an object at `subject` stands in this relation to one at
    /// `reference`. Cells are `(row, col)`.
    pub fn holds(self, subject: (usize, usize), reference: (usize, usize)) -> bool {
        match self {
            Relation::LeftOf => subject.1 < reference.1,
            Relation::RightOf => subject.1 > reference.1,
            Relation::Behind => subject.0 < reference.0,
            Relation::InFrontOf => subject.0 > reference.0,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Relation::LeftOf => "left_of",
            Relation::RightOf => "right_of",
            Relation::Behind => "behind",
            Relation::InFrontOf => "in_front_of",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn class_names_unique_single_words() {
        let set: HashSet<_> = CLASS_NAMES.iter().collect();
        assert_eq!(set.len(), 117);
        assert_eq!(base_classes().len(), 68);
        assert_eq!(novel_classes().len(), 49);
        for name in CLASS_NAMES {
            assert!(!name.contains(' ') && !name.is_empty());
            assert!(Color::from_word(name).is_none() || name == "orange");
        }
    }

    #[test]
    fn templates_are_prefix_free() {
        for (i, a) in TEMPLATES.iter().enumerate() {
            for (j, b) in TEMPLATES.iter().enumerate() {
                if i != j {
                    assert!(!format!("{b} ").starts_with(&format!("{a} ")), "{a} / {b}");
                }
            }
        }
    }
}
