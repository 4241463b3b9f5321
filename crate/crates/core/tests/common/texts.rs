//! Random text pairs with controlled overlap.

use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: [&str; 40] = [
    "robot", "table", "conveyor", "cabinet", "turntable", "guarding", "valve", "stand", "welding", "spot",
    "left", "right", "front", "behind", "meters", "place", "position", "facing", "between", "next",
    "kuka", "abb", "yaskawa", "line", "row", "parallel", "station", "cell", "part", "arm",
    "two", "three", "one", "large", "small", "near", "away", "center", "corner", "side",
];

/// A base text and a copy with a random share of its words replaced.
pub fn pair<R: Rng + ?Sized>(rng: &mut R) -> (String, String) {
    let len = rng.gen_range(8..40);
    let a: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
    // cube root spreads the 3-shingle overlap across the whole range
    let keep = rng.gen_range(0.0f64..=1.0).cbrt();
    let b: Vec<&str> = a
        .iter()
        .map(|w| if rng.gen_bool(keep) { *w } else { *WORDS.choose(rng).unwrap() })
        .collect();
    (a.join(" "), b.join(" "))
}
