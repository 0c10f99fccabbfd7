use rand::{rngs::StdRng, Rng};

use crate::potential::{Potential, TrigTerm};

/// A random trigonometric potential with one to three terms.
pub(crate) fn random_trig(rng: &mut StdRng) -> Potential {
    let k = rng.random_range(1..4);
    let terms = (0..k)
        .map(|_| {
            let a = rng.random_range(-4.0..4.0);
            let f = rng.random_range(1..4);
            if rng.random_bool(0.5) {
                TrigTerm::cos(a, f)
            } else {
                TrigTerm::sin(a, f)
            }
        })
        .collect();
    Potential::trig(terms).unwrap()
}
