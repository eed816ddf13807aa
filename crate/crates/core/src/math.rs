//! Scalar float helpers.
//!
//! All transcendental functions route through `libm` so results are identical
//! with and without `std`, which keeps seeded runs byte-reproducible across
//! build configurations.

pub use libm::{exp, fabs, log, pow, sqrt};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; caller must guarantee `0 < p < 1`.
pub fn logit(p: f64) -> f64 {
    log(p) - log(1.0 - p)
}

/// One relaxed Bernoulli draw: `sigmoid((logit(clamp(p, lo, hi)) + noise) / t)`.
///
/// With logistic `noise` this is the concrete/Gumbel-softmax relaxation of a
/// Bernoulli(p) sample; as `t -> 0` it converges to the hard indicator
/// `logit(p) + noise > 0`. Single source of truth for both the tape operation
/// and plain forward evaluation.
pub fn relaxed_bernoulli_scalar(p: f64, noise: f64, temperature: f64, lo: f64, hi: f64) -> f64 {
    let pc = p.max(lo).min(hi);
    sigmoid((logit(pc) + noise) / temperature)
}

/// `base` halved once per completed `period` epochs.
pub fn halving_schedule(base: f64, epoch: usize, period: usize) -> f64 {
    let halvings = epoch / period;
    (0..halvings).fold(base, |lr, _| lr * 0.5)
}
