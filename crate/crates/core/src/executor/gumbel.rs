//! Two-way Gumbel-Softmax on a pair of logits `(keep, skip)`.

use rand::Rng;

/// Masker evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskMode {
    /// Deterministic argmax; the keep logit wins ties.
    Inference,
    /// Seeded Gumbel noise with temperature `tau`.
    Train { tau: f64, seed: u64 },
}

/// One standard Gumbel sample, `-ln(-ln u)` with `u` in (0, 1).
pub fn gumbel_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let u = u.max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Relaxed keep probability `sigmoid(((l0 + g0) - (l1 + g1)) / tau)`.
pub fn soft_keep(l0: f64, l1: f64, noise: (f64, f64), tau: f64) -> f64 {
    let z = ((l0 + noise.0) - (l1 + noise.1)) / tau;
    sigmoid(z)
}

/// Hard decision of the straight-through estimator: keep when the noisy
/// keep logit is at least the noisy skip logit.
pub fn hard_keep(l0: f64, l1: f64, noise: (f64, f64)) -> bool {
    l0 + noise.0 >= l1 + noise.1
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Soft and hard decisions for a list of logit pairs under `mode`.
pub fn decide(pairs: &[(f64, f64)], mode: MaskMode) -> (Vec<f64>, Vec<bool>) {
    match mode {
        MaskMode::Inference => {
            let hard: Vec<bool> = pairs.iter().map(|&(a, b)| hard_keep(a, b, (0.0, 0.0))).collect();
            (hard.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(), hard)
        }
        MaskMode::Train { tau, seed } => {
            use rand_chacha::rand_core::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut soft = Vec::with_capacity(pairs.len());
            let mut hard = Vec::with_capacity(pairs.len());
            for &(a, b) in pairs {
                let noise = (gumbel_sample(&mut rng), gumbel_sample(&mut rng));
                soft.push(soft_keep(a, b, noise, tau));
                hard.push(hard_keep(a, b, noise));
            }
            (soft, hard)
        }
    }
}
