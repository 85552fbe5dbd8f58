use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic {0,1} dropout mask for one op instance.
///
/// The ChaCha stream is keyed by the full (seed, epoch, batch, op_instance)
/// coordinate, so every mask is a pure function of where it appears in
/// training — reruns are bitwise identical and independent of evaluation
/// order.
pub fn dropout_mask(
    seed: u64,
    epoch: u64,
    batch: u64,
    op_instance: u64,
    len: usize,
    rate: f64,
) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout_mask: rate {rate} outside [0,1)");
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&batch.to_le_bytes());
    key[24..32].copy_from_slice(&op_instance.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 }).collect()
}
