//! Small shared helpers: seed derivation and serde support for the
//! divergence sentinel.

/// splitmix64 finalizer; decorrelates derived seeds from sequential stream ids.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream of `seed`.
///
/// Used so that e.g. model init, batch sampling and evaluation sampling each
/// get their own deterministic RNG, and so that parallel fitness evaluations
/// are reproducible regardless of scheduling.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Serializes a loss that may hold the `+inf` divergence sentinel as JSON
/// null instead of an invalid numeric literal.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let opt = Option::<f64>::deserialize(d)?;
        Ok(opt.unwrap_or(f64::INFINITY))
    }
}
