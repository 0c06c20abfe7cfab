//! Counter-based seed derivation.
//!
//! Every random stream an experiment consumes is keyed by the declared
//! master seed, a role label, and a counter. Streams are therefore
//! independent of execution order and of how work is sliced across threads,
//! which is what makes manifests replayable.

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in label.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; full-avalanche mix of one word.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Child seed for stream `counter` of role `label` under `master`.
pub fn child_seed(master: u64, label: &str, counter: u64) -> u64 {
    let golden = 0x9e37_79b9_7f4a_7c15u64;
    mix(mix(master ^ label_hash(label)).wrapping_add(counter.wrapping_mul(golden)))
}
