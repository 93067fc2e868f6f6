//! Seed derivation for independent random streams.
//!
//! Every stream is keyed by the master seed plus a short path of labels
//! (sequence number, replication number, purpose tag). Streams therefore do
//! not depend on the order in which replications are executed.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub type StreamRng = Pcg64Mcg;

/// Purpose tags mixed into derived seeds.
pub mod tag {
    pub const SCHEDULE: u64 = 0x5343_4845_4455_4c45;
    pub const ORIGINS: u64 = 0x4f52_4947_494e_5300;
    pub const FIRE: u64 = 0x4649_5245_0000_0000;
    pub const CALIBRATION: u64 = 0x4341_4c49_4252_4154;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |acc, &l| {
        splitmix64(acc ^ splitmix64(l))
    })
}

pub fn stream(master: u64, labels: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, labels))
}
