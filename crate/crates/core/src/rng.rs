//! Counter-based random streams.
//!
//! Every random draw in a trial comes from a ChaCha stream addressed by
//! `(seed, trial_index, role)`, so results do not depend on how trials are
//! scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Consumer of a random stream within one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Alice's sifted key.
    SiftedKey,
    /// The BSC error pattern separating Bob's key from Alice's.
    ChannelNoise,
    /// Fresh information bits placed in `U`.
    Payload,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::SiftedKey => 1,
            Role::ChannelNoise => 2,
            Role::Payload => 3,
        }
    }
}

/// The stream for `role` in trial `trial_index` of campaign `seed`.
pub fn stream(seed: u64, trial_index: u64, role: Role) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&role.tag().to_le_bytes());
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(trial_index);
    rng
}
