//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use polar_recon::construction::{construct_bsc, select_frozen};
use polar_recon::harness::gen_sifted_pair;
use polar_recon::ldpc::{select_code, CodeRegistry};
use polar_recon::protocol::{alice_forward, ForwardMessage, SessionParams};
use polar_recon::{BitBlock, CrcSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A forward-stage instance: parameters, Bob's key and Alice's message.
pub struct ForwardFixture {
    pub params: SessionParams,
    pub k_b: BitBlock,
    pub msg: ForwardMessage,
}

/// Session of length `n` with CRC-32 tags over `sub_blocks` sub-blocks.
pub fn forward_fixture(n: usize, sub_blocks: usize, list_size: usize, qber: f64, seed: u64) -> ForwardFixture {
    let stats = construct_bsc(n, qber, 64).expect("construction");
    let frozen = select_frozen(&stats, 1.0).expect("frozen set");
    let registry = CodeRegistry::design(n / sub_blocks, &[qber], None, seed).expect("ldpc design");
    let ldpc = Arc::clone(&select_code(qber, &registry).expect("code").matrix);
    let params = SessionParams::new(list_size, sub_blocks, qber, Arc::new(frozen), CrcSpec::crc32(), ldpc)
        .expect("valid session");
    let mut key_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (k_a, k_b) = gen_sifted_pair(n, qber, &mut key_rng, &mut noise_rng).expect("key pair");
    let (msg, _) = alice_forward(&k_a, &params, &mut key_rng).expect("forward message");
    ForwardFixture { params, k_b, msg }
}

/// Uniform block of `len` bits.
pub fn random_block(len: usize, seed: u64) -> BitBlock {
    BitBlock::random(len, &mut ChaCha8Rng::seed_from_u64(seed))
}
