use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A seedable random stream. Each `(seed, stream_id)` pair selects a
/// distinct ChaCha keystream, so chains and partitions can be given
/// independent streams from one user seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A new stream sharing this seed, keyed by a sub-identifier. Used to
    /// hand each chain (and each partition within a chain) its own stream.
    pub fn substream(&self, sub: u64) -> Self {
        // SplitMix-style mix keeps nearby (stream, sub) pairs apart.
        let mut z = self
            .stream_id
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(sub.wrapping_add(1));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self::new(self.seed, z)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
