//! MurmurHash3 x64 128-bit, after Austin Appleby's reference implementation.

const C1: u64 = 0x87c3_7b91_1142_53d5;
const C2: u64 = 0x4cf5_ad43_2745_937f;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// Hashes `data` with MurmurHash3 x64_128 and the given seed, returning the
/// two 64-bit halves packed little-half-first into a u128.
pub fn murmur3_x64_128(data: &[u8], seed: u32) -> u128 {
    let len = data.len();
    let nblocks = len / 16;

    let mut h1 = u64::from(seed);
    let mut h2 = u64::from(seed);

    for i in 0..nblocks {
        let off = i * 16;
        let mut k1 = u64::from_le_bytes(data[off..off + 8].try_into().unwrap());
        let mut k2 = u64::from_le_bytes(data[off + 8..off + 16].try_into().unwrap());

        k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
        h1 = h1.rotate_left(27).wrapping_add(h2).wrapping_mul(5).wrapping_add(0x52dc_e729);

        k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
        h2 = h2.rotate_left(31).wrapping_add(h1).wrapping_mul(5).wrapping_add(0x3849_5ab5);
    }

    let tail = &data[nblocks * 16..];
    let mut k1: u64 = 0;
    let mut k2: u64 = 0;
    for (i, &b) in tail.iter().enumerate().skip(8) {
        k2 ^= u64::from(b) << ((i - 8) * 8);
    }
    if tail.len() > 8 {
        k2 = k2.wrapping_mul(C2).rotate_left(33).wrapping_mul(C1);
        h2 ^= k2;
    }
    for (i, &b) in tail.iter().enumerate().take(8) {
        k1 ^= u64::from(b) << (i * 8);
    }
    if !tail.is_empty() {
        k1 = k1.wrapping_mul(C1).rotate_left(31).wrapping_mul(C2);
        h1 ^= k1;
    }

    h1 ^= len as u64;
    h2 ^= len as u64;
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);
    h1 = fmix64(h1);
    h2 = fmix64(h2);
    h1 = h1.wrapping_add(h2);
    h2 = h2.wrapping_add(h1);

    (u128::from(h2) << 64) | u128::from(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden vectors frozen from the canonical C++ reference (seed 0 unless
    // noted). Stored as (h1, h2).
    fn hash_parts(data: &[u8], seed: u32) -> (u64, u64) {
        let h = murmur3_x64_128(data, seed);
        (h as u64, (h >> 64) as u64)
    }

    #[test]
    fn golden_vectors_seed0() {
        assert_eq!(hash_parts(b"", 0), (0, 0));
        assert_eq!(hash_parts(b"hello", 0), (0xcbd8a7b341bd9b02, 0x5b1e906a48ae1d19));
        assert_eq!(
            hash_parts(b"The quick brown fox jumps over the lazy dog", 0),
            (0xe34bbc7bbc071b6c, 0x7a433ca9c49a9347)
        );
        assert_eq!(hash_parts(b"Send|Button|0,0,10,10", 0), (0x1444d48950b84277, 0xc1c8c120e3943f48));
    }

    #[test]
    fn golden_vectors_nonzero_seed() {
        assert_eq!(hash_parts(b"hello", 42), (0xc4b8b3c960af6f08, 0x2334b875b0efbc7a));
    }

    #[test]
    fn block_boundaries() {
        // 16- and 17-byte inputs exercise full-block and tail paths.
        assert_eq!(hash_parts(b"0123456789abcdef", 0), (0x4be06d94cf4ad1a7, 0x87c35b5c63a708da));
        assert_eq!(hash_parts(b"0123456789abcdefg", 0), (0x8e32612daa45f9de, 0x0800f4c206c372ee));
    }
}
