//! Fixed-width code packing, least-significant bit first.
//!
//! Code `j` of a row occupies bits `j*width .. (j+1)*width` of the row,
//! where bit `b` lives in byte `b / 8` at position `b % 8`. Rows are padded
//! to a whole number of bytes.

/// Bytes needed for `n` codes of `width` bits.
pub fn row_bytes(n: usize, width: u32) -> usize {
    (n * width as usize).div_ceil(8)
}

/// Writes `codes` into the zeroed slice `out`.
pub fn pack_into(codes: impl IntoIterator<Item = u32>, width: u32, out: &mut [u8]) {
    debug_assert!((1..=16).contains(&width) || width == 32);
    let mut bit = 0usize;
    for c in codes {
        debug_assert!(width == 32 || c < (1u32 << width));
        let mut remaining = width;
        let mut value = c as u64;
        while remaining > 0 {
            let byte = bit / 8;
            let off = (bit % 8) as u32;
            let take = remaining.min(8 - off);
            let mask = (1u64 << take) - 1;
            out[byte] |= ((value & mask) as u8) << off;
            value >>= take;
            remaining -= take;
            bit += take as usize;
        }
    }
}

/// Reads `n` codes of `width` bits from `row`.
pub fn unpack(row: &[u8], width: u32, n: usize) -> impl Iterator<Item = u32> + '_ {
    (0..n).map(move |j| {
        let mut bit = j * width as usize;
        let mut remaining = width;
        let mut value = 0u32;
        let mut shift = 0u32;
        while remaining > 0 {
            let byte = bit / 8;
            let off = (bit % 8) as u32;
            let take = remaining.min(8 - off);
            let mask = ((1u32 << take) - 1) as u8;
            value |= (((row[byte] >> off) & mask) as u32) << shift;
            shift += take;
            remaining -= take;
            bit += take as usize;
        }
        value
    })
}

/// Hamming distance between two packed rows.
pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}
