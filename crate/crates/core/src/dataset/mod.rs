//! Corpus construction: composer selection, stratified splits, 30-second
//! segmentation and deterministic batching.

mod batch;
mod catalog;
mod segment;
mod split;

pub use batch::{batch_indices, collate, Sample};
pub use catalog::{read_manifest, write_manifest, Catalog, CatalogEntry};
pub use segment::{segment, Clip, CLIP_SECONDS, MIN_SHORT_PIECE, MIN_TAIL};
pub use split::{read_split, stratified_split, write_split, Subset, SplitAssignment};

/// 64-bit FNV-1a, used to derive per-composer seeds.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
