//! Inverted index from hash address to the reference places stored under it.
//!
//! Buckets live in one flat array (CSR layout) keyed by the sorted list of
//! occupied addresses. Queries that land on an empty address are redirected to
//! the numerically nearest occupied address by binary search.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "CHIX" | version u32 | header length u32 | JSON header
//! P1:          per occupied address, ascending: address u64, length u32, length x index u32
//! single-best: per occupied address, ascending: address u64, index u32
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, invalid, Result};
use crate::matrix::DescriptorMatrix;
use crate::quantizer::{HashAddress, Quantizer};

pub const MAGIC: &[u8; 4] = b"CHIX";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHeader {
    #[serde(rename = "N_x")]
    pub ref_count: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    #[serde(rename = "H_o")]
    pub occupied: usize,
    pub quantizer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    k: usize,
    d: usize,
    quantizer_id: String,
    occupied: Vec<HashAddress>,
    /// `offsets[p]..offsets[p + 1]` indexes `members` for `occupied[p]`.
    offsets: Vec<usize>,
    members: Vec<u32>,
    single_best: Vec<u32>,
    /// Address each reference was stored under.
    ref_address: Vec<HashAddress>,
}

/// Result of resolving a query address against the occupied set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup<'a> {
    pub resolved: HashAddress,
    pub fallback: bool,
    pub comparisons: usize,
    pub candidates: &'a [u32],
}

impl InvertedIndex {
    /// Hashes every projected reference row and groups rows by address.
    pub fn build(refs: &DescriptorMatrix, qz: &Quantizer) -> Result<Self> {
        if refs.dims() != qz.d() {
            return invalid(format!(
                "references are {}-dim, quantizer expects {}",
                refs.dims(),
                qz.d()
            ));
        }
        if refs.rows() > u32::MAX as usize {
            return invalid("more than 2^32 - 1 references");
        }
        let mut keyed: Vec<(HashAddress, u32)> = Vec::with_capacity(refs.rows());
        let mut errors: Vec<f64> = Vec::with_capacity(refs.rows());
        for (i, row) in refs.iter_rows().enumerate() {
            let q = qz.quantize_f32(row)?;
            keyed.push((qz.hash(&q)?, i as u32));
            errors.push(qz.quantization_error_unchecked(row.iter().map(|&v| v as f64)));
        }
        let ref_address: Vec<HashAddress> = keyed.iter().map(|&(h, _)| h).collect();
        keyed.sort_unstable();

        let mut occupied = Vec::new();
        let mut offsets = vec![0usize];
        let mut single_best = Vec::new();
        let mut members = Vec::with_capacity(keyed.len());
        for (pos, &(h, i)) in keyed.iter().enumerate() {
            if occupied.last() != Some(&h) {
                if pos > 0 {
                    offsets.push(pos);
                }
                occupied.push(h);
                single_best.push(i);
            } else {
                // Strictly smaller error wins; members arrive in ascending order.
                let best = single_best.last_mut().unwrap();
                if errors[i as usize] < errors[*best as usize] {
                    *best = i;
                }
            }
            members.push(i);
        }
        offsets.push(members.len());

        Ok(Self {
            k: qz.k(),
            d: qz.d(),
            quantizer_id: qz.fingerprint(),
            occupied,
            offsets,
            members,
            single_best,
            ref_address,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ref_count(&self) -> usize {
        self.ref_address.len()
    }

    pub fn occupied(&self) -> &[HashAddress] {
        &self.occupied
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn quantizer_id(&self) -> &str {
        &self.quantizer_id
    }

    pub fn address_of(&self, reference: usize) -> HashAddress {
        self.ref_address[reference]
    }

    pub fn ref_addresses(&self) -> &[HashAddress] {
        &self.ref_address
    }

    fn bucket_at(&self, pos: usize) -> &[u32] {
        &self.members[self.offsets[pos]..self.offsets[pos + 1]]
    }

    pub fn bucket(&self, h: HashAddress) -> Option<&[u32]> {
        self.occupied.binary_search(&h).ok().map(|p| self.bucket_at(p))
    }

    /// `(address, members)` for every occupied address in ascending order.
    pub fn buckets(&self) -> impl Iterator<Item = (HashAddress, &[u32])> {
        (0..self.occupied.len()).map(move |p| (self.occupied[p], self.bucket_at(p)))
    }

    pub fn single_best_of(&self, h: HashAddress) -> Option<u32> {
        self.occupied.binary_search(&h).ok().map(|p| self.single_best[p])
    }

    fn address_space(&self) -> u64 {
        (self.k as u64).pow(self.d as u32)
    }

    /// Position of the occupied address nearest to `h` (ties to the lower
    /// address) and the number of comparisons spent finding it.
    fn nearest_position(&self, h: HashAddress) -> (usize, usize) {
        let occ = &self.occupied;
        let (mut lo, mut hi) = (0usize, occ.len());
        let mut comparisons = 0;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            comparisons += 1;
            match occ[mid].cmp(&h) {
                std::cmp::Ordering::Equal => return (mid, comparisons),
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
            }
        }
        // occ[lo - 1] < h < occ[lo]
        if lo == 0 {
            return (0, comparisons);
        }
        if lo == occ.len() {
            return (lo - 1, comparisons);
        }
        comparisons += 1;
        if h - occ[lo - 1] <= occ[lo] - h {
            (lo - 1, comparisons)
        } else {
            (lo, comparisons)
        }
    }

    pub fn lookup(&self, h: HashAddress) -> Result<Lookup<'_>> {
        if h >= self.address_space() {
            return invalid(format!("address {h} outside [0, {})", self.address_space()));
        }
        let (pos, comparisons) = self.nearest_position(h);
        let resolved = self.occupied[pos];
        Ok(Lookup {
            resolved,
            fallback: resolved != h,
            comparisons,
            candidates: self.bucket_at(pos),
        })
    }

    /// Best single-frame match for `h`: the lowest-quantization-error member
    /// of the resolved bucket.
    pub fn query_single(&self, h: HashAddress) -> Result<usize> {
        if h >= self.address_space() {
            return invalid(format!("address {h} outside [0, {})", self.address_space()));
        }
        let (pos, _) = self.nearest_position(h);
        Ok(self.single_best[pos] as usize)
    }

    pub fn header(&self) -> IndexHeader {
        IndexHeader {
            ref_count: self.ref_count(),
            k: self.k,
            d: self.d,
            occupied: self.occupied.len(),
            quantizer: self.quantizer_id.clone(),
        }
    }

    /// Bytes taken by the P1 section of the serialized index.
    pub fn p1_section_bytes(&self) -> u64 {
        12 * self.occupied.len() as u64 + 4 * self.members.len() as u64
    }

    pub fn single_best_section_bytes(&self) -> u64 {
        12 * self.occupied.len() as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(
            12 + header.len() + (self.p1_section_bytes() + self.single_best_section_bytes()) as usize,
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (h, bucket) in self.buckets() {
            out.extend_from_slice(&h.to_le_bytes());
            out.extend_from_slice(&(bucket.len() as u32).to_le_bytes());
            for &i in bucket {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        for (h, &best) in self.occupied.iter().zip(&self.single_best) {
            out.extend_from_slice(&h.to_le_bytes());
            out.extend_from_slice(&best.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return format_err(0, "bad magic");
        }
        let version = r.u32()?;
        if version != VERSION {
            return format_err(4, format!("unsupported version {version}"));
        }
        let header_len = r.u32()? as usize;
        let header_at = r.pos as u64;
        let header: IndexHeader = serde_json::from_slice(r.take(header_len)?)
            .or_else(|e| format_err(header_at, format!("bad header: {e}")))?;
        if crate::quantizer::check_address_space(header.k, header.d).is_err() {
            return format_err(header_at, "header K/d out of range");
        }
        let space = (header.k as u64).pow(header.d as u32);

        let mut occupied = Vec::with_capacity(header.occupied);
        let mut offsets = vec![0usize];
        let mut members = Vec::with_capacity(header.ref_count);
        let mut ref_address = vec![u64::MAX; header.ref_count];
        for _ in 0..header.occupied {
            let at = r.pos as u64;
            let h = r.u64()?;
            if h >= space || occupied.last().is_some_and(|&prev| prev >= h) {
                return format_err(at, format!("address {h} out of order or out of range"));
            }
            let len = r.u32()? as usize;
            if len == 0 {
                return format_err(at + 8, "empty bucket");
            }
            let mut prev: Option<u32> = None;
            for _ in 0..len {
                let at = r.pos as u64;
                let i = r.u32()?;
                let slot = ref_address.get_mut(i as usize);
                match slot {
                    Some(s) if *s == u64::MAX && prev.is_none_or(|p| p < i) => *s = h,
                    _ => return format_err(at, format!("reference {i} invalid or repeated")),
                }
                prev = Some(i);
                members.push(i);
            }
            occupied.push(h);
            offsets.push(members.len());
        }
        if members.len() != header.ref_count {
            return format_err(r.pos as u64, "buckets do not cover every reference");
        }
        let mut single_best = Vec::with_capacity(header.occupied);
        for p in 0..header.occupied {
            let at = r.pos as u64;
            let h = r.u64()?;
            let i = r.u32()?;
            if h != occupied[p] || members[offsets[p]..offsets[p + 1]].binary_search(&i).is_err() {
                return format_err(at, "single-best entry does not match its bucket");
            }
            single_best.push(i);
        }
        if r.pos != bytes.len() {
            return format_err(r.pos as u64, "trailing bytes");
        }
        Ok(Self {
            k: header.k,
            d: header.d,
            quantizer_id: header.quantizer,
            occupied,
            offsets,
            members,
            single_best,
            ref_address,
        })
    }

    /// Writes `<dir>/index.chx`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<u64> {
        let bytes = self.to_bytes();
        fs::write(dir.as_ref().join("index.chx"), &bytes)?;
        Ok(bytes.len() as u64)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(dir.as_ref().join("index.chx"))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(
                self.bytes.len() as u64,
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            );
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(d: usize) -> Quantizer {
        Quantizer::from_centers(2, d, [-1.0, 1.0].repeat(d)).unwrap()
    }

    fn refs(rows: &[&[f32]]) -> DescriptorMatrix {
        DescriptorMatrix::from_rows(rows, "t").unwrap()
    }

    /// Index whose occupied addresses are exactly `addrs` (d = 4).
    fn with_addresses(addrs: &[u64]) -> InvertedIndex {
        let qz = binary(4);
        let rows: Vec<Vec<f32>> = addrs
            .iter()
            .map(|&h| {
                qz.unhash(h).unwrap().0.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect()
            })
            .collect();
        InvertedIndex::build(&DescriptorMatrix::from_rows(&rows, "t").unwrap(), &qz).unwrap()
    }

    #[test]
    fn single_reference() {
        let idx = InvertedIndex::build(&refs(&[&[0.5, -0.5]]), &binary(2)).unwrap();
        assert_eq!(idx.occupied(), &[2]);
        assert_eq!(idx.bucket(2), Some(&[0u32][..]));
        assert_eq!(idx.single_best_of(2), Some(0));
    }

    #[test]
    fn forced_collision() {
        let idx = InvertedIndex::build(&refs(&[&[0.5, 0.5], &[0.5, 0.5]]), &binary(2)).unwrap();
        assert_eq!(idx.occupied_count(), 1);
        assert_eq!(idx.bucket(3).unwrap().len(), 2);
        assert_eq!(idx.single_best_of(3), Some(0));
    }

    #[test]
    fn nearest_occupied_and_ties() {
        let idx = with_addresses(&[2, 9]);
        let l = idx.lookup(5).unwrap();
        assert_eq!((l.resolved, l.fallback), (2, true));
        let idx = with_addresses(&[2, 8]);
        assert_eq!(idx.lookup(5).unwrap().resolved, 2);
        assert_eq!(idx.lookup(6).unwrap().resolved, 8);
        assert_eq!(idx.lookup(0).unwrap().resolved, 2);
        assert_eq!(idx.lookup(15).unwrap().resolved, 8);
        let exact = idx.lookup(8).unwrap();
        assert_eq!((exact.resolved, exact.fallback), (8, false));
        assert!(idx.lookup(16).is_err());
    }

    #[test]
    fn single_best_prefers_lower_quantization_error() {
        // Both rows hash to address 3; row 1 sits on the centers.
        let rows = refs(&[&[0.2, 0.3], &[1.0, 1.0], &[-1.0, -1.0]]);
        let idx = InvertedIndex::build(&rows, &binary(2)).unwrap();
        assert_eq!(idx.bucket(3), Some(&[0u32, 1][..]));
        assert_eq!(idx.query_single(3).unwrap(), 1);
        // occupied {0, 3}: 2 resolves to 3, 1 resolves to 0
        assert_eq!(idx.query_single(2).unwrap(), 1);
        assert_eq!(idx.query_single(1).unwrap(), 2);
    }

    #[test]
    fn bytes_round_trip_and_truncation() {
        let rows = refs(&[&[0.2, 0.3], &[1.0, 1.0], &[-1.0, -1.0], &[0.4, -2.0]]);
        let idx = InvertedIndex::build(&rows, &binary(2)).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(InvertedIndex::from_bytes(&bytes).unwrap(), idx);
        for cut in [1, 5, bytes.len() - 20] {
            let err = InvertedIndex::from_bytes(&bytes[..bytes.len() - cut]).unwrap_err();
            assert!(matches!(err, crate::Error::Format { .. }), "{err:?}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(InvertedIndex::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(InvertedIndex::from_bytes(&extra).is_err());
    }

    #[test]
    fn section_sizes_match_layout() {
        let rows = refs(&[&[0.2, 0.3], &[1.0, 1.0], &[-1.0, -1.0]]);
        let idx = InvertedIndex::build(&rows, &binary(2)).unwrap();
        let header = serde_json::to_vec(&idx.header()).unwrap().len() as u64;
        assert_eq!(
            idx.to_bytes().len() as u64,
            12 + header + idx.p1_section_bytes() + idx.single_best_section_bytes()
        );
        assert_eq!(idx.p1_section_bytes(), 12 * 2 + 4 * 3);
    }
}
