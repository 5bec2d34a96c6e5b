//! Sparse coding vectors, payload encoding, and incremental decoding.
//!
//! The decoder keeps its received vectors in row-echelon form over GF(2^q)
//! and tracks the two quantities the chain model is built on: the rank `r`
//! of the decoding matrix and the number `c` of covered columns, i.e.
//! columns that appeared with a non-zero coefficient in any received vector
//! *before* elimination. Elimination can zero a column out; coverage cannot
//! shrink.
//!
//! Payloads are optional: all decoding statistics depend only on coefficient
//! vectors, so the simulator runs coefficient-only by default. When payloads
//! are carried, the convention is one field symbol per byte for q > 1
//! (symbol values below 2^q) and raw bytes for q = 1, where every byte is
//! eight GF(2) symbols and the only non-zero scalar is 1.

use crate::error::{Error, Result};
use crate::gf::FieldSpec;
use rand::Rng;

const NO_PIVOT: u32 = u32::MAX;

/// A length-k coefficient vector with exactly `w` non-zero entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingVector {
    k: usize,
    entries: Vec<(u32, u8)>,
}

impl CodingVector {
    /// Builds a vector from `(column, coefficient)` pairs. Columns must be
    /// distinct and in `[0, k)`; coefficients must be non-zero.
    pub fn new(k: usize, mut entries: Vec<(u32, u8)>) -> Result<Self> {
        if entries.is_empty() || entries.len() > k {
            return Err(Error::InvalidParameter(format!(
                "support size {} outside [1, {k}]",
                entries.len()
            )));
        }
        entries.sort_unstable_by_key(|&(col, _)| col);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "duplicate column {} in coding vector",
                    pair[0].0
                )));
            }
        }
        for &(col, coeff) in &entries {
            if col as usize >= k {
                return Err(Error::InvalidParameter(format!(
                    "column {col} out of range for k={k}"
                )));
            }
            if coeff == 0 {
                return Err(Error::InvalidParameter(format!(
                    "zero coefficient on supported column {col}"
                )));
            }
        }
        Ok(CodingVector { k, entries })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of non-zero coefficients (the density w).
    #[inline]
    pub fn weight(&self) -> usize {
        self.entries.len()
    }

    /// Sorted `(column, coefficient)` pairs.
    #[inline]
    pub fn entries(&self) -> &[(u32, u8)] {
        &self.entries
    }

    /// Supported column indices, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(col, _)| col as usize)
    }

    /// Dense length-k coefficient row.
    pub fn to_dense(&self) -> Vec<u8> {
        let mut row = vec![0u8; self.k];
        for &(col, coeff) in &self.entries {
            row[col as usize] = coeff;
        }
        row
    }
}

/// Draws a coding vector whose support is a uniform w-subset of `[0, k)` and
/// whose supported coefficients are uniform over the non-zero field elements.
pub fn generate_coding_vector<R: Rng + ?Sized>(
    k: usize,
    w: usize,
    field: &FieldSpec,
    rng: &mut R,
) -> Result<CodingVector> {
    if w == 0 || w > k {
        return Err(Error::InvalidParameter(format!(
            "density w={w} outside [1, k={k}]"
        )));
    }
    // Floyd's subset sampling: uniform over all C(k, w) supports without
    // materializing the index pool.
    let mut entries: Vec<(u32, u8)> = Vec::with_capacity(w);
    for j in (k - w)..k {
        let t = rng.random_range(0..=j as u32);
        let pick = if entries.iter().any(|&(col, _)| col == t) {
            j as u32
        } else {
            t
        };
        let coeff = if field.q() == 1 {
            1u8
        } else {
            rng.random_range(1..field.order()) as u8
        };
        entries.push((pick, coeff));
    }
    CodingVector::new(k, entries)
}

/// A block of k equal-length source packets encoded together.
#[derive(Debug, Clone)]
pub struct Generation {
    k: usize,
    payload_len: usize,
    packets: Vec<Vec<u8>>,
}

impl Generation {
    pub fn new(packets: Vec<Vec<u8>>) -> Result<Self> {
        let k = packets.len();
        if k == 0 {
            return Err(Error::InvalidParameter(
                "generation needs k >= 1 packets".into(),
            ));
        }
        let payload_len = packets[0].len();
        if packets.iter().any(|p| p.len() != payload_len) {
            return Err(Error::Encoding(
                "all payloads must have equal length".into(),
            ));
        }
        Ok(Generation {
            k,
            payload_len,
            packets,
        })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    #[inline]
    pub fn packets(&self) -> &[Vec<u8>] {
        &self.packets
    }
}

/// Symbol-wise linear combination of the supported packets.
pub fn encode(
    generation: &Generation,
    vector: &CodingVector,
    field: &FieldSpec,
) -> Result<Vec<u8>> {
    if vector.k() != generation.k() {
        return Err(Error::Encoding(format!(
            "coding vector length {} != generation size {}",
            vector.k(),
            generation.k()
        )));
    }
    let mut out = vec![0u8; generation.payload_len()];
    for &(col, coeff) in vector.entries() {
        let packet = &generation.packets[col as usize];
        if field.q() == 1 {
            for (o, &p) in out.iter_mut().zip(packet) {
                *o ^= p;
            }
        } else {
            let row = field.scalar_row(coeff);
            let order = field.order();
            for (o, &p) in out.iter_mut().zip(packet) {
                if u16::from(p) >= order {
                    return Err(Error::Encoding(format!(
                        "payload symbol {p:#x} out of range for GF(2^{})",
                        field.q()
                    )));
                }
                *o ^= row[usize::from(p)];
            }
        }
    }
    Ok(out)
}

/// Result of feeding one coded packet to the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOutcome {
    pub innovative: bool,
    pub rank_after: u32,
    pub covered_after: u32,
}

#[derive(Debug, Clone)]
enum RowStore {
    /// q = 1: rows bit-packed into u64 words, XOR row operations.
    Packed { words: usize, data: Vec<u64> },
    /// q > 1: one symbol per byte, k symbols per row.
    Symbols { data: Vec<u8> },
}

/// Incremental Gaussian-elimination decoder state.
#[derive(Debug, Clone)]
pub struct DecoderState {
    k: usize,
    q: u8,
    rows: RowStore,
    pivot_row: Vec<u32>,
    rank: usize,
    covered_mask: Vec<u64>,
    covered: usize,
    op_count: u64,
    payload_len: Option<usize>,
    payloads: Vec<u8>,
    scratch_bits: Vec<u64>,
    scratch_sym: Vec<u8>,
    scratch_payload: Vec<u8>,
}

impl DecoderState {
    /// Coefficient-only decoder for a generation of size k.
    pub fn new(k: usize, field: &FieldSpec) -> Result<Self> {
        Self::build(k, field, None)
    }

    /// Decoder that also carries payloads of the given length.
    pub fn with_payloads(k: usize, field: &FieldSpec, payload_len: usize) -> Result<Self> {
        Self::build(k, field, Some(payload_len))
    }

    fn build(k: usize, field: &FieldSpec, payload_len: Option<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        let words = k.div_ceil(64);
        let rows = if field.q() == 1 {
            RowStore::Packed {
                words,
                data: vec![0u64; k * words],
            }
        } else {
            RowStore::Symbols {
                data: vec![0u8; k * k],
            }
        };
        Ok(DecoderState {
            k,
            q: field.q(),
            rows,
            pivot_row: vec![NO_PIVOT; k],
            rank: 0,
            covered_mask: vec![0u64; words],
            covered: 0,
            op_count: 0,
            payload_len,
            payloads: vec![0u8; payload_len.unwrap_or(0) * k],
            scratch_bits: vec![0u64; if field.q() == 1 { words } else { 0 }],
            scratch_sym: vec![0u8; if field.q() == 1 { 0 } else { k }],
            scratch_payload: vec![0u8; payload_len.unwrap_or(0)],
        })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Current rank r of the decoding matrix.
    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number c of covered columns (pre-elimination union of supports).
    #[inline]
    pub fn covered(&self) -> usize {
        self.covered
    }

    /// Cumulative row scale/add operations performed so far.
    #[inline]
    pub fn op_count(&self) -> u64 {
        self.op_count
    }

    #[inline]
    pub fn is_complete(&self) -> bool {
        self.rank == self.k
    }

    /// Clears all received state, keeping the allocations.
    pub fn reset(&mut self) {
        match &mut self.rows {
            RowStore::Packed { data, .. } => data.fill(0),
            RowStore::Symbols { data } => data.fill(0),
        }
        self.pivot_row.fill(NO_PIVOT);
        self.rank = 0;
        self.covered_mask.fill(0);
        self.covered = 0;
        self.op_count = 0;
        self.payloads.fill(0);
    }

    fn check_compatible(&self, vector: &CodingVector, field: &FieldSpec) -> Result<()> {
        if vector.k() != self.k {
            return Err(Error::InvalidParameter(format!(
                "coding vector length {} != decoder k {}",
                vector.k(),
                self.k
            )));
        }
        if field.q() != self.q {
            return Err(Error::InvalidParameter(format!(
                "field q={} does not match decoder q={}",
                field.q(),
                self.q
            )));
        }
        Ok(())
    }

    /// Ingests one coded packet. Coverage is recorded before elimination;
    /// a dependent vector is a normal outcome, not an error.
    pub fn ingest(
        &mut self,
        vector: &CodingVector,
        payload: Option<&[u8]>,
        field: &FieldSpec,
    ) -> Result<IngestOutcome> {
        self.check_compatible(vector, field)?;
        match (self.payload_len, payload) {
            (Some(len), Some(p)) if p.len() != len => {
                return Err(Error::Encoding(format!(
                    "payload length {} != expected {len}",
                    p.len()
                )));
            }
            (Some(_), None) => {
                return Err(Error::Encoding(
                    "decoder carries payloads but none was supplied".into(),
                ));
            }
            (None, Some(_)) => {
                return Err(Error::Encoding(
                    "coefficient-only decoder received a payload".into(),
                ));
            }
            _ => {}
        }
        if let Some(p) = payload {
            if self.q > 1 {
                let order = field.order();
                if p.iter().any(|&b| u16::from(b) >= order) {
                    return Err(Error::Encoding(format!(
                        "payload symbol out of range for GF(2^{})",
                        self.q
                    )));
                }
            }
            self.scratch_payload.copy_from_slice(p);
        }

        for &(col, _) in vector.entries() {
            let (word, bit) = (col as usize / 64, col as usize % 64);
            if self.covered_mask[word] >> bit & 1 == 0 {
                self.covered_mask[word] |= 1u64 << bit;
                self.covered += 1;
            }
        }

        let innovative = match &mut self.rows {
            RowStore::Packed { .. } => self.reduce_packed(vector),
            RowStore::Symbols { .. } => self.reduce_symbols(vector, field),
        };
        if innovative {
            self.rank += 1;
        }
        Ok(IngestOutcome {
            innovative,
            rank_after: self.rank as u32,
            covered_after: self.covered as u32,
        })
    }

    /// Reduces the vector against the stored rows without mutating them;
    /// reports whether an ingest would raise the rank.
    pub fn probe(&mut self, vector: &CodingVector, field: &FieldSpec) -> Result<bool> {
        self.check_compatible(vector, field)?;
        match &self.rows {
            RowStore::Packed { words, data } => {
                let words = *words;
                self.scratch_bits.fill(0);
                for &(col, _) in vector.entries() {
                    self.scratch_bits[col as usize / 64] ^= 1u64 << (col as usize % 64);
                }
                loop {
                    let Some(col) = leading_bit(&self.scratch_bits) else {
                        return Ok(false);
                    };
                    let slot = self.pivot_row[col];
                    if slot == NO_PIVOT {
                        return Ok(true);
                    }
                    let row = &data[slot as usize * words..(slot as usize + 1) * words];
                    for (s, &r) in self.scratch_bits.iter_mut().zip(row) {
                        *s ^= r;
                    }
                }
            }
            RowStore::Symbols { data } => {
                let k = self.k;
                self.scratch_sym.fill(0);
                for &(col, coeff) in vector.entries() {
                    self.scratch_sym[col as usize] = coeff;
                }
                for col in 0..k {
                    let coeff = self.scratch_sym[col];
                    if coeff == 0 {
                        continue;
                    }
                    let slot = self.pivot_row[col];
                    if slot == NO_PIVOT {
                        return Ok(true);
                    }
                    let row = &data[slot as usize * k..(slot as usize + 1) * k];
                    let scale = field.scalar_row(coeff);
                    for (s, &r) in self.scratch_sym[col..].iter_mut().zip(&row[col..]) {
                        *s ^= scale[usize::from(r)];
                    }
                }
                Ok(false)
            }
        }
    }

    fn reduce_packed(&mut self, vector: &CodingVector) -> bool {
        let RowStore::Packed { words, data } = &mut self.rows else {
            unreachable!()
        };
        let words = *words;
        self.scratch_bits.fill(0);
        for &(col, _) in vector.entries() {
            self.scratch_bits[col as usize / 64] ^= 1u64 << (col as usize % 64);
        }
        loop {
            let Some(col) = leading_bit(&self.scratch_bits) else {
                return false;
            };
            let slot = self.pivot_row[col];
            if slot == NO_PIVOT {
                let slot = self.rank;
                data[slot * words..(slot + 1) * words].copy_from_slice(&self.scratch_bits);
                if let Some(len) = self.payload_len {
                    self.payloads[slot * len..(slot + 1) * len]
                        .copy_from_slice(&self.scratch_payload);
                }
                self.pivot_row[col] = slot as u32;
                return true;
            }
            let row = &data[slot as usize * words..(slot as usize + 1) * words];
            for (s, &r) in self.scratch_bits.iter_mut().zip(row) {
                *s ^= r;
            }
            if let Some(len) = self.payload_len {
                let prow = &self.payloads[slot as usize * len..(slot as usize + 1) * len];
                for (s, &r) in self.scratch_payload.iter_mut().zip(prow) {
                    *s ^= r;
                }
            }
            self.op_count += 1;
        }
    }

    fn reduce_symbols(&mut self, vector: &CodingVector, field: &FieldSpec) -> bool {
        let RowStore::Symbols { data } = &mut self.rows else {
            unreachable!()
        };
        let k = self.k;
        self.scratch_sym.fill(0);
        for &(col, coeff) in vector.entries() {
            self.scratch_sym[col as usize] = coeff;
        }
        for col in 0..k {
            let coeff = self.scratch_sym[col];
            if coeff == 0 {
                continue;
            }
            let slot = self.pivot_row[col];
            if slot == NO_PIVOT {
                // New pivot: normalize so the leading coefficient is 1.
                if coeff != 1 {
                    let scale = field.scalar_row(field.inv_raw(coeff));
                    for s in &mut self.scratch_sym[col..] {
                        *s = scale[usize::from(*s)];
                    }
                    if let Some(len) = self.payload_len {
                        for s in &mut self.scratch_payload[..len] {
                            *s = scale[usize::from(*s)];
                        }
                    }
                    self.op_count += 1;
                }
                let slot = self.rank;
                data[slot * k..(slot + 1) * k].copy_from_slice(&self.scratch_sym);
                if let Some(len) = self.payload_len {
                    self.payloads[slot * len..(slot + 1) * len]
                        .copy_from_slice(&self.scratch_payload);
                }
                self.pivot_row[col] = slot as u32;
                return true;
            }
            // Stored pivot rows are normalized, so the subtraction factor is
            // the current coefficient itself.
            let row = &data[slot as usize * k..(slot as usize + 1) * k];
            let scale = field.scalar_row(coeff);
            for (s, &r) in self.scratch_sym[col..].iter_mut().zip(&row[col..]) {
                *s ^= scale[usize::from(r)];
            }
            if let Some(len) = self.payload_len {
                let prow = &self.payloads[slot as usize * len..(slot as usize + 1) * len];
                for (s, &r) in self.scratch_payload.iter_mut().zip(prow) {
                    *s ^= scale[usize::from(r)];
                }
            }
            self.op_count += 1;
        }
        false
    }

    /// Recovers the k source payloads once the decoder is at full rank.
    pub fn decode_generation(&self, field: &FieldSpec) -> Result<Vec<Vec<u8>>> {
        if self.rank < self.k {
            return Err(Error::NotDecodable {
                rank: self.rank as u32,
                k: self.k as u32,
            });
        }
        let len = self.payload_len.ok_or_else(|| {
            Error::InvalidParameter("decoder holds no payloads to recover".into())
        })?;
        if field.q() != self.q {
            return Err(Error::InvalidParameter(format!(
                "field q={} does not match decoder q={}",
                field.q(),
                self.q
            )));
        }
        let k = self.k;
        let mut payloads = self.payloads.clone();
        match &self.rows {
            RowStore::Packed { words, data } => {
                let words = *words;
                let mut rows = data.clone();
                // Back-substitution, highest pivot column first. The pivot
                // row for a column is already fully reduced when its turn
                // comes, so snapshot it once per column.
                for col in (0..k).rev() {
                    let pivot = self.pivot_row[col] as usize;
                    let pivot_bits = rows[pivot * words..(pivot + 1) * words].to_vec();
                    let pivot_payload = payloads[pivot * len..(pivot + 1) * len].to_vec();
                    for slot in 0..k {
                        if slot == pivot {
                            continue;
                        }
                        if rows[slot * words + col / 64] >> (col % 64) & 1 == 1 {
                            for w in 0..words {
                                rows[slot * words + w] ^= pivot_bits[w];
                            }
                            for i in 0..len {
                                payloads[slot * len + i] ^= pivot_payload[i];
                            }
                        }
                    }
                }
            }
            RowStore::Symbols { data } => {
                let mut rows = data.clone();
                for col in (0..k).rev() {
                    let pivot = self.pivot_row[col] as usize;
                    for slot in 0..k {
                        if slot == pivot {
                            continue;
                        }
                        let factor = rows[slot * k + col];
                        if factor == 0 {
                            continue;
                        }
                        let scale = field.scalar_row(factor);
                        for j in col..k {
                            let v = rows[pivot * k + j];
                            rows[slot * k + j] ^= scale[usize::from(v)];
                        }
                        for i in 0..len {
                            let v = payloads[pivot * len + i];
                            payloads[slot * len + i] ^= scale[usize::from(v)];
                        }
                    }
                }
            }
        }
        let out = self
            .pivot_row
            .iter()
            .map(|&slot| {
                let slot = slot as usize;
                payloads[slot * len..(slot + 1) * len].to_vec()
            })
            .collect();
        Ok(out)
    }
}

#[inline]
fn leading_bit(words: &[u64]) -> Option<usize> {
    for (i, &w) in words.iter().enumerate() {
        if w != 0 {
            return Some(i * 64 + w.trailing_zeros() as usize);
        }
    }
    None
}
