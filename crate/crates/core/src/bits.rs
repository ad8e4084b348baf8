//! Bit-packed rows for Z/2 configurations on a torus.

/// A row of `len` bits on a ring; bit `i` lives in word `i / 64`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitRow {
    len: usize,
    words: Vec<u64>,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1);
        BitRow {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut row = Self::zeros(len);
        for i in 0..len {
            if f(i) {
                row.words[i / 64] |= 1 << (i % 64);
            }
        }
        row
    }

    pub fn from_cells(cells: &[u32]) -> Self {
        Self::from_fn(cells.len(), |i| cells[i] & 1 == 1)
    }

    pub fn to_cells(&self) -> Vec<u32> {
        (0..self.len).map(|i| u32::from(self.get(i))).collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    fn tail_mask(&self) -> u64 {
        match self.len % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    /// The row `y[i] = x[(i + 1) mod len]`.
    #[allow(clippy::needless_range_loop)] // reads the neighbouring word
    pub fn rotate_down(&self) -> BitRow {
        let nw = self.words.len();
        let mut out = vec![0u64; nw];
        for w in 0..nw {
            let next = if w + 1 < nw { self.words[w + 1] & 1 } else { 0 };
            out[w] = (self.words[w] >> 1) | (next << 63);
        }
        out[nw - 1] &= self.tail_mask() >> 1;
        if self.get(0) {
            let last = self.len - 1;
            out[last / 64] |= 1 << (last % 64);
        }
        BitRow {
            len: self.len,
            words: out,
        }
    }

    /// The row `y[i] = x[(i - 1) mod len]`.
    #[allow(clippy::needless_range_loop)] // reads the neighbouring word
    pub fn rotate_up(&self) -> BitRow {
        let nw = self.words.len();
        let mut out = vec![0u64; nw];
        for w in 0..nw {
            let prev = if w > 0 { self.words[w - 1] >> 63 } else { 0 };
            out[w] = (self.words[w] << 1) | prev;
        }
        out[nw - 1] &= self.tail_mask();
        if self.get(self.len - 1) {
            out[0] |= 1;
        }
        BitRow {
            len: self.len,
            words: out,
        }
    }

    /// Deterministic rule `x(i) + x(i+1)` over Z/2 on the ring.
    pub fn tau(&self) -> BitRow {
        let mut r = self.rotate_down();
        for (a, b) in r.words.iter_mut().zip(&self.words) {
            *a ^= b;
        }
        r
    }

    /// The first `len` bits as a row of length `len`.
    pub fn truncated(&self, len: usize) -> BitRow {
        assert!(len >= 1 && len <= self.len);
        let mut row = BitRow {
            len,
            words: self.words[..len.div_ceil(64)].to_vec(),
        };
        let mask = row.tail_mask();
        *row.words.last_mut().unwrap() &= mask;
        row
    }

    /// Indices of the set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + b)
            })
        })
    }

    pub fn and(&self, other: &BitRow) -> BitRow {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BitRow) -> BitRow {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &BitRow) -> BitRow {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn and_not(&self, other: &BitRow) -> BitRow {
        self.zip_with(other, |a, b| a & !b)
    }

    fn zip_with(&self, other: &BitRow, f: impl Fn(u64, u64) -> u64) -> BitRow {
        assert_eq!(self.len, other.len);
        BitRow {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}
