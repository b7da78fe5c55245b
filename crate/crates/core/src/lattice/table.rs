//! Open-addressing map from lattice keys to dense vertex slots.
//!
//! A key is the first `d` coordinates of a zero-sum `(d+1)`-vector; the last
//! coordinate is implied. Slots are assigned in insertion order, so a
//! sequential build yields the same numbering on every run.

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct KeyTable {
    key_len: usize,
    keys: Vec<i32>,
    buckets: Vec<u32>,
    mask: usize,
}

#[inline]
fn hash_key(key: &[i32]) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &k in key {
        h ^= k as u32 as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    }
    h = h.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    (h ^ (h >> 32)) as usize
}

impl KeyTable {
    pub fn with_capacity(key_len: usize, expected: usize) -> Self {
        let cap = (expected.max(8) * 2).next_power_of_two();
        Self {
            key_len,
            keys: Vec::with_capacity(expected * key_len),
            buckets: vec![EMPTY; cap],
            mask: cap - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.key_len
    }

    pub fn key(&self, slot: usize) -> &[i32] {
        &self.keys[slot * self.key_len..(slot + 1) * self.key_len]
    }

    pub fn find(&self, key: &[i32]) -> Option<u32> {
        let mut b = hash_key(key) & self.mask;
        loop {
            let slot = self.buckets[b];
            if slot == EMPTY {
                return None;
            }
            if self.key(slot as usize) == key {
                return Some(slot);
            }
            b = (b + 1) & self.mask;
        }
    }

    pub fn insert(&mut self, key: &[i32]) -> u32 {
        debug_assert_eq!(key.len(), self.key_len);
        if (self.len() + 1) * 2 > self.buckets.len() {
            self.grow();
        }
        let mut b = hash_key(key) & self.mask;
        loop {
            let slot = self.buckets[b];
            if slot == EMPTY {
                let new = self.len() as u32;
                self.keys.extend_from_slice(key);
                self.buckets[b] = new;
                return new;
            }
            if self.key(slot as usize) == key {
                return slot;
            }
            b = (b + 1) & self.mask;
        }
    }

    fn grow(&mut self) {
        let cap = self.buckets.len() * 2;
        self.buckets = vec![EMPTY; cap];
        self.mask = cap - 1;
        for slot in 0..self.len() {
            let mut b = hash_key(self.key(slot)) & self.mask;
            while self.buckets[b] != EMPTY {
                b = (b + 1) & self.mask;
            }
            self.buckets[b] = slot as u32;
        }
    }
}
