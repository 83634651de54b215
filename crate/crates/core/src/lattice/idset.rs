/// A dense bit-vector over side-local vertex ids.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdSet {
    words: Vec<u64>,
    universe: usize,
}

impl IdSet {
    pub fn new(universe: usize) -> Self {
        IdSet { words: vec![0; universe.div_ceil(64)], universe }
    }

    pub fn from_ids(universe: usize, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut s = IdSet::new(universe);
        for id in ids {
            s.insert(id);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn insert(&mut self, id: u32) -> bool {
        let (w, b) = (id as usize / 64, id % 64);
        assert!((id as usize) < self.universe, "id {id} outside universe {}", self.universe);
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }

    pub fn remove(&mut self, id: u32) {
        self.words[id as usize / 64] &= !(1 << (id % 64));
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.universe && self.words[id as usize / 64] & (1 << (id % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &IdSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersects(&self, other: &IdSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Ascending iteration.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros();
                w &= w - 1;
                Some(i as u32 * 64 + b)
            })
        })
    }

    /// The low word, for universes of at most 64 ids.
    pub fn as_mask(&self) -> Option<u64> {
        (self.universe <= 64).then(|| self.words.first().copied().unwrap_or(0))
    }
}

impl std::fmt::Debug for IdSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_ops() {
        let mut a = IdSet::from_ids(130, [0, 5, 64, 129]);
        assert_eq!(a.len(), 4);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 5, 64, 129]);
        let b = IdSet::from_ids(130, [5]);
        assert!(b.is_subset(&a));
        assert!(a.intersects(&b));
        a.remove(5);
        assert!(!a.intersects(&b));
        assert!(a.as_mask().is_none());
        assert_eq!(IdSet::from_ids(10, [1, 3]).as_mask(), Some(0b1010));
    }
}
