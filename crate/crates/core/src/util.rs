//! Small shared helpers.

/// Disjoint-set forest with path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Index of the first maximum, treating values within `tol` of the maximum
/// as tied.
pub fn first_argmax(values: &[f64], tol: f64) -> usize {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= m - tol).unwrap_or(0)
}

/// Mixed-radix decoding: variable 0 is the most significant digit, so
/// increasing indices enumerate assignments in lexicographic order.
pub fn decode_index(mut index: u128, radices: &[usize], out: &mut [usize]) {
    for (slot, &k) in out.iter_mut().zip(radices).rev() {
        *slot = (index % k as u128) as usize;
        index /= k as u128;
    }
}

/// Advances `x` to the next assignment in lexicographic order; false on wrap.
#[inline]
pub fn increment(x: &mut [usize], radices: &[usize]) -> bool {
    for (slot, &k) in x.iter_mut().zip(radices).rev() {
        *slot += 1;
        if *slot < k {
            return true;
        }
        *slot = 0;
    }
    false
}
