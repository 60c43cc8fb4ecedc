//! Ordered multi-indices stored as axis bitmasks.

use alloc::vec::Vec;

/// Axis bitmasks with `r` bits out of `n`, in lexicographic order of the
/// sorted axis lists (so `{0,1} < {0,2} < {1,2}`).
pub fn subsets(n: usize, r: usize) -> Vec<u8> {
    let mut out = Vec::new();
    fn rec(n: usize, r: usize, start: usize, acc: u8, out: &mut Vec<u8>) {
        if r == 0 {
            out.push(acc);
            return;
        }
        for a in start..n {
            rec(n, r - 1, a + 1, acc | 1 << a, out);
        }
    }
    if r <= n {
        rec(n, r, 0, 0, &mut out);
    }
    out
}

pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let mut c = 1usize;
    for k in 0..r {
        c = c * (n - k) / (k + 1);
    }
    c
}

/// Position of `mask` in `subsets(n, mask.count_ones())`.
pub fn rank(n: usize, mask: u8) -> usize {
    let r = mask.count_ones() as usize;
    subsets(n, r).iter().position(|&m| m == mask).expect("mask within n axes")
}

pub fn axes(mask: u8) -> impl Iterator<Item = usize> {
    (0..8).filter(move |a| mask >> a & 1 == 1)
}

/// Number of axes of `mask` smaller than `axis`.
pub fn position(mask: u8, axis: usize) -> usize {
    (mask & ((1u8 << axis) - 1)).count_ones() as usize
}

/// Sign of the permutation sorting the concatenation `a ++ b` (both sorted),
/// or 0 when they overlap.
pub fn merge_sign(a: u8, b: u8) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    let mut inversions = 0;
    for i in axes(a) {
        inversions += (b & ((1u8 << i) - 1)).count_ones();
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign and sorted mask of an arbitrary index sequence; sign 0 on repeats.
pub fn sort_sign(idx: &[usize]) -> (f64, u8) {
    let mut mask = 0u8;
    let mut inversions = 0;
    for (k, &i) in idx.iter().enumerate() {
        if mask >> i & 1 == 1 {
            return (0.0, 0);
        }
        mask |= 1 << i;
        inversions += idx[k + 1..].iter().filter(|&&j| j < i).count();
    }
    (if inversions % 2 == 0 { 1.0 } else { -1.0 }, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_counts() {
        assert_eq!(subsets(3, 2), [0b011, 0b101, 0b110]);
        assert_eq!(subsets(3, 0), [0]);
        for n in 1..=3 {
            for r in 0..=n {
                assert_eq!(subsets(n, r).len(), binomial(n, r));
            }
        }
        assert_eq!(rank(3, 0b110), 2);
    }

    #[test]
    fn signs() {
        assert_eq!(merge_sign(0b010, 0b001), -1.0);
        assert_eq!(merge_sign(0b001, 0b010), 1.0);
        assert_eq!(merge_sign(0b011, 0b011), 0.0);
        assert_eq!(sort_sign(&[2, 0, 1]), (1.0, 0b111));
        assert_eq!(sort_sign(&[1, 0]), (-1.0, 0b11));
        assert_eq!(sort_sign(&[1, 1]).0, 0.0);
        assert_eq!(position(0b101, 2), 1);
    }
}
