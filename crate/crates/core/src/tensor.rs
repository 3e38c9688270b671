//! Flat index helpers for frame tensors of a fixed dimension `n`.

#[inline]
pub fn i3(n: usize, a: usize, b: usize, c: usize) -> usize {
    (a * n + b) * n + c
}

#[inline]
pub fn i4(n: usize, a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * n + b) * n + c) * n + d
}

#[inline]
pub fn i5(n: usize, a: usize, b: usize, c: usize, d: usize, e: usize) -> usize {
    (((a * n + b) * n + c) * n + d) * n + e
}
