/// Signed offset `i − j` between a query index and a key index.
#[inline]
pub fn relative_offset(i: usize, j: usize) -> isize {
    i as isize - j as isize
}

/// Row index into a `(2·clip + 1)`-row Shaw table for key offset `j − i`.
#[inline]
pub fn shaw_index(i: usize, j: usize, clip: usize) -> usize {
    let c = clip as isize;
    ((j as isize - i as isize).clamp(-c, c) + c) as usize
}

/// Index into a DIET-REL table of length `2n − 1` for offset `i − j`.
#[inline]
pub fn rel_index(i: usize, j: usize, n: usize) -> usize {
    (relative_offset(i, j) + n as isize - 1) as usize
}

/// Log-binned bucket of a signed offset.
///
/// Non-positive offsets use buckets `[0, num_buckets/2)`, positive offsets the
/// upper half. Within a half, magnitudes below `num_buckets/4` get their own
/// bucket, larger ones are spaced logarithmically up to `max_distance` and
/// everything beyond lands in the last bucket of the half.
pub fn t5_bucket(offset: isize, num_buckets: usize, max_distance: usize) -> usize {
    let half = num_buckets / 2;
    let base = if offset > 0 { half } else { 0 };
    let mag = offset.unsigned_abs();
    let exact = half / 2;
    if mag < exact {
        return base + mag;
    }
    let log_ratio = (mag as f64 / exact as f64).ln() / (max_distance as f64 / exact as f64).ln();
    let b = exact + (log_ratio * (half - exact) as f64) as usize;
    base + b.min(half - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets() {
        assert_eq!(relative_offset(5, 5), 0);
        assert_eq!(relative_offset(0, 7), -7);
        assert_eq!(relative_offset(7, 0), 7);
    }

    #[test]
    fn bucket_anchor_and_clamp() {
        assert_eq!(t5_bucket(0, 32, 128), 0);
        assert_eq!(t5_bucket(-1000, 32, 128), 15);
        assert_eq!(t5_bucket(1000, 32, 128), 31);
        assert_eq!(t5_bucket(-3, 32, 128), 3);
        assert_eq!(t5_bucket(3, 32, 128), 19);
    }

    #[test]
    fn buckets_are_in_range_and_monotone() {
        let (n, nb, maxd) = (128isize, 32usize, 128usize);
        for sign in [-1isize, 1] {
            let mut prev = None;
            for mag in 0..n {
                let b = t5_bucket(sign * mag, nb, maxd);
                assert!(b < nb);
                if mag > 0 {
                    let half = if sign > 0 { nb / 2..nb } else { 0..nb / 2 };
                    assert!(half.contains(&b), "offset {} -> {b}", sign * mag);
                }
                if let Some(p) = prev {
                    assert!(b >= p, "not monotone at {}", sign * mag);
                }
                prev = Some(b);
            }
        }
    }

    #[test]
    fn shaw_clamps_symmetrically() {
        assert_eq!(shaw_index(0, 0, 2), 2);
        assert_eq!(shaw_index(0, 9, 2), 4);
        assert_eq!(shaw_index(9, 0, 2), 0);
        assert_eq!(shaw_index(3, 2, 2), 1);
    }
}
