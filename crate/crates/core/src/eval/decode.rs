//! Best-span search under `begin ≤ end`.

use std::collections::VecDeque;

use crate::model::BoundaryDistributions;
use crate::tensor::Real;
use crate::text::Span;

/// Highest `p_begin[b] · p_end[e]` over `b ≤ e` (and `e − b < max_span_len`
/// when set), in one pass. Ties go to the smallest `b`, then the smallest `e`.
/// Returns `None` for an empty passage.
pub fn decode_span(
    dists: &BoundaryDistributions,
    max_span_len: Option<usize>,
) -> Option<(Span, Real)> {
    let (pb, pe) = (&dists.p_begin, &dists.p_end);
    let n = pb.len().min(pe.len());
    let window = max_span_len.unwrap_or(n).max(1);
    // earliest index of the window maximum sits at the front
    let mut candidates: VecDeque<usize> = VecDeque::new();
    let mut best: Option<(usize, usize, Real)> = None;
    for e in 0..n {
        while candidates.back().is_some_and(|&i| pb[i] < pb[e]) {
            candidates.pop_back();
        }
        candidates.push_back(e);
        let start = (e + 1).saturating_sub(window);
        while candidates.front().is_some_and(|&i| i < start) {
            candidates.pop_front();
        }
        let b = if pe[e] == 0.0 { start } else { candidates[0] };
        let score = pb[b] * pe[e];
        let better = match best {
            None => true,
            Some((bb, _, bs)) => score > bs || (score == bs && b < bb),
        };
        if better {
            best = Some((b, e, score));
        }
    }
    best.map(|(b, e, s)| (Span::new(b + 1, e + 1), s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(pb: &[Real], pe: &[Real]) -> BoundaryDistributions {
        BoundaryDistributions {
            p_begin: pb.to_vec(),
            p_end: pe.to_vec(),
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(
            decode_span(&d(&[1.0, 0.0], &[0.0, 1.0]), None),
            Some((Span::new(1, 2), 1.0))
        );
        let (span, p) = decode_span(&d(&[0.1, 0.9], &[0.9, 0.1]), None).unwrap();
        assert_eq!(span, Span::new(1, 1));
        assert!((p - 0.09).abs() < 4.0 * Real::EPSILON);
        assert_eq!(decode_span(&d(&[], &[]), None), None);
    }

    #[test]
    fn span_cap() {
        let dists = d(&[0.9, 0.05, 0.05], &[0.05, 0.05, 0.9]);
        assert_eq!(decode_span(&dists, None).unwrap().0, Span::new(1, 3));
        assert_eq!(decode_span(&dists, Some(2)).unwrap().0, Span::new(1, 1));
        assert_eq!(decode_span(&dists, Some(1)).unwrap().0, Span::new(1, 1));
    }

    #[test]
    fn zero_end_probability_prefers_earliest_begin() {
        let dists = d(&[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(decode_span(&dists, None), Some((Span::new(1, 1), 0.0)));
    }
}
