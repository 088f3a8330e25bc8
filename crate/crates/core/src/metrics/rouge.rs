use super::Prf;

/// Clipped n-gram overlap. Each distinct n-gram matches
/// `min(count in candidate, count in reference)` times.
pub fn rouge_n<T: Ord>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    assert!(n >= 1, "n-gram order must be at least 1");
    let mut cand: Vec<&[T]> = candidate.windows(n).collect();
    let mut refs: Vec<&[T]> = reference.windows(n).collect();
    cand.sort_unstable();
    refs.sort_unstable();

    // Merge the two sorted lists; equal runs contribute their smaller length.
    let (mut i, mut j, mut matched) = (0, 0, 0usize);
    while i < cand.len() && j < refs.len() {
        match cand[i].cmp(refs[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                matched += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Prf::new(ratio(matched, refs.len()), ratio(matched, cand.len()))
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Summary-level ROUGE-L over flat token sequences.
pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Prf {
    let l = lcs_len(candidate, reference);
    Prf::new(ratio(l, reference.len()), ratio(l, candidate.len()))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
