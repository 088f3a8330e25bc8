use std::collections::BTreeMap;

/// Above this many matched unigrams the fewest-chunks alignment is
/// approximated greedily instead of searched exhaustively.
pub const EXHAUSTIVE_CHUNK_SEARCH_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorDetails {
    pub matched: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_mean: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Exact-match METEOR: `F_mean · (1 − 0.5 · (chunks / matched)³)` with
/// `F_mean = 10PR / (R + 9P)`.
pub fn meteor<T: Ord>(candidate: &[T], reference: &[T]) -> f64 {
    meteor_details(candidate, reference).score
}

pub fn meteor_details<T: Ord>(candidate: &[T], reference: &[T]) -> MeteorDetails {
    let mut quota: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for w in candidate {
        quota.entry(w).or_default().0 += 1;
    }
    for w in reference {
        quota.entry(w).or_default().1 += 1;
    }
    let matched: usize = quota.values().map(|&(c, r)| c.min(r)).sum();
    if matched == 0 {
        return MeteorDetails {
            matched: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            f_mean: 0.0,
            penalty: 0.0,
            score: 0.0,
        };
    }

    let chunks = if matched <= EXHAUSTIVE_CHUNK_SEARCH_LIMIT {
        ChunkSearch::new(candidate, reference).min_chunks()
    } else {
        greedy_chunks(candidate, reference)
    };

    let precision = matched as f64 / candidate.len() as f64;
    let recall = matched as f64 / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / matched as f64).powi(3);
    MeteorDetails {
        matched,
        chunks,
        precision,
        recall,
        f_mean,
        penalty,
        score: f_mean * (1.0 - penalty),
    }
}

/// Number of runs of matched pairs that are adjacent in both sequences,
/// with pairs listed in candidate order.
fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut last: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        if last != Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
            chunks += 1;
        }
        last = Some((i, j));
    }
    chunks
}

/// Match candidate words left to right, extending the current chunk when the
/// next reference position fits, otherwise taking the earliest free occurrence.
fn greedy_chunks<T: Ord>(candidate: &[T], reference: &[T]) -> usize {
    let mut remaining: BTreeMap<&T, usize> = BTreeMap::new();
    for w in reference {
        *remaining.entry(w).or_default() += 1;
    }
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut last_j: Option<usize> = None;
    for (i, w) in candidate.iter().enumerate() {
        let Some(left) = remaining.get_mut(w) else { continue };
        if *left == 0 {
            continue;
        }
        let next = last_j.map(|j| j + 1).filter(|&j| j < reference.len() && !used[j] && reference[j] == *w);
        let j = next.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *w));
        if let Some(j) = j {
            used[j] = true;
            *left -= 1;
            pairs.push((i, j));
            last_j = Some(j);
        }
    }
    count_chunks(&pairs)
}

/// Branch-and-bound over maximum-cardinality alignments.
struct ChunkSearch<'a, T> {
    candidate: &'a [T],
    /// For each candidate position, the reference positions holding the same word.
    options: Vec<Vec<usize>>,
    word_of: Vec<usize>,
    /// Per word: matches still owed to reach `min(count_c, count_r)`.
    need: Vec<usize>,
    /// Per word: candidate occurrences not yet visited.
    left_in_candidate: Vec<usize>,
    used: Vec<bool>,
    best: usize,
}

impl<'a, T: Ord> ChunkSearch<'a, T> {
    fn new(candidate: &'a [T], reference: &'a [T]) -> Self {
        let mut ids: BTreeMap<&T, usize> = BTreeMap::new();
        for w in candidate.iter().chain(reference) {
            let n = ids.len();
            ids.entry(w).or_insert(n);
        }
        let word_of: Vec<usize> = candidate.iter().map(|w| ids[w]).collect();
        let mut cand_count = vec![0usize; ids.len()];
        let mut ref_count = vec![0usize; ids.len()];
        for w in candidate {
            cand_count[ids[w]] += 1;
        }
        for w in reference {
            ref_count[ids[w]] += 1;
        }
        let need = cand_count.iter().zip(&ref_count).map(|(&c, &r)| c.min(r)).collect();
        let options = candidate
            .iter()
            .map(|w| (0..reference.len()).filter(|&j| reference[j] == *w).collect())
            .collect();
        Self {
            candidate,
            options,
            word_of,
            need,
            left_in_candidate: cand_count,
            used: vec![false; reference.len()],
            best: usize::MAX,
        }
    }

    fn min_chunks(mut self) -> usize {
        self.search(0, None, 0);
        self.best
    }

    fn search(&mut self, i: usize, last: Option<(usize, usize)>, chunks: usize) {
        if chunks >= self.best {
            return;
        }
        if i == self.candidate.len() {
            self.best = chunks;
            return;
        }
        let w = self.word_of[i];
        self.left_in_candidate[w] -= 1;

        if self.need[w] > 0 {
            self.need[w] -= 1;
            // Try the chunk-extending position first so good bounds come early.
            let extend = last.filter(|&(li, _)| li + 1 == i).map(|(_, lj)| lj + 1);
            let mut order: Vec<usize> = self.options[i].clone();
            if let Some(e) = extend {
                if let Some(p) = order.iter().position(|&j| j == e) {
                    order.remove(p);
                    order.insert(0, e);
                }
            }
            for j in order {
                if self.used[j] {
                    continue;
                }
                self.used[j] = true;
                let new_chunk = last != Some((i.wrapping_sub(1), j.wrapping_sub(1)));
                self.search(i + 1, Some((i, j)), chunks + usize::from(new_chunk));
                self.used[j] = false;
            }
            self.need[w] += 1;
        }
        // Skipping is allowed only if the remaining occurrences can still fill the quota.
        if self.left_in_candidate[w] >= self.need[w] {
            self.search(i + 1, last, chunks);
        }
        self.left_in_candidate[w] += 1;
    }
}
