//! Permutation-resolved word error rate over transcript sets.

use super::MetricError;
use crate::objective::for_each_permutation;

const PERM_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct WerResult {
    /// Total edits over total reference words under the best assignment.
    pub wer: f64,
    /// Hypothesis i is scored against reference `permutation[i]`.
    pub permutation: Vec<usize>,
    pub edits: usize,
    pub ref_words: usize,
}

/// Word-level edit distance (insertions, deletions, substitutions all
/// cost 1).
pub fn levenshtein(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, wa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, wb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(wa != wb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// WER minimized over hypothesis-to-reference assignments. Transcripts are
/// split on whitespace; ties keep the lexicographically first permutation.
pub fn perm_wer<S: AsRef<str>>(hyps: &[S], refs: &[S]) -> Result<WerResult, MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::SourceCountMismatch(hyps.len(), refs.len()));
    }
    let n = refs.len();
    if n == 0 {
        return Err(MetricError::InvalidParameter("empty transcript set".into()));
    }
    if n > PERM_LIMIT {
        return Err(MetricError::TooManySources { sources: n, limit: PERM_LIMIT });
    }
    let hyp_tokens: Vec<Vec<&str>> =
        hyps.iter().map(|s| s.as_ref().split_whitespace().collect()).collect();
    let ref_tokens: Vec<Vec<&str>> =
        refs.iter().map(|s| s.as_ref().split_whitespace().collect()).collect();

    let mut edits = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in 0..n {
            edits[i][j] = levenshtein(&hyp_tokens[i], &ref_tokens[j]);
        }
    }

    let mut best: Option<(usize, Vec<usize>)> = None;
    for_each_permutation(n, |perm| {
        let total: usize = perm.iter().enumerate().map(|(i, &j)| edits[i][j]).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, perm.to_vec()));
        }
    });
    let (total_edits, permutation) = best.expect("at least one permutation");
    let ref_words: usize = ref_tokens.iter().map(Vec::len).sum();
    let wer = if total_edits == 0 && ref_words == 0 {
        0.0
    } else {
        total_edits as f64 / ref_words as f64
    };
    Ok(WerResult { wer, permutation, edits: total_edits, ref_words })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_transcripts_have_zero_wer() {
        let r = ["the cat sat", "a dog ran"];
        let out = perm_wer(&r, &r).unwrap();
        assert_eq!(out.wer, 0.0);
        assert_eq!(out.permutation, vec![0, 1]);
        assert_eq!(out.ref_words, 6);
    }

    #[test]
    fn swapped_hypotheses_recover_the_permutation() {
        let refs = ["the cat sat down", "a dog ran away"];
        let hyps = ["a dog ran away", "the cat sat down"];
        let out = perm_wer(&hyps, &refs).unwrap();
        assert_eq!(out.permutation, vec![1, 0]);
        assert_eq!(out.wer, 0.0);
    }

    #[test]
    fn single_substitution_counts_once() {
        let out = perm_wer(&["the cat sat"], &["the cat ran"]).unwrap();
        assert_eq!(out.edits, 1);
        assert!((out.wer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn insertions_and_deletions_count() {
        // One insertion against ref 0, one deletion against ref 1.
        let out = perm_wer(&["a b c d", "x z"], &["a b c", "x y z"]).unwrap();
        assert_eq!(out.edits, 2);
        assert_eq!(out.ref_words, 6);
        assert!((out.wer - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_against_empty_is_zero() {
        let out = perm_wer(&[""], &[""]).unwrap();
        assert_eq!(out.wer, 0.0);
        assert_eq!(out.ref_words, 0);
    }

    #[test]
    fn hypothesis_against_empty_reference_counts_insertions() {
        let out = perm_wer(&["one two"], &[""]).unwrap();
        assert_eq!(out.edits, 2);
        assert!(out.wer.is_infinite());
    }

    #[test]
    fn levenshtein_textbook_example() {
        let a: Vec<&str> = "kitten sitting k".split_whitespace().collect();
        let b: Vec<&str> = "sitting kitten".split_whitespace().collect();
        // Delete "kitten", keep "sitting", substitute "k" -> "kitten".
        assert_eq!(levenshtein(&a, &b), 2);
        assert_eq!(levenshtein(&a, &a), 0);
        assert_eq!(levenshtein(&[], &b), 2);
        assert_eq!(levenshtein(&a, &[]), 3);
    }

    #[test]
    fn matches_exhaustive_assignment_search() {
        // Deterministic pseudo-random word soup, checked against an
        // independent recursive enumeration.
        let vocab = ["aa", "bb", "cc", "dd"];
        let mut state = 77u64;
        let mut word = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            vocab[(state >> 33) as usize % vocab.len()]
        };
        for _ in 0..20 {
            let make = |w: &mut dyn FnMut() -> &'static str| -> Vec<String> {
                (0..4)
                    .map(|_| (0..5).map(|_| w()).collect::<Vec<_>>().join(" "))
                    .collect()
            };
            let hyps = make(&mut word);
            let refs = make(&mut word);
            let out = perm_wer(&hyps, &refs).unwrap();

            let mut best = usize::MAX;
            let idx = [0usize, 1, 2, 3];
            let mut stack = vec![(Vec::<usize>::new(), idx.to_vec())];
            while let Some((perm, rest)) = stack.pop() {
                if rest.is_empty() {
                    let total: usize = perm
                        .iter()
                        .enumerate()
                        .map(|(i, &j)| {
                            let h: Vec<&str> = hyps[i].split_whitespace().collect();
                            let r: Vec<&str> = refs[j].split_whitespace().collect();
                            levenshtein(&h, &r)
                        })
                        .sum();
                    best = best.min(total);
                    continue;
                }
                for (k, &j) in rest.iter().enumerate() {
                    let mut p = perm.clone();
                    p.push(j);
                    let mut r = rest.clone();
                    r.remove(k);
                    stack.push((p, r));
                }
            }
            assert_eq!(out.edits, best);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            perm_wer(&["a"], &["a", "b"]),
            Err(MetricError::SourceCountMismatch(..))
        ));
        let empty: [&str; 0] = [];
        assert!(matches!(perm_wer(&empty, &empty), Err(MetricError::InvalidParameter(_))));
        let many = ["w"; 9];
        assert!(matches!(perm_wer(&many, &many), Err(MetricError::TooManySources { .. })));
    }
}
