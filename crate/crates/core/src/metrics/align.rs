/// Best global alignment score of sequences of lengths `n` and `m` with
/// substitution score `sub(i, j)` and a constant per-position `gap` score.
pub fn needleman_wunsch(n: usize, m: usize, sub: impl Fn(usize, usize) -> f64, gap: f64) -> f64 {
    let mut prev: Vec<f64> = (0..=m).map(|j| j as f64 * gap).collect();
    let mut cur = vec![0.0; m + 1];
    for i in 1..=n {
        cur[0] = i as f64 * gap;
        for j in 1..=m {
            cur[j] = (prev[j - 1] + sub(i - 1, j - 1))
                .max(prev[j] + gap)
                .max(cur[j - 1] + gap);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_edit_distances() {
        let s = |x: &str| x.chars().collect::<Vec<_>>();
        assert_eq!(levenshtein(&s("kitten"), &s("sitting")), 3);
        assert_eq!(levenshtein(&s("flaw"), &s("lawn")), 2);
        assert_eq!(levenshtein(&s(""), &s("abc")), 3);
        assert_eq!(levenshtein(&s("abc"), &s("abc")), 0);
    }

    #[test]
    fn lcs_via_alignment() {
        let a = b"1123";
        let b = b"123";
        let score = needleman_wunsch(4, 3, |i, j| f64::from(u8::from(a[i] == b[j])), 0.0);
        assert_eq!(score, 3.0);
    }

    #[test]
    fn gap_penalty_applies() {
        assert_eq!(needleman_wunsch(2, 0, |_, _| 0.0, -1.0), -2.0);
    }
}
