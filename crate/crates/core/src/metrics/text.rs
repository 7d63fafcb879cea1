use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub distance: usize,
}

/// Levenshtein alignment of `hyp` against `reference`. When several
/// alignments are optimal, substitutions beat deletions beat insertions.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = EditOps {
        distance: d[n * w + m],
        ..EditOps::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let differ = reference[i - 1] != hyp[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(differ) == here {
                ops.substitutions += usize::from(differ);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

/// Lowercase; anything outside `[a-z0-9']` becomes a space; whitespace collapsed.
pub fn normalize_text(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '\'' {
                c
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Edits and reference length, for pooling across a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub edits: usize,
    pub ref_len: usize,
}

impl ErrorCounts {
    pub fn rate(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::UndefinedMetric("reference is empty".into()));
        }
        Ok(self.edits as f64 / self.ref_len as f64)
    }

    pub fn merge(self, other: ErrorCounts) -> ErrorCounts {
        ErrorCounts {
            edits: self.edits + other.edits,
            ref_len: self.ref_len + other.ref_len,
        }
    }
}

pub fn word_counts(reference: &str, hyp: &str) -> Result<ErrorCounts> {
    let r = normalize_text(reference);
    let h = normalize_text(hyp);
    let rt: Vec<&str> = r.split(' ').filter(|s| !s.is_empty()).collect();
    let ht: Vec<&str> = h.split(' ').filter(|s| !s.is_empty()).collect();
    if rt.is_empty() {
        return Err(Error::UndefinedMetric("reference has no words after normalization".into()));
    }
    Ok(ErrorCounts {
        edits: edit_distance(&rt, &ht).distance,
        ref_len: rt.len(),
    })
}

pub fn char_counts(reference: &str, hyp: &str) -> Result<ErrorCounts> {
    let rc: Vec<char> = normalize_text(reference).chars().collect();
    let hc: Vec<char> = normalize_text(hyp).chars().collect();
    if rc.is_empty() {
        return Err(Error::UndefinedMetric("reference has no characters after normalization".into()));
    }
    Ok(ErrorCounts {
        edits: edit_distance(&rc, &hc).distance,
        ref_len: rc.len(),
    })
}

pub fn wer(reference: &str, hyp: &str) -> Result<f64> {
    word_counts(reference, hyp)?.rate()
}

pub fn cer(reference: &str, hyp: &str) -> Result<f64> {
    char_counts(reference, hyp)?.rate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        let e = edit_distance(&words("a b c"), &words("a b c"));
        assert_eq!(e, EditOps::default());
        assert_eq!(wer("The cat.", "the CAT").unwrap(), 0.0);
    }

    #[test]
    fn dropped_word_is_one_deletion() {
        let e = edit_distance(&words("the cat sat"), &words("the cat"));
        assert_eq!((e.deletions, e.substitutions, e.insertions, e.distance), (1, 0, 0, 1));
        assert!((wer("the cat sat", "the cat").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_reference_cases() {
        let e = edit_distance::<char>(&[], &['a', 'b', 'c']);
        assert_eq!((e.insertions, e.distance), (3, 3));
        assert!(matches!(wer("", "x"), Err(Error::UndefinedMetric(_))));
        assert!(matches!(cer("?!", "x"), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn tie_break_prefers_substitution() {
        // "ab" -> "ba": two substitutions or one deletion plus one insertion.
        let e = edit_distance(&['a', 'b'], &['b', 'a']);
        assert_eq!((e.substitutions, e.deletions, e.insertions), (2, 0, 0));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Don't STOP,now!  "), "don't stop now");
        assert_eq!(normalize_text("a\t\nb"), "a b");
        assert!((cer("ab cd", "ab ce").unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn wer_can_exceed_one() {
        assert_eq!(wer("a", "b c d").unwrap(), 3.0);
    }
}
