//! Term identity and the deterministic ordering used by every stage.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Normalizes a raw term name: Unicode NFC, then surrounding whitespace
/// trimmed. Case is preserved.
pub fn normalize_term(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TermError {
    #[error("term name is empty after normalization")]
    Empty,
    #[error("duplicate term {0:?}")]
    Duplicate(String),
}

/// A term together with its (possibly refined) definition and its unit
/// embedding once one has been computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl TermRecord {
    pub fn new(name: &str, definition: impl Into<String>) -> Result<Self, TermError> {
        let name = normalize_term(name);
        if name.is_empty() {
            return Err(TermError::Empty);
        }
        Ok(TermRecord {
            name,
            definition: definition.into(),
            embedding: None,
        })
    }

    /// Text fed to the embedding model: `name: definition`.
    pub fn embedding_text(&self) -> String {
        format!("{}: {}", self.name, self.definition)
    }
}

/// Compares two (name, optional score) items: higher score first, then
/// lexicographic byte order of the name. Items without a score sort after
/// scored ones.
pub fn canonical_cmp(a: (&str, Option<f64>), b: (&str, Option<f64>)) -> Ordering {
    let by_score = match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_score.then_with(|| a.0.as_bytes().cmp(b.0.as_bytes()))
}

/// Sorts unscored term names into canonical order. Duplicates are rejected
/// rather than merged.
pub fn canonical_order(terms: &[String]) -> Result<Vec<String>, TermError> {
    let mut seen = BTreeSet::new();
    for t in terms {
        if !seen.insert(t.as_str()) {
            return Err(TermError::Duplicate(t.clone()));
        }
    }
    let mut out = terms.to_vec();
    out.sort_by(|a, b| canonical_cmp((a, None), (b, None)));
    Ok(out)
}

/// Sorts scored items in canonical order (score desc, then name).
pub fn sort_scored<T>(items: &mut [(String, T)])
where
    T: Copy + Into<f64>,
{
    items.sort_by(|a, b| canonical_cmp((&a.0, Some(a.1.into())), (&b.0, Some(b.1.into()))));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn duplicate_is_an_error() {
        assert_eq!(
            canonical_order(&names(&["b", "a", "a"])),
            Err(TermError::Duplicate("a".into()))
        );
    }

    #[test]
    fn lexicographic_and_empty() {
        assert_eq!(canonical_order(&names(&["b", "a"])).unwrap(), names(&["a", "b"]));
        assert!(canonical_order(&[]).unwrap().is_empty());
    }

    #[test]
    fn normalization_trims_and_composes_but_keeps_case() {
        assert_eq!(normalize_term("  Cafe\u{301} "), "Caf\u{e9}");
        assert_eq!(normalize_term("Maple"), "Maple");
        assert!(TermRecord::new("   ", "").is_err());
    }

    #[test]
    fn scored_items_sort_by_score_then_name() {
        let mut items = vec![("b".to_string(), 0.5), ("a".to_string(), 0.5), ("c".to_string(), 0.9)];
        sort_scored(&mut items);
        let order: Vec<_> = items.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    fn item() -> impl Strategy<Value = (String, Option<f64>)> {
        ("[a-c]{0,3}", proptest::option::of(prop_oneof![Just(0.5), Just(0.25), 0.0..1.0f64]))
    }

    proptest! {
        #[test]
        fn canonical_cmp_is_a_total_order(a in item(), b in item(), c in item()) {
            let cmp = |x: &(String, Option<f64>), y: &(String, Option<f64>)| {
                canonical_cmp((&x.0, x.1), (&y.0, y.1))
            };
            prop_assert_eq!(cmp(&a, &b), cmp(&b, &a).reverse());
            if cmp(&a, &b) != Ordering::Greater && cmp(&b, &c) != Ordering::Greater {
                prop_assert_ne!(cmp(&a, &c), Ordering::Greater);
            }
        }

        #[test]
        fn canonical_order_is_idempotent(set in proptest::collection::btree_set("[a-z]{1,4}", 0..12)) {
            let mut v: Vec<String> = set.into_iter().collect();
            v.reverse();
            let once = canonical_order(&v).unwrap();
            prop_assert_eq!(canonical_order(&once).unwrap(), once);
        }
    }
}
