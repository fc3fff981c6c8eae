use std::collections::{BTreeSet, HashMap};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::EnterpriseRecord;

/// Sorted set of observed category values. Slot `len()` is the reserved
/// "other" slot for values outside the vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    values: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl JsonSchema for Vocabulary {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Vocabulary".into()
    }

    fn json_schema(gen: &mut schemars::SchemaGenerator) -> schemars::Schema {
        <Vec<String>>::json_schema(gen)
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(values: Vec<String>) -> Self {
        Self::from_values(values)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.values
    }
}

impl Vocabulary {
    pub fn from_values<I: IntoIterator<Item = S>, S: Into<String>>(values: I) -> Self {
        let sorted: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        let values: Vec<String> = sorted.into_iter().collect();
        let lookup = values.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        Self { values, lookup }
    }

    /// Number of known values, excluding the "other" slot.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    /// Slot of `value`; unknown values map to the "other" slot.
    pub fn slot(&self, value: &str) -> usize {
        self.lookup.get(value).copied().unwrap_or(self.values.len())
    }

    pub fn one_hot(&self, value: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.values.len() + 1];
        v[self.slot(value)] = 1.0;
        v
    }
}

/// Dataset-level vocabularies for the categorical record fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CategoryDictionary {
    pub classification_code: Vocabulary,
    pub property: Vocabulary,
    pub state: Vocabulary,
    pub credit_rating: Vocabulary,
}

impl CategoryDictionary {
    pub fn build(records: &[EnterpriseRecord]) -> Self {
        Self {
            classification_code: Vocabulary::from_values(records.iter().map(|r| r.classification_code.as_str())),
            property: Vocabulary::from_values(records.iter().map(|r| r.property.as_str())),
            state: Vocabulary::from_values(records.iter().map(|r| r.state.as_str())),
            credit_rating: Vocabulary::from_values(records.iter().map(|r| r.credit_rating.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    pub classification_code: Vec<f64>,
    pub property: Vec<f64>,
    pub state: Vec<f64>,
    pub credit_rating: Vec<f64>,
}

pub fn encode_categorical(record: &EnterpriseRecord, dict: &CategoryDictionary) -> OneHot {
    OneHot {
        classification_code: dict.classification_code.one_hot(&record.classification_code),
        property: dict.property.one_hot(&record.property),
        state: dict.state.one_hot(&record.state),
        credit_rating: dict.credit_rating.one_hot(&record.credit_rating),
    }
}

/// Ordinal credit scale, listed from worst to best. The code of a rating is
/// its 1-based position; ratings outside the scale have no code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CreditScale(pub Vec<String>);

impl Default for CreditScale {
    fn default() -> Self {
        Self(["D", "C", "B", "A"].iter().map(|s| s.to_string()).collect())
    }
}

impl CreditScale {
    pub fn code(&self, rating: &str) -> Option<f64> {
        self.0.iter().position(|r| r == rating).map(|p| (p + 1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Tier, SURVIVING_STATE};

    fn record(code: &str) -> EnterpriseRecord {
        EnterpriseRecord {
            id: code.into(),
            name: None,
            lon: 0.0,
            lat: 0.0,
            start_date: "2000-01-01".parse().unwrap(),
            end_date: None,
            tier: Tier::Secondary,
            classification_code: code.into(),
            registered_capital: 1.0,
            credit_rating: "A".into(),
            property: "private".into(),
            state: SURVIVING_STATE.into(),
        }
    }

    #[test]
    fn known_value_is_unit_vector() {
        let vocab = Vocabulary::from_values(["A", "B", "C"]);
        assert_eq!(vocab.one_hot("B"), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_value_goes_to_other() {
        let vocab = Vocabulary::from_values(["A", "B", "C"]);
        assert_eq!(vocab.one_hot("Z"), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn dictionary_counts_seen_categories() {
        let records = vec![record("C13"), record("F51"), record("C13")];
        let dict = CategoryDictionary::build(&records);
        assert_eq!(dict.classification_code.len(), 2);
        let enc = encode_categorical(&records[1], &dict);
        assert_eq!(enc.classification_code, vec![0.0, 1.0, 0.0]);
        assert_eq!(enc.property, vec![1.0, 0.0]);
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let vocab = Vocabulary::from_values(["b", "a"]);
        let json = serde_json::to_string(&vocab).unwrap();
        assert_eq!(json, r#"["a","b"]"#);
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.slot("b"), 1);
    }

    #[test]
    fn credit_codes() {
        let scale = CreditScale::default();
        assert_eq!(scale.code("D"), Some(1.0));
        assert_eq!(scale.code("A"), Some(4.0));
        assert_eq!(scale.code("AAA"), None);
    }

    proptest::proptest! {
        #[test]
        fn one_hot_has_single_one(values in proptest::collection::vec("[a-e]", 1..8), probe in "[a-g]") {
            let vocab = Vocabulary::from_values(values);
            let v = vocab.one_hot(&probe);
            proptest::prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
            proptest::prop_assert_eq!(v.iter().sum::<f64>(), 1.0);
        }
    }
}
