use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub dtype: String,
}

/// A table captured at a point of execution. `rows` may hold a prefix of
/// the table; `total_rows` is the full length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataframeSnapshot {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Value>>,
    pub total_rows: u64,
    pub truncated: bool,
}

impl DataframeSnapshot {
    pub fn empty(columns: Vec<Column>) -> Self {
        DataframeSnapshot { columns, rows: Vec::new(), total_rows: 0, truncated: false }
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Keeps the first `max_rows` rows.
    pub fn truncate(&mut self, max_rows: usize) {
        if self.rows.len() > max_rows {
            self.rows.truncate(max_rows);
        }
        self.truncated = (self.rows.len() as u64) < self.total_rows;
    }

    pub fn is_well_formed(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns.len())
            && self.total_rows >= self.rows.len() as u64
            && self.truncated == ((self.rows.len() as u64) < self.total_rows)
    }

    /// Exact equality of two complete captures. Truncated captures are never
    /// called identical since the hidden rows are unknown.
    pub fn identical(&self, other: &DataframeSnapshot) -> bool {
        !self.truncated && !other.truncated && self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn snap(n: u64) -> DataframeSnapshot {
        DataframeSnapshot {
            columns: vec![Column { name: "a".into(), dtype: "int64".into() }],
            rows: (0..n).map(|i| vec![json!(i)]).collect(),
            total_rows: n,
            truncated: false,
        }
    }

    #[test]
    fn truncation_keeps_total() {
        let mut s = snap(249);
        s.truncate(10);
        assert_eq!(s.rows.len(), 10);
        assert_eq!(s.total_rows, 249);
        assert!(s.truncated);
        assert!(s.is_well_formed());
        let mut e = snap(0);
        e.truncate(10);
        assert!(!e.truncated);
    }

    #[test]
    fn identical_requires_complete_frames() {
        assert!(snap(3).identical(&snap(3)));
        assert!(!snap(3).identical(&snap(4)));
        let mut a = snap(20);
        a.truncate(10);
        assert!(!a.identical(&a.clone()));
    }

    #[test]
    fn wire_encoding() {
        let s = snap(1);
        assert_eq!(
            serde_json::to_value(&s).unwrap(),
            json!({"columns": [{"name": "a", "dtype": "int64"}], "rows": [[0]], "total_rows": 1, "truncated": false})
        );
    }
}
