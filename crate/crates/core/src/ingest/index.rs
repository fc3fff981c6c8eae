use std::collections::BTreeMap;

use super::EnterpriseRecord;
use crate::month::{MonthSpan, YearMonth};

/// Month-keyed index: for every month of the dataset span, the positions of
/// the records active in that month.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonthIndex {
    span: Option<MonthSpan>,
    months: BTreeMap<YearMonth, Vec<u32>>,
}

impl MonthIndex {
    /// Dataset span: earliest start month to the latest start or end month.
    pub fn span(&self) -> Option<MonthSpan> {
        self.span
    }

    /// Record positions active in `m`, in input order.
    pub fn active(&self, m: YearMonth) -> &[u32] {
        self.months.get(&m).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn active_ids<'a>(&'a self, m: YearMonth, records: &'a [EnterpriseRecord]) -> impl Iterator<Item = &'a str> + 'a {
        self.active(m).iter().map(move |&i| records[i as usize].id.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (YearMonth, &[u32])> {
        self.months.iter().map(|(m, v)| (*m, v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_none()
    }
}

pub fn dataset_span(records: &[EnterpriseRecord]) -> Option<MonthSpan> {
    let start = records.iter().map(|r| r.start_month()).min()?;
    let end = records
        .iter()
        .map(|r| r.end_month().unwrap_or(r.start_month()))
        .max()?;
    Some(MonthSpan { start, end })
}

/// Re-keys records by month. Live records (no end date) stay active through
/// the end of the dataset span.
pub fn reindex_by_month(records: &[EnterpriseRecord]) -> MonthIndex {
    let Some(span) = dataset_span(records) else {
        return MonthIndex::default();
    };
    let mut slots: Vec<Vec<u32>> = vec![Vec::new(); span.len()];
    for (pos, rec) in records.iter().enumerate() {
        let first = span.index_of(rec.start_month()).expect("start within span");
        let last = rec
            .end_month()
            .and_then(|e| span.index_of(e))
            .unwrap_or(span.len() - 1);
        for slot in &mut slots[first..=last] {
            slot.push(pos as u32);
        }
    }
    let months = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| (span.month_at(i), v))
        .collect();
    MonthIndex {
        span: Some(span),
        months,
    }
}
