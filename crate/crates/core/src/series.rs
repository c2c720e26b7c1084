//! Daily shipping flow records and their dense per-route view.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Calendar day as a count of days since 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i32);

impl Day {
    pub fn offset(self, days: i64) -> Day {
        Day((self.0 as i64 + days) as i32)
    }

    /// Number of days from `self` to `later` (negative if `later` is earlier).
    pub fn days_until(self, later: Day) -> i64 {
        later.0 as i64 - self.0 as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub day: Day,
    pub origin: String,
    pub destination: String,
    pub good: String,
    pub tons: f64,
}

/// Sparse flow records keyed by `(day, good, origin, destination)`;
/// duplicate keys are summed. Days without a record carry zero flow.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowSeries {
    ports: Vec<String>,
    goods: Vec<String>,
    records: BTreeMap<(Day, usize, usize, usize), f64>,
    declared: Option<(Day, Day)>,
}

impl FlowSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty series whose port and good indices follow the given labels.
    pub fn with_labels(ports: Vec<String>, goods: Vec<String>) -> Self {
        Self {
            ports,
            goods,
            ..Self::default()
        }
    }

    pub fn from_records<I: IntoIterator<Item = FlowRecord>>(records: I) -> Result<Self> {
        let mut s = Self::new();
        for r in records {
            s.push(r)?;
        }
        Ok(s)
    }

    fn intern(list: &mut Vec<String>, label: &str) -> usize {
        match list.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                list.push(label.into());
                list.len() - 1
            }
        }
    }

    pub fn push(&mut self, record: FlowRecord) -> Result<()> {
        let FlowRecord {
            day,
            origin,
            destination,
            good,
            tons,
        } = record;
        self.add(day, &origin, &destination, &good, tons)
    }

    /// Adds `tons` on `(day, origin, destination, good)`, creating labels
    /// as needed.
    pub fn add(&mut self, day: Day, origin: &str, destination: &str, good: &str, tons: f64) -> Result<()> {
        if !(tons >= 0.0) || !tons.is_finite() {
            return Err(Error::InvalidInput(format!(
                "flow {origin}->{destination} of {good} on day {} is {tons}",
                day.0
            )));
        }
        let o = Self::intern(&mut self.ports, origin);
        let d = Self::intern(&mut self.ports, destination);
        let g = Self::intern(&mut self.goods, good);
        self.add_indexed(day, g, o, d, tons);
        Ok(())
    }

    pub(crate) fn add_indexed(&mut self, day: Day, good: usize, origin: usize, destination: usize, tons: f64) {
        *self.records.entry((day, good, origin, destination)).or_insert(0.0) += tons;
    }

    pub fn ports(&self) -> &[String] {
        &self.ports
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in `(day, good, origin, destination)` order.
    pub fn records(&self) -> impl Iterator<Item = FlowRecord> + '_ {
        self.records.iter().map(|(&(day, g, o, d), &tons)| FlowRecord {
            day,
            origin: self.ports[o].clone(),
            destination: self.ports[d].clone(),
            good: self.goods[g].clone(),
            tons,
        })
    }

    /// Declares the covered range (inclusive); days in it without records
    /// are zero-flow days.
    pub fn declare_range(&mut self, first: Day, last: Day) -> Result<()> {
        if last < first {
            return Err(Error::InvalidInput(format!("date range {}..{} is reversed", first.0, last.0)));
        }
        if let Some((lo, hi)) = self.observed_range() {
            if lo < first || hi > last {
                return Err(Error::InvalidInput(format!(
                    "records span days {}..{}, outside the declared range {}..{}",
                    lo.0, hi.0, first.0, last.0
                )));
            }
        }
        self.declared = Some((first, last));
        Ok(())
    }

    pub fn observed_range(&self) -> Option<(Day, Day)> {
        let first = self.records.keys().next()?.0;
        let last = self.records.keys().next_back()?.0;
        Some((first, last))
    }

    /// Declared range if any, otherwise the span of the records.
    pub fn range(&self) -> Option<(Day, Day)> {
        self.declared.or_else(|| self.observed_range())
    }

    /// Keeps only days in `[first, last]` and declares that range.
    pub fn restricted(&self, first: Day, last: Day) -> Result<Self> {
        let mut out = Self::with_labels(self.ports.clone(), self.goods.clone());
        for (&key, &v) in self.records.range((first, 0, 0, 0)..) {
            if key.0 > last {
                break;
            }
            out.records.insert(key, v);
        }
        out.declare_range(first, last)?;
        Ok(out)
    }

    /// Re-expresses port indices in the order of `labels`.
    pub fn reindexed(&self, labels: &[String]) -> Result<Self> {
        let map: Vec<usize> = self
            .ports
            .iter()
            .map(|p| labels.iter().position(|l| l == p).ok_or_else(|| Error::UnknownPort(p.clone())))
            .collect::<Result<_>>()?;
        let mut out = Self::with_labels(labels.to_vec(), self.goods.clone());
        for (&(day, g, o, d), &v) in &self.records {
            out.add_indexed(day, g, map[o], map[d], v);
        }
        out.declared = self.declared;
        Ok(out)
    }

    /// Record-wise sum of two series; ranges are united.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for r in other.records() {
            out.push(r)?;
        }
        out.declared = match (self.range(), other.range()) {
            (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
            (a, b) => a.or(b),
        };
        Ok(out)
    }

    /// Dense `days x goods x ports x ports` view over the covered range.
    pub fn dense(&self) -> DenseFlows {
        let k = self.ports.len();
        let n = self.goods.len();
        let Some((first, last)) = self.range() else {
            return DenseFlows {
                first: Day(0),
                days: 0,
                goods: n,
                ports: k,
                data: Vec::new(),
            };
        };
        let days = (first.days_until(last) + 1) as usize;
        let mut data = vec![0.0; days * n * k * k];
        for (&(day, g, o, d), &v) in &self.records {
            let t = first.days_until(day) as usize;
            data[((t * n + g) * k + o) * k + d] += v;
        }
        DenseFlows {
            first,
            days,
            goods: n,
            ports: k,
            data,
        }
    }
}

/// Dense daily flow tensor; missing days are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlows {
    first: Day,
    days: usize,
    goods: usize,
    ports: usize,
    data: Vec<f64>,
}

impl DenseFlows {
    pub fn first_day(&self) -> Day {
        self.first
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn day(&self, t: usize) -> Day {
        self.first.offset(t as i64)
    }

    pub fn flow(&self, t: usize, good: usize, origin: usize, destination: usize) -> f64 {
        let k = self.ports;
        self.data[((t * self.goods + good) * k + origin) * k + destination]
    }

    /// Total inflow into `destination` on day `t`, all goods and origins.
    pub fn inflow_total(&self, t: usize, destination: usize) -> f64 {
        (0..self.goods)
            .flat_map(|g| (0..self.ports).map(move |o| (g, o)))
            .map(|(g, o)| self.flow(t, g, o, destination))
            .sum()
    }

    /// Quantity of `good` arriving at `port` on day `t`, from all origins.
    pub fn imports(&self, t: usize, good: usize, port: usize) -> f64 {
        (0..self.ports).map(|o| self.flow(t, good, o, port)).sum()
    }
}
