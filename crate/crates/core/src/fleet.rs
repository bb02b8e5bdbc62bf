//! Interval-censored inspection records for a fleet of ships.
//!
//! Times are months since the ship's launch. Each compartment's history is a
//! list of inspections `(t_k, N_k)` where `N_k` counts the defects found in
//! `(t_{k−1}, t_k]`; the first interval starts at the history's origin, which
//! is launch for anything read from disk.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 4] = ["ship_id", "compartment_id", "inspection_time_months", "defect_count"];

#[derive(Debug, Error)]
pub enum FleetDataError {
    #[error("row {row}: {message}")]
    Parse { row: u64, message: String },
    #[error("bad header: expected `{}`, found `{found}`", CSV_HEADER.join(","))]
    Header { found: String },
    #[error("compartment {key}: {message}")]
    Validation { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionRecord {
    pub ship_id: String,
    pub compartment_id: String,
    pub inspection_time: f64,
    pub defect_count: u64,
}

/// Composite identifier of one compartment of one ship, rendered
/// `ship/compartment`.
pub fn compartment_key(ship_id: &str, compartment_id: &str) -> String {
    format!("{ship_id}/{compartment_id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentHistory {
    ship_id: String,
    compartment_id: String,
    origin: f64,
    inspections: Vec<(f64, u64)>,
}

impl CompartmentHistory {
    /// History starting at launch.
    pub fn new(
        ship_id: impl Into<String>,
        compartment_id: impl Into<String>,
        inspections: Vec<(f64, u64)>,
    ) -> Result<Self, FleetDataError> {
        Self::with_origin(ship_id, compartment_id, 0.0, inspections)
    }

    /// History whose first interval starts at `origin` instead of launch.
    pub fn with_origin(
        ship_id: impl Into<String>,
        compartment_id: impl Into<String>,
        origin: f64,
        inspections: Vec<(f64, u64)>,
    ) -> Result<Self, FleetDataError> {
        let h = Self { ship_id: ship_id.into(), compartment_id: compartment_id.into(), origin, inspections };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<(), FleetDataError> {
        let fail = |message: String| Err(FleetDataError::Validation { key: self.key(), message });
        if self.ship_id.is_empty() || self.compartment_id.is_empty() {
            return fail("identifiers must be non-empty".into());
        }
        if self.ship_id.contains('/') {
            return fail("ship identifiers may not contain `/`".into());
        }
        if !(self.origin >= 0.0 && self.origin.is_finite()) {
            return fail(format!("origin {} is not a nonnegative time", self.origin));
        }
        let mut prev = self.origin;
        for &(t, _) in &self.inspections {
            if !t.is_finite() {
                return fail(format!("inspection time {t} is not finite"));
            }
            if t == prev {
                let message = if t == self.origin && self.origin == 0.0 {
                    "inspection at launch (t = 0) covers an empty interval".to_string()
                } else {
                    format!("duplicate inspection time {t}")
                };
                return fail(message);
            }
            if t < prev {
                return fail(format!("inspection times not increasing ({t} after {prev})"));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn ship_id(&self) -> &str {
        &self.ship_id
    }

    pub fn compartment_id(&self) -> &str {
        &self.compartment_id
    }

    pub fn key(&self) -> String {
        compartment_key(&self.ship_id, &self.compartment_id)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn inspections(&self) -> &[(f64, u64)] {
        &self.inspections
    }

    pub fn is_empty(&self) -> bool {
        self.inspections.is_empty()
    }

    /// `(t_{k−1}, t_k, N_k)` for every recorded interval.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        let starts = std::iter::once(self.origin).chain(self.inspections.iter().map(|&(t, _)| t));
        starts.zip(&self.inspections).map(|(t0, &(t1, n))| (t0, t1, n))
    }

    pub fn total_defects(&self) -> u64 {
        self.inspections.iter().map(|&(_, n)| n).sum()
    }

    /// Time of the latest inspection, or the origin when there is none.
    pub fn last_time(&self) -> f64 {
        self.inspections.last().map_or(self.origin, |&(t, _)| t)
    }
}

/// All compartment histories of a fleet, ordered by (ship, compartment).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetDataset {
    compartments: Vec<CompartmentHistory>,
    groups: BTreeMap<String, String>,
}

impl FleetDataset {
    pub fn new(mut compartments: Vec<CompartmentHistory>) -> Result<Self, FleetDataError> {
        compartments.sort_by(|a, b| (&a.ship_id, &a.compartment_id).cmp(&(&b.ship_id, &b.compartment_id)));
        for pair in compartments.windows(2) {
            if pair[0].ship_id == pair[1].ship_id && pair[0].compartment_id == pair[1].compartment_id {
                return Err(FleetDataError::Validation {
                    key: pair[0].key(),
                    message: "compartment appears twice".into(),
                });
            }
        }
        Ok(Self { compartments, groups: BTreeMap::new() })
    }

    /// Group records by compartment, keeping each compartment's input order.
    pub fn from_records(records: impl IntoIterator<Item = InspectionRecord>) -> Result<Self, FleetDataError> {
        let mut order = Vec::new();
        let mut grouped: HashMap<(String, String), Vec<(f64, u64)>> = HashMap::new();
        for r in records {
            let id = (r.ship_id, r.compartment_id);
            if !grouped.contains_key(&id) {
                order.push(id.clone());
            }
            grouped.entry(id).or_default().push((r.inspection_time, r.defect_count));
        }
        let histories = order
            .into_iter()
            .map(|id| {
                let rows = grouped.remove(&id).unwrap_or_default();
                CompartmentHistory::new(id.0, id.1, rows)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(histories)
    }

    /// Attach rate-group labels keyed by `ship/compartment`.
    pub fn with_groups(mut self, groups: BTreeMap<String, String>) -> Self {
        self.groups = groups;
        self
    }

    pub fn group_of(&self, key: &str) -> Option<&str> {
        self.groups.get(key).map(String::as_str)
    }

    pub fn groups(&self) -> &BTreeMap<String, String> {
        &self.groups
    }

    pub fn compartments(&self) -> &[CompartmentHistory] {
        &self.compartments
    }

    pub fn get(&self, key: &str) -> Option<&CompartmentHistory> {
        self.compartments.iter().find(|c| c.key() == key)
    }

    pub fn len(&self) -> usize {
        self.compartments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compartments.is_empty()
    }

    pub fn ship_ids(&self) -> Vec<&str> {
        let mut ships: Vec<&str> = self.compartments.iter().map(|c| c.ship_id.as_str()).collect();
        ships.dedup();
        ships
    }

    pub fn records(&self) -> impl Iterator<Item = InspectionRecord> + '_ {
        self.compartments.iter().flat_map(|c| {
            c.inspections.iter().map(move |&(t, n)| InspectionRecord {
                ship_id: c.ship_id.clone(),
                compartment_id: c.compartment_id.clone(),
                inspection_time: t,
                defect_count: n,
            })
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, FleetDataError> {
        parse_inspection_csv(std::fs::File::open(path)?)
    }

    pub fn to_path(&self, path: impl AsRef<Path>) -> Result<(), FleetDataError> {
        let file = std::fs::File::create(path)?;
        write_inspection_csv(self, std::io::BufWriter::new(file), &[])
    }
}

/// Read the fleet CSV. Lines starting with `#` are ignored.
pub fn parse_inspection_csv<R: Read>(input: R) -> Result<FleetDataset, FleetDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(FleetDataError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = |r: &csv::StringRecord| r.position().map_or(i as u64 + 2, |p| p.line());
        let row = row.map_err(|e| FleetDataError::Parse {
            row: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let at = row_no(&row);
        let parse_err = |message: String| FleetDataError::Parse { row: at, message };
        if row.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", row.len())));
        }
        let (ship, comp) = (&row[0], &row[1]);
        if ship.is_empty() || comp.is_empty() {
            return Err(parse_err("ship_id and compartment_id must be non-empty".into()));
        }
        let time: f64 = row[2].parse().map_err(|_| parse_err(format!("bad inspection time `{}`", &row[2])))?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(parse_err(format!("inspection time must be a nonnegative number, got `{}`", &row[2])));
        }
        let count: u64 = row[3].parse().map_err(|_| {
            if row[3].starts_with('-') {
                parse_err(format!("negative defect count `{}`", &row[3]))
            } else {
                parse_err(format!("bad defect count `{}`", &row[3]))
            }
        })?;
        if !seen.insert((ship.to_string(), comp.to_string(), time.to_bits())) {
            return Err(parse_err(format!(
                "duplicate inspection of {} at {time}",
                compartment_key(ship, comp)
            )));
        }
        records.push(InspectionRecord {
            ship_id: ship.to_string(),
            compartment_id: comp.to_string(),
            inspection_time: time,
            defect_count: count,
        });
    }
    FleetDataset::from_records(records)
}

/// Write the fleet CSV, preceded by the given `#` comment lines.
pub fn write_inspection_csv<W: Write>(
    dataset: &FleetDataset,
    mut out: W,
    comments: &[String],
) -> Result<(), FleetDataError> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for r in dataset.records() {
        writer.write_record([
            r.ship_id.as_str(),
            r.compartment_id.as_str(),
            &r.inspection_time.to_string(),
            &r.defect_count.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Records at or before `cutoff` form the training set; later records form
/// the test set, whose histories start at the last training inspection.
pub fn split_by_time(dataset: &FleetDataset, cutoff: f64) -> (FleetDataset, FleetDataset) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in &dataset.compartments {
        let split = c.inspections.partition_point(|&(t, _)| t <= cutoff);
        let (early, late) = c.inspections.split_at(split);
        if !early.is_empty() {
            train.push(CompartmentHistory { inspections: early.to_vec(), ..c.clone() });
        }
        if !late.is_empty() {
            let origin = early.last().map_or(c.origin, |&(t, _)| t);
            test.push(CompartmentHistory { origin, inspections: late.to_vec(), ..c.clone() });
        }
    }
    let wrap = |compartments| FleetDataset { compartments, groups: dataset.groups.clone() };
    (wrap(train), wrap(test))
}

/// Number of compartments per total defect count.
pub fn defect_report_histogram(dataset: &FleetDataset) -> BTreeMap<u64, usize> {
    let mut hist = BTreeMap::new();
    for c in &dataset.compartments {
        *hist.entry(c.total_defects()).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FleetDataset, FleetDataError> {
        parse_inspection_csv(text.as_bytes())
    }

    const HEADER: &str = "ship_id,compartment_id,inspection_time_months,defect_count\n";

    #[test]
    fn minimal_file() {
        let ds = parse(&format!("{HEADER}S1,C1,12,3\n")).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.compartments()[0].inspections(), &[(12.0, 3)]);
        assert_eq!(ds.compartments()[0].key(), "S1/C1");
    }

    #[test]
    fn empty_and_commented() {
        assert!(parse(HEADER).unwrap().is_empty());
        let ds = parse(&format!("# made by hand\n{HEADER}# note\nS1,C1,12,0\n")).unwrap();
        assert_eq!(ds.len(), 1);
    }

    #[test]
    fn out_of_order_names_compartment() {
        let err = parse(&format!("{HEADER}S1,C1,24,1\nS1,C1,12,0\n")).unwrap_err();
        assert!(matches!(&err, FleetDataError::Validation { key, .. } if key == "S1/C1"), "{err}");
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        let err = parse(&format!("{HEADER}S1,C1,12,1\nS1,C2,x,1\n")).unwrap_err();
        assert!(matches!(err, FleetDataError::Parse { row: 3, .. }), "{err}");
        let err = parse(&format!("{HEADER}S1,C1,12,-2\n")).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
        let err = parse(&format!("{HEADER}S1,C1,12,1\nS1,C1,12,0\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        assert!(parse("ship,compartment,time,count\n").is_err());
    }

    #[test]
    fn split_examples() {
        let h = CompartmentHistory::new("S", "C", vec![(12.0, 1), (24.0, 2), (36.0, 0)]).unwrap();
        let ds = FleetDataset::new(vec![h]).unwrap();
        let (train, test) = split_by_time(&ds, 24.0);
        assert_eq!(train.compartments()[0].inspections(), &[(12.0, 1), (24.0, 2)]);
        let t = &test.compartments()[0];
        assert_eq!(t.intervals().collect::<Vec<_>>(), vec![(24.0, 36.0, 0)]);
        let (_, test) = split_by_time(&ds, 100.0);
        assert!(test.is_empty());
        let (train, test) = split_by_time(&ds, 0.0);
        assert!(train.is_empty());
        assert_eq!(test.compartments()[0].inspections().len(), 3);
        assert_eq!(test.compartments()[0].origin(), 0.0);
    }

    #[test]
    fn histogram_examples() {
        let ds = FleetDataset::new(vec![
            CompartmentHistory::new("S", "A", vec![(12.0, 0)]).unwrap(),
            CompartmentHistory::new("S", "B", vec![(12.0, 0)]).unwrap(),
            CompartmentHistory::new("S", "C", vec![(12.0, 2), (24.0, 3)]).unwrap(),
        ])
        .unwrap();
        assert_eq!(defect_report_histogram(&ds), BTreeMap::from([(0, 2), (5, 1)]));
        assert!(defect_report_histogram(&FleetDataset::default()).is_empty());
    }
}
