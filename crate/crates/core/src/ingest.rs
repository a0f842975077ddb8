//! Loading and joining the service, agency and tract-income tables, and
//! turning the joined records into a clustering feature matrix.
//!
//! Input files are UTF-8 CSV with a header row:
//!
//! | file              | columns                                                                  |
//! |-------------------|--------------------------------------------------------------------------|
//! | services.csv      | family_id,latitude,longitude,agency_id,n_adults,n_children,n_seniors,tract_id |
//! | agencies.csv      | agency_id,latitude,longitude,name (name optional)                        |
//! | tract_income.csv  | tract_id,avg_household_income                                            |
//!
//! Lines starting with `#` are ignored. Invalid rows are dropped and counted
//! by reason; a file with no valid rows is a hard error.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_miles, GeoPoint};
use crate::matrix::RowMatrix;

/// One service event for one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyServiceRecord {
    pub family_id: String,
    pub location: GeoPoint,
    pub agency_id: String,
    pub n_adults: u32,
    pub n_children: u32,
    pub n_seniors: u32,
    pub tract_id: String,
}

impl FamilyServiceRecord {
    pub fn household_size(&self) -> u32 {
        self.n_adults + self.n_children + self.n_seniors
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgencyRecord {
    pub agency_id: String,
    pub location: GeoPoint,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractIncomeRecord {
    pub tract_id: String,
    pub avg_household_income: f64,
}

/// Why an input row was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadCoordinate,
    NegativeCount,
    EmptyHousehold,
    UnknownAgencyId,
    UnknownTractId,
    DuplicateId,
    BadIncome,
    Malformed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadCoordinate => "bad_coordinate",
            RejectReason::NegativeCount => "negative_count",
            RejectReason::EmptyHousehold => "empty_household",
            RejectReason::UnknownAgencyId => "unknown_agency_id",
            RejectReason::UnknownTractId => "unknown_tract_id",
            RejectReason::DuplicateId => "duplicate_id",
            RejectReason::BadIncome => "bad_income",
            RejectReason::Malformed => "malformed",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row accounting for one input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub input_rows: usize,
    pub valid_rows: usize,
    pub rejections: BTreeMap<RejectReason, usize>,
}

impl TableReport {
    fn reject(&mut self, reason: RejectReason) {
        *self.rejections.entry(reason).or_default() += 1;
    }

    pub fn rejected(&self) -> usize {
        self.rejections.values().sum()
    }

    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejections.get(&reason).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub services: TableReport,
    pub agencies: TableReport,
    pub tracts: TableReport,
    /// Valid service rows whose tract has no income record. These rows are
    /// kept and reported as "unknown income" downstream.
    pub services_without_income: usize,
}

impl RejectionReport {
    pub fn total_rejected(&self) -> usize {
        self.services.rejected() + self.agencies.rejected() + self.tracts.rejected()
    }
}

/// Agencies with an id lookup.
#[derive(Debug, Clone)]
pub struct AgencyTable {
    records: Vec<AgencyRecord>,
    by_id: HashMap<String, usize>,
}

impl AgencyTable {
    pub fn new(records: Vec<AgencyRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.agency_id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate agency id `{}`", r.agency_id)));
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn get(&self, agency_id: &str) -> Option<&AgencyRecord> {
        self.by_id.get(agency_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[AgencyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Validated, joined input.
#[derive(Debug, Clone)]
pub struct Tables {
    pub services: Vec<FamilyServiceRecord>,
    pub agencies: AgencyTable,
    pub tracts: Vec<TractIncomeRecord>,
    pub report: RejectionReport,
}

impl Tables {
    pub fn income_by_tract(&self) -> HashMap<&str, f64> {
        self.tracts
            .iter()
            .map(|t| (t.tract_id.as_str(), t.avg_household_income))
            .collect()
    }
}

struct Header {
    path: PathBuf,
    index: HashMap<String, usize>,
}

impl Header {
    fn read(path: &Path, reader: &mut csv::Reader<std::fs::File>) -> Result<Self> {
        let headers = reader.headers().map_err(|e| Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        Ok(Self {
            path: path.to_path_buf(),
            index,
        })
    }

    fn require(&self, column: &str) -> Result<usize> {
        self.index.get(column).copied().ok_or_else(|| Error::MissingColumn {
            path: self.path.clone(),
            column: column.to_string(),
        })
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn field(rec: &csv::StringRecord, idx: usize) -> Option<&str> {
    rec.get(idx)
}

fn parse<T: FromStr>(rec: &csv::StringRecord, idx: usize) -> Option<T> {
    field(rec, idx)?.parse().ok()
}

fn parse_point(rec: &csv::StringRecord, lat: usize, lon: usize) -> std::result::Result<GeoPoint, RejectReason> {
    let la: f64 = parse(rec, lat).ok_or(RejectReason::Malformed)?;
    let lo: f64 = parse(rec, lon).ok_or(RejectReason::Malformed)?;
    GeoPoint::new(la, lo).map_err(|_| RejectReason::BadCoordinate)
}

fn read_error(path: &Path, e: csv::Error) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn load_agencies(path: &Path) -> Result<(Vec<AgencyRecord>, TableReport)> {
    let mut reader = open(path)?;
    let h = Header::read(path, &mut reader)?;
    let (c_id, c_lat, c_lon) = (h.require("agency_id")?, h.require("latitude")?, h.require("longitude")?);
    let c_name = h.index.get("name").copied();

    let mut report = TableReport::default();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| read_error(path, e))?;
        report.input_rows += 1;
        let parsed = (|| {
            let id = field(&rec, c_id).filter(|s| !s.is_empty()).ok_or(RejectReason::Malformed)?;
            let location = parse_point(&rec, c_lat, c_lon)?;
            if !seen.insert(id.to_string()) {
                return Err(RejectReason::DuplicateId);
            }
            let name = c_name
                .and_then(|c| field(&rec, c))
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            Ok(AgencyRecord {
                agency_id: id.to_string(),
                location,
                name,
            })
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(reason) => report.reject(reason),
        }
    }
    report.valid_rows = out.len();
    if out.is_empty() {
        return Err(Error::NoValidRows(path.to_path_buf()));
    }
    Ok((out, report))
}

pub fn load_tracts(path: &Path) -> Result<(Vec<TractIncomeRecord>, TableReport)> {
    let mut reader = open(path)?;
    let h = Header::read(path, &mut reader)?;
    let (c_id, c_inc) = (h.require("tract_id")?, h.require("avg_household_income")?);

    let mut report = TableReport::default();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| read_error(path, e))?;
        report.input_rows += 1;
        let parsed = (|| {
            let id = field(&rec, c_id).filter(|s| !s.is_empty()).ok_or(RejectReason::Malformed)?;
            let income: f64 = parse(&rec, c_inc).ok_or(RejectReason::Malformed)?;
            if !(income.is_finite() && income > 0.0) {
                return Err(RejectReason::BadIncome);
            }
            if !seen.insert(id.to_string()) {
                return Err(RejectReason::DuplicateId);
            }
            Ok(TractIncomeRecord {
                tract_id: id.to_string(),
                avg_household_income: income,
            })
        })();
        match parsed {
            Ok(r) => out.push(r),
            Err(reason) => report.reject(reason),
        }
    }
    report.valid_rows = out.len();
    if out.is_empty() {
        return Err(Error::NoValidRows(path.to_path_buf()));
    }
    Ok((out, report))
}

fn parse_count(rec: &csv::StringRecord, idx: usize) -> std::result::Result<u32, RejectReason> {
    let v: i64 = parse(rec, idx).ok_or(RejectReason::Malformed)?;
    if v < 0 {
        return Err(RejectReason::NegativeCount);
    }
    u32::try_from(v).map_err(|_| RejectReason::Malformed)
}

pub fn load_services(
    path: &Path,
    agencies: &AgencyTable,
    tracts: &[TractIncomeRecord],
) -> Result<(Vec<FamilyServiceRecord>, TableReport, usize)> {
    let mut reader = open(path)?;
    let h = Header::read(path, &mut reader)?;
    let cols = [
        "family_id",
        "latitude",
        "longitude",
        "agency_id",
        "n_adults",
        "n_children",
        "n_seniors",
        "tract_id",
    ]
    .map(|c| h.require(c));
    let [c_fam, c_lat, c_lon, c_ag, c_ad, c_ch, c_se, c_tr] = {
        let mut out = [0usize; 8];
        for (o, c) in out.iter_mut().zip(cols) {
            *o = c?;
        }
        out
    };
    let known_tracts: std::collections::HashSet<&str> =
        tracts.iter().map(|t| t.tract_id.as_str()).collect();

    let mut report = TableReport::default();
    let mut without_income = 0;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| read_error(path, e))?;
        report.input_rows += 1;
        let parsed = (|| {
            let family_id = field(&rec, c_fam).ok_or(RejectReason::Malformed)?;
            let location = parse_point(&rec, c_lat, c_lon)?;
            let n_adults = parse_count(&rec, c_ad)?;
            let n_children = parse_count(&rec, c_ch)?;
            let n_seniors = parse_count(&rec, c_se)?;
            if n_adults as u64 + n_children as u64 + n_seniors as u64 == 0 {
                return Err(RejectReason::EmptyHousehold);
            }
            let agency_id = field(&rec, c_ag).ok_or(RejectReason::Malformed)?;
            if agencies.get(agency_id).is_none() {
                return Err(RejectReason::UnknownAgencyId);
            }
            let tract_id = field(&rec, c_tr).filter(|s| !s.is_empty()).ok_or(RejectReason::Malformed)?;
            Ok(FamilyServiceRecord {
                family_id: family_id.to_string(),
                location,
                agency_id: agency_id.to_string(),
                n_adults,
                n_children,
                n_seniors,
                tract_id: tract_id.to_string(),
            })
        })();
        match parsed {
            Ok(r) => {
                if !known_tracts.contains(r.tract_id.as_str()) {
                    without_income += 1;
                }
                out.push(r);
            }
            Err(reason) => report.reject(reason),
        }
    }
    report.valid_rows = out.len();
    if out.is_empty() {
        return Err(Error::NoValidRows(path.to_path_buf()));
    }
    Ok((out, report, without_income))
}

/// Loads and joins the three tables.
pub fn load_tables(service_path: &Path, agency_path: &Path, income_path: &Path) -> Result<Tables> {
    let (agencies, agency_report) = load_agencies(agency_path)?;
    let agencies = AgencyTable::new(agencies)?;
    let (tracts, tract_report) = load_tracts(income_path)?;
    let (services, service_report, without_income) = load_services(service_path, &agencies, &tracts)?;
    Ok(Tables {
        services,
        agencies,
        tracts,
        report: RejectionReport {
            services: service_report,
            agencies: agency_report,
            tracts: tract_report,
            services_without_income: without_income,
        },
    })
}

/// Great-circle miles from a family to the agency it was served by.
pub fn assigned_distance(record: &FamilyServiceRecord, agencies: &AgencyTable) -> Result<f64> {
    let agency = agencies.get(&record.agency_id).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown agency id `{}`", record.agency_id))
    })?;
    Ok(haversine_miles(record.location, agency.location))
}

/// Floor applied before taking the logarithm of a distance.
pub const LOG_DISTANCE_FLOOR_MILES: f64 = 0.01;

/// Columns available for clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    DistanceMiles,
    /// `ln(max(distance, 0.01 mi))`.
    LogDistanceMiles,
    HouseholdSize,
    LatitudeDeg,
    LongitudeDeg,
}

impl Feature {
    pub fn name(self) -> &'static str {
        match self {
            Feature::DistanceMiles => "distance_miles",
            Feature::LogDistanceMiles => "log_distance_miles",
            Feature::HouseholdSize => "household_size",
            Feature::LatitudeDeg => "latitude_deg",
            Feature::LongitudeDeg => "longitude_deg",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "distance_miles" => Feature::DistanceMiles,
            "log_distance_miles" => Feature::LogDistanceMiles,
            "household_size" => Feature::HouseholdSize,
            "latitude_deg" | "latitude" => Feature::LatitudeDeg,
            "longitude_deg" | "longitude" => Feature::LongitudeDeg,
            other => return Err(Error::InvalidArgument(format!("unknown feature `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    None,
    Zscore,
}

impl Scaling {
    pub fn name(self) -> &'static str {
        match self {
            Scaling::None => "none",
            Scaling::Zscore => "zscore",
        }
    }
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Scaling::None),
            "zscore" => Ok(Scaling::Zscore),
            other => Err(Error::InvalidArgument(format!("unknown scaling `{other}`"))),
        }
    }
}

/// Clustering input built from joined records.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: RowMatrix,
    pub feature_spec: Vec<Feature>,
    /// Source record index of each row.
    pub row_index: Vec<usize>,
    /// Assigned distance of each row, unscaled.
    pub distances: Vec<f64>,
    pub scaling: Scaling,
    /// Per-column offset subtracted before division by `scale`.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureMatrix {
    /// Undo the column scaling of one row.
    pub fn unscale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| v * s + c)
            .collect()
    }

    pub fn unscaled(&self) -> RowMatrix {
        let rows: Vec<Vec<f64>> = self.matrix.iter_rows().map(|r| self.unscale_row(r)).collect();
        RowMatrix::from_rows(&rows).expect("rows share the matrix width")
    }
}

fn raw_value(feature: Feature, record: &FamilyServiceRecord, distance: f64) -> f64 {
    match feature {
        Feature::DistanceMiles => distance,
        Feature::LogDistanceMiles => distance.max(LOG_DISTANCE_FLOOR_MILES).ln(),
        Feature::HouseholdSize => record.household_size() as f64,
        Feature::LatitudeDeg => record.location.latitude_deg(),
        Feature::LongitudeDeg => record.location.longitude_deg(),
    }
}

/// Builds the feature matrix in `feature_spec` column order. With
/// `Scaling::Zscore` each column is centred and divided by its population
/// standard deviation, and the transform is kept for inverse mapping.
pub fn featurize(
    records: &[FamilyServiceRecord],
    agencies: &AgencyTable,
    feature_spec: &[Feature],
    scaling: Scaling,
) -> Result<FeatureMatrix> {
    if feature_spec.is_empty() {
        return Err(Error::InvalidArgument("feature spec is empty".into()));
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to featurize".into()));
    }
    for (i, f) in feature_spec.iter().enumerate() {
        if feature_spec[..i].contains(f) {
            return Err(Error::InvalidArgument(format!("feature `{f}` listed twice")));
        }
    }
    let d = feature_spec.len();
    let rows: Vec<(f64, Vec<f64>)> = records
        .par_iter()
        .map(|r| {
            let dist = assigned_distance(r, agencies)?;
            Ok((dist, feature_spec.iter().map(|&f| raw_value(f, r, dist)).collect()))
        })
        .collect::<Result<_>>()?;

    let n = rows.len();
    let mut values = Vec::with_capacity(n * d);
    let mut distances = Vec::with_capacity(n);
    for (dist, row) in rows {
        distances.push(dist);
        values.extend(row);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }

    let (center, scale) = match scaling {
        Scaling::None => (vec![0.0; d], vec![1.0; d]),
        Scaling::Zscore => {
            let mut center = vec![0.0; d];
            let mut scale = vec![0.0; d];
            for c in 0..d {
                let col = values.iter().skip(c).step_by(d);
                let mean = col.clone().sum::<f64>() / n as f64;
                let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                if !(var > 0.0) {
                    return Err(Error::ZeroVariance(feature_spec[c].name().to_string()));
                }
                center[c] = mean;
                scale[c] = var.sqrt();
            }
            for row in values.chunks_exact_mut(d) {
                for ((v, m), s) in row.iter_mut().zip(&center).zip(&scale) {
                    *v = (*v - m) / s;
                }
            }
            (center, scale)
        }
    };

    Ok(FeatureMatrix {
        matrix: RowMatrix::new(n, d, values)?,
        feature_spec: feature_spec.to_vec(),
        row_index: (0..n).collect(),
        distances,
        scaling,
        center,
        scale,
    })
}
