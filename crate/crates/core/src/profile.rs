//! Per-cluster summaries: household composition, distance spread, coverage
//! within a distance threshold, and poor/rich tract shares.
//!
//! Two different "coverage" numbers are reported. `family_share_pct` is the
//! cluster's share of all families (these sum to 100 across clusters).
//! `coverage_1mi_pct` is the share of the cluster's families whose nearest
//! agency of any kind lies within the threshold distance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::SpatialGrid;
use crate::ingest::{FamilyServiceRecord, TractIncomeRecord};

/// Labels used when there are exactly four clusters, nearest first.
pub const FOUR_CLUSTER_LABELS: [&str; 4] = ["Very Nearby", "Nearby", "Far Away", "Very Far Away"];

pub const DEFAULT_THRESHOLD_MILES: f64 = 1.0;

/// Mapping between mixture components and distance-ordered clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    /// `order[r]` is the component ranked `r`-th by mean distance.
    pub order: Vec<usize>,
    /// `rank_of[c]` is the rank of component `c`.
    pub rank_of: Vec<usize>,
    /// Display label of each rank.
    pub labels: Vec<String>,
    /// Mean assigned distance of each rank (NaN when the cluster is empty).
    pub mean_distance: Vec<f64>,
}

impl ClusterLabeling {
    /// Rank of every row.
    pub fn ranked(&self, assignments: &[usize]) -> Vec<usize> {
        assignments.iter().map(|&a| self.rank_of[a]).collect()
    }
}

/// Orders the `k` components by the mean distance of their members.
/// Empty components sort last, by component index.
pub fn label_clusters(assignments: &[usize], distances: &[f64], k: usize) -> Result<ClusterLabeling> {
    if assignments.len() != distances.len() {
        return Err(Error::DimensionMismatch {
            expected: assignments.len(),
            actual: distances.len(),
        });
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&a, &d) in assignments.iter().zip(distances) {
        if a >= k {
            return Err(Error::InvalidArgument(format!("assignment {a} outside 0..{k}")));
        }
        sums[a] += d;
        counts[a] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| match (means[a].is_nan(), means[b].is_nan()) {
        (false, false) => means[a].total_cmp(&means[b]).then(a.cmp(&b)),
        (x, y) => x.cmp(&y).then(a.cmp(&b)),
    });
    let mut rank_of = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank_of[c] = r;
    }
    let labels = if k == 4 {
        FOUR_CLUSTER_LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=k).map(|i| format!("Cluster {i}")).collect()
    };
    Ok(ClusterLabeling {
        mean_distance: order.iter().map(|&c| means[c]).collect(),
        order,
        rank_of,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncomeClass {
    Poor,
    Rich,
}

/// A tract is poor when its average household income is strictly below the
/// state median.
pub fn classify_tract(tract: &TractIncomeRecord, state_median_income: f64) -> IncomeClass {
    classify_income(tract.avg_household_income, state_median_income)
}

pub fn classify_income(avg_household_income: f64, state_median_income: f64) -> IncomeClass {
    if avg_household_income < state_median_income {
        IncomeClass::Poor
    } else {
        IncomeClass::Rich
    }
}

/// Distance from every record to its nearest agency.
pub fn nearest_distances(records: &[FamilyServiceRecord], grid: &SpatialGrid<String>) -> Vec<f64> {
    records.par_iter().map(|r| grid.nearest(r.location).1).collect()
}

/// Percentage of values at or below `threshold_miles`.
pub fn coverage_from_distances(nearest: &[f64], threshold_miles: f64) -> Result<f64> {
    if nearest.is_empty() {
        return Err(Error::InvalidArgument("coverage of zero families".into()));
    }
    let covered = nearest.iter().filter(|&&d| d <= threshold_miles).count();
    Ok(100.0 * covered as f64 / nearest.len() as f64)
}

/// Percentage of families with at least one agency within `threshold_miles`.
pub fn coverage_within(
    records: &[FamilyServiceRecord],
    grid: &SpatialGrid<String>,
    threshold_miles: f64,
) -> Result<f64> {
    coverage_from_distances(&nearest_distances(records, grid), threshold_miles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub threshold_miles: f64,
    pub state_median_income: f64,
    /// Weight poor/rich shares by household size instead of by family.
    pub person_weighted: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            threshold_miles: DEFAULT_THRESHOLD_MILES,
            state_median_income: 50_000.0,
            person_weighted: false,
        }
    }
}

/// One column of the cluster profile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub label: String,
    pub n_families: u64,
    pub n_adults: u64,
    pub n_children: u64,
    pub n_seniors: u64,
    pub n_people: u64,
    pub avg_adults: f64,
    pub avg_children: f64,
    pub avg_seniors: f64,
    pub avg_people: f64,
    pub n_tracts: usize,
    pub avg_distance_miles: f64,
    pub family_share_pct: f64,
    pub coverage_1mi_pct: f64,
    pub pct_poor: f64,
    pub pct_rich: f64,
    pub pct_unknown_income: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub clusters: Vec<ProfileRow>,
    pub totals: ProfileRow,
}

#[derive(Default)]
struct Acc {
    families: u64,
    adults: u64,
    children: u64,
    seniors: u64,
    distance: f64,
    covered: u64,
    poor_w: f64,
    rich_w: f64,
    unknown_w: f64,
    tracts: BTreeSet<String>,
}

impl Acc {
    fn row(&self, label: String, total_families: u64) -> ProfileRow {
        let f = self.families as f64;
        let per = |v: u64| if self.families > 0 { v as f64 / f } else { f64::NAN };
        let w = self.poor_w + self.rich_w + self.unknown_w;
        let pct = |v: f64| if w > 0.0 { 100.0 * v / w } else { f64::NAN };
        let people = self.adults + self.children + self.seniors;
        ProfileRow {
            label,
            n_families: self.families,
            n_adults: self.adults,
            n_children: self.children,
            n_seniors: self.seniors,
            n_people: people,
            avg_adults: per(self.adults),
            avg_children: per(self.children),
            avg_seniors: per(self.seniors),
            avg_people: per(people),
            n_tracts: self.tracts.len(),
            avg_distance_miles: if self.families > 0 { self.distance / f } else { f64::NAN },
            family_share_pct: 100.0 * f / total_families as f64,
            coverage_1mi_pct: if self.families > 0 {
                100.0 * self.covered as f64 / f
            } else {
                f64::NAN
            },
            pct_poor: pct(self.poor_w),
            pct_rich: pct(self.rich_w),
            pct_unknown_income: pct(self.unknown_w),
        }
    }
}

/// Aggregates records per cluster.
///
/// `ranks[i]` is the distance rank of row `i` (see [`ClusterLabeling`]),
/// `distances[i]` its assigned distance and `nearest[i]` the distance to the
/// closest agency of any kind.
pub fn build_profile(
    ranks: &[usize],
    labels: &[String],
    records: &[FamilyServiceRecord],
    distances: &[f64],
    nearest: &[f64],
    tracts: &[TractIncomeRecord],
    config: &ProfileConfig,
) -> Result<ClusterProfile> {
    let n = records.len();
    for len in [ranks.len(), distances.len(), nearest.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("profile of zero families".into()));
    }
    let income: HashMap<&str, f64> = tracts
        .iter()
        .map(|t| (t.tract_id.as_str(), t.avg_household_income))
        .collect();
    let k = labels.len();
    let mut accs: Vec<Acc> = (0..k).map(|_| Acc::default()).collect();
    let mut total = Acc::default();

    for i in 0..n {
        let r = &records[i];
        let c = ranks[i];
        if c >= k {
            return Err(Error::InvalidArgument(format!("cluster rank {c} outside 0..{k}")));
        }
        let weight = if config.person_weighted {
            r.household_size() as f64
        } else {
            1.0
        };
        let class = income
            .get(r.tract_id.as_str())
            .map(|&inc| classify_income(inc, config.state_median_income));
        for acc in [&mut accs[c], &mut total] {
            acc.families += 1;
            acc.adults += r.n_adults as u64;
            acc.children += r.n_children as u64;
            acc.seniors += r.n_seniors as u64;
            acc.distance += distances[i];
            if nearest[i] <= config.threshold_miles {
                acc.covered += 1;
            }
            match class {
                Some(IncomeClass::Poor) => acc.poor_w += weight,
                Some(IncomeClass::Rich) => acc.rich_w += weight,
                None => acc.unknown_w += weight,
            }
            if !acc.tracts.contains(&r.tract_id) {
                acc.tracts.insert(r.tract_id.clone());
            }
        }
    }

    let total_families = total.families;
    Ok(ClusterProfile {
        clusters: accs
            .iter()
            .zip(labels)
            .map(|(a, l)| a.row(l.clone(), total_families))
            .collect(),
        totals: total.row("Total".to_string(), total_families),
    })
}

const PROFILE_COLUMNS: [&str; 17] = [
    "cluster",
    "n_families",
    "n_adults",
    "n_children",
    "n_seniors",
    "n_people",
    "avg_adults",
    "avg_children",
    "avg_seniors",
    "avg_people",
    "n_tracts",
    "avg_distance_miles",
    "family_share_pct",
    "coverage_1mi_pct",
    "pct_poor",
    "pct_rich",
    "pct_unknown_income",
];

impl ProfileRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            self.n_families.to_string(),
            self.n_adults.to_string(),
            self.n_children.to_string(),
            self.n_seniors.to_string(),
            self.n_people.to_string(),
            self.avg_adults.to_string(),
            self.avg_children.to_string(),
            self.avg_seniors.to_string(),
            self.avg_people.to_string(),
            self.n_tracts.to_string(),
            self.avg_distance_miles.to_string(),
            self.family_share_pct.to_string(),
            self.coverage_1mi_pct.to_string(),
            self.pct_poor.to_string(),
            self.pct_rich.to_string(),
            self.pct_unknown_income.to_string(),
        ]
    }
}

impl ClusterProfile {
    /// One row per cluster followed by the totals row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PROFILE_COLUMNS)?;
        for row in self.clusters.iter().chain(std::iter::once(&self.totals)) {
            w.write_record(row.fields())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Variables down the side, clusters across, rounded for reading.
    pub fn to_text_table(&self) -> String {
        let cols: Vec<&ProfileRow> = self.clusters.iter().chain(std::iter::once(&self.totals)).collect();
        let pct = |v: f64| format!("{v:.1}%");
        let lines: Vec<(&str, Box<dyn Fn(&ProfileRow) -> String>)> = vec![
            ("Number of families", Box::new(|r| r.n_families.to_string())),
            ("Number of adults", Box::new(|r| r.n_adults.to_string())),
            ("Number of children", Box::new(|r| r.n_children.to_string())),
            ("Number of seniors", Box::new(|r| r.n_seniors.to_string())),
            ("Number of people", Box::new(|r| r.n_people.to_string())),
            ("Average number of adults in family", Box::new(|r| format!("{:.2}", r.avg_adults))),
            ("Average number of children in family", Box::new(|r| format!("{:.2}", r.avg_children))),
            ("Average number of seniors in family", Box::new(|r| format!("{:.2}", r.avg_seniors))),
            ("Average number of people in family", Box::new(|r| format!("{:.2}", r.avg_people))),
            ("Number of tracts", Box::new(|r| r.n_tracts.to_string())),
            ("Average Distance (miles)", Box::new(|r| format!("{:.2}", r.avg_distance_miles))),
            ("Share of families", Box::new(move |r| pct(r.family_share_pct))),
            ("Coverage within threshold", Box::new(move |r| pct(r.coverage_1mi_pct))),
            ("Pct of Poor", Box::new(move |r| pct(r.pct_poor))),
            ("Pct of Rich", Box::new(move |r| pct(r.pct_rich))),
            ("Pct of Unknown Income", Box::new(move |r| pct(r.pct_unknown_income))),
        ];
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Variables".to_string()];
        header.extend(cols.iter().map(|r| r.label.clone()));
        grid.push(header);
        for (name, f) in &lines {
            let mut row = vec![name.to_string()];
            row.extend(cols.iter().map(|r| f(r)));
            grid.push(row);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(out, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.push('\n');
        }
        out
    }
}

pub const DEFAULT_QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Nearest-rank quantile of sorted data: the value at rank `⌈p·n⌉`
/// (1-based, clamped to `1..=n`).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub cluster: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

/// Per-cluster distance quantiles. Clusters without members are skipped.
pub fn distance_quantiles(
    ranks: &[usize],
    distances: &[f64],
    quantiles: &[f64],
) -> Result<Vec<QuantileRow>> {
    if ranks.len() != distances.len() {
        return Err(Error::DimensionMismatch {
            expected: ranks.len(),
            actual: distances.len(),
        });
    }
    if let Some(p) = quantiles.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("quantile {p} outside [0, 1]")));
    }
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&r, &d) in ranks.iter().zip(distances) {
        groups.entry(r).or_default().push(d);
    }
    Ok(groups
        .into_iter()
        .map(|(cluster, mut v)| {
            v.sort_by(f64::total_cmp);
            QuantileRow {
                cluster,
                n: v.len(),
                values: quantiles.iter().map(|&p| nearest_rank(&v, p)).collect(),
            }
        })
        .collect())
}

pub fn write_quantiles_csv<W: Write>(
    rows: &[QuantileRow],
    labels: &[String],
    quantiles: &[f64],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cluster".to_string(), "n".to_string()];
    header.extend(quantiles.iter().map(|p| format!("q{}", p * 100.0)));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            labels.get(r.cluster).cloned().unwrap_or_else(|| r.cluster.to_string()),
            r.n.to_string(),
        ];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Separation between consecutive clusters, by mean and by median distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub from: String,
    pub to: String,
    pub mean_gap_miles: f64,
    pub median_gap_miles: f64,
}

pub fn cluster_gaps(labeling: &ClusterLabeling, ranks: &[usize], distances: &[f64]) -> Result<Vec<GapRow>> {
    let med = distance_quantiles(ranks, distances, &[0.5])?;
    let medians: BTreeMap<usize, f64> = med.iter().map(|q| (q.cluster, q.values[0])).collect();
    let k = labeling.labels.len();
    Ok((1..k)
        .map(|r| GapRow {
            from: labeling.labels[r - 1].clone(),
            to: labeling.labels[r].clone(),
            mean_gap_miles: labeling.mean_distance[r] - labeling.mean_distance[r - 1],
            median_gap_miles: match (medians.get(&(r - 1)), medians.get(&r)) {
                (Some(a), Some(b)) => b - a,
                _ => f64::NAN,
            },
        })
        .collect())
}

pub fn write_gaps_csv<W: Write>(rows: &[GapRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "mean_gap_miles", "median_gap_miles"])?;
    for r in rows {
        w.write_record([
            r.from.clone(),
            r.to.clone(),
            r.mean_gap_miles.to_string(),
            r.median_gap_miles.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesertTract {
    pub tract_id: String,
    pub n_families: usize,
    /// Fraction (0–1) of the tract's families beyond the threshold.
    pub share_beyond: f64,
    pub avg_nearest_miles: f64,
    pub avg_household_income: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DesertReport {
    pub threshold_miles: f64,
    pub tracts: Vec<DesertTract>,
}

/// Tracts where more than half of the families have no agency within
/// `threshold_miles`, largest tracts first.
pub fn desert_report(
    records: &[FamilyServiceRecord],
    nearest: &[f64],
    tracts: &[TractIncomeRecord],
    threshold_miles: f64,
) -> Result<DesertReport> {
    if records.len() != nearest.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            actual: nearest.len(),
        });
    }
    let income: HashMap<&str, f64> = tracts
        .iter()
        .map(|t| (t.tract_id.as_str(), t.avg_household_income))
        .collect();
    // (families, beyond, distance sum)
    let mut groups: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for (r, &d) in records.iter().zip(nearest) {
        let g = groups.entry(r.tract_id.as_str()).or_default();
        g.0 += 1;
        if d > threshold_miles {
            g.1 += 1;
        }
        g.2 += d;
    }
    let mut out: Vec<DesertTract> = groups
        .into_iter()
        .filter(|(_, (n, beyond, _))| 2 * beyond > *n)
        .map(|(id, (n, beyond, sum))| DesertTract {
            tract_id: id.to_string(),
            n_families: n,
            share_beyond: beyond as f64 / n as f64,
            avg_nearest_miles: sum / n as f64,
            avg_household_income: income.get(id).copied(),
        })
        .collect();
    out.sort_by(|a, b| b.n_families.cmp(&a.n_families).then_with(|| a.tract_id.cmp(&b.tract_id)));
    Ok(DesertReport {
        threshold_miles,
        tracts: out,
    })
}

impl DesertReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "tract_id",
            "n_families",
            "share_beyond_threshold",
            "avg_nearest_miles",
            "avg_household_income",
        ])?;
        for t in &self.tracts {
            w.write_record([
                t.tract_id.clone(),
                t.n_families.to_string(),
                t.share_beyond.to_string(),
                t.avg_nearest_miles.to_string(),
                t.avg_household_income.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
