//! Deterministic synthetic scenarios.
//!
//! A scenario is a set of agencies, census tracts with incomes and families
//! placed at a sampled distance from their assigned agency. Each family keeps
//! the index of the distance component it was drawn from, so clusterings can
//! be scored against the truth. Output uses exactly the schemas read by
//! [`crate::ingest`], plus `ground_truth.csv`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{destination, haversine_miles, GeoPoint, SpatialGrid, EARTH_RADIUS_MILES, MILES_PER_DEGREE};
use crate::ingest::{
    assigned_distance, load_tables, AgencyRecord, FamilyServiceRecord, RejectionReport, TractIncomeRecord,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Smallest distance a family can be placed from its agency.
pub const MIN_DISTANCE_MILES: f64 = 0.01;

/// Redraws attempted before a below-minimum distance is clamped.
const MAX_REDRAWS: usize = 64;

const STREAM_AGENCIES: u64 = 0;
const STREAM_TRACTS: u64 = 1;
const STREAM_FAMILIES: u64 = 2;
const STREAM_INCOME: u64 = 3;
const STREAM_DESERT: u64 = 4;

/// One component of the family-to-agency distance mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceComponent {
    pub weight: f64,
    pub mean_miles: f64,
    pub sd_miles: f64,
}

/// Mean household composition of one component. Adults are drawn as
/// `1 + Poisson(adults − 1)`, children and seniors as `Poisson(mean)`, so
/// every household has at least one adult and the means are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub adults: f64,
    pub children: f64,
    pub seniors: f64,
}

/// Tract incomes are `state_median_income · exp(N(log_mean_offset, log_sd²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncomeModel {
    pub log_mean_offset: f64,
    pub log_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    fn width_miles(&self) -> f64 {
        let mid = 0.5 * (self.lat_min + self.lat_max);
        (self.lon_max - self.lon_min) * MILES_PER_DEGREE * mid.to_radians().cos()
    }

    fn height_miles(&self) -> f64 {
        (self.lat_max - self.lat_min) * MILES_PER_DEGREE
    }
}

/// Tracts placed north of the box, away from every agency. All of their
/// families end up farther than `offset_miles − 0.5` from the nearest agency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesertPlan {
    pub n_tracts: usize,
    pub families_per_tract: usize,
    pub offset_miles: f64,
}

/// Radius around a desert tract centre within which its families are placed.
const DESERT_JITTER_MILES: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_families: usize,
    pub n_agencies: usize,
    /// Tracts that receive ordinary families (planted desert tracts are extra).
    pub n_tracts: usize,
    pub distance_mixture: Vec<DistanceComponent>,
    /// One entry per distance component.
    pub composition: Vec<Composition>,
    pub income: IncomeModel,
    pub state_median_income: f64,
    pub region: BoundingBox,
    pub desert: Option<DesertPlan>,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Four components with the family counts, distances and household
    /// make-up of the published Ohio clustering; spreads are chosen so that
    /// neighbouring components overlap only slightly.
    fn default() -> Self {
        let counts = [197_844.0, 199_475.0, 195_081.0, 17_009.0];
        let total: f64 = counts.iter().sum();
        let means = [0.42, 1.45, 4.63, 19.47];
        let sds = [0.15, 0.4, 1.2, 5.0];
        SynthConfig {
            n_families: 20_000,
            n_agencies: 500,
            n_tracts: 943,
            distance_mixture: (0..4)
                .map(|i| DistanceComponent {
                    weight: counts[i] / total,
                    mean_miles: means[i],
                    sd_miles: sds[i],
                })
                .collect(),
            composition: vec![
                Composition { adults: 1.12, children: 0.62, seniors: 0.61 },
                Composition { adults: 1.23, children: 0.77, seniors: 0.64 },
                Composition { adults: 1.26, children: 0.78, seniors: 0.67 },
                Composition { adults: 1.38, children: 0.82, seniors: 0.61 },
            ],
            income: IncomeModel {
                log_mean_offset: -0.37,
                log_sd: 0.3,
            },
            state_median_income: 50_000.0,
            region: BoundingBox {
                lat_min: 40.5,
                lat_max: 41.9,
                lon_min: -82.5,
                lon_max: -80.5,
            },
            desert: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same scenario with component weights, means and spreads replaced.
    pub fn with_mixture(mut self, components: Vec<DistanceComponent>, composition: Vec<Composition>) -> Self {
        self.distance_mixture = components;
        self.composition = composition;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_families == 0 {
            return bad("n_families must be positive".into());
        }
        if self.n_tracts == 0 || self.n_tracts > self.n_families {
            return bad(format!(
                "need 1 <= n_tracts <= n_families, got n_tracts = {} and n_families = {}",
                self.n_tracts, self.n_families
            ));
        }
        if self.n_agencies == 0 {
            return bad("n_agencies must be positive".into());
        }
        let mix = &self.distance_mixture;
        if mix.is_empty() {
            return bad("distance mixture has no components".into());
        }
        if mix.len() != self.composition.len() {
            return bad(format!(
                "{} distance components but {} composition entries",
                mix.len(),
                self.composition.len()
            ));
        }
        let wsum: f64 = mix.iter().map(|c| c.weight).sum();
        if mix.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) || (wsum - 1.0).abs() > 1e-9 {
            return bad(format!("component weights must be non-negative and sum to 1 (sum = {wsum})"));
        }
        for (i, c) in mix.iter().enumerate() {
            if !(c.mean_miles >= 0.0) || !c.mean_miles.is_finite() || !(c.sd_miles >= 0.0) || !c.sd_miles.is_finite()
            {
                return bad(format!("component {i} needs a finite mean >= 0 and sd >= 0"));
            }
            if i > 0 && c.mean_miles <= mix[i - 1].mean_miles {
                return bad("component means must be strictly increasing".into());
            }
        }
        for (i, c) in self.composition.iter().enumerate() {
            let ok = c.adults >= 1.0 && c.children >= 0.0 && c.seniors >= 0.0;
            if !ok || ![c.adults, c.children, c.seniors].iter().all(|v| v.is_finite()) {
                return bad(format!("composition {i} needs adults >= 1 and non-negative children and seniors"));
            }
        }
        if !(self.state_median_income > 0.0) || !self.state_median_income.is_finite() {
            return bad("state_median_income must be positive".into());
        }
        if !self.income.log_mean_offset.is_finite() || !(self.income.log_sd >= 0.0) || !self.income.log_sd.is_finite() {
            return bad("income model needs a finite offset and sd >= 0".into());
        }
        let b = &self.region;
        let lat_ok = -90.0 <= b.lat_min && b.lat_min < b.lat_max && b.lat_max <= 90.0;
        let lon_ok = -180.0 <= b.lon_min && b.lon_min < b.lon_max && b.lon_max <= 180.0;
        if !lat_ok || !lon_ok {
            return bad(format!("invalid region box {b:?}"));
        }
        let largest = mix.last().map(|c| c.mean_miles + 6.0 * c.sd_miles).unwrap_or(0.0);
        if largest >= std::f64::consts::PI * EARTH_RADIUS_MILES {
            return bad("distance scale exceeds half the earth's circumference".into());
        }
        let short_side = b.width_miles().min(b.height_miles());
        let farthest_mean = mix.last().map(|c| c.mean_miles).unwrap_or(0.0);
        if farthest_mean > 0.5 * short_side {
            return bad(format!(
                "region box ({short_side:.2} mi on its short side) is too small for a {farthest_mean} mi mean distance"
            ));
        }
        if let Some(d) = &self.desert {
            if d.n_tracts == 0 || d.families_per_tract == 0 {
                return bad("desert plan needs at least one tract and one family per tract".into());
            }
            if !(d.offset_miles >= 2.0) || !d.offset_miles.is_finite() {
                return bad("desert offset must be at least 2 miles".into());
            }
            if b.lat_max + d.offset_miles / MILES_PER_DEGREE > 89.0 {
                return bad("desert tracts would fall too close to the pole".into());
            }
            let spacing = b.width_miles() / d.n_tracts as f64;
            if spacing < 4.0 * DESERT_JITTER_MILES {
                return bad(format!("{} desert tracts do not fit across the region", d.n_tracts));
            }
        }
        Ok(())
    }
}

/// Per-component bookkeeping computed while generating. Income classes use
/// the strict `income < state_median_income` rule per family.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub n_families: u64,
    pub n_adults: u64,
    pub n_children: u64,
    pub n_seniors: u64,
    pub n_people: u64,
    pub n_tracts: usize,
    pub n_poor_families: u64,
    pub n_rich_families: u64,
    pub sum_distance_miles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub components: Vec<Aggregate>,
    /// Tract count is the number of distinct tracts over all families.
    pub total: Aggregate,
    /// Planted desert tract ids in ascending order.
    pub desert_tracts: Vec<String>,
}

/// A generated scenario held in memory.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub config: SynthConfig,
    pub agencies: Vec<AgencyRecord>,
    pub tracts: Vec<TractIncomeRecord>,
    pub services: Vec<FamilyServiceRecord>,
    /// Distance component of each family (desert families carry the last).
    pub labels: Vec<usize>,
    /// Distance used to place each family.
    pub distances: Vec<f64>,
    pub truth: GroundTruth,
}

fn id(prefix: &str, i: usize, total: usize) -> String {
    let width = total.max(1).to_string().len();
    format!("{prefix}{:0width$}", i + 1)
}

fn uniform_point(rng: &mut Rng, b: &BoundingBox) -> GeoPoint {
    let lat = b.lat_min + (b.lat_max - b.lat_min) * rng.random::<f64>();
    let lon = b.lon_min + (b.lon_max - b.lon_min) * rng.random::<f64>();
    GeoPoint::new(lat, lon).expect("box was validated")
}

fn truncated_normal(rng: &mut Rng, mean: f64, sd: f64) -> f64 {
    for _ in 0..MAX_REDRAWS {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if v >= MIN_DISTANCE_MILES {
            return v;
        }
    }
    MIN_DISTANCE_MILES
}

fn poisson(rng: &mut Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as u32
}

fn pick_component(rng: &mut Rng, mix: &[DistanceComponent]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, c) in mix.iter().enumerate() {
        acc += c.weight;
        if u < acc {
            return i;
        }
    }
    mix.iter().rposition(|c| c.weight > 0.0).unwrap_or(mix.len() - 1)
}

/// Builds the scenario described by `config`. Identical configs give
/// identical output.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let b = config.region;
    let seed = config.seed;
    let n_desert = config.desert.map_or(0, |d| d.n_tracts);
    let n_tracts_total = config.n_tracts + n_desert;

    let mut rng = rng_from_seed(derive_seed(seed, STREAM_AGENCIES));
    let agencies: Vec<AgencyRecord> = (0..config.n_agencies)
        .map(|i| AgencyRecord {
            agency_id: id("A", i, config.n_agencies),
            location: uniform_point(&mut rng, &b),
            name: Some(format!("Pantry {}", i + 1)),
        })
        .collect();

    let mut rng = rng_from_seed(derive_seed(seed, STREAM_TRACTS));
    let tract_ids: Vec<String> = (0..n_tracts_total).map(|i| id("T", i, n_tracts_total)).collect();
    let centres: Vec<(usize, GeoPoint)> = (0..config.n_tracts).map(|i| (i, uniform_point(&mut rng, &b))).collect();
    let area = b.width_miles() * b.height_miles();
    let cell = (area / config.n_tracts as f64).sqrt().max(0.5);
    let tract_grid = SpatialGrid::build(&centres, cell)?;

    let mut rng = rng_from_seed(derive_seed(seed, STREAM_INCOME));
    let tracts: Vec<TractIncomeRecord> = tract_ids
        .iter()
        .map(|t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let raw = config.state_median_income * (config.income.log_mean_offset + config.income.log_sd * z).exp();
            TractIncomeRecord {
                tract_id: t.clone(),
                avg_household_income: (raw * 100.0).round() / 100.0,
            }
        })
        .collect();

    let n_desert_families = config.desert.map_or(0, |d| d.n_tracts * d.families_per_tract);
    let n_all = config.n_families + n_desert_families;
    let mut services = Vec::with_capacity(n_all);
    let mut labels = Vec::with_capacity(n_all);
    let mut distances = Vec::with_capacity(n_all);

    let household = |rng: &mut Rng, c: &Composition| {
        (
            1 + poisson(rng, c.adults - 1.0),
            poisson(rng, c.children),
            poisson(rng, c.seniors),
        )
    };

    let mut rng = rng_from_seed(derive_seed(seed, STREAM_FAMILIES));
    for i in 0..config.n_families {
        let comp = pick_component(&mut rng, &config.distance_mixture);
        let dc = config.distance_mixture[comp];
        let dist = truncated_normal(&mut rng, dc.mean_miles, dc.sd_miles);
        let bearing = 360.0 * rng.random::<f64>();
        let agency = rng.random_range(0..agencies.len());
        let location = destination(agencies[agency].location, bearing, dist);
        let (tract, _) = tract_grid.nearest(location);
        let (n_adults, n_children, n_seniors) = household(&mut rng, &config.composition[comp]);
        services.push(FamilyServiceRecord {
            family_id: id("F", i, n_all),
            location,
            agency_id: agencies[agency].agency_id.clone(),
            n_adults,
            n_children,
            n_seniors,
            tract_id: tract_ids[tract].clone(),
        });
        labels.push(comp);
        distances.push(dist);
    }

    let mut desert_tracts = Vec::new();
    if let Some(plan) = config.desert {
        let mut rng = rng_from_seed(derive_seed(seed, STREAM_DESERT));
        let agency_points: Vec<(usize, GeoPoint)> =
            agencies.iter().enumerate().map(|(i, a)| (i, a.location)).collect();
        let agency_grid = SpatialGrid::build(&agency_points, cell)?;
        let lat = b.lat_max + plan.offset_miles / MILES_PER_DEGREE;
        let step = (b.lon_max - b.lon_min) / plan.n_tracts as f64;
        let last = config.distance_mixture.len() - 1;
        for t in 0..plan.n_tracts {
            let tract = config.n_tracts + t;
            let centre = GeoPoint::new(lat, b.lon_min + step * (t as f64 + 0.5))?;
            desert_tracts.push(tract_ids[tract].clone());
            for _ in 0..plan.families_per_tract {
                let bearing = 360.0 * rng.random::<f64>();
                let r = DESERT_JITTER_MILES * rng.random::<f64>();
                let location = destination(centre, bearing, r);
                let (agency, dist) = agency_grid.nearest(location);
                let (n_adults, n_children, n_seniors) = household(&mut rng, &config.composition[last]);
                services.push(FamilyServiceRecord {
                    family_id: id("F", services.len(), n_all),
                    location,
                    agency_id: agencies[agency].agency_id.clone(),
                    n_adults,
                    n_children,
                    n_seniors,
                    tract_id: tract_ids[tract].clone(),
                });
                labels.push(last);
                distances.push(dist);
            }
        }
    }

    let truth = tally(config, &services, &labels, &distances, &tracts, desert_tracts);
    Ok(SynthOutput {
        config: config.clone(),
        agencies,
        tracts,
        services,
        labels,
        distances,
        truth,
    })
}

fn tally(
    config: &SynthConfig,
    services: &[FamilyServiceRecord],
    labels: &[usize],
    distances: &[f64],
    tracts: &[TractIncomeRecord],
    desert_tracts: Vec<String>,
) -> GroundTruth {
    let income: HashMap<&str, f64> = tracts
        .iter()
        .map(|t| (t.tract_id.as_str(), t.avg_household_income))
        .collect();
    let k = config.distance_mixture.len();
    let mut comps = vec![Aggregate::default(); k];
    let mut total = Aggregate::default();
    let mut comp_tracts: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
    let mut all_tracts = BTreeSet::new();
    for ((s, &c), &d) in services.iter().zip(labels).zip(distances) {
        let poor = income[s.tract_id.as_str()] < config.state_median_income;
        for a in [&mut comps[c], &mut total] {
            a.n_families += 1;
            a.n_adults += s.n_adults as u64;
            a.n_children += s.n_children as u64;
            a.n_seniors += s.n_seniors as u64;
            a.n_people += (s.n_adults + s.n_children + s.n_seniors) as u64;
            a.sum_distance_miles += d;
            if poor {
                a.n_poor_families += 1;
            } else {
                a.n_rich_families += 1;
            }
        }
        comp_tracts[c].insert(&s.tract_id);
        all_tracts.insert(s.tract_id.as_str());
    }
    for (a, t) in comps.iter_mut().zip(&comp_tracts) {
        a.n_tracts = t.len();
    }
    total.n_tracts = all_tracts.len();
    GroundTruth {
        components: comps,
        total,
        desert_tracts,
    }
}

/// Paths of the files written by [`SynthOutput::write_to_dir`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub services: PathBuf,
    pub agencies: PathBuf,
    pub tracts: PathBuf,
    pub ground_truth: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            services: dir.join("services.csv"),
            agencies: dir.join("agencies.csv"),
            tracts: dir.join("tract_income.csv"),
            ground_truth: dir.join("ground_truth.csv"),
        }
    }
}

fn writer(path: &Path, stamp: Option<&str>) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path)?;
    if let Some(s) = stamp {
        writeln!(file, "{s}")?;
    }
    Ok(csv::Writer::from_writer(file))
}

impl SynthOutput {
    /// Writes the four CSV files into `dir` (created if missing). `stamp`, if
    /// given, is written verbatim as the first line of each file and should
    /// start with `#`.
    pub fn write_to_dir(&self, dir: &Path, stamp: Option<&str>) -> Result<SynthFiles> {
        fs::create_dir_all(dir)?;
        let files = SynthFiles::in_dir(dir);

        let mut w = writer(&files.services, stamp)?;
        w.write_record([
            "family_id",
            "latitude",
            "longitude",
            "agency_id",
            "n_adults",
            "n_children",
            "n_seniors",
            "tract_id",
        ])?;
        for s in &self.services {
            w.write_record([
                s.family_id.clone(),
                s.location.latitude_deg().to_string(),
                s.location.longitude_deg().to_string(),
                s.agency_id.clone(),
                s.n_adults.to_string(),
                s.n_children.to_string(),
                s.n_seniors.to_string(),
                s.tract_id.clone(),
            ])?;
        }
        w.flush()?;

        let mut w = writer(&files.agencies, stamp)?;
        w.write_record(["agency_id", "latitude", "longitude", "name"])?;
        for a in &self.agencies {
            w.write_record([
                a.agency_id.clone(),
                a.location.latitude_deg().to_string(),
                a.location.longitude_deg().to_string(),
                a.name.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let mut w = writer(&files.tracts, stamp)?;
        w.write_record(["tract_id", "avg_household_income"])?;
        for t in &self.tracts {
            w.write_record([t.tract_id.clone(), format!("{:.2}", t.avg_household_income)])?;
        }
        w.flush()?;

        let mut w = writer(&files.ground_truth, stamp)?;
        w.write_record(["family_row_index", "component_label"])?;
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(files)
    }
}

/// Outcome of reloading a written scenario.
#[derive(Debug, Clone)]
pub struct RoundtripReport {
    pub rows: usize,
    pub rejections: RejectionReport,
    /// Largest |recomputed − sampled| distance over the reloaded rows.
    pub max_abs_error_miles: f64,
    /// `(row, sampled, recomputed)` for rows off by 1e-6 mi or more.
    pub mismatches: Vec<(usize, f64, f64)>,
    /// Generated rows absent after loading.
    pub missing_rows: Vec<usize>,
}

/// Tolerance for placement round trips, in miles.
pub const ROUNDTRIP_TOLERANCE_MILES: f64 = 1e-6;

impl RoundtripReport {
    pub fn passed(&self) -> bool {
        self.rejections.total_rejected() == 0 && self.mismatches.is_empty() && self.missing_rows.is_empty()
    }
}

/// Loads previously written files and compares every family's distance to
/// its agency with the distance used to place it.
pub fn verify_roundtrip(output: &SynthOutput, files: &SynthFiles) -> Result<RoundtripReport> {
    let tables = load_tables(&files.services, &files.agencies, &files.tracts)?;
    let row_of: HashMap<&str, usize> = output
        .services
        .iter()
        .enumerate()
        .map(|(i, s)| (s.family_id.as_str(), i))
        .collect();
    let mut seen = vec![false; output.services.len()];
    let mut max_err: f64 = 0.0;
    let mut mismatches = Vec::new();
    for rec in &tables.services {
        let Some(&i) = row_of.get(rec.family_id.as_str()) else {
            continue;
        };
        seen[i] = true;
        let d = assigned_distance(rec, &tables.agencies)?;
        let err = (d - output.distances[i]).abs();
        max_err = max_err.max(err);
        if !(err < ROUNDTRIP_TOLERANCE_MILES) {
            mismatches.push((i, output.distances[i], d));
        }
    }
    Ok(RoundtripReport {
        rows: tables.services.len(),
        rejections: tables.report,
        max_abs_error_miles: max_err,
        mismatches,
        missing_rows: seen.iter().enumerate().filter(|(_, s)| !**s).map(|(i, _)| i).collect(),
    })
}

static SCRATCH_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Generates `config`, writes it to a scratch directory, reloads it and
/// checks placement. The scratch directory is removed afterwards.
pub fn roundtrip_check(config: &SynthConfig) -> Result<RoundtripReport> {
    let output = generate(config)?;
    let dir = std::env::temp_dir().join(format!(
        "foodgmm-roundtrip-{}-{}",
        std::process::id(),
        SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = output
        .write_to_dir(&dir, None)
        .and_then(|files| verify_roundtrip(&output, &files));
    let _ = fs::remove_dir_all(&dir);
    result
}

/// Great-circle distance between each family and its agency, recomputed from
/// the in-memory records.
pub fn placement_errors(output: &SynthOutput) -> Vec<f64> {
    let loc: HashMap<&str, GeoPoint> = output
        .agencies
        .iter()
        .map(|a| (a.agency_id.as_str(), a.location))
        .collect();
    output
        .services
        .iter()
        .zip(&output.distances)
        .map(|(s, &d)| (haversine_miles(s.location, loc[s.agency_id.as_str()]) - d).abs())
        .collect()
}
