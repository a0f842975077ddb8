//! Stamped output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use foodgmm::ingest::{AgencyRecord, FamilyServiceRecord};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `stamp` on the first line, then whatever `body` writes.
pub fn write_stamped<F>(path: &Path, stamp: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> foodgmm::Result<()>,
{
    let mut w = create(path)?;
    writeln!(w, "{stamp}").map_err(|e| CliError::io(path, e))?;
    body(&mut w)?;
    finish(path, w)
}

/// JSON has no comments, so the stamp travels as a leading `"stamp"` member.
#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    stamp: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, stamp: &str, body: &T) -> CliResult<()> {
    let stamp = stamp.trim_start_matches('#').trim();
    let text = serde_json::to_string_pretty(&Stamped { stamp, body })?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .map_err(|e| CliError::io(path, e))?;
    finish(path, w)
}

/// One labelled family for the map export.
pub struct FamilyPoint<'a> {
    pub record: &'a FamilyServiceRecord,
    pub cluster_label: &'a str,
    pub distance_miles: f64,
}

fn point(lat: f64, lon: f64) -> serde_json::Value {
    // RFC 7946 positions are longitude first
    json!({ "type": "Point", "coordinates": [lon, lat] })
}

/// FeatureCollection with one family point per row followed by the
/// agencies. Each feature sits on its own line.
pub fn write_geojson<'a>(
    path: &Path,
    stamp: &str,
    families: impl IntoIterator<Item = FamilyPoint<'a>>,
    agencies: &[AgencyRecord],
) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    let mut w = create(path)?;
    let stamp = stamp.trim_start_matches('#').trim();
    write!(
        w,
        "{{\n\"type\": \"FeatureCollection\",\n\"stamp\": {},\n\"features\": [",
        serde_json::to_string(stamp)?
    )
    .map_err(io)?;
    let mut first = true;
    let mut emit = |w: &mut BufWriter<File>, f: serde_json::Value| -> CliResult<()> {
        let sep = if first { "\n" } else { ",\n" };
        first = false;
        w.write_all(sep.as_bytes()).map_err(io)?;
        serde_json::to_writer(&mut *w, &f)?;
        Ok(())
    };
    for f in families {
        let r = f.record;
        emit(
            &mut w,
            json!({
                "type": "Feature",
                "geometry": point(r.location.latitude_deg(), r.location.longitude_deg()),
                "properties": {
                    "kind": "family",
                    "family_id": r.family_id,
                    "cluster_label": f.cluster_label,
                    "distance_miles": f.distance_miles,
                    "tract_id": r.tract_id,
                },
            }),
        )?;
    }
    for a in agencies {
        emit(
            &mut w,
            json!({
                "type": "Feature",
                "geometry": point(a.location.latitude_deg(), a.location.longitude_deg()),
                "properties": {
                    "kind": "agency",
                    "agency_id": a.agency_id,
                    "name": a.name,
                },
            }),
        )?;
    }
    w.write_all(b"\n]\n}\n").map_err(io)?;
    finish(path, w)
}
