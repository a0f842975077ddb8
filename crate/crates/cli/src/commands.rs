//! The four pipeline commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use foodgmm::geo::build_grid;
use foodgmm::ingest::{featurize, load_tables, FeatureMatrix, Scaling, Tables, TableReport};
use foodgmm::mixture::{default_cov_floor, fit, predict, FeatureDescriptor, ModelDocument};
use foodgmm::profile::{
    build_profile, cluster_gaps, desert_report, distance_quantiles, label_clusters, nearest_distances,
    write_gaps_csv, write_quantiles_csv, DEFAULT_QUANTILES,
};
use foodgmm::selection::{grid_search, GridConfig};
use foodgmm::synth::generate;
use foodgmm::RowMatrix;

use crate::config::{RunConfig, Settings};
use crate::error::{CliError, CliResult};
use crate::output::{write_geojson, write_json, write_stamped, FamilyPoint};

macro_rules! progress {
    ($($arg:tt)*) => { eprintln!("foodgmm: {}", format!($($arg)*)) };
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn report_table(name: &Path, r: &TableReport) {
    progress!("{}: {} rows, {} rejected", name.display(), r.input_rows, r.rejected());
}

fn load(rc: &RunConfig) -> CliResult<Tables> {
    let tables = load_tables(&rc.services, &rc.agencies, &rc.tract_income)?;
    report_table(&rc.services, &tables.report.services);
    report_table(&rc.agencies, &tables.report.agencies);
    report_table(&rc.tract_income, &tables.report.tracts);
    if tables.report.services_without_income > 0 {
        progress!("{} service rows reference tracts without income", tables.report.services_without_income);
    }
    Ok(tables)
}

fn descriptor(fm: &FeatureMatrix) -> FeatureDescriptor {
    FeatureDescriptor {
        names: fm.feature_spec.iter().map(|f| f.name().to_string()).collect(),
        scaling: fm.scaling.name().to_string(),
        center: fm.center.clone(),
        scale: fm.scale.clone(),
    }
}

pub fn cmd_synth(settings: &Settings) -> CliResult<PathBuf> {
    let cfg = settings.synth_config()?;
    let dir = settings.output_dir();
    progress!("generating {} families, {} agencies, {} tracts", cfg.n_families, cfg.n_agencies, cfg.n_tracts);
    let out = generate(&cfg)?;
    let files = out.write_to_dir(&dir, Some(&settings.stamp()?))?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{}", files.services.display());
    let _ = writeln!(stdout, "{}", files.agencies.display());
    let _ = writeln!(stdout, "{}", files.tracts.display());
    let _ = writeln!(stdout, "{}", files.ground_truth.display());
    for (i, c) in out.truth.components.iter().enumerate() {
        let mean = if c.n_families > 0 {
            c.sum_distance_miles / c.n_families as f64
        } else {
            f64::NAN
        };
        let _ = writeln!(
            stdout,
            "component {i}: {} families, {} people, mean distance {mean:.3} mi",
            c.n_families, c.n_people
        );
    }
    let t = &out.truth.total;
    let _ = writeln!(stdout, "total: {} families, {} people, {} tracts", t.n_families, t.n_people, t.n_tracts);
    Ok(dir)
}

pub fn cmd_select(settings: &Settings) -> CliResult<PathBuf> {
    let rc = settings.run_config()?;
    let stamp = settings.stamp()?;
    ensure_dir(&rc.output_dir)?;
    let tables = load(&rc)?;
    let fm = featurize(&tables.services, &tables.agencies, &rc.features, rc.scaling)?;
    progress!(
        "searching {} models over K = {:?} on {} rows",
        rc.models.len(),
        rc.k_range,
        fm.matrix.rows()
    );
    let grid = GridConfig {
        fit: rc.fit.clone(),
        silhouette_sample: rc.silhouette_sample,
    };
    let table = grid_search(&fm.matrix, &rc.k_range, &rc.models, &grid)?;
    for (requested, fitted) in &table.model_mapping {
        if requested != fitted {
            progress!("{requested} fitted as {fitted} at d = {}", table.d);
        }
    }

    let dir = &rc.output_dir;
    write_stamped(&dir.join("selection_table.csv"), &stamp, |w| table.write_csv(w))?;
    write_json(&dir.join("selection_table.json"), &stamp, &table)?;

    let best = table
        .best_row()
        .ok_or_else(|| foodgmm::Error::Numerical("no fit in the grid converged".into()))?;
    let model = best.fitted.as_ref().expect("converged rows keep their model");
    let cov_floor = match rc.fit.cov_floor {
        Some(v) => v,
        None => default_cov_floor(&fm.matrix)?,
    };
    let doc = ModelDocument {
        cov_floor: Some(cov_floor),
        loglik: Some(best.loglik),
        converged: Some(best.converged),
        features: Some(descriptor(&fm)),
        ..ModelDocument::from_model(model, &rc.fit)
    };
    let model_path = dir.join("model.json");
    write_json(&model_path, &stamp, &doc)?;
    println!("best: {} K={} BIC={}", best.model, best.k, best.bic);
    println!("{}", model_path.display());
    Ok(model_path)
}

pub fn cmd_fit(settings: &Settings) -> CliResult<PathBuf> {
    let rc = settings.run_config()?;
    let stamp = settings.stamp()?;
    ensure_dir(&rc.output_dir)?;
    let tables = load(&rc)?;
    let fm = featurize(&tables.services, &tables.agencies, &rc.features, rc.scaling)?;
    let d = fm.matrix.cols();
    let model = rc.model.for_dimension(d).ok_or_else(|| {
        CliError::Core(foodgmm::Error::IllegalParameterization {
            model: rc.model.name().to_string(),
            d,
        })
    })?;
    if model != rc.model {
        progress!("{} fitted as {model} at d = {d}", rc.model);
    }
    progress!("fitting {model} with K = {} on {} rows", rc.k, fm.matrix.rows());
    let result = fit(&fm.matrix, rc.k, model, &rc.fit)?;
    progress!(
        "log-likelihood {} after {} iterations{}",
        result.loglik(),
        result.iterations,
        if result.converged { "" } else { " (not converged)" }
    );

    let dir = &rc.output_dir;
    let doc = ModelDocument {
        features: Some(descriptor(&fm)),
        ..ModelDocument::from_fit(&result, &rc.fit)
    };
    let model_path = dir.join("model.json");
    write_json(&model_path, &stamp, &doc)?;

    let labeling = label_clusters(&result.hard_assignments, &fm.distances, rc.k)?;
    write_stamped(&dir.join("assignments.csv"), &stamp, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["family_id", "component", "cluster", "cluster_label", "max_responsibility"])?;
        for (i, (&c, resp)) in result
            .hard_assignments
            .iter()
            .zip(result.responsibilities.iter_rows())
            .enumerate()
        {
            let rank = labeling.rank_of[c];
            w.write_record([
                tables.services[fm.row_index[i]].family_id.clone(),
                c.to_string(),
                rank.to_string(),
                labeling.labels[rank].clone(),
                resp[c].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("{}", model_path.display());
    println!("{}", dir.join("assignments.csv").display());
    Ok(model_path)
}

/// Features for a stored model: the run's feature spec, transformed with the
/// scaling recorded at fit time when the model carries one.
fn features_for_model(rc: &RunConfig, tables: &Tables, doc: &ModelDocument) -> CliResult<FeatureMatrix> {
    let Some(desc) = &doc.features else {
        let fm = featurize(&tables.services, &tables.agencies, &rc.features, rc.scaling)?;
        check_dimension(doc.d, fm.matrix.cols())?;
        return Ok(fm);
    };
    let mut fm = featurize(&tables.services, &tables.agencies, &rc.features, Scaling::None)?;
    check_dimension(doc.d, fm.matrix.cols())?;
    let names: Vec<&str> = rc.features.iter().map(|f| f.name()).collect();
    if names != desc.names {
        return Err(CliError::Usage(format!(
            "model was fitted on features [{}] but the run asks for [{}]",
            desc.names.join(", "),
            names.join(", ")
        )));
    }
    if desc.center.len() != doc.d || desc.scale.len() != doc.d {
        return Err(foodgmm::Error::InvalidArgument("model feature transform has the wrong length".into()).into());
    }
    let d = doc.d;
    let mut values = fm.matrix.as_slice().to_vec();
    for row in values.chunks_exact_mut(d) {
        for ((v, c), s) in row.iter_mut().zip(&desc.center).zip(&desc.scale) {
            *v = (*v - c) / s;
        }
    }
    fm.matrix = RowMatrix::new(fm.matrix.rows(), d, values)?;
    fm.scaling = desc.scaling.parse()?;
    fm.center = desc.center.clone();
    fm.scale = desc.scale.clone();
    Ok(fm)
}

fn check_dimension(model_d: usize, feature_d: usize) -> CliResult<()> {
    if model_d != feature_d {
        return Err(CliError::Dimension { model_d, feature_d });
    }
    Ok(())
}

pub fn read_model(path: &Path) -> CliResult<ModelDocument> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(ModelDocument::from_json(&text)?)
}

pub fn cmd_profile(settings: &Settings) -> CliResult<PathBuf> {
    let rc = settings.run_config()?;
    let stamp = settings.stamp()?;
    ensure_dir(&rc.output_dir)?;
    let doc = read_model(&rc.model_path)?;
    let model = doc.to_model()?;
    let tables = load(&rc)?;
    let fm = features_for_model(&rc, &tables, &doc)?;
    progress!("assigning {} rows to {} components", fm.matrix.rows(), model.k());
    let assignments = predict(&model, &fm.matrix)?.assignments;
    let labeling = label_clusters(&assignments, &fm.distances, model.k())?;
    let ranks = labeling.ranked(&assignments);

    let records: Vec<_> = fm.row_index.iter().map(|&i| tables.services[i].clone()).collect();
    let agencies: Vec<_> = tables
        .agencies
        .records()
        .iter()
        .map(|a| (a.agency_id.clone(), a.location))
        .collect();
    let grid = build_grid(&agencies, rc.profile.threshold_miles)?;
    let nearest = nearest_distances(&records, &grid);

    let profile = build_profile(
        &ranks,
        &labeling.labels,
        &records,
        &fm.distances,
        &nearest,
        &tables.tracts,
        &rc.profile,
    )?;
    let quantiles = distance_quantiles(&ranks, &fm.distances, &DEFAULT_QUANTILES)?;
    let gaps = cluster_gaps(&labeling, &ranks, &fm.distances)?;
    let deserts = desert_report(&records, &nearest, &tables.tracts, rc.profile.threshold_miles)?;

    let dir = &rc.output_dir;
    write_stamped(&dir.join("profile.csv"), &stamp, |w| profile.write_csv(w))?;
    let text = profile.to_text_table();
    write_stamped(&dir.join("profile.txt"), &stamp, |w| Ok(w.write_all(text.as_bytes())?))?;
    write_stamped(&dir.join("quantiles.csv"), &stamp, |w| {
        write_quantiles_csv(&quantiles, &labeling.labels, &DEFAULT_QUANTILES, w)
    })?;
    write_stamped(&dir.join("gaps.csv"), &stamp, |w| write_gaps_csv(&gaps, w))?;
    write_stamped(&dir.join("deserts.csv"), &stamp, |w| deserts.write_csv(w))?;
    let points = records.iter().zip(&ranks).zip(&fm.distances).map(|((r, &rank), &dist)| FamilyPoint {
        record: r,
        cluster_label: &labeling.labels[rank],
        distance_miles: dist,
    });
    write_geojson(&dir.join("clusters.geojson"), &stamp, points, tables.agencies.records())?;
    progress!("{} desert tracts", deserts.tracts.len());
    print!("{text}");
    Ok(dir.clone())
}
