//! Deterministic serialization of study outputs and config loading.
//!
//! Every writer produces the same bytes for the same inputs: floats are
//! printed with 17 significant digits (enough to round-trip f64 exactly),
//! CSV follows RFC 4180 with CRLF terminators and '.' decimals, JSON is
//! pretty-printed with sorted-by-construction field order, and nothing
//! embeds a timestamp. An output directory is always written through
//! [`write_output_bundle`], which ends by listing every file it wrote in
//! `manifest.json` with its SHA-256, so reruns can be compared hash by hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drift_estimators::DriftEstimate;
use crate::error::{Result, VouError};
use crate::experiment_harness::{preset, ExperimentConfig, ExperimentReport};
use crate::path_simulator::SamplePath;

/// 17 significant digits, the shortest count that round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn io_err(context: &str, e: impl std::fmt::Display) -> VouError {
    VouError::Io(std::io::Error::other(format!("{context}: {e}")))
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header).map_err(|e| io_err("csv header", e))?;
    fill(&mut w)?;
    w.into_inner().map_err(|e| io_err("csv flush", e))
}

/// Aggregated rows of a study as an RFC 4180 table.
pub fn report_csv_bytes(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "study", "label", "horizon", "dt", "lag", "n_paths", "seed", "estimate", "sd", "se",
            "target", "rel_error", "rel_error_se",
        ],
        |w| {
            for r in &report.rows {
                w.write_record([
                    report.study.as_str(),
                    r.label.as_str(),
                    &fmt_f64(r.horizon),
                    &fmt_f64(r.dt),
                    &fmt_f64(r.lag),
                    &r.n_paths.to_string(),
                    &r.seed.to_string(),
                    &fmt_f64(r.estimate),
                    &fmt_f64(r.sd),
                    &fmt_f64(r.se),
                    &fmt_f64(r.target),
                    &fmt_f64(r.rel_error),
                    &fmt_f64(r.rel_error_se),
                ])
                .map_err(|e| io_err("csv row", e))?;
            }
            Ok(())
        },
    )
}

/// Per-path estimates as an RFC 4180 table.
pub fn estimates_csv_bytes(rows: &[(usize, u64, DriftEstimate)]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "path", "seed", "method", "horizon", "n", "m", "b_hat", "beta_hat", "f_denominator",
        ],
        |w| {
            for (idx, seed, e) in rows {
                w.write_record([
                    idx.to_string(),
                    seed.to_string(),
                    e.method.to_string(),
                    fmt_f64(e.horizon),
                    e.n.to_string(),
                    e.m.to_string(),
                    fmt_f64(e.b_hat),
                    fmt_f64(e.beta_hat),
                    fmt_f64(e.f_denominator),
                ])
                .map_err(|e| io_err("csv row", e))?;
            }
            Ok(())
        },
    )
}

/// Simulated paths as an RFC 4180 table, one time column and one column per
/// path. All paths must share the grid.
pub fn paths_csv_bytes(paths: &[SamplePath]) -> Result<Vec<u8>> {
    let first = paths
        .first()
        .ok_or_else(|| VouError::Usage("no paths to serialize".into()))?;
    let (len, dt) = (first.values().len(), first.grid_step());
    for p in paths {
        if p.values().len() != len || (p.grid_step() - dt).abs() > 1e-12 * dt {
            return Err(VouError::Usage(
                "paths in one table must share the grid".into(),
            ));
        }
    }
    let mut header = vec!["t".to_string()];
    header.extend(paths.iter().map(|p| format!("path_{}", p.seed())));
    csv_bytes(
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        |w| {
            for k in 0..len {
                let mut record = vec![fmt_f64(k as f64 * dt)];
                record.extend(paths.iter().map(|p| fmt_f64(p.values()[k])));
                w.write_record(&record).map_err(|e| io_err("csv row", e))?;
            }
            Ok(())
        },
    )
}

fn json_bytes<T: Serialize>(value: &T, what: &str) -> Result<Vec<u8>> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| io_err(&format!("{what} json"), e))?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Full report (rows, normality block, notes) as pretty JSON.
pub fn report_json_bytes(report: &ExperimentReport) -> Result<Vec<u8>> {
    json_bytes(report, "report")
}

/// Configuration as pretty JSON; [`load_config`] reads it back unchanged.
pub fn config_json_bytes(config: &ExperimentConfig) -> Result<Vec<u8>> {
    json_bytes(config, "config")
}

/// One file of an output bundle.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Content listing of an output directory, written as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write named files into `dir` and finish with a `manifest.json` listing
/// each file's size and SHA-256. File names must be plain (no separators)
/// and unique; the manifest is sorted by name, so the same contents always
/// produce the same manifest bytes.
pub fn write_output_bundle(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(files.len());
    for (name, _) in files {
        if name.is_empty()
            || name == "manifest.json"
            || name.contains(['/', '\\'])
            || name.starts_with('.')
        {
            return Err(VouError::Usage(format!(
                "output file name {name:?} must be a plain name and not manifest.json"
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(&format!("create {}", dir.display()), e))?;
    for (name, data) in files {
        let path = dir.join(name);
        fs::write(&path, data).map_err(|e| io_err(&format!("write {}", path.display()), e))?;
        entries.push(ManifestEntry {
            name: name.clone(),
            bytes: data.len() as u64,
            sha256: sha256_hex(data),
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    if entries.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(VouError::Usage("duplicate output file name".into()));
    }
    let manifest = Manifest { files: entries };
    let path = dir.join("manifest.json");
    fs::write(&path, json_bytes(&manifest, "manifest")?)
        .map_err(|e| io_err(&format!("write {}", path.display()), e))?;
    Ok(manifest)
}

/// Load a configuration file: either a complete [`ExperimentConfig`] or an
/// object with a `"preset"` name plus fields overriding that preset.
/// Errors carry the offending line and field where the format allows.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("read {}", path.display()), e))?;
    parse_config(&text).map_err(|e| match e {
        VouError::Config(msg) => VouError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parse configuration text; see [`load_config`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| VouError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| VouError::Config("the configuration must be a JSON object".into()))?;

    let config: ExperimentConfig = if let Some(name) = obj.get("preset") {
        let name = name.as_str().ok_or_else(|| {
            VouError::Config("the preset field must be a string".into())
        })?;
        let base = preset(name)?;
        let mut merged = serde_json::to_value(&base)
            .map_err(|e| VouError::Config(format!("preset serialization: {e}")))?;
        let target = merged.as_object_mut().expect("configs serialize to objects");
        for (key, val) in obj {
            if key != "preset" {
                target.insert(key.clone(), val.clone());
            }
        }
        serde_json::from_value(merged)
            .map_err(|e| VouError::Config(format!("after applying preset {name:?}: {e}")))?
    } else {
        serde_json::from_str(text)
            .map_err(|e| VouError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift_estimators::EstimatorMethod;
    use crate::experiment_harness::run_lln;
    use crate::kernel_bank::{KernelKind, KernelSpec};
    use crate::path_simulator::{simulate_batch, Scheme, VouParams};

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = preset("default").unwrap();
        cfg.kernel = KernelSpec::constant_one();
        cfg.horizons = vec![10.0];
        cfg.dts = vec![0.5];
        cfg.n_paths = 8;
        cfg
    }

    #[test]
    fn report_csv_is_rfc4180_and_round_trips_floats() {
        let report = run_lln(&tiny_config()).unwrap();
        let bytes = report_csv_bytes(&report).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\r\n"), "records end with CRLF");
        assert!(text.starts_with("study,label,horizon"));
        assert!(!text.contains(";"), "decimal separator stays '.'");

        let mut reader = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
        let headers = reader.headers().unwrap().clone();
        let est_col = headers.iter().position(|h| h == "estimate").unwrap();
        let lab_col = headers.iter().position(|h| h == "label").unwrap();
        let mut seen = 0;
        for record in reader.records() {
            let record = record.unwrap();
            let parsed: f64 = record[est_col].parse().unwrap();
            let row = report
                .rows
                .iter()
                .find(|r| r.label == record[lab_col])
                .unwrap();
            assert_eq!(parsed.to_bits(), row.estimate.to_bits(), "exact round trip");
            seen += 1;
        }
        assert_eq!(seen, report.rows.len());
        // 17 significant digits: 16 after the point in scientific notation.
        assert!(text.contains("e0") || text.contains("e-") || text.contains("e1"));
        assert_eq!(fmt_f64(1.2), "1.2000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn paths_and_estimates_tables_have_one_row_per_record() {
        let params = VouParams::new(1.2, -1.0, 0.3, 1.0).unwrap();
        let kernel = KernelSpec::constant_one();
        let paths =
            simulate_batch(&kernel, &params, Scheme::Euler, 8, 4.0, 3, 9, None, false).unwrap();
        let text = String::from_utf8(paths_csv_bytes(&paths).unwrap()).unwrap();
        let lines: Vec<&str> = text.trim_end().split("\r\n").collect();
        assert_eq!(lines.len(), 1 + 9, "header plus one line per grid point");
        assert_eq!(lines[0].matches(',').count(), 3, "t plus three paths");

        let plan = crate::drift_estimators::PartitionPlan::new(&kernel, 4.0, 8, 8).unwrap();
        let l = crate::kernel_bank::first_kind_resolvent_sampled(&kernel, 0.5, 4.0).unwrap();
        let rows: Vec<(usize, u64, DriftEstimate)> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let obs = crate::drift_estimators::DiscreteObservation::with_tables(
                    &p.to_path_on_grid().unwrap(),
                    &l,
                    None,
                    &plan,
                )
                .unwrap();
                (i, p.seed(), obs.mle(&plan).unwrap())
            })
            .collect();
        let text = String::from_utf8(estimates_csv_bytes(&rows).unwrap()).unwrap();
        let lines: Vec<&str> = text.trim_end().split("\r\n").collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"), "{}", lines[1]);
        assert!(lines[1].contains(",mle,"));
    }

    #[test]
    fn manifest_lists_every_file_and_reruns_hash_identically() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_lln(&tiny_config()).unwrap();
        let files = vec![
            ("report.csv".to_string(), report_csv_bytes(&report).unwrap()),
            ("report.json".to_string(), report_json_bytes(&report).unwrap()),
            (
                "config.json".to_string(),
                config_json_bytes(&report.config).unwrap(),
            ),
        ];
        let manifest = write_output_bundle(dir.path(), &files).unwrap();
        assert_eq!(manifest.files.len(), 3);
        let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["config.json", "report.csv", "report.json"]);
        for entry in &manifest.files {
            let data = fs::read(dir.path().join(&entry.name)).unwrap();
            assert_eq!(entry.bytes, data.len() as u64);
            assert_eq!(entry.sha256, sha256_hex(&data));
            assert_eq!(entry.sha256.len(), 64);
        }
        let manifest_bytes = fs::read(dir.path().join("manifest.json")).unwrap();

        // A rerun of the same study writes byte-identical files.
        let report2 = run_lln(&tiny_config()).unwrap();
        let files2 = vec![
            ("report.csv".to_string(), report_csv_bytes(&report2).unwrap()),
            ("report.json".to_string(), report_json_bytes(&report2).unwrap()),
            (
                "config.json".to_string(),
                config_json_bytes(&report2.config).unwrap(),
            ),
        ];
        let dir2 = tempfile::tempdir().unwrap();
        let manifest2 = write_output_bundle(dir2.path(), &files2).unwrap();
        assert_eq!(manifest, manifest2);
        assert_eq!(
            manifest_bytes,
            fs::read(dir2.path().join("manifest.json")).unwrap()
        );

        let bad = vec![("../escape".to_string(), vec![1u8])];
        assert!(matches!(
            write_output_bundle(dir.path(), &bad),
            Err(VouError::Usage(_))
        ));
    }

    #[test]
    fn config_loader_names_missing_and_unknown_fields() {
        // Missing beta inside the params block.
        let text = r#"{
            "kernel": {"kind": "fractional", "params": {"alpha": 0.75}},
            "params": {"b": 1.2, "sigma": 0.3, "x0": 1.0},
            "horizons": [10.0],
            "dts": [0.5],
            "n_paths": 4
        }"#;
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta"), "{msg}");
        assert!(msg.contains("line"), "{msg}");

        let err = parse_config("{ not json }").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        let err = parse_config(r#"{"preset": "paper-fig3", "horizonz": [1.0]}"#).unwrap_err();
        assert!(err.to_string().contains("horizonz"), "{err}");

        let err = load_config(Path::new("/nonexistent/config.json")).unwrap_err();
        assert!(matches!(err, VouError::Io(_)));
    }

    #[test]
    fn presets_load_with_overrides_and_round_trip() {
        let cfg = parse_config(r#"{"preset": "paper-fig3", "n_paths": 50}"#).unwrap();
        assert_eq!(cfg.n_paths, 50);
        assert_eq!(cfg.dts, vec![0.2, 0.5, 1.0]);
        assert!(matches!(
            cfg.kernel.kind(),
            KernelKind::Fractional { alpha } if *alpha == 0.75
        ));
        assert_eq!(cfg.estimators, vec![EstimatorMethod::Mle]);

        assert!(matches!(
            parse_config(r#"{"preset": "paper-fig9"}"#),
            Err(VouError::Config(_))
        ));
        // Overrides are validated like any other config.
        assert!(matches!(
            parse_config(r#"{"preset": "default", "n_paths": 1}"#),
            Err(VouError::Config(_))
        ));

        // save -> load is the identity on the default preset.
        let dir = tempfile::tempdir().unwrap();
        let default = preset("default").unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, config_json_bytes(&default).unwrap()).unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&loaded).unwrap(),
            serde_json::to_string(&default).unwrap()
        );
    }
}
