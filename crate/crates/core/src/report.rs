//! Plot-data emission and crash-safe artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::suite::{ReferenceFixture, RunCell, RunRecord};

pub const PLOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotKind {
    BehaviorBars,
    ParetoFrontier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nondominated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<PlotPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotMetadata {
    /// SHA-256 over the sweep's cell definitions, hex encoded.
    pub sweep_hash: String,
    pub x_label: String,
    pub y_label: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotData {
    pub schema: u32,
    pub kind: PlotKind,
    pub series: Vec<Series>,
    pub metadata: PlotMetadata,
}

impl PlotData {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plot data serializes")
    }
}

/// Hash of the cells a set of records came from, independent of outcomes
/// and timing.
pub fn sweep_hash(cells: &[&RunCell]) -> String {
    let mut h = Sha256::new();
    for cell in cells {
        h.update(serde_json::to_vec(cell).expect("cell serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn metadata(records: &[RunRecord], x_label: &str, y_label: &str) -> PlotMetadata {
    let cells: Vec<&RunCell> = records.iter().map(|r| &r.cell).collect();
    PlotMetadata {
        sweep_hash: sweep_hash(&cells),
        x_label: x_label.into(),
        y_label: y_label.into(),
        version: crate::suite::ARTIFACT_VERSION.into(),
    }
}

/// Intended and hacking rate per successful cell, one bar each.
pub fn behavior_bars(records: &[RunRecord]) -> PlotData {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let series = |name: &str, pick: fn(&RunRecord) -> f64| Series {
        name: name.into(),
        points: ok
            .iter()
            .enumerate()
            .map(|(i, r)| PlotPoint { label: r.cell.label(), x: i as f64, y: pick(r), nondominated: None })
            .collect(),
    };
    PlotData {
        schema: PLOT_SCHEMA_VERSION,
        kind: PlotKind::BehaviorBars,
        series: vec![
            series("intended_rate", |r| r.metrics.unwrap().intended_rate),
            series("hacking_rate", |r| r.metrics.unwrap().hacking_rate),
        ],
        metadata: metadata(records, "condition", "rate"),
    }
}

/// Bars for the published reference numbers. Missing cells are left out.
pub fn fixture_bars(fixture: &ReferenceFixture) -> PlotData {
    let rows = fixture.rows();
    let series = |name: &str, pick: fn(&crate::suite::FixtureRow) -> Option<f64>| Series {
        name: name.into(),
        points: rows
            .iter()
            .enumerate()
            .filter_map(|(i, (label, row))| {
                pick(row).map(|y| PlotPoint { label: (*label).into(), x: i as f64, y, nondominated: None })
            })
            .collect(),
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(fixture).expect("fixture serializes"));
    PlotData {
        schema: PLOT_SCHEMA_VERSION,
        kind: PlotKind::BehaviorBars,
        series: vec![series("intended_rate", |r| r.intended_rate), series("hacking_rate", |r| r.hacking_rate)],
        metadata: PlotMetadata {
            sweep_hash: hex::encode(h.finalize()),
            x_label: "condition".into(),
            y_label: "rate".into(),
            version: crate::suite::ARTIFACT_VERSION.into(),
        },
    }
}

/// Indices of the points not dominated when minimising `x` and maximising
/// `y`. Exact duplicates do not dominate each other.
pub fn nondominated(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (xi, yi) = points[i];
            !points.iter().any(|&(xj, yj)| xj <= xi && yj >= yi && (xj < xi || yj > yi))
        })
        .collect()
}

/// Hacking rate against true return over successful cells. The `cells`
/// series flags each point; `frontier` holds the nondominated ones sorted
/// by hacking rate.
pub fn pareto_frontier(records: &[RunRecord]) -> PlotData {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let xy: Vec<(f64, f64)> = ok
        .iter()
        .map(|r| {
            let m = r.metrics.unwrap();
            (m.hacking_rate, m.true_return)
        })
        .collect();
    let front = nondominated(&xy);
    let cells: Vec<PlotPoint> = ok
        .iter()
        .zip(&xy)
        .enumerate()
        .map(|(i, (r, &(x, y)))| PlotPoint { label: r.cell.label(), x, y, nondominated: Some(front.contains(&i)) })
        .collect();
    let mut frontier: Vec<PlotPoint> = front.iter().map(|&i| cells[i].clone()).collect();
    frontier.sort_by(|a, b| a.x.total_cmp(&b.x).then(b.y.total_cmp(&a.y)));
    PlotData {
        schema: PLOT_SCHEMA_VERSION,
        kind: PlotKind::ParetoFrontier,
        series: vec![
            Series { name: "cells".into(), points: cells },
            Series { name: "frontier".into(), points: frontier },
        ],
        metadata: metadata(records, "hacking_rate", "true_return"),
    }
}

/// Both plot payloads for a set of records.
pub fn emit_plot_data(records: &[RunRecord]) -> (PlotData, PlotData) {
    (behavior_bars(records), pareto_frontier(records))
}

/// Writes a set of files into one directory all-or-nothing: every file is
/// staged under a temporary name and only renamed into place once all of
/// them were written. On error the staged files and any outputs this call
/// created are removed.
pub fn write_artifacts(dir: &Path, files: &[(&str, Vec<u8>)], force: bool) -> Result<Vec<PathBuf>> {
    if !force {
        let existing: Vec<&str> = files.iter().map(|(n, _)| *n).filter(|n| dir.join(n).exists()).collect();
        if !existing.is_empty() {
            return Err(Error::Usage(format!(
                "{} already contains {}; pass --force to overwrite",
                dir.display(),
                existing.join(", ")
            )));
        }
    }
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let mut placed: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            staged.push((tmp.clone(), dir.join(name)));
            fs::write(&tmp, bytes)?;
        }
        for (tmp, dst) in &staged {
            let fresh = !dst.exists();
            fs::rename(tmp, dst)?;
            if fresh {
                placed.push(dst.clone());
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        for dst in &placed {
            let _ = fs::remove_file(dst);
        }
        return Err(e);
    }
    Ok(staged.into_iter().map(|(_, dst)| dst).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_front(points: &[(f64, f64)]) -> Vec<usize> {
        // i survives iff no j is at least as good on both and better on one
        let mut out = Vec::new();
        'outer: for i in 0..points.len() {
            for j in 0..points.len() {
                let better_x = points[j].0 < points[i].0;
                let better_y = points[j].1 > points[i].1;
                let no_worse = points[j].0 <= points[i].0 && points[j].1 >= points[i].1;
                if no_worse && (better_x || better_y) {
                    continue 'outer;
                }
            }
            out.push(i);
        }
        out
    }

    #[test]
    fn frontier_example() {
        let pts = [(0.0, -0.4), (0.5, 0.2), (0.9, -1.0), (0.0, -0.5), (0.5, 0.2)];
        assert_eq!(nondominated(&pts), vec![0, 1, 4]);
    }

    #[test]
    fn frontier_matches_pairwise_definition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..12);
            // coarse grid so ties and duplicates occur
            let pts: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.gen_range(0..4) as f64 / 4.0, rng.gen_range(-4..4) as f64 / 4.0)).collect();
            assert_eq!(nondominated(&pts), brute_force_front(&pts));
        }
    }

    #[test]
    fn fixture_bars_skip_missing_cells() {
        let pd = fixture_bars(&ReferenceFixture::PUBLISHED);
        assert_eq!(pd.schema, 1);
        assert_eq!(pd.series[0].points.len(), 3);
        assert_eq!(pd.series[0].points[1].y, 0.999);
        let back: PlotData = serde_json::from_str(&pd.to_json()).unwrap();
        assert_eq!(back, pd);
    }

    #[test]
    fn artifacts_refuse_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(dir.path(), &[("a.txt", b"one".to_vec())], false).unwrap();
        let err = write_artifacts(dir.path(), &[("a.txt", b"two".to_vec())], false).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"one");
        write_artifacts(dir.path(), &[("a.txt", b"two".to_vec())], true).unwrap();
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"two");
    }

    #[test]
    fn failed_write_leaves_no_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        // A directory squatting on the second target makes the rename fail.
        fs::create_dir(dir.path().join("b.json")).unwrap();
        fs::write(dir.path().join("b.json").join("x"), b"").unwrap();
        let err = write_artifacts(dir.path(), &[("a.json", b"{}".to_vec()), ("b.json", b"{}".to_vec())], true);
        assert!(err.is_err());
        let names: Vec<String> =
            fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert!(names.iter().all(|n| !n.ends_with(".partial")), "{names:?}");
        assert!(!dir.path().join("a.json").exists());
    }
}
