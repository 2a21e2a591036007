use std::path::{Path, PathBuf};

use droploop::closed_loop::{loss_delta_field, manifold_1d, ArchivedModel};
use droploop::export::{curve_png, heatmap_png, write_atomic};
use droploop::surrogate::{acquisition_field, GpModel, GridField};
use droploop::{ParameterSpace, PrintConditions};

use crate::config::ReportConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Acquisition,
    LossDelta,
    Manifold1d,
}

/// Writes a CSV and a heatmap for each of the three cross-sections of
/// `field`, named `<stem>-<x axis>-<y axis>`.
fn write_sections(dir: &Path, stem: &str, field: &GridField, title: &str, cfg: &ReportConfig) -> Result<Vec<PathBuf>, CliError> {
    let space = &field.space;
    let mut written = Vec::new();
    for p in field.cross_sections() {
        let (xn, yn) = (&space.dims()[p.x_axis].name, &space.dims()[p.y_axis].name);
        let base = dir.join(format!("{stem}-{xn}-{yn}"));
        let csv = base.with_extension("csv");
        write_atomic(&csv, p.to_csv(space).as_bytes())?;
        let png = heatmap_png(&p, (xn, yn), title, cfg.scale).map_err(|e| CliError::Data(e.to_string()))?;
        write_atomic(&base.with_extension("png"), &png)?;
        written.push(csv);
    }
    Ok(written)
}

fn counts(cfg: &ReportConfig) -> [usize; 3] {
    [cfg.grid; 3]
}

/// Expected improvement for a GP; for the ridge arm, which ranks
/// candidates by predicted loss alone, the predicted-loss surface.
pub fn acquisition(dir: &Path, stem: &str, model: &ArchivedModel, cfg: &ReportConfig) -> Result<Vec<PathBuf>, CliError> {
    let (field, title) = match model {
        ArchivedModel::Gp(gp) => (gp_acquisition(gp, cfg)?, format!("{stem} expected improvement")),
        ArchivedModel::Ridge(m) => (
            GridField::evaluate(&m.space, counts(cfg), |u| m.predict_unit(u)).map_err(|e| CliError::Config(e.to_string()))?,
            format!("{stem} predicted loss"),
        ),
    };
    write_sections(dir, stem, &field, &title, cfg)
}

fn gp_acquisition(gp: &GpModel, cfg: &ReportConfig) -> Result<GridField, CliError> {
    acquisition_field(gp, gp.best_observed(), counts(cfg)).map_err(|e| CliError::Config(e.to_string()))
}

/// `|prediction at b - prediction at a|`; returns the files and the field
/// maximum.
pub fn loss_delta(
    dir: &Path,
    (ta, a): (usize, &ArchivedModel),
    (tb, b): (usize, &ArchivedModel),
    cfg: &ReportConfig,
) -> Result<(Vec<PathBuf>, f64), CliError> {
    let field = loss_delta_field(a, b, counts(cfg)).map_err(|e| CliError::Config(e.to_string()))?;
    let stem = format!("delta-{ta:03}-{tb:03}");
    let title = format!("loss delta, update {ta} to {tb}");
    Ok((write_sections(dir, &stem, &field, &title, cfg)?, field.max()))
}

/// `manifold1d.csv`, `best.csv` and one curve PNG per dimension.
pub fn manifold(dir: &Path, space: &ParameterSpace, samples: &[(PrintConditions, f64)], cfg: &ReportConfig) -> Result<Vec<PathBuf>, CliError> {
    let m = manifold_1d(space, samples, cfg.manifold_points, cfg.bandwidth).map_err(|e| CliError::Data(e.to_string()))?;
    let csv = dir.join("manifold1d.csv");
    write_atomic(&csv, m.to_csv().as_bytes())?;
    let (bc, bl) = m.best;
    let best = dir.join("best.csv");
    write_atomic(
        &best,
        format!("pressure_mpa,frequency_hz,speed_mm_s,loss\n{},{},{},{bl}\n", bc.pressure, bc.frequency, bc.speed).as_bytes(),
    )?;
    let unit = space.normalize(&bc);
    for c in &m.curves {
        let name = &space.dims()[c.dimension].name;
        let at = (unit[c.dimension] * (c.grid.len() - 1) as f64).round() as usize;
        let png = curve_png(&c.loss, 200, Some((at, bl)), &format!("loss against {name}"))
            .map_err(|e| CliError::Data(e.to_string()))?;
        write_atomic(&dir.join(format!("manifold1d-{name}.png")), &png)?;
    }
    Ok(vec![csv, best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use droploop::surrogate::GpConfig;

    fn table_model() -> ArchivedModel {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table1.csv");
        let data: Vec<_> = crate::table::read(&path)
            .unwrap()
            .iter()
            .map(|r| (r.conditions(), r.score.unwrap()))
            .collect();
        ArchivedModel::Gp(GpModel::fit(&data, &ParameterSpace::default(), &GpConfig::default()).unwrap())
    }

    fn small() -> ReportConfig {
        ReportConfig {
            grid: 6,
            manifold_points: 11,
            ..Default::default()
        }
    }

    #[test]
    fn three_sections_per_model() {
        let dir = tempfile::tempdir().unwrap();
        let files = acquisition(dir.path(), "update-001", &table_model(), &small()).unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(
            names,
            ["update-001-pressure-frequency.csv", "update-001-frequency-speed.csv", "update-001-speed-pressure.csv"]
        );
        assert!(dir.path().join("update-001-speed-pressure.png").exists());
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 1 + 36);
    }

    #[test]
    fn self_delta_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let m = table_model();
        let (files, max) = loss_delta(dir.path(), (2, &m), (2, &m), &small()).unwrap();
        assert_eq!(max, 0.0);
        for f in files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
        }
    }

    #[test]
    fn manifold_rows_per_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let m = table_model();
        let samples = m.as_gp().unwrap().training_set();
        manifold(dir.path(), &ParameterSpace::default(), &samples, &small()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifold1d.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 11);
        assert!(dir.path().join("manifold1d-speed.png").exists());
        let best = std::fs::read_to_string(dir.path().join("best.csv")).unwrap();
        assert_eq!(best.lines().count(), 2);
    }
}
