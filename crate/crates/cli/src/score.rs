use std::path::{Path, PathBuf};

use droploop::export::write_atomic;
use droploop::vision::{combined_loss, render_overlay, segment, LossWeights, SegmentParams};
use droploop::Raster;

use crate::CliError;

pub const HEADER: [&str; 5] = ["file", "geometric", "yield", "combined", "error"];

/// PNG files directly inside `path`, by name; or `path` itself.
fn inputs(path: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    if path.is_file() {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(name, path.to_owned())]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        let is_png = p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if p.is_file() && is_png {
            files.push((p.file_name().expect("listed file").to_string_lossy().into_owned(), p));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no PNG files in {}", path.display())));
    }
    Ok(files)
}

pub struct ScoreOutcome {
    pub csv: String,
    pub failures: usize,
}

/// One CSV row per image; a file that cannot be read gets an error row
/// instead of scores.
pub fn score_path(
    path: &Path,
    weights: &LossWeights,
    params: &SegmentParams,
    overlays: Option<&Path>,
) -> Result<ScoreOutcome, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(HEADER).map_err(|e| CliError::Data(e.to_string()))?;
    let mut failures = 0;
    for (name, file) in inputs(path)? {
        let row = match Raster::read_png(&file) {
            Ok(img) => {
                let seg = segment(&img, params);
                let s = combined_loss(&seg, weights);
                if let Some(dir) = overlays {
                    let stem = Path::new(&name).file_stem().map_or(name.clone(), |s| s.to_string_lossy().into_owned());
                    let png = render_overlay(&img, &seg).map_err(|e| CliError::Data(e.to_string()))?;
                    write_atomic(&dir.join(format!("{stem}-overlay.png")), &png)?;
                }
                [name, s.geometric.to_string(), s.yield_.to_string(), s.combined.to_string(), String::new()]
            }
            Err(e) => {
                failures += 1;
                [name, String::new(), String::new(), String::new(), e.to_string()]
            }
        };
        w.write_record(&row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(ScoreOutcome {
        csv: String::from_utf8(bytes).expect("csv of utf-8 fields"),
        failures,
    })
}
