//! File-drop protocol for real hardware: write `<id>.req.json` into an
//! inbox, wait for `<id>.png` to appear next to it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::sampling::PrintConditions;

use super::{Printer, PrinterError, Synthesis, SynthesisTimings};

pub const POLL_INTERVAL: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub id: String,
    pub pressure_mpa: f64,
    pub frequency_hz: f64,
    pub speed_mm_s: f64,
}

impl ReplayRequest {
    pub fn new(id: &str, cond: &PrintConditions) -> Self {
        Self {
            id: id.to_string(),
            pressure_mpa: cond.pressure,
            frequency_hz: cond.frequency,
            speed_mm_s: cond.speed,
        }
    }

    pub fn conditions(&self) -> PrintConditions {
        PrintConditions::new(self.pressure_mpa, self.frequency_hz, self.speed_mm_s)
    }

    /// The request file body. Numbers use the shortest representation that
    /// parses back to the same `f64`.
    pub fn to_json(&self) -> String {
        let num = |v: f64| serde_json::to_string(&v).expect("finite");
        format!(
            "{{\"id\": {}, \"pressure_mpa\": {}, \"frequency_hz\": {}, \"speed_mm_s\": {}}}\n",
            serde_json::to_string(&self.id).expect("string"),
            num(self.pressure_mpa),
            num(self.frequency_hz),
            num(self.speed_mm_s),
        )
    }
}

fn write_atomic(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)
}

/// Requests one print through `inbox` and blocks until the response image
/// is decodable or `timeout` runs out.
pub fn replay_print(
    cond: &PrintConditions,
    id: &str,
    inbox: &Path,
    timeout: Duration,
) -> Result<Raster, PrinterError> {
    let finite = cond.to_array().iter().all(|v| v.is_finite());
    if !finite {
        return Err(PrinterError::Config(format!("non-finite conditions {cond:?}")));
    }
    let valid_id = !id.is_empty() && !id.contains(['/', '\\']) && id != "." && id != "..";
    if !valid_id {
        return Err(PrinterError::Config(format!("invalid request id `{id}`")));
    }
    let request = ReplayRequest::new(id, cond);
    write_atomic(&inbox.join(format!("{id}.req.json")), request.to_json().as_bytes())?;

    let response = inbox.join(format!("{id}.png"));
    let start = Instant::now();
    // A file that fails to decode gets one more poll in case it was caught
    // mid-write; if its size has not moved by then it is reported.
    let mut undecodable: Option<u64> = None;
    loop {
        if let Ok(meta) = fs::metadata(&response) {
            match decode(&response) {
                Ok(r) => return Ok(r),
                Err(source) => {
                    if undecodable == Some(meta.len()) {
                        return Err(format_error(&response, source));
                    }
                    undecodable = Some(meta.len());
                }
            }
        }
        let waited = start.elapsed();
        if waited >= timeout {
            if undecodable.is_some() {
                return decode(&response).map_err(|e| format_error(&response, e));
            }
            return Err(PrinterError::SynthesisTimeout {
                id: id.to_string(),
                waited,
            });
        }
        std::thread::sleep(POLL_INTERVAL.min(timeout - waited));
    }
}

fn decode(path: &Path) -> Result<Raster, crate::raster::RasterError> {
    Raster::from_png_bytes(&fs::read(path)?)
}

fn format_error(path: &Path, source: crate::raster::RasterError) -> PrinterError {
    PrinterError::Format {
        path: path.display().to_string(),
        source,
    }
}

/// [`Printer`] speaking the file-drop protocol. Request ids are
/// `<prefix>-<n>` with `n` counting from 1.
#[derive(Debug, Clone)]
pub struct ReplayPrinter {
    pub inbox: PathBuf,
    pub timeout: Duration,
    pub prefix: String,
    issued: u64,
}

impl ReplayPrinter {
    pub fn new(inbox: impl Into<PathBuf>, timeout: Duration, prefix: &str) -> Result<Self, PrinterError> {
        let inbox = inbox.into();
        if !inbox.is_dir() {
            return Err(PrinterError::Config(format!(
                "inbox {} is not a directory",
                inbox.display()
            )));
        }
        Ok(Self {
            inbox,
            timeout,
            prefix: prefix.to_string(),
            issued: 0,
        })
    }

    pub fn next_id(&self) -> String {
        format!("{}-{:04}", self.prefix, self.issued + 1)
    }
}

impl Printer for ReplayPrinter {
    fn synthesize(&mut self, cond: &PrintConditions) -> Result<Synthesis, PrinterError> {
        let id = self.next_id();
        self.issued += 1;
        let t = Instant::now();
        let raster = replay_print(cond, &id, &self.inbox, self.timeout)?;
        // the hardware side does not report its phases separately
        Ok(Synthesis {
            raster,
            timings: SynthesisTimings {
                print: t.elapsed().as_secs_f64(),
                ..Default::default()
            },
        })
    }
}
