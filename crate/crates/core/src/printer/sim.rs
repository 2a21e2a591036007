//! Deterministic disk-deposition printer model.
//!
//! The nozzle sweeps `scan_rows` rows in a serpentine path, firing at the
//! valve frequency `f` while moving at speed `v`, so droplets land `v / f`
//! mm apart. Each droplet carries `flow_coeff * P / f` mm^3 of ink and is
//! drawn as a disk of the sphere-equivalent radius. Landing positions
//! scatter with standard deviation `jitter_coeff * v`; overlapping disks
//! merge by pixelwise union.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::sampling::{ParameterSpace, PrintConditions};

use super::{HardwareDelays, Printer, PrinterError, Synthesis, SynthesisTimings};

const BACKGROUND: u8 = 255;
const DROPLET: i32 = 40;
const TEXTURE: i32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimPrinterConfig {
    /// Canvas size in pixels, `(width, height)`.
    pub canvas: (usize, usize),
    pub scan_rows: usize,
    pub px_per_mm: f64,
    /// Ink volume per unit pressure per second, mm^3 / (s MPa).
    pub flow_coeff: f64,
    /// Landing-position standard deviation per unit speed, mm / (mm/s).
    pub jitter_coeff: f64,
    pub seed: u64,
    pub delays: HardwareDelays,
}

/// The defaults are coarse on purpose: at 2 px/mm with this much ink the
/// loss varies across the default search box by well over the surrogate's
/// noise floor, from merged films at low speed to sparse scatter at high.
impl Default for SimPrinterConfig {
    fn default() -> Self {
        Self {
            canvas: (400, 400),
            scan_rows: 16,
            px_per_mm: 2.0,
            flow_coeff: 3.0e5,
            jitter_coeff: 0.01,
            seed: 1,
            delays: HardwareDelays::default(),
        }
    }
}

impl SimPrinterConfig {
    pub fn validate(&self) -> Result<(), PrinterError> {
        let (w, h) = self.canvas;
        let positive = [self.px_per_mm, self.flow_coeff, self.jitter_coeff]
            .iter()
            .all(|c| c.is_finite() && *c > 0.0);
        if !positive {
            return Err(PrinterError::Config(
                "px_per_mm, flow_coeff and jitter_coeff must be positive".into(),
            ));
        }
        if self.scan_rows == 0 {
            return Err(PrinterError::Config("scan_rows must be at least 1".into()));
        }
        if w < crate::raster::MIN_EDGE || h < crate::raster::MIN_EDGE {
            return Err(PrinterError::Config(format!("canvas {w}x{h} is too small")));
        }
        Ok(())
    }

    /// Nominal droplet pitch along a row, mm.
    pub fn spacing_mm(cond: &PrintConditions) -> f64 {
        cond.speed / cond.frequency
    }

    /// Sphere-equivalent droplet radius, mm.
    pub fn radius_mm(&self, cond: &PrintConditions) -> f64 {
        let volume = self.flow_coeff * cond.pressure / cond.frequency;
        (3.0 * volume / (4.0 * std::f64::consts::PI)).cbrt()
    }

    /// Droplets deposited per row.
    pub fn droplets_per_row(&self, cond: &PrintConditions) -> usize {
        let row_mm = self.canvas.0 as f64 / self.px_per_mm;
        (row_mm * cond.frequency / cond.speed).floor() as usize
    }
}

/// Mixes the seed with the exact bit patterns of the conditions.
fn condition_seed(seed: u64, cond: &PrintConditions) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in cond.to_array() {
        h ^= v.to_bits();
        // splitmix64 finalizer
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

pub fn simulate_print(cond: &PrintConditions, cfg: &SimPrinterConfig) -> Result<Raster, PrinterError> {
    simulate_print_with_centers(cond, cfg).map(|(r, _)| r)
}

/// Like [`simulate_print`], also returning the droplet centres in pixels.
pub fn simulate_print_with_centers(
    cond: &PrintConditions,
    cfg: &SimPrinterConfig,
) -> Result<(Raster, Vec<(f64, f64)>), PrinterError> {
    cfg.validate()?;
    let valid = cond.to_array().iter().all(|v| v.is_finite() && *v > 0.0);
    if !valid {
        return Err(PrinterError::Config(format!(
            "printing conditions must be positive, got {cond:?}"
        )));
    }
    let (w, h) = cfg.canvas;
    let r_px = cfg.radius_mm(cond) * cfg.px_per_mm;
    if 2.0 * r_px > w.min(h) as f64 {
        return Err(PrinterError::Config(format!(
            "droplet diameter {:.1} px does not fit the {w}x{h} canvas",
            2.0 * r_px
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(condition_seed(cfg.seed, cond));
    let scatter = Normal::new(0.0, cfg.jitter_coeff * cond.speed * cfg.px_per_mm)
        .map_err(|e| PrinterError::Config(e.to_string()))?;
    let spacing_px = SimPrinterConfig::spacing_mm(cond) * cfg.px_per_mm;
    let per_row = cfg.droplets_per_row(cond);
    let pitch = h as f64 / cfg.scan_rows as f64;

    let mut centers = Vec::with_capacity(per_row * cfg.scan_rows);
    for row in 0..cfg.scan_rows {
        let y = (row as f64 + 0.5) * pitch;
        for k in 0..per_row {
            let along = (k as f64 + 0.5) * spacing_px;
            // serpentine: odd rows run right to left
            let x = if row % 2 == 0 { along } else { w as f64 - along };
            centers.push((x + scatter.sample(&mut rng), y + scatter.sample(&mut rng)));
        }
    }

    let mut ink = vec![false; w * h];
    let r2 = r_px * r_px;
    for &(cx, cy) in &centers {
        let x0 = (cx - r_px - 1.0).floor().max(0.0) as usize;
        let y0 = (cy - r_px - 1.0).floor().max(0.0) as usize;
        let x1 = ((cx + r_px + 1.0).ceil().max(0.0) as usize).min(w);
        let y1 = ((cy + r_px + 1.0).ceil().max(0.0) as usize).min(h);
        for py in y0..y1 {
            for px in x0..x1 {
                let (dx, dy) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r2 {
                    ink[py * w + px] = true;
                }
            }
        }
    }

    let data = ink
        .into_iter()
        .map(|wet| {
            if wet {
                (DROPLET + rng.random_range(-TEXTURE..=TEXTURE)) as u8
            } else {
                BACKGROUND
            }
        })
        .collect();
    Ok((Raster::new(w, h, data).expect("canvas validated"), centers))
}

/// [`Printer`] backed by [`simulate_print`]. Requests outside `bounds`,
/// when set, are refused.
#[derive(Debug, Clone, Default)]
pub struct SimPrinter {
    pub config: SimPrinterConfig,
    pub bounds: Option<ParameterSpace>,
}

impl SimPrinter {
    pub fn new(config: SimPrinterConfig) -> Result<Self, PrinterError> {
        config.validate()?;
        Ok(Self { config, bounds: None })
    }

    pub fn with_bounds(mut self, space: ParameterSpace) -> Self {
        self.bounds = Some(space);
        self
    }
}

impl Printer for SimPrinter {
    fn synthesize(&mut self, cond: &PrintConditions) -> Result<Synthesis, PrinterError> {
        if let Some(space) = &self.bounds {
            if !space.contains(cond) {
                return Err(PrinterError::OutOfBounds(*cond));
            }
        }
        let d = self.config.delays;
        let t = Instant::now();
        HardwareDelays::sleep(d.setup_s);
        let setup = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let raster = simulate_print(cond, &self.config)?;
        HardwareDelays::sleep(d.print_s);
        let print = t.elapsed().as_secs_f64();
        let t = Instant::now();
        HardwareDelays::sleep(d.image_s);
        let image = t.elapsed().as_secs_f64();
        Ok(Synthesis {
            raster,
            timings: SynthesisTimings { setup, print, image },
        })
    }
}
