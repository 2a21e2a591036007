use serde::{Deserialize, Serialize};

use crate::sampling::{ParameterSpace, PrintConditions, DIMS};
use crate::surrogate::GridField;

use super::proposer::ArchivedModel;
use super::LoopError;

/// Kernel width of the 1-D interpolation, in unit-cube coordinates.
pub const MANIFOLD_BANDWIDTH: f64 = 0.1;

/// `|prediction of b - prediction of a|` over a full grid; cross-sections
/// come from [`GridField::cross_sections`].
pub fn loss_delta_field(a: &ArchivedModel, b: &ArchivedModel, counts: [usize; DIMS]) -> Result<GridField, LoopError> {
    Ok(GridField::evaluate(a.space(), counts, |u| {
        (b.predict_unit(u) - a.predict_unit(u)).abs()
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub dimension: usize,
    /// Grid positions in physical units.
    pub grid: Vec<f64>,
    pub loss: Vec<f64>,
}

/// Loss against each parameter on its own, interpolated from the samples
/// with a Gaussian kernel (Nadaraya-Watson).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifold1d {
    pub space: ParameterSpace,
    pub curves: Vec<ManifoldCurve>,
    /// The sample with the lowest loss.
    pub best: (PrintConditions, f64),
}

impl Manifold1d {
    /// `dimension,value,loss`, one row per grid point per dimension.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,value,loss\n");
        for c in &self.curves {
            let name = &self.space.dims()[c.dimension].name;
            for (g, l) in c.grid.iter().zip(&c.loss) {
                out.push_str(&format!("{name},{g},{l}\n"));
            }
        }
        out
    }
}

pub fn manifold_1d(
    space: &ParameterSpace,
    samples: &[(PrintConditions, f64)],
    n_grid: usize,
    bandwidth: f64,
) -> Result<Manifold1d, LoopError> {
    if samples.is_empty() || n_grid < 2 || !(bandwidth > 0.0) {
        return Err(LoopError::Argument(format!(
            "manifold needs samples, n_grid >= 2 and a positive bandwidth (got {} samples, n_grid {n_grid}, bandwidth {bandwidth})",
            samples.len()
        )));
    }
    let unit: Vec<_> = samples.iter().map(|(c, y)| (space.normalize(c), *y)).collect();
    let curves = (0..DIMS)
        .map(|d| {
            let dim = &space.dims()[d];
            let ts: Vec<f64> = (0..n_grid).map(|i| i as f64 / (n_grid - 1) as f64).collect();
            let loss = ts
                .iter()
                .map(|&t| {
                    // weights relative to the nearest sample, so far grid
                    // points do not underflow to 0/0
                    let d2: Vec<f64> = unit.iter().map(|(u, _)| (u[d] - t).powi(2)).collect();
                    let near = d2.iter().copied().fold(f64::INFINITY, f64::min);
                    let (mut num, mut den) = (0.0, 0.0);
                    for ((_, y), q) in unit.iter().zip(&d2) {
                        let w = (-(q - near) / (2.0 * bandwidth * bandwidth)).exp();
                        num += w * y;
                        den += w;
                    }
                    num / den
                })
                .collect();
            ManifoldCurve {
                dimension: d,
                grid: ts.iter().map(|t| dim.low + t * dim.width()).collect(),
                loss,
            }
        })
        .collect();
    let best = samples
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    Ok(Manifold1d {
        space: space.clone(),
        curves,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{GpConfig, GpModel};

    fn gp(extra: &[(PrintConditions, f64)]) -> ArchivedModel {
        let mut data = crate::fixtures::table1();
        data.extend_from_slice(extra);
        ArchivedModel::Gp(GpModel::fit(&data, &ParameterSpace::default(), &GpConfig::default()).unwrap())
    }

    #[test]
    fn delta_of_a_model_with_itself_is_zero() {
        let m = gp(&[]);
        let f = loss_delta_field(&m, &m, [5, 6, 7]).unwrap();
        assert_eq!(f.values.len(), 210);
        assert!(f.values.iter().all(|v| *v == 0.0));
        assert_eq!(f.cross_sections().len(), 3);
    }

    #[test]
    fn delta_is_nonnegative_and_symmetric() {
        let a = gp(&[]);
        let b = gp(&[(PrintConditions::new(0.03, 38.0, 700.0), 0.2)]);
        let ab = loss_delta_field(&a, &b, [6, 6, 6]).unwrap();
        let ba = loss_delta_field(&b, &a, [6, 6, 6]).unwrap();
        assert!(ab.values.iter().all(|v| *v >= 0.0));
        assert_eq!(ab.values, ba.values);
        assert!(ab.max() > 0.0);
    }

    #[test]
    fn too_coarse_grid_is_an_error() {
        let m = gp(&[]);
        assert!(loss_delta_field(&m, &m, [1, 5, 5]).is_err());
    }

    #[test]
    fn manifold_shape_and_bounds() {
        let space = ParameterSpace::default();
        let data = crate::fixtures::table1();
        let m = manifold_1d(&space, &data, 21, MANIFOLD_BANDWIDTH).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 21);
        assert!(csv.starts_with("dimension,value,loss\n"));
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, y)| (l.min(*y), h.max(*y)));
        for c in &m.curves {
            assert_eq!(c.grid[0], space.dims()[c.dimension].low);
            // a weighted mean stays inside the data range
            assert!(c.loss.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
        }
        assert_eq!(m.best.1, lo);
    }

    #[test]
    fn manifold_matches_a_direct_weighted_mean() {
        let space = ParameterSpace::default();
        let pts = [
            (space.denormalize([0.0, 0.5, 0.5]), 0.2),
            (space.denormalize([1.0, 0.5, 0.5]), 0.6),
        ];
        let m = manifold_1d(&space, &pts, 3, 0.5).unwrap();
        // at t = 0: weights 1 and exp(-1 / (2 * 0.25)) = e^-2
        let w = (-2.0f64).exp();
        assert!((m.curves[0].loss[0] - (0.2 + 0.6 * w) / (1.0 + w)).abs() < 1e-12);
        assert!((m.curves[0].loss[1] - 0.4).abs() < 1e-12);
        // both samples share the other coordinates, so those curves are flat
        assert!(m.curves[1].loss.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn far_grid_points_do_not_underflow() {
        let space = ParameterSpace::default();
        let pts = [(space.denormalize([0.0; 3]), 0.3), (space.denormalize([0.01, 0.0, 0.0]), 0.5)];
        let m = manifold_1d(&space, &pts, 5, 1e-3).unwrap();
        assert!(m.curves.iter().flat_map(|c| &c.loss).all(|v| v.is_finite()));
    }

    #[test]
    fn manifold_argument_errors() {
        let space = ParameterSpace::default();
        assert!(manifold_1d(&space, &[], 10, 0.1).is_err());
        let one = [(space.denormalize([0.5; 3]), 0.5)];
        assert!(manifold_1d(&space, &one, 1, 0.1).is_err());
        assert!(manifold_1d(&space, &one, 10, 0.0).is_err());
    }
}
