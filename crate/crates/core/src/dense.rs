//! Dense matching over coarse feature grids.
//!
//! The baseline matcher: dot-product similarity between every pair of cells,
//! dual-softmax confidence, and mutual-nearest-neighbour selection. Maps are
//! stored dense and row-major (`rows = cells of A`, `cols = cells of B`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::HomogeneousPoint2;

/// Default dual-softmax temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("descriptor dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("map shape mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    ShapeMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("cell index {index} out of range for grid with {cells} cells")]
    CellOutOfRange { index: usize, cells: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("invalid feature grid: {0}")]
    InvalidGrid(String),
    #[error("confidence value {value} at ({row}, {col}) is outside [0, 1]")]
    InvalidConfidence { row: usize, col: usize, value: f64 },
}

/// Per-image descriptor field on a regular grid of square cells.
///
/// Every descriptor has unit L2 norm. Cell `i` sits at row `i / width`,
/// column `i % width`; its center in pixels is `((col + 0.5)·s, (row + 0.5)·s)`
/// for cell size `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    width: usize,
    height: usize,
    dim: usize,
    cell_size_px: f64,
    data: Vec<f32>,
}

impl FeatureGrid {
    /// Builds a grid, L2-normalizing every descriptor.
    pub fn new(
        width: usize,
        height: usize,
        dim: usize,
        cell_size_px: f64,
        mut data: Vec<f32>,
    ) -> Result<Self, MatchingError> {
        check_shape(width, height, dim, cell_size_px, data.len())?;
        for (cell, d) in data.chunks_mut(dim).enumerate() {
            let norm = d
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(MatchingError::InvalidGrid(format!(
                    "descriptor {cell} has zero or non-finite norm"
                )));
            }
            for v in d.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
        Ok(Self {
            width,
            height,
            dim,
            cell_size_px,
            data,
        })
    }

    /// Builds a grid from descriptors that are already unit-norm, keeping the
    /// values bit-for-bit. Fails if any norm deviates from 1 by more than 1e-6.
    pub fn from_unit_descriptors(
        width: usize,
        height: usize,
        dim: usize,
        cell_size_px: f64,
        data: Vec<f32>,
    ) -> Result<Self, MatchingError> {
        check_shape(width, height, dim, cell_size_px, data.len())?;
        for (cell, d) in data.chunks(dim).enumerate() {
            let norm = d
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOLERANCE) {
                return Err(MatchingError::InvalidGrid(format!(
                    "descriptor {cell} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            dim,
            cell_size_px,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size_px(&self) -> f64 {
        self.cell_size_px
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn descriptor(&self, cell: usize) -> &[f32] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Pixel extent `(width, height)` covered by the grid.
    pub fn extent_px(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size_px,
            self.height as f64 * self.cell_size_px,
        )
    }

    /// Cell containing pixel `(x, y)`, if inside the grid.
    pub fn pixel_to_cell(&self, x: f64, y: f64) -> Option<usize> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let col = (x / self.cell_size_px).floor() as usize;
        let row = (y / self.cell_size_px).floor() as usize;
        (col < self.width && row < self.height).then(|| row * self.width + col)
    }
}

fn check_shape(
    width: usize,
    height: usize,
    dim: usize,
    cell_size_px: f64,
    len: usize,
) -> Result<(), MatchingError> {
    if width == 0 || height == 0 || dim == 0 {
        return Err(MatchingError::InvalidGrid(format!(
            "empty grid {width}x{height}x{dim}"
        )));
    }
    if !(cell_size_px > 0.0) || !cell_size_px.is_finite() {
        return Err(MatchingError::InvalidGrid(format!(
            "cell size must be positive, got {cell_size_px}"
        )));
    }
    if len != width * height * dim {
        return Err(MatchingError::InvalidGrid(format!(
            "expected {} values, got {len}",
            width * height * dim
        )));
    }
    Ok(())
}

/// Cell-center pixel coordinate of cell `i`.
pub fn cell_to_pixel(i: usize, grid: &FeatureGrid) -> Result<HomogeneousPoint2, MatchingError> {
    if i >= grid.num_cells() {
        return Err(MatchingError::CellOutOfRange {
            index: i,
            cells: grid.num_cells(),
        });
    }
    let row = i / grid.width;
    let col = i % grid.width;
    Ok(HomogeneousPoint2::new(
        (col as f64 + 0.5) * grid.cell_size_px,
        (row as f64 + 0.5) * grid.cell_size_px,
    ))
}

macro_rules! dense_map {
    ($name:ident) => {
        impl $name {
            pub fn rows(&self) -> usize {
                self.rows
            }

            pub fn cols(&self) -> usize {
                self.cols
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn get(&self, row: usize, col: usize) -> f64 {
                self.values[row * self.cols + col]
            }

            pub fn row(&self, row: usize) -> &[f64] {
                &self.values[row * self.cols..(row + 1) * self.cols]
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn min_max(&self) -> (f64, f64) {
                self.values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            }
        }
    };
}

/// Dot-product similarity between every cell of A (rows) and B (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

dense_map!(SimilarityMatrix);

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatchingError> {
        if values.len() != rows * cols {
            return Err(MatchingError::ShapeMismatch {
                a_rows: rows,
                a_cols: cols,
                b_rows: values.len(),
                b_cols: 1,
            });
        }
        Ok(Self { rows, cols, values })
    }
}

/// Dense confidence map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

dense_map!(ConfidenceMap);

impl ConfidenceMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MatchingError> {
        if values.len() != rows * cols {
            return Err(MatchingError::ShapeMismatch {
                a_rows: rows,
                a_cols: cols,
                b_rows: values.len(),
                b_cols: 1,
            });
        }
        if let Some(k) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(MatchingError::InvalidConfidence {
                row: k / cols.max(1),
                col: k % cols.max(1),
                value: values[k],
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &ConfidenceMap) -> Result<(), MatchingError> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(MatchingError::ShapeMismatch {
                a_rows: self.rows,
                a_cols: self.cols,
                b_rows: other.rows,
                b_cols: other.cols,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseMatch {
    /// Cell index in A.
    pub a: usize,
    /// Cell index in B.
    pub b: usize,
    pub confidence: f64,
}

/// Mutually exclusive cell correspondences, ordered by A index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoarseMatchSet {
    pub matches: Vec<CoarseMatch>,
}

impl CoarseMatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoarseMatch> {
        self.matches.iter()
    }

    /// Index pairs as a sorted list, ignoring confidences.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = self.matches.iter().map(|m| (m.a, m.b)).collect();
        p.sort_unstable();
        p
    }
}

fn to_dmatrix(grid: &FeatureGrid) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        grid.num_cells(),
        grid.dim(),
        grid.data().iter().map(|&v| v as f64),
    )
}

/// `S(i, j) = ⟨fa(i), fb(j)⟩` for every cell pair.
pub fn similarity(fa: &FeatureGrid, fb: &FeatureGrid) -> Result<SimilarityMatrix, MatchingError> {
    if fa.dim() != fb.dim() {
        return Err(MatchingError::DimensionMismatch {
            a: fa.dim(),
            b: fb.dim(),
        });
    }
    let a = to_dmatrix(fa);
    let b = to_dmatrix(fb);
    // Column-major (B · Aᵀ) has the memory layout of row-major A · Bᵀ.
    let st = &b * a.transpose();
    Ok(SimilarityMatrix {
        rows: fa.num_cells(),
        cols: fb.num_cells(),
        values: st.as_slice().to_vec(),
    })
}

/// Product of the row-wise and column-wise softmax of `S / temperature`.
pub fn dual_softmax(
    s: &SimilarityMatrix,
    temperature: f64,
) -> Result<ConfidenceMap, MatchingError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(MatchingError::InvalidTemperature(temperature));
    }
    let (rows, cols) = (s.rows, s.cols);
    let inv_t = 1.0 / temperature;
    let mut row_max = vec![f64::NEG_INFINITY; rows];
    let mut col_max = vec![f64::NEG_INFINITY; cols];
    for i in 0..rows {
        for (j, &v) in s.row(i).iter().enumerate() {
            let z = v * inv_t;
            row_max[i] = row_max[i].max(z);
            col_max[j] = col_max[j].max(z);
        }
    }
    let mut row_sum = vec![0.0; rows];
    let mut col_sum = vec![0.0; cols];
    for i in 0..rows {
        for (j, &v) in s.row(i).iter().enumerate() {
            let z = v * inv_t;
            row_sum[i] += (z - row_max[i]).exp();
            col_sum[j] += (z - col_max[j]).exp();
        }
    }
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for (j, &v) in s.row(i).iter().enumerate() {
            let z = v * inv_t;
            let pr = (z - row_max[i]).exp() / row_sum[i];
            let pc = (z - col_max[j]).exp() / col_sum[j];
            values.push(pr * pc);
        }
    }
    Ok(ConfidenceMap { rows, cols, values })
}

/// Mutual nearest neighbours of `p` with confidence at least `threshold`.
///
/// Row and column maxima resolve ties to the lowest index; a tied maximum
/// still counts as the maximum.
pub fn mnn_select(p: &ConfidenceMap, threshold: f64) -> CoarseMatchSet {
    let (rows, cols) = (p.rows, p.cols);
    if rows == 0 || cols == 0 {
        return CoarseMatchSet::default();
    }
    let mut row_arg = vec![0usize; rows];
    let mut col_arg = vec![0usize; cols];
    let mut col_best = vec![f64::NEG_INFINITY; cols];
    for i in 0..rows {
        let mut best = f64::NEG_INFINITY;
        for (j, &v) in p.row(i).iter().enumerate() {
            if v > best {
                best = v;
                row_arg[i] = j;
            }
            if v > col_best[j] {
                col_best[j] = v;
                col_arg[j] = i;
            }
        }
    }
    let matches = row_arg
        .iter()
        .enumerate()
        .filter_map(|(i, &j)| {
            let v = p.get(i, j);
            (col_arg[j] == i && v >= threshold).then_some(CoarseMatch {
                a: i,
                b: j,
                confidence: v,
            })
        })
        .collect();
    CoarseMatchSet { matches }
}

/// Rescales to `[0, 1]` via `(v − min) / (max − min)`; a constant map is
/// returned unchanged.
pub fn minmax_normalize(p: &ConfidenceMap) -> ConfidenceMap {
    let mut out = p.clone();
    minmax_normalize_in_place(&mut out.values);
    out
}

pub(crate) fn minmax_normalize_in_place(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return;
    }
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(width: usize, height: usize, dim: usize, data: Vec<f32>) -> FeatureGrid {
        FeatureGrid::new(width, height, dim, 8.0, data).unwrap()
    }

    #[test]
    fn identical_single_cell_similarity_is_one() {
        let g = grid(1, 1, 3, vec![0.0, 3.0, 4.0]);
        let s = similarity(&g, &g).unwrap();
        assert!((s.get(0, 0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn orthogonal_similarity_is_zero() {
        let a = grid(1, 1, 2, vec![1.0, 0.0]);
        let b = grid(1, 1, 2, vec![0.0, 1.0]);
        assert_eq!(similarity(&a, &b).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = grid(1, 1, 2, vec![1.0, 0.0]);
        let b = grid(1, 1, 3, vec![0.0, 1.0, 0.0]);
        assert_eq!(
            similarity(&a, &b),
            Err(MatchingError::DimensionMismatch { a: 2, b: 3 })
        );
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(FeatureGrid::new(2, 2, 2, 8.0, vec![1.0; 7]).is_err());
        assert!(FeatureGrid::new(1, 1, 2, 8.0, vec![0.0; 2]).is_err());
        assert!(FeatureGrid::new(1, 1, 2, 0.0, vec![1.0; 2]).is_err());
        assert!(FeatureGrid::from_unit_descriptors(1, 1, 2, 8.0, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn dual_softmax_worked_example() {
        let s = SimilarityMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = dual_softmax(&s, 1.0).unwrap();
        let e = std::f64::consts::E;
        let diag = (e / (e + 1.0)).powi(2);
        let off = (1.0 / (e + 1.0)).powi(2);
        assert!((p.get(0, 0) - diag).abs() < 1e-15);
        assert!((p.get(0, 1) - off).abs() < 1e-15);
        assert!((p.get(0, 0) - 0.534447).abs() < 1e-6);
        assert!((p.get(0, 1) - 0.072329).abs() < 1e-6);
    }

    #[test]
    fn dual_softmax_degenerate_shapes() {
        let one = SimilarityMatrix::new(1, 1, vec![0.3]).unwrap();
        assert_eq!(dual_softmax(&one, 0.1).unwrap().get(0, 0), 1.0);
        let constant = SimilarityMatrix::new(3, 3, vec![0.7; 9]).unwrap();
        let p = dual_softmax(&constant, 0.1).unwrap();
        for &v in p.values() {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!(dual_softmax(&one, 0.0).is_err());
    }

    #[test]
    fn mnn_examples() {
        let p = ConfidenceMap::new(2, 2, vec![0.9, 0.2, 0.1, 0.8]).unwrap();
        assert_eq!(mnn_select(&p, 0.01).pairs(), vec![(0, 0), (1, 1)]);
        let p = ConfidenceMap::new(2, 2, vec![0.9, 0.95, 0.1, 0.8]).unwrap();
        assert_eq!(mnn_select(&p, 0.01).pairs(), vec![(0, 1)]);
        assert!(mnn_select(&p, 1.0).is_empty());
    }

    #[test]
    fn mnn_ties_go_to_lowest_index() {
        let p = ConfidenceMap::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(mnn_select(&p, 0.0).pairs(), vec![(0, 0)]);
    }

    #[test]
    fn minmax_examples() {
        let p = ConfidenceMap::new(1, 3, vec![0.2, 0.4, 0.6]).unwrap();
        let n = minmax_normalize(&p);
        assert_eq!(n.values()[0], 0.0);
        assert!((n.values()[1] - 0.5).abs() < 1e-15);
        assert_eq!(n.values()[2], 1.0);
        let c = ConfidenceMap::new(2, 2, vec![0.3; 4]).unwrap();
        assert_eq!(minmax_normalize(&c), c);
    }

    #[test]
    fn cell_centers() {
        let g = grid(4, 4, 1, vec![1.0; 16]);
        assert_eq!(
            cell_to_pixel(0, &g).unwrap(),
            HomogeneousPoint2::new(4.0, 4.0)
        );
        assert_eq!(
            cell_to_pixel(15, &g).unwrap(),
            HomogeneousPoint2::new(28.0, 28.0)
        );
        assert_eq!(
            cell_to_pixel(16, &g),
            Err(MatchingError::CellOutOfRange {
                index: 16,
                cells: 16
            })
        );
    }

    #[test]
    fn pixel_cell_round_trip() {
        let g = grid(16, 16, 1, vec![1.0; 256]);
        for yi in 0..128 {
            for xi in 0..128 {
                let (x, y) = (xi as f64 + 0.25, yi as f64 + 0.75);
                let cell = g.pixel_to_cell(x, y).unwrap();
                let c = cell_to_pixel(cell, &g).unwrap();
                assert!((c.x - x).abs() <= 4.0 && (c.y - y).abs() <= 4.0);
            }
        }
        assert_eq!(g.pixel_to_cell(-0.1, 3.0), None);
        assert_eq!(g.pixel_to_cell(128.0, 3.0), None);
    }
}
