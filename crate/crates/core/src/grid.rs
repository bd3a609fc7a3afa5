//! Rasters, criterion stacks and validity masks.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Relative tolerance used to decide whether two grids share a frame.
pub const ALIGN_TOLERANCE: f64 = 1e-9;

/// Valid criterion values may exceed `[0, 1]` by at most this much; they are clamped.
pub const RANGE_TOLERANCE: f64 = 1e-9;

/// Default ESRI ASCII nodata sentinel.
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    InvalidMeta(&'static str),
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    NonFiniteCell {
        cell: usize,
    },
    TooFewLayers(usize),
    CountMismatch {
        layers: usize,
        weights: usize,
    },
    Alignment {
        layer: String,
    },
    ValueRange {
        layer: String,
        cell: usize,
        value: f64,
    },
    NonPositiveWeight {
        index: usize,
        value: f64,
    },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::InvalidMeta(what) => write!(f, "invalid grid header: {what}"),
            GridError::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} cells, found {found}")
            }
            GridError::NonFiniteCell { cell } => write!(f, "cell {cell} is not finite"),
            GridError::TooFewLayers(n) => write!(f, "a stack needs at least 2 layers, got {n}"),
            GridError::CountMismatch { layers, weights } => {
                write!(f, "{layers} layers but {weights} criterion weights")
            }
            GridError::Alignment { layer } => {
                write!(f, "layer `{layer}` is not aligned with the stack grid")
            }
            GridError::ValueRange { layer, cell, value } => {
                write!(
                    f,
                    "layer `{layer}` cell {cell} has value {value} outside [0, 1]"
                )
            }
            GridError::NonPositiveWeight { index, value } => {
                write!(
                    f,
                    "criterion weight {index} is {value}; weights must be > 0"
                )
            }
        }
    }
}

impl core::error::Error for GridError {}

/// Spatial frame of a single-band grid, in ESRI ASCII terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMeta {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata_value: f64,
}

fn close(a: f64, b: f64) -> bool {
    let scale = 1.0f64.max(a.abs()).max(b.abs());
    (a - b).abs() <= ALIGN_TOLERANCE * scale
}

impl GridMeta {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata_value: f64,
    ) -> Result<Self, GridError> {
        let meta = GridMeta {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata_value,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.ncols == 0 {
            return Err(GridError::InvalidMeta("ncols must be >= 1"));
        }
        if self.nrows == 0 {
            return Err(GridError::InvalidMeta("nrows must be >= 1"));
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(GridError::InvalidMeta("cellsize must be a positive number"));
        }
        if !self.xllcorner.is_finite() || !self.yllcorner.is_finite() {
            return Err(GridError::InvalidMeta("corner coordinates must be finite"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Same frame (dimensions, origin, cell size). Nodata values may differ.
    pub fn aligned_with(&self, other: &GridMeta) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && close(self.xllcorner, other.xllcorner)
            && close(self.yllcorner, other.yllcorner)
            && close(self.cellsize, other.cellsize)
    }

    pub fn with_nodata(mut self, nodata_value: f64) -> Self {
        self.nodata_value = nodata_value;
        self
    }
}

/// A single-band grid, row-major with row 0 the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    meta: GridMeta,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(meta: GridMeta, values: Vec<f64>) -> Result<Self, GridError> {
        meta.validate()?;
        if values.len() != meta.cell_count() {
            return Err(GridError::LengthMismatch {
                expected: meta.cell_count(),
                found: values.len(),
            });
        }
        let raster = Raster { meta, values };
        if let Some(cell) =
            (0..raster.values.len()).find(|&i| raster.is_valid(i) && !raster.values[i].is_finite())
        {
            return Err(GridError::NonFiniteCell { cell });
        }
        Ok(raster)
    }

    /// A raster whose every cell holds `value`.
    pub fn filled(meta: GridMeta, value: f64) -> Result<Self, GridError> {
        Raster::new(meta, alloc::vec![value; meta.cell_count()])
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn is_nodata_value(&self, v: f64) -> bool {
        let nodata = self.meta.nodata_value;
        v == nodata || (nodata.is_nan() && v.is_nan())
    }

    pub fn is_valid(&self, cell: usize) -> bool {
        !self.is_nodata_value(self.values[cell])
    }

    /// Cell value, or `None` for nodata.
    pub fn get(&self, cell: usize) -> Option<f64> {
        self.is_valid(cell).then(|| self.values[cell])
    }

    pub fn valid_count(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.is_valid(i)).count()
    }
}

/// Relative importance of each criterion, strictly positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionWeights(Vec<f64>);

impl CriterionWeights {
    /// Normalizes `raw` to unit sum. Every entry must be finite and > 0.
    pub fn normalized(raw: &[f64]) -> Result<Self, GridError> {
        for (index, &value) in raw.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GridError::NonPositiveWeight { index, value });
            }
        }
        let total: f64 = raw.iter().sum();
        Ok(CriterionWeights(raw.iter().map(|v| v / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Aligned criterion layers with a shared validity mask.
///
/// Layer values at valid cells are guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CriterionStack {
    meta: GridMeta,
    names: Vec<String>,
    layers: Vec<Raster>,
    weights: CriterionWeights,
    valid_mask: Vec<bool>,
    valid_cells: Vec<usize>,
}

impl CriterionStack {
    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn layers(&self) -> &[Raster] {
        &self.layers
    }

    pub fn criterion_count(&self) -> usize {
        self.layers.len()
    }

    pub fn weights(&self) -> &CriterionWeights {
        &self.weights
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid_mask
    }

    /// Row-major indices of the cells valid in every layer.
    pub fn valid_cells(&self) -> &[usize] {
        &self.valid_cells
    }

    /// Criterion values at `cell` in stack order. Only meaningful for valid cells.
    pub fn pixel_values(&self, cell: usize) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().map(move |l| l.value(cell))
    }

    /// Expands per-valid-pixel values into a full raster with `nodata` elsewhere.
    pub fn expand(&self, valid_values: &[f64], nodata: f64) -> Result<Raster, GridError> {
        if valid_values.len() != self.valid_cells.len() {
            return Err(GridError::LengthMismatch {
                expected: self.valid_cells.len(),
                found: valid_values.len(),
            });
        }
        let mut values = alloc::vec![nodata; self.meta.cell_count()];
        for (&cell, &v) in self.valid_cells.iter().zip(valid_values) {
            values[cell] = v;
        }
        Raster::new(self.meta.with_nodata(nodata), values)
    }
}

/// Assembles a stack from named layers and un-normalized criterion weights.
pub fn build_stack(
    layers: Vec<(String, Raster)>,
    weights: &[f64],
) -> Result<CriterionStack, GridError> {
    if layers.len() < 2 {
        return Err(GridError::TooFewLayers(layers.len()));
    }
    if layers.len() != weights.len() {
        return Err(GridError::CountMismatch {
            layers: layers.len(),
            weights: weights.len(),
        });
    }
    let weights = CriterionWeights::normalized(weights)?;
    let meta = *layers[0].1.meta();
    for (name, layer) in &layers {
        if !meta.aligned_with(layer.meta()) {
            return Err(GridError::Alignment {
                layer: name.clone(),
            });
        }
    }

    let cells = meta.cell_count();
    let mut valid_mask = alloc::vec![true; cells];
    for (_, layer) in &layers {
        for (cell, valid) in valid_mask.iter_mut().enumerate() {
            *valid &= layer.is_valid(cell);
        }
    }

    let mut names = Vec::with_capacity(layers.len());
    let mut clamped = Vec::with_capacity(layers.len());
    for (name, layer) in layers {
        let layer_meta = *layer.meta();
        let mut values = layer.into_values();
        for (cell, v) in values.iter_mut().enumerate() {
            if layer_meta.nodata_value == *v || (layer_meta.nodata_value.is_nan() && v.is_nan()) {
                continue;
            }
            if *v < -RANGE_TOLERANCE || *v > 1.0 + RANGE_TOLERANCE {
                return Err(GridError::ValueRange {
                    layer: name,
                    cell,
                    value: *v,
                });
            }
            *v = v.clamp(0.0, 1.0);
        }
        clamped.push(Raster::new(layer_meta, values)?);
        names.push(name);
    }
    let valid_cells = (0..cells).filter(|&c| valid_mask[c]).collect();
    Ok(CriterionStack {
        meta,
        names,
        layers: clamped,
        weights,
        valid_mask,
        valid_cells,
    })
}
