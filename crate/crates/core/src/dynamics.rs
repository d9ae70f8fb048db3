//! Iterated scalar forward maps and output landscapes of random networks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::activation::{srs_shape, Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::nn::{Layer, Model};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{init_weights, InitScheme};

/// `(i, x_i, x_i - x_{i-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub iter: usize,
    pub x: T,
    pub dx: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub kind: ActivationKind,
    pub seed: u64,
    pub x0: T,
    pub records: Vec<TrajectoryRecord<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Mean `|dx|` over records with `first <= iter <= last`.
    pub fn mean_abs_dx(&self, first: usize, last: usize) -> f64 {
        let sel: Vec<f64> = self
            .records
            .iter()
            .filter(|r| (first..=last).contains(&r.iter))
            .map(|r| r.dx.as_f64().abs())
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }

    /// `iter,x,dx`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,x,dx\n");
        for r in &self.records {
            writeln!(s, "{},{},{}", r.iter, r.x, r.dx).unwrap();
        }
        s
    }
}

/// Runs `x_i = f(w_i * x_{i-1} + b_i)` from the given start and coefficients.
pub fn iterate_with<T: Scalar>(act: &Activation<T>, x0: T, coeffs: &[(T, T)], seed: u64) -> Result<Trajectory<T>> {
    let mut x = x0;
    let mut records = Vec::with_capacity(coeffs.len());
    for (i, &(w, b)) in coeffs.iter().enumerate() {
        let next = act.eval(w * x + b)?;
        if !next.is_finite() {
            return Err(Error::NonFinite(next.as_f64()));
        }
        records.push(TrajectoryRecord {
            iter: i + 1,
            x: next,
            dx: next - x,
        });
        x = next;
    }
    Ok(Trajectory {
        kind: act.kind(),
        seed,
        x0,
        records,
    })
}

/// `x_0` and every `(w_i, b_i)` drawn from U(-1, 1) with a seeded stream.
pub fn iterate_activation<T: Scalar>(act: &Activation<T>, iters: usize, seed: u64) -> Result<Trajectory<T>> {
    if iters < 2 {
        return Err(Error::Config(format!("need at least 2 iterations, got {iters}")));
    }
    let mut r = rng::rng(seed, 0x3000);
    let u = Uniform::new(-1.0f64, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let x0 = T::lit(u.sample(&mut r));
    let coeffs: Vec<(T, T)> = (0..iters)
        .map(|_| (T::lit(u.sample(&mut r)), T::lit(u.sample(&mut r))))
        .collect();
    iterate_with(act, x0, &coeffs, seed)
}

/// Grid size and `(x_min, x_max, y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    pub extent: (f64, f64, f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            height: 256,
            width: 256,
            extent: (-6.0, 6.0, -6.0, 6.0),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let (x0, x1, y0, y1) = self.extent;
        if self.height < 2 || self.width < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) || x0 >= x1 || y0 >= y1 {
            return Err(Error::Config(format!("bad grid extent {:?}", self.extent)));
        }
        Ok(())
    }

    /// Coordinates of cell `(row, col)`. Row 0 is the top edge (`y_max`).
    pub fn point(&self, row: usize, col: usize) -> (f64, f64) {
        let (x0, x1, y0, y1) = self.extent;
        let x = x0 + (x1 - x0) * col as f64 / (self.width - 1) as f64;
        let y = y1 - (y1 - y0) * row as f64 / (self.height - 1) as f64;
        (x, y)
    }
}

pub const LANDSCAPE_HIDDEN: [usize; 4] = [64, 64, 64, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape<T> {
    /// `(height, width)` network outputs.
    pub grid: Tensor<T>,
    pub extent: (f64, f64, f64, f64),
    pub seed: u64,
    pub kind: ActivationKind,
}

/// The 2-64-64-64-64-1 network behind [`output_landscape`]. Weights are
/// Xavier-uniform; biases are uniform over the same per-layer range.
pub fn landscape_network<T: Scalar>(act: &Activation<T>, seed: u64) -> Result<Model<T>> {
    let mut layers = Vec::new();
    let mut width = 2;
    for &h in &LANDSCAPE_HIDDEN {
        layers.push(Layer::dense(width, h));
        layers.push(Layer::act(act.clone()));
        width = h;
    }
    layers.push(Layer::dense(width, 1));
    let mut model = Model::new(2, layers)?;
    init_weights(&mut model, InitScheme::Xavier, None, seed)?;
    for (i, layer) in model.layers_mut().iter_mut().enumerate() {
        if let Layer::Dense(d) = layer {
            let bound = (6.0 / (d.inputs() + d.outputs()) as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::Config(e.to_string()))?;
            let mut r = rng::rng(seed, 0x4000 + i as u64);
            d.bias.data_mut().iter_mut().for_each(|b| *b = T::lit(u.sample(&mut r)));
        }
    }
    Ok(model)
}

/// Evaluates `model` (2 inputs, 1 output) over the grid, one row per task.
pub fn landscape_of<T: Scalar>(
    model: &Model<T>,
    spec: &GridSpec,
    seed: u64,
    kind: ActivationKind,
) -> Result<Landscape<T>> {
    spec.validate()?;
    if model.input_width() != 2 || model.output_width() != 1 {
        return Err(Error::Shape(format!(
            "landscape needs a 2->1 network, got {}->{}",
            model.input_width(),
            model.output_width()
        )));
    }
    let rows: Vec<Vec<T>> = (0..spec.height)
        .into_par_iter()
        .map(|row| {
            let mut pts = Vec::with_capacity(2 * spec.width);
            for col in 0..spec.width {
                let (x, y) = spec.point(row, col);
                pts.push(T::lit(x));
                pts.push(T::lit(y));
            }
            let out = model.predict(&Tensor::new(vec![spec.width, 2], pts)?)?;
            Ok(out.into_data())
        })
        .collect::<Result<_>>()?;
    let grid = Tensor::new(vec![spec.height, spec.width], rows.concat())?;
    Ok(Landscape {
        grid,
        extent: spec.extent,
        seed,
        kind,
    })
}

pub fn output_landscape<T: Scalar>(act: &Activation<T>, spec: &GridSpec, seed: u64) -> Result<Landscape<T>> {
    let model = landscape_network(act, seed)?;
    landscape_of(&model, spec, seed, act.kind())
}

/// `sup |f|` for bounded activations, including SRS.
pub fn activation_bound<T: Scalar>(act: &Activation<T>) -> Option<f64> {
    match act.kind() {
        ActivationKind::Srs => {
            let shape = srs_shape(act.params()[0], act.params()[1]).ok()?;
            Some(shape.supremum.as_f64().max(shape.min_value.as_f64().abs()))
        }
        kind => kind.output_bound(),
    }
}

/// Mean squared 5-point Laplacian over interior cells of the grid after
/// standardising it to zero mean and unit variance. A constant grid gives 0.
pub fn landscape_roughness<T: Scalar>(grid: &Tensor<T>) -> Result<f64> {
    if grid.shape().len() != 2 || grid.rows() < 3 || grid.cols() < 3 {
        return Err(Error::Shape(format!(
            "roughness needs a grid of at least 3x3, got {:?}",
            grid.shape()
        )));
    }
    if !grid.is_finite() {
        return Err(Error::NonFinite(f64::NAN));
    }
    let (h, w) = (grid.rows(), grid.cols());
    let v: Vec<f64> = grid.data().iter().map(|x| x.as_f64()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var == 0.0 || !var.is_normal() {
        return Ok(0.0);
    }
    let sd = var.sqrt();
    let z: Vec<f64> = v.iter().map(|x| (x - mean) / sd).collect();
    let mut acc = 0.0;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let c = z[i * w + j];
            let lap = z[(i - 1) * w + j] + z[(i + 1) * w + j] + z[i * w + j - 1] + z[i * w + j + 1] - 4.0 * c;
            acc += lap * lap;
        }
    }
    Ok(acc / ((h - 2) * (w - 2)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// ASCII `P2`.
    Plain,
    /// Binary `P5`.
    Raw,
}

/// 8-bit grayscale PGM, min-max normalised (a constant grid maps to 0).
pub fn to_pgm<T: Scalar>(grid: &Tensor<T>, format: PgmFormat) -> Vec<u8> {
    let (h, w) = (grid.rows(), grid.cols());
    let v: Vec<f64> = grid.data().iter().map(|x| x.as_f64()).collect();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let px: Vec<u8> = v
        .iter()
        .map(|x| {
            if span > 0.0 {
                ((x - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    match format {
        PgmFormat::Plain => {
            let mut s = format!("P2\n{w} {h}\n255\n");
            for row in px.chunks(w) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
            s.into_bytes()
        }
        PgmFormat::Raw => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&px);
            out
        }
    }
}

pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, grid: &Tensor<T>, format: PgmFormat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_pgm(grid, format)).map_err(|e| Error::io(path, e))
}

impl<T: Scalar> Landscape<T> {
    /// One line per grid row, top row first.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.grid.rows() {
            let row: Vec<String> = self.grid.row(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn roughness(&self) -> Result<f64> {
        landscape_roughness(&self.grid)
    }
}
