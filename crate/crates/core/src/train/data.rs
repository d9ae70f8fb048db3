//! Datasets: IDX (MNIST-family) ingestion and 2-D synthetic generators.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Inputs `(N, features)` with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub name: String,
    pub classes: usize,
}

impl<T: Scalar> DatasetSplit<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, name: impl Into<String>, classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{:?} inputs vs {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside {classes} classes"
            )));
        }
        Ok(DatasetSplit {
            inputs,
            labels,
            name: name.into(),
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    /// Leading `n` examples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        DatasetSplit {
            inputs: self.inputs.gather_rows(&idx),
            labels: self.labels[..idx.len()].to_vec(),
            name: self.name.clone(),
            classes: self.classes,
        }
    }

    pub fn cast<U: Scalar>(&self) -> DatasetSplit<U> {
        DatasetSplit {
            inputs: self.inputs.cast(),
            labels: self.labels.clone(),
            name: self.name.clone(),
            classes: self.classes,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an uncompressed IDX image/label pair. Pixels are scaled by 1/255.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DatasetSplit<T>> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(ip)?;
    let labels = read_file(lp)?;

    let magic = be_u32(&images, 0, ip)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            ip,
            format!("image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"),
        ));
    }
    let n = be_u32(&images, 4, ip)? as usize;
    let rows = be_u32(&images, 8, ip)? as usize;
    let cols = be_u32(&images, 12, ip)? as usize;
    let features = rows * cols;
    let pixels = &images[16..];
    if pixels.len() != n * features {
        return Err(Error::format(
            ip,
            format!("expected {} pixel bytes, found {}", n * features, pixels.len()),
        ));
    }

    let magic = be_u32(&labels, 0, lp)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            lp,
            format!("label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"),
        ));
    }
    let nl = be_u32(&labels, 4, lp)? as usize;
    if nl != n {
        return Err(Error::format(lp, format!("{nl} labels for {n} images")));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n {
        return Err(Error::format(
            lp,
            format!("expected {n} label bytes, found {}", label_bytes.len()),
        ));
    }

    let scale = T::lit(1.0 / 255.0);
    let data = pixels.iter().map(|&p| T::lit(p as f64) * scale).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let name = ip
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    DatasetSplit::new(Tensor::new(vec![n, features], data)?, labels, name, classes)
}

/// Writes an IDX image file (`n` images of `rows x cols` bytes).
pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::Shape(format!(
            "{} bytes is not a whole number of {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, (pixels.len() / per) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads the standard `train-*`/`t10k-*` file pair names from a directory.
pub fn load_fashion_mnist<T: Scalar>(dir: impl AsRef<Path>) -> Result<(DatasetSplit<T>, DatasetSplit<T>)> {
    let dir = dir.as_ref();
    let train = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    TwoMoons,
    Pinwheel,
    EightGaussians,
}

impl ToyKind {
    pub fn classes(self) -> usize {
        match self {
            ToyKind::TwoMoons => 2,
            ToyKind::Pinwheel => 5,
            ToyKind::EightGaussians => 8,
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToyKind::TwoMoons => "two-moons",
            ToyKind::Pinwheel => "pinwheel",
            ToyKind::EightGaussians => "eight-gaussians",
        })
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "two-moons" | "moons" => Ok(ToyKind::TwoMoons),
            "pinwheel" => Ok(ToyKind::Pinwheel),
            "eight-gaussians" | "8gaussians" => Ok(ToyKind::EightGaussians),
            other => Err(Error::Config(format!("unknown toy dataset '{other}'"))),
        }
    }
}

pub const PINWHEEL_RADIAL_STD: f64 = 0.3;
pub const PINWHEEL_TANGENTIAL_STD: f64 = 0.05;
pub const PINWHEEL_RATE: f64 = 0.25;

/// Labelled 2-D toy points, deterministic in `seed`.
///
/// * two moons: unit half-circles, `n/2` points each, Gaussian jitter of std `noise`;
/// * pinwheel: five spiralling arms, radial/tangential std `0.3·noise`/`0.05·noise`;
/// * eight gaussians: modes on a circle of radius `2√2`, std `0.1·noise`.
pub fn gen_toy<T: Scalar>(kind: ToyKind, n: usize, noise: f64, seed: u64) -> Result<DatasetSplit<T>> {
    if n < 2 {
        return Err(Error::Config(format!("toy dataset needs n >= 2, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
    }
    let mut rng = rng::rng(seed, 0x70);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut gauss = move || std_normal.sample(&mut rng);
    let mut points = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    match kind {
        ToyKind::TwoMoons => {
            let upper = n - n / 2;
            let lower = n / 2;
            for (class, count) in [(0usize, upper), (1, lower)] {
                for i in 0..count {
                    let t = if count > 1 {
                        std::f64::consts::PI * i as f64 / (count - 1) as f64
                    } else {
                        0.0
                    };
                    let (x, y) = if class == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    points.push(x + noise * gauss());
                    points.push(y + noise * gauss());
                    labels.push(class);
                }
            }
        }
        ToyKind::Pinwheel => {
            let arms = 5;
            for i in 0..n {
                let k = i % arms;
                let radial = 1.0 + PINWHEEL_RADIAL_STD * noise * gauss();
                let tangential = PINWHEEL_TANGENTIAL_STD * noise * gauss();
                let angle = 2.0 * std::f64::consts::PI * k as f64 / arms as f64 + PINWHEEL_RATE * radial.exp();
                let (s, c) = angle.sin_cos();
                points.push(2.0 * (radial * c - tangential * s));
                points.push(2.0 * (radial * s + tangential * c));
                labels.push(k);
            }
        }
        ToyKind::EightGaussians => {
            let radius = 2.0 * std::f64::consts::SQRT_2;
            for i in 0..n {
                let k = i % 8;
                let angle = std::f64::consts::FRAC_PI_4 * k as f64;
                points.push(radius * angle.cos() + 0.1 * noise * gauss());
                points.push(radius * angle.sin() + 0.1 * noise * gauss());
                labels.push(k);
            }
        }
    }
    let data = points.into_iter().map(T::lit).collect();
    DatasetSplit::new(Tensor::new(vec![n, 2], data)?, labels, kind.to_string(), kind.classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        let mut pixels = vec![0u8; 2 * 4];
        pixels[1] = 255;
        pixels[6] = 255;
        write_idx_images(&ip, 2, 2, &pixels).unwrap();
        write_idx_labels(&lp, &[3, 7]).unwrap();
        let ds = load_idx::<f64>(&ip, &lp).unwrap();
        assert_eq!(ds.inputs.shape(), &[2, 4]);
        assert_eq!(ds.inputs.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.labels, vec![3, 7]);
        assert_eq!(ds.classes, 10);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
        write_idx_images(&ip, 2, 2, &[0u8; 8]).unwrap();
        // Label file carrying the image magic.
        write_idx_images(&lp, 1, 2, &[0u8; 2]).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, &lp), Err(Error::Format { .. })));
        // Count mismatch.
        write_idx_labels(&lp, &[1, 2, 3]).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, &lp), Err(Error::Format { .. })));
        // Truncated image payload.
        write_idx_labels(&lp, &[1, 2]).unwrap();
        let mut bytes = fs::read(&ip).unwrap();
        bytes.truncate(bytes.len() - 1);
        fs::write(&ip, bytes).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, &lp), Err(Error::Format { .. })));
        fs::write(&ip, [0u8, 0, 8]).unwrap();
        assert!(matches!(load_idx::<f64>(&ip, &lp), Err(Error::Format { .. })));
        assert!(matches!(
            load_idx::<f64>(dir.path().join("missing"), &lp),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn eight_gaussians_without_noise_sit_on_centers() {
        let ds = gen_toy::<f64>(ToyKind::EightGaussians, 64, 0.0, 3).unwrap();
        let r = 2.0 * std::f64::consts::SQRT_2;
        for (i, &k) in ds.labels.iter().enumerate() {
            let a = std::f64::consts::FRAC_PI_4 * k as f64;
            assert!((ds.inputs.get(i, 0) - r * a.cos()).abs() < 1e-12);
            assert!((ds.inputs.get(i, 1) - r * a.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn moons_are_balanced() {
        let ds = gen_toy::<f64>(ToyKind::TwoMoons, 1000, 0.1, 1).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 500);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 500);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_toy::<f64>(ToyKind::Pinwheel, 500, 1.0, 42).unwrap();
        let b = gen_toy::<f64>(ToyKind::Pinwheel, 500, 1.0, 42).unwrap();
        let c = gen_toy::<f64>(ToyKind::Pinwheel, 500, 1.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.classes, 5);
    }

    #[test]
    fn generator_preconditions() {
        assert!(gen_toy::<f64>(ToyKind::TwoMoons, 1, 0.1, 0).is_err());
        assert!(gen_toy::<f64>(ToyKind::TwoMoons, 10, -0.1, 0).is_err());
        assert!("spiral".parse::<ToyKind>().is_err());
    }
}
