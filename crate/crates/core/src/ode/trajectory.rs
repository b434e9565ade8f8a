//! Sampled trajectories, subsampling, proportional noise and the CSV
//! exchange format `t,x1,...,xn[,dx1,...,dxn]`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::system::StructuredSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Array2<f64>,
    derivatives: Option<Array2<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Array2<f64>, derivatives: Option<Array2<f64>>) -> Result<Self> {
        if states.nrows() != times.len() {
            return Err(Error::Shape(format!(
                "{} times but {} state rows",
                times.len(),
                states.nrows()
            )));
        }
        if let Some(d) = &derivatives {
            if d.dim() != states.dim() {
                return Err(Error::Shape(format!(
                    "derivative shape {:?} differs from state shape {:?}",
                    d.dim(),
                    states.dim()
                )));
            }
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Data(format!(
                "times must be strictly increasing, found {} followed by {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            times,
            states,
            derivatives,
        })
    }

    /// Fills the derivative columns with the system's right-hand side.
    pub fn with_analytic_derivatives(
        times: Vec<f64>,
        states: Array2<f64>,
        system: &StructuredSystem,
    ) -> Result<Self> {
        let mut derivs = Array2::zeros(states.dim());
        for (r, t) in times.iter().enumerate() {
            let x = states.row(r).to_vec();
            let f = system.rhs_f64(*t, &x);
            derivs.row_mut(r).assign(&ArrayView1::from(&f));
        }
        Self::new(times, states, Some(derivs))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn state(&self, i: usize) -> ArrayView1<'_, f64> {
        self.states.row(i)
    }

    pub fn derivatives(&self) -> Option<&Array2<f64>> {
        self.derivatives.as_ref()
    }

    pub fn require_derivatives(&self) -> Result<ArrayView2<'_, f64>> {
        self.derivatives
            .as_ref()
            .map(|d| d.view())
            .ok_or_else(|| Error::Data("data has no derivative columns".into()))
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    pub fn without_derivatives(&self) -> Self {
        Self {
            times: self.times.clone(),
            states: self.states.clone(),
            derivatives: None,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let states = self.states.select(ndarray::Axis(0), indices);
        let derivatives = self
            .derivatives
            .as_ref()
            .map(|d| d.select(ndarray::Axis(0), indices));
        Self::new(times, states, derivatives)
    }

    pub fn to_csv_string(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        if self.derivatives.is_some() {
            for i in 1..=n {
                let _ = write!(out, ",dx{i}");
            }
        }
        out.push('\n');
        for (r, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t:?}");
            for v in self.states.row(r) {
                let _ = write!(out, ",{v:?}");
            }
            if let Some(d) = &self.derivatives {
                for v in d.row(r) {
                    let _ = write!(out, ",{v:?}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Data("line 1: first column must be 't'".into()));
        }
        let n = cols.iter().filter(|c| c.starts_with('x')).count();
        let nd = cols.iter().filter(|c| c.starts_with("dx")).count();
        let expect_header = |i: usize, name: String| -> Result<()> {
            if cols.get(i).copied() != Some(name.as_str()) {
                return Err(Error::Data(format!(
                    "line 1: column {} should be '{name}', found '{}'",
                    i + 1,
                    cols.get(i).unwrap_or(&"")
                )));
            }
            Ok(())
        };
        if n == 0 || (nd != 0 && nd != n) || cols.len() != 1 + n + nd {
            return Err(Error::Data(format!(
                "line 1: expected header t,x1..xn[,dx1..dxn], got '{header}'"
            )));
        }
        for i in 1..=n {
            expect_header(i, format!("x{i}"))?;
        }
        for i in 1..=nd {
            expect_header(n + i, format!("dx{i}"))?;
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut derivs = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Data(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    cols.len(),
                    fields.len()
                )));
            }
            let mut values = Vec::with_capacity(fields.len());
            for f in fields {
                let v: f64 = f.parse().map_err(|_| {
                    Error::Data(format!("line {}: invalid number '{f}'", lineno + 1))
                })?;
                values.push(v);
            }
            times.push(values[0]);
            states.extend_from_slice(&values[1..=n]);
            derivs.extend_from_slice(&values[1 + n..]);
        }
        let m = times.len();
        let states = Array2::from_shape_vec((m, n), states).unwrap();
        let derivatives = (nd > 0).then(|| Array2::from_shape_vec((m, n), derivs).unwrap());
        Self::new(times, states, derivatives)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

/// Subsamples `m` points at (nearly) equally spaced times, both endpoints
/// included when `m >= 2`; each target time snaps to the nearest stored one.
pub fn sample_dataset(traj: &Trajectory, m: usize) -> Result<Trajectory> {
    if m == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if m > traj.len() {
        return Err(Error::Config(format!(
            "cannot draw {m} samples from {} stored points",
            traj.len()
        )));
    }
    if m == traj.len() {
        return Ok(traj.clone());
    }
    let (t0, t1) = traj.span().expect("non-empty");
    let times = traj.times();
    let nearest = |target: f64| -> usize {
        let idx = times.partition_point(|&t| t < target);
        if idx == 0 {
            0
        } else if idx == times.len() {
            times.len() - 1
        } else if (times[idx] - target).abs() < (target - times[idx - 1]).abs() {
            idx
        } else {
            idx - 1
        }
    };
    let mut indices: Vec<usize> = if m == 1 {
        vec![0]
    } else {
        (0..m)
            .map(|k| nearest(t0 + (t1 - t0) * k as f64 / (m - 1) as f64))
            .collect()
    };
    indices.dedup();
    if indices.len() != m {
        return Err(Error::Data(format!(
            "stored times are too irregular to draw {m} distinct samples"
        )));
    }
    traj.select(&indices)
}

/// Multiplicative uniform noise: each state entry `s` becomes `s*(1+e)` with
/// `e ~ U[-fraction, fraction]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub seed: u64,
}

/// Applies proportional noise. Derivatives are dropped: noisy data has no
/// exact derivatives.
pub fn inject_noise(traj: &Trajectory, spec: NoiseSpec) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(Error::Config(format!(
            "noise fraction must lie in [0, 1], got {}",
            spec.fraction
        )));
    }
    let mut out = traj.without_derivatives();
    if spec.fraction == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dist = Uniform::new_inclusive(-spec.fraction, spec.fraction);
    for s in out.states.iter_mut() {
        *s *= 1.0 + dist.sample(&mut rng);
    }
    Ok(out)
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("'{}' is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
