//! Batches, the synthetic linear regression task and batch streams.

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeding::{domain, rng_for};

/// Inputs `X` (`d_0 × B`) paired column-wise with targets `Y` (`d_L × B`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub y: Matrix,
}

impl Batch {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.ncols() == 0 || x.ncols() != y.ncols() {
            return Err(Error::InvalidArgument(format!(
                "batch needs matching non-zero column counts, got {} inputs and {} targets",
                x.ncols(),
                y.ncols()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn size(&self) -> usize {
        self.x.ncols()
    }

    /// Columns `range` of both matrices.
    pub fn columns(&self, start: usize, len: usize) -> Batch {
        Batch { x: self.x.columns(start, len).into_owned(), y: self.y.columns(start, len).into_owned() }
    }
}

fn standard_normal_matrix<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    // column-major fill: sample b occupies one contiguous run of draws
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Inputs and targets drawn independently from `N(0, I)`.
pub fn gaussian_batch(seed: u64, index: u64, d_in: usize, d_out: usize, batch_size: usize) -> Result<Batch> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument("dimensions must be >= 1".into()));
    }
    let mut rng = rng_for(seed, domain::SAMPLE, index);
    let x = standard_normal_matrix(d_in, batch_size, &mut rng);
    let y = standard_normal_matrix(d_out, batch_size, &mut rng);
    Batch::new(x, y)
}

/// Fixed linear teacher `y = W_data x` with `W_data ~ N(0, 1/d_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub w_data: Matrix,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn d_in(&self) -> usize {
        self.w_data.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w_data.nrows()
    }

    /// A fresh batch with `x ~ N(0, I)`, deterministic per `(seed, step)`.
    pub fn batch(&self, step: u64, batch_size: usize) -> Batch {
        let mut rng = rng_for(self.seed, domain::BATCH, step);
        let x = standard_normal_matrix(self.d_in(), batch_size, &mut rng);
        let y = &self.w_data * &x;
        Batch { x, y }
    }
}

pub fn gen_synthetic(seed: u64, d_in: usize, d_out: usize) -> Result<SyntheticTask> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument("dimensions must be >= 1".into()));
    }
    let mut rng = rng_for(seed, domain::TASK, 0);
    let dist = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).expect("positive std");
    let mut w = Matrix::zeros(d_out, d_in);
    for i in 0..d_out {
        for j in 0..d_in {
            w[(i, j)] = dist.sample(&mut rng);
        }
    }
    Ok(SyntheticTask { w_data: w, seed })
}

/// Online batch sequence for one task, identical for every learning rule.
#[derive(Debug, Clone)]
pub struct BatchStream {
    task: SyntheticTask,
    batch_size: usize,
    cache: Vec<Batch>,
}

impl BatchStream {
    pub fn new(task: SyntheticTask, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(Self { task, batch_size, cache: Vec::new() })
    }

    /// Draws and caches batches `0..steps`.
    pub fn presample(mut self, steps: usize) -> Self {
        self.cache = (0..steps as u64).map(|s| self.task.batch(s, self.batch_size)).collect();
        self
    }

    pub fn task(&self) -> &SyntheticTask {
        &self.task
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_batch(&self, step: usize) -> Batch {
        match self.cache.get(step) {
            Some(b) => b.clone(),
            None => self.task.batch(step as u64, self.batch_size),
        }
    }

    pub fn cached(&self) -> &[Batch] {
        &self.cache
    }
}
