//! Independent oracles: finite differences, brute-force energies and plain
//! iterative relaxation. None of these call into the update code paths.
#![allow(dead_code)]

use dlnlab::data::Batch;
use dlnlab::network::{initialize, InitScheme, NetworkSpec, WeightStack};
use dlnlab::Matrix;
use nalgebra::DVector;

/// Product `W_hi ⋯ W_lo` (1-based, inclusive), identity of size `n` when empty.
pub fn product(ws: &[Matrix], hi: usize, lo: usize, n: usize) -> Matrix {
    let mut acc = Matrix::identity(n, n);
    for l in lo..=hi {
        acc = &ws[l - 1] * acc;
    }
    acc
}

pub fn composite(ws: &[Matrix]) -> Matrix {
    let n = ws[0].ncols();
    product(ws, ws.len(), 1, n)
}

/// Batch-mean squared-error loss.
pub fn bp_loss(ws: &[Matrix], batch: &Batch) -> f64 {
    let r = &batch.y - composite(ws) * &batch.x;
    0.5 * r.norm_squared() / batch.x.ncols() as f64
}

/// `S` built by explicit enumeration of the partial products.
pub fn s_brute(ws: &[Matrix]) -> Matrix {
    let d = ws.last().unwrap().nrows();
    let mut s = Matrix::zeros(d, d);
    for l in 1..=ws.len() {
        let mut p = Matrix::identity(d, d);
        for k in (l + 1..=ws.len()).rev() {
            p *= &ws[k - 1];
        }
        s += &p * p.transpose();
    }
    s
}

/// Equilibrated PC energy `(1/B) Σ_b ½ r_bᵀ S⁻¹ r_b` with `S` from scratch.
pub fn equilibrated_energy(ws: &[Matrix], batch: &Batch) -> f64 {
    let r = &batch.y - composite(ws) * &batch.x;
    let s_inv = s_brute(ws).try_inverse().expect("S invertible");
    let mut e = 0.0;
    for b in 0..r.ncols() {
        let rb = r.column(b);
        e += 0.5 * (rb.transpose() * &s_inv * rb)[(0, 0)];
    }
    e / r.ncols() as f64
}

/// Central-difference gradient of `f` with respect to every entry of every layer.
pub fn fd_gradient(ws: &[Matrix], h: f64, f: impl Fn(&[Matrix]) -> f64) -> Vec<Matrix> {
    let mut out = Vec::new();
    let mut work = ws.to_vec();
    for l in 0..ws.len() {
        let mut g = Matrix::zeros(ws[l].nrows(), ws[l].ncols());
        for i in 0..ws[l].nrows() {
            for j in 0..ws[l].ncols() {
                let orig = work[l][(i, j)];
                work[l][(i, j)] = orig + h;
                let up = f(&work);
                work[l][(i, j)] = orig - h;
                let down = f(&work);
                work[l][(i, j)] = orig;
                g[(i, j)] = (up - down) / (2.0 * h);
            }
        }
        out.push(g);
    }
    out
}

/// Max over layers of `‖a − b‖ / ‖b‖`.
pub fn max_rel_err(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / y.norm().max(1e-300))
        .fold(0.0, f64::max)
}

/// Energy `Σ_l ½‖x_l − W_l x_{l-1}‖²` over all samples.
pub fn linear_energy(ws: &[Matrix], acts: &[Matrix]) -> f64 {
    ws.iter()
        .enumerate()
        .map(|(i, w)| 0.5 * (&acts[i + 1] - w * &acts[i]).norm_squared())
        .sum()
}

/// Gradient of the linear energy with respect to the hidden activities.
pub fn hidden_gradient(ws: &[Matrix], acts: &[Matrix]) -> Vec<Matrix> {
    let l = ws.len();
    (1..l)
        .map(|k| {
            let e_k = &acts[k] - &ws[k - 1] * &acts[k - 1];
            let e_up = &acts[k + 1] - &ws[k] * &acts[k];
            e_k - ws[k].transpose() * e_up
        })
        .collect()
}

/// Explicit gradient descent on the hidden activities.
pub fn relax(ws: &[Matrix], acts: &mut [Matrix], steps: usize, eta: f64) {
    for _ in 0..steps {
        let g = hidden_gradient(ws, acts);
        for (k, gk) in g.iter().enumerate() {
            acts[k + 1] -= gk * eta;
        }
    }
}

pub fn random_stack(dims: &[usize], seed: u64) -> WeightStack {
    initialize(&NetworkSpec::new(dims.to_vec()).unwrap(), &InitScheme::norm_preserving(seed)).unwrap()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let va = DVector::from_column_slice(a);
    let vb = DVector::from_column_slice(b);
    va.dot(&vb) / (va.norm() * vb.norm())
}
