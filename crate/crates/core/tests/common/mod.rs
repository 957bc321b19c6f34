//! Helpers shared by the integration tests: random instances and
//! brute-force oracles that loop over every tensor entry.

#![allow(dead_code)]

use fcp_core::structured::StructuredKruskal;
use fcp_core::{DenseTensor, KruskalTensor, UnfoldingRule};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let normal = rand_distr::StandardNormal;
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(normal))
}

pub fn random_kruskal(shape: &[usize], rank: usize, rng: &mut impl Rng) -> KruskalTensor {
    let weights = (0..rank).map(|_| rng.random_range(0.5..2.0)).collect();
    let factors = shape.iter().map(|&i| gaussian_matrix(i, rank, rng)).collect();
    KruskalTensor::new(weights, factors).unwrap()
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
    let len = shape.iter().product();
    let normal = rand_distr::StandardNormal;
    DenseTensor::new(shape.to_vec(), (0..len).map(|_| rng.sample::<f64, _>(normal)).collect()).unwrap()
}

/// Shuffled modes cut into contiguous groups at random.
pub fn random_rule(order: usize, rng: &mut impl Rng) -> UnfoldingRule {
    let mut modes: Vec<usize> = (0..order).collect();
    modes.shuffle(rng);
    let mut groups = vec![vec![modes[0]]];
    for &m in &modes[1..] {
        if rng.random_bool(0.5) {
            groups.push(vec![m]);
        } else {
            groups.last_mut().unwrap().push(m);
        }
    }
    UnfoldingRule::new(groups).unwrap()
}

/// Visits every multi-index of `shape` in storage order (first mode fastest).
pub fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let len: usize = shape.iter().product();
    let mut idx = vec![0; shape.len()];
    for lin in 0..len {
        f(lin, &idx);
        for (k, &n) in shape.iter().enumerate() {
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `Σ_r w_r ∏_n A_n[i_n, r]` entry by entry.
pub fn kruskal_dense_oracle(k: &KruskalTensor) -> DenseTensor {
    let shape = k.shape();
    let mut data = vec![0.0; shape.iter().product()];
    for_each_index(&shape, |lin, idx| {
        data[lin] = (0..k.rank())
            .map(|r| k.weights()[r] * idx.iter().enumerate().map(|(n, &i)| k.factor(n)[(i, r)]).product::<f64>())
            .sum();
    });
    DenseTensor::new(shape, data).unwrap()
}

/// `M[i, r] = Σ_{idx: idx_n = i} t[idx] ∏_{k≠n} A_k[idx_k, r]`.
pub fn mttkrp_oracle(t: &DenseTensor, factors: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let r = factors[0].ncols();
    let mut m = DMatrix::zeros(t.shape()[n], r);
    let data = t.data();
    for_each_index(t.shape(), |lin, idx| {
        for j in 0..r {
            let mut p = data[lin];
            for (k, f) in factors.iter().enumerate() {
                if k != n {
                    p *= f[(idx[k], j)];
                }
            }
            m[(idx[n], j)] += p;
        }
    });
    m
}

pub fn orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    gaussian_matrix(rows, cols, rng).qr().q().columns(0, cols).into_owned()
}

/// Random structured tensor of order `shape.len()` with block ranks `j`.
pub fn random_structured(shape: &[usize], j: &[usize], rng: &mut impl Rng) -> StructuredKruskal {
    let n = shape.len();
    let r = j.len();
    let lambda = (0..r).map(|_| rng.random_range(0.5..2.0)).collect();
    let shared = shape[..n - 2]
        .iter()
        .map(|&i| {
            let mut b = gaussian_matrix(i, r, rng);
            for mut c in b.column_iter_mut() {
                let norm = c.norm();
                c /= norm;
            }
            b
        })
        .collect();
    let u = j.iter().map(|&jr| orthonormal(shape[n - 2], jr, rng)).collect();
    let v = j.iter().map(|&jr| orthonormal(shape[n - 1], jr, rng)).collect();
    let sigma = j
        .iter()
        .map(|&jr| {
            let mut s: Vec<f64> = (0..jr).map(|_| rng.random_range(0.1..1.0)).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        })
        .collect();
    StructuredKruskal::new(lambda, shared, u, v, sigma).unwrap()
}

/// Dense form of a structured tensor, entry by entry from its parts.
pub fn structured_dense_oracle(s: &StructuredKruskal) -> DenseTensor {
    let shape = s.shape();
    let n = shape.len();
    let (u, v, sigma) = s.split_bases();
    let mut data = vec![0.0; shape.iter().product()];
    for_each_index(&shape, |lin, idx| {
        let mut total = 0.0;
        for r in 0..s.components() {
            let mut p = s.lambda()[r];
            for (k, b) in s.shared().iter().enumerate() {
                p *= b[(idx[k], r)];
            }
            let split: f64 =
                (0..sigma[r].len()).map(|q| u[r][(idx[n - 2], q)] * sigma[r][q] * v[r][(idx[n - 1], q)]).sum();
            total += p * split;
        }
        data[lin] = total;
    });
    DenseTensor::new(shape, data).unwrap()
}

pub fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.distance(b).unwrap() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
