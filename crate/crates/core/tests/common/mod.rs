//! Random instances and dense reference computations shared by the
//! integration tests. Nothing here goes through the rank-1 or closed-form
//! code paths under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use seller_select::data::rng_stream;
use seller_select::{BuyerQuery, FeatureMatrix, InverseInfo};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_stream(seed, 99)
}

pub fn normal_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_features(rng: &mut impl Rng, n: usize, d: usize) -> FeatureMatrix {
    FeatureMatrix::from_row_major(n, d, normal_vec(rng, n * d)).unwrap()
}

pub fn random_query(rng: &mut impl Rng, m: usize, d: usize) -> BuyerQuery {
    BuyerQuery::new(random_features(rng, m, d))
}

/// Symmetric positive definite with eigenvalues bounded away from zero.
pub fn random_pd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(d, d, &normal_vec(rng, d * d)) / (d as f64).sqrt();
    &b * b.transpose() + DMatrix::identity(d, d) * 0.5
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("dense oracle: singular matrix")
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// `(1−α) P⁻¹ + α x xᵀ`, inverted densely.
pub fn dense_update(p: &DMatrix<f64>, x: &[f64], alpha: f64) -> DMatrix<f64> {
    let xv = DVector::from_column_slice(x);
    let info = dense_inverse(p) * (1.0 - alpha) + &xv * xv.transpose() * alpha;
    dense_inverse(&info)
}

/// Mean of per-buyer quadratic forms `x_iᵀ P x_i`.
pub fn loss_oracle(p: &DMatrix<f64>, query: &BuyerQuery) -> f64 {
    let rows = query.features();
    let total: f64 = rows
        .rows()
        .map(|r| {
            let v = DVector::from_column_slice(r);
            (v.transpose() * p * &v)[(0, 0)]
        })
        .sum();
    total / rows.nrows() as f64
}

/// Loss at weights `w` with `P` rebuilt from scratch by dense inversion.
pub fn loss_from_weights(x: &FeatureMatrix, w: &[f64], query: &BuyerQuery) -> f64 {
    let d = x.ncols();
    let mut info = DMatrix::zeros(d, d);
    for (row, wj) in x.rows().zip(w) {
        let v = DVector::from_column_slice(row);
        info += &v * v.transpose() * *wj;
    }
    loss_oracle(&dense_inverse(&info), query)
}

/// `mean_i (x_iᵀ P x_j)²` per seller, one buyer point at a time.
pub fn score_oracle(p: &DMatrix<f64>, x: &FeatureMatrix, query: &BuyerQuery) -> Vec<f64> {
    let m = query.nrows() as f64;
    x.rows()
        .map(|xj| {
            let xj = DVector::from_column_slice(xj);
            query
                .features()
                .rows()
                .map(|xi| {
                    let xi = DVector::from_column_slice(xi);
                    let v = (xi.transpose() * p * &xj)[(0, 0)];
                    v * v
                })
                .sum::<f64>()
                / m
        })
        .collect()
}

pub fn info_from(p: DMatrix<f64>) -> InverseInfo {
    InverseInfo::from_matrix(p).unwrap()
}

/// Full-sort ranking: value descending, index ascending.
pub fn sort_oracle(values: &[f64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.into_iter().map(|p| p.1).collect()
}
