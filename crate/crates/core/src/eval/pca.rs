use crate::error::{Error, Result};
use crate::nn::dot;
use crate::rng::Rng;

const TOLERANCE: f64 = 1e-9;
const MAX_ITERS: usize = 1000;
/// `λ₂/λ₁` above this is reported as near-degenerate.
pub const NEAR_DEGENERATE_RATIO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// The second component carries (numerically) no variance.
    pub rank_deficient: bool,
    /// The top two eigenvalues are too close for a stable ordering.
    pub near_degenerate: bool,
}

/// Projects onto the top two principal components, found by power iteration
/// with deflation on the covariance matrix.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Pca2d> {
    if vectors.len() < 3 {
        return Err(Error::Data("PCA needs at least 3 vectors".into()));
    }
    let d = vectors[0].len();
    if d < 2 {
        return Err(Error::Data("PCA needs dimension >= 2".into()));
    }
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape("vectors differ in length".into()));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for v in &centered {
        for i in 0..d {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += vi * v[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / n;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }

    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let (v1, l1) = top_eigenvector(&cov, d, 1, None);
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (v2, l2) = top_eigenvector(&cov, d, 2, Some(&v1));
    let scale = trace.max(f64::MIN_POSITIVE);
    let rank_deficient = l2 <= 1e-12 * scale;
    let near_degenerate = l1 > 0.0 && l2 / l1 > NEAR_DEGENERATE_RATIO;
    let coords = centered.iter().map(|v| [dot(v, &v1), dot(v, &v2)]).collect();
    Ok(Pca2d {
        coords,
        components: [v1, v2],
        eigenvalues: [l1, l2.max(0.0)],
        rank_deficient,
        near_degenerate,
    })
}

fn mat_vec(a: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&a[i * d..(i + 1) * d], v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Makes the largest-magnitude loading positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn project_out(v: &mut [f64], against: Option<&[f64]>) {
    if let Some(u) = against {
        let c = dot(v, u);
        v.iter_mut().zip(u).for_each(|(x, ui)| *x -= c * ui);
    }
}

/// `against`, when given, is a unit vector the result is kept orthogonal to.
fn top_eigenvector(a: &[f64], d: usize, stream: u64, against: Option<&[f64]>) -> (Vec<f64>, f64) {
    let mut rng = Rng::new(0x9CA, stream);
    let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    project_out(&mut v, against);
    normalize(&mut v);
    for _ in 0..MAX_ITERS {
        let mut next = mat_vec(a, d, &v);
        project_out(&mut next, against);
        if normalize(&mut next) == 0.0 {
            // null matrix: any unit vector is an eigenvector with λ = 0
            fix_sign(&mut v);
            return (v, 0.0);
        }
        fix_sign(&mut next);
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = next;
        if diff < TOLERANCE {
            break;
        }
    }
    fix_sign(&mut v);
    let lambda = dot(&v, &mat_vec(a, d, &v));
    (v, lambda)
}
