//! Dense helpers over flat row-major storage. Everything here is small
//! enough that hand loops beat pulling in a linear-algebra stack, and the
//! auto-vectorizer does well on the contiguous dots.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

/// out = A x for row-major A (n x d).
pub fn matvec(a: &[f64], n: usize, d: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * d);
    debug_assert_eq!(x.len(), d);
    debug_assert_eq!(out.len(), n);
    for i in 0..n {
        out[i] = dot(&a[i * d..(i + 1) * d], x);
    }
}

/// out = A^T y for row-major A (n x d); accumulates row-wise so the inner
/// loop stays contiguous.
pub fn matvec_t(a: &[f64], n: usize, d: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * d);
    debug_assert_eq!(y.len(), n);
    debug_assert_eq!(out.len(), d);
    out.fill(0.0);
    for i in 0..n {
        axpy(y[i], &a[i * d..(i + 1) * d], out);
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix, in
/// place on a copy: returns lower-triangular L with A = L L^T, or None if
/// a pivot is not strictly positive.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solves A x = b given the Cholesky factor L of A (forward then back
/// substitution).
pub fn cholesky_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.len(), d);
    let mut y = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[i * d + k] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    let mut x = y;
    for i in (0..d).rev() {
        for k in (i + 1)..d {
            x[i] -= l[k * d + i] * x[k];
        }
        x[i] /= l[i * d + i];
    }
    x
}
