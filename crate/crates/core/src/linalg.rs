//! Small dense kernels on slices.
//!
//! The coordinate-descent inner loops spend nearly all their time in dot
//! products over columns; keeping these as plain slice loops lets the
//! compiler vectorize them without going through matrix views.

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for i in 0..x.len() {
        y[i] += alpha * x[i];
    }
}

/// Squared Euclidean norm divided by `n`: the empirical mean square.
#[inline]
pub fn mean_square(a: &[f64]) -> f64 {
    dot(a, a) / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_basic() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
    }

    #[test]
    fn axpy_basic() {
        let mut y = [1.0, 1.0];
        axpy(2.0, &[3.0, -1.0], &mut y);
        assert_eq!(y, [7.0, -1.0]);
    }

    #[test]
    fn mean_square_basic() {
        assert!((mean_square(&[1.0, -1.0, 3.0, -3.0]) - 5.0).abs() < 1e-15);
    }
}
