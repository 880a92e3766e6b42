//! Small dense helpers for the normal equations of the basis fit.

/// Row-major square matrix stored as a flat vector.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Solves `G[idx, idx] x = rhs[idx]` by Cholesky with a relative ridge.
///
/// Returns the solution, or the position within `idx` whose pivot collapsed.
pub(crate) fn solve_subset(gram: &SymMatrix, rhs: &[f64], idx: &[usize], ridge: f64) -> Result<Vec<f64>, usize> {
    let m = idx.len();
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = gram.get(idx[i], idx[j]);
            if i == j {
                s += ridge * gram.get(idx[i], idx[i]).abs().max(1.0);
            }
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(s > 1e-12 * gram.get(idx[i], idx[i]).abs().max(1e-300)) {
                    return Err(i);
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    let mut z = vec![0.0; m];
    for i in 0..m {
        let mut s = rhs[idx[i]];
        for k in 0..i {
            s -= l[i * m + k] * z[k];
        }
        z[i] = s / l[i * m + i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = z[i];
        for k in i + 1..m {
            s -= l[k * m + i] * x[k];
        }
        x[i] = s / l[i * m + i];
    }
    Ok(x)
}

/// Gram matrix `BᵀB` and moment vector `Bᵀy` of column-major data.
pub(crate) fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> (SymMatrix, Vec<f64>) {
    let m = cols.len();
    let mut g = SymMatrix::zeros(m);
    let mut c = vec![0.0; m];
    for i in 0..m {
        c[i] = dot(&cols[i], y);
        for j in 0..=i {
            let v = dot(&cols[i], &cols[j]);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    (g, c)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // columns [1,1,1], [0,1,2]; y = 1 + 2x
        let cols = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let y = vec![1.0, 3.0, 5.0];
        let (g, c) = normal_equations(&cols, &y);
        let x = solve_subset(&g, &c, &[0, 1], 0.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reports_collapsed_pivot() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        let y = vec![1.0, 1.0, 1.0];
        let (g, c) = normal_equations(&cols, &y);
        assert_eq!(solve_subset(&g, &c, &[0, 1], 0.0), Err(1));
    }
}
