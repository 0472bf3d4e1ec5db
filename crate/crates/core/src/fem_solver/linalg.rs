//! Dense symmetric storage and Cholesky factorization.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
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
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |K_ij - K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

/// Pivots at or below `rel_tol * max diagonal` are reported as deficient.
/// Factorization continues past them (the row is decoupled) so that every
/// deficient equation is listed, not only the first.
pub fn cholesky(a: &DenseMatrix, rel_tol: f64) -> Result<Cholesky, Vec<usize>> {
    let n = a.n;
    let scale = (0..n)
        .fold(0.0f64, |m, i| m.max(a.get(i, i).abs()))
        .max(f64::MIN_POSITIVE);
    let mut l = DenseMatrix::zeros(n);
    let mut bad = Vec::new();
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= rel_tol * scale || !d.is_finite() {
            bad.push(j);
            l.data[j * n + j] = 1.0;
            continue;
        }
        let ljj = d.sqrt();
        l.data[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.data[i * n + j] = s / ljj;
        }
    }
    if bad.is_empty() {
        Ok(Cholesky { l })
    } else {
        Err(bad)
    }
}

impl Cholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = (0..i).fold(y[i], |s, k| s - self.l.get(i, k) * y[k]);
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let s = (i + 1..n).fold(y[i], |s, k| s - self.l.get(k, i) * y[k]);
            y[i] = s / self.l.get(i, i);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let mut a = DenseMatrix::zeros(3);
        let vals = [4.0, 12.0, -16.0, 12.0, 37.0, -43.0, -16.0, -43.0, 98.0];
        a.data.copy_from_slice(&vals);
        let c = cholesky(&a, 1e-12).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn reports_every_deficient_pivot() {
        let mut a = DenseMatrix::zeros(3);
        a.data
            .copy_from_slice(&[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cholesky(&a, 1e-12).unwrap_err(), vec![1, 2]);
    }
}
