//! Banded LU factorisation with partial pivoting.
//!
//! Operators assembled on the uniform grid couple each interior node only to
//! neighbours within `n_cells - 1` positions in natural ordering, so a band
//! solver keeps the per-step cost at `O(N * bw^2)`.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub-diagonals and `ku` super-diagonals.
///
/// Rows are stored with `kl` extra super-diagonals of room for pivoting fill.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.kl + self.ku);
        row * self.width + (col + self.kl - row)
    }

    /// Adds `value` to entry `(row, col)`. The entry must lie inside the band.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside band"
        );
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if col + self.kl < row || col > row + self.kl + self.ku {
            return 0.0;
        }
        self.data[self.slot(row, col)]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// Factorises in place, consuming the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![0.0; n * kl.max(1)];

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);

            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in (k + 1)..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Inconsistent(format!(
                    "singular banded matrix at column {k}"
                )));
            }
            pivots[k] = p;
            if p != k {
                for c in k..=last_col {
                    let a = self.slot(k, c);
                    let b = self.slot(p, c);
                    self.data.swap(a, b);
                }
            }

            let pivot = self.data[self.slot(k, k)];
            for r in (k + 1)..=last_row {
                let s = self.slot(r, k);
                let m = self.data[s] / pivot;
                self.data[s] = 0.0;
                multipliers[k * kl.max(1) + (r - k - 1)] = m;
                if m != 0.0 {
                    for c in (k + 1)..=last_col {
                        let top = self.data[self.slot(k, c)];
                        let sr = self.slot(r, c);
                        self.data[sr] -= m * top;
                    }
                }
            }
        }

        Ok(BandLu {
            upper: self,
            pivots,
            multipliers,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    upper: BandMatrix,
    pivots: Vec<usize>,
    multipliers: Vec<f64>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let u = &self.upper;
        let n = u.n;
        let kl = u.kl;
        let stride = kl.max(1);
        let mut x = rhs.to_vec();

        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let last_row = (k + kl).min(n - 1);
            for r in (k + 1)..=last_row {
                x[r] -= self.multipliers[k * stride + (r - k - 1)] * x[k];
            }
        }

        let reach = kl + u.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = x[k];
            for (c, xc) in x.iter().enumerate().take(last_col + 1).skip(k + 1) {
                acc -= u.data[u.slot(k, c)] * xc;
            }
            x[k] = acc / u.data[u.slot(k, k)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                a.add(r, c, rng.random_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn solves_random_banded_systems() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 1, 1, 2), (30, 5, 5, 3), (25, 2, 6, 4)] {
            let a = random_band(n, kl, ku, seed);
            let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() + 0.1).collect();
            let b = a.mul_vec(&x_true);
            let x = a.factor().unwrap().solve(&b);
            for (xi, ti) in x.iter().zip(&x_true) {
                assert!((xi - ti).abs() < 1e-8, "{xi} vs {ti}");
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.add(0, 1, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        let x = a.factor().unwrap().solve(&[2.0, 5.0]);
        assert!((x[0] - 3.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = BandMatrix::zeros(3, 1, 1);
        assert!(a.factor().is_err());
    }
}
