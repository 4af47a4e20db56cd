//! Dense Bunch-Kaufman LDLᵀ factorization with 1×1 and 2×2 pivots.
//!
//! Returns the inertia alongside the factors, which is what the barrier
//! solver's regularization loop keys on. The working matrix is kept fully
//! symmetric so interchanges are plain row+column swaps.

use nalgebra::{DMatrix, DVector};

const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One { k: usize, d: f64 },
    Two { k: usize, a: f64, b: f64, c: f64, det: f64 },
}

pub struct LdlFactor {
    n: usize,
    /// Strict lower triangle holds L; diagonal blocks live in `pivots`.
    work: DMatrix<f64>,
    pivots: Vec<Pivot>,
    /// Interchanges in application order: (step, other row).
    swaps: Vec<(usize, usize)>,
    inertia: (usize, usize, usize),
}

/// Factorizes a symmetric matrix; returns `None` when a pivot is numerically
/// zero (the matrix is singular to working precision).
pub fn factorize(a: &DMatrix<f64>) -> Option<LdlFactor> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut w = a.clone();
    let mut pivots = Vec::with_capacity(n);
    let mut swaps = Vec::new();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tiny = f64::EPSILON * f64::EPSILON * scale;

    let mut k = 0;
    while k < n {
        // Largest off-diagonal magnitude in column k at or below row k+1.
        let mut r = k;
        let mut colmax = 0.0;
        for i in k + 1..n {
            if w[(i, k)].abs() > colmax {
                colmax = w[(i, k)].abs();
                r = i;
            }
        }
        let akk = w[(k, k)].abs();

        let mut use_two = false;
        let mut swap_with = None;
        if colmax == 0.0 {
            if akk == 0.0 {
                return None;
            }
        } else if akk >= ALPHA * colmax {
            // keep 1x1
        } else {
            let mut rowmax: f64 = 0.0;
            for j in k..n {
                if j == r {
                    continue;
                }
                let v = if j > r { w[(j, r)] } else { w[(r, j)] };
                rowmax = rowmax.max(v.abs());
            }
            if akk * rowmax >= ALPHA * colmax * colmax {
                // keep 1x1
            } else if w[(r, r)].abs() >= ALPHA * rowmax {
                swap_with = Some((k, r));
            } else {
                use_two = true;
                if r != k + 1 {
                    swap_with = Some((k + 1, r));
                }
            }
        }

        if let Some((i, j)) = swap_with {
            w.swap_rows(i, j);
            w.swap_columns(i, j);
            swaps.push((i, j));
        }

        if !use_two {
            let d = w[(k, k)];
            if d.abs() <= tiny {
                return None;
            }
            for i in k + 1..n {
                let l = w[(i, k)] / d;
                for j in k + 1..=i {
                    let upd = l * w[(j, k)];
                    w[(i, j)] -= upd;
                    if i != j {
                        w[(j, i)] = w[(i, j)];
                    }
                }
            }
            for i in k + 1..n {
                w[(i, k)] /= d;
                w[(k, i)] = w[(i, k)];
            }
            pivots.push(Pivot::One { k, d });
            k += 1;
        } else {
            let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
            let det = a11 * a22 - a21 * a21;
            if det.abs() <= tiny * tiny.max(1.0) {
                return None;
            }
            let col1: Vec<f64> = (k + 2..n).map(|i| w[(i, k)]).collect();
            let col2: Vec<f64> = (k + 2..n).map(|i| w[(i, k + 1)]).collect();
            for i in k + 2..n {
                let (w1, w2) = (col1[i - k - 2], col2[i - k - 2]);
                let l1 = (a22 * w1 - a21 * w2) / det;
                let l2 = (a11 * w2 - a21 * w1) / det;
                for j in k + 2..=i {
                    let upd = l1 * col1[j - k - 2] + l2 * col2[j - k - 2];
                    w[(i, j)] -= upd;
                    if i != j {
                        w[(j, i)] = w[(i, j)];
                    }
                }
                w[(i, k)] = l1;
                w[(i, k + 1)] = l2;
            }
            // The in-block subdiagonal belongs to D, not L.
            w[(k + 1, k)] = 0.0;
            pivots.push(Pivot::Two { k, a: a11, b: a21, c: a22, det });
            k += 2;
        }
    }

    let mut inertia = (0usize, 0usize, 0usize);
    for p in &pivots {
        match *p {
            Pivot::One { d, .. } => {
                if d > 0.0 {
                    inertia.0 += 1;
                } else {
                    inertia.1 += 1;
                }
            }
            Pivot::Two { a, c, det, .. } => {
                if det < 0.0 {
                    inertia.0 += 1;
                    inertia.1 += 1;
                } else if a + c > 0.0 {
                    inertia.0 += 2;
                } else {
                    inertia.1 += 2;
                }
            }
        }
    }

    Some(LdlFactor { n, work: w, pivots, swaps, inertia })
}

impl LdlFactor {
    /// `(positive, negative, zero)` eigenvalue counts.
    pub fn inertia(&self) -> (usize, usize, usize) {
        self.inertia
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut b = rhs.clone();
        self.solve_in_place(&mut b);
        b
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let n = self.n;
        for &(i, j) in &self.swaps {
            b.swap_rows(i, j);
        }
        // Forward: L z = b.
        for p in &self.pivots {
            match *p {
                Pivot::One { k, .. } => {
                    let bk = b[k];
                    for i in k + 1..n {
                        b[i] -= self.work[(i, k)] * bk;
                    }
                }
                Pivot::Two { k, .. } => {
                    let (bk, bk1) = (b[k], b[k + 1]);
                    for i in k + 2..n {
                        b[i] -= self.work[(i, k)] * bk + self.work[(i, k + 1)] * bk1;
                    }
                }
            }
        }
        // Diagonal: D w = z.
        for p in &self.pivots {
            match *p {
                Pivot::One { k, d } => b[k] /= d,
                Pivot::Two { k, a, b: bb, c, det } => {
                    let (z1, z2) = (b[k], b[k + 1]);
                    b[k] = (c * z1 - bb * z2) / det;
                    b[k + 1] = (a * z2 - bb * z1) / det;
                }
            }
        }
        // Backward: Lᵀ u = w.
        for p in self.pivots.iter().rev() {
            match *p {
                Pivot::One { k, .. } => {
                    let mut acc = 0.0;
                    for i in k + 1..n {
                        acc += self.work[(i, k)] * b[i];
                    }
                    b[k] -= acc;
                }
                Pivot::Two { k, .. } => {
                    let (mut a0, mut a1) = (0.0, 0.0);
                    for i in k + 2..n {
                        a0 += self.work[(i, k)] * b[i];
                        a1 += self.work[(i, k + 1)] * b[i];
                    }
                    b[k] -= a0;
                    b[k + 1] -= a1;
                }
            }
        }
        for &(i, j) in self.swaps.iter().rev() {
            b.swap_rows(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random_symmetric(n: usize, seed: &mut u64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = lcg(seed) * 3.0;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    #[test]
    fn solves_and_counts_inertia_like_eigendecomposition() {
        let mut seed = 0x5eed;
        for n in [1, 2, 3, 5, 8, 17, 40] {
            for _ in 0..6 {
                let a = random_symmetric(n, &mut seed);
                let f = factorize(&a).expect("generic matrix should factor");
                let rhs = DVector::from_fn(n, |i, _| lcg(&mut seed) + i as f64 * 0.01);
                let x = f.solve(&rhs);
                let res = (&a * &x - &rhs).amax();
                assert!(res < 1e-8 * (1.0 + rhs.amax()), "n={n}: residual {res}");

                let eig = SymmetricEigen::new(a.clone());
                let tol = 1e-10 * a.amax().max(1.0);
                let pos = eig.eigenvalues.iter().filter(|&&e| e > tol).count();
                let neg = eig.eigenvalues.iter().filter(|&&e| e < -tol).count();
                assert_eq!(f.inertia().0, pos, "positive count, n={n}");
                assert_eq!(f.inertia().1, neg, "negative count, n={n}");
            }
        }
    }

    #[test]
    fn saddle_kkt_matrix_has_expected_inertia() {
        // [[1, 1], [1, 0]] is the canonical equality-KKT block: one positive,
        // one negative eigenvalue.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let f = factorize(&a).unwrap();
        assert_eq!(f.inertia(), (1, 1, 0));
    }

    #[test]
    fn exactly_singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(factorize(&a).is_none());
    }
}
