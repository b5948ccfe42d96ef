//! Gaussian elimination over F_q on dense row-major matrices.

use crate::field::PrimeField;

/// Reduced row echelon form of a matrix, remembering how every reduced row
/// is built from the original rows.
#[derive(Clone, Debug)]
pub struct Echelon {
    /// Nonzero rows of the RREF; pivot entries are 1.
    pub rows: Vec<Vec<u32>>,
    /// `combos[r]` expresses `rows[r]` as a combination of the input rows.
    pub combos: Vec<Vec<u32>>,
    pub pivots: Vec<usize>,
    /// Basis of the left null space: `y` with `yᵀ·M = 0`.
    pub left_null: Vec<Vec<u32>>,
    n_inputs: usize,
}

impl Echelon {
    pub fn new(f: &PrimeField, m: &[Vec<u32>], n_cols: usize) -> Echelon {
        let n_rows = m.len();
        let mut rows: Vec<Vec<u32>> = m.to_vec();
        let mut combos: Vec<Vec<u32>> = (0..n_rows)
            .map(|i| {
                let mut e = vec![0u32; n_rows];
                e[i] = 1;
                e
            })
            .collect();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..n_cols {
            let Some(p) = (r..n_rows).find(|&i| rows[i][c] != 0) else { continue };
            rows.swap(r, p);
            combos.swap(r, p);
            let inv = f.inv(rows[r][c]).expect("nonzero pivot");
            scale(f, &mut rows[r], inv);
            scale(f, &mut combos[r], inv);
            for i in 0..n_rows {
                if i != r && rows[i][c] != 0 {
                    let factor = rows[i][c];
                    let (pr, pc) = (rows[r].clone(), combos[r].clone());
                    axpy(f, &mut rows[i], factor, &pr);
                    axpy(f, &mut combos[i], factor, &pc);
                }
            }
            pivots.push(c);
            r += 1;
            if r == n_rows {
                break;
            }
        }
        let left_null = combos[r..].to_vec();
        rows.truncate(r);
        combos.truncate(r);
        Echelon { rows, combos, pivots, left_null, n_inputs: n_rows }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Finds `c` with `cᵀ·M = target`, if the target lies in the row space.
    pub fn solve_left(&self, f: &PrimeField, target: &[u32]) -> Option<Vec<u32>> {
        let mut residual = target.to_vec();
        let mut c = vec![0u32; self.n_inputs];
        for (r, &p) in self.pivots.iter().enumerate() {
            let coef = residual[p];
            if coef == 0 {
                continue;
            }
            axpy(f, &mut residual, coef, &self.rows[r]);
            for (ci, &v) in c.iter_mut().zip(&self.combos[r]) {
                *ci = f.add(*ci, f.mul(coef, v));
            }
        }
        residual.iter().all(|&v| v == 0).then_some(c)
    }
}

/// `a <- a - factor·b`
fn axpy(f: &PrimeField, a: &mut [u32], factor: u32, b: &[u32]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x = f.sub(*x, f.mul(factor, y));
    }
}

fn scale(f: &PrimeField, a: &mut [u32], s: u32) {
    for x in a.iter_mut() {
        *x = f.mul(*x, s);
    }
}

pub fn rank(f: &PrimeField, m: &[Vec<u32>], n_cols: usize) -> usize {
    Echelon::new(f, m, n_cols).rank()
}

/// `yᵀ·M` for a row-major `M`.
pub fn left_mul(f: &PrimeField, y: &[u32], m: &[Vec<u32>], n_cols: usize) -> Vec<u32> {
    let mut out = vec![0u32; n_cols];
    for (row, &c) in m.iter().zip(y) {
        if c == 0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(row) {
            *o = f.add(*o, f.mul(c, v));
        }
    }
    out
}
