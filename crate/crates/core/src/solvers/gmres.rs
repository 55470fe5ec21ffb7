//! ILU(0)-preconditioned restarted GMRES for the stationary system.
//!
//! The direct factorization's fill-in grows quickly on the lattice-like
//! reduced state spaces, so large systems are solved iteratively: an
//! incomplete LU factorization on the unchanged sparsity pattern
//! preconditions a right-preconditioned GMRES(m). Everything here is
//! deterministic; the caller re-checks the residual contract on the result.

/// Compressed sparse rows with ascending column indices per row.
pub(crate) struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[span.clone()], &self.val[span])
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            out[i] = acc;
        }
    }
}

/// ILU(0) factors stored on the matrix sparsity: strict lower part of L
/// (unit diagonal implied) and upper part of U, diagonal included.
pub(crate) struct Ilu0 {
    factors: Csr,
    diag_index: Vec<usize>,
}

pub(crate) fn ilu0(matrix: &Csr) -> Option<Ilu0> {
    let n = matrix.n;
    let mut factors = Csr {
        n,
        row_ptr: matrix.row_ptr.clone(),
        col: matrix.col.clone(),
        val: matrix.val.clone(),
    };
    let mut diag_index = vec![usize::MAX; n];
    for i in 0..n {
        for idx in factors.row_ptr[i]..factors.row_ptr[i + 1] {
            if factors.col[idx] == i {
                diag_index[i] = idx;
            }
        }
        if diag_index[i] == usize::MAX {
            return None; // structurally missing diagonal
        }
    }

    // Scatter workspace: position of each column inside the current row.
    let mut position = vec![usize::MAX; n];
    for i in 0..n {
        let row_span = factors.row_ptr[i]..factors.row_ptr[i + 1];
        for idx in row_span.clone() {
            position[factors.col[idx]] = idx;
        }
        for idx in row_span.clone() {
            let k = factors.col[idx];
            if k >= i {
                break; // columns ascend; lower part exhausted
            }
            let pivot = factors.val[diag_index[k]];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let factor = factors.val[idx] / pivot;
            factors.val[idx] = factor;
            for upper in diag_index[k] + 1..factors.row_ptr[k + 1] {
                let j = factors.col[upper];
                let target = position[j];
                if target != usize::MAX && target >= idx {
                    factors.val[target] -= factor * factors.val[upper];
                }
            }
        }
        for idx in row_span {
            position[factors.col[idx]] = usize::MAX;
        }
        if factors.val[diag_index[i]] == 0.0 {
            return None;
        }
    }
    Some(Ilu0 {
        factors,
        diag_index,
    })
}

impl Ilu0 {
    /// Applies the preconditioner: solves `L U x = b`.
    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        let n = self.factors.n;
        out.copy_from_slice(b);
        for i in 0..n {
            let mut acc = out[i];
            for idx in self.factors.row_ptr[i]..self.diag_index[i] {
                acc -= self.factors.val[idx] * out[self.factors.col[idx]];
            }
            out[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = out[i];
            for idx in self.diag_index[i] + 1..self.factors.row_ptr[i + 1] {
                acc -= self.factors.val[idx] * out[self.factors.col[idx]];
            }
            out[i] = acc / self.factors.val[self.diag_index[i]];
        }
    }
}

pub(crate) struct GmresSettings {
    pub restart: usize,
    pub max_restarts: usize,
    /// Absolute 2-norm residual target.
    pub target_residual: f64,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            restart: 100,
            max_restarts: 60,
            target_residual: 1e-11,
        }
    }
}

/// Right-preconditioned restarted GMRES; returns the iterate whose true
/// residual met the target, or the best iterate found (the caller's
/// residual checks decide whether that is acceptable).
pub(crate) fn gmres(matrix: &Csr, precond: &Ilu0, b: &[f64], settings: &GmresSettings) -> Vec<f64> {
    let n = matrix.n;
    let m = settings.restart.min(n);
    let mut x = vec![0.0; n];
    let mut residual = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hessenberg = vec![vec![0.0f64; m]; m + 1];

    let mut best_x = x.clone();
    let mut best_norm = f64::INFINITY;

    for _ in 0..settings.max_restarts {
        matrix.matvec_into(&x, &mut residual);
        for (r, &bv) in residual.iter_mut().zip(b) {
            *r = bv - *r;
        }
        let beta = norm2(&residual);
        if beta < best_norm {
            best_norm = beta;
            best_x.copy_from_slice(&x);
        }
        if beta <= settings.target_residual {
            return x;
        }

        basis.clear();
        basis.push(residual.iter().map(|v| v / beta).collect());
        let mut givens: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut rhs = vec![0.0f64; m + 1];
        rhs[0] = beta;
        let mut steps = 0;

        for j in 0..m {
            precond.solve_into(&basis[j], &mut scratch);
            let mut w = vec![0.0; n];
            matrix.matvec_into(&scratch, &mut w);
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hessenberg[i][j] = h;
                for (wv, &vv) in w.iter_mut().zip(v) {
                    *wv -= h * vv;
                }
            }
            let h_next = norm2(&w);
            hessenberg[j + 1][j] = h_next;

            // Apply the accumulated rotations, then a new one.
            for (i, &(c, s)) in givens.iter().enumerate() {
                let a = hessenberg[i][j];
                let b2 = hessenberg[i + 1][j];
                hessenberg[i][j] = c * a + s * b2;
                hessenberg[i + 1][j] = -s * a + c * b2;
            }
            let (c, s) = rotation(hessenberg[j][j], hessenberg[j + 1][j]);
            let a = hessenberg[j][j];
            let b2 = hessenberg[j + 1][j];
            hessenberg[j][j] = c * a + s * b2;
            hessenberg[j + 1][j] = 0.0;
            givens.push((c, s));
            let r0 = rhs[j];
            rhs[j] = c * r0;
            rhs[j + 1] = -s * r0;
            steps = j + 1;

            if h_next == 0.0 || rhs[j + 1].abs() <= settings.target_residual {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        // Back-substitute the triangularized least-squares system.
        let mut y = vec![0.0f64; steps];
        for i in (0..steps).rev() {
            let mut acc = rhs[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                acc -= hessenberg[i][k] * yk;
            }
            y[i] = acc / hessenberg[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, &vv) in update.iter_mut().zip(&basis[j]) {
                *u += yj * vv;
            }
        }
        precond.solve_into(&update, &mut scratch);
        for (xv, &sv) in x.iter_mut().zip(&scratch) {
            *xv += sv;
        }
    }

    matrix.matvec_into(&x, &mut residual);
    for (r, &bv) in residual.iter_mut().zip(b) {
        *r = bv - *r;
    }
    if norm2(&residual) <= best_norm {
        x
    } else {
        best_x
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotation(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csr_from_dense(dense: &[&[f64]]) -> Csr {
        let n = dense.len();
        let mut row_ptr = vec![0usize];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for row in dense {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    #[test]
    fn solves_a_small_unsymmetric_system() {
        let matrix = csr_from_dense(&[
            &[4.0, -1.0, 0.0, 1.0],
            &[-2.0, 5.0, -1.0, 0.0],
            &[0.0, -1.0, 3.0, -1.0],
            &[1.0, 0.0, -1.0, 4.0],
        ]);
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        matrix.matvec_into(&x_true, &mut b);
        let precond = ilu0(&matrix).unwrap();
        let x = gmres(&matrix, &precond, &b, &GmresSettings::default());
        for (got, want) in x.iter().zip(x_true) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn ilu_rejects_missing_diagonal() {
        let matrix = csr_from_dense(&[&[0.0, 1.0], &[1.0, 1.0]]);
        // First row has no stored diagonal entry.
        assert!(ilu0(&matrix).is_none());
    }
}
