//! Symmetric positive definite sparse systems.
//!
//! The pressure Schur complement is factored once per run and reused across
//! time steps, so the default backend is a direct envelope Cholesky after a
//! reverse Cuthill-McKee reordering. Very large systems fall back to
//! Jacobi-preconditioned conjugate gradients. Both backends honor the same
//! contract: the returned solution has relative residual at most `tol`.

use thiserror::Error;

/// Above this many unknowns the direct factorization gives way to CG.
pub const DIRECT_SOLVE_MAX_DOFS: usize = 200_000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("iterative solve did not converge in {iters} iterations (relative residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("operator is indefinite: p^T A p = {curvature:e} at iteration {iter}")]
    Indefinite { iter: usize, curvature: f64 },
    #[error("dimension mismatch: matrix is {n}, rhs has {rhs}")]
    DimensionMismatch { n: usize, rhs: usize },
}

/// Compressed sparse rows, structurally symmetric.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    pub n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSpd {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_count = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_count[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_count[r + 1] += row_count[r];
        }
        Self {
            n,
            row_start: row_count,
            cols,
            vals,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_start[r]..self.row_start[r + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut sum = 0.0;
            for k in self.row_start[r]..self.row_start[r + 1] {
                sum += self.vals[k] * x[self.cols[k]];
            }
            out[r] = sum;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.row(r)
                    .find(|&(c, _)| c == r)
                    .map(|(_, v)| v)
                    .unwrap_or(0.0)
            })
            .collect()
    }

    /// Largest relative asymmetry max |A_ij - A_ji| / max |A_ij|.
    pub fn asymmetry(&self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_diff = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                max_entry = max_entry.max(v.abs());
                let vt = self
                    .row(c)
                    .find(|&(cc, _)| cc == r)
                    .map(|(_, v)| v)
                    .unwrap_or(0.0);
                max_diff = max_diff.max((v - vt).abs());
            }
        }
        if max_entry == 0.0 {
            0.0
        } else {
            max_diff / max_entry
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reverse Cuthill-McKee ordering: BFS from a minimum-degree vertex with
/// neighbors visited in degree order, then reversed. Keeps the envelope of
/// grid-like graphs narrow.
fn reverse_cuthill_mckee(a: &SparseSpd) -> Vec<usize> {
    let n = a.n;
    let degree = |v: usize| a.row_start[v + 1] - a.row_start[v];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| degree(v))
            .unwrap();
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .map(|(c, _)| c)
                .filter(|&c| c != v && !visited[c])
                .collect();
            nbrs.sort_unstable_by_key(|&c| (degree(c), c));
            for c in nbrs {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factorization of a permuted matrix. Row `i`
/// stores columns `first[i] ..= i` contiguously.
#[derive(Debug, Clone)]
struct EnvelopeFactor {
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeFactor {
    fn factor(a: &SparseSpd) -> Result<Self, SolveError> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (c, _) in a.row(old) {
                let j = inv[c];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0f64; offsets[n]];
        for old in 0..n {
            let i = inv[old];
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j <= i {
                    values[offsets[i] + (j - first[i])] += v;
                }
            }
        }

        // In-place LL^T restricted to the envelope.
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut sum = values[offsets[i] + (j - fi)];
                let (ri, rj) = (offsets[i] - fi, offsets[j] - fj);
                for k in lo..j {
                    sum -= values[ri + k] * values[rj + k];
                }
                values[offsets[i] + (j - fi)] = sum / values[offsets[j] + (j - fj)];
            }
            let mut d = values[offsets[i] + (i - fi)];
            let ri = offsets[i] - fi;
            for k in fi..i {
                d -= values[ri + k] * values[ri + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(SolveError::NotPositiveDefinite { row: i, pivot: d });
            }
            values[offsets[i] + (i - fi)] = d.sqrt();
        }

        Ok(Self {
            perm,
            first,
            offsets,
            values,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            y[new] = b[old];
        }
        // L y' = y
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.offsets[i] - fi;
            let mut sum = y[i];
            for k in fi..i {
                sum -= self.values[ri + k] * y[k];
            }
            y[i] = sum / self.values[ri + i];
        }
        // L^T x = y'
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.offsets[i] - fi;
            y[i] /= self.values[ri + i];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.values[ri + k] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Cholesky(EnvelopeFactor),
    ConjugateGradient { inv_diag: Vec<f64> },
}

/// Reusable solver for one SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    matrix: SparseSpd,
    backend: Backend,
}

impl SpdSolver {
    /// Factor or precondition `matrix`, choosing the backend by size.
    pub fn new(matrix: SparseSpd) -> Result<Self, SolveError> {
        if matrix.n <= DIRECT_SOLVE_MAX_DOFS {
            Self::direct(matrix)
        } else {
            Self::iterative(matrix)
        }
    }

    pub fn direct(matrix: SparseSpd) -> Result<Self, SolveError> {
        let factor = EnvelopeFactor::factor(&matrix)?;
        Ok(Self {
            matrix,
            backend: Backend::Cholesky(factor),
        })
    }

    pub fn iterative(matrix: SparseSpd) -> Result<Self, SolveError> {
        let diag = matrix.diagonal();
        for (row, &d) in diag.iter().enumerate() {
            if !(d > 0.0) {
                return Err(SolveError::NotPositiveDefinite { row, pivot: d });
            }
        }
        let inv_diag = diag.iter().map(|d| 1.0 / d).collect();
        Ok(Self {
            matrix,
            backend: Backend::ConjugateGradient { inv_diag },
        })
    }

    pub fn matrix(&self) -> &SparseSpd {
        &self.matrix
    }

    /// Solve to relative residual `tol`. A zero right-hand side returns the
    /// zero vector.
    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
        if rhs.len() != self.matrix.n {
            return Err(SolveError::DimensionMismatch {
                n: self.matrix.n,
                rhs: rhs.len(),
            });
        }
        let b_norm = norm2(rhs);
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.matrix.n]);
        }
        match &self.backend {
            Backend::Cholesky(factor) => {
                let mut x = factor.solve(rhs);
                // One round of iterative refinement if rounding left the
                // residual above the contract.
                let mut r = vec![0.0; self.matrix.n];
                for _ in 0..2 {
                    self.matrix.apply(&x, &mut r);
                    for (ri, bi) in r.iter_mut().zip(rhs) {
                        *ri = bi - *ri;
                    }
                    let rel = norm2(&r) / b_norm;
                    if rel <= tol {
                        return Ok(x);
                    }
                    let dx = factor.solve(&r);
                    for (xi, di) in x.iter_mut().zip(&dx) {
                        *xi += di;
                    }
                }
                self.matrix.apply(&x, &mut r);
                for (ri, bi) in r.iter_mut().zip(rhs) {
                    *ri = bi - *ri;
                }
                let rel = norm2(&r) / b_norm;
                if rel <= tol {
                    Ok(x)
                } else {
                    Err(SolveError::NonConvergence {
                        iters: 2,
                        residual: rel,
                    })
                }
            }
            Backend::ConjugateGradient { inv_diag } => {
                self.conjugate_gradient(rhs, b_norm, inv_diag, tol)
            }
        }
    }

    fn conjugate_gradient(
        &self,
        rhs: &[f64],
        b_norm: f64,
        inv_diag: &[f64],
        tol: f64,
    ) -> Result<Vec<f64>, SolveError> {
        let n = self.matrix.n;
        let max_iter = 200 + 20 * n;
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        for iter in 0..max_iter {
            self.matrix.apply(&p, &mut ap);
            let curvature: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if curvature <= 0.0 {
                return Err(SolveError::Indefinite { iter, curvature });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm2(&r) / b_norm <= tol {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(SolveError::NonConvergence {
            iters: max_iter,
            residual: norm2(&r) / b_norm,
        })
    }
}

/// One-shot solve with automatic backend selection.
pub fn solve_spd(matrix: &SparseSpd, rhs: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
    SpdSolver::new(matrix.clone())?.solve(rhs, tol)
}
