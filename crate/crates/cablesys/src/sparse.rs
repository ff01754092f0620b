//! Sparse symmetric linear algebra: CSR storage, Jacobi-preconditioned
//! conjugate gradients, and an LDL^T direct factorization with a
//! minimum-degree ordering.
//!
//! The meshes in this crate are trees or near-trees (the Vicsek core is a
//! tree, the Sierpinski core has low treewidth), so LDL^T fill-in is tiny and
//! a factorization can be reused across the many right-hand sides of a time
//! step or a harmonic-sample battery. CG remains the solver for one-off
//! elliptic systems.

use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};

/// Symmetric sparse matrix in CSR form. Both triangles are stored.
#[derive(Debug, Clone)]
pub struct CsrMatrix<F> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<F>,
}

impl<F: Scalar> CsrMatrix<F> {
    /// Assemble from triplets, summing duplicates. Entries are kept in
    /// (row, col) order so rebuilds are bit-identical.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, F)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if !col_idx.is_empty() && row_ptr[r + 1] == col_idx.len() && *col_idx.last().unwrap() == c
            {
                // same (r, c) as previous: accumulate
                let last = values.len() - 1;
                values[last] += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] = col_idx.len();
            }
        }
        // make row_ptr cumulative over empty rows too
        for r in 0..n {
            if row_ptr[r + 1] < row_ptr[r] {
                row_ptr[r + 1] = row_ptr[r];
            }
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[F], y: &mut [F]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = F::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[F]) -> Vec<F> {
        let mut y = vec![F::zero(); self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// Quadratic form x^T A x.
    pub fn quadratic_form(&self, x: &[F]) -> F {
        let mut acc = F::zero();
        for r in 0..self.n {
            let mut row = F::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            acc += x[r] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<F> {
        let mut d = vec![F::zero(); self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    /// A + diag(w): returns a new matrix with `w` added on the diagonal.
    pub fn add_diagonal(&self, w: &[F]) -> CsrMatrix<F> {
        let mut triplets: Vec<(usize, usize, F)> = Vec::with_capacity(self.nnz() + self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((r, self.col_idx[k], self.values[k]));
            }
            triplets.push((r, r, w[r]));
        }
        CsrMatrix::from_triplets(self.n, triplets)
    }

    /// a*A + diag(w) for the Crank-Nicolson step matrices.
    pub fn scale_add_diagonal(&self, a: F, w: &[F]) -> CsrMatrix<F> {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = *v * a;
        }
        out.add_diagonal_in_place(w);
        out
    }

    fn add_diagonal_in_place(&mut self, w: &[F]) {
        // assumes every row already has a diagonal entry (true for our
        // stiffness matrices, where vertex rows carry degree terms)
        for r in 0..self.n {
            let mut found = false;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    self.values[k] += w[r];
                    found = true;
                    break;
                }
            }
            assert!(found, "missing structural diagonal in row {r}");
        }
    }

    /// Restriction A[keep, keep] with `keep` in ascending order.
    pub fn restrict(&self, keep: &[usize]) -> CsrMatrix<F> {
        let mut pos = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            for k in self.row_ptr[old_r]..self.row_ptr[old_r + 1] {
                let c = pos[self.col_idx[k]];
                if c != usize::MAX {
                    triplets.push((new_r, c, self.values[k]));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), triplets)
    }
}

/// Dot product.
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Outcome of a CG solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Solves A x = b in place of `x` (initial guess). Relative tolerance is on
/// ||r|| / ||b||; a zero right-hand side returns x = 0 immediately.
pub fn cg_solve<F: Scalar>(
    a: &CsrMatrix<F>,
    b: &[F],
    x: &mut [F],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == F::zero() {
        x.iter_mut().for_each(|v| *v = F::zero());
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let tol = sc::<F>(rel_tol) * bnorm;
    let inv_diag: Vec<F> = a
        .diagonal()
        .into_iter()
        .map(|d| {
            debug_assert!(d > F::zero(), "Jacobi preconditioner needs positive diagonal");
            F::one() / d
        })
        .collect();

    let mut r = vec![F::zero(); n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<F> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![F::zero(); n];

    for it in 0..max_iter {
        if norm2(&r) <= tol {
            return Ok(CgStats {
                iterations: it,
                relative_residual: (norm2(&r) / bnorm).to_f64().unwrap_or(f64::NAN),
            });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= F::zero() {
            return Err(Error::NoConvergence {
                solver: "cg",
                iterations: it,
                residual: (norm2(&r) / bnorm).to_f64().unwrap_or(f64::NAN),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = (norm2(&r) / bnorm).to_f64().unwrap_or(f64::NAN);
    if rel <= rel_tol * 10.0 {
        // accept marginal convergence rather than fail a long experiment
        return Ok(CgStats {
            iterations: max_iter,
            relative_residual: rel,
        });
    }
    Err(Error::NoConvergence {
        solver: "cg",
        iterations: max_iter,
        residual: rel,
    })
}

/// Minimum-degree elimination ordering on the symmetric nonzero pattern.
fn min_degree_order<F: Scalar>(a: &CsrMatrix<F>) -> Vec<usize> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    use std::collections::HashSet;

    let n = a.n;
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.col_idx[k];
            if c != r {
                adj[r].insert(c);
                adj[c].insert(r);
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::with_capacity(n);
    for v in 0..n {
        heap.push(Reverse((adj[v].len(), v)));
    }
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || adj[v].len() != deg {
            continue; // stale heap entry
        }
        eliminated[v] = true;
        order.push(v);
        let neigh: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &neigh {
            adj[u].remove(&v);
        }
        // connect the neighborhood into a clique (the fill of eliminating v)
        for i in 0..neigh.len() {
            for j in (i + 1)..neigh.len() {
                let (u, w) = (neigh[i], neigh[j]);
                if adj[u].insert(w) {
                    adj[w].insert(u);
                }
            }
        }
        for &u in &neigh {
            if !eliminated[u] {
                heap.push(Reverse((adj[u].len(), u)));
            }
        }
        adj[v].clear();
    }
    order
}

/// LDL^T factorization of an SPD matrix with a minimum-degree permutation.
#[derive(Debug, Clone)]
pub struct LdlFactor<F> {
    n: usize,
    /// order[k] = original index eliminated at step k
    order: Vec<usize>,
    /// position of original index in the elimination order
    position: Vec<usize>,
    /// unit lower-triangular columns, entries (row, value) with row > col,
    /// rows ascending, in permuted indexing
    cols: Vec<Vec<(usize, F)>>,
    diag: Vec<F>,
}

impl<F: Scalar> LdlFactor<F> {
    /// Factor P A P^T = L D L^T. Fails if a pivot is not strictly positive.
    pub fn new(a: &CsrMatrix<F>) -> Result<Self> {
        let order = min_degree_order(a);
        Self::with_order(a, order)
    }

    pub fn with_order(a: &CsrMatrix<F>, order: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut position = vec![0usize; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        // working lower-triangular columns in permuted indexing
        let mut work: Vec<std::collections::HashMap<usize, F>> =
            vec![std::collections::HashMap::new(); n];
        let mut diag = vec![F::zero(); n];
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[k];
                let (pr, pc) = (position[r], position[c]);
                if pr == pc {
                    diag[pr] += a.values[k];
                } else if pr > pc {
                    *work[pc].entry(pr).or_insert_with(F::zero) += a.values[k];
                }
            }
        }
        let mut cols: Vec<Vec<(usize, F)>> = Vec::with_capacity(n);
        for j in 0..n {
            let d = diag[j];
            if !(d > F::zero()) {
                return Err(Error::invalid(format!(
                    "LDL^T pivot {j} is not positive ({d}); matrix not SPD"
                )));
            }
            let mut entries: Vec<(usize, F)> =
                std::mem::take(&mut work[j]).into_iter().collect();
            entries.sort_by_key(|e| e.0);
            // right-looking update: A[i,k] -= a_ij a_kj / d for i,k > j
            for (ii, &(i, vi)) in entries.iter().enumerate() {
                diag[i] -= vi * vi / d;
                for &(k, vk) in entries.iter().skip(ii + 1) {
                    *work[i].entry(k).or_insert_with(F::zero) -= vi * vk / d;
                }
            }
            cols.push(
                entries
                    .into_iter()
                    .map(|(i, v)| (i, v / d))
                    .collect(),
            );
            diag[j] = d;
        }
        Ok(LdlFactor {
            n,
            order,
            position,
            cols,
            diag,
        })
    }

    /// Fill-in size (number of off-diagonal L entries).
    pub fn l_nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.n;
        let mut y = vec![F::zero(); n];
        for i in 0..n {
            y[self.position[i]] = b[i];
        }
        // forward: L y' = y
        for j in 0..n {
            let yj = y[j];
            if yj != F::zero() {
                for &(i, l) in &self.cols[j] {
                    y[i] -= l * yj;
                }
            }
        }
        // diagonal
        for j in 0..n {
            y[j] /= self.diag[j];
        }
        // backward: L^T x = y
        for j in (0..n).rev() {
            let mut acc = y[j];
            for &(i, l) in &self.cols[j] {
                acc -= l * y[i];
            }
            y[j] = acc;
        }
        let mut x = vec![F::zero(); n];
        for i in 0..n {
            x[i] = y[self.position[i]];
        }
        x
    }

    pub fn orderings(&self) -> &[usize] {
        &self.order
    }
}

/// LDL^T with the symbolic analysis (ordering, elimination tree, pattern of
/// L) done once and numeric refactorization in O(flops) with no
/// allocation. Built for the Crank-Nicolson step matrices a*S + diag(w),
/// whose pattern never changes while a and w do.
pub struct LdlRefactor<F> {
    n: usize,
    position: Vec<usize>,
    /// permuted upper-triangle pattern (CSC): for column k, entries are
    /// (permuted row i < k, source index into the original CSR values)
    up_ptr: Vec<usize>,
    up_row: Vec<usize>,
    up_src: Vec<usize>,
    /// source index of each diagonal entry, in permuted order
    diag_src: Vec<usize>,
    /// original index of each permuted column (for the diagonal shift)
    orig_of: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
    l_row: Vec<usize>,
    l_val: Vec<F>,
    d: Vec<F>,
    // workspaces
    y: Vec<F>,
    pattern: Vec<usize>,
    flag: Vec<usize>,
    l_fill: Vec<usize>,
}

impl<F: Scalar> LdlRefactor<F> {
    /// Analyze the pattern of `a` (symmetric, with structural diagonal).
    pub fn new(a: &CsrMatrix<F>) -> Self {
        let n = a.n;
        let order = min_degree_order(a);
        let mut position = vec![0usize; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        // permuted upper triangle by columns, rows ascending
        let mut cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut diag_src = vec![usize::MAX; n];
        for r in 0..n {
            for idx in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.col_idx[idx];
                let (pr, pc) = (position[r], position[c]);
                if pr == pc {
                    diag_src[pr] = idx;
                } else if pr < pc {
                    cols[pc].push((pr, idx));
                }
            }
        }
        assert!(diag_src.iter().all(|&s| s != usize::MAX), "structural diagonal required");
        let mut up_ptr = vec![0usize; n + 1];
        let mut up_row = Vec::new();
        let mut up_src = Vec::new();
        for (k, col) in cols.iter_mut().enumerate() {
            col.sort_unstable();
            for &(i, srcidx) in col.iter() {
                up_row.push(i);
                up_src.push(srcidx);
            }
            up_ptr[k + 1] = up_row.len();
        }
        // elimination tree and column counts of L
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in up_ptr[k]..up_ptr[k + 1] {
                let mut i = up_row[p];
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1; // L[k, i]
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }
        let total = l_ptr[n];
        LdlRefactor {
            n,
            position,
            up_ptr,
            up_row,
            up_src,
            diag_src,
            orig_of: order,
            parent,
            l_ptr,
            l_row: vec![0; total],
            l_val: vec![F::zero(); total],
            d: vec![F::zero(); n],
            y: vec![F::zero(); n],
            pattern: vec![0; n],
            flag: vec![usize::MAX; n],
            l_fill: vec![0; n],
        }
    }

    pub fn l_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }

    /// Numeric factorization of scale*A + diag(shift), with A the analyzed
    /// matrix. Fails on a nonpositive pivot.
    pub fn refactor(&mut self, values: &[F], scale: F, shift: &[F]) -> Result<()> {
        let n = self.n;
        self.flag.iter_mut().for_each(|f| *f = usize::MAX);
        self.l_fill.iter_mut().for_each(|c| *c = 0);
        for k in 0..n {
            // scatter column k of the permuted upper triangle into y
            let mut top = n;
            self.flag[k] = k;
            self.y[k] = F::zero();
            for p in self.up_ptr[k]..self.up_ptr[k + 1] {
                let i = self.up_row[p];
                self.y[i] += values[self.up_src[p]] * scale;
                // walk up the elimination tree collecting the row pattern,
                // then move the path onto the stack in topological order
                let mut len = 0usize;
                let mut j = i;
                while self.flag[j] != k {
                    self.pattern[len] = j;
                    len += 1;
                    self.flag[j] = k;
                    j = self.parent[j];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    self.pattern[top] = self.pattern[len];
                }
            }
            let mut dk = values[self.diag_src[k]] * scale + shift[self.orig_of[k]];
            // up-looking solve along the pattern (ascending column order)
            for &j in &self.pattern[top..n] {
                let yj = self.y[j];
                self.y[j] = F::zero();
                let lkj = yj / self.d[j];
                let start = self.l_ptr[j];
                let built = self.l_fill[j];
                for q in start..start + built {
                    self.y[self.l_row[q]] -= self.l_val[q] * yj;
                }
                dk -= lkj * yj;
                self.l_row[start + built] = k;
                self.l_val[start + built] = lkj;
                self.l_fill[j] = built + 1;
            }
            if !(dk > F::zero()) {
                return Err(Error::invalid(format!(
                    "LDL^T refactor pivot {k} is not positive ({dk})"
                )));
            }
            self.d[k] = dk;
        }
        Ok(())
    }

    /// Solve (scale*A + diag(shift)) x = b after `refactor`.
    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.n;
        let mut y = vec![F::zero(); n];
        for i in 0..n {
            y[self.position[i]] = b[i];
        }
        for j in 0..n {
            let yj = y[j];
            if yj != F::zero() {
                for q in self.l_ptr[j]..self.l_ptr[j + 1] {
                    y[self.l_row[q]] -= self.l_val[q] * yj;
                }
            }
        }
        for j in 0..n {
            y[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = y[j];
            for q in self.l_ptr[j]..self.l_ptr[j + 1] {
                acc -= self.l_val[q] * y[self.l_row[q]];
            }
            y[j] = acc;
        }
        let mut x = vec![F::zero(); n];
        for i in 0..n {
            x[i] = y[self.position[i]];
        }
        x
    }

    /// Solve in place into a provided buffer (no allocation).
    pub fn solve_into(&self, b: &[F], work: &mut Vec<F>, out: &mut Vec<F>) {
        let n = self.n;
        work.resize(n, F::zero());
        out.resize(n, F::zero());
        for i in 0..n {
            work[self.position[i]] = b[i];
        }
        for j in 0..n {
            let yj = work[j];
            if yj != F::zero() {
                for q in self.l_ptr[j]..self.l_ptr[j + 1] {
                    work[self.l_row[q]] -= self.l_val[q] * yj;
                }
            }
        }
        for j in 0..n {
            work[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = work[j];
            for q in self.l_ptr[j]..self.l_ptr[j + 1] {
                acc -= self.l_val[q] * work[self.l_row[q]];
            }
            work[j] = acc;
        }
        for i in 0..n {
            out[i] = work[self.position[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_path(n: usize) -> CsrMatrix<f64> {
        // 1-D Dirichlet Laplacian (tridiagonal 2,-1), SPD
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn csr_merges_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.diagonal(), vec![3.0, 0.0]);
    }

    #[test]
    fn cg_matches_direct_on_path() {
        let n = 50;
        let a = laplacian_path(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; n];
        cg_solve(&a, &b, &mut x, 1e-12, 10 * n).unwrap();
        let f = LdlFactor::new(&a).unwrap();
        let xd = f.solve(&b);
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-8, "i={i}: {} vs {}", x[i], xd[i]);
        }
        let r = a.mul_vec_alloc(&xd);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ldlt_tree_has_no_fill() {
        // random-ish tree: star of paths
        let n = 40;
        let mut t = Vec::new();
        let mut deg = vec![0.0f64; n];
        let mut edges = Vec::new();
        for i in 1..n {
            let parent = if i < 4 { 0 } else { i - 3 };
            edges.push((parent, i));
        }
        for &(u, v) in &edges {
            t.push((u, v, -1.0));
            t.push((v, u, -1.0));
            deg[u] += 1.0;
            deg[v] += 1.0;
        }
        for i in 0..n {
            t.push((i, i, deg[i] + 0.1)); // shifted Laplacian, SPD
        }
        let a = CsrMatrix::from_triplets(n, t);
        let f = LdlFactor::new(&a).unwrap();
        assert_eq!(f.l_nnz(), n - 1, "tree elimination must be fill-free");
    }

    #[test]
    fn ldlt_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(LdlFactor::new(&a).is_err());
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let a = laplacian_path(5);
        let b = vec![0.0; 5];
        let mut x = vec![1.0; 5];
        cg_solve(&a, &b, &mut x, 1e-10, 100).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refactor_matches_full_factorization() {
        // gasket-like pattern with changing scale/shift
        let n = 60;
        let mut t = Vec::new();
        let mut deg = vec![0.0f64; n];
        for i in 0..n {
            let j = (i * 7 + 3) % n;
            if i != j {
                t.push((i.min(j), i.max(j), -1.0));
                t.push((i.max(j), i.min(j), -1.0));
                deg[i] += 1.0;
                deg[j] += 1.0;
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
                deg[i] += 1.0;
                deg[i + 1] += 1.0;
            }
        }
        for i in 0..n {
            t.push((i, i, deg[i]));
        }
        let s_mat = CsrMatrix::from_triplets(n, t);
        let mut rf = LdlRefactor::new(&s_mat);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).cos()).collect();
        for (scale, shift_v) in [(0.5, 1.0), (3.0, 0.25), (1e-3, 2.0)] {
            let shift = vec![shift_v; n];
            rf.refactor(&s_mat.values, scale, &shift).unwrap();
            let x = rf.solve(&b);
            let a = s_mat.scale_add_diagonal(scale, &shift);
            let xf = LdlFactor::new(&a).unwrap().solve(&b);
            for i in 0..n {
                assert!(
                    (x[i] - xf[i]).abs() < 1e-10 * (1.0 + xf[i].abs()),
                    "scale {scale}: {} vs {}",
                    x[i],
                    xf[i]
                );
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let n = 20;
        let mut t: Vec<(usize, usize, f32)> = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let b = vec![1.0f32; n];
        let mut x = vec![0.0f32; n];
        cg_solve(&a, &b, &mut x, 1e-5, 500).unwrap();
        let r = a.mul_vec_alloc(&x);
        for i in 0..n {
            assert!((r[i] - 1.0).abs() < 1e-3);
        }
    }
}
