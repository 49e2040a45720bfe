//! Symmetric sparse matrices in CSR form and a Jacobi-preconditioned CG.

/// Fixed sparsity pattern; values are refilled in place between assemblies.
#[derive(Clone, Debug)]
pub struct Csr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Csr { row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.slot(i, i).map_or(0.0, |k| self.vals[k])).collect()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }
}

pub struct CgOutcome {
    pub iterations: usize,
    /// false when a direction of non-positive curvature was met
    pub positive: bool,
}

/// Solves `(A + shift * diag(A)) x = b` from `x = 0` to relative residual `tol`.
pub fn pcg(a: &Csr, b: &[f64], shift: f64, tol: f64, max_iter: usize, x: &mut [f64]) -> CgOutcome {
    let n = a.n();
    let d: Vec<f64> = a.diag().iter().map(|&v| v * (1.0 + shift)).collect();
    let inv: Vec<f64> = d.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
    let shifted = |p: &[f64], out: &mut [f64]| {
        a.mul(p, out);
        if shift != 0.0 {
            for i in 0..n {
                out[i] += shift * (d[i] / (1.0 + shift)) * p[i];
            }
        }
    };
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return CgOutcome { iterations: 0, positive: true };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        shifted(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return CgOutcome { iterations: it, positive: false };
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return CgOutcome { iterations: it + 1, positive: true };
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { iterations: max_iter, positive: true }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
