//! The increment-kernel operator on the triangle `I = {(t, t') : t' <= t}`:
//! kernel evaluation, Nyström discretization and eigendecomposition.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{increment_inner_raw, HurstParam};
use crate::linalg::sym_eigen;

/// `Q((t,t'), (s,s')) = E[(B_t - B_{t'})(B_s - B_{s'})]` for pairs in `I`.
pub fn q_kernel(h: HurstParam, tvec: (f64, f64), svec: (f64, f64)) -> Result<f64> {
    for (name, (a, b)) in [("t", tvec), ("s", svec)] {
        if !(0.0 <= b && b <= a && a <= 1.0) {
            return Err(Error::Domain(format!(
                "{name}-pair ({a}, {b}) is not in the triangle t' <= t"
            )));
        }
    }
    Ok(increment_inner_raw(h.two_h(), tvec.1, tvec.0, svec.1, svec.0))
}

/// Quadrature nodes on the strict lower triangle of a uniform `n x n` grid.
///
/// Weights are products of trapezoid weights. The half-cells on the
/// diagonal, where the kernel vanishes, are folded onto the adjacent node
/// below the diagonal so the weights still sum to the triangle area 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub n: usize,
    /// Grid indices `(i, j)` with `i > j`; the node is `(t_i, t_j)`.
    pub index: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
}

impl TriangleMesh {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.index[k];
        let h = self.step();
        (i as f64 * h, j as f64 * h)
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn build_mesh(n: usize) -> Result<TriangleMesh> {
    if n < 2 {
        return Err(Error::Domain(format!("mesh needs n >= 2, got {n}")));
    }
    let h = 1.0 / (n - 1) as f64;
    let a = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    let mut index = Vec::with_capacity(n * (n - 1) / 2);
    let mut weights = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..n {
        for j in 0..i {
            index.push((i, j));
            let mut w = a(i) * a(j);
            if j == i - 1 {
                w += 0.5 * a(i) * a(i);
            }
            if i == 1 && j == 0 {
                w += 0.5 * a(0) * a(0);
            }
            weights.push(w);
        }
    }
    Ok(TriangleMesh { n, index, weights })
}

/// Dense kernel matrix on the mesh nodes.
pub fn kernel_matrix(h: HurstParam, mesh: &TriangleMesh) -> Mat<f64> {
    let step = mesh.step();
    // every node endpoint is a grid point, so all distances are k * step
    let pw: Vec<f64> = (0..mesh.n).map(|k| (k as f64 * step).powf(h.two_h())).collect();
    let d = |x: usize, y: usize| pw[x.abs_diff(y)];
    let m = mesh.len();
    let mut k = Mat::zeros(m, m);
    for r in 0..m {
        let (ti, tj) = mesh.index[r];
        for c in 0..=r {
            let (si, sj) = mesh.index[c];
            let v = 0.5 * (d(ti, sj) + d(tj, si) - d(ti, si) - d(tj, sj));
            k[(r, c)] = v;
            k[(c, r)] = v;
        }
    }
    k
}

/// `Σ w_i Q(node_i, node_i)`, the trace of the discretized operator.
pub fn weighted_kernel_trace(h: HurstParam, mesh: &TriangleMesh) -> f64 {
    (0..mesh.len())
        .map(|k| {
            let (t, s) = mesh.node(k);
            mesh.weights[k] * (t - s).powf(h.two_h())
        })
        .sum()
}

/// `∫_I (t - t')^{2H} = 1 / ((2H+1)(2H+2))`.
pub fn exact_trace(h: HurstParam) -> f64 {
    let e = h.two_h();
    1.0 / ((e + 1.0) * (e + 2.0))
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub h: HurstParam,
    pub mesh: TriangleMesh,
    /// Retained eigenvalues, non-increasing, all above the threshold.
    pub eigenvalues: Vec<f64>,
    /// Column `k` holds `φ_k` at the mesh nodes, orthonormal under the weights.
    pub eigenfunctions: Mat<f64>,
    /// The discretized kernel, kept for direct-form sums.
    pub kernel: Mat<f64>,
    /// Sum of the whole computed spectrum, dropped eigenvalues included.
    pub full_trace: f64,
    /// Requested pairs, and how many fell below the positivity threshold.
    pub requested: usize,
    pub dropped: usize,
}

pub const POSITIVITY_THRESHOLD: f64 = 1e-12;

/// Symmetrized Nyström: eigenpairs of `W^{1/2} K W^{1/2}` mapped back to
/// weighted-orthonormal node functions. Eigenvalues at or below
/// `1e-12 λ_1` are dropped; `m` larger than the node count is clamped.
pub fn nystrom_eigs(h: HurstParam, mesh: &TriangleMesh, m: usize) -> Result<SpectralDecomposition> {
    if m == 0 {
        return Err(Error::Domain("number of eigenpairs must be positive".into()));
    }
    let kernel = kernel_matrix(h, mesh);
    let sw: Vec<f64> = mesh.weights.iter().map(|w| w.sqrt()).collect();
    let nodes = mesh.len();
    let a = Mat::from_fn(nodes, nodes, |r, c| sw[r] * kernel[(r, c)] * sw[c]);
    let eig = sym_eigen(a.as_ref())?;
    let full_trace = eig.values.iter().sum();
    let cut = POSITIVITY_THRESHOLD * eig.values[0];
    let positive = eig.values.iter().take_while(|&&v| v > cut).count();
    let take = m.min(nodes);
    let kept = take.min(positive);
    let mut phi = Mat::from_fn(nodes, kept, |r, c| eig.vectors[(r, c)] / sw[r]);
    for c in 0..kept {
        let col_max = (0..nodes).map(|r| eig.vectors[(r, c)].abs()).fold(0.0, f64::max);
        let first = (0..nodes).find(|&r| eig.vectors[(r, c)].abs() > 1e-8 * col_max);
        if let Some(r) = first {
            if phi[(r, c)] < 0.0 {
                for r in 0..nodes {
                    phi[(r, c)] = -phi[(r, c)];
                }
            }
        }
    }
    Ok(SpectralDecomposition {
        h,
        mesh: mesh.clone(),
        eigenvalues: eig.values[..kept].to_vec(),
        eigenfunctions: phi,
        kernel,
        full_trace,
        requested: m,
        dropped: take - kept,
    })
}

impl SpectralDecomposition {
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `max |<φ_i, φ_j>_w - δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let w = &self.mesh.weights;
        let m = self.m();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..=i {
                let g: f64 = (0..w.len())
                    .map(|r| w[r] * self.eigenfunctions[(r, i)] * self.eigenfunctions[(r, j)])
                    .sum();
                worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        worst
    }

    /// Truncated expansion `Σ_{k<terms} λ_k φ_k(node_a) φ_k(node_b)`.
    pub fn reconstruct(&self, a: usize, b: usize, terms: usize) -> f64 {
        (0..terms.min(self.m()))
            .map(|k| self.eigenvalues[k] * self.eigenfunctions[(a, k)] * self.eigenfunctions[(b, k)])
            .sum()
    }

    /// Weighted Frobenius error of the rank-`terms` reconstruction relative
    /// to the discretized kernel.
    pub fn reconstruction_error(&self, terms: usize) -> f64 {
        let w = &self.mesh.weights;
        let n = w.len();
        let (mut num, mut den) = (0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let k = self.kernel[(a, b)];
                let d = k - self.reconstruct(a, b, terms);
                let ww = w[a] * w[b];
                num += ww * d * d;
                den += ww * k * k;
            }
        }
        (num / den).sqrt()
    }

    pub fn write_eigenvalues_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,lambda")?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{},{:.17e}", k + 1, l)?;
        }
        Ok(())
    }

    /// Eigenfunctions as little-endian f64, one row per eigenfunction.
    pub fn eigenfunction_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * self.m() * self.mesh.len());
        for k in 0..self.m() {
            for r in 0..self.mesh.len() {
                out.extend_from_slice(&self.eigenfunctions[(r, k)].to_le_bytes());
            }
        }
        out
    }
}

/// Reconstructs the kernel entry between mesh nodes `a` and `b`.
pub fn reconstruct_kernel(dec: &SpectralDecomposition, a: usize, b: usize) -> f64 {
    dec.reconstruct(a, b, dec.m())
}
