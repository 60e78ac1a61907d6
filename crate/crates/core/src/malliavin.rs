//! Malliavin derivative of F: the norm `‖DF‖²` as a direct double sum
//! against the increment kernel and as a spectral sum, the projections
//! `V_i`, `G_β`, and the Malliavin matrix of `(V_1, ..., V_n)`.
//!
//! Everything is a sum over the shared [`TriangleMesh`]; the path is read at
//! the mesh grid points (linear interpolation if it lives on another grid).

use std::io::Write;

use faer::Mat;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, PathEnsemble};
use crate::linalg::{mul, sym_eigenvalues};
use crate::rng::{aux_stream, par_map_indexed};
use crate::sobolev::SobolevParams;
use crate::spectral::{kernel_matrix, SpectralDecomposition, TriangleMesh};

/// Path values at the mesh grid points `i / (n - 1)`.
pub fn mesh_values(path: &FbmPath, mesh: &TriangleMesh) -> Vec<f64> {
    if path.grid.len() == mesh.n && path.grid.span() == 1.0 {
        path.values.clone()
    } else {
        (0..mesh.n).map(|i| path.eval(i as f64 * mesh.step())).collect()
    }
}

#[inline]
fn signed_pow(d: f64, e: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if e == 1.0 {
        d
    } else if e == 3.0 {
        d * d * d
    } else {
        d.signum() * d.abs().powf(e)
    }
}

#[inline]
fn abs_pow(d: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 2.0 {
        d * d
    } else {
        d.abs().powf(e)
    }
}

/// Per-node integrand values for one path.
struct NodeTerms {
    /// `|ΔB|^{2p-1} sign(ΔB) / Δt^q`
    g: Vec<f64>,
    /// `|ΔB|^{2p-2} / Δt^q`
    k: Vec<f64>,
}

fn lag_powers(mesh: &TriangleMesh, q: f64) -> Vec<f64> {
    let h = mesh.step();
    (0..mesh.n)
        .map(|d| {
            if q == 0.0 || d == 0 {
                1.0
            } else {
                (d as f64 * h).powf(-q)
            }
        })
        .collect()
}

fn node_terms(values: &[f64], mesh: &TriangleMesh, params: &SobolevParams, lag: &[f64]) -> NodeTerms {
    let e1 = 2.0 * params.p - 1.0;
    let e2 = 2.0 * params.p - 2.0;
    let mut g = Vec::with_capacity(mesh.len());
    let mut k = Vec::with_capacity(mesh.len());
    for &(i, j) in &mesh.index {
        let d = values[i] - values[j];
        let w = lag[i - j];
        g.push(signed_pow(d, e1) * w);
        k.push(abs_pow(d, e2) * w);
    }
    NodeTerms { g, k }
}

/// `4p |B_t - B_{t'}|^{2p-1} sign(B_t - B_{t'}) / (t - t')^q`, the density of
/// `D_r F` against `1_{[t', t]}(r)`.
pub fn df_integrand(path: &FbmPath, params: &SobolevParams, tvec: (f64, f64)) -> Result<f64> {
    let (t, s) = tvec;
    if !(0.0 <= s && s < t && t <= path.grid.span()) {
        return Err(Error::Domain(format!("({t}, {s}) is not strictly inside the triangle")));
    }
    let d = path.eval(t) - path.eval(s);
    Ok(4.0 * params.p * signed_pow(d, 2.0 * params.p - 1.0) * (t - s).powf(-params.q))
}

fn quad_form(kernel: &Mat<f64>, u: &[f64]) -> f64 {
    let n = u.len();
    let mut total = 0.0;
    for c in 0..n {
        let col = kernel.col(c);
        let mut acc = 0.0;
        for r in 0..n {
            acc += col[r] * u[r];
        }
        total += acc * u[c];
    }
    total
}

fn clamp_tiny(x: f64, scale: f64) -> f64 {
    if x < 0.0 && x > -1e-12 * scale {
        0.0
    } else {
        x
    }
}

/// `16 p² Σ_ij w_i w_j Q_ij g_i g_j` with a precomputed kernel matrix.
pub fn df_norm_direct_with(path: &FbmPath, params: &SobolevParams, mesh: &TriangleMesh, kernel: &Mat<f64>) -> f64 {
    let values = mesh_values(path, mesh);
    let lag = lag_powers(mesh, params.q);
    let terms = node_terms(&values, mesh, params, &lag);
    let u: Vec<f64> = terms.g.iter().zip(&mesh.weights).map(|(g, w)| g * w).collect();
    let scale: f64 = u.iter().map(|x| x * x).sum::<f64>();
    16.0 * params.p * params.p * clamp_tiny(quad_form(kernel, &u), scale)
}

pub fn df_norm_direct(path: &FbmPath, params: &SobolevParams, mesh: &TriangleMesh) -> f64 {
    df_norm_direct_with(path, params, mesh, &kernel_matrix(params.h, mesh))
}

fn check_components(dec: &SpectralDecomposition, n: usize) -> Result<()> {
    if n == 0 || n > dec.m() {
        return Err(Error::Domain(format!(
            "requested {n} components, decomposition has {}",
            dec.m()
        )));
    }
    Ok(())
}

fn projections(dec: &SpectralDecomposition, u: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let col = dec.eigenfunctions.col(k);
            (0..u.len()).map(|r| col[r] * u[r]).sum()
        })
        .collect()
}

/// `V_i = Σ_nodes w φ_i g` for `i < n`.
pub fn compute_v(path: &FbmPath, dec: &SpectralDecomposition, params: &SobolevParams, n: usize) -> Result<Vec<f64>> {
    check_components(dec, n)?;
    let values = mesh_values(path, &dec.mesh);
    let terms = node_terms(&values, &dec.mesh, params, &lag_powers(&dec.mesh, params.q));
    let u: Vec<f64> = terms.g.iter().zip(&dec.mesh.weights).map(|(g, w)| g * w).collect();
    Ok(projections(dec, &u, n))
}

/// `16 p² Σ_{i<=m} λ_i V_i²` over every retained eigenpair.
pub fn df_norm_spectral(path: &FbmPath, dec: &SpectralDecomposition, params: &SobolevParams) -> f64 {
    df_norm_spectral_terms(path, dec, params, dec.m())
}

/// The spectral sum truncated to the first `m` eigenpairs.
pub fn df_norm_spectral_terms(path: &FbmPath, dec: &SpectralDecomposition, params: &SobolevParams, m: usize) -> f64 {
    let m = m.min(dec.m());
    if m == 0 {
        return 0.0;
    }
    let v = compute_v(path, dec, params, m).expect("m checked against decomposition");
    16.0 * params.p * params.p * v.iter().zip(&dec.eigenvalues).map(|(v, l)| l * v * v).sum::<f64>()
}

fn psi(dec: &SpectralDecomposition, beta: &[f64]) -> Vec<f64> {
    (0..dec.mesh.len())
        .map(|r| {
            beta.iter()
                .enumerate()
                .map(|(k, b)| b * dec.eigenfunctions[(r, k)])
                .sum()
        })
        .collect()
}

fn check_unit(beta: &[f64], dec: &SpectralDecomposition) -> Result<()> {
    check_components(dec, beta.len())?;
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("β must be a unit vector, has norm {norm}")));
    }
    Ok(())
}

/// `G_β = Σ_nodes w Ψ_β² |ΔB|^{2p-2} / Δt^q` with `Ψ_β = Σ β_i φ_i`.
pub fn g_beta(path: &FbmPath, dec: &SpectralDecomposition, beta: &[f64], params: &SobolevParams) -> Result<f64> {
    check_unit(beta, dec)?;
    let values = mesh_values(path, &dec.mesh);
    let terms = node_terms(&values, &dec.mesh, params, &lag_powers(&dec.mesh, params.q));
    let p = psi(dec, beta);
    Ok((0..p.len())
        .map(|r| dec.mesh.weights[r] * p[r] * p[r] * terms.k[r])
        .sum())
}

/// The components `q_i = Σ_nodes w φ_i Ψ_β |ΔB|^{2p-2} / Δt^q` and the
/// difference `G_β - Σ β_i q_i`, reported rather than assumed to vanish.
pub fn g_beta_components(
    path: &FbmPath,
    dec: &SpectralDecomposition,
    beta: &[f64],
    params: &SobolevParams,
) -> Result<(Vec<f64>, f64)> {
    let g = g_beta(path, dec, beta, params)?;
    let values = mesh_values(path, &dec.mesh);
    let terms = node_terms(&values, &dec.mesh, params, &lag_powers(&dec.mesh, params.q));
    let p = psi(dec, beta);
    let u: Vec<f64> = (0..p.len()).map(|r| dec.mesh.weights[r] * p[r] * terms.k[r]).collect();
    let q = projections(dec, &u, beta.len());
    let s: f64 = beta.iter().zip(&q).map(|(b, q)| b * q).sum();
    Ok((q, g - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinMatrix {
    /// Row-major `n x n`.
    pub m: Vec<f64>,
    pub n: usize,
    pub gamma1: f64,
}

impl MalliavinMatrix {
    pub fn quadratic(&self, beta: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| beta[i] * (0..n).map(|j| self.m[i * n + j] * beta[j]).sum::<f64>())
            .sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i * self.n + i]).sum()
    }
}

fn smallest_eigenvalue(m: &[f64], n: usize) -> Result<f64> {
    let mat = Mat::from_fn(n, n, |i, j| m[i * n + j]);
    Ok(*sym_eigenvalues(mat.as_ref())?.last().unwrap())
}

/// `M_ij = (2p-1)² Σ_ab w_a w_b Q_ab φ_i(a) k(a) φ_j(b) k(b)` and its
/// smallest eigenvalue.
pub fn malliavin_matrix(
    path: &FbmPath,
    dec: &SpectralDecomposition,
    params: &SobolevParams,
    n: usize,
) -> Result<MalliavinMatrix> {
    check_components(dec, n)?;
    let mut batch = MalliavinBatch::new(dec, *params, n)?;
    let r = batch.run(std::slice::from_ref(path))?;
    Ok(r.into_iter().next().unwrap().matrix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinReport {
    pub df_norm_sq_direct: f64,
    pub df_norm_sq_spectral: f64,
    /// `V_1..V_n`.
    pub v: Vec<f64>,
    pub params: SobolevParams,
    /// Eigenpairs used by the spectral sum.
    pub spectral_m: usize,
    pub matrix: MalliavinMatrix,
}

/// Evaluates every per-path Malliavin quantity for blocks of paths with
/// one matrix product per block.
pub struct MalliavinBatch<'a> {
    dec: &'a SpectralDecomposition,
    params: SobolevParams,
    n: usize,
    lag: Vec<f64>,
}

/// Paths per block. Fixed so results never depend on how work is split.
pub const BLOCK: usize = 64;

impl<'a> MalliavinBatch<'a> {
    pub fn new(dec: &'a SpectralDecomposition, params: SobolevParams, n: usize) -> Result<Self> {
        check_components(dec, n)?;
        let lag = lag_powers(&dec.mesh, params.q);
        Ok(MalliavinBatch { dec, params, n, lag })
    }

    /// Reports for a block of paths, in order.
    pub fn run(&mut self, paths: &[FbmPath]) -> Result<Vec<MalliavinReport>> {
        let dec = self.dec;
        let mesh = &dec.mesh;
        let nodes = mesh.len();
        let n = self.n;
        let cols = n + 1;
        let w = &mesh.weights;
        // columns per path: w∘g, then w∘φ_i∘k for i < n
        let mut z = Mat::<f64>::zeros(nodes, cols * paths.len());
        for (pi, path) in paths.iter().enumerate() {
            let values = mesh_values(path, mesh);
            let t = node_terms(&values, mesh, &self.params, &self.lag);
            let base = pi * cols;
            for r in 0..nodes {
                z[(r, base)] = w[r] * t.g[r];
                for i in 0..n {
                    z[(r, base + 1 + i)] = w[r] * dec.eigenfunctions[(r, i)] * t.k[r];
                }
            }
        }
        let kz = mul(dec.kernel.as_ref(), z.as_ref());
        let p = self.params.p;
        let c_df = 16.0 * p * p;
        let c_m = (2.0 * p - 1.0) * (2.0 * p - 1.0);
        let m_all = dec.m();
        let mut out = Vec::with_capacity(paths.len());
        for pi in 0..paths.len() {
            let base = pi * cols;
            let dot = |a: usize, b: usize| -> f64 { (0..nodes).map(|r| z[(r, a)] * kz[(r, b)]).sum() };
            let u0: f64 = (0..nodes).map(|r| z[(r, base)] * z[(r, base)]).sum();
            let direct = c_df * clamp_tiny(dot(base, base), u0);
            let u: Vec<f64> = (0..nodes).map(|r| z[(r, base)]).collect();
            let v_all = projections(dec, &u, m_all);
            let spectral = c_df * v_all.iter().zip(&dec.eigenvalues).map(|(v, l)| l * v * v).sum::<f64>();
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let x = c_m * 0.5 * (dot(base + 1 + i, base + 1 + j) + dot(base + 1 + j, base + 1 + i));
                    m[i * n + j] = x;
                    m[j * n + i] = x;
                }
            }
            let gamma1 = smallest_eigenvalue(&m, n)?;
            out.push(MalliavinReport {
                df_norm_sq_direct: direct,
                df_norm_sq_spectral: spectral,
                v: v_all[..n].to_vec(),
                params: self.params,
                spectral_m: m_all,
                matrix: MalliavinMatrix { m, n, gamma1 },
            });
        }
        Ok(out)
    }
}

/// Reports for every path of an ensemble, blocks evaluated in parallel.
pub fn malliavin_reports(
    ensemble: &PathEnsemble,
    dec: &SpectralDecomposition,
    params: &SobolevParams,
    n: usize,
) -> Result<Vec<MalliavinReport>> {
    check_components(dec, n)?;
    let blocks = ensemble.len().div_ceil(BLOCK);
    let results = par_map_indexed(blocks, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(ensemble.len());
        MalliavinBatch::new(dec, *params, n)?.run(&ensemble.paths[lo..hi])
    });
    let mut out = Vec::with_capacity(ensemble.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Uniformly distributed unit vector in `R^n` from auxiliary stream `index`.
pub fn random_unit_vector(seed: u64, index: u64, n: usize) -> Vec<f64> {
    let mut rng = aux_stream(seed, index);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn write_reports_csv<W: Write>(mut out: W, comments: &[String], reports: &[MalliavinReport]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let n = reports.first().map_or(0, |r| r.v.len());
    write!(out, "path_index,df_direct,df_spectral")?;
    for i in 1..=n {
        write!(out, ",V_{i}")?;
    }
    writeln!(out, ",gamma1")?;
    for (k, r) in reports.iter().enumerate() {
        write!(out, "{k},{:.17e},{:.17e}", r.df_norm_sq_direct, r.df_norm_sq_spectral)?;
        for v in &r.v {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out, ",{:.17e}", r.matrix.gamma1)?;
    }
    Ok(())
}
