//! Staggered finite-difference realization of the reduced operator 𝔸_k on a
//! truncated interval [-X, X] with E(±X) = 0.
//!
//! Unknowns: E at interior nodes, (H_x, H_y) at cell midpoints, Ṗ at nodes
//! touching the Drude region, (Ṁ_x, Ṁ_y) at Drude midpoints. With
//! `i ∂_t U = A U` and the energy weight W, the matrix
//! `B = Φ* W^{1/2} A W^{-1/2} Φ` is real symmetric for the diagonal phase Φ
//! below; all spectral work is done on B.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{DrudeMedium, Geometry, Side};
use crate::modes::AnalyticMode;
use crate::quadrature::GaussLegendre;
use crate::zones::{classify_zone, plasmonic_curve, SpectralPoint, ZoneLabel};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const DEFAULT_DENSE_CAP: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub half_width: f64,
    pub cell_count: usize,
    pub geometry: Geometry,
    pub slab_half_width: f64,
}

impl Grid1D {
    pub fn new(half_width: f64, cell_count: usize, geometry: Geometry, slab_half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) || cell_count < 4 {
            return Err(Error::Grid(format!("need X > 0 and N >= 4, got X = {half_width}, N = {cell_count}")));
        }
        let g = Self { half_width, cell_count, geometry, slab_half_width };
        let h = g.h();
        for s in geometry.interfaces(slab_half_width) {
            if s.abs() >= half_width {
                return Err(Error::Grid(format!("interface {s} lies outside (-{half_width}, {half_width})")));
            }
            let r = (s + half_width) / h;
            if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                return Err(Error::Grid(format!("interface {s} is not on a node (h = {h})")));
            }
        }
        Ok(g)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.cell_count as f64
    }

    /// Node `i` for i = 0..=N.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h()
    }

    /// Midpoint of cell `j` for j = 0..N.
    pub fn midpoint(&self, j: usize) -> f64 {
        -self.half_width + (j as f64 + 0.5) * self.h()
    }

    pub fn cell_is_drude(&self, j: usize) -> bool {
        self.geometry.side_at(self.midpoint(j), self.slab_half_width) == Side::Drude
    }

    /// Drude share of the dual cell around node `i`: 0, 1/2 or 1.
    pub fn node_fraction(&self, i: usize) -> f64 {
        let n = self.cell_count;
        let left = i > 0 && self.cell_is_drude(i - 1);
        let right = i < n && self.cell_is_drude(i);
        0.5 * (left as u8 + right as u8) as f64
    }
}

/// Unknown groups in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    E,
    Hx,
    Hy,
    PDot,
    MDotX,
    MDotY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOperator {
    pub k: f64,
    pub grid: Grid1D,
    pub eps0: f64,
    pub mu0: f64,
    pub omega_e: f64,
    pub omega_m: f64,
    /// Drude fraction f_i of interior nodes i = 1..N-1.
    node_frac: Vec<f64>,
    /// Interior node index (1-based) of each Ṗ unknown.
    p_nodes: Vec<usize>,
    /// Cell index of each (Ṁx, Ṁy) unknown pair.
    m_cells: Vec<usize>,
    cell_drude: Vec<bool>,
}

pub fn assemble(m: &DrudeMedium, k: f64, grid: &Grid1D) -> Result<DiscreteOperator> {
    m.validate()?;
    if grid.geometry == Geometry::Slab && (grid.slab_half_width - m.slab_half_width).abs() > 1e-12 * m.slab_half_width {
        return Err(Error::Grid("grid slab half-width differs from the medium's".into()));
    }
    build(m.eps0, m.mu0, m.omega_e, m.omega_m, k, grid, true)
}

/// The same discretization with the Drude region removed.
pub fn assemble_vacuum(eps0: f64, mu0: f64, k: f64, grid: &Grid1D) -> Result<DiscreteOperator> {
    build(eps0, mu0, 1.0, 1.0, k, grid, false)
}

fn build(eps0: f64, mu0: f64, omega_e: f64, omega_m: f64, k: f64, grid: &Grid1D, drude: bool) -> Result<DiscreteOperator> {
    if !k.is_finite() {
        return Err(Error::InvalidParameter(format!("k must be finite, got {k}")));
    }
    let n = grid.cell_count;
    let node_frac: Vec<f64> = (1..n).map(|i| if drude { grid.node_fraction(i) } else { 0.0 }).collect();
    let cell_drude: Vec<bool> = (0..n).map(|j| drude && grid.cell_is_drude(j)).collect();
    let p_nodes = (1..n).filter(|&i| node_frac[i - 1] > 0.0).collect();
    let m_cells = (0..n).filter(|&j| cell_drude[j]).collect();
    Ok(DiscreteOperator { k, grid: *grid, eps0, mu0, omega_e, omega_m, node_frac, p_nodes, m_cells, cell_drude })
}

impl DiscreteOperator {
    fn n(&self) -> usize {
        self.grid.cell_count
    }

    pub fn c(&self) -> f64 {
        1.0 / (self.eps0 * self.mu0).sqrt()
    }

    fn off_hx(&self) -> usize {
        self.n() - 1
    }
    fn off_hy(&self) -> usize {
        2 * self.n() - 1
    }
    fn off_p(&self) -> usize {
        3 * self.n() - 1
    }
    fn off_mx(&self) -> usize {
        self.off_p() + self.p_nodes.len()
    }
    fn off_my(&self) -> usize {
        self.off_mx() + self.m_cells.len()
    }

    pub fn size(&self) -> usize {
        self.off_my() + self.m_cells.len()
    }

    pub fn component_of(&self, idx: usize) -> Component {
        if idx < self.off_hx() {
            Component::E
        } else if idx < self.off_hy() {
            Component::Hx
        } else if idx < self.off_p() {
            Component::Hy
        } else if idx < self.off_mx() {
            Component::PDot
        } else if idx < self.off_my() {
            Component::MDotX
        } else {
            Component::MDotY
        }
    }

    /// Position of the unknown `idx`.
    pub fn position(&self, idx: usize) -> f64 {
        let g = &self.grid;
        match self.component_of(idx) {
            Component::E => g.node(idx + 1),
            Component::Hx => g.midpoint(idx - self.off_hx()),
            Component::Hy => g.midpoint(idx - self.off_hy()),
            Component::PDot => g.node(self.p_nodes[idx - self.off_p()]),
            Component::MDotX => g.midpoint(self.m_cells[idx - self.off_mx()]),
            Component::MDotY => g.midpoint(self.m_cells[idx - self.off_my()]),
        }
    }

    /// Storage index of E at interior node `i` (1..N-1).
    pub fn e_index(&self, i: usize) -> usize {
        i - 1
    }

    /// Diagonal energy weight W.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.grid.h();
        let mut w = Vec::with_capacity(self.size());
        w.extend(std::iter::repeat_n(self.eps0 * h, self.n() - 1));
        w.extend(std::iter::repeat_n(self.mu0 * h, 2 * self.n()));
        for &i in &self.p_nodes {
            w.push(self.node_frac[i - 1] * h / (self.eps0 * self.omega_e.powi(2)));
        }
        w.extend(std::iter::repeat_n(h / (self.mu0 * self.omega_m.powi(2)), 2 * self.m_cells.len()));
        w
    }

    /// Diagonal phase Φ making the scaled matrix real.
    pub fn phases(&self) -> Vec<Complex64> {
        (0..self.size())
            .map(|idx| match self.component_of(idx) {
                Component::E | Component::Hx | Component::MDotY => Complex64::new(1.0, 0.0),
                Component::Hy => -I,
                Component::PDot | Component::MDotX => I,
            })
            .collect()
    }

    /// Upper-triangle entries (row < col) of the real symmetric B.
    pub fn scaled_entries(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let h = self.grid.h();
        let c = self.c();
        let (ch, kc2) = (c / h, 0.5 * self.k * c);
        let mut out = Vec::with_capacity(6 * n + 3 * self.m_cells.len());
        for i in 1..n {
            let e = self.e_index(i);
            // H sits at cells i-1 (left) and i (right)
            out.push((e, self.off_hx() + i - 1, kc2));
            out.push((e, self.off_hx() + i, kc2));
            out.push((e, self.off_hy() + i - 1, -ch));
            out.push((e, self.off_hy() + i, ch));
        }
        for (q, &i) in self.p_nodes.iter().enumerate() {
            out.push((self.e_index(i), self.off_p() + q, self.node_frac[i - 1].sqrt() * self.omega_e));
        }
        for (q, &j) in self.m_cells.iter().enumerate() {
            out.push((self.off_hx() + j, self.off_mx() + q, self.omega_m));
            out.push((self.off_hy() + j, self.off_my() + q, self.omega_m));
        }
        out
    }

    /// Matrix entries of the physical operator A, assembled directly from the
    /// discrete field equations (independent of `scaled_entries`).
    pub fn physical_entries(&self) -> Vec<(usize, usize, Complex64)> {
        let n = self.n();
        let h = self.grid.h();
        let (e0, m0, k) = (self.eps0, self.mu0, self.k);
        let mut g: Vec<(usize, usize, Complex64)> = Vec::new();
        let r = |v: f64| Complex64::new(v, 0.0);
        // ∂_t U = G U, A = i G
        for i in 1..n {
            let e = self.e_index(i);
            g.push((e, self.off_hy() + i, r(1.0 / (h * e0))));
            g.push((e, self.off_hy() + i - 1, r(-1.0 / (h * e0))));
            g.push((e, self.off_hx() + i - 1, -I * k / (2.0 * e0)));
            g.push((e, self.off_hx() + i, -I * k / (2.0 * e0)));
        }
        for j in 0..n {
            for (node, sgn) in [(j, -1.0), (j + 1, 1.0)] {
                if node == 0 || node == n {
                    continue;
                }
                let e = self.e_index(node);
                g.push((self.off_hx() + j, e, -I * k / (2.0 * m0)));
                g.push((self.off_hy() + j, e, r(sgn / (h * m0))));
            }
        }
        for (q, &i) in self.p_nodes.iter().enumerate() {
            let e = self.e_index(i);
            g.push((e, self.off_p() + q, r(-self.node_frac[i - 1] / e0)));
            g.push((self.off_p() + q, e, r(e0 * self.omega_e.powi(2))));
        }
        for (q, &j) in self.m_cells.iter().enumerate() {
            for (hoff, moff) in [(self.off_hx(), self.off_mx()), (self.off_hy(), self.off_my())] {
                g.push((hoff + j, moff + q, r(-1.0 / m0)));
                g.push((moff + q, hoff + j, r(m0 * self.omega_m.powi(2))));
            }
        }
        g.into_iter().map(|(a, b, v)| (a, b, I * v)).collect()
    }

    /// max |S - S^H| / max |S| with S = W^{1/2} A W^{-1/2} built from `physical_entries`.
    pub fn weighted_asymmetry(&self) -> f64 {
        let w = self.weights();
        let mut map = std::collections::HashMap::new();
        for (a, b, v) in self.physical_entries() {
            *map.entry((a, b)).or_insert(Complex64::new(0.0, 0.0)) += v * (w[a] / w[b]).sqrt();
        }
        let scale = map.values().map(|v| v.norm()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for (&(a, b), &v) in &map {
            let t = map.get(&(b, a)).copied().unwrap_or_default();
            worst = worst.max((v - t.conj()).norm());
        }
        worst / scale
    }

    pub fn dense_scaled(&self) -> Mat<f64> {
        let s = self.size();
        let mut b = Mat::<f64>::zeros(s, s);
        for (r, c, v) in self.scaled_entries() {
            b[(r, c)] = v;
            b[(c, r)] = v;
        }
        b
    }

    /// Maps a physical vector u to the scaled coordinates Φ* W^{1/2} u.
    pub fn to_scaled(&self, u: &[Complex64]) -> Vec<Complex64> {
        let w = self.weights();
        let p = self.phases();
        u.iter().zip(w.iter().zip(&p)).map(|(&x, (&wi, &pi))| wi.sqrt() * pi.conj() * x).collect()
    }

    /// Inverse of `to_scaled`.
    pub fn to_physical(&self, v: &[Complex64]) -> Vec<Complex64> {
        let w = self.weights();
        let p = self.phases();
        v.iter().zip(w.iter().zip(&p)).map(|(&x, (&wi, &pi))| pi * x / wi.sqrt()).collect()
    }

    /// ⟨u, v⟩ = Σ W_a u_a conj(v_a).
    pub fn inner(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        self.weights().iter().zip(u.iter().zip(v)).map(|(&w, (&a, &b))| w * a * b.conj()).sum()
    }

    /// Physical vector carrying only E, sampled from `f` at the interior nodes.
    pub fn e_only(&self, f: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut u = vec![Complex64::new(0.0, 0.0); self.size()];
        for i in 1..self.n() {
            u[self.e_index(i)] = f(self.grid.node(i));
        }
        u
    }

    fn alpha(&self, j: usize, sigma: f64) -> f64 {
        if self.cell_drude[j] {
            sigma - self.omega_m.powi(2) / sigma
        } else {
            sigma
        }
    }

    /// Diagonal and off-diagonal of the E-block Schur complement of B - σ.
    fn schur(&self, sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let h = self.grid.h();
        let c = self.c();
        let (a2, b2) = ((0.5 * self.k * c).powi(2), (c / h).powi(2));
        let alpha: Vec<f64> = (0..n).map(|j| self.alpha(j, sigma)).collect();
        let diag = (1..n)
            .map(|i| -sigma + self.node_frac[i - 1] * self.omega_e.powi(2) / sigma + (a2 + b2) * (1.0 / alpha[i - 1] + 1.0 / alpha[i]))
            .collect();
        let off = (1..n - 1).map(|i| (a2 - b2) / alpha[i]).collect();
        (diag, off)
    }

    fn nudge(&self, sigma: f64) -> f64 {
        let mut s = sigma;
        let bad = |s: f64| s == 0.0 || (!self.m_cells.is_empty() && s.abs() == self.omega_m);
        while bad(s) {
            s = if s == 0.0 { f64::MIN_POSITIVE.sqrt() } else { s + s.abs() * f64::EPSILON };
        }
        s
    }

    /// Number of eigenvalues of B strictly below σ (Sylvester inertia).
    pub fn count_below(&self, sigma: f64) -> usize {
        let s = self.nudge(sigma);
        let mut count = 0;
        if s > 0.0 {
            count += self.p_nodes.len() + 2 * self.m_cells.len();
        }
        for j in 0..self.n() {
            if self.alpha(j, s) > 0.0 {
                count += 2;
            }
        }
        let (d, e) = self.schur(s);
        let mut q = d[0];
        for i in 0..d.len() {
            if i > 0 {
                q = d[i] - e[i - 1] * e[i - 1] / q;
            }
            if q == 0.0 {
                q = -f64::EPSILON * (d[i].abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalues in [a, b) located by Sturm bisection.
    pub fn eigenvalues_in(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        if !(a < b) {
            return Err(Error::Range(format!("empty interval [{a}, {b})")));
        }
        let mut out = Vec::new();
        let (na, nb) = (self.count_below(a), self.count_below(b));
        self.slice(a, na, b, nb, &mut out);
        Ok(out)
    }

    fn slice(&self, a: f64, na: usize, b: f64, nb: usize, out: &mut Vec<f64>) {
        if nb <= na {
            return;
        }
        let mid = 0.5 * (a + b);
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) + f64::MIN_POSITIVE || mid <= a || mid >= b {
            out.extend(std::iter::repeat_n(mid, nb - na));
            return;
        }
        let nm = self.count_below(mid);
        self.slice(a, na, mid, nm, out);
        self.slice(mid, nm, b, nb, out);
    }

    /// Unit scaled eigenvector for an isolated eigenvalue λ ∉ {0, ±Ω_m},
    /// by inverse iteration on the E-block Schur complement.
    pub fn sturm_eigenvector(&self, lambda: f64) -> Result<Vec<f64>> {
        let s = self.nudge(lambda);
        let (d, e) = self.schur(s);
        let m = d.len();
        let norm = d.iter().chain(&e).fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut x: Vec<f64> = (0..m).map(|i| 1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0).collect();
        for _ in 0..4 {
            x = solve_tridiagonal(&e, &d, &e, &x, norm * f64::EPSILON);
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(nx.is_finite() && nx > 0.0) {
                return Err(Error::Eigen(format!("inverse iteration failed at lambda = {lambda}")));
            }
            x.iter_mut().for_each(|v| *v /= nx);
        }
        Ok(self.lift_e_block(s, &x))
    }

    /// Rebuilds the full scaled eigenvector from its E-block at eigenvalue λ.
    fn lift_e_block(&self, lambda: f64, eb: &[f64]) -> Vec<f64> {
        let n = self.n();
        let h = self.grid.h();
        let c = self.c();
        let (kc2, ch) = (0.5 * self.k * c, c / h);
        let mut v = vec![0.0; self.size()];
        let e_at = |i: usize| if i == 0 || i == n { 0.0 } else { eb[i - 1] };
        v[..n - 1].copy_from_slice(eb);
        for j in 0..n {
            let a = self.alpha(j, lambda);
            v[self.off_hx() + j] = kc2 * (e_at(j) + e_at(j + 1)) / a;
            v[self.off_hy() + j] = ch * (e_at(j) - e_at(j + 1)) / a;
        }
        for (q, &i) in self.p_nodes.iter().enumerate() {
            v[self.off_p() + q] = self.node_frac[i - 1].sqrt() * self.omega_e * e_at(i) / lambda;
        }
        for (q, &j) in self.m_cells.iter().enumerate() {
            v[self.off_mx() + q] = self.omega_m * v[self.off_hx() + j] / lambda;
            v[self.off_my() + q] = self.omega_m * v[self.off_hy() + j] / lambda;
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        v
    }

    /// Eigenpairs with eigenvalue in [a, b), scaled coordinates.
    pub fn eigenpairs_in(&self, a: f64, b: f64) -> Result<Vec<(f64, Vec<f64>)>> {
        self.eigenvalues_in(a, b)?.into_iter().map(|l| Ok((l, self.sturm_eigenvector(l)?))).collect()
    }

    /// ‖B v − λ v‖ for a scaled vector.
    pub fn scaled_residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let mut r: Vec<f64> = v.iter().map(|x| -lambda * x).collect();
        for (a, b, val) in self.scaled_entries() {
            r[a] += val * v[b];
            r[b] += val * v[a];
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius-free bound on ‖B‖ from row sums.
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.size()];
        for (a, b, v) in self.scaled_entries() {
            rows[a] += v.abs();
            rows[b] += v.abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// Tridiagonal solve with partial pivoting; zero pivots are replaced by `tiny`.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], tiny: f64) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut b = rhs.to_vec();
    if n == 1 {
        return vec![b[0] / if d[0] == 0.0 { tiny } else { d[0] }];
    }
    let dl = sub.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let tiny = tiny.max(f64::MIN_POSITIVE);
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let f = dl[i] / d[i];
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let t = d[i + 1];
            d[i + 1] = du[i] - f * t;
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            du[i] = t;
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    x
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors of B (scaled coordinates).
    pub vectors: Mat<f64>,
}

pub fn eigendecompose(op: &DiscreteOperator, cap: usize) -> Result<EigenDecomposition> {
    let size = op.size();
    if size > cap {
        return Err(Error::Capacity { size, cap });
    }
    let b = op.dense_scaled();
    let evd = b
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("dense eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues = (0..size).map(|i| s[i]).collect();
    Ok(EigenDecomposition { eigenvalues, vectors: evd.U().to_owned() })
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        let c = self.vectors.col(j);
        (0..self.len()).map(|i| c[i]).collect()
    }

    /// Coefficients ⟨u, v_j⟩ for a vector already in scaled coordinates.
    pub fn coefficients(&self, scaled: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let c = self.vectors.col(j);
                (0..n).map(|i| scaled[i] * c[i]).sum()
            })
            .collect()
    }

    /// Σ_j g(λ_j) coef_j v_j in scaled coordinates.
    pub fn synthesize(&self, coef: &[Complex64], g: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let n = self.len();
        debug_assert_eq!(coef.len(), n);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (j, (&cj, &lj)) in coef.iter().zip(&self.eigenvalues).enumerate() {
            let a = cj * g(lj);
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let c = self.vectors.col(j);
            for i in 0..n {
                out[i] += a * c[i];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// φ(ω_s, t, ω) = ∫₀ᵗ e^{-iω(t-s)} e^{-iω_s s} ds.
pub fn phi_duhamel(omega_s: f64, t: f64, omega: f64) -> Complex64 {
    let d = omega - omega_s;
    let x = d * t;
    let carrier = Complex64::from_polar(1.0, -omega_s * t);
    if x.abs() < 1e-4 {
        let series = Complex64::new(1.0 - x * x / 6.0, -x / 2.0 + x.powi(3) / 24.0);
        return t * carrier * series;
    }
    I * (Complex64::from_polar(1.0, -omega * t) - carrier) / d
}

/// U(t) = Σ_j φ(ω_s, t, λ_j)⟨G, v_j⟩ v_j for each t, in physical coordinates.
pub fn forced_evolution(
    op: &DiscreteOperator,
    evd: &EigenDecomposition,
    source: &[Complex64],
    omega_s: f64,
    times: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    if source.len() != op.size() || evd.len() != op.size() {
        return Err(Error::InvalidParameter("source, operator and decomposition sizes differ".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidParameter(format!("times must be non-negative, got {t}")));
    }
    let coef = evd.coefficients(&op.to_scaled(source));
    Ok(times.iter().map(|&t| op.to_physical(&evd.synthesize(&coef, |l| phi_duhamel(omega_s, t, l)))).collect())
}

/// e^{-iAt} U₀ for each t, in physical coordinates.
pub fn free_evolution(
    op: &DiscreteOperator,
    evd: &EigenDecomposition,
    initial: &[Complex64],
    times: &[f64],
) -> Vec<Vec<Complex64>> {
    let coef = evd.coefficients(&op.to_scaled(initial));
    times.iter().map(|&t| op.to_physical(&evd.synthesize(&coef, |l| Complex64::from_polar(1.0, -l * t)))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorComparison {
    pub interval: (f64, f64),
    /// Zone of the interval; EE when it only carries the plasmonic point,
    /// EvanescentBoth when it carries no continuum spectrum at all.
    pub zone: ZoneLabel,
    /// Σ over discrete eigenvalues in [a, b] of |⟨U, v_j⟩|².
    pub discrete: f64,
    /// Σ_j ∫ |⟨U, W_{k,ω,j}⟩|² dω plus the plasmonic point term.
    pub continuum: f64,
    pub eigenvalue_count: usize,
    /// |discrete − calibration·continuum| / |discrete|.
    pub relative_error: f64,
}

/// Projector E([a, b]) of the discrete bilayer operator against the continuum
/// quadrature built from the normalized generalized eigenfunctions.
pub fn spectral_projector_compare(
    op: &DiscreteOperator,
    m: &DrudeMedium,
    interval: (f64, f64),
    trial: &[Complex64],
    calibration: f64,
) -> Result<ProjectorComparison> {
    let (a, b) = interval;
    if op.grid.geometry != Geometry::Bilayer {
        return Err(Error::Grid("projector comparison uses the bilayer geometry".into()));
    }
    if !(0.0 < a && a < b) {
        return Err(Error::Domain(format!("interval [{a}, {b}] must lie in omega > 0")));
    }
    let k = op.k;
    let gl = GaussLegendre::new(64).on(a, b);
    let zones: Vec<ZoneLabel> = std::iter::once(a)
        .chain(gl.iter().map(|p| p.0))
        .chain(std::iter::once(b))
        .map(|w| classify_zone(m, SpectralPoint::new(k, w)))
        .collect();
    let plasmon = if k > m.kappa_c() && !m.is_critical() { plasmonic_curve(m, k).ok() } else { None };
    let has_point = plasmon.is_some_and(|w| a < w && w < b);
    let surface: Vec<ZoneLabel> = zones.iter().copied().filter(|z| *z != ZoneLabel::EE).collect();
    let zone = if surface.iter().all(|z| *z == ZoneLabel::EvanescentBoth) {
        if has_point {
            ZoneLabel::EE
        } else {
            ZoneLabel::EvanescentBoth
        }
    } else {
        let z0 = surface.first().copied().unwrap_or(ZoneLabel::Boundary);
        if !z0.is_surface() || surface.iter().any(|z| *z != z0) {
            return Err(Error::Domain(format!("interval [{a}, {b}] touches a cut or spans several zones at k = {k}")));
        }
        z0
    };

    let e_nodes: Vec<(f64, Complex64)> = (1..op.grid.cell_count).map(|i| (op.grid.node(i), trial[op.e_index(i)])).collect();
    if trial[op.off_hx()..].iter().any(|v| v.norm() != 0.0) {
        return Err(Error::InvalidParameter("trial vectors must carry E only".into()));
    }
    let h = op.grid.h();
    let overlap = |mode: &AnalyticMode| -> Complex64 {
        e_nodes.iter().map(|&(x, u)| op.eps0 * h * u * mode.eval(x).0.conj()).sum()
    };
    let mut continuum = 0.0;
    if zone.is_surface() {
        for &(w, wt) in &gl {
            let p = SpectralPoint::new(k, w);
            for &j in zone.branch_set() {
                let mode = AnalyticMode::surface(m, p, j)?;
                continuum += wt * overlap(&mode).norm_sqr();
            }
        }
    }
    if has_point {
        let mode = AnalyticMode::plasmonic(m, k, 1.0)?;
        continuum += overlap(&mode).norm_sqr();
    }

    let scaled = op.to_scaled(trial);
    let pairs = op.eigenpairs_in(a, b)?;
    let discrete: f64 = pairs
        .iter()
        .map(|(_, v)| scaled.iter().zip(v).map(|(s, x)| s * x).sum::<Complex64>().norm_sqr())
        .sum();
    Ok(ProjectorComparison {
        interval,
        zone,
        discrete,
        continuum,
        eigenvalue_count: pairs.len(),
        relative_error: (discrete - calibration * continuum).abs() / discrete.abs().max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bilayer_op(k: f64, n: usize, x: f64) -> (DrudeMedium, DiscreteOperator) {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
        let g = Grid1D::new(x, n, Geometry::Bilayer, 0.0).unwrap();
        let op = assemble(&m, k, &g).unwrap();
        (m, op)
    }

    #[test]
    fn grid_rejects_off_node_interfaces() {
        assert!(Grid1D::new(1.0, 7, Geometry::Bilayer, 0.0).is_err());
        assert!(Grid1D::new(3.0, 10, Geometry::Slab, 1.0).is_err());
        assert!(Grid1D::new(3.0, 30, Geometry::Slab, 1.0).is_ok());
        assert!(Grid1D::new(1.0, 8, Geometry::Slab, 1.0).is_err());
    }

    #[test]
    fn weighted_matrix_is_hermitian_and_matches_scaled_form() {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap().with_slab_half_width(1.0).unwrap();
        let g = Grid1D::new(3.0, 30, Geometry::Slab, 1.0).unwrap();
        let op = assemble(&m, 0.7, &g).unwrap();
        assert!(op.weighted_asymmetry() <= 1e-15);
        // Φ* W^{1/2} A W^{-1/2} Φ equals B entrywise
        let (w, p) = (op.weights(), op.phases());
        let b = op.dense_scaled();
        let mut seen = vec![vec![Complex64::new(0.0, 0.0); op.size()]; op.size()];
        for (r, c, v) in op.physical_entries() {
            seen[r][c] += p[r].conj() * (w[r] / w[c]).sqrt() * v * p[c];
        }
        for r in 0..op.size() {
            for c in 0..op.size() {
                assert!((seen[r][c] - b[(r, c)]).norm() < 1e-12, "({r}, {c})");
            }
        }
    }

    #[test]
    fn sturm_count_agrees_with_dense() {
        let (_, op) = bilayer_op(1.3, 40, 2.0);
        let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
        for sigma in [-3.7, -1.1, -0.3, 0.05, 0.4, 1.0, 1.5, 2.2, 9.0] {
            let dense = evd.eigenvalues.iter().filter(|&&l| l < sigma).count();
            assert_eq!(op.count_below(sigma), dense, "sigma = {sigma}");
        }
        let bis = op.eigenvalues_in(0.3, 1.9).unwrap();
        let dense: Vec<f64> = evd.eigenvalues.iter().copied().filter(|&l| (0.3..1.9).contains(&l)).collect();
        assert_eq!(bis.len(), dense.len());
        for (a, b) in bis.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_eigenvectors_are_eigenvectors() {
        let (_, op) = bilayer_op(1.3, 200, 6.0);
        let norm = op.norm_bound();
        for (l, v) in op.eigenpairs_in(0.3, 0.9).unwrap() {
            assert!(op.scaled_residual(l, &v) <= 1e-10 * norm, "lambda = {l}");
        }
    }

    #[test]
    fn decomposition_invariants() {
        let (_, op) = bilayer_op(0.8, 30, 2.0);
        let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
        let trace_b: f64 = (0..op.size()).map(|i| op.dense_scaled()[(i, i)]).sum();
        assert!((evd.trace() - trace_b).abs() <= 1e-8 * op.norm_bound());
        let n = evd.len();
        for j in 0..n {
            let lj = evd.eigenvalues[j];
            assert!(op.scaled_residual(lj, &evd.vector(j)) <= 1e-10 * op.norm_bound());
            // spectrum symmetric about 0
            assert!((lj + evd.eigenvalues[n - 1 - j]).abs() <= 1e-10 * op.norm_bound());
        }
        let v = &evd.vectors;
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..n).map(|i| v[(i, a)] * v[(i, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() <= 1e-10);
            }
        }
        assert!(matches!(eigendecompose(&op, 10), Err(Error::Capacity { .. })));
    }

    #[test]
    fn vacuum_box_modes() {
        let g = Grid1D::new(10.0, 400, Geometry::Bilayer, 0.0).unwrap();
        let op = assemble_vacuum(1.0, 1.0, 1.0, &g).unwrap();
        let found = op.eigenvalues_in(1e-6, 2.0).unwrap();
        for (mi, l) in found.iter().take(10).enumerate() {
            let want = (1.0 + ((mi + 1) as f64 * PI / 20.0).powi(2)).sqrt();
            assert!((l - want).abs() / want < 1e-3, "m = {}: {l} vs {want}", mi + 1);
        }
    }

    #[test]
    fn kernel_grows_with_n() {
        let count = |n: usize| {
            let (_, op) = bilayer_op(1.0, n, 4.0);
            op.count_below(1e-8) - op.count_below(-1e-8)
        };
        let (a, b) = (count(40), count(80));
        assert!(b > a && a > 0);
    }

    #[test]
    fn plasmonic_eigenvalue_is_second_order() {
        let m = DrudeMedium::normalized(1.0, 2.0).unwrap();
        let k = 2.0;
        let we = plasmonic_curve(&m, k).unwrap();
        let err = |n: usize| {
            let g = Grid1D::new(8.0, n, Geometry::Bilayer, 0.0).unwrap();
            let op = assemble(&m, k, &g).unwrap();
            let ls = op.eigenvalues_in(we - 0.05, we + 0.05).unwrap();
            assert_eq!(ls.len(), 1);
            (ls[0] - we).abs()
        };
        let r = err(800) / err(1600);
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    #[test]
    fn phi_examples() {
        let (ws, t) = (0.7, 3.0);
        assert!((phi_duhamel(ws, t, ws) - t * Complex64::from_polar(1.0, -ws * t)).norm() < 1e-15);
        assert_eq!(phi_duhamel(ws, 0.0, 1.3), Complex64::new(0.0, 0.0));
        for w in [0.7 + 1e-9, 0.7 + 3e-5, 0.71, 1.5, -2.0] {
            let p = phi_duhamel(ws, t, w).norm();
            assert!(p <= t.min(2.0 / (w - ws).abs()) * (1.0 + 1e-12));
        }
        // continuity across the series switch
        let d = 1e-4 / t;
        let (a, b) = (phi_duhamel(ws, t, ws + d * 0.999_999), phi_duhamel(ws, t, ws + d * 1.000_001));
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn eigenvector_forcing_grows_linearly() {
        let (_, op) = bilayer_op(1.3, 30, 2.0);
        let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
        let j = evd.len() - 3;
        let v: Vec<Complex64> = evd.vector(j).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        let g = op.to_physical(&v);
        let times = [0.0, 1.0, 5.0, 20.0];
        let us = forced_evolution(&op, &evd, &g, evd.eigenvalues[j], &times).unwrap();
        for (t, u) in times.iter().zip(&us) {
            assert!((op.inner(u, u).re.sqrt() - t).abs() < 1e-9 * t.max(1.0));
        }
        let other = forced_evolution(&op, &evd, &g, 0.123, &times).unwrap();
        for (t, u) in times.iter().zip(&other) {
            assert!(op.inner(u, u).re.sqrt() <= t + 1e-12);
        }
        let zero = vec![Complex64::new(0.0, 0.0); op.size()];
        assert!(forced_evolution(&op, &evd, &zero, 0.5, &times).unwrap().iter().flatten().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn free_evolution_is_unitary() {
        let (_, op) = bilayer_op(1.3, 30, 2.0);
        let evd = eigendecompose(&op, DEFAULT_DENSE_CAP).unwrap();
        let u0 = op.e_only(|x| Complex64::new((-x * x).exp(), 0.0));
        let n0 = op.inner(&u0, &u0).re;
        for u in free_evolution(&op, &evd, &u0, &[0.5, 7.0, 40.0]) {
            assert!((op.inner(&u, &u).re - n0).abs() <= 1e-10 * n0);
        }
    }

    #[test]
    fn empty_projector() {
        let (m, op) = bilayer_op(3.0, 600, 6.0);
        let u = op.e_only(|x| Complex64::new((-(x * x)).exp(), 0.0));
        // evanescent on both sides, below the plasmonic eigenvalue
        let c = spectral_projector_compare(&op, &m, (0.6, 1.2), &u, 1.0).unwrap();
        assert_eq!(c.zone, ZoneLabel::EvanescentBoth);
        assert_eq!(c.eigenvalue_count, 0);
        assert!(c.discrete <= 1e-8 && c.continuum <= 1e-8);
    }

    use std::f64::consts::PI;
}
