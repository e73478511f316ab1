//! Uniform tensor grid on the unit box G = (0,1)^d with zero Dirichlet
//! trace, discrete gradient/divergence in exact adjoint duality, difference
//! quotients, subdomain cutoff weights and the discrete norms used by the
//! estimators.
//!
//! Interior nodes sit at x_i = (i+1) hx, i = 0..n-1 per axis, hx = 1/(n+1).
//! Boundary nodes exist implicitly with value 0. Forward-difference cells
//! are indexed 0..n per axis; cell c spans [c hx, (c+1) hx].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    /// Interior nodes per axis.
    pub n: usize,
    /// Mesh width 1/(n+1).
    pub hx: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d < 1 || d > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension {} unsupported", d)));
        }
        if n < 2 {
            return Err(Error::InvalidGrid("need at least 2 interior nodes per axis".into()));
        }
        Ok(Grid { d, n, hx: 1.0 / (n + 1) as f64 })
    }

    pub fn num_nodes(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn num_cells(&self) -> usize {
        (self.n + 1).pow(self.d as u32)
    }

    /// Cell measure hx^d.
    pub fn cell_volume(&self) -> f64 {
        self.hx.powi(self.d as i32)
    }

    #[inline]
    pub(crate) fn decode(&self, mut flat: usize, extent: usize, out: &mut [usize; MAX_DIM]) {
        for k in 0..self.d {
            out[k] = flat % extent;
            flat /= extent;
        }
    }

    #[inline]
    pub(crate) fn encode(&self, idx: &[usize; MAX_DIM], extent: usize) -> usize {
        let mut flat = 0;
        for k in (0..self.d).rev() {
            flat = flat * extent + idx[k];
        }
        flat
    }

    /// Coordinates of interior node with flat index `flat`.
    pub fn node_position(&self, flat: usize, out: &mut [f64; MAX_DIM]) {
        let mut idx = [0usize; MAX_DIM];
        self.decode(flat, self.n, &mut idx);
        for k in 0..self.d {
            out[k] = (idx[k] + 1) as f64 * self.hx;
        }
    }

    /// Center coordinates of cell with flat index `flat`.
    pub fn cell_position(&self, flat: usize, out: &mut [f64; MAX_DIM]) {
        let mut idx = [0usize; MAX_DIM];
        self.decode(flat, self.n + 1, &mut idx);
        for k in 0..self.d {
            out[k] = (idx[k] as f64 + 0.5) * self.hx;
        }
    }
}

/// Vector field on interior nodes, zero-extended to the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub grid: Grid,
    pub comps: usize,
    /// Layout: node * comps + component.
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(grid: Grid, comps: usize) -> Self {
        let len = grid.num_nodes() * comps;
        NodalField { grid, comps, values: vec![0.0; len] }
    }

    pub fn from_fn<F: FnMut(&[f64], usize) -> f64>(grid: Grid, comps: usize, mut f: F) -> Self {
        let mut out = Self::zeros(grid, comps);
        let mut x = [0.0f64; MAX_DIM];
        for node in 0..grid.num_nodes() {
            grid.node_position(node, &mut x);
            for c in 0..comps {
                out.values[node * comps + c] = f(&x[..grid.d], c);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, a: f64, other: &NodalField) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.values.iter_mut() {
            *x *= a;
        }
    }

    /// Squared discrete L^2 norm, sum |u|^2 hx^d.
    pub fn l2_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L^2 inner product, sum u.v hx^d.
    pub fn inner(&self, other: &NodalField) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Snapshot as CSV with columns x_1..x_d, u_1..u_D.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.grid.d;
        for k in 0..d {
            write!(w, "x_{},", k + 1)?;
        }
        for c in 0..self.comps {
            write!(w, "u_{}{}", c + 1, if c + 1 == self.comps { "\n" } else { "," })?;
        }
        let mut x = [0.0f64; MAX_DIM];
        for node in 0..self.grid.num_nodes() {
            self.grid.node_position(node, &mut x);
            for item in x.iter().take(d) {
                write!(w, "{:.17e},", item)?;
            }
            for c in 0..self.comps {
                let v = self.values[node * self.comps + c];
                write!(w, "{:.17e}{}", v, if c + 1 == self.comps { "\n" } else { "," })?;
            }
        }
        Ok(())
    }
}

/// Per-cell d x D matrix field, produced by [`grad`]; also houses F(grad u)
/// and S(grad u).
#[derive(Clone, Debug, PartialEq)]
pub struct CellGradient {
    pub grid: Grid,
    /// Target dimension D.
    pub comps: usize,
    /// Layout: cell * (d * D) + gamma * D + component.
    pub values: Vec<f64>,
}

impl CellGradient {
    pub fn zeros(grid: Grid, comps: usize) -> Self {
        let len = grid.num_cells() * grid.d * comps;
        CellGradient { grid, comps, values: vec![0.0; len] }
    }

    pub fn entries_per_cell(&self) -> usize {
        self.grid.d * self.comps
    }

    pub fn inner(&self, other: &CellGradient) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn l2_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }
}

#[inline]
fn ext_node_storage(idx: &[usize; MAX_DIM], d: usize, n: usize) -> Option<usize> {
    // extended index in [0, n+1]; interior iff all coords in [1, n]
    let mut flat = 0;
    for k in (0..d).rev() {
        let j = idx[k];
        if j == 0 || j > n {
            return None;
        }
        flat = flat * n + (j - 1);
    }
    Some(flat)
}

/// Forward-difference gradient over cells, using the zero extension at the
/// boundary.
pub fn grad(u: &NodalField) -> CellGradient {
    let grid = u.grid;
    let (d, n, comps) = (grid.d, grid.n, u.comps);
    let inv_h = 1.0 / grid.hx;
    let mut out = CellGradient::zeros(grid, comps);
    let epc = d * comps;
    let mut cc = [0usize; MAX_DIM];
    for cell in 0..grid.num_cells() {
        grid.decode(cell, n + 1, &mut cc);
        let lo = ext_node_storage(&cc, d, n);
        for gamma in 0..d {
            let mut jj = cc;
            jj[gamma] += 1;
            let hi = ext_node_storage(&jj, d, n);
            for c in 0..comps {
                let a = hi.map_or(0.0, |j| u.values[j * comps + c]);
                let b = lo.map_or(0.0, |j| u.values[j * comps + c]);
                out.values[cell * epc + gamma * comps + c] = (a - b) * inv_h;
            }
        }
    }
    out
}

/// Negative adjoint of [`grad`] under the discrete inner products:
/// <div_adjoint(A), v> = -<A, grad(v)> exactly up to roundoff.
pub fn div_adjoint(a: &CellGradient) -> NodalField {
    let grid = a.grid;
    let (d, n, comps) = (grid.d, grid.n, a.comps);
    let inv_h = 1.0 / grid.hx;
    let mut out = NodalField::zeros(grid, comps);
    let epc = d * comps;
    let mut cc = [0usize; MAX_DIM];
    for cell in 0..grid.num_cells() {
        grid.decode(cell, n + 1, &mut cc);
        let lo = ext_node_storage(&cc, d, n);
        for gamma in 0..d {
            let mut jj = cc;
            jj[gamma] += 1;
            let hi = ext_node_storage(&jj, d, n);
            for c in 0..comps {
                let v = a.values[cell * epc + gamma * comps + c] * inv_h;
                if let Some(j) = lo {
                    out.values[j * comps + c] += v;
                }
                if let Some(j) = hi {
                    out.values[j * comps + c] -= v;
                }
            }
        }
    }
    out
}

/// A site field with a validity mask, as produced by [`difference_quotient`].
#[derive(Clone, Debug)]
pub struct MaskedField {
    pub grid: Grid,
    /// Sites per axis (n for nodal data, n+1 for cell data).
    pub extent: usize,
    /// Flat components per site.
    pub comps: usize,
    pub values: Vec<f64>,
    /// Per-site validity; invalid sites carry value 0.
    pub valid: Vec<bool>,
}

/// Difference quotient (A(x + h e_gamma) - A(x)) / h with h = steps * hx,
/// on the sites where the shifted stencil stays inside the site array.
pub fn difference_quotient(
    grid: &Grid,
    extent: usize,
    comps: usize,
    values: &[f64],
    gamma: usize,
    steps: usize,
) -> Result<MaskedField> {
    if gamma >= grid.d {
        return Err(Error::InvalidArgument(format!(
            "axis {} out of range for dimension {}",
            gamma, grid.d
        )));
    }
    if steps == 0 || steps >= extent {
        return Err(Error::ShiftOutOfDomain { steps, extent });
    }
    let sites = extent.pow(grid.d as u32);
    debug_assert_eq!(values.len(), sites * comps);
    let inv_h = 1.0 / (steps as f64 * grid.hx);
    let mut out = vec![0.0; sites * comps];
    let mut valid = vec![false; sites];
    let mut idx = [0usize; MAX_DIM];
    for site in 0..sites {
        grid.decode(site, extent, &mut idx);
        if idx[gamma] + steps >= extent {
            continue;
        }
        valid[site] = true;
        idx[gamma] += steps;
        let shifted = grid.encode(&idx, extent);
        for c in 0..comps {
            out[site * comps + c] = (values[shifted * comps + c] - values[site * comps + c]) * inv_h;
        }
    }
    Ok(MaskedField { grid: *grid, extent, comps, values: out, valid })
}

pub fn difference_quotient_cells(a: &CellGradient, gamma: usize, steps: usize) -> Result<MaskedField> {
    difference_quotient(&a.grid, a.grid.n + 1, a.entries_per_cell(), &a.values, gamma, steps)
}

pub fn difference_quotient_nodal(u: &NodalField, gamma: usize, steps: usize) -> Result<MaskedField> {
    difference_quotient(&u.grid, u.grid.n, u.comps, &u.values, gamma, steps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    SharpIndicator,
    SmoothBump,
}

/// Concentric sub-box G' = [margin, 1-margin]^d with an indicator or C^1
/// bump weight standing in for an interior cutoff function.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SubdomainMask {
    pub margin: f64,
    pub weight_kind: WeightKind,
}

impl SubdomainMask {
    pub fn new(margin: f64, weight_kind: WeightKind) -> Result<Self> {
        if !(margin.is_finite() && (0.0..0.5).contains(&margin)) {
            return Err(Error::InvalidArgument(format!("margin must lie in [0, 1/2), got {}", margin)));
        }
        Ok(SubdomainMask { margin, weight_kind })
    }

    pub fn full() -> Self {
        SubdomainMask { margin: 0.0, weight_kind: WeightKind::SharpIndicator }
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        if self.margin == 0.0 {
            return 1.0;
        }
        let a = self.margin;
        match self.weight_kind {
            WeightKind::SharpIndicator => {
                if x.iter().all(|&xi| xi >= a && xi <= 1.0 - a) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightKind::SmoothBump => {
                // per-axis C^1 ramp over [a, 2a], plateau [2a, 1-2a]
                let mut w = 1.0;
                for &xi in x {
                    let t = xi.min(1.0 - xi); // distance to the boundary
                    if t <= a {
                        return 0.0;
                    }
                    if t < 2.0 * a {
                        let r = (t - a) / a;
                        w *= r * r * (3.0 - 2.0 * r);
                    }
                }
                w
            }
        }
    }
}

fn site_norm_pow(values: &[f64], site: usize, comps: usize, q: f64) -> f64 {
    let mut s2 = 0.0;
    for c in 0..comps {
        let v = values[site * comps + c];
        s2 += v * v;
    }
    if q == 2.0 {
        s2
    } else {
        s2.sqrt().powf(q)
    }
}

/// q-th power of the weighted L^q norm of a nodal field over the mask:
/// sum w(x) |u(x)|^q hx^d.
pub fn norm_lq_nodal(u: &NodalField, q: f64, mask: &SubdomainMask) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", q)));
    }
    let mut x = [0.0f64; MAX_DIM];
    let mut acc = 0.0;
    for node in 0..u.grid.num_nodes() {
        u.grid.node_position(node, &mut x);
        let w = mask.weight(&x[..u.grid.d]);
        if w != 0.0 {
            acc += w * site_norm_pow(&u.values, node, u.comps, q);
        }
    }
    Ok(acc * u.grid.cell_volume())
}

/// q-th power of the weighted L^q norm of a cell matrix field over the mask.
pub fn norm_lq_cells(a: &CellGradient, q: f64, mask: &SubdomainMask) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", q)));
    }
    let comps = a.entries_per_cell();
    let mut x = [0.0f64; MAX_DIM];
    let mut acc = 0.0;
    for cell in 0..a.grid.num_cells() {
        a.grid.cell_position(cell, &mut x);
        let w = mask.weight(&x[..a.grid.d]);
        if w != 0.0 {
            acc += w * site_norm_pow(&a.values, cell, comps, q);
        }
    }
    Ok(acc * a.grid.cell_volume())
}

/// Same for a masked field; invalid sites do not contribute.
pub fn norm_lq_masked(f: &MaskedField, q: f64, mask: &SubdomainMask) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("q must be >= 1, got {}", q)));
    }
    let sites = f.extent.pow(f.grid.d as u32);
    let mut x = [0.0f64; MAX_DIM];
    let mut idx = [0usize; MAX_DIM];
    let shift = if f.extent == f.grid.n { 1.0 } else { 0.5 };
    let mut acc = 0.0;
    for site in 0..sites {
        if !f.valid[site] {
            continue;
        }
        f.grid.decode(site, f.extent, &mut idx);
        for k in 0..f.grid.d {
            x[k] = (idx[k] as f64 + shift) * f.grid.hx;
        }
        let w = mask.weight(&x[..f.grid.d]);
        if w != 0.0 {
            acc += w * site_norm_pow(&f.values, site, f.comps, q);
        }
    }
    Ok(acc * f.grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use approx::assert_relative_eq;

    fn random_nodal(grid: Grid, comps: usize, seed: u64) -> NodalField {
        let mut s = Stream::new(seed, 1);
        let mut u = NodalField::zeros(grid, comps);
        for v in u.values.iter_mut() {
            *v = s.uniform(-1.0, 1.0);
        }
        u
    }

    fn random_cells(grid: Grid, comps: usize, seed: u64) -> CellGradient {
        let mut s = Stream::new(seed, 2);
        let mut a = CellGradient::zeros(grid, comps);
        for v in a.values.iter_mut() {
            *v = s.uniform(-1.0, 1.0);
        }
        a
    }

    #[test]
    fn mesh_width_exact() {
        for n in [2usize, 3, 7, 31] {
            let g = Grid::new(1, n).unwrap();
            assert_eq!(g.hx * (n + 1) as f64, 1.0);
        }
    }

    #[test]
    fn grad_of_zero_is_zero() {
        let g = Grid::new(2, 8).unwrap();
        let u = NodalField::zeros(g, 2);
        let a = grad(&u);
        assert!(a.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_affine_interior_exact() {
        // d=1, n=3: u = restriction of 2x; interior cells see slope 2 exactly,
        // the two boundary cells deviate because of the zero extension.
        let g = Grid::new(1, 3).unwrap();
        let u = NodalField::from_fn(g, 1, |x, _| 2.0 * x[0]);
        let a = grad(&u);
        assert_relative_eq!(a.values[1], 2.0, max_relative = 1e-13);
        assert_relative_eq!(a.values[2], 2.0, max_relative = 1e-13);
        assert!((a.values[0] - 2.0).abs() > 0.1 || (a.values[3] - 2.0).abs() > 0.1);
    }

    #[test]
    fn grad_sine_taylor_bound() {
        let n = 63;
        let g = Grid::new(1, n).unwrap();
        let pi = std::f64::consts::PI;
        let u = NodalField::from_fn(g, 1, |x, _| (pi * x[0]).sin());
        let a = grad(&u);
        // forward difference at cell center c+hx/2 equals the midpoint
        // derivative up to hx^2/24 |f'''| = pi^3 hx^2 / 24 (Taylor remainder)
        let bound = pi.powi(3) * g.hx * g.hx / 24.0;
        let mut worst: f64 = 0.0;
        for cell in 0..=n {
            let xm = (cell as f64 + 0.5) * g.hx;
            let exact = pi * (pi * xm).cos();
            worst = worst.max((a.values[cell] - exact).abs());
        }
        assert!(worst <= bound * 1.0001, "worst {} > bound {}", worst, bound);
    }

    #[test]
    fn adjoint_identity_random() {
        for d in [1usize, 2] {
            for n in [4usize, 8, 16, 32] {
                let g = Grid::new(d, n).unwrap();
                let v = random_nodal(g, 2, 100 + n as u64);
                let a = random_cells(g, 2, 200 + n as u64);
                let lhs = div_adjoint(&a).inner(&v);
                let rhs = -a.inner(&grad(&v));
                let scale = a.l2_sq().sqrt() * v.l2_sq().sqrt() / g.hx;
                assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn div_adjoint_of_zero_and_constant() {
        let g = Grid::new(1, 3).unwrap();
        let a = CellGradient::zeros(g, 1);
        assert!(div_adjoint(&a).values.iter().all(|&v| v == 0.0));
        // constant cell field: backward-difference divergence vanishes at all
        // interior nodes (the boundary cells carry the constant too, so the
        // stencil telescopes); verified here against the hand-built transpose
        let mut a = CellGradient::zeros(g, 1);
        for v in a.values.iter_mut() {
            *v = 3.5;
        }
        let out = div_adjoint(&a);
        for &v in &out.values {
            assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        }
        // defining property against random test fields
        for seed in 0..5 {
            let v = random_nodal(g, 1, 300 + seed);
            assert_relative_eq!(out.inner(&v), -a.inner(&grad(&v)), epsilon = 1e-12);
        }
    }

    #[test]
    fn grad_is_linear() {
        let g = Grid::new(2, 6).unwrap();
        let u = random_nodal(g, 2, 1);
        let v = random_nodal(g, 2, 2);
        let mut w = u.clone();
        w.scale(2.5);
        w.axpy(-1.25, &v);
        let gw = grad(&w);
        let gu = grad(&u);
        let gv = grad(&v);
        for i in 0..gw.values.len() {
            assert_relative_eq!(gw.values[i], 2.5 * gu.values[i] - 1.25 * gv.values[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn difference_quotient_basics() {
        let g = Grid::new(2, 8).unwrap();
        // constant nodal field -> 0 on valid sites
        let mut u = NodalField::zeros(g, 1);
        for v in u.values.iter_mut() {
            *v = 4.0;
        }
        let dq = difference_quotient_nodal(&u, 0, 1).unwrap();
        for (site, &ok) in dq.valid.iter().enumerate() {
            if ok {
                assert_eq!(dq.values[site], 0.0);
            }
        }
        // affine field: slope recovered on every valid site
        let u = NodalField::from_fn(g, 1, |x, _| 3.0 * x[1]);
        let dq = difference_quotient_nodal(&u, 1, 2).unwrap();
        for (site, &ok) in dq.valid.iter().enumerate() {
            if ok {
                assert_relative_eq!(dq.values[site], 3.0, max_relative = 1e-12);
            }
        }
        // shift leaving the domain rejected
        assert!(difference_quotient_nodal(&u, 1, 8).is_err());
        assert!(difference_quotient_nodal(&u, 5, 1).is_err());
    }

    #[test]
    fn dq_commutes_with_grad() {
        // both are linear shift-difference compositions; on sites where both
        // composites are valid they agree
        let g = Grid::new(2, 8).unwrap();
        let u = random_nodal(g, 1, 7);
        let a = grad(&u);
        let dq_of_grad = difference_quotient_cells(&a, 0, 1).unwrap();
        let dq_u = difference_quotient_nodal(&u, 0, 1).unwrap();
        // grad of the difference-quotient field, treating it as nodal data
        let g_of_dq = grad(&NodalField { grid: g, comps: 1, values: dq_u.values.clone() });
        // interior cells: away from boundary cells (where the zero extension
        // interacts with the invalid strip of dq_u) the two composites match
        let mut idx = [0usize; MAX_DIM];
        for cell in 0..g.num_cells() {
            g.decode(cell, g.n + 1, &mut idx);
            if idx.iter().take(g.d).all(|&i| i >= 1 && i + 2 <= g.n) {
                for gamma in 0..g.d {
                    assert_relative_eq!(
                        dq_of_grad.values[cell * g.d + gamma],
                        g_of_dq.values[cell * g.d + gamma],
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn norm_lq_basics() {
        let g = Grid::new(2, 15).unwrap();
        let mask = SubdomainMask::full();
        let zero = NodalField::zeros(g, 1);
        assert_eq!(norm_lq_nodal(&zero, 2.0, &mask).unwrap(), 0.0);
        let mut ones = NodalField::zeros(g, 1);
        for v in ones.values.iter_mut() {
            *v = 1.0;
        }
        // all interior nodes weight 1: measure of the node set
        let measure = g.num_nodes() as f64 * g.cell_volume();
        assert_relative_eq!(norm_lq_nodal(&ones, 2.0, &mask).unwrap(), measure, epsilon = 1e-12);
        assert!(norm_lq_nodal(&ones, 0.5, &mask).is_err());
    }

    #[test]
    fn norm_lq_half_indicator() {
        let g = Grid::new(1, 63).unwrap();
        let mask = SubdomainMask::full();
        let mut a = CellGradient::zeros(g, 1);
        let cells = g.num_cells();
        for cell in 0..cells / 2 {
            a.values[cell] = 1.0;
        }
        // direct summation oracle: (cells/2) * hx
        let expect = (cells / 2) as f64 * g.hx;
        assert_relative_eq!(norm_lq_cells(&a, 3.0, &mask).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn norm_homogeneity() {
        let g = Grid::new(2, 9).unwrap();
        let mask = SubdomainMask::new(0.125, WeightKind::SharpIndicator).unwrap();
        let u = random_nodal(g, 2, 5);
        for q in [1.0, 2.0, 3.5] {
            let base = norm_lq_nodal(&u, q, &mask).unwrap();
            let mut cu = u.clone();
            cu.scale(-2.0);
            let scaled = norm_lq_nodal(&cu, q, &mask).unwrap();
            assert_relative_eq!(scaled, 2.0f64.powf(q) * base, max_relative = 1e-12);
        }
    }

    #[test]
    fn smooth_bump_profile() {
        let mask = SubdomainMask::new(0.125, WeightKind::SmoothBump).unwrap();
        assert_eq!(mask.weight(&[0.05, 0.5]), 0.0);
        assert_eq!(mask.weight(&[0.5, 0.5]), 1.0);
        let w = mask.weight(&[0.1875, 0.5]); // midpoint of the ramp
        assert_relative_eq!(w, 0.5, epsilon = 1e-12);
        assert!(SubdomainMask::new(0.5, WeightKind::SharpIndicator).is_err());
    }

    #[test]
    fn csv_snapshot_layout() {
        let g = Grid::new(2, 2).unwrap();
        let u = NodalField::from_fn(g, 2, |x, c| x[0] + 10.0 * c as f64);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x_1,x_2,u_1,u_2");
        assert_eq!(lines.count(), 4);
    }
}
