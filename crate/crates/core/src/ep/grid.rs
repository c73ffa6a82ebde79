use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of the square pacing footprint under the lead tip, in nodes.
pub const TIP_FOOTPRINT_SIDE: usize = 5;

/// 2D tissue sheet on a uniform node lattice.
///
/// Node `(i, j)` sits at `(i·dx, j·dx)` mm and has flat index `j·nx + i`.
/// `conductivity` is a dimensionless per-node scale; the absolute diffusion
/// coefficient is `diffusivity · conductivity` (mm²/ms), and edges couple
/// neighbouring nodes with the harmonic mean of their scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx_mm: f64,
    /// Diffusion coefficient of healthy tissue (mm²/ms).
    pub diffusivity: f64,
    pub conductivity: Vec<f64>,
    pub scar_mask: Vec<bool>,
    pub isthmus_mask: Vec<bool>,
    /// Nodes that use the remodeled membrane parameters, if the solver has any.
    pub remodeled_mask: Vec<bool>,
    pub sinus_site: Vec<usize>,
    pub ectopic_sites: Vec<Vec<usize>>,
    pub tip_footprint: Vec<usize>,
}

impl TissueGrid {
    /// Homogeneous sheet with the sinus site along the bottom edge.
    pub fn sheet(nx: usize, ny: usize, dx_mm: f64, diffusivity: f64) -> Self {
        let n = nx * ny;
        let mut grid = Self {
            nx,
            ny,
            dx_mm,
            diffusivity,
            conductivity: vec![1.0; n],
            scar_mask: vec![false; n],
            isthmus_mask: vec![false; n],
            remodeled_mask: vec![false; n],
            sinus_site: Vec::new(),
            ectopic_sites: Vec::new(),
            tip_footprint: Vec::new(),
        };
        grid.sinus_site = grid.rows(0..ny.min(2));
        grid
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Position of a node in mm.
    #[inline]
    pub fn position_mm(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.coords(idx);
        (i as f64 * self.dx_mm, j as f64 * self.dx_mm)
    }

    /// Nearest node to a point in mm, clamped to the sheet.
    pub fn nearest_node(&self, x_mm: f64, y_mm: f64) -> usize {
        let clamp = |v: f64, n: usize| ((v / self.dx_mm).round().max(0.0) as usize).min(n - 1);
        self.index(clamp(x_mm, self.nx), clamp(y_mm, self.ny))
    }

    pub fn width_mm(&self) -> f64 {
        (self.nx - 1) as f64 * self.dx_mm
    }

    pub fn height_mm(&self) -> f64 {
        (self.ny - 1) as f64 * self.dx_mm
    }

    /// All non-scar nodes in the given rows.
    pub fn rows(&self, rows: std::ops::Range<usize>) -> Vec<usize> {
        rows.flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| self.index(i, j))
            .filter(|&n| !self.scar_mask[n])
            .collect()
    }

    /// All non-scar nodes in the given columns.
    pub fn columns(&self, cols: std::ops::Range<usize>) -> Vec<usize> {
        (0..self.ny)
            .flat_map(|j| cols.clone().map(move |i| (i, j)))
            .map(|(i, j)| self.index(i, j))
            .filter(|&n| !self.scar_mask[n])
            .collect()
    }

    /// Non-scar nodes of a square block of `side` nodes centred on a point (mm).
    pub fn block_at(&self, x_mm: f64, y_mm: f64, side: usize) -> Vec<usize> {
        let (ci, cj) = self.coords(self.nearest_node(x_mm, y_mm));
        let half = side / 2;
        let i0 = ci.saturating_sub(half).min(self.nx.saturating_sub(side));
        let j0 = cj.saturating_sub(half).min(self.ny.saturating_sub(side));
        let mut out = Vec::with_capacity(side * side);
        for j in j0..(j0 + side).min(self.ny) {
            for i in i0..(i0 + side).min(self.nx) {
                let n = self.index(i, j);
                if !self.scar_mask[n] {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Places the pacing footprint (5×5 nodes) under a lead tip at `(x, y)` mm.
    pub fn set_tip(&mut self, x_mm: f64, y_mm: f64) {
        self.tip_footprint = self.block_at(x_mm, y_mm, TIP_FOOTPRINT_SIDE);
    }

    /// Cuts an elliptical scar with a straight slow-conducting isthmus
    /// through its centre. The isthmus runs along y when `vertical`, along x
    /// otherwise, and has conductivity `isthmus_factor` relative to healthy
    /// tissue. Isthmus nodes, and healthy nodes within `border_zone_mm` of
    /// the ellipse, are flagged as remodeled. Returns the isthmus node count.
    pub fn add_scar_with_isthmus(&mut self, scar: &ScarGeometry) -> usize {
        let mut count = 0;
        let (ax, ay) = scar.semi_axes_mm;
        let (bx, by) = (ax + scar.border_zone_mm, ay + scar.border_zone_mm);
        for idx in 0..self.len() {
            let (x, y) = self.position_mm(idx);
            let (u, v) = (x - scar.center_mm.0, y - scar.center_mm.1);
            let r = (u / ax).powi(2) + (v / ay).powi(2);
            if r > 1.0 {
                if scar.border_zone_mm > 0.0 && (u / bx).powi(2) + (v / by).powi(2) <= 1.0 {
                    self.remodeled_mask[idx] = true;
                }
                continue;
            }
            let across = if scar.vertical { u } else { v };
            if across.abs() <= scar.isthmus_width_mm / 2.0 {
                self.isthmus_mask[idx] = true;
                self.remodeled_mask[idx] = true;
                self.scar_mask[idx] = false;
                self.conductivity[idx] = scar.isthmus_factor;
                count += 1;
            } else {
                self.scar_mask[idx] = true;
                self.isthmus_mask[idx] = false;
                self.remodeled_mask[idx] = false;
                self.conductivity[idx] = 0.0;
            }
        }
        let keep = |sites: &mut Vec<usize>, scar: &[bool]| sites.retain(|&n| !scar[n]);
        keep(&mut self.sinus_site, &self.scar_mask);
        keep(&mut self.tip_footprint, &self.scar_mask);
        for site in &mut self.ectopic_sites {
            keep(site, &self.scar_mask);
        }
        count
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.nx < 2 || self.ny < 1 {
            return Err(Error::Config("grid needs at least 2×1 nodes".into()));
        }
        if !(self.dx_mm.is_finite() && self.dx_mm > 0.0) {
            return Err(Error::Config("dx_mm must be positive".into()));
        }
        if !(self.diffusivity.is_finite() && self.diffusivity >= 0.0) {
            return Err(Error::Config("diffusivity must be non-negative".into()));
        }
        if self.conductivity.len() != n
            || self.scar_mask.len() != n
            || self.isthmus_mask.len() != n
            || self.remodeled_mask.len() != n
        {
            return Err(Error::Config("per-node fields must have nx·ny entries".into()));
        }
        if self.conductivity.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("conductivity must be finite and ≥ 0".into()));
        }
        if (0..n).any(|k| self.isthmus_mask[k] && self.scar_mask[k]) {
            return Err(Error::Config("isthmus nodes must not be scar".into()));
        }
        let sites = std::iter::once(&self.sinus_site)
            .chain(self.ectopic_sites.iter())
            .chain(std::iter::once(&self.tip_footprint));
        for site in sites {
            if site.iter().any(|&k| k >= n || self.scar_mask[k]) {
                return Err(Error::Config("stimulus site outside the tissue domain".into()));
            }
        }
        Ok(())
    }

    /// Largest diffusion coefficient on the grid (mm²/ms).
    pub fn max_diffusion(&self) -> f64 {
        let max_sigma = self
            .conductivity
            .iter()
            .zip(&self.scar_mask)
            .filter(|(_, &s)| !s)
            .map(|(&c, _)| c)
            .fold(0.0, f64::max);
        self.diffusivity * max_sigma
    }

    /// Explicit-Euler stability bound `dx² / (4·D_max)`.
    pub fn stable_dt_ms(&self) -> f64 {
        let d = self.max_diffusion();
        if d == 0.0 {
            f64::INFINITY
        } else {
            self.dx_mm * self.dx_mm / (4.0 * d)
        }
    }

    pub fn isthmus_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.isthmus_mask[k]).collect()
    }
}

/// Idealised infarct: ellipse of unexcitable tissue with a rectangular
/// isthmus through its centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScarGeometry {
    pub center_mm: (f64, f64),
    pub semi_axes_mm: (f64, f64),
    pub isthmus_width_mm: f64,
    pub isthmus_factor: f64,
    pub vertical: bool,
    /// Width of the remodeled rim around the ellipse (mm).
    #[serde(default)]
    pub border_zone_mm: f64,
}

/// Harmonic mean of two conductivity scales; zero if either is zero.
#[inline]
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}
