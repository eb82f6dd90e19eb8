//! Uniform cell-centred grids, nodal fields, masks and point-measure deposition.
//!
//! Node `i` along an axis sits at `origin + (i + 1/2) h`. The discrete
//! Laplacian is the standard 2n+1 point stencil with zero values outside the
//! box, which stands in for compact support in R^n.

use serde::{Deserialize, Serialize};

use crate::error::{QdomError, Result};

pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    origin: [f64; 3],
    cells: [usize; 3],
    h: f64,
}

/// Builds a grid; `origin`, `extent` and `cells` must have length `n`.
pub fn make_grid(n: usize, origin: &[f64], extent: &[f64], cells: &[usize]) -> Result<Grid> {
    Grid::new(n, origin, extent, cells)
}

impl Grid {
    pub fn new(n: usize, origin: &[f64], extent: &[f64], cells: &[usize]) -> Result<Grid> {
        if n != 2 && n != 3 {
            return Err(QdomError::Config(format!(
                "dimension must be 2 or 3, got {n}"
            )));
        }
        if origin.len() != n || extent.len() != n || cells.len() != n {
            return Err(QdomError::Config(format!(
                "origin, extent and cells need {n} entries each"
            )));
        }
        let mut o = [0.0; 3];
        let mut c = [1usize; 3];
        let h = extent[0] / cells[0] as f64;
        for a in 0..n {
            if cells[a] < MIN_CELLS {
                return Err(QdomError::Config(format!(
                    "axis {a} has {} cells; at least {MIN_CELLS} required",
                    cells[a]
                )));
            }
            if !(extent[a] > 0.0) || !extent[a].is_finite() || !origin[a].is_finite() {
                return Err(QdomError::Config(format!("axis {a}: bad origin/extent")));
            }
            let ha = extent[a] / cells[a] as f64;
            if (ha - h).abs() > 1e-12 * h {
                return Err(QdomError::Config(format!(
                    "non-uniform spacing: axis 0 has h={h}, axis {a} has h={ha}"
                )));
            }
            o[a] = origin[a];
            c[a] = cells[a];
        }
        Ok(Grid {
            n,
            origin: o,
            cells: c,
            h,
        })
    }

    /// Square/cubic box [-half_width, half_width]^n with `cells` per axis.
    pub fn centered(n: usize, half_width: f64, cells: usize) -> Result<Grid> {
        let o = vec![-half_width; n];
        let e = vec![2.0 * half_width; n];
        let c = vec![cells; n];
        Grid::new(n, &o, &e, &c)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    pub fn extent(&self) -> [f64; 3] {
        let mut e = [0.0; 3];
        for a in 0..self.n {
            e[a] = self.cells[a] as f64 * self.h;
        }
        e
    }
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.n as i32)
    }
    pub fn max_cells(&self) -> usize {
        self.cells[..self.n].iter().copied().max().unwrap_or(0)
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let c0 = self.cells[0];
        let c1 = self.cells[1];
        [idx % c0, (idx / c0) % c1, idx / (c0 * c1)]
    }

    /// Physical position of a node; unused trailing entries are zero.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.h;
        }
        p
    }

    /// Node nearest to `p`, or `None` if `p` lies outside the box.
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..self.n {
            let t = (p[a] - self.origin[a]) / self.h;
            if t < 0.0 || t > self.cells[a] as f64 {
                return None;
            }
            c[a] = (t.floor() as usize).min(self.cells[a] - 1);
        }
        Some(self.index(c))
    }

    /// Number of whole nodes between `idx` and the nearest box face.
    pub fn margin(&self, idx: usize) -> usize {
        let c = self.coords(idx);
        (0..self.n)
            .map(|a| c[a].min(self.cells[a] - 1 - c[a]))
            .min()
            .unwrap_or(0)
    }

    /// Distance from a physical point to the nearest box face (negative outside).
    pub fn distance_to_boundary(&self, p: &[f64]) -> f64 {
        (0..self.n)
            .map(|a| {
                let lo = p[a] - self.origin[a];
                let hi = self.origin[a] + self.cells[a] as f64 * self.h - p[a];
                lo.min(hi)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Face neighbours of a node; slots beyond 2n and neighbours outside the
    /// box are `None`.
    #[inline]
    pub fn neighbors(&self, idx: usize) -> [Option<usize>; 6] {
        let c = self.coords(idx);
        let mut out = [None; 6];
        let mut stride = 1;
        for a in 0..self.n {
            if c[a] > 0 {
                out[2 * a] = Some(idx - stride);
            }
            if c[a] + 1 < self.cells[a] {
                out[2 * a + 1] = Some(idx + stride);
            }
            stride *= self.cells[a];
        }
        out
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(QdomError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Real values at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QdomError::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QdomError::Domain(format!("non-finite value at node {i}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let n = grid.n();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..n])).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.check_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Values outside `mask` set to zero.
    pub fn restrict(&self, mask: &Mask) -> Result<ScalarField> {
        self.grid.check_same(&mask.grid)?;
        let values = self
            .values
            .iter()
            .zip(&mask.flags)
            .map(|(&v, &f)| if f { v } else { 0.0 })
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn positive_part(&self) -> ScalarField {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> ScalarField {
        self.map(|v| (-v).max(0.0))
    }

    pub fn positive_mask(&self, tol: f64) -> Mask {
        Mask {
            grid: self.grid,
            flags: self.values.iter().map(|&v| v > tol).collect(),
        }
    }

    pub fn negative_mask(&self, tol: f64) -> Mask {
        Mask {
            grid: self.grid,
            flags: self.values.iter().map(|&v| v < -tol).collect(),
        }
    }

    /// Discrete L^2 norm, sqrt(h^n sum v^2).
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        (self.grid.cell_volume() * pairwise_sum(&sq)).sqrt()
    }

    /// Discrete inner product h^n sum a b.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let prod: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(self.grid.cell_volume() * pairwise_sum(&prod))
    }

    /// Largest |value| over nodes whose margin is below `cells`.
    pub fn max_within_margin(&self, cells: usize) -> f64 {
        (0..self.grid.len())
            .filter(|&i| self.grid.margin(i) < cells)
            .fold(0.0, |m, i| m.max(self.values[i].abs()))
    }
}

/// Boolean flags per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid,
    flags: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(QdomError::GridMismatch(format!(
                "{} flags for {} nodes",
                flags.len(),
                grid.len()
            )));
        }
        Ok(Mask { grid, flags })
    }

    pub fn empty(grid: Grid) -> Self {
        Mask {
            grid,
            flags: vec![false; grid.len()],
        }
    }

    pub fn full(grid: Grid) -> Self {
        Mask {
            grid,
            flags: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> bool) -> Self {
        let n = grid.n();
        Mask {
            grid,
            flags: (0..grid.len()).map(|i| f(&grid.point(i)[..n])).collect(),
        }
    }

    /// Open ball of radius `r` about `c`.
    pub fn ball(grid: Grid, c: &[f64], r: f64) -> Self {
        Mask::from_fn(grid, |x| dist(x, c) < r)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
    pub fn get(&self, idx: usize) -> bool {
        self.flags[idx]
    }
    pub fn set(&mut self, idx: usize, v: bool) {
        self.flags[idx] = v;
    }
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
    }
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    fn combine(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        self.grid.check_same(&other.grid)?;
        Ok(Mask {
            grid: self.grid,
            flags: self
                .flags
                .iter()
                .zip(&other.flags)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.combine(other, |a, b| a && b)
    }
    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.combine(other, |a, b| a || b)
    }
    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        self.combine(other, |a, b| a && !b)
    }
    pub fn xor(&self, other: &Mask) -> Result<Mask> {
        self.combine(other, |a, b| a != b)
    }
    pub fn not(&self) -> Mask {
        Mask {
            grid: self.grid,
            flags: self.flags.iter().map(|f| !f).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> Result<bool> {
        self.grid.check_same(&other.grid)?;
        Ok(self.flags.iter().zip(&other.flags).all(|(&a, &b)| !a || b))
    }

    /// Adds every node within Chebyshev distance `steps` of a flagged node.
    pub fn dilate(&self, steps: usize) -> Mask {
        let mut cur = self.flags.clone();
        for _ in 0..steps {
            let mut next = cur.clone();
            let n = self.grid.n;
            // separable max filter, one axis at a time
            for a in 0..n {
                let src = next.clone();
                let stride: usize = self.grid.cells[..a].iter().product();
                for idx in 0..src.len() {
                    if src[idx] {
                        continue;
                    }
                    let c = self.grid.coords(idx)[a];
                    let lo = c > 0 && src[idx - stride];
                    let hi = c + 1 < self.grid.cells[a] && src[idx + stride];
                    if lo || hi {
                        next[idx] = true;
                    }
                }
            }
            cur = next;
        }
        Mask {
            grid: self.grid,
            flags: cur,
        }
    }

    /// Keeps nodes whose whole Chebyshev `steps`-neighbourhood is flagged
    /// (nodes outside the box count as unflagged).
    pub fn erode(&self, steps: usize) -> Mask {
        let grown = self.not().dilate(steps);
        let flags = (0..self.flags.len())
            .map(|i| !grown.flags[i] && self.grid.margin(i) >= steps)
            .collect();
        Mask {
            grid: self.grid,
            flags,
        }
    }

    /// Flagged nodes with an unflagged (or exterior) Chebyshev neighbour.
    pub fn inner_boundary(&self) -> Mask {
        let e = self.erode(1);
        self.and_not(&e).expect("same grid")
    }

    /// Nodes within `steps` cells of the mask's inner/outer boundary.
    pub fn collar(&self, steps: usize) -> Mask {
        let outer = self.dilate(steps);
        let inner = self.erode(steps);
        outer.and_not(&inner).expect("same grid")
    }

    /// Whether the two masks differ only inside a collar of `steps` cells
    /// around each other's boundary.
    pub fn agrees_within(&self, other: &Mask, steps: usize) -> Result<bool> {
        Ok(self.is_subset_of(&other.dilate(steps))? && other.is_subset_of(&self.dilate(steps))?)
    }

    /// Number of nodes flagged in exactly one of the masks.
    pub fn symmetric_difference_count(&self, other: &Mask) -> Result<usize> {
        Ok(self.xor(other)?.count())
    }

    /// Smallest node margin over flagged nodes (`usize::MAX` when empty).
    pub fn min_margin(&self) -> usize {
        self.indices()
            .map(|i| self.grid.margin(i))
            .min()
            .unwrap_or(usize::MAX)
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self
                .flags
                .iter()
                .map(|&f| if f { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Mirror image under x -> 2c - x along `axis`; nodes that map outside the
    /// box are dropped.
    pub fn reflect(&self, axis: usize, c: f64) -> Mask {
        let mut out = Mask::empty(self.grid);
        for idx in self.indices() {
            let mut p = self.grid.point(idx);
            p[axis] = 2.0 * c - p[axis];
            if let Some(j) = self.grid.nearest_node(&p[..self.grid.n]) {
                out.flags[j] = true;
            }
        }
        out
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Hierarchical pairwise summation with a fixed split, so results are
/// reproducible bit for bit.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        s
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Midpoint rule h^n sum f over the mask (or the whole grid).
pub fn integrate(f: &ScalarField, over: Option<&Mask>) -> Result<f64> {
    let vol = f.grid.cell_volume();
    match over {
        None => Ok(vol * pairwise_sum(&f.values)),
        Some(m) => {
            f.grid.check_same(&m.grid)?;
            let picked: Vec<f64> = f
                .values
                .iter()
                .zip(&m.flags)
                .map(|(&v, &fl)| if fl { v } else { 0.0 })
                .collect();
            Ok(vol * pairwise_sum(&picked))
        }
    }
}

/// Discrete Laplacian with zero exterior values, written into `out`.
pub fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let two_n = 2.0 * grid.n as f64;
    for (idx, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for nb in grid.neighbors(idx).iter().flatten() {
            s += f[*nb];
        }
        *o = (s - two_n * f[idx]) * inv_h2;
    }
}

/// (Delta_h + k^2) f with zero exterior convention.
pub fn helmholtz_apply(f: &ScalarField, k: f64) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    let k2 = k * k;
    for (o, v) in out.iter_mut().zip(&f.values) {
        *o += k2 * v;
    }
    ScalarField {
        grid: f.grid,
        values: out,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vec<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn new(point: &[f64], mass: f64) -> Self {
        Atom {
            point: point.to_vec(),
            mass,
        }
    }
}

/// Nonnegative density on the grid together with the atoms it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    density: ScalarField,
    atoms: Vec<Atom>,
    total_mass: f64,
}

impl GridMeasure {
    /// Wraps a nonnegative density; tiny negative round-off (>= -1e-12 of the
    /// peak) is clipped.
    pub fn from_density(density: ScalarField) -> Result<Self> {
        let peak = density.sup_norm();
        if density.values.iter().any(|&v| v < -1e-12 * peak.max(1.0)) {
            return Err(QdomError::Domain(
                "measure density must be nonnegative".into(),
            ));
        }
        let density = density.map(|v| v.max(0.0));
        let total_mass = integrate(&density, None)?;
        Ok(GridMeasure {
            density,
            atoms: Vec::new(),
            total_mass,
        })
    }

    pub fn zero(grid: Grid) -> Self {
        GridMeasure {
            density: ScalarField::zeros(grid),
            atoms: Vec::new(),
            total_mass: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.density.grid
    }
    pub fn density(&self) -> &ScalarField {
        &self.density
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn support(&self) -> Mask {
        self.density.positive_mask(0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<GridMeasure> {
        if c < 0.0 {
            return Err(QdomError::Domain(
                "measures scale by nonnegative factors".into(),
            ));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(&a.point, c * a.mass))
            .collect();
        Ok(GridMeasure {
            density: self.density.scale(c),
            atoms,
            total_mass: c * self.total_mass,
        })
    }

    pub fn sum(&self, other: &GridMeasure) -> Result<GridMeasure> {
        let density = self.density.add(&other.density)?;
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let total_mass = integrate(&density, None)?;
        Ok(GridMeasure {
            density,
            atoms,
            total_mass,
        })
    }

    /// Whether the support keeps at least `cells` nodes from the box faces.
    pub fn clear_of_boundary(&self, cells: usize) -> bool {
        self.support().min_margin() >= cells
    }
}

/// Spreads each atom uniformly over the grid nodes within `radius` of it;
/// each atom's discrete mass is exact.
pub fn deposit_measure(grid: &Grid, atoms: &[Atom], radius: f64) -> Result<GridMeasure> {
    let h = grid.h();
    if radius < 2.0 * h * (1.0 - 1e-12) {
        return Err(QdomError::Config(format!(
            "mollification radius {radius} is below 2h = {}",
            2.0 * h
        )));
    }
    let n = grid.n();
    let mut dens = vec![0.0; grid.len()];
    for atom in atoms {
        if atom.point.len() != n || atom.point.iter().any(|x| !x.is_finite()) {
            return Err(QdomError::Config(format!(
                "atom point {:?} is not in R^{n}",
                atom.point
            )));
        }
        if !(atom.mass >= 0.0) || !atom.mass.is_finite() {
            return Err(QdomError::Domain(format!(
                "atom mass {} must be >= 0",
                atom.mass
            )));
        }
        if grid.distance_to_boundary(&atom.point) < radius + 2.0 * h {
            return Err(QdomError::Placement(format!(
                "atom at {:?} lies within radius + 2h of the box boundary",
                atom.point
            )));
        }
        let nodes: Vec<usize> = nodes_near(grid, &atom.point, radius);
        let w = atom.mass / (nodes.len() as f64 * grid.cell_volume());
        for i in nodes {
            dens[i] += w;
        }
    }
    let density = ScalarField::new(*grid, dens)?;
    let total_mass = integrate(&density, None)?;
    Ok(GridMeasure {
        density,
        atoms: atoms.to_vec(),
        total_mass,
    })
}

/// Nodes within distance `r` of `p` (closed ball), scanning only the
/// bounding box.
pub fn nodes_near(grid: &Grid, p: &[f64], r: f64) -> Vec<usize> {
    let n = grid.n();
    let h = grid.h();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..n {
        let t0 = ((p[a] - r - grid.origin[a]) / h - 0.5).floor().max(0.0) as usize;
        let t1 = ((p[a] + r - grid.origin[a]) / h - 0.5).ceil().max(0.0) as usize;
        lo[a] = t0.min(grid.cells[a] - 1);
        hi[a] = t1.min(grid.cells[a] - 1);
    }
    let mut out = Vec::new();
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let idx = grid.index([i, j, k]);
                if dist(&grid.point(idx)[..n], p) <= r {
                    out.push(idx);
                }
            }
        }
    }
    out
}
