//! Tensor-product rectangular meshes in one and two dimensions.
//!
//! Elements are numbered with direction 1 running fastest; all indices are
//! zero-based. Each element owns a 3-wide stencil per direction: centered in
//! the interior and on periodic directions, one-sided at non-periodic ends.

use crate::error::{Error, Result};

/// Position in the domain. One-dimensional meshes ignore the second entry.
pub type Point = [f64; 2];

/// Per-direction element multi-index together with its linear position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElementId {
    pub index: [usize; 2],
    pub linear: usize,
}

/// How a one-dimensional stencil sits relative to its owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilKind {
    /// `{K-1, K, K+1}`
    Center,
    /// `{K-2, K-1, K}`
    Backward,
    /// `{K, K+1, K+2}`
    Forward,
}

impl StencilKind {
    /// Offsets of the three members relative to the owner.
    pub fn offsets(self) -> [isize; 3] {
        match self {
            StencilKind::Center => [-1, 0, 1],
            StencilKind::Backward => [-2, -1, 0],
            StencilKind::Forward => [0, 1, 2],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StencilKind::Center => "center",
            StencilKind::Backward => "backward",
            StencilKind::Forward => "forward",
        }
    }
}

/// One direction of a stencil: three element indices along the direction and
/// the coordinate shift applied to each member (non-zero only across a
/// periodic wrap, so that the members form a contiguous patch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil1d {
    pub kind: StencilKind,
    pub indices: [usize; 3],
    pub shifts: [f64; 3],
}

/// The `3^d` element patch used to reconstruct the polynomial on `owner`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub owner: ElementId,
    /// Linear member ids, direction 1 fastest (member `i + 3j` pairs entry
    /// `i` of direction 1 with entry `j` of direction 2).
    pub members: Vec<usize>,
    pub directions: Vec<Stencil1d>,
}

impl Stencil {
    pub fn kinds(&self) -> Vec<StencilKind> {
        self.directions.iter().map(|d| d.kind).collect()
    }

    /// Per-direction positions of member `s` inside the stencil.
    pub fn member_position(&self, s: usize) -> [usize; 2] {
        [s % 3, s / 3]
    }
}

#[derive(Debug, Clone)]
pub struct TensorMesh {
    dim: usize,
    breakpoints: Vec<Vec<f64>>,
    periodic: Vec<bool>,
    sizes: Vec<Vec<f64>>,
    centers: Vec<Vec<f64>>,
}

impl TensorMesh {
    pub fn new(breakpoints: Vec<Vec<f64>>, periodic: Vec<bool>) -> Result<Self> {
        let dim = breakpoints.len();
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if periodic.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: periodic.len(),
            });
        }
        for (direction, bp) in breakpoints.iter().enumerate() {
            if bp.windows(2).any(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite()) {
                return Err(Error::NonMonotoneBreakpoints { direction });
            }
            let cells = bp.len().saturating_sub(1);
            if cells < 3 {
                return Err(Error::TooFewElements { direction, cells });
            }
        }
        let sizes = breakpoints
            .iter()
            .map(|bp| bp.windows(2).map(|w| w[1] - w[0]).collect())
            .collect();
        let centers = breakpoints
            .iter()
            .map(|bp| bp.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
            .collect();
        Ok(Self {
            dim,
            breakpoints,
            periodic,
            sizes,
            centers,
        })
    }

    /// Uniform mesh of `cells[i]` elements on `[lo[i], hi[i]]` per direction.
    pub fn uniform(lo: &[f64], hi: &[f64], cells: &[usize], periodic: &[bool]) -> Result<Self> {
        let breakpoints = lo
            .iter()
            .zip(hi)
            .zip(cells)
            .map(|((&a, &b), &n)| {
                (0..=n)
                    .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
                    .collect()
            })
            .collect();
        Self::new(breakpoints, periodic.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, direction: usize) -> usize {
        self.sizes[direction].len()
    }

    pub fn num_elements(&self) -> usize {
        (0..self.dim).map(|i| self.cells(i)).product()
    }

    pub fn is_periodic(&self, direction: usize) -> bool {
        self.periodic[direction]
    }

    pub fn breakpoints(&self, direction: usize) -> &[f64] {
        &self.breakpoints[direction]
    }

    pub fn size(&self, direction: usize, index: usize) -> f64 {
        self.sizes[direction][index]
    }

    pub fn center(&self, direction: usize, index: usize) -> f64 {
        self.centers[direction][index]
    }

    pub fn lower(&self, direction: usize) -> f64 {
        self.breakpoints[direction][0]
    }

    pub fn upper(&self, direction: usize) -> f64 {
        *self.breakpoints[direction].last().unwrap()
    }

    pub fn length(&self, direction: usize) -> f64 {
        self.upper(direction) - self.lower(direction)
    }

    /// Domain measure `|Ω|`.
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|i| self.length(i)).product()
    }

    pub fn element(&self, linear: usize) -> Result<ElementId> {
        if linear >= self.num_elements() {
            return Err(Error::InvalidElement(linear));
        }
        let n1 = self.cells(0);
        let index = if self.dim == 1 {
            [linear, 0]
        } else {
            [linear % n1, linear / n1]
        };
        Ok(ElementId { index, linear })
    }

    pub fn linear_index(&self, index: [usize; 2]) -> usize {
        if self.dim == 1 {
            index[0]
        } else {
            index[0] + self.cells(0) * index[1]
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        (0..self.num_elements()).map(move |e| self.element(e).unwrap())
    }

    /// Element volume.
    pub fn volume(&self, element: &ElementId) -> f64 {
        (0..self.dim).map(|i| self.size(i, element.index[i])).product()
    }

    pub fn element_center(&self, element: &ElementId) -> Point {
        let mut c = [0.0; 2];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = self.center(i, element.index[i]);
        }
        c
    }

    /// Largest element length `h` over all directions.
    pub fn max_size(&self) -> f64 {
        self.sizes.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Smallest element length `ĥ` over all directions.
    pub fn min_size(&self) -> f64 {
        self.sizes.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// `h / ĥ`.
    pub fn regularity_ratio(&self) -> f64 {
        self.max_size() / self.min_size()
    }

    pub fn stencil_1d(&self, direction: usize, index: usize) -> Stencil1d {
        let n = self.cells(direction);
        let kind = if self.periodic[direction] || (index > 0 && index + 1 < n) {
            StencilKind::Center
        } else if index == 0 {
            StencilKind::Forward
        } else {
            StencilKind::Backward
        };
        let length = self.length(direction);
        let mut indices = [0; 3];
        let mut shifts = [0.0; 3];
        for (s, off) in kind.offsets().into_iter().enumerate() {
            let raw = index as isize + off;
            if raw < 0 {
                indices[s] = (raw + n as isize) as usize;
                shifts[s] = -length;
            } else if raw >= n as isize {
                indices[s] = (raw - n as isize) as usize;
                shifts[s] = length;
            } else {
                indices[s] = raw as usize;
            }
        }
        Stencil1d {
            kind,
            indices,
            shifts,
        }
    }

    pub fn stencil_of(&self, element: &ElementId) -> Stencil {
        let directions: Vec<Stencil1d> = (0..self.dim)
            .map(|i| self.stencil_1d(i, element.index[i]))
            .collect();
        let members = if self.dim == 1 {
            directions[0].indices.to_vec()
        } else {
            let mut m = Vec::with_capacity(9);
            for &j in &directions[1].indices {
                for &i in &directions[0].indices {
                    m.push(self.linear_index([i, j]));
                }
            }
            m
        };
        Stencil {
            owner: *element,
            members,
            directions,
        }
    }

    /// Element containing `x`. Points on an interior interface belong to the
    /// element on the positive side when `upper_side` is false, else to the
    /// one on the negative side.
    pub fn locate(&self, x: Point, upper_side: bool) -> Result<ElementId> {
        let mut index = [0usize; 2];
        for i in 0..self.dim {
            let bp = &self.breakpoints[i];
            let xi = x[i];
            if !(xi >= bp[0] && xi <= *bp.last().unwrap()) {
                return Err(Error::PointOutsideDomain { x: x[0], y: x[1] });
            }
            let n = self.cells(i);
            // first breakpoint strictly greater than xi (or >= on the upper side)
            let pos = if upper_side {
                bp.partition_point(|&b| b < xi)
            } else {
                bp.partition_point(|&b| b <= xi)
            };
            index[i] = pos.saturating_sub(1).min(n - 1);
        }
        let linear = self.linear_index(index);
        Ok(ElementId { index, linear })
    }

    /// Reference coordinate of `x` in `element`, per direction in `[-1, 1]`.
    pub fn to_reference(&self, element: &ElementId, x: Point) -> Point {
        let mut r = [0.0; 2];
        for (i, ri) in r.iter_mut().enumerate().take(self.dim) {
            let j = element.index[i];
            *ri = 2.0 * (x[i] - self.center(i, j)) / self.size(i, j);
        }
        r
    }

    pub fn from_reference(&self, element: &ElementId, r: Point) -> Point {
        let mut x = [0.0; 2];
        for (i, xi) in x.iter_mut().enumerate().take(self.dim) {
            let j = element.index[i];
            *xi = self.center(i, j) + 0.5 * self.size(i, j) * r[i];
        }
        x
    }

    /// Face neighbour across the lower (`upper = false`) or upper face in
    /// `direction`; `None` on a non-periodic boundary.
    pub fn neighbor(&self, element: &ElementId, direction: usize, upper: bool) -> Option<ElementId> {
        let n = self.cells(direction);
        let j = element.index[direction];
        let next = match (upper, j) {
            (false, 0) if self.periodic[direction] => n - 1,
            (false, 0) => return None,
            (false, _) => j - 1,
            (true, _) if j + 1 < n => j + 1,
            (true, _) if self.periodic[direction] => 0,
            (true, _) => return None,
        };
        let mut index = element.index;
        index[direction] = next;
        Some(ElementId {
            index,
            linear: self.linear_index(index),
        })
    }

    /// Element renumbering for sparse factorizations: periodic directions are
    /// folded (`0, N-1, 1, N-2, …`) so wrap-around couplings stay near the
    /// diagonal. Entry `e` is the new position of element `e`.
    pub fn banded_ordering(&self) -> Vec<usize> {
        let fold = |i: usize| -> Vec<usize> {
            let n = self.cells(i);
            (0..n)
                .map(|j| {
                    if !self.periodic[i] {
                        j
                    } else if 2 * j < n {
                        2 * j
                    } else {
                        2 * (n - 1 - j) + 1
                    }
                })
                .collect()
        };
        let f: Vec<Vec<usize>> = (0..self.dim).map(fold).collect();
        self.elements()
            .map(|e| {
                if self.dim == 1 {
                    f[0][e.index[0]]
                } else {
                    f[0][e.index[0]] + self.cells(0) * f[1][e.index[1]]
                }
            })
            .collect()
    }
}
