//! Regular 1D/2D/3D lattices with nearest-neighbor adjacency.
//!
//! Voxels are numbered with the first axis running fastest. With `k`
//! variables per voxel, variable `a` of voxel `v` has index `v * k + a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dims: Vec<usize>,
    k: usize,
}

impl Lattice {
    pub fn new(dims: &[usize], k: usize) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "lattice must have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) || k == 0 {
            return Err(Error::InvalidParameter("lattice extents and K must be positive".into()));
        }
        Ok(Self { dims: dims.to_vec(), k })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Variables per voxel.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_vars(&self) -> usize {
        self.n_voxels() * self.k
    }

    pub fn coords(&self, voxel: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rest = voxel;
        for (a, &d) in self.dims.iter().enumerate() {
            c[a] = rest % d;
            rest /= d;
        }
        c
    }

    pub fn voxel(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dims.len()).rev() {
            idx = idx * self.dims[a] + coords[a];
        }
        idx
    }

    /// Stencil neighbors (2·d-point), boundary-clipped, in axis order with
    /// the lower neighbor first.
    pub fn neighbors(&self, voxel: usize) -> Vec<usize> {
        let c = self.coords(voxel);
        let mut out = Vec::with_capacity(2 * self.dims.len());
        let mut stride = 1;
        for (a, &d) in self.dims.iter().enumerate() {
            if c[a] > 0 {
                out.push(voxel - stride);
            }
            if c[a] + 1 < d {
                out.push(voxel + stride);
            }
            stride *= d;
        }
        out
    }

    /// Adjacent voxel pairs `(i, j)` with `i < j`, ordered by axis then by `i`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stride = 1;
        for (a, &d) in self.dims.iter().enumerate() {
            for v in 0..self.n_voxels() {
                if self.coords(v)[a] + 1 < d {
                    out.push((v, v + stride));
                }
            }
            stride *= d;
        }
        out
    }

    /// All variable indices belonging to `voxel`.
    pub fn vars_of(&self, voxel: usize) -> std::ops::Range<usize> {
        voxel * self.k..(voxel + 1) * self.k
    }

    pub fn voxel_of_var(&self, var: usize) -> usize {
        var / self.k
    }
}

/// Free-function form of [`Lattice::neighbors`] for single-variable lattices.
pub fn lattice_neighbors(dims: &[usize], node: usize) -> Result<Vec<usize>> {
    let lat = Lattice::new(dims, 1)?;
    if node >= lat.n_voxels() {
        return Err(Error::IndexOutOfRange { row: node, col: 0, n: lat.n_voxels() });
    }
    Ok(lat.neighbors(node))
}
