//! Spatial index over a masked voxel grid.
//!
//! A [`Lattice`] fixes the site ordering (lexicographic, x fastest), the
//! face-adjacency neighbor lists, the two-coloring used by the parallel
//! sweep, and the count of connected components (which sets the degrees of
//! freedom of the precision update). 2-D grids are depth-1 3-D grids; one
//! code path serves both.

use crate::error::{data_err, Result};

/// A boolean raster; `cells` is linear with x fastest, then y, then z.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub dims: [usize; 3],
    pub cells: Vec<bool>,
}

impl Mask {
    pub fn new(dims: [usize; 3], cells: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) {
            return data_err(format!("mask dims must be positive, got {dims:?}"));
        }
        if cells.len() != dims[0] * dims[1] * dims[2] {
            return data_err(format!(
                "mask payload has {} cells, dims {:?} need {}",
                cells.len(),
                dims,
                dims[0] * dims[1] * dims[2]
            ));
        }
        Ok(Mask { dims, cells })
    }

    /// All-true mask.
    pub fn full(dims: [usize; 3]) -> Self {
        Mask { dims, cells: vec![true; dims[0] * dims[1] * dims[2]] }
    }

    /// All-true 2-D mask (depth 1).
    pub fn full_2d(nx: usize, ny: usize) -> Self {
        Mask::full([nx, ny, 1])
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }
}

/// Immutable spatial index; safe to share across threads.
#[derive(Clone, Debug)]
pub struct Lattice {
    dims: [usize; 3],
    /// site -> linear cell index, ascending (lexicographic with x fastest)
    site_cell: Vec<u32>,
    /// linear cell index -> site, u32::MAX outside the mask
    cell_site: Vec<u32>,
    /// CSR neighbor lists
    nbr_offsets: Vec<u32>,
    nbr_data: Vec<u32>,
    /// parity of x+y+z per site
    color: Vec<bool>,
    components: usize,
}

const NO_SITE: u32 = u32::MAX;

impl Lattice {
    /// Build the full spatial index from a mask.
    pub fn from_mask(mask: &Mask) -> Result<Self> {
        let [nx, ny, nz] = mask.dims;
        let n_cells = nx * ny * nz;

        let mut site_cell = Vec::new();
        let mut cell_site = vec![NO_SITE; n_cells];
        for (cell, &inside) in mask.cells.iter().enumerate() {
            if inside {
                cell_site[cell] = site_cell.len() as u32;
                site_cell.push(cell as u32);
            }
        }
        if site_cell.is_empty() {
            return data_err("no in-mask sites");
        }

        let m = site_cell.len();
        let mut nbr_offsets = Vec::with_capacity(m + 1);
        let mut nbr_data = Vec::new();
        let mut color = Vec::with_capacity(m);
        nbr_offsets.push(0u32);
        for &cell in &site_cell {
            let cell = cell as usize;
            let x = cell % nx;
            let y = (cell / nx) % ny;
            let z = cell / (nx * ny);
            color.push((x + y + z) % 2 == 1);
            // Fixed face order keeps neighbor lists deterministic.
            let candidates = [
                (x.wrapping_sub(1), y, z),
                (x + 1, y, z),
                (x, y.wrapping_sub(1), z),
                (x, y + 1, z),
                (x, y, z.wrapping_sub(1)),
                (x, y, z + 1),
            ];
            for (cx, cy, cz) in candidates {
                if cx < nx && cy < ny && cz < nz {
                    let s = cell_site[(cz * ny + cy) * nx + cx];
                    if s != NO_SITE {
                        nbr_data.push(s);
                    }
                }
            }
            nbr_offsets.push(nbr_data.len() as u32);
        }

        let components = count_components(m, &nbr_offsets, &nbr_data);

        Ok(Lattice { dims: mask.dims, site_cell, cell_site, nbr_offsets, nbr_data, color, components })
    }

    /// Number of in-mask sites M.
    #[inline]
    pub fn num_sites(&self) -> usize {
        self.site_cell.len()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Face-adjacent in-mask neighbors of a site.
    #[inline]
    pub fn neighbors(&self, site: usize) -> &[u32] {
        &self.nbr_data[self.nbr_offsets[site] as usize..self.nbr_offsets[site + 1] as usize]
    }

    /// Neighbor count n(s_j).
    #[inline]
    pub fn degree(&self, site: usize) -> usize {
        (self.nbr_offsets[site + 1] - self.nbr_offsets[site]) as usize
    }

    /// Total number of unordered neighbor pairs (graph edges).
    pub fn num_edges(&self) -> usize {
        self.nbr_data.len() / 2
    }

    /// Number of face-connected components c.
    #[inline]
    pub fn num_components(&self) -> usize {
        self.components
    }

    /// Parity color of a site; neighbors always have opposite colors.
    #[inline]
    pub fn color(&self, site: usize) -> bool {
        self.color[site]
    }

    /// The two color classes `(A, B)`: disjoint, covering, and with no
    /// neighbor pair inside either class.
    pub fn color_partition(&self) -> (Vec<u32>, Vec<u32>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for site in 0..self.num_sites() {
            if self.color[site] {
                b.push(site as u32);
            } else {
                a.push(site as u32);
            }
        }
        (a, b)
    }

    /// Grid coordinates of a site.
    #[inline]
    pub fn coords(&self, site: usize) -> [usize; 3] {
        let cell = self.site_cell[site] as usize;
        let [nx, ny, _] = self.dims;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    /// Linear cell index of a site.
    #[inline]
    pub fn cell_of_site(&self, site: usize) -> usize {
        self.site_cell[site] as usize
    }

    /// Site at grid coordinates, if inside the mask.
    pub fn site_at(&self, x: usize, y: usize, z: usize) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        if x >= nx || y >= ny || z >= nz {
            return None;
        }
        match self.cell_site[(z * ny + y) * nx + x] {
            NO_SITE => None,
            s => Some(s as usize),
        }
    }

    /// Rasterize back to the defining mask (bit-exact round trip).
    pub fn to_mask(&self) -> Mask {
        let mut cells = vec![false; self.dims[0] * self.dims[1] * self.dims[2]];
        for &cell in &self.site_cell {
            cells[cell as usize] = true;
        }
        Mask { dims: self.dims, cells }
    }

    /// Scatter per-site values into a dense raster, `fill` elsewhere.
    pub fn scatter(&self, values: &[f64], fill: f64) -> Vec<f64> {
        assert_eq!(values.len(), self.num_sites());
        let mut out = vec![fill; self.dims[0] * self.dims[1] * self.dims[2]];
        for (site, &cell) in self.site_cell.iter().enumerate() {
            out[cell as usize] = values[site];
        }
        out
    }
}

fn count_components(m: usize, offsets: &[u32], data: &[u32]) -> usize {
    let mut seen = vec![false; m];
    let mut stack = Vec::new();
    let mut components = 0;
    for start in 0..m {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(site) = stack.pop() {
            for &nbr in &data[offsets[site] as usize..offsets[site + 1] as usize] {
                if !seen[nbr as usize] {
                    seen[nbr as usize] = true;
                    stack.push(nbr as usize);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_2x2() {
        let lat = Lattice::from_mask(&Mask::full_2d(2, 2)).unwrap();
        assert_eq!(lat.num_sites(), 4);
        for site in 0..4 {
            assert_eq!(lat.degree(site), 2);
        }
        assert_eq!(lat.num_components(), 1);
        // diagonal cells share a color
        assert_eq!(lat.color(0), lat.color(3));
        assert_eq!(lat.color(1), lat.color(2));
        assert_ne!(lat.color(0), lat.color(1));
        let (a, b) = lat.color_partition();
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn single_site() {
        let lat = Lattice::from_mask(&Mask::full_2d(1, 1)).unwrap();
        assert_eq!(lat.num_sites(), 1);
        assert_eq!(lat.degree(0), 0);
        assert_eq!(lat.num_components(), 1);
    }

    #[test]
    fn cube_2x2x2_has_degree_3_everywhere() {
        let lat = Lattice::from_mask(&Mask::full([2, 2, 2])).unwrap();
        assert_eq!(lat.num_sites(), 8);
        for site in 0..8 {
            assert_eq!(lat.degree(site), 3);
        }
    }

    #[test]
    fn row_of_three_alternates_colors() {
        let lat = Lattice::from_mask(&Mask::full_2d(3, 1)).unwrap();
        assert_eq!(lat.color(0), lat.color(2));
        assert_ne!(lat.color(0), lat.color(1));
    }

    #[test]
    fn empty_mask_is_rejected() {
        let mask = Mask::new([2, 2, 1], vec![false; 4]).unwrap();
        assert!(Lattice::from_mask(&mask).is_err());
    }

    #[test]
    fn disjoint_cells_count_components() {
        let mut cells = vec![false; 9];
        cells[0] = true;
        cells[8] = true;
        let lat = Lattice::from_mask(&Mask::new([3, 3, 1], cells).unwrap()).unwrap();
        assert_eq!(lat.num_components(), 2);
    }

    #[test]
    fn checkerboard_mask_is_all_isolated() {
        let nx = 4;
        let ny = 4;
        let mut cells = vec![false; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                if (x + y) % 2 == 0 {
                    cells[y * nx + x] = true;
                }
            }
        }
        let lat = Lattice::from_mask(&Mask::new([nx, ny, 1], cells).unwrap()).unwrap();
        assert_eq!(lat.num_sites(), 8);
        assert_eq!(lat.num_components(), 8);
        for site in 0..8 {
            assert_eq!(lat.degree(site), 0);
        }
    }

    #[test]
    fn full_100x100_partition_is_balanced_and_valid() {
        let lat = Lattice::from_mask(&Mask::full_2d(100, 100)).unwrap();
        let (a, b) = lat.color_partition();
        assert_eq!(a.len(), 5000);
        assert_eq!(b.len(), 5000);
        // exhaustive adjacency scan: neighbors never share a color
        for site in 0..lat.num_sites() {
            for &nbr in lat.neighbors(site) {
                assert_ne!(lat.color(site), lat.color(nbr as usize));
            }
        }
    }

    #[test]
    fn sites_are_lexicographic_with_x_fastest() {
        let lat = Lattice::from_mask(&Mask::full([3, 2, 2])).unwrap();
        let mut prev = None;
        for site in 0..lat.num_sites() {
            let [x, y, z] = lat.coords(site);
            let key = (z, y, x);
            if let Some(p) = prev {
                assert!(key > p, "ordering violated at site {site}");
            }
            prev = Some(key);
        }
        assert_eq!(lat.coords(0), [0, 0, 0]);
        assert_eq!(lat.coords(1), [1, 0, 0]);
        assert_eq!(lat.coords(3), [0, 1, 0]);
    }
}
