//! Hypercubic lattices and their partition into congruent rectangular clusters.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::lattice_points;

/// Largest number of sites per cluster; pair blocks have dimension `4^L`.
pub const MAX_CLUSTER_SITES: usize = 6;

/// A `d`-dimensional hypercubic lattice with nearest-neighbour bonds.
///
/// Sites are numbered row-major over `dims`, so `"20x1"` is a chain whose
/// site `i` sits at coordinates `(i, 0)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    dims: Vec<usize>,
    periodic: bool,
}

impl Lattice {
    pub fn new(dims: Vec<usize>, periodic: bool) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "lattice extents must be positive, got {dims:?}"
            )));
        }
        Ok(Self { dims, periodic })
    }

    pub fn periodic(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), true)
    }

    pub fn open(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), false)
    }

    /// Parses extents written as `"20x1"` or `"4x4"`.
    pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
        let dims = s
            .trim()
            .split(['x', 'X', '×'])
            .map(|part| part.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidConfig(format!("cannot parse dimensions {s:?}")))?;
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "cannot parse dimensions {s:?}"
            )));
        }
        Ok(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn n_sites(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        let mut c = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            c[axis] = rest % self.dims[axis];
            rest /= self.dims[axis];
        }
        c
    }

    pub fn site_at(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| acc * d + c % d)
    }

    /// Nearest-neighbour bonds as sorted unordered pairs `(i, j)`, `i < j`.
    /// A wrap-around bond that duplicates a direct one is kept once.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for site in 0..self.n_sites() {
            let c = self.coords(site);
            for axis in 0..self.dims.len() {
                let extent = self.dims[axis];
                if extent == 1 {
                    continue;
                }
                if c[axis] + 1 == extent && !self.periodic {
                    continue;
                }
                let mut n = c.clone();
                n[axis] = (c[axis] + 1) % extent;
                let other = self.site_at(&n);
                if other != site {
                    set.insert((site.min(other), site.max(other)));
                }
            }
        }
        set.into_iter().collect()
    }

    /// Euclidean distance, minimum-image along periodic axes.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let mut sq = 0.0;
        for axis in 0..self.dims.len() {
            let mut d = ca[axis].abs_diff(cb[axis]);
            if self.periodic {
                d = d.min(self.dims[axis] - d);
            }
            sq += (d * d) as f64;
        }
        sq.sqrt()
    }
}

/// Partition of a lattice into translated copies of one rectangular block.
///
/// Clusters are numbered row-major over the cluster grid (`dims / shape`),
/// cluster 0 sitting at the origin. Inside a cluster, sites are listed
/// row-major over the block; that order fixes the Kronecker factor order of
/// the cluster space (first site most significant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDecomposition {
    lattice: Lattice,
    shape: Vec<usize>,
    grid: Vec<usize>,
    clusters: Vec<Vec<usize>>,
    owner: Vec<(usize, usize)>,
}

impl ClusterDecomposition {
    pub fn new(lattice: &Lattice, shape: &[usize]) -> Result<Self> {
        let dims = lattice.dims();
        if shape.len() != dims.len() {
            return Err(Error::InvalidConfig(format!(
                "cluster shape {shape:?} has a different rank than lattice {dims:?}"
            )));
        }
        if shape.iter().zip(dims).any(|(&s, &d)| s == 0 || d % s != 0) {
            return Err(Error::InvalidConfig(format!(
                "cluster shape {shape:?} does not divide lattice {dims:?}"
            )));
        }
        let sites_per: usize = shape.iter().product();
        if sites_per > MAX_CLUSTER_SITES {
            return Err(Error::InvalidConfig(format!(
                "clusters of {sites_per} sites exceed the supported {MAX_CLUSTER_SITES}"
            )));
        }
        let grid: Vec<usize> = dims.iter().zip(shape).map(|(&d, &s)| d / s).collect();
        let offsets = lattice_points(shape);
        let mut owner = vec![(0, 0); lattice.n_sites()];
        let clusters: Vec<Vec<usize>> = lattice_points(&grid)
            .iter()
            .enumerate()
            .map(|(gamma, g)| {
                offsets
                    .iter()
                    .enumerate()
                    .map(|(pos, off)| {
                        let c: Vec<usize> = g
                            .iter()
                            .zip(off)
                            .zip(shape)
                            .map(|((&gi, &oi), &s)| gi * s + oi)
                            .collect();
                        let site = lattice.site_at(&c);
                        owner[site] = (gamma, pos);
                        site
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            lattice: lattice.clone(),
            shape: shape.to_vec(),
            grid,
            clusters,
            owner,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Extents of the cluster lattice.
    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn sites_per_cluster(&self) -> usize {
        self.shape.iter().product()
    }

    /// `m = 2^L` for two-level sites.
    pub fn local_dim(&self) -> usize {
        1 << self.sites_per_cluster()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn sites(&self, gamma: usize) -> &[usize] {
        &self.clusters[gamma]
    }

    /// `(cluster, position inside the cluster)` of a lattice site.
    pub fn owner(&self, site: usize) -> (usize, usize) {
        self.owner[site]
    }

    pub fn cluster_coords(&self, gamma: usize) -> Vec<usize> {
        let mut rest = gamma;
        let mut c = vec![0; self.grid.len()];
        for axis in (0..self.grid.len()).rev() {
            c[axis] = rest % self.grid[axis];
            rest /= self.grid[axis];
        }
        c
    }

    pub fn cluster_at(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.grid)
            .fold(0, |acc, (&c, &g)| acc * g + c % g)
    }

    /// Cluster index of the displacement `δ − γ` on the cluster torus.
    pub fn displacement(&self, gamma: usize, delta: usize) -> usize {
        let (a, b) = (self.cluster_coords(gamma), self.cluster_coords(delta));
        let d: Vec<usize> = a
            .iter()
            .zip(&b)
            .zip(&self.grid)
            .map(|((&x, &y), &g)| (y + g - x) % g)
            .collect();
        self.cluster_at(&d)
    }

    /// Cluster reached from `gamma` by the displacement `disp` (itself a cluster index).
    pub fn translate(&self, gamma: usize, disp: usize) -> usize {
        let (a, d) = (self.cluster_coords(gamma), self.cluster_coords(disp));
        let c: Vec<usize> = a.iter().zip(&d).map(|(&x, &y)| x + y).collect();
        self.cluster_at(&c)
    }

    /// Cluster index of `-disp`.
    pub fn negate(&self, disp: usize) -> usize {
        self.displacement(disp, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dimension_strings() {
        assert_eq!(Lattice::parse_dims("20x1").unwrap(), vec![20, 1]);
        assert_eq!(Lattice::parse_dims(" 4X4 ").unwrap(), vec![4, 4]);
        assert!(Lattice::parse_dims("4x").is_err());
        assert!(Lattice::parse_dims("0x1").is_err());
    }

    #[test]
    fn ring_bonds() {
        let l = Lattice::periodic(&[4, 1]).unwrap();
        assert_eq!(l.bonds(), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        let open = Lattice::open(&[4, 1]).unwrap();
        assert_eq!(open.bonds(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn two_site_ring_has_a_single_bond() {
        let l = Lattice::periodic(&[2, 1]).unwrap();
        assert_eq!(l.bonds(), vec![(0, 1)]);
    }

    #[test]
    fn square_lattice_bond_count() {
        let l = Lattice::periodic(&[4, 4]).unwrap();
        assert_eq!(l.bonds().len(), 32);
        let l = Lattice::periodic(&[3, 5]).unwrap();
        assert_eq!(l.bonds().len(), 30);
    }

    #[test]
    fn minimum_image_distance() {
        let l = Lattice::periodic(&[8, 1]).unwrap();
        assert_eq!(l.distance(0, 7), 1.0);
        assert_eq!(l.distance(1, 5), 4.0);
        let sq = Lattice::periodic(&[4, 4]).unwrap();
        assert!((sq.distance(0, sq.site_at(&[3, 3])) - 2f64.sqrt()).abs() < 1e-15);
        let open = Lattice::open(&[8, 1]).unwrap();
        assert_eq!(open.distance(0, 7), 7.0);
    }

    #[test]
    fn chain_clusters_are_contiguous() {
        let l = Lattice::periodic(&[8, 1]).unwrap();
        let c = ClusterDecomposition::new(&l, &[2, 1]).unwrap();
        assert_eq!(c.n_clusters(), 4);
        assert_eq!(c.clusters()[1], vec![2, 3]);
        assert_eq!(c.owner(5), (2, 1));
        assert_eq!(c.local_dim(), 4);
        assert_eq!(c.grid(), &[4, 1]);
    }

    #[test]
    fn square_clusters_cover_the_lattice() {
        let l = Lattice::periodic(&[4, 4]).unwrap();
        let c = ClusterDecomposition::new(&l, &[2, 2]).unwrap();
        assert_eq!(c.n_clusters(), 4);
        assert_eq!(c.sites(0), &[0, 1, 4, 5]);
        let mut all: Vec<usize> = c.clusters().concat();
        all.sort();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn shape_must_divide() {
        let l = Lattice::periodic(&[6, 1]).unwrap();
        assert!(matches!(
            ClusterDecomposition::new(&l, &[4, 1]),
            Err(Error::InvalidConfig(_))
        ));
        assert!(ClusterDecomposition::new(&l, &[2]).is_err());
    }

    #[test]
    fn displacement_arithmetic() {
        let l = Lattice::periodic(&[4, 6]).unwrap();
        let c = ClusterDecomposition::new(&l, &[1, 2]).unwrap();
        for g in 0..c.n_clusters() {
            for d in 0..c.n_clusters() {
                let disp = c.displacement(g, d);
                assert_eq!(c.translate(g, disp), d);
                assert_eq!(c.translate(d, c.negate(disp)), g);
            }
        }
    }
}
