use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MAX_NODES_1D: usize = 2048;
pub const MAX_NODES_2D_SIDE: usize = 64;

/// Serializable description of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { length: f64, n: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
}

/// Interval `(0, L)` or rectangle `(0, Lx) x (0, Ly)` with a uniform grid of
/// interior nodes.
///
/// Nodes sit at `x_j = j h`, `h = L/(n+1)`, `j = 1..n`; the boundary nodes
/// `j = 0, n+1` carry the homogeneous Dirichlet value and are not stored.
/// Each interior node carries the weight `h` (resp. `hx hy`), i.e. the
/// trapezoid rule for functions vanishing on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    spec: DomainSpec,
    counts: [usize; 2],
    lengths: [f64; 2],
    h: [f64; 2],
}

impl Domain {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        let (counts, lengths) = match spec {
            DomainSpec::Interval { length, n } => {
                if !(length.is_finite() && length > 0.0) {
                    return Err(Error::Config(format!("interval length must be > 0, got {length}")));
                }
                if !(2..=MAX_NODES_1D).contains(&n) {
                    return Err(Error::Config(format!(
                        "interval needs 2 <= n <= {MAX_NODES_1D} nodes, got {n}"
                    )));
                }
                ([n, 1], [length, 1.0])
            }
            DomainSpec::Rectangle { lx, ly, nx, ny } => {
                if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
                    return Err(Error::Config(format!("rectangle sides must be > 0, got {lx} x {ly}")));
                }
                for n in [nx, ny] {
                    if !(2..=MAX_NODES_2D_SIDE).contains(&n) {
                        return Err(Error::Config(format!(
                            "rectangle needs 2 <= nx, ny <= {MAX_NODES_2D_SIDE}, got {nx} x {ny}"
                        )));
                    }
                }
                ([nx, ny], [lx, ly])
            }
        };
        let h = [
            lengths[0] / (counts[0] + 1) as f64,
            lengths[1] / (counts[1] + 1) as f64,
        ];
        Ok(Domain {
            spec,
            counts,
            lengths,
            h,
        })
    }

    pub fn interval(length: f64, n: usize) -> Result<Self> {
        Self::new(DomainSpec::Interval { length, n })
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(DomainSpec::Rectangle { lx, ly, nx, ny })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        match self.spec {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
        }
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node counts per axis (`ny = 1` for intervals).
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    /// Grid spacing per axis.
    pub fn spacing(&self) -> [f64; 2] {
        self.h
    }

    pub fn h_max(&self) -> f64 {
        if self.dim() == 1 {
            self.h[0]
        } else {
            self.h[0].max(self.h[1])
        }
    }

    /// Quadrature weight of every interior node.
    pub fn weight(&self) -> f64 {
        if self.dim() == 1 {
            self.h[0]
        } else {
            self.h[0] * self.h[1]
        }
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        if self.dim() == 1 {
            self.lengths[0]
        } else {
            self.lengths[0] * self.lengths[1]
        }
    }

    /// Axis indices `(ix, iy)` (zero-based) of node `i`; `x` runs fastest.
    pub fn index(&self, i: usize) -> (usize, usize) {
        (i % self.counts[0], i / self.counts[0])
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let (ix, iy) = self.index(i);
        let y = if self.dim() == 1 { 0.0 } else { (iy + 1) as f64 * self.h[1] };
        [(ix + 1) as f64 * self.h[0], y]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.point(i), self.point(j));
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Distance from node `i` to the boundary.
    pub fn boundary_distance(&self, i: usize) -> f64 {
        let p = self.point(i);
        let dx = p[0].min(self.lengths[0] - p[0]);
        if self.dim() == 1 {
            dx
        } else {
            dx.min(p[1].min(self.lengths[1] - p[1]))
        }
    }

    /// Number of grid cells between node `i` and the boundary, minus one:
    /// 0 for nodes adjacent to the boundary.
    pub fn boundary_layer(&self, i: usize) -> usize {
        let (ix, iy) = self.index(i);
        let lx = ix.min(self.counts[0] - 1 - ix);
        if self.dim() == 1 {
            lx
        } else {
            lx.min(iy.min(self.counts[1] - 1 - iy))
        }
    }

    /// Chebyshev index distance between nodes.
    pub fn index_distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.index(i), self.index(j));
        a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
    }

    /// Quadrature integral of a grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weight() * f.iter().sum::<f64>()
    }

    /// Weighted inner product `sum_i w f_i g_i`.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l1_norm(&self, f: &[f64]) -> f64 {
        self.weight() * f.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn boundary_weight(&self, gamma: f64) -> Result<BoundaryWeight> {
        BoundaryWeight::new(self, gamma)
    }
}

/// `phi(x) = dist(x, boundary)^gamma` sampled at the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryWeight {
    pub gamma: f64,
    pub values: Vec<f64>,
}

impl BoundaryWeight {
    pub fn new(domain: &Domain, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("boundary exponent gamma must lie in (0, 1], got {gamma}")));
        }
        let values = (0..domain.len())
            .map(|i| domain.boundary_distance(i).powf(gamma))
            .collect();
        Ok(BoundaryWeight { gamma, values })
    }

    /// `||f||_{L^1_phi}`.
    pub fn l1(&self, domain: &Domain, f: &[f64]) -> f64 {
        domain.weight() * f.iter().zip(&self.values).map(|(a, p)| a.abs() * p).sum::<f64>()
    }
}
