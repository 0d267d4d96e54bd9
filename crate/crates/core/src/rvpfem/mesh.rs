//! Structured quad meshes for the quarter-symmetric forging model.

use alloc::vec::Vec;

use super::FemError;

/// 2×2 Gauss abscissa.
pub(crate) const GP: f64 = 0.577_350_269_189_625_8;

/// Integration points for the deviatoric term; the dilatation term uses a
/// single point at the element center (reduced integration).
pub(crate) const GAUSS_2X2: [[f64; 2]; 4] = [[-GP, -GP], [GP, -GP], [GP, GP], [-GP, GP]];

/// A die-contact element edge on the top face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactEdge {
    /// The two boundary nodes, ordered along +x.
    pub nodes: [usize; 2],
    /// The element owning this edge (used to sample the local flow stress).
    pub element: usize,
}

/// Connectivity, initial coordinates and the boundary decomposition of the
/// quarter model. The boundary splits into disjoint edge sets: symmetry
/// (x = 0 and y = 0), free (lateral face), and die contact (top face).
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Initial nodal coordinates in mm.
    pub nodes: Vec<[f64; 2]>,
    /// Quads as 4 node indices, counter-clockwise.
    pub elems: Vec<[usize; 4]>,
    /// Nodes on the x = 0 symmetry plane (v_x prescribed 0).
    pub sym_x_nodes: Vec<usize>,
    /// Nodes on the y = 0 symmetry plane (v_y prescribed 0).
    pub sym_y_nodes: Vec<usize>,
    /// Nodes on the die face (v_y prescribed to the die speed).
    pub contact_nodes: Vec<usize>,
    pub contact_edges: Vec<ContactEdge>,
    pub sym_x_edges: Vec<[usize; 2]>,
    pub sym_y_edges: Vec<[usize; 2]>,
    pub free_edges: Vec<[usize; 2]>,
    pub nx: usize,
    pub ny: usize,
}

impl Mesh {
    /// Structured nx×ny grid on `[0, width] × [0, height]`, node (i, j) at
    /// index `j·(nx+1)+i`.
    pub fn rect_grid(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh, FemError> {
        if nx == 0 || ny == 0 || width <= 0.0 || height <= 0.0 {
            return Err(FemError::InvalidConfig(alloc::format!(
                "mesh needs positive divisions and dimensions, got {nx}x{ny} on {width}x{height}"
            )));
        }
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
            }
        }
        let mut elems = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elems.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let sym_x_nodes = (0..=ny).map(|j| idx(0, j)).collect();
        let sym_y_nodes = (0..=nx).map(|i| idx(i, 0)).collect();
        let contact_nodes = (0..=nx).map(|i| idx(i, ny)).collect();
        let contact_edges = (0..nx)
            .map(|i| ContactEdge {
                nodes: [idx(i, ny), idx(i + 1, ny)],
                element: (ny - 1) * nx + i,
            })
            .collect();
        let sym_x_edges = (0..ny).map(|j| [idx(0, j), idx(0, j + 1)]).collect();
        let sym_y_edges = (0..nx).map(|i| [idx(i, 0), idx(i + 1, 0)]).collect();
        let free_edges = (0..ny).map(|j| [idx(nx, j), idx(nx, j + 1)]).collect();
        Ok(Mesh {
            nodes,
            elems,
            sym_x_nodes,
            sym_y_nodes,
            contact_nodes,
            contact_edges,
            sym_x_edges,
            sym_y_edges,
            free_edges,
            nx,
            ny,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    /// Positive Jacobian determinant at every Gauss point and at the center
    /// of every element, for the given nodal coordinates.
    pub fn validate_geometry(&self, coords: &[[f64; 2]]) -> Result<(), FemError> {
        for (e, elem) in self.elems.iter().enumerate() {
            let c = gather_coords(coords, elem);
            for &[xi, eta] in GAUSS_2X2.iter().chain([[0.0, 0.0]].iter()) {
                let det = jacobian_det(&c, xi, eta);
                if det <= 0.0 {
                    return Err(FemError::DegenerateElement { element: e, det });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn gather_coords(coords: &[[f64; 2]], elem: &[usize; 4]) -> [[f64; 2]; 4] {
    [
        coords[elem[0]],
        coords[elem[1]],
        coords[elem[2]],
        coords[elem[3]],
    ]
}

/// Parent-domain shape function derivatives of the bilinear quad.
#[inline]
fn parent_grads(xi: f64, eta: f64) -> ([f64; 4], [f64; 4]) {
    let xs = [-1.0, 1.0, 1.0, -1.0];
    let es = [-1.0, -1.0, 1.0, 1.0];
    let mut dxi = [0.0; 4];
    let mut deta = [0.0; 4];
    for i in 0..4 {
        dxi[i] = 0.25 * xs[i] * (1.0 + es[i] * eta);
        deta[i] = 0.25 * es[i] * (1.0 + xs[i] * xi);
    }
    (dxi, deta)
}

fn jacobian_det(c: &[[f64; 2]; 4], xi: f64, eta: f64) -> f64 {
    let (dxi, deta) = parent_grads(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for i in 0..4 {
        j[0][0] += dxi[i] * c[i][0];
        j[0][1] += dxi[i] * c[i][1];
        j[1][0] += deta[i] * c[i][0];
        j[1][1] += deta[i] * c[i][1];
    }
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Physical shape function gradients (dN/dx, dN/dy) and det J.
pub(crate) fn shape_gradients(
    c: &[[f64; 2]; 4],
    xi: f64,
    eta: f64,
) -> Result<([f64; 4], [f64; 4], f64), f64> {
    let (dxi, deta) = parent_grads(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for i in 0..4 {
        j[0][0] += dxi[i] * c[i][0];
        j[0][1] += dxi[i] * c[i][1];
        j[1][0] += deta[i] * c[i][0];
        j[1][1] += deta[i] * c[i][1];
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det <= 0.0 {
        return Err(det);
    }
    let inv = 1.0 / det;
    let mut dndx = [0.0; 4];
    let mut dndy = [0.0; 4];
    for i in 0..4 {
        dndx[i] = inv * (j[1][1] * dxi[i] - j[0][1] * deta[i]);
        dndy[i] = inv * (-j[1][0] * dxi[i] + j[0][0] * deta[i]);
    }
    Ok((dndx, dndy, det))
}

/// Bilinear shape functions, used by the thermal matrices.
#[inline]
pub(crate) fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}
