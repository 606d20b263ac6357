//! One-dimensional finite-element primitives shared by the micro, macro and
//! single-scale solvers: meshes, two-node linear elements with two-point
//! Gauss quadrature, and additive assembly through DOF maps.

use serde::{Deserialize, Serialize};

use crate::error::{Fe2Error, Result};

/// Gauss points of the two-point rule on the reference interval [-1, 1].
pub const GAUSS_POINTS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
pub const GAUSS_WEIGHTS: [f64; 2] = [1.0, 1.0];

/// Index of the soft, light phase.
pub const SOFT: usize = 0;
/// Index of the stiff, heavy phase.
pub const STIFF: usize = 1;

/// Framing of the periodic two-phase laminate inside one unit cell of
/// length `2 l_M`.
///
/// * `A`: `[soft | stiff]`
/// * `B`: `[stiff/2 | soft | stiff/2]`, the half-period shift of `A`
///
/// Both are admissible unit cells of the same laminate; only the mass
/// distribution about the cell center differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitCell {
    A,
    B,
}

impl UnitCell {
    /// Phase at position `p` measured from the left edge of a unit cell.
    pub fn phase_at(self, p: f64, layer: f64) -> usize {
        let p = p.rem_euclid(2.0 * layer);
        match self {
            UnitCell::A => {
                if p < layer {
                    SOFT
                } else {
                    STIFF
                }
            }
            UnitCell::B => {
                if (0.5 * layer..1.5 * layer).contains(&p) {
                    SOFT
                } else {
                    STIFF
                }
            }
        }
    }
}

impl std::fmt::Display for UnitCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnitCell::A => f.write_str("A"),
            UnitCell::B => f.write_str("B"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    pub node_coords: Vec<f64>,
    pub elements: Vec<[usize; 2]>,
    pub phase_of_element: Vec<usize>,
}

impl Mesh1D {
    /// Uniform mesh of `n_elements` over `[start, start + length]`, phases
    /// assigned by evaluating `phase` at each element midpoint.
    pub fn uniform(
        start: f64,
        length: f64,
        n_elements: usize,
        phase: impl Fn(f64) -> usize,
    ) -> Result<Self> {
        if !(length > 0.0) || n_elements == 0 {
            return Err(Fe2Error::config(format!(
                "mesh needs positive length and element count (length {length}, {n_elements} elements)"
            )));
        }
        let h = length / n_elements as f64;
        let node_coords: Vec<f64> = (0..=n_elements).map(|i| start + h * i as f64).collect();
        let elements: Vec<[usize; 2]> = (0..n_elements).map(|e| [e, e + 1]).collect();
        let phase_of_element = (0..n_elements)
            .map(|e| phase(h * (e as f64 + 0.5)))
            .collect();
        Ok(Mesh1D {
            node_coords,
            elements,
            phase_of_element,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_length(&self, e: usize) -> f64 {
        let [a, b] = self.elements[e];
        self.node_coords[b] - self.node_coords[a]
    }

    pub fn length(&self) -> f64 {
        self.node_coords[self.n_nodes() - 1] - self.node_coords[0]
    }

    pub fn basis(&self, e: usize) -> ElementBasis {
        let [a, _] = self.elements[e];
        ElementBasis::new(self.node_coords[a], self.element_length(e))
    }

    /// `sum_e ∫ X dV` by element quadrature.
    pub fn first_moment(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let basis = self.basis(e);
                (0..2).map(|q| basis.x[q] * basis.dv(q)).sum::<f64>()
            })
            .sum()
    }

    /// Shifts all coordinates so that the volume centroid sits at the origin.
    pub fn center(&mut self) {
        let shift = 0.5 * (self.node_coords[0] + self.node_coords[self.n_nodes() - 1]);
        for x in &mut self.node_coords {
            *x -= shift;
        }
    }

    /// Checks ordering and positive element lengths.
    pub fn validate(&self) -> Result<()> {
        if self.phase_of_element.len() != self.elements.len() {
            return Err(Fe2Error::Internal("phase list length mismatch".into()));
        }
        for (e, &[a, b]) in self.elements.iter().enumerate() {
            if b != a + 1 || b >= self.n_nodes() {
                return Err(Fe2Error::Internal(format!(
                    "element {e} does not join adjacent nodes"
                )));
            }
            if !(self.element_length(e) > 0.0) {
                return Err(Fe2Error::Internal(format!("element {e} has no length")));
            }
        }
        Ok(())
    }
}

/// Number of elements per phase layer for a target element length.
///
/// Rounds `l_m / l_e` to the nearest integer; `even` bumps odd counts up by
/// one so that half layers still fall on element boundaries.
pub fn elements_per_layer(l_m: f64, l_e: f64, even: bool) -> Result<usize> {
    if !(l_m > 0.0) || !(l_e > 0.0) {
        return Err(Fe2Error::config(format!(
            "layer and element lengths must be positive (l_M = {l_m}, l_E = {l_e})"
        )));
    }
    let mut m = ((l_m / l_e).round() as usize).max(1);
    if even && m % 2 == 1 {
        m += 1;
    }
    Ok(m)
}

/// RVE mesh of `n_cells` unit cells, each of length `2 l_M`, centered on the
/// origin so that `∫ X dV = 0`.
pub fn build_rve_mesh(cell: UnitCell, n_cells: usize, l_m: f64, l_e: f64) -> Result<Mesh1D> {
    if n_cells == 0 {
        return Err(Fe2Error::config("RVE needs at least one unit cell"));
    }
    let m = elements_per_layer(l_m, l_e, cell == UnitCell::B)?;
    let length = 2.0 * l_m * n_cells as f64;
    let mut mesh = Mesh1D::uniform(0.0, length, 2 * m * n_cells, |p| cell.phase_at(p, l_m))?;
    mesh.center();
    Ok(mesh)
}

/// Full laminated bar over `[0, length]`, soft layer first.
pub fn build_bar_mesh(length: f64, l_m: f64, l_e: f64) -> Result<Mesh1D> {
    if !(l_m > 0.0) || !(l_e > 0.0) {
        return Err(Fe2Error::config("layer and element lengths must be positive"));
    }
    let n = ((length / l_e).round() as usize).max(1);
    Mesh1D::uniform(0.0, length, n, |p| UnitCell::A.phase_at(p, l_m))
}

/// Quadrature data of one linear two-node element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementBasis {
    pub shape_values: [[f64; 2]; 2],
    pub shape_gradients: [[f64; 2]; 2],
    pub gauss_weights: [f64; 2],
    pub jacobian: f64,
    /// Reference coordinate of each Gauss point.
    pub x: [f64; 2],
}

impl ElementBasis {
    pub fn new(x0: f64, length: f64) -> Self {
        let jacobian = 0.5 * length;
        let mut shape_values = [[0.0; 2]; 2];
        let mut shape_gradients = [[0.0; 2]; 2];
        let mut x = [0.0; 2];
        for (q, &xi) in GAUSS_POINTS.iter().enumerate() {
            shape_values[q] = [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)];
            shape_gradients[q] = [-1.0 / length, 1.0 / length];
            x[q] = x0 + jacobian * (1.0 + xi);
        }
        ElementBasis {
            shape_values,
            shape_gradients,
            gauss_weights: GAUSS_WEIGHTS,
            jacobian,
            x,
        }
    }

    /// Integration weight `w_q |J|` of Gauss point `q`.
    #[inline]
    pub fn dv(&self, q: usize) -> f64 {
        self.gauss_weights[q] * self.jacobian
    }

    #[inline]
    pub fn interpolate(&self, q: usize, nodal: [f64; 2]) -> f64 {
        self.shape_values[q][0] * nodal[0] + self.shape_values[q][1] * nodal[1]
    }

    #[inline]
    pub fn gradient(&self, q: usize, nodal: [f64; 2]) -> f64 {
        self.shape_gradients[q][0] * nodal[0] + self.shape_gradients[q][1] * nodal[1]
    }
}

/// Map from element-local DOF to a global equation, `None` for eliminated DOFs.
pub type DofMap = [Option<usize>; 2];

/// Anything element matrices can be scattered into.
pub trait MatrixSink {
    fn dim(&self) -> usize;
    fn add(&mut self, row: usize, col: usize, value: f64);
}

impl MatrixSink for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn add(&mut self, row: usize, col: usize, value: f64) {
        self[(row, col)] += value;
    }
}

/// Scatters an element vector into `global`.
pub fn assemble_vector(global: &mut [f64], dofs: &DofMap, local: &[f64; 2]) -> Result<()> {
    for (a, dof) in dofs.iter().enumerate() {
        if let Some(i) = *dof {
            let n = global.len();
            let slot = global
                .get_mut(i)
                .ok_or_else(|| Fe2Error::Internal(format!("dof {i} out of range ({n})")))?;
            *slot += local[a];
        }
    }
    Ok(())
}

/// Scatters an element matrix into `global`.
pub fn assemble_matrix<M: MatrixSink + ?Sized>(
    global: &mut M,
    dofs: &DofMap,
    local: &[[f64; 2]; 2],
) -> Result<()> {
    let n = global.dim();
    for (a, row) in dofs.iter().enumerate() {
        let Some(i) = *row else { continue };
        for (b, col) in dofs.iter().enumerate() {
            let Some(j) = *col else { continue };
            if i >= n || j >= n {
                return Err(Fe2Error::Internal(format!(
                    "entry ({i}, {j}) out of range ({n})"
                )));
            }
            global.add(i, j, local[a][b]);
        }
    }
    Ok(())
}

/// Assembles a list of element vectors into a fresh global vector.
pub fn assemble(global_size: usize, contributions: &[(DofMap, [f64; 2])]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; global_size];
    for (dofs, local) in contributions {
        assemble_vector(&mut out, dofs, local)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let mesh = build_rve_mesh(UnitCell::B, 3, 2.5, 0.25).unwrap();
        for e in 0..mesh.n_elements() {
            let b = mesh.basis(e);
            for q in 0..2 {
                assert_relative_eq!(b.shape_values[q][0] + b.shape_values[q][1], 1.0);
                assert!((b.shape_gradients[q][0] + b.shape_gradients[q][1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn integral_of_shape_functions_is_half_length() {
        let b = ElementBasis::new(0.3, 0.5);
        for a in 0..2 {
            let int: f64 = (0..2).map(|q| b.shape_values[q][a] * b.dv(q)).sum();
            assert_relative_eq!(int, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn rve_type_a_layout() {
        let mesh = build_rve_mesh(UnitCell::A, 1, 10.0, 0.5).unwrap();
        assert_relative_eq!(mesh.length(), 20.0, epsilon = 1e-12);
        assert_eq!(mesh.n_elements(), 40);
        assert!(mesh.phase_of_element[..20].iter().all(|&p| p == SOFT));
        assert!(mesh.phase_of_element[20..].iter().all(|&p| p == STIFF));
    }

    #[test]
    fn three_cell_rve_is_centered() {
        let mesh = build_rve_mesh(UnitCell::A, 3, 2.5, 0.25).unwrap();
        assert_relative_eq!(mesh.length(), 15.0, epsilon = 1e-12);
        assert!(mesh.first_moment().abs() <= 1e-12 * mesh.length());
        mesh.validate().unwrap();
    }

    #[test]
    fn type_b_layout() {
        let mesh = build_rve_mesh(UnitCell::B, 1, 10.0, 0.5).unwrap();
        let p = &mesh.phase_of_element;
        assert!(p[..10].iter().all(|&x| x == STIFF));
        assert!(p[10..30].iter().all(|&x| x == SOFT));
        assert!(p[30..].iter().all(|&x| x == STIFF));
    }

    #[test]
    fn type_b_rounds_to_even_layer_count() {
        let mesh = build_rve_mesh(UnitCell::B, 1, 10.0, 10.0 / 3.0).unwrap();
        assert_eq!(mesh.n_elements(), 8);
    }

    #[test]
    fn non_positive_lengths_are_rejected() {
        assert!(build_rve_mesh(UnitCell::A, 1, 0.0, 0.5).is_err());
        assert!(build_rve_mesh(UnitCell::A, 1, 10.0, -1.0).is_err());
        assert!(build_rve_mesh(UnitCell::A, 0, 10.0, 0.5).is_err());
    }

    #[test]
    fn shared_node_accumulates() {
        let out = assemble(
            3,
            &[
                ([Some(0), Some(1)], [1.0, 1.0]),
                ([Some(1), Some(2)], [1.0, 1.0]),
            ],
        )
        .unwrap();
        assert_eq!(out, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn identity_map_single_element() {
        let out = assemble(2, &[([Some(0), Some(1)], [0.3, -0.7])]).unwrap();
        assert_eq!(out, vec![0.3, -0.7]);
    }

    #[test]
    fn out_of_range_dof_is_an_error() {
        assert!(assemble(2, &[([Some(1), Some(2)], [1.0, 1.0])]).is_err());
        let mut m = nalgebra::DMatrix::<f64>::zeros(2, 2);
        assert!(assemble_matrix(&mut m, &[Some(1), Some(2)], &[[1.0; 2]; 2]).is_err());
    }

    #[test]
    fn homogeneous_stiffness_has_single_rigid_mode() {
        let mesh = Mesh1D::uniform(0.0, 4.0, 4, |_| 0).unwrap();
        let mut k = nalgebra::DMatrix::<f64>::zeros(5, 5);
        for e in 0..4 {
            let b = mesh.basis(e);
            let mut ke = [[0.0; 2]; 2];
            for q in 0..2 {
                for a in 0..2 {
                    for c in 0..2 {
                        ke[a][c] += b.shape_gradients[q][a] * b.shape_gradients[q][c] * b.dv(q);
                    }
                }
            }
            assemble_matrix(&mut k, &[Some(e), Some(e + 1)], &ke).unwrap();
        }
        assert_relative_eq!(k.clone(), k.transpose(), epsilon = 1e-14);
        let eig = k.clone().symmetric_eigen();
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-12).count();
        assert_eq!(zeros, 1);
        let ones = nalgebra::DVector::from_element(5, 1.0);
        assert!((&k * ones).norm() < 1e-14);
    }
}
