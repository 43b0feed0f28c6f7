//! Agent configurations and the simplicial-complex structure of a formation.
//!
//! A `d`-dimensional element is a simplex of `d+1` fully connected agents;
//! two elements are neighbors in the dual graph when they share a
//! `(d-1)`-face (`d` common vertices). Validation checks the two structural
//! assumptions every controller relies on: non-degenerate reference
//! elements and a connected dual graph.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative determinant threshold below which a reference element counts
/// as degenerate (affinely dependent vertices).
const DEGENERACY_REL_TOL: f64 = 1e-10;

/// Stacked agent positions in `R^d`, `d ∈ {2, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    positions: Vec<DVector<f64>>,
}

impl Configuration {
    /// Requires `N >= d + 1` agents with finite coordinates.
    pub fn new(dim: usize, positions: Vec<DVector<f64>>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::DimensionMismatch { expected: 2, got: dim });
        }
        if positions.len() < dim + 1 {
            return Err(Error::Scenario {
                field: "positions".into(),
                reason: format!(
                    "need at least d+1 = {} agents, got {}",
                    dim + 1,
                    positions.len()
                ),
            });
        }
        for (i, p) in positions.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if !p.iter().all(|x| x.is_finite()) {
                return Err(Error::Scenario {
                    field: "positions".into(),
                    reason: format!("agent {i} has a non-finite coordinate"),
                });
            }
        }
        Ok(Self { dim, positions })
    }

    /// Builds from row-major coordinates, one row per agent.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let positions = rows
            .iter()
            .map(|r| DVector::from_column_slice(r))
            .collect();
        Self::new(dim, positions)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, agent: usize) -> &DVector<f64> {
        &self.positions[agent]
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    pub fn position_mut(&mut self, agent: usize) -> &mut DVector<f64> {
        &mut self.positions[agent]
    }

    pub fn centroid(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim);
        for p in &self.positions {
            c += p;
        }
        c / self.positions.len() as f64
    }

    /// Flattens to `(p_0ᵀ, p_1ᵀ, …)ᵀ ∈ R^{dN}` for integrators and
    /// finite-difference probes.
    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim * self.positions.len());
        for (i, p) in self.positions.iter().enumerate() {
            out.rows_mut(i * self.dim, self.dim).copy_from(p);
        }
        out
    }

    pub fn from_flat(dim: usize, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: flat.len() });
        }
        let n = flat.len() / dim;
        let positions = (0..n)
            .map(|i| DVector::from(flat.rows(i * dim, dim).clone_owned()))
            .collect();
        Self::new(dim, positions)
    }

    /// Longest intra-element edge of the reference; the length scale used
    /// for noise magnitudes, finite-difference steps, and degeneracy guards.
    pub fn mesh_scale(&self, complex: &SimplicialComplex) -> f64 {
        let mut scale = 0.0f64;
        for element in &complex.elements {
            for (a, b) in element.edge_pairs() {
                scale = scale.max((self.position(a) - self.position(b)).norm());
            }
        }
        scale
    }
}

/// One simplex of the complex with its cached reference data.
#[derive(Debug, Clone)]
pub struct Element {
    /// `d+1` agent indices; the first entry is the local root `e_0`.
    pub vertices: Vec<usize>,
    /// Reference shape matrix, column `j` = `q_{e_j} - q_{e_0}`.
    pub ref_shape: DMatrix<f64>,
    pub ref_shape_inv: DMatrix<f64>,
    /// Element weight; defaults to the reference volume `|det S_ref| / d!`.
    pub weight: f64,
}

impl Element {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn root(&self) -> usize {
        self.vertices[0]
    }

    /// All unordered vertex pairs of the simplex.
    pub fn edge_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let v = &self.vertices;
        (0..v.len()).flat_map(move |i| (i + 1..v.len()).map(move |j| (v[i], v[j])))
    }
}

/// Current shape matrix of an element: column `j` is `p_{e_j} - p_{e_0}`.
/// Degenerate current shapes are legal; the deformation gradient may be
/// singular.
pub fn shape_matrix(config: &Configuration, element: &Element) -> DMatrix<f64> {
    let d = element.dim();
    let root = config.position(element.vertices[0]);
    let mut s = DMatrix::zeros(d, d);
    for j in 1..=d {
        let col = config.position(element.vertices[j]) - root;
        s.column_mut(j - 1).copy_from(&col);
    }
    s
}

/// A formation tiled by simplicial elements, with the element-adjacency
/// (dual) graph precomputed.
#[derive(Debug, Clone)]
pub struct SimplicialComplex {
    pub dim: usize,
    pub num_agents: usize,
    pub elements: Vec<Element>,
    /// Pairs of element indices sharing a `(d-1)`-face.
    pub dual_edges: Vec<(usize, usize)>,
}

/// Report from [`validate_assumptions`]; a report rather than an error so
/// callers can present all failures at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    /// Every element's reference shape has a determinant above threshold.
    pub nondegenerate: bool,
    /// The element dual graph is connected.
    pub dual_connected: bool,
    /// The union of intra-element edges connects all agents.
    pub graph_connected: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.nondegenerate && self.dual_connected && self.graph_connected
    }
}

/// Builds the complex from explicit vertex lists, computing reference shape
/// matrices, volume weights, and dual edges.
pub fn build_complex(
    dim: usize,
    num_agents: usize,
    element_vertex_lists: &[Vec<usize>],
    reference: &Configuration,
) -> Result<SimplicialComplex> {
    if reference.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: reference.dim() });
    }
    if reference.len() != num_agents {
        return Err(Error::Scenario {
            field: "reference".into(),
            reason: format!("expected {num_agents} agents, got {}", reference.len()),
        });
    }
    let factorial = (1..=dim).product::<usize>() as f64;
    let mut elements = Vec::with_capacity(element_vertex_lists.len());
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for vertices in element_vertex_lists {
        if vertices.len() != dim + 1 {
            return Err(Error::InvalidElement {
                vertices: vertices.clone(),
                reason: format!("expected {} vertices", dim + 1),
            });
        }
        if vertices.iter().any(|&v| v >= num_agents) {
            return Err(Error::InvalidElement {
                vertices: vertices.clone(),
                reason: "vertex index out of range".into(),
            });
        }
        let mut sorted = vertices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidElement {
                vertices: vertices.clone(),
                reason: "repeated vertex".into(),
            });
        }
        if seen.contains(&sorted) {
            return Err(Error::DuplicateElement(sorted));
        }
        seen.push(sorted);

        let mut ref_shape = DMatrix::zeros(dim, dim);
        let root = reference.position(vertices[0]);
        let mut max_edge = 0.0f64;
        for j in 1..=dim {
            let col = reference.position(vertices[j]) - root;
            ref_shape.column_mut(j - 1).copy_from(&col);
        }
        for i in 0..=dim {
            for j in i + 1..=dim {
                max_edge = max_edge
                    .max((reference.position(vertices[i]) - reference.position(vertices[j])).norm());
            }
        }
        let det = ref_shape.determinant();
        let threshold = DEGENERACY_REL_TOL * max_edge.powi(dim as i32);
        if det.abs() <= threshold {
            return Err(Error::DegenerateElement {
                vertices: vertices.clone(),
                det: det.abs(),
                threshold,
            });
        }
        let ref_shape_inv = ref_shape
            .clone()
            .try_inverse()
            .expect("determinant checked above");
        elements.push(Element {
            vertices: vertices.clone(),
            ref_shape,
            ref_shape_inv,
            weight: det.abs() / factorial,
        });
    }

    let dual_edges = dual_edges(dim, &elements);
    Ok(SimplicialComplex {
        dim,
        num_agents,
        elements,
        dual_edges,
    })
}

fn dual_edges(dim: usize, elements: &[Element]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..elements.len() {
        for b in a + 1..elements.len() {
            let shared = elements[a]
                .vertices
                .iter()
                .filter(|v| elements[b].vertices.contains(v))
                .count();
            if shared == dim {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn connected(num_nodes: usize, edges: &[(usize, usize)]) -> bool {
    if num_nodes == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); num_nodes];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut visited = vec![false; num_nodes];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut count = 1;
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if !visited[next] {
                visited[next] = true;
                count += 1;
                stack.push(next);
            }
        }
    }
    count == num_nodes
}

/// Checks the structural assumptions: non-degenerate reference shapes,
/// connected dual graph, and a connected agent graph built from the union
/// of intra-element edges.
pub fn validate_assumptions(complex: &SimplicialComplex) -> AssumptionReport {
    let nondegenerate = complex.elements.iter().all(|e| {
        let det = e.ref_shape.determinant();
        det.abs() > 0.0 && det.is_finite()
    });
    let dual_connected = connected(complex.elements.len(), &complex.dual_edges);

    let mut agent_edges = Vec::new();
    for e in &complex.elements {
        agent_edges.extend(e.edge_pairs());
    }
    let covered = {
        let mut seen = vec![false; complex.num_agents];
        for e in &complex.elements {
            for &v in &e.vertices {
                seen[v] = true;
            }
        }
        seen.iter().all(|&s| s)
    };
    let graph_connected = covered && connected(complex.num_agents, &agent_edges);

    AssumptionReport {
        nondegenerate,
        dual_connected,
        graph_connected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config2(rows: &[[f64; 2]]) -> Configuration {
        Configuration::from_rows(2, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn unit_triangle_shape_and_weight() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let complex = build_complex(2, 3, &[vec![0, 1, 2]], &q).unwrap();
        let e = &complex.elements[0];
        assert_relative_eq!(e.ref_shape, DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(e.weight, 0.5, epsilon = 1e-15);
        assert!((&e.ref_shape_inv * &e.ref_shape - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn two_triangles_share_one_dual_edge() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let complex = build_complex(2, 4, &[vec![0, 1, 2], vec![1, 3, 2]], &q).unwrap();
        // Hand enumeration: the only pair sharing two vertices is {1, 2}.
        assert_eq!(complex.dual_edges, vec![(0, 1)]);
        let shared: Vec<usize> = complex.elements[0]
            .vertices
            .iter()
            .filter(|v| complex.elements[1].vertices.contains(v))
            .copied()
            .collect();
        assert_eq!(shared.len(), 2);
        let report = validate_assumptions(&complex);
        assert!(report.all_hold());
    }

    #[test]
    fn collinear_reference_is_degenerate() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let err = build_complex(2, 3, &[vec![0, 1, 2]], &q).unwrap_err();
        assert!(matches!(err, Error::DegenerateElement { .. }));
    }

    #[test]
    fn duplicate_element_rejected() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let err = build_complex(2, 3, &[vec![0, 1, 2], vec![2, 0, 1]], &q).unwrap_err();
        assert!(matches!(err, Error::DuplicateElement(_)));
    }

    #[test]
    fn shape_matrix_examples() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let complex = build_complex(2, 3, &[vec![0, 1, 2]], &q).unwrap();
        let e = &complex.elements[0];
        // Column-wise subtraction by hand.
        let p = config2(&[[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]]);
        assert_relative_eq!(
            shape_matrix(&p, e),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
        // At the reference, S = S_ref.
        assert_relative_eq!(shape_matrix(&q, e), e.ref_shape, epsilon = 1e-15);
        // Coincident agents give the zero matrix.
        let collapsed = config2(&[[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]]);
        assert!(shape_matrix(&collapsed, e).norm() < 1e-15);
    }

    #[test]
    fn disjoint_triangles_fail_connectivity() {
        let q = config2(&[
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [5.0, 5.0],
            [6.0, 5.0],
            [5.0, 6.0],
        ]);
        let complex = build_complex(2, 6, &[vec![0, 1, 2], vec![3, 4, 5]], &q).unwrap();
        let report = validate_assumptions(&complex);
        assert!(report.nondegenerate);
        assert!(!report.dual_connected);
        assert!(!report.graph_connected);
    }

    #[test]
    fn single_triangle_is_connected() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let complex = build_complex(2, 3, &[vec![0, 1, 2]], &q).unwrap();
        assert!(validate_assumptions(&complex).all_hold());
    }

    #[test]
    fn dual_edges_are_symmetric_faces() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let complex = build_complex(2, 4, &[vec![0, 1, 2], vec![1, 3, 2]], &q).unwrap();
        for &(a, b) in &complex.dual_edges {
            let shared = complex.elements[a]
                .vertices
                .iter()
                .filter(|v| complex.elements[b].vertices.contains(v))
                .count();
            assert_eq!(shared, complex.dim);
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = config2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let flat = p.to_flat();
        assert_eq!(flat.len(), 6);
        let back = Configuration::from_flat(2, &flat).unwrap();
        assert_eq!(back, p);
    }
}
