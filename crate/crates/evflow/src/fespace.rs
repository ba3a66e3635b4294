//! Degrees of freedom for the enhanced velocity space and its projections.
//!
//! Pressure unknowns are cellwise constants, one per cell over all
//! subdomains. Velocity unknowns carry the constant normal component of the
//! lowest-order Raviart-Thomas edge basis: one per interior edge of each
//! subdomain, one per outer-boundary edge, and one per interface sub-edge.
//! Interface edges of the parent grids are replaced by their sub-edges, so a
//! single shared unknown enforces normal-flux continuity at sub-edge scale.
//!
//! Enumeration is fixed and documented so that assembled systems and output
//! files are reproducible run to run: pressure by (subdomain, j, i); then
//! velocity grouped as interior-x by (subdomain, i, j), interior-y by
//! (subdomain, j, i), boundary by (subdomain, side W/E/S/N, position), and
//! interface sub-edges by (interface, s0).

use crate::mesh::{Axis, InterfaceAxis, MultiblockMesh, Side};
use crate::quad::{segment, GAUSS3, GAUSS5};

/// Geometry of one pressure cell.
#[derive(Debug, Clone)]
pub struct CellGeom {
    pub grid: usize,
    pub ij: (usize, usize),
    pub center: (f64, f64),
    pub hx: f64,
    pub hy: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityKind {
    InteriorX,
    InteriorY,
    Boundary,
    InterfaceSub,
}

/// One velocity unknown: the normal velocity component on an edge or
/// sub-edge, oriented along the positive coordinate axis. `minus_cell` sits
/// on the negative-normal side (the edge is its east/north face, orientation
/// sign +1) and `plus_cell` on the positive side (sign -1). Boundary edges
/// have exactly one adjacent cell.
#[derive(Debug, Clone)]
pub struct VelocityDof {
    pub kind: VelocityKind,
    pub axis: Axis,
    pub midpoint: (f64, f64),
    pub length: f64,
    pub minus_cell: Option<usize>,
    pub plus_cell: Option<usize>,
}

impl VelocityDof {
    /// Orientation sign of this edge relative to a boundary cell's outward
    /// normal; only meaningful for boundary edges.
    pub fn boundary_sign(&self) -> f64 {
        if self.minus_cell.is_some() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Cellwise-constant pressure coefficients, indexed like [`DofMap::cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct PressureVector {
    pub values: Vec<f64>,
}

/// Normal velocity coefficients, indexed like [`DofMap::velocity`].
#[derive(Debug, Clone, PartialEq)]
pub struct FluxVector {
    pub values: Vec<f64>,
}

/// Global enumeration of pressure and velocity unknowns plus the adjacency
/// needed for assembly.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub cells: Vec<CellGeom>,
    pub velocity: Vec<VelocityDof>,
    /// For each cell, the incident velocity dofs with orientation signs.
    pub cell_edges: Vec<Vec<(usize, f64)>>,
    /// Velocity group boundaries: [0, interior_x_end, interior_y_end,
    /// boundary_end, total].
    pub group_offsets: [usize; 5],
    grid_ids: Vec<usize>,
    grid_cell_offsets: Vec<usize>,
    grid_nx: Vec<usize>,
}

impl DofMap {
    pub fn pressure_len(&self) -> usize {
        self.cells.len()
    }

    pub fn velocity_len(&self) -> usize {
        self.velocity.len()
    }

    /// Global cell index from a grid id and local (i, j).
    pub fn cell_index(&self, grid_id: usize, i: usize, j: usize) -> usize {
        let pos = self
            .grid_ids
            .iter()
            .position(|&id| id == grid_id)
            .expect("grid id");
        self.grid_cell_offsets[pos] + j * self.grid_nx[pos] + i
    }

    pub fn interface_dofs(&self) -> std::ops::Range<usize> {
        self.group_offsets[3]..self.group_offsets[4]
    }

    pub fn boundary_dofs(&self) -> std::ops::Range<usize> {
        self.group_offsets[2]..self.group_offsets[3]
    }
}

/// Enumerate all unknowns of a validated mesh.
pub fn enumerate_dofs(mesh: &MultiblockMesh) -> DofMap {
    let mut cells = Vec::with_capacity(mesh.total_cells());
    let mut grid_ids = Vec::new();
    let mut grid_cell_offsets = Vec::new();
    let mut grid_nx = Vec::new();
    for g in &mesh.grids {
        grid_ids.push(g.id);
        grid_cell_offsets.push(cells.len());
        grid_nx.push(g.nx);
        let (hx, hy) = (g.hx(), g.hy());
        for j in 0..g.ny {
            for i in 0..g.nx {
                cells.push(CellGeom {
                    grid: g.id,
                    ij: (i, j),
                    center: g.cell_center(i, j),
                    hx,
                    hy,
                    area: hx * hy,
                });
            }
        }
    }
    let cell_of = |grid_id: usize, i: usize, j: usize| -> usize {
        let pos = grid_ids.iter().position(|&id| id == grid_id).unwrap();
        grid_cell_offsets[pos] + j * grid_nx[pos] + i
    };

    let mut velocity = Vec::new();
    let mut group_offsets = [0usize; 5];

    // Interior vertical edges, by (grid, line i, j).
    for g in &mesh.grids {
        let (hx, hy) = (g.hx(), g.hy());
        for i in 1..g.nx {
            let x = g.x0 + i as f64 * hx;
            for j in 0..g.ny {
                let y = g.y0 + (j as f64 + 0.5) * hy;
                velocity.push(VelocityDof {
                    kind: VelocityKind::InteriorX,
                    axis: Axis::X,
                    midpoint: (x, y),
                    length: hy,
                    minus_cell: Some(cell_of(g.id, i - 1, j)),
                    plus_cell: Some(cell_of(g.id, i, j)),
                });
            }
        }
    }
    group_offsets[1] = velocity.len();

    // Interior horizontal edges, by (grid, line j, i).
    for g in &mesh.grids {
        let (hx, hy) = (g.hx(), g.hy());
        for j in 1..g.ny {
            let y = g.y0 + j as f64 * hy;
            for i in 0..g.nx {
                let x = g.x0 + (i as f64 + 0.5) * hx;
                velocity.push(VelocityDof {
                    kind: VelocityKind::InteriorY,
                    axis: Axis::Y,
                    midpoint: (x, y),
                    length: hx,
                    minus_cell: Some(cell_of(g.id, i, j - 1)),
                    plus_cell: Some(cell_of(g.id, i, j)),
                });
            }
        }
    }
    group_offsets[2] = velocity.len();

    // Outer-boundary edges, by (grid, side, position along the face).
    for bf in &mesh.boundary_faces {
        let g = mesh.grid(bf.grid);
        let (hx, hy) = (g.hx(), g.hy());
        match bf.side {
            Side::West | Side::East => {
                let (x, minus, axis_i) = if bf.side == Side::West {
                    (g.x0, false, 0)
                } else {
                    (g.x1, true, g.nx - 1)
                };
                for j in 0..g.ny {
                    let y = g.y0 + (j as f64 + 0.5) * hy;
                    let cell = cell_of(g.id, axis_i, j);
                    velocity.push(VelocityDof {
                        kind: VelocityKind::Boundary,
                        axis: Axis::X,
                        midpoint: (x, y),
                        length: hy,
                        minus_cell: minus.then_some(cell),
                        plus_cell: (!minus).then_some(cell),
                    });
                }
            }
            Side::South | Side::North => {
                let (y, minus, axis_j) = if bf.side == Side::South {
                    (g.y0, false, 0)
                } else {
                    (g.y1, true, g.ny - 1)
                };
                for i in 0..g.nx {
                    let x = g.x0 + (i as f64 + 0.5) * hx;
                    let cell = cell_of(g.id, i, axis_j);
                    velocity.push(VelocityDof {
                        kind: VelocityKind::Boundary,
                        axis: Axis::Y,
                        midpoint: (x, y),
                        length: hx,
                        minus_cell: minus.then_some(cell),
                        plus_cell: (!minus).then_some(cell),
                    });
                }
            }
        }
    }
    group_offsets[3] = velocity.len();

    // Interface sub-edges in mesh order (interface, then s0 ascending).
    for sub in &mesh.subedges {
        let desc = &mesh.interfaces[sub.interface];
        let axis = desc.axis.normal();
        let mid_s = 0.5 * (sub.s0 + sub.s1);
        let midpoint = match desc.axis {
            InterfaceAxis::Vertical => (desc.position, mid_s),
            InterfaceAxis::Horizontal => (mid_s, desc.position),
        };
        velocity.push(VelocityDof {
            kind: VelocityKind::InterfaceSub,
            axis,
            midpoint,
            length: sub.length(),
            minus_cell: Some(cell_of(desc.left_id, sub.left_cell.0, sub.left_cell.1)),
            plus_cell: Some(cell_of(desc.right_id, sub.right_cell.0, sub.right_cell.1)),
        });
    }
    group_offsets[4] = velocity.len();

    let mut cell_edges = vec![Vec::with_capacity(4); cells.len()];
    for (e, dof) in velocity.iter().enumerate() {
        if let Some(c) = dof.minus_cell {
            cell_edges[c].push((e, 1.0));
        }
        if let Some(c) = dof.plus_cell {
            cell_edges[c].push((e, -1.0));
        }
    }

    DofMap {
        cells,
        velocity,
        cell_edges,
        group_offsets,
        grid_ids,
        grid_cell_offsets,
        grid_nx,
    }
}

/// Project a smooth vector field onto the enhanced velocity space: the dof
/// on edge e is the edge average of the normal component,
/// (1/len) * integral of q.n over e, by 5-point Gauss per edge.
pub fn project_pi_star(
    q: impl Fn(f64, f64) -> (f64, f64),
    dofmap: &DofMap,
) -> FluxVector {
    let values = dofmap
        .velocity
        .iter()
        .map(|dof| {
            let (mx, my) = dof.midpoint;
            let half = 0.5 * dof.length;
            let integral = match dof.axis {
                Axis::X => segment(GAUSS5, my - half, my + half, |y| q(mx, y).0),
                Axis::Y => segment(GAUSS5, mx - half, mx + half, |x| q(x, my).1),
            };
            integral / dof.length
        })
        .collect();
    FluxVector { values }
}

/// Cellwise L2 projection: each value is the cell average of `p`, by a
/// tensor 3x3 Gauss rule per cell.
pub fn project_l2_pressure(p: impl Fn(f64, f64) -> f64, dofmap: &DofMap) -> PressureVector {
    let values = dofmap
        .cells
        .iter()
        .map(|c| {
            let (cx, cy) = c.center;
            crate::quad::rectangle(
                GAUSS3,
                cx - 0.5 * c.hx,
                cx + 0.5 * c.hx,
                cy - 0.5 * c.hy,
                cy + 0.5 * c.hy,
                &p,
            ) / c.area
        })
        .collect();
    PressureVector { values }
}

/// Cellwise divergence of a discrete flux: (1/|c|) sum over incident edges
/// of sign * length * value. Interface-adjacent cells sum over their
/// sub-edges.
pub fn discrete_divergence(flux: &FluxVector, dofmap: &DofMap) -> PressureVector {
    assert_eq!(flux.values.len(), dofmap.velocity_len());
    let values = dofmap
        .cells
        .iter()
        .enumerate()
        .map(|(c, geom)| {
            dofmap.cell_edges[c]
                .iter()
                .map(|&(e, sign)| sign * dofmap.velocity[e].length * flux.values[e])
                .sum::<f64>()
                / geom.area
        })
        .collect();
    PressureVector { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{quadrant_mesh, single_block, two_block};
    use crate::quad::{rectangle, GAUSS5};

    #[test]
    fn single_block_dof_counts() {
        let mesh = single_block(2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        assert_eq!(dofs.pressure_len(), 4);
        // 4 interior edges + 8 boundary edges.
        assert_eq!(dofs.velocity_len(), 12);
        assert_eq!(dofs.group_offsets, [0, 2, 4, 12, 12]);
    }

    #[test]
    fn two_block_dof_counts() {
        // Hand count: pressure 4 + 9; interior 4 (left) + 12 (right);
        // boundary 6 (left) + 9 (right); union breakpoints {0,1/3,1/2,2/3,1}
        // give 4 interface sub-edges.
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        assert_eq!(dofs.pressure_len(), 13);
        assert_eq!(dofs.group_offsets[1], 2 + 6);
        assert_eq!(dofs.group_offsets[2] - dofs.group_offsets[1], 2 + 6);
        assert_eq!(dofs.group_offsets[3] - dofs.group_offsets[2], 6 + 9);
        assert_eq!(dofs.group_offsets[4] - dofs.group_offsets[3], 4);
        assert_eq!(dofs.velocity_len(), 35);
        // Small enough for the dense saddle-point oracle.
        assert!(dofs.pressure_len() + dofs.velocity_len() <= 50);
    }

    #[test]
    fn matching_two_block_degenerates_to_single_grid() {
        let multi = enumerate_dofs(&two_block(2, 2, 2, 2).unwrap());
        let single = enumerate_dofs(&single_block(4, 2).unwrap());
        assert_eq!(multi.pressure_len(), single.pressure_len());
        assert_eq!(multi.velocity_len(), single.velocity_len());
        // Same edge geometry as a multiset.
        let key = |d: &VelocityDof| {
            (
                d.axis == Axis::X,
                (d.midpoint.0 * 1e12).round() as i64,
                (d.midpoint.1 * 1e12).round() as i64,
                (d.length * 1e12).round() as i64,
            )
        };
        let mut a: Vec<_> = multi.velocity.iter().map(key).collect();
        let mut b: Vec<_> = single.velocity.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn every_interface_subedge_couples_both_sides() {
        let mesh = quadrant_mesh(1.0 / 52.0, 1.0 / 26.0).unwrap();
        let dofs = enumerate_dofs(&mesh);
        for e in dofs.interface_dofs() {
            let dof = &dofs.velocity[e];
            assert!(dof.minus_cell.is_some() && dof.plus_cell.is_some());
            assert_ne!(dof.minus_cell, dof.plus_cell);
        }
        // No Lagrange multipliers: pressure count is exactly the cell count.
        assert_eq!(dofs.pressure_len(), mesh.total_cells());
    }

    #[test]
    fn pi_star_of_constant_field() {
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = project_pi_star(|_, _| (1.0, 0.0), &dofs);
        for (dof, v) in dofs.velocity.iter().zip(&flux.values) {
            let expect = if dof.axis == Axis::X { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn pi_star_linear_field_on_interface() {
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = project_pi_star(|x, _| (x, 0.0), &dofs);
        for e in dofs.interface_dofs() {
            assert!((flux.values[e] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn pi_star_quadratic_average_on_subedge() {
        // q = (y^2, 0) on the sub-edge [1/3, 1/2]: average of y^2 there is
        // 6 * (1/24 - 1/81)... evaluated in closed form: 19/108.
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = project_pi_star(|_, y| (y * y, 0.0), &dofs);
        let e = dofs
            .interface_dofs()
            .find(|&e| {
                let d = &dofs.velocity[e];
                (d.midpoint.1 - (1.0 / 3.0 + 1.0 / 2.0) / 2.0).abs() < 1e-12
            })
            .unwrap();
        assert!((flux.values[e] - 19.0 / 108.0).abs() < 1e-14);
    }

    #[test]
    fn l2_projection_of_simple_fields() {
        let mesh = single_block(4, 4).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let c = project_l2_pressure(|_, _| 3.5, &dofs);
        assert!(c.values.iter().all(|v| (v - 3.5).abs() < 1e-14));
        // p = x on the cell [0, 1/4] x [0, 1/4] averages to 1/8.
        let lin = project_l2_pressure(|x, _| x, &dofs);
        assert!((lin.values[0] - 0.125).abs() < 1e-14);
    }

    #[test]
    fn l2_projection_of_quadratic() {
        // p = x^2 on the cell [0, 1/2]^2 averages to 1/12.
        let mesh = single_block(2, 2).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let proj = project_l2_pressure(|x, _| x * x, &dofs);
        assert!((proj.values[0] - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_of_constant_field_vanishes() {
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = project_pi_star(|_, _| (1.0, 0.0), &dofs);
        let div = discrete_divergence(&flux, &dofs);
        for v in &div.values {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_linear_field_is_two() {
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = project_pi_star(|x, y| (x, y), &dofs);
        let div = discrete_divergence(&flux, &dofs);
        for v in &div.values {
            assert!((v - 2.0).abs() < 1e-11, "got {v}");
        }
    }

    #[test]
    fn divergence_of_zero_flux_is_zero() {
        let mesh = single_block(3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let flux = FluxVector {
            values: vec![0.0; dofs.velocity_len()],
        };
        let div = discrete_divergence(&flux, &dofs);
        assert!(div.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn commuting_property_on_nonmatching_mesh() {
        // Per cell: integral of div q equals |c| times the discrete
        // divergence of the projected flux.
        type Field = (fn(f64, f64) -> (f64, f64), fn(f64, f64) -> f64);
        let fields: [Field; 2] = [
            (|x, y| (x * x * y, -(x * y * y)), |_, _| 0.0),
            (|x, y| (x * x * y, x * y * y), |x, y| 4.0 * x * y),
        ];
        let mesh = two_block(2, 2, 3, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        for (q, div_q) in fields {
            let flux = project_pi_star(q, &dofs);
            let div = discrete_divergence(&flux, &dofs);
            for (c, geom) in dofs.cells.iter().enumerate() {
                let exact = rectangle(
                    GAUSS5,
                    geom.center.0 - 0.5 * geom.hx,
                    geom.center.0 + 0.5 * geom.hx,
                    geom.center.1 - 0.5 * geom.hy,
                    geom.center.1 + 0.5 * geom.hy,
                    div_q,
                );
                assert!((exact - geom.area * div.values[c]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn l2_projection_orthogonality() {
        // sum over cells of w_c (integral of p - |c| p_hat) is zero for any
        // cellwise-constant w. A degree-5 polynomial keeps both quadratures
        // exact so the identity itself is what gets tested.
        let mesh = two_block(3, 2, 2, 3).unwrap();
        let dofs = enumerate_dofs(&mesh);
        let p = |x: f64, y: f64| x.powi(3) * y * y - 2.0 * x * y.powi(4) + x * x + 0.7;
        let proj = project_l2_pressure(p, &dofs);
        let w: Vec<f64> = (0..dofs.pressure_len())
            .map(|c| ((c * 7919) % 13) as f64 - 6.0)
            .collect();
        let mut total = 0.0;
        for (c, geom) in dofs.cells.iter().enumerate() {
            let exact = rectangle(
                GAUSS5,
                geom.center.0 - 0.5 * geom.hx,
                geom.center.0 + 0.5 * geom.hx,
                geom.center.1 - 0.5 * geom.hy,
                geom.center.1 + 0.5 * geom.hy,
                p,
            );
            total += w[c] * (exact - geom.area * proj.values[c]);
        }
        assert!(total.abs() <= 1e-10, "orthogonality defect {total:e}");
    }

    #[test]
    fn interpolation_errors_decay_at_first_order() {
        // Discrete L2 norms of p - p_hat and u - Pi* u under uniform
        // refinement of the quadrant mesh, measured by cellwise quadrature
        // against the piecewise reconstruction.
        let p = |x: f64, y: f64| {
            (2.0 * std::f64::consts::PI * x).sin() * (2.0 * std::f64::consts::PI * y).sin()
        };
        let u = |x: f64, y: f64| {
            let tau = 2.0 * std::f64::consts::PI;
            (
                -tau * (tau * x).cos() * (tau * y).sin(),
                -tau * (tau * x).sin() * (tau * y).cos(),
            )
        };
        let mut hs = Vec::new();
        let mut ep = Vec::new();
        let mut eu = Vec::new();
        for k in [8usize, 16, 32] {
            let h = 0.5 / k as f64;
            let mesh = quadrant_mesh(h, 2.0 * h).unwrap();
            let dofs = enumerate_dofs(&mesh);
            let proj = project_l2_pressure(p, &dofs);
            let flux = project_pi_star(u, &dofs);

            // Face-average flux per cell side, aggregating sub-edges.
            let face_avg = |c: usize, axis: Axis, sign: f64| -> f64 {
                let mut num = 0.0;
                let mut den = 0.0;
                for &(e, s) in &dofs.cell_edges[c] {
                    let d = &dofs.velocity[e];
                    if d.axis == axis && s == sign {
                        num += d.length * flux.values[e];
                        den += d.length;
                    }
                }
                num / den
            };

            let mut sp = 0.0;
            let mut su = 0.0;
            for (c, geom) in dofs.cells.iter().enumerate() {
                let (x0, x1) = (geom.center.0 - 0.5 * geom.hx, geom.center.0 + 0.5 * geom.hx);
                let (y0, y1) = (geom.center.1 - 0.5 * geom.hy, geom.center.1 + 0.5 * geom.hy);
                sp += rectangle(GAUSS3, x0, x1, y0, y1, |x, y| {
                    (p(x, y) - proj.values[c]).powi(2)
                });
                let (vw, ve) = (face_avg(c, Axis::X, -1.0), face_avg(c, Axis::X, 1.0));
                let (vs, vn) = (face_avg(c, Axis::Y, -1.0), face_avg(c, Axis::Y, 1.0));
                su += rectangle(GAUSS3, x0, x1, y0, y1, |x, y| {
                    let rx = vw + (ve - vw) * (x - x0) / geom.hx;
                    let ry = vs + (vn - vs) * (y - y0) / geom.hy;
                    let (ux, uy) = u(x, y);
                    (ux - rx).powi(2) + (uy - ry).powi(2)
                });
            }
            hs.push(h);
            ep.push(sp.sqrt());
            eu.push(su.sqrt());
        }
        let slope = |e: &[f64]| {
            let n = e.len();
            ((e[0] / e[n - 1]).ln() / (hs[0] / hs[n - 1]).ln()).abs()
        };
        let sp = slope(&ep);
        let su = slope(&eu);
        assert!((0.8..=1.2).contains(&sp), "pressure order {sp}");
        assert!((0.8..=1.2).contains(&su), "velocity order {su}");
    }
}
