//! Multiblock rectangular geometry.
//!
//! A domain is tiled by axis-aligned rectangular subdomains, each carrying its
//! own uniform grid. Where two subdomains meet, the shared face becomes an
//! interface whose sub-edge decomposition is the sorted union of the two
//! grids' trace breakpoints. Flux unknowns later live on those sub-edges, one
//! per sub-edge, shared by both sides.

use std::fmt;

use thiserror::Error;

/// Coordinates closer than `GEOMETRIC_EPS_SCALE * domain_diameter` are merged
/// when forming breakpoint unions. Breakpoints like 26*(1/52) and 13*(1/26)
/// must collapse to a single point despite floating-point noise.
pub const GEOMETRIC_EPS_SCALE: f64 = 1e-12;

/// Coordinate axis. For an edge this is the direction of its unit normal:
/// vertical edges have normal along `X`, horizontal edges along `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Side of a rectangular subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// One rectangular subdomain with a uniform `nx` by `ny` cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainGrid {
    pub id: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SubdomainGrid {
    pub fn new(
        id: usize,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self, MeshError> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(MeshError::InvalidGrid {
                id,
                reason: "non-finite extents".into(),
            });
        }
        if x0 >= x1 || y0 >= y1 {
            return Err(MeshError::InvalidGrid {
                id,
                reason: format!("empty extents [{x0},{x1}]x[{y0},{y1}]"),
            });
        }
        if nx == 0 || ny == 0 {
            return Err(MeshError::InvalidGrid {
                id,
                reason: format!("cell counts must be positive, got {nx}x{ny}"),
            });
        }
        Ok(Self {
            id,
            x0,
            x1,
            y0,
            y1,
            nx,
            ny,
        })
    }

    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Center of cell `(i, j)`, `i` along x and `j` along y.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx(),
            self.y0 + (j as f64 + 0.5) * self.hy(),
        )
    }

    /// Grid line coordinates along the given axis (length `n + 1`).
    pub fn breakpoints(&self, axis: Axis) -> Vec<f64> {
        match axis {
            Axis::X => (0..=self.nx)
                .map(|i| self.x0 + i as f64 * self.hx())
                .collect(),
            Axis::Y => (0..=self.ny)
                .map(|j| self.y0 + j as f64 * self.hy())
                .collect(),
        }
    }

    /// Coordinate of one of the four faces.
    pub fn face_position(&self, side: Side) -> f64 {
        match side {
            Side::West => self.x0,
            Side::East => self.x1,
            Side::South => self.y0,
            Side::North => self.y1,
        }
    }

    /// Interval spanned by a face (the y-range for West/East, x-range for South/North).
    pub fn face_span(&self, side: Side) -> (f64, f64) {
        match side {
            Side::West | Side::East => (self.y0, self.y1),
            Side::South | Side::North => (self.x0, self.x1),
        }
    }

    /// Cell index along a face for a coordinate `s` on that face, clamped to range.
    pub fn face_cell(&self, side: Side, s: f64) -> usize {
        let (lo, n, h) = match side {
            Side::West | Side::East => (self.y0, self.ny, self.hy()),
            Side::South | Side::North => (self.x0, self.nx, self.hx()),
        };
        (((s - lo) / h).floor() as isize).clamp(0, n as isize - 1) as usize
    }
}

/// Orientation of an interface line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceAxis {
    /// The interface is a vertical line x = position; its normal is +x.
    Vertical,
    /// The interface is a horizontal line y = position; its normal is +y.
    Horizontal,
}

impl InterfaceAxis {
    pub fn normal(self) -> Axis {
        match self {
            InterfaceAxis::Vertical => Axis::X,
            InterfaceAxis::Horizontal => Axis::Y,
        }
    }
}

/// A full shared face between two subdomains. `left` is the subdomain on the
/// negative-normal side, so the outward normal of `left` points toward
/// `right` (+x for vertical interfaces, +y for horizontal ones).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceDescriptor {
    pub left_id: usize,
    pub right_id: usize,
    pub axis: InterfaceAxis,
    pub position: f64,
    pub span: (f64, f64),
}

/// One interval of the union grid on an interface, together with the cell it
/// touches on each side. `(i, j)` indices are local to the owning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSubEdge {
    pub interface: usize,
    pub s0: f64,
    pub s1: f64,
    pub left_cell: (usize, usize),
    pub right_cell: (usize, usize),
}

impl InterfaceSubEdge {
    pub fn length(&self) -> f64 {
        self.s1 - self.s0
    }
}

/// A subdomain face lying on the global boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub grid: usize,
    pub side: Side,
}

/// The assembled multiblock mesh: grids, interfaces, their sub-edge
/// decompositions and the faces on the outer boundary. Construction through
/// [`MultiblockMesh::build`] validates the tiling; the resulting value is
/// immutable and safe to share across threads.
#[derive(Debug, Clone)]
pub struct MultiblockMesh {
    pub grids: Vec<SubdomainGrid>,
    pub interfaces: Vec<InterfaceDescriptor>,
    pub subedges: Vec<InterfaceSubEdge>,
    pub boundary_faces: Vec<BoundaryFace>,
    /// Absolute merge tolerance derived from the domain diameter.
    pub eps: f64,
    /// Bounding box (x0, x1, y0, y1); equals the domain when the tiling is valid.
    pub bbox: (f64, f64, f64, f64),
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("grid {id}: {reason}")]
    InvalidGrid { id: usize, reason: String },
    #[error("duplicate grid id {0}")]
    DuplicateId(usize),
    #[error("subdomains {a} and {b} overlap")]
    Overlap { a: usize, b: usize },
    #[error("subdomains {a} and {b} nearly abut but leave a gap of {gap:e}")]
    NearMiss { a: usize, b: usize, gap: f64 },
    #[error("mesh validation failed:\n{0}")]
    Invalid(MeshDiagnostics),
    #[error("quadrant layout needs 0.5/h integral; got h={h}")]
    BadQuadrantSpacing { h: f64 },
}

/// One problem found while validating a mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshIssue {
    Overlap {
        a: usize,
        b: usize,
    },
    /// Part of a subdomain face is neither on the outer boundary nor covered
    /// by an interface: a gap in the tiling next to that face.
    Gap {
        grid: usize,
        side: Side,
        from: f64,
        to: f64,
    },
    AreaMismatch {
        covered: f64,
        bbox: f64,
    },
    SubedgeHole {
        interface: usize,
        at: f64,
    },
    SpanMismatch {
        interface: usize,
        expected: f64,
        got: f64,
    },
}

impl fmt::Display for MeshIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshIssue::Overlap { a, b } => write!(f, "subdomains {a} and {b} overlap"),
            MeshIssue::Gap {
                grid,
                side,
                from,
                to,
            } => write!(
                f,
                "gap adjacent to grid {grid} {side:?} face over [{from}, {to}]"
            ),
            MeshIssue::AreaMismatch { covered, bbox } => write!(
                f,
                "subdomain areas sum to {covered} but bounding box has area {bbox}"
            ),
            MeshIssue::SubedgeHole { interface, at } => {
                write!(f, "interface {interface}: sub-edges leave a hole at {at}")
            }
            MeshIssue::SpanMismatch {
                interface,
                expected,
                got,
            } => write!(
                f,
                "interface {interface}: sub-edge lengths sum to {got}, span is {expected}"
            ),
        }
    }
}

/// Structured validation report; empty issue list means the mesh is sound.
#[derive(Debug, Clone, Default)]
pub struct MeshDiagnostics {
    pub issues: Vec<MeshIssue>,
}

impl MeshDiagnostics {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for MeshDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "- {issue}")?;
        }
        Ok(())
    }
}

fn bounding_box(grids: &[SubdomainGrid]) -> (f64, f64, f64, f64) {
    let mut bb = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for g in grids {
        bb.0 = bb.0.min(g.x0);
        bb.1 = bb.1.max(g.x1);
        bb.2 = bb.2.min(g.y0);
        bb.3 = bb.3.max(g.y1);
    }
    bb
}

fn domain_eps(grids: &[SubdomainGrid]) -> f64 {
    let (x0, x1, y0, y1) = bounding_box(grids);
    let diam = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    GEOMETRIC_EPS_SCALE * diam
}

fn interiors_overlap(a: &SubdomainGrid, b: &SubdomainGrid, eps: f64) -> bool {
    a.x0 < b.x1 - eps && b.x0 < a.x1 - eps && a.y0 < b.y1 - eps && b.y0 < a.y1 - eps
}

/// Find every shared face between pairs of grids. Orientation is geometric:
/// the `left` grid sits on the negative-normal side regardless of input
/// order. T-junctions produce one descriptor per overlapping pair, split at
/// subdomain corners.
pub fn detect_interfaces(grids: &[SubdomainGrid]) -> Result<Vec<InterfaceDescriptor>, MeshError> {
    let eps = domain_eps(grids);
    // Near-miss slack: faces this close are almost certainly meant to abut.
    let slack = eps.max(1e-9 * eps / GEOMETRIC_EPS_SCALE);

    let mut found = Vec::new();
    for (ia, a) in grids.iter().enumerate() {
        for (ib, b) in grids.iter().enumerate() {
            if ia == ib {
                continue;
            }
            if ia < ib && interiors_overlap(a, b, eps) {
                return Err(MeshError::Overlap { a: a.id, b: b.id });
            }
            // a east | b west
            let dx = (a.x1 - b.x0).abs();
            let ylo = a.y0.max(b.y0);
            let yhi = a.y1.min(b.y1);
            if dx <= eps && yhi - ylo > eps {
                found.push(InterfaceDescriptor {
                    left_id: a.id,
                    right_id: b.id,
                    axis: InterfaceAxis::Vertical,
                    position: a.x1,
                    span: (ylo, yhi),
                });
            } else if dx <= slack && dx > eps && yhi - ylo > eps {
                return Err(MeshError::NearMiss {
                    a: a.id,
                    b: b.id,
                    gap: dx,
                });
            }
            // a north | b south
            let dy = (a.y1 - b.y0).abs();
            let xlo = a.x0.max(b.x0);
            let xhi = a.x1.min(b.x1);
            if dy <= eps && xhi - xlo > eps {
                found.push(InterfaceDescriptor {
                    left_id: a.id,
                    right_id: b.id,
                    axis: InterfaceAxis::Horizontal,
                    position: a.y1,
                    span: (xlo, xhi),
                });
            } else if dy <= slack && dy > eps && xhi - xlo > eps {
                return Err(MeshError::NearMiss {
                    a: a.id,
                    b: b.id,
                    gap: dy,
                });
            }
        }
    }
    found.sort_by(|p, q| {
        let ka = (p.axis == InterfaceAxis::Horizontal) as u8;
        let kb = (q.axis == InterfaceAxis::Horizontal) as u8;
        ka.cmp(&kb)
            .then(p.position.total_cmp(&q.position))
            .then(p.span.0.total_cmp(&q.span.0))
    });
    Ok(found)
}

/// Sorted union of two breakpoint lists restricted to `[lo, hi]`, merging
/// points closer than `eps` and pinning the endpoints exactly.
fn merged_breakpoints(lo: f64, hi: f64, left: &[f64], right: &[f64], eps: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = left
        .iter()
        .chain(right.iter())
        .copied()
        .filter(|&s| s > lo - eps && s < hi + eps)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match merged.last() {
            Some(&last) if (p - last).abs() <= eps => {}
            _ => merged.push(p),
        }
    }
    let n = merged.len();
    merged[0] = lo;
    merged[n - 1] = hi;
    merged
}

/// Build the union-grid decomposition of one interface. Breakpoints are the
/// merged traces of the two abutting grids; each sub-edge records the cell it
/// touches on either side.
pub fn build_interface_subedges(
    desc: &InterfaceDescriptor,
    interface_index: usize,
    left: &SubdomainGrid,
    right: &SubdomainGrid,
    eps: f64,
) -> Vec<InterfaceSubEdge> {
    let trace_axis = match desc.axis {
        InterfaceAxis::Vertical => Axis::Y,
        InterfaceAxis::Horizontal => Axis::X,
    };
    let (left_side, right_side) = match desc.axis {
        InterfaceAxis::Vertical => (Side::East, Side::West),
        InterfaceAxis::Horizontal => (Side::North, Side::South),
    };
    let pts = merged_breakpoints(
        desc.span.0,
        desc.span.1,
        &left.breakpoints(trace_axis),
        &right.breakpoints(trace_axis),
        eps,
    );
    pts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let lj = left.face_cell(left_side, mid);
            let rj = right.face_cell(right_side, mid);
            let left_cell = match desc.axis {
                InterfaceAxis::Vertical => (left.nx - 1, lj),
                InterfaceAxis::Horizontal => (lj, left.ny - 1),
            };
            let right_cell = match desc.axis {
                InterfaceAxis::Vertical => (0, rj),
                InterfaceAxis::Horizontal => (rj, 0),
            };
            InterfaceSubEdge {
                interface: interface_index,
                s0: w[0],
                s1: w[1],
                left_cell,
                right_cell,
            }
        })
        .collect()
}

impl MultiblockMesh {
    /// Validate the tiling, detect interfaces and build sub-edges.
    pub fn build(grids: Vec<SubdomainGrid>) -> Result<Self, MeshError> {
        for (i, g) in grids.iter().enumerate() {
            if grids[..i].iter().any(|o| o.id == g.id) {
                return Err(MeshError::DuplicateId(g.id));
            }
        }
        let interfaces = detect_interfaces(&grids)?;
        let eps = domain_eps(&grids);
        let mut subedges = Vec::new();
        for (k, desc) in interfaces.iter().enumerate() {
            let left = grids.iter().find(|g| g.id == desc.left_id).unwrap();
            let right = grids.iter().find(|g| g.id == desc.right_id).unwrap();
            subedges.extend(build_interface_subedges(desc, k, left, right, eps));
        }
        let mesh = Self::from_parts_unchecked(grids, interfaces, subedges);
        let diag = validate_multiblock(&mesh);
        if diag.passed() {
            Ok(mesh)
        } else {
            Err(MeshError::Invalid(diag))
        }
    }

    /// Assemble a mesh from raw parts without validation. Intended for
    /// diagnostics tests; [`validate_multiblock`] reports what is wrong.
    pub fn from_parts_unchecked(
        grids: Vec<SubdomainGrid>,
        interfaces: Vec<InterfaceDescriptor>,
        subedges: Vec<InterfaceSubEdge>,
    ) -> Self {
        let eps = domain_eps(&grids);
        let bbox = bounding_box(&grids);
        let mut boundary_faces = Vec::new();
        for g in &grids {
            for side in [Side::West, Side::East, Side::South, Side::North] {
                let on_bbox = match side {
                    Side::West => (g.x0 - bbox.0).abs() <= eps,
                    Side::East => (g.x1 - bbox.1).abs() <= eps,
                    Side::South => (g.y0 - bbox.2).abs() <= eps,
                    Side::North => (g.y1 - bbox.3).abs() <= eps,
                };
                if on_bbox {
                    boundary_faces.push(BoundaryFace { grid: g.id, side });
                }
            }
        }
        Self {
            grids,
            interfaces,
            subedges,
            boundary_faces,
            eps,
            bbox,
        }
    }

    pub fn grid(&self, id: usize) -> &SubdomainGrid {
        self.grids.iter().find(|g| g.id == id).expect("grid id")
    }

    pub fn total_cells(&self) -> usize {
        self.grids.iter().map(|g| g.cell_count()).sum()
    }

    pub fn subedges_of(&self, interface: usize) -> impl Iterator<Item = &InterfaceSubEdge> {
        self.subedges
            .iter()
            .filter(move |s| s.interface == interface)
    }
}

/// Check tiling, interface coverage and sub-edge partitions. Returns a
/// structured report instead of aborting so callers can surface every
/// problem at once.
pub fn validate_multiblock(mesh: &MultiblockMesh) -> MeshDiagnostics {
    let mut issues = Vec::new();
    let eps = mesh.eps;

    for (ia, a) in mesh.grids.iter().enumerate() {
        for b in mesh.grids.iter().skip(ia + 1) {
            if interiors_overlap(a, b, eps) {
                issues.push(MeshIssue::Overlap { a: a.id, b: b.id });
            }
        }
    }

    // Every face interval must be on the outer boundary or covered by
    // interface spans; uncovered intervals locate gaps.
    let (bx0, bx1, by0, by1) = mesh.bbox;
    for g in &mesh.grids {
        for side in [Side::West, Side::East, Side::South, Side::North] {
            let on_bbox = match side {
                Side::West => (g.x0 - bx0).abs() <= eps,
                Side::East => (g.x1 - bx1).abs() <= eps,
                Side::South => (g.y0 - by0).abs() <= eps,
                Side::North => (g.y1 - by1).abs() <= eps,
            };
            if on_bbox {
                continue;
            }
            let pos = g.face_position(side);
            let span = g.face_span(side);
            let mut covered: Vec<(f64, f64)> = mesh
                .interfaces
                .iter()
                .filter(|d| {
                    let matches_side = match (side, d.axis) {
                        (Side::East, InterfaceAxis::Vertical) => d.left_id == g.id,
                        (Side::West, InterfaceAxis::Vertical) => d.right_id == g.id,
                        (Side::North, InterfaceAxis::Horizontal) => d.left_id == g.id,
                        (Side::South, InterfaceAxis::Horizontal) => d.right_id == g.id,
                        _ => false,
                    };
                    matches_side && (d.position - pos).abs() <= eps
                })
                .map(|d| d.span)
                .collect();
            covered.sort_by(|p, q| p.0.total_cmp(&q.0));
            let mut cursor = span.0;
            for (lo, hi) in covered {
                if lo > cursor + eps {
                    issues.push(MeshIssue::Gap {
                        grid: g.id,
                        side,
                        from: cursor,
                        to: lo,
                    });
                }
                cursor = cursor.max(hi);
            }
            if cursor < span.1 - eps {
                issues.push(MeshIssue::Gap {
                    grid: g.id,
                    side,
                    from: cursor,
                    to: span.1,
                });
            }
        }
    }

    let covered: f64 = mesh
        .grids
        .iter()
        .map(|g| (g.x1 - g.x0) * (g.y1 - g.y0))
        .sum();
    let bbox_area = (bx1 - bx0) * (by1 - by0);
    if (covered - bbox_area).abs() > 1e-9 * bbox_area {
        issues.push(MeshIssue::AreaMismatch {
            covered,
            bbox: bbox_area,
        });
    }

    for (k, desc) in mesh.interfaces.iter().enumerate() {
        let mut subs: Vec<&InterfaceSubEdge> = mesh.subedges_of(k).collect();
        subs.sort_by(|a, b| a.s0.total_cmp(&b.s0));
        let mut cursor = desc.span.0;
        let mut total = 0.0;
        for s in &subs {
            if (s.s0 - cursor).abs() > eps {
                issues.push(MeshIssue::SubedgeHole {
                    interface: k,
                    at: cursor,
                });
            }
            cursor = s.s1;
            total += s.length();
        }
        if (cursor - desc.span.1).abs() > eps {
            issues.push(MeshIssue::SubedgeHole {
                interface: k,
                at: cursor,
            });
        }
        let span_len = desc.span.1 - desc.span.0;
        if (total - span_len).abs() > eps {
            issues.push(MeshIssue::SpanMismatch {
                interface: k,
                expected: span_len,
                got: total,
            });
        }
    }

    MeshDiagnostics { issues }
}

/// Single uniform block covering the unit square.
pub fn single_block(nx: usize, ny: usize) -> Result<MultiblockMesh, MeshError> {
    MultiblockMesh::build(vec![SubdomainGrid::new(0, 0.0, 1.0, 0.0, 1.0, nx, ny)?])
}

/// Two blocks splitting the unit square at x = 0.5.
pub fn two_block(
    nx_left: usize,
    ny_left: usize,
    nx_right: usize,
    ny_right: usize,
) -> Result<MultiblockMesh, MeshError> {
    MultiblockMesh::build(vec![
        SubdomainGrid::new(0, 0.0, 0.5, 0.0, 1.0, nx_left, ny_left)?,
        SubdomainGrid::new(1, 0.5, 1.0, 0.0, 1.0, nx_right, ny_right)?,
    ])
}

/// Four-quadrant unit-square mesh with fine spacing `h` on the lower-left and
/// upper-right blocks and coarse spacing `big_h` on the other two, in a
/// checkerboard pattern.
pub fn quadrant_mesh(h: f64, big_h: f64) -> Result<MultiblockMesh, MeshError> {
    let counts = |spacing: f64| -> Result<usize, MeshError> {
        let n = (0.5 / spacing).round();
        if n < 1.0 || (n * spacing - 0.5).abs() > 1e-9 {
            return Err(MeshError::BadQuadrantSpacing { h: spacing });
        }
        Ok(n as usize)
    };
    let nf = counts(h)?;
    let nc = counts(big_h)?;
    MultiblockMesh::build(vec![
        SubdomainGrid::new(0, 0.0, 0.5, 0.0, 0.5, nf, nf)?,
        SubdomainGrid::new(1, 0.5, 1.0, 0.0, 0.5, nc, nc)?,
        SubdomainGrid::new(2, 0.0, 0.5, 0.5, 1.0, nc, nc)?,
        SubdomainGrid::new(3, 0.5, 1.0, 0.5, 1.0, nf, nf)?,
    ])
}
