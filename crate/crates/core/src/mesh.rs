//! Uniform background tetrahedral mesh and cut-element classification.
//!
//! The box is partitioned into N^3 cubes, each split into six tetrahedra by
//! the Kuhn/Freudenthal diagonal pattern (all cubes use the same main
//! diagonal, which makes the split consistent across cube faces).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levelset::{BoundingBox, LevelSetSurface, Point};

/// Background tetrahedral partition of the box.
#[derive(Debug, Clone)]
pub struct TetMesh {
    pub box_: BoundingBox,
    /// Cubes per axis.
    pub n: usize,
    pub vertices: Vec<Point>,
    /// Integer grid coordinates of each vertex (used for exact dof keys).
    pub grid_coords: Vec<[u32; 3]>,
    pub tets: Vec<[usize; 4]>,
    /// Mesh size: the maximum element diameter (the cube main diagonal).
    pub h: f64,
}

/// The six Kuhn tetrahedra of the unit cube, as axis-insertion orders.
const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl TetMesh {
    pub fn vertex(&self, id: usize) -> Point {
        self.vertices[id]
    }

    pub fn tet_vertices(&self, tet: usize) -> [Point; 4] {
        let t = self.tets[tet];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
            self.vertices[t[3]],
        ]
    }

    /// Length of a cube edge.
    pub fn cube_width(&self) -> f64 {
        (self.box_.hi[0] - self.box_.lo[0]) / self.n as f64
    }

    pub fn signed_volume(&self, tet: usize) -> f64 {
        signed_volume(&self.tet_vertices(tet))
    }
}

pub(crate) fn signed_volume(v: &[Point; 4]) -> f64 {
    let d1 = [v[1][0] - v[0][0], v[1][1] - v[0][1], v[1][2] - v[0][2]];
    let d2 = [v[2][0] - v[0][0], v[2][1] - v[0][1], v[2][2] - v[0][2]];
    let d3 = [v[3][0] - v[0][0], v[3][1] - v[0][1], v[3][2] - v[0][2]];
    let det = d1[0] * (d2[1] * d3[2] - d2[2] * d3[1])
        - d1[1] * (d2[0] * d3[2] - d2[2] * d3[0])
        + d1[2] * (d2[0] * d3[1] - d2[1] * d3[0]);
    det / 6.0
}

/// Build the uniform N^3-cube mesh of `box_`, six tetrahedra per cube.
pub fn build_uniform_mesh(n: usize, box_: BoundingBox) -> TetMesh {
    assert!(n >= 1, "need at least one cube per axis");
    for d in 0..3 {
        assert!(box_.hi[d] > box_.lo[d], "degenerate box");
    }
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np * np);
    let mut grid_coords = Vec::with_capacity(np * np * np);
    let step = [
        (box_.hi[0] - box_.lo[0]) / n as f64,
        (box_.hi[1] - box_.lo[1]) / n as f64,
        (box_.hi[2] - box_.lo[2]) / n as f64,
    ];
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push([
                    box_.lo[0] + i as f64 * step[0],
                    box_.lo[1] + j as f64 * step[1],
                    box_.lo[2] + k as f64 * step[2],
                ]);
                grid_coords.push([i as u32, j as u32, k as u32]);
            }
        }
    }
    let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);

    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for perm in KUHN_PERMS {
                    let mut c = [i, j, k];
                    let mut ids = [vid(c[0], c[1], c[2]), 0, 0, 0];
                    for (step_idx, axis) in perm.iter().enumerate() {
                        c[*axis] += 1;
                        ids[step_idx + 1] = vid(c[0], c[1], c[2]);
                    }
                    let pts = [
                        vertices[ids[0]],
                        vertices[ids[1]],
                        vertices[ids[2]],
                        vertices[ids[3]],
                    ];
                    if signed_volume(&pts) < 0.0 {
                        ids.swap(2, 3);
                    }
                    tets.push(ids);
                }
            }
        }
    }
    let h = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
    TetMesh {
        box_,
        n,
        vertices,
        grid_coords,
        tets,
        h,
    }
}

/// Cut elements (candidates before quadrature certification, the final
/// T_h^Gamma after it).
#[derive(Debug, Clone)]
pub struct CutElementSet {
    /// Sorted tet ids.
    pub elements: Vec<usize>,
    /// phi at the four vertices of each listed element.
    pub vertex_phi: Vec<[f64; 4]>,
    /// Local face index when the cut was detected to lie on that element
    /// face (all three face vertices have phi = 0); used for the ownership
    /// tie-break of face-degenerate cuts.
    pub zero_face: Vec<Option<u8>>,
}

impl CutElementSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Local faces of a tet as the vertex opposite to the face.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Barycentric sample lattice used by the classification safeguard: all
/// points (i,j,k,l)/s with i+j+k+l = s.
fn barycentric_lattice(s: usize) -> Vec<[f64; 4]> {
    let mut pts = Vec::new();
    for i in 0..=s {
        for j in 0..=(s - i) {
            for k in 0..=(s - i - j) {
                let l = s - i - j - k;
                let inv = 1.0 / s as f64;
                pts.push([i as f64 * inv, j as f64 * inv, k as f64 * inv, l as f64 * inv]);
            }
        }
    }
    pts
}

/// Identify the elements whose interior is crossed by the zero level set.
///
/// An element is a candidate if phi attains both signs (or touches zero)
/// over its vertices, or if the finer barycentric sampling grid detects a
/// sign change that the vertices miss (tangential grazing cuts). Candidates
/// whose surface patch turns out to have zero area are dropped later when
/// the quadrature rule comes out empty.
pub fn classify_cut_elements(
    mesh: &TetMesh,
    surface: &LevelSetSurface,
) -> Result<CutElementSet> {
    let lattice = barycentric_lattice(6);
    let eps0 = surface.eps_surf();

    let hits: Vec<Option<(usize, [f64; 4], Option<u8>)>> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|t| {
            let verts = mesh.tet_vertices(t);
            let phi = [
                surface.eval(&verts[0]),
                surface.eval(&verts[1]),
                surface.eval(&verts[2]),
                surface.eval(&verts[3]),
            ];
            let mut min = phi[0].min(phi[1]).min(phi[2]).min(phi[3]);
            let mut max = phi[0].max(phi[1]).max(phi[2]).max(phi[3]);
            if !(min <= eps0 && max >= -eps0) {
                // cheap reject: all vertices strictly one side; a cut can
                // still hide inside only if the element straddles the zero
                // set without any vertex noticing, so run the safeguard when
                // any vertex is within a band of the surface
                let band = 2.0 * mesh.h * grad_bound(surface, &verts);
                if min.abs().min(max.abs()) > band {
                    return None;
                }
            }
            if min > eps0 || max < -eps0 {
                // vertices one-sided: sampling safeguard
                for b in &lattice {
                    let p = bary_to_point(&verts, b);
                    let v = surface.eval(&p);
                    min = min.min(v);
                    max = max.max(v);
                    if min < -eps0 && max > eps0 {
                        break;
                    }
                }
                if !(min < -eps0 && max > eps0) {
                    return None;
                }
                log::debug!("element {t}: cut detected only by the sampling safeguard");
            }
            // detect a face lying entirely on the zero level set
            let mut zero_face = None;
            for (f, face) in TET_FACES.iter().enumerate() {
                if face.iter().all(|&v| phi[v].abs() <= eps0) && phi[f].abs() > eps0 {
                    zero_face = Some(f as u8);
                }
            }
            Some((t, phi, zero_face))
        })
        .collect();

    let mut elements = Vec::new();
    let mut vertex_phi = Vec::new();
    let mut zero_face = Vec::new();
    for h in hits.into_iter().flatten() {
        elements.push(h.0);
        vertex_phi.push(h.1);
        zero_face.push(h.2);
    }
    if elements.is_empty() {
        return Err(Error::EmptyCut);
    }
    Ok(CutElementSet {
        elements,
        vertex_phi,
        zero_face,
    })
}

fn grad_bound(surface: &LevelSetSurface, verts: &[Point; 4]) -> f64 {
    let c = [
        0.25 * (verts[0][0] + verts[1][0] + verts[2][0] + verts[3][0]),
        0.25 * (verts[0][1] + verts[1][1] + verts[2][1] + verts[3][1]),
        0.25 * (verts[0][2] + verts[1][2] + verts[2][2] + verts[3][2]),
    ];
    let g = surface.grad(&c);
    (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt().max(1e-30)
}

pub(crate) fn bary_to_point(verts: &[Point; 4], b: &[f64; 4]) -> Point {
    let mut p = [0.0; 3];
    for d in 0..3 {
        p[d] = b[0] * verts[0][d] + b[1] * verts[1][d] + b[2] * verts[2][d] + b[3] * verts[3][d];
    }
    p
}

/// Map tet faces (as sorted vertex triples) to the tets sharing them,
/// restricted to the given element ids.
pub fn face_map(mesh: &TetMesh, elements: &[usize]) -> std::collections::HashMap<[usize; 3], Vec<usize>> {
    let mut map: std::collections::HashMap<[usize; 3], Vec<usize>> = std::collections::HashMap::new();
    for &t in elements {
        let ids = mesh.tets[t];
        for face in TET_FACES {
            let mut key = [ids[face[0]], ids[face[1]], ids[face[2]]];
            key.sort_unstable();
            map.entry(key).or_default().push(t);
        }
    }
    map
}

/// Dump the mesh in a plain-text format: one vertex per line, then one tet
/// per line (vertex indices).
pub fn dump_mesh(mesh: &TetMesh, w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "vertices {}", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2])?;
    }
    writeln!(w, "tets {}", mesh.tets.len())?;
    for t in &mesh.tets {
        writeln!(w, "{} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_six_tets_volume_one() {
        let m = build_uniform_mesh(1, BoundingBox::new([0.0; 3], [1.0; 3]));
        assert_eq!(m.tets.len(), 6);
        let vol: f64 = (0..6).map(|t| m.signed_volume(t)).sum();
        assert!((vol - 1.0).abs() < 1e-12);
        for t in 0..6 {
            assert!(m.signed_volume(t) > 0.0);
        }
    }

    #[test]
    fn n4_box_tet_count() {
        let m = build_uniform_mesh(4, BoundingBox::cube(2.0));
        assert_eq!(m.tets.len(), 6 * 64);
        let vol: f64 = (0..m.tets.len()).map(|t| m.signed_volume(t)).sum();
        assert!((vol - 64.0).abs() / 64.0 < 1e-10);
    }

    #[test]
    fn interior_faces_shared_by_exactly_two_tets() {
        // exhaustive face-hash check for N=2
        let m = build_uniform_mesh(2, BoundingBox::new([0.0; 3], [1.0; 3]));
        let all: Vec<usize> = (0..m.tets.len()).collect();
        let map = face_map(&m, &all);
        for (face, tets) in &map {
            assert!(tets.len() <= 2, "face {:?} in {} tets", face, tets.len());
            if tets.len() == 1 {
                // must be a boundary face: all three vertices on the box hull
                for &v in face {
                    let p = m.vertices[v];
                    let on_hull = p.iter().any(|&c| c == 0.0 || c == 1.0);
                    assert!(on_hull, "lonely interior face {:?}", face);
                }
            }
        }
        let interior = map.values().filter(|v| v.len() == 2).count();
        assert!(interior > 0);
    }

    #[test]
    fn sphere_classification_matches_dense_sampling_oracle() {
        let surface = LevelSetSurface::sphere();
        let m = build_uniform_mesh(4, BoundingBox::cube(2.0));
        let cut = classify_cut_elements(&m, &surface).unwrap();

        // oracle: dense uniform sampling inside each tet (strict sign change)
        let mut oracle = Vec::new();
        for t in 0..m.tets.len() {
            let verts = m.tet_vertices(t);
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let s = 20;
            for i in 0..=s {
                for j in 0..=(s - i) {
                    for k in 0..=(s - i - j) {
                        let l = s - i - j - k;
                        let b = [
                            i as f64 / s as f64,
                            j as f64 / s as f64,
                            k as f64 / s as f64,
                            l as f64 / s as f64,
                        ];
                        let v = surface.eval(&bary_to_point(&verts, &b));
                        min = min.min(v);
                        max = max.max(v);
                    }
                }
            }
            if min < 0.0 && max > 0.0 {
                oracle.push(t);
            }
        }
        // candidates may include grazing elements that certification drops,
        // but every oracle cut must be present
        for t in &oracle {
            assert!(cut.elements.contains(t), "oracle cut {t} missing");
        }
        // and the count matches once zero-measure touches are excluded
        let extra: Vec<_> = cut
            .elements
            .iter()
            .filter(|t| !oracle.contains(t))
            .collect();
        // at N=4 the sphere touches grid vertices exactly; those tets carry
        // zero-area patches and are legitimately classified as candidates
        for t in extra {
            let phi = &cut.vertex_phi[cut.elements.iter().position(|e| e == t).unwrap()];
            let strict_change =
                phi.iter().any(|&v| v > 0.0) && phi.iter().any(|&v| v < 0.0);
            assert!(!strict_change, "unexpected extra cut {t} with sign change");
        }
    }

    #[test]
    fn sphere_cut_elements_have_sign_change_n16() {
        // Candidates must at least touch both signs; the strict version of
        // this check runs on the certified cut set in the quadrature tests
        // (the sphere touches grid vertices exactly at N=16, which leaves
        // zero-area touch candidates here).
        let surface = LevelSetSurface::sphere();
        let m = build_uniform_mesh(16, BoundingBox::cube(2.0));
        let cut = classify_cut_elements(&m, &surface).unwrap();
        let mut strict = 0usize;
        for (i, _t) in cut.elements.iter().enumerate() {
            let phi = cut.vertex_phi[i];
            let min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(min <= 0.0 && max >= 0.0, "one-sided candidate at N=16");
            if min < 0.0 && max > 0.0 {
                strict += 1;
            }
        }
        assert!(strict * 10 >= cut.len() * 9, "touch candidates dominate");
    }

    #[test]
    fn cut_count_scales_quadratically_for_sphere() {
        let surface = LevelSetSurface::sphere();
        let count = |n: usize| {
            let m = build_uniform_mesh(n, BoundingBox::cube(2.0));
            classify_cut_elements(&m, &surface).unwrap().len() as f64
        };
        let c8 = count(8);
        let c16 = count(16);
        let ratio = c16 / c8;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "cut count ratio {ratio} outside [3.5, 4.5]"
        );
    }

    #[test]
    fn cut_vertices_stay_in_narrow_band() {
        let surface = LevelSetSurface::sphere();
        let m = build_uniform_mesh(8, BoundingBox::cube(2.0));
        let cut = classify_cut_elements(&m, &surface).unwrap();
        let bound = 2.0 * 3.0f64.sqrt() * m.cube_width();
        for (i, &t) in cut.elements.iter().enumerate() {
            let _ = t;
            for v in cut.vertex_phi[i] {
                assert!(v.abs() <= bound, "vertex phi {v} outside band {bound}");
            }
        }
    }

    #[test]
    fn empty_cut_reported() {
        let surface = LevelSetSurface::new(
            "far-sphere",
            crate::levelset::SurfaceKind::Custom {
                phi: std::sync::Arc::new(|x: &Point| {
                    ((x[0] - 50.0).powi(2) + x[1].powi(2) + x[2].powi(2)).sqrt() - 1.0
                }),
                grad: None,
            },
            BoundingBox::cube(2.0),
        );
        let m = build_uniform_mesh(4, BoundingBox::cube(2.0));
        assert!(matches!(
            classify_cut_elements(&m, &surface),
            Err(Error::EmptyCut)
        ));
    }
}
