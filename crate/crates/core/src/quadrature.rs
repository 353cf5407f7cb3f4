//! High-order quadrature rules exactly on the surface patches F_T = T ∩ Γ.
//!
//! For a cut tetrahedron T a local orthonormal frame (nu, nv, nw) is chosen
//! so that T fits in the frame-aligned box (0,a)×(0,b)×(0,c) and rays in the
//! nu direction cross the surface transversally. The patch integral is then
//! the iterated integral over (s,t) of u(x(r0,s,t)) |grad phi| / |nu·grad phi|
//! summed over the ray roots r0. The (s,t) integrand is discontinuous where
//! rays enter or leave the patch, so both parameter directions are split at
//! those breakpoints (located by scanning and bisection) and a Gauss rule is
//! applied per smooth piece.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levelset::{cross3, dot3, norm3, sub3, LevelSetSurface, Point, Vector};
use crate::mesh::{bary_to_point, face_map, CutElementSet, TetMesh, TET_FACES};

/// Preferred lower bound on |nu·grad phi| / |grad phi| over the patch; a
/// frame observing a smaller ratio is re-selected.
pub const TAU_SING: f64 = 0.2;
/// Hard floor below which no usable frame exists.
pub const RATIO_FLOOR: f64 = 0.05;
/// Barycentric tolerance for points counted as inside the element.
pub const BARY_TOL: f64 = 1e-12;
/// Relative tolerance of the root solve on phi.
pub const EPS_ROOT_REL: f64 = 1e-13;



/// Orthonormal frame in which the element fits a coordinate box.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub origin: Point,
    /// nu, nv, nw (right-handed, orthonormal to 1e-14).
    pub axes: [Vector; 3],
    /// Extents (a, b, c) of the frame-aligned box containing T.
    pub extents: [f64; 3],
}

impl LocalFrame {
    pub fn point(&self, r: f64, s: f64, t: f64) -> Point {
        let [nu, nv, nw] = &self.axes;
        [
            self.origin[0] + r * nu[0] + s * nv[0] + t * nw[0],
            self.origin[1] + r * nu[1] + s * nv[1] + t * nw[1],
            self.origin[2] + r * nu[2] + s * nv[2] + t * nw[2],
        ]
    }
}

/// Quadrature rule on one surface patch: positions on Γ and positive
/// area weights.
#[derive(Debug, Clone)]
pub struct ElementSurfaceRule {
    pub element: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// 1D Gauss order used per smooth piece.
    pub order: usize,
}

impl ElementSurfaceRule {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Certified cut geometry: the final T_h^Γ and one rule per element.
#[derive(Debug, Clone)]
pub struct CutGeometry {
    pub cutset: CutElementSet,
    pub rules: Vec<ElementSurfaceRule>,
}

impl CutGeometry {
    pub fn total_area(&self) -> f64 {
        self.rules.iter().map(|r| r.area()).sum()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_01(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let n = q;
    for i in 0..(n + 1) / 2 {
        // Newton iteration on P_n over [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), derivative from the recurrence
            pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n == 1 {
        nodes[0] = 0.5;
        weights[0] = 1.0;
    }
    (nodes, weights)
}

/// Barycentric-coordinate helper for one tetrahedron.
#[derive(Debug, Clone)]
pub(crate) struct TetGeom {
    pub verts: [Point; 4],
    inv: [[f64; 3]; 3],
}

impl TetGeom {
    pub fn new(verts: [Point; 4]) -> Self {
        let c = [
            sub3(&verts[1], &verts[0]),
            sub3(&verts[2], &verts[0]),
            sub3(&verts[3], &verts[0]),
        ];
        let m = [
            [c[0][0], c[1][0], c[2][0]],
            [c[0][1], c[1][1], c[2][1]],
            [c[0][2], c[1][2], c[2][2]],
        ];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let inv_det = 1.0 / det;
        let inv = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
            ],
        ];
        Self { verts, inv }
    }

    /// Barycentric coordinates (lambda_0..lambda_3) of x.
    pub fn bary(&self, x: &Point) -> [f64; 4] {
        let d = sub3(x, &self.verts[0]);
        let b1 = self.inv[0][0] * d[0] + self.inv[0][1] * d[1] + self.inv[0][2] * d[2];
        let b2 = self.inv[1][0] * d[0] + self.inv[1][1] * d[1] + self.inv[1][2] * d[2];
        let b3 = self.inv[2][0] * d[0] + self.inv[2][1] * d[1] + self.inv[2][2] * d[2];
        [1.0 - b1 - b2 - b3, b1, b2, b3]
    }

    pub fn min_bary(&self, x: &Point) -> f64 {
        let b = self.bary(x);
        b[0].min(b[1]).min(b[2]).min(b[3])
    }
}

/// Sample points of the patch Γ ∩ T collected from edge cuts and (if those
/// are absent) sign-change segments of a barycentric lattice.
fn patch_samples(geom: &TetGeom, surface: &LevelSetSurface) -> Vec<Point> {
    let bisect = |mut a: Point, mut fa: f64, mut b: Point| {
        for _ in 0..60 {
            let mid = [
                0.5 * (a[0] + b[0]),
                0.5 * (a[1] + b[1]),
                0.5 * (a[2] + b[2]),
            ];
            let fm = surface.eval(&mid);
            if (fm < 0.0) == (fa < 0.0) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        [
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
        ]
    };
    let mut out = Vec::new();
    let phi_v: Vec<f64> = geom.verts.iter().map(|v| surface.eval(v)).collect();
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (phi_v[i] < 0.0) != (phi_v[j] < 0.0) && phi_v[i] != 0.0 && phi_v[j] != 0.0 {
                out.push(bisect(geom.verts[i], phi_v[i], geom.verts[j]));
            }
        }
    }
    if out.len() < 2 {
        // grazing cut: pair up lattice points of opposite sign
        let s = 5usize;
        let mut neg: Option<Point> = None;
        let mut pos: Vec<Point> = Vec::new();
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
                    let p = bary_to_point(&geom.verts, &b);
                    let v = surface.eval(&p);
                    if v < 0.0 {
                        if neg.is_none() {
                            neg = Some(p);
                        }
                    } else if v > 0.0 {
                        pos.push(p);
                    }
                }
            }
        }
        if let Some(n) = neg {
            let fneg = surface.eval(&n);
            for p in pos.into_iter().take(8) {
                out.push(bisect(n, fneg, p));
            }
        }
    }
    if out.is_empty() {
        // face- or edge-coincident zero set: the zero vertices themselves
        // are patch points
        for (v, &phi) in geom.verts.iter().zip(&phi_v) {
            if phi.abs() <= surface.eps_surf() {
                out.push(*v);
            }
        }
        if out.len() >= 2 {
            let mids: Vec<Point> = out
                .windows(2)
                .map(|w| {
                    [
                        0.5 * (w[0][0] + w[1][0]),
                        0.5 * (w[0][1] + w[1][1]),
                        0.5 * (w[0][2] + w[1][2]),
                    ]
                })
                .filter(|m| surface.eval(m).abs() <= surface.eps_surf())
                .collect();
            out.extend(mids);
        }
    }
    out
}

/// Candidate frames in preference order for a cut element.
fn frame_candidates(
    geom: &TetGeom,
    surface: &LevelSetSurface,
    samples: &[Point],
) -> Vec<(LocalFrame, f64)> {
    let mut normals: Vec<Vector> = Vec::with_capacity(samples.len());
    for p in samples {
        if let Ok(n) = surface.unit_normal(p) {
            normals.push(n);
        }
    }
    if normals.is_empty() {
        normals.push([0.0, 0.0, 1.0]);
    }
    let mut cands: Vec<(Vector, f64)> = Vec::new();
    for d in 0..3 {
        let mut axis = [0.0; 3];
        axis[d] = 1.0;
        let ratio = normals
            .iter()
            .map(|n| dot3(&axis, n).abs())
            .fold(f64::INFINITY, f64::min);
        cands.push((axis, ratio));
    }
    cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    if cands[0].1 < TAU_SING {
        // rotate the frame toward the average surface normal
        let mut avg = [0.0; 3];
        for n in &normals {
            for d in 0..3 {
                avg[d] += n[d];
            }
        }
        let len = norm3(&avg);
        if len > 1e-12 {
            let nu = [avg[0] / len, avg[1] / len, avg[2] / len];
            let ratio = normals
                .iter()
                .map(|n| dot3(&nu, n).abs())
                .fold(f64::INFINITY, f64::min);
            cands.insert(0, (nu, ratio));
        }
    }
    cands
        .into_iter()
        .map(|(nu, ratio)| (build_frame(geom, nu), ratio))
        .collect()
}

/// Complete nu into a right-handed orthonormal frame and fit the box.
fn build_frame(geom: &TetGeom, nu: Vector) -> LocalFrame {
    // pick the coordinate axis least aligned with nu as the second direction
    let mut least = 0;
    for d in 1..3 {
        if nu[d].abs() < nu[least].abs() {
            least = d;
        }
    }
    let mut e = [0.0; 3];
    e[least] = 1.0;
    let proj = dot3(&e, &nu);
    let mut nv = [e[0] - proj * nu[0], e[1] - proj * nu[1], e[2] - proj * nu[2]];
    let len = norm3(&nv);
    for item in nv.iter_mut() {
        *item /= len;
    }
    let nw = cross3(&nu, &nv);

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &geom.verts {
        for (axis_idx, axis) in [nu, nv, nw].iter().enumerate() {
            let c = dot3(v, axis);
            lo[axis_idx] = lo[axis_idx].min(c);
            hi[axis_idx] = hi[axis_idx].max(c);
        }
    }
    let pad = 1e-12 * (1.0 + (hi[0] - lo[0]).max(hi[1] - lo[1]).max(hi[2] - lo[2]));
    let origin = [
        (lo[0] - pad) * nu[0] + (lo[1] - pad) * nv[0] + (lo[2] - pad) * nw[0],
        (lo[0] - pad) * nu[1] + (lo[1] - pad) * nv[1] + (lo[2] - pad) * nw[1],
        (lo[0] - pad) * nu[2] + (lo[1] - pad) * nv[2] + (lo[2] - pad) * nw[2],
    ];
    LocalFrame {
        origin,
        axes: [nu, nv, nw],
        extents: [
            hi[0] - lo[0] + 2.0 * pad,
            hi[1] - lo[1] + 2.0 * pad,
            hi[2] - lo[2] + 2.0 * pad,
        ],
    }
}

/// Select the frame for one cut element (the best candidate).
pub fn choose_frame(
    mesh: &TetMesh,
    element: usize,
    surface: &LevelSetSurface,
) -> Result<LocalFrame> {
    let geom = TetGeom::new(mesh.tet_vertices(element));
    let samples = patch_samples(&geom, surface);
    let cands = frame_candidates(&geom, surface, &samples);
    let best = cands
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if best.1 < RATIO_FLOOR {
        return Err(Error::FrameFailure {
            element,
            floor: RATIO_FLOOR,
        });
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Root {
    r: f64,
    min_bary: f64,
    /// local face with the smallest barycentric coordinate
    face: u8,
}

#[derive(Debug, Clone, PartialEq)]
struct SPiece {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Debug, Clone, Copy)]
struct TPiece {
    lo: f64,
    hi: f64,
    grade_lo: bool,
    grade_hi: bool,
}

const TAG_BOX: u8 = 250;

/// Context for building one element rule.
struct RuleBuilder<'a> {
    surface: &'a LevelSetSurface,
    geom: &'a TetGeom,
    frame: &'a LocalFrame,
    element: usize,
    phi_scale: f64,
    /// worst |nu·grad|/|grad| ratio observed at accepted roots
    min_ratio: f64,
}

impl<'a> RuleBuilder<'a> {
    fn new(
        surface: &'a LevelSetSurface,
        geom: &'a TetGeom,
        frame: &'a LocalFrame,
        element: usize,
    ) -> Self {
        let phi_scale = geom
            .verts
            .iter()
            .map(|v| surface.eval(v).abs())
            .fold(0.0f64, f64::max)
            .max(1e-30);
        Self {
            surface,
            geom,
            frame,
            element,
            phi_scale,
            min_ratio: f64::INFINITY,
        }
    }

    fn phi_at(&self, r: f64, s: f64, t: f64) -> f64 {
        self.surface.eval(&self.frame.point(r, s, t))
    }

    /// All roots of phi along the ray r in [0, a] that lie inside T.
    fn ray_roots(&self, s: f64, t: f64) -> Result<Vec<Root>> {
        let a = self.frame.extents[0];
        let m = 16usize;
        let mut vals = [0.0f64; 17];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = self.phi_at(a * i as f64 / m as f64, s, t);
        }
        let mut roots: Vec<Root> = Vec::new();
        for i in 0..m {
            let (f0, f1) = (vals[i], vals[i + 1]);
            let r = if f0 == 0.0 {
                if i == 0 {
                    Some(0.0)
                } else {
                    None // already handled as the right endpoint of segment i-1
                }
            } else if f1 == 0.0 {
                Some(a * (i + 1) as f64 / m as f64)
            } else if (f0 < 0.0) != (f1 < 0.0) {
                Some(self.solve_root(
                    a * i as f64 / m as f64,
                    a * (i + 1) as f64 / m as f64,
                    s,
                    t,
                )?)
            } else {
                None
            };
            if let Some(r) = r {
                if let Some(root) = self.classify_root(r, s, t) {
                    roots.push(root);
                }
            }
        }
        roots.dedup_by(|x, y| (x.r - y.r).abs() < 1e-12 * a.max(1e-30));
        Ok(roots)
    }

    /// Safeguarded Newton/bisection solve for phi(x(r,s,t)) = 0 in [lo, hi].
    fn solve_root(&self, mut lo: f64, mut hi: f64, s: f64, t: f64) -> Result<f64> {
        let eps = EPS_ROOT_REL * self.phi_scale;
        let mut flo = self.phi_at(lo, s, t);
        let mut r = 0.5 * (lo + hi);
        let nu = &self.frame.axes[0];
        for iter in 0..100 {
            let x = self.frame.point(r, s, t);
            let f = self.surface.eval(&x);
            if f.abs() <= eps {
                return Ok(r);
            }
            if (f < 0.0) == (flo < 0.0) {
                lo = r;
                flo = f;
            } else {
                hi = r;
            }
            // Newton step, bisection fallback when it leaves the bracket
            let d = dot3(nu, &self.surface.grad(&x));
            let mut next = if d != 0.0 { r - f / d } else { f64::NAN };
            if !(next > lo && next < hi) || iter < 6 {
                next = 0.5 * (lo + hi);
            }
            r = next;
        }
        Err(Error::RootFindFailure {
            element: self.element,
            iterations: 100,
        })
    }

    /// Keep the root only when it sits inside T (within BARY_TOL).
    fn classify_root(&self, r: f64, s: f64, t: f64) -> Option<Root> {
        let x = self.frame.point(r, s, t);
        let b = self.geom.bary(&x);
        let mut min_bary = f64::INFINITY;
        let mut face = 0u8;
        for (i, &v) in b.iter().enumerate() {
            if v < min_bary {
                min_bary = v;
                face = i as u8;
            }
        }
        if min_bary >= -BARY_TOL {
            Some(Root { r, min_bary, face })
        } else {
            None
        }
    }

    fn count(&self, s: f64, t: f64) -> Result<usize> {
        Ok(self.ray_roots(s, t)?.len())
    }

    /// Exact s-breakpoints at fixed t: s-sections of the patch are bounded
    /// by the boundary curves Γ ∩ ∂T, which lie on the four element faces.
    /// Intersecting each face triangle with the t-plane gives a segment; the
    /// roots of phi along those segments are exactly the section endpoints.
    fn s_breakpoints(&self, t: f64) -> Vec<(f64, u8)> {
        let nv = &self.frame.axes[1];
        let nw = &self.frame.axes[2];
        let eps = EPS_ROOT_REL * self.phi_scale;
        let mut out: Vec<(f64, u8)> = Vec::new();
        for (f, face) in TET_FACES.iter().enumerate() {
            let tri = [
                self.geom.verts[face[0]],
                self.geom.verts[face[1]],
                self.geom.verts[face[2]],
            ];
            let tau = |p: &Point| dot3(&sub3(p, &self.frame.origin), nw);
            let tv = [tau(&tri[0]), tau(&tri[1]), tau(&tri[2])];
            // marching-triangle: collect the (up to two) edge crossings of
            // the level line tau = t
            let mut ends: Vec<Point> = Vec::new();
            for (i, j) in [(0usize, 1usize), (1, 2), (2, 0)] {
                let (ti, tj) = (tv[i], tv[j]);
                if (ti - t) == 0.0 && (tj - t) == 0.0 {
                    // edge lies in the t-plane
                    ends.push(tri[i]);
                    ends.push(tri[j]);
                } else if ((ti - t) < 0.0) != ((tj - t) < 0.0) {
                    let u = (t - ti) / (tj - ti);
                    ends.push([
                        tri[i][0] + u * (tri[j][0] - tri[i][0]),
                        tri[i][1] + u * (tri[j][1] - tri[i][1]),
                        tri[i][2] + u * (tri[j][2] - tri[i][2]),
                    ]);
                }
            }
            if ends.len() < 2 {
                continue;
            }
            let (p0, p1) = (ends[0], ends[1]);
            let m = 14usize;
            let at = |u: f64| -> Point {
                [
                    p0[0] + u * (p1[0] - p0[0]),
                    p0[1] + u * (p1[1] - p0[1]),
                    p0[2] + u * (p1[2] - p0[2]),
                ]
            };
            let vals: Vec<f64> = (0..=m)
                .map(|i| self.surface.eval(&at(i as f64 / m as f64)))
                .collect();
            let zeroish = vals.iter().filter(|v| v.abs() <= eps).count();
            if zeroish >= 3 {
                // the patch is coincident with this face slice: the whole
                // segment belongs to the patch, endpoints are breakpoints
                for p in [p0, p1] {
                    out.push((dot3(&sub3(&p, &self.frame.origin), nv), f as u8));
                }
                continue;
            }
            for i in 0..m {
                let (f0, f1) = (vals[i], vals[i + 1]);
                let mut root_u = None;
                if f0 == 0.0 {
                    if i == 0 {
                        root_u = Some(0.0);
                    }
                } else if f1 == 0.0 {
                    root_u = Some((i + 1) as f64 / m as f64);
                } else if (f0 < 0.0) != (f1 < 0.0) {
                    let (mut lo, mut hi) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
                    let mut flo = f0;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let fm = self.surface.eval(&at(mid));
                        if fm.abs() <= eps {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if (fm < 0.0) == (flo < 0.0) {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    root_u = Some(0.5 * (lo + hi));
                }
                if let Some(u) = root_u {
                    let p = at(u);
                    out.push((dot3(&sub3(&p, &self.frame.origin), nv), f as u8));
                }
            }
        }
        let b = self.frame.extents[1];
        out.retain(|(s, _)| *s > 1e-13 * b && *s < b * (1.0 - 1e-13));
        out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        out.dedup_by(|x, y| (x.0 - y.0).abs() < 1e-12 * b);
        out
    }

    /// Split (0, b) into maximal intervals of constant ray-root count at
    /// fixed t.
    fn s_pieces(&self, t: f64) -> Result<Vec<SPiece>> {
        let b = self.frame.extents[1];
        let mut edges: Vec<f64> = vec![0.0];
        edges.extend(self.s_breakpoints(t).into_iter().map(|(s, _)| s));
        edges.push(b);
        let mut pieces = Vec::new();
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi - lo < 1e-12 * b {
                continue;
            }
            let count = self.count(0.5 * (lo + hi), t)?;
            if count > 0 {
                pieces.push(SPiece { lo, hi, count });
            }
        }
        Ok(pieces)
    }

    /// Signature of the s-structure used to detect t-direction breakpoints:
    /// per piece the root count with the generating face tags.
    fn t_signature(&self, t: f64) -> Result<Vec<(usize, u8, u8)>> {
        let b = self.frame.extents[1];
        let mut edges: Vec<(f64, u8)> = vec![(0.0, TAG_BOX)];
        edges.extend(self.s_breakpoints(t));
        edges.push((b, TAG_BOX));
        let mut sig = Vec::new();
        for w in edges.windows(2) {
            let (lo, lo_tag) = w[0];
            let (hi, hi_tag) = w[1];
            if hi - lo < 1e-12 * b {
                continue;
            }
            let count = self.count(0.5 * (lo + hi), t)?;
            if count > 0 {
                sig.push((count, lo_tag, hi_tag));
            }
        }
        Ok(sig)
    }

    /// Split (0, c) at t-values where the s-structure changes. Each piece
    /// records whether a section is born/dies at its ends (fold points of
    /// the patch boundary, where the section width behaves like a square
    /// root and the quadrature needs an end-point grading).
    fn t_pieces(&self, q: usize, seeds_t: &[f64]) -> Result<Vec<TPiece>> {
        let c = self.frame.extents[2];
        let n_scan = 4 * q;
        let mut samples: Vec<f64> = (0..=n_scan).map(|i| c * i as f64 / n_scan as f64).collect();
        for &t in seeds_t {
            if t > 0.0 && t < c {
                // the seed plus nudged copies so that a sample lands inside
                // thin slices on either side of a boundary vertex
                let d = 1e-7 * c;
                samples.push(t);
                samples.push((t - d).max(0.0));
                samples.push((t + d).min(c));
            }
        }
        samples.sort_by(|x, y| x.partial_cmp(y).unwrap());
        samples.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * c);

        let sigs: Vec<Vec<(usize, u8, u8)>> = samples
            .iter()
            .map(|&t| self.t_signature(t))
            .collect::<Result<_>>()?;

        // cuts between samples with differing signatures; record the change
        // in the number of sections to classify the breakpoint
        let mut cuts: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..samples.len() - 1 {
            if sigs[i] != sigs[i + 1] {
                let mut lo = samples[i];
                let mut hi = samples[i + 1];
                let ref_sig = sigs[i].clone();
                for _ in 0..45 {
                    if hi - lo <= 1e-13 * c {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if self.t_signature(mid)? == ref_sig {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push((0.5 * (lo + hi), sigs[i].len(), sigs[i + 1].len()));
            }
        }
        let mut pieces = Vec::new();
        let mut prev = (0.0, 0usize, 0usize);
        for &(t, before, after) in cuts.iter().chain(std::iter::once(&(c, 0usize, 0usize))) {
            if t - prev.0 > 1e-12 * c {
                pieces.push(TPiece {
                    lo: prev.0,
                    hi: t,
                    // a section born entering the piece: sqrt growth at lo
                    grade_lo: prev.2 > prev.1,
                    // a section dying leaving the piece: sqrt decay at hi
                    grade_hi: after < before,
                });
            }
            prev = (t, before, after);
        }
        Ok(pieces)
    }

    fn build(&mut self, q: usize, seeds_t: &[f64]) -> Result<ElementSurfaceRule> {
        let (nodes, wts) = gauss_legendre_01(q);
        let t_pieces = self.t_pieces(q, seeds_t)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let nu = self.frame.axes[0];
        for piece_t in t_pieces {
            let (t_lo, t_hi) = (piece_t.lo, piece_t.hi);
            let t_len = t_hi - t_lo;
            for (tn, tw) in nodes.iter().zip(&wts) {
                // graded substitution with vanishing derivative at fold ends
                // turns sqrt-type section widths into analytic integrands
                let (sigma, dsigma) = match (piece_t.grade_lo, piece_t.grade_hi) {
                    (true, true) => (tn * tn * (3.0 - 2.0 * tn), 6.0 * tn * (1.0 - tn)),
                    (true, false) => (tn * tn, 2.0 * tn),
                    (false, true) => (tn * (2.0 - tn), 2.0 * (1.0 - tn)),
                    (false, false) => (*tn, 1.0),
                };
                let t = t_lo + t_len * sigma;
                let wt = t_len * dsigma * tw;
                for piece in self.s_pieces(t)? {
                    let s_len = piece.hi - piece.lo;
                    for (sn, sw) in nodes.iter().zip(&wts) {
                        let s = piece.lo + s_len * sn;
                        let ws = s_len * sw;
                        for root in self.ray_roots(s, t)? {
                            let x = self.frame.point(root.r, s, t);
                            let g = self.surface.grad(&x);
                            let gn = norm3(&g);
                            let dn = dot3(&nu, &g).abs();
                            if gn <= 0.0 || dn <= 0.0 {
                                return Err(Error::DegenerateGradient(x[0], x[1], x[2]));
                            }
                            self.min_ratio = self.min_ratio.min(dn / gn);
                            points.push(x);
                            weights.push(wt * ws * gn / dn);
                        }
                    }
                }
            }
        }
        Ok(ElementSurfaceRule {
            element: self.element,
            points,
            weights,
            order: q,
        })
    }
}

#[doc(hidden)]
pub fn debug_t_pieces(
    mesh: &TetMesh,
    element: usize,
    surface: &LevelSetSurface,
    q: usize,
) -> Vec<(f64, f64, bool, bool)> {
    let geom = TetGeom::new(mesh.tet_vertices(element));
    let samples = patch_samples(&geom, surface);
    let frame = choose_frame(mesh, element, surface).unwrap();
    let builder = RuleBuilder::new(surface, &geom, &frame, element);
    let seeds: Vec<f64> = samples
        .iter()
        .map(|p| dot3(&sub3(p, &frame.origin), &frame.axes[2]))
        .collect();
    builder
        .t_pieces(q, &seeds)
        .unwrap()
        .into_iter()
        .map(|p| (p.lo, p.hi, p.grade_lo, p.grade_hi))
        .collect()
}

/// Build the quadrature rule for one cut element. The returned rule may be
/// empty when the intersection has zero area (grazing touch).
pub fn build_element_rule(
    mesh: &TetMesh,
    element: usize,
    surface: &LevelSetSurface,
    q: usize,
) -> Result<ElementSurfaceRule> {
    let geom = TetGeom::new(mesh.tet_vertices(element));
    let samples = patch_samples(&geom, surface);
    if samples.is_empty() {
        // no surface crossing found at all: zero-measure touch
        return Ok(ElementSurfaceRule {
            element,
            points: Vec::new(),
            weights: Vec::new(),
            order: q,
        });
    }
    let candidates = frame_candidates(&geom, surface, &samples);
    let usable: Vec<&(LocalFrame, f64)> = candidates
        .iter()
        .filter(|(_, ratio)| *ratio >= RATIO_FLOOR)
        .collect();
    if usable.is_empty() {
        return Err(Error::FrameFailure {
            element,
            floor: RATIO_FLOOR,
        });
    }
    let mut fallback: Option<(ElementSurfaceRule, f64)> = None;
    for (frame, _sampled_ratio) in usable {
        let mut builder = RuleBuilder::new(surface, &geom, frame, element);
        // seed the t-scan with patch boundary corners (edge-cut points)
        let seeds: Vec<f64> = samples
            .iter()
            .map(|p| dot3(&sub3(p, &frame.origin), &frame.axes[2]))
            .collect();
        match builder.build(q, &seeds) {
            Ok(rule) => {
                if builder.min_ratio >= TAU_SING || rule.is_empty() {
                    return Ok(rule);
                }
                // singular ray observed: remember and try the next frame
                let observed = builder.min_ratio;
                log::debug!(
                    "element {element}: frame ratio {observed:.3} below {TAU_SING}, re-selecting"
                );
                if observed >= RATIO_FLOOR
                    && fallback.as_ref().map_or(true, |(_, r)| observed > *r)
                {
                    fallback = Some((rule, observed));
                }
            }
            Err(Error::RootFindFailure { .. }) | Err(Error::DegenerateGradient(..)) => continue,
            Err(e) => return Err(e),
        }
    }
    match fallback {
        Some((rule, _)) => Ok(rule),
        None => Err(Error::FrameFailure {
            element,
            floor: RATIO_FLOOR,
        }),
    }
}

/// Build rules for all candidate elements, drop zero-area candidates, and
/// resolve face-coincident patches so that exactly one element owns each.
pub fn certify_cut_geometry(
    mesh: &TetMesh,
    surface: &LevelSetSurface,
    candidates: &CutElementSet,
    q: usize,
) -> Result<CutGeometry> {
    let rules: Vec<Result<ElementSurfaceRule>> = candidates
        .elements
        .par_iter()
        .map(|&e| build_element_rule(mesh, e, surface, q))
        .collect();
    let mut built = Vec::with_capacity(rules.len());
    for r in rules {
        built.push(r?);
    }

    // detect rules whose every point lies on one element face
    let mut coincident: Vec<Option<([usize; 3], u8)>> = vec![None; built.len()];
    for (i, rule) in built.iter().enumerate() {
        if rule.is_empty() {
            continue;
        }
        let geom = TetGeom::new(mesh.tet_vertices(rule.element));
        for f in 0..4 {
            let on_face = rule.points.iter().all(|p| geom.bary(p)[f].abs() <= 1e-9);
            if on_face {
                let ids = mesh.tets[rule.element];
                let mut key = [
                    ids[TET_FACES[f][0]],
                    ids[TET_FACES[f][1]],
                    ids[TET_FACES[f][2]],
                ];
                key.sort_unstable();
                coincident[i] = Some((key, f as u8));
                break;
            }
        }
    }

    // ownership tie-break: the element with the smaller index keeps the patch
    let nonempty: Vec<usize> = built
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(i, _)| i)
        .collect();
    let fmap = face_map(
        mesh,
        &nonempty
            .iter()
            .map(|&i| built[i].element)
            .collect::<Vec<_>>(),
    );
    let mut dropped = vec![false; built.len()];
    for &i in &nonempty {
        if let Some((key, _)) = coincident[i] {
            if let Some(sharers) = fmap.get(&key) {
                let me = built[i].element;
                let owner = sharers
                    .iter()
                    .cloned()
                    .filter(|&e| {
                        e == me
                            || nonempty.iter().any(|&j| {
                                built[j].element == e
                                    && coincident[j].map(|c| c.0) == Some(key)
                            })
                    })
                    .min()
                    .unwrap_or(me);
                if owner != me {
                    log::debug!("element {me}: face-coincident patch owned by element {owner}");
                    dropped[i] = true;
                }
            }
        }
    }

    let mut elements = Vec::new();
    let mut vertex_phi = Vec::new();
    let mut zero_face = Vec::new();
    let mut rules_out = Vec::new();
    for (i, rule) in built.into_iter().enumerate() {
        if rule.is_empty() {
            log::debug!(
                "element {}: zero-area cut candidate dropped",
                candidates.elements[i]
            );
            continue;
        }
        if dropped[i] {
            continue;
        }
        elements.push(candidates.elements[i]);
        vertex_phi.push(candidates.vertex_phi[i]);
        zero_face.push(coincident[i].map(|c| c.1));
        rules_out.push(rule);
    }
    if elements.is_empty() {
        return Err(Error::EmptyCut);
    }
    Ok(CutGeometry {
        cutset: CutElementSet {
            elements,
            vertex_phi,
            zero_face,
        },
        rules: rules_out,
    })
}

/// Integrate a scalar field over Γ: per-element sums reduced in element-id
/// order (deterministic regardless of thread count).
pub fn integrate_global<F>(geometry: &CutGeometry, f: F) -> f64
where
    F: Fn(&Point) -> f64 + Sync,
{
    let partial: Vec<f64> = geometry
        .rules
        .par_iter()
        .map(|rule| rule.integrate(&f))
        .collect();
    partial.iter().sum()
}

/// Dump all quadrature points as CSV (columns: elem,x,y,z,w).
pub fn dump_quadrature_csv(
    geometry: &CutGeometry,
    w: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(w, "elem,x,y,z,w")?;
    for rule in &geometry.rules {
        for (p, wt) in rule.points.iter().zip(&rule.weights) {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                rule.element, p[0], p[1], p[2], wt
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{BoundingBox, SurfaceKind};
    use crate::mesh::{build_uniform_mesh, classify_cut_elements};
    use std::sync::Arc;

    fn plane_z(level: f64) -> LevelSetSurface {
        LevelSetSurface::new(
            "plane",
            SurfaceKind::Custom {
                phi: Arc::new(move |x: &Point| x[2] - level),
                grad: Some(Arc::new(|_: &Point| [0.0, 0.0, 1.0])),
            },
            BoundingBox::new([0.0; 3], [1.0; 3]),
        )
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre_01(4);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert!((int - 1.0 / 8.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_cut_has_exact_area() {
        // phi = z - 0.4 cutting the unit cube: total cut area is exactly 1
        let surface = plane_z(0.4);
        let mesh = build_uniform_mesh(1, BoundingBox::new([0.0; 3], [1.0; 3]));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        let geo = certify_cut_geometry(&mesh, &surface, &candidates, 3).unwrap();
        assert!((geo.total_area() - 1.0).abs() < 1e-12);
        // weight factor |grad|/|nu.grad| = 1 for an axis-aligned plane
        let one = integrate_global(&geo, |_| 1.0);
        assert!((one - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_prefers_surface_normal_axis() {
        let surface = plane_z(0.4);
        let mesh = build_uniform_mesh(1, BoundingBox::new([0.0; 3], [1.0; 3]));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        for &e in &candidates.elements {
            let frame = choose_frame(&mesh, e, &surface).unwrap();
            assert!(
                frame.axes[0][2].abs() > 0.99,
                "nu should align with e_z, got {:?}",
                frame.axes[0]
            );
        }
    }

    #[test]
    fn sphere_frames_near_poles_and_equator() {
        let surface = LevelSetSurface::sphere();
        let mesh = build_uniform_mesh(8, BoundingBox::cube(2.0));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        for &e in candidates.elements.iter() {
            let verts = mesh.tet_vertices(e);
            let c = [
                (verts[0][0] + verts[1][0] + verts[2][0] + verts[3][0]) / 4.0,
                (verts[0][1] + verts[1][1] + verts[2][1] + verts[3][1]) / 4.0,
                (verts[0][2] + verts[1][2] + verts[2][2] + verts[3][2]) / 4.0,
            ];
            if c[0].abs() < 0.2 && c[1].abs() < 0.2 && c[2] > 0.8 {
                let frame = choose_frame(&mesh, e, &surface).unwrap();
                assert!(frame.axes[0][2].abs() > 0.9, "pole patch wants nu ~ e_z");
            }
            if c[2].abs() < 0.2 && c[1].abs() < 0.2 && c[0] > 0.8 {
                let frame = choose_frame(&mesh, e, &surface).unwrap();
                assert!(frame.axes[0][0].abs() > 0.9, "equator patch wants nu ~ e_x");
            }
        }
    }

    #[test]
    fn sphere_area_converges() {
        let surface = LevelSetSurface::sphere();
        let mesh = build_uniform_mesh(8, BoundingBox::cube(2.0));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        let geo = certify_cut_geometry(&mesh, &surface, &candidates, 4).unwrap();
        let area = geo.total_area();
        let exact = 4.0 * std::f64::consts::PI;
        assert!(
            (area - exact).abs() / exact < 1e-6,
            "area {area} vs {exact}"
        );
    }

    #[test]
    fn rule_points_lie_on_surface_and_inside_elements() {
        let surface = LevelSetSurface::sphere();
        let mesh = build_uniform_mesh(8, BoundingBox::cube(2.0));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        let geo = certify_cut_geometry(&mesh, &surface, &candidates, 3).unwrap();
        for rule in &geo.rules {
            let geom = TetGeom::new(mesh.tet_vertices(rule.element));
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                assert!(w >= 0.0);
                assert!(surface.eval(p).abs() <= surface.eps_surf());
                let b = geom.bary(p);
                for v in b {
                    assert!((-BARY_TOL..=1.0 + BARY_TOL).contains(&v), "bary {v} out of range");
                }
            }
        }
        // certified cut elements carry strict sign changes
        for phi in &geo.cutset.vertex_phi {
            let min = phi.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(min < 0.0 && max > 0.0);
        }
    }

    #[test]
    fn face_coincident_patch_owned_once() {
        // plane x = 0.5 aligned with the cube interface at N=2
        let surface = LevelSetSurface::new(
            "plane-x",
            SurfaceKind::Custom {
                phi: Arc::new(|x: &Point| x[0] - 0.5),
                grad: Some(Arc::new(|_: &Point| [1.0, 0.0, 0.0])),
            },
            BoundingBox::new([0.0; 3], [1.0; 3]),
        );
        let mesh = build_uniform_mesh(2, BoundingBox::new([0.0; 3], [1.0; 3]));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        let geo = certify_cut_geometry(&mesh, &surface, &candidates, 3).unwrap();
        // every patch owned exactly once: total area = 1 exactly
        assert!(
            (geo.total_area() - 1.0).abs() < 1e-10,
            "area {} != 1",
            geo.total_area()
        );
        // all patches are face-coincident and carry an ownership flag
        for zf in &geo.cutset.zero_face {
            assert!(zf.is_some());
        }
    }

    #[test]
    fn tooth_origin_tets_are_not_cut() {
        // the isolated zero at the origin must not produce cut elements
        let surface = LevelSetSurface::tooth();
        let mesh = build_uniform_mesh(8, BoundingBox::cube(2.0));
        let candidates = classify_cut_elements(&mesh, &surface).unwrap();
        let geo = certify_cut_geometry(&mesh, &surface, &candidates, 3).unwrap();
        for (i, &e) in geo.cutset.elements.iter().enumerate() {
            let verts = mesh.tet_vertices(e);
            let near_origin = verts
                .iter()
                .all(|v| v.iter().map(|c| c.abs()).fold(0.0f64, f64::max) < 0.6);
            assert!(
                !near_origin,
                "element {e} near the origin classified as cut (phi {:?})",
                geo.cutset.vertex_phi[i]
            );
        }
    }
}
