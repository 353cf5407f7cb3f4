//! Implicit surface descriptions.
//!
//! A closed smooth surface is represented as the zero set of a level-set
//! function `phi`. The module supplies the geometric queries used everywhere
//! else: values, gradients, unit normals and tangential projections.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};

pub type Point = [f64; 3];
pub type Vector = [f64; 3];

/// Default tolerance on |phi| for a point to count as lying on the surface,
/// relative to the bounding-box diameter.
pub const EPS_SURF_REL: f64 = 1e-10;
/// Default lower bound on |grad(phi)| below which the normal is undefined.
pub const EPS_GRAD: f64 = 1e-12;
/// Finite-difference step for gradients of user surfaces without an analytic
/// gradient, relative to the bounding-box diameter.
pub const H_FD_REL: f64 = 1e-6;

/// Axis-aligned box guaranteed to contain the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub lo: Point,
    pub hi: Point,
}

impl BoundingBox {
    pub fn new(lo: Point, hi: Point) -> Self {
        Self { lo, hi }
    }

    pub fn cube(half_width: f64) -> Self {
        Self {
            lo: [-half_width; 3],
            hi: [half_width; 3],
        }
    }

    pub fn diameter(&self) -> f64 {
        let dx = self.hi[0] - self.lo[0];
        let dy = self.hi[1] - self.lo[1];
        let dz = self.hi[2] - self.lo[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn volume(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1]) * (self.hi[2] - self.lo[2])
    }
}

/// Polynomial level set: sum of monomial terms c * x^i * y^j * z^k.
#[derive(Debug, Clone)]
pub struct PolyLevelSet {
    terms: Vec<(f64, [u32; 3])>,
}

impl PolyLevelSet {
    pub fn new(terms: Vec<(f64, [u32; 3])>) -> Self {
        Self { terms }
    }

    fn eval(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(c, p)| c * x[0].powi(p[0] as i32) * x[1].powi(p[1] as i32) * x[2].powi(p[2] as i32))
            .sum()
    }

    fn grad(&self, x: &Point) -> Vector {
        let mut g = [0.0; 3];
        for (c, p) in &self.terms {
            for d in 0..3 {
                if p[d] == 0 {
                    continue;
                }
                let mut t = c * p[d] as f64;
                for e in 0..3 {
                    let pw = if e == d { p[e] - 1 } else { p[e] };
                    t *= x[e].powi(pw as i32);
                }
                g[d] += t;
            }
        }
        g
    }
}

type DynField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type DynGrad = Arc<dyn Fn(&Point) -> Vector + Send + Sync>;

/// How the level-set function is evaluated.
#[derive(Clone)]
pub enum SurfaceKind {
    /// Unit sphere centered at the origin: phi(x) = |x| - 1.
    Sphere,
    /// Tooth-shaped quartic: phi = (256/625) (x^4+y^4+z^4) - (16/25) (x^2+y^2+z^2).
    Tooth,
    /// Polynomial level set loaded from a config file.
    Poly(PolyLevelSet),
    /// Arbitrary user function, gradient optional (falls back to central
    /// finite differences).
    Custom {
        phi: DynField,
        grad: Option<DynGrad>,
    },
}

impl fmt::Debug for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceKind::Sphere => write!(f, "Sphere"),
            SurfaceKind::Tooth => write!(f, "Tooth"),
            SurfaceKind::Poly(p) => write!(f, "Poly({} terms)", p.terms.len()),
            SurfaceKind::Custom { grad, .. } => {
                write!(f, "Custom(analytic grad: {})", grad.is_some())
            }
        }
    }
}

/// An implicit closed surface with its geometric queries.
#[derive(Debug, Clone)]
pub struct LevelSetSurface {
    pub name: String,
    pub bbox: BoundingBox,
    kind: SurfaceKind,
    eps_surf: f64,
    eps_grad: f64,
    h_fd: f64,
}

const TOOTH_C4: f64 = 256.0 / 625.0;
const TOOTH_C2: f64 = 16.0 / 25.0;

impl LevelSetSurface {
    pub fn new(name: impl Into<String>, kind: SurfaceKind, bbox: BoundingBox) -> Self {
        let diam = bbox.diameter();
        Self {
            name: name.into(),
            bbox,
            kind,
            eps_surf: EPS_SURF_REL * diam,
            eps_grad: EPS_GRAD,
            h_fd: H_FD_REL * diam,
        }
    }

    /// Unit sphere in the standard experiment box [-2, 2]^3.
    pub fn sphere() -> Self {
        Self::new("sphere", SurfaceKind::Sphere, BoundingBox::cube(2.0))
    }

    /// Tooth surface in [-2, 2]^3.
    pub fn tooth() -> Self {
        Self::new("tooth", SurfaceKind::Tooth, BoundingBox::cube(2.0))
    }

    /// Look up a built-in surface by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Self::sphere()),
            "tooth" => Some(Self::tooth()),
            _ => None,
        }
    }

    /// Tolerance on |phi| for points that should lie on the surface.
    pub fn eps_surf(&self) -> f64 {
        self.eps_surf
    }

    pub fn eps_grad(&self) -> f64 {
        self.eps_grad
    }

    /// Evaluate phi. Negative inside, positive outside for the built-ins.
    pub fn eval(&self, x: &Point) -> f64 {
        match &self.kind {
            SurfaceKind::Sphere => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() - 1.0,
            SurfaceKind::Tooth => {
                let q = |t: f64| TOOTH_C4 * t.powi(4) - TOOTH_C2 * t * t;
                q(x[0]) + q(x[1]) + q(x[2])
            }
            SurfaceKind::Poly(p) => p.eval(x),
            SurfaceKind::Custom { phi, .. } => phi(x),
        }
    }

    /// Gradient of phi (analytic where available, otherwise central
    /// differences with step `h_fd`).
    pub fn grad(&self, x: &Point) -> Vector {
        match &self.kind {
            SurfaceKind::Sphere => {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                if r < self.eps_grad {
                    [0.0; 3]
                } else {
                    [x[0] / r, x[1] / r, x[2] / r]
                }
            }
            SurfaceKind::Tooth => {
                let dq = |t: f64| 4.0 * TOOTH_C4 * t.powi(3) - 2.0 * TOOTH_C2 * t;
                [dq(x[0]), dq(x[1]), dq(x[2])]
            }
            SurfaceKind::Poly(p) => p.grad(x),
            SurfaceKind::Custom { phi, grad } => match grad {
                Some(g) => g(x),
                None => {
                    let h = self.h_fd;
                    let mut g = [0.0; 3];
                    for d in 0..3 {
                        let mut xp = *x;
                        let mut xm = *x;
                        xp[d] += h;
                        xm[d] -= h;
                        g[d] = (phi(&xp) - phi(&xm)) / (2.0 * h);
                    }
                    g
                }
            },
        }
    }

    /// Unit outward normal grad(phi)/|grad(phi)|.
    pub fn unit_normal(&self, x: &Point) -> Result<Vector> {
        let g = self.grad(x);
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm <= self.eps_grad {
            return Err(Error::DegenerateGradient(x[0], x[1], x[2]));
        }
        Ok([g[0] / norm, g[1] / norm, g[2] / norm])
    }

    /// Project `v` onto the tangent plane at `x`: P v with P = I - n n^T.
    pub fn tangential_project(&self, x: &Point, v: &Vector) -> Result<Vector> {
        let n = self.unit_normal(x)?;
        let dot = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
        Ok([v[0] - dot * n[0], v[1] - dot * n[1], v[2] - dot * n[2]])
    }

    /// Load a polynomial surface description from a TOML file.
    ///
    /// Expected format:
    /// ```toml
    /// name = "ellipsoid"
    /// bbox = [[-2.0, -2.0, -2.0], [2.0, 2.0, 2.0]]
    /// # terms: [coefficient, px, py, pz]
    /// terms = [[1.0, 2, 0, 0], [4.0, 0, 2, 0], [1.0, 0, 0, 2], [-1.0, 0, 0, 0]]
    /// ```
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct SurfaceFile {
            name: String,
            bbox: [[f64; 3]; 2],
            terms: Vec<(f64, u32, u32, u32)>,
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let parsed: SurfaceFile = toml::from_str(&text).map_err(|e| Error::SurfaceParse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if parsed.terms.is_empty() {
            return Err(Error::SurfaceParse {
                path: path.display().to_string(),
                message: "surface polynomial has no terms".into(),
            });
        }
        let terms = parsed
            .terms
            .into_iter()
            .map(|(c, i, j, k)| (c, [i, j, k]))
            .collect();
        Ok(Self::new(
            parsed.name,
            SurfaceKind::Poly(PolyLevelSet::new(terms)),
            BoundingBox::new(parsed.bbox[0], parsed.bbox[1]),
        ))
    }
}

pub(crate) fn norm3(v: &Vector) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot3(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub3(a: &Point, b: &Point) -> Vector {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross3(a: &Vector, b: &Vector) -> Vector {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_eval_points() {
        let s = LevelSetSurface::sphere();
        assert_eq!(s.eval(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(s.eval(&[2.0, 0.0, 0.0]), 1.0);
        assert!(s.eval(&[0.5, 0.0, 0.0]) < 0.0, "negative inside");
    }

    #[test]
    fn tooth_eval_origin_is_zero() {
        let s = LevelSetSurface::tooth();
        assert_eq!(s.eval(&[0.0, 0.0, 0.0]), 0.0);
        // The origin is an isolated zero: phi < 0 in a punctured neighbourhood.
        assert!(s.eval(&[0.05, 0.02, -0.03]) < 0.0);
    }

    #[test]
    fn sphere_unit_normal() {
        let s = LevelSetSurface::sphere();
        let n = s.unit_normal(&[0.0, 0.0, 1.0]).unwrap();
        assert!((n[0]).abs() < 1e-14 && (n[1]).abs() < 1e-14 && (n[2] - 1.0).abs() < 1e-14);
        let r = 1.0 / 2.0f64.sqrt();
        let n = s.unit_normal(&[r, r, 0.0]).unwrap();
        assert!((n[0] - r).abs() < 1e-14 && (n[1] - r).abs() < 1e-14);
    }

    #[test]
    fn tooth_normal_on_x_axis() {
        // Root-find the 1D quartic phi(x0,0,0) = 0 with x0 > 1, then compare
        // the normal against the analytic derivative.
        let s = LevelSetSurface::tooth();
        let f = |t: f64| s.eval(&[t, 0.0, 0.0]);
        let (mut lo, mut hi) = (1.0, 2.0);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x0 = 0.5 * (lo + hi);
        assert!((x0 - 1.25).abs() < 1e-12, "shell crosses +x axis at 5/4");
        let n = s.unit_normal(&[x0, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-12 && n[1].abs() < 1e-13 && n[2].abs() < 1e-13);
    }

    #[test]
    fn degenerate_gradient_reported() {
        let s = LevelSetSurface::sphere();
        assert!(matches!(
            s.unit_normal(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateGradient(..))
        ));
    }

    #[test]
    fn tangential_projection() {
        let s = LevelSetSurface::sphere();
        let p = s.tangential_project(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12 && p[2].abs() < 1e-12);

        let p = s
            .tangential_project(&[1.0, 0.0, 0.0], &[0.5, 0.5, 0.5])
            .unwrap();
        assert!(p[0].abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && (p[2] - 0.5).abs() < 1e-12);

        // v = n maps to zero.
        let x = [0.6, -0.48, 0.64];
        let n = s.unit_normal(&x).unwrap();
        let p = s.tangential_project(&x, &n).unwrap();
        assert!(norm3(&p) < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let s = LevelSetSurface::tooth();
        let x = [1.25, 0.0, 0.0];
        let v = [0.3, -1.1, 0.7];
        let p1 = s.tangential_project(&x, &v).unwrap();
        let p2 = s.tangential_project(&x, &p1).unwrap();
        for d in 0..3 {
            assert!((p1[d] - p2[d]).abs() < 1e-12);
        }
        let n = s.unit_normal(&x).unwrap();
        assert!(dot3(&p1, &n).abs() < 1e-12);
    }

    #[test]
    fn builtin_gradients_match_central_differences() {
        // O(h_fd^2) agreement between the analytic gradient and central
        // differences at pseudo-random sample points.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for surf in [LevelSetSurface::sphere(), LevelSetSurface::tooth()] {
            let h = 1e-5;
            for _ in 0..200 {
                let x = [
                    0.4 + next(), // keep away from the sphere's center singularity
                    next() - 0.5,
                    next() - 0.5,
                ];
                let g = surf.grad(&x);
                for d in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h;
                    xm[d] -= h;
                    let fd = (surf.eval(&xp) - surf.eval(&xm)) / (2.0 * h);
                    assert!(
                        (g[d] - fd).abs() < 1e-8 * (1.0 + g[d].abs()),
                        "{}: grad mismatch {} vs {}",
                        surf.name,
                        g[d],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn sphere_normal_equals_position_at_random_surface_points() {
        let s = LevelSetSurface::sphere();
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let v = [next() - 0.5, next() - 0.5, next() - 0.5];
            let r = norm3(&v);
            if r < 1e-3 {
                continue;
            }
            let x = [v[0] / r, v[1] / r, v[2] / r];
            let n = s.unit_normal(&x).unwrap();
            for d in 0..3 {
                assert!((n[d] - x[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_surface_without_gradient_uses_finite_differences() {
        let s = LevelSetSurface::new(
            "shifted-sphere",
            SurfaceKind::Custom {
                phi: Arc::new(|x: &Point| {
                    ((x[0] - 0.1).powi(2) + x[1].powi(2) + x[2].powi(2)).sqrt() - 0.8
                }),
                grad: None,
            },
            BoundingBox::cube(2.0),
        );
        let n = s.unit_normal(&[0.9, 0.0, 0.0]).unwrap();
        assert!((n[0] - 1.0).abs() < 1e-8);
    }
}
