//! Maps of the 3-torus R^3/Z^3: the linear automorphisms and their sine perturbations.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const INVERSE_CAP: usize = 100;
const INVERSE_TOL: f64 = 1e-12;
const CONE_GRID: usize = 32;
const CONE_APERTURES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn wrap(a: f64) -> f64 {
    let r = a - a.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the torus, stored by its canonical representative in [0,1)^3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    x: f64,
    y: f64,
    z: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x: wrap(x),
            y: wrap(y),
            z: wrap(z),
        }
    }

    pub fn from_lift(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// The canonical lift, as a vector of R^3.
    pub fn lift(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Shortest displacement from `p` to `q`, each component in [-1/2, 1/2].
pub fn min_lift_delta(p: &Vec3, q: &Vec3) -> Vec3 {
    (q - p).map(|d| d - d.round())
}

/// Euclidean distance between the closest lifts of two torus points.
pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    min_lift_delta(&p.lift(), &q.lift()).norm()
}

/// Integer translation taking the canonical representative of `v` back to `v`.
pub fn integer_part(v: &Vec3) -> Vec3 {
    v.map(f64::floor)
}

/// A 3x3 integer matrix, the linear part of a torus map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix(pub [[i64; 3]; 3]);

impl IntMatrix {
    pub fn det(&self) -> i64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Exact integer inverse; only valid when `det()` is +-1.
    fn unimodular_inverse(&self) -> IntMatrix {
        let m = &self.0;
        let d = self.det();
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        IntMatrix(adj.map(|row| row.map(|v| v * d)))
    }

    pub fn to_mat3(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.0[i][j] as f64)
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .0
            .iter()
            .map(|r| format!("{},{},{}", r[0], r[1], r[2]))
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

impl FromStr for IntMatrix {
    type Err = Error;

    /// Parses `"a,b,c;d,e,f;g,h,i"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidParam {
            name: "matrix",
            reason: reason.to_string(),
        };
        let rows: Vec<&str> = s.trim().trim_matches('"').split(';').collect();
        if rows.len() != 3 {
            return Err(bad("expected three rows separated by ';'"));
        }
        let mut m = [[0i64; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            let vals: Vec<&str> = row.split(',').map(str::trim).collect();
            if vals.len() != 3 {
                return Err(bad("expected three entries per row"));
            }
            for (j, v) in vals.iter().enumerate() {
                m[i][j] = v
                    .parse()
                    .map_err(|_| bad(&format!("`{v}` is not an integer")))?;
            }
        }
        Ok(IntMatrix(m))
    }
}

/// The built-in example families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Linear,
    Gmk,
    SkewProduct,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Gmk => "gmk",
            Family::SkewProduct => "skew",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Family::Linear),
            "gmk" => Ok(Family::Gmk),
            "skew" | "skewproduct" | "skew_product" | "skew-product" => Ok(Family::SkewProduct),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Parameters accepted by [`make_map`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MapParams {
    pub epsilon: Option<f64>,
    pub matrix: Option<IntMatrix>,
}

/// Orthonormal-free frame of the linear part: eigen-directions and eigenvalue moduli,
/// ordered (uu, c, ss).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFrame {
    pub dirs: [Vec3; 3],
    pub rates: [f64; 3],
}

/// A diffeomorphism of the torus: `p -> A p + epsilon sin(2 pi p_x) w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusMap {
    family: Family,
    linear: IntMatrix,
    epsilon: f64,
    a: Mat3,
    a_inv: Mat3,
    w: Vec3,
    a_inv_w: Vec3,
    reference: Option<LinearFrame>,
    df_norm: f64,
}

/// Builds a validated map of the given family.
pub fn make_map(family: Family, params: &MapParams) -> Result<TorusMap> {
    let (linear, epsilon) = match family {
        Family::Linear => {
            let m = params.matrix.ok_or(Error::MissingParam("matrix"))?;
            match params.epsilon {
                Some(e) if e != 0.0 => {
                    return Err(Error::InvalidParam {
                        name: "epsilon",
                        reason: "the linear family has no perturbation".into(),
                    })
                }
                _ => (m, 0.0),
            }
        }
        Family::Gmk | Family::SkewProduct => {
            if params.matrix.is_some() {
                return Err(Error::InvalidParam {
                    name: "matrix",
                    reason: format!("the {family} family has a fixed linear part"),
                });
            }
            let e = params.epsilon.ok_or(Error::MissingParam("epsilon"))?;
            let m = if family == Family::Gmk {
                IntMatrix([[2, 1, 0], [1, 2, 1], [0, 1, 1]])
            } else {
                IntMatrix([[2, 1, 0], [1, 1, 0], [0, 0, 1]])
            };
            (m, e)
        }
    };
    TorusMap::build(family, linear, epsilon)
}

impl TorusMap {
    fn build(family: Family, linear: IntMatrix, epsilon: f64) -> Result<Self> {
        let det = linear.det();
        if det.abs() != 1 {
            return Err(Error::NonUnimodularMatrix(det));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParam {
                name: "epsilon",
                reason: format!("{epsilon} is not a finite nonnegative number"),
            });
        }
        let a = linear.to_mat3();
        let a_inv = linear.unimodular_inverse().to_mat3();
        let w = match family {
            Family::Linear => Vec3::zeros(),
            Family::Gmk | Family::SkewProduct => Vec3::new(1.0, 1.0, 0.0),
        };
        let a_inv_w = a_inv * w;
        let reference = linear_frame(&a, &a_inv);
        let mut map = TorusMap {
            family,
            linear,
            epsilon,
            a,
            a_inv,
            w,
            a_inv_w,
            reference,
            df_norm: 0.0,
        };
        map.check_admissible()?;
        map.df_norm = (0..1024)
            .map(|i| {
                map.tangent_x(i as f64 / 1024.0)
                    .svd(false, false)
                    .singular_values[0]
            })
            .fold(0.0, f64::max);
        Ok(map)
    }

    /// Contraction of the lift fixed-point iteration plus invariance of the
    /// uu and ss cone fields over a 32^3 grid.
    fn check_admissible(&self) -> Result<()> {
        if self.epsilon == 0.0 {
            return Ok(());
        }
        let contraction = self.epsilon * TAU * self.a_inv_w.norm();
        if contraction >= 1.0 {
            return Err(Error::InadmissibleEpsilon {
                epsilon: self.epsilon,
                reason: format!("inverse iteration Lipschitz constant {contraction:.3} >= 1"),
            });
        }
        let frame = self.reference.ok_or_else(|| Error::InadmissibleEpsilon {
            epsilon: self.epsilon,
            reason: "linear part has no dominated splitting".into(),
        })?;
        let p = Mat3::from_columns(&frame.dirs);
        let p_inv = p.try_inverse().ok_or(Error::DegenerateFrame(0.0))?;
        let n = CONE_GRID;
        let uu_ok = CONE_APERTURES.iter().any(|&alpha| {
            (0..n.pow(3)).all(|k| {
                let x = (k / (n * n)) as f64 / n as f64;
                cone_maps_into(&(p_inv * self.tangent_x(x) * p), alpha, 0)
            })
        });
        let ss_ok = CONE_APERTURES.iter().any(|&alpha| {
            (0..n.pow(3)).all(|k| {
                let x = (k / (n * n)) as f64 / n as f64;
                cone_maps_into(&(p_inv * self.tangent_inverse_x(x) * p), alpha, 2)
            })
        });
        if uu_ok && ss_ok {
            Ok(())
        } else {
            Err(Error::InadmissibleEpsilon {
                epsilon: self.epsilon,
                reason: "cone fields are not invariant on the 32^3 grid".into(),
            })
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn linear_part(&self) -> IntMatrix {
        self.linear
    }

    pub fn is_linear(&self) -> bool {
        self.epsilon == 0.0
    }

    /// Eigen-directions of the linear part, when it has a dominated splitting.
    pub fn reference_frame(&self) -> Option<&LinearFrame> {
        self.reference.as_ref()
    }

    /// Supremum over the torus of the operator norm of the tangent map.
    pub fn df_norm(&self) -> f64 {
        self.df_norm
    }

    pub fn apply_lift(&self, v: &Vec3) -> Vec3 {
        let mut out = self.a * v;
        if self.epsilon != 0.0 {
            out += self.w * (self.epsilon * (TAU * v.x).sin());
        }
        out
    }

    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::from_lift(&self.apply_lift(&p.lift()))
    }

    /// Solves `apply_lift(p) = q` by fixed-point iteration seeded with the linear inverse.
    pub fn inverse_lift(&self, q: &Vec3) -> Result<Vec3> {
        let base = self.a_inv * q;
        if self.epsilon == 0.0 {
            return Ok(base);
        }
        let mut p = base;
        for _ in 0..INVERSE_CAP {
            let next = base - self.a_inv_w * (self.epsilon * (TAU * p.x).sin());
            let step = (next - p).amax();
            p = next;
            if step <= INVERSE_TOL * (1.0 + p.amax()) {
                return Ok(p);
            }
        }
        Err(Error::NoConvergence(INVERSE_CAP))
    }

    pub fn apply_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        Ok(TorusPoint::from_lift(&self.inverse_lift(&p.lift())?))
    }

    fn tangent_x(&self, x: f64) -> Mat3 {
        let mut m = self.a;
        if self.epsilon != 0.0 {
            let c = TAU * self.epsilon * (TAU * x).cos();
            for i in 0..3 {
                m[(i, 0)] += c * self.w[i];
            }
        }
        m
    }

    fn tangent_inverse_x(&self, x: f64) -> Mat3 {
        if self.epsilon == 0.0 {
            return self.a_inv;
        }
        // Sherman-Morrison for A + c w e_x^T.
        let c = TAU * self.epsilon * (TAU * x).cos();
        let row = self.a_inv.row(0);
        let denom = 1.0 + c * self.a_inv_w.x;
        self.a_inv - (self.a_inv_w * row) * (c / denom)
    }

    /// Jacobian of the map at `p`.
    pub fn tangent(&self, p: &TorusPoint) -> Mat3 {
        self.tangent_x(p.x)
    }

    pub fn tangent_lift(&self, v: &Vec3) -> Mat3 {
        self.tangent_x(v.x)
    }

    /// Inverse of the Jacobian at `p`, i.e. the derivative of the inverse map at `f(p)`.
    pub fn tangent_inverse(&self, p: &TorusPoint) -> Mat3 {
        self.tangent_inverse_x(p.x)
    }

    pub fn tangent_inverse_lift(&self, v: &Vec3) -> Mat3 {
        self.tangent_inverse_x(v.x)
    }

    /// Jacobian of the n-fold composition, as the ordered product along the orbit.
    pub fn tangent_power(&self, p: &TorusPoint, n: usize) -> Mat3 {
        let mut q = *p;
        let mut m = Mat3::identity();
        for _ in 0..n {
            m = self.tangent(&q) * m;
            q = self.apply(&q);
        }
        m
    }

    pub fn orbit(&self, p: &TorusPoint, n: usize) -> Vec<TorusPoint> {
        std::iter::successors(Some(*p), |q| Some(self.apply(q)))
            .take(n + 1)
            .collect()
    }
}

/// Checks that the convex cone `{|other two coords| <= alpha |coord axis|}` maps into itself.
fn cone_maps_into(m: &Mat3, alpha: f64, axis: usize) -> bool {
    let (i, j) = match axis {
        0 => (1, 2),
        _ => (0, 1),
    };
    [(alpha, 0.0), (-alpha, 0.0), (0.0, alpha), (0.0, -alpha)]
        .iter()
        .all(|&(a, b)| {
            let mut ray = Vec3::zeros();
            ray[axis] = 1.0;
            ray[i] = a;
            ray[j] = b;
            let img = m * ray;
            img[i].abs() + img[j].abs() <= alpha * img[axis].abs()
        })
}

/// Sign convention for direction fields: positive coordinate sum, ties broken by
/// the largest component.
pub(crate) fn canonical_sign(v: Vec3) -> Vec3 {
    let s = v.sum();
    if s.abs() > 1e-9 {
        return if s > 0.0 { v } else { -v };
    }
    let k = v.iamax();
    if v[k] >= 0.0 {
        v
    } else {
        -v
    }
}

// Any generic start vector works; these digits just avoid invariant subspaces.
#[allow(clippy::approx_constant)]
fn dominant_direction(m: &Mat3) -> Option<(Vec3, f64)> {
    let mut v = Vec3::new(0.577_215_664_9, 0.693_147_180_6, 0.301_029_995_7).normalize();
    let mut prev = v;
    for k in 0..2000 {
        let next = m * v;
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        v = next / norm;
        if k > 8 && (v - prev).norm() < 1e-15 {
            break;
        }
        prev = v;
    }
    let rate = (m * v).norm();
    let resid = (m * v - v * (m * v).dot(&v)).norm();
    (resid < 1e-9 * rate.max(1.0)).then_some((canonical_sign(v), rate))
}

fn linear_frame(a: &Mat3, a_inv: &Mat3) -> Option<LinearFrame> {
    let (uu, l_uu) = dominant_direction(a)?;
    let (ss, l_ss_inv) = dominant_direction(a_inv)?;
    let (cu_normal, _) = dominant_direction(&a_inv.transpose())?;
    let (cs_normal, _) = dominant_direction(&a.transpose())?;
    let c = canonical_sign(cu_normal.cross(&cs_normal).try_normalize(1e-12)?);
    let l_c = (a * c).norm();
    let l_ss = 1.0 / l_ss_inv;
    let det = Mat3::from_columns(&[uu, c, ss]).determinant().abs();
    (l_ss < l_c && l_c < l_uu && det > 0.1).then_some(LinearFrame {
        dirs: [uu, c, ss],
        rates: [l_uu, l_c, l_ss],
    })
}
