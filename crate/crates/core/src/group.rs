//! Structure groups U(1) and SU(2) with their Lie algebras.
//!
//! SU(2) elements are unit quaternions `q0 + q1 i + q2 j + q3 k`, identified
//! with the matrix `q0 I - i (q1 σ1 + q2 σ2 + q3 σ3)`. The algebra basis is
//! `T_k = -i σ_k / 2`, which is orthonormal for the trace form `-2 Re tr(XY)`
//! and satisfies `[T_1, T_2] = T_3`. In these coordinates the bracket is the
//! cross product and `Ad` is the SO(3) rotation of the quaternion.
//!
//! U(1) elements are unit complex numbers; the algebra coordinate `θ` stands
//! for `iθ`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BranchCutSite, Error, Result};

/// Trace distance from the branch-cut value below which `log` refuses.
pub const BRANCH_CUT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    U1,
    Su2,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::U1 => "u1",
            GroupKind::Su2 => "su2",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u1" | "U1" => Ok(GroupKind::U1),
            "su2" | "SU2" => Ok(GroupKind::Su2),
            other => Err(Error::InvalidArgument(format!("unknown group `{other}`"))),
        }
    }
}

/// A real Lie algebra with a fixed orthonormal basis.
pub trait Algebra:
    Copy
    + Default
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    /// Number of real coordinates.
    const DIM: usize;

    fn zero() -> Self {
        Self::default()
    }
    fn coord(&self, i: usize) -> f64;
    fn from_coords(coords: &[f64]) -> Self;
    /// Lie bracket `[self, other]`.
    fn bracket(&self, other: &Self) -> Self;

    fn inner(&self, other: &Self) -> f64 {
        (0..Self::DIM).map(|i| self.coord(i) * other.coord(i)).sum()
    }
    fn norm_sq(&self) -> f64 {
        self.inner(self)
    }
    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
    fn is_finite(&self) -> bool {
        (0..Self::DIM).all(|i| self.coord(i).is_finite())
    }
    /// Coordinates i.i.d. uniform in `[-scale, scale]`.
    fn random<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        let mut c = [0.0; 3];
        for slot in c.iter_mut().take(Self::DIM) {
            *slot = if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
        }
        Self::from_coords(&c[..Self::DIM])
    }
    fn write_le(&self, out: &mut Vec<u8>) {
        for i in 0..Self::DIM {
            out.extend_from_slice(&self.coord(i).to_le_bytes());
        }
    }
}

/// A compact matrix group acting on its algebra by conjugation.
pub trait Group: Copy + fmt::Debug + PartialEq + Send + Sync + 'static {
    type Algebra: Algebra;
    const KIND: GroupKind;
    /// Number of doubles in the serialized element.
    const COORDS: usize;

    fn identity() -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
    fn exp(x: &Self::Algebra) -> Self;
    /// Principal logarithm; fails within [`BRANCH_CUT_TOLERANCE`] of the cut.
    fn log(&self) -> Result<Self::Algebra>;
    /// `Ad_g X = g X g⁻¹`.
    fn conjugate(&self, x: &Self::Algebra) -> Self::Algebra;
    fn re_trace(&self) -> f64;
    fn renormalized(&self) -> Self;
    /// `| |g| - 1 |` in the defining coordinates.
    fn norm_deviation(&self) -> f64;
    fn coord(&self, i: usize) -> f64;
    fn from_coords(coords: &[f64]) -> Self;

    fn checked_exp(x: &Self::Algebra) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite("algebra element"));
        }
        Ok(Self::exp(x))
    }
    /// Euclidean distance between defining coordinates.
    fn distance(&self, other: &Self) -> f64 {
        (0..Self::COORDS)
            .map(|i| (self.coord(i) - other.coord(i)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
    /// `exp` of a uniformly random algebra element.
    fn random<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        Self::exp(&Self::Algebra::random(rng, scale))
    }
    /// The constant `c` minimizing `Σ ‖Ad_c a_i − b_i‖²`.
    fn align_constant(a: &[Self::Algebra], b: &[Self::Algebra]) -> Self;
    /// `g^t = exp(t log g)`.
    fn powf(&self, t: f64) -> Result<Self> {
        Ok(Self::exp(&(self.log()? * t)))
    }
    fn write_le(&self, out: &mut Vec<u8>) {
        for i in 0..Self::COORDS {
            out.extend_from_slice(&self.coord(i).to_le_bytes());
        }
    }
}

pub fn random_algebra<A: Algebra, R: Rng + ?Sized>(rng: &mut R, scale: f64) -> A {
    A::random(rng, scale)
}

pub fn random_group<G: Group, R: Rng + ?Sized>(rng: &mut R, scale: f64) -> G {
    G::random(rng, scale)
}

// ---------------------------------------------------------------- U(1)

/// `iθ ∈ u(1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct U1Alg(pub f64);

impl Add for U1Alg {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        U1Alg(self.0 + o.0)
    }
}
impl Sub for U1Alg {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        U1Alg(self.0 - o.0)
    }
}
impl Neg for U1Alg {
    type Output = Self;
    fn neg(self) -> Self {
        U1Alg(-self.0)
    }
}
impl Mul<f64> for U1Alg {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        U1Alg(self.0 * s)
    }
}
impl AddAssign for U1Alg {
    fn add_assign(&mut self, o: Self) {
        self.0 += o.0;
    }
}
impl SubAssign for U1Alg {
    fn sub_assign(&mut self, o: Self) {
        self.0 -= o.0;
    }
}

impl Algebra for U1Alg {
    const DIM: usize = 1;

    fn coord(&self, i: usize) -> f64 {
        debug_assert_eq!(i, 0);
        self.0
    }
    fn from_coords(coords: &[f64]) -> Self {
        U1Alg(coords[0])
    }
    fn bracket(&self, _other: &Self) -> Self {
        U1Alg(0.0)
    }
    fn inner(&self, other: &Self) -> f64 {
        self.0 * other.0
    }
}

/// Unit complex number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U1 {
    pub re: f64,
    pub im: f64,
}

impl U1 {
    pub fn from_phase(theta: f64) -> Self {
        U1 { re: theta.cos(), im: theta.sin() }
    }
}

impl Group for U1 {
    type Algebra = U1Alg;
    const KIND: GroupKind = GroupKind::U1;
    const COORDS: usize = 2;

    fn identity() -> Self {
        U1 { re: 1.0, im: 0.0 }
    }
    fn mul(&self, o: &Self) -> Self {
        U1 {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    fn inverse(&self) -> Self {
        U1 { re: self.re, im: -self.im }
    }
    fn exp(x: &U1Alg) -> Self {
        U1::from_phase(x.0)
    }
    fn log(&self) -> Result<U1Alg> {
        let dist = ((self.re + 1.0).powi(2) + self.im * self.im).sqrt();
        if dist <= BRANCH_CUT_TOLERANCE {
            return Err(Error::BranchCut(BranchCutSite::Element));
        }
        if !(self.re.is_finite() && self.im.is_finite()) {
            return Err(Error::NonFinite("group element"));
        }
        Ok(U1Alg(self.im.atan2(self.re)))
    }
    fn conjugate(&self, x: &U1Alg) -> U1Alg {
        *x
    }
    fn re_trace(&self) -> f64 {
        self.re
    }
    fn renormalized(&self) -> Self {
        let n = self.re.hypot(self.im);
        U1 { re: self.re / n, im: self.im / n }
    }
    fn norm_deviation(&self) -> f64 {
        (self.re.hypot(self.im) - 1.0).abs()
    }
    fn coord(&self, i: usize) -> f64 {
        [self.re, self.im][i]
    }
    fn from_coords(c: &[f64]) -> Self {
        U1 { re: c[0], im: c[1] }
    }

    fn align_constant(_a: &[U1Alg], _b: &[U1Alg]) -> Self {
        U1::identity()
    }
}

// ---------------------------------------------------------------- SU(2)

/// `Σ x_k T_k ∈ su(2)` with `T_k = -i σ_k / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Su2Alg(pub [f64; 3]);

impl Add for Su2Alg {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Su2Alg([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}
impl Sub for Su2Alg {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Su2Alg([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}
impl Neg for Su2Alg {
    type Output = Self;
    fn neg(self) -> Self {
        Su2Alg([-self.0[0], -self.0[1], -self.0[2]])
    }
}
impl Mul<f64> for Su2Alg {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Su2Alg([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}
impl AddAssign for Su2Alg {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl SubAssign for Su2Alg {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl Algebra for Su2Alg {
    const DIM: usize = 3;

    fn coord(&self, i: usize) -> f64 {
        self.0[i]
    }
    fn from_coords(c: &[f64]) -> Self {
        Su2Alg([c[0], c[1], c[2]])
    }
    fn bracket(&self, other: &Self) -> Self {
        Su2Alg(cross(&self.0, &other.0))
    }
    fn inner(&self, o: &Self) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
}

/// Unit quaternion `[q0, q1, q2, q3]`, `q0` the scalar part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su2 {
    pub q: [f64; 4],
}

impl Su2 {
    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Su2 { q: [q0, q1, q2, q3] }
    }

    /// A unit quaternion whose adjoint action is the rotation `r`.
    pub fn from_rotation(r: &[[f64; 3]; 3]) -> Self {
        let t = r[0][0] + r[1][1] + r[2][2];
        let q = if t > 0.0 {
            let s = 2.0 * (t + 1.0).sqrt();
            [0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s]
        } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
            let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
            [(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s]
        } else if r[1][1] >= r[2][2] {
            let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
            [(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s]
        } else {
            let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
            [(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s]
        };
        Su2 { q }.renormalized()
    }

    /// The SO(3) matrix of `Ad_g` acting on algebra coordinates.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [q0, q1, q2, q3] = self.q;
        [
            [
                1.0 - 2.0 * (q2 * q2 + q3 * q3),
                2.0 * (q1 * q2 - q0 * q3),
                2.0 * (q1 * q3 + q0 * q2),
            ],
            [
                2.0 * (q1 * q2 + q0 * q3),
                1.0 - 2.0 * (q1 * q1 + q3 * q3),
                2.0 * (q2 * q3 - q0 * q1),
            ],
            [
                2.0 * (q1 * q3 - q0 * q2),
                2.0 * (q2 * q3 + q0 * q1),
                1.0 - 2.0 * (q1 * q1 + q2 * q2),
            ],
        ]
    }
}

impl Group for Su2 {
    type Algebra = Su2Alg;
    const KIND: GroupKind = GroupKind::Su2;
    const COORDS: usize = 4;

    fn identity() -> Self {
        Su2::new(1.0, 0.0, 0.0, 0.0)
    }

    fn mul(&self, o: &Self) -> Self {
        let [a0, a1, a2, a3] = self.q;
        let [b0, b1, b2, b3] = o.q;
        Su2::new(
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        )
    }

    fn inverse(&self) -> Self {
        Su2::new(self.q[0], -self.q[1], -self.q[2], -self.q[3])
    }

    fn exp(x: &Su2Alg) -> Self {
        let t2 = x.norm_sq();
        let (c, s) = if t2 < 1e-16 {
            // cos(t/2), sin(t/2)/t to O(t^6)
            (
                1.0 - t2 / 8.0 + t2 * t2 / 384.0,
                0.5 - t2 / 48.0 + t2 * t2 / 3840.0,
            )
        } else {
            let t = t2.sqrt();
            ((0.5 * t).cos(), (0.5 * t).sin() / t)
        };
        Su2::new(c, s * x.0[0], s * x.0[1], s * x.0[2])
    }

    fn log(&self) -> Result<Su2Alg> {
        if !self.q.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("group element"));
        }
        // trace distance from -1 is 2 (q0 + 1)
        if 2.0 * (self.q[0] + 1.0) <= BRANCH_CUT_TOLERANCE {
            return Err(Error::BranchCut(BranchCutSite::Element));
        }
        let v2 = self.q[1] * self.q[1] + self.q[2] * self.q[2] + self.q[3] * self.q[3];
        let q0 = self.q[0];
        let factor = if v2 < 1e-16 && q0 > 0.0 {
            (2.0 / q0) * (1.0 - v2 / (3.0 * q0 * q0))
        } else {
            let v = v2.sqrt();
            2.0 * v.atan2(q0) / v
        };
        Ok(Su2Alg([factor * self.q[1], factor * self.q[2], factor * self.q[3]]))
    }

    fn conjugate(&self, x: &Su2Alg) -> Su2Alg {
        let q0 = self.q[0];
        let v = [self.q[1], self.q[2], self.q[3]];
        let vx = cross(&v, &x.0);
        let vvx = cross(&v, &vx);
        Su2Alg([
            x.0[0] + 2.0 * (q0 * vx[0] + vvx[0]),
            x.0[1] + 2.0 * (q0 * vx[1] + vvx[1]),
            x.0[2] + 2.0 * (q0 * vx[2] + vvx[2]),
        ])
    }

    fn re_trace(&self) -> f64 {
        2.0 * self.q[0]
    }

    fn renormalized(&self) -> Self {
        let n = self.q.iter().map(|c| c * c).sum::<f64>().sqrt();
        Su2::new(self.q[0] / n, self.q[1] / n, self.q[2] / n, self.q[3] / n)
    }

    fn norm_deviation(&self) -> f64 {
        (self.q.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs()
    }

    fn coord(&self, i: usize) -> f64 {
        self.q[i]
    }

    fn from_coords(c: &[f64]) -> Self {
        Su2::new(c[0], c[1], c[2], c[3])
    }

    fn align_constant(a: &[Su2Alg], b: &[Su2Alg]) -> Self {
        // orthogonal Procrustes on the adjoint rotation
        let mut h = nalgebra::Matrix3::<f64>::zeros();
        for (x, y) in a.iter().zip(b) {
            h += nalgebra::Vector3::from(y.0) * nalgebra::Vector3::from(x.0).transpose();
        }
        let svd = h.svd(true, true);
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return Su2::identity();
        };
        let mut fix = nalgebra::Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            fix[(2, 2)] = -1.0;
        }
        let r = u * fix * vt;
        Su2::from_rotation(&std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])))
    }
}
