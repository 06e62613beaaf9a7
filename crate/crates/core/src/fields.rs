//! Link fields, algebra-valued cochains and the discrete exterior calculus
//! on them.
//!
//! A [`LinkField`] is the canonical connection; [`connection_form`] and
//! [`plaquette_curvature`] are derived views `a_e = log(U_e)/h` and
//! `F_p = log(U_∂p)/h²`. Linear operations (`d`, `d*`, Hodge projections,
//! norms) act on [`Cochain`]s through a [`FormSpace`], which fixes the active
//! cells, the cell measures and hence the adjoint `d*`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BranchCutSite, Error, Result};
use crate::grid::{classify, BallRegion, Bounds, CellClass, LatticeComplex, Topology};
use crate::group::{Algebra, Group};
use crate::linalg::{self, CgOptions};
use crate::reduce::tree_sum;

/// Tolerance for the tangential agreement required by [`patch`].
pub const PATCH_TOLERANCE: f64 = 1e-12;

/// One group element per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkField<G> {
    complex: Arc<LatticeComplex>,
    links: Vec<G>,
}

impl<G: Group> LinkField<G> {
    pub fn identity(complex: &Arc<LatticeComplex>) -> Self {
        LinkField {
            complex: complex.clone(),
            links: vec![G::identity(); complex.num_edges()],
        }
    }

    pub fn from_links(complex: &Arc<LatticeComplex>, links: Vec<G>) -> Result<Self> {
        if links.len() != complex.num_edges() {
            return Err(Error::InvalidArgument(format!(
                "expected {} links, got {}",
                complex.num_edges(),
                links.len()
            )));
        }
        Ok(LinkField {
            complex: complex.clone(),
            links,
        })
    }

    /// Links `exp(X_e)` with `X_e` uniform of the given scale.
    pub fn random<R: Rng + ?Sized>(complex: &Arc<LatticeComplex>, rng: &mut R, scale: f64) -> Self {
        let links = (0..complex.num_edges()).map(|_| G::random(rng, scale)).collect();
        LinkField {
            complex: complex.clone(),
            links,
        }
    }

    pub fn complex(&self) -> &Arc<LatticeComplex> {
        &self.complex
    }

    pub fn links(&self) -> &[G] {
        &self.links
    }

    pub fn links_mut(&mut self) -> &mut [G] {
        &mut self.links
    }

    pub fn link(&self, e: usize) -> G {
        self.links[e]
    }

    pub fn set_link(&mut self, e: usize, g: G) {
        self.links[e] = g;
    }

    pub fn renormalize(&mut self) {
        for g in &mut self.links {
            *g = g.renormalized();
        }
    }

    /// Largest per-link coordinate distance.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.links
            .iter()
            .zip(&other.links)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max)
    }

    /// Ordered product of the four boundary links of face `f`.
    pub fn holonomy(&self, f: usize) -> G {
        let mut p = G::identity();
        for inc in self.complex.boundary(2, f) {
            let u = self.links[inc.cell as usize];
            p = if inc.sign > 0 { p.mul(&u) } else { p.mul(&u.inverse()) };
        }
        p
    }
}

/// One algebra element per k-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochain<A> {
    complex: Arc<LatticeComplex>,
    degree: usize,
    values: Vec<A>,
}

impl<A: Algebra> Cochain<A> {
    pub fn zeros(complex: &Arc<LatticeComplex>, degree: usize) -> Self {
        Cochain {
            complex: complex.clone(),
            degree,
            values: vec![A::zero(); complex.num_cells(degree)],
        }
    }

    pub fn from_values(complex: &Arc<LatticeComplex>, degree: usize, values: Vec<A>) -> Result<Self> {
        if degree > 4 || values.len() != complex.num_cells(degree) {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for degree {degree}, got {}",
                complex.num_cells(degree),
                values.len()
            )));
        }
        Ok(Cochain {
            complex: complex.clone(),
            degree,
            values,
        })
    }

    pub fn random<R: Rng + ?Sized>(complex: &Arc<LatticeComplex>, degree: usize, rng: &mut R, scale: f64) -> Self {
        let values = (0..complex.num_cells(degree)).map(|_| A::random(rng, scale)).collect();
        Cochain {
            complex: complex.clone(),
            degree,
            values,
        }
    }

    pub fn complex(&self) -> &Arc<LatticeComplex> {
        &self.complex
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn values(&self) -> &[A] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [A] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<A> {
        self.values
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(linalg::scale(&self.values, s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(linalg::add(&self.values, &other.values)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.with_values(linalg::sub(&self.values, &other.values)))
    }

    /// Largest pointwise algebra norm.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Unweighted `h⁴ Σ ⟨a, b⟩` over all cells.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let h4 = self.complex.spacing().powi(4);
        Ok(h4 * tree_sum(self.values.len(), |i| self.values[i].inner(&other.values[i])))
    }

    pub fn with_values(&self, values: Vec<A>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Cochain {
            complex: self.complex.clone(),
            degree: self.degree,
            values,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.degree != other.degree || !self.complex.same_shape(&other.complex) {
            return Err(Error::ComplexMismatch);
        }
        Ok(())
    }
}

/// Boundary condition attached to a form domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Forms vanish on the boundary surface (`i*α = 0`).
    Normal,
    /// Forms are unconstrained on the closed region (`i*(*α) = 0` for the
    /// adjoint).
    Tangential,
}

/// A domain of cochains: which cells carry values, with which measure.
///
/// The inner product is `h⁴ Σ w_i ⟨a_i, b_i⟩` over active cells, with
/// trapezoidal weights on region surfaces. `d` maps active cells to active
/// cells and [`FormSpace::codiff`] is its exact adjoint.
#[derive(Debug, Clone)]
pub struct FormSpace {
    complex: Arc<LatticeComplex>,
    bc: BoundaryCondition,
    bounds: Option<Bounds>,
    mask: [Vec<bool>; 5],
    weight: [Vec<f64>; 5],
}

impl FormSpace {
    /// Forms on a whole complex. On periodic and surface complexes every cell
    /// is active; a box is treated as a region covering itself.
    pub fn whole(complex: &Arc<LatticeComplex>, bc: BoundaryCondition) -> Self {
        match complex.topology() {
            Topology::Box => {
                let bounds = Bounds {
                    lo: [0; 4],
                    len: complex.dims(),
                };
                let (class, weight) = classify(complex, bounds);
                Self::from_classes(complex, bc, Some(bounds), &class, weight)
            }
            _ => FormSpace {
                complex: complex.clone(),
                bc,
                bounds: None,
                mask: std::array::from_fn(|k| vec![true; complex.num_cells(k)]),
                weight: std::array::from_fn(|k| vec![1.0; complex.num_cells(k)]),
            },
        }
    }

    /// Forms supported on a ball region of its parent complex.
    pub fn on_region(region: &BallRegion, bc: BoundaryCondition) -> Self {
        let class: [Vec<CellClass>; 5] = std::array::from_fn(|k| region.classes(k).to_vec());
        let weight = std::array::from_fn(|k| region.weights(k).to_vec());
        Self::from_classes(region.parent(), bc, Some(region.bounds()), &class, weight)
    }

    fn from_classes(
        complex: &Arc<LatticeComplex>,
        bc: BoundaryCondition,
        bounds: Option<Bounds>,
        class: &[Vec<CellClass>; 5],
        mut weight: [Vec<f64>; 5],
    ) -> Self {
        let mask: [Vec<bool>; 5] = std::array::from_fn(|k| {
            class[k]
                .iter()
                .map(|c| match bc {
                    BoundaryCondition::Normal => matches!(c, CellClass::Interior | CellClass::Normal),
                    BoundaryCondition::Tangential => *c != CellClass::Exterior,
                })
                .collect()
        });
        for k in 0..5 {
            for (w, &m) in weight[k].iter_mut().zip(&mask[k]) {
                if !m {
                    *w = 0.0;
                }
            }
        }
        FormSpace {
            complex: complex.clone(),
            bc,
            bounds,
            mask,
            weight,
        }
    }

    pub fn complex(&self) -> &Arc<LatticeComplex> {
        &self.complex
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }

    pub fn is_active(&self, k: usize, i: usize) -> bool {
        self.mask[k][i]
    }

    pub fn mask(&self, k: usize) -> &[bool] {
        &self.mask[k]
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weight[k]
    }

    /// Number of active k-cells.
    pub fn dim(&self, k: usize) -> usize {
        self.mask[k].iter().filter(|&&m| m).count()
    }

    pub fn active(&self, k: usize) -> Vec<usize> {
        (0..self.mask[k].len()).filter(|&i| self.mask[k][i]).collect()
    }

    /// Zeroes inactive entries.
    pub fn project<A: Algebra>(&self, k: usize, v: &[A]) -> Vec<A> {
        v.iter()
            .zip(&self.mask[k])
            .map(|(x, &m)| if m { *x } else { A::zero() })
            .collect()
    }

    pub fn inner<A: Algebra>(&self, k: usize, a: &[A], b: &[A]) -> f64 {
        let h4 = self.complex.spacing().powi(4);
        let w = &self.weight[k];
        h4 * tree_sum(a.len(), |i| if w[i] == 0.0 { 0.0 } else { w[i] * a[i].inner(&b[i]) })
    }

    pub fn norm_sq<A: Algebra>(&self, k: usize, v: &[A]) -> f64 {
        self.inner(k, v, v)
    }

    /// Coboundary of an active k-cochain, restricted to active (k+1)-cells.
    pub fn d<A: Algebra>(&self, k: usize, v: &[A]) -> Vec<A> {
        let inv_h = 1.0 / self.complex.spacing();
        let mk = &self.mask[k];
        let mk1 = &self.mask[k + 1];
        (0..self.complex.num_cells(k + 1))
            .into_par_iter()
            .map(|j| {
                if !mk1[j] {
                    return A::zero();
                }
                let mut acc = A::zero();
                for inc in self.complex.boundary(k + 1, j) {
                    let c = inc.cell as usize;
                    if mk[c] {
                        if inc.sign > 0 {
                            acc += v[c];
                        } else {
                            acc -= v[c];
                        }
                    }
                }
                acc * inv_h
            })
            .collect()
    }

    /// The adjoint of [`FormSpace::d`] from degree k to degree k−1.
    pub fn codiff<A: Algebra>(&self, k: usize, v: &[A]) -> Vec<A> {
        let inv_h = 1.0 / self.complex.spacing();
        let wk = &self.weight[k];
        let wl = &self.weight[k - 1];
        (0..self.complex.num_cells(k - 1))
            .into_par_iter()
            .map(|i| {
                if wl[i] == 0.0 {
                    return A::zero();
                }
                let mut acc = A::zero();
                for cf in self.complex.cofaces(k - 1, i) {
                    let j = cf.cell as usize;
                    if wk[j] != 0.0 {
                        acc += v[j] * (cf.sign as f64 * wk[j]);
                    }
                }
                acc * (inv_h / wl[i])
            })
            .collect()
    }

    fn max_degree(&self) -> usize {
        self.complex.dimension()
    }

    /// `‖c‖_{L²}`.
    pub fn norm_l2<A: Algebra>(&self, c: &Cochain<A>) -> f64 {
        self.norm_sq(c.degree, &c.values).sqrt()
    }

    /// `(h⁴ Σ w |c|⁴)^{1/4}`.
    pub fn norm_l4<A: Algebra>(&self, c: &Cochain<A>) -> f64 {
        let h4 = self.complex.spacing().powi(4);
        let w = &self.weight[c.degree];
        let v = &c.values;
        (h4 * tree_sum(v.len(), |i| if w[i] == 0.0 { 0.0 } else { w[i] * v[i].norm_sq().powi(2) })).powf(0.25)
    }

    /// Gaffney norm `√(‖c‖² + ‖dc‖² + ‖d*c‖²)`, the discrete L²₁ norm.
    pub fn norm_sobolev1<A: Algebra>(&self, c: &Cochain<A>) -> f64 {
        self.gaffney_sq(c.degree, &c.values).sqrt()
    }

    fn gaffney_sq<A: Algebra>(&self, k: usize, v: &[A]) -> f64 {
        let v = self.project(k, v);
        let mut total = self.norm_sq(k, &v);
        if k < self.max_degree() {
            total += self.norm_sq(k + 1, &self.d(k, &v));
        }
        if k >= 1 {
            total += self.norm_sq(k - 1, &self.codiff(k, &v));
        }
        total
    }

    /// `(I + d*d + dd*) v`, self-adjoint and positive definite.
    fn gaffney_operator<A: Algebra>(&self, k: usize, v: &[A]) -> Vec<A> {
        let mut out = self.project(k, v);
        if k < self.max_degree() {
            linalg::axpy(&mut out, 1.0, &self.codiff(k + 1, &self.d(k, v)));
        }
        if k >= 1 {
            linalg::axpy(&mut out, 1.0, &self.d(k - 1, &self.codiff(k, v)));
        }
        out
    }

    /// Hodge Laplacian `d*d + dd*` on active k-cochains.
    pub fn laplacian<A: Algebra>(&self, k: usize, v: &[A]) -> Vec<A> {
        let mut out = vec![A::zero(); v.len()];
        if k < self.max_degree() {
            out = self.codiff(k + 1, &self.d(k, v));
        }
        if k >= 1 {
            linalg::axpy(&mut out, 1.0, &self.d(k - 1, &self.codiff(k, v)));
        }
        out
    }

    /// Solves `d*d α = d* c` on degree k−1 and returns `dα`, the exact part.
    fn exact_part<A: Algebra>(&self, k: usize, c: &[A]) -> Result<Vec<A>> {
        let rhs = self.codiff(k, c);
        let n = self.dim(k - 1);
        let floor = self.norm_sq(k, c).sqrt() / self.complex.spacing();
        let out = linalg::conjugate_gradient(
            |x| self.codiff(k, &self.d(k - 1, x)),
            |a, b| self.inner(k - 1, a, b),
            &rhs,
            CgOptions::for_size(n).with_floor(floor),
        )?;
        Ok(self.d(k - 1, &out.x))
    }

    /// Solves `dd* β = dc` on degree k+1 and returns `d*β`, the coexact part.
    fn coexact_part<A: Algebra>(&self, k: usize, c: &[A]) -> Result<Vec<A>> {
        let rhs = self.d(k, c);
        let n = self.dim(k + 1);
        let floor = self.norm_sq(k, c).sqrt() / self.complex.spacing();
        let out = linalg::conjugate_gradient(
            |x| self.d(k, &self.codiff(k + 1, x)),
            |a, b| self.inner(k + 1, a, b),
            &rhs,
            CgOptions::for_size(n).with_floor(floor),
        )?;
        Ok(self.codiff(k + 1, &out.x))
    }

    /// Orthogonal splitting `c = dα + d*β + h` in this domain. Inactive
    /// entries of `c` are ignored.
    pub fn hodge_decompose<A: Algebra>(&self, c: &Cochain<A>) -> Result<HodgeParts<A>> {
        let k = c.degree;
        if k > self.max_degree() {
            return Err(Error::DegreeOutOfRange {
                op: "hodge_decompose",
                degree: k,
            });
        }
        if !c.complex.same_shape(&self.complex) {
            return Err(Error::ComplexMismatch);
        }
        let v = self.project(k, &c.values);
        let exact = if k >= 1 {
            self.exact_part(k, &v)?
        } else {
            vec![A::zero(); v.len()]
        };
        let coexact = if k < self.max_degree() {
            self.coexact_part(k, &v)?
        } else {
            vec![A::zero(); v.len()]
        };
        let harmonic = linalg::sub(&linalg::sub(&v, &exact), &coexact);
        Ok(HodgeParts {
            exact: c.with_values(exact),
            coexact: c.with_values(coexact),
            harmonic: c.with_values(self.project(k, &harmonic)),
            bc: self.bc,
        })
    }

    /// Dimension of harmonic k-forms, `dim C_k − rank d_k − rank d_{k−1}`,
    /// from exact ranks of the masked incidence matrices.
    pub fn harmonic_dimension(&self, k: usize) -> usize {
        let rank = |k: usize| -> usize {
            // rank of d: C_k → C_{k+1}
            if k >= self.max_degree() {
                return 0;
            }
            let rows = (0..self.complex.num_cells(k + 1))
                .filter(|&j| self.mask[k + 1][j])
                .map(|j| {
                    self.complex
                        .boundary(k + 1, j)
                        .iter()
                        .filter(|inc| self.mask[k][inc.cell as usize])
                        .map(|inc| (inc.cell as usize, inc.sign as i64))
                        .collect()
                })
                .collect();
            crate::grid::rank_mod_p(rows)
        };
        let below = if k >= 1 { rank(k - 1) } else { 0 };
        self.dim(k) - rank(k) - below
    }
}

/// Result of [`FormSpace::hodge_decompose`].
#[derive(Debug, Clone)]
pub struct HodgeParts<A> {
    pub exact: Cochain<A>,
    pub coexact: Cochain<A>,
    pub harmonic: Cochain<A>,
    pub bc: BoundaryCondition,
}

/// Unmasked coboundary on a whole complex.
pub fn d<A: Algebra>(c: &Cochain<A>) -> Result<Cochain<A>> {
    let k = c.degree;
    if k >= c.complex.dimension() {
        return Err(Error::DegreeOutOfRange { op: "d", degree: k });
    }
    let space = FormSpace::whole(&c.complex, BoundaryCondition::Tangential);
    Cochain::from_values(&c.complex, k + 1, space.d(k, &c.values))
}

/// Codifferential on a whole complex with the given boundary condition
/// (relevant only for box complexes).
pub fn codiff<A: Algebra>(c: &Cochain<A>, bc: BoundaryCondition) -> Result<Cochain<A>> {
    let k = c.degree;
    if k == 0 {
        return Err(Error::DegreeOutOfRange { op: "codiff", degree: 0 });
    }
    let space = FormSpace::whole(&c.complex, bc);
    let v = space.project(k, &c.values);
    Cochain::from_values(&c.complex, k - 1, space.codiff(k, &v))
}

/// `a_e = log(U_e)/h`.
pub fn connection_form<G: Group>(u: &LinkField<G>) -> Result<Cochain<G::Algebra>> {
    let inv_h = 1.0 / u.complex.spacing();
    let values = u
        .links
        .par_iter()
        .enumerate()
        .map(|(e, g)| {
            g.log()
                .map(|x| x * inv_h)
                .map_err(|_| Error::BranchCut(BranchCutSite::Edge(e)))
        })
        .collect::<Result<Vec<_>>>()?;
    Cochain::from_values(&u.complex, 1, values)
}

/// `U_e = exp(h·a_e)`.
pub fn link_field<G: Group>(a: &Cochain<G::Algebra>) -> Result<LinkField<G>> {
    if a.degree != 1 {
        return Err(Error::DegreeOutOfRange {
            op: "link_field",
            degree: a.degree,
        });
    }
    let h = a.complex.spacing();
    let links = a
        .values
        .iter()
        .map(|x| G::checked_exp(&(*x * h)))
        .collect::<Result<Vec<_>>>()?;
    LinkField::from_links(&a.complex, links)
}

fn face_log<G: Group>(u: &LinkField<G>, f: usize) -> Result<G::Algebra> {
    u.holonomy(f)
        .log()
        .map_err(|_| Error::BranchCut(BranchCutSite::Plaquette(f)))
}

/// `F_p = log(U_∂p)/h²` on every face.
pub fn plaquette_curvature<G: Group>(u: &LinkField<G>) -> Result<Cochain<G::Algebra>> {
    let inv_h2 = u.complex.spacing().powi(-2);
    let values = (0..u.complex.num_faces())
        .into_par_iter()
        .map(|f| face_log(u, f).map(|x| x * inv_h2))
        .collect::<Result<Vec<_>>>()?;
    Cochain::from_values(&u.complex, 2, values)
}

/// `½ h⁴ Σ_p |F_p|²` over faces of the closed region, or all faces.
pub fn energy<G: Group>(u: &LinkField<G>, region: Option<&BallRegion>) -> Result<f64> {
    let faces: Vec<usize> = match region {
        Some(r) => r.closed_cells(2),
        None => (0..u.complex.num_faces()).collect(),
    };
    face_energy(u, &faces)
}

/// `½ Σ |log U_∂p|²` over the listed faces (equal to `½ h⁴ Σ |F_p|²`).
pub fn face_energy<G: Group>(u: &LinkField<G>, faces: &[usize]) -> Result<f64> {
    let densities = faces
        .par_iter()
        .map(|&f| face_log(u, f).map(|x| x.norm_sq()))
        .collect::<Result<Vec<_>>>()?;
    Ok(0.5 * crate::reduce::sum_slice(&densities))
}

/// Sorted `Re tr` of the plaquette holonomies over the closed region (or all
/// faces); a gauge-invariant fingerprint of a field.
pub fn plaquette_trace_spectrum<G: Group>(u: &LinkField<G>, region: Option<&BallRegion>) -> Vec<f64> {
    let faces: Vec<usize> = match region {
        Some(r) => r.closed_cells(2),
        None => (0..u.complex.num_faces()).collect(),
    };
    let mut s: Vec<f64> = faces.iter().map(|&f| u.holonomy(f).re_trace()).collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Copies the tangential k-cells of a parent cochain into boundary-complex
/// indexing.
pub fn restrict_boundary<A: Algebra>(c: &Cochain<A>, region: &BallRegion) -> Result<Cochain<A>> {
    if !c.complex.same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    let bc = region.boundary_complex();
    let k = c.degree;
    if k > 3 {
        return Err(Error::DegreeOutOfRange {
            op: "restrict_boundary",
            degree: k,
        });
    }
    let values = (0..bc.complex.num_cells(k)).map(|i| c.values[bc.to_parent(k, i)]).collect();
    Cochain::from_values(&bc.complex, k, values)
}

/// Tangential links of a parent field as a field on the boundary complex.
pub fn restrict_boundary_links<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<LinkField<G>> {
    if !u.complex.same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    let bc = region.boundary_complex();
    let links = (0..bc.complex.num_edges()).map(|i| u.links[bc.to_parent(1, i)]).collect();
    LinkField::from_links(&bc.complex, links)
}

/// Writes boundary links back onto the tangential edges of a parent field.
pub fn embed_boundary_links<G: Group>(u: &mut LinkField<G>, boundary: &LinkField<G>, region: &BallRegion) -> Result<()> {
    let bc = region.boundary_complex();
    if !boundary.complex.same_shape(&bc.complex) || !u.complex.same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    for (i, g) in boundary.links.iter().enumerate() {
        u.links[bc.to_parent(1, i)] = *g;
    }
    Ok(())
}

/// Takes `inner` on interior and normal links of the region and `outer`
/// everywhere else. Both must agree on tangential links.
pub fn patch<G: Group>(region: &BallRegion, inner: &LinkField<G>, outer: &LinkField<G>) -> Result<LinkField<G>> {
    if !inner.complex.same_shape(region.parent()) || !outer.complex.same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    let mut links = outer.links.clone();
    for (e, slot) in links.iter_mut().enumerate() {
        match region.class(1, e) {
            CellClass::Interior | CellClass::Normal => *slot = inner.links[e],
            CellClass::Tangential => {
                let deviation = inner.links[e].distance(&outer.links[e]);
                if deviation > PATCH_TOLERANCE {
                    return Err(Error::BoundaryMismatch { edge: e, deviation });
                }
            }
            CellClass::Exterior => {}
        }
    }
    LinkField::from_links(&outer.complex, links)
}

/// Minimal-Gaffney-norm extension of tangential boundary data into the
/// closed region (free values on interior and normal edges).
pub fn boundary_extension<A: Algebra>(boundary: &Cochain<A>, region: &BallRegion) -> Result<Cochain<A>> {
    let bcx = region.boundary_complex();
    if boundary.degree != 1 || !boundary.complex.same_shape(&bcx.complex) {
        return Err(Error::ComplexMismatch);
    }
    let parent = region.parent();
    let space = FormSpace::on_region(region, BoundaryCondition::Tangential);
    let mut fixed = vec![A::zero(); parent.num_edges()];
    for (i, v) in boundary.values.iter().enumerate() {
        fixed[bcx.to_parent(1, i)] = *v;
    }
    let free: Vec<bool> = (0..parent.num_edges()).map(|e| region.is_free_edge(e)).collect();
    let restrict = |v: Vec<A>| -> Vec<A> {
        v.into_iter()
            .zip(&free)
            .map(|(x, &f)| if f { x } else { A::zero() })
            .collect()
    };
    let rhs = restrict(linalg::scale(&space.gaffney_operator(1, &fixed), -1.0));
    let n = free.iter().filter(|&&f| f).count();
    let out = linalg::conjugate_gradient(
        |x| restrict(space.gaffney_operator(1, x)),
        |a, b| space.inner(1, a, b),
        &rhs,
        CgOptions::for_size(n),
    )?;
    let ext = linalg::add(&fixed, &out.x);
    Cochain::from_values(parent, 1, ext)
}

/// Discrete `L²_{1/2}` norm of boundary data: the Gaffney norm of its
/// minimal extension.
pub fn norm_boundary_half<A: Algebra>(boundary: &Cochain<A>, region: &BallRegion) -> Result<f64> {
    let ext = boundary_extension(boundary, region)?;
    let space = FormSpace::on_region(region, BoundaryCondition::Tangential);
    Ok(space.norm_sobolev1(&ext))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Su2, Su2Alg, U1Alg, U1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn d_of_coordinate_function_on_box() {
        let b = LatticeComplex::open_box([2; 4], 1.0).unwrap();
        let f = Cochain::from_values(
            &b,
            0,
            (0..b.num_vertices()).map(|v| U1Alg(b.vertex_coords(v)[1] as f64)).collect(),
        )
        .unwrap();
        let df = d(&f).unwrap();
        for e in 0..b.num_edges() {
            let expect = if b.edge_axis(e) == 1 { 1.0 } else { 0.0 };
            assert_eq!(df.values()[e].0, expect);
        }
    }

    #[test]
    fn dd_vanishes() {
        let t = LatticeComplex::torus([3, 2, 3, 2], 0.7).unwrap();
        let f: Cochain<Su2Alg> = Cochain::random(&t, 0, &mut rng(1), 1.0);
        let ddf = d(&d(&f).unwrap()).unwrap();
        assert!(ddf.max_norm() <= 1e-12);
        let a: Cochain<Su2Alg> = Cochain::random(&t, 1, &mut rng(2), 1.0);
        assert!(d(&d(&a).unwrap()).unwrap().max_norm() <= 1e-12);
    }

    #[test]
    fn codiff_is_adjoint_on_every_domain() {
        let t = LatticeComplex::torus([5; 4], 0.5).unwrap();
        let ball = BallRegion::new(&t, [(1, 5), (0, 4), (2, 5), (3, 7)]).unwrap();
        let b = LatticeComplex::open_box([3, 4, 3, 3], 1.3).unwrap();
        let spaces = [
            FormSpace::whole(&t, BoundaryCondition::Normal),
            FormSpace::on_region(&ball, BoundaryCondition::Normal),
            FormSpace::on_region(&ball, BoundaryCondition::Tangential),
            FormSpace::whole(&b, BoundaryCondition::Normal),
            FormSpace::whole(&b, BoundaryCondition::Tangential),
        ];
        let mut r = rng(3);
        for s in &spaces {
            let c = s.complex();
            for k in 0..3 {
                let a: Cochain<Su2Alg> = Cochain::random(c, k, &mut r, 1.0);
                let bb: Cochain<Su2Alg> = Cochain::random(c, k + 1, &mut r, 1.0);
                let a = s.project(k, a.values());
                let bb = s.project(k + 1, bb.values());
                let lhs = s.inner(k + 1, &s.d(k, &a), &bb);
                let rhs = s.inner(k, &a, &s.codiff(k + 1, &bb));
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn codiff_of_constant_vanishes_on_torus() {
        let t = LatticeComplex::torus([3; 4], 1.0).unwrap();
        let c = Cochain::from_values(&t, 1, vec![U1Alg(0.8); t.num_edges()]).unwrap();
        assert!(codiff(&c, BoundaryCondition::Normal).unwrap().max_norm() < 1e-14);
    }

    #[test]
    fn single_edge_codiff_on_box() {
        let h = 0.5;
        let b = LatticeComplex::open_box([3; 4], h).unwrap();
        let centre = b.find_cell([1, 1, 1, 1], 0).unwrap();
        let e = b.find_cell([1, 1, 1, 1], 1).unwrap();
        let head = b.find_cell([2, 1, 1, 1], 0).unwrap();
        let mut c = Cochain::zeros(&b, 1);
        c.values_mut()[e] = U1Alg(1.0);
        let n = codiff(&c, BoundaryCondition::Normal).unwrap();
        assert_eq!(n.values()[centre].0, -1.0 / h);
        assert_eq!(n.values()[head].0, 0.0);
        let t = codiff(&c, BoundaryCondition::Tangential).unwrap();
        assert_eq!(t.values()[centre].0, -1.0 / h);
        // the surface vertex carries half the measure
        assert_eq!(t.values()[head].0, 2.0 / h);
    }

    #[test]
    fn connection_form_round_trip() {
        let t = LatticeComplex::torus([3; 4], 0.25).unwrap();
        let u: LinkField<Su2> = LinkField::random(&t, &mut rng(4), 0.5);
        let a = connection_form(&u).unwrap();
        let back: LinkField<Su2> = link_field(&a).unwrap();
        assert!(back.max_distance(&u) <= 1e-12);
    }

    #[test]
    fn abelian_curvature_is_d_of_connection() {
        let t = LatticeComplex::torus([3; 4], 0.5).unwrap();
        let u: LinkField<U1> = LinkField::random(&t, &mut rng(5), 0.3);
        let f = plaquette_curvature(&u).unwrap();
        let da = d(&connection_form(&u).unwrap()).unwrap();
        assert!(f.sub(&da).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn branch_cut_link_is_named() {
        let t = LatticeComplex::torus([2; 4], 1.0).unwrap();
        let mut u: LinkField<U1> = LinkField::identity(&t);
        u.set_link(7, U1::from_phase(std::f64::consts::PI));
        assert!(matches!(
            connection_form(&u),
            Err(Error::BranchCut(BranchCutSite::Edge(7)))
        ));
    }

    #[test]
    fn patch_with_itself_is_identity() {
        let t = LatticeComplex::torus([6; 4], 1.0).unwrap();
        let ball = BallRegion::new(&t, [(1, 5); 4]).unwrap();
        let u: LinkField<Su2> = LinkField::random(&t, &mut rng(6), 0.3);
        assert_eq!(patch(&ball, &u, &u).unwrap(), u);
        let mut v = u.clone();
        let tang = ball.cells_with(1, CellClass::Tangential)[0];
        v.set_link(tang, Su2::identity());
        assert!(matches!(patch(&ball, &v, &u), Err(Error::BoundaryMismatch { .. })));
    }

    #[test]
    fn hodge_parts_of_exact_form() {
        let t = LatticeComplex::torus([3; 4], 1.0).unwrap();
        let s = FormSpace::whole(&t, BoundaryCondition::Normal);
        let f: Cochain<Su2Alg> = Cochain::random(&t, 0, &mut rng(7), 1.0);
        let df = d(&f).unwrap();
        let parts = s.hodge_decompose(&df).unwrap();
        assert!(s.norm_l2(&parts.coexact) <= 1e-10);
        assert!(s.norm_l2(&parts.harmonic) <= 1e-10);
    }

    #[test]
    fn harmonic_dimensions() {
        let t = LatticeComplex::torus([3; 4], 1.0).unwrap();
        let s = FormSpace::whole(&t, BoundaryCondition::Normal);
        assert_eq!((0..=4).map(|k| s.harmonic_dimension(k)).collect::<Vec<_>>(), vec![1, 4, 6, 4, 1]);
        let t5 = LatticeComplex::torus([5; 4], 1.0).unwrap();
        let ball = BallRegion::new(&t5, [(0, 3); 4]).unwrap();
        let n = FormSpace::on_region(&ball, BoundaryCondition::Normal);
        assert_eq!(n.harmonic_dimension(1), 0);
        let tg = FormSpace::on_region(&ball, BoundaryCondition::Tangential);
        assert_eq!(tg.harmonic_dimension(0), 1);
        assert_eq!(tg.harmonic_dimension(1), 0);
    }

    #[test]
    fn norms_of_single_edge() {
        let h = 0.3;
        let t = LatticeComplex::torus([3; 4], h).unwrap();
        let s = FormSpace::whole(&t, BoundaryCondition::Normal);
        let mut c = Cochain::zeros(&t, 1);
        c.values_mut()[10] = Su2Alg([0.3, -0.4, 1.2]);
        let x = 1.3;
        assert!((s.norm_l2(&c) - h * h * x).abs() < 1e-14);
        assert!((s.norm_l4(&c) - h * x).abs() < 1e-14);
    }
}
