//! Dirichlet Yang–Mills problem on a ball: tangential links fixed, interior
//! and normal links free, energy minimized on the group manifold.
//!
//! Updates are left translations `U_e ↦ exp(t X_e) U_e`. For a face with
//! holonomy `P = … M U_e N …` the derivative of `½|log P|²` along `X_e` is
//! `⟨X_e, Ad_{M⁻¹} log P⟩` (with the obvious sign change for reversed
//! links), which gives the exact gradient below. The Newton path solves the
//! Hodge Laplacian system on free links, i.e. the linearization at the
//! current Coulomb-gauge iterate with the commutator terms dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    connection_form, face_energy, norm_boundary_half, plaquette_curvature, restrict_boundary, BoundaryCondition,
    Cochain, FormSpace, LinkField,
};
use crate::gauge::{coulomb_fix_identity_boundary, GaugeOptions};
use crate::grid::{BallRegion, CellClass};
use crate::group::{Algebra, Group, U1};
use crate::linalg::{self, CgOptions};
use crate::reduce::tree_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientDescent,
    NonlinearCg,
    Newton,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient_descent" => Ok(Method::GradientDescent),
            "nonlinear_cg" => Ok(Method::NonlinearCg),
            "newton" => Ok(Method::Newton),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub method: Method,
    /// Target for the l2 norm of the gradient over free links.
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Identity-boundary Coulomb refix every n iterations (0 = never).
    pub gauge_refix_every: usize,
    /// First trial step, divided by the gradient norm.
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::NonlinearCg,
            tol_residual: 1e-10,
            max_iter: 10_000,
            gauge_refix_every: 0,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument("solver tolerance must be positive and max_iter ≥ 1".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidArgument("line-search parameters must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("initial step must be positive".into()));
        }
        Ok(())
    }
}

/// Norms appearing in the smallness hypotheses, measured on the closed ball.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct HypothesisNorms {
    pub a_l4: f64,
    pub a_sobolev1: f64,
    pub curvature_l2: f64,
    pub boundary_half: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub iterations: usize,
    pub energy_trace: Vec<f64>,
    /// Gradient norm after each iteration, starting with the input.
    pub residual_trace: Vec<f64>,
    /// Hodge-projected gradient norm of the result.
    pub final_residual: f64,
    pub gradient_norm: f64,
    /// Max distance of tangential links from the prescribed data.
    pub boundary_fidelity: f64,
    pub converged: bool,
    pub newton_steps: usize,
    pub newton_fallbacks: usize,
    pub gauge_refixes: usize,
    pub norms: HypothesisNorms,
    pub stop_reason: String,
}

/// Cells entering the Dirichlet energy of a region.
pub struct DirichletProblem<'a> {
    region: Option<&'a BallRegion>,
    space: FormSpace,
    faces: Vec<usize>,
    free: Vec<usize>,
    is_free: Vec<bool>,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(region: &'a BallRegion) -> Self {
        let parent = region.parent();
        let is_free: Vec<bool> = (0..parent.num_edges()).map(|e| region.is_free_edge(e)).collect();
        DirichletProblem {
            region: Some(region),
            space: FormSpace::on_region(region, BoundaryCondition::Normal),
            faces: region.closed_cells(2),
            free: region.free_edges(),
            is_free,
        }
    }

    /// Every face and every link of a complex (no boundary data).
    pub fn whole(complex: &std::sync::Arc<crate::grid::LatticeComplex>) -> Self {
        DirichletProblem {
            region: None,
            space: FormSpace::whole(complex, BoundaryCondition::Tangential),
            faces: (0..complex.num_faces()).collect(),
            free: (0..complex.num_edges()).collect(),
            is_free: vec![true; complex.num_edges()],
        }
    }

    pub fn region(&self) -> Option<&BallRegion> {
        self.region
    }

    pub fn free_edges(&self) -> &[usize] {
        &self.free
    }

    /// Energy of the closed ball.
    pub fn energy<G: Group>(&self, u: &LinkField<G>) -> Result<f64> {
        face_energy(u, &self.faces)
    }

    /// Left-trivialized gradient of the ball energy on free links (zero
    /// elsewhere).
    pub fn gradient<G: Group>(&self, u: &LinkField<G>) -> Result<Vec<G::Algebra>> {
        let c = u.complex();
        let mut contrib: Vec<[G::Algebra; 4]> = vec![[G::Algebra::zero(); 4]; c.num_faces()];
        let computed = self
            .faces
            .par_iter()
            .map(|&f| {
                let p = u.holonomy(f);
                let l = p
                    .log()
                    .map_err(|_| Error::BranchCut(crate::error::BranchCutSite::Plaquette(f)))?;
                let mut out = [G::Algebra::zero(); 4];
                let mut m = G::identity();
                for (slot, inc) in c.boundary(2, f).iter().enumerate() {
                    let link = u.link(inc.cell as usize);
                    if inc.sign > 0 {
                        out[slot] = m.inverse().conjugate(&l);
                        m = m.mul(&link);
                    } else {
                        m = m.mul(&link.inverse());
                        out[slot] = -m.inverse().conjugate(&l);
                    }
                }
                Ok((f, out))
            })
            .collect::<Result<Vec<_>>>()?;
        for (f, out) in computed {
            contrib[f] = out;
        }
        let grad = (0..c.num_edges())
            .into_par_iter()
            .map(|e| {
                if !self.is_free[e] {
                    return G::Algebra::zero();
                }
                let mut acc = G::Algebra::zero();
                for cf in c.cofaces(1, e) {
                    acc += contrib[cf.cell as usize][cf.slot as usize];
                }
                acc
            })
            .collect();
        Ok(grad)
    }

    fn dot<A: Algebra>(&self, a: &[A], b: &[A]) -> f64 {
        tree_sum(self.free.len(), |i| {
            let e = self.free[i];
            a[e].inner(&b[e])
        })
    }

    fn step<G: Group>(&self, u: &LinkField<G>, dir: &[G::Algebra], t: f64) -> LinkField<G> {
        let mut out = u.clone();
        let links = out.links_mut();
        for &e in &self.free {
            links[e] = G::exp(&(dir[e] * t)).mul(&links[e]).renormalized();
        }
        out
    }

    /// Removes the gauge (exact) component of a free-link vector.
    pub(crate) fn project_coexact<A: Algebra>(&self, v: &[A]) -> Result<Vec<A>> {
        let space = &self.space;
        let w = space.project(1, v);
        let rhs = space.codiff(1, &w);
        let floor = space.norm_sq(1, &w).sqrt() / space.complex().spacing();
        let out = linalg::conjugate_gradient(
            |x| space.codiff(1, &space.d(0, x)),
            |a, b| space.inner(0, a, b),
            &rhs,
            CgOptions::for_size(space.dim(0)).with_floor(floor),
        )?;
        Ok(linalg::sub(&w, &space.d(0, &out.x)))
    }
}

/// The gradient of the ball energy as a 1-cochain (zero off free links).
pub fn energy_gradient<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<Cochain<G::Algebra>> {
    let p = DirichletProblem::new(region);
    Cochain::from_values(u.complex(), 1, p.gradient(u)?)
}

/// Norm of the gradient with its gauge component removed: zero exactly when
/// the projected Yang–Mills equations hold on the ball.
pub fn ym_residual<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<f64> {
    let p = DirichletProblem::new(region);
    let g = p.gradient(u)?;
    let pg = p.project_coexact(&g)?;
    Ok(p.dot(&pg, &pg).sqrt())
}

/// [`ym_residual`] for the energy of the whole complex.
pub fn ym_residual_global<G: Group>(u: &LinkField<G>) -> Result<f64> {
    let p = DirichletProblem::whole(u.complex());
    let g = p.gradient(u)?;
    let pg = p.project_coexact(&g)?;
    Ok(p.dot(&pg, &pg).sqrt())
}

fn interior_coulomb_residual<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<f64> {
    Ok(crate::gauge::dirichlet_coulomb_residuals(u, region)?.0)
}

/// Residual above which [`newton_step`] refuses its input.
pub const NEWTON_GAUGE_THRESHOLD: f64 = 1e-6;

/// Correction `δa` solving `(d*d + dd*) δa = −P ∇E` on free links, `P` the
/// projection removing gauge directions. Satisfies `i*δa = 0` and
/// `d*δa ≈ 0`.
pub fn newton_step<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<Cochain<G::Algebra>> {
    let residual = interior_coulomb_residual(u, region)?;
    if residual > NEWTON_GAUGE_THRESHOLD {
        return Err(Error::NotGaugeFixed { residual });
    }
    let p = DirichletProblem::new(region);
    let g = p.gradient(u)?;
    let delta = newton_correction(&p, &g, u.complex().spacing())?;
    Cochain::from_values(u.complex(), 1, delta)
}

fn newton_correction<A: Algebra>(p: &DirichletProblem, g: &[A], h: f64) -> Result<Vec<A>> {
    let space = &p.space;
    // gradient with respect to a = log U / h in the h⁴-weighted inner product
    let rhs = p.project_coexact(&linalg::scale(g, -h.powi(-3)))?;
    let out = linalg::conjugate_gradient(
        |x| space.laplacian(1, x),
        |a, b| space.inner(1, a, b),
        &rhs,
        CgOptions::for_size(space.dim(1)),
    )?;
    Ok(space.project(1, &out.x))
}

/// Measured hypothesis norms of a field on a region.
pub fn hypothesis_norms<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<HypothesisNorms> {
    let space = FormSpace::on_region(region, BoundaryCondition::Tangential);
    let a = connection_form(u)?;
    let f = plaquette_curvature(u)?;
    Ok(HypothesisNorms {
        a_l4: space.norm_l4(&a),
        a_sobolev1: space.norm_sobolev1(&a),
        curvature_l2: space.norm_l2(&f),
        boundary_half: norm_boundary_half(&restrict_boundary(&a, region)?, region)?,
    })
}

struct Accepted<G: Group> {
    u: LinkField<G>,
    energy: f64,
    grad: Vec<G::Algebra>,
    t: f64,
}

/// Energy slack treated as round-off when comparing trial energies.
fn noise(e0: f64) -> f64 {
    1e-13 + 1e-15 * e0.abs()
}

/// Bracketing line search. Energy decreases well above round-off are
/// accepted on the Armijo condition; below that the exact directional
/// derivative decides (approximate Wolfe: `σφ'(0) ≤ φ'(t) ≤ (2δ−1)φ'(0)`
/// with `φ(t) ≤ φ(0) + noise`), which keeps converging after energy
/// differences have vanished into round-off.
fn line_search<G: Group>(
    p: &DirichletProblem,
    u: &LinkField<G>,
    e0: f64,
    dir: &[G::Algebra],
    slope: f64,
    t0: f64,
    opts: &SolveOptions,
) -> Result<Option<Accepted<G>>> {
    const SIGMA: f64 = 0.9;
    const DELTA: f64 = 0.1;
    let eps = noise(e0);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut t = t0;
    for _ in 0..80 {
        let trial = p.step(u, dir, t);
        let too_long = match p.energy(&trial) {
            Err(_) => true,
            Ok(e) => {
                if e <= e0 + opts.armijo * t * slope && e0 - e > 10.0 * eps {
                    let grad = p.gradient(&trial)?;
                    return Ok(Some(Accepted { u: trial, energy: e, grad, t }));
                }
                if e <= e0 + eps {
                    let grad = p.gradient(&trial)?;
                    let slope_t = p.dot(&grad, dir);
                    if slope_t > (2.0 * DELTA - 1.0) * slope {
                        true
                    } else if slope_t < SIGMA * slope {
                        lo = t;
                        false
                    } else {
                        return Ok(Some(Accepted { u: trial, energy: e, grad, t }));
                    }
                } else {
                    true
                }
            }
        };
        if too_long {
            hi = t;
            t = if lo > 0.0 { 0.5 * (lo + hi) } else { t * opts.shrink };
        } else {
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
        }
    }
    Ok(None)
}

/// Minimizes the ball energy with tangential links fixed to `boundary`
/// (a field on the region's boundary complex).
pub fn solve_dirichlet_ym<G: Group>(
    u_init: &LinkField<G>,
    region: &BallRegion,
    boundary: &LinkField<G>,
    opts: &SolveOptions,
) -> Result<(LinkField<G>, SolveReport)> {
    opts.validate()?;
    if !u_init.complex().same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    let bcx = region.boundary_complex();
    if !boundary.complex().same_shape(&bcx.complex) {
        return Err(Error::ComplexMismatch);
    }
    for i in 0..bcx.complex.num_edges() {
        let e = bcx.to_parent(1, i);
        let deviation = u_init.link(e).distance(&boundary.link(i));
        if deviation > crate::fields::PATCH_TOLERANCE {
            return Err(Error::BoundaryMismatch { edge: e, deviation });
        }
    }
    let mut u = u_init.clone();
    crate::fields::embed_boundary_links(&mut u, boundary, region)?;

    let p = DirichletProblem::new(region);
    let h = u.complex().spacing();
    let mut energy = p.energy(&u)?;
    let mut grad = p.gradient(&u)?;
    let mut gnorm = p.dot(&grad, &grad).sqrt();
    let mut energy_trace = vec![energy];
    let mut residual_trace = vec![gnorm];
    let mut iterations = 0;
    let mut newton_steps = 0;
    let mut newton_fallbacks = 0;
    let mut gauge_refixes = 0;
    let mut prev_t = opts.initial_step / gnorm.max(f64::MIN_POSITIVE);
    let mut prev_grad: Option<Vec<G::Algebra>> = None;
    let mut prev_dir: Option<Vec<G::Algebra>> = None;
    let mut stop_reason = "max_iter".to_string();
    let gauge_opts = GaugeOptions {
        tol: 1e-10,
        ..GaugeOptions::default()
    };

    while iterations < opts.max_iter {
        if gnorm <= opts.tol_residual {
            stop_reason = "converged".into();
            break;
        }
        let refix_due = opts.gauge_refix_every > 0 && iterations > 0 && iterations % opts.gauge_refix_every == 0;
        let newton = opts.method == Method::Newton;
        if refix_due || (newton && interior_coulomb_residual(&u, region)? > 1e-8) {
            let (_, fixed, _) = coulomb_fix_identity_boundary(&u, region, &gauge_opts)?;
            u = fixed;
            energy = p.energy(&u)?;
            grad = p.gradient(&u)?;
            gauge_refixes += 1;
            prev_dir = None;
        }

        let mut accepted = None;
        if newton {
            let delta = newton_correction(&p, &grad, h)?;
            let dir = linalg::scale(&delta, h);
            let slope = p.dot(&grad, &dir);
            if slope < 0.0 {
                accepted = line_search(&p, &u, energy, &dir, slope, 1.0, opts)?;
            }
            if accepted.is_some() {
                newton_steps += 1;
            } else {
                newton_fallbacks += 1;
            }
        }
        if accepted.is_none() {
            let mut dir: Vec<G::Algebra> = linalg::scale(&grad, -1.0);
            if opts.method == Method::NonlinearCg {
                if let (Some(pg), Some(pd)) = (&prev_grad, &prev_dir) {
                    let num = p.dot(&grad, &linalg::sub(&grad, pg));
                    let den = p.dot(pg, pg);
                    let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                    linalg::axpy(&mut dir, beta, pd);
                    if p.dot(&grad, &dir) >= 0.0 {
                        dir = linalg::scale(&grad, -1.0);
                    }
                }
            }
            let slope = p.dot(&grad, &dir);
            let dnorm = p.dot(&dir, &dir).sqrt();
            let t0 = if iterations == 0 || prev_dir.is_none() {
                opts.initial_step / dnorm
            } else {
                (2.0 * prev_t).min(1e3 / dnorm)
            };
            accepted = line_search(&p, &u, energy, &dir, slope, t0, opts)?;
            if let Some(acc) = &accepted {
                prev_t = acc.t;
            }
            prev_dir = Some(dir);
        }
        let Some(acc) = accepted else {
            stop_reason = "line_search_failed".into();
            break;
        };
        prev_grad = Some(std::mem::replace(&mut grad, acc.grad));
        u = acc.u;
        energy = acc.energy;
        gnorm = p.dot(&grad, &grad).sqrt();
        iterations += 1;
        energy_trace.push(energy);
        residual_trace.push(gnorm);
    }
    if gnorm <= opts.tol_residual {
        stop_reason = "converged".into();
    }

    let boundary_fidelity = (0..bcx.complex.num_edges())
        .map(|i| u.link(bcx.to_parent(1, i)).distance(&boundary.link(i)))
        .fold(0.0, f64::max);
    let final_residual = ym_residual(&u, region)?;
    let norms = hypothesis_norms(&u, region)?;
    let report = SolveReport {
        method: opts.method,
        iterations,
        energy_trace,
        residual_trace,
        final_residual,
        gradient_norm: gnorm,
        boundary_fidelity,
        converged: gnorm <= opts.tol_residual,
        newton_steps,
        newton_fallbacks,
        gauge_refixes,
        norms,
        stop_reason,
    };
    Ok((u, report))
}

fn wrap_phase(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    x - two_pi * (x / two_pi).round()
}

/// Direct solve of the abelian Dirichlet problem: the energy minimizer with
/// the given tangential phases, in identity-boundary Coulomb gauge, with
/// identity links outside the closed ball.
pub fn abelian_oracle_solve(region: &BallRegion, boundary: &LinkField<U1>) -> Result<LinkField<U1>> {
    let parent = region.parent();
    let bcx = region.boundary_complex();
    if !boundary.complex().same_shape(&bcx.complex) {
        return Err(Error::ComplexMismatch);
    }
    let h = parent.spacing();
    let mut fixed = vec![crate::group::U1Alg(0.0); parent.num_edges()];
    for i in 0..bcx.complex.num_edges() {
        let theta = boundary.link(i).log()?;
        fixed[bcx.to_parent(1, i)] = theta * (1.0 / h);
    }
    let closed = FormSpace::on_region(region, BoundaryCondition::Tangential);
    let space = FormSpace::on_region(region, BoundaryCondition::Normal);
    let rhs = linalg::scale(&space.codiff(2, &closed.d(1, &fixed)), -1.0);
    let out = linalg::conjugate_gradient(
        |x| space.laplacian(1, x),
        |a, b| space.inner(1, a, b),
        &rhs,
        CgOptions::for_size(space.dim(1)),
    )?;
    let links = (0..parent.num_edges())
        .map(|e| match region.class(1, e) {
            CellClass::Tangential => U1::exp(&(fixed[e] * h)),
            CellClass::Interior | CellClass::Normal => U1::exp(&(out.x[e] * h)),
            CellClass::Exterior => U1::identity(),
        })
        .collect();
    LinkField::from_links(parent, links)
}

/// Largest free-link phase difference between two U(1) fields after
/// removing the best interior gauge transformation (identity on the
/// boundary). Both fields must share tangential links.
pub fn abelian_aligned_distance(a: &LinkField<U1>, b: &LinkField<U1>, region: &BallRegion) -> Result<f64> {
    let p = DirichletProblem::new(region);
    let mut diff = vec![crate::group::U1Alg(0.0); a.links().len()];
    for &e in p.free_edges() {
        let da = a.link(e).log()?.0;
        let db = b.link(e).log()?.0;
        diff[e] = crate::group::U1Alg(wrap_phase(da - db));
    }
    let residual = p.project_coexact(&diff)?;
    Ok(p.free_edges().iter().map(|&e| residual[e].0.abs()).fold(0.0, f64::max))
}
