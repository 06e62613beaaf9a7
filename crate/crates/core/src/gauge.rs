//! Gauge transformations and Coulomb gauge fixing.
//!
//! All three fixing procedures minimize the weighted link functional
//! `½ Σ_e w_e |log U'_e|²` over a set of free vertices by sequential site
//! updates (even-parity vertices first). The exact site minimizer is the
//! inverse of the weighted Karcher mean of the adjacent links oriented away
//! from the vertex; its first-order condition is `(d*a)(v) = 0` for the
//! log-defined connection form, so convergence is measured on `d*a` itself.
//! [`GaugeFixReport::functional`] records the negated value, which is
//! non-decreasing along the sweeps.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    connection_form, norm_boundary_half, plaquette_curvature, restrict_boundary, restrict_boundary_links,
    BoundaryCondition, Cochain, FormSpace, LinkField,
};
use crate::grid::{BallRegion, CellClass, LatticeComplex};
use crate::group::{Algebra, Group};

/// One group element per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGaugeField<G> {
    complex: Arc<LatticeComplex>,
    values: Vec<G>,
}

impl<G: Group> VertexGaugeField<G> {
    pub fn identity(complex: &Arc<LatticeComplex>) -> Self {
        Self::constant(complex, G::identity())
    }

    pub fn constant(complex: &Arc<LatticeComplex>, c: G) -> Self {
        VertexGaugeField {
            complex: complex.clone(),
            values: vec![c; complex.num_vertices()],
        }
    }

    pub fn random<R: Rng + ?Sized>(complex: &Arc<LatticeComplex>, rng: &mut R, scale: f64) -> Self {
        VertexGaugeField {
            complex: complex.clone(),
            values: (0..complex.num_vertices()).map(|_| G::random(rng, scale)).collect(),
        }
    }

    /// Random values on the selected vertices, identity elsewhere.
    pub fn random_on<R: Rng + ?Sized>(
        complex: &Arc<LatticeComplex>,
        vertices: &[usize],
        rng: &mut R,
        scale: f64,
    ) -> Self {
        let mut g = Self::identity(complex);
        for &v in vertices {
            g.values[v] = G::random(rng, scale);
        }
        g
    }

    pub fn from_values(complex: &Arc<LatticeComplex>, values: Vec<G>) -> Result<Self> {
        if values.len() != complex.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vertex values, got {}",
                complex.num_vertices(),
                values.len()
            )));
        }
        Ok(VertexGaugeField {
            complex: complex.clone(),
            values,
        })
    }

    pub fn complex(&self) -> &Arc<LatticeComplex> {
        &self.complex
    }

    pub fn values(&self) -> &[G] {
        &self.values
    }

    pub fn value(&self, v: usize) -> G {
        self.values[v]
    }

    pub fn set(&mut self, v: usize, g: G) {
        self.values[v] = g;
    }

    /// Pointwise product `(self · other)(v) = self(v) other(v)`.
    pub fn compose(&self, other: &Self) -> Self {
        VertexGaugeField {
            complex: self.complex.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a.mul(b)).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        VertexGaugeField {
            complex: self.complex.clone(),
            values: self.values.iter().map(|g| g.inverse()).collect(),
        }
    }

    /// Largest distance of any vertex value from `c`.
    pub fn max_deviation_from(&self, c: &G) -> f64 {
        self.values.iter().map(|g| g.distance(c)).fold(0.0, f64::max)
    }
}

/// `U'_e = g(tail) U_e g(head)⁻¹`.
pub fn apply_gauge<G: Group>(u: &LinkField<G>, g: &VertexGaugeField<G>) -> Result<LinkField<G>> {
    if !u.complex().same_shape(&g.complex) {
        return Err(Error::ComplexMismatch);
    }
    let c = u.complex();
    let links = (0..c.num_edges())
        .map(|e| {
            let (t, h) = c.edge_endpoints(e);
            g.values[t].mul(&u.link(e)).mul(&g.values[h].inverse())
        })
        .collect();
    LinkField::from_links(c, links)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeOptions {
    /// Target for the max-vertex Coulomb residual.
    pub tol: f64,
    /// Maximum number of sweeps.
    pub max_iter: usize,
    /// Overrelaxation parameter.
    pub omega: f64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions {
            tol: 1e-8,
            max_iter: 10_000,
            omega: 1.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeVariant {
    Neumann,
    IdentityBoundary,
    BoundaryClosed,
    DirichletCoulomb,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeFixReport {
    pub variant: GaugeVariant,
    /// Sweeps performed (summed over stages).
    pub iterations: usize,
    /// Final value of `-½ Σ w_e |log U'_e|²`.
    pub functional: f64,
    /// Functional after every sweep, starting with the input.
    pub functional_trace: Vec<f64>,
    /// Whether the functional never decreased between sweeps.
    pub monotone: bool,
    pub coulomb_residual_max: f64,
    pub coulomb_residual_l2: f64,
    /// `d*_∂ i*a` on the boundary complex (Dirichlet variant only).
    pub boundary_residual: Option<f64>,
    /// `‖ã‖_{L²₁} / ‖F‖_{L²}` on the fixed domain.
    pub norm_ratio: f64,
    /// `‖ã‖_{L²₁} / (‖F‖_{L²} + ‖i*a‖_{1/2})` (identity-boundary variant).
    pub norm_ratio_two_term: Option<f64>,
    pub converged: bool,
    /// Stage that failed to converge, if any.
    pub failed_stage: Option<String>,
}

/// Free vertices, link weights and residual measure of one fixing problem.
struct Relaxation {
    complex: Arc<LatticeComplex>,
    /// Update order: even coordinate parity first, ascending within a class.
    order: Vec<usize>,
    edge_weight: Vec<f64>,
    vertex_weight: Vec<f64>,
}

struct RelaxOutcome<G> {
    g: VertexGaugeField<G>,
    fixed: LinkField<G>,
    iterations: usize,
    trace: Vec<f64>,
    residual_max: f64,
    residual_l2: f64,
    converged: bool,
}

fn parity(c: &LatticeComplex, v: usize) -> usize {
    c.vertex_coords(v).iter().sum::<usize>() % 2
}

fn karcher_mean<G: Group>(points: &[(G, f64)]) -> Option<G> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    let mut m = points[0].0;
    for _ in 0..100 {
        let minv = m.inverse();
        let mut step = G::Algebra::zero();
        for (p, w) in points {
            step += minv.mul(p).log().ok()? * (*w / total);
        }
        m = m.mul(&G::exp(&step)).renormalized();
        if step.norm() <= 1e-15 {
            break;
        }
    }
    Some(m)
}

fn local_cost<G: Group>(s: &G, points: &[(G, f64)]) -> f64 {
    let mut acc = 0.0;
    for (p, w) in points {
        match s.mul(p).log() {
            Ok(x) => acc += w * x.norm_sq(),
            Err(_) => return f64::INFINITY,
        }
    }
    0.5 * acc
}

impl Relaxation {
    fn new(complex: &Arc<LatticeComplex>, free: &[usize], edge_weight: Vec<f64>, vertex_weight: Vec<f64>) -> Self {
        let mut order: Vec<usize> = free.iter().copied().filter(|&v| parity(complex, v) == 0).collect();
        order.extend(free.iter().copied().filter(|&v| parity(complex, v) == 1));
        Relaxation {
            complex: complex.clone(),
            order,
            edge_weight,
            vertex_weight,
        }
    }

    fn functional<G: Group>(&self, w: &[G]) -> Result<f64> {
        let mut acc = 0.0;
        for (e, g) in w.iter().enumerate() {
            let we = self.edge_weight[e];
            if we != 0.0 {
                acc += we * g.log().map_err(|_| branch_cut_edge(e))?.norm_sq();
            }
        }
        Ok(-0.5 * acc)
    }

    /// Max and l2 (over free vertices) of `d*a`.
    fn residual<G: Group>(&self, w: &[G]) -> Result<(f64, f64)> {
        let h = self.complex.spacing();
        let mut max = 0.0f64;
        let mut sq = 0.0;
        for &v in &self.order {
            let mut acc = G::Algebra::zero();
            for cf in self.complex.cofaces(0, v) {
                let e = cf.cell as usize;
                let we = self.edge_weight[e];
                if we != 0.0 {
                    acc += w[e].log().map_err(|_| branch_cut_edge(e))? * (cf.sign as f64 * we);
                }
            }
            let r = acc.norm() / (self.vertex_weight[v] * h * h);
            max = max.max(r);
            sq += r * r;
        }
        Ok((max, sq.sqrt()))
    }

    fn gather<G: Group>(&self, v: usize, w: &[G]) -> Vec<(G, f64)> {
        self.complex
            .cofaces(0, v)
            .iter()
            .filter_map(|cf| {
                let e = cf.cell as usize;
                let we = self.edge_weight[e];
                (we != 0.0).then(|| (if cf.sign < 0 { w[e] } else { w[e].inverse() }, we))
            })
            .collect()
    }

    fn run<G: Group>(&self, u: &LinkField<G>, opts: &GaugeOptions) -> Result<RelaxOutcome<G>> {
        let c = &self.complex;
        let mut w = u.links().to_vec();
        let mut g = VertexGaugeField::identity(c);
        let mut trace = vec![self.functional(&w)?];
        let mut rmax = self.residual(&w)?.0;
        let mut iterations = 0;
        while rmax > opts.tol && iterations < opts.max_iter {
            for &v in &self.order {
                let points = self.gather(v, &w);
                if points.is_empty() {
                    continue;
                }
                let Some(m) = karcher_mean(&points) else {
                    continue;
                };
                let r = m.inverse();
                let current = local_cost(&G::identity(), &points);
                let over = r.powf(opts.omega).ok().filter(|s| local_cost(s, &points) <= current);
                let step = match over {
                    Some(s) => s,
                    None if local_cost(&r, &points) <= current => r,
                    None => continue,
                };
                g.values[v] = step.mul(&g.values[v]).renormalized();
                let rinv = step.inverse();
                for cf in c.cofaces(0, v) {
                    let e = cf.cell as usize;
                    w[e] = if cf.sign < 0 { step.mul(&w[e]) } else { w[e].mul(&rinv) }.renormalized();
                }
            }
            iterations += 1;
            trace.push(self.functional(&w)?);
            rmax = self.residual(&w)?.0;
        }
        let fixed = apply_gauge(u, &g)?;
        let (residual_max, residual_l2) = self.residual(fixed.links())?;
        Ok(RelaxOutcome {
            g,
            fixed,
            iterations,
            trace,
            residual_max,
            residual_l2,
            converged: residual_max <= opts.tol,
        })
    }
}

fn branch_cut_edge(e: usize) -> Error {
    Error::BranchCut(crate::error::BranchCutSite::Edge(e))
}

fn is_monotone(trace: &[f64]) -> bool {
    trace
        .windows(2)
        .all(|p| p[1] >= p[0] - 1e-12 * (1.0 + p[0].abs()))
}

/// `‖a‖_{L²₁} / ‖F‖_{L²}` in the given domain (zero for a flat, zero field).
fn norm_ratio<G: Group>(u: &LinkField<G>, space: &FormSpace) -> Result<f64> {
    let a = connection_form(u)?;
    let f = plaquette_curvature(u)?;
    let num = space.norm_sobolev1(&a);
    let den = space.norm_l2(&f);
    Ok(ratio(num, den))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num <= 1e-14 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn report<G: Group>(variant: GaugeVariant, out: &RelaxOutcome<G>, norm_ratio: f64) -> GaugeFixReport {
    GaugeFixReport {
        variant,
        iterations: out.iterations,
        functional: *out.trace.last().unwrap_or(&0.0),
        monotone: is_monotone(&out.trace),
        functional_trace: out.trace.clone(),
        coulomb_residual_max: out.residual_max,
        coulomb_residual_l2: out.residual_l2,
        boundary_residual: None,
        norm_ratio,
        norm_ratio_two_term: None,
        converged: out.converged,
        failed_stage: (!out.converged).then(|| format!("{variant:?}")),
    }
}

/// Coulomb gauge with free boundary vertices: `d*ã = 0` everywhere in the
/// closed region, the boundary rows carrying the Neumann condition. With no
/// region the whole complex is fixed.
pub fn coulomb_fix_neumann<G: Group>(
    u: &LinkField<G>,
    region: Option<&BallRegion>,
    opts: &GaugeOptions,
) -> Result<(VertexGaugeField<G>, LinkField<G>, GaugeFixReport)> {
    let c = u.complex();
    let space = match region {
        Some(r) => {
            if !r.parent().same_shape(c) {
                return Err(Error::ComplexMismatch);
            }
            FormSpace::on_region(r, BoundaryCondition::Tangential)
        }
        None => FormSpace::whole(c, BoundaryCondition::Tangential),
    };
    let free = space.active(0);
    let relax = Relaxation::new(c, &free, space.weights(1).to_vec(), space.weights(0).to_vec());
    let out = relax.run(u, opts)?;
    let ratio = norm_ratio(&out.fixed, &space)?;
    let rep = report(GaugeVariant::Neumann, &out, ratio);
    Ok((out.g, out.fixed, rep))
}

/// Coulomb gauge on interior vertices with the boundary frozen to the
/// identity; tangential links are never touched.
pub fn coulomb_fix_identity_boundary<G: Group>(
    u: &LinkField<G>,
    region: &BallRegion,
    opts: &GaugeOptions,
) -> Result<(VertexGaugeField<G>, LinkField<G>, GaugeFixReport)> {
    let c = u.complex();
    if !region.parent().same_shape(c) {
        return Err(Error::ComplexMismatch);
    }
    let space = FormSpace::on_region(region, BoundaryCondition::Normal);
    let free = space.active(0);
    if free.is_empty() {
        return Err(Error::InvalidArgument("region has no interior vertices".into()));
    }
    let relax = Relaxation::new(c, &free, space.weights(1).to_vec(), space.weights(0).to_vec());
    let out = relax.run(u, opts)?;
    let closed = FormSpace::on_region(region, BoundaryCondition::Tangential);
    let a = connection_form(&out.fixed)?;
    let f = plaquette_curvature(&out.fixed)?;
    let a1 = closed.norm_sobolev1(&a);
    let fl2 = closed.norm_l2(&f);
    let trace_half = norm_boundary_half(&restrict_boundary(&a, region)?, region)?;
    let mut rep = report(GaugeVariant::IdentityBoundary, &out, ratio(a1, fl2));
    rep.norm_ratio_two_term = Some(ratio(a1, fl2 + trace_half));
    Ok((out.g, out.fixed, rep))
}

/// Coulomb gauge on a closed boundary complex (every vertex free).
pub fn coulomb_fix_boundary_closed<G: Group>(
    boundary: &LinkField<G>,
    opts: &GaugeOptions,
) -> Result<(VertexGaugeField<G>, LinkField<G>, GaugeFixReport)> {
    let c = boundary.complex();
    let space = FormSpace::whole(c, BoundaryCondition::Tangential);
    let free = space.active(0);
    let relax = Relaxation::new(c, &free, space.weights(1).to_vec(), space.weights(0).to_vec());
    let out = relax.run(boundary, opts)?;
    let a = connection_form(&out.fixed)?;
    let f = plaquette_curvature(&out.fixed)?;
    let ratio = ratio(space.norm_sobolev1(&a), space.norm_l2(&f));
    let rep = report(GaugeVariant::BoundaryClosed, &out, ratio);
    Ok((out.g, out.fixed, rep))
}

/// `‖d*_∂ i*a‖_max` of a field's tangential data.
pub fn boundary_coulomb_residual<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<f64> {
    let b = restrict_boundary_links(u, region)?;
    let c = b.complex();
    let space = FormSpace::whole(c, BoundaryCondition::Tangential);
    let relax = Relaxation::new(c, &space.active(0), space.weights(1).to_vec(), space.weights(0).to_vec());
    Ok(relax.residual(b.links())?.0)
}

/// Interior and boundary Coulomb residuals of a field on a region, as
/// checked by [`dirichlet_coulomb_fix`].
pub fn dirichlet_coulomb_residuals<G: Group>(u: &LinkField<G>, region: &BallRegion) -> Result<(f64, f64)> {
    let space = FormSpace::on_region(region, BoundaryCondition::Normal);
    let relax = Relaxation::new(u.complex(), &space.active(0), space.weights(1).to_vec(), space.weights(0).to_vec());
    Ok((relax.residual(u.links())?.0, boundary_coulomb_residual(u, region)?))
}

/// Two-stage Dirichlet Coulomb gauge: fix the tangential data on the
/// boundary complex, extend that transformation by the identity inward,
/// then fix the interior with the boundary frozen.
pub fn dirichlet_coulomb_fix<G: Group>(
    u: &LinkField<G>,
    region: &BallRegion,
    opts: &GaugeOptions,
) -> Result<(VertexGaugeField<G>, LinkField<G>, GaugeFixReport)> {
    let c = u.complex();
    if !region.parent().same_shape(c) {
        return Err(Error::ComplexMismatch);
    }
    let boundary = restrict_boundary_links(u, region)?;
    let (g_surface, _, stage1) = coulomb_fix_boundary_closed(&boundary, opts)?;

    // remove the free constant so the extension stays close to the identity
    let samples: Vec<(G, f64)> = g_surface.values().iter().map(|g| (*g, 1.0)).collect();
    let centre = karcher_mean(&samples).unwrap_or_else(G::identity).inverse();
    let bcx = region.boundary_complex();
    let mut g1 = VertexGaugeField::identity(c);
    for (i, gv) in g_surface.values().iter().enumerate() {
        g1.values[bcx.to_parent(0, i)] = centre.mul(gv).renormalized();
    }
    let u1 = apply_gauge(u, &g1)?;
    let (g2, fixed, stage2) = coulomb_fix_identity_boundary(&u1, region, opts)?;
    let g = g2.compose(&g1);

    let mut trace = stage1.functional_trace.clone();
    trace.extend_from_slice(&stage2.functional_trace);
    let failed_stage = match (stage1.converged, stage2.converged) {
        (false, _) => Some("boundary".to_string()),
        (true, false) => Some("interior".to_string()),
        _ => None,
    };
    let boundary_residual = boundary_coulomb_residual(&fixed, region)?;
    let rep = GaugeFixReport {
        variant: GaugeVariant::DirichletCoulomb,
        iterations: stage1.iterations + stage2.iterations,
        functional: stage2.functional,
        functional_trace: trace,
        monotone: stage1.monotone && stage2.monotone,
        coulomb_residual_max: stage2.coulomb_residual_max,
        coulomb_residual_l2: stage2.coulomb_residual_l2,
        boundary_residual: Some(boundary_residual),
        norm_ratio: stage2.norm_ratio,
        norm_ratio_two_term: stage2.norm_ratio_two_term,
        converged: failed_stage.is_none() && boundary_residual <= opts.tol,
        failed_stage,
    };
    Ok((g, fixed, rep))
}

/// Outcome of [`verify_gauge_uniqueness`].
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessVerdict<G> {
    pub equivalent: bool,
    /// `√Σ_e ‖Ad_c a_e − b_e‖²` over closed-region edges at the optimum.
    pub residual: f64,
    #[serde(skip)]
    pub witness: G,
}

/// Residual above which a field is not considered Coulomb-fixed by
/// [`verify_gauge_uniqueness`].
pub const GAUGE_FIXED_THRESHOLD: f64 = 1e-6;

/// Searches for a constant `c` with `b ≈ Ad_c a` on the closed region.
pub fn verify_gauge_uniqueness<G: Group>(
    ua: &LinkField<G>,
    ub: &LinkField<G>,
    region: &BallRegion,
    tol: f64,
) -> Result<UniquenessVerdict<G>> {
    for u in [ua, ub] {
        let (interior, boundary) = dirichlet_coulomb_residuals(u, region)?;
        let worst = interior.max(boundary);
        if worst > GAUGE_FIXED_THRESHOLD {
            return Err(Error::NotGaugeFixed { residual: worst });
        }
    }
    let a = connection_form(ua)?;
    let b = connection_form(ub)?;
    let edges = region.closed_cells(1);
    let av: Vec<G::Algebra> = edges.iter().map(|&e| a.values()[e]).collect();
    let bv: Vec<G::Algebra> = edges.iter().map(|&e| b.values()[e]).collect();
    let witness = G::align_constant(&av, &bv);
    let residual = av
        .iter()
        .zip(&bv)
        .map(|(x, y)| (witness.conjugate(x) - *y).norm_sq())
        .sum::<f64>()
        .sqrt();
    Ok(UniquenessVerdict {
        equivalent: residual <= tol,
        residual,
        witness,
    })
}

/// `d*a` at the active vertices of a domain, for diagnostics.
pub fn coulomb_divergence<G: Group>(u: &LinkField<G>, space: &FormSpace) -> Result<Cochain<G::Algebra>> {
    let a = connection_form(u)?;
    let v = space.project(1, a.values());
    Cochain::from_values(u.complex(), 0, space.codiff(1, &v))
}

/// Whether every tangential link of `a` and `b` is bit-identical.
pub fn tangential_links_identical<G: Group>(a: &LinkField<G>, b: &LinkField<G>, region: &BallRegion) -> bool {
    region
        .cells_with(1, CellClass::Tangential)
        .iter()
        .all(|&e| a.link(e) == b.link(e))
}
