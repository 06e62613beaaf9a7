//! Ball replacement: swap the field on a ball for the Yang–Mills minimizer
//! with the same tangential data, plus the sweep over a covering schedule
//! and the diagnostics that go with it (interpolation profile, convexity
//! record, concentration).
//!
//! A single step runs Dirichlet Coulomb gauge on the ball, solves the
//! Dirichlet problem in that gauge, maps the solution back with `g⁻¹`,
//! patches it into the global field and finally runs a global Coulomb fix
//! on a copy for diagnostics only.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BranchCutSite, Error, Result};
use crate::fields::{energy, patch, restrict_boundary_links, BoundaryCondition, Cochain, FormSpace, LinkField, PATCH_TOLERANCE};
use crate::gauge::{
    apply_gauge, coulomb_fix_identity_boundary, coulomb_fix_neumann, dirichlet_coulomb_fix, GaugeFixReport,
    GaugeOptions,
};
use crate::grid::{BallRegion, Bounds, CellClass, LatticeComplex, Topology};
use crate::group::{Algebra, Group};
use crate::solver::{solve_dirichlet_ym, ym_residual, ym_residual_global, DirichletProblem, SolveOptions, SolveReport};

/// Slack for energy monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaceOptions {
    /// Ball energy at or above which a step is refused.
    pub epsilon: f64,
    /// Samples of the interpolation profile, minus one (0 disables it).
    pub interpolation_steps: usize,
    /// Run the post-patch global Coulomb fix.
    pub regauge: bool,
    pub gauge: GaugeOptions,
    pub solver: SolveOptions,
}

impl Default for ReplaceOptions {
    fn default() -> Self {
        ReplaceOptions {
            epsilon: 0.5,
            interpolation_steps: 16,
            regauge: true,
            gauge: GaugeOptions::default(),
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Replaced,
    EpsilonViolation,
    Failed,
}

/// `‖b−a‖²_{L²₁}` against `‖F_B‖² − ‖F_A‖²`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvexityRecord {
    pub lhs: f64,
    pub gap: f64,
    /// `lhs / gap`, infinite when the gap is not positive.
    pub ratio: f64,
    pub energy_a: f64,
    pub energy_b: f64,
    /// `max |d*(a−b)|` at interior vertices.
    pub coulomb_mismatch: f64,
    pub gap_nonnegative: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegaugeDiagnostics {
    pub coulomb_residual: f64,
    pub norm_ratio: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplacementStepReport {
    pub ball_id: usize,
    pub bounds: Bounds,
    pub status: StepStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub pre_ball_energy: f64,
    pub post_ball_energy: f64,
    pub pre_global_energy: f64,
    pub post_global_energy: f64,
    pub gauge: Option<GaugeFixReport>,
    pub solve: Option<SolveReport>,
    /// `(t, ball energy)` from the Yang–Mills end (t = 0) to the input (t = 1).
    pub interpolation: Vec<(f64, f64)>,
    pub interpolation_monotone: Option<bool>,
    /// `‖b−a‖_{L²₁}` between solution and input in the fixed gauge.
    pub change_sobolev1: Option<f64>,
    pub convexity: Option<ConvexityRecord>,
    /// Why the interpolation or convexity diagnostics were skipped.
    pub diagnostics_note: Option<String>,
    pub regauge: Option<RegaugeDiagnostics>,
}

impl ReplacementStepReport {
    fn new(ball_id: usize, region: &BallRegion, pre_ball: f64, pre_global: f64) -> Self {
        ReplacementStepReport {
            ball_id,
            bounds: region.bounds(),
            status: StepStatus::Replaced,
            failed_stage: None,
            error: None,
            pre_ball_energy: pre_ball,
            post_ball_energy: pre_ball,
            pre_global_energy: pre_global,
            post_global_energy: pre_global,
            gauge: None,
            solve: None,
            interpolation: Vec::new(),
            interpolation_monotone: None,
            change_sobolev1: None,
            convexity: None,
            diagnostics_note: None,
            regauge: None,
        }
    }

    fn fail(mut self, stage: &str, error: Option<String>) -> Self {
        self.status = StepStatus::Failed;
        self.failed_stage = Some(stage.to_string());
        self.error = error;
        self
    }

    /// Ball energy over the threshold it was checked against.
    pub fn concentration(&self, epsilon: f64) -> f64 {
        self.pre_ball_energy / epsilon
    }
}

/// Whether a sampled profile is non-decreasing within `slack`.
pub fn profile_is_monotone(profile: &[(f64, f64)], slack: f64) -> bool {
    profile.windows(2).all(|w| w[1].1 >= w[0].1 - slack)
}

/// One replacement step on `region`. Stage failures leave the input
/// untouched and are reported; only inconsistent inputs are errors.
pub fn replace_on_ball<G: Group>(
    u: &LinkField<G>,
    region: &BallRegion,
    ball_id: usize,
    opts: &ReplaceOptions,
) -> Result<(LinkField<G>, ReplacementStepReport)> {
    if !u.complex().same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    opts.solver.validate()?;
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let pre_global = match energy(u, None) {
        Ok(e) => e,
        Err(e) => {
            let rep = ReplacementStepReport::new(ball_id, region, f64::NAN, f64::NAN);
            return Ok((u.clone(), rep.fail("energy", Some(e.to_string()))));
        }
    };
    let pre_ball = energy(u, Some(region))?;
    let mut rep = ReplacementStepReport::new(ball_id, region, pre_ball, pre_global);
    if pre_ball >= opts.epsilon {
        rep.status = StepStatus::EpsilonViolation;
        return Ok((u.clone(), rep));
    }

    // (1) Dirichlet Coulomb gauge on the ball
    let (g, fixed, gauge_rep) = match dirichlet_coulomb_fix(u, region, &opts.gauge) {
        Ok(x) => x,
        Err(e) => return Ok((u.clone(), rep.fail("gauge", Some(e.to_string())))),
    };
    let gauge_ok = gauge_rep.converged;
    let gauge_stage = gauge_rep.failed_stage.clone();
    rep.gauge = Some(gauge_rep);
    if !gauge_ok {
        let stage = format!("gauge:{}", gauge_stage.unwrap_or_else(|| "boundary_residual".into()));
        return Ok((u.clone(), rep.fail(&stage, None)));
    }

    // (2) Dirichlet solve with the fixed tangential data
    let boundary = restrict_boundary_links(&fixed, region)?;
    let (solution, solve_rep) = match solve_dirichlet_ym(&fixed, region, &boundary, &opts.solver) {
        Ok(x) => x,
        Err(e) => return Ok((u.clone(), rep.fail("solve", Some(e.to_string())))),
    };
    let solve_ok = solve_rep.converged;
    rep.solve = Some(solve_rep);
    if !solve_ok {
        return Ok((u.clone(), rep.fail("solve", None)));
    }

    // (3) back to the input gauge, (4) patch
    let restored = apply_gauge(&solution, &g.inverse())?;
    let out = match patch(region, &restored, u) {
        Ok(x) => x,
        Err(e) => return Ok((u.clone(), rep.fail("patch", Some(e.to_string())))),
    };
    rep.post_ball_energy = energy(&out, Some(region))?;
    rep.post_global_energy = energy(&out, None)?;

    step_diagnostics(&mut rep, &solution, &fixed, region, opts);

    // (5) diagnostic global Coulomb fix; the output is not regauged
    if opts.regauge {
        match coulomb_fix_neumann(&out, None, &opts.gauge) {
            Ok((_, _, r)) => {
                rep.regauge = Some(RegaugeDiagnostics {
                    coulomb_residual: r.coulomb_residual_max,
                    norm_ratio: r.norm_ratio,
                    converged: r.converged,
                })
            }
            Err(e) => append_note(&mut rep, format!("regauge: {e}")),
        }
    }
    Ok((out, rep))
}

fn append_note(rep: &mut ReplacementStepReport, note: String) {
    rep.diagnostics_note = Some(match rep.diagnostics_note.take() {
        Some(prev) => format!("{prev}; {note}"),
        None => note,
    });
}

/// Interpolation profile and convexity record between the solution (put in
/// identity-boundary Coulomb gauge so that `d*a = d*b`) and the gauge-fixed
/// input.
fn step_diagnostics<G: Group>(
    rep: &mut ReplacementStepReport,
    solution: &LinkField<G>,
    fixed_input: &LinkField<G>,
    region: &BallRegion,
    opts: &ReplaceOptions,
) {
    let a = match coulomb_fix_identity_boundary(solution, region, &opts.gauge) {
        Ok((_, a, r)) if r.converged => a,
        Ok(_) => return append_note(rep, "solution could not be Coulomb-fixed".into()),
        Err(e) => return append_note(rep, format!("solution Coulomb fix: {e}")),
    };
    if opts.interpolation_steps > 0 {
        match interpolation_energy_profile(&a, fixed_input, region, opts.interpolation_steps) {
            Ok(p) => {
                rep.interpolation_monotone = Some(profile_is_monotone(&p, MONOTONE_SLACK));
                rep.interpolation = p;
            }
            Err(e) => append_note(rep, format!("interpolation: {e}")),
        }
    }
    match convexity_check(&a, fixed_input, region, opts.epsilon) {
        Ok(c) => {
            rep.change_sobolev1 = Some(c.lhs.sqrt());
            rep.convexity = Some(c);
        }
        Err(e) => append_note(rep, format!("convexity: {e}")),
    }
}

fn check_shared_boundary<G: Group>(ua: &LinkField<G>, ub: &LinkField<G>, region: &BallRegion) -> Result<()> {
    if !ua.complex().same_shape(region.parent()) || !ub.complex().same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    for e in region.cells_with(1, CellClass::Tangential) {
        let deviation = ua.link(e).distance(&ub.link(e));
        if deviation > PATCH_TOLERANCE {
            return Err(Error::BoundaryMismatch { edge: e, deviation });
        }
    }
    Ok(())
}

fn free_logs<G: Group>(u: &LinkField<G>, free: &[usize]) -> Result<Vec<(usize, G::Algebra)>> {
    free.iter()
        .map(|&e| {
            u.link(e)
                .log()
                .map(|x| (e, x))
                .map_err(|_| Error::BranchCut(BranchCutSite::Edge(e)))
        })
        .collect()
}

/// Ball energy along `a_t = (1−t)a + t b` on free links, `n_steps + 1`
/// uniform samples; tangential links are shared.
pub fn interpolation_energy_profile<G: Group>(
    ua: &LinkField<G>,
    ub: &LinkField<G>,
    region: &BallRegion,
    n_steps: usize,
) -> Result<Vec<(f64, f64)>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("interpolation needs at least one step".into()));
    }
    check_shared_boundary(ua, ub, region)?;
    let free = region.free_edges();
    let la = free_logs(ua, &free)?;
    let lb = free_logs(ub, &free)?;
    (0..=n_steps)
        .map(|i| {
            let t = i as f64 / n_steps as f64;
            let mut ut = ua.clone();
            let links = ut.links_mut();
            for ((e, xa), (_, xb)) in la.iter().zip(&lb) {
                links[*e] = G::exp(&(*xa * (1.0 - t) + *xb * t));
            }
            match energy(&ut, Some(region)) {
                Ok(en) => Ok((t, en)),
                Err(Error::BranchCut(BranchCutSite::Plaquette(face))) => Err(Error::InterpolationBranchCut { t, face }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Convexity record for a Yang–Mills solution `ua` and a competitor `ub`
/// with the same tangential data and matched Coulomb condition.
pub fn convexity_check<G: Group>(
    ua: &LinkField<G>,
    ub: &LinkField<G>,
    region: &BallRegion,
    epsilon: f64,
) -> Result<ConvexityRecord> {
    check_shared_boundary(ua, ub, region)?;
    let c = ua.complex();
    let h = c.spacing();
    let free = region.free_edges();
    let la = free_logs(ua, &free)?;
    let lb = free_logs(ub, &free)?;
    let mut diff = vec![G::Algebra::zero(); c.num_edges()];
    for ((e, xa), (_, xb)) in la.iter().zip(&lb) {
        diff[*e] = (*xb - *xa) * (1.0 / h);
    }
    let space = FormSpace::on_region(region, BoundaryCondition::Normal);
    let div = space.codiff(1, &diff);
    let coulomb_mismatch = space.active(0).iter().map(|&v| div[v].norm()).fold(0.0, f64::max);
    if coulomb_mismatch > 1e-6 {
        return Err(Error::HypothesisViolated(format!(
            "d*(a−b) = {coulomb_mismatch:e} exceeds 1e-6"
        )));
    }
    let energy_a = energy(ua, Some(region))?;
    if energy_a >= epsilon {
        return Err(Error::HypothesisViolated(format!(
            "energy of A ({energy_a:e}) is not below epsilon ({epsilon:e})"
        )));
    }
    let energy_b = energy(ub, Some(region))?;
    let lhs = space.norm_sobolev1(&Cochain::from_values(c, 1, diff)?).powi(2);
    let gap = 2.0 * (energy_b - energy_a);
    Ok(ConvexityRecord {
        lhs,
        gap,
        ratio: if gap > 0.0 { lhs / gap } else { f64::INFINITY },
        energy_a,
        energy_b,
        coulomb_mismatch,
        gap_nonnegative: gap >= -MONOTONE_SLACK,
    })
}

/// A competitor to `ua` for the convexity and interpolation checks:
/// `log U_B = log U_A + c` on free links, with `c` random (coordinates up to
/// `scale`), zero on the boundary and divergence-free at interior vertices.
pub fn coulomb_matched_perturbation<G: Group, R: Rng + ?Sized>(
    ua: &LinkField<G>,
    region: &BallRegion,
    rng: &mut R,
    scale: f64,
) -> Result<LinkField<G>> {
    if !ua.complex().same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    let n = ua.complex().num_edges();
    let mut c = vec![G::Algebra::zero(); n];
    for e in 0..n {
        let x = G::Algebra::random(rng, scale);
        if region.is_free_edge(e) {
            c[e] = x;
        }
    }
    let p = DirichletProblem::new(region);
    let c = p.project_coexact(&c)?;
    let mut ub = ua.clone();
    let links = ub.links_mut();
    for (e, x) in free_logs(ua, p.free_edges())? {
        links[e] = G::exp(&(x + c[e]));
    }
    Ok(ub)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub replace: ReplaceOptions,
    pub max_cycles: usize,
    /// Stop once a full cycle lowers the global energy by at most this much.
    pub tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            replace: ReplaceOptions::default(),
            max_cycles: 50,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStop {
    Converged,
    MaxSteps,
    EpsilonViolation,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTrace {
    pub steps: Vec<ReplacementStepReport>,
    /// Global energy before the sweep and after every step.
    pub energies: Vec<f64>,
    /// Ball energy over epsilon, per step.
    pub concentration: Vec<f64>,
    pub cycles: usize,
    pub stop_reason: SweepStop,
    pub monotone: bool,
    pub failed_steps: usize,
    /// [`ym_residual`] of the final field on every scheduled ball.
    pub terminal_ball_residuals: Vec<f64>,
    pub terminal_global_residual: Option<f64>,
}

/// Overlapping balls on an offset grid, lexicographic in the ball origin.
///
/// On a periodic axis of extent `n ≥ 6` balls have `n/2 + 2` vertices and
/// start every `n/2`; smaller extents use 3-vertex balls at every offset.
/// Every vertex is interior to some ball and every link is free in some
/// ball, so a cycle touches every face.
pub fn default_schedule(complex: &std::sync::Arc<LatticeComplex>) -> Result<Vec<BallRegion>> {
    let dims = complex.dims();
    let mut per_axis: Vec<(Vec<usize>, usize)> = Vec::with_capacity(4);
    for (axis, &n) in dims.iter().enumerate() {
        match complex.topology() {
            Topology::Periodic => {
                if n < 4 {
                    return Err(Error::RegionTooSmall { axis });
                }
                let (stride, len) = if n >= 6 { (n / 2, n / 2 + 2) } else { (1, 3) };
                per_axis.push(((0..n).step_by(stride).collect(), len));
            }
            Topology::Box => {
                if n < 3 {
                    return Err(Error::RegionTooSmall { axis });
                }
                let len = if n >= 6 { n / 2 + 2 } else { n.min(3) };
                let stride = len - 2;
                let mut starts: Vec<usize> = (0..=n - len).step_by(stride).collect();
                if *starts.last().unwrap() != n - len {
                    starts.push(n - len);
                }
                per_axis.push((starts, len));
            }
            Topology::Surface => return Err(Error::UnsupportedParent),
        }
    }
    let mut out = Vec::new();
    for &a in &per_axis[0].0 {
        for &b in &per_axis[1].0 {
            for &c in &per_axis[2].0 {
                for &d in &per_axis[3].0 {
                    let lo = [a, b, c, d];
                    let bounds = Bounds {
                        lo,
                        len: std::array::from_fn(|i| per_axis[i].1),
                    };
                    out.push(BallRegion::from_bounds(complex, bounds)?);
                }
            }
        }
    }
    Ok(out)
}

/// Replacement steps in schedule order, cycling until the energy settles,
/// the cycle budget runs out or a ball exceeds epsilon.
pub fn sweep<G: Group>(
    u: &LinkField<G>,
    schedule: &[BallRegion],
    opts: &SweepOptions,
) -> Result<(LinkField<G>, SweepTrace)> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty sweep schedule".into()));
    }
    let mut field = u.clone();
    let mut energies = vec![energy(&field, None)?];
    let mut steps = Vec::new();
    let mut concentration = Vec::new();
    let mut stop_reason = SweepStop::MaxSteps;
    let mut cycles = 0;
    'outer: while cycles < opts.max_cycles {
        let start = *energies.last().unwrap();
        cycles += 1;
        for (id, region) in schedule.iter().enumerate() {
            let (next, rep) = replace_on_ball(&field, region, id, &opts.replace)?;
            concentration.push(rep.concentration(opts.replace.epsilon));
            let status = rep.status;
            if status == StepStatus::Replaced {
                field = next;
            }
            energies.push(if status == StepStatus::Replaced {
                rep.post_global_energy
            } else {
                *energies.last().unwrap()
            });
            steps.push(rep);
            if status == StepStatus::EpsilonViolation {
                stop_reason = SweepStop::EpsilonViolation;
                break 'outer;
            }
        }
        if start - energies.last().unwrap() <= opts.tol {
            stop_reason = SweepStop::Converged;
            break;
        }
    }
    let monotone = energies.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    let terminal_ball_residuals = schedule
        .iter()
        .map(|r| ym_residual(&field, r).unwrap_or(f64::NAN))
        .collect();
    let trace = SweepTrace {
        failed_steps: steps.iter().filter(|s| s.status == StepStatus::Failed).count(),
        steps,
        energies,
        concentration,
        cycles,
        stop_reason,
        monotone,
        terminal_ball_residuals,
        terminal_global_residual: ym_residual_global(&field).ok(),
    };
    Ok((field, trace))
}

/// [`replace_on_ball`] on the same region for every member, in parallel.
pub fn family_sweep<G: Group>(
    family: &[LinkField<G>],
    region: &BallRegion,
    opts: &ReplaceOptions,
) -> Result<Vec<(LinkField<G>, ReplacementStepReport)>> {
    family
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let (out, mut rep) = replace_on_ball(u, region, 0, opts)?;
            rep.ball_id = i;
            Ok((out, rep))
        })
        .collect()
}

/// Pullback under the dilation `x ↦ λx` about the ball centre:
/// `a_λ(e) = λ·a(e')` with `e'` the parallel edge nearest to the image of
/// `e`'s midpoint. Links outside the closed ball are kept.
pub fn dilation_generator<G: Group>(u: &LinkField<G>, region: &BallRegion, lambda: f64) -> Result<LinkField<G>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("dilation factor {lambda} outside [0, 1]")));
    }
    let c = u.complex();
    if !c.same_shape(region.parent()) {
        return Err(Error::ComplexMismatch);
    }
    if lambda == 1.0 {
        return Ok(u.clone());
    }
    let len = region.bounds().len;
    let centre: [f64; 4] = std::array::from_fn(|i| (len[i] - 1) as f64 / 2.0);
    let mut out = u.clone();
    for e in region.closed_cells(1) {
        let (tail, _) = c.edge_endpoints(e);
        let y = region.local_coords(tail).expect("closed edge has a closed tail");
        let mu = c.edge_axis(e);
        let mut src = [0usize; 4];
        for i in 0..4 {
            let mid = y[i] as f64 + if i == mu { 0.5 } else { 0.0 };
            let x = centre[i] + lambda * (mid - centre[i]);
            let (shift, top) = if i == mu { (0.5, len[i] - 2) } else { (0.0, len[i] - 1) };
            src[i] = ((x - shift).round().max(0.0) as usize).min(top);
        }
        let v = region.vertex_at(src).expect("source inside the ball");
        let se = c
            .find_cell(c.vertex_coords(v), 1 << mu)
            .expect("source edge exists");
        let a = u.link(se).log().map_err(|_| Error::BranchCut(BranchCutSite::Edge(se)))?;
        out.links_mut()[e] = G::exp(&(a * lambda));
    }
    Ok(out)
}
