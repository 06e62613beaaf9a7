//! Invariant checks on a field, written as a pass/fail matrix.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ymr_core::fields::{connection_form, energy, plaquette_trace_spectrum};
use ymr_core::gauge::{apply_gauge, coulomb_fix_neumann, tangential_links_identical};
use ymr_core::io::load_links;
use ymr_core::{Algebra, BallRegion, BoundaryCondition, Cochain, FormSpace, Group, LatticeComplex, LinkField};

use crate::commands::{generate_field, Context};
use crate::error::{exit, CliError};
use crate::report::{write_csv, write_json, Report};
use crate::seed::member_seed;

/// Harmonic dimensions use exact elimination; skipped above this many faces.
pub const HARMONIC_FACE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub skipped: bool,
    pub detail: String,
}

impl Check {
    fn new(check: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Check {
            check,
            value,
            tolerance,
            pass: value <= tolerance,
            skipped: false,
            detail: detail.into(),
        }
    }

    fn skipped(check: &'static str, detail: impl Into<String>) -> Self {
        Check {
            check,
            value: 0.0,
            tolerance: 0.0,
            pass: true,
            skipped: true,
            detail: detail.into(),
        }
    }

    fn failed(check: &'static str, err: impl ToString) -> Self {
        Check {
            check,
            value: f64::INFINITY,
            tolerance: 0.0,
            pass: false,
            skipped: false,
            detail: err.to_string(),
        }
    }
}

fn max_norm<A: Algebra>(v: &[A]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn field<G: Group>(
    ctx: &Context,
    complex: &Arc<LatticeComplex>,
    region: Option<&BallRegion>,
    path: Option<&std::path::Path>,
) -> Result<LinkField<G>, CliError> {
    match path {
        Some(p) => {
            let u = load_links::<G>(p)?;
            if !u.complex().same_shape(complex) {
                return Err(CliError::Config(format!("verify: {} does not match [lattice]", p.display())));
            }
            Ok(u)
        }
        None => generate_field(&ctx.cfg, complex, region, member_seed(ctx.seed, 0)),
    }
}

/// Runs every single-field check, plus the pair checks when a second field
/// is configured.
pub fn checks<G: Group>(
    u: &LinkField<G>,
    other: Option<&LinkField<G>>,
    region: Option<&BallRegion>,
    ctx: &Context,
    seed: u64,
) -> Vec<Check> {
    let complex = u.complex();
    let h = complex.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    let dev = u.links().iter().map(|g| g.norm_deviation()).fold(0.0, f64::max);
    rows.push(Check::new("link_unitarity", dev, 1e-12, "max | |U| - 1 |"));

    let round_trip = u
        .links()
        .iter()
        .map(|g| g.log().map(|x| G::exp(&x).distance(g)))
        .try_fold(0.0_f64, |m, d| d.map(|d| m.max(d)));
    rows.push(match round_trip {
        Ok(v) => Check::new("exp_log_round_trip", v, 1e-12, "max |exp(log U) - U|"),
        Err(e) => Check::failed("exp_log_round_trip", e),
    });

    let space = FormSpace::whole(complex, BoundaryCondition::Tangential);
    match connection_form(u) {
        Ok(a) => {
            let scale = max_norm(a.values()).max(1.0) / (h * h);
            let dd = max_norm(&space.d(2, &space.d(1, a.values())));
            rows.push(Check::new("coboundary_squares_to_zero", dd, 1e-12 * scale, "max |d d a|"));

            let b = Cochain::<G::Algebra>::random(complex, 2, &mut rng, 1.0);
            let lhs = space.inner(2, &space.d(1, a.values()), b.values());
            let rhs = space.inner(1, a.values(), &space.codiff(2, b.values()));
            let scale = space.norm_sq(1, a.values()).sqrt() * space.norm_sq(2, b.values()).sqrt() / h;
            rows.push(Check::new(
                "codifferential_adjointness",
                (lhs - rhs).abs(),
                1e-12 * scale.max(1.0),
                "|<d a, b> - <a, d* b>|",
            ));

            match space.hodge_decompose(&a) {
                Ok(p) => {
                    let n = space.norm_sq(1, a.values()).max(1e-300);
                    let o = [
                        space.inner(1, p.exact.values(), p.coexact.values()),
                        space.inner(1, p.exact.values(), p.harmonic.values()),
                        space.inner(1, p.coexact.values(), p.harmonic.values()),
                    ]
                    .iter()
                    .map(|x| x.abs() / n)
                    .fold(0.0, f64::max);
                    rows.push(Check::new("hodge_orthogonality", o, 1e-10, "max |<p_i, p_j>| / |a|^2"));
                }
                Err(e) => rows.push(Check::failed("hodge_orthogonality", e)),
            }
        }
        Err(e) => {
            for c in ["coboundary_squares_to_zero", "codifferential_adjointness", "hodge_orthogonality"] {
                rows.push(Check::failed(c, &e));
            }
        }
    }

    if complex.num_faces() > HARMONIC_FACE_LIMIT {
        rows.push(Check::skipped(
            "harmonic_dimension",
            format!("{} faces exceeds {HARMONIC_FACE_LIMIT}", complex.num_faces()),
        ));
    } else {
        let betti = complex.betti_numbers();
        let dims: Vec<usize> = (0..=4).map(|k| space.harmonic_dimension(k)).collect();
        let mismatch = dims.iter().zip(&betti).filter(|(a, b)| a != b).count();
        rows.push(Check::new(
            "harmonic_dimension",
            mismatch as f64,
            0.0,
            format!("harmonic {dims:?}, betti {betti:?}"),
        ));
    }

    let g = ymr_core::VertexGaugeField::<G>::random(complex, &mut rng, 2.0);
    let g2 = ymr_core::VertexGaugeField::<G>::random(complex, &mut rng, 2.0);
    match apply_gauge(u, &g) {
        Ok(ug) => {
            match (energy(u, None), energy(&ug, None)) {
                (Ok(e0), Ok(e1)) => rows.push(Check::new(
                    "energy_gauge_invariance",
                    (e0 - e1).abs(),
                    1e-10 * e0.max(1.0),
                    "|E(u) - E(g.u)|",
                )),
                (Err(e), _) | (_, Err(e)) => rows.push(Check::failed("energy_gauge_invariance", e)),
            }

            let cov = (0..complex.num_faces())
                .map(|f| {
                    let c = complex.cell(2, f);
                    let base = c.base.map(|x| x as usize);
                    let v = complex.find_cell(base, 0).expect("face base vertex");
                    let gv = g.value(v);
                    let want = gv.mul(&u.holonomy(f)).mul(&gv.inverse());
                    ug.holonomy(f).distance(&want)
                })
                .fold(0.0, f64::max);
            rows.push(Check::new("curvature_covariance", cov, 1e-12, "max |hol(g.u) - g hol(u) g^-1|"));

            let comp = apply_gauge(&ug, &g2).and_then(|a| Ok((a, apply_gauge(u, &g2.compose(&g))?)));
            rows.push(match comp {
                Ok((a, b)) => Check::new("gauge_composition", a.max_distance(&b), 1e-12, "|h.(g.u) - (hg).u|"),
                Err(e) => Check::failed("gauge_composition", e),
            });
        }
        Err(e) => {
            for c in ["energy_gauge_invariance", "curvature_covariance", "gauge_composition"] {
                rows.push(Check::failed(c, &e));
            }
        }
    }

    rows.push(match coulomb_fix_neumann(u, region, &ctx.cfg.gauge) {
        Ok((_, _, rep)) => Check {
            check: "coulomb_fix",
            value: rep.coulomb_residual_max,
            tolerance: ctx.cfg.gauge.tol,
            pass: rep.converged && rep.monotone,
            skipped: false,
            detail: format!("{} sweeps, monotone = {}", rep.iterations, rep.monotone),
        },
        Err(e) => Check::failed("coulomb_fix", e),
    });

    if let Some(v) = other {
        rows.extend(pair_checks(u, v, region));
    }
    rows
}

fn pair_checks<G: Group>(u: &LinkField<G>, v: &LinkField<G>, region: Option<&BallRegion>) -> Vec<Check> {
    let mut rows = Vec::new();
    if let Some(r) = region {
        let same = tangential_links_identical(u, v, r);
        rows.push(Check::new(
            "pair_shared_boundary",
            if same { 0.0 } else { 1.0 },
            0.0,
            "tangential links bit-identical",
        ));
    }
    let sa = plaquette_trace_spectrum(u, region);
    let sb = plaquette_trace_spectrum(v, region);
    let gap = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    rows.push(Check::new("pair_trace_spectrum", gap, 1e-6, "max sorted spectrum gap"));
    rows.push(match (energy(u, region), energy(v, region)) {
        (Ok(a), Ok(b)) => Check::new("pair_energy", (a - b).abs(), 1e-7 * a.max(1.0), "|E(u) - E(v)|"),
        (Err(e), _) | (_, Err(e)) => Check::failed("pair_energy", e),
    });
    rows
}

pub fn run<G: Group>(ctx: &Context, complex: &Arc<LatticeComplex>, region: Option<&BallRegion>) -> Result<i32, CliError> {
    let vc = &ctx.cfg.verify;
    let u = field::<G>(ctx, complex, region, vc.input.as_deref())?;
    let other = match &vc.other {
        Some(p) => Some(field::<G>(ctx, complex, region, Some(p))?),
        None => None,
    };
    let rows = checks(&u, other.as_ref(), region, ctx, member_seed(ctx.seed, 1));
    let failed = rows.iter().filter(|r| !r.pass).count();
    write_csv(&ctx.out.join("verify.csv"), &rows)?;
    let code = if failed == 0 { exit::SUCCESS } else { exit::FAILURE };
    #[derive(Serialize)]
    struct Summary<'a> {
        passed: usize,
        failed: usize,
        checks: &'a [Check],
    }
    write_json(
        &ctx.out.join("verify.json"),
        &Report {
            command: "verify",
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &ctx.hash,
            seed: ctx.seed,
            member: 0,
            member_seed: member_seed(ctx.seed, 0),
            group: G::KIND,
            status: if failed == 0 { "ok" } else { "failure" },
            input_norms: crate::report::measure(&u, region),
            output_norms: None,
            result: Summary {
                passed: rows.len() - failed,
                failed,
                checks: &rows,
            },
        },
    )?;
    Ok(code)
}
