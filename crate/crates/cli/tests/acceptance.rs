//! Acceptance suite: one PASS/FAIL line per criterion, with pinned
//! tolerances and runtime budgets.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ymr_core::fields::{connection_form, energy, plaquette_curvature, plaquette_trace_spectrum, restrict_boundary_links};
use ymr_core::gauge::{
    apply_gauge, coulomb_fix_identity_boundary, coulomb_fix_neumann, dirichlet_coulomb_fix,
    dirichlet_coulomb_residuals, verify_gauge_uniqueness, GaugeOptions,
};
use ymr_core::io::save_links;
use ymr_core::replace::{
    coulomb_matched_perturbation, convexity_check, default_schedule, family_sweep, interpolation_energy_profile,
    replace_on_ball, sweep, ReplaceOptions, StepStatus, SweepOptions, SweepStop,
};
use ymr_core::solver::{
    abelian_aligned_distance, abelian_oracle_solve, solve_dirichlet_ym, ym_residual_global, Method, SolveOptions,
};
use ymr_core::*;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        summary: summary.into(),
    }
}

fn criterion(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let pass = o.pass && elapsed <= budget;
    // written to the real stdout so the table appears in uncaptured logs
    let _ = writeln!(
        std::io::stdout(),
        "[{}] {id:>2} {name}: {} ({:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        o.summary,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ball_8() -> (Arc<LatticeComplex>, BallRegion) {
    let t = LatticeComplex::torus([8; 4], 1.0).unwrap();
    let ball = BallRegion::new(&t, [(2, 6); 4]).unwrap();
    (t, ball)
}

fn max_norm<A: Algebra>(v: &[A]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn spectrum_gap<G: Group>(a: &LinkField<G>, b: &LinkField<G>, region: Option<&BallRegion>) -> f64 {
    plaquette_trace_spectrum(a, region)
        .iter()
        .zip(&plaquette_trace_spectrum(b, region))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn exterior_identical<G: Group>(a: &LinkField<G>, b: &LinkField<G>, region: &BallRegion) -> bool {
    (0..a.complex().num_edges())
        .filter(|&e| !region.is_free_edge(e))
        .all(|e| a.link(e) == b.link(e))
}

// ---------------------------------------------------------------- 1

fn exactness() -> Outcome {
    const TOL: f64 = 1e-12;
    let worst: Vec<[f64; 5]> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let n = 3 + (i % 2) as usize;
            let complex = if (i / 2) % 2 == 0 {
                LatticeComplex::torus([n; 4], 1.0).unwrap()
            } else {
                LatticeComplex::open_box([n; 4], 1.0).unwrap()
            };
            let bc = if i % 3 == 0 {
                BoundaryCondition::Normal
            } else {
                BoundaryCondition::Tangential
            };
            let space = FormSpace::whole(&complex, bc);
            let mut r = rng(1000 + i);
            let u = LinkField::<Su2>::random(&complex, &mut r, 0.5);
            let a = connection_form(&u).unwrap();

            let mut dd: f64 = 0.0;
            for k in 0..3 {
                let c = Cochain::<Su2Alg>::random(&complex, k, &mut r, 1.0);
                let c = space.project(k, c.values());
                dd = dd.max(max_norm(&space.d(k + 1, &space.d(k, &c))) / max_norm(&c).max(1.0));
            }
            dd = dd.max(max_norm(&space.d(2, &space.d(1, a.values()))) / max_norm(a.values()).max(1.0));

            let mut adj: f64 = 0.0;
            for k in 0..4 {
                let x = space.project(k, Cochain::<Su2Alg>::random(&complex, k, &mut r, 1.0).values());
                let y = space.project(k + 1, Cochain::<Su2Alg>::random(&complex, k + 1, &mut r, 1.0).values());
                let lhs = space.inner(k + 1, &space.d(k, &x), &y);
                let rhs = space.inner(k, &x, &space.codiff(k + 1, &y));
                let scale = (space.norm_sq(k, &x) * space.norm_sq(k + 1, &y)).sqrt();
                adj = adj.max((lhs - rhs).abs() / scale.max(1.0));
            }

            let g = VertexGaugeField::<Su2>::random(&complex, &mut r, 2.0);
            let h = VertexGaugeField::<Su2>::random(&complex, &mut r, 2.0);
            let ug = apply_gauge(&u, &g).unwrap();
            let e0 = energy(&u, None).unwrap();
            let inv = (energy(&ug, None).unwrap() - e0).abs() / e0.max(1.0);

            // F(g.u)_p = Ad_{g(base p)} F(u)_p
            let f0 = plaquette_curvature(&u).unwrap();
            let f1 = plaquette_curvature(&ug).unwrap();
            let cov = (0..complex.num_faces())
                .map(|p| {
                    let base = complex.cell(2, p).base.map(|x| x as usize);
                    let v = complex.find_cell(base, 0).unwrap();
                    let want = g.value(v).conjugate(&f0.values()[p]);
                    (f1.values()[p] - want).norm() / f0.values()[p].norm().max(1.0)
                })
                .fold(0.0, f64::max);

            let lhs = apply_gauge(&ug, &h).unwrap();
            let rhs = apply_gauge(&u, &h.compose(&g)).unwrap();
            let comp = lhs.max_distance(&rhs);
            [dd, adj, inv, cov, comp]
        })
        .collect();
    let mut m = [0.0f64; 5];
    for w in &worst {
        for (a, b) in m.iter_mut().zip(w) {
            *a = a.max(*b);
        }
    }
    outcome(
        m.iter().all(|&x| x <= TOL),
        format!(
            "100 SU(2) instances; dd {:.1e}, adjoint {:.1e}, energy {:.1e}, covariance {:.1e}, composition {:.1e} (tol {TOL:.0e})",
            m[0], m[1], m[2], m[3], m[4]
        ),
    )
}

// ---------------------------------------------------------------- 2

fn dense_coboundary(space: &FormSpace, k: usize) -> DMatrix<f64> {
    let c = space.complex();
    let rows = space.active(k + 1);
    let cols = space.active(k);
    let col_of: HashMap<usize, usize> = cols.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (r, &cell) in rows.iter().enumerate() {
        for inc in c.boundary(k + 1, cell) {
            if let Some(&j) = col_of.get(&(inc.cell as usize)) {
                m[(r, j)] += inc.sign as f64;
            }
        }
    }
    m
}

fn dense_harmonic_dimension(space: &FormSpace, k: usize) -> usize {
    let rank = |m: DMatrix<f64>| {
        if m.nrows() == 0 || m.ncols() == 0 {
            0
        } else {
            m.svd(false, false).rank(1e-9)
        }
    };
    let up = if k < 4 { rank(dense_coboundary(space, k)) } else { 0 };
    let down = if k > 0 { rank(dense_coboundary(space, k - 1)) } else { 0 };
    space.dim(k) - up - down
}

fn hodge() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let t2 = LatticeComplex::torus([2; 4], 1.0).unwrap();
    let b2 = LatticeComplex::open_box([2; 4], 1.0).unwrap();
    let mut dense_mismatch = 0;
    for space in [
        FormSpace::whole(&t2, BoundaryCondition::Tangential),
        FormSpace::whole(&b2, BoundaryCondition::Tangential),
        FormSpace::whole(&b2, BoundaryCondition::Normal),
    ] {
        for k in 0..=4 {
            if space.harmonic_dimension(k) != dense_harmonic_dimension(&space, k) {
                dense_mismatch += 1;
            }
        }
    }
    ok &= dense_mismatch == 0;
    notes.push(format!("dense 2^4 mismatches {dense_mismatch}"));

    let mut ortho: f64 = 0.0;
    let mut dims = Vec::new();
    for (i, n) in [3usize, 4].into_iter().enumerate() {
        let torus = LatticeComplex::torus([n; 4], 1.0).unwrap();
        let host = LatticeComplex::torus([n + 2; 4], 1.0).unwrap();
        let ball = BallRegion::new(&host, [(1, 1 + n); 4]).unwrap();
        let bx = LatticeComplex::open_box([n; 4], 1.0).unwrap();
        let spaces = [
            ("torus", FormSpace::whole(&torus, BoundaryCondition::Tangential)),
            ("ball-normal", FormSpace::on_region(&ball, BoundaryCondition::Normal)),
            ("ball-tangential", FormSpace::on_region(&ball, BoundaryCondition::Tangential)),
            ("box-normal", FormSpace::whole(&bx, BoundaryCondition::Normal)),
        ];
        for (j, (name, space)) in spaces.iter().enumerate() {
            let h1 = space.harmonic_dimension(1);
            let want = if *name == "torus" { 4 } else { 0 };
            ok &= h1 == want;
            dims.push(format!("{name} {n}^4: {h1}"));
            let mut r = rng(2000 + 10 * i as u64 + j as u64);
            for k in [1, 2] {
                let c = Cochain::<Su2Alg>::random(space.complex(), k, &mut r, 1.0);
                let p = space.hodge_decompose(&c).unwrap();
                let n2 = space.norm_sq(k, &space.project(k, c.values()));
                for (x, y) in [(&p.exact, &p.coexact), (&p.exact, &p.harmonic), (&p.coexact, &p.harmonic)] {
                    ortho = ortho.max(space.inner(k, x.values(), y.values()).abs() / n2);
                }
            }
        }
    }
    ok &= ortho <= 1e-10;
    notes.push(format!("orthogonality {ortho:.1e} (tol 1e-10)"));
    notes.push(format!("harmonic 1-forms [{}]", dims.join(", ")));
    outcome(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 3

fn abelian_projection_gap(fixed: &LinkField<U1>, u: &LinkField<U1>, space: &FormSpace) -> f64 {
    let a = connection_form(u).unwrap();
    let parts = space.hodge_decompose(&a).unwrap();
    let projected = space.project(1, a.values());
    let b = connection_form(fixed).unwrap();
    space
        .active(1)
        .iter()
        .map(|&e| (b.values()[e].0 - (projected[e].0 - parts.exact.values()[e].0)).abs())
        .fold(0.0, f64::max)
}

fn gauge_fixing() -> Outcome {
    let (t, ball) = ball_8();
    let opts = GaugeOptions::default();
    let rows: Vec<(f64, bool, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(3000 + i);
            let u = LinkField::<Su2>::random(&t, &mut r, 0.1);
            let mut res: f64 = 0.0;
            let mut ok = true;
            let (_, _, a) = coulomb_fix_neumann(&u, Some(&ball), &opts).unwrap();
            let (_, _, b) = coulomb_fix_identity_boundary(&u, &ball, &opts).unwrap();
            let (_, fa, c) = dirichlet_coulomb_fix(&u, &ball, &opts).unwrap();
            for rep in [&a, &b, &c] {
                ok &= rep.converged && rep.monotone;
                res = res.max(rep.coulomb_residual_max);
            }
            let (interior, boundary) = dirichlet_coulomb_residuals(&fa, &ball).unwrap();
            res = res.max(interior).max(boundary);
            let g = VertexGaugeField::<Su2>::random(&t, &mut r, 0.3);
            let (_, fb, d) = dirichlet_coulomb_fix(&apply_gauge(&u, &g).unwrap(), &ball, &opts).unwrap();
            ok &= d.converged && d.monotone;
            let unique = verify_gauge_uniqueness(&fa, &fb, &ball, 1e-6).map(|v| v.residual).unwrap_or(f64::INFINITY);
            (res, ok, unique)
        })
        .collect();
    let res = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let all_ok = rows.iter().all(|r| r.1);
    let unique = rows.iter().map(|r| r.2).fold(0.0, f64::max);

    let tight = GaugeOptions {
        tol: 1e-11,
        ..opts
    };
    let oracle = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let u = LinkField::<U1>::random(&t, &mut rng(3500 + i), 0.1);
            let (_, f1, _) = coulomb_fix_neumann(&u, Some(&ball), &tight).unwrap();
            let (_, f2, _) = coulomb_fix_identity_boundary(&u, &ball, &tight).unwrap();
            abelian_projection_gap(&f1, &u, &FormSpace::on_region(&ball, BoundaryCondition::Tangential)).max(
                abelian_projection_gap(&f2, &u, &FormSpace::on_region(&ball, BoundaryCondition::Normal)),
            )
        })
        .reduce(|| 0.0, f64::max);
    outcome(
        res <= 1e-8 && all_ok && unique <= 1e-6 && oracle <= 1e-8,
        format!(
            "100 SU(2) fields x 3 variants: residual {res:.1e} (tol 1e-8), converged+monotone {all_ok}, \
             double Dirichlet fix {unique:.1e} (tol 1e-6); abelian vs Hodge projection {oracle:.1e} (tol 1e-8)"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn abelian_oracle() -> Outcome {
    let (t, ball) = ball_8();
    let rows: Vec<(f64, f64, usize, bool)> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let u = LinkField::<U1>::random(&t, &mut rng(4000 + i), 0.2);
            let boundary = restrict_boundary_links(&u, &ball).unwrap();
            let oracle = abelian_oracle_solve(&ball, &boundary).unwrap();
            let solve = |method| {
                let opts = SolveOptions {
                    method,
                    ..SolveOptions::default()
                };
                solve_dirichlet_ym(&u, &ball, &boundary, &opts).unwrap()
            };
            let (gd, rg) = solve(Method::GradientDescent);
            let (nt, rn) = solve(Method::Newton);
            (
                abelian_aligned_distance(&gd, &oracle, &ball).unwrap(),
                abelian_aligned_distance(&nt, &oracle, &ball).unwrap(),
                rn.newton_steps,
                rg.converged && rn.converged,
            )
        })
        .collect();
    let gd = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let nt = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let steps = rows.iter().map(|r| r.2).max().unwrap();
    let conv = rows.iter().all(|r| r.3);
    outcome(
        gd <= 1e-7 && nt <= 1e-7 && steps <= 3 && conv,
        format!("20 boundary sets: gradient {gd:.1e}, Newton {nt:.1e} (tol 1e-7), Newton steps <= {steps} (max 3)"),
    )
}

// ---------------------------------------------------------------- 5

fn minimality() -> Outcome {
    let (t, ball) = ball_8();
    let rows: Vec<(usize, f64, bool, f64)> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(5000 + i);
            let u = LinkField::<Su2>::random(&t, &mut r, 0.2);
            let boundary = restrict_boundary_links(&u, &ball).unwrap();
            let opts = SolveOptions::default();
            let (s, rep) = solve_dirichlet_ym(&u, &ball, &boundary, &opts).unwrap();
            let e = energy(&s, Some(&ball)).unwrap();
            let mut beaten = 0;
            let mut margin = f64::INFINITY;
            for c in 0..100 {
                let mut comp = s.clone();
                for edge in ball.free_edges() {
                    let link = if c % 2 == 0 {
                        Su2::random(&mut r, 0.05).mul(&comp.link(edge))
                    } else {
                        Su2::random(&mut r, 0.2)
                    };
                    comp.set_link(edge, link);
                }
                let ec = energy(&comp, Some(&ball)).unwrap();
                margin = margin.min(ec - e);
                if ec <= e {
                    beaten += 1;
                }
            }
            let mut v = u.clone();
            for edge in ball.free_edges() {
                v.set_link(edge, Su2::random(&mut r, 0.3));
            }
            let newton = SolveOptions {
                method: Method::Newton,
                ..opts
            };
            let (s2, rep2) = solve_dirichlet_ym(&v, &ball, &boundary, &newton).unwrap();
            (beaten, margin, rep.converged && rep2.converged, spectrum_gap(&s, &s2, Some(&ball)))
        })
        .collect();
    let beaten: usize = rows.iter().map(|r| r.0).sum();
    let margin = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let conv = rows.iter().all(|r| r.2);
    let gap = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    outcome(
        beaten == 0 && conv && gap <= 1e-6,
        format!(
            "20 SU(2) instances x 100 competitors: {beaten} competitors at or below the solution (min margin {margin:.2e}), \
             independent-init spectrum gap {gap:.1e} (tol 1e-6)"
        ),
    )
}

// ---------------------------------------------------------------- 6 and 7

struct PairStats {
    worst_increment: f64,
    violators: Vec<u64>,
    min_gap: f64,
    max_ratio: f64,
    ratio_finite: bool,
}

fn interpolation_pairs(dump: &Path) -> PairStats {
    let (t, ball) = ball_8();
    let rows: Vec<(u64, f64, f64, f64, Option<(LinkField<Su2>, LinkField<Su2>)>)> = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(6000 + i);
            let u = LinkField::<Su2>::random(&t, &mut r, 0.1);
            let boundary = restrict_boundary_links(&u, &ball).unwrap();
            let (s, _) = solve_dirichlet_ym(&u, &ball, &boundary, &SolveOptions::default()).unwrap();
            let (_, a, _) = coulomb_fix_identity_boundary(&s, &ball, &GaugeOptions::default()).unwrap();
            let b = coulomb_matched_perturbation(&a, &ball, &mut r, 0.1).unwrap();
            let profile = interpolation_energy_profile(&a, &b, &ball, 31).unwrap();
            assert_eq!(profile.len(), 32);
            let worst = profile.windows(2).map(|w| w[0].1 - w[1].1).fold(f64::NEG_INFINITY, f64::max);
            let rec = convexity_check(&a, &b, &ball, 1e3).unwrap();
            let bad = (worst > 1e-10).then(|| (a.clone(), b.clone()));
            (i, worst, rec.gap, rec.ratio, bad)
        })
        .collect();
    let mut violators = Vec::new();
    for (i, _, _, _, bad) in &rows {
        if let Some((a, b)) = bad {
            fs::create_dir_all(dump).unwrap();
            save_links(&dump.join(format!("pair-{i:02}-solution.ymrf")), a).unwrap();
            save_links(&dump.join(format!("pair-{i:02}-perturbed.ymrf")), b).unwrap();
            violators.push(*i);
        }
    }
    PairStats {
        worst_increment: rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max),
        violators,
        min_gap: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        max_ratio: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        ratio_finite: rows.iter().all(|r| r.3.is_finite()),
    }
}

// ---------------------------------------------------------------- 8

fn replacement_sweep() -> Outcome {
    let t = LatticeComplex::torus([8; 4], 1.0).unwrap();
    let schedule = default_schedule(&t).unwrap();
    let replace = ReplaceOptions {
        epsilon: 1e4,
        interpolation_steps: 4,
        regauge: false,
        ..ReplaceOptions::default()
    };
    let solver = SolveOptions {
        tol_residual: 1e-12,
        ..SolveOptions::default()
    };

    // U(1): terminal energy against the flux (harmonic part of F) of the start
    let u = LinkField::<U1>::random(&t, &mut rng(8000), 0.1);
    let f = plaquette_curvature(&u).unwrap();
    let space = FormSpace::whole(&t, BoundaryCondition::Tangential);
    let harmonic = space.hodge_decompose(&f).unwrap().harmonic;
    let target = 0.5 * harmonic.values().iter().map(|x| x.norm_sq()).sum::<f64>();
    let opts = SweepOptions {
        replace: ReplaceOptions { solver, ..replace },
        max_cycles: 50,
        tol: 1e-12,
    };
    let (out, trace) = sweep(&u, &schedule, &opts).unwrap();
    let terminal = energy(&out, None).unwrap();
    let residual = ym_residual_global(&out).unwrap();
    let rise = trace.energies.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let u1_ok = schedule.len() == 16
        && trace.monotone
        && trace.failed_steps == 0
        && trace.stop_reason == SweepStop::Converged
        && (terminal - target).abs() <= 1e-5
        && residual <= 1e-5;

    // SU(2): per-step exterior bits, monotonicity and idempotence
    let mut v = LinkField::<Su2>::random(&t, &mut rng(8001), 0.1);
    let mut su2_ok = true;
    let mut max_drop: f64 = 0.0;
    let mut su2_rise = f64::NEG_INFINITY;
    for (k, ball) in schedule.iter().enumerate() {
        let (once, r1) = replace_on_ball(&v, ball, k, &replace).unwrap();
        let (twice, r2) = replace_on_ball(&once, ball, k, &replace).unwrap();
        su2_ok &= r1.status == StepStatus::Replaced && r2.status == StepStatus::Replaced;
        su2_ok &= exterior_identical(&once, &v, ball) && exterior_identical(&twice, &v, ball);
        su2_rise = su2_rise.max(r1.post_global_energy - r1.pre_global_energy);
        max_drop = max_drop.max(r2.pre_global_energy - r2.post_global_energy);
        v = once;
    }
    let (_, su2_trace) = sweep(
        &v,
        &schedule,
        &SweepOptions {
            replace,
            max_cycles: 2,
            tol: 0.0,
        },
    )
    .unwrap();
    su2_ok &= su2_trace.monotone && su2_trace.failed_steps == 0 && su2_rise <= 1e-10 && max_drop <= 1e-8;
    outcome(
        u1_ok && su2_ok,
        format!(
            "U(1) 8^4, {} balls, {} cycles: E {terminal:.2e} vs flux oracle {target:.2e} (tol 1e-5), \
             max step rise {rise:.1e}, global residual {residual:.1e}; SU(2): exterior bits and monotone {su2_ok}, \
             second-pass drop {max_drop:.1e} (tol 1e-8)",
            schedule.len(),
            trace.cycles
        ),
    )
}

// ---------------------------------------------------------------- 9

fn family() -> Outcome {
    let (t, ball) = ball_8();
    let mut r = rng(9000);
    let u = LinkField::<Su2>::random(&t, &mut r, 0.1);
    let members: Vec<LinkField<Su2>> = (0..8)
        .map(|i| {
            if i == 0 {
                u.clone()
            } else {
                apply_gauge(&u, &VertexGaugeField::random(&t, &mut r, 2.0)).unwrap()
            }
        })
        .collect();
    let opts = ReplaceOptions {
        epsilon: 1e3,
        regauge: false,
        ..ReplaceOptions::default()
    };
    let out = family_sweep(&members, &ball, &opts).unwrap();
    let gap = out.iter().map(|(f, _)| spectrum_gap(f, &out[0].0, None)).fold(0.0, f64::max);
    let exterior = out.iter().zip(&members).all(|((f, _), m)| exterior_identical(f, m, &ball));
    let replaced = out.iter().all(|(_, rep)| rep.status == StepStatus::Replaced);
    outcome(
        gap <= 1e-8 && exterior && replaced,
        format!("8-member gauge orbit: spectrum spread {gap:.1e} (tol 1e-8), exterior bit-identical {exterior}"),
    )
}

// ---------------------------------------------------------------- 10

const DET_CONFIG: &str = r#"
group = "su2"
[lattice]
dims = [6, 6, 6, 6]
[region]
lo = [1, 1, 1, 1]
len = [4, 4, 4, 4]
[generator]
kind = "random_small"
scale = 0.1
seed = 21
[replace]
epsilon = 1000.0
regauge = true
[sweep]
max_cycles = 1
[family]
members = 4
[ensemble]
members = 3
"#;

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(root: &Path) -> Outcome {
    let cfg = root.join("config.toml");
    fs::write(&cfg, DET_CONFIG).unwrap();
    let commands = ["generate", "gaugefix", "solve-dirichlet", "replace", "sweep", "family-sweep", "verify"];
    let mut compared = 0;
    let mut differing = Vec::new();
    for cmd in commands {
        let runs: Vec<_> = [("1", "a"), ("4", "b"), ("4", "c")]
            .iter()
            .map(|(jobs, tag)| {
                let out = root.join(format!("{cmd}-{tag}"));
                let status = Command::new(env!("CARGO_BIN_EXE_ymr"))
                    .args(["--config", cfg.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap(), cmd])
                    .status()
                    .unwrap();
                (status.code(), files(&out))
            })
            .collect();
        for other in &runs[1..] {
            if other.0 != runs[0].0 || other.1 != runs[0].1 {
                differing.push(cmd);
            }
        }
        compared += runs[0].1.len();
    }
    differing.dedup();
    outcome(
        differing.is_empty() && compared > 0,
        format!(
            "{} subcommands, {compared} artifacts compared across --jobs 1/4 and reruns; differing: {differing:?}",
            commands.len()
        ),
    )
}

#[test]
fn acceptance() {
    let scratch = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&scratch);
    fs::create_dir_all(&scratch).unwrap();
    let secs = Duration::from_secs;
    let mut results = Vec::new();

    results.push(criterion(1, "exactness", secs(10), exactness));
    results.push(criterion(2, "hodge", secs(60), hodge));
    results.push(criterion(3, "gauge fixing", secs(300), gauge_fixing));
    results.push(criterion(4, "abelian oracle equivalence", secs(120), abelian_oracle));
    results.push(criterion(5, "minimality and uniqueness", secs(600), minimality));

    let start = Instant::now();
    let dump = scratch.join("interpolation-violators");
    let pairs = interpolation_pairs(&dump);
    let shared = start.elapsed();
    results.push(criterion(6, "interpolation monotonicity", secs(300), || {
        outcome(
            pairs.violators.is_empty() && shared <= secs(300),
            format!(
                "50 pairs x 32 samples: largest decrease {:.1e} (tol 1e-10), violators {:?}{}, shared runtime {:.1}s",
                pairs.worst_increment,
                pairs.violators,
                if pairs.violators.is_empty() {
                    String::new()
                } else {
                    format!(" dumped to {}", dump.display())
                },
                shared.as_secs_f64()
            ),
        )
    }));
    results.push(criterion(7, "convexity inequality", secs(300), || {
        outcome(
            pairs.min_gap >= -1e-10 && pairs.ratio_finite && shared <= secs(300),
            format!(
                "min gap {:.3e} (tol -1e-10), measured C = max ratio {:.4}",
                pairs.min_gap, pairs.max_ratio
            ),
        )
    }));

    results.push(criterion(8, "replacement and sweep", secs(900), replacement_sweep));
    results.push(criterion(9, "family", secs(300), family));
    results.push(criterion(10, "determinism", secs(300), || determinism(&scratch)));

    let passed = results.iter().filter(|&&p| p).count();
    let _ = writeln!(std::io::stdout(), "acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}
