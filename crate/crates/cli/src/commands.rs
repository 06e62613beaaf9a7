//! Subcommand implementations, generic over the structure group.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use ymr_core::fields::{energy, plaquette_trace_spectrum, restrict_boundary_links};
use ymr_core::gauge::{
    coulomb_fix_identity_boundary, coulomb_fix_neumann, dirichlet_coulomb_fix, GaugeFixReport, VertexGaugeField,
};
use ymr_core::io::{encode_gauge, load_links, save_links};
use ymr_core::replace::{
    dilation_generator, family_sweep, replace_on_ball, sweep, ReplacementStepReport, StepStatus, SweepStop,
};
use ymr_core::solver::{abelian_oracle_solve, solve_dirichlet_ym, ym_residual};
use ymr_core::{BallRegion, Group, GroupKind, LatticeComplex, LinkField, Su2, U1};

use crate::config::{ExperimentConfig, FamilyKind, GaugefixVariant, GeneratorKind};
use crate::error::{exit, CliError};
use crate::report::{measure, write_csv, write_json, MeasuredNorms, Report};
use crate::seed::member_seed;
use crate::verify;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Gaugefix,
    SolveDirichlet,
    Replace,
    Sweep,
    FamilySweep,
    Verify,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Gaugefix => "gaugefix",
            Command::SolveDirichlet => "solve-dirichlet",
            Command::Replace => "replace",
            Command::Sweep => "sweep",
            Command::FamilySweep => "family-sweep",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
        }
    }

    /// Commands that fan out over `[ensemble] members`.
    fn is_ensemble(self) -> bool {
        matches!(
            self,
            Command::Generate | Command::Gaugefix | Command::SolveDirichlet | Command::Replace | Command::Oracle
        )
    }
}

/// Everything a run needs besides the command.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub hash: String,
}

impl Context {
    pub fn new(mut cfg: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            cfg.generator.seed = s;
        }
        let out = out.unwrap_or_else(|| cfg.output.dir.clone());
        let hash = cfg.hash();
        Context {
            seed: cfg.generator.seed,
            cfg,
            out,
            hash,
        }
    }
}

/// Runs a command and returns the exit code; artifacts are written even
/// when the code is nonzero.
pub fn run(cmd: Command, ctx: &Context) -> Result<i32, CliError> {
    fs::create_dir_all(&ctx.out)?;
    match ctx.cfg.group {
        GroupKind::U1 => run_group::<U1>(cmd, ctx),
        GroupKind::Su2 => {
            if cmd == Command::Oracle {
                return Err(CliError::Config("group: the abelian oracle needs group = \"u1\"".into()));
            }
            run_group::<Su2>(cmd, ctx)
        }
    }
}

fn run_group<G: Group>(cmd: Command, ctx: &Context) -> Result<i32, CliError> {
    let complex = ctx.cfg.complex()?;
    let region = ctx.cfg.region(&complex)?;
    match cmd {
        Command::Sweep => return run_sweep::<G>(ctx, &complex),
        Command::FamilySweep => return run_family::<G>(ctx, &complex, region),
        Command::Verify => return verify::run::<G>(ctx, &complex, region.as_ref()),
        _ => {}
    }
    let members = ctx.cfg.ensemble.members;
    let outcomes: Vec<Result<MemberOutcome, CliError>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let dir = if members == 1 {
                ctx.out.clone()
            } else {
                ctx.out.join(format!("member-{i:03}"))
            };
            fs::create_dir_all(&dir)?;
            let job = Job {
                ctx,
                complex: &complex,
                region: region.as_ref(),
                member: i,
                member_seed: member_seed(ctx.seed, i as u64),
                dir,
            };
            match cmd {
                Command::Generate => job.generate::<G>(),
                Command::Gaugefix => job.gaugefix::<G>(),
                Command::SolveDirichlet => job.solve::<G>(),
                Command::Replace => job.replace::<G>(),
                Command::Oracle => job.oracle(),
                _ => unreachable!("not an ensemble command"),
            }
        })
        .collect();
    if members == 1 {
        return outcomes.into_iter().next().unwrap().map(|o| o.code);
    }
    let mut summary = Vec::with_capacity(members);
    let mut code = exit::SUCCESS;
    for (i, o) in outcomes.into_iter().enumerate() {
        let (status, c, message) = match o {
            Ok(o) => (o.status, o.code, None),
            Err(e) => (e.kind(), e.exit_code(), Some(e.to_string())),
        };
        code = worst(code, c);
        summary.push(EnsembleRow {
            member: i,
            member_seed: member_seed(ctx.seed, i as u64),
            status,
            exit_code: c,
            message,
        });
    }
    debug_assert!(cmd.is_ensemble());
    write_json(
        &ctx.out.join("ensemble.json"),
        &Report {
            command: cmd.name(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &ctx.hash,
            seed: ctx.seed,
            member: 0,
            member_seed: ctx.seed,
            group: G::KIND,
            status: status_name(code),
            input_norms: None,
            output_norms: None,
            result: &summary,
        },
    )?;
    Ok(code)
}

/// Precedence when combining member exit codes.
fn worst(a: i32, b: i32) -> i32 {
    let rank = |c: i32| match c {
        exit::SUCCESS => 0,
        exit::NON_CONVERGENCE => 1,
        exit::HYPOTHESIS => 2,
        exit::CONFIG => 3,
        _ => 4,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn status_name(code: i32) -> &'static str {
    match code {
        exit::SUCCESS => "ok",
        exit::NON_CONVERGENCE => "non_convergence",
        exit::HYPOTHESIS => "hypothesis_violation",
        exit::CONFIG => "config",
        _ => "failure",
    }
}

#[derive(Serialize)]
struct EnsembleRow {
    member: usize,
    member_seed: u64,
    status: &'static str,
    exit_code: i32,
    message: Option<String>,
}

struct MemberOutcome {
    status: &'static str,
    code: i32,
}

impl MemberOutcome {
    fn new(code: i32) -> Self {
        MemberOutcome {
            status: status_name(code),
            code,
        }
    }
}

/// Builds the field described by `[generator]`.
pub fn generate_field<G: Group>(
    cfg: &ExperimentConfig,
    complex: &Arc<LatticeComplex>,
    region: Option<&BallRegion>,
    seed: u64,
) -> Result<LinkField<G>, CliError> {
    let g = &cfg.generator;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match g.kind {
        GeneratorKind::Flat => LinkField::identity(complex),
        GeneratorKind::RandomSmall => LinkField::random(complex, &mut rng, g.scale),
        GeneratorKind::Dilated => {
            let base = LinkField::random(complex, &mut rng, g.scale);
            let region = region.ok_or_else(|| CliError::Config("generator: `dilated` needs a [region]".into()))?;
            dilation_generator(&base, region, g.lambda)?
        }
        GeneratorKind::File => {
            let path = g.path.as_ref().expect("validated");
            let u = load_links::<G>(path)?;
            if !u.complex().same_shape(complex) {
                return Err(CliError::Config(format!(
                    "generator.path: {} does not match [lattice]",
                    path.display()
                )));
            }
            u
        }
    })
}

struct Job<'a> {
    ctx: &'a Context,
    complex: &'a Arc<LatticeComplex>,
    region: Option<&'a BallRegion>,
    member: usize,
    member_seed: u64,
    dir: PathBuf,
}

impl Job<'_> {
    fn input<G: Group>(&self) -> Result<LinkField<G>, CliError> {
        generate_field(&self.ctx.cfg, self.complex, self.region, self.member_seed)
    }

    fn region(&self) -> Result<&BallRegion, CliError> {
        self.region
            .ok_or_else(|| CliError::Config("region: this subcommand needs a [region] section".into()))
    }

    fn report<T: Serialize>(
        &self,
        cmd: Command,
        code: i32,
        input: Option<MeasuredNorms>,
        output: Option<MeasuredNorms>,
        result: T,
    ) -> Result<MemberOutcome, CliError> {
        let rep = Report {
            command: cmd.name(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &self.ctx.hash,
            seed: self.ctx.seed,
            member: self.member,
            member_seed: self.member_seed,
            group: self.ctx.cfg.group,
            status: status_name(code),
            input_norms: input,
            output_norms: output,
            result,
        };
        write_json(&self.dir.join("report.json"), &rep)?;
        Ok(MemberOutcome::new(code))
    }

    fn generate<G: Group>(&self) -> Result<MemberOutcome, CliError> {
        let u = self.input::<G>()?;
        save_links(&self.dir.join("field.ymrf"), &u)?;
        #[derive(Serialize)]
        struct Summary {
            energy: Option<f64>,
            region_energy: Option<f64>,
            links: usize,
        }
        let summary = Summary {
            energy: energy(&u, None).ok(),
            region_energy: self.region.and_then(|r| energy(&u, Some(r)).ok()),
            links: u.links().len(),
        };
        self.report(Command::Generate, exit::SUCCESS, measure(&u, self.region), None, summary)
    }

    fn gaugefix<G: Group>(&self) -> Result<MemberOutcome, CliError> {
        let u = self.input::<G>()?;
        let opts = &self.ctx.cfg.gauge;
        let (g, fixed, rep): (VertexGaugeField<G>, LinkField<G>, GaugeFixReport) = match self.ctx.cfg.gaugefix.variant {
            GaugefixVariant::Neumann => coulomb_fix_neumann(&u, self.region, opts)?,
            GaugefixVariant::IdentityBoundary => coulomb_fix_identity_boundary(&u, self.region()?, opts)?,
            GaugefixVariant::DirichletCoulomb => dirichlet_coulomb_fix(&u, self.region()?, opts)?,
        };
        save_links(&self.dir.join("fixed.ymrf"), &fixed)?;
        fs::write(self.dir.join("transform.ymrf"), encode_gauge(&g)?)?;
        #[derive(Serialize)]
        struct Row {
            sweep: usize,
            functional: f64,
        }
        let rows: Vec<Row> = rep
            .functional_trace
            .iter()
            .enumerate()
            .map(|(sweep, &functional)| Row { sweep, functional })
            .collect();
        write_csv(&self.dir.join("functional.csv"), &rows)?;
        let code = if rep.converged { exit::SUCCESS } else { exit::NON_CONVERGENCE };
        self.report(
            Command::Gaugefix,
            code,
            measure(&u, self.region),
            measure(&fixed, self.region),
            rep,
        )
    }

    fn solve<G: Group>(&self) -> Result<MemberOutcome, CliError> {
        let region = self.region()?;
        let u = self.input::<G>()?;
        let boundary = restrict_boundary_links(&u, region)?;
        let (s, rep) = solve_dirichlet_ym(&u, region, &boundary, &self.ctx.cfg.solver)?;
        save_links(&self.dir.join("solution.ymrf"), &s)?;
        write_trace(&self.dir.join("trace.csv"), &rep.energy_trace, &rep.residual_trace)?;
        let code = if rep.converged { exit::SUCCESS } else { exit::NON_CONVERGENCE };
        let input = measure(&u, Some(region));
        let output = Some(MeasuredNorms {
            domain: "region",
            curvature_l2: rep.norms.curvature_l2,
            a_l4: rep.norms.a_l4,
            a_sobolev1: rep.norms.a_sobolev1,
            boundary_half: Some(rep.norms.boundary_half),
        });
        self.report(Command::SolveDirichlet, code, input, output, rep)
    }

    fn oracle(&self) -> Result<MemberOutcome, CliError> {
        let region = self.region()?;
        let u = self.input::<U1>()?;
        let s = abelian_oracle_solve(region, &restrict_boundary_links(&u, region)?)?;
        save_links(&self.dir.join("oracle.ymrf"), &s)?;
        #[derive(Serialize)]
        struct Summary {
            region_energy: f64,
            ym_residual: f64,
        }
        let summary = Summary {
            region_energy: energy(&s, Some(region))?,
            ym_residual: ym_residual(&s, region)?,
        };
        self.report(
            Command::Oracle,
            exit::SUCCESS,
            measure(&u, Some(region)),
            measure(&s, Some(region)),
            summary,
        )
    }

    fn replace<G: Group>(&self) -> Result<MemberOutcome, CliError> {
        let region = self.region()?;
        let u = self.input::<G>()?;
        let (out, rep) = replace_on_ball(&u, region, 0, &self.ctx.cfg.replace_options())?;
        save_links(&self.dir.join("replaced.ymrf"), &out)?;
        write_profile(&self.dir.join("interpolation.csv"), &rep.interpolation)?;
        let code = step_code(&rep);
        self.report(
            Command::Replace,
            code,
            measure(&u, Some(region)),
            measure(&out, Some(region)),
            rep,
        )
    }
}

fn step_code(rep: &ReplacementStepReport) -> i32 {
    match rep.status {
        StepStatus::Replaced => exit::SUCCESS,
        StepStatus::EpsilonViolation => exit::HYPOTHESIS,
        StepStatus::Failed => match &rep.error {
            Some(msg) if msg.contains("branch cut") => exit::HYPOTHESIS,
            _ => exit::NON_CONVERGENCE,
        },
    }
}

fn write_trace(path: &Path, energy: &[f64], residual: &[f64]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        iteration: usize,
        energy: f64,
        residual: f64,
    }
    let rows: Vec<Row> = energy
        .iter()
        .zip(residual)
        .enumerate()
        .map(|(iteration, (&energy, &residual))| Row {
            iteration,
            energy,
            residual,
        })
        .collect();
    write_csv(path, &rows)
}

fn write_profile(path: &Path, profile: &[(f64, f64)]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        t: f64,
        energy: f64,
    }
    let rows: Vec<Row> = profile.iter().map(|&(t, energy)| Row { t, energy }).collect();
    write_csv(path, &rows)
}

fn run_sweep<G: Group>(ctx: &Context, complex: &Arc<LatticeComplex>) -> Result<i32, CliError> {
    let schedule = ctx.cfg.schedule(complex)?;
    let region = ctx.cfg.region(complex)?;
    let seed = member_seed(ctx.seed, 0);
    let u = generate_field::<G>(&ctx.cfg, complex, region.as_ref(), seed)?;
    let (out, trace) = sweep(&u, &schedule, &ctx.cfg.sweep_options())?;
    save_links(&ctx.out.join("final.ymrf"), &out)?;
    #[derive(Serialize)]
    struct Row {
        step: usize,
        ball: usize,
        status: StepStatus,
        energy: f64,
        concentration: f64,
    }
    let rows: Vec<Row> = trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| Row {
            step: i + 1,
            ball: s.ball_id,
            status: s.status,
            energy: trace.energies[i + 1],
            concentration: trace.concentration[i],
        })
        .collect();
    write_csv(&ctx.out.join("energy.csv"), &rows)?;
    let code = match trace.stop_reason {
        SweepStop::EpsilonViolation => exit::HYPOTHESIS,
        _ => exit::SUCCESS,
    };
    write_json(
        &ctx.out.join("report.json"),
        &Report {
            command: Command::Sweep.name(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &ctx.hash,
            seed: ctx.seed,
            member: 0,
            member_seed: seed,
            group: G::KIND,
            status: status_name(code),
            input_norms: measure(&u, region.as_ref()),
            output_norms: measure(&out, region.as_ref()),
            result: &trace,
        },
    )?;
    Ok(code)
}

/// Geodesic interpolation of every link, `exp((1−t) log U₀ + t log U₁)`.
fn interpolate<G: Group>(a: &LinkField<G>, b: &LinkField<G>, t: f64) -> Result<LinkField<G>, CliError> {
    let links = a
        .links()
        .iter()
        .zip(b.links())
        .map(|(x, y)| Ok(G::exp(&(x.log()? * (1.0 - t) + y.log()? * t))))
        .collect::<Result<Vec<G>, ymr_core::Error>>()?;
    Ok(LinkField::from_links(a.complex(), links)?)
}

fn spectrum_distance<G: Group>(a: &LinkField<G>, b: &LinkField<G>) -> f64 {
    plaquette_trace_spectrum(a, None)
        .iter()
        .zip(&plaquette_trace_spectrum(b, None))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn run_family<G: Group>(
    ctx: &Context,
    complex: &Arc<LatticeComplex>,
    region: Option<BallRegion>,
) -> Result<i32, CliError> {
    let region = region.ok_or_else(|| CliError::Config("region: family-sweep needs a [region] section".into()))?;
    let fam = ctx.cfg.family;
    let base = generate_field::<G>(&ctx.cfg, complex, Some(&region), member_seed(ctx.seed, 0))?;
    let family: Vec<LinkField<G>> = match fam.kind {
        FamilyKind::Constant => vec![base.clone(); fam.members],
        FamilyKind::GaugeOrbit => (0..fam.members)
            .map(|i| {
                if i == 0 {
                    return Ok(base.clone());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(member_seed(ctx.seed, i as u64));
                let g = VertexGaugeField::random(complex, &mut rng, fam.gauge_scale);
                Ok(ymr_core::gauge::apply_gauge(&base, &g)?)
            })
            .collect::<Result<_, CliError>>()?,
        FamilyKind::Interpolated => {
            let other = generate_field::<G>(&ctx.cfg, complex, Some(&region), member_seed(ctx.seed, 1))?;
            let n = fam.members.max(2) - 1;
            (0..fam.members)
                .map(|i| interpolate(&base, &other, i as f64 / n as f64))
                .collect::<Result<_, _>>()?
        }
    };
    let results = family_sweep(&family, &region, &ctx.cfg.replace_options())?;
    let mut code = exit::SUCCESS;
    #[derive(Serialize)]
    struct Row {
        member: usize,
        status: StepStatus,
        pre_ball_energy: f64,
        post_ball_energy: f64,
        exterior_unchanged: bool,
        /// Spectrum distance to member 0 after replacement.
        spectrum_gap: f64,
        /// Spectrum distances to the previous member before and after.
        input_step: Option<f64>,
        output_step: Option<f64>,
    }
    let mut rows = Vec::with_capacity(results.len());
    for (i, (field, rep)) in results.iter().enumerate() {
        code = worst(code, step_code(rep));
        let exterior_unchanged = (0..complex.num_edges())
            .filter(|&e| !region.is_free_edge(e))
            .all(|e| field.link(e) == family[i].link(e));
        rows.push(Row {
            member: i,
            status: rep.status,
            pre_ball_energy: rep.pre_ball_energy,
            post_ball_energy: rep.post_ball_energy,
            exterior_unchanged,
            spectrum_gap: spectrum_distance(field, &results[0].0),
            input_step: (i > 0).then(|| spectrum_distance(&family[i], &family[i - 1])),
            output_step: (i > 0).then(|| spectrum_distance(field, &results[i - 1].0)),
        });
        save_links(&ctx.out.join(format!("member-{i:03}.ymrf")), field)?;
    }
    write_csv(&ctx.out.join("family.csv"), &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        kind: FamilyKind,
        max_spectrum_gap: f64,
        /// Largest output step over input step between adjacent members.
        lipschitz_proxy: Option<f64>,
        members: Vec<&'a ReplacementStepReport>,
    }
    let lipschitz_proxy = rows
        .iter()
        .filter_map(|r| match (r.input_step, r.output_step) {
            (Some(a), Some(b)) if a > 0.0 => Some(b / a),
            _ => None,
        })
        .reduce(f64::max);
    let summary = Summary {
        kind: fam.kind,
        max_spectrum_gap: rows.iter().map(|r| r.spectrum_gap).fold(0.0, f64::max),
        lipschitz_proxy,
        members: results.iter().map(|r| &r.1).collect(),
    };
    write_json(
        &ctx.out.join("report.json"),
        &Report {
            command: Command::FamilySweep.name(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: &ctx.hash,
            seed: ctx.seed,
            member: 0,
            member_seed: member_seed(ctx.seed, 0),
            group: G::KIND,
            status: status_name(code),
            input_norms: measure(&base, Some(&region)),
            output_norms: measure(&results[0].0, Some(&region)),
            result: summary,
        },
    )?;
    Ok(code)
}
