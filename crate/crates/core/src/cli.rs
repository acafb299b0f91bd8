//! JSON job configuration and report emission for the `dressing-forge` binary.
//!
//! Exit status: 0 when every requested check passes, 1 on a numerical
//! failure or a failed check, 2 on a malformed configuration.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpw_core::{
    build_frames, frames_from_gminus, g_minus_at, sym_immersion, verify_cmc, write_cmc_csv,
    write_obj, GridSpec, MeromorphicPotential,
};
use crate::dressing_engine::{
    dress_gminus, dress_point, dress_potential, DressingElement, ProbeGrid,
};
use crate::error::{Error, Result};
use crate::factorization::{birkhoff, iwasawa};
use crate::isotropy_lab::{b_zero_collapse, isotropy_verdict, Verdict, DEFAULT_N_MAX};
use crate::loop_algebra::{sampling, MatrixLoop, DEFAULT_TRUNCATION};
use crate::mat2::Mat2;
use crate::meromorphic::RationalFunction;
use crate::symmetry_lab::{
    constant_f_obstruction, dressed_monodromy_law, monodromy_of_automorphic,
    symmetry_equivalence_check, Automorphism, MoebiusMap,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Build,
    Dress,
    Isotropy,
    Symmetry,
    Verify,
}

#[derive(Debug, Parser)]
#[command(
    name = "dressing-forge",
    about = "CMC surfaces from DPW potentials: build, dress, isotropy, symmetry"
)]
pub struct Args {
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative mean-curvature deviation.
    pub cmc: f64,
    pub hopf: f64,
    pub component_ode: f64,
    pub factorization: f64,
    pub closed_form: f64,
    pub monodromy: f64,
    pub admissible: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cmc: 0.02,
            hopf: 1e-10,
            component_ode: 1e-6,
            factorization: 1e-9,
            closed_form: 1e-8,
            monodromy: 1e-8,
            admissible: 1e-8,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let all = [
            ("cmc", self.cmc),
            ("hopf", self.hopf),
            ("component_ode", self.component_ode),
            ("factorization", self.factorization),
            ("closed_form", self.closed_form),
            ("monodromy", self.monodromy),
            ("admissible", self.admissible),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstructionSweep {
    #[serde(rename = "C", default = "default_constants")]
    pub constants: Vec<f64>,
    /// Random maps drawn from the seed.
    #[serde(default)]
    pub random_maps: usize,
    /// Rotations added to the random maps.
    #[serde(default)]
    pub rotations: usize,
    #[serde(default)]
    pub maps: Vec<MoebiusMap>,
}

fn default_constants() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonodromyJob {
    pub automorphism: Automorphism,
    pub points: Vec<Complex64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryJob {
    pub obstruction: Option<ObstructionSweep>,
    pub monodromy: Option<MonodromyJob>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Must match the subcommand when present.
    pub command: Option<Command>,
    pub potential: Option<MeromorphicPotential>,
    /// Applied in order: the first entry acts first.
    #[serde(default)]
    pub dressing: Vec<DressingElement>,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_lambdas")]
    pub lambda_samples: Vec<Complex64>,
    pub probes: Option<ProbeGrid>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    pub n_max: Option<usize>,
    pub expect_verdict: Option<Verdict>,
    #[serde(default)]
    pub symmetry: SymmetryJob,
}

fn default_lambdas() -> Vec<Complex64> {
    vec![Complex64::new(1.0, 0.0)]
}

impl JobConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::InvalidInput(format!(
                    "config is for {c:?} but {command:?} was requested"
                )));
            }
        }
        self.tolerances.validate()?;
        if let Some(p) = &self.potential {
            p.validate()?;
        }
        let need_potential = matches!(command, Command::Build | Command::Dress | Command::Isotropy)
            || (command == Command::Symmetry && self.symmetry.monodromy.is_some());
        if need_potential && self.potential.is_none() {
            return Err(Error::InvalidInput("a potential is required".into()));
        }
        if command == Command::Build {
            let g = self
                .grid
                .ok_or_else(|| Error::InvalidInput("build needs a grid".into()))?;
            if !(g.extent > 0.0) || g.resolution == 0 {
                return Err(Error::InvalidInput(
                    "grid extent and resolution must be positive".into(),
                ));
            }
            if self.lambda_samples.is_empty() {
                return Err(Error::InvalidInput("no λ samples".into()));
            }
            if let Some(l) = self
                .lambda_samples
                .iter()
                .find(|l| (l.norm() - 1.0).abs() > 1e-12)
            {
                return Err(Error::InvalidInput(format!(
                    "λ sample {l} is off the unit circle"
                )));
            }
        }
        if command == Command::Symmetry
            && self.symmetry.obstruction.is_none()
            && self.symmetry.monodromy.is_none()
        {
            return Err(Error::InvalidInput(
                "symmetry needs an obstruction or monodromy job".into(),
            ));
        }
        if let Some(o) = &self.symmetry.obstruction {
            if o.constants.iter().any(|c| !(*c > 0.0)) {
                return Err(Error::InvalidInput(
                    "obstruction constants must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn dressing_element(&self) -> DressingElement {
        self.dressing
            .iter()
            .fold(DressingElement::identity(), |acc, h| h.compose(&acc))
    }
}

/// One named check with its measured value and bound.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, out: &mut Outcome) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    out.artifacts.push(path);
    Ok(())
}

#[derive(Serialize)]
struct BuildSample {
    lambda0: Complex64,
    obj: String,
    csv: String,
    checked_vertices: usize,
    max_deviation: f64,
    mean_deviation: f64,
    max_conformality: f64,
    passed: bool,
}

#[derive(Serialize)]
struct BuildReport<'a> {
    tolerances: &'a Tolerances,
    grid: GridSpec,
    points: usize,
    singular_points: usize,
    closure_residual: f64,
    iwasawa_residual: f64,
    samples: Vec<BuildSample>,
}

fn run_build(cfg: &JobConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let xi = cfg.potential.as_ref().expect("validated");
    let grid = cfg.grid.expect("validated");
    let mut ff = build_frames(xi, grid)?;
    if !cfg.dressing.is_empty() {
        ff = frames_from_gminus(dress_gminus(&cfg.dressing_element(), &ff).field);
    }
    let mut samples = Vec::new();
    for (k, &l) in cfg.lambda_samples.iter().enumerate() {
        let mesh = sym_immersion(&ff, l, xi.h)?;
        let report = verify_cmc(&mesh, xi.h, cfg.tolerances.cmc);
        let obj = format!("surface_{k}.obj");
        let csv = format!("curvature_{k}.csv");
        write_obj(&mesh, &dir.join(&obj))?;
        write_cmc_csv(&report, &dir.join(&csv))?;
        out.artifacts.push(dir.join(&obj));
        out.artifacts.push(dir.join(&csv));
        out.checks.push(Check::at_most(
            &format!("cmc[{k}]"),
            report.max_deviation,
            cfg.tolerances.cmc,
        ));
        samples.push(BuildSample {
            lambda0: l,
            obj,
            csv,
            checked_vertices: report.checked_vertices,
            max_deviation: report.max_deviation,
            mean_deviation: report.mean_deviation,
            max_conformality: report.max_conformality,
            passed: report.passed,
        });
    }
    let report = BuildReport {
        tolerances: &cfg.tolerances,
        grid,
        points: ff.grid.len(),
        singular_points: ff.singular_count(),
        closure_residual: ff.closure_residual,
        iwasawa_residual: ff.iwasawa_residual,
        samples,
    };
    write_json(dir, "build_report.json", &report, out)
}

#[derive(Serialize)]
struct DressReport<'a> {
    tolerances: &'a Tolerances,
    dressing: DressingElement,
    result: crate::dressing_engine::PotentialDressing,
}

fn run_dress(cfg: &JobConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let xi = cfg.potential.as_ref().expect("validated");
    let probes = cfg
        .probes
        .unwrap_or_else(|| ProbeGrid::around(xi.base_point));
    let h = cfg.dressing_element();
    let result = dress_potential(&h, xi, &probes)?;
    out.checks
        .push(Check::flag("dress.samples", !result.samples.is_empty()));
    out.checks.push(Check::at_most(
        "dress.hopf",
        result.max_hopf_residual,
        cfg.tolerances.hopf,
    ));
    out.checks.push(Check::at_most(
        "dress.component_ode",
        result.max_component_ode_residual,
        cfg.tolerances.component_ode,
    ));
    let report = DressReport {
        tolerances: &cfg.tolerances,
        dressing: h,
        result,
    };
    write_json(dir, "dress_report.json", &report, out)
}

fn run_isotropy(cfg: &JobConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let xi = cfg.potential.as_ref().expect("validated");
    let report = isotropy_verdict(xi, cfg.n_max.unwrap_or(DEFAULT_N_MAX))?;
    if let Some(v) = cfg.expect_verdict {
        out.checks
            .push(Check::flag("isotropy.verdict", report.verdict == v));
    }
    write_json(dir, "isotropy_report.json", &report, out)
}

#[derive(Serialize)]
struct SweepReport {
    tolerances: Tolerances,
    seed: u64,
    evaluated: usize,
    admitted: Vec<crate::symmetry_lab::SymmetryReport>,
    rejected_rotation_family: usize,
    admitted_outside_rotation_family: usize,
}

fn random_map(rng: &mut ChaCha8Rng) -> Result<MoebiusMap> {
    use rand::Rng;
    let b = Complex64::from_polar(
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let a = Complex64::from_polar(
        (1.0 + b.norm_sqr()).sqrt(),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    MoebiusMap::normalized(a, b)
}

fn obstruction_sweep(
    sweep: &ObstructionSweep,
    seed: u64,
    tol: &Tolerances,
) -> Result<(SweepReport, Vec<Check>)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maps = sweep.maps.clone();
    for _ in 0..sweep.random_maps {
        maps.push(random_map(&mut rng)?);
    }
    for _ in 0..sweep.rotations {
        maps.push(MoebiusMap::rotation(
            rng.gen_range(0.0..std::f64::consts::TAU),
        ));
    }
    let mut admitted = Vec::new();
    let mut missed = 0;
    let mut extra = 0;
    let mut evaluated = 0;
    for m in &maps {
        for &c in &sweep.constants {
            let r = constant_f_obstruction(c, m)?;
            evaluated += 1;
            let rotation = m.b().norm() <= tol.admissible
                && (m.a().norm() - 1.0).abs() <= tol.admissible
                && (c - 1.0).abs() <= tol.admissible;
            match (r.admissible, rotation) {
                (true, false) => extra += 1,
                (false, true) => missed += 1,
                _ => {}
            }
            if r.admissible {
                admitted.push(r);
            }
        }
    }
    let checks = vec![
        Check::at_most("symmetry.admitted_outside_rotations", extra as f64, 0.0),
        Check::at_most("symmetry.rejected_rotations", missed as f64, 0.0),
    ];
    let report = SweepReport {
        tolerances: *tol,
        seed,
        evaluated,
        admitted,
        rejected_rotation_family: missed,
        admitted_outside_rotation_family: extra,
    };
    Ok((report, checks))
}

#[derive(Serialize)]
struct MonodromyReport<'a> {
    tolerances: &'a Tolerances,
    record: crate::symmetry_lab::MonodromyRecord,
    dressed: crate::symmetry_lab::DressedMonodromy,
    equivalence: crate::symmetry_lab::EquivalenceReport,
}

fn run_symmetry(cfg: &JobConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    if let Some(sweep) = &cfg.symmetry.obstruction {
        let (report, checks) = obstruction_sweep(sweep, cfg.seed, &cfg.tolerances)?;
        out.checks.extend(checks);
        write_json(dir, "symmetry_report.json", &report, out)?;
    }
    if let Some(job) = &cfg.symmetry.monodromy {
        let xi = cfg.potential.as_ref().expect("validated");
        let h = cfg.dressing_element();
        let record =
            monodromy_of_automorphic(xi, &job.automorphism, &job.points, DEFAULT_TRUNCATION)?;
        let dressed = dressed_monodromy_law(&h, &record)?;
        let equivalence = symmetry_equivalence_check(xi, &job.automorphism, &h, &job.points)?;
        out.checks.push(Check::at_most(
            "monodromy.spread",
            record.spread,
            cfg.tolerances.monodromy,
        ));
        out.checks.push(Check::at_most(
            "monodromy.rho_law",
            dressed.residual,
            cfg.tolerances.monodromy,
        ));
        out.checks.push(Check::at_most(
            "monodromy.w_plus",
            dressed.w_plus_residual,
            cfg.tolerances.monodromy,
        ));
        out.checks
            .push(Check::flag("monodromy.equivalence", equivalence.agree));
        let report = MonodromyReport {
            tolerances: &cfg.tolerances,
            record,
            dressed,
            equivalence,
        };
        write_json(dir, "monodromy_report.json", &report, out)?;
    }
    Ok(())
}

fn cylinder_exact(z: Complex64, l: Complex64) -> Mat2 {
    let w = z / l;
    Mat2::new(w.cosh(), w.sinh(), w.sinh(), w.cosh())
}

fn loop_circle_gap(g: &MatrixLoop, exact: impl Fn(Complex64) -> Mat2) -> f64 {
    crate::loop_algebra::circle(1.0, 32)
        .map(|l| (g.evaluate_nonzero(l) - exact(l)).max_norm())
        .fold(0.0, f64::max)
}

/// A reduced property suite: every subsystem once, seeded.
pub fn verify_suite(seed: u64, tol: &Tolerances) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let (mut b_res, mut i_res) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let g = sampling::random_loop(&mut rng, 4, 0.5);
        b_res = b_res.max(birkhoff(&g).residual);
        i_res = i_res.max(iwasawa(&g)?.residual);
    }
    checks.push(Check::at_most(
        "factorization.birkhoff",
        b_res,
        tol.factorization,
    ));
    checks.push(Check::at_most(
        "factorization.iwasawa",
        i_res,
        tol.factorization,
    ));

    let cyl = MeromorphicPotential::cylinder();
    let mut gap = 0.0f64;
    for z in [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.3, -0.6),
        Complex64::new(-0.5, 0.5),
    ] {
        let g = g_minus_at(&cyl, z, DEFAULT_TRUNCATION)?;
        gap = gap.max(loop_circle_gap(&g, |l| cylinder_exact(z, l)));
    }
    checks.push(Check::at_most(
        "dpw.cylinder_closed_form",
        gap,
        tol.closed_form,
    ));

    let umbilic = MeromorphicPotential::new(RationalFunction::one(), RationalFunction::z_pow(1));
    let g = g_minus_at(&umbilic, Complex64::new(0.3, 0.2), DEFAULT_TRUNCATION)?;
    let mut action = 0.0f64;
    for _ in 0..5 {
        let h1 = DressingElement::random(&mut rng, 2, 0.5);
        let h2 = DressingElement::random(&mut rng, 2, 0.5);
        let split = |h: &DressingElement, g: &MatrixLoop| {
            dress_point(h, g, DEFAULT_TRUNCATION).ok_or(Error::OutsideBigCell {
                condition: f64::INFINITY,
            })
        };
        let direct = split(&h1.compose(&h2), &g)?.0;
        let stepwise = split(&h1, &split(&h2, &g)?.0)?.0;
        action = action.max(direct.distance(&stepwise));
    }
    checks.push(Check::at_most(
        "dressing.group_action",
        action,
        tol.closed_form,
    ));

    let h = DressingElement::random(&mut rng, 2, 0.5);
    let d = dress_potential(&h, &umbilic, &ProbeGrid::around(Complex64::new(0.0, 0.0)))?;
    checks.push(Check::at_most(
        "dressing.hopf",
        d.max_hopf_residual,
        tol.hopf,
    ));

    let iso = isotropy_verdict(&umbilic, 3)?;
    checks.push(Check::flag(
        "isotropy.umbilic_trivial",
        iso.verdict == Verdict::Trivial,
    ));
    let collapse = b_zero_collapse(&RationalFunction::one(), &RationalFunction::z_pow(1), 3)?;
    checks.push(Check::flag(
        "isotropy.b_zero_collapse",
        collapse.iter().all(|c| c.all_equations_hold),
    ));

    let sweep = ObstructionSweep {
        constants: default_constants(),
        random_maps: 100,
        rotations: 10,
        maps: Vec::new(),
    };
    checks.extend(obstruction_sweep(&sweep, seed, tol)?.1);

    let xi = MeromorphicPotential::new(RationalFunction::z_pow(2), RationalFunction::z_pow(1))
        .with_domain(crate::dpw_core::Domain::Disk)
        .with_base_point(Complex64::new(0.5, 0.0));
    let rot = Automorphism::Moebius(MoebiusMap::rotation(std::f64::consts::TAU / 3.0));
    let points: Vec<Complex64> = (0..3)
        .map(|k| {
            Complex64::new(0.5, 0.0)
                + Complex64::from_polar(0.15, std::f64::consts::TAU * k as f64 / 3.0)
        })
        .collect();
    let record = monodromy_of_automorphic(&xi, &rot, &points, DEFAULT_TRUNCATION)?;
    let h = DressingElement::random(&mut rng, 2, 0.5);
    let law = dressed_monodromy_law(&h, &record)?;
    checks.push(Check::at_most(
        "symmetry.rho_law",
        law.residual,
        tol.monodromy,
    ));
    let eq = symmetry_equivalence_check(&xi, &rot, &h, &points)?;
    checks.push(Check::flag("symmetry.equivalence", eq.agree));
    Ok(checks)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    tolerances: &'a Tolerances,
    seed: u64,
    passed: bool,
    checks: &'a [Check],
}

fn run_verify(cfg: &JobConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let checks = verify_suite(cfg.seed, &cfg.tolerances)?;
    let report = VerifyReport {
        tolerances: &cfg.tolerances,
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        checks: &checks,
    };
    write_json(dir, "verify_report.json", &report, out)?;
    out.checks.extend(checks);
    Ok(())
}

/// Runs `command`, writing artifacts under the configured output directory.
pub fn run(command: Command, cfg: &JobConfig) -> Result<Outcome> {
    let dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let mut out = Outcome::default();
    match command {
        Command::Build => run_build(cfg, &dir, &mut out)?,
        Command::Dress => run_dress(cfg, &dir, &mut out)?,
        Command::Isotropy => run_isotropy(cfg, &dir, &mut out)?,
        Command::Symmetry => run_symmetry(cfg, &dir, &mut out)?,
        Command::Verify => run_verify(cfg, &dir, &mut out)?,
    }
    Ok(out)
}

/// Loads the config, applies flag overrides and returns the exit status.
pub fn main_with(args: Args) -> i32 {
    let mut cfg = match JobConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return 2;
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.output_dir = Some(o);
    }
    if let Err(e) = cfg.validate(args.command) {
        eprintln!("error: invalid config: {e}");
        return 2;
    }
    match run(args.command, &cfg) {
        Ok(outcome) => {
            for a in &outcome.artifacts {
                eprintln!("wrote {}", a.display());
            }
            if outcome.passed() {
                0
            } else {
                eprintln!("failed checks: {}", outcome.failures().join(", "));
                1
            }
        }
        Err(e) => {
            eprintln!("error: {:?} failed: {e}", args.command);
            1
        }
    }
}
