use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use depthcal_core::camera::{Intrinsics, IntrinsicsSpec};
use depthcal_core::metrics::{evaluate, MetricReport};
use depthcal_core::monodromy::{
    certify_with_seeds, monodromy_solve, reanchor, seed_pair, MonodromySettings, StartBundle,
};
use depthcal_core::polysys::{shipped, CertificateReport, ParametricSystem};
use depthcal_core::robust::{msac_calibrate, MsacSettings};
use depthcal_core::scene::{Observations, SceneConfig};
use depthcal_core::solver::{pixel_spec_for, run_trial, simulate_trial, system_for_coloring, OnlineSolver};
use depthcal_core::taxonomy::{
    brute_force_isomorphic, coloring_to_selection, enumerate_orbits, feasibility, feasibility_table, pairs,
    EquationSelection, OrbitClass,
};
use depthcal_core::tracker::TrackSettings;
use depthcal_core::Error;

use crate::manifest::ManifestBuilder;
use crate::Global;

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InvalidInput>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Infeasible(_)
                | Error::InvalidSpec(_)
                | Error::InvalidColoring(_)
                | Error::ShearWithoutV
                | Error::SizeMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::TooLarge(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn parse_spec(tag: &str) -> Result<IntrinsicsSpec> {
    IntrinsicsSpec::parse_tag(tag).map_err(|e| invalid(e.to_string()))
}

fn parse_camera(s: &str) -> Result<Intrinsics> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid(format!("camera `{s}`: {e}")))?;
    let [f, g, u, v, sk] = vals[..] else {
        return Err(invalid(format!("camera `{s}` needs five values f,g,u,v,s")));
    };
    Ok(Intrinsics::new(f, g, u, v, sk))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| invalid(format!("list `{s}`: {e}"))))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn table(g: &Global) -> Result<()> {
    let m = ManifestBuilder::new("table", serde_json::json!({}), g);
    let mut w = csv::Writer::from_writer(writer(g.out.as_deref())?);
    w.write_record(["spec", "M", "N", "L", "n", "avail", "drop", "raw", "classes", "status"])?;
    for r in feasibility_table() {
        let classes = match r.n_min {
            Some(n) => enumerate_orbits(n, r.views, r.n_drop)?.len().to_string(),
            None => String::new(),
        };
        w.write_record([
            r.spec.tag(),
            r.views.to_string(),
            r.n_min.map_or(String::new(), |n| n.to_string()),
            r.l.to_string(),
            r.n.to_string(),
            r.n_avail.to_string(),
            r.n_drop.to_string(),
            r.raw_colorings.to_string(),
            classes,
            r.status.to_string(),
        ])?;
    }
    w.flush()?;
    m.finish(g.out.as_deref())
}

#[derive(Args, Debug, Serialize)]
pub struct EnumerateArgs {
    /// Intrinsics tag such as `fguvs`, `fguv0` or `11000`.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    /// Cross-check the classes with the factorial isomorphism oracle (N ≤ 5).
    #[arg(long)]
    pub brute_check: bool,
    /// Attach a rank certificate to every class.
    #[arg(long)]
    pub certify: bool,
}

#[derive(Debug, Serialize)]
struct ClassRecord {
    n: usize,
    m: usize,
    drop: usize,
    class_id: usize,
    /// `[p, q, color]` per point pair, points counted from 1.
    coloring: Vec<(usize, usize, char)>,
    spec: String,
    code: String,
    dropped: Vec<String>,
    orbit_size: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    certified: Option<bool>,
}

fn classes_for(spec: &IntrinsicsSpec, views: usize) -> Result<(usize, usize, Vec<OrbitClass>)> {
    let row = feasibility(spec, views);
    let Some(n) = row.n_min else {
        return Err(Error::Infeasible(format!("{} in {views} views", spec.tag())).into());
    };
    Ok((n, row.n_drop, enumerate_orbits(n, views, row.n_drop)?))
}

fn dropped_equations(sel: &EquationSelection, n: usize, views: usize) -> Vec<String> {
    EquationSelection::full(n, views)
        .equations
        .iter()
        .filter(|e| !sel.contains(e))
        .map(|e| e.to_string())
        .collect()
}

pub fn enumerate(g: &Global, a: &EnumerateArgs) -> Result<()> {
    let m = ManifestBuilder::new("enumerate", serde_json::to_value(a)?, g);
    let spec = parse_spec(&a.spec)?;
    let (n, drop, classes) = classes_for(&spec, a.views)?;
    if a.brute_check {
        if n > 5 {
            return Err(invalid(format!("brute-force check needs N ≤ 5, this problem has N = {n}")));
        }
        brute_check(&spec, a.views, &classes)?;
        eprintln!("brute-force check passed");
    }
    let mut w = writer(g.out.as_deref())?;
    for (id, c) in classes.iter().enumerate() {
        let rep = &c.representative;
        let certified = if a.certify {
            let sys = system_for_coloring(rep, &spec)?;
            Some(certify_with_seeds(&sys, g.seed, 3)?.passed)
        } else {
            None
        };
        let rec = ClassRecord {
            n,
            m: a.views,
            drop,
            class_id: id,
            coloring: pairs(n).into_iter().map(|(p, q)| (p + 1, q + 1, rep.color(p, q).as_char())).collect(),
            spec: spec.tag(),
            code: rep.to_string(),
            dropped: dropped_equations(&coloring_to_selection(rep), n, a.views),
            orbit_size: c.orbit_size,
            certified,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    w.flush()?;
    eprintln!("{} classes", classes.len());
    m.finish(g.out.as_deref())
}

/// Representatives pairwise non-isomorphic under the factorial oracle and
/// orbit sizes summing to the raw count together prove the partition.
fn brute_check(spec: &IntrinsicsSpec, views: usize, classes: &[OrbitClass]) -> Result<()> {
    for (i, a) in classes.iter().enumerate() {
        for b in &classes[i + 1..] {
            if brute_force_isomorphic(&a.representative, &b.representative)? {
                bail!("classes {} and {} are isomorphic", a.representative, b.representative);
            }
        }
    }
    let total: u64 = classes.iter().map(|c| c.orbit_size).sum();
    let raw = feasibility(spec, views).raw_colorings;
    if total != raw {
        bail!("orbits cover {total} colorings, expected {raw}");
    }
    Ok(())
}

/// Path-tracker overrides; unset flags keep the library defaults.
#[derive(Args, Debug, Serialize)]
pub struct TrackArgs {
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub max_newton_iters: Option<usize>,
    #[arg(long)]
    pub min_step: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

impl TrackArgs {
    fn apply(&self, t: &mut TrackSettings) {
        if let Some(v) = self.newton_tol {
            t.newton_tol = v;
        }
        if let Some(v) = self.max_newton_iters {
            t.max_newton_iters = v;
        }
        if let Some(v) = self.min_step {
            t.min_step = v;
        }
        if let Some(v) = self.max_step {
            t.max_step = v;
        }
        if let Some(v) = self.max_steps {
            t.max_steps = v;
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SystemArgs {
    /// Shipped relaxation: 11000, fguv0, ffuv0 or fguvs.
    #[arg(long, conflicts_with_all = ["spec", "class"])]
    pub relaxation: Option<String>,
    /// Intrinsics tag, used with --class.
    #[arg(long, requires = "class")]
    pub spec: Option<String>,
    /// Class id from `enumerate`.
    #[arg(long, requires = "spec")]
    pub class: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub views: usize,
}

fn resolve_system(a: &SystemArgs) -> Result<(String, ParametricSystem)> {
    if let (Some(tag), Some(id)) = (&a.spec, a.class) {
        let spec = parse_spec(tag)?;
        let (_, _, classes) = classes_for(&spec, a.views)?;
        let c = classes
            .get(id)
            .ok_or_else(|| invalid(format!("class {id} out of range, {} classes", classes.len())))?;
        let sys = system_for_coloring(&c.representative, &spec)?;
        return Ok((format!("{}#{id}", spec.tag()), sys));
    }
    let name = a.relaxation.as_deref().unwrap_or("11000");
    let r = shipped(name).ok_or_else(|| invalid(format!("unknown relaxation `{name}`")))?;
    Ok((r.name.to_string(), r.build()))
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Synthetic points to try before reporting failure.
    #[arg(long, default_value_t = 3)]
    pub tries: usize,
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    system: &'a str,
    equations: usize,
    unknowns: usize,
    certificate: CertificateReport,
}

pub fn certify(g: &Global, a: &CertifyArgs) -> Result<()> {
    let m = ManifestBuilder::new("certify", serde_json::to_value(a)?, g);
    let (name, sys) = resolve_system(&a.system)?;
    let rep = certify_with_seeds(&sys, g.seed, a.tries)?;
    eprintln!("{name}: certificate {}", if rep.passed { "passed" } else { "failed" });
    write_json(
        g.out.as_deref(),
        &CertifyOutput { system: &name, equations: sys.num_equations(), unknowns: sys.num_unknowns(), certificate: rep },
    )?;
    m.finish(g.out.as_deref())
}

#[derive(Args, Debug, Serialize)]
pub struct SolveOfflineArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 5)]
    pub stall_loops: usize,
    #[arg(long, default_value_t = 500)]
    pub max_loops: usize,
    /// Stop once this many solutions are known.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub loop_scale: f64,
    #[command(flatten)]
    pub track: TrackArgs,
}

pub fn solve_offline(g: &Global, a: &SolveOfflineArgs) -> Result<()> {
    let m = ManifestBuilder::new("solve-offline", serde_json::to_value(a)?, g);
    let out = g.out.as_deref().ok_or_else(|| invalid("solve-offline needs --out for the bundle"))?;
    let (name, sys) = resolve_system(&a.system)?;
    let mut settings = MonodromySettings {
        stall_loops: a.stall_loops,
        max_loops: a.max_loops,
        target: a.target,
        loop_scale: a.loop_scale,
        seed: g.seed,
        ..Default::default()
    };
    a.track.apply(&mut settings.track);
    let cert = certify_with_seeds(&sys, g.seed, 3)?;
    let (p0, x0) = seed_pair(&sys, g.seed)?;
    let set = monodromy_solve(&sys, (&p0, &x0), &settings)?;
    let found = set.len();
    let moved = reanchor(&sys, &set, &settings);
    let mut bundle = StartBundle::new(&sys, &moved, &settings, Some(cert.clone()));
    let worst = bundle.verify(&sys);
    // bundles are data files; compact keeps them a few MB at most
    let mut w = writer(Some(out))?;
    serde_json::to_writer(&mut w, &bundle)?;
    w.flush()?;
    eprintln!(
        "{name}: {found} solutions, {} in the bundle, worst residual {worst:.1e}, certificate {}",
        bundle.solutions.len(),
        if cert.passed { "passed" } else { "failed" }
    );
    println!("{}", serde_json::json!({ "system": name, "solutions": bundle.solutions.len(), "discovered": found, "certificate": cert }));
    m.finish(Some(out))
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Camera prior the scene must satisfy.
    #[arg(long, default_value = "fguvs")]
    pub spec: String,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Camera f,g,u,v,s in pixels.
    #[arg(long, default_value = "330,310,300,250,10")]
    pub camera: String,
    /// Also write the noisy pixels alone as `[[view][point][x,y]]`.
    #[arg(long)]
    pub tracks_out: Option<PathBuf>,
}

pub fn simulate(g: &Global, a: &SimulateArgs) -> Result<()> {
    let m = ManifestBuilder::new("simulate", serde_json::to_value(a)?, g);
    let spec = parse_spec(&a.spec)?;
    if a.sigma < 0.0 {
        return Err(invalid("sigma must be non-negative"));
    }
    let config = SceneConfig::default()
        .with_points(a.points)
        .with_views(a.views)
        .with_intrinsics(parse_camera(&a.camera)?);
    let trial = simulate_trial(&spec, &config, a.sigma, g.seed)?;
    if let Some(p) = &a.tracks_out {
        write_json(Some(p), &trial.observations.pixels)?;
    }
    write_json(
        g.out.as_deref(),
        &serde_json::json!({
            "scene": trial.scene,
            "observations": trial.observations,
            "camera": trial.scene.intrinsics,
            "pixel_spec": trial.pixel_spec,
        }),
    )?;
    m.finish(g.out.as_deref())
}

#[derive(Args, Debug, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// JSON `[[view][point][x,y]]`.
    #[arg(long)]
    pub tracks: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Known intrinsics f,g,u,v,s in pixels; only the slots the bundle
    /// treats as known are read.
    #[arg(long)]
    pub camera: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub huber_delta: f64,
    #[arg(long, default_value_t = 4.0)]
    pub inlier_threshold: f64,
    #[arg(long, default_value_t = 640.0)]
    pub width: f64,
    #[arg(long, default_value_t = 480.0)]
    pub height: f64,
    #[command(flatten)]
    pub track: TrackArgs,
}

fn solver_for(bundle: StartBundle, camera: Option<&str>, track: &TrackArgs) -> Result<OnlineSolver> {
    let spec = *bundle.system()?.spec();
    let pixel_spec = match camera {
        Some(c) => pixel_spec_for(&spec, &parse_camera(c)?)?,
        // the bundle's known values are normalized; only a zero skew carries over
        None if spec.mask()[..4].iter().any(|s| s.known().is_some()) => {
            return Err(invalid(format!("bundle {} fixes intrinsics; pass them with --camera", spec.tag())));
        }
        None => spec,
    };
    let mut solver = OnlineSolver::new(bundle, pixel_spec)?;
    track.apply(&mut solver.track);
    Ok(solver)
}

pub fn calibrate(g: &Global, a: &CalibrateArgs) -> Result<()> {
    let m = ManifestBuilder::new("calibrate", serde_json::to_value(a)?, g).input(&a.bundle).input(&a.tracks);
    let bundle: StartBundle = read_json(&a.bundle)?;
    let solver = solver_for(bundle, a.camera.as_deref(), &a.track)?;
    let pixels: Vec<Vec<[f64; 2]>> = read_json(&a.tracks)?;
    if pixels.iter().any(|v| v.len() != pixels[0].len()) {
        return Err(invalid("every view must list the same tracks"));
    }
    let tracks = Observations::new(pixels, (a.width, a.height));
    let settings = MsacSettings {
        max_iterations: a.iters,
        huber_delta: a.huber_delta,
        inlier_threshold: a.inlier_threshold,
        seed: g.seed,
    };
    let res = msac_calibrate(&tracks, &solver, &settings)?;
    let k = res.best.intrinsics;
    eprintln!(
        "f {:.3}  g {:.3}  u {:.3}  v {:.3}  s {:.3}\nscore {:.4}  inliers {}/{}  best iteration {} of {}",
        k.f,
        k.g,
        k.u,
        k.v,
        k.s,
        res.score,
        res.inliers,
        tracks.num_points(),
        res.best_iteration,
        res.iterations
    );
    write_json(g.out.as_deref(), &res)?;
    m.finish(g.out.as_deref())
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Trials per noise level.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1.0")]
    pub sigmas: String,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Camera f,g,u,v,s; slots the bundle knows are forced to its priors.
    #[arg(long, default_value = "330,310,300,250,10")]
    pub camera: String,
    /// MSAC iterations over all points; 0 solves the first N points directly.
    #[arg(long, default_value_t = 0)]
    pub msac_iters: usize,
    #[command(flatten)]
    pub track: TrackArgs,
}

#[derive(Serialize)]
struct EvalRow {
    seed: u64,
    sigma: f64,
    solver: String,
    delta_fg: Option<f64>,
    delta_uv: Option<f64>,
    delta_s: Option<f64>,
    re: Option<f64>,
    re_gt: Option<f64>,
    eps_r: Option<f64>,
    eps_c: Option<f64>,
    status: String,
}

fn eval_trial(
    solver: &OnlineSolver,
    spec: &IntrinsicsSpec,
    config: &SceneConfig,
    sigma: f64,
    seed: u64,
    msac_iters: usize,
) -> depthcal_core::Result<MetricReport> {
    let trial = simulate_trial(spec, config, sigma, seed)?;
    let track = solver.track;
    let mut solver = OnlineSolver::new(solver.bundle().clone(), trial.pixel_spec)?;
    solver.track = track;
    if msac_iters == 0 {
        return run_trial(&solver, &trial).map(|(_, rep)| rep);
    }
    let settings = MsacSettings { max_iterations: msac_iters, seed, ..Default::default() };
    let res = msac_calibrate(&trial.observations, &solver, &settings)?;
    let obs = trial.observations.subset(&res.sample);
    evaluate(&res.best, &obs, &trial.scene.subset(&res.sample))
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    let m = ManifestBuilder::new("eval", serde_json::to_value(a)?, g).input(&a.bundle);
    let sigmas = parse_list(&a.sigmas)?;
    if sigmas.iter().any(|s| *s < 0.0) {
        return Err(invalid("sigmas must be non-negative"));
    }
    let bundle: StartBundle = read_json(&a.bundle)?;
    // each trial brings its own pixel priors
    let spec = *bundle.system()?.spec();
    let mut solver = OnlineSolver::new(bundle, spec)?;
    a.track.apply(&mut solver.track);
    if a.points < solver.n_points() {
        return Err(invalid(format!("the bundle needs {} points per trial", solver.n_points())));
    }
    let config = SceneConfig::default()
        .with_points(a.points)
        .with_views(solver.n_views())
        .with_intrinsics(parse_camera(&a.camera)?);
    let mut w = csv::Writer::from_writer(writer(g.out.as_deref())?);
    for &sigma in &sigmas {
        for t in 0..a.trials {
            let seed = g.seed.wrapping_add(t as u64);
            let row = match eval_trial(&solver, &spec, &config, sigma, seed, a.msac_iters) {
                Ok(r) => EvalRow {
                    seed,
                    sigma,
                    solver: spec.tag(),
                    delta_fg: Some(r.delta_fg),
                    delta_uv: Some(r.delta_uv),
                    delta_s: Some(r.delta_s),
                    re: Some(r.re),
                    re_gt: Some(r.re_gt),
                    eps_r: Some(r.eps_r),
                    eps_c: Some(r.eps_c),
                    status: "ok".into(),
                },
                Err(e) => EvalRow {
                    seed,
                    sigma,
                    solver: spec.tag(),
                    delta_fg: None,
                    delta_uv: None,
                    delta_s: None,
                    re: None,
                    re_gt: None,
                    eps_r: None,
                    eps_c: None,
                    status: format!("failed: {e}"),
                },
            };
            w.serialize(row)?;
        }
    }
    w.flush()?;
    m.finish(g.out.as_deref())
}
