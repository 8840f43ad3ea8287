//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance` runs everything; pass criterion
//! numbers after `--` to run a subset. Offline bundles for the larger
//! relaxations are read from `data/bundles/<name>.json` (or the directory in
//! `DEPTHCAL_BUNDLE_DIR`) and produced by `depthcal solve-offline`.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use depthcal_core::camera::{omega_direct, omega_from_params, omega_params_of, Intrinsics, IntrinsicsSpec};
use depthcal_core::monodromy::{
    certify_with_seeds, instance_from_scene, monodromy_solve, reanchor, seed_pair, MonodromySettings,
    SolutionIndex, SolutionSet, StartBundle,
};
use depthcal_core::polysys::{
    build_general, certify_minimal, evaluate, jacobian_p, jacobian_x, shipped, shipped_relaxations, ParametricSystem,
};
use depthcal_core::scene::{generate_degenerate_scene, project, SceneConfig};
use depthcal_core::slp::C64;
use depthcal_core::metrics;
use depthcal_core::robust::{msac_calibrate, MsacSettings};
use depthcal_core::solver::{camera_for_spec, pixel_spec_for, run_trial, simulate_trial, OnlineSolver, Trial};
use depthcal_core::taxonomy::{
    brute_force_isomorphic, enumerate_classes, feasibility, feasibility_table, isomorphic, num_pairs, Color, Coloring,
    EquationSelection,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn calibrated_system() -> ParametricSystem {
    shipped("11000").unwrap().build()
}

/// Calibrated solution sets for seeds 1, 2, 3.
fn calibrated_runs() -> &'static Vec<(u64, Result<SolutionSet, String>)> {
    static RUNS: OnceLock<Vec<(u64, Result<SolutionSet, String>)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let sys = calibrated_system();
        (1..=3)
            .map(|seed| {
                let run = seed_pair(&sys, seed).and_then(|(p0, x0)| {
                    let settings = MonodromySettings { seed, ..Default::default() };
                    monodromy_solve(&sys, (&p0, &x0), &settings)
                });
                (seed, run.map_err(|e| e.to_string()))
            })
            .collect()
    })
}

fn calibrated_bundle() -> Result<StartBundle, String> {
    let sys = calibrated_system();
    let (_, first) = &calibrated_runs()[0];
    let set = first.as_ref().map_err(Clone::clone)?;
    let settings = MonodromySettings { seed: 1, ..Default::default() };
    Ok(StartBundle::new(&sys, &reanchor(&sys, set, &settings), &settings, None))
}

fn bundle_dir() -> PathBuf {
    std::env::var_os("DEPTHCAL_BUNDLE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/bundles")))
}

fn load_bundle(name: &str) -> Result<StartBundle, String> {
    let path = bundle_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("no bundle at {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn criterion_1() -> Outcome {
    let mut counts = Vec::new();
    let mut worst: f64 = 0.0;
    for (seed, run) in calibrated_runs() {
        match run {
            Ok(set) => {
                counts.push(set.len());
                worst = set.residuals.iter().fold(worst, |a, &b| a.max(b));
            }
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        }
    }
    outcome(
        counts.iter().all(|&c| c == 640) && worst < 1e-8,
        format!("counts {counts:?} for seeds 1..3, worst residual {worst:.1e}"),
    )
}

fn criterion_2() -> Outcome {
    let sys = calibrated_system();
    let Ok(set) = &calibrated_runs()[0].1 else {
        return outcome(false, "no calibrated solution set");
    };
    let mut index = SolutionIndex::new(sys.num_unknowns(), 1e-6, 0);
    for x in &set.solutions {
        index.insert(x.clone());
    }
    let flip_idx: Vec<usize> = (0..sys.n_points()).filter_map(|p| sys.depth_index(1, p)).collect();
    let flip = |x: &[C64]| {
        let mut y = x.to_vec();
        for &k in &flip_idx {
            y[k] = -y[k];
        }
        y
    };
    let partner: Vec<Option<usize>> = set.solutions.iter().map(|x| index.find(&flip(x))).collect();
    let involution = partner
        .iter()
        .enumerate()
        .all(|(i, j)| matches!(j, Some(j) if *j != i && partner[*j] == Some(i)));
    let matched = partner.iter().filter(|j| j.is_some()).count();
    let pairs = matched / 2;
    outcome(
        involution && pairs == 320 && set.len() == 640,
        format!("{pairs} pairs under flipping the view-2 depths, {matched} of {} solutions matched", set.len()),
    )
}

fn criterion_3() -> Outcome {
    match enumerate_classes(6, 3, 8) {
        Ok(c) => outcome(c.len() == 3313, format!("{} classes for N=6, M=3, drop 8 (target 3313)", c.len())),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn random_coloring(n: usize, rng: &mut ChaCha8Rng) -> Coloring {
    const COLORS: [Color; 4] = [Color::B, Color::R, Color::G, Color::W];
    let colors = (0..num_pairs(n)).map(|_| COLORS[rng.random_range(0..4)]).collect();
    Coloring::new(n, 3, colors).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut disagreements = 0;
    let mut positives = 0;
    for n in [4, 5] {
        for k in 0..200 {
            let a = random_coloring(n, &mut rng);
            let b = if k % 2 == 0 {
                // relabeled copy
                let mut sigma: Vec<usize> = (0..n).collect();
                sigma.shuffle(&mut rng);
                let b = a.permuted(&sigma);
                if rng.random() {
                    b.swapped()
                } else {
                    b
                }
            } else {
                // same color multiset, reshuffled
                let mut colors = a.colors().to_vec();
                colors.shuffle(&mut rng);
                Coloring::new(n, 3, colors).unwrap()
            };
            let fast = isomorphic(&a, &b);
            let slow = brute_force_isomorphic(&a, &b).unwrap();
            positives += slow as usize;
            disagreements += (fast != slow) as usize;
        }
    }
    outcome(disagreements == 0, format!("{disagreements} disagreements on 400 pairs ({positives} isomorphic)"))
}

fn criterion_5() -> Outcome {
    let bundle = match load_bundle("fguv0") {
        Ok(b) => b,
        Err(e) => return outcome(false, e),
    };
    let spec = IntrinsicsSpec::parse_tag("fguv0").unwrap();
    let n_solutions = bundle.solutions.len();
    let mut worst = [0.0f64; 3];
    let mut failures = Vec::new();
    for seed in 0..20 {
        // five points alone admit several exact reconstructions; the other
        // tracks pick the true one, as they do under MSAC
        let result = simulate_trial(&spec, &SceneConfig::default().with_points(20), 0.0, seed).and_then(|trial| {
            let solver = OnlineSolver::new(bundle.clone(), trial.pixel_spec)?;
            let settings = MsacSettings { max_iterations: 1, seed, ..Default::default() };
            let res = msac_calibrate(&trial.observations, &solver, &settings)?;
            metrics::evaluate(&res.best, &trial.observations.subset(&res.sample), &trial.scene.subset(&res.sample))
        });
        match result {
            Ok(r) => {
                worst = [worst[0].max(r.delta_fg), worst[1].max(r.delta_uv), worst[2].max(r.re)];
                if r.delta_fg >= 1e-6 || r.delta_uv >= 1e-6 || r.re >= 1e-6 {
                    failures.push(seed);
                }
            }
            Err(_) => failures.push(seed),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "bundle of {n_solutions}; worst Δfg {:.1e}, Δuv {:.1e}, Re {:.1e}; failed seeds {failures:?}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for r in shipped_relaxations() {
        let ok = certify_with_seeds(&r.build(), 0, 3).map(|c| c.passed).unwrap_or(false);
        pass &= ok;
        parts.push(format!("{} {}", r.name, if ok { "passes" } else { "FAILS" }));
    }
    let spec = IntrinsicsSpec::calibrated();
    let full = build_general(&EquationSelection::full(4, 3), &spec, 4, 3).unwrap();
    let over = seed_pair(&full, 0).and_then(|(p, x)| certify_minimal(&full, &p, &x));
    match over {
        Ok(c) => {
            pass &= !c.passed;
            parts.push(format!(
                "undropped calibrated {} (rank_full {} rank_x {} n {})",
                if c.passed { "passes" } else { "fails" },
                c.rank_full,
                c.rank_x,
                c.n
            ));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("undropped calibrated: {e}"));
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, target) in [("fguv0", 2313), ("fguvs", 2985), ("ffuv0", 16188)] {
        match load_bundle(name) {
            Ok(b) => {
                pass &= b.solutions.len() == target;
                parts.push(format!("{name} {} of {target}", b.solutions.len()));
            }
            Err(_) => {
                pass = false;
                parts.push(format!("{name} no bundle (target {target})"));
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_8() -> Outcome {
    let bundle = match calibrated_bundle() {
        Ok(b) => b,
        Err(e) => return outcome(false, e),
    };
    let sys = calibrated_system();
    let spec = IntrinsicsSpec::calibrated();
    let camera = camera_for_spec(&spec, &SceneConfig::default().intrinsics);
    let pixel_spec = pixel_spec_for(&spec, &camera).unwrap();
    let config = SceneConfig::default().with_points(sys.n_points()).with_intrinsics(camera);
    let mut min_sv = f64::INFINITY;
    let mut low_sv = Vec::new();
    let mut failures = Vec::new();
    for seed in 0..100 {
        let run = generate_degenerate_scene(&config, seed).and_then(|scene| {
            let inst = instance_from_scene(&sys, scene.clone(), pixel_spec)?;
            let cert = certify_minimal(&sys, &inst.params, &inst.solution)?;
            let trial = Trial { observations: project(&scene)?, scene, pixel_spec };
            let solver = OnlineSolver::new(bundle.clone(), pixel_spec)?;
            Ok((cert.min_singular_x, run_trial(&solver, &trial)?.1))
        });
        match run {
            Ok((sv, r)) => {
                min_sv = min_sv.min(sv);
                if sv <= 1e-4 {
                    low_sv.push(seed);
                }
                if r.delta_fg >= 1e-6 || r.delta_uv >= 1e-6 || r.re >= 1e-6 {
                    failures.push(seed);
                }
            }
            Err(_) => failures.push(seed),
        }
    }
    outcome(
        low_sv.is_empty() && failures.is_empty(),
        format!(
            "smallest singular value {min_sv:.2e} over 100 scenes, at or below 1e-4 for seeds {low_sv:?}; \
             inexact or failed solves for seeds {failures:?}"
        ),
    )
}

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Largest entrywise gap between an analytic Jacobian and central
/// differences, relative to the Jacobian's largest entry.
fn fd_gap(sys: &ParametricSystem, x: &[C64], p: &[C64], wrt_x: bool) -> f64 {
    let h = 1e-6;
    let analytic: DMatrix<C64> = if wrt_x { jacobian_x(sys, x, p) } else { jacobian_p(sys, x, p) }.unwrap();
    let scale = analytic.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    let mut gap: f64 = 0.0;
    for j in 0..analytic.ncols() {
        let (mut xp, mut xm, mut pp, mut pm) = (x.to_vec(), x.to_vec(), p.to_vec(), p.to_vec());
        if wrt_x {
            xp[j] += h;
            xm[j] -= h;
        } else {
            pp[j] += h;
            pm[j] -= h;
        }
        let fp = evaluate(sys, &xp, &pp).unwrap();
        let fm = evaluate(sys, &xm, &pm).unwrap();
        for i in 0..analytic.nrows() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            gap = gap.max((fd - analytic[(i, j)]).norm() / scale);
        }
    }
    gap
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut jac_gap: f64 = 0.0;
    for r in shipped_relaxations() {
        let sys = r.build();
        for _ in 0..100 {
            let x: Vec<C64> = (0..sys.num_unknowns()).map(|_| random_c64(&mut rng)).collect();
            let p: Vec<C64> = (0..sys.num_params()).map(|_| random_c64(&mut rng)).collect();
            jac_gap = jac_gap.max(fd_gap(&sys, &x, &p, true)).max(fd_gap(&sys, &x, &p, false));
        }
    }
    let mut omega_gap: f64 = 0.0;
    for _ in 0..1000 {
        let sign = |rng: &mut ChaCha8Rng| if rng.random() { 1.0 } else { -1.0 };
        let k = Intrinsics::new(
            sign(&mut rng) * rng.random_range(100.0..2000.0),
            sign(&mut rng) * rng.random_range(100.0..2000.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-50.0..50.0),
        );
        let direct = omega_direct(&k).unwrap();
        let via = omega_from_params(&omega_params_of(&k).unwrap()).unwrap();
        let scale = direct.amax();
        omega_gap = omega_gap.max((direct - via).amax() / scale);
    }
    outcome(
        jac_gap < 1e-6 && omega_gap < 1e-12,
        format!("Jacobian vs finite differences {jac_gap:.1e}, ω round trip {omega_gap:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let table = feasibility_table();
    let mut pass = true;
    let mut parts = Vec::new();
    let low_l_m2_ok = table
        .iter()
        .filter(|r| r.views == 2 && r.l <= 2)
        .all(|r| r.status.to_string() == "infeasible");
    let low_l = table.iter().filter(|r| r.views == 2 && r.l <= 2).count();
    pass &= low_l_m2_ok && low_l > 0;
    parts.push(format!("{low_l} two-view rows with L ≤ 2 all infeasible: {low_l_m2_ok}"));
    for (tag, n, drop) in [("11000", 4, 1), ("fguv0", 5, 2), ("ffuv0", 5, 3), ("fguvs", 6, 8)] {
        let row = feasibility(&IntrinsicsSpec::parse_tag(tag).unwrap(), 3);
        let ok = row.n_min == Some(n) && row.n_drop == drop;
        pass &= ok;
        parts.push(format!("{tag} N={:?} drop={}", row.n_min, row.n_drop));
    }
    outcome(pass, parts.join(", "))
}

const STRETCH: [u32; 1] = [7];

fn main() {
    let titles: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "calibrated solution count", criterion_1),
        (2, "symmetry orbits", criterion_2),
        (3, "taxonomy class count", criterion_3),
        (4, "isomorphism oracle equivalence", criterion_4),
        (5, "noiseless exactness (fguv0)", criterion_5),
        (6, "minimality certification", criterion_6),
        (7, "path-count stretch targets", criterion_7),
        (8, "degeneracy robustness", criterion_8),
        (9, "numerical hygiene", criterion_9),
        (10, "feasibility table", criterion_10),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut required_failures = Vec::new();
    for (n, title, run) in titles {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        let stretch = if STRETCH.contains(&n) { " (stretch)" } else { "" };
        println!(
            "criterion {n:>2} {}{stretch}: {title}: {} [{:.1}s]",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            start.elapsed().as_secs_f64()
        );
        if !res.pass && stretch.is_empty() {
            required_failures.push(n);
        }
    }
    if !required_failures.is_empty() {
        println!("failed criteria: {required_failures:?}");
        std::process::exit(1);
    }
}
