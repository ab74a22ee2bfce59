//! Parameter parsing and execution for each analysis.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use super::{invalid, Params, RunConfig, RunError, RunResult};
use crate::cocycles::{equalize_2d, exponents, steer_vector, PeriodicCocycle};
use crate::cones::{
    finite_time_exponents, ph_classify, verify_cone_invariance, verify_domination, verify_uniformity, Bundle, Check,
    ConeField, Samples, SplittingEvidence, VerificationReport,
};
use crate::conley::{
    basin_fraction, build_graph, chain_classes, graph_stats, quasi_attractors, BoxGrid, Enclosure, DEFAULT_EDGE_BUDGET,
};
use crate::horseshoe_analysis::{
    base_periodic_point, heteroclinic_scan, isolation_probe, periodic_point, scan_words, shortest_staircase_word,
    ConnectionEvent, SymbolicWord,
};
use crate::linalg;
use crate::linear_models::{invariant_splitting, spectral_classify, Classification, IntegerMatrix, Label};
use crate::maps::{make_map, BuiltMap, DynamicalMap, MapSpec};
use crate::output::{ArtifactSink, Cell, CsvTable};
use crate::rotation::{nonresonance_check, rotation_vector, transitivity_probe};
use crate::shadowing::{build_semiconjugacy, fiber_probe, uniform_points, verify_equivariance};

/// A fully validated analysis, ready to run.
pub enum Plan {
    Classify,
    Semiconjugacy(SemiconjugacyPlan),
    Conley(ConleyPlan),
    Cones(ConesPlan),
    Cocycle(CocyclePlan),
    Rotation(RotationPlan),
    Horseshoe(HorseshoePlan),
}

pub fn plan(config: &RunConfig) -> RunResult<Plan> {
    let mut p = Params::new("/params", Some(&config.params))?;
    let map = config.map.as_ref();
    let dim = map.map(spec_dim).unwrap_or(0);
    let plan = match config.analysis.as_str() {
        "classify" => {
            match map {
                Some(MapSpec::Horseshoe { .. }) => return Err(invalid("/map/kind", "classify needs a torus map")),
                Some(_) => {}
                None => return Err(invalid("/map", "required")),
            }
            Plan::Classify
        }
        "semiconjugacy" => {
            require_torus(map)?;
            Plan::Semiconjugacy(SemiconjugacyPlan::parse(&mut p, dim)?)
        }
        "conley" => Plan::Conley(ConleyPlan::parse(&mut p, false)?),
        "basin" => Plan::Conley(ConleyPlan::parse(&mut p, true)?),
        "cones" => Plan::Cones(ConesPlan::parse(&mut p, dim)?),
        "cocycle" => Plan::Cocycle(CocyclePlan::parse(&mut p)?),
        "rotation" => {
            require_torus(map)?;
            Plan::Rotation(RotationPlan::parse(&mut p, dim)?)
        }
        "horseshoe" => {
            if !matches!(map, Some(MapSpec::Horseshoe { .. })) {
                return Err(invalid("/map/kind", "horseshoe analysis needs a horseshoe map"));
            }
            Plan::Horseshoe(HorseshoePlan::parse(&mut p)?)
        }
        other => return Err(invalid("/analysis", format!("unknown analysis '{other}'"))),
    };
    p.finish()?;
    Ok(plan)
}

fn require_torus(map: Option<&MapSpec>) -> RunResult<()> {
    match map {
        Some(MapSpec::Horseshoe { .. }) => Err(invalid("/map/kind", "this analysis needs a torus map")),
        Some(_) => Ok(()),
        None => Err(invalid("/map", "required")),
    }
}

fn build(config: &RunConfig) -> RunResult<BuiltMap> {
    let spec = config.map.as_ref().ok_or_else(|| invalid("/map", "required"))?;
    Ok(make_map(spec)?)
}

fn spec_dim(spec: &MapSpec) -> usize {
    match spec {
        MapSpec::Linear { matrix } | MapSpec::Da { matrix, .. } => matrix.dim(),
        MapSpec::Translation { vector } => vector.len(),
        MapSpec::Denjoy { .. } => 1,
        MapSpec::PseudoRotation { .. } => 2,
        MapSpec::Horseshoe { .. } => 3,
    }
}

fn check_dim(pointer: &str, v: &[f64], d: usize) -> RunResult<()> {
    if v.len() != d {
        return Err(invalid(pointer, format!("expected {d} coordinates, got {}", v.len())));
    }
    Ok(())
}

impl Plan {
    pub fn execute(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        match self {
            Plan::Classify => run_classify(config, sink),
            Plan::Semiconjugacy(p) => p.run(config, sink),
            Plan::Conley(p) => p.run(config, sink),
            Plan::Cones(p) => p.run(config, sink),
            Plan::Cocycle(p) => p.run(sink),
            Plan::Rotation(p) => p.run(config, sink),
            Plan::Horseshoe(p) => p.run(config, sink),
        }
    }
}

// ---------------------------------------------------------------- classify

fn linear_part(config: &RunConfig) -> RunResult<IntegerMatrix> {
    match config.map.as_ref() {
        Some(MapSpec::Linear { matrix }) | Some(MapSpec::Da { matrix, .. }) => Ok(matrix.clone()),
        _ => {
            let built = build(config)?;
            let torus = built.torus().ok_or_else(|| invalid("/map/kind", "needs a torus map"))?;
            Ok(torus.linear_part().clone())
        }
    }
}

fn run_classify(config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
    let m = linear_part(config)?;
    let s = spectral_classify(&m)?;
    let splitting = if s.classification == Classification::NonPartiallyHyperbolic {
        None
    } else {
        let sp = invariant_splitting(&s, &m)?;
        Some(json!({
            "stable_dim": sp.dim_of(Label::Stable),
            "center_dim": sp.dim_of(Label::Center),
            "unstable_dim": sp.dim_of(Label::Unstable),
            "basis_condition": sp.basis_condition,
        }))
    };
    sink.json(
        "spectrum.json",
        &json!({
            "matrix": m.rows(),
            "char_poly": s.char_poly,
            "eigenvalues": s.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "moduli": s.moduli,
            "classification": s.classification.as_str(),
            "irreducible_over_rationals": s.irreducible_over_rationals,
            "splitting": splitting,
        }),
    )?;
    Ok(())
}

// ----------------------------------------------------------- semiconjugacy

pub struct SemiconjugacyPlan {
    tol: f64,
    samples: usize,
    fiber: Option<FiberParams>,
}

struct FiberParams {
    point: Vec<f64>,
    samples: usize,
    radius: f64,
}

impl SemiconjugacyPlan {
    fn parse(p: &mut Params, dim: usize) -> RunResult<Self> {
        let tol = p.positive("tol", 1e-8)?;
        let samples = p.count("samples", 1000)?;
        let fiber = match p.child("fiber")? {
            None => None,
            Some(mut f) => {
                let point = f.reals("point")?.ok_or_else(|| invalid("/params/fiber/point", "required"))?;
                check_dim("/params/fiber/point", &point, dim)?;
                let fp = FiberParams { point, samples: f.count("samples", 32)?, radius: f.positive("radius", 3e-7)? };
                f.finish()?;
                Some(fp)
            }
        };
        Ok(Self { tol, samples, fiber })
    }

    fn run(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        let built = build(config)?;
        let map = built.torus().expect("checked during planning");
        let semi = build_semiconjugacy(map, self.tol)?;
        let report = verify_equivariance(&semi, self.samples, config.seed())?;
        let d = map.dim();
        let mut header: Vec<String> = vec!["index".into()];
        header.extend((0..d).map(|k| format!("x{k}")));
        header.extend((0..d).map(|k| format!("hx{k}")));
        header.push("residual".into());
        let mut table = CsvTable::new(header);
        for r in &report.rows {
            let mut row = vec![Cell::from(r.index)];
            row.extend(r.x.iter().map(|v| Cell::from(*v)));
            row.extend(r.hx.iter().map(|v| Cell::from(*v)));
            row.push(Cell::from(r.residual));
            table.push(row);
        }
        sink.json(
            "semiconjugacy.json",
            &json!({
                "mu": semi.mu,
                "kappa": semi.kappa,
                "depth": semi.depth,
                "tail_bound": semi.tail_bound,
                "shadow_bound": semi.shadow_bound,
                "tol": self.tol,
                "equivariance": report,
                "residual_within_bound": report.max_residual <= report.residual_bound,
                "shadow_within_bound": report.max_shadow_distance <= report.shadow_bound,
            }),
        )?;
        sink.csv("equivariance.csv", &table)?;
        if let Some(f) = &self.fiber {
            let fr = fiber_probe(&semi, &f.point, f.samples, f.radius, config.seed())?;
            sink.json("fiber.json", &json!({ "point": f.point, "radius": f.radius, "report": fr }))?;
        }
        Ok(())
    }
}

// ------------------------------------------------------------ conley/basin

pub struct ConleyPlan {
    resolution: usize,
    epsilon: Option<f64>,
    enclosure: String,
    lipschitz: Option<f64>,
    rounds: usize,
    basin: Option<BasinParams>,
}

struct BasinParams {
    samples: usize,
    horizon: usize,
    settle: usize,
}

impl ConleyPlan {
    fn parse(p: &mut Params, basin: bool) -> RunResult<Self> {
        let resolution = p.count("resolution", 32)?;
        let epsilon = p.f64_opt("epsilon")?;
        if epsilon.is_some_and(|e| !(e >= 0.0 && e.is_finite())) {
            return Err(invalid("/params/epsilon", "must be a non-negative real"));
        }
        let enclosure = p.string("enclosure", "componentwise")?;
        if !["componentwise", "lipschitz"].contains(&enclosure.as_str()) {
            return Err(invalid("/params/enclosure", "must be 'componentwise' or 'lipschitz'"));
        }
        let lipschitz = p.f64_opt("lipschitz")?;
        if lipschitz.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return Err(invalid("/params/lipschitz", "must be positive"));
        }
        let rounds = p.usize("trapping_rounds", crate::conley::MAX_GROWTH_ROUNDS)?;
        let basin = if basin {
            let samples = p.count("samples", 10_000)?;
            let horizon = p.count("horizon", 400)?;
            let settle = p.count("settle", 50)?;
            if settle >= horizon {
                return Err(invalid("/params/settle", "must be smaller than horizon"));
            }
            Some(BasinParams { samples, horizon, settle })
        } else {
            None
        };
        Ok(Self { resolution, epsilon, enclosure, lipschitz, rounds, basin })
    }

    fn run(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        let built = build(config)?;
        let map = built.as_dynamical();
        let grid = BoxGrid::for_domain(map.domain(), self.resolution)?;
        let epsilon = self.epsilon.unwrap_or(1.0 / self.resolution as f64);
        let enclosure = match self.enclosure.as_str() {
            "lipschitz" => Enclosure::Lipschitz(self.lipschitz.unwrap_or_else(|| map.lipschitz_hint())),
            _ => match map.component_bound() {
                Some(m) => Enclosure::Componentwise(m),
                None => return Err(invalid("/params/enclosure", "map has no componentwise derivative bound")),
            },
        };
        let lipschitz = self.lipschitz.unwrap_or_else(|| enclosure.lipschitz());
        let graph = build_graph(map, &grid, epsilon, enclosure, DEFAULT_EDGE_BUDGET)?;
        let decomp = chain_classes(&graph);
        let attractors = quasi_attractors(&decomp, map, &grid, lipschitz, self.rounds);

        let mut table = CsvTable::new(["box_index", "class_id", "recurrent", "lyapunov"]);
        for i in 0..graph.node_count() {
            table.push(vec![
                Cell::from(i),
                Cell::from(decomp.class_of[i]),
                Cell::from(decomp.recurrent[i]),
                Cell::from(decomp.lyapunov[i]),
            ]);
        }
        sink.csv("classes.csv", &table)?;
        sink.json("graph_stats.json", &graph_stats(&graph, &decomp))?;
        let trapping: Vec<_> = attractors
            .iter()
            .map(|a| {
                json!({
                    "class": a.class,
                    "boxes": a.boxes.len(),
                    "exterior": a.exterior,
                    "certificate": a.certificate,
                })
            })
            .collect();
        let interior = attractors.iter().filter(|a| !a.exterior).count();
        sink.json(
            "trapping.json",
            &json!({ "quasi_attractors": trapping, "interior_count": interior, "unique": interior == 1 }),
        )?;

        if let Some(b) = &self.basin {
            let mut rows = Vec::new();
            for a in attractors.iter().filter(|a| !a.exterior) {
                let est = basin_fraction(map, &grid, &a.boxes, b.samples, b.horizon, b.settle, config.seed())?;
                rows.push(json!({ "class": a.class, "boxes": a.boxes.len(), "estimate": est }));
            }
            sink.json("basin.json", &json!({ "quasi_attractors": rows }))?;
        }
        Ok(())
    }
}

// ------------------------------------------------------------------- cones

pub struct ConesPlan {
    samples: usize,
    aperture: f64,
    ell: usize,
    iterates: usize,
    bundles: Option<Vec<DMatrix<f64>>>,
    include_q: bool,
    mask: Option<(Vec<f64>, f64)>,
    exponent_point: Option<Vec<f64>>,
    exponent_iterates: usize,
}

impl ConesPlan {
    fn parse(p: &mut Params, dim: usize) -> RunResult<Self> {
        let samples = p.count("samples", 2000)?;
        let aperture = p.positive("aperture", 0.5)?;
        let ell = p.count("ell", 6)?;
        let iterates = p.count("iterates", 3)?;
        let bundles = match p.matrices("bundles")? {
            None => None,
            Some(list) => {
                let mut out = Vec::new();
                for (i, vectors) in list.iter().enumerate() {
                    let at = format!("/params/bundles/{i}");
                    let d = vectors.first().map_or(0, Vec::len);
                    if vectors.is_empty() || vectors.iter().any(|v| v.len() != d) {
                        return Err(invalid(&at, "a bundle is a non-empty list of spanning vectors of equal length"));
                    }
                    out.push(DMatrix::from_fn(d, vectors.len(), |r, c| vectors[c][r]));
                }
                if out.iter().any(|b| b.nrows() != dim) || out.iter().map(|b| b.ncols()).sum::<usize>() != dim {
                    return Err(invalid("/params/bundles", format!("bundles must split dimension {dim}")));
                }
                Some(out)
            }
        };
        let include_q = p.bool("include_q", true)?;
        let mask = match p.child("mask")? {
            None => None,
            Some(mut m) => {
                let centre = m.reals("center")?.ok_or_else(|| invalid("/params/mask/center", "required"))?;
                check_dim("/params/mask/center", &centre, dim)?;
                let radius = m.positive("radius", 0.1)?;
                m.finish()?;
                Some((centre, radius))
            }
        };
        let exponent_point = p.reals("exponent_point")?;
        if let Some(x) = &exponent_point {
            check_dim("/params/exponent_point", x, dim)?;
        }
        let exponent_iterates = p.count("exponent_iterates", 100)?;
        Ok(Self { samples, aperture, ell, iterates, bundles, include_q, mask, exponent_point, exponent_iterates })
    }

    fn default_bundles(built: &BuiltMap) -> RunResult<Vec<DMatrix<f64>>> {
        if let BuiltMap::Horseshoe(_) = built {
            // stable base direction, fibre, unstable base direction
            let axis = |k: usize| DMatrix::from_fn(3, 1, |r, _| if r == k { 1.0 } else { 0.0 });
            return Ok(vec![axis(0), axis(2), axis(1)]);
        }
        let torus = built.torus().expect("every other map is a torus map");
        let m = torus.linear_part();
        let s = spectral_classify(m)?;
        if s.classification == Classification::NonPartiallyHyperbolic {
            return Err(invalid("/params/bundles", "linear part has no splitting; give bundles explicitly"));
        }
        let sp = invariant_splitting(&s, m)?;
        Ok(Label::ALL.iter().filter_map(|l| sp.subspace(*l).cloned()).collect())
    }

    fn run(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        let built = build(config)?;
        let map = built.as_dynamical();
        let spans = match &self.bundles {
            Some(b) => b.clone(),
            None => Self::default_bundles(&built)?,
        };
        let bundles: Vec<Bundle> = spans.iter().map(Bundle::constant).collect::<crate::Result<_>>()?;
        let k = bundles.len();

        let q = match &built {
            BuiltMap::Da(da) => Some(da.params.q.clone()),
            _ => None,
        };
        let mut points = Vec::new();
        if self.include_q {
            points.extend(q.clone());
        }
        points.extend(Samples::uniform(map.domain(), self.samples, config.seed()).points);
        let mut samples = Samples { points, seed: config.seed(), masked: 0 };
        if let Some((centre, radius)) = &self.mask {
            let torus = map.domain().is_torus();
            let r = *radius;
            samples = samples.masked(|x| {
                let dist = if torus { linalg::torus_dist(x, centre) } else { linalg::dist(x, centre) };
                dist <= r
            });
        }
        if samples.is_empty() {
            return Err(RunError::Runtime(crate::Error::InvalidInput("mask removed every sample".into())));
        }

        let cone = ConeField::constant(&spans[k - 1], self.aperture)?;
        let cone_report = verify_cone_invariance(map, &cone, &samples)?;

        let mut evidence = SplittingEvidence { dims: spans.iter().map(|b| b.ncols()).collect(), ..Default::default() };
        let sum_bundle = |r: std::ops::Range<usize>| -> crate::Result<Bundle> {
            let cols: Vec<_> = spans[r].iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect();
            Bundle::constant(&DMatrix::from_columns(&cols))
        };
        for i in 1..k {
            let rep = verify_domination(map, &sum_bundle(0..i)?, &sum_bundle(i..k)?, self.ell, &samples)?;
            evidence.domination.push((i, rep));
        }
        let mut ranges: Vec<(std::ops::Range<usize>, [Check; 2])> = Vec::new();
        if k == 1 {
            ranges.push((0..1, [Check::Contract, Check::VolContract]));
            ranges.push((0..1, [Check::Expand, Check::VolExpand]));
        } else {
            for j in 1..k {
                ranges.push((0..j, [Check::Contract, Check::VolContract]));
                ranges.push((j..k, [Check::Expand, Check::VolExpand]));
            }
        }
        for (r, modes) in ranges {
            let b = sum_bundle(r.clone())?;
            for mode in modes {
                let rep = verify_uniformity(map, &b, self.iterates, mode, &samples)?;
                evidence.uniformity.push((r.clone(), rep));
            }
        }
        let classification = ph_classify(&evidence)?;

        let exp_point = match &self.exponent_point {
            Some(x) => x.clone(),
            None => q.unwrap_or_else(|| samples.points[0].clone()),
        };
        let exps = finite_time_exponents(map, &exp_point, self.exponent_iterates)?;

        #[derive(Serialize)]
        struct RangeReport<'a> {
            bundles: [usize; 2],
            report: &'a VerificationReport,
        }
        let uniformity: Vec<RangeReport> =
            evidence.uniformity.iter().map(|(r, rep)| RangeReport { bundles: [r.start, r.end], report: rep }).collect();
        let domination: Vec<_> = evidence.domination.iter().map(|(i, rep)| json!({ "split": i, "report": rep })).collect();
        sink.json(
            "cones.json",
            &json!({
                "dims": evidence.dims,
                "aperture": self.aperture,
                "ell": self.ell,
                "iterates": self.iterates,
                "cone_invariance": cone_report,
                "domination": domination,
                "uniformity": uniformity,
                "classification": classification,
                "label": classification.label.as_str(),
                "exponents": { "point": exp_point, "estimate": exps },
            }),
        )?;
        Ok(())
    }
}

// ----------------------------------------------------------------- cocycle

pub struct CocyclePlan {
    cocycle: PeriodicCocycle,
    equalize: Option<f64>,
    steer: Option<SteerParams>,
}

struct SteerParams {
    v: Vec<f64>,
    w: Vec<f64>,
    eps: f64,
    /// Number of periods composed.
    repeat: usize,
}

impl CocyclePlan {
    fn parse(p: &mut Params) -> RunResult<Self> {
        let raw = p.matrices("matrices")?.ok_or_else(|| invalid("/params/matrices", "required"))?;
        let mats: Vec<DMatrix<f64>> = raw
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let n = m.len();
                if n == 0 || m.iter().any(|r| r.len() != n) {
                    return Err(invalid(&format!("/params/matrices/{i}"), "expected a non-empty square matrix"));
                }
                Ok(DMatrix::from_fn(n, n, |r, c| m[r][c]))
            })
            .collect::<RunResult<_>>()?;
        let cocycle = PeriodicCocycle::new(mats).map_err(|e| invalid("/params/matrices", e))?;
        let equalize = p.bool("equalize", cocycle.dim() == 2)?;
        let step_cap = p.positive("step_cap", 0.05)?;
        if equalize && cocycle.dim() != 2 {
            return Err(invalid("/params/equalize", "only available for 2x2 cocycles"));
        }
        let steer = match p.child("steer")? {
            None => None,
            Some(mut s) => {
                let v = s.reals("v")?.ok_or_else(|| invalid("/params/steer/v", "required"))?;
                let w = s.reals("w")?.ok_or_else(|| invalid("/params/steer/w", "required"))?;
                let eps = s.positive("eps", 0.1)?;
                let repeat = s.count("repeat", 1)?;
                s.finish()?;
                if cocycle.dim() != 2 || v.len() != 2 || w.len() != 2 {
                    return Err(invalid("/params/steer", "steering works with 2x2 cocycles and planar vectors"));
                }
                Some(SteerParams { v, w, eps, repeat })
            }
        };
        Ok(Self { cocycle, equalize: equalize.then_some(step_cap), steer })
    }

    fn run(&self, sink: &mut ArtifactSink) -> RunResult<()> {
        let c = &self.cocycle;
        let ev = exponents(c);
        sink.json(
            "cocycle.json",
            &json!({
                "period": c.period(),
                "dim": c.dim(),
                "matrices": c,
                "exponents": ev.sigma,
                "spread": ev.spread(),
                "clustered": ev.clustered,
                "log_abs_det": c.log_abs_det(),
            }),
        )?;
        if let Some(step_cap) = self.equalize {
            let path = equalize_2d(c, step_cap)?;
            sink.json("path.json", &json!({ "step_cap": step_cap, "path": path }))?;
        }
        if let Some(s) = &self.steer {
            let mats: Vec<DMatrix<f64>> = (0..s.repeat).flat_map(|_| c.matrices().iter().cloned()).collect();
            let out = steer_vector(&mats, &s.v, &s.w, s.eps)?;
            sink.json("steer.json", &json!({ "v": s.v, "w": s.w, "eps": s.eps, "repeat": s.repeat, "outcome": out }))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- rotation

pub struct RotationPlan {
    n: usize,
    starts: Option<Vec<Vec<f64>>>,
    start_count: usize,
    lift_shift: Option<Vec<i64>>,
    spread_tol: Option<f64>,
    nonresonance: Option<(i64, f64)>,
    transitivity: Option<TransitivityParams>,
}

struct TransitivityParams {
    resolution: usize,
    epsilon: f64,
    enclosure: String,
}

impl RotationPlan {
    fn parse(p: &mut Params, dim: usize) -> RunResult<Self> {
        let n = p.count("n", 10_000)?;
        let starts = p.points("starts")?;
        if let Some(s) = &starts {
            if s.is_empty() {
                return Err(invalid("/params/starts", "needs at least one start"));
            }
            for (i, z) in s.iter().enumerate() {
                check_dim(&format!("/params/starts/{i}"), z, dim)?;
            }
        }
        let start_count = p.count("start_count", 8)?;
        let lift_shift = p.integers("lift_shift")?;
        if lift_shift.as_ref().is_some_and(|g| g.len() != dim) {
            return Err(invalid("/params/lift_shift", format!("expected {dim} integers")));
        }
        let spread_tol = p.f64_opt("spread_tol")?;
        let nonresonance = match p.child("nonresonance")? {
            None => None,
            Some(mut c) => {
                let bound = c.count("bound", 50)? as i64;
                let tol = c.positive("tol", 1e-9)?;
                c.finish()?;
                Some((bound, tol))
            }
        };
        let transitivity = match p.child("transitivity")? {
            None => None,
            Some(mut c) => {
                let resolution = c.count("resolution", 64)?;
                let epsilon = c.f64("epsilon", 1.0 / 32.0)?;
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(invalid("/params/transitivity/epsilon", "must be a non-negative real"));
                }
                let enclosure = c.string("enclosure", "componentwise")?;
                if !["componentwise", "lipschitz"].contains(&enclosure.as_str()) {
                    return Err(invalid("/params/transitivity/enclosure", "must be 'componentwise' or 'lipschitz'"));
                }
                c.finish()?;
                Some(TransitivityParams { resolution, epsilon, enclosure })
            }
        };
        Ok(Self { n, starts, start_count, lift_shift, spread_tol, nonresonance, transitivity })
    }

    fn run(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        let built = build(config)?;
        let map = built.torus().expect("checked during planning");
        let d = map.dim();
        let starts = match &self.starts {
            Some(s) => s.clone(),
            None => uniform_points(d, self.start_count, config.seed()),
        };
        let shift = self.lift_shift.clone().unwrap_or_else(|| vec![0; d]);
        let est = rotation_vector(map, &starts, self.n, &shift)?;
        let spread_tol = self.spread_tol.unwrap_or(5.0 / self.n as f64);
        let nonres = match self.nonresonance {
            Some((bound, tol)) => Some(nonresonance_check(&est.pooled, bound, tol)?),
            None => None,
        };
        sink.json(
            "rotation.json",
            &json!({
                "n": est.n,
                "starts": est.starts,
                "per_start": est.per_start,
                "pooled": est.pooled,
                "spread": est.spread,
                "spread_tol": spread_tol,
                "spread_pass": est.spread <= spread_tol,
                "displacement_bound": est.displacement_bound,
                "lift_shift": est.lift_shift,
                "first_coordinate_only": est.first_coordinate_only,
                "nonresonance": nonres,
            }),
        )?;
        if let Some(t) = &self.transitivity {
            let grid = BoxGrid::torus(vec![t.resolution; d])?;
            let enclosure = match t.enclosure.as_str() {
                "lipschitz" => Enclosure::Lipschitz(map.lipschitz_hint()),
                _ => Enclosure::Componentwise(map.component_bound().expect("torus maps carry a bound")),
            };
            let probe = transitivity_probe(map, &grid, t.epsilon, enclosure)?;
            sink.json("transitivity.json", &probe)?;
        }
        Ok(())
    }
}

// --------------------------------------------------------------- horseshoe

pub struct HorseshoePlan {
    verify_grid: usize,
    words: Vec<SymbolicWord>,
    eta_range: [f64; 2],
    max_length: usize,
    tol: f64,
    staircase: Option<usize>,
    isolation: Option<IsolationParams>,
}

struct IsolationParams {
    resolutions: Vec<usize>,
    radius: f64,
    control: Option<Vec<f64>>,
}

impl HorseshoePlan {
    fn parse(p: &mut Params) -> RunResult<Self> {
        let verify_grid = p.usize("verify_grid", 2001)?;
        if verify_grid < 2 {
            return Err(invalid("/params/verify_grid", "must be at least 2"));
        }
        let words = p
            .strings("words")?
            .unwrap_or_else(|| ["1", "2", "3", "4"].map(String::from).to_vec())
            .iter()
            .enumerate()
            .map(|(i, w)| SymbolicWord::parse(w).map_err(|e| invalid(&format!("/params/words/{i}"), e)))
            .collect::<RunResult<Vec<_>>>()?;
        let eta_range = match p.reals("eta_range")? {
            None => [0.004, 0.016],
            Some(r) if r.len() == 2 && r[0] > 0.0 && r[0] < r[1] => [r[0], r[1]],
            Some(_) => return Err(invalid("/params/eta_range", "expected [lo, hi] with 0 < lo < hi")),
        };
        let max_length = p.count("max_length", 12)?;
        let tol = p.positive("tol", 1e-10)?;
        let staircase = p.bool("staircase", true)?;
        let staircase_max = p.count("staircase_max_length", 400)?;
        let isolation = match p.child("isolation")? {
            None => None,
            Some(mut c) => {
                let resolutions: Vec<usize> = match c.integers("resolutions")? {
                    None => vec![16, 32, 64],
                    Some(r) if !r.is_empty() && r.iter().all(|&n| n >= 1) => r.iter().map(|&n| n as usize).collect(),
                    Some(_) => return Err(invalid("/params/isolation/resolutions", "expected positive integers")),
                };
                let radius = c.positive("radius", 0.2)?;
                let control = c.reals("control")?;
                if control.as_ref().is_some_and(|v| v.len() != 3) {
                    return Err(invalid("/params/isolation/control", "expected 3 coordinates"));
                }
                c.finish()?;
                Some(IsolationParams { resolutions, radius, control })
            }
        };
        Ok(Self { verify_grid, words, eta_range, max_length, tol, staircase: staircase.then_some(staircase_max), isolation })
    }

    fn run(&self, config: &RunConfig, sink: &mut ArtifactSink) -> RunResult<()> {
        let built = build(config)?;
        let BuiltMap::Horseshoe(map) = &built else { unreachable!("checked during planning") };
        let spec = &map.spec;
        sink.json("verification.json", &spec.verify(self.verify_grid))?;

        let periodic = self.words.iter().map(|w| periodic_point(map, w)).collect::<crate::Result<Vec<_>>>()?;
        sink.json("periodic.json", &periodic)?;

        let scan = heteroclinic_scan(spec, self.eta_range, self.max_length, self.tol)?;
        let mut events: Vec<(&str, ConnectionEvent)> = scan.events.iter().map(|e| ("scan", e.clone())).collect();
        let mut staircase_word = None;
        if let Some(max_len) = self.staircase {
            if let Some(w) = shortest_staircase_word(spec, self.eta_range, max_len) {
                let extra = scan_words(spec, self.eta_range, std::slice::from_ref(&w), self.tol)?;
                events.extend(extra.events.into_iter().map(|e| ("staircase", e)));
                staircase_word = Some(w);
            }
        }
        let listed: Vec<_> = events
            .iter()
            .map(|(source, e)| {
                json!({
                    "source": source,
                    "word": e.word,
                    "parameter": e.parameter,
                    "point": e.point,
                    "residual": e.residual,
                    "bracket": e.bracket,
                })
            })
            .collect();
        sink.json(
            "events.json",
            &json!({
                "range": scan.range,
                "max_length": scan.max_length,
                "nodes": scan.nodes,
                "tol": scan.tol,
                "words_scanned": scan.words_scanned,
                "prefixes_pruned": scan.prefixes_pruned,
                "staircase_word": staircase_word,
                "events": listed,
            }),
        )?;

        if let Some(iso) = &self.isolation {
            let Some((_, event)) = events.first() else {
                return Err(RunError::Runtime(crate::Error::Precondition(
                    "isolation probe requested but no connection event was found".into(),
                )));
            };
            let control = match &iso.control {
                Some(c) => [c[0], c[1], c[2]],
                None => {
                    let b = base_periodic_point(spec, &SymbolicWord::parse("1").expect("valid word"));
                    [b[0], b[1], 0.0]
                }
            };
            let report = isolation_probe(spec, event, control, &iso.resolutions, iso.radius, self.tol)?;
            let mut table = CsvTable::new(["resolution", "count_near_x", "count_near_control"]);
            for r in &report.rows {
                table.push(vec![Cell::from(r.resolution), Cell::from(r.count_near_x), Cell::from(r.count_near_control)]);
            }
            sink.csv("isolation.csv", &table)?;
            sink.json("isolation.json", &report)?;
        }
        Ok(())
    }
}
