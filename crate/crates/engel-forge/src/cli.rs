//! Verb dispatch, artifact collection and exit codes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FamilyConfig, Prolongation, Role, RunConfig, SchemaError, Verb};
use crate::cr::{self, AcsField, AcsSpec, ChartEmbedding, Embedding, Model, ZoomOptions};
use crate::curve::{self, PeriodicCurve};
use crate::engel::{engel_margins, EngelCertificate};
use crate::error::{ForgeError, Result};
use crate::family::{BaseChart, CurveFamily, FiberModel, Frozen, RotationFamily};
use crate::prolong::{self, LocalFamily, PlaneField, ProlongedField, Transition};
use crate::reparam::{self, RebalanceOptions};
use crate::report::{self, csv_line, fmt17, ErrorReport, Report};
use crate::surgery::graft::{self, GraftOptions};
use crate::surgery::wiggle;

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Passed = 0,
    /// The run completed but a certification failed.
    Failed = 1,
    Usage = 2,
    /// A computation raised an error; see `error.json`.
    Error = 3,
}

/// A file produced by a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Everything a verb produced, before anything touches the disk.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub result: Value,
    pub artifacts: Vec<Artifact>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    base: &'a Path,
    /// Artifact name prefix; pipeline stages each get their own.
    prefix: &'static str,
    artifacts: Vec<Artifact>,
}

impl Ctx<'_> {
    fn emit(&mut self, suffix: &str, contents: String) {
        self.artifacts.push(Artifact {
            name: format!("{}_{suffix}", self.prefix),
            contents,
        });
    }

    fn svg(&mut self, suffix: &str, title: &str, curves: &[&PeriodicCurve]) {
        if self.cfg.plot.svg {
            let s = report::sphere_svg(title, curves, self.cfg.plot.pole);
            self.emit(suffix, s);
        }
    }

    fn direction(&self) -> Result<PeriodicCurve> {
        self.cfg.curve.direction(self.base)
    }

    /// The space fiber: the input itself or the primitive of the direction curve.
    fn space(&self) -> Result<PeriodicCurve> {
        let c = self.cfg.curve.load(self.base)?;
        let nu = match self.cfg.curve.role() {
            Role::Space => c,
            Role::Direction => prolong::primitive(&c)?,
        };
        Ok(nu.scaled(self.cfg.curve.scale))
    }
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn fiber_model(family: &FamilyConfig, curve: PeriodicCurve) -> Arc<dyn FiberModel> {
    match family {
        FamilyConfig::Frozen => Arc::new(Frozen(curve)),
        FamilyConfig::Rotation { amplitude } => Arc::new(RotationFamily {
            curve,
            amplitude: *amplitude,
        }),
    }
}

fn convexity(ctx: &mut Ctx) -> Result<(bool, Value)> {
    let gamma = ctx.direction()?;
    let m = curve::convexity_margin(&gamma, ctx.cfg.samples)?;
    let mut csv = String::from("t,det\n");
    for (t, v) in m.grid.iter().zip(&m.values) {
        csv.push_str(&csv_line([fmt17(*t), fmt17(*v)]));
    }
    ctx.emit("margin.csv", csv);
    ctx.svg("curve.svg", "convexity", &[&gamma]);
    let passed = m.min_value > 0.0;
    Ok((
        passed,
        json!({
            "samples": ctx.cfg.samples,
            "sphere_deviation": gamma.sphere_deviation(4 * ctx.cfg.samples),
            "min_det": m.min_value,
            "argmin": m.argmin,
            "modes": gamma.modes(),
        }),
    ))
}

fn wiggle_csv(records: &[wiggle::WiggleRecord]) -> String {
    let mut csv = String::from("a,b,multiplicity,hemisphere,closure_gap,image_gap\n");
    for w in records {
        csv.push_str(&csv_line([
            fmt17(w.a),
            fmt17(w.b),
            w.multiplicity.to_string(),
            format!("{:?}", w.hemisphere).to_lowercase(),
            fmt17(w.closure_gap),
            fmt17(w.image_gap),
        ]));
    }
    csv
}

fn surround(ctx: &mut Ctx) -> Result<(bool, Value)> {
    let gamma = ctx.direction()?;
    let rep = curve::surround_report(&gamma, ctx.cfg.directions);
    let wiggles = wiggle::detect_wiggles(&gamma, wiggle::CLOSURE_TOL);
    let check = wiggle::n_complete_surround(&gamma, ctx.cfg.graft.n, &wiggles);
    ctx.emit("wiggles.csv", wiggle_csv(&wiggles));
    ctx.svg("curve.svg", "surround", &[&gamma]);
    Ok((
        rep.margin > 0.0,
        json!({
            "surround": value(&rep),
            "n": ctx.cfg.graft.n,
            "wiggle_count": wiggles.len(),
            "n_complete": value(&check),
        }),
    ))
}

fn graft_stage(ctx: &mut Ctx, gamma: &PeriodicCurve) -> Result<(bool, Value, PeriodicCurve)> {
    let g = &ctx.cfg.graft;
    let out = graft::graft_with(gamma, &g.arc, g.n, g.s, GraftOptions::default())?;
    let margin = curve::convexity_margin(&out.curve, ctx.cfg.samples.max(1024))?;
    let wiggles = wiggle::detect_wiggles(&out.curve, wiggle::CLOSURE_TOL);
    let check = wiggle::n_complete_surround(&out.curve, g.n, &wiggles);
    let hom = graft::graft_homotopy(gamma, &g.arc, g.n, g.steps - 1, GraftOptions::default())?;
    let mut csv = String::from("s,convexity,min_kappa\n");
    for i in 0..hom.times.len() {
        csv.push_str(&csv_line([fmt17(hom.times[i]), fmt17(hom.convexity[i]), fmt17(hom.min_kappa[i])]));
    }
    ctx.emit("homotopy.csv", csv);
    ctx.emit("curve.json", report::to_json(&out.curve));
    ctx.svg("curve.svg", "graft", &[gamma, &out.curve]);
    let homotopy_convex = hom.convexity.iter().all(|m| *m > 0.0);
    let surrounds = g.s < 1.0 || check.satisfied;
    let passed = margin.min_value > 0.0 && surrounds && homotopy_convex;
    let result = json!({
        "n": g.n,
        "s": g.s,
        "budget": g.budget,
        "modes": out.curve.modes(),
        "convexity_margin": margin.min_value,
        "smoothing": value(&out.smoothing),
        "wiggle_count": wiggles.len(),
        "n_complete": value(&check),
        "homotopy": value(&hom),
        "homotopy_convex": homotopy_convex,
    });
    Ok((passed, result, out.curve))
}

fn rebalance_stage(ctx: &mut Ctx, gamma: &PeriodicCurve) -> Result<(bool, Value, PeriodicCurve)> {
    let tol = ctx.cfg.tolerances.integral;
    let r = reparam::rebalance_with(gamma, RebalanceOptions::new(tol))?;
    let n = ctx.cfg.samples;
    let mut csv = String::from("s,psi,density\n");
    for j in 0..n {
        let s = j as f64 / n as f64;
        csv.push_str(&csv_line([fmt17(s), fmt17(r.diffeo.apply(s)), fmt17(r.diffeo.density.eval(s))]));
    }
    ctx.emit("density.csv", csv);
    ctx.emit("curve.json", report::to_json(&r.curve));
    ctx.svg("curve.svg", "rebalance", &[gamma, &r.curve]);
    Ok((r.report.integral_norm <= tol, value(&r.report), r.curve))
}

fn curve_csv(c: &PeriodicCurve, n: usize) -> String {
    let mut csv = String::from("t,x,y,z\n");
    for (j, p) in c.sample(n).iter().enumerate() {
        csv.push_str(&csv_line([fmt17(j as f64 / n as f64), fmt17(p[0]), fmt17(p[1]), fmt17(p[2])]));
    }
    csv
}

fn embed_stage(ctx: &mut Ctx, nu: &PeriodicCurve) -> Result<(bool, Value, PeriodicCurve)> {
    let (out, rep) = prolong::ensure_embedded(nu, ctx.cfg.tolerances.embed, ctx.cfg.seed)?;
    ctx.emit("fiber.csv", curve_csv(&out, ctx.cfg.samples));
    ctx.emit("fiber.json", report::to_json(&out));
    Ok((rep.min_distance >= rep.tolerance, value(&rep), out))
}

fn prolong_field(ctx: &Ctx, nu: PeriodicCurve) -> Result<ProlongedField> {
    Ok(match ctx.cfg.prolongation {
        Prolongation::Derived => ProlongedField::derived(fiber_model(&ctx.cfg.family, nu)),
        Prolongation::Direct => ProlongedField::direct(fiber_model(&ctx.cfg.family, ctx.direction()?)),
    })
}

fn certificate_summary(cert: &EngelCertificate) -> Value {
    value(cert)
}

fn prolong_check(ctx: &mut Ctx, field: &ProlongedField) -> Result<(bool, Value)> {
    let grid = ctx.cfg.grid.grid();
    let cert = engel_margins(field, &grid, ctx.cfg.second_bracket)?;
    ctx.emit("margins.csv", cert.to_csv());
    ctx.emit("frames.csv", PlaneField::sample(field, &grid)?.to_csv());
    Ok((cert.engel, certificate_summary(&cert)))
}

fn acs(ctx: &Ctx) -> Result<AcsField> {
    AcsField::new(ctx.cfg.cr.acs.clone())
}

fn cr_check(ctx: &mut Ctx, nu: PeriodicCurve) -> Result<(bool, Value)> {
    let grid = ctx.cfg.grid.grid();
    let acs = acs(ctx)?;
    let model = fiber_model(&ctx.cfg.family, nu);
    let emb = ChartEmbedding::new(ctx.cfg.cr.model, model, ctx.cfg.cr.lambda, None)?;
    let scan = cr::coreal_scan(&emb, &acs, &grid)?;
    let mut csv = String::from("sample,x1,x2,x3,t,dim\n");
    for (s, d) in scan.dims.iter().enumerate() {
        let p = grid.point(s);
        csv.push_str(&csv_line([
            s.to_string(),
            fmt17(p[0]),
            fmt17(p[1]),
            fmt17(p[2]),
            fmt17(p[3]),
            d.to_string(),
        ]));
    }
    ctx.emit("tangency.csv", csv);
    let lemma = if scan.co_real && emb.model() == Model::Flat && ctx.cfg.cr.acs == AcsSpec::Standard {
        Some(cr::lemma_check(&emb, &acs, &grid)?)
    } else {
        None
    };
    let lemma_ok = lemma
        .as_ref()
        .is_none_or(|l| !l.base_independent || l.max_angle <= ctx.cfg.tolerances.angle);
    let result = json!({
        "model": value(&ctx.cfg.cr.model),
        "lambda": ctx.cfg.cr.lambda,
        "co_real": scan.co_real,
        "min_gap": scan.min_gap,
        "max_dropped": scan.max_dropped,
        "lemma": lemma.as_ref().map(value),
    });
    Ok((scan.co_real && lemma_ok, result))
}

fn zoom(ctx: &mut Ctx, nu: PeriodicCurve) -> Result<(bool, Value)> {
    let acs = acs(ctx)?;
    let cfg = ctx.cfg;
    let opts = ZoomOptions {
        center: cfg.cr.center,
        base: cfg.grid.base,
        fiber: cfg.grid.fiber,
        policy: cfg.second_bracket,
        bisection_width: cfg.cr.bisection_width,
    };
    let rep = cr::zoom_sweep(fiber_model(&cfg.family, nu), cfg.cr.model, &acs, &cfg.cr.lambdas, &opts)?;
    let mut csv = String::from("lambda,stage,co_real,min_gap,min_m2,min_m3,min_m4,engel,error\n");
    for (stage, list) in [("sweep", &rep.entries), ("bisection", &rep.bisection)] {
        for e in list {
            csv.push_str(&csv_line([
                fmt17(e.lambda),
                stage.to_string(),
                e.co_real.to_string(),
                fmt17(e.min_gap),
                fmt17(e.min_m2),
                fmt17(e.min_m3),
                fmt17(e.min_m4),
                e.engel.to_string(),
                e.error.clone().unwrap_or_default().replace(',', ";"),
            ]));
        }
    }
    ctx.emit("sweep.csv", csv);
    if cfg.plot.svg {
        let pts: Vec<(f64, f64)> = rep.entries.iter().chain(&rep.bisection).map(|e| (e.lambda, e.min_m4)).collect();
        let svg = report::margin_chart_svg("min m4 against lambda", &pts, Some(rep.limit_m4));
        ctx.emit("m4.svg", svg);
    }
    let smallest = rep.entries.last().expect("lambdas are non-empty");
    let drift = (smallest.min_m4 - rep.limit_m4).abs() / rep.limit_m4;
    let mut result = value(&rep);
    result["relative_drift_at_smallest"] = json!(drift);
    Ok((rep.lambda_star.is_some(), result))
}

/// Pieces of the two-chart demonstration on the torus.
fn two_charts(nu: &PeriodicCurve, res: [usize; 3], overlap: usize, delta: f64) -> Result<(Vec<LocalFamily>, Vec<Transition>)> {
    let cover = prolong::two_chart_cover(res, overlap);
    // chart 0 reads the fiber with its parameter advanced by δ and based at 0
    let g0 = nu.shifted(delta).translated(crate::vec3::scale(-1.0, nu.eval(delta)));
    let locals = [g0, nu.translated(crate::vec3::scale(-1.0, nu.eval(0.0)))]
        .into_iter()
        .zip(cover)
        .map(|(g, (support, bump))| LocalFamily {
            family: CurveFamily::constant(BaseChart::Torus, res, g),
            support,
            bump,
        })
        .collect();
    Ok((locals, vec![Transition { from: 0, to: 1, delta }]))
}

#[derive(Serialize)]
struct Stage {
    name: &'static str,
    passed: bool,
    skipped: bool,
    result: Value,
}

fn pipeline(ctx: &mut Ctx) -> Result<(bool, Value)> {
    let mut stages: Vec<Stage> = Vec::new();
    let finish = |stages: Vec<Stage>| {
        let passed = stages.iter().all(|s| s.passed);
        let stopped = stages.iter().find(|s| !s.passed).map(|s| s.name);
        (passed, json!({"stages": stages, "stopped_at": stopped}))
    };
    macro_rules! stage {
        ($name:expr, $passed:expr, $skipped:expr, $result:expr) => {{
            let passed = $passed;
            stages.push(Stage {
                name: $name,
                passed,
                skipped: $skipped,
                result: $result,
            });
            if !passed {
                return Ok(finish(stages));
            }
        }};
    }
    let tag = |name: &'static str| move |e: ForgeError| ForgeError::Invalid(format!("{name}: {e}"));
    let seed_curve = ctx.direction()?;
    let gamma = if ctx.cfg.pipeline_graft {
        ctx.prefix = "pipeline_graft";
        let (ok, res, out) = graft_stage(ctx, &seed_curve).map_err(tag("graft"))?;
        stage!("graft", ok, false, res);
        out
    } else {
        stage!("graft", true, true, json!(null));
        seed_curve
    };
    let tol = ctx.cfg.tolerances.integral;
    let integral = crate::vec3::norm(curve::curve_integral(&gamma));
    let balanced = if integral <= tol {
        stage!("rebalance", true, true, json!({"integral_norm": integral}));
        gamma
    } else {
        ctx.prefix = "pipeline_rebalance";
        let (ok, res, out) = rebalance_stage(ctx, &gamma).map_err(tag("rebalance"))?;
        stage!("rebalance", ok, false, res);
        out
    };
    let nu = prolong::primitive(&balanced).map_err(tag("primitive"))?.scaled(ctx.cfg.curve.scale);
    stage!("primitive", true, false, json!({"modes": nu.modes(), "length": nu.length()}));
    ctx.prefix = "pipeline_embed";
    let (ok, res, nu) = embed_stage(ctx, &nu).map_err(tag("ensure_embedded"))?;
    stage!("ensure_embedded", ok, false, res);

    let res = ctx.cfg.grid.base;
    let (locals, trs) = two_charts(&nu, res, ctx.cfg.patch.overlap, ctx.cfg.patch.delta)?;
    let patched = prolong::patch_family(&locals, &trs, ctx.cfg.tolerances.patch).map_err(tag("patch"))?;
    let r = &patched.report;
    let ok = r.max_translation_error <= ctx.cfg.tolerances.patch && r.max_derivative_error <= ctx.cfg.tolerances.patch;
    stage!(
        "patch",
        ok,
        false,
        json!({
            "delta": ctx.cfg.patch.delta,
            "overlap_nodes": r.overlaps.len(),
            "max_translation_error": r.max_translation_error,
            "max_derivative_error": r.max_derivative_error,
            "mismatch": prolong::patched_mismatch(&patched, &trs),
        })
    );

    // patched charts differ from the fiber by translations only, so the
    // derived field is that of the fiber itself
    let field = ProlongedField::derived(Arc::new(Frozen(nu.clone())));
    let grid = crate::family::SampleGrid::new(BaseChart::Torus, ctx.cfg.grid.base, ctx.cfg.grid.fiber);
    let cert = engel_margins(&field, &grid, ctx.cfg.second_bracket).map_err(tag("prolong-check"))?;
    ctx.prefix = "pipeline_prolong";
    ctx.emit("margins.csv", cert.to_csv());
    stage!("prolong-check", cert.engel, false, certificate_summary(&cert));

    ctx.prefix = "pipeline_cr";
    let (ok, res) = cr_check(ctx, nu.clone()).map_err(tag("cr-check"))?;
    stage!("cr-check", ok, false, res);
    ctx.prefix = "pipeline_zoom";
    let (ok, res) = zoom(ctx, nu).map_err(tag("zoom-sweep"))?;
    stage!("zoom-sweep", ok, false, res);
    ctx.prefix = "pipeline";
    ctx.svg("curve.svg", "pipeline", &[&balanced]);
    Ok(finish(stages))
}

/// Run a validated configuration. `base` anchors relative input paths.
pub fn execute(cfg: &RunConfig, base: &Path) -> Result<Outcome> {
    let verb = cfg.command;
    let mut ctx = Ctx {
        cfg,
        base,
        prefix: verb.name(),
        artifacts: Vec::new(),
    };
    let (passed, result) = match verb {
        Verb::Convexity => convexity(&mut ctx)?,
        Verb::Surround => surround(&mut ctx)?,
        Verb::Graft => {
            let gamma = ctx.direction()?;
            let (ok, res, _) = graft_stage(&mut ctx, &gamma)?;
            (ok, res)
        }
        Verb::Rebalance => {
            let gamma = ctx.direction()?;
            let (ok, res, _) = rebalance_stage(&mut ctx, &gamma)?;
            (ok, res)
        }
        Verb::Integrate => {
            let nu = ctx.space()?;
            let (ok, res, _) = embed_stage(&mut ctx, &nu)?;
            (ok, res)
        }
        Verb::ProlongCheck => {
            let field = prolong_field(&ctx, ctx.space()?)?;
            prolong_check(&mut ctx, &field)?
        }
        Verb::CrCheck => {
            let nu = ctx.space()?;
            cr_check(&mut ctx, nu)?
        }
        Verb::ZoomSweep => {
            let nu = ctx.space()?;
            zoom(&mut ctx, nu)?
        }
        Verb::Pipeline => pipeline(&mut ctx)?,
    };
    Ok(Outcome {
        passed,
        result,
        artifacts: ctx.artifacts,
    })
}

fn envelope_fields(cfg: &RunConfig) -> (String, String, String) {
    (
        env!("CARGO_PKG_NAME").to_string(),
        env!("CARGO_PKG_VERSION").to_string(),
        cfg.hash(),
    )
}

/// The JSON report for an outcome.
pub fn render_report(cfg: &RunConfig, outcome: &Outcome) -> String {
    let (tool, version, config_hash) = envelope_fields(cfg);
    report::to_json(&Report {
        tool,
        version,
        verb: cfg.command.name().to_string(),
        config_hash,
        seed: cfg.seed,
        passed: outcome.passed,
        result: &outcome.result,
    })
}

/// The JSON error record for a failed computation.
pub fn render_error(cfg: &RunConfig, err: &ForgeError) -> String {
    let (tool, version, config_hash) = envelope_fields(cfg);
    let node = match err {
        ForgeError::AtNode { node, .. } => Some(*node),
        ForgeError::NotCoReal { sample, .. } | ForgeError::AlignmentFailure { sample, .. } => Some(*sample),
        ForgeError::DegenerateFrame { sample, .. } => Some(*sample),
        ForgeError::OverlapMismatch { node, .. } => Some(*node),
        _ => None,
    };
    report::to_json(&ErrorReport {
        tool,
        version,
        verb: cfg.command.name().to_string(),
        config_hash,
        seed: cfg.seed,
        kind: err.kind().to_string(),
        message: err.to_string(),
        node,
    })
}

/// Read and validate a configuration, applying command-line overrides.
pub fn load_config(verb: Verb, path: &Path, seed: Option<u64>) -> std::result::Result<RunConfig, SchemaError> {
    let text = std::fs::read_to_string(path).map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if cfg.command != verb {
        return Err(SchemaError(format!(
            "config is for `{}` but `{}` was requested",
            cfg.command.name(),
            verb.name()
        )));
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_all(out: &Path, files: &[Artifact]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    for f in files {
        std::fs::write(out.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// Full command: load, run, write, and map to an exit status. Messages go
/// to stderr.
pub fn run(verb: Verb, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Status {
    let cfg = match load_config(verb, config, seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return Status::Usage;
        }
    };
    let out = out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let base = config.parent().unwrap_or(Path::new("."));
    let (files, status) = match execute(&cfg, base) {
        Ok(outcome) => {
            let mut files = vec![Artifact {
                name: format!("{}.json", verb.name()),
                contents: render_report(&cfg, &outcome),
            }];
            let status = if outcome.passed { Status::Passed } else { Status::Failed };
            files.extend(outcome.artifacts);
            (files, status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let files = vec![Artifact {
                name: "error.json".into(),
                contents: render_error(&cfg, &e),
            }];
            (files, Status::Error)
        }
    };
    if let Err(e) = write_all(&out, &files) {
        eprintln!("cannot write to {}: {e}", out.display());
        return Status::Error;
    }
    status
}
