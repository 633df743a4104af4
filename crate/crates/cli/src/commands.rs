//! Subcommand implementations. Each builds its whole output in memory and
//! writes it once at the end.

use std::io::Write;
use std::path::Path;

use amv_core::estimator::{amv_limit, AmvResult};
use amv_core::operators::{
    build_amv_operator, collar_boundary, green_check, solve_poisson, untie_radius, DiscreteOperator, GreenReport,
    OperatorKind,
};
use amv_core::space::AtomCloud;
use amv_core::spaces::{build_space, HeisenbergConstants, SpaceDescriptor};
use amv_core::suites::{run_suite, Outcome, SuiteOptions, SuiteReport, SCHEMA_VERSION, SUITES};
use amv_core::AmvError;
use serde::Serialize;

use crate::config::{
    config_err, read_json, CloudConfig, ExperimentConfig, ExportConfig, Format, GreenConfig, KindArg, OutputConfig,
    PoissonConfig, VerifyConfig,
};
use crate::{CliError, OutputArgs};

fn eval_err(e: AmvError) -> CliError {
    CliError::Eval(e.to_string())
}

/// Command-line flags win over the config's `output` block.
fn resolve_output<'a>(
    args: &'a OutputArgs,
    cfg: Option<&'a OutputConfig>,
    default: Format,
) -> (Option<&'a Path>, Format) {
    let path = args.out.as_deref().or_else(|| cfg.and_then(|c| c.path.as_deref()));
    let format = args.format.or_else(|| cfg.and_then(|c| c.format)).unwrap_or(default);
    (path, format)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Config(format!("cannot write output: {e}")))
        }
    }
}

fn to_json(v: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Eval(format!("serialization failed: {e}")))?;
    s.push(b'\n');
    Ok(s)
}

fn csv_bytes(fill: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).map_err(|e| CliError::Eval(format!("csv output failed: {e}")))?;
    w.into_inner().map_err(|e| CliError::Eval(format!("csv output failed: {e}")))
}

#[derive(Serialize)]
struct EvalRow {
    point_id: usize,
    r: f64,
    value: Option<f64>,
    abs_error: Option<f64>,
    verdict: Option<String>,
}

#[derive(Serialize)]
struct PointReport<'a> {
    point_id: usize,
    point: &'a [f64],
    result: &'a AmvResult,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    schema_version: u32,
    space: &'a SpaceDescriptor,
    field: String,
    points: Vec<PointReport<'a>>,
}

pub fn eval(path: &Path, seed: Option<u64>, output: &OutputArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = read_json(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let budget = cfg.budget()?;
    let space = build_space(&cfg.space).map_err(config_err)?;
    let u = cfg.field.build("field")?;
    for (k, p) in cfg.points.iter().enumerate() {
        if p.len() != space.ambient_dim() {
            return Err(CliError::Config(format!(
                "points[{k}] has {} coordinates; the space needs {}",
                p.len(),
                space.ambient_dim()
            )));
        }
    }
    let (out, format) = resolve_output(output, cfg.output.as_ref(), Format::Csv);
    let results: Vec<AmvResult> = cfg
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            amv_limit(&*space, &*u, p, &cfg.schedule, &budget).map_err(|e| CliError::Eval(format!("points[{k}]: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let bytes = match format {
        Format::Csv => csv_bytes(|w| {
            for (k, res) in results.iter().enumerate() {
                for t in &res.trace {
                    w.serialize(EvalRow {
                        point_id: k,
                        r: t.r,
                        value: Some(t.value),
                        abs_error: Some(t.abs_error),
                        verdict: None,
                    })?;
                }
                w.serialize(EvalRow {
                    point_id: k,
                    r: 0.0,
                    value: res.value,
                    abs_error: res.value.map(|_| res.value_error),
                    verdict: Some(res.verdict.to_string()),
                })?;
            }
            Ok(())
        })?,
        Format::Json => to_json(&EvalReport {
            schema_version: SCHEMA_VERSION,
            space: &cfg.space,
            field: u.describe(),
            points: results
                .iter()
                .enumerate()
                .map(|(k, r)| PointReport { point_id: k, point: &cfg.points[k], result: r })
                .collect(),
        })?,
    };
    write_output(out, &bytes)
}

fn outcome_text(o: &Outcome) -> String {
    match o {
        Outcome::Value(v) => v.to_string(),
        Outcome::Label(s) => s.clone(),
    }
}

#[derive(Serialize)]
struct CaseRow<'a> {
    case_id: &'a str,
    expected: String,
    expected_provenance: String,
    measured: String,
    tolerance: f64,
    pass: bool,
    note: &'a str,
}

fn report_bytes(report: &SuiteReport, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => csv_bytes(|w| {
            for c in &report.cases {
                let prov = serde_json::to_value(c.expected_provenance).ok().and_then(|v| v.as_str().map(String::from));
                w.serialize(CaseRow {
                    case_id: &c.case_id,
                    expected: outcome_text(&c.expected),
                    expected_provenance: prov.unwrap_or_default(),
                    measured: outcome_text(&c.measured),
                    tolerance: c.tolerance,
                    pass: c.pass,
                    note: c.note.as_deref().unwrap_or(""),
                })?;
            }
            Ok(())
        }),
    }
}

/// Returns whether every case passed.
pub fn verify(
    suite: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    timing: bool,
    output: &OutputArgs,
) -> Result<bool, CliError> {
    if !SUITES.contains(&suite) {
        return Err(CliError::Config(format!("unknown suite {suite:?}; known suites: {}", SUITES.join(", "))));
    }
    let cfg: VerifyConfig = match config {
        Some(p) => read_json(p)?,
        None => VerifyConfig::default(),
    };
    let mut opts = SuiteOptions { timing, ..SuiteOptions::default() };
    if let Some(s) = seed.or(cfg.seed) {
        opts.seed = s;
    }
    if let Some(b) = cfg.budget {
        opts.budget = b.to_budget(None)?;
    }
    if let Some(s) = cfg.schedule {
        s.validate().map_err(config_err)?;
        opts.schedule = Some(s);
    }
    let report = run_suite(suite, &opts).map_err(|e| match e {
        AmvError::Input(_) => config_err(e),
        e => eval_err(e),
    })?;
    let (out, format) = resolve_output(output, cfg.output.as_ref(), Format::Json);
    write_output(out, &report_bytes(&report, format)?)?;
    let failed: Vec<&str> = report.failures().map(|c| c.case_id.as_str()).collect();
    eprintln!("suite {suite}: {}/{} cases passed", report.cases.len() - failed.len(), report.cases.len());
    for id in &failed {
        eprintln!("  FAIL {id}");
    }
    Ok(failed.is_empty())
}

/// Builds the cloud and steps `r` up until no pair sits exactly at distance `r`.
fn cloud_and_radius(cfg: &CloudConfig) -> Result<(AtomCloud, f64), CliError> {
    let cloud = cfg.build()?;
    let r = untie_radius(&cloud, cfg.r).map_err(eval_err)?;
    if r != cfg.r {
        eprintln!("amv: radius {} has exact ties; using {r:e}", cfg.r);
    }
    Ok((cloud, r))
}

fn sample_field(cloud: &AtomCloud, spec: &crate::config::FieldSpec, what: &str) -> Result<Vec<f64>, CliError> {
    let f = spec.build(what)?;
    let vals = cloud.sample(&*f);
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Eval(format!("{what} is {} at atom {i} {:?}", vals[i], cloud.atoms[i].point)));
    }
    Ok(vals)
}

#[derive(Serialize)]
struct GreenOutput<'a> {
    schema_version: u32,
    atoms: usize,
    r_requested: f64,
    r: f64,
    nnz: usize,
    #[serde(flatten)]
    report: &'a GreenReport,
}

pub fn green(path: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let cfg: GreenConfig = read_json(path)?;
    let (cloud, r) = cloud_and_radius(&cfg.cloud)?;
    let u = sample_field(&cloud, &cfg.u, "u")?;
    let v = sample_field(&cloud, &cfg.v, "v")?;
    let op = build_amv_operator(&cloud, r).map_err(eval_err)?;
    let g = green_check(&op, &u, &v).map_err(eval_err)?;
    let rep = GreenOutput {
        schema_version: SCHEMA_VERSION,
        atoms: op.len(),
        r_requested: cfg.cloud.r,
        r,
        nnz: op.nnz(),
        report: &g,
    };
    let (out, format) = resolve_output(output, None, Format::Json);
    let bytes = match format {
        Format::Json => to_json(&rep)?,
        Format::Csv => csv_bytes(|w| {
            w.write_record(["quantity", "value"])?;
            for (k, v) in [
                ("atoms", op.len() as f64),
                ("r", r),
                ("nnz", op.nnz() as f64),
                ("lhs", g.lhs),
                ("rhs", g.rhs),
                ("defect", g.defect),
                ("scale", g.scale),
                ("selfadjoint_defect", g.selfadjoint_defect),
            ] {
                w.write_record([k.to_string(), v.to_string()])?;
            }
            Ok(())
        })?,
    };
    write_output(out, &bytes)
}

#[derive(Serialize)]
struct AtomValue<'a> {
    point: &'a [f64],
    u: f64,
    boundary: bool,
}

#[derive(Serialize)]
struct PoissonOutput<'a> {
    schema_version: u32,
    r: f64,
    residual: f64,
    scale: f64,
    refinements: usize,
    pivot_ratio: f64,
    atoms: Vec<AtomValue<'a>>,
}

pub fn poisson(path: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let cfg: PoissonConfig = read_json(path)?;
    let (cloud, r) = cloud_and_radius(&cfg.cloud)?;
    let f = sample_field(&cloud, &cfg.f, "f")?;
    let g = sample_field(&cloud, &cfg.boundary, "boundary")?;
    let bidx = collar_boundary(&cloud, r).map_err(config_err)?;
    if bidx.is_empty() {
        return Err(CliError::Config("the boundary collar is empty; increase r or the resolution".into()));
    }
    let op = build_amv_operator(&cloud, r).map_err(eval_err)?;
    let data: Vec<(usize, f64)> = bidx.iter().map(|&i| (i, g[i])).collect();
    let sol = solve_poisson(&op, &f, &data).map_err(eval_err)?;
    let mut is_b = vec![false; cloud.len()];
    bidx.iter().for_each(|&i| is_b[i] = true);
    let (out, format) = resolve_output(output, None, Format::Csv);
    let bytes = match format {
        Format::Json => to_json(&PoissonOutput {
            schema_version: SCHEMA_VERSION,
            r,
            residual: sol.residual,
            scale: sol.scale,
            refinements: sol.refinements,
            pivot_ratio: sol.pivot_ratio,
            atoms: cloud
                .atoms
                .iter()
                .enumerate()
                .map(|(i, a)| AtomValue { point: &a.point, u: sol.u[i], boundary: is_b[i] })
                .collect(),
        })?,
        Format::Csv => csv_bytes(|w| {
            let dim = cloud.space.ambient_dim();
            let mut header: Vec<String> = vec!["atom".into()];
            header.extend(["x", "y", "z"].iter().take(dim).map(|s| s.to_string()));
            header.extend(["u".to_string(), "boundary".to_string()]);
            w.write_record(&header)?;
            for (i, a) in cloud.atoms.iter().enumerate() {
                let mut rec = vec![i.to_string()];
                rec.extend(a.point.iter().map(|v| v.to_string()));
                rec.extend([sol.u[i].to_string(), is_b[i].to_string()]);
                w.write_record(&rec)?;
            }
            Ok(())
        })?,
    };
    write_output(out, &bytes)
}

#[derive(Serialize)]
struct ExportOutput {
    schema_version: u32,
    rows: usize,
    cols: usize,
    r: f64,
    kind: String,
    triplets: Vec<(usize, usize, f64)>,
}

pub fn export_operator(path: &Path, output: &OutputArgs) -> Result<(), CliError> {
    let cfg: ExportConfig = read_json(path)?;
    let (cloud, r) = cloud_and_radius(&cfg.cloud)?;
    let kind = match cfg.kind {
        KindArg::Tr => OperatorKind::Tr,
        KindArg::DeltaR => OperatorKind::DeltaR,
    };
    let op: DiscreteOperator = build_amv_operator(&cloud, r).map_err(eval_err)?.with_kind(kind);
    let (out, format) = resolve_output(output, None, Format::Csv);
    // The triplet text format stands in for csv here.
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            op.write_triplets(&mut buf).map_err(|e| CliError::Eval(format!("export failed: {e}")))?;
            buf
        }
        Format::Json => to_json(&ExportOutput {
            schema_version: SCHEMA_VERSION,
            rows: op.len(),
            cols: op.len(),
            r,
            kind: kind.to_string(),
            triplets: op.triplets(),
        })?,
    };
    write_output(out, &bytes)
}

pub fn heisenberg_constants(samples: usize, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    if samples == 0 {
        return Err(CliError::Config("samples must be positive".into()));
    }
    let c = HeisenbergConstants::generate(samples, seed).map_err(eval_err)?;
    let mut text = c.to_json();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    write_output(out, text.as_bytes())
}
