use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use depthreg::contours::{
    build_cut, build_family, contours_to_csv, svg_overlay, CutContour, Method, Smoothing,
};
use depthreg::estimators::{global_problem, Dataset, LocalProblem};
use depthreg::geometry::{direction_grid, hausdorff_distance, DirectionGrid, Point2};
use depthreg::kernels::{
    rule_of_thumb_bandwidth, sample_sd, BandwidthPlan, KernelFamily, KernelSpec,
};
use depthreg::simlab::{
    empirical_quantile, equal_area_radius, generate, ingest_csv, oracle_contour, ModelName,
    ModelSpec, PopulationOracle, RateBandwidth, RateExperiment,
};
use serde_json::{json, Map, Value};

use crate::args::{FamilyArgs, IngestArgs, RateArgs, RunArgs, SourceArgs};
use crate::error::{usage, CliError, CliResult};

/// Error context filled in as the run progresses.
pub type Context = Map<String, Value>;

/// Collects output files in one directory, written one at a time.
pub struct Writer {
    dir: PathBuf,
    pub written: Vec<String>,
    pub warnings: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn stem(command: &str, tau: f64, w0: f64) -> String {
    format!("{command}_{tau:.4}_{w0:.4}")
}

/// Fixed conditioning grid -1.89, -1.83, ..., 1.89.
pub fn figure_grid() -> Vec<f64> {
    (0..64).map(|k| (-189 + 6 * k) as f64 / 100.0).collect()
}

struct Prepared {
    data: Dataset,
    model: Option<ModelSpec>,
    method: Method,
    kernel: Option<KernelSpec>,
    plan: Option<BandwidthPlan>,
    grid: DirectionGrid,
    taus: Vec<f64>,
    w0s: Vec<f64>,
}

impl Prepared {
    fn smoothing(&self, tau: f64) -> CliResult<Option<Smoothing<'_>>> {
        Ok(match (&self.kernel, &self.plan) {
            (Some(kernel), Some(plan)) => Some(Smoothing {
                kernel,
                h: plan.for_tau(tau)?,
            }),
            _ => None,
        })
    }

    fn points(&self) -> Vec<Point2> {
        let y = self.data.responses();
        (0..self.data.n()).map(|i| [y[(i, 0)], y[(i, 1)]]).collect()
    }
}

fn ingest(path: &Path, covariate: &str, cols: &[&str]) -> CliResult<depthreg::simlab::Ingested> {
    ingest_csv(path, covariate, cols).map_err(|e| match e {
        depthreg::Error::Io(io) => CliError::io(path, io),
        e => e.into(),
    })
}

fn load(source: &SourceArgs) -> CliResult<(Dataset, Option<ModelSpec>, Vec<String>)> {
    match (&source.model, &source.csv) {
        (Some(_), Some(_)) => usage("--model and --csv are mutually exclusive"),
        (None, None) => usage("a data source is required: --model or --csv"),
        (Some(name), None) => {
            let name: ModelName = name
                .parse()
                .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
            if source.n < 50 {
                return usage(format!("--n must be at least 50, got {}", source.n));
            }
            let spec = ModelSpec::new(name, source.n, source.seed)?;
            Ok((generate(&spec), Some(spec), Vec::new()))
        }
        (None, Some(path)) => {
            let covariate = source
                .covariate
                .as_deref()
                .map_or_else(|| usage("--csv needs --covariate"), Ok)?;
            if source.responses.len() != 2 {
                return usage(format!(
                    "--responses needs exactly two columns, got {}",
                    source.responses.len()
                ));
            }
            let cols: Vec<&str> = source.responses.iter().map(String::as_str).collect();
            let ing = ingest(path, covariate, &cols)?;
            Ok((ing.dataset, None, ing.warnings))
        }
    }
}

fn parse_plan(args: &RunArgs, data: &Dataset) -> CliResult<BandwidthPlan> {
    let s = &args.smoothing;
    let plan = match (s.bandwidth, s.bandwidth_rule.as_deref()) {
        (Some(h), _) => {
            if !(h > 0.0 && h.is_finite()) {
                return usage(format!("--bandwidth must be positive, got {h}"));
            }
            BandwidthPlan::manual(h)?
        }
        (None, None) | (None, Some("thumb")) => BandwidthPlan::rule_of_thumb(data.covariates())?,
        (None, Some(rule)) => match rule.strip_prefix("fz:").map(str::parse::<f64>) {
            Some(Ok(h)) if h > 0.0 && h.is_finite() => BandwidthPlan::fan_zhang(h)?,
            _ => {
                return usage(format!(
                    "--bandwidth-rule must be 'thumb' or 'fz:<h>', got '{rule}'"
                ))
            }
        },
    };
    Ok(match s.tau_adjust.as_deref() {
        None => plan,
        Some("on") => plan.with_tau_adjust(true),
        Some("off") => plan.with_tau_adjust(false),
        Some(other) => return usage(format!("--tau-adjust must be 'on' or 'off', got '{other}'")),
    })
}

fn prepare(
    args: &RunArgs,
    default_w0: Option<Vec<f64>>,
    writer: &mut Writer,
) -> CliResult<Prepared> {
    let (data, model, warnings) = load(&args.source)?;
    writer.warnings.extend(warnings);
    let method: Method = args
        .smoothing
        .method
        .parse()
        .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
    let family: KernelFamily = args
        .smoothing
        .kernel
        .parse()
        .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
    if args.tau.is_empty() {
        return usage("--tau needs at least one value");
    }
    if let Some(t) = args.tau.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return usage(format!("tau values must lie in (0, 1), got {t}"));
    }
    if args.smoothing.directions < 3 {
        return usage(format!(
            "--directions must be at least 3, got {}",
            args.smoothing.directions
        ));
    }
    let covariate: Vec<f64> = data.covariates().column(0).iter().copied().collect();
    let w0s = if !args.w0.is_empty() {
        args.w0.clone()
    } else if !args.w0_quantiles.is_empty() {
        if let Some(q) = args.w0_quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return usage(format!("w0 quantiles must lie in [0, 1], got {q}"));
        }
        args.w0_quantiles
            .iter()
            .map(|&q| empirical_quantile(&covariate, q))
            .collect::<depthreg::Result<_>>()?
    } else {
        match default_w0 {
            Some(v) => v,
            None => vec![empirical_quantile(&covariate, 0.5)?],
        }
    };
    let (kernel, plan) = if method == Method::Global {
        (None, None)
    } else {
        let kernel = KernelSpec::new(family, data.p() - 1)?;
        (Some(kernel), Some(parse_plan(args, &data)?))
    };
    let grid = direction_grid(2, args.smoothing.directions)?;
    Ok(Prepared {
        data,
        model,
        method,
        kernel,
        plan,
        grid,
        taus: args.tau.clone(),
        w0s,
    })
}

fn set_point(ctx: &mut Context, tau: f64, w0: f64) {
    ctx.insert("tau".into(), json!(tau));
    ctx.insert("w0".into(), json!(w0));
}

fn dump_lp(p: &Prepared, tau: f64, w0: f64) -> CliResult<String> {
    let frame = &p.grid.directions()[0];
    let problem = match (p.method, &p.kernel, p.smoothing(tau)?) {
        (Method::Global, ..) => global_problem(&p.data, tau, frame, &vec![1.0; p.data.n()])?,
        (method, Some(kernel), Some(s)) => {
            let local = LocalProblem::new(&p.data, &[w0], kernel, s.h)?;
            if method == Method::LocalConstant {
                local.constant_problem(tau, frame)?
            } else {
                local.bilinear_problem(tau, frame)?
            }
        }
        _ => unreachable!("local methods always carry a kernel"),
    };
    let mut out = String::new();
    problem.write_lp(&mut out);
    Ok(out)
}

const FIT_HEADER: &str = "direction,u1,u2,a,b1,b2,c,objective,subgrad_lo,subgrad_hi,status";

fn fit_csv(cut: &CutContour) -> String {
    let mut out = format!("{FIT_HEADER}\n");
    for (k, f) in cut.per_direction.iter().enumerate() {
        let status = serde_json::to_value(f.status).ok();
        let status = status.as_ref().and_then(Value::as_str).unwrap_or("");
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{},{},{},{status}",
            f.u[0], f.u[1], f.a, f.b[0], f.b[1], f.c[0], f.objective, f.subgrad_lo, f.subgrad_hi
        );
    }
    out
}

fn note_warnings(writer: &mut Writer, cut: &CutContour) {
    for w in &cut.warnings {
        writer
            .warnings
            .push(format!("tau {} w0 {:?}: {w}", cut.tau, cut.w0));
    }
}

/// `fit` and `cut`: one computation per (tau, w0).
pub fn run_sweep(
    command: &str,
    args: &RunArgs,
    writer: &mut Writer,
    ctx: &mut Context,
) -> CliResult<()> {
    let p = prepare(args, None, writer)?;
    let points = p.points();
    for &w0 in &p.w0s {
        let mut cuts = Vec::new();
        for &tau in &p.taus {
            set_point(ctx, tau, w0);
            let cut = build_cut(&p.data, tau, &[w0], &p.grid, p.smoothing(tau)?, p.method)?;
            note_warnings(writer, &cut);
            let name = stem(command, tau, w0);
            if command == "fit" {
                writer.write(&format!("{name}.csv"), &fit_csv(&cut))?;
                let json =
                    serde_json::to_string_pretty(&cut.per_direction).expect("fits serialize");
                writer.write(&format!("{name}.json"), &json)?;
            } else {
                writer.write(&format!("{name}.csv"), &contours_to_csv([&cut]))?;
                writer.write(&format!("{name}.json"), &cut.to_json())?;
            }
            if args.dump_lp {
                writer.write(&format!("{name}.lp"), &dump_lp(&p, tau, w0)?)?;
            }
            cuts.push(cut);
        }
        if command == "cut" {
            let refs: Vec<&CutContour> = cuts.iter().collect();
            writer.write(
                &format!("{command}_{w0:.4}.svg"),
                &svg_overlay(&points, &refs),
            )?;
        }
    }
    Ok(())
}

pub fn run_family(args: &FamilyArgs, writer: &mut Writer, ctx: &mut Context) -> CliResult<()> {
    let run = &args.run;
    if run.tau.windows(2).any(|w| w[0] >= w[1]) {
        return usage("family tau values must be strictly ascending");
    }
    if let Some(t) = run.tau.iter().find(|t| **t > 0.5) {
        return usage(format!("family tau values must not exceed 0.5, got {t}"));
    }
    let p = prepare(run, None, writer)?;
    let points = p.points();
    for &w0 in &p.w0s {
        ctx.insert("w0".into(), json!(w0));
        ctx.remove("tau");
        let family = build_family(
            &p.data,
            &p.taus,
            &[w0],
            &p.grid,
            p.kernel.as_ref(),
            p.plan.as_ref(),
            p.method,
            !args.no_repair,
        )?;
        for (cut, &tau) in family.contours.iter().zip(&p.taus) {
            note_warnings(writer, cut);
            let name = stem("family", tau, w0);
            writer.write(&format!("{name}.csv"), &contours_to_csv([cut]))?;
            writer.write(&format!("{name}.json"), &cut.to_json())?;
            if run.dump_lp {
                writer.write(&format!("{name}.lp"), &dump_lp(&p, tau, w0)?)?;
            }
        }
        if family.crossing_detected {
            writer.warnings.push(format!(
                "w0 {w0}: raw cuts cross{}",
                if args.no_repair {
                    ""
                } else {
                    "; repaired by intersection"
                }
            ));
        }
        let summary = json!({
            "w0": w0,
            "taus": family.taus,
            "crossing_detected": family.crossing_detected,
            "nested_repaired": family.nested_repaired,
        });
        writer.write(
            &format!("family_{w0:.4}.json"),
            &serde_json::to_string_pretty(&summary).expect("json"),
        )?;
        let refs: Vec<&CutContour> = family.contours.iter().collect();
        writer.write(&format!("family_{w0:.4}.svg"), &svg_overlay(&points, &refs))?;
    }
    Ok(())
}

pub fn run_simulate(args: &RunArgs, writer: &mut Writer, ctx: &mut Context) -> CliResult<()> {
    if args.source.model.is_none() {
        return usage("simulate needs --model");
    }
    let p = prepare(args, Some(figure_grid()), writer)?;
    let spec = p.model.expect("model source");
    let oracle = PopulationOracle::new(&spec);

    let mut data_csv = String::from("w,y1,y2\n");
    for i in 0..p.data.n() {
        let y = p.data.response(i);
        let _ = writeln!(data_csv, "{},{},{}", p.data.covariate(i)[0], y[0], y[1]);
    }
    writer.write("simulate_data.csv", &data_csv)?;

    let points = p.points();
    let mut summary =
        String::from("w0,tau,hausdorff,radius,oracle_radius,centroid_y1,centroid_y2\n");
    for &w0 in &p.w0s {
        let mut cuts = Vec::new();
        for &tau in &p.taus {
            set_point(ctx, tau, w0);
            let cut = build_cut(&p.data, tau, &[w0], &p.grid, p.smoothing(tau)?, p.method)?;
            note_warnings(writer, &cut);
            let name = stem("simulate", tau, w0);
            writer.write(&format!("{name}.csv"), &contours_to_csv([&cut]))?;
            writer.write(&format!("{name}.json"), &cut.to_json())?;
            if let (Some(poly), true) = (cut.polygon(), tau < 0.5) {
                let truth = oracle_contour(&spec, w0, tau, 1440)?;
                let c = poly.centroid();
                let _ = writeln!(
                    summary,
                    "{w0},{tau},{},{},{},{},{}",
                    hausdorff_distance(&poly, &truth)?,
                    equal_area_radius(&poly),
                    oracle.radius(w0, tau),
                    c[0],
                    c[1]
                );
            }
            cuts.push(cut);
        }
        let refs: Vec<&CutContour> = cuts.iter().collect();
        writer.write(
            &format!("simulate_{w0:.4}.svg"),
            &svg_overlay(&points, &refs),
        )?;
    }
    writer.write("simulate_summary.csv", &summary)?;
    Ok(())
}

pub fn run_rate(args: &RateArgs, writer: &mut Writer) -> CliResult<Vec<(usize, f64)>> {
    let model: ModelName = args
        .model
        .parse()
        .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
    let method: Method = args
        .method
        .parse()
        .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
    if method == Method::Global {
        return usage("rate needs a local method");
    }
    let family: KernelFamily = args
        .kernel
        .parse()
        .map_err(|e: depthreg::Error| CliError::Usage(e.to_string()))?;
    if !(args.tau > 0.0 && args.tau < 0.5) {
        return usage(format!("--tau must lie in (0, 0.5), got {}", args.tau));
    }
    if args.ns.is_empty() || args.ns.windows(2).any(|w| w[0] >= w[1]) || args.ns[0] < 50 {
        return usage("--ns must be ascending sample sizes of at least 50");
    }
    if args.reps == 0 {
        return usage("--reps must be positive");
    }
    if !(args.bandwidth > 0.0 && args.bandwidth.is_finite()) {
        return usage(format!(
            "--bandwidth must be positive, got {}",
            args.bandwidth
        ));
    }
    if args.directions < 3 {
        return usage(format!(
            "--directions must be at least 3, got {}",
            args.directions
        ));
    }
    let bandwidth = match args.n_ref {
        Some(n_ref) if n_ref > 0.0 => RateBandwidth::Scaled {
            h_ref: args.bandwidth,
            n_ref,
        },
        Some(n_ref) => return usage(format!("--n-ref must be positive, got {n_ref}")),
        None => RateBandwidth::Fixed(args.bandwidth),
    };
    let experiment = RateExperiment {
        model,
        w0: args.w0,
        tau: args.tau,
        method,
        kernel: KernelSpec::new(family, 1)?,
        bandwidth,
        directions: args.directions,
        oracle_vertices: 1440,
        seed: args.seed,
    };
    let table = experiment.run(&args.ns, args.reps)?;
    let name = stem("rate", args.tau, args.w0);
    writer.write(&format!("{name}.csv"), &table.to_csv())?;
    let medians: Vec<Value> = table
        .medians
        .iter()
        .map(|&(n, m)| json!({ "n": n, "bandwidth": bandwidth.at(n), "median_error": m }))
        .collect();
    let summary = json!({ "experiment": experiment, "reps": args.reps, "medians": medians });
    writer.write(
        &format!("{name}.json"),
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    Ok(table.medians)
}

fn column_summary(name: &str, v: &[f64]) -> Value {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    json!({
        "name": name,
        "min": v.iter().cloned().fold(f64::INFINITY, f64::min),
        "max": v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        "mean": mean,
        "sd": sample_sd(v),
    })
}

pub fn run_ingest_info(args: &IngestArgs, writer: &mut Writer) -> CliResult<Value> {
    if args.responses.len() < 2 {
        return usage("--responses needs at least two columns");
    }
    let cols: Vec<&str> = args.responses.iter().map(String::as_str).collect();
    let ing = ingest(&args.csv, &args.covariate, &cols)?;
    let d = &ing.dataset;
    let w: Vec<f64> = d.covariates().column(0).iter().copied().collect();
    let mut columns = vec![column_summary(&args.covariate, &w)];
    for (k, name) in cols.iter().enumerate() {
        let y: Vec<f64> = d.responses().column(k).iter().copied().collect();
        columns.push(column_summary(name, &y));
    }
    let summary = json!({
        "file": args.csv.display().to_string(),
        "n": d.n(),
        "dropped_rows": ing.dropped_rows,
        "warnings": ing.warnings,
        "columns": columns,
        "rule_of_thumb_bandwidth": rule_of_thumb_bandwidth(&w).ok(),
    });
    writer.write(
        "ingest-info.json",
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    writer.warnings.extend(ing.warnings);
    Ok(summary)
}
