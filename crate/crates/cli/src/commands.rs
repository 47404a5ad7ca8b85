//! Subcommand implementations. Each command writes its outputs into the
//! output directory together with a `<command>.manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use marbubble::bubble::{empirical_quantile, DetectionReport, Diagnosis, XiStats};
use marbubble::estimation::{
    gcov_estimate, ols_noncausal, CovarianceMethod, FitReport, GcovConfig, GcovOptions, Order, ParamEstimate,
    StartStrategy, TransformSpec, Weighting,
};
use marbubble::model::{simulate, ErrorDist, MarModel};
use marbubble::moments::{moments_report, ConditionalState};
use marbubble::montecarlo::{self, Family, McConfig, McTable, Pick};
use marbubble::series::{
    load_csv, rolling_variance, spline_detrend, summary, write_csv, write_detrend_csv, SplineBoundary,
};
use marbubble::tail::{default_hill_k, hill_estimate, time_to_peak_report};
use marbubble::{Error, Result, TimeSeries};
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::Recorder;
use crate::{
    BoundaryArg, Cli, Command, DetectArgs, DetrendArgs, DurationArgs, EstimateArgs, FamilyArg, FitArgs, Format, McArgs,
    Method, MomentsArgs, PickArg, SimulateArgs, StatsArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out_dir).map_err(|source| Error::Io {
        path: cli.out_dir.clone(),
        source,
    })?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Estimate(a) => cmd_estimate(cli, a),
        Command::Detect(a) => cmd_detect(cli, a),
        Command::Duration(a) => cmd_duration(cli, a),
        Command::Moments(a) => cmd_moments(cli, a),
        Command::Mc(a) => cmd_mc(cli, a),
        Command::Detrend(a) => cmd_detrend(cli, a),
        Command::Stats(a) => cmd_stats(cli, a),
    }
}

fn config<T: Serialize>(cli: &Cli, args: &T) -> Value {
    json!({
        "seed": cli.seed,
        "threads": cli.threads,
        "out_dir": cli.out_dir,
        "format": cli.format,
        "args": serde_json::to_value(args).unwrap_or(Value::Null),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes `value` as pretty JSON with a `manifest` field naming the manifest.
fn write_json<T: Serialize>(path: &Path, value: &T, manifest: &str) -> Result<()> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Validation(e.to_string()))?;
    match &mut v {
        Value::Object(map) => {
            map.insert("manifest".into(), Value::String(manifest.into()));
        }
        other => {
            v = json!({ "data": other.take(), "manifest": manifest });
        }
    }
    let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn series_json(ts: &TimeSeries) -> Value {
    json!({
        "label": ts.label(),
        "dates": ts.dates(),
        "values": ts.values(),
    })
}

fn write_series(rec: &mut Recorder, stem: &str, format: Format, ts: &TimeSeries) -> Result<()> {
    let manifest = rec.manifest_name();
    match format {
        Format::Csv => {
            let path = rec.output(&format!("{stem}.csv"));
            write_csv(create(&path)?, ts)
        }
        Format::Json => {
            let path = rec.output(&format!("{stem}.json"));
            write_json(&path, &series_json(ts), &manifest)
        }
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn finish(rec: Recorder) -> Result<()> {
    let path = rec.finish()?;
    announce(&path);
    Ok(())
}

fn build_model(a: &crate::ModelArgs) -> Result<MarModel> {
    let dist: ErrorDist = a.dist.parse()?;
    let m = match (&a.ar2_roots, a.r, a.s) {
        (Some(l), _, _) => MarModel::ar2(l[0], l[1], dist),
        (None, 1, 1) => MarModel::mar11(a.phi, a.psi, dist),
        (None, 0, 1) => MarModel::mar01(a.psi, dist),
        (None, 1, 0) => MarModel::mar10(a.phi, dist),
        (None, 0, 0) => MarModel::white_noise(dist),
        (None, r, s) => return Err(Error::Unsupported(format!("MAR({r},{s})"))),
    };
    m.validate()
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let model = build_model(&a.model)?;
    let ts = simulate(&model, a.t_len, cli.seed, a.burn)?;
    let mut rec = Recorder::new("simulate", config(cli, a), vec![cli.seed], &cli.out_dir);
    write_series(&mut rec, "simulated", cli.format, &ts)?;
    finish(rec)
}

fn gcov_options(cli: &Cli, f: &FitArgs) -> Result<GcovOptions> {
    let transforms = match &f.transforms {
        Some(e) => TransformSpec::powers(e),
        None => TransformSpec::integer_powers(f.k),
    };
    let mut config = GcovConfig::new(transforms, f.h);
    if f.diagonal {
        config.weighting = Weighting::Diagonal;
    }
    config.validate()?;
    let mut opts = GcovOptions::with_config(config);
    if f.full_grid {
        opts.starts = StartStrategy::FullGrid;
    }
    if let Some(replications) = f.bootstrap {
        opts.covariance = CovarianceMethod::Bootstrap {
            replications,
            seed: cli.seed,
            burn: marbubble::model::DEFAULT_BURN,
        };
    }
    Ok(opts)
}

fn fit(cli: &Cli, y: &[f64], f: &FitArgs) -> Result<(FitReport, ParamEstimate)> {
    let order = Order::new(f.r, f.s)?;
    match f.method {
        Method::Ols => {
            if order != Order::MAR01 {
                return Err(Error::Unsupported("OLS is available for MAR(0,1) only".into()));
            }
            let o = ols_noncausal(y)?;
            Ok((FitReport::from_ols(&o), o.estimate()))
        }
        Method::Gcov => {
            let g = gcov_estimate(y, order, &gcov_options(cli, f)?)?;
            Ok((FitReport::from_gcov(&g)?, g.estimate()))
        }
    }
}

fn load(rec: &mut Recorder, input: &crate::InputArgs) -> Result<TimeSeries> {
    let ts = load_csv(&input.input, &input.date_col, &input.value_col)?;
    rec.input(&input.input)?;
    Ok(ts)
}

fn cmd_estimate(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    let mut rec = Recorder::new("estimate", config(cli, a), vec![cli.seed], &cli.out_dir);
    let ts = load(&mut rec, &a.input)?;
    let (report, _) = fit(cli, ts.values(), &a.fit)?;
    let manifest = rec.manifest_name();
    let path = rec.output("estimate.json");
    write_json(&path, &report, &manifest)?;
    announce(&path);
    finish(rec)
}

#[derive(Serialize)]
struct DetectOutput<'a> {
    fit: Option<FitReport>,
    detrended: bool,
    #[serde(flatten)]
    detection: &'a DetectionReport,
    /// ξ̂ over horizons 0..=H at every exceedance of the threshold.
    exceedances: Vec<Diagnosis>,
}

fn is_constant(y: &[f64]) -> bool {
    y.windows(2).all(|w| w[0] == w[1])
}

fn cmd_detect(cli: &Cli, a: &DetectArgs) -> Result<()> {
    let mut rec = Recorder::new("detect", config(cli, a), vec![cli.seed], &cli.out_dir);
    let raw = load(&mut rec, &a.input)?;
    let ts = if a.detrend {
        spline_detrend(&raw, a.knot_months, SplineBoundary::Free)?.residual
    } else {
        raw
    };
    let y = ts.values();
    // A constant series has no exceedances, so no fit is needed.
    let (fit_report, est) = if is_constant(y) {
        (
            None,
            ParamEstimate::known(a.fit.r, a.fit.s, 0.0, 0.0, [[0.0; 2]; 2], y.len()),
        )
    } else {
        let (r, e) = fit(cli, y, &a.fit)?;
        (Some(r), e)
    };
    let detection = DetectionReport::build(&ts, &est, a.threshold, a.min_run)?;
    let stats = XiStats::new(y, est)?;
    let q = empirical_quantile(y, a.threshold)?;
    let exceedances = (0..y.len())
        .filter(|&t| y[t] > q)
        .map(|t| stats.diagnose(t, a.horizons))
        .collect::<Result<Vec<_>>>()?;
    let out = DetectOutput {
        fit: fit_report,
        detrended: a.detrend,
        detection: &detection,
        exceedances,
    };
    let manifest = rec.manifest_name();
    let path = rec.output("detection.json");
    write_json(&path, &out, &manifest)?;
    announce(&path);
    if cli.format == Format::Csv {
        let path = rec.output("detection_points.csv");
        detection.write_csv(create(&path)?, &ts)?;
        announce(&path);
    }
    finish(rec)
}

fn cmd_duration(cli: &Cli, a: &DurationArgs) -> Result<()> {
    let mut rec = Recorder::new("duration", config(cli, a), vec![cli.seed], &cli.out_dir);
    let (alpha, hill) = match (a.alpha, &a.input) {
        (Some(alpha), _) => (alpha, None),
        (None, Some(input)) => {
            let ts = load_csv(input, &a.date_col, &a.value_col)?;
            rec.input(input)?;
            let k = a.hill_k.unwrap_or_else(|| default_hill_k(ts.len()));
            let h = hill_estimate(ts.values(), k)?;
            (h.alpha, Some(h))
        }
        (None, None) => {
            return Err(Error::Validation(
                "give --alpha or an --input series for the Hill estimator".into(),
            ))
        }
    };
    let model = MarModel::mar11(a.phi, a.psi, ErrorDist::Cauchy { scale: 1.0 });
    let report = time_to_peak_report(&model, alpha, &a.months, a.gamma)?;
    let manifest = rec.manifest_name();
    let path = rec.output("duration.json");
    write_json(&path, &json!({ "report": report, "hill": hill }), &manifest)?;
    announce(&path);
    println!(
        "E(N) = {:.4}  E(N|N<0) = {:.4}  median = {}  interval = [{}, {}]",
        report.e_n, report.e_n_given_neg, report.median, report.interval.lo, report.interval.hi
    );
    finish(rec)
}

fn cmd_moments(cli: &Cli, a: &MomentsArgs) -> Result<()> {
    let mut rec = Recorder::new("moments", config(cli, a), vec![cli.seed], &cli.out_dir);
    let state = ConditionalState::new(a.y_t, a.y_tm1, a.sigma)?;
    let report = moments_report(&state, a.phi, a.psi)?;
    let manifest = rec.manifest_name();
    let path = rec.output("moments.json");
    write_json(&path, &report, &manifest)?;
    announce(&path);
    finish(rec)
}

fn mc_config(cli: &Cli, a: &McArgs) -> Result<McConfig> {
    let dists = a.dists.iter().map(|d| d.parse()).collect::<Result<Vec<ErrorDist>>>()?;
    let replications = if a.full { 1000 } else { a.replications };
    let mut cfg = match a.family {
        FamilyArg::Mar01 => McConfig::mar01(replications, cli.seed),
        FamilyArg::Mar11 => McConfig::mar11(a.psi.clone(), a.phi.clone(), dists.clone(), replications, cli.seed),
    };
    cfg.family = match a.family {
        FamilyArg::Mar01 => Family::Mar01Ols,
        FamilyArg::Mar11 => Family::Mar11Gcov,
    };
    cfg.dists = dists;
    cfg.psi = a.psi.clone();
    cfg.t_len = a.t_len;
    cfg.size_quantile = a.size_quantile;
    cfg.power_quantile = a.power_quantile;
    cfg.pick = match a.pick {
        PickArg::First => Pick::First,
        PickArg::Last => Pick::Last,
        PickArg::Max => Pick::Max,
    };
    cfg.gcov = GcovOptions::with_config(GcovConfig::new(TransformSpec::integer_powers(a.k), a.h));
    cfg.validate()?;
    Ok(cfg)
}

fn write_table(rec: &mut Recorder, name: &str, t: &McTable) -> Result<()> {
    let path = rec.output(name);
    t.write_csv(create(&path)?)?;
    announce(&path);
    Ok(())
}

fn cmd_mc(cli: &Cli, a: &McArgs) -> Result<()> {
    let cfg = mc_config(cli, a)?;
    let mut rec = Recorder::new(
        "mc",
        json!({ "cli": config(cli, a), "resolved": cfg }),
        vec![cli.seed],
        &cli.out_dir,
    );
    let (size, power) = montecarlo::run(&cfg)?;
    match cli.format {
        Format::Csv => {
            write_table(&mut rec, "mc_size.csv", &size)?;
            write_table(&mut rec, "mc_power.csv", &power)?;
        }
        Format::Json => {
            let manifest = rec.manifest_name();
            let path = rec.output("mc.json");
            write_json(&path, &json!({ "size": size, "power": power }), &manifest)?;
            announce(&path);
        }
    }
    let text = format!("{}\n{}", size.render_text(), power.render_text());
    let path = rec.output("mc.txt");
    fs::write(&path, &text).map_err(io_err(&path))?;
    print!("{text}");
    finish(rec)
}

fn cmd_detrend(cli: &Cli, a: &DetrendArgs) -> Result<()> {
    let mut rec = Recorder::new("detrend", config(cli, a), vec![cli.seed], &cli.out_dir);
    let mut ts = load(&mut rec, &a.input)?;
    if a.monthly {
        ts = ts.resample_monthly_last()?;
    }
    let boundary = match a.boundary {
        BoundaryArg::Free => SplineBoundary::Free,
        BoundaryArg::Natural => SplineBoundary::Natural,
    };
    let d = spline_detrend(&ts, a.knot_months, boundary)?;
    match cli.format {
        Format::Csv => {
            let path = rec.output("detrended.csv");
            write_detrend_csv(create(&path)?, &ts, &d)?;
            announce(&path);
        }
        Format::Json => {
            let manifest = rec.manifest_name();
            let path = rec.output("detrended.json");
            let v = json!({
                "dates": ts.dates(),
                "y": ts.values(),
                "trend": d.trend,
                "residual": d.residual.values(),
                "knots": d.knots,
            });
            write_json(&path, &v, &manifest)?;
            announce(&path);
        }
    }
    finish(rec)
}

fn cmd_stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let mut rec = Recorder::new("stats", config(cli, a), vec![cli.seed], &cli.out_dir);
    let ts = load(&mut rec, &a.input)?;
    let s = summary(&ts)?;
    let k = a.hill_k.unwrap_or_else(|| default_hill_k(ts.len()));
    let hill = hill_estimate(ts.values(), k)
        .map_err(|e| eprintln!("warning: Hill estimate unavailable: {e}"))
        .ok();
    let manifest = rec.manifest_name();
    let path = rec.output("stats.json");
    write_json(&path, &json!({ "summary": s, "hill": hill }), &manifest)?;
    announce(&path);
    let rv = rolling_variance(&ts, a.window)?;
    write_series(&mut rec, "rolling_variance", cli.format, &rv)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "n = {}  mean = {:.6}  sd = {:.6}", s.n, s.mean, s.sd);
    finish(rec)
}
