use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use fluxscale::aggregate::{build_intervals, illiquidity};
use fluxscale::groups::{group_fit, group_label, group_rank, GroupFitTable, GroupKey, ALL_LABEL};
use fluxscale::ingest::{
    classify_market, merge_collections, parse_bars, parse_calendar, parse_metadata, write_bars, write_calendar,
    write_metadata, ParseOptions, PrefixMap,
};
use fluxscale::numeric::Precision;
use fluxscale::sweep::{default_grid, instrument_points, validate_grid, SweepAccumulator, SweepOutput, SweepScope};
use fluxscale::synth::{write_dataset, Family, Pathologies, SynthReport, SynthSpec};
use fluxscale::taylor::{mean_variance, summary_stats};
use fluxscale::{InstrumentId, InstrumentMeta, Market, MeanVariancePoint, StatsError, SummaryStats};

use crate::store::{self, Manifest, ManifestEntry, Store, FORMAT_VERSION, MANIFEST};
use crate::{CliError, FitArgs, IngestArgs, StatsArgs, SweepArgs, SynthArgs};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Generic(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn out_dir(out: &Option<PathBuf>, store: &Path) -> PathBuf {
    out.clone().unwrap_or_else(|| store.join("results"))
}

/// File-name-safe form of a group label.
fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn bar_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut inside: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| CliError::Generic(format!("cannot read {}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(CliError::Generic(format!("no such file or directory: {}", path.display())));
        }
    }
    Ok(files)
}

fn with_path(e: CliError, path: &Path) -> CliError {
    let at = |m: String| format!("{}: {m}", path.display());
    match e {
        CliError::Schema(m) => CliError::Schema(at(m)),
        CliError::Threshold(m) => CliError::Threshold(at(m)),
        CliError::Insufficient(m) => CliError::Insufficient(at(m)),
        CliError::Usage(m) => CliError::Usage(at(m)),
        CliError::Generic(m) => CliError::Generic(at(m)),
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<Manifest, CliError> {
    let calendar = parse_calendar(store::open(&args.calendar)?).map_err(|e| with_path(e.into(), &args.calendar))?;
    let prefix_map = match &args.prefix_map {
        Some(s) => s.parse::<PrefixMap>().map_err(|e| CliError::Usage(e.to_string()))?,
        None => PrefixMap::default(),
    };
    let (metas, meta_report) = match &args.meta {
        Some(path) => parse_metadata(store::open(path)?, &prefix_map).map_err(|e| with_path(e.into(), path))?,
        None => Default::default(),
    };
    for (row, reason) in &meta_report.rejected {
        eprintln!("warning: metadata row {row} rejected: {reason}");
    }

    let options = ParseOptions {
        rejection_threshold: args.max_reject,
    };
    let files = bar_files(&args.bars)?;
    let parts = files
        .par_iter()
        .map(|path| {
            parse_bars(store::open(path)?, &calendar, &options).map_err(|e| with_path(e.into(), path))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (bars, report) = merge_collections(parts);

    let bars_dir = args.out.join("bars");
    fs::create_dir_all(&bars_dir)?;
    let market_of: HashMap<InstrumentId, Market> = metas.iter().map(|m| (m.code, m.market)).collect();
    let entries = bars
        .par_iter()
        .filter(|(_, seq)| !seq.is_empty())
        .map(|(&code, seq)| {
            let path = bars_dir.join(format!("{code}.csv"));
            let file = fs::File::create(&path)?;
            write_bars(file, seq).map_err(|e| with_path(e.into(), &path))?;
            let market = match market_of.get(&code) {
                Some(&m) => Some(m),
                None => classify_market(code.as_str(), &prefix_map).ok().and_then(|c| c.market()),
            };
            Ok(ManifestEntry {
                code,
                market,
                first_date: seq[0].timestamp.date,
                last_date: seq[seq.len() - 1].timestamp.date,
                rows: seq.len(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    write_calendar(fs::File::create(args.out.join("calendar.csv"))?, &calendar)?;
    write_metadata(fs::File::create(args.out.join("meta.csv"))?, &metas)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        instruments: entries,
        ingest: report,
        metadata: meta_report,
    };
    write_file(&args.out.join(MANIFEST), &to_json(&manifest))?;

    let r = &manifest.ingest;
    println!(
        "ingested {} instruments: {} rows read, {} accepted, {} rejected",
        manifest.instruments.len(),
        r.rows_read,
        r.rows_accepted,
        r.rows_rejected
    );
    for (reason, n) in &r.rejections {
        println!("  {reason}: {n}");
    }
    Ok(manifest)
}

fn parse_markets(list: &str) -> Result<Vec<Market>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<Market>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

fn open_nonempty(path: &Path) -> Result<Store, CliError> {
    let store = Store::open(path)?;
    if store.manifest.instruments.is_empty() {
        return Err(CliError::Insufficient(format!("store {} holds no instruments", path.display())));
    }
    Ok(store)
}

/// Mean-variance point of every instrument at `dt`, in manifest order.
pub fn store_points(store: &Store, dt: u32) -> Result<Vec<MeanVariancePoint>, CliError> {
    let points = store
        .manifest
        .instruments
        .par_iter()
        .map(|entry| {
            let bars = store.load_bars(entry.code)?;
            let intervals = build_intervals(&bars, dt, &store.calendar)
                .map_err(|e| CliError::Generic(format!("{}: {e}", entry.code)))?;
            match mean_variance(&illiquidity(&intervals)) {
                Ok(p) => Ok(Some(p)),
                Err(StatsError::EmptySeries) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(points.into_iter().flatten().collect())
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub table: GroupFitTable,
    pub points: Vec<MeanVariancePoint>,
    pub out: PathBuf,
}

/// The `(group, market)` cells a point contributes to.
fn cells(meta: &InstrumentMeta, key: GroupKey) -> Vec<(String, String)> {
    match key {
        GroupKey::WholeSample => vec![(ALL_LABEL.into(), ALL_LABEL.into())],
        GroupKey::Market => vec![
            (ALL_LABEL.into(), ALL_LABEL.into()),
            (meta.market.name().into(), ALL_LABEL.into()),
        ],
        _ => match group_label(meta, key) {
            Some(label) => vec![(label.clone(), ALL_LABEL.into()), (label, meta.market.name().into())],
            None => Vec::new(),
        },
    }
}

pub fn cmd_fit(args: &FitArgs, precision: Precision) -> Result<FitOutcome, CliError> {
    if args.dt == 0 {
        return Err(CliError::Usage("--dt must be at least 1".into()));
    }
    let key: GroupKey = args.group.parse()?;
    let filter = args.market_filter.as_deref().map(parse_markets).transpose()?;
    let store = open_nonempty(&args.store)?;
    let points = store_points(&store, args.dt)?;
    let metas = store.grouping_meta();
    let table = group_fit(&points, &metas, key, filter.as_deref(), args.min_n)?;
    if table.rows.iter().all(|r| r.n == 0) {
        eprintln!("warning: no instrument has the metadata needed for --group {key}; table is empty");
    } else if table.excluded_missing_meta > 0 {
        eprintln!(
            "warning: {} instruments excluded for missing {key} metadata",
            table.excluded_missing_meta
        );
    }

    let out = out_dir(&args.out, &args.store);
    let stem = format!("{key}_dt{}", args.dt);
    let tsv = table.to_tsv(precision);
    write_file(&out.join(format!("fit_{stem}.tsv")), &tsv)?;
    print!("{tsv}");

    let by_code: HashMap<InstrumentId, &InstrumentMeta> = metas.iter().map(|m| (m.code, m)).collect();
    let mut points_tsv = String::from("instrument\tmarket\tmean\tvariance\tsamples\n");
    let mut scatter: BTreeMap<(String, String), String> = BTreeMap::new();
    for p in &points {
        let meta = by_code.get(&p.instrument);
        let market = meta.map_or("/", |m| m.market.name());
        let _ = writeln!(
            points_tsv,
            "{}\t{market}\t{}\t{}\t{}",
            p.instrument,
            precision.format(p.mean),
            precision.format(p.variance),
            p.sample_count
        );
        let (Some(meta), true) = (meta, p.mean > 0.0 && p.variance > 0.0) else {
            continue;
        };
        if filter.as_ref().is_some_and(|f| !f.contains(&meta.market)) {
            continue;
        }
        for cell in cells(meta, key) {
            let body = scatter.entry(cell).or_insert_with(|| "log10_m\tlog10_V\n".into());
            let _ = writeln!(
                body,
                "{}\t{}",
                precision.format(p.mean.log10()),
                precision.format(p.variance.log10())
            );
        }
    }
    write_file(&out.join(format!("points_dt{}.tsv", args.dt)), &points_tsv)?;

    let scatter_dir = out.join(format!("scatter_{stem}"));
    let mut lines = String::from("group\tmarket\tlog10_m_lo\tlog10_V_lo\tlog10_m_hi\tlog10_V_hi\n");
    for row in &table.rows {
        let cell = (row.group.clone(), row.market.clone());
        if let Some(body) = scatter.get(&cell) {
            write_file(&scatter_dir.join(format!("{}__{}.tsv", slug(&row.group), slug(&row.market))), body)?;
        }
        let Some(fit) = row.fit.fit() else { continue };
        let xs: Vec<f64> = scatter
            .get(&cell)
            .map(|b| b.lines().skip(1).filter_map(|l| l.split('\t').next()?.parse().ok()).collect())
            .unwrap_or_default();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() {
            let _ = writeln!(
                lines,
                "{}\t{}\t{}\t{}\t{}\t{}",
                row.group,
                row.market,
                precision.format(lo),
                precision.format(fit.log_a + fit.b * lo),
                precision.format(hi),
                precision.format(fit.log_a + fit.b * hi)
            );
        }
    }
    write_file(&out.join(format!("fit_lines_{stem}.tsv")), &lines)?;
    Ok(FitOutcome { table, points, out })
}

pub fn parse_grid(s: &str) -> Result<Vec<u32>, CliError> {
    if s.trim() == "default" {
        return Ok(default_grid());
    }
    let grid = s
        .split(',')
        .map(|part| {
            let v: i64 = part
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid grid entry {part:?}")))?;
            if v < 1 {
                return Err(CliError::Usage(format!("grid entries must be >= 1, got {v}")));
            }
            u32::try_from(v).map_err(|_| CliError::Usage(format!("grid entry {v} too large")))
        })
        .collect::<Result<Vec<u32>, CliError>>()?;
    validate_grid(&grid)?;
    Ok(grid)
}

pub fn cmd_sweep(args: &SweepArgs, precision: Precision) -> Result<SweepOutput, CliError> {
    let grid = parse_grid(&args.grid)?;
    let scope = match args.scope.as_str() {
        "all" => SweepScope::WholeSample,
        "per-market" => SweepScope::PerMarket,
        other => return Err(CliError::Usage(format!("--scope must be all or per-market, got {other:?}"))),
    };
    let store = open_nonempty(&args.store)?;
    let per_instrument = store
        .manifest
        .instruments
        .par_iter()
        .map(|entry| {
            let bars = store.load_bars(entry.code)?;
            let points = instrument_points(&bars, &grid, &store.calendar)
                .map_err(|e| CliError::Generic(format!("{}: {e}", entry.code)))?;
            Ok((entry.market, points))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut acc = SweepAccumulator::new(&grid, scope)?;
    for (market, points) in per_instrument {
        acc.push(market, points);
    }
    let output = acc.finish(args.plateau_eps);

    let out = out_dir(&args.out, &args.store);
    for w in &output.warnings {
        eprintln!("warning: scope {} delta_t {}: {}", w.scope, w.delta_t, w.message);
    }
    if output.curves.is_empty() {
        return Err(CliError::Insufficient("no scope produced a fitted curve".into()));
    }
    for scoped in &output.curves {
        let name = slug(&scoped.scope);
        let tsv = scoped.curve.to_tsv(precision);
        write_file(&out.join(format!("sweep_{name}.tsv")), &tsv)?;
        write_file(&out.join(format!("sweep_{name}.json")), &to_json(&scoped.curve.sidecar()))?;
        println!("# scope {}", scoped.scope);
        print!("{tsv}");
    }
    if !output.warnings.is_empty() {
        write_file(&out.join("sweep_warnings.json"), &to_json(&output.warnings))?;
    }
    Ok(output)
}

fn parse_params(s: &str) -> Result<BTreeMap<String, f64>, CliError> {
    const KEYS: [&str; 13] = [
        "k",
        "b",
        "log_a",
        "instruments",
        "samples",
        "m_lo",
        "m_hi",
        "sigma_lo",
        "sigma_hi",
        "tau",
        "duplicate_rate",
        "zero_volume_rate",
        "missing_rate",
    ];
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value in --params, got {part:?}")))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(CliError::Usage(format!("unknown parameter {k:?}; expected one of {}", KEYS.join(", "))));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("parameter {k} is not a number: {v:?}")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

fn count(v: f64, name: &str) -> Result<usize, CliError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(CliError::Usage(format!("{name} must be a non-negative integer, got {v}")))
    }
}

pub fn synth_spec(args: &SynthArgs) -> Result<SynthSpec, CliError> {
    let params = match &args.params {
        Some(s) => parse_params(s)?,
        None => BTreeMap::new(),
    };
    let get = |flag: Option<f64>, key: &str| flag.or_else(|| params.get(key).copied());
    let family = match args.family.as_str() {
        "poisson" | "poisson-flux" => Family::PoissonFlux,
        "gamma" | "gamma-fixed-shape" => Family::GammaFixedShape {
            shape: get(args.k, "k").unwrap_or(4.0),
        },
        "lognormal" | "lognormal-power-law" => Family::LognormalPowerLaw {
            exponent: get(args.b, "b").unwrap_or(2.0),
            log10_prefactor: get(args.log_a, "log_a").unwrap_or(0.0),
        },
        "bar-level" | "bar-level-market" => {
            let Family::BarLevelMarket {
                sigma_range: (s_lo, s_hi),
                volume_dispersion,
            } = Family::bar_level_default()
            else {
                unreachable!()
            };
            Family::BarLevelMarket {
                sigma_range: (get(None, "sigma_lo").unwrap_or(s_lo), get(None, "sigma_hi").unwrap_or(s_hi)),
                volume_dispersion: get(None, "tau").unwrap_or(volume_dispersion),
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown family {other:?}; expected poisson, gamma, lognormal or bar-level"
            )))
        }
    };
    let default_range = match family {
        Family::PoissonFlux => (1.0, 1000.0),
        _ => (1e-8, 1e-6),
    };
    let instruments = match get(args.instruments.map(|n| n as f64), "instruments") {
        Some(v) => count(v, "instruments")?,
        None => 100,
    };
    let samples = match get(args.samples.map(|n| n as f64), "samples") {
        Some(v) => count(v, "samples")?,
        None => 2400,
    };
    let mut spec = SynthSpec::new(
        family,
        instruments,
        samples,
        (
            get(args.mean_lo, "m_lo").unwrap_or(default_range.0),
            get(args.mean_hi, "m_hi").unwrap_or(default_range.1),
        ),
        args.seed,
    );
    spec.pathologies = Pathologies {
        duplicate_rate: get(args.duplicate_rate, "duplicate_rate").unwrap_or(0.0),
        zero_volume_rate: get(args.zero_volume_rate, "zero_volume_rate").unwrap_or(0.0),
        missing_rate: get(args.missing_rate, "missing_rate").unwrap_or(0.0),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SynthReport, CliError> {
    let spec = synth_spec(args)?;
    let report = write_dataset(&spec, &args.out)?;
    println!(
        "wrote {} instruments x {} days ({} rows) to {}",
        report.instruments,
        report.days,
        report.rows_written,
        args.out.display()
    );
    Ok(report)
}

pub fn cmd_stats(args: &StatsArgs, precision: Precision) -> Result<Vec<(String, SummaryStats)>, CliError> {
    if args.dt == 0 {
        return Err(CliError::Usage("--dt must be at least 1".into()));
    }
    let key: GroupKey = args.group.parse()?;
    let store = open_nonempty(&args.store)?;
    let metas = store.grouping_meta();
    let by_code: HashMap<InstrumentId, &InstrumentMeta> = metas.iter().map(|m| (m.code, m)).collect();
    let values = store
        .manifest
        .instruments
        .par_iter()
        .map(|entry| {
            let label = match key {
                GroupKey::WholeSample => Some(ALL_LABEL.to_string()),
                _ => by_code.get(&entry.code).and_then(|m| group_label(m, key)),
            };
            let Some(label) = label else {
                return Ok(None);
            };
            let bars = store.load_bars(entry.code)?;
            let intervals = build_intervals(&bars, args.dt, &store.calendar)
                .map_err(|e| CliError::Generic(format!("{}: {e}", entry.code)))?;
            Ok(Some((label, illiquidity(&intervals).values().collect::<Vec<f64>>())))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut pools: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for (label, v) in values.into_iter().flatten() {
        pools.entry((group_rank(key, &label), label)).or_default().extend(v);
    }
    let mut rows = Vec::new();
    for ((_, label), pool) in pools {
        match summary_stats(&pool) {
            Ok(s) => rows.push((label, s)),
            Err(e) => eprintln!("warning: group {label}: {e}"),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Insufficient("no illiquidity values to summarize".into()));
    }
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "/".to_string(), |x| precision.format(x));
    let mut tsv = String::from("group\tcount\tmax\tmin\tmean\tmedian\tstd\tskewness\tkurtosis\n");
    for (label, s) in &rows {
        let _ = writeln!(
            tsv,
            "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.count,
            precision.format(s.max),
            precision.format(s.min),
            precision.format(s.mean),
            precision.format(s.median),
            precision.format(s.std),
            fmt_opt(s.skewness),
            fmt_opt(s.kurtosis)
        );
    }
    let out = out_dir(&args.out, &args.store);
    write_file(&out.join(format!("stats_{key}_dt{}.tsv", args.dt)), &tsv)?;
    print!("{tsv}");
    Ok(rows)
}
