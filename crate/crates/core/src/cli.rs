//! The `apk` command line.
//!
//! Exit codes: 0 success, 1 failed verdict, 2 budget exceeded, 3 certification
//! failure, 4 unreadable or malformed input, 64 usage.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::assouad::{certify_lower_bound, estimate_assouad, ScanPlan, DEFAULT_RHO_MIN, SCAN_HEADER};
use crate::construction::{build_diamond_set, build_saito_set, SaitoLayout, SaitoSet};
use crate::covering::{cover_sweep, CoverOptions, NET_DIVISOR, SWEEP_HEADER};
use crate::directions::{enumerate_directions, enumerate_orientation_tuples};
use crate::error::{ApkError, Result};
use crate::geometry::{Orientation, Point};
use crate::io::{f17_mat, f17_vec, parse_real, parse_real_list, read_json, to_json, write_csv};
use crate::patches::{find_ap_in_saito, find_patch_in_diamond, verify_eps_ap, DiamondSearch, EpsAP, TupleSearch, DEFAULT_TUPLE_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

/// Exit code for an error.
pub fn exit_code(e: &ApkError) -> i32 {
    match e {
        ApkError::SamplingBudgetExceeded { .. } | ApkError::TupleBudgetExceeded { .. } | ApkError::Overflow(_) => EXIT_BUDGET,
        ApkError::CertificationFailed(_)
        | ApkError::InequalityViolated(_)
        | ApkError::NoInitialPoint
        | ApkError::ConstructionOverlap(..) => EXIT_CERTIFICATION,
        ApkError::Schema { .. } | ApkError::Io(_) => EXIT_INPUT,
        ApkError::InvalidParameter(_)
        | ApkError::InsufficientPoints { .. }
        | ApkError::NotPrimitive(_)
        | ApkError::LinearlyDependent { .. }
        | ApkError::EpsilonHypothesis { .. } => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "apk", version, about = "Approximate arithmetic patches in Saito-type sets")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a truncated set and write it as JSON.
    Construct(ConstructArgs),
    /// Emit the direction enumeration as JSON lines.
    EnumDirs(EnumDirsArgs),
    /// Find a certified approximate patch.
    FindAp(FindApArgs),
    /// Re-verify a patch file.
    VerifyAp(VerifyApArgs),
    /// Covering brackets at one center over a grid of radii and ratios.
    Cover(CoverArgs),
    /// Local-exponent scan of a set.
    EstimateDim(EstimateArgs),
    /// Finite-k lower-bound certificates.
    CertifyLb(CertifyArgs),
}

fn real(s: &str) -> std::result::Result<f64, String> {
    parse_real(s).map_err(|e| e.to_string())
}

/// Comma-separated reals.
#[derive(Debug, Clone)]
struct Reals(Vec<f64>);

/// Comma-separated sizes.
#[derive(Debug, Clone)]
struct Sizes(Vec<usize>);

/// Rows separated by `;`, entries by `,`.
#[derive(Debug, Clone)]
struct Rows(Vec<Vec<f64>>);

fn real_list(s: &str) -> std::result::Result<Reals, String> {
    parse_real_list(s).map(Reals).map_err(|e| e.to_string())
}

fn size_list(s: &str) -> std::result::Result<Sizes, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"))).collect::<std::result::Result<_, _>>().map(Sizes)
}

fn matrix(s: &str) -> std::result::Result<Rows, String> {
    s.split(';').map(|r| parse_real_list(r).map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>().map(Rows)
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    depth: u64,
    /// Diamond construction (otherwise segments).
    #[arg(long)]
    diamonds: bool,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnumDirsArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    count: usize,
    /// Enumerate m-tuples instead of single directions.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DirectionArgs {
    /// Unit direction, comma separated.
    #[arg(long, value_parser = real_list, allow_hyphen_values = true, conflicts_with_all = ["angle", "orientation"])]
    e: Option<Reals>,
    /// Angle in radians (d = 2).
    #[arg(long, value_parser = real, allow_hyphen_values = true, conflicts_with = "orientation")]
    angle: Option<f64>,
    /// Orientation rows such as "2,0;0,1".
    #[arg(long, value_parser = matrix, allow_hyphen_values = true)]
    orientation: Option<Rows>,
}

impl DirectionArgs {
    fn orientation(&self, d: usize) -> Result<Orientation> {
        match (&self.e, self.angle, &self.orientation) {
            (Some(e), _, _) => Orientation::new(vec![Point::new(e.0.clone())?]),
            (_, Some(a), _) => {
                if d != 2 {
                    return Err(ApkError::invalid("--angle needs --d 2"));
                }
                Orientation::new(vec![Point::new(vec![a.cos(), a.sin()])?])
            }
            (_, _, Some(rows)) => Orientation::from_coords(&rows.0),
            _ => Err(ApkError::invalid("give one of --e, --angle or --orientation")),
        }
    }
}

#[derive(Args, Debug)]
struct FindApArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[command(flatten)]
    dir: DirectionArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, value_parser = real)]
    eps: f64,
    /// Scan tuple indices from 0 instead of inverting the pairing.
    #[arg(long)]
    linear_scan: bool,
    #[arg(long)]
    tuple_budget: Option<u128>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyApArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Tolerance to verify at (default: the file's eps).
    #[arg(long, value_parser = real)]
    eps: Option<f64>,
}

#[derive(Args, Debug)]
struct CoverOpts {
    /// Packing nets use spacing r / net-divisor.
    #[arg(long, value_parser = real, default_value_t = NET_DIVISOR)]
    net_divisor: f64,
    /// Cap on net points and cover cells (also APK_BUDGET).
    #[arg(long)]
    budget: Option<u64>,
}

impl CoverOpts {
    fn options(&self) -> CoverOptions {
        let mut o = CoverOptions { net_divisor: self.net_divisor, ..CoverOptions::default() };
        if let Some(b) = self.budget.or_else(crate::budget_from_env) {
            o.budget = b;
        }
        o
    }
}

#[derive(Args, Debug)]
struct CoverArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = real_list, allow_hyphen_values = true)]
    center: Option<Reals>,
    #[arg(long, value_parser = real_list)]
    radii: Reals,
    #[arg(long, value_parser = real_list)]
    rhos: Reals,
    #[command(flatten)]
    opts: CoverOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = real_list, default_value = "16,64,256")]
    rhos: Reals,
    #[arg(long, value_parser = real, default_value_t = DEFAULT_RHO_MIN)]
    rho_min: f64,
    #[command(flatten)]
    opts: CoverOpts,
    /// CSV of every record.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full estimate as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    /// Read the set (its dimension and mode) from a construct file.
    #[arg(long = "in", conflicts_with = "d")]
    input: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    diamonds: bool,
    #[command(flatten)]
    dir: DirectionArgs,
    #[arg(long, value_parser = real)]
    eps: f64,
    #[arg(long, value_parser = size_list)]
    ks: Sizes,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_csv(out: &Option<PathBuf>, header: &[&str], rows: &[Vec<String>], stdout: &mut dyn Write) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, header, rows)?;
    emit(out, std::str::from_utf8(&buf).expect("csv output is utf-8"), stdout)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(ApkError::invalid(format!("eps must lie in [0, 1), got {eps}")));
    }
    Ok(())
}

fn cmd_construct(a: &ConstructArgs, stdout: &mut dyn Write) -> Result<i32> {
    let set = if a.diamonds {
        build_diamond_set(a.d, a.m, a.depth)?
    } else {
        if a.m != 1 {
            return Err(ApkError::invalid("--m needs --diamonds"));
        }
        build_saito_set(a.d, a.depth)?
    };
    let text = to_json(&set)?;
    match &a.out {
        Some(p) => {
            std::fs::write(p, text)?;
            writeln!(
                stdout,
                "pieces {} (+ origin), measure parameter {}, bounding radius {}",
                set.pieces.len(),
                set.total_measure_parameter(),
                set.bounding_radius()
            )?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DirLine<'a> {
    index: u64,
    z: &'a [i64],
    #[serde(with = "f17_vec")]
    unit: Vec<f64>,
}

#[derive(Serialize)]
struct TupleLine {
    index: u128,
    z: Vec<Vec<i64>>,
    #[serde(with = "f17_mat")]
    unit: Vec<Vec<f64>>,
}

fn cmd_enum_dirs(a: &EnumDirsArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut text = String::new();
    if a.m == 1 {
        for (j, x) in enumerate_directions(a.d, a.count)?.iter().enumerate() {
            text += &json_line(&DirLine { index: j as u64, z: &x.integer_vector, unit: x.unit.coords().to_vec() })?;
        }
    } else {
        for t in enumerate_orientation_tuples(a.d, a.m, a.count)? {
            text += &json_line(&TupleLine {
                index: t.index,
                z: t.directions.iter().map(|x| x.integer_vector.clone()).collect(),
                unit: t.directions.iter().map(|x| x.unit.coords().to_vec()).collect(),
            })?;
        }
    }
    emit(&a.out, &text, stdout)?;
    Ok(EXIT_OK)
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string(v).map_err(|e| ApkError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_find_ap(a: &FindApArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    if !(a.eps > 0.0 && a.eps < 1.0) {
        return Err(ApkError::invalid(format!("eps must lie in (0, 1), got {}", a.eps)));
    }
    let e = a.dir.orientation(a.d)?;
    let found = if a.dir.orientation.is_none() && !a.linear_scan && a.tuple_budget.is_none() {
        find_ap_in_saito(a.d, &e.vectors()[0], a.k, a.eps)?
    } else {
        let search = DiamondSearch {
            strategy: if a.linear_scan { TupleSearch::Linear } else { TupleSearch::Direct },
            budget: a.tuple_budget.unwrap_or(DEFAULT_TUPLE_BUDGET),
        };
        find_patch_in_diamond(a.d, e.m(), &e, a.k, a.eps, search)?
    };
    emit(&a.out, &to_json(&found.ap)?, stdout)?;
    writeln!(
        stderr,
        "certified: level {}, scale {:e} (frame shift {}), worst_ratio {:e}",
        found.level,
        found.ap.true_scale(),
        found.ap.frame_shift,
        found.ap.worst_ratio
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify_ap(a: &VerifyApArgs, stdout: &mut dyn Write) -> Result<i32> {
    let ap: EpsAP = read_json(&a.input)?;
    let eps = a.eps.unwrap_or(ap.epsilon);
    check_eps(eps)?;
    let v = verify_eps_ap(&ap.points, &ap.reference, eps)?;
    stdout.write_all(to_json(&v)?.as_bytes())?;
    Ok(if v.pass { EXIT_OK } else { EXIT_VERDICT })
}

fn cmd_cover(a: &CoverArgs, stdout: &mut dyn Write) -> Result<i32> {
    let set: SaitoSet = read_json(&a.input)?;
    let center = match &a.center {
        Some(c) => Point::new(c.0.clone())?,
        None => Point::origin(set.d()),
    };
    let (radii, rhos) = (&a.radii.0, &a.rhos.0);
    if radii.is_empty() || rhos.is_empty() {
        return Err(ApkError::invalid("give --radii and --rhos"));
    }
    let rows = cover_sweep(&set, &center, radii, rhos, a.opts.options())?;
    let fields: Vec<Vec<String>> = rows.iter().map(|r| r.fields()).collect();
    emit_csv(&a.out, &SWEEP_HEADER, &fields, stdout)?;
    Ok(EXIT_OK)
}

fn cmd_estimate(a: &EstimateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let set: SaitoSet = read_json(&a.input)?;
    let guided = ScanPlan::proof_guided_with(&set, &a.rhos.0, a.rho_min)?;
    let plan = guided;
    let est = estimate_assouad(&set, &plan, a.opts.options())?;
    let rows = est.samples.iter().map(|s| s.fields()).collect::<Result<Vec<_>>>()?;
    if let Some(p) = &a.out {
        emit_csv(&Some(p.clone()), &SCAN_HEADER, &rows, stdout)?;
    }
    if let Some(p) = &a.json {
        std::fs::write(p, to_json(&est)?)?;
    }
    writeln!(stdout, "records {}", est.samples.len())?;
    writeln!(stdout, "sup exponent_lower {}", crate::io::fmt17(est.sup_exponent_lower))?;
    writeln!(stdout, "sup exponent_upper {}", crate::io::fmt17(est.sup_exponent_upper))?;
    Ok(EXIT_OK)
}

fn cmd_certify(a: &CertifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let layout = match (&a.input, a.d) {
        (Some(p), _) => read_json::<SaitoSet>(p)?.layout,
        (None, Some(d)) => {
            let m = a.dir.orientation.as_ref().map_or(1, |r| r.0.len());
            if a.diamonds {
                SaitoLayout::diamonds(d, m)?
            } else {
                SaitoLayout::segments(d)?
            }
        }
        (None, None) => return Err(ApkError::invalid("give --d or --in")),
    };
    let e = a.dir.orientation(layout.d)?;
    let certs = certify_lower_bound(&layout, &e, a.eps, &a.ks.0)?;
    for c in &certs {
        writeln!(stderr, "k = {}: R/r = {}, packing {}, exponent {}", c.k, c.ratio, c.packing_count, c.certified_exponent)?;
    }
    emit(&a.out, &to_json(&certs)?, stdout)?;
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(stderr, "error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        // A global pool can only be installed once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Construct(a) => cmd_construct(a, stdout),
        Command::EnumDirs(a) => cmd_enum_dirs(a, stdout),
        Command::FindAp(a) => cmd_find_ap(a, stdout, stderr),
        Command::VerifyAp(a) => cmd_verify_ap(a, stdout),
        Command::Cover(a) => cmd_cover(a, stdout),
        Command::EstimateDim(a) => cmd_estimate(a, stdout),
        Command::CertifyLb(a) => cmd_certify(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
