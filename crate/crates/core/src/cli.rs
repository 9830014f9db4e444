//! Command-line front end. Every command writes CSV to `--out` or stdout.
//!
//! Exit codes: 0 success, 1 verification failure or I/O error, 2 bad
//! arguments or unknown device/network, 3 configuration that fails
//! validation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::executor::vectors::{default_suite, parse_vectors, run_suite};
use crate::executor::SparseOptions;
use crate::flops::{block_flops_dynamic, block_flops_static, FlopsBreakdown, FlopsRow};
use crate::hardware::{load_hardware, HardwareSpec};
use crate::latency::{ablate_fusion, predict_block, BlockPrediction, FusionFlags};
use crate::model::{ActivationProfile, DynamicConfig, Paradigm};
use crate::zoo::{
    build_network, parse_plan, predict_network, sweep, NetworkSpec, Rates, SweepGrid,
    SweepRequest, SweepRow,
};

#[derive(Debug, Parser)]
#[command(name = "dynlat", version, about = "Latency and FLOPs models for dynamic convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict the latency of one block.
    PredictBlock(BlockArgs),
    /// Predict every block of a network plus the total.
    PredictNet(NetArgs),
    /// Latency and FLOPs over a granularity and rate grid.
    Sweep(SweepArgs),
    /// Static and dynamic MACs per block.
    Flops(FlopsArgs),
    /// Block latency under all eight fusion combinations.
    AblateFusion(BlockArgs),
    /// Run the sparse-versus-dense equivalence suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Device preset (V100, RTX3090, RTX3060, TX2, Nano) or device file.
    #[arg(long, default_value = "V100")]
    device: String,
    /// Built-in network name or architecture file.
    #[arg(long, default_value = "resnet50")]
    net: String,
    #[arg(long, default_value = "spatial")]
    paradigm: Paradigm,
    /// Batch size; defaults to 128 on server and desktop parts, 1 on embedded ones.
    #[arg(long)]
    batch: Option<usize>,
    /// `all`, `none` or a comma list of masker, gather, scatter.
    #[arg(long, default_value = "all")]
    fuse: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BlockArgs {
    #[command(flatten)]
    common: Common,
    /// 1-based stage.
    #[arg(long, default_value_t = 1)]
    stage: usize,
    /// 0-based block index within the stage.
    #[arg(long, default_value_t = 1)]
    block: usize,
    /// Patch size S (spatial) or group size G (channel).
    #[arg(long, short = 'g')]
    granularity: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    rate: f64,
}

#[derive(Debug, Args)]
struct NetArgs {
    #[command(flatten)]
    common: Common,
    /// Per-stage granularities, e.g. 4-4-2-1.
    #[arg(long)]
    plan: Option<String>,
    #[arg(long, default_value_t = 0.5, conflicts_with = "rates_file")]
    rate: f64,
    /// One rate per block, newline separated, in network order.
    #[arg(long)]
    rates_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Extra devices swept after `--device`, comma separated.
    #[arg(long, value_delimiter = ',')]
    also_devices: Vec<String>,
    /// Sweep one block of this stage instead of the whole network.
    #[arg(long)]
    stage: Option<usize>,
    #[arg(long, default_value_t = 1)]
    block: usize,
    /// Granularities for a block sweep.
    #[arg(long, short = 'g', value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
    granularities: Vec<usize>,
    /// Plans for a network sweep; repeat the flag for several.
    #[arg(long)]
    plan: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = (1..=10).map(|i| i as f64 / 10.0).collect::<Vec<_>>())]
    rates: Vec<f64>,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    #[arg(long, default_value = "resnet50")]
    net: String,
    #[arg(long, default_value = "static")]
    paradigm: Paradigm,
    #[arg(long)]
    plan: Option<String>,
    #[arg(long, default_value_t = 1.0, conflicts_with = "rates_file")]
    rate: f64,
    #[arg(long)]
    rates_file: Option<PathBuf>,
    /// Input resolution as HxW, e.g. 800x1333.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Random cases per paradigm.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the cases of a vector file instead of random ones.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Misplace one scattered patch (checks that the suite can fail).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnknownDevice(_) | Error::UnknownNetwork(_) | Error::Parse { .. } => 2,
        e if e.is_validation() => 3,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::PredictBlock(a) => cmd_predict_block(&a).map(|_| 0),
        Command::PredictNet(a) => cmd_predict_net(&a).map(|_| 0),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| 0),
        Command::Flops(a) => cmd_flops(&a).map(|_| 0),
        Command::AblateFusion(a) => cmd_ablate(&a).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a),
    }
}

struct Env {
    hw: HardwareSpec,
    net: NetworkSpec,
    batch: usize,
    flags: FusionFlags,
}

fn env(c: &Common) -> Result<Env> {
    let hw = load_hardware(&c.device)?;
    let net = build_network(&c.net)?;
    let batch = c.batch.unwrap_or_else(|| hw.default_batch());
    if batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    Ok(Env {
        hw,
        net,
        batch,
        flags: FusionFlags::parse(&c.fuse)?,
    })
}

fn writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn write_rows<R: AsRef<[String]>>(out: Option<&Path>, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = writer(out)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn block_config(paradigm: Paradigm, granularity: Option<usize>) -> Result<DynamicConfig> {
    Ok(match paradigm {
        Paradigm::Spatial => DynamicConfig::spatial(granularity.ok_or(Error::ParadigmFieldMissing {
            paradigm: "spatial",
            field: "granularity",
        })?),
        Paradigm::Channel => DynamicConfig::channel(granularity.ok_or(Error::ParadigmFieldMissing {
            paradigm: "channel",
            field: "granularity",
        })?),
        Paradigm::Layer => DynamicConfig::layer(),
        Paradigm::Static => DynamicConfig::static_block(),
    })
}

const PREDICT_HEADER: [&str; 13] = [
    "device", "block_id", "paradigm", "S", "G", "r", "batch", "tile", "waves", "data_us", "compute_us", "total_us",
    "r_ell",
];

fn predict_record(device: &str, id: &str, cfg: &DynamicConfig, r: f64, batch: usize, p: &BlockPrediction) -> Vec<String> {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        device.to_string(),
        id.to_string(),
        cfg.paradigm.to_string(),
        opt(cfg.spatial_granularity),
        opt(cfg.channel_granularity),
        format!("{r:.4}"),
        batch.to_string(),
        p.tile_summary(),
        p.total_waves().to_string(),
        format!("{:.4}", p.breakdown.data_s * 1e6),
        format!("{:.4}", p.breakdown.compute_s * 1e6),
        format!("{:.4}", p.breakdown.total_s * 1e6),
        format!("{:.6}", p.r_ell),
    ]
}

fn cmd_predict_block(a: &BlockArgs) -> Result<()> {
    let e = env(&a.common)?;
    let nb = e.net.block(a.stage, a.block)?;
    let cfg = block_config(a.common.paradigm, a.granularity)?;
    let prof = ActivationProfile::from_rate(&nb.spec, &cfg, a.rate)?;
    let p = predict_block(&nb.spec, &cfg, &prof, e.flags, &e.hw, e.batch)?;
    let row = predict_record(&e.hw.name, &nb.id(), &cfg, a.rate, e.batch, &p);
    write_rows(a.common.out.as_deref(), &PREDICT_HEADER, [row])
}

fn read_rates(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>().map_err(|e| Error::Parse {
                what: "rates file".into(),
                message: format!("`{l}`: {e}"),
            })
        })
        .collect()
}

fn rates_arg(rate: f64, file: Option<&Path>) -> Result<Rates> {
    Ok(match file {
        Some(p) => Rates::PerBlock(read_rates(p)?),
        None => Rates::Scalar(rate),
    })
}

fn cmd_predict_net(a: &NetArgs) -> Result<()> {
    let e = env(&a.common)?;
    let paradigm = a.common.paradigm;
    let plan = a.plan.as_deref().map(|p| parse_plan(p, &e.net, paradigm)).transpose()?;
    let rates = rates_arg(a.rate, a.rates_file.as_deref())?;
    let rep = predict_network(&e.net, plan.as_ref(), paradigm, &rates, e.flags, &e.hw, e.batch)?;
    let blocks = e.net.blocks()?;
    let mut rows = Vec::with_capacity(rep.blocks.len() + 1);
    for (b, br) in blocks.iter().zip(&rep.blocks) {
        let p = predict_block(&b.spec, &br.config, &br.profile, e.flags, &e.hw, e.batch)?;
        let r = match paradigm {
            Paradigm::Spatial => br.profile.r_spatial,
            Paradigm::Channel => br.profile.r_channel,
            _ => br.profile.r_layer,
        };
        rows.push(predict_record(&e.hw.name, &br.id, &br.config, r, e.batch, &p));
    }
    let waves: u64 = rows.iter().map(|r| r[8].parse::<u64>().unwrap_or(0)).sum();
    rows.push(vec![
        e.hw.name.clone(),
        "total".into(),
        paradigm.to_string(),
        String::new(),
        String::new(),
        String::new(),
        e.batch.to_string(),
        String::new(),
        waves.to_string(),
        format!("{:.4}", rep.total.data_s * 1e6),
        format!("{:.4}", rep.total.compute_s * 1e6),
        format!("{:.4}", rep.total.total_s * 1e6),
        format!("{:.6}", rep.r_ell),
    ]);
    write_rows(a.common.out.as_deref(), &PREDICT_HEADER, rows)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let e = env(&a.common)?;
    let mut devices = vec![e.hw.clone()];
    for d in &a.also_devices {
        devices.push(load_hardware(d)?);
    }
    let mut rates = a.rates.clone();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let grid = match a.stage {
        Some(stage) => {
            let mut g = a.granularities.clone();
            g.sort_unstable();
            g.dedup();
            SweepGrid::Block {
                stage,
                index: a.block,
                granularities: g,
            }
        }
        None => SweepGrid::Network {
            plans: a
                .plan
                .iter()
                .map(|p| parse_plan(p, &e.net, a.common.paradigm))
                .collect::<Result<_>>()?,
        },
    };
    let mut rows: Vec<SweepRow> = Vec::new();
    for hw in &devices {
        let batch = a.common.batch.unwrap_or_else(|| hw.default_batch());
        rows.extend(sweep(&SweepRequest {
            net: &e.net,
            paradigm: a.common.paradigm,
            grid: grid.clone(),
            rates: rates.clone(),
            flags: e.flags,
            hw,
            batch,
        })?);
    }
    write_rows(a.common.out.as_deref(), &SweepRow::HEADER, rows.iter().map(SweepRow::record))
}

fn cmd_flops(a: &FlopsArgs) -> Result<()> {
    let mut net = build_network(&a.net)?;
    if let Some(res) = &a.input {
        let (h, w) = res
            .split_once(['x', 'X'])
            .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)))
            .ok_or_else(|| Error::Parse {
                what: "input resolution".into(),
                message: format!("`{res}` is not HxW"),
            })?;
        net = net.with_input(h, w)?;
    }
    let plan = a.plan.as_deref().map(|p| parse_plan(p, &net, a.paradigm)).transpose()?;
    let configs = net.block_configs(a.paradigm, plan.as_ref())?;
    let blocks = net.blocks()?;
    let rates = rates_arg(a.rate, a.rates_file.as_deref())?.expand(blocks.len())?;
    let mut rows = Vec::with_capacity(blocks.len() + 1);
    let mut sum_st = FlopsBreakdown::default();
    let mut sum_dy = FlopsBreakdown::default();
    for ((b, cfg), &r) in blocks.iter().zip(&configs).zip(&rates) {
        let prof = ActivationProfile::from_rate(&b.spec, cfg, r)?;
        let st = block_flops_static(&b.spec)?;
        let dy = block_flops_dynamic(&b.spec, cfg, &prof)?;
        sum_st = add_flops(&sum_st, &st);
        sum_dy = add_flops(&sum_dy, &dy);
        rows.push(FlopsRow {
            block_id: b.id(),
            stat: st,
            dynamic: dy,
        });
    }
    // stem and classifier are static and appear only in the network row
    let fixed = (net.stem_macs() + net.classifier_macs()) as f64;
    sum_st.total += fixed;
    sum_dy.total += fixed;
    rows.push(FlopsRow {
        block_id: "network".into(),
        stat: sum_st,
        dynamic: sum_dy,
    });
    write_rows(a.out.as_deref(), &FlopsRow::HEADER, rows.iter().map(FlopsRow::record))
}

fn add_flops(a: &FlopsBreakdown, b: &FlopsBreakdown) -> FlopsBreakdown {
    FlopsBreakdown {
        conv1: a.conv1 + b.conv1,
        conv2: a.conv2 + b.conv2,
        conv3: a.conv3 + b.conv3,
        masker: a.masker + b.masker,
        se: a.se + b.se,
        downsample: a.downsample + b.downsample,
        total: a.total + b.total,
    }
}

fn cmd_ablate(a: &BlockArgs) -> Result<()> {
    let e = env(&a.common)?;
    let nb = e.net.block(a.stage, a.block)?;
    let cfg = block_config(a.common.paradigm, a.granularity)?;
    let prof = ActivationProfile::from_rate(&nb.spec, &cfg, a.rate)?;
    let rows = ablate_fusion(&nb.spec, &cfg, &prof, &e.hw, e.batch)?;
    write_rows(
        a.common.out.as_deref(),
        &["device", "block_id", "fuse", "data_us", "compute_us", "total_us"],
        rows.iter().map(|(f, l)| {
            vec![
                e.hw.name.clone(),
                nb.id(),
                f.label(),
                format!("{:.4}", l.data_s * 1e6),
                format!("{:.4}", l.compute_s * 1e6),
                format!("{:.4}", l.total_s * 1e6),
            ]
        }),
    )
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let cases = match &a.vectors {
        Some(p) => parse_vectors(&std::fs::read_to_string(p)?)?,
        None => default_suite(a.cases, a.seed),
    };
    let opts = SparseOptions {
        misplace_patch: a.inject_fault.then_some(0),
    };
    let rep = run_suite(&cases, opts)?;
    if rep.cases == 0 {
        println!("0 cases");
        return Ok(0);
    }
    for (p, d) in &rep.worst {
        println!("{p}: max deviation {d:.3e}");
    }
    println!("{} cases, {} failed", rep.cases, rep.failures);
    Ok(if rep.passed() { 0 } else { 1 })
}
