// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use shiftleak::attacks::{run_full_attack, AttackConfig, BitOutcome, BitStatus, PhaseTimes};
use shiftleak::chip::{boot, stitch as stitch_chains, DefenseVariant, ModeInputs, ScPlacement, ScanChainLayout};
use shiftleak::locking::{lock_rll, lock_sll_heuristic, Key, KeyGateRecord, LockedDesign, LockedNetlist, Scheme};
use shiftleak::netlist::{parse_bench, write_bench, Netlist};
use shiftleak::report::{
    coverage_compare, instrument, overhead, CoverageReport, OverheadReport, SECURE_CELL_INVENTORY,
};
use shiftleak::synth::{generate as synth, SynthParams};

use crate::config::{resolve, Overrides, RunConfig, SchemeArg, Specific};
use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DefenseArg {
    Dfs,
    Mssd,
}

impl From<DefenseArg> for DefenseVariant {
    fn from(d: DefenseArg) -> Self {
        match d {
            DefenseArg::Dfs => DefenseVariant::Dfs,
            DefenseArg::Mssd => DefenseVariant::Mssd,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, default_value_t = 300)]
    gates: usize,
    #[arg(long, default_value_t = 32)]
    flops: usize,
    #[arg(long, default_value_t = 8)]
    inputs: usize,
    /// Defaults to three quarters of the flop count.
    #[arg(long)]
    outputs: Option<usize>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct LockArgs {
    #[command(flatten)]
    common: Overrides,
    /// Original bench netlist.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "key-bits")]
    key_bits: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
}

#[derive(Debug, clap::Args)]
pub struct StitchArgs {
    #[command(flatten)]
    common: Overrides,
    /// Locked bench netlist.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Chain counts; one layout file per value.
    #[arg(long, value_delimiter = ',')]
    chains: Vec<usize>,
}

#[derive(Debug, clap::Args)]
pub struct AttackArgs {
    #[command(flatten)]
    common: Overrides,
    /// Locked bench netlist.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Key planted in the simulated chip; the attack never reads it, it is
    /// only used to audit recovered bits.
    #[arg(long)]
    key: Option<PathBuf>,
    /// Chain layout file; without it the design is stitched per `--chains`.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Chain counts to sweep when no layout file is given.
    #[arg(long, value_delimiter = ',')]
    chains: Vec<usize>,
    #[arg(long, value_enum)]
    defense: Option<DefenseArg>,
    #[arg(long = "probe-patterns")]
    probe_patterns: Option<usize>,
    #[arg(long = "dip-iterations")]
    dip_iterations: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    #[command(flatten)]
    common: Overrides,
    /// Locked bench netlists, one table row each (per chain count).
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Planted keys, one per input; adds recovered-bit columns.
    #[arg(long)]
    key: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    chains: Vec<usize>,
    /// Pattern budget shared by all coverage runs.
    #[arg(long)]
    budget: Option<usize>,
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())).into())
}

fn read_netlist(path: &Path) -> anyhow::Result<Netlist> {
    parse_bench(&read(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn read_locked(path: &Path) -> anyhow::Result<LockedNetlist> {
    LockedNetlist::from_netlist(read_netlist(path)?).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn read_key(path: &Path, locked: &LockedNetlist) -> anyhow::Result<Key> {
    let key = Key::from_text(&read(path)?)
        .ok_or_else(|| Usage(format!("{}: key files hold one 0/1 bit per line", path.display())))?;
    if key.len() != locked.key_len() {
        return Err(Usage(format!("{}: {} key bits for a design with {} key gates", path.display(), key.len(), locked.key_len()))
            .into());
    }
    Ok(key)
}

fn one_input(config: &RunConfig) -> anyhow::Result<&Path> {
    match config.input.as_slice() {
        [p] => Ok(p),
        [] => Err(Usage("missing --input".into()).into()),
        _ => Err(Usage("this command takes exactly one --input".into()).into()),
    }
}

/// File stem without a trailing `.locked`.
fn stem(path: &Path) -> String {
    let s = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "design".into());
    s.strip_suffix(".locked").map(str::to_string).unwrap_or(s)
}

fn write(config: &RunConfig, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&config.out_dir).with_context(|| format!("creating {}", config.out_dir.display()))?;
    let path = config.out_dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn toml_text(header: &[&str], value: &impl Serialize) -> anyhow::Result<String> {
    let mut out: String = header.iter().map(|l| format!("# {l}\n")).collect();
    out.push_str(&toml::to_string(value).context("serializing report")?);
    Ok(out)
}

fn stitch_layout(locked: &LockedNetlist, chains: usize, seed: u64) -> anyhow::Result<ScanChainLayout> {
    stitch_chains(locked, chains, seed, &ScPlacement::Interleaved).map_err(|e| Usage(e.to_string()).into())
}

pub fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let config = resolve(&args.common, Specific::default())?;
    if args.inputs + args.flops < 2 || args.gates < args.flops.max(1) {
        return Err(Usage("need at least two sources and one gate per flop".into()).into());
    }
    let params = SynthParams {
        inputs: args.inputs,
        outputs: args.outputs.unwrap_or((args.flops * 3 / 4).max(1)),
        flops: args.flops,
        gates: args.gates,
    };
    let seed = config.seeds.generate;
    let name = args.name.unwrap_or_else(|| format!("synth_g{}_f{}_s{seed}", args.gates, args.flops));
    let path = write(&config, &format!("{name}.bench"), &write_bench(&synth(&params, seed)))?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct LockReport<'a> {
    config: &'a RunConfig,
    design: String,
    scheme: String,
    key_bits: usize,
    interference: u64,
    records: &'a [KeyGateRecord],
}

pub fn lock(args: LockArgs) -> anyhow::Result<()> {
    let specific = Specific {
        input: args.input.into_iter().collect(),
        key_bits: args.key_bits,
        scheme: args.scheme,
        ..Default::default()
    };
    let config = resolve(&args.common, specific)?;
    let input = one_input(&config)?;
    let n = read_netlist(input)?;
    let seed = config.seeds.lock;
    let design = match config.scheme {
        SchemeArg::Rll => lock_rll(&n, config.key_bits, seed),
        SchemeArg::Sll => lock_sll_heuristic(&n, config.key_bits, seed),
    }
    .map_err(|e| Usage(e.to_string()))?;
    let name = stem(input);
    write(&config, &format!("{name}.locked.bench"), &write_bench(design.netlist()))?;
    write(&config, &format!("{name}.key"), &design.hidden_key().to_text())?;
    let report = LockReport {
        config: &config,
        design: name.clone(),
        scheme: design.scheme.to_string(),
        key_bits: design.hidden_key().len(),
        interference: design.interference,
        records: design.records(),
    };
    let path = write(&config, &format!("{name}.lock.toml"), &toml_text(&["key file is secret by convention"], &report)?)?;
    println!("{}", path.display());
    Ok(())
}

pub fn stitch(args: StitchArgs) -> anyhow::Result<()> {
    let specific = Specific { input: args.input.into_iter().collect(), chains: args.chains, ..Default::default() };
    let config = resolve(&args.common, specific)?;
    let input = one_input(&config)?;
    let locked = read_locked(input)?;
    for &c in &config.chains {
        let layout = stitch_layout(&locked, c, config.seeds.stitch)?;
        let path = write(&config, &format!("{}.c{c}.chains", stem(input)), &layout.to_text(locked.netlist()))?;
        println!("{}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct AttackSummary {
    design: String,
    defense: DefenseVariant,
    chains: usize,
    key_bits: usize,
    probe_passed: bool,
    recovered: usize,
    preprocessed: usize,
    leaked: usize,
    /// Bits left for an offline brute-force finisher.
    unrecovered: usize,
    false_bits: Vec<usize>,
    recovered_key: String,
    cones_attacked: usize,
    cones_unresolved: usize,
    total_queries: u64,
}

#[derive(Serialize)]
struct AttackFile<'a> {
    config: &'a RunConfig,
    result: AttackSummary,
    bits: Vec<BitOutcome>,
}

#[derive(Serialize)]
struct Timings {
    seconds: PhaseTimes,
    total: f64,
}

fn run_attack(
    config: &RunConfig,
    design: &LockedDesign,
    layout: &ScanChainLayout,
    variant: DefenseVariant,
) -> (AttackSummary, Vec<BitOutcome>, PhaseTimes) {
    let mut chip = boot(design, layout.clone(), variant, ModeInputs::M0);
    let cfg = AttackConfig {
        seed: config.seeds.attack,
        preprocess: true,
        probe_patterns: config.caps.probe_patterns,
        dip_iterations: config.caps.dip_iterations,
    };
    let r = run_full_attack(&mut chip, &design.locked, layout, &cfg);
    let summary = AttackSummary {
        design: String::new(),
        defense: variant,
        chains: layout.chain_count(),
        key_bits: design.locked.key_len(),
        probe_passed: r.probe_passed,
        recovered: r.recovered(),
        preprocessed: r.count(BitStatus::Preprocessed),
        leaked: r.count(BitStatus::Leaked),
        unrecovered: r.count(BitStatus::Unrecovered),
        false_bits: r.false_bits(design.hidden_key()),
        recovered_key: r
            .recovered_key()
            .iter()
            .map(|b| match b {
                Some(true) => '1',
                Some(false) => '0',
                None => 'x',
            })
            .collect(),
        cones_attacked: r.cones_attacked,
        cones_unresolved: r.cones_unresolved,
        total_queries: r.total_queries,
    };
    (summary, r.bits, r.seconds)
}

pub fn attack(args: AttackArgs) -> anyhow::Result<()> {
    let specific = Specific {
        input: args.input.into_iter().collect(),
        key: args.key.into_iter().collect(),
        layout: args.layout,
        chains: args.chains,
        defense: args.defense.map(Into::into),
        probe_patterns: args.probe_patterns,
        dip_iterations: args.dip_iterations,
        ..Default::default()
    };
    let config = resolve(&args.common, specific)?;
    let input = one_input(&config)?;
    let locked = read_locked(input)?;
    let key_path = match config.key.as_slice() {
        [k] => k.clone(),
        _ => return Err(Usage("attack needs exactly one --key for the simulated chip".into()).into()),
    };
    let key = read_key(&key_path, &locked)?;
        let design = LockedDesign::new(locked, key, READ_BACK_SCHEME, 0).map_err(|e| Usage(e.to_string()))?;
    let layouts = match &config.layout {
        Some(p) => vec![ScanChainLayout::from_text(&read(p)?, &design.locked)
            .map_err(|e| Usage(format!("{}: {e}", p.display())))?],
        None => config
            .chains
            .iter()
            .map(|&c| stitch_layout(&design.locked, c, config.seeds.stitch))
            .collect::<anyhow::Result<_>>()?,
    };
    let name = stem(input);
    for layout in &layouts {
        let t = Instant::now();
        let (mut summary, bits, seconds) = run_attack(&config, &design, layout, config.defense);
        let total = t.elapsed().as_secs_f64();
        summary.design = name.clone();
        let base = format!("{name}.{}.c{}", config.defense, layout.chain_count());
        println!(
            "{base}: recovered {}/{} (preprocessed {}, leaked {}), false {}, queries {}",
            summary.recovered,
            summary.key_bits,
            summary.preprocessed,
            summary.leaked,
            summary.false_bits.len(),
            summary.total_queries
        );
        let file = AttackFile { config: &config, result: summary, bits };
        write(&config, &format!("{base}.attack.toml"), &toml_text(&[], &file)?)?;
        write(&config, &format!("{base}.timings.toml"), &toml_text(&[], &Timings { seconds, total })?)?;
    }
    Ok(())
}

/// Scheme label for a design read back from a bench file, which does not
/// record how its key gates were placed. Attacks never look at it.
const READ_BACK_SCHEME: Scheme = Scheme::Rll;

#[derive(Serialize)]
struct TableRow {
    design: String,
    chains: usize,
    key_bits: usize,
    baseline: usize,
    dfs_added: usize,
    dfs_overhead_percent: f64,
    mssd_added: usize,
    mssd_overhead_percent: f64,
    mssd_cheaper: bool,
    coverage_original: f64,
    coverage_dfs: f64,
    coverage_mssd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovered_dfs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovered_mssd: Option<usize>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a RunConfig,
    rows: Vec<TableRow>,
    overhead: Vec<OverheadReport>,
    coverage: Vec<CoverageReport>,
}

#[derive(Serialize)]
struct ReportTiming {
    design: String,
    chains: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct ReportTimings {
    rows: Vec<ReportTiming>,
}

pub fn report(args: ReportArgs) -> anyhow::Result<()> {
    let specific = Specific {
        input: args.input,
        key: args.key,
        chains: args.chains,
        coverage_budget: args.budget,
        ..Default::default()
    };
    let config = resolve(&args.common, specific)?;
    if !config.key.is_empty() && config.key.len() != config.input.len() {
        return Err(Usage("give either no --key or one per --input".into()).into());
    }
    let mut file = ReportFile { config: &config, rows: Vec::new(), overhead: Vec::new(), coverage: Vec::new() };
    let mut timings = ReportTimings { rows: Vec::new() };
    for (i, input) in config.input.iter().enumerate() {
        let locked = read_locked(input)?;
        let key = config.key.get(i).map(|k| read_key(k, &locked)).transpose()?;
        let name = stem(input);
        for &c in &config.chains {
            let t = Instant::now();
            let layout = stitch_layout(&locked, c, config.seeds.stitch)?;
            let dfs = overhead(&name, &locked, &layout, DefenseVariant::Dfs);
            let mssd = overhead(&name, &locked, &layout, DefenseVariant::Mssd);
            let dfs_netlist = instrument(&locked, &layout, DefenseVariant::Dfs);
            let mssd_netlist = instrument(&locked, &layout, DefenseVariant::Mssd);
            let cov = coverage_compare(
                (&name, locked.netlist()),
                &[("dfs", &dfs_netlist), ("mssd", &mssd_netlist)],
                config.caps.coverage_budget,
                config.seeds.report,
            );
            let (recovered_dfs, recovered_mssd) = match &key {
                Some(k) => {
                    let design = LockedDesign::new(locked.clone(), k.clone(), READ_BACK_SCHEME, 0)
                        .map_err(|e| Usage(e.to_string()))?;
                    let a = run_attack(&config, &design, &layout, DefenseVariant::Dfs).0.recovered;
                    let b = run_attack(&config, &design, &layout, DefenseVariant::Mssd).0.recovered;
                    (Some(a), Some(b))
                }
                None => (None, None),
            };
            let row = TableRow {
                design: name.clone(),
                chains: c,
                key_bits: locked.key_len(),
                baseline: dfs.baseline,
                dfs_added: dfs.added,
                dfs_overhead_percent: dfs.percent,
                mssd_added: mssd.added,
                mssd_overhead_percent: mssd.percent,
                mssd_cheaper: mssd.added < dfs.added,
                coverage_original: cov.original.coverage,
                coverage_dfs: cov.variants[0].coverage,
                coverage_mssd: cov.variants[1].coverage,
                recovered_dfs,
                recovered_mssd,
            };
            println!(
                "{name} c{c}: overhead dfs {:.2}% mssd {:.2}%, coverage {:.4}/{:.4}/{:.4}",
                row.dfs_overhead_percent,
                row.mssd_overhead_percent,
                row.coverage_original,
                row.coverage_dfs,
                row.coverage_mssd
            );
            file.rows.push(row);
            file.overhead.extend([dfs, mssd]);
            file.coverage.push(cov);
            timings.rows.push(ReportTiming { design: name.clone(), chains: c, seconds: t.elapsed().as_secs_f64() });
        }
    }
    let path = write(&config, "report.toml", &toml_text(&[SECURE_CELL_INVENTORY], &file)?)?;
    write(&config, "report.timings.toml", &toml_text(&[], &timings)?)?;
    println!("{}", path.display());
    Ok(())
}
