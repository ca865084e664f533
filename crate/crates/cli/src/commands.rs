use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hvgan_core::autodiff::primitive_battery;
use hvgan_core::data_io::{load_image, read_points_csv, write_corpus, ImageBuffer};
use hvgan_core::metrics::MetricReport;
use hvgan_core::model::{
    adversarial_phase, evaluate_images, pretrain_csv, pretrain_phase, train, write_outputs, Checkpoint, Dataset,
    TrainConfig, CHECKPOINT_FILE, HISTORY_FILE, PRETRAIN_FILE,
};
use hvgan_core::moo::{hypervolume_exact, hypervolume_mc, pareto_filter, Orientation, ReferencePoint};
use hvgan_core::scalarize::ScalarizationMode;

use crate::manifest::{now_ms, sha256_hex, write_file, RunManifest};
use crate::{CliError, CliResult};

pub const RESULTS_FILE: &str = "results.csv";
pub const RESULTS_HEADER: &str = "mode,psnr,ssim,gmsd,clamp_events";
pub const SHARED_CHECKPOINT_FILE: &str = "pretrained.hvgn";
/// Row labels of the comparison table, also used as per-mode output
/// directories.
pub const MODE_DIRS: [&str; 3] = ["baseline", "hypervol_log", "hypervol_log_normalized"];

/// Gradient-check failure threshold.
const GRADCHECK_TOL: f64 = 1e-4;

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

/// `v` with `digits` significant digits, in fixed notation for moderate
/// magnitudes. Zero prints as `0`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    if (-5..digits as i32).contains(&exp) {
        format!("{:.*}", (digits as i32 - 1 - exp) as usize, v)
    } else {
        sci
    }
}

fn format_psnr(v: f64, decimals: usize) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.decimals$}")
    }
}

pub fn cmd_hv(
    points: &Path,
    reference: &[f64],
    orientation: Orientation,
    mc: Option<(u64, u64)>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let set = read_points_csv(points, orientation)?;
    let r = ReferencePoint::new(reference.to_vec())?;
    let exact = hypervolume_exact(&set, &r)?;
    writeln!(out, "{}", format_sig(exact, 12)).map_err(out_err)?;
    if let Some((samples, seed)) = mc {
        let est = hypervolume_mc(&set, &r, samples, seed)?;
        writeln!(out, "{} +/- {}", format_sig(est.estimate, 12), format_sig(est.stderr, 12)).map_err(out_err)?;
    }
    Ok(())
}

pub fn cmd_pareto(points: &Path, orientation: Orientation, out: &mut dyn Write) -> CliResult<()> {
    let set = read_points_csv(points, orientation)?;
    for p in pareto_filter(&set).points() {
        let line: Vec<String> = p.values().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(out_err)?;
    }
    Ok(())
}

/// Reads and parses a config; relative paths inside it are taken relative
/// to the config file's directory.
fn load_config(path: &Path) -> CliResult<(TrainConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = TrainConfig::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
    cfg.dataset = resolve(&cfg.dataset);
    cfg.output_dir = resolve(&cfg.output_dir);
    cfg.eval_list = cfg.eval_list.iter().map(resolve).collect();
    Ok((cfg, text))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn cmd_train(config: &Path, out: &mut dyn Write) -> CliResult<()> {
    let started = now_ms();
    let (cfg, text) = load_config(config)?;
    let data = Dataset::load(&cfg.dataset)?;
    let outcome = train(&cfg, &data)?;
    let files = write_outputs(&cfg.output_dir, &cfg, &outcome)?;
    let manifest = RunManifest {
        command: "train".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        started_unix_ms: started,
        finished_unix_ms: 0,
        config: text,
        shared_checkpoint_sha256: None,
        files: Vec::new(),
    };
    manifest.finish(&cfg.output_dir, &files)?;
    let history = &outcome.run.history;
    writeln!(
        out,
        "{}: {} pretrain and {} adversarial iterations, {} clamp events",
        cfg.mode.name(),
        outcome.pretrain_losses.len(),
        history.len(),
        history.clamp_events()
    )
    .map_err(out_err)?;
    if let Some(last) = history.records().last() {
        writeln!(
            out,
            "final losses gan={:.6} pix={:.6} fea={:.6}",
            last.losses[0], last.losses[1], last.losses[2]
        )
        .map_err(out_err)?;
    }
    Ok(())
}

pub fn cmd_eval(reference: &Path, test: &Path, out: &mut dyn Write) -> CliResult<()> {
    let r = load_image(reference)?;
    let t = load_image(test)?;
    let m = MetricReport::compute(&t, &r)?;
    writeln!(out, "{},{:.6},{:.6}", format_psnr(m.psnr, 6), m.ssim, m.gmsd).map_err(out_err)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub mode: String,
    pub report: MetricReport,
    pub clamp_events: usize,
}

impl CompareRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.9},{:.9},{}",
            self.mode,
            format_psnr(self.report.psnr, 9),
            self.report.ssim,
            self.report.gmsd,
            self.clamp_events
        )
    }

    /// Parses a results table written by `compare`.
    pub fn parse_table(text: &str) -> CliResult<Vec<CompareRow>> {
        let mut lines = text.lines();
        if lines.next() != Some(RESULTS_HEADER) {
            return Err(CliError::Invalid(format!("results header must be `{RESULTS_HEADER}`")));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let bad = || CliError::Invalid(format!("malformed results row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(bad());
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
                Ok(CompareRow {
                    mode: f[0].to_string(),
                    report: MetricReport {
                        psnr: num(f[1])?,
                        ssim: num(f[2])?,
                        gmsd: num(f[3])?,
                    },
                    clamp_events: f[4].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }
}

pub fn cmd_compare(config: &Path, out: &mut dyn Write) -> CliResult<()> {
    let started = now_ms();
    let (cfg, text) = load_config(config)?;
    if cfg.eval_list.is_empty() {
        return Err(CliError::Invalid("config: compare needs a nonempty eval_list".into()));
    }
    let data = Dataset::load(&cfg.dataset)?;
    let eval_images = cfg
        .eval_list
        .iter()
        .map(load_image)
        .collect::<Result<Vec<ImageBuffer>, _>>()?;
    let root = &cfg.output_dir;
    create_dir(root)?;

    let pre = pretrain_phase(&cfg, &data)?;
    let shared = root.join(SHARED_CHECKPOINT_FILE);
    let pretrain_file = root.join(PRETRAIN_FILE);
    Checkpoint::from_networks(&pre.generator, &pre.discriminator).save(&shared)?;
    write_file(&pretrain_file, pretrain_csv(&pre.losses, cfg.pretrain_lr).as_bytes())?;
    let read_shared = || fs::read(&shared).map_err(|e| CliError::io(&shared, e));
    let shared_hash = sha256_hex(&read_shared()?);
    eprintln!("pretrained checkpoint sha256 {shared_hash}");

    let modes = [
        cfg.baseline_mode(),
        ScalarizationMode::HypervolLog,
        ScalarizationMode::HypervolLogNormalized,
    ];
    let mut files = vec![shared.clone(), pretrain_file];
    let mut rows = Vec::with_capacity(3);
    for (label, mode) in MODE_DIRS.iter().zip(&modes) {
        let bytes = read_shared()?;
        let hash = sha256_hex(&bytes);
        eprintln!("{label}: starting checkpoint sha256 {hash}");
        if hash != shared_hash {
            return Err(CliError::Invalid(format!("{label}: shared checkpoint changed during the run")));
        }
        let ck = Checkpoint::from_bytes(&bytes).map_err(|msg| CliError::Invalid(format!("{}: {msg}", shared.display())))?;
        let (g, d) = ck.restore(&cfg.arch)?;
        let run = adversarial_phase(&cfg, &data, g, d, mode)?;

        let dir = root.join(label);
        create_dir(&dir)?;
        let history = dir.join(HISTORY_FILE);
        let checkpoint = dir.join(CHECKPOINT_FILE);
        write_file(&history, run.history.to_csv().as_bytes())?;
        Checkpoint::from_networks(&run.generator, &run.discriminator).save(&checkpoint)?;
        files.extend([history, checkpoint]);

        rows.push(CompareRow {
            mode: label.to_string(),
            report: evaluate_images(&run.generator, &eval_images)?,
            clamp_events: run.history.clamp_events(),
        });
    }

    let mut table = format!("{RESULTS_HEADER}\n");
    for row in &rows {
        table.push_str(&row.to_csv_line());
        table.push('\n');
    }
    let results = root.join(RESULTS_FILE);
    write_file(&results, table.as_bytes())?;
    files.push(results);
    let manifest = RunManifest {
        command: "compare".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        started_unix_ms: started,
        finished_unix_ms: 0,
        config: text,
        shared_checkpoint_sha256: Some(shared_hash),
        files: Vec::new(),
    };
    manifest.finish(root, &files)?;
    out.write_all(table.as_bytes()).map_err(out_err)
}

pub fn cmd_gradcheck(seed: u64, trials: usize, out: &mut dyn Write) -> CliResult<()> {
    if trials == 0 {
        return Err(CliError::Invalid("gradcheck needs at least one trial".into()));
    }
    let report = primitive_battery(seed, trials)?;
    let mut failing = Vec::new();
    for (name, err) in &report {
        writeln!(out, "{name:<18} {err:.2e}").map_err(out_err)?;
        if !(*err <= GRADCHECK_TOL) {
            failing.push(name.to_string());
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(failing))
    }
}

pub fn cmd_synth(dir: &Path, count: usize, size: usize, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    for p in write_corpus(dir, count, size, seed)? {
        writeln!(out, "{}", p.display()).map_err(out_err)?;
    }
    Ok(())
}
