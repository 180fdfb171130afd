//! Command implementations. Every command is deterministic given its
//! inputs and `--seed`; outputs are written atomically by the library
//! helpers (temp file + rename).

use std::path::Path;

use perchash::attack::{
    grid_preimage_attack, run_attack, write_report, write_trace_csv, AttackConfig, AttackReport,
    AttackResult, Objective, PreimageOptions,
};
use perchash::diffpipe::{Stage, Temperature};
use perchash::evalharness::{
    build_bank, calibrate_threshold, collision_rate, default_suite, load_bank,
    nn_calibration_distances, nn_query, read_calibration_csv, save_bank, topk_accuracy,
    transfer_matrix, write_baselines_csv, write_calibration_csv, write_collisions_csv,
    write_transfer_csv, AugSpec,
};
use perchash::hashes::{hash_image, HashAlgo, HashSpec};
use perchash::imgcore::{load_image, save_png16, RgbImage};

use crate::config::RunConfig;
use crate::{AttackArgs, CalibrateArgs, CmdFailure, HashArgs, TransferArgs};

type CmdResult = Result<(), CmdFailure>;

fn usage<E: std::fmt::Display>(err: E) -> CmdFailure {
    CmdFailure::Usage(err.to_string())
}

fn parse_spec(algo: &str, bits: usize) -> Result<HashSpec, CmdFailure> {
    let algo: HashAlgo = algo.parse().map_err(usage)?;
    HashSpec::new(algo, bits).map_err(usage)
}

/// Accepts `ahash:256` or `ahash_256`.
fn parse_spec_label(label: &str) -> Result<HashSpec, CmdFailure> {
    let (algo, bits) = label
        .split_once(':')
        .or_else(|| label.split_once('_'))
        .ok_or_else(|| usage(format!("bad hash spec {label:?} (want algo:bits)")))?;
    let bits: usize = bits
        .parse()
        .map_err(|_| usage(format!("bad bit count in {label:?}")))?;
    parse_spec(algo, bits)
}

fn load_rgb(path: &str) -> Result<RgbImage, CmdFailure> {
    load_image(path).map_err(usage)
}

fn parse_augs(augs: Option<&str>, seed: u64) -> Result<Vec<AugSpec>, CmdFailure> {
    match augs {
        None => Ok(default_suite(seed)),
        Some(list) => list
            .split(',')
            .map(|label| AugSpec::parse(label.trim(), seed).map_err(usage))
            .collect(),
    }
}

pub fn cmd_hash(args: &HashArgs) -> CmdResult {
    let spec = parse_spec(&args.algo, args.bits)?;
    let img = load_rgb(&args.image)?;
    println!("{}", hash_image(&img, spec).to_hex());
    Ok(())
}

const ATTACK_CONFIG_KEYS: &[&str] = &[
    "source",
    "target",
    "algo",
    "bits",
    "objective",
    "splits",
    "lr",
    "c",
    "delta",
    "tau",
    "d",
    "max-iters",
    "seed",
    "out",
    "report",
    "trace",
    "stage-exact",
    "stage-tol",
];

fn parse_num<T: std::str::FromStr>(value: Option<&str>, name: &str, default: T) -> Result<T, CmdFailure>
where
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(default),
        Some(text) => text
            .parse()
            .map_err(|e| usage(format!("bad value for {name}: {e}"))),
    }
}

pub fn cmd_attack(args: &AttackArgs) -> CmdResult {
    let file_cfg = match &args.config {
        Some(path) => RunConfig::load(Path::new(path), ATTACK_CONFIG_KEYS).map_err(usage)?,
        None => RunConfig::empty(),
    };
    let need = |flag: Option<&str>, key: &str| -> Result<String, CmdFailure> {
        file_cfg
            .merge(flag, key)
            .map(str::to_string)
            .ok_or_else(|| usage(format!("--{key} is required")))
    };
    let opt = |flag: Option<&str>, key: &str| file_cfg.merge(flag, key).map(str::to_string);

    let source_path = need(args.source.as_deref(), "source")?;
    let target_path = need(args.target.as_deref(), "target")?;
    let algo = need(args.algo.as_deref(), "algo")?;
    let bits: usize = need(args.bits.as_deref(), "bits")?
        .parse()
        .map_err(|e| usage(format!("bad value for bits: {e}")))?;
    let spec = parse_spec(&algo, bits)?;

    let objective_name = opt(args.objective.as_deref(), "objective").unwrap_or_else(|| "hinge".into());
    let splits_text = opt(args.splits.as_deref(), "splits");
    let objective = match objective_name.as_str() {
        "hinge" => Objective::Hinge,
        "hash-l2" => Objective::HashL2,
        "interior" => {
            let text = splits_text
                .as_deref()
                .ok_or_else(|| usage("--objective interior requires --splits"))?;
            let stages: Result<Vec<Stage>, _> =
                text.split(',').map(|s| s.trim().parse::<Stage>()).collect();
            Objective::Interior(stages.map_err(usage)?)
        }
        other => return Err(usage(format!("unknown objective {other:?}"))),
    };

    let tau_value: f64 = parse_num(opt(args.tau.as_deref(), "tau").as_deref(), "tau", 20.0)?;
    let cfg = AttackConfig {
        objective,
        lr: parse_num(opt(args.lr.as_deref(), "lr").as_deref(), "lr", 5.0)?,
        content_weight: parse_num(opt(args.c.as_deref(), "c").as_deref(), "c", 0.001)?,
        hinge_margin: parse_num(opt(args.delta.as_deref(), "delta").as_deref(), "delta", 0.45)?,
        tau: Temperature::new(tau_value).map_err(usage)?,
        success_distance: parse_num(opt(args.d.as_deref(), "d").as_deref(), "d", 0usize)?,
        max_iters: parse_num(
            opt(args.max_iters.as_deref(), "max-iters").as_deref(),
            "max-iters",
            2000usize,
        )?,
        seed: parse_num(opt(args.seed.as_deref(), "seed").as_deref(), "seed", 0u64)?,
        ..AttackConfig::default()
    };
    cfg.validate().map_err(usage)?;

    let out_path = need(args.out.as_deref(), "out")?;
    let report_path = need(args.report.as_deref(), "report")?;
    let trace_path = opt(args.trace.as_deref(), "trace");

    let stage_exact = args.stage_exact
        || matches!(file_cfg.get("stage-exact"), Some("true") | Some("1"));
    let source = load_rgb(&source_path)?;
    let target = load_rgb(&target_path)?;

    let result: AttackResult = if stage_exact {
        if cfg.objective != Objective::Interior(vec![Stage::ResizedGrid]) {
            return Err(usage(
                "--stage-exact requires --objective interior --splits p1",
            ));
        }
        let opts = PreimageOptions {
            tolerance: parse_num(
                opt(args.stage_tol.as_deref(), "stage-tol").as_deref(),
                "stage-tol",
                1e-9,
            )?,
            tau: cfg.tau,
            success_distance: cfg.success_distance,
            ..PreimageOptions::default()
        };
        let (result, residual) =
            grid_preimage_attack(&source, &target, spec, &opts).map_err(usage)?;
        eprintln!("grid residual (max-abs): {residual:.3e}");
        result
    } else {
        run_attack(&source, &target, spec, &cfg).map_err(usage)?
    };

    save_png16(&result.adversarial, &out_path).map_err(usage)?;
    let report = AttackReport::new(&source_path, &target_path, &out_path, spec, &cfg, &result);
    write_report(&report_path, &report).map_err(usage)?;
    if let Some(trace) = trace_path {
        write_trace_csv(&trace, &result.loss_trace).map_err(usage)?;
    }

    println!(
        "success={} hamming={} iters={} r_l2={:.6} r_linf={:.6} ssim={:.4}",
        result.success_float,
        result.final_hamming,
        result.iters,
        result.r_l2,
        result.r_linf,
        result.ssim
    );
    if result.success_float {
        Ok(())
    } else {
        Err(CmdFailure::NoCollision)
    }
}

pub fn cmd_bank_build(dir: &str, algo: &str, bits: usize, out: &str) -> CmdResult {
    let spec = parse_spec(algo, bits)?;
    let (bank, skipped) = build_bank(Path::new(dir), spec).map_err(usage)?;
    for skip in &skipped {
        eprintln!("warning: skipped {}: {}", skip.name, skip.reason);
    }
    save_bank(&bank, Path::new(out)).map_err(usage)?;
    println!(
        "bank {} entries={} skipped={}",
        spec.label(),
        bank.len(),
        skipped.len()
    );
    Ok(())
}

pub fn cmd_bank_query(bank_path: &str, image: &str, k: usize) -> CmdResult {
    if k < 1 {
        return Err(usage("--k must be at least 1"));
    }
    let bank = load_bank(Path::new(bank_path)).map_err(usage)?;
    let img = load_rgb(image)?;
    let probe = hash_image(&img, bank.spec());
    for hit in nn_query(&bank, &probe, k).map_err(usage)? {
        println!("{} {}", hit.id, hit.distance);
    }
    Ok(())
}

pub fn cmd_eval_baselines(
    bank_path: &str,
    dir: &str,
    ks: &str,
    seed: u64,
    augs: Option<&str>,
    out: &str,
) -> CmdResult {
    let bank = load_bank(Path::new(bank_path)).map_err(usage)?;
    let ks: Vec<usize> = ks
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("bad --ks: {e}")))?;
    if ks.is_empty() {
        return Err(usage("--ks must name at least one k"));
    }
    let augs = parse_augs(augs, seed)?;
    let rows = topk_accuracy(&bank, Path::new(dir), &augs, &ks).map_err(usage)?;
    for row in &rows {
        println!(
            "{} {} aug={} k={} accuracy={:.4}",
            row.algo, row.bits, row.aug, row.k, row.accuracy
        );
    }
    write_baselines_csv(Path::new(out), &rows).map_err(usage)?;
    Ok(())
}

pub fn cmd_eval_collisions(bank_paths: &[String], out: &str) -> CmdResult {
    let mut rows = Vec::new();
    for path in bank_paths {
        let bank = load_bank(Path::new(path)).map_err(usage)?;
        if bank.len() < 2 {
            return Err(usage(format!("bank {path} has fewer than two entries")));
        }
        let rate = collision_rate(&bank);
        println!("{} rate={}", bank.spec().label(), rate);
        rows.push((
            bank.spec().algo().name().to_string(),
            bank.spec().bits(),
            rate,
        ));
    }
    write_collisions_csv(Path::new(out), &rows).map_err(usage)?;
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CmdResult {
    let bank = load_bank(Path::new(&args.bank)).map_err(usage)?;
    let augs = parse_augs(args.augs.as_deref(), args.seed)?;
    let (genuine, impostor) =
        nn_calibration_distances(&bank, Path::new(&args.dir), &augs).map_err(usage)?;
    if impostor.is_empty() {
        // Every probe matched exactly; the largest usable threshold is the
        // full hash length.
        let t = bank.spec().bits();
        write_calibration_csv(Path::new(&args.out), &[(bank.spec(), args.precision, t)])
            .map_err(usage)?;
        println!("{} threshold={t} (no impostors observed)", bank.spec().label());
        return Ok(());
    }
    match calibrate_threshold(&genuine, &impostor, args.precision, bank.spec().bits())
        .map_err(usage)?
    {
        Some(t) => {
            write_calibration_csv(Path::new(&args.out), &[(bank.spec(), args.precision, t)])
                .map_err(usage)?;
            println!("{} threshold={t}", bank.spec().label());
            Ok(())
        }
        None => Err(CmdFailure::Uncalibratable),
    }
}

pub fn cmd_transfer(args: &TransferArgs) -> CmdResult {
    let eval_specs: Vec<HashSpec> = args
        .eval_specs
        .split(',')
        .map(|s| parse_spec_label(s.trim()))
        .collect::<Result<_, _>>()?;
    if eval_specs.is_empty() {
        return Err(usage("--eval-specs must name at least one spec"));
    }
    let thresholds = read_calibration_csv(Path::new(&args.thresholds)).map_err(usage)?;
    let cells =
        transfer_matrix(Path::new(&args.reports), &eval_specs, &thresholds).map_err(usage)?;
    for c in &cells {
        println!(
            "{}_{}:{}:{} -> {}_{} t={} rate={:.3} n={}",
            c.attack_algo,
            c.attack_bits,
            c.objective,
            c.split,
            c.eval_algo,
            c.eval_bits,
            c.threshold,
            c.success_rate,
            c.n
        );
    }
    write_transfer_csv(Path::new(&args.out), &cells).map_err(usage)?;
    Ok(())
}
