use std::path::Path;

use serde::Serialize;
use uniqode::error::{Error, Result};
use uniqode::experiments::{
    default_threads, run_case, sweep_length, sweep_noise, write_case, CaseId, CaseOverrides, DEFAULT_SEEDS,
    LENGTHS, NOISE_LEVELS,
};
use uniqode::identify::{
    bound_t3, bound_t4, find_matched_pairs, nearest_misses, recover_t1, recover_t2_all, BoundReport,
    Certificate, FormulaVariant, MatchedPair, Samples,
};
use uniqode::ode::{
    inject_noise, rk4_integrate, sample_dataset, write_atomic, GrowthForm, NoiseSpec, StructuredSystem,
    StructuredTerm, Trajectory,
};
use uniqode::train::{direct_fit, upinn_fit, UnknownSpec};

use crate::config::RunConfig;
use crate::{Cli, Command, Mode};

const SEED_ENV: &str = "UNIQODE_SEED";
const NEAREST_MISSES: usize = 10;

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        let seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        cfg.override_seed(seed);
    }
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate => simulate(&cfg, out),
        Command::Identify { data } => identify(&cfg, cli.formula_variant, &read_data(data)?, out),
        Command::Bounds { data } => bounds(&cfg, cli.formula_variant, &read_data(data)?, out),
        Command::Fit { data, mode } => fit(&cfg, *mode, &read_data(data)?, out),
        Command::Reproduce { id } => reproduce(&cfg, id, out),
        Command::SweepNoise { levels, seeds } => {
            let levels = levels.clone().or(cfg.sweep.levels.clone()).unwrap_or(NOISE_LEVELS.to_vec());
            let seeds = sweep_seeds(&cfg, seeds);
            let sweep = sweep_noise(&levels, &seeds, &cfg.experiment, threads(&cfg))?;
            sweep.write(out, "table1", "table2")
        }
        Command::SweepLength { lengths, seeds } => {
            let lengths = lengths.clone().or(cfg.sweep.lengths.clone()).unwrap_or(LENGTHS.to_vec());
            let seeds = sweep_seeds(&cfg, seeds);
            let sweep = sweep_length(&lengths, &seeds, &cfg.experiment, threads(&cfg))?;
            sweep.write(out, "table3", "table4")
        }
    }
}

fn read_data(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read data {}: {e}", path.display())))?;
    Trajectory::from_csv_str(&text).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn sweep_seeds(cfg: &RunConfig, cli: &Option<Vec<u64>>) -> Vec<u64> {
    cli.clone()
        .or(cfg.sweep.seeds.clone())
        .unwrap_or(DEFAULT_SEEDS.to_vec())
}

fn threads(cfg: &RunConfig) -> usize {
    cfg.sweep.threads.unwrap_or_else(default_threads)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_string_pretty(value)?)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let system = cfg.system()?;
    let span = cfg.data.span.unwrap_or(system.t_span);
    let mut traj = rk4_integrate(&system, &system.x0, span, cfg.data.dt)?;
    if let Some(m) = cfg.data.samples {
        traj = sample_dataset(&traj, m)?;
    }
    if let Some(noise) = cfg.data.noise.filter(|n| n.fraction != 0.0) {
        traj = inject_noise(
            &traj,
            NoiseSpec {
                fraction: noise.fraction,
                seed: noise.seed,
            },
        )?;
    }
    write_atomic(&out.join("trajectory.csv"), &traj.to_csv_string())
}

fn structured_term<'a>(system: &'a StructuredSystem, cfg: &RunConfig) -> Result<(usize, &'a StructuredTerm)> {
    match cfg.identify.component {
        Some(q) => system
            .structured()
            .find(|(p, _)| *p == q)
            .ok_or_else(|| Error::Config(format!("component {q} is not structured"))),
        None => system
            .structured()
            .next()
            .ok_or_else(|| Error::Config("system has no structured component".into())),
    }
}

/// Lists the closest pairs on stderr so an empty search can be diagnosed.
fn report_misses(samples: &Samples) {
    eprintln!("no matched pairs; nearest misses (i, j, |y_i - y_j|, C_i - C_j):");
    for p in nearest_misses(samples, NEAREST_MISSES) {
        eprintln!("  {} {} {:e} {:e}", p.i, p.j, p.y_distance, p.c_gap);
    }
}

#[derive(Debug, Serialize)]
struct IdentifyOutput {
    system: String,
    component: usize,
    formula_variant: FormulaVariant,
    d_tol: f64,
    pairs_found: usize,
    certificate: Certificate,
    bounds: Option<BoundReport>,
}

fn variant(cfg: &RunConfig, flag: Option<FormulaVariant>) -> FormulaVariant {
    flag.or(cfg.identify.formula_variant).unwrap_or_default()
}

fn pairs_or_report(samples: &Samples, d_tol: f64) -> Result<Vec<MatchedPair>> {
    if !(d_tol >= 0.0) {
        return Err(Error::Config(format!("d_tol must be non-negative, got {d_tol}")));
    }
    let pairs = find_matched_pairs(samples, d_tol);
    if pairs.is_empty() {
        report_misses(samples);
        return Err(Error::NoMatchedPairs);
    }
    Ok(pairs)
}

fn recover(term: &StructuredTerm, pairs: &[MatchedPair], samples: &Samples, cfg: &RunConfig) -> Result<Certificate> {
    let th = &cfg.identify.thresholds;
    match term.form() {
        GrowthForm::Unknown => recover_t2_all(pairs, samples, th),
        GrowthForm::Scaled => {
            // First pair that meets every hypothesis; otherwise the first
            // outcome, which explains the failure.
            let mut first = None;
            for pair in pairs {
                let result = recover_t1(pair, samples, th);
                if matches!(&result, Ok(c) if c.conditions_met.all()) {
                    return result;
                }
                first.get_or_insert(result);
            }
            first.unwrap_or(Err(Error::NoMatchedPairs))
        }
    }
}

fn radii(
    term: &StructuredTerm,
    pairs: &[MatchedPair],
    samples: &Samples,
    d: f64,
    variant: FormulaVariant,
    cfg: &RunConfig,
) -> Result<Option<BoundReport>> {
    let id = &cfg.identify;
    let th = &id.thresholds;
    Ok(match term.form() {
        GrowthForm::Scaled => match id.lipschitz {
            Some(l) => Some(bound_t3(pairs, samples, l, d, variant, th)?),
            None => None,
        },
        GrowthForm::Unknown => match (id.lipschitz_g, id.lipschitz_u) {
            (Some(l1), Some(l2)) => Some(bound_t4(pairs, samples, l1, l2, d, variant, th)?),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "unknown-growth radii need both lipschitz_g and lipschitz_u".into(),
                ))
            }
        },
    })
}

fn identify(cfg: &RunConfig, flag: Option<FormulaVariant>, data: &Trajectory, out: &Path) -> Result<()> {
    let system = cfg.system()?;
    let (q, term) = structured_term(&system, cfg)?;
    let samples = Samples::from_term(term, q, data)?;
    let variant = variant(cfg, flag);
    let d_tol = cfg.identify.d_tol.unwrap_or(cfg.identify.thresholds.y_match);
    let pairs = pairs_or_report(&samples, d_tol)?;
    let certificate = recover(term, &pairs, &samples, cfg)?;
    let d = cfg.identify.d.unwrap_or(d_tol);
    let bounds = radii(term, &pairs, &samples, d, variant, cfg)?;
    write_json(
        &out.join("certificate.json"),
        &IdentifyOutput {
            system: system.name.clone(),
            component: q,
            formula_variant: variant,
            d_tol,
            pairs_found: pairs.len(),
            certificate,
            bounds,
        },
    )
}

fn bounds(cfg: &RunConfig, flag: Option<FormulaVariant>, data: &Trajectory, out: &Path) -> Result<()> {
    let system = cfg.system()?;
    let (q, term) = structured_term(&system, cfg)?;
    let samples = Samples::from_term(term, q, data)?;
    let d = cfg
        .identify
        .d
        .or(cfg.identify.d_tol)
        .ok_or_else(|| Error::Config("bounds need identify.d (the pair distance bound)".into()))?;
    let pairs = pairs_or_report(&samples, d)?;
    let report = radii(term, &pairs, &samples, d, variant(cfg, flag), cfg)?
        .ok_or_else(|| Error::Config("bounds need Lipschitz constants in the identify section".into()))?;
    write_json(&out.join("bounds.json"), &report)
}

fn fit(cfg: &RunConfig, mode: Mode, data: &Trajectory, out: &Path) -> Result<()> {
    let system = cfg.system()?;
    let u = &cfg.unknowns;
    let spec = UnknownSpec::for_system(&system, &u.initial_constants, &u.hidden)?;
    let result = match mode {
        Mode::Direct => direct_fit(&system, data, &spec, &cfg.train)?,
        Mode::Upinn => upinn_fit(
            &system,
            data,
            &spec.with_trajectory(&u.trajectory_hidden, system.dim()),
            &cfg.train,
        )?,
    };
    let json = result.to_json()?;
    let history = result.history_csv();
    write_atomic(&out.join("fit.json"), &json)?;
    write_atomic(&out.join("loss.csv"), &history)
}

fn reproduce(cfg: &RunConfig, id: &str, out: &Path) -> Result<()> {
    let norm = id.trim().to_ascii_lowercase();
    let o: &CaseOverrides = &cfg.experiment;
    match norm.as_str() {
        "case1" => {
            for case in [CaseId::Case1UN, CaseId::Case1UN2] {
                write_case(&run_case(case, o)?, out)?;
            }
            Ok(())
        }
        "table1" | "table2" => {
            let levels = cfg.sweep.levels.clone().unwrap_or(NOISE_LEVELS.to_vec());
            sweep_noise(&levels, &sweep_seeds(cfg, &None), o, threads(cfg))?.write(out, "table1", "table2")
        }
        "table3" | "table4" => {
            let lengths = cfg.sweep.lengths.clone().unwrap_or(LENGTHS.to_vec());
            sweep_length(&lengths, &sweep_seeds(cfg, &None), o, threads(cfg))?.write(out, "table3", "table4")
        }
        _ => {
            let case: CaseId = norm.parse().map_err(|_| {
                Error::Config(format!(
                    "unknown id '{id}' (expected case1..case5, {}, or table1..table4)",
                    CaseId::ALL.map(|c| c.name()).join(", ")
                ))
            })?;
            write_case(&run_case(case, o)?, out)
        }
    }
}
