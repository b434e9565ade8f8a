use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::case::{run_config, CaseConfig, CaseId, CaseOverrides, CaseReport};
use crate::error::{Error, Result};
use crate::ode::write_atomic;

/// Noise levels of the noise table, as fractions.
pub const NOISE_LEVELS: [f64; 7] = [0.0, 0.05, 0.075, 0.10, 0.125, 0.15, 0.30];
/// Dataset lengths of the length table.
pub const LENGTHS: [usize; 9] = [1024, 512, 256, 128, 64, 32, 16, 8, 4];
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Noise,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Noise fraction or dataset length.
    pub setting: f64,
    pub seed: u64,
    pub report: CaseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    pub settings: Vec<f64>,
    pub seeds: Vec<u64>,
    pub entries: Vec<SweepEntry>,
}

/// A report table; each row is the per-column median over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs independent configurations on up to `threads` workers; results keep
/// the input order.
pub fn run_configs(configs: &[CaseConfig], threads: usize) -> Vec<Result<CaseReport>> {
    let threads = threads.clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<CaseReport>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(config) = configs.get(k) else { break };
                let result = run_config(config);
                *slots[k].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sweep(
    kind: SweepKind,
    case: CaseId,
    settings: Vec<f64>,
    seeds: &[u64],
    base: &CaseOverrides,
    apply: impl Fn(&mut CaseOverrides, f64),
    threads: usize,
) -> Result<Sweep> {
    if seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    let mut configs = Vec::new();
    let mut keys = Vec::new();
    for &setting in &settings {
        for &seed in seeds {
            let mut o = base.clone();
            apply(&mut o, setting);
            o.seed = Some(seed);
            configs.push(CaseConfig::resolve(case, &o)?);
            keys.push((setting, seed));
        }
    }
    let mut entries = Vec::with_capacity(configs.len());
    for ((setting, seed), report) in keys.into_iter().zip(run_configs(&configs, threads)) {
        entries.push(SweepEntry {
            setting,
            seed,
            report: report?,
        });
    }
    Ok(Sweep {
        kind,
        settings,
        seeds: seeds.to_vec(),
        entries,
    })
}

/// Case 4 at each noise fraction and seed.
pub fn sweep_noise(levels: &[f64], seeds: &[u64], base: &CaseOverrides, threads: usize) -> Result<Sweep> {
    if let Some(bad) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("noise level {bad} is outside [0, 1]")));
    }
    sweep(
        SweepKind::Noise,
        CaseId::Case4,
        levels.to_vec(),
        seeds,
        base,
        |o, v| o.noise = Some(v),
        threads,
    )
}

/// Case 5 at each dataset length and seed.
pub fn sweep_length(lengths: &[usize], seeds: &[u64], base: &CaseOverrides, threads: usize) -> Result<Sweep> {
    if lengths.contains(&0) {
        return Err(Error::Config("dataset lengths must be at least 1".into()));
    }
    sweep(
        SweepKind::Length,
        CaseId::Case5,
        lengths.iter().map(|&l| l as f64).collect(),
        seeds,
        base,
        |o, v| o.samples = Some(v as usize),
        threads,
    )
}

impl Sweep {
    pub fn at(&self, setting: f64) -> impl Iterator<Item = &SweepEntry> {
        self.entries.iter().filter(move |e| e.setting == setting)
    }

    /// Median over seeds of `f` at one setting.
    pub fn median_at(&self, setting: f64, f: impl Fn(&CaseReport) -> f64) -> f64 {
        let v: Vec<f64> = self.at(setting).map(|e| f(&e.report)).collect();
        median(&v)
    }

    fn key_header(&self) -> &'static str {
        match self.kind {
            SweepKind::Noise => "% Noise",
            SweepKind::Length => "Length",
        }
    }

    fn key_value(&self, setting: f64) -> f64 {
        match self.kind {
            SweepKind::Noise => 100.0 * setting,
            SweepKind::Length => setting,
        }
    }

    fn constant_names(&self) -> Vec<String> {
        self.entries
            .first()
            .map(|e| e.report.constants.iter().map(|c| c.name.clone()).collect())
            .unwrap_or_default()
    }

    /// Predicted constants and their percent errors.
    pub fn constants_table(&self) -> Table {
        let names = self.constant_names();
        let mut headers = vec![self.key_header().to_string()];
        headers.extend(names.iter().map(|n| format!("Pred. {n}")));
        headers.extend(names.iter().map(|n| format!("{n} %Error")));
        let rows = self
            .settings
            .iter()
            .map(|&s| {
                let mut row = vec![self.key_value(s)];
                for n in &names {
                    row.push(self.median_at(s, |r| r.constant(n).map_or(f64::NAN, |c| c.predicted)));
                }
                for n in &names {
                    row.push(self.median_at(s, |r| r.constant(n).map_or(f64::NAN, |c| c.percent_error)));
                }
                row
            })
            .collect();
        Table { headers, rows }
    }

    /// Final losses and fit quality against the noiseless truth.
    pub fn losses_table(&self) -> Table {
        let headers = [self.key_header(), "Data Loss", "ODE Loss", "R²", "MAPE"]
            .map(str::to_string)
            .to_vec();
        let rows = self
            .settings
            .iter()
            .map(|&s| {
                vec![
                    self.key_value(s),
                    self.median_at(s, |r| r.data_loss),
                    self.median_at(s, |r| r.ode_loss),
                    self.median_at(s, |r| r.r2),
                    self.median_at(s, |r| r.mape),
                ]
            })
            .collect();
        Table { headers, rows }
    }

    /// Writes the two tables under the given file stems plus a JSON bundle
    /// of every run.
    pub fn write(&self, dir: &Path, constants_stem: &str, losses_stem: &str) -> Result<()> {
        write_atomic(&dir.join(format!("{constants_stem}.csv")), &self.constants_table().to_csv())?;
        write_atomic(&dir.join(format!("{losses_stem}.csv")), &self.losses_table().to_csv())?;
        let stem = match self.kind {
            SweepKind::Noise => "sweep_noise",
            SweepKind::Length => "sweep_length",
        };
        write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(self)?)
    }
}

/// Writes a case report as JSON, its loss history, and one CSV per
/// function comparison.
pub fn write_case(report: &CaseReport, dir: &Path) -> Result<()> {
    let stem = report.config.case.name();
    write_atomic(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(report)?)?;
    if let Some(fit) = &report.fit {
        write_atomic(&dir.join(format!("{stem}_loss.csv")), &fit.history_csv())?;
    }
    for f in &report.functions {
        write_atomic(&dir.join(format!("{stem}_{}.csv", f.name)), &f.to_csv())?;
    }
    Ok(())
}
