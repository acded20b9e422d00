use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use netseir_core::experiments::{
    self, coverage_experiment, dpp_demo as run_dpp, mse_experiment, simulate_truth, subsample, ContactDesign, Design,
    ExperimentConfig, Truth, TruthConfig,
};
use netseir_core::io::{self, tables, InputFile, KeyValues, Manifest, Timing};
use netseir_core::mcmc::{run_chain, ChainConfig, ChainDraw};
use netseir_core::observation::{link_tracing_mask, FieldVisibility, ObservationMask, ObservedContacts};
use netseir_core::{relabel as relabel_draws, Error, Result};

use crate::settings::{self, input_path, optional_input_path};
use crate::Common;

const DRAWS_KIND: &str = "chain_draw";

/// One command invocation: configuration, output directory and manifest.
struct Run {
    kv: KeyValues,
    config_dir: PathBuf,
    out: PathBuf,
    manifest: Manifest,
    started: Instant,
    started_unix_ms: u128,
}

impl Run {
    fn start(command: &str, common: &Common) -> Result<Self> {
        let text = fs::read_to_string(&common.config)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
        let kv = KeyValues::parse(&text)?;
        let config_dir = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Run {
            manifest: Manifest::new(command, common.seed, &kv),
            kv,
            config_dir,
            out: common.out.clone(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
        })
    }

    fn read_input(&mut self, key: &str) -> Result<String> {
        let path = input_path(&self.kv, key, &self.config_dir)?;
        self.read_path(&path)
    }

    fn read_optional_input(&mut self, key: &str) -> Result<Option<String>> {
        match optional_input_path(&self.kv, key, &self.config_dir)? {
            Some(p) => self.read_path(&p).map(Some),
            None => Ok(None),
        }
    }

    fn read_path(&mut self, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.inputs.push(InputFile { path: path.display().to_string(), sha256: io::sha256_hex(text.as_bytes()) });
        Ok(text)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        io::atomic_write(&self.out.join(name), contents.as_bytes())?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let s = io::to_versioned_json(value)?;
        self.write(name, &s)
    }

    /// Rejects unknown keys before any work is done.
    fn check_keys(&self) -> Result<()> {
        self.kv.finish()
    }

    fn finish(mut self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let timing = Timing {
            started_unix_ms: self.started_unix_ms,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        io::atomic_write(&self.out.join("timing.json"), io::to_versioned_json(&timing)?.as_bytes())?;
        self.manifest.outputs.push("timing.json".into());
        let manifest = serde_json::to_string_pretty(&self.manifest)? + "\n";
        io::atomic_write(&self.out.join("manifest.json"), manifest.as_bytes())
    }
}

/// Plot-ready `variable,value,group` rows.
fn long_csv(rows: impl IntoIterator<Item = (String, String, String)>) -> String {
    let mut s = String::from("variable,value,group\n");
    for (v, x, g) in rows {
        s.push_str(&format!("{v},{x},{g}\n"));
    }
    s
}

fn read_draws(run: &mut Run) -> Result<Vec<ChainDraw>> {
    let text = run.read_input("input.draws")?;
    io::from_jsonl(DRAWS_KIND, &text)
}

pub fn simulate(c: &Common) -> Result<()> {
    let mut run = Run::start("simulate", c)?;
    let truth_cfg = settings::truth_config(&run.kv, TruthConfig::coverage_study())?;
    let n: usize = run.kv.get_or("population.n", 60)?;
    run.check_keys()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let truth = simulate_truth(&truth_cfg, n, &mut rng)?;
    let full = ObservationMask::fully_observed(n).apply(&truth.record, &truth.network)?;
    run.write("epidemic.csv", &tables::epidemic_csv(&full.cases))?;
    run.write("network.csv", &tables::network_csv(&full.contacts))?;
    run.write_json("truth.json", &truth)?;
    run.finish()
}

pub fn observe(c: &Common) -> Result<()> {
    let mut run = Run::start("observe", c)?;
    let truth: Truth = serde_json::from_str(&run.read_input("input.truth")?)
        .map_err(|e| Error::Config(format!("input.truth: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let data = if run.kv.raw("design.contacts") == Some("link") {
        let fields = settings::fields(&run.kv, FieldVisibility::default())?;
        let seeds = run.kv.get("design.sample_size")?.ok_or_else(|| Error::Config("link tracing needs design.sample_size".into()))?;
        let waves = run.kv.get_or("design.waves", 1)?;
        run.check_keys()?;
        link_tracing_mask(&truth.network, seeds, waves, fields, &mut rng)?.apply(&truth.record, &truth.network)?
    } else {
        let design = settings::design(&run.kv, Design::default())?;
        run.check_keys()?;
        design.observe(&truth, &mut rng)?
    };
    run.write("epidemic.csv", &tables::epidemic_csv(&data.cases))?;
    run.write("network.csv", &tables::network_csv(&data.contacts))?;
    run.write_json("diagnostics.json", &data.diagnostics())?;
    run.finish()
}

#[derive(Serialize)]
struct FitSummary<'a> {
    draws: usize,
    iterations: u64,
    acceptance: &'a netseir_core::mcmc::Acceptance,
    prior_warnings: &'a [netseir_core::observation::PriorWarning],
}

pub fn fit(c: &Common) -> Result<()> {
    let mut run = Run::start("fit", c)?;
    let n: usize = run.kv.get("data.n_members")?.ok_or_else(|| Error::Config("missing required key data.n_members".into()))?;
    let cases = tables::parse_epidemic_csv(&run.read_input("data.epidemic")?)?;
    let contacts: Option<ObservedContacts> = match run.read_optional_input("data.network")? {
        Some(text) => Some(tables::parse_network_csv(&text, n)?),
        None => None,
    };
    let config = settings::chain_config(&run.kv, ChainConfig::default(), c.seed)?;
    run.check_keys()?;
    let data = tables::observed_bundle(n, cases, contacts)?;
    let out = run_chain(&data, &config)?;
    run.write("draws.jsonl", &io::to_jsonl(DRAWS_KIND, &out.draws)?)?;
    run.write_json(
        "summary.json",
        &FitSummary {
            draws: out.draws.len(),
            iterations: out.iterations,
            acceptance: &out.acceptance,
            prior_warnings: &out.prior_warnings,
        },
    )?;
    run.finish()
}

pub fn relabel(c: &Common) -> Result<()> {
    let mut run = Run::start("relabel", c)?;
    let draws = read_draws(&mut run)?;
    run.check_keys()?;
    let (relabeled, report) = relabel_draws(&draws)?;
    run.write("draws.jsonl", &io::to_jsonl(DRAWS_KIND, &relabeled)?)?;
    run.write_json("relabel_report.json", &report)?;
    run.finish()
}

fn ppc_inputs(run: &mut Run) -> Result<(Vec<ChainDraw>, usize)> {
    let draws = read_draws(run)?;
    let m = run.kv.get_or("ppc.draws", draws.len())?;
    Ok((draws, m))
}

pub fn ppc_degrees(c: &Common) -> Result<()> {
    let mut run = Run::start("ppc degrees", c)?;
    let (draws, m) = ppc_inputs(&mut run)?;
    run.check_keys()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let hists = experiments::ppc_degrees(&subsample(&draws, m), &mut rng)?;
    run.write("ppc_degrees.jsonl", &io::to_jsonl("degree_histogram", &hists)?)?;
    let rows = hists.iter().enumerate().flat_map(|(g, h)| {
        h.iter()
            .enumerate()
            .filter(|(_, &count)| count > 0)
            .map(move |(deg, &count)| (format!("members_with_degree_{deg}"), count.to_string(), (g + 1).to_string()))
    });
    run.write("ppc_degrees.csv", &long_csv(rows))?;
    run.finish()
}

pub fn ppc_epidemic(c: &Common) -> Result<()> {
    let mut run = Run::start("ppc epidemic", c)?;
    let (draws, m) = ppc_inputs(&mut run)?;
    let per_draw = run.kv.get_or("ppc.per_draw", 1)?;
    run.check_keys()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let peaks = experiments::ppc_epidemic_max(&subsample(&draws, m), per_draw, &mut rng)?;
    run.write("ppc_epidemic.jsonl", &io::to_jsonl("max_infectious", &peaks)?)?;
    let rows = peaks.iter().enumerate().map(|(k, p)| ("max_infectious".to_string(), p.to_string(), (k / per_draw + 1).to_string()));
    run.write("ppc_epidemic.csv", &long_csv(rows))?;
    run.finish()
}

pub fn coverage(c: &Common) -> Result<()> {
    let mut run = Run::start("experiment coverage", c)?;
    let cfg = settings::experiment_config(&run.kv, ExperimentConfig::default(), c.seed)?;
    run.check_keys()?;
    let table = coverage_experiment(&cfg)?;
    let mut csv = String::from("parameter,truth,replications,covered,coverage,mean_width\n");
    for r in &table.rows {
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.parameter, r.truth, r.replications, r.covered, r.coverage, r.mean_width));
    }
    run.write("coverage.csv", &csv)?;
    run.write_json("coverage.json", &table)?;
    run.write_json("experiment_config.json", &cfg)?;
    run.finish()
}

pub fn mse(c: &Common) -> Result<()> {
    let mut run = Run::start("experiment mse", c)?;
    let cfg = settings::experiment_config(&run.kv, ExperimentConfig::error_study(), c.seed)?;
    run.check_keys()?;
    let curve = mse_experiment(&cfg)?;
    let mut csv = String::from("n,parameter,mse_median,mse_mean\n");
    for r in &curve.rows {
        csv.push_str(&format!("{},{},{},{}\n", r.n, r.parameter, r.mse_median, r.mse_mean));
    }
    run.write("mse.csv", &csv)?;
    run.write_json("mse.json", &curve)?;
    run.write_json("experiment_config.json", &cfg)?;
    run.finish()
}

pub fn dpp_demo(c: &Common) -> Result<()> {
    let mut run = Run::start("experiment dpp-demo", c)?;
    let alpha = run.kv.get_or("dpp.alpha", 5.0)?;
    let mu = run.kv.get_or("dpp.mu", -5.0)?;
    let sigma2 = run.kv.get_or("dpp.sigma2", 25.0)?;
    let n = run.kv.get_or("dpp.n", 1000)?;
    let draws = run.kv.get_or("dpp.draws", 100)?;
    run.check_keys()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let out = run_dpp(alpha, mu, sigma2, n, draws, &mut rng)?;
    let rows = out.iter().enumerate().flat_map(|(g, d)| {
        let g = (g + 1).to_string();
        let theta = d.theta.iter().map({
            let g = g.clone();
            move |t| ("theta".to_string(), t.to_string(), g.clone())
        });
        let deg = d.expected_degrees.iter().map(move |m| ("expected_degree".to_string(), m.to_string(), g.clone()));
        theta.chain(deg).collect::<Vec<_>>()
    });
    run.write("dpp.csv", &long_csv(rows))?;
    run.write("dpp.jsonl", &io::to_jsonl("dpp_draw", &out)?)?;
    run.finish()
}

pub fn ppc_calibration(c: &Common) -> Result<()> {
    let mut run = Run::start("experiment ppc-calibration", c)?;
    let base = ExperimentConfig {
        replications: 50,
        design: Design { fields: FieldVisibility::times_only(), contacts: ContactDesign::EgoCentric(30) },
        ..ExperimentConfig::default()
    };
    let cfg = settings::experiment_config(&run.kv, base, c.seed)?;
    run.check_keys()?;
    let cal = experiments::ppc_calibration(&cfg)?;
    let mut csv = String::from("replication,realized,lower,upper,covered\n");
    for r in &cal.replications {
        csv.push_str(&format!("{},{},{},{},{}\n", r.replication + 1, r.realized, r.lower, r.upper, r.covered));
    }
    run.write("ppc_calibration.csv", &csv)?;
    run.write_json("ppc_calibration.json", &cal)?;
    run.write_json("experiment_config.json", &cfg)?;
    run.finish()
}
