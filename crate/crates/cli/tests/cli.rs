use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netseir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netseir")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    run_in(Path::new("."), args);
}

fn run_in(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_netseir")).current_dir(dir).args(args).output().expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

/// Runs every stage with paths relative to `dir`, so two runs in different
/// directories should agree byte for byte.
fn pipeline(dir: &Path) {
    let run = |args: &[&str]| run_in(dir, args);
    write(dir, "sim.conf", "population.n = 30\ntruth.min_infected = 3\n");
    run(&["simulate", "--config", "sim.conf", "--seed", "4", "--out", "sim"]);
    write(dir, "obs.conf", "input.truth = sim/truth.json\ndesign.contacts = ego\ndesign.sample_size = 10\n");
    run(&["observe", "--config", "obs.conf", "--seed", "5", "--out", "obs"]);
    write(
        dir,
        "fit.conf",
        "data.n_members = 30\ndata.epidemic = obs/epidemic.csv\ndata.network = obs/network.csv\n\
         mcmc.iterations = 300\nmcmc.burn_in = 100\nmcmc.thin = 10\nmcmc.k = 2\n",
    );
    run(&["fit", "--config", "fit.conf", "--seed", "6", "--out", "fit"]);
    write(dir, "rel.conf", "input.draws = fit/draws.jsonl\n");
    run(&["relabel", "--config", "rel.conf", "--out", "rel"]);
    write(dir, "deg.conf", "input.draws = rel/draws.jsonl\nppc.draws = 5\n");
    run(&["ppc", "degrees", "--config", "deg.conf", "--seed", "7", "--out", "ppc"]);
    write(dir, "epi.conf", "input.draws = rel/draws.jsonl\nppc.draws = 5\nppc.per_draw = 2\n");
    run(&["ppc", "epidemic", "--config", "epi.conf", "--seed", "7", "--out", "ppc"]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["sim", "obs", "fit", "rel", "ppc"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            let n = n.to_string_lossy().to_string();
            if n != "timing.json" {
                out.push((format!("{sub}/{n}"), fs::read(dir.join(sub).join(&n)).unwrap()));
            }
        }
    }
    out
}

#[test]
fn pipeline_produces_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let p = dir.path();
    for f in [
        "sim/truth.json",
        "sim/epidemic.csv",
        "sim/network.csv",
        "obs/diagnostics.json",
        "fit/draws.jsonl",
        "fit/summary.json",
        "rel/relabel_report.json",
        "ppc/ppc_degrees.csv",
        "ppc/ppc_epidemic.csv",
        "ppc/manifest.json",
        "ppc/timing.json",
    ] {
        assert!(p.join(f).exists(), "missing {f}");
    }
    let draws = fs::read_to_string(p.join("fit/draws.jsonl")).unwrap();
    assert!(draws.starts_with("{\"format_version\":1,\"kind\":\"chain_draw\"}\n"));
    assert_eq!(draws.lines().count(), 1 + 20);
    let epi = fs::read_to_string(p.join("ppc/ppc_epidemic.csv")).unwrap();
    assert!(epi.starts_with("variable,value,group\n"));
    assert_eq!(epi.lines().count(), 1 + 10);
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("obs/diagnostics.json")).unwrap()).unwrap();
    let missing = diag["unobserved_transmissions"].as_array().unwrap();
    assert!(!missing.is_empty());
    assert!(missing.iter().all(|m| (1..=30).contains(&m.as_u64().unwrap())), "member ids are 1-based");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("fit/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 6);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out").display().to_string();
    assert_eq!(netseir(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(netseir(&["--help"]).status.code(), Some(0));

    let bad_key = write(dir.path(), "bad.conf", "population.n = 20\npopulaton.size = 3\n");
    let r = netseir(&["simulate", "--config", &bad_key, "--out", &out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("populaton.size"));

    assert_eq!(netseir(&["simulate", "--config", "/nonexistent/x.conf", "--out", &out]).status.code(), Some(1));

    write(dir.path(), "bad.csv", "member_id,E,I,R,assessed_infector\n1,2.0,1.0,3.0,1\n");
    let fit = write(dir.path(), "fit.conf", "data.n_members = 5\ndata.epidemic = bad.csv\n");
    let r = netseir(&["fit", "--config", &fit, "--out", &out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn mse_and_dpp_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(
        dir.path(),
        "mse.conf",
        "population.n = 20\nexperiment.replications = 2\nexperiment.sample_sizes = 0, 20\n\
         mcmc.iterations = 200\nmcmc.burn_in = 50\nmcmc.thin = 10\n",
    );
    let out = dir.path().join("mse");
    run_ok(&["experiment", "mse", "--config", &conf, "--seed", "1", "--out", &out.display().to_string()]);
    let csv = fs::read_to_string(out.join("mse.csv")).unwrap();
    assert!(csv.starts_with("n,parameter,mse_median,mse_mean\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 4));
    assert!(csv.contains("\n20,gamma_1,"));

    let conf = write(dir.path(), "dpp.conf", "dpp.n = 50\ndpp.draws = 3\n");
    let out = dir.path().join("dpp");
    run_ok(&["experiment", "dpp-demo", "--config", &conf, "--out", &out.display().to_string()]);
    let csv = fs::read_to_string(out.join("dpp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 50 * 2);
}
