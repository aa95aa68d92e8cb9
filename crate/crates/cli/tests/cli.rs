use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aemr::data::{GeneticMap, Haplotype, HaplotypePair};
use aemr::hmm::{propensity_score, MeiosisModel};

fn aemr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aemr"))
        .args(args)
        .env_remove("AEMR_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn simulate(dir: &Path, n: usize, seed: u64, beta: f64) -> PathBuf {
    let out = dir.join(format!("sim{seed}_{beta}"));
    let o = aemr(&[
        "simulate",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--beta",
        &beta.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    stdout(&o);
    // Keep the tests quick.
    let cfg = out.join("analysis.toml");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("draws = 1000", "draws = 100");
    std::fs::write(&cfg, text).unwrap();
    out
}

fn column(table: &str, name: &str) -> Vec<String> {
    let mut lines = table.lines();
    let idx = lines.next().unwrap().split('\t').position(|h| h == name).unwrap();
    lines.map(|l| l.split('\t').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn simulate_requires_out() {
    assert_eq!(aemr(&["simulate", "--n", "10"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_data_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 50, 7, 0.0);
    for f in ["map.tsv", "haplotypes.tsv", "phenotypes.tsv", "analysis.toml", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    let phen = std::fs::read_to_string(out.join("phenotypes.tsv")).unwrap();
    assert_eq!(phen.lines().count(), 51);
}

#[test]
fn simulate_beta_shifts_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let read = |d: &Path| -> Vec<(f64, f64)> {
        std::fs::read_to_string(d.join("phenotypes.tsv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split('\t').skip(1).map(|v| v.parse().unwrap()).collect();
                (f[0], f[1])
            })
            .collect()
    };
    let null = read(&simulate(dir.path(), 40, 2, 0.0));
    let effect = read(&simulate(dir.path(), 40, 2, 0.5));
    for ((d0, y0), (d1, y1)) in null.iter().zip(&effect) {
        assert_eq!(d0, d1);
        assert!((y1 - y0 - 0.5 * d1).abs() < 1e-12);
    }
}

#[test]
fn test_is_deterministic_and_p_values_are_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 200, 3, 0.0);
    let cfg = out.join("analysis.toml");
    let a = stdout(&aemr(&["test", "--config", cfg.to_str().unwrap()]));
    let b = stdout(&aemr(&["test", "--config", cfg.to_str().unwrap()]));
    assert_eq!(a, b);
    for col in ["p", "p_corrected"] {
        for p in column(&a, col) {
            let p: f64 = p.parse().unwrap();
            assert!(p > 0.0 && p <= 1.0);
        }
    }
    assert_eq!(column(&a, "instrument").last().unwrap(), "fisher");
}

#[test]
fn statistic_override_changes_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 200, 4, 0.0);
    let cfg = out.join("analysis.toml");
    let run = |s| stdout(&aemr(&["test", "--config", cfg.to_str().unwrap(), "--statistic", s]));
    let clever = column(&run("clever_F"), "stat");
    let plain = column(&run("plain_F"), "stat");
    assert_ne!(clever, plain);
}

#[test]
fn test_writes_output_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 100, 5, 0.0);
    let res = dir.path().join("res.tsv");
    let o = aemr(&[
        "test",
        "--config",
        out.join("analysis.toml").to_str().unwrap(),
        "--output",
        res.to_str().unwrap(),
    ]);
    stdout(&o);
    assert!(std::fs::read_to_string(&res).unwrap().starts_with("instrument\tbeta0\tstat\tp\tp_corrected\tK\tseed\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "test");
    assert!(manifest["finished"].is_string());
}

#[test]
fn unknown_locus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 20, 6, 0.0);
    let cfg = out.join("analysis.toml");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("instruments = [25, 50, 75, 100, 125]", "instruments = [25, 999]");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(aemr(&["test", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(aemr(&["test", "--config", "/nonexistent/a.toml"]).status.code(), Some(2));
}

#[test]
fn corrupt_haplotypes_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 20, 8, 0.0);
    let hap = out.join("haplotypes.tsv");
    let text = std::fs::read_to_string(&hap).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen('0', "x", 1);
    std::fs::write(&hap, lines.join("\n") + "\n").unwrap();
    let o = aemr(&["test", "--config", out.join("analysis.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

/// Two-locus toy data set: family `het` has a heterozygous mother at the
/// instrument, family `hom` a homozygous one.
fn toy(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("map.tsv"), "index\tid\tcM\n1\ta\t0\n2\tb\tinf\n").unwrap();
    let mut hap = String::from("family\tmember\torigin\talleles\n");
    for (fam, mother) in [("het", ["10", "01"]), ("hom", ["11", "10"]), ("f3", ["01", "10"]), ("f4", ["10", "01"])] {
        hap += &format!("{fam}\tM\tm\t{}\n{fam}\tM\tf\t{}\n", mother[0], mother[1]);
        hap += &format!("{fam}\tF\tm\t00\n{fam}\tF\tf\t11\n");
        hap += &format!("{fam}\tO\tm\t{}\n{fam}\tO\tf\t01\n", mother[0]);
    }
    std::fs::write(dir.join("hap.tsv"), hap).unwrap();
    std::fs::write(dir.join("phen.tsv"), "family\tD\tY\nhet\t0.1\t0.2\nhom\t1\t-1\nf3\t0.5\t0.5\nf4\t2\t1\n").unwrap();
    let cfg = dir.join("toy.toml");
    std::fs::write(
        &cfg,
        r#"
[data]
map = "map.tsv"
haplotypes = "hap.tsv"
phenotypes = "phen.tsv"

[test]
instruments = [1]
side = "m"
epsilon = 0.0
draws = 50

[window]
kind = "loci"
radius = 0
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn propensity_table_for_toy_families() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let table = stdout(&aemr(&["propensity", "--config", cfg.to_str().unwrap()]));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "family\tlocus\tside\tpi\tflag");
    assert_eq!(lines[1], "het\t1\tm\t0.5\t.");
    assert_eq!(lines[2], "hom\t1\tm\t1\tdegenerate");
}

#[test]
fn propensity_json_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), 30, 9, 0.0);
    let o = aemr(&["--json", "propensity", "--config", out.join("analysis.toml").to_str().unwrap()]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout(&o)).unwrap();

    let cfg = aemr::config::AnalysisConfig::load(out.join("analysis.toml")).unwrap();
    let map: GeneticMap = aemr::data::load_genetic_map(&cfg.data.map).unwrap();
    let model = MeiosisModel::new(&map, cfg.epsilon).unwrap();
    let cohort = aemr::data::load_cohort(map, &cfg.data.haplotypes, &cfg.data.phenotypes).unwrap();
    let mut k = 0;
    for trio in &cohort.trios {
        for spec in &cfg.specs {
            for &origin in spec.side.origins() {
                let parent: &HaplotypePair = trio.parent(origin);
                let child: &Haplotype = trio.offspring.haplotype(origin);
                let window = spec.resolve(&cohort.map, parent).window;
                let pi = propensity_score(&model, parent, child, spec.instrument, &window).unwrap();
                let got = rows[k]["pi"].as_f64().unwrap();
                assert!((got - pi).abs() < 1e-12, "row {k}: {got} vs {pi}");
                assert_eq!(rows[k]["degenerate"].as_bool().unwrap(), pi == 0.0 || pi == 1.0);
                k += 1;
            }
        }
    }
    assert_eq!(k, rows.len());
}

#[test]
fn combine_appends_fisher_rows() {
    let dir = tempfile::tempdir().unwrap();
    let table = "instrument\tbeta0\tstat\tp\tp_corrected\tK\tseed\n\
                 25\t0\t1.2\t0.5\t0.5\t100\t1\n\
                 50\t0\t0.3\t0.5\t0.5\t100\t2\n";
    let input = dir.path().join("t.tsv");
    std::fs::write(&input, table).unwrap();
    let out = stdout(&aemr(&["combine", "--input", input.to_str().unwrap()]));
    let last = out.lines().last().unwrap();
    assert!(last.starts_with("fisher\t0\t2.77259\t0.596574\t0.596574\t100\tNA"), "{last}");
    let again = dir.path().join("again.tsv");
    std::fs::write(&again, &out).unwrap();
    let twice = stdout(&aemr(&["combine", "--input", again.to_str().unwrap()]));
    assert_eq!(twice, out);
}

#[test]
fn combine_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.tsv");
    std::fs::write(&input, "not a table\n").unwrap();
    assert_eq!(aemr(&["combine", "--input", input.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn single_replicate_power_is_zero_or_one() {
    let o = aemr(&[
        "power", "--n", "150", "--reps", "1", "--draws", "50", "--beta0", "0,0.5", "--seed", "3",
    ]);
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 1 + 2 * 4);
    for f in column(&table, "frequency") {
        assert!(f == "0" || f == "1", "{f}");
    }
}

#[test]
fn threads_flag_and_env_agree() {
    let args = ["power", "--n", "120", "--reps", "2", "--draws", "40", "--statistic", "plain_F,weighted_diff"];
    let a = stdout(&aemr(&[&["--threads", "1"], &args[..]].concat()));
    let b = stdout(
        &Command::new(env!("CARGO_BIN_EXE_aemr"))
            .args(args)
            .env("AEMR_THREADS", "2")
            .output()
            .unwrap(),
    );
    assert_eq!(a, b);
}
