use std::path::Path;
use std::process::Command;

use mlqmcfe::qmc::{next_prime, LatticeRule};
use mlqmcfe_cli::{run_experiment, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlqmcfe"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let out = dir.join(name.replace(".cfg", ""));
    let path = dir.join(name);
    std::fs::write(&path, format!("{body}\noutput.dir = {}\n", out.display())).unwrap();
    path
}

fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn orthogonality_mode_reports_pass_for_haar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "orth.cfg",
        "run.mode = check_orthogonality\nfield.family = haar\nwavelet.max_level = 8\nfem.L = 4",
    );
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS k=1 for ℓ=0..4"), "{stdout}");
    let results = std::fs::read_to_string(dir.path().join("orth/results.csv")).unwrap();
    assert!(results.starts_with("# config-hash: "));
    assert_eq!(body(&results).len(), 1 + 5);
}

#[test]
fn orthogonality_mode_fails_for_sine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sine.cfg", "run.mode = check_orthogonality\nfem.L = 2");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn fe_convergence_constant_coefficient_rate_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "run.mode = fe_convergence\nfield.c = 0\nfem.L_min = 2\nfem.L = 6\nfem.ref_level = 10\noutput.dir = {}",
        dir.path().display()
    );
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let rows = body(&out.results);
    assert_eq!(rows[0], "level,h,g_value,error");
    assert_eq!(rows.len(), 1 + 5);
    let fit = out.results.lines().find(|l| l.starts_with("# fit")).unwrap();
    let slope: f64 = fit
        .split("slope=")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 2.0).abs() < 0.1, "{fit}");
}

#[test]
fn plan_echo_matches_hand_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ml.cfg",
        "run.mode = ml\nrun.epsilon = 2^-6\nfield.family = haar\nwavelet.max_level = 8\nmlqmc.scenario = 1",
    );
    let out = bin().arg("plan").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<String>> = body(&text)[1..]
        .iter()
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    // L = ⌈6/2⌉ = 3, s_ℓ = 2^{ℓ+1}, N₀ = ε^{-2} = 4096 with λ = 1
    assert_eq!(rows.len(), 4);
    let k = |l: usize| {
        let m = 2f64.powi(l as i32);
        m * m.ln().max(1.0)
    };
    for (l, row) in rows.iter().enumerate() {
        assert_eq!(row[2].parse::<usize>().unwrap(), 2 << l);
        let h = 0.5f64.powi(l as i32);
        let ratio = (k(0) * h.powi(4) / k(l)).sqrt();
        let expected = next_prime((4096.0 * ratio * (1.0 - 1e-12)).ceil() as u64);
        assert_eq!(row[3].parse::<u64>().unwrap(), expected, "level {l}");
    }
    assert_eq!(rows[1][3], "727");
    assert_eq!(rows[2][3], "109");
}

#[test]
fn rerun_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ml.cfg",
        "run.mode = ml\nrun.L = 2\nfield.family = haar\nwavelet.max_level = 6\nmlqmc.m_star = 4",
    );
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = bin().arg("run").arg(&cfg).env("MLQMCFE_THREADS", threads).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(dir.path().join("ml/results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unknown_key_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "run.mode = sl\n# comment\nfem.levels = 3");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("fem.levels"), "{err}");
}

#[test]
fn cbc_subcommand_emits_readable_vector() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "run.mode = sl");
    let path = dir.path().join("z.txt");
    let status = bin()
        .args(["cbc", "--s", "5", "--n", "251", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let (rule, lambda) = LatticeRule::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((rule.s(), rule.n(), rule.z()[0]), (5, 251, 1));
    assert!((lambda - 1.0).abs() < 1e-15);
}

#[test]
fn every_mode_has_a_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("sl", "fem.L = 3\nqmc.N = 31\nqmc.m = 4", "level,h,s,n,m,mean,variance,solves,cost", 2),
        (
            "qmc_convergence",
            "fem.L = 3\nfield.s = 3\nqmc.n_list = 31,61,127\nqmc.ref_N = 1021\nqmc.m = 4",
            "n,rms_error,mean_estimate",
            3,
        ),
        (
            "truncation",
            "fem.L = 3\ntruncation.s_list = 2,4,8\ntruncation.s_ref = 16\ntruncation.samples = 4\ntruncation.N = 31\nqmc.m = 2",
            "s,pointwise_error,integral_error",
            3,
        ),
        (
            "compare_ml_sl",
            "field.family = haar\nwavelet.max_level = 6\nmlqmc.epsilons = 2^-2,2^-4\nmlqmc.m_star = 4",
            "epsilon,L,ml_value,ml_std_error,ml_cost,sl_n,sl_value,sl_std_error,sl_cost,cost_ratio",
            2,
        ),
    ];
    for (mode, extra, header, rows) in cases {
        let text = format!(
            "run.mode = {mode}\n{extra}\noutput.dir = {}",
            dir.path().join(mode).display()
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let out = run_experiment(&cfg).unwrap();
        let lines = body(&out.results);
        assert_eq!(lines[0], header, "{mode}");
        assert_eq!(lines.len() - 1, rows, "{mode}");
        for f in ["results.csv", "plan.csv", "run.log"] {
            assert!(out.dir.join(f).exists(), "{mode}/{f}");
        }
        assert!(out.log.contains(&format!("config-hash: {}", cfg.hash())));
    }
}
