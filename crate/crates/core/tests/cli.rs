mod common;

use common::*;
use ggss_lab::config::{parse_str, KEYS};

#[test]
fn help_lists_every_key_with_its_default() {
    let run = run_cli(&["--help"]);
    assert_eq!(run.code, 0);
    for (k, d, _) in KEYS {
        if !d.is_empty() {
            assert!(run.stdout.contains(&format!("{k} = {d}")), "missing {k}");
        }
    }
    assert!(run.stdout.contains("verify-theorems"));
}

#[test]
fn config_errors_exit_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let bad = run_with_config("rv", "rv_m = 4\nbogus_key = 1\n", dir.path(), &[]);
    assert_eq!(bad.code, 1);
    assert!(bad.stderr.contains("line 2") && bad.stderr.contains("bogus_key"), "{}", bad.stderr);
    let neg = run_with_config("attack", "noise_variance = -1\n", dir.path(), &[]);
    assert_eq!(neg.code, 1);
    assert!(neg.stderr.contains("line 1"), "{}", neg.stderr);
    let typed = run_with_config("rv", "rv_m = many\n", dir.path(), &[]);
    assert_eq!(typed.code, 1);
    let jobs = run_with_config("rv", "", dir.path(), &["--jobs", "0"]);
    assert_eq!(jobs.code, 1);
    let missing = run_cli(&["rv", "--config", "/nonexistent/cfg"]);
    assert_eq!(missing.code, 1);
    // nothing but the config files was written
    assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| e.unwrap().path().is_file()));
}

#[test]
fn rv_reruns_are_byte_identical_in_fresh_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "rv_m = 6\nrv_n = 3\nseeds = 2 0\n";
    let a = run_with_config("rv", cfg, dir.path(), &["--jobs", "2"]);
    let b = run_with_config("rv", cfg, dir.path(), &[]);
    assert_eq!((a.code, b.code), (0, 0), "{} {}", a.stderr, b.stderr);
    assert_ne!(a.run_dir(), b.run_dir());
    assert_eq!(csv_files(&a.run_dir()), csv_files(&b.run_dir()));
    let rv = String::from_utf8(csv_files(&a.run_dir())["rv.csv"].clone()).unwrap();
    assert!(rv.starts_with("model,rv,stderr,M,N,seed\nlinear-1,"));
    assert_eq!(rv.lines().count(), 1 + 5 * 2);

    // the manifest is a complete config that reproduces the run
    let manifest = std::fs::read_to_string(a.run_dir().join("manifest.txt")).unwrap();
    assert!(manifest.contains("format_version = 1\n") && manifest.contains("seeds = 2 0\n"));
    let again = run_cli(&["rv", "--config", a.run_dir().join("manifest.txt").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(again.code, 0, "{}", again.stderr);
    assert_eq!(csv_files(&a.run_dir()), csv_files(&again.run_dir()));
    assert_eq!(parse_str(&manifest).unwrap().rv_m, 6);
    let wrong = run_cli(&["attack", "--config", a.run_dir().join("manifest.txt").to_str().unwrap()]);
    assert_eq!(wrong.code, 1);
}

#[test]
fn seed_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_with_config("rv", "rv_m = 2\nrv_n = 2\nseeds = 0\n", dir.path(), &["--seed", "5", "--seed", "3"]);
    assert_eq!(run.code, 0);
    let manifest = std::fs::read_to_string(run.run_dir().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seeds = 5 3\n"));
}

#[test]
fn attack_sweep_and_baseline_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_denoiser(dir.path());
    let cfg = format!("{cfg}seeds = 0 1\nmodel = mlp-2\nvariances = 1e-2 1e-4\n");

    let attack = run_with_config("attack", &cfg, dir.path(), &[]);
    assert_eq!(attack.code, 0, "{}", attack.stderr);
    let files = csv_files(&attack.run_dir());
    for f in ["summary.csv", "trace_seed0.csv", "trace_seed1.csv", "snapshots_seed0.csv"] {
        assert!(files.contains_key(f), "{f}");
    }
    let trace = String::from_utf8(files["trace_seed0.csv"].clone()).unwrap();
    assert_eq!(trace.lines().count(), 21);

    let sweep = run_with_config("sweep-noise", &cfg, dir.path(), &["--jobs", "2"]);
    assert_eq!(sweep.code, 0, "{}", sweep.stderr);
    let text = String::from_utf8(csv_files(&sweep.run_dir())["sweep.csv"].clone()).unwrap();
    let keys: Vec<(String, String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect();
    let want: Vec<(String, String, String)> = ["gaussian", "laplacian"]
        .iter()
        .flat_map(|k| ["1e-4", "1e-2"].iter().flat_map(move |v| ["0", "1"].iter().map(move |s| (k.to_string(), v.to_string(), s.to_string()))))
        .collect();
    assert_eq!(keys, want);
    assert!(text.starts_with("noise_kind,variance,seed,peak_psnr,final_psnr,peak_mse\n"));

    let base = run_with_config("baseline", &cfg, dir.path(), &[]);
    assert_eq!(base.code, 0, "{}", base.stderr);
    let a = String::from_utf8(csv_files(&base.run_dir())["summary.csv"].clone()).unwrap();
    let b = String::from_utf8(files["summary.csv"].clone()).unwrap();
    assert_eq!(a.lines().next(), b.lines().next());
}

#[test]
fn non_finite_prior_exits_with_numeric_status() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, _) = small_denoiser(dir.path());
    let text = std::fs::read_to_string(&ckpt).unwrap();
    // weights of 1e300 are finite on disk but overflow in the first layer
    let poisoned: String = text
        .lines()
        .map(|l| {
            if l.trim_start().starts_with(|c: char| c == '-' || c.is_ascii_digit()) {
                l.split_whitespace().map(|_| "1e300").collect::<Vec<_>>().join(" ")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, poisoned).unwrap();
    let run = run_with_config("attack", &format!("steps = 20\ndenoiser = {}\n", bad.display()), dir.path(), &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert!(run.stderr.contains("NaN encountered at step 20"), "{}", run.stderr);

    let nan = dir.path().join("nan.ckpt");
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let first = lines.iter().position(|l| l.starts_with(|c: char| c == '-' || c.is_ascii_digit())).unwrap();
    let mut tokens: Vec<&str> = lines[first].split_whitespace().collect();
    tokens[0] = "NaN";
    lines[first] = tokens.join(" ");
    std::fs::write(&nan, lines.join("\n")).unwrap();
    let run = run_with_config("attack", &format!("steps = 20\ndenoiser = {}\n", nan.display()), dir.path(), &[]);
    assert_eq!(run.code, 1, "{}", run.stderr);
    assert!(run.stderr.contains("non-finite"), "{}", run.stderr);
}

#[test]
fn verify_theorems_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = small_denoiser(dir.path());
    let cfg = format!("{cfg}seeds = 0 1 2\nlm_samples = 10000\njensen_samples = 1000\n");
    let run = run_with_config("verify-theorems", &cfg, dir.path(), &[]);
    // the convex-regime monotonicity check fails on this build; see README
    assert!(run.code == 0 || run.code == 3, "{} {}", run.code, run.stderr);
    let summary = String::from_utf8(csv_files(&run.run_dir())["summary.csv"].clone()).unwrap();
    assert!(summary.starts_with("id,pass,tolerance,samples,seeds,stats\n"));
    for id in ["chi-square-tail", "jensen-affine", "jensen-gap-trend", "jensen-gap-bound", "jacobian-spectrum", "convex-monotonicity", "noise-convergence-rate", "noise-psnr-ordering"] {
        assert!(summary.contains(&format!("\n{id}")), "{id}");
    }
    let failed = summary.lines().skip(1).any(|l| l.split(',').nth(1) == Some("false"));
    assert_eq!(run.code == 3, failed);
    assert!(std::fs::read_to_string(run.run_dir().join("reports.txt")).unwrap().contains("id = jensen-affine\n"));
}
