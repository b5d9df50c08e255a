use std::fs;
use std::path::Path;
use std::process::Command;

const TINY: &str = "\
env.width = 4
env.height = 4
model.n_states = 6
model.obs = position
model.em_iters = 5
model.ensemble = 2
pretrain.trajectories = 8
pretrain.length = 10
pepper.episodes = 3
pepper.episode_len = 6
pepper.horizon = 3
pepper.candidates = 8
matrix.volatility = 0,100
matrix.seeds = 2
";

fn pepper(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pepper"))
        .args(args)
        .current_dir(dir)
        .env_remove("PEPPER_MATRIX__SEEDS")
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> String {
    fs::read_to_string(dir.join("out/manifest.csv")).unwrap()
}

#[test]
fn run_resumes_and_produces_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("tiny.cfg"), TINY).unwrap();

    let first = pepper(
        &["run", "--config", "tiny.cfg", "--out", "out", "--mode", "state-pref", "--volatility", "0"],
        dir,
    );
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(dir.join("out/model/model.txt").exists());
    assert_eq!(manifest(dir).lines().count(), 3);
    let episode = dir.join("out/runs/state-pref/v000/s000/episodes/e001.csv");
    let before = fs::read(&episode).unwrap();

    let second = pepper(&["run", "--config", "tiny.cfg", "--out", "out"], dir);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    let stderr = String::from_utf8_lossy(&second.stderr);
    assert!(stderr.contains("10 cells run, 2 already complete"), "{stderr}");
    assert_eq!(fs::read(&episode).unwrap(), before);
    assert_eq!(manifest(dir).lines().count(), 13);

    for f in ["summary.csv", "pairwise_hausdorff.csv", "entropy_curve.csv", "marginal_likelihood.csv"] {
        assert!(dir.join("out/analysis").join(f).exists(), "{f}");
    }
    let plot = pepper(&["plot", "--config", "tiny.cfg", "--out", "out"], dir);
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(String::from_utf8_lossy(&plot.stdout).contains(".svg"));
}

#[test]
fn bad_config_and_env_override_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.cfg"), "env.width = 4\nenv.colour = blue\n").unwrap();
    let out = pepper(&["pretrain", "--config", "bad.cfg", "--out", "out"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(dir.join("tiny.cfg"), TINY).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pepper"))
        .args(["pretrain", "--config", "tiny.cfg", "--out", "out"])
        .current_dir(dir)
        .env("PEPPER_MODEL__N_STATES", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_states"));
}
