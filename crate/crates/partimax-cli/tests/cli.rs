//! End-to-end tests of the installed binary: exit codes, golden output, CSV
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_partimax"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small-geometry bench config: 360x360 plane, 6 tilings, n = 54 boxes.
fn small_bench_config(measure_time: bool) -> String {
    format!(
        "mode = \"bench\"\n\
         [tiling]\n\
         image_width = 360\nimage_height = 360\n\
         box_width = 180\nbox_height = 180\noffset_x = 60\noffset_y = 30\n\
         [filter]\nparticles_per_person = 30\n\
         [bench]\n\
         algorithms = [\"greedy\", \"partimax\"]\n\
         k_values = [4]\nr_values = [6]\npeople = [1, 2]\n\
         seeds = 2\ntrajectories = 1\ntimesteps = 5\nseed = 99\n\
         measure_time = {measure_time}\n"
    )
}

#[test]
fn select_matches_golden_output() {
    let out = bin()
        .arg("--config")
        .arg(fixture("select.toml"))
        .arg("--belief")
        .arg(fixture("particles_250.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let expected = std::fs::read(fixture("select_expected.txt")).unwrap();
    assert_eq!(out.stdout, expected);
}

#[test]
fn bench_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, small_bench_config(false)).unwrap();

    let mut runs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out_path = dir.path().join(name);
        let out = bin()
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        runs.push(std::fs::read_to_string(&out_path).unwrap());
    }
    assert_eq!(runs[0], runs[1]);

    let header = runs[0].lines().next().unwrap();
    assert_eq!(
        header,
        "algorithm,k,r,people,seed,trajectory_id,correct_predictions,timesteps,\
         mean_selection_time_us,gain_evaluations,boxes_fraction"
    );
    // 2 algorithms x 2 people counts x 2 seeds = 8 episodes.
    assert_eq!(runs[0].lines().count(), 9);
    // Untimed runs pin the timing column to zero.
    for line in runs[0].lines().skip(1) {
        assert_eq!(line.split(',').nth(8), Some("0.00"), "{line}");
    }
}

#[test]
fn timing_column_is_exempt_from_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, small_bench_config(true)).unwrap();
    let out_path = dir.path().join("timed.csv");
    let out = bin()
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let timed = std::fs::read_to_string(&out_path).unwrap();

    let untimed_config = dir.path().join("untimed.toml");
    std::fs::write(&untimed_config, small_bench_config(false)).unwrap();
    let untimed_path = dir.path().join("untimed.csv");
    let out = bin()
        .arg("--config")
        .arg(&untimed_config)
        .arg("--out")
        .arg(&untimed_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let untimed = std::fs::read_to_string(&untimed_path).unwrap();

    // Same rows once the timing column is masked out.
    let strip = |text: &str| -> Vec<String> {
        text.lines()
            .map(|line| {
                let mut cols: Vec<&str> = line.split(',').collect();
                let timing = 8.min(cols.len() - 1);
                cols[timing] = "_";
                cols.join(",")
            })
            .collect()
    };
    assert_eq!(strip(&timed), strip(&untimed));
    assert!(
        timed
            .lines()
            .skip(1)
            .any(|line| line.split(',').nth(8) != Some("0.00")),
        "timed run should record nonzero selection times"
    );
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[tiling]\nbox_depth = 3\n").unwrap();
    let out = bin().arg("--config").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("box_depth"), "{}", stderr(&out));
}

#[test]
fn malformed_particle_rows_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let belief = dir.path().join("belief.csv");
    std::fs::write(&belief, "1,2,3,4\n5,6,seven,8\n").unwrap();
    let out = bin()
        .arg("--mode")
        .arg("select")
        .arg("--belief")
        .arg(&belief)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn empty_belief_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let belief = dir.path().join("empty.csv");
    std::fs::write(&belief, "").unwrap();
    let out = bin()
        .arg("--mode")
        .arg("select")
        .arg("--belief")
        .arg(&belief)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_suite_exits_2() {
    let out = bin()
        .arg("--mode")
        .arg("verify")
        .arg("--suite")
        .arg("nosuch")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nosuch"), "{}", stderr(&out));
}

#[test]
fn single_suite_verify_passes() {
    let out = bin()
        .arg("--mode")
        .arg("verify")
        .arg("--suite")
        .arg("proportionality")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("PASS proportionality"), "{stdout}");
}

#[test]
fn bench_without_out_exits_2() {
    let out = bin().arg("--mode").arg("bench").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--out"), "{}", stderr(&out));
}
