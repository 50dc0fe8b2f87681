#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levy_extract::RunConfig;
use serde_json::{json, Value};

/// A pure-jump 1D system small enough to run end to end in seconds.
pub fn tiny_1d(out: &Path) -> Value {
    json!({
        "name": "tiny",
        "sde": {
            "drift": ["3*x - x^3"],
            "diffusion": [[0]],
            "levy": { "alpha": 1.5, "sigma": 1.0, "dim": 1 },
            "t_star": 0.05,
            "dt": 0.0005,
            "scheme": "tamed_euler"
        },
        "grid": { "lo": -1.0, "hi": 1.0, "points": 5, "samples_per_point": 800 },
        "training": {
            "arch": { "kind": "spline", "layers": 2, "bins": 5, "bound": 3.0, "hidden": [8] },
            "optimizer": { "epochs": 3, "batch_size": 256 }
        },
        "extraction": {
            "eps_list": [0.3, 0.6, 1.2], "ball_eps": 0.5, "quad_points": 51, "jump_source": "raw"
        },
        "seed": 7,
        "output_dir": out
    })
}

/// Brownian-only system whose burst at `z = 0` has no spread, so that
/// burst's training fails while the others succeed.
pub fn degenerate_1d(out: &Path) -> Value {
    json!({
        "name": "degenerate",
        "sde": {
            "drift": ["-x"],
            "diffusion": [["x"]],
            "t_star": 0.05,
            "dt": 0.0005
        },
        "grid": { "lo": -1.0, "hi": 1.0, "points": 3, "samples_per_point": 400 },
        "training": {
            "arch": { "kind": "spline", "layers": 2, "bins": 5, "bound": 3.0, "hidden": [8] },
            "optimizer": { "epochs": 2, "batch_size": 128 }
        },
        "extraction": { "jumps": false, "ball_eps": 0.5, "quad_points": 51 },
        "seed": 3,
        "output_dir": out
    })
}

pub fn config(value: &Value) -> RunConfig {
    RunConfig::parse(&value.to_string()).expect("test config is valid")
}

pub fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

pub fn cli(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levy-extract"));
    cmd.args(args).env_remove(levy_extract::OUTPUT_ROOT_ENV);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
