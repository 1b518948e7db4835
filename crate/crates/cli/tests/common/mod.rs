#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wlasso::io::save_csv;
use wlasso::sim::{beta_star, gen_ar1_gaussian, gen_responses, Pattern};
use wlasso::Dataset;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wlasso"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// A seeded AR(1) data set with the first-pattern truth, saved as CSV.
pub fn write_sim_csv(dir: &Path, name: &str, n: usize, p: usize, seed: u64) -> PathBuf {
    let x = gen_ar1_gaussian(n, p, 0.3, seed).unwrap();
    let truth = beta_star(&Pattern::Pattern1, p).unwrap().beta.mapv(|b| b / 10.0);
    let y = gen_responses(&x, &wlasso::Coefficients::new(truth), seed + 1).unwrap();
    let path = dir.join(name);
    save_csv(&Dataset::new(x, y).unwrap(), &path).unwrap();
    path
}

pub fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("valid JSON")
}
