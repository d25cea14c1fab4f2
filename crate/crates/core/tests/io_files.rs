use std::fs::{self, File};
use std::path::Path;

use acedesign::io::{read_design_csv, write_design_csv};
use acedesign::models::{load_dose_data, load_posterior_samples, DEFAULT_MODEL_WEIGHTS};
use acedesign::Design;
use tempfile::TempDir;

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn design_file_round_trip_keeps_metadata_out_of_the_table() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("d.csv");
    let d = Design::from_rows(&[vec![0.25_f64, -1.0], vec![1.0 / 7.0, 0.5], vec![0.0, 1e-12]]).unwrap();
    write_design_csv(File::create(&path).unwrap(), &d, &[("seed", "9".into()), ("note", "a\nb".into())]).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# seed: 9\n# note: a b\nx1,x2\n"));
    let back: Design<f64> = read_design_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn bundled_beetle_data_loads() {
    let rows = load_dose_data(data("beetle.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.windows(2).all(|w| w[0].dose < w[1].dose));
    assert!(rows.iter().all(|r| r.deaths <= r.n));
}

#[test]
fn bundled_posterior_uses_tabulated_weights() {
    let post = load_posterior_samples::<f64>(data("beetle_posterior.csv")).unwrap();
    assert_eq!(post.samples().len() + post.discarded(), 6000);
    for (w, t) in post.weights().iter().zip(DEFAULT_MODEL_WEIGHTS) {
        assert!((w - t).abs() < 1e-12);
    }
}

#[test]
fn posterior_weight_rows_override_defaults() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("p.csv");
    let mut body = String::from("u,b0,b1,b2,weight\n");
    for u in 1..=6 {
        let b2 = if u % 2 == 0 { "0.1" } else { "" };
        body.push_str(&format!("{u},0.2,1.5,{b2},\n{u},0.3,1.7,{b2},\n"));
    }
    for (u, w) in [(1, 0.5), (2, 0.1), (3, 0.1), (4, 0.1), (5, 0.1), (6, 0.1)] {
        body.push_str(&format!("{u},,,,{w}\n"));
    }
    fs::write(&path, body).unwrap();
    let post = load_posterior_samples::<f64>(&path).unwrap();
    assert!((post.weights()[0] - 0.5).abs() < 1e-12);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, fs::read_to_string(&path).unwrap().replace("1,,,,0.5", "1,,,,0.6")).unwrap();
    assert!(load_posterior_samples::<f64>(&bad).is_err());
}
