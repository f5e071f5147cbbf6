use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const UNITS: &str = "[units]\nlength = \"um\"\nwavenumber = \"1/um\"\n";

fn qwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qwalk")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{UNITS}{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_at_zero_length_is_a_delta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[array]\nn_sites = 7\nbeta = 11.4\nkappa = 0.005\nz_offset = 0.0\n[run]\nz_design = [0]\nsingle_inputs = [3]\n",
    );
    let out = dir.path().join("out");
    let o = qwalk(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("single_in3_z0.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("waveguide,probability"));
    let p: Vec<f64> = data_rows(&text).iter().map(|r| r[1].parse().unwrap()).collect();
    for (i, v) in p.iter().enumerate() {
        let expected = if i == 2 { 1.0 } else { 0.0 };
        assert!((v - expected).abs() < 1e-12, "{p:?}");
    }
}

#[test]
fn simulate_fitted_preset_writes_one_file_per_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\npreset = \"paper-21-fitted\"\n[run]\nz_design = [350, 700, 1050]\nsingle_inputs = [11]\n");
    let out = dir.path().join("out");
    let o = qwalk(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for z in [350, 700, 1050] {
        let text = fs::read_to_string(out.join(format!("single_in11_z{z}.csv"))).unwrap();
        let rows = data_rows(&text);
        assert_eq!(rows.len(), 21);
        let total: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}

#[test]
fn missing_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\npreset = \"no-such-array\"\n[run]\nz_design = [350]\n");
    let o = qwalk(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-array"));
}

#[test]
fn correlations_cover_two_inputs_and_three_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[array]\npreset = \"paper-21-fitted\"\n[run]\nz_design = [350, 700, 1050]\ninputs = [[10, 12], [11, 12]]\n",
    );
    let out = dir.path().join("out");
    let o = qwalk(&["correlations", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 12, "{names:?}");
    let text = fs::read_to_string(out.join("quantum_in10-12_z700.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 22);
    assert_eq!(header[0], "waveguide");
}

#[test]
fn correlations_at_zero_length_are_one_hot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[array]\nn_sites = 5\nbeta = 11.4\nkappa = 0.005\nz_offset = 0.0\n[run]\nz_design = [0]\ninputs = [[2, 4]]\n",
    );
    let out = dir.path().join("out");
    let o = qwalk(&["correlations", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("quantum_in2-4_z0.csv")).unwrap());
    for (a, row) in rows.iter().enumerate() {
        for (b, cell) in row[1..].iter().enumerate() {
            let v: f64 = cell.parse().unwrap();
            let expected = if (a, b) == (1, 3) || (a, b) == (3, 1) { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "({a}, {b}): {v}");
        }
    }
}

#[test]
fn theory_violations_peak_positive_at_775_um() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\npreset = \"paper-21-fitted\"\n[run]\nz_design = [700]\ninputs = [[10, 12]]\n");
    let out = dir.path().join("out");
    let o = qwalk(&["violations", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("violations_in10-12_z700.csv")).unwrap());
    let mut peak = f64::NEG_INFINITY;
    for (a, row) in rows.iter().enumerate() {
        assert!(row[a + 1].is_empty(), "diagonal entries are undefined");
        for cell in row[1..].iter().filter(|c| !c.is_empty()) {
            peak = peak.max(cell.parse().unwrap());
        }
    }
    assert!(peak > 0.0, "{peak}");
}

#[test]
fn hom_counts_give_violation_significance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\nn_sites = 2\nbeta = 11.4\nkappa = 0.005\n");
    // Γ ∝ (1/4, 1/2, 1/4) for a balanced coupler without interference
    let counts = dir.path().join("hom.csv");
    fs::write(&counts, "j,k,counts\n1,1,2500\n1,2,5000\n2,2,2500\n").unwrap();
    let out = dir.path().join("out");
    let o = qwalk(&["violations", "--config", &cfg, "--out", out.to_str().unwrap(), "--counts", counts.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = data_rows(&fs::read_to_string(out.join("violations_hom.csv")).unwrap());
    assert_eq!(v[0][1], "");
    let v12: f64 = v[0][2].parse().unwrap();
    assert!((v12 - (2.0 / 3.0 * 0.25 - 0.5)).abs() < 1e-8, "{v12}");
    let z = data_rows(&fs::read_to_string(out.join("zscore_hom.csv")).unwrap());
    let z12: f64 = z[0][2].parse().unwrap();
    assert!(z12 < 0.0);
}

#[test]
fn malformed_counts_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\nn_sites = 3\nbeta = 11.4\nkappa = 0.005\n");
    let counts = dir.path().join("bad.csv");
    fs::write(&counts, "j,k,counts\n1,2,10\n2,three,4\n").unwrap();
    let o = qwalk(&["violations", "--config", &cfg, "--counts", counts.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("bad.csv:3:"), "{}", stderr(&o));
}

#[test]
fn similarity_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let d = dir.path().join("d.csv");
    fs::write(&a, "waveguide,1,2\n1,1,0\n").unwrap();
    fs::write(&b, "waveguide,1,2\n1,0.5,0.5\n").unwrap();
    fs::write(&c, "waveguide,1,2\n1,0.2,0.3\n2,0.3,0.1\n").unwrap();
    fs::write(&d, "waveguide,1,2\n1,0,0\n2,0,4\n").unwrap();
    let run = |x: &Path, y: &Path| stdout(&qwalk(&["similarity", x.to_str().unwrap(), y.to_str().unwrap()]));
    assert_eq!(run(&a, &b), "0.500000");
    assert_eq!(run(&c, &c), "1.000000");
    let e = dir.path().join("e.csv");
    fs::write(&e, "waveguide,1,2\n1,3,0\n2,0,0\n").unwrap();
    assert_eq!(run(&e, &d), "0.000000");
}

#[test]
fn similarity_reads_counts_files_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    fs::write(&counts, "j,k,counts\n1,1,5\n1,2,10\n2,2,5\n").unwrap();
    let dense = dir.path().join("dense.csv");
    fs::write(&dense, "waveguide,1,2\n1,0.25,0.5\n2,0.5,0.25\n").unwrap();
    let o = qwalk(&["similarity", counts.to_str().unwrap(), dense.to_str().unwrap(), "--mask", "full"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "1.000000");
}

#[test]
fn sweep_writes_requested_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\npreset = \"paper-21-fitted\"\n[run]\ninputs = [[11, 12]]\n");
    let out = dir.path().join("out");
    let o = qwalk(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--grid", "0:100:10", "--mask", "even-odd"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("sweep_in11-12.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("z_um,v_max,a,b"));
    assert_eq!(data_rows(&text).len(), 11);
}

#[test]
fn fit_without_datasets_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[array]\npreset = \"paper-21-fitted\"\n");
    let o = qwalk(&["fit", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}
