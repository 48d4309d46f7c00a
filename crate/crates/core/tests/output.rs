use irs_capacity::channel::SystemConfig;
use irs_capacity::experiment::{
    csv_header, emit_output, read_points_csv, sweep_region, ExperimentSpec, Mode, OutputFormat, RegionPoint,
};

fn spec() -> ExperimentSpec {
    ExperimentSpec {
        modes: vec![Mode::NomaInf, Mode::OmaFinite],
        alpha_steps: 3,
        seeds: vec![2, 5],
        system: SystemConfig { elements: 8, ..SystemConfig::default() },
        n_blocks: vec![1, 3],
        ..ExperimentSpec::default()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn csv_round_trip_preserves_rows() {
    let points = sweep_region(&spec()).unwrap();
    // NomaInf: 2 seeds x 3 profiles; OmaFinite: 2 seeds x 2 block counts x 3.
    assert_eq!(points.len(), 6 + 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.csv");
    emit_output(&points, OutputFormat::Csv, &path).unwrap();
    let back = read_points_csv(&path).unwrap();
    assert_eq!(back.len(), points.len());
    for (a, b) in points.iter().zip(&back) {
        assert_eq!((a.mode, a.seed, a.n_blocks), (b.mode, b.seed, b.n_blocks));
        assert!(a.alpha.iter().zip(&b.alpha).all(|(x, y)| close(*x, *y)));
        assert!(a.rates.iter().zip(&b.rates).all(|(x, y)| close(*x, *y)));
        assert!(close(a.common_rate, b.common_rate));
    }
}

#[test]
fn rows_are_ordered_by_mode_seed_blocks_alpha() {
    let points = sweep_region(&spec()).unwrap();
    let key = |p: &RegionPoint| {
        let mode = spec().modes.iter().position(|m| *m == p.mode).unwrap();
        (mode, p.seed, p.n_blocks.unwrap_or(0), (p.alpha[0] * 1e6) as i64)
    };
    assert!(points.windows(2).all(|w| key(&w[0]) < key(&w[1])));
}

#[test]
fn empty_output_is_a_bare_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_output(&[], OutputFormat::Csv, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.trim_end(), csv_header(2).join(","));
    assert!(read_points_csv(&path).unwrap().is_empty());
}

#[test]
fn json_output_deserializes_to_the_same_points() {
    let points = sweep_region(&ExperimentSpec { modes: vec![Mode::OmaInf], ..spec() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.json");
    emit_output(&points, OutputFormat::Json, &path).unwrap();
    let back: Vec<RegionPoint> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, points);
}

#[test]
fn header_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "mode,seed,alpha\nnoma-inf,1,0.5\n").unwrap();
    assert!(read_points_csv(&path).is_err());
}
