use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use mutual_ae::dataio::{load_csv, make_windows, Normalization};
use mutual_ae::Error;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ten_rows.csv")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn forward_returns_by_hand() {
    let pair = load_csv(&fixture(), "spx", "vix", 2, 3).unwrap();
    let expected = [
        101.0 / 100.0 - 1.0,
        105.0 / 102.0 - 1.0,
        104.0 / 101.0 - 1.0,
        108.0 / 105.0 - 1.0,
        110.0 / 104.0 - 1.0,
        109.0 / 108.0 - 1.0,
        111.0 / 110.0 - 1.0,
        115.0 / 109.0 - 1.0,
    ];
    assert_eq!(pair.len(), 8);
    assert!(pair.target.iter().zip(expected).all(|(a, b)| close(*a, b)), "{:?}", pair.target);
    assert_eq!(pair.context, [20.0, 22.0, 19.0, 25.0, 21.0, 18.0, 23.0, 24.0]);
    assert_eq!(pair.dates[0], NaiveDate::from_ymd_opt(2021, 3, 1).unwrap());
    assert_eq!(pair.dates[7], NaiveDate::from_ymd_opt(2021, 3, 10).unwrap());
    assert_eq!((pair.target_name.as_str(), pair.context_name.as_str(), pair.horizon), ("spx", "vix", 2));
}

#[test]
fn incomplete_edge_rows_are_trimmed() {
    // gold is missing on the first and last rows
    let pair = load_csv(&fixture(), "spx", "gold", 1, 3).unwrap();
    assert_eq!(pair.len(), 7);
    assert_eq!(pair.dates[0], NaiveDate::from_ymd_opt(2021, 3, 2).unwrap());
    assert!(close(pair.target[0], 101.0 / 102.0 - 1.0));
    assert!(close(pair.target[6], 111.0 / 109.0 - 1.0));
    assert_eq!(pair.context[6], 1730.0);
}

#[test]
fn normalization_and_split_by_hand() {
    let pair = load_csv(&fixture(), "spx", "vix", 0, 3).unwrap();
    // horizon 0 reads the column as-is
    assert_eq!(pair.target[3], 105.0);
    let set = make_windows(&pair, 3, 1, 0.5).unwrap();
    assert_eq!(set.split_index, 5);
    // vix over the first five rows: mean 21.4, population variance 4.24
    let stats: Normalization = set.stats;
    assert!(close(stats.context_mean, 21.4));
    assert!(close(stats.context_std, 4.24f64.sqrt()));
    assert!(close(stats.target_mean, 102.4));
    let starts: Vec<usize> = set.windows.iter().map(|w| w.start).collect();
    assert_eq!(starts, [0, 1, 2, 5, 6, 7]);
    assert_eq!(set.train_count, 3);
    let w = &set.windows[0];
    assert!(close(w.tensor.at(1, 1), (22.0 - 21.4) / 4.24f64.sqrt()));
}

#[test]
fn interior_gap_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gap.csv");
    let text = std::fs::read_to_string(fixture()).unwrap().replace("2021-03-05,104,21", "2021-03-05,,21");
    std::fs::write(&path, text).unwrap();
    match load_csv(&path, "spx", "vix", 1, 3) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let cases = [
        write("header.csv", "day,spx,vix\n2021-03-01,1,2\n"),
        write("date.csv", "date,spx,vix\n03/01/2021,1,2\n"),
        write("order.csv", "date,spx,vix\n2021-03-02,1,2\n2021-03-01,1,2\n"),
        write("number.csv", "date,spx,vix\n2021-03-01,abc,2\n"),
    ];
    for p in &cases {
        assert!(matches!(load_csv(p, "spx", "vix", 0, 1), Err(Error::Parse { .. })), "{}", p.display());
    }
    let p = write("short.csv", "date,spx,vix\n2021-03-01,1,2\n2021-03-02,1,2\n");
    assert!(matches!(load_csv(&p, "spx", "vix", 1, 3), Err(Error::SegmentTooShort { .. })));
    assert!(matches!(load_csv(&fixture(), "spx", "oil", 1, 3), Err(Error::Parse { line: 1, .. })));
}
