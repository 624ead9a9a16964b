//! File-format tests: CSV parsing, round trips and summary schema.

use std::path::Path;

use nalgebra::DMatrix;
use proptest::prelude::*;
use tgifa::io::*;
use tgifa_core::imputation::{Designation, ImputationSummary};
use tgifa_core::Cell;

#[test]
fn reads_files_and_reports_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, "a,b\n1,NA\n2,3\n").unwrap();
    let m = read_matrix_csv(&path).unwrap();
    assert_eq!(m.names, ["a", "b"]);
    assert!(!m.observed[(0, 1)]);
    assert!(matches!(read_matrix_csv(&dir.path().join("missing.csv")), Err(IoError::File { .. })));
}

#[test]
fn summary_schema() {
    let s = ImputationSummary {
        cell: Cell { row: 0, col: 2 },
        designation: Designation::Mnar,
        designation_probability: 0.75,
        median: 0.5,
        ci_lower: 0.25,
        ci_upper: 1.0,
    };
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &[s]).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "row_index,col_index,designation,designation_prob,median,ci_lower,ci_upper\n1,3,MNAR,0.75,0.5,0.25,1.0\n"
    );
}

proptest! {
    #[test]
    fn csv_round_trip_is_value_identical(
        n in 1usize..6,
        p in 1usize..5,
        cells in prop::collection::vec((any::<bool>(), 0.0f64..1e6), 30),
        tiny in prop::collection::vec(1e-300f64..1e-6, 30),
    ) {
        let values = DMatrix::from_fn(n, p, |i, j| {
            let k = i * p + j;
            if k % 3 == 0 { tiny[k] } else { cells[k].1 }
        });
        let observed = DMatrix::from_fn(n, p, |i, j| cells[i * p + j].0);
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &names, &values, Some(&observed)).unwrap();
        let back = parse_matrix_csv(buf.as_slice(), Path::new("mem")).unwrap();
        prop_assert_eq!(&back.names, &names);
        prop_assert_eq!(&back.observed, &observed);
        for i in 0..n {
            for j in 0..p {
                if observed[(i, j)] {
                    prop_assert_eq!(back.values[(i, j)].to_bits(), values[(i, j)].to_bits());
                }
            }
        }
    }
}
