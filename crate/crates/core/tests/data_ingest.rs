use nalgebra::DMatrix;
use partition_bvs::data::{build_design, build_partitions, load_csv, read_csv, ColumnRole, ColumnRoles, Cohort};
use partition_bvs::math::RngStream;
use partition_bvs::synthetic::{generate_cohort, transitions_template};
use partition_bvs::Error;
use proptest::prelude::*;

fn roles() -> ColumnRoles {
    ColumnRoles {
        outcome: "neet".into(),
        modifiable: vec!["dep".into(), "alc".into()],
        controls: vec!["age".into(), "sex".into()],
    }
}

const FIVE_ROWS: &str = "id,neet,dep,alc,age,sex
1,0,3.5,10,16,0
2,1,8,2,17,1
3,0,1,0,16,1
4,1,12.25,7,19,0
5,0,0,3,18,1
";

#[test]
fn five_row_file() {
    let loaded = read_csv(FIVE_ROWS.as_bytes(), &roles()).unwrap();
    assert_eq!(loaded.cohort.n(), 5);
    assert_eq!(loaded.dropped_incomplete, 0);
    assert_eq!(loaded.cohort.y(), &[0, 1, 0, 1, 0]);
    assert_eq!(loaded.cohort.x()[(3, 0)], 12.25);
    assert_eq!(loaded.cohort.w()[(1, 0)], 17.0);
}

#[test]
fn missing_cells_drop_rows() {
    let text = FIVE_ROWS.replace("2,1,8,2,17,1", "2,1,,2,17,1");
    let loaded = read_csv(text.as_bytes(), &roles()).unwrap();
    assert_eq!(loaded.cohort.n(), 4);
    assert_eq!(loaded.dropped_incomplete, 1);
    let text = FIVE_ROWS.replace("3,0,1,0,16,1", "3,0,1,NA,16,1");
    assert_eq!(read_csv(text.as_bytes(), &roles()).unwrap().dropped_incomplete, 1);
}

#[test]
fn malformed_files() {
    let mut r = roles();
    r.modifiable.push("nope".into());
    assert!(matches!(read_csv(FIVE_ROWS.as_bytes(), &r), Err(Error::Schema(_))));

    let text = FIVE_ROWS.replace("4,1,12.25", "4,1,high");
    match read_csv(text.as_bytes(), &roles()) {
        Err(Error::Parse { row, column, .. }) => {
            assert_eq!(row, 4);
            assert_eq!(column, "dep");
        }
        other => panic!("expected parse error, got {other:?}"),
    }

    let text = FIVE_ROWS.replace("5,0,0,3", "5,2,0,3");
    assert!(matches!(read_csv(text.as_bytes(), &roles()), Err(Error::Domain { row: 5, .. })));
    assert!(matches!(load_csv("/nonexistent/file.csv", &roles()), Err(Error::Io { .. })));
}

#[test]
fn simulated_transitions_file_loads() {
    let synth = generate_cohort(&transitions_template(), &mut RngStream::new(3, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    let mut bytes = Vec::new();
    synth.write_csv(&mut bytes).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    let roles = ColumnRoles {
        outcome: "neet_followup".into(),
        modifiable: ["alcohol", "cannabis", "tobacco", "depression", "functioning", "anxiety"]
            .map(String::from)
            .to_vec(),
        controls: vec!["age".into(), "sex".into()],
    };
    let loaded = load_csv(&path, &roles).unwrap();
    assert_eq!(loaded.cohort.n(), 377);
    assert_eq!(loaded.cohort.x(), &synth.x);
}

fn cohort_with(x_cols: Vec<Vec<f64>>, w_rows: &[(f64, f64)]) -> Cohort {
    let n = w_rows.len();
    let p = x_cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| x_cols[j][i]);
    let w = DMatrix::from_fn(n, 2, |i, j| if j == 0 { w_rows[i].0 } else { w_rows[i].1 });
    let names = (0..p).map(|j| format!("x{j}")).collect();
    let y = (0..n).map(|i| (i % 2) as u8).collect();
    Cohort::new(y, x, w, names, vec!["age".into(), "sex".into()]).unwrap()
}

#[test]
fn standardization() {
    let c = cohort_with(
        vec![vec![1.0, 4.0, 2.0, 9.0], vec![5.0; 4], vec![0.0, 1.0, 1.0, 0.0]],
        &[(16.0, 0.0), (17.0, 1.0), (16.0, 1.0), (18.0, 0.0)],
    );
    assert!(matches!(c.standardize(&["x1"]), Err(Error::DegenerateColumn(name)) if name == "x1"));
    let s = c.standardize(&["x0", "x2"]).unwrap();
    let col: Vec<f64> = s.x().column(0).iter().copied().collect();
    let mean = col.iter().sum::<f64>() / 4.0;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!(mean.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
    assert_eq!(s.x().column(2), c.x().column(2), "binary columns are left alone");
    let back = s.destandardized_x();
    assert!((back - c.x()).amax() < 1e-10);
    assert!(matches!(c.standardize(&["age"]), Err(Error::Config(_))));
}

#[test]
fn partition_examples() {
    let c = cohort_with(vec![vec![0.0, 1.0, 2.0]], &[(16.0, 0.0), (16.0, 1.0), (17.0, 0.0)]);
    assert_eq!(build_partitions(&c).unwrap().len(), 3);
    let c = cohort_with(vec![vec![0.0, 1.0, 2.0]], &[(16.0, 1.0); 3]);
    assert_eq!(build_partitions(&c).unwrap().len(), 1);
    let grid: Vec<(f64, f64)> = (16..=25).flat_map(|a| [(a as f64, 0.0), (a as f64, 1.0)]).collect();
    let c = cohort_with(vec![(0..20).map(|i| i as f64).collect()], &grid);
    let parts = build_partitions(&c).unwrap();
    assert_eq!(parts.len(), 20);
    assert_eq!(parts.control_vector(0), vec![1.0, 16.0, 0.0]);
    assert_eq!(parts.control_vector(19), vec![1.0, 25.0, 1.0]);
}

proptest! {
    #[test]
    fn partitions_cover_and_are_permutation_equivariant(
        cells in prop::collection::vec((16i64..20, 0u8..2), 2..60),
        seed: u64,
    ) {
        let rows: Vec<(f64, f64)> = cells.iter().map(|&(a, s)| (a as f64, s as f64)).collect();
        let n = rows.len();
        let c = cohort_with(vec![(0..n).map(|i| i as f64).collect()], &rows);
        let parts = build_partitions(&c).unwrap();
        let mut seen = vec![0; n];
        for p in parts.partitions() {
            for &i in &p.members {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert_eq!(parts.counts().iter().sum::<usize>(), n);

        let mut order: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut RngStream::new(seed, 0));
        let permuted: Vec<(f64, f64)> = order.iter().map(|&i| rows[i]).collect();
        let c2 = cohort_with(vec![order.iter().map(|&i| i as f64).collect()], &permuted);
        let p2 = build_partitions(&c2).unwrap();
        prop_assert_eq!(parts.len(), p2.len());
        prop_assert_eq!(parts.counts(), p2.counts());
        for s in 0..parts.len() {
            prop_assert_eq!(parts.control_vector(s), p2.control_vector(s));
        }
    }
}

#[test]
fn design_shapes_and_interactions() {
    let synth = generate_cohort(&transitions_template(), &mut RngStream::new(1, 0)).unwrap();
    let c = synth.to_cohort("neet_baseline").unwrap().standardize_all().unwrap();
    let full = build_design(&c, true, true).unwrap();
    assert_eq!(full.ncols(), 21);
    assert_eq!(build_design(&c, false, false).unwrap().ncols(), 7);
    assert_eq!(build_design(&c, true, false).unwrap().ncols(), 9);
    assert!(build_design(&c, false, true).is_err());
    let m = full.matrix();
    for (j, role) in full.roles().iter().enumerate() {
        if let ColumnRole::Interaction { modifiable, control } = *role {
            let xj = full.roles().iter().position(|r| *r == ColumnRole::Modifiable { index: modifiable }).unwrap();
            let wj = full.roles().iter().position(|r| *r == ColumnRole::Control { index: control }).unwrap();
            for i in 0..m.nrows() {
                assert_eq!(m[(i, j)], m[(i, xj)] * m[(i, wj)]);
            }
        }
    }
    let mut labels = full.labels().to_vec();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), 21);
    assert!(full.labels().contains(&"depression×age".to_string()));
}
