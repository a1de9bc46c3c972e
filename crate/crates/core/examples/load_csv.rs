//! Reads a cohort from CSV with explicit column roles and builds the
//! partition index and the design with interactions.

use partition_bvs::data::{build_design, build_partitions, read_csv, ColumnRoles};

const DATA: &str = "id,neet,depression,alcohol,age,sex
1,0,4,12,17,0
2,1,15,3,21,1
3,0,,8,21,1
4,1,22,0,17,0
5,0,7,20,21,0
6,1,11,5,17,1
";

fn main() -> partition_bvs::Result<()> {
    let roles = ColumnRoles {
        outcome: "neet".into(),
        modifiable: vec!["depression".into(), "alcohol".into()],
        controls: vec!["age".into(), "sex".into()],
    };
    let loaded = read_csv(DATA.as_bytes(), &roles)?;
    println!("kept {} rows, dropped {}", loaded.cohort.n(), loaded.dropped_incomplete);
    let cohort = loaded.cohort.standardize_all()?;
    let parts = build_partitions(&cohort)?;
    for s in 0..parts.len() {
        println!("partition {s}: w = {:?}, n = {}", parts.control_vector(s), parts.counts()[s]);
    }
    let design = build_design(&cohort, true, true)?;
    println!("design columns: {:?}", design.labels());
    Ok(())
}
