//! Writes a cohort to CSV, reads it back through a column schema, and shows
//! standardization and fold assignment.

use nfg::data::{generate_synthetic, load_csv, split_folds, CsvSchema, Standardization, SyntheticSpec};

fn main() -> nfg::Result<()> {
    let data = generate_synthetic(&SyntheticSpec { n: 500, p: 4, gammas: vec![vec![0.3, 0.3, 0.0, 0.0], vec![0.0, 0.0, 0.3, 0.3]], ..SyntheticSpec::default() })?;
    let path = std::env::temp_dir().join("nfg-cohort.csv");
    data.write_csv(&path, "duration", "status")?;

    let schema = CsvSchema {
        time_col: "duration".into(),
        event_col: "status".into(),
        features: Some(vec!["x1".into(), "x3".into()]),
        risks: None,
    };
    let loaded = load_csv(&path, &schema)?;
    println!("{} rows, features {:?}, event counts {:?}", loaded.len(), loaded.feature_names, loaded.event_counts());

    let rows: Vec<usize> = (0..loaded.len()).collect();
    let st = Standardization::fit(&loaded, &rows);
    println!("means {:.3?}, sds {:.3?}", st.means, st.stds);
    println!("first row {:.3?} -> {:.3?}", loaded.row(0), st.apply(loaded.row(0)));

    let folds = split_folds(&loaded, 5, 9)?;
    for k in 0..5 {
        let members: Vec<usize> = rows.iter().copied().filter(|&i| folds[i] == k).collect();
        let events = members.iter().filter(|&&i| loaded.events[i] > 0).count();
        println!("fold {k}: {} patients, {events} events", members.len());
    }
    let _ = std::fs::remove_file(&path);
    Ok(())
}
