use std::sync::Arc;

use proptest::prelude::*;
use steps_core::dataset::*;

fn arb_dataset() -> impl Strategy<Value = CategoricalDataset> {
    prop::collection::vec(2usize..6, 1..5).prop_flat_map(|cards| {
        let row = cards.iter().map(|&k| 0..k as u32).collect::<Vec<_>>();
        prop::collection::vec(row, 0..80).prop_map(move |records| {
            let schema = Schema::new(
                cards
                    .iter()
                    .enumerate()
                    // labels with spaces and dashes
                    .map(|(j, &k)| Attribute::new(format!("col {j}"), (0..k).map(|l| format!("v-{l} x"))))
                    .collect(),
            )
            .unwrap();
            CategoricalDataset::new(Arc::new(schema), records).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn csv_round_trip(data in arb_dataset()) {
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = CategoricalDataset::read_csv(&buf[..], SchemaSource::Fixed(data.schema().clone())).unwrap();
        prop_assert_eq!(back.flat_levels(), data.flat_levels());
        prop_assert_eq!(back.n(), data.n());
    }

    #[test]
    fn cell_index_round_trips(data in arb_dataset()) {
        let schema = data.schema();
        let mut buf = vec![0u32; schema.len()];
        for r in data.records() {
            let c = schema.cell_index(r);
            prop_assert!(c < schema.cell_count());
            schema.decode_cell(c, &mut buf);
            prop_assert_eq!(&buf[..], r);
        }
    }

    #[test]
    fn cross_tab_marginals_agree(data in arb_dataset()) {
        let p = data.schema().len();
        let full = full_table(&data).unwrap();
        prop_assert_eq!(full.total(), data.n() as u64);
        for j in 0..p {
            let direct = one_way_counts(&data, j).unwrap();
            let via = full.marginalize(&[j]).unwrap();
            prop_assert_eq!(via.dense().unwrap(), &direct[..]);
        }
    }
}

#[test]
fn inferred_schema_sorts_levels() {
    let csv = "x,y\nb,2\na,1\nb,1\n";
    let d = CategoricalDataset::read_csv(csv.as_bytes(), SchemaSource::Infer).unwrap();
    assert_eq!(d.schema().attribute(0).levels, vec!["a", "b"]);
    assert_eq!(d.record(0), &[1, 1]);
}

#[test]
fn malformed_inputs_are_rejected() {
    let schema = Arc::new(Schema::new(vec![Attribute::new("x", ["a", "b"])]).unwrap());
    let fixed = || SchemaSource::Fixed(schema.clone());
    assert!(CategoricalDataset::read_csv("x\nc\n".as_bytes(), fixed()).is_err());
    assert!(CategoricalDataset::read_csv("".as_bytes(), fixed()).is_err());
    assert!(CategoricalDataset::read_csv("x,y\na\n".as_bytes(), SchemaSource::Infer).is_err());
    assert!(CategoricalDataset::read_csv("x,y\na,\n".as_bytes(), SchemaSource::Infer).is_err());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let schema = Arc::new(Schema::new(vec![Attribute::new("x", ["a", "b"]), Attribute::new("y", ["0", "1", "2"])]).unwrap());
    let d = CategoricalDataset::new(schema.clone(), vec![vec![0, 2], vec![1, 0]]).unwrap();
    d.save_csv(&path).unwrap();
    let back = CategoricalDataset::load_csv(&path, SchemaSource::Fixed(schema)).unwrap();
    assert_eq!(back.flat_levels(), d.flat_levels());
}
