use featureless::dataset::{DatasetFile, Sample, Task, BOTNET_FAMILIES};
use featureless::nn::{Architecture, Checkpoint, Model};
use featureless::train::{predict_all, Examples};
use featureless::views::{HeaderCategory, ViewKind};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = DatasetFile> {
    (0usize..3, 0usize..4, 1usize..64, any::<bool>()).prop_flat_map(|(v, c, n, multi)| {
        let task = if multi { Task::Multiclass } else { Task::Binary };
        let classes = task.class_count() as u16;
        prop::collection::vec((0..classes, prop::collection::vec(any::<u8>(), n)), 0..30).prop_map(move |rows| {
            let mut ds = DatasetFile::new(ViewKind::ALL[v], HeaderCategory::ALL[c], n, task.class_names());
            ds.samples = rows.into_iter().map(|(l, b)| Sample::new(l, b)).collect();
            ds
        })
    })
}

proptest! {
    #[test]
    fn dataset_round_trip(ds in dataset()) {
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), ds.encoded_len());
        let back = DatasetFile::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &ds);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn truncated_dataset_is_rejected(ds in dataset(), cut in any::<prop::sample::Index>()) {
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let at = cut.index(bytes.len());
        prop_assert!(DatasetFile::read_from(&bytes[..at]).is_err());
    }
}

#[test]
fn multiclass_names_survive() {
    let ds = DatasetFile::new(ViewKind::Packet, HeaderCategory::AllHeaders, 5, Task::Multiclass.class_names());
    let mut bytes = Vec::new();
    ds.write_to(&mut bytes).unwrap();
    let back = DatasetFile::read_from(&bytes[..]).unwrap();
    assert_eq!(back.class_names, BOTNET_FAMILIES.map(String::from).to_vec());
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let batch: Vec<Vec<f32>> = (0..32).map(|i| (0..115).map(|j| ((i * 131 + j * 7) % 256) as f32 / 255.0).collect()).collect();
    for classes in [2, 12] {
        for seed in 0..5 {
            let ck = Checkpoint { model: Model::init(Architecture::default_for(classes), seed).unwrap(), best_epoch: 9, best_val_accuracy: 0.25 };
            let bytes = ck.encode().unwrap();
            let back = Checkpoint::decode(&bytes[..]).unwrap();
            assert_eq!(back.encode().unwrap(), bytes);
            let ex = Examples::from_rows(115, classes, &batch, &vec![0; batch.len()]);
            let bits = |m: &Model| -> Vec<u32> { predict_all(m, &ex).unwrap().into_iter().flatten().map(f32::to_bits).collect() };
            assert_eq!(bits(&ck.model), bits(&back.model));
        }
    }
}

#[test]
fn dense_only_checkpoint_round_trips() {
    let arch = Architecture::dense_only(115, 2, featureless::nn::Activation::Softmax);
    let ck = Checkpoint { model: Model::init(arch, 4).unwrap(), best_epoch: 1, best_val_accuracy: 1.0 };
    let bytes = ck.encode().unwrap();
    let back = Checkpoint::decode(&bytes[..]).unwrap();
    assert_eq!(back.model.arch, ck.model.arch);
    assert_eq!(back.encode().unwrap(), bytes);
}
