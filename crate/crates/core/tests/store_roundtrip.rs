use proptest::prelude::*;
use setcomp_core::embedstore::{export_file, import_file, ModelStore, SentenceKey, StoreError};
use setcomp_core::geometry::Embedding;

fn store_strategy() -> impl Strategy<Value = ModelStore> {
    (2usize..40, "[a-zA-Z0-9_./-]{0,24}").prop_flat_map(|(dim, model)| {
        let finite = prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL;
        prop::collection::vec(
            (any::<[u8; 32]>(), prop::collection::vec(finite, dim)),
            0..40,
        )
        .prop_map(move |recs| {
            let mut s = ModelStore::new(model.clone(), dim).unwrap();
            for (k, v) in recs {
                s.insert(SentenceKey::from_bytes(k), Embedding::from_f32(&v).unwrap())
                    .unwrap();
            }
            s
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_and_jsonl_round_trip(store in store_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["s.scev", "s.jsonl"] {
            let p = dir.path().join(name);
            export_file(&store, &p).unwrap();
            prop_assert_eq!(&import_file(&p).unwrap(), &store);
        }
        let bytes = store.to_bytes();
        prop_assert_eq!(bytes.len(), store.encoded_len());
        prop_assert_eq!(ModelStore::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_detected(store in store_strategy(), cut in 1usize..64) {
        let bytes = store.to_bytes();
        let keep = bytes.len().saturating_sub(cut);
        let r = ModelStore::from_bytes(&bytes[..keep]);
        let ok = matches!(r, Err(StoreError::TruncatedFile { .. } | StoreError::BadMagic));
        prop_assert!(ok);
    }
}

#[test]
fn text_keys_survive_both_formats() {
    let mut s = ModelStore::new("enc", 3).unwrap();
    for (i, t) in ["Café au lait.", "cafe au lait.", "  spaced  ", ""]
        .iter()
        .enumerate()
    {
        s.insert_text(t, Embedding::from_f32(&[i as f32, 1.5, -2.25]).unwrap())
            .unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.jsonl");
    s.export_file(&p).unwrap();
    let back = ModelStore::import_file(&p).unwrap();
    assert_eq!(back.len(), 4);
    assert_eq!(
        back.lookup("Café au lait.").unwrap().as_slice(),
        &[0.0, 1.5, -2.25]
    );
    assert!(back.lookup("Cafe au lait.").is_none());
}
