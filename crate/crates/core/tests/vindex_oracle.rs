use medipipe_core::providers::EmbeddingVector;
use medipipe_core::vindex::{IndexError, Metadata, NewEntry, VectorIndex};
use medipipe_testkit::{knn_full_scan, random_unit, rng};
use rand::rngs::StdRng;
use rand::Rng;

const DIM: usize = 24;

fn build(r: &mut StdRng, n: usize) -> (VectorIndex, Vec<Vec<f64>>) {
    let mut idx = VectorIndex::new();
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let batch: Vec<NewEntry> = (0..n)
        .map(|i| {
            // A few exact duplicates so the tie rule is exercised.
            let v = if i % 50 == 49 { raw[i - 7usize].clone() } else { random_unit(r, DIM) };
            raw.push(v.clone());
            NewEntry {
                vector: EmbeddingVector::new(v).unwrap(),
                chunk_text: format!("chunk {i}"),
                metadata: Metadata { source_id: format!("note-{}", i % 9), note_id: Some(format!("note-{}", i % 9)), seq: i as u64 },
            }
        })
        .collect();
    idx.insert_batch(batch).unwrap();
    (idx, raw)
}

fn stored(idx: &VectorIndex) -> Vec<(u64, Vec<f32>)> {
    idx.entries().iter().map(|e| (e.entry_id, e.vector().to_vec())).collect()
}

#[test]
fn knn_equals_full_scan() {
    let mut r = rng(42);
    let (idx, _) = build(&mut r, 500);
    let all = stored(&idx);
    for q in 0..50 {
        let query = random_unit(&mut r, DIM);
        let k = [1, 4, 10, 37][q % 4];
        let got = idx.knn(&query, k, None).unwrap();
        let want = knn_full_scan(&all, &query, k, |_| true);
        assert_eq!(got.iter().map(|h| h.entry_id).collect::<Vec<_>>(), want.iter().map(|w| w.0).collect::<Vec<_>>());
        for (g, w) in got.iter().zip(&want) {
            assert!((g.score - w.1).abs() <= 1e-12);
        }
    }
}

#[test]
fn filtered_knn_is_restricted_unfiltered_knn() {
    let mut r = rng(9);
    let (idx, _) = build(&mut r, 300);
    let all = stored(&idx);
    let keep_meta = |m: &Metadata| m.note_id.as_deref() == Some("note-3");
    let keep_id = |id: u64| keep_meta(&idx.get(id).unwrap().metadata);
    for _ in 0..20 {
        let query = random_unit(&mut r, DIM);
        let got = idx.knn(&query, 6, Some(&keep_meta)).unwrap();
        assert!(got.iter().all(|h| keep_meta(&h.metadata)));
        let want = knn_full_scan(&all, &query, 6, keep_id);
        assert_eq!(got.iter().map(|h| h.entry_id).collect::<Vec<_>>(), want.iter().map(|w| w.0).collect::<Vec<_>>());
    }
}

#[test]
fn duplicates_tie_to_lower_id() {
    let mut r = rng(3);
    let (idx, raw) = build(&mut r, 100);
    let hits = idx.knn(&raw[42], 2, None).unwrap();
    assert_eq!(hits[0].entry_id, 42);
    assert_eq!(hits[1].entry_id, 49);
    assert_eq!(hits[0].score, hits[1].score);
}

#[test]
fn self_retrieval_and_repeatability() {
    let mut r = rng(11);
    let (idx, raw) = build(&mut r, 500);
    for (i, v) in raw.iter().enumerate() {
        let hit = &idx.knn(v, 1, None).unwrap()[0];
        let expect = if i % 50 == 49 { i as u64 - 7 } else { i as u64 };
        assert_eq!(hit.entry_id, expect);
        assert!((hit.score - 1.0).abs() <= 1e-9, "score {}", hit.score);
    }
    let q = random_unit(&mut r, DIM);
    assert_eq!(idx.knn(&q, 10, None).unwrap(), idx.knn(&q, 10, None).unwrap());
}

#[test]
fn persist_roundtrip_and_corruption() {
    let mut r = rng(5);
    let (idx, _) = build(&mut r, 200);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.mpvx");
    idx.persist(&path).unwrap();
    let back = VectorIndex::load(&path).unwrap();
    assert_eq!(back.to_bytes(), idx.to_bytes());
    for _ in 0..20 {
        let q = random_unit(&mut r, DIM);
        assert_eq!(back.knn(&q, 8, None).unwrap(), idx.knn(&q, 8, None).unwrap());
    }

    let bytes = std::fs::read(&path).unwrap();
    for pos in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(matches!(VectorIndex::from_bytes(&bad), Err(IndexError::Format { .. })), "flip at {pos}");
    }
    assert!(VectorIndex::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(VectorIndex::from_bytes(&[]).is_err());
}

#[test]
fn rejects_bad_queries() {
    let mut r = rng(1);
    let (idx, _) = build(&mut r, 10);
    assert!(matches!(idx.knn(&[1.0; 3], 1, None), Err(IndexError::Dimension { .. })));
    assert!(matches!(idx.knn(&[0.0; DIM], 1, None), Err(IndexError::Value(_))));
    assert!(matches!(idx.knn(&random_unit(&mut r, DIM), 0, None), Err(IndexError::ZeroK)));
    let v: Vec<f64> = (0..DIM).map(|_| r.gen_range(0.0..1.0)).collect();
    assert!(VectorIndex::new().knn(&v, 3, None).unwrap().is_empty());
}
