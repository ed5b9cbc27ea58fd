mod common;

use accjs::SharedLog;
use accjs_core::log::{verify_staple, LogSnapshot, LogView, StapledProof, Submission};
use accjs_core::time::Timestamp;
use common::{concurrent_history, linearizable, log_invariants, Call, LogBench, Op, Ret, BENCH_TIME};
use proptest::prelude::*;

fn call(op: Op, ret: Ret, invoked: u64, returned: u64) -> Call {
    Call { op, ret, invoked, returned }
}

#[test]
fn checker_rejects_impossible_histories() {
    // A read that finishes before a write starts cannot see it.
    let h = [
        call(Op::Latest { url: 0 }, Ret::Latest(Some(2)), 0, 1),
        call(Op::Submit { url: 0, version: 2 }, Ret::Submitted(Some(0)), 2, 3),
    ];
    assert!(!linearizable(&h, 1));
    // Overlapping, either order works.
    let h = [
        call(Op::Latest { url: 0 }, Ret::Latest(Some(2)), 0, 3),
        call(Op::Submit { url: 0, version: 2 }, Ret::Submitted(Some(0)), 1, 2),
    ];
    assert!(linearizable(&h, 1));
    // Two concurrent submits of the same version cannot both succeed.
    let h = [
        call(Op::Submit { url: 0, version: 3 }, Ret::Submitted(Some(0)), 0, 3),
        call(Op::Submit { url: 0, version: 3 }, Ret::Submitted(Some(1)), 1, 2),
    ];
    assert!(!linearizable(&h, 1));
    // An older version after a newer one is refused.
    let h = [
        call(Op::Submit { url: 0, version: 4 }, Ret::Submitted(Some(0)), 0, 1),
        call(Op::Submit { url: 0, version: 2 }, Ret::Submitted(None), 2, 3),
    ];
    assert!(linearizable(&h, 1));
}

#[test]
fn concurrent_submits_are_linearizable() {
    let bench = LogBench::new();
    for trial in 0..100 {
        let (calls, snaps, fin) = concurrent_history(&bench, 10_000 + trial, 4, 6);
        assert!(linearizable(&calls, bench.urls.len()), "trial {trial}: {calls:#?}");
        log_invariants(&snaps, &fin).unwrap();
    }
}

#[test]
fn file_backed_log_survives_reopen_and_reads_back_as_snapshot() {
    let bench = LogBench::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.bin");
    {
        let log = SharedLog::open(bench.log_key.clone(), &path).unwrap();
        for v in [1, 3, 2, 5] {
            let env = bench.envelopes[&(bench.urls[0].clone(), v)].clone();
            let _ = log.submit(&Submission { developer_id: "dev".into(), envelope: env }, &bench.registry, BENCH_TIME);
        }
        assert_eq!(log.len(), 3);
    }
    let log = SharedLog::open(bench.log_key.clone(), &path).unwrap();
    assert_eq!(log.len(), 3);
    let entries = accjs::read_log_file(&path).unwrap();
    let snap = LogSnapshot::new(log.cert_id(), bench.log_key.public_key(), entries).unwrap();
    assert_eq!(snap.entry_at(&bench.urls[0], Timestamp(u64::MAX)).unwrap().manifest_version, "v5");
    assert_eq!(snap.log_entries().iter().map(|e| e.manifest_version.as_str()).collect::<Vec<_>>(), ["v1", "v3", "v5"]);
}

fn staple() -> (StapledProof, [u8; 32]) {
    let bench = LogBench::new();
    let log = SharedLog::in_memory(bench.log_key.clone());
    let env = bench.envelopes[&(bench.urls[1].clone(), 2)].clone();
    log.submit(&Submission { developer_id: "dev".into(), envelope: env }, &bench.registry, BENCH_TIME).unwrap();
    (log.staple(&bench.urls[1], BENCH_TIME.plus(5), 600).unwrap(), bench.log_key.public_key())
}

proptest! {
    #[test]
    fn staple_window_is_closed_interval(offset in 0u64..2_000) {
        let (p, key) = staple();
        let t = p.issued_at.0 - 500 + offset;
        let inside = p.issued_at.0 <= t && t <= p.issued_at.0 + p.window;
        prop_assert_eq!(verify_staple(&p, &key, Timestamp(t)).is_ok(), inside);
    }

    #[test]
    fn flipped_staple_bytes_never_verify(pos in any::<prop::sample::Index>(), mask in 1u8..=255) {
        let (p, key) = staple();
        let mut bytes = p.to_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= mask;
        if let Ok(q) = StapledProof::from_bytes(&bytes) {
            prop_assert!(verify_staple(&q, &key, q.issued_at).is_err());
        }
    }
}
