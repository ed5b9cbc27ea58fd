use accjs_core::crypto::{sign_envelope, test_principal, verify_envelope, Registry, Role};
use accjs_core::log::{decode_records, encode_record, verify_staple, LogError, LogSnapshot, LogView, Submission, TransparencyLog};
use accjs_core::time::{Timestamp, DAY};
use accjs_core::url::CnMatch;
use accjs_core::{
    compute_sri, parse_manifest, serialize_manifest, ElementKind, HashAlgorithm, Manifest, ManifestBlock, TrustLevel,
};

const URL: &str = "https://www.example.org/";
const T0: Timestamp = Timestamp(1_000_000);

fn manifest(version: &str) -> Manifest {
    let mut m = Manifest::new(URL, version);
    let mut b = ManifestBlock::new(ElementKind::Inline, TrustLevel::Assert);
    b.seq = Some(0);
    b.hash = Some(compute_sri(b"start()", HashAlgorithm::Sha256));
    m.contents.push(b);
    m
}

#[test]
fn sign_publish_staple_and_replay() {
    let (dev, dev_cert) = test_principal("dev", Role::Developer, "www.example.org", 1);
    let (log_key, log_cert) = test_principal("log", Role::Log, "log.example", 2);
    let mut reg = Registry::new();
    reg.insert(dev_cert.clone());
    reg.insert(log_cert);

    let mut log = TransparencyLog::new(log_key);
    for v in ["v1", "v3", "v2"] {
        let m = manifest(v);
        let text = String::from_utf8(serialize_manifest(&m)).unwrap();
        assert_eq!(parse_manifest(&text).unwrap(), m);
        let envelope = sign_envelope(&dev, &dev_cert, &m, T0, 7 * DAY, CnMatch::Exact).unwrap();
        assert_eq!(verify_envelope(&envelope, &reg, T0.plus(DAY), CnMatch::Exact).unwrap().manifest, m);
        let r = log.submit(&Submission { developer_id: "dev".into(), envelope }, &reg, T0);
        if v == "v2" {
            assert!(matches!(r, Err(LogError::NonMonotoneVersion { .. })));
        } else {
            r.unwrap();
        }
    }
    assert_eq!(log.len(), 2);
    assert_eq!(log.latest(URL).unwrap().manifest_version, "v3");

    let proof = log.staple(URL, T0.plus(10), 300).unwrap();
    verify_staple(&proof, &log.public_key(), T0.plus(310)).unwrap();
    assert!(verify_staple(&proof, &log.public_key(), T0.plus(311)).is_err());

    let bytes: Vec<u8> = log.entries().iter().flat_map(encode_record).collect();
    let decoded = decode_records(&bytes).unwrap();
    assert_eq!(decoded.valid_len, bytes.len());
    let snap = LogSnapshot::new(log.cert_id(), log.public_key(), decoded.entries).unwrap();
    assert_eq!(snap.log_entries(), log.entries());
}
