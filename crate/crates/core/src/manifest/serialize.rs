use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use super::{Manifest, ManifestBlock};

#[derive(Serialize)]
struct WireManifest<'a> {
    url: &'a str,
    manifest_version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
    contents: Vec<WireBlock<'a>>,
}

#[derive(Serialize)]
struct WireBlock<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    seq: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    version: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    src_type: Option<&'static str>,
    trust: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    src: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossorigin: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sandbox: Option<String>,
    dynamic: bool,
    persistent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<Vec<WireBlock<'a>>>,
}

fn wire_block(b: &ManifestBlock) -> WireBlock<'_> {
    let src_type = match b.kind {
        super::ElementKind::Iframe(st) => Some(st.as_str()),
        _ => None,
    };
    WireBlock {
        // Dynamic blocks carry no position.
        seq: if b.dynamic { None } else { b.seq },
        name: b.name.as_deref(),
        version: b.version.as_deref(),
        description: b.description.as_deref(),
        kind: b.kind.type_name(),
        src_type,
        trust: b.trust.as_str(),
        src: b.src.as_deref(),
        hash: b.hash.as_ref().map(|h| alloc::format!("{h}")),
        crossorigin: b.crossorigin.as_deref(),
        sandbox: b.sandbox.present.then(|| b.sandbox.to_attr()),
        dynamic: b.dynamic,
        persistent: b.persistent,
        load: b.kind.is_script().then(|| b.load.as_str()),
        manifest: b.nested_manifest.as_ref().map(|n| n.iter().map(wire_block).collect()),
    }
}

fn wire(m: &Manifest) -> WireManifest<'_> {
    WireManifest {
        url: &m.url,
        manifest_version: &m.manifest_version,
        name: m.name.as_deref(),
        description: m.description.as_deref(),
        contents: m.contents.iter().map(wire_block).collect(),
    }
}

/// Canonical compact encoding. Equal manifests always produce identical
/// bytes, so this is what gets signed and digested.
pub fn serialize_manifest(m: &Manifest) -> Vec<u8> {
    serde_json::to_vec(&wire(m)).expect("manifest serialization cannot fail")
}

/// Indented encoding of the same document, for files meant to be read.
pub fn serialize_manifest_pretty(m: &Manifest) -> String {
    serde_json::to_string_pretty(&wire(m)).expect("manifest serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::sri::{compute_sri, HashAlgorithm};
    use alloc::vec;

    fn sample() -> Manifest {
        let mut m = Manifest::new("https://shop.example/checkout", "v2");
        let mut inline = ManifestBlock::new(ElementKind::Inline, TrustLevel::Assert);
        inline.seq = Some(0);
        inline.hash = Some(compute_sri(b"init()", HashAlgorithm::Sha256));
        let mut frame = ManifestBlock::new(ElementKind::Iframe(SrcType::ExternalUrl), TrustLevel::Delegate);
        frame.seq = Some(1);
        frame.src = Some("https://wallet.example/".into());
        frame.sandbox = SandboxPolicy::from_attr("allow-scripts allow-same-origin");
        let mut hub = ManifestBlock::new(ElementKind::Iframe(SrcType::Srcdoc), TrustLevel::Assert);
        hub.seq = Some(0);
        hub.nested_manifest = Some(vec![]);
        frame.nested_manifest = None;
        let mut ads = ManifestBlock::new(ElementKind::External, TrustLevel::BlindTrust);
        ads.dynamic = true;
        ads.src = Some("https://ads.example/a.js".into());
        ads.load = LoadMode::Async;
        ads.crossorigin = Some("anonymous".into());
        let mut nested_parent = ManifestBlock::new(ElementKind::Iframe(SrcType::ExternalUrl), TrustLevel::Assert);
        nested_parent.seq = Some(2);
        nested_parent.src = Some("https://hub.example/".into());
        nested_parent.sandbox = SandboxPolicy::from_attr("");
        nested_parent.nested_manifest = Some(vec![hub]);
        m.contents = vec![inline, frame, nested_parent, ads];
        m
    }

    #[test]
    fn roundtrip() {
        let m = sample();
        let text = String::from_utf8(serialize_manifest(&m)).unwrap();
        assert_eq!(parse_manifest(&text).unwrap(), m);
        assert_eq!(parse_manifest(&serialize_manifest_pretty(&m)).unwrap(), m);
    }

    #[test]
    fn field_order_is_fixed() {
        let mut m = Manifest::new("https://a.com/", "v1");
        let mut b = ManifestBlock::new(ElementKind::Inline, TrustLevel::Assert);
        b.seq = Some(0);
        b.hash = Some(compute_sri(b"", HashAlgorithm::Sha256));
        m.contents.push(b);
        let text = String::from_utf8(serialize_manifest(&m)).unwrap();
        assert_eq!(
            text,
            r#"{"url":"https://a.com/","manifest_version":"v1","contents":[{"seq":0,"type":"inline","trust":"assert","hash":"sha256-47DEQpj8HBSa+/TImW+5JCeuQeRkm5NMpJWZG3hSuFU=","dynamic":false,"persistent":true,"load":"sync"}]}"#
        );
    }

    #[test]
    fn empty_sandbox_survives() {
        let text = String::from_utf8(serialize_manifest(&sample())).unwrap();
        assert!(text.contains(r#""sandbox":"""#));
    }
}
