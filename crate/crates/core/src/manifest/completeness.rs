use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{ElementKind, Manifest, ManifestBlock, SrcType, TrustLevel};

/// A directive that a well-formed but incomplete manifest leaves out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    MissingDirective { block: String, directive: &'static str },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingDirective { block, directive } => write!(f, "{block}: missing `{directive}` directive"),
        }
    }
}

/// Lists directives that should be present for every block:
/// `crossorigin` on external scripts and `sandbox` on blindly trusted
/// iframes. Nested manifests are checked too.
pub fn validate_completeness(m: &Manifest) -> Vec<Finding> {
    let mut out = Vec::new();
    walk(&m.contents, "", &mut out);
    out
}

fn walk(blocks: &[ManifestBlock], prefix: &str, out: &mut Vec<Finding>) {
    for (i, b) in blocks.iter().enumerate() {
        let label = format!("{prefix}contents[{i}] ({})", b.label());
        if b.kind == ElementKind::External && b.crossorigin.is_none() {
            out.push(Finding::MissingDirective { block: label.clone(), directive: "crossorigin" });
        }
        if b.kind == ElementKind::Iframe(SrcType::ExternalUrl) && b.trust == TrustLevel::BlindTrust && !b.sandbox.present {
            out.push(Finding::MissingDirective { block: label.clone(), directive: "sandbox" });
        }
        if let Some(nested) = &b.nested_manifest {
            walk(nested, &format!("{prefix}contents[{i}].manifest/"), out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::parse_manifest;

    #[test]
    fn flags_missing_crossorigin_and_sandbox() {
        let m = parse_manifest(
            r#"{"url":"https://a.com/","manifest_version":"v1","contents":[
            {"seq":0,"type":"external","trust":"blind-trust","src":"https://cdn.example/x.js","crossorigin":"anonymous"},
            {"seq":1,"type":"external","trust":"blind-trust","src":"https://cdn.example/y.js"},
            {"seq":2,"type":"iframe","trust":"blind-trust","src":"https://ads.example/"},
            {"seq":3,"type":"iframe","trust":"blind-trust","src":"https://ads.example/","sandbox":""}]}"#,
        )
        .unwrap();
        let f = validate_completeness(&m);
        assert_eq!(f.len(), 2);
        assert!(matches!(&f[0], Finding::MissingDirective { directive: "crossorigin", block } if block.starts_with("contents[1]")));
        assert!(matches!(&f[1], Finding::MissingDirective { directive: "sandbox", block } if block.starts_with("contents[2]")));
    }

    #[test]
    fn nested_blocks_are_checked() {
        let m = parse_manifest(
            r#"{"url":"https://a.com/","manifest_version":"v1","contents":[
            {"seq":0,"type":"iframe","trust":"assert","src":"https://b.com/","sandbox":"","manifest":[
              {"seq":0,"type":"external","trust":"blind-trust","src":"https://cdn.example/z.js"}]}]}"#,
        )
        .unwrap();
        let f = validate_completeness(&m);
        assert_eq!(f.len(), 1);
        assert!(f[0].to_string().contains("contents[0].manifest/contents[0]"));
    }
}
