use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use accjs::casestudy::CaseStudies;

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn shipped_fixtures_are_what_the_case_studies_generate() {
    let dir = tempfile::tempdir().unwrap();
    CaseStudies::build().write(dir.path()).unwrap();
    let shipped = files(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let fresh = files(dir.path());
    assert_eq!(shipped.keys().collect::<Vec<_>>(), fresh.keys().collect::<Vec<_>>());
    for (path, bytes) in &fresh {
        assert!(shipped[path] == *bytes, "{} is stale; run `accjs write-fixtures crates/accjs/fixtures`", path.display());
    }
}
