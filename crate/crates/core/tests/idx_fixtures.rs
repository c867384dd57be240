use std::path::{Path, PathBuf};

use ibw_core::data::load_idx;
use ibw_core::Error;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/idx")
}

fn manifest() -> Vec<(String, String, String)> {
    std::fs::read_to_string(fixture_dir().join("MANIFEST.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 3, "bad manifest line {l:?}");
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect()
}

fn expected_pixel(i: usize, r: usize, c: usize) -> f64 {
    ((r * 28 + c + 50 * i) % 256) as f64 / 255.0
}

#[test]
fn every_fixture_gives_its_documented_outcome() {
    let dir = fixture_dir();
    let cases = manifest();
    assert!(cases.len() >= 10);
    for (img, lbl, outcome) in cases {
        let res = load_idx(dir.join(&img), dir.join(&lbl));
        let words: Vec<&str> = outcome.split(' ').collect();
        match (words[0], res) {
            ("ok", Ok(split)) => {
                let n: usize = words[1].parse().unwrap();
                let labels: Vec<usize> = words[2].split(',').map(|v| v.parse().unwrap()).collect();
                assert_eq!(split.features.shape(), &[n, 28, 28], "{img}");
                assert_eq!(split.labels, labels, "{lbl}");
                for i in 0..n {
                    for r in [0, 13, 27] {
                        for c in [0, 5, 27] {
                            assert_eq!(split.features.data()[i * 784 + r * 28 + c], expected_pixel(i, r, c));
                        }
                    }
                }
            }
            ("error", Err(Error::Format { path, offset, message })) => {
                let file = if words[1] == "images" { &img } else { &lbl };
                assert_eq!(path, dir.join(file), "{img} {lbl}: {message}");
                let want = if words[2] == "-" { None } else { Some(words[2].parse::<u64>().unwrap()) };
                assert_eq!(offset, want, "{img} {lbl}: {message}");
                assert!(!message.is_empty());
            }
            (_, res) => panic!("{img} {lbl}: expected {outcome}, got {res:?}"),
        }
    }
}

#[test]
fn diagnostics_name_file_and_offset() {
    let dir = fixture_dir();
    let e = load_idx(dir.join("bad-magic.images.idx"), dir.join("two.labels.idx")).unwrap_err();
    let s = e.to_string();
    assert!(s.contains("bad-magic.images.idx") && s.contains("at byte 0") && s.contains("magic"), "{s}");
    let e = load_idx(dir.join("two.images.idx"), dir.join("three.labels.idx")).unwrap_err();
    assert!(e.to_string().contains("3 labels for 2 images"), "{e}");
}

#[test]
fn missing_file_is_io_error() {
    let dir = fixture_dir();
    let e = load_idx(dir.join("nope.idx"), dir.join("two.labels.idx")).unwrap_err();
    assert!(!matches!(e, Error::Format { .. }));
    assert!(e.to_string().contains("nope.idx"), "{e}");
}

#[test]
fn bundled_digits_load() {
    let d = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k");
    let split = load_idx(d.join("images-idx3-ubyte.gz"), d.join("labels-idx1-ubyte.gz")).unwrap();
    assert_eq!(split.features.shape()[1..], [28, 28]);
    assert!(split.len() >= 4096);
    assert_eq!(split.num_classes, 10);
    let mut counts = [0usize; 10];
    for &y in &split.labels[..1000] {
        counts[y] += 1;
    }
    assert!(counts.iter().all(|&c| c > 50), "{counts:?}");
    assert!(split.features.data().iter().all(|v| (0.0..=1.0).contains(v)));
}
