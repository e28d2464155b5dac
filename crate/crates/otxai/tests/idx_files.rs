use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use otxai::error::{Error, IdxError};
use otxai::idx::{self, encode, parse_images, parse_labels};

fn fixture() -> (Vec<u8>, Vec<u8>) {
    let pixels: Vec<u8> = (0..3 * 2 * 2).map(|i| (i * 20) as u8).collect();
    encode(&pixels, 3, 2, 2, &[0, 2, 1])
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn raw_and_gzip_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (ib, lb) = fixture();
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(&ib).unwrap();
    let raw = idx::load_idx(&write(dir.path(), "i", &ib), &write(dir.path(), "l", &lb), "tiny").unwrap();
    let zipped = idx::load_idx(
        &write(dir.path(), "i.gz", &gz.finish().unwrap()),
        &write(dir.path(), "l", &lb),
        "tiny",
    )
    .unwrap();
    assert_eq!(raw.len(), 3);
    assert_eq!(raw.meta.d, 4);
    assert_eq!(raw.meta.q, 3);
    assert_eq!(raw.meta.image_shape, Some((2, 2)));
    assert_eq!(raw.labels.as_slice(), &[0, 2, 1]);
    assert_eq!(raw.input(1)[0], 80.0 / 255.0);
    assert_eq!(raw.inputs.data(), zipped.inputs.data());
}

#[test]
fn bad_magic() {
    let (mut ib, lb) = fixture();
    ib[2] = 0x09;
    assert_eq!(parse_images(&ib).unwrap_err(), IdxError::BadMagic(0x0000_0903));
    assert!(matches!(
        parse_labels(&ib[..8]),
        Err(IdxError::BadMagic(_)) | Err(IdxError::Dimensions { .. })
    ));
    assert!(parse_labels(&lb).is_ok());
}

#[test]
fn wrong_dimension_count() {
    let (ib, lb) = fixture();
    assert_eq!(
        parse_labels(&ib).unwrap_err(),
        IdxError::Dimensions { expected: 1, found: 3 }
    );
    assert_eq!(
        parse_images(&lb).unwrap_err(),
        IdxError::Dimensions { expected: 3, found: 1 }
    );
}

#[test]
fn truncation() {
    let (ib, _) = fixture();
    assert_eq!(
        parse_images(&ib[..ib.len() - 1]).unwrap_err(),
        IdxError::Truncated {
            needed: ib.len(),
            have: ib.len() - 1
        }
    );
    assert!(matches!(parse_images(&ib[..6]), Err(IdxError::Truncated { .. })));
}

#[test]
fn count_mismatch_names_the_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let (ib, _) = fixture();
    let (_, lb) = encode(&[], 0, 2, 2, &[0, 1]);
    let labels = write(dir.path(), "labels", &lb);
    let err = idx::load_idx(&write(dir.path(), "images", &ib), &labels, "tiny").unwrap_err();
    match &err {
        Error::Idx { path, kind } => {
            assert_eq!(path, &labels);
            assert_eq!(kind, &IdxError::CountMismatch { images: 3, labels: 2 });
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 6);
}
