use std::fs;

use fchmrf::em::{EmState, NonNullDensity};
use fchmrf::io::{read_checkpoint, read_volume, write_checkpoint, write_volume, Checkpoint};
use fchmrf::meanfield::{FieldWeights, KernelBandwidths};
use fchmrf::volume::{GridDims, ScalarVolume};
use fchmrf::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(n: usize, seed: u64) -> ScalarVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = GridDims::cube(n).unwrap();
    // f32-representable so the round trip is exact.
    let values = (0..dims.len())
        .map(|_| rng.gen::<f32>() as f64 * 8.0 - 4.0)
        .collect();
    ScalarVolume::new(dims, values).unwrap()
}

#[test]
fn volume_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume(8, 1);
    let path = dir.path().join("z.hdr");
    write_volume(&path, &v, "z").unwrap();
    let (back, header) = read_volume(&dir.path().join("z.raw")).unwrap();
    assert_eq!(header.channel, "z");
    assert_eq!(back.dims(), v.dims());
    for (a, b) in back.values().iter().zip(v.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(
        fs::metadata(dir.path().join("z.raw")).unwrap().len(),
        4 * 512
    );
}

#[test]
fn header_text_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = ScalarVolume::zeros(GridDims::new(2, 3, 4).unwrap());
    write_volume(&dir.path().join("a.hdr"), &v, "lis").unwrap();
    let text = fs::read_to_string(dir.path().join("a.hdr")).unwrap();
    assert_eq!(
        text,
        "dims=2,3,4\ndtype=f32le\norder=row-major\nchannel=lis\n"
    );
}

#[test]
fn truncated_payload_names_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.hdr");
    write_volume(&path, &random_volume(8, 2), "z").unwrap();
    let raw = dir.path().join("t.raw");
    let bytes = fs::read(&raw).unwrap();
    fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
    match read_volume(&path) {
        Err(Error::LengthMismatch {
            expected, actual, ..
        }) => {
            assert_eq!((expected, actual), (2048, 2044));
        }
        other => panic!("expected length mismatch, got {other:?}"),
    }
}

#[test]
fn malformed_headers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.hdr");
    fs::write(dir.path().join("h.raw"), [0u8; 32]).unwrap();
    for text in [
        "dims=2,2\ndtype=f32le\norder=row-major\nchannel=z\n",
        "dims=2,2,2\ndtype=f64le\norder=row-major\nchannel=z\n",
        "dims=2,2,2\ndtype=f32le\norder=column-major\nchannel=z\n",
        "dims=2,0,2\ndtype=f32le\norder=row-major\nchannel=z\n",
        "dims=2,2,2\ndtype=f32le\norder=row-major\n",
        "dims=2,2,2\ndtype=f32le\norder=row-major\nchannel=z\ncolour=red\n",
    ] {
        fs::write(&path, text).unwrap();
        assert!(
            matches!(read_volume(&path), Err(Error::Header { .. })),
            "{text:?}"
        );
    }
    fs::write(
        &path,
        "dims=2,2,2\ndtype=f32le\norder=row-major\nchannel=z\n",
    )
    .unwrap();
    assert!(read_volume(&path).is_ok());
}

#[test]
fn writes_leave_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    write_volume(&dir.path().join("v.hdr"), &random_volume(4, 3), "z").unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["v.hdr", "v.raw"]);
}

fn sample_checkpoint() -> Checkpoint {
    let density = NonNullDensity::new(vec![-2.1, 0.3, 2.7], vec![0.2, 0.3, 0.5], 0.41).unwrap();
    let weights = FieldWeights::new(0.37, 1.1, 0.9);
    let state = EmState {
        iteration: 4,
        weights,
        density: density.clone(),
        loss_history: vec![1234.5, 1200.25, 1201.0, 1199.875 + 1e-9],
        best_loss: 1199.875 + 1e-9,
        best_iteration: 4,
        patience_counter: 0,
        seed: 11,
    };
    Checkpoint::new(
        weights,
        density,
        KernelBandwidths::new([3.1, 2.9, 3.3], 0.17, [3.0; 3]).unwrap(),
        state,
    )
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let ck = sample_checkpoint();
    write_checkpoint(&path, &ck).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.loss_history.len(), 4);
    for (a, b) in back.loss_history.iter().zip(&ck.loss_history) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn unknown_checkpoint_version_is_rejected() {
    let text = sample_checkpoint()
        .to_json()
        .unwrap()
        .replace("\"version\": 1", "\"version\": 9");
    assert!(matches!(
        Checkpoint::from_json(&text),
        Err(Error::UnsupportedVersion {
            found: 9,
            supported: 1
        })
    ));
}
