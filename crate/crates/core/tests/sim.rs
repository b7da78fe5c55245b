use fchmrf::em::EmConfig;
use fchmrf::io::write_volume;
use fchmrf::sim::{
    generate_delta_mu, generate_signal_mask, run_replications, DeltaMuSource, SimConfig,
};
use fchmrf::volume::GridDims;
use fchmrf::Error;

fn small(reps: usize) -> SimConfig {
    SimConfig {
        replications: reps,
        seed: 11,
        em: EmConfig {
            max_iterations: 3,
            samples: 20,
            ..EmConfig::default()
        },
        ..SimConfig::new(GridDims::cube(10).unwrap(), 0.2, -2.0, 1.0)
    }
}

fn fdps(config: &SimConfig) -> Vec<(u64, u64)> {
    run_replications(config)
        .unwrap()
        .records
        .iter()
        .map(|r| (r.lis.fdp.to_bits(), r.bh.fdp.to_bits()))
        .collect()
}

#[test]
fn replications_repeat_bitwise() {
    let config = small(3);
    assert_eq!(fdps(&config), fdps(&config));
}

#[test]
fn single_replication_marks_sd_undefined() {
    let summary = run_replications(&small(1)).unwrap();
    assert!(!summary.sd_defined);
    assert_eq!(summary.lis.fdp.sd, 0.0);
    assert_eq!(summary.bh.tp.sd, 0.0);
    assert!(run_replications(&small(2)).unwrap().sd_defined);
}

#[test]
fn generated_delta_mu_has_spread() {
    let dims = GridDims::cube(20).unwrap();
    let h = generate_signal_mask(dims, 0.2, 4).unwrap();
    let dm = generate_delta_mu(&h, 5).unwrap();
    let v = dm.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!(var > 0.0);
}

#[test]
fn external_delta_mu_is_used_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dmu.hdr");
    let h = generate_signal_mask(GridDims::cube(10).unwrap(), 0.2, 1).unwrap();
    write_volume(&path, &generate_delta_mu(&h, 2).unwrap(), "delta_mu").unwrap();
    let config = SimConfig {
        delta_mu: DeltaMuSource::External(path),
        ..small(2)
    };
    assert_eq!(run_replications(&config).unwrap().records.len(), 2);

    let wrong = dir.path().join("wrong.hdr");
    let h = generate_signal_mask(GridDims::cube(12).unwrap(), 0.2, 1).unwrap();
    write_volume(&wrong, &generate_delta_mu(&h, 2).unwrap(), "delta_mu").unwrap();
    let config = SimConfig {
        delta_mu: DeltaMuSource::External(wrong),
        ..small(1)
    };
    assert!(matches!(
        run_replications(&config),
        Err(Error::DimensionMismatch { .. })
    ));
}
