use std::fs;
use std::path::Path;

use expertgate::store::{load_store, save_store, FileExpertStore, MANIFEST_FILE};
use expertgate::Error;
use expertgate_core::synth::{generate_synthetic_task, SyntheticTaskSpec};
use expertgate_core::{LabeledDataset, Matrix, ModelRegistry, PipelineConfig, SgdConfig};

fn config() -> PipelineConfig {
    let sgd = SgdConfig { learning_rate: 0.1, momentum: 0.9, epochs: 15, batch_size: 32, seed: 4 };
    PipelineConfig { hidden: 16, gate_sgd: sgd, expert_sgd: sgd, ..PipelineConfig::default() }
}

fn task(name: &str, offset: usize, seed: u64) -> LabeledDataset {
    let mut s = SyntheticTaskSpec::subspace(name, 3, 16, 3, 400, seed);
    s.subspace_offset = offset;
    s.noise = 0.2;
    generate_synthetic_task(&s).unwrap()
}

fn learned(dir: &Path) -> (ModelRegistry<FileExpertStore>, Matrix<f32>) {
    let mut reg = ModelRegistry::new(FileExpertStore::create(dir).unwrap(), config());
    let tasks = [task("a", 0, 1), task("b", 3, 2), task("c", 6, 3)];
    for t in &tasks {
        reg.learn_task(t).unwrap();
    }
    save_store(&reg).unwrap();
    let rows: Vec<usize> = (0..34).collect();
    let parts = [
        tasks[0].features().select_rows(&rows),
        tasks[1].features().select_rows(&rows),
        tasks[2].features().select_rows(&rows[..32]),
    ];
    let probe = Matrix::vstack(&[&parts[0], &parts[1], &parts[2]]).unwrap();
    (reg, probe)
}

#[test]
fn round_trip_routes_and_predicts_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (mut before, probe) = learned(dir.path());
    assert_eq!(probe.rows(), 100);
    let mut after = load_store(dir.path(), config()).unwrap();
    assert_eq!(after.manifest(), before.manifest());
    assert_eq!(after.route(&probe).unwrap(), before.route(&probe).unwrap());
    let a = before.infer_batch(&probe).unwrap();
    let b = after.infer_batch(&probe).unwrap();
    assert_eq!(a, b);
    for i in 0..3 {
        assert_eq!(after.expert(i).unwrap().clone(), before.expert(i).unwrap().clone());
    }
}

#[test]
fn learning_continues_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let (before, _) = learned(dir.path());
    drop(before);
    let mut reg = load_store(dir.path(), config()).unwrap();
    reg.learn_task(&task("d", 9, 4)).unwrap();
    save_store(&reg).unwrap();
    let back = load_store(dir.path(), config()).unwrap();
    let names: Vec<_> = back.manifest().iter().map(|m| m.task_name.as_str()).collect();
    assert_eq!(names, ["a", "b", "c", "d"]);
}

#[test]
fn missing_or_damaged_files_are_store_corruption() {
    let dir = tempfile::tempdir().unwrap();
    learned(dir.path());
    let copy = |name: &str| {
        let d = tempfile::tempdir().unwrap();
        for e in fs::read_dir(dir.path()).unwrap() {
            let e = e.unwrap();
            fs::copy(e.path(), d.path().join(e.file_name())).unwrap();
        }
        if !name.is_empty() {
            fs::remove_file(d.path().join(name)).unwrap();
        }
        d
    };
    for name in ["gate_001.egw", "expert_002.egw", "expert_000.heads.tsv", "stats.egw", MANIFEST_FILE] {
        let d = copy(name);
        let err = load_store(d.path(), config()).unwrap_err();
        assert!(matches!(err, Error::StoreCorrupt(_)), "{name}: {err}");
        assert_eq!(err.exit_code(), 4);
    }
    let d = copy("");
    fs::write(d.path().join("gate_000.egw"), b"EGW1").unwrap();
    assert!(matches!(load_store(d.path(), config()), Err(Error::StoreCorrupt(_))));
    let d = copy("");
    let manifest = fs::read_to_string(d.path().join(MANIFEST_FILE)).unwrap();
    fs::write(d.path().join(MANIFEST_FILE), manifest.replace("gate_000.egw", "../gate_000.egw")).unwrap();
    assert!(matches!(load_store(d.path(), config()), Err(Error::StoreCorrupt(_))));
}
