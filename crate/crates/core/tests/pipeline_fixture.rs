use rand::SeedableRng;

use psiconn::committee::cross_validate;
use psiconn::evolve::{evolve, GaConfig};
use psiconn::features::build_table;
use psiconn::pipeline::{self, Input, PipelineConfig};
use psiconn::rng::Rng;
use psiconn::spectral::{psi_all_bands, BandSpec, SpectralConfig};
use psiconn::synth::{planted_dataset, PlantPlan};
use psiconn::{ChannelLayout, Epoch, Error};

fn theta_table(epochs: &[Epoch], n_channels: usize) -> psiconn::features::FeatureTable {
    let cfg = SpectralConfig::new(1000.0);
    let band = [BandSpec::theta()];
    let mats: Vec<_> = epochs
        .iter()
        .map(|e| psi_all_bands(e.samples.view(), &cfg, &band).unwrap().remove(0))
        .collect();
    let labels: Vec<_> = epochs.iter().map(|e| e.label).collect();
    build_table(&mats, &labels, &ChannelLayout::generic(n_channels)).unwrap()
}

#[test]
fn planted_lags_are_separable() {
    let plan = PlantPlan::thermometer(8, 100);
    let (epochs, truth) = planted_dataset(&plan, &mut Rng::seed_from_u64(3)).unwrap();
    assert_eq!(truth.planted_features, vec![0, 13, 22]);
    let table = theta_table(&epochs, 8);
    let cols = table.data.select_columns(&truth.planted_features).unwrap();
    let report = cross_validate(&cols, &Default::default(), 10, 5).unwrap();
    assert!(report.accuracy >= 0.95, "accuracy {}", report.accuracy);
}

#[test]
fn null_plan_is_at_chance() {
    let plan = PlantPlan::null(8, 100);
    let (epochs, truth) = planted_dataset(&plan, &mut Rng::seed_from_u64(4)).unwrap();
    assert!(truth.planted_features.is_empty());
    let table = theta_table(&epochs, 8);
    let report = cross_validate(&table.data, &Default::default(), 10, 6).unwrap();
    assert!((0.15..=0.35).contains(&report.accuracy), "accuracy {}", report.accuracy);
}

#[test]
fn ga_recovers_planted_connections() {
    let mut good = 0;
    let runs = 20;
    for seed in 0..runs {
        let plan = PlantPlan::thermometer(8, 40);
        let (epochs, truth) = planted_dataset(&plan, &mut Rng::seed_from_u64(500 + seed)).unwrap();
        let table = theta_table(&epochs, 8);
        let res = evolve(&table.data, &GaConfig::with_seed(seed)).unwrap();
        let hits = truth.planted_features.iter().filter(|f| res.best_mask.contains(f)).count();
        good += (hits * 10 >= 8 * truth.planted_features.len()) as usize;
    }
    assert!(good * 10 >= 8 * runs as usize, "{good}/{runs} runs");
}

fn small_config(dir: &std::path::Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        input: Input::Planted(PlantPlan::thermometer(8, 20)),
        bands: vec![BandSpec::theta(), BandSpec::new("Alpha1", 8.0, 10.0).unwrap()],
        output_dir: dir.to_path_buf(),
        seed: 9,
        ..Default::default()
    };
    cfg.ga.population_size = 10;
    cfg.ga.max_generations = 4;
    cfg.graph.n_refs = 4;
    cfg.graph.per_class = true;
    cfg
}

#[test]
fn run_writes_every_stage_and_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::run(&small_config(a.path())).unwrap();
    let rb = pipeline::run(&small_config(b.path())).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join("report/report.json")).unwrap(),
        std::fs::read(b.path().join("report/report.json")).unwrap()
    );
    assert_eq!(ra.best_band, "Theta");
    assert_eq!(ra.band_summary.len(), 2);
    assert_eq!(ra.class_counts, [20; 4]);
    for stage in ["synth", "epoch", "psi", "features", "select", "evaluate", "graph", "stats"] {
        assert!(ra.artifacts.keys().any(|k| k.starts_with(&format!("{stage}/"))), "{stage}");
    }
    for label in ["IN", "IH", "EX", "EH"] {
        assert!(a.path().join(format!("graph/{label}_edges.csv")).exists());
    }
    let rec = ra.planted_recovery.unwrap();
    assert_eq!(rec.planted_features, vec![0, 13, 22]);
    // nothing in the report depends on where the run directory lives
    let text = std::fs::read_to_string(a.path().join("report/report.json")).unwrap();
    assert!(!text.contains(a.path().to_str().unwrap()));
}

#[test]
fn stage_errors_carry_stage_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    pipeline::stage_synth(&cfg).unwrap();
    pipeline::stage_epoch(&cfg).unwrap();
    std::fs::write(dir.path().join("epoch/epochs.json"), "{").unwrap();
    match pipeline::stage_psi(&cfg) {
        Err(Error::Stage { stage, path, .. }) => {
            assert_eq!(stage, "psi");
            assert!(path.ends_with("epoch/epochs.json"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn recorded_input_skips_synthesis() {
    let src = tempfile::tempdir().unwrap();
    let synth_cfg = small_config(src.path());
    pipeline::stage_synth(&synth_cfg).unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = small_config(out.path());
    cfg.input = Input::Record {
        path: src.path().join("synth/record.bin"),
        format: None,
        schedule: None,
    };
    assert!(pipeline::stage_synth(&cfg).is_err());
    let report = pipeline::run(&cfg).unwrap();
    assert!(report.planted_recovery.is_none());
    assert_eq!(report.n_epochs, 80);
}
