use pinnkit::datagen::{Dataset, Provenance};
use pinnkit::harness::{run_plan, ExperimentReport, SweepKind, SweepPlan};
use pinnkit::nn::{Checkpoint, MlpConfig};
use pinnkit::trainer::{train, RunConfig, TrainReport};

fn small(mut cfg: RunConfig, epochs: usize) -> RunConfig {
    cfg.epochs = epochs;
    cfg.net = MlpConfig::from_total_layers(cfg.net.input_dim, 3, 8, cfg.net.seed).unwrap();
    cfg
}

#[test]
fn dataset_csv_round_trip_regenerates_from_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let cfg = RunConfig::heat_forward(2);
    let ds = cfg.data.generate().unwrap();
    ds.save_csv(&path).unwrap();

    let back = Dataset::load_csv(&path).unwrap();
    assert_eq!(back.inputs, ds.inputs);
    assert_eq!(back.targets, ds.targets);
    let prov: Provenance = back.provenance.clone().unwrap();
    assert_eq!(prov.generate().unwrap().targets, ds.targets);
}

#[test]
fn report_json_and_checkpoint_restore_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(RunConfig::quadratic(6), 120);
    cfg.checkpoint = Some(dir.path().join("ck.txt"));
    let report = train(&cfg).unwrap();
    assert!(report.succeeded());

    let json = dir.path().join("report.json");
    report.save_json(&json).unwrap();
    let back = TrainReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back.curve, report.curve);
    assert_eq!(back.config, cfg);

    // Rerunning the stored config reproduces the stored checkpoint.
    let ck = Checkpoint::load(dir.path().join("ck.txt")).unwrap();
    let rerun = train(&RunConfig { checkpoint: None, ..back.config }).unwrap();
    assert_eq!(rerun.params.unwrap().values(), ck.params.values());
}

#[test]
fn curve_csv_has_one_row_per_epoch() {
    let report = train(&small(RunConfig::heat_inverse(1), 15)).unwrap();
    let mut buf = Vec::new();
    report.write_curve_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,total,data,residual,D"));
    assert_eq!(lines.count(), 15);
}

#[test]
fn experiment_report_round_trips_through_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let plan = SweepPlan::new(
        "order",
        SweepKind::ResidualOrderSweep { orders: vec![2, 3] },
        small(RunConfig::linear(0), 25),
    )
    .with_iterations(2);
    let report = run_plan(&plan, 2).unwrap();
    report.emit_dir(dir.path()).unwrap();
    let back = ExperimentReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.plan, plan);
    assert_eq!(back.seeds.len(), 2);
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert!(table.starts_with("order,mean_gt_mse_inside,mean_gt_mse_outside,mean_gt_mse_overall,mean_total_loss\n"));
    assert_eq!(table.lines().count(), 3);
    // Thread count does not change results.
    let serial = run_plan(&plan, 1).unwrap();
    for (a, b) in serial.stages[0].cells.iter().zip(&report.stages[0].cells) {
        assert_eq!(a.aggregate.mean_gt_mse, b.aggregate.mean_gt_mse);
    }
}
