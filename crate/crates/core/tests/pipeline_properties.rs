use koopman_ecg::pipeline::report::{report_csv, summary_csv};
use koopman_ecg::pipeline::{compare, split_dataset, synthetic_dataset, ExperimentConfig, Task};
use koopman_ecg::Exec;

/// A deliberately small experiment so the whole comparison runs in seconds.
fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.per_class = 4;
    cfg.run_seeds = vec![3, 4];
    cfg.transformer.layers = 1;
    cfg.transformer.emb_dim = 8;
    cfg.transformer.ff_dim = 16;
    cfg.rnn.hidden = 8;
    cfg.train.max_epochs = 3;
    cfg.ablation.delay = vec![4, 8];
    cfg.ablation.rbf_centers = vec![0, 4];
    cfg.ablation.rbf_sigma = vec![0.3];
    cfg.ablation.svd_rank = vec![8, 16];
    cfg.ablation.max_epochs = 2;
    cfg
}

fn run(exec: Exec) -> (String, String, String) {
    let cfg = small();
    let data = synthetic_dataset(Task::Four, &cfg, exec).unwrap();
    let split = split_dataset(&data.labels(), data.n_classes(), cfg.split.ratios, cfg.split.seed).unwrap();
    let reports = compare(&data, &split, &cfg, exec).unwrap();
    let ablation = reports.iter().find_map(|r| r.ablation.as_ref()).expect("ablated system");
    let ablation = format!("{ablation:?}");
    (report_csv(&reports), summary_csv(&reports), ablation)
}

#[test]
fn sequential_and_parallel_agree_and_summary_matches_runs() {
    let seq = run(Exec::Sequential);
    let par = run(Exec::Parallel);
    assert_eq!(seq, par);

    let (report, summary, _) = seq;
    let mut rows = report.lines().skip(1).map(|l| l.split(',').collect::<Vec<_>>());
    for line in summary.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let n: usize = f[2].parse().unwrap();
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let r = rows.next().unwrap();
                assert_eq!((r[0], r[1]), (f[0], f[1]));
                r[3].parse().unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - f[3].parse::<f64>().unwrap()).abs() < 1e-12, "{line}");
        assert!((std - f[4].parse::<f64>().unwrap()).abs() < 1e-12, "{line}");
    }
    assert!(rows.next().is_none());
}
