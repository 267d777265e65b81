use a2d::attacks::{cw_l2, AttackConfig, AttackKind, Targeting};
use a2d::config::RunConfig;
use a2d::hardening::{ae_fit_threshold, reconstruction_error, train_autoencoder};
use a2d::nn::{load_model, TrainConfig};
use a2d::pipeline::build_dataset;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.data.train_n = 12000;
    cfg.data.test_n = 3000;
    let data = build_dataset(&cfg).unwrap();
    let (train, test) = data.split(12000, 3000, cfg.seed).unwrap();

    let ae_cfg = TrainConfig {
        learning_rate: 0.2,
        epochs: 24,
        batch_size: 32,
        seed: 42,
        weight_init_scale: 1.0,
    };
    let (ae, hist) = train_autoencoder(&train, 32, &ae_cfg).unwrap();
    println!("ae loss first/last: {:.5} / {:.5}", hist[0].loss, hist.last().unwrap().loss);
    let det = ae_fit_threshold(ae, &train, 0.01).unwrap();
    println!("tau = {:.6}", det.tau);

    let mut errs: Vec<f64> = test
        .examples()
        .iter()
        .take(200)
        .map(|e| reconstruction_error(&det.autoencoder, &e.pixels).unwrap())
        .collect();
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "benign err p10={:.6} p50={:.6} p90={:.6} p99={:.6}",
        errs[20], errs[100], errs[180], errs[198]
    );

    let model = load_model(std::path::Path::new("/tmp/exp_J/model.a2dm")).unwrap();
    for kappa in [0.0, 8.0, 12.0] {
        let mut adv_errs = Vec::new();
        let mut dists = Vec::new();
        for ex in test.examples().iter().take(40) {
            let cfg_cw = AttackConfig {
                kappa,
                targeting: Targeting::TargetRank(2),
                seed: 1,
                ..AttackConfig::defaults_for(AttackKind::CwL2)
            };
            let out = cw_l2(&model, &ex.pixels, &cfg_cw).unwrap();
            if out.success && out.distortion_l2 <= 8.4 {
                let adv = out.adversarial.unwrap();
                adv_errs.push(reconstruction_error(&det.autoencoder, &adv).unwrap());
                dists.push(out.distortion_l2);
            }
        }
        adv_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let flagged = adv_errs.iter().filter(|&&e| e > det.tau).count();
        println!(
            "kappa {kappa}: n={} mean_l2={:.2} err_med={:.6} flagged={}/{}",
            adv_errs.len(),
            dists.iter().sum::<f64>() / dists.len().max(1) as f64,
            adv_errs.get(adv_errs.len() / 2).copied().unwrap_or(0.0),
            flagged,
            adv_errs.len()
        );
    }
}
