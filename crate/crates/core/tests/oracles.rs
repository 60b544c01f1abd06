use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, LogNormal, Normal};

use tppgaze::data::Stimulus;
use tppgaze::eval::{kl_divergence, ScoreDistributionPair, KL_SMOOTHING};
use tppgaze::model::TppModel;
use tppgaze::params::{ModelConfig, ReadoutShape, TppConfig};
use tppgaze::saliency::{auc_judd, SaliencyMap};
use tppgaze::sampler::{sample_ensemble, sample_scanpath};
use tppgaze::toy::toy_feature_volume;
use tppgaze::tpp::{gmm_logpdf, lgmm_logpdf, Gmm2dParams, LgmmParams};
use tppgaze::train::{adamw_step, OptimState, TrainConfig};
use tppgaze::volume::coordconv_augment;

#[test]
fn lgmm_matches_weighted_log_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let k = rng.random_range(1..5);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let m: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..1.0)).collect();
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.5)).collect();
        let p = LgmmParams::new(w.clone(), m.clone(), s.clone()).unwrap();
        let tau = rng.random_range(0.01..3.0);
        let want: f64 = (0..k).map(|i| w[i] * LogNormal::new(m[i], s[i]).unwrap().pdf(tau)).sum();
        assert!((lgmm_logpdf(tau, &p).unwrap() - want.ln()).abs() < 1e-10);
    }
}

#[test]
fn gmm_matches_product_of_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let g = rng.random_range(1..5);
        let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let mu: Vec<[f64; 2]> = (0..g).map(|_| [rng.random(), rng.random()]).collect();
        let sd: Vec<[f64; 2]> = (0..g).map(|_| [rng.random_range(0.02..0.4), rng.random_range(0.02..0.4)]).collect();
        let var: Vec<[f64; 2]> = sd.iter().map(|s| [s[0] * s[0], s[1] * s[1]]).collect();
        let p = Gmm2dParams::new(w.clone(), mu.clone(), var).unwrap();
        let r = [rng.random_range(-0.2..1.2), rng.random_range(-0.2..1.2)];
        let want: f64 = (0..g)
            .map(|i| {
                w[i] * Normal::new(mu[i][0], sd[i][0]).unwrap().pdf(r[0]) * Normal::new(mu[i][1], sd[i][1]).unwrap().pdf(r[1])
            })
            .sum();
        if want > 1e-250 {
            assert!((gmm_logpdf(r, &p) - want.ln()).abs() < 1e-9);
        }
    }
}

/// ROC curve by direct counting at every threshold.
fn auc_brute_force(values: &[f64], fixated: &[bool]) -> f64 {
    let pos: Vec<f64> = values.iter().zip(fixated).filter(|(_, f)| **f).map(|(v, _)| *v).collect();
    let neg: Vec<f64> = values.iter().zip(fixated).filter(|(_, f)| !**f).map(|(v, _)| *v).collect();
    let mut thresholds = pos.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = pos.iter().filter(|v| **v >= t).count() as f64 / pos.len() as f64;
        let fp = neg.iter().filter(|v| **v >= t).count() as f64 / neg.len() as f64;
        pts.push((fp, tp));
    }
    pts.push((1.0, 1.0));
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

#[test]
fn auc_matches_direct_roc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (w, h) = (12, 9);
        // coarse values force ties
        let values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0..6) as f64 + 0.5).collect();
        let fix: Vec<(f64, f64)> = (0..rng.random_range(1..20))
            .map(|_| (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)))
            .collect();
        let mut fixated = vec![false; w * h];
        for &(x, y) in &fix {
            fixated[y as usize * w + x as usize] = true;
        }
        let map = SaliencyMap::new(w, h, values.clone()).unwrap();
        let got = auc_judd(&map, &fix).unwrap();
        assert!((got - auc_brute_force(map.values(), &fixated)).abs() < 1e-12);
    }
}

#[test]
fn histogram_kl_by_hand() {
    // pooled range [0, 4], two bins split at 2
    let pair = ScoreDistributionPair {
        metric_id: "t".into(),
        p_samples: vec![0.0, 1.0, 1.5, 3.0],
        q_samples: vec![2.5, 3.5, 4.0, 0.5],
    };
    let eps = KL_SMOOTHING;
    let z = 1.0 + 2.0 * eps;
    let p = [(0.75 + eps) / z, (0.25 + eps) / z];
    let q = [(0.25 + eps) / z, (0.75 + eps) / z];
    let want = p[0] * (p[0] / q[0]).ln() + p[1] * (p[1] / q[1]).ln();
    assert!((kl_divergence(&pair, 2).unwrap() - want).abs() < 1e-14);
}

#[test]
fn histogram_kl_with_empty_bin() {
    let pair = ScoreDistributionPair {
        metric_id: "t".into(),
        p_samples: vec![0.0, 0.1],
        q_samples: vec![0.9, 1.0],
    };
    let eps = KL_SMOOTHING;
    let z = 1.0 + 2.0 * eps;
    let (a, b) = ((1.0 + eps) / z, eps / z);
    let want = a * (a / b).ln() + b * (b / a).ln();
    assert!((kl_divergence(&pair, 2).unwrap() - want).abs() < 1e-9);
}

#[test]
fn adamw_matches_reference_trajectory() {
    let cfg = TrainConfig {
        lr: 0.01,
        weight_decay: 0.1,
        ..TrainConfig::default()
    };
    let grads = |k: usize, p: &[f64]| -> Vec<f64> { p.iter().enumerate().map(|(i, v)| 2.0 * v - (k + i) as f64 * 0.1).collect() };
    let mut params = vec![0.5, -1.0, 2.0];
    let mask = [true, false, true];
    let mut state = OptimState::new(3);

    // decoupled decay first, then the bias-corrected Adam step
    let mut reference = params.clone();
    let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
    for k in 0..10 {
        let g = grads(k, &reference);
        let gp = grads(k, &params);
        adamw_step(&mut params, &gp, &mut state, &cfg, &mask).unwrap();
        let t = (k + 1) as i32;
        for i in 0..3 {
            let decayed = if mask[i] { reference[i] * (1.0 - cfg.lr * cfg.weight_decay) } else { reference[i] };
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.999f64.powi(t));
            reference[i] = decayed - cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        for i in 0..3 {
            assert!((params[i] - reference[i]).abs() < 1e-14, "step {k} coord {i}");
        }
    }
    assert_eq!(state.step, 10);
}

fn tiny_model() -> TppModel {
    let cfg = ModelConfig {
        tpp: TppConfig {
            d_img: 3,
            d_hist: 4,
            k: 1,
            g: 1,
            d_in: 3,
        },
        readout: ReadoutShape {
            height: 2,
            width: 2,
            channels: 1,
        },
    };
    TppModel::zeros(cfg).unwrap()
}

fn stimulus(horizon: f64) -> Stimulus {
    Stimulus {
        id: "d".into(),
        width: 200,
        height: 100,
        viewing_duration: horizon,
        feature_path: "d.fvol".into(),
    }
}

/// All weights zero so every event is drawn from the same mixtures.
fn renewal_model(m: f64, ln_s: f64, mu: [f64; 2], ln_var: f64) -> TppModel {
    let mut model = tiny_model();
    model.param_mut("head.m.bias").unwrap()[0] = m;
    model.param_mut("head.s.bias").unwrap()[0] = ln_s;
    model.param_mut("head.mu.bias").unwrap().copy_from_slice(&mu);
    model.param_mut("head.sigma.bias").unwrap().fill(ln_var);
    model
}

#[test]
fn degenerate_durations_fill_the_horizon_exactly() {
    let model = renewal_model(0.25f64.ln(), -30.0, [0.3, 0.6], -30.0);
    let vol = toy_feature_volume(2, 2, 1, [0.5, 0.5], 1).unwrap();
    let z = model.embed(&coordconv_augment(&vol)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sp = sample_scanpath(&model, &z, &stimulus(1.0), "o", &mut rng, 50).unwrap();
    assert_eq!(sp.len(), 4);
    for f in &sp.fixations {
        assert!((f.tau - 0.25).abs() < 1e-9);
        assert!((f.x - 60.0).abs() < 1e-3 && (f.y - 60.0).abs() < 1e-3, "{f:?}");
    }
    let capped = sample_scanpath(&model, &z, &stimulus(100.0), "o", &mut rng, 50).unwrap();
    assert_eq!(capped.len(), 50);
    let none = sample_scanpath(&model, &z, &stimulus(1.0), "o", &mut rng, 0).unwrap();
    assert!(none.is_empty());
}

#[test]
fn renewal_duration_mean() {
    let (m, s) = (0.3f64.ln(), 0.4f64);
    let model = renewal_model(m, s.ln(), [0.5, 0.5], (0.1f64).ln());
    let vol = toy_feature_volume(2, 2, 1, [0.5, 0.5], 1).unwrap();
    let stim = stimulus(20.0);
    let stimuli = BTreeMap::from([(stim.id.clone(), stim)]);
    let vols = BTreeMap::from([("d".to_string(), vol)]);
    let sps = sample_ensemble(&model, &stimuli, &vols, 400, 9, 1000).unwrap();
    let taus: Vec<f64> = sps.iter().flat_map(|s| s.durations()).collect();
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let dist = LogNormal::new(m, s).unwrap();
    let (want, sd) = (statrs::statistics::Distribution::mean(&dist).unwrap(), statrs::statistics::Distribution::std_dev(&dist).unwrap());
    // the final event of each scanpath is not length-biased, the others are
    // plain draws; five standard errors is ample
    assert!((mean - want).abs() < 5.0 * sd / n.sqrt(), "mean {mean} want {want} n {n}");
    for sp in &sps {
        for f in &sp.fixations {
            assert!((0.0..=200.0).contains(&f.x) && (0.0..=100.0).contains(&f.y));
        }
    }
}

#[test]
fn ensemble_order_and_seeding() {
    let model = renewal_model(0.2f64.ln(), 0.3f64.ln(), [0.4, 0.4], (0.05f64).ln());
    let vol = toy_feature_volume(2, 2, 1, [0.5, 0.5], 1).unwrap();
    let mut stimuli = BTreeMap::new();
    let mut vols = BTreeMap::new();
    for id in ["b", "a"] {
        stimuli.insert(id.to_string(), Stimulus { id: id.into(), ..stimulus(2.0) });
        vols.insert(id.to_string(), vol.clone());
    }
    let one = sample_ensemble(&model, &stimuli, &vols, 3, 1, 50).unwrap();
    let again = sample_ensemble(&model, &stimuli, &vols, 3, 1, 50).unwrap();
    let other = sample_ensemble(&model, &stimuli, &vols, 3, 2, 50).unwrap();
    assert_eq!(one, again);
    assert_ne!(one, other);
    let labels: Vec<(String, String)> = one.iter().map(|s| (s.stimulus_id.clone(), s.observer_id.clone())).collect();
    assert_eq!(labels[0], ("a".to_string(), "sim:0".to_string()));
    assert_eq!(labels[5], ("b".to_string(), "sim:2".to_string()));
    // a larger ensemble extends the smaller one
    let more = sample_ensemble(&model, &stimuli, &vols, 4, 1, 50).unwrap();
    assert_eq!(more[..3], one[..3]);
    assert!(sample_ensemble(&model, &stimuli, &vols, 0, 1, 50).unwrap().is_empty());
}
