//! Monte Carlo moments of the sampled channels against their large-scale
//! model, over 10^4 seeds.

use irs_capacity::channel::{sample_channels, ChannelParams, SystemConfig};
use num_complex::Complex64;

const SEEDS: u64 = 10_000;

fn within(estimate: f64, truth: f64, rel: f64) -> bool {
    (estimate - truth).abs() <= rel * truth
}

#[test]
fn second_moments_follow_the_path_loss() {
    let config = SystemConfig { elements: 4, ..SystemConfig::default() };
    let params = ChannelParams::default();
    let (mut direct, mut ap_irs, mut irs_user) = (vec![0.0; 2], 0.0, vec![0.0; 2]);
    let mut los_mean = Complex64::new(0.0, 0.0);
    for seed in 0..SEEDS {
        let ch = sample_channels(&config, &params, seed).unwrap();
        for k in 0..2 {
            direct[k] += ch.direct()[k].norm_sqr();
            irs_user[k] += ch.irs_user(k)[1].norm_sqr();
        }
        ap_irs += ch.ap_irs()[2].norm_sqr();
        los_mean += ch.ap_irs()[0];
    }
    let n = SEEDS as f64;
    for k in 0..2 {
        let pl = params.path_loss(params.ap_user_distance(k), params.exponent_ap_user).unwrap();
        assert!(within(direct[k] / n, pl, 0.05), "direct {k}: {} vs {pl}", direct[k] / n);
        let pl = params.path_loss(params.irs_user_distance(k), params.exponent_irs_user).unwrap();
        assert!(within(irs_user[k] / n, pl, 0.05), "irs-user {k}: {} vs {pl}", irs_user[k] / n);
    }
    let pl = params.path_loss(params.ap_irs_distance(), params.exponent_ap_irs).unwrap();
    assert!(within(ap_irs / n, pl, 0.05));

    // Element 0 has steering phase zero, so its mean is the real LoS part.
    let k = params.rician_ap_irs;
    let mean = pl.sqrt() * (k / (k + 1.0)).sqrt();
    let est = los_mean / n;
    assert!(within(est.re, mean, 0.05), "{est} vs {mean}");
    assert!(est.im.abs() <= 0.05 * mean);
}

#[test]
fn direct_links_are_rayleigh() {
    // |h|^2 is exponential: E|h|^4 = 2 (E|h|^2)^2.
    let config = SystemConfig { elements: 4, ..SystemConfig::default() };
    let params = ChannelParams::default();
    let (mut m2, mut m4) = (0.0, 0.0);
    for seed in 0..SEEDS {
        let p = sample_channels(&config, &params, seed).unwrap().direct()[0].norm_sqr();
        m2 += p;
        m4 += p * p;
    }
    let n = SEEDS as f64;
    let ratio = (m4 / n) / (m2 / n).powi(2);
    assert!(within(ratio, 2.0, 0.1), "kurtosis ratio {ratio}");
}
