//! Trajectories drawn from the filter genealogy against the exact
//! Rauch-Tung-Striebel smoother of a linear-Gaussian model.

mod common;

use common::LinearGaussian;
use npzd_core::rng::stream;
use npzd_core::smc::{bootstrap_filter, draw_trajectory, FilterConfig, StateSpaceModel};

/// Smoothed means and variances for the model in `common`.
fn rts(model: &LinearGaussian, obs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let a = model.a;
    let (mut mf, mut pf, mut mp, mut pp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut m, mut p) = (0.0, model.q / (1.0 - a * a));
    for (t, ys) in obs.iter().enumerate() {
        if t > 0 {
            m *= a;
            p = a * a * p + model.q;
        }
        mp.push(m);
        pp.push(p);
        for y in ys {
            let k = p / (p + model.r);
            m += k * (y - m);
            p *= 1.0 - k;
        }
        mf.push(m);
        pf.push(p);
    }
    let t_last = obs.len() - 1;
    let (mut ms, mut ps) = (mf.clone(), pf.clone());
    for t in (0..t_last).rev() {
        let g = pf[t] * a / pp[t + 1];
        ms[t] = mf[t] + g * (ms[t + 1] - mp[t + 1]);
        ps[t] = pf[t] + g * g * (ps[t + 1] - pp[t + 1]);
    }
    (ms, ps)
}

#[test]
fn drawn_trajectories_follow_the_smoother() {
    let model = LinearGaussian::standard();
    let obs = model.simulate(20, &mut stream(21, &[]));
    let (ms, ps) = rts(&model, &obs);
    let params = model.params(&[]).unwrap();
    let config = FilterConfig::new(2_000);
    let runs = 300;
    let mut sums = vec![0.0; obs.len()];
    for r in 0..runs {
        let out = bootstrap_filter(&model, &params, &obs, &config, r).unwrap();
        let path = draw_trajectory(&out.ensemble, &mut stream(22, &[r])).unwrap();
        for (s, x) in sums.iter_mut().zip(&path) {
            *s += x;
        }
    }
    for t in 0..obs.len() {
        let mean = sums[t] / runs as f64;
        let se = (ps[t] / runs as f64).sqrt();
        assert!((mean - ms[t]).abs() < 4.0 * se, "t = {t}: {mean} vs {} (se {se})", ms[t]);
    }
}
