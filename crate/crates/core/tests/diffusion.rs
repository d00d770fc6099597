use ggss_lab::autodiff::relative_error;
use ggss_lab::data::shapes_dataset;
use ggss_lab::diffusion::*;
use ggss_lab::rng::SeededRng;
use ggss_lab::Tensor;

#[test]
fn schedule_matches_an_independent_recurrence() {
    for (steps, eta) in [(1000, 0.0), (100, 0.5), (10, 1.0)] {
        let s = NoiseSchedule::new(steps, eta).unwrap();
        let mut a = 1.0f64;
        assert_eq!(s.alpha(0), 1.0);
        for t in 1..=steps {
            let frac = (t - 1) as f64 / (steps - 1) as f64;
            let beta = ((1e-4 + (0.02 - 1e-4) * frac) * 1000.0 / steps as f64).min(0.999);
            a *= 1.0 - beta;
            assert!((s.alpha(t) - a).abs() <= 1e-14 * a.max(1e-300), "T={steps} t={t}");
            let prev = s.alpha(t - 1);
            let sig = eta * ((1.0 - prev) / (1.0 - a) * (1.0 - a / prev)).sqrt();
            assert!((s.sigma(t) - sig).abs() < 1e-14);
            assert!(s.direction_coeff(t).unwrap() >= 0.0);
        }
    }
    assert!(NoiseSchedule::new(100, 0.0).unwrap().alpha(100) < 1e-3);
    assert!(NoiseSchedule::new(5, 0.0).is_err());
    assert!(NoiseSchedule::new(100, 1.5).is_err());
}

#[test]
fn single_gaussian_oracle_predicts_the_closed_form_noise() {
    let m = Tensor::vector(vec![0.4, -0.1, 0.8]);
    let v = 0.3;
    let oracle = Denoiser::oracle(GaussianMixture::single(m.clone(), v).unwrap());
    let sched = NoiseSchedule::new(100, 0.0).unwrap();
    let mut rng = SeededRng::new(2);
    for t in [1, 10, 50, 100] {
        let a = sched.alpha(t);
        let x = rng.normal_tensor(&[3]);
        let want = x.sub(&m.scale(a.sqrt())).scale((1.0 - a).sqrt() / (a * v + 1.0 - a));
        let got = oracle.predict_value(&x, t, &sched).unwrap();
        assert!(relative_error(got.data(), want.data()) < 1e-13);
        // the posterior mean read off the oracle is the exact Gaussian one
        let x0 = posterior_mean(&x, t, &sched, &oracle, PosteriorMode::Consistent).unwrap();
        let (exact, _) = GaussianMixture::single(m.clone(), v).unwrap().single_posterior(&x, a).unwrap();
        assert!(relative_error(x0.data(), exact.data()) < 1e-12);
    }
}

#[test]
fn mixture_score_is_the_gradient_of_the_log_density() {
    let gm = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![Tensor::vector(vec![1.0, 0.0]), Tensor::vector(vec![-0.5, 0.8])],
        vec![0.2, 0.5],
    )
    .unwrap();
    let mut rng = SeededRng::new(3);
    for alpha in [0.9, 0.5, 0.1] {
        let x = rng.normal_tensor(&[2]);
        let h = 1e-6;
        let fd: Vec<f64> = (0..2)
            .map(|k| {
                let mut p = x.clone();
                p.data_mut()[k] += h;
                let mut q = x.clone();
                q.data_mut()[k] -= h;
                (gm.log_density(&p, alpha) - gm.log_density(&q, alpha)) / (2.0 * h)
            })
            .collect();
        assert!(relative_error(gm.score(&x, alpha).data(), &fd) < 1e-6);
    }
}

#[test]
fn forward_marginal_moments() {
    let sched = NoiseSchedule::new(100, 0.0).unwrap();
    let x0 = Tensor::vector(vec![0.7, -0.4]);
    let t = 40;
    let a = sched.alpha(t);
    let mut rng = SeededRng::new(4);
    let n = 20_000;
    let (mut sum, mut sq) = ([0.0; 2], [0.0; 2]);
    for _ in 0..n {
        let (xt, _) = forward_sample(&x0, t, &sched, &mut rng).unwrap();
        for k in 0..2 {
            sum[k] += xt.data()[k];
            sq[k] += xt.data()[k].powi(2);
        }
    }
    let var = 1.0 - a;
    for k in 0..2 {
        let mean = sum[k] / n as f64;
        let v = sq[k] / n as f64 - mean * mean;
        assert!((mean - a.sqrt() * x0.data()[k]).abs() < 4.0 * (var / n as f64).sqrt());
        assert!((v - var).abs() < 4.0 * var * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn output_coefficients_follow_from_the_clean_estimate_form() {
    for alpha in [0.999f64, 0.5, 1e-3, 2e-5] {
        let s = ((1.0 - alpha) / alpha).sqrt();
        let sd = SIGMA_DATA;
        let c_skip = sd * sd / (s * s + sd * sd);
        let c_out = s * sd / (s * s + sd * sd).sqrt();
        // ε = (y − c_skip y − c_out F)/s with y = x/√α
        let want_a = (1.0 - c_skip) / (s * alpha.sqrt());
        let want_b = c_out / s;
        let (a, b) = output_coefficients(alpha);
        assert!((a - want_a).abs() <= 1e-12 * want_a);
        assert!((b - want_b).abs() <= 1e-12 * want_b);
    }
}

#[test]
fn denoiser_training_reduces_loss_and_checkpoints_round_trip() {
    let data = shapes_dataset(64, 8, 0);
    let sched = NoiseSchedule::new(50, 0.0).unwrap();
    let trained = train_denoiser(&data, &sched, TrainConfig { epochs: 150, lr: 1e-3, seed: 0 }).unwrap();
    let l = &trained.loss_trace;
    assert_eq!(l.len(), 150);
    let head: f64 = l[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = l[l.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.9 * head, "{head} -> {tail}");

    let text = trained.denoiser.to_checkpoint().unwrap();
    let back = Denoiser::from_checkpoint(&text).unwrap();
    let x = SeededRng::new(1).normal_tensor(&[64]);
    assert_eq!(
        trained.denoiser.predict_value(&x, 20, &sched).unwrap(),
        back.predict_value(&x, 20, &sched).unwrap()
    );
    assert!(Denoiser::from_checkpoint("garbage").is_err());
}

#[test]
fn ddim_sampling_is_seed_deterministic() {
    let oracle = Denoiser::oracle(GaussianMixture::single(Tensor::vector(vec![0.1, 0.2]), 0.5).unwrap());
    let sched = NoiseSchedule::new(20, 1.0).unwrap();
    let a = ddim_sample(&oracle, &sched, PosteriorMode::Consistent, 9).unwrap();
    let b = ddim_sample(&oracle, &sched, PosteriorMode::Consistent, 9).unwrap();
    let c = ddim_sample(&oracle, &sched, PosteriorMode::Consistent, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
