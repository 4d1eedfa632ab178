use oamturb::channel;
use oamturb::lgmode::LGMode;
use oamturb::quadrature::QuadratureSpec;
use oamturb::screen_mc::{mc_amplitudes, McOptions, ScreenGrid};
use oamturb::turbulence::TurbulenceModel;

const W0: f64 = 0.05;

fn model_at(l0: i64, x: f64) -> TurbulenceModel {
    let xi = LGMode::new(l0, W0).unwrap().phase_correlation_length().unwrap();
    TurbulenceModel::from_fried(xi / x).unwrap()
}

#[test]
fn two_thousand_samples_meet_the_precision_budget() {
    let m = model_at(2, 0.5);
    let exact = channel::amplitudes(2, W0, &m, &QuadratureSpec::default()).unwrap();
    let mc = mc_amplitudes(2, W0, &m, 2000, 11, &McOptions::default()).unwrap();
    assert!(mc.sigma_a <= 0.02 * mc.a, "sigma_a/a = {}", mc.sigma_a / mc.a);
    assert!(!mc.warning);
    assert!((mc.a - exact.a).abs() <= 3.0 * mc.sigma_a, "a {} vs {}", mc.a, exact.a);
    assert!((mc.b - exact.b).abs() <= 3.0 * mc.sigma_b, "b {} vs {}", mc.b, exact.b);
}

#[test]
fn halving_the_pixel_moves_estimates_by_less_than_one_sigma() {
    let m = model_at(2, 0.5);
    let coarse = ScreenGrid::for_beam(2, W0, m.r0(), None).unwrap();
    let fine = ScreenGrid::new(2 * coarse.n(), coarse.extent()).unwrap();
    let run = |grid| {
        let opts = McOptions { grid: Some(grid), ..McOptions::default() };
        mc_amplitudes(2, W0, &m, 400, 5, &opts).unwrap()
    };
    let (c, f) = (run(coarse), run(fine));
    assert!((c.a - f.a).abs() < c.sigma_a, "a: {} vs {} (sigma {})", c.a, f.a, c.sigma_a);
    assert!((c.b - f.b).abs() < c.sigma_b, "b: {} vs {} (sigma {})", c.b, f.b, c.sigma_b);
}

#[test]
fn standard_error_falls_as_inverse_square_root() {
    let m = model_at(2, 0.5);
    let ns = [250usize, 1000, 4000];
    let sigmas: Vec<f64> = ns
        .iter()
        .map(|&n| mc_amplitudes(2, W0, &m, n, 3, &McOptions::default()).unwrap().sigma_a)
        .collect();
    let u: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let v: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let (mu, mv) = (u.iter().sum::<f64>() / 3.0, v.iter().sum::<f64>() / 3.0);
    let slope = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum::<f64>()
        / u.iter().map(|a| (a - mu).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.1, "log-log slope {slope}, sigmas {sigmas:?}");
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let m = model_at(2, 0.9);
    let opts = McOptions::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_amplitudes(2, W0, &m, 100, 21, &opts).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
}
