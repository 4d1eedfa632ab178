//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oamturb::channel::{self, ChannelAmplitudes, MapElementQuery};
use oamturb::entangle;
use oamturb::experiments::{self, CollapseRecord};
use oamturb::lgmode::LGMode;
use oamturb::quadrature::QuadratureSpec;
use oamturb::screen_mc::{self, McOptions, ScreenGrid, ScreenSampler};
use oamturb::turbulence::{self, TurbulenceModel};

const W0: f64 = 0.05;

type Check = std::result::Result<String, String>;

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn model(r0: f64) -> TurbulenceModel {
    TurbulenceModel::from_fried(r0).expect("positive r0")
}

fn xi(l0: i64, w0: f64) -> f64 {
    LGMode::new(l0, w0).unwrap().phase_correlation_length().unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn verdict(pass: bool, detail: String) -> Check {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn no_turbulence_identity() -> Check {
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for l0 in 1..=50 {
        let amps = channel::amplitudes(l0, W0, &model(1e6 * W0), &spec()).map_err(err)?;
        let c = entangle::output_concurrence(&amps, 0.0).map_err(err)?;
        worst.0 = worst.0.max((amps.a - 1.0).abs());
        worst.1 = worst.1.max(amps.b.abs());
        worst.2 = worst.2.max((c - 1.0).abs());
    }
    verdict(
        worst.0 < 1e-6 && worst.1 < 1e-6 && worst.2 < 1e-6,
        format!("max |a-1| = {:.1e}, max |b| = {:.1e}, max |C-1| = {:.1e}", worst.0, worst.1, worst.2),
    )
}

/// `sin(π/2|l|)·⟨r⟩` with `⟨r⟩` from a trapezoid rule on the unnormalised
/// intensity `r^{2|l|+1} e^{-2r²/w0²}`.
fn xi_oracle(l: u32, w0: f64) -> f64 {
    const N: usize = 20_000;
    let r_max = w0 * ((l as f64 / 2.0).sqrt() + 10.0);
    let h = r_max / N as f64;
    let ln_w = |r: f64| (2 * l + 1) as f64 * r.ln() - 2.0 * r * r / (w0 * w0);
    let peak = ln_w(w0 * (l as f64 + 0.5).sqrt() / 2f64.sqrt());
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..N {
        let r = i as f64 * h;
        let w = (ln_w(r) - peak).exp();
        num += r * w;
        den += w;
    }
    (PI / (2.0 * l as f64)).sin() * num / den
}

fn closed_form_xi() -> Check {
    let mut worst = (0.0, 0);
    for l in 1..=100u32 {
        let closed = xi(l as i64, W0);
        let rel = (closed / xi_oracle(l, W0) - 1.0).abs();
        if rel > worst.0 {
            worst = (rel, l);
        }
    }
    verdict(worst.0 < 1e-8, format!("max relative deviation {:.1e} at l0 = {}", worst.0, worst.1))
}

fn concurrence_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let a: f64 = rng.random_range(0.01..=1.0);
        let ratio: f64 = rng.random_range(0.0..1.0);
        let gamma: f64 = rng.random_range(0.0..2.0 * PI);
        let amps = ChannelAmplitudes::from_values(a, ratio * a).map_err(err)?;
        let general = entangle::output_concurrence(&amps, gamma).map_err(err)?;
        let closed = entangle::concurrence_closed_form(amps.ratio().map_err(err)?).map_err(err)?;
        worst = worst.max((general - closed).abs());
    }
    verdict(worst < 1e-10, format!("max |C_wootters - C_closed| = {worst:.1e} over 200 triples"))
}

fn inversion_symmetry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for _ in 0..40 {
        let l0: i64 = rng.random_range(1..=12) * if rng.random_bool(0.5) { 1 } else { -1 };
        let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1 } else { -1 };
        let l0p = l0 * sign(&mut rng);
        let l = l0 * sign(&mut rng);
        let lp = l * sign(&mut rng);
        let x: f64 = rng.random_range(0.05..1.3);
        let q = MapElementQuery::new(l0, l0p, l, lp).map_err(err)?;
        if q.selection_allowed() {
            nonzero += 1;
        }
        let d = channel::verify_inversion_symmetry(&q, W0, &model(xi(l0, W0) / x), &spec())
            .map_err(err)?;
        worst = worst.max(d);
    }
    verdict(
        worst < 1e-9,
        format!("max mirrored difference {worst:.1e} over 40 queries ({nonzero} selection-allowed)"),
    )
}

fn curve(l0: i64, xs: &[f64]) -> std::result::Result<Vec<CollapseRecord>, String> {
    let c = experiments::concurrence_curve(l0, W0, xs, &spec()).map_err(err)?;
    if let Some(bad) = c.iter().find(|r| !r.is_ok()) {
        return Err(format!("l0 = {l0}, x = {}: {}", bad.x, bad.status));
    }
    if !experiments::is_monotone_non_increasing(&c) {
        return Err(format!("l0 = {l0} curve is not monotone"));
    }
    Ok(c)
}

fn universal_collapse() -> Check {
    let range = (0.05, 1.3);
    let xs = experiments::x_grid(range.0, range.1, 0.01).map_err(err)?;
    let reference = curve(50, &xs)?;
    let dev = |l0: i64| -> std::result::Result<f64, String> {
        experiments::sup_deviation(&curve(l0, &xs)?, &reference, Some(range)).map_err(err)
    };
    let (d1, d5, d20) = (dev(1)?, dev(5)?, dev(20)?);
    verdict(
        d20 < 0.05 && d5 > d20,
        format!("sup|C20 - C50| = {d20:.4} (< 0.05), sup|C5 - C50| = {d5:.4}, sup|C1 - C50| = {d1:.4} (reported)"),
    )
}

fn fit_parameters() -> Check {
    let xs = experiments::x_grid(0.02, 1.5, 0.01).map_err(err)?;
    let fit = experiments::fit_stretched_exponential(&curve(50, &xs)?, (0.2, 0.95)).map_err(err)?;
    let mut round_trip = 0.0f64;
    for (alpha, beta) in [(4.16, 3.24), (1.0, 1.0), (10.0, 5.0), (2.5, 1.7)] {
        let grid = experiments::x_grid(0.05, 1.5, 0.01).map_err(err)?;
        let cs: Vec<f64> = grid.iter().map(|x| (-alpha * x.powf(beta)).exp()).collect();
        let f = experiments::fit_points(&grid, &cs, (0.0, 2.0)).map_err(err)?;
        round_trip = round_trip.max((f.alpha - alpha).abs()).max((f.beta - beta).abs());
    }
    verdict(
        (3.7..=4.6).contains(&fit.alpha) && (2.9..=3.6).contains(&fit.beta) && round_trip < 1e-6,
        format!(
            "l0 = 50: alpha = {:.4}, beta = {:.4} (rms {:.1e}); synthetic round trip max error {round_trip:.1e}",
            fit.alpha, fit.beta, fit.residual
        ),
    )
}

fn critical_point() -> Check {
    let x = experiments::critical_x(50, W0, &spec()).map_err(err)?;
    verdict((0.8..=1.2).contains(&x), format!("x_c(l0 = 50) = {x:.4}"))
}

fn distance_scaling() -> Check {
    let k = turbulence::wavenumber(1550e-9).map_err(err)?;
    let l0s = [16, 32, 64, 128, 256, 512];
    let res = experiments::distance_scaling(&l0s, 1e-14, k, W0, 0.01, &spec()).map_err(err)?;
    let asymptotic = (res.slope - 5.0 / 6.0).abs();
    let oracle = (res.slope - res.oracle_slope).abs();
    let xs: Vec<String> = res.points.iter().map(|p| format!("{:.4}", p.x)).collect();
    verdict(
        asymptotic <= 0.05 && oracle <= 1e-3,
        format!(
            "slope = {:.4}: |slope - 5/6| = {asymptotic:.4} (<= 0.05 {}), oracle slope = {:.4}, |diff| = {oracle:.4} (<= 1e-3 {}); x* = [{}]",
            res.slope,
            if asymptotic <= 0.05 { "ok" } else { "FAILED" },
            res.oracle_slope,
            if oracle <= 1e-3 { "ok" } else { "FAILED" },
            xs.join(", ")
        ),
    )
}

fn monte_carlo_oracle() -> Check {
    let mut lines = Vec::new();
    let mut pass = true;
    for l0 in [1, 2, 5] {
        for x in [0.2, 0.5, 0.9] {
            let m = model(xi(l0, W0) / x);
            let exact = channel::amplitudes(l0, W0, &m, &spec()).map_err(err)?;
            let mc = screen_mc::mc_amplitudes(l0, W0, &m, 2000, 1000 + l0 as u64, &McOptions::default())
                .map_err(err)?;
            let za = (mc.a - exact.a).abs() / mc.sigma_a;
            let zb = (mc.b - exact.b).abs() / mc.sigma_b;
            pass &= za <= 3.0 && zb <= 3.0;
            lines.push(format!("({l0},{x}): za {za:.2} zb {zb:.2} n={}", mc.grid.n()));
        }
    }
    let grid = ScreenGrid::new(256, 1.0).map_err(err)?;
    let m = model(0.1);
    let sampler = ScreenSampler::new(&grid, &m).map_err(err)?;
    let screens: Vec<_> = (0..100).flat_map(|p| sampler.sample_pair(7, p)).collect();
    let mut worst = 0.0f64;
    for lag in [4, 8, 16, 32, 64] {
        let r = lag as f64 * grid.pixel();
        let emp = screen_mc::structure_function(&screens, lag).map_err(err)?;
        worst = worst.max((emp / m.structure_function(r).map_err(err)? - 1.0).abs());
    }
    pass &= worst < 0.10;
    lines.push(format!("D_phi max rel. deviation {worst:.3} over lags 4..64 px"));
    verdict(pass, lines.join("; "))
}

fn scale_invariance() -> Check {
    let mut worst = 0.0f64;
    for l0 in [1, 3, 10, 50] {
        for x in [0.3, 0.9, 1.2] {
            let r0 = xi(l0, W0) / x;
            let c = |s: f64| -> std::result::Result<f64, String> {
                let amps = channel::amplitudes(l0, s * W0, &model(s * r0), &spec()).map_err(err)?;
                entangle::concurrence_closed_form(amps.ratio().map_err(err)?).map_err(err)
            };
            let base = c(1.0)?;
            for s in [0.1, 10.0] {
                worst = worst.max((c(s)? - base).abs());
            }
        }
    }
    verdict(worst < 1e-9, format!("max |C(s w0, s r0) - C(w0, r0)| = {worst:.1e}"))
}

fn run_cli(args: &[&str], threads: &str, out: &Path) -> std::result::Result<Vec<u8>, String> {
    let mut full = vec!["--threads", threads];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let status = Command::new(env!("CARGO_BIN_EXE_oamturb"))
        .args(&full)
        .output()
        .map_err(err)?;
    if !status.status.success() {
        return Err(format!(
            "`oamturb {}` failed: {}",
            full.join(" "),
            String::from_utf8_lossy(&status.stderr).trim()
        ));
    }
    std::fs::read(out).map_err(err)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let sweep_csv = dir.path().join("sweep_input.csv");
    let sweep: Vec<&str> = vec!["sweep", "--l0", "1,5,50", "--w0", "0.05", "--x", "0.05:1.3:0.05"];
    run_cli(&sweep, "2", &sweep_csv)?;
    let sweep_path = sweep_csv.to_str().unwrap().to_string();
    let commands: Vec<Vec<&str>> = vec![
        vec!["map", "--l0", "3", "--w0", "0.05", "--cn2", "1e-15", "--wavelength", "800e-9", "--distance", "1000"],
        sweep,
        vec!["fit", "--in", &sweep_path, "--l0", "50"],
        vec!["critical", "--l0", "3,50", "--w0", "0.05"],
        vec!["scaling", "--l0", "4,8,16,40", "--w0", "0.05", "--cn2", "1e-14", "--wavelength", "1550e-9"],
        vec!["mc", "--l0", "2", "--w0", "0.05", "--r0", "0.08", "--samples", "200", "--seed", "42", "--grid", "512"],
        vec!["screen", "--n", "256", "--extent", "1", "--r0", "0.1", "--seed", "5", "--index", "3"],
        vec!["screen", "--n", "256", "--extent", "1", "--r0", "0.1", "--seed", "5", "--format", "csv"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let runs = ["1", "4", "1"]
            .iter()
            .enumerate()
            .map(|(j, t)| run_cli(cmd, t, &dir.path().join(format!("{i}_{j}.out"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if runs[0] != runs[1] || runs[0] != runs[2] {
            return Err(format!("`{}` output differs between runs", cmd.join(" ")));
        }
    }
    Ok(format!(
        "{} commands byte-identical across reruns and 1 vs 4 workers",
        commands.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("no-turbulence identity", no_turbulence_identity),
        ("closed-form xi vs quadrature oracle", closed_form_xi),
        ("Wootters vs closed-form concurrence", concurrence_oracle),
        ("inversion symmetry", inversion_symmetry),
        ("universal collapse", universal_collapse),
        ("fit parameters", fit_parameters),
        ("critical point", critical_point),
        ("distance scaling", distance_scaling),
        ("Monte-Carlo oracle", monte_carlo_oracle),
        ("scale invariance", scale_invariance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
