//! Monte-Carlo phase screens with Kolmogorov statistics, and an ensemble
//! estimate of the channel amplitudes that does not use the angular kernel.
//!
//! Screens are Gaussian random fields synthesised by FFT from the phase
//! spectrum, with twelve levels of subharmonics added for the low spatial
//! frequencies the periodic grid cannot represent. Cells near zero frequency
//! carry their integrated power rather than the midpoint value. One complex
//! FFT yields two independent screens (real and imaginary part).
//!
//! Spectral coefficients are drawn in square shells of increasing frequency
//! index, so a grid with the same extent and twice the samples reuses every
//! draw of the coarser grid and only adds high-frequency content.
//!
//! # Binary screen format
//!
//! Little-endian throughout:
//!
//! | bytes    | content                                  |
//! |----------|------------------------------------------|
//! | 8        | magic `OAMSCRN1`                         |
//! | 8        | `n` (u64), samples per side              |
//! | 8        | `extent` (f64), side length in meters    |
//! | 8        | `seed` (u64)                             |
//! | 8        | `index` (u64), ensemble member           |
//! | 8·n²     | phases in radians (f64), row-major, y-major |

use std::f64::consts::TAU;
use std::io::{BufRead, Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::lgmode::LGMode;
use crate::quadrature;
use crate::turbulence::{TurbulenceModel, SPECTRUM_CONSTANT};
use crate::{Error, Result};

pub const MIN_GRID: usize = 256;
/// Largest grid chosen automatically.
pub const MAX_GRID: usize = 8192;
pub const MIN_SAMPLES: usize = 100;
const SUBHARMONIC_LEVELS: i32 = 12;
const MAGIC: &[u8; 8] = b"OAMSCRN1";

/// Square sampling grid of a phase screen, centred on the beam axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScreenGrid {
    n: usize,
    extent: f64,
}

/// Radius containing the beam, `w0·√(|l0|/2 + 4)`.
pub fn beam_radius(l0: i64, w0: f64) -> f64 {
    w0 * (l0.unsigned_abs() as f64 / 2.0 + 4.0).sqrt()
}

/// Smallest admissible extent for a beam: `8·max(beam radius, r0)`, with the
/// `r0` term capped at four beam radii.
pub fn required_extent(l0: i64, w0: f64, r0: f64) -> f64 {
    let rb = beam_radius(l0, w0);
    8.0 * rb.max(r0.min(4.0 * rb))
}

impl ScreenGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < MIN_GRID || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "grid size must be a power of two ≥ {MIN_GRID}, got {n}"
            )));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::config(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { n, extent })
    }

    /// Grid for a beam: the required extent and, unless given, the smallest
    /// power-of-two size meeting the resolution guard.
    pub fn for_beam(l0: i64, w0: f64, r0: f64, n: Option<usize>) -> Result<Self> {
        let extent = required_extent(l0, w0, r0);
        let n = match n {
            Some(n) => n,
            None => {
                let min_px = extent / (w0.min(r0) / 16.0);
                let n = (min_px.floor() as usize + 1).next_power_of_two().max(MIN_GRID);
                if n > MAX_GRID {
                    return Err(Error::config(format!(
                        "resolving r0 = {r0:e} over the beam needs a {n}² grid (limit {MAX_GRID})"
                    )));
                }
                n
            }
        };
        let grid = Self::new(n, extent)?;
        grid.check_beam(l0, w0, r0)?;
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn pixel(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Resolution guard: pixel below `r0/16`.
    pub fn check_turbulence(&self, r0: f64) -> Result<()> {
        if !(self.pixel() < r0 / 16.0) {
            return Err(Error::config(format!(
                "pixel size {:e} does not resolve r0 = {r0:e} (need < r0/16)",
                self.pixel()
            )));
        }
        Ok(())
    }

    /// Extent and resolution guards for a beam `(l0, w0)` in turbulence `r0`.
    pub fn check_beam(&self, l0: i64, w0: f64, r0: f64) -> Result<()> {
        let need = required_extent(l0, w0, r0);
        if self.extent < need * (1.0 - 1e-12) {
            return Err(Error::config(format!(
                "grid extent {} is below the required {need}",
                self.extent
            )));
        }
        if !(self.pixel() < w0.min(r0) / 16.0) {
            return Err(Error::config(format!(
                "pixel size {:e} must be below min(w0, r0)/16 = {:e}",
                self.pixel(),
                w0.min(r0) / 16.0
            )));
        }
        Ok(())
    }
}

/// One realisation of the turbulent phase on a grid, piston removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    pub grid: ScreenGrid,
    /// Row-major, `values[iy·n + ix]`.
    pub values: Vec<f64>,
    pub seed: u64,
    /// Ensemble member index.
    pub index: u64,
}

impl PhaseScreen {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n + ix]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.extent.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.index.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        if &word != MAGIC {
            return Err(Error::config("not a phase screen file (bad magic)"));
        }
        let mut next = || -> Result<[u8; 8]> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let n = u64::from_le_bytes(next()?) as usize;
        let extent = f64::from_le_bytes(next()?);
        let seed = u64::from_le_bytes(next()?);
        let index = u64::from_le_bytes(next()?);
        let grid = ScreenGrid::new(n, extent)?;
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            values.push(f64::from_le_bytes(next()?));
        }
        Ok(Self {
            grid,
            values,
            seed,
            index,
        })
    }

    /// Text export: one `#` header line, then one comma-separated row per `iy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# oamturb phase screen n={} extent={:?} seed={} index={} units=rad",
            self.grid.n, self.grid.extent, self.seed, self.index
        )?;
        for row in self.values.chunks(self.grid.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the text export back; the header supplies grid and seed.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("empty screen file"))??;
        let field = |key: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
                .ok_or_else(|| Error::config(format!("screen header lacks `{key}`")))
        };
        let parse_err = |e: &dyn std::fmt::Display| Error::config(format!("bad screen header: {e}"));
        let n: usize = field("n")?.parse().map_err(|e| parse_err(&e))?;
        let extent: f64 = field("extent")?.parse().map_err(|e| parse_err(&e))?;
        let seed: u64 = field("seed")?.parse().map_err(|e| parse_err(&e))?;
        let index: u64 = field("index")?.parse().map_err(|e| parse_err(&e))?;
        let grid = ScreenGrid::new(n, extent)?;
        let mut values = Vec::with_capacity(n * n);
        for line in lines {
            for t in line?.split(',') {
                values.push(
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config(format!("bad screen value: {e}")))?,
                );
            }
        }
        if values.len() != n * n {
            return Err(Error::config(format!(
                "expected {} screen values, found {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            seed,
            index,
        })
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Visit the frequency indices with `max(|kx|, |ky|) = s` in a fixed order.
fn for_each_in_shell(s: i64, mut f: impl FnMut(i64, i64)) {
    if s == 0 {
        f(0, 0);
        return;
    }
    for kx in -s..=s {
        f(kx, -s);
    }
    for ky in (1 - s)..s {
        f(-s, ky);
        f(s, ky);
    }
    for kx in -s..=s {
        f(kx, s);
    }
}

/// Blocked out-of-place transpose of an `n × n` matrix.
fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for i0 in (0..n).step_by(B) {
        for j0 in (0..n).step_by(B) {
            for i in i0..(i0 + B).min(n) {
                for j in j0..(j0 + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Frequency cells within this shell index get an integrated weight.
const CELL_CORRECTION_SHELLS: i64 = 16;
const CELL_QUADRATURE_NODES: usize = 32;

/// `|k|^{5/3}·∫ |f|^{-5/3} d²f` over the unit cell centred on integer `k`.
///
/// Scaling a cell's midpoint power by this factor makes its contribution to
/// the small-separation structure function exact.
fn cell_factor(kx: i64, ky: i64) -> f64 {
    let (x, w) = quadrature::gauss_legendre(CELL_QUADRATURE_NODES);
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (yj, wj) in x.iter().zip(&w) {
            let f = (kx as f64 + 0.5 * xi).hypot(ky as f64 + 0.5 * yj);
            acc += 0.25 * wi * wj * f.powf(-5.0 / 3.0);
        }
    }
    acc * (kx as f64).hypot(ky as f64).powf(5.0 / 3.0)
}

/// Square root of [`cell_factor`], tabulated for `max(|kx|, |ky|) ≤ 16`.
fn cell_amplitude(kx: i64, ky: i64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let s = CELL_CORRECTION_SHELLS;
    if kx.abs().max(ky.abs()) > s {
        return 1.0;
    }
    let side = (2 * s + 1) as usize;
    let table = TABLE.get_or_init(|| {
        let mut t = vec![1.0; side * side];
        for y in -s..=s {
            for x in -s..=s {
                if x != 0 || y != 0 {
                    t[((y + s) as usize) * side + (x + s) as usize] = cell_factor(x, y).sqrt();
                }
            }
        }
        t
    });
    table[((ky + s) as usize) * side + (kx + s) as usize]
}

/// Spectral weights, FFT plan and subharmonic basis of one grid and model;
/// draws any member of the screen ensemble.
pub struct ScreenSampler {
    grid: ScreenGrid,
    /// Per shell-ordered draw: target index into the spectrum, or `None`
    /// for draws that are made but discarded.
    targets: Vec<Option<(u32, f64)>>,
    /// `[level][ky + 1][kx + 1]` weights of the subharmonic draws.
    low: Vec<[[f64; 3]; 3]>,
    /// `cos` and `sin` of `2π·df_p·x` per level and pixel coordinate.
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl ScreenSampler {
    pub fn new(grid: &ScreenGrid, model: &TurbulenceModel) -> Result<Self> {
        grid.check_turbulence(model.r0())?;
        let n = grid.n;
        let d = grid.extent;
        let amp = SPECTRUM_CONSTANT.sqrt() * model.r0().powf(-5.0 / 6.0);
        // sqrt of the power in the cell of side df centred on integer index k
        let weight = |kx: i64, ky: i64, df: f64| {
            let f = (kx as f64).hypot(ky as f64) * df;
            amp * f.powf(-11.0 / 6.0) * df * cell_amplitude(kx, ky)
        };

        let levels = SUBHARMONIC_LEVELS as usize;
        let level_df = |p: usize| 1.0 / (3f64.powi(p as i32 + 1) * d);
        let low = (0..levels)
            .map(|p| {
                let mut w = [[0.0; 3]; 3];
                for ky in -1i64..=1 {
                    for kx in -1i64..=1 {
                        if kx != 0 || ky != 0 {
                            w[(ky + 1) as usize][(kx + 1) as usize] = weight(kx, ky, level_df(p));
                        }
                    }
                }
                w
            })
            .collect();

        let df = 1.0 / d;
        let half = (n / 2) as i64;
        let mut targets = Vec::with_capacity(n * n);
        for s in 0..=half {
            for_each_in_shell(s, |kx, ky| {
                if s == 0 || kx == half || ky == half {
                    targets.push(None);
                    return;
                }
                let ix = kx.rem_euclid(n as i64) as usize;
                let iy = ky.rem_euclid(n as i64) as usize;
                targets.push(Some(((iy * n + ix) as u32, weight(kx, ky, df))));
            });
        }

        let dx = grid.pixel();
        let centre = (n / 2) as f64;
        let phase = |p: usize, i: usize| TAU * level_df(p) * (i as f64 - centre) * dx;
        let cos = (0..levels)
            .map(|p| (0..n).map(|i| phase(p, i).cos()).collect())
            .collect();
        let sin = (0..levels)
            .map(|p| (0..n).map(|i| phase(p, i).sin()).collect())
            .collect();

        Ok(Self {
            grid: *grid,
            targets,
            low,
            cos,
            sin,
            fft: FftPlanner::new().plan_fft_inverse(n),
        })
    }

    pub fn grid(&self) -> &ScreenGrid {
        &self.grid
    }

    /// Inverse 2-D DFT without normalisation, in place.
    fn inverse_fft_2d(&self, data: &mut [Complex64]) {
        let n = self.grid.n;
        self.fft.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        transpose(data, &mut t, n);
        self.fft.process(&mut t);
        transpose(&t, data, n);
    }

    /// The two independent screens `2·pair` and `2·pair + 1` of the ensemble
    /// for `seed`.
    pub fn sample_pair(&self, seed: u64, pair: u64) -> [PhaseScreen; 2] {
        let n = self.grid.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(pair);

        let low: Vec<[[Complex64; 3]; 3]> = self
            .low
            .iter()
            .map(|w| {
                let mut c = [[Complex64::new(0.0, 0.0); 3]; 3];
                for (cy, wy) in c.iter_mut().zip(w) {
                    for (cx, wx) in cy.iter_mut().zip(wy) {
                        *cx = complex_normal(&mut rng) * *wx;
                    }
                }
                c
            })
            .collect();

        let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
        for t in &self.targets {
            let c = complex_normal(&mut rng);
            if let Some((idx, w)) = t {
                spec[*idx as usize] = c * *w;
            }
        }
        self.inverse_fft_2d(&mut spec);
        self.add_subharmonics(&mut spec, &low);

        let make = |part: fn(&Complex64) -> f64, index: u64| {
            let mut values: Vec<f64> = spec.iter().map(part).collect();
            // the deep subharmonics add a large constant; a second pass removes
            // the rounding left by the first
            for _ in 0..2 {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                values.iter_mut().for_each(|v| *v -= mean);
            }
            PhaseScreen {
                grid: self.grid,
                values,
                seed,
                index,
            }
        };
        [make(|c| c.re, 2 * pair), make(|c| c.im, 2 * pair + 1)]
    }

    /// Add `Σ_p Σ_{kx,ky} c·e^{i2π df_p (kx·x + ky·y)}`. The sum is separable;
    /// with `e^{∓iθ} = cos θ ∓ i sin θ` each level reduces to one cosine and
    /// one sine term per row.
    fn add_subharmonics(&self, spec: &mut [Complex64], low: &[[[Complex64; 3]; 3]]) {
        let n = self.grid.n;
        let i = Complex64::new(0.0, 1.0);
        let mut terms = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); low.len()];
        for iy in 0..n {
            let mut constant = Complex64::new(0.0, 0.0);
            for (p, c) in low.iter().enumerate() {
                let (cy, sy) = (self.cos[p][iy], self.sin[p][iy]);
                // y-sum per kx ∈ {−1, 0, 1}
                let r: [Complex64; 3] = std::array::from_fn(|kx| {
                    c[1][kx] + (c[2][kx] + c[0][kx]) * cy + (c[2][kx] - c[0][kx]) * i * sy
                });
                constant += r[1];
                terms[p] = (r[2] + r[0], (r[2] - r[0]) * i);
            }
            let row = &mut spec[iy * n..(iy + 1) * n];
            for v in row.iter_mut() {
                *v += constant;
            }
            for (p, &(a, b)) in terms.iter().enumerate() {
                for ((v, &cx), &sx) in row.iter_mut().zip(&self.cos[p]).zip(&self.sin[p]) {
                    *v += a * cx + b * sx;
                }
            }
        }
    }
}

/// The two independent screens `2·pair` and `2·pair + 1` of an ensemble.
pub fn sample_screen_pair(
    grid: &ScreenGrid,
    model: &TurbulenceModel,
    seed: u64,
    pair: u64,
) -> Result<[PhaseScreen; 2]> {
    Ok(ScreenSampler::new(grid, model)?.sample_pair(seed, pair))
}

/// Ensemble member `index` for `seed`.
pub fn sample_screen_indexed(
    grid: &ScreenGrid,
    model: &TurbulenceModel,
    seed: u64,
    index: u64,
) -> Result<PhaseScreen> {
    let [re, im] = sample_screen_pair(grid, model, seed, index / 2)?;
    Ok(if index % 2 == 0 { re } else { im })
}

/// The first ensemble member for `seed`.
pub fn sample_screen(grid: &ScreenGrid, model: &TurbulenceModel, seed: u64) -> Result<PhaseScreen> {
    sample_screen_indexed(grid, model, seed, 0)
}

/// Empirical `⟨(φ(p + lag) − φ(p))²⟩` along both axes, averaged over screens.
/// Differences never wrap around the grid edge.
pub fn structure_function(screens: &[PhaseScreen], lag: usize) -> Result<f64> {
    let Some(first) = screens.first() else {
        return Err(Error::domain("need at least one screen"));
    };
    let n = first.grid.n;
    if lag == 0 || lag >= n {
        return Err(Error::domain(format!("lag must lie in 1..{n}, got {lag}")));
    }
    let mut total = 0.0;
    for s in screens {
        if s.grid.n != n {
            return Err(Error::domain("screens must share one grid"));
        }
        let mut acc = 0.0;
        for iy in 0..n {
            for ix in 0..n - lag {
                let dx = s.at(ix + lag, iy) - s.at(ix, iy);
                let dy = s.at(iy, ix + lag) - s.at(iy, ix);
                acc += dx * dx + dy * dy;
            }
        }
        total += acc / (2 * n * (n - lag)) as f64;
    }
    Ok(total / screens.len() as f64)
}

/// Monte-Carlo estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    /// Screen grid; chosen from the beam and `r0` when absent.
    pub grid: Option<ScreenGrid>,
    /// Samples per side when `grid` is absent; chosen automatically if absent too.
    pub grid_size: Option<usize>,
    pub radial_nodes: usize,
    /// Standard-error budget relative to `a`.
    pub error_budget: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            grid: None,
            grid_size: None,
            radial_nodes: 64,
            error_budget: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub a: f64,
    pub sigma_a: f64,
    pub b: f64,
    pub sigma_b: f64,
    pub samples: usize,
    pub seed: u64,
    pub grid: ScreenGrid,
    pub angular_samples: usize,
    /// Set when a standard error exceeds the budget.
    pub warning: bool,
}

/// Bilinear stencil of one ring sample.
#[derive(Clone, Copy)]
struct Stencil {
    idx: [usize; 4],
    w: [f64; 4],
}

fn stencil(grid: &ScreenGrid, x: f64, y: f64) -> Stencil {
    let n = grid.n;
    let px = x / grid.pixel() + (n / 2) as f64;
    let py = y / grid.pixel() + (n / 2) as f64;
    let (fx, fy) = (px.floor(), py.floor());
    let (tx, ty) = (px - fx, py - fy);
    let wrap = |v: f64| (v as i64).rem_euclid(n as i64) as usize;
    let (x0, x1) = (wrap(fx), wrap(fx + 1.0));
    let (y0, y1) = (wrap(fy), wrap(fy + 1.0));
    Stencil {
        idx: [y0 * n + x0, y0 * n + x1, y1 * n + x0, y1 * n + x1],
        w: [
            (1.0 - tx) * (1.0 - ty),
            tx * (1.0 - ty),
            (1.0 - tx) * ty,
            tx * ty,
        ],
    }
}

/// Ring geometry shared by every ensemble member.
struct Rings {
    /// Radial weight `w_j·r_j·R(r_j)²` per ring.
    weights: Vec<f64>,
    stencils: Vec<Stencil>,
    /// `e^{i·2l0·θ_k}`
    twiddle: Vec<Complex64>,
    samples: usize,
}

impl Rings {
    fn new(l0: i64, w0: f64, grid: &ScreenGrid, radial_nodes: usize) -> Result<Self> {
        let mode = LGMode::new(l0, w0)?;
        let r_max = w0 * ((l0.unsigned_abs() as f64 / 2.0).sqrt() + 4.0);
        let samples = (TAU * r_max / grid.pixel())
            .ceil()
            .max(256.0)
            .max(16.0 * l0.unsigned_abs() as f64) as usize;
        let samples = samples.next_power_of_two();
        let (x, w) = quadrature::gauss_legendre(radial_nodes);
        let mut weights = Vec::with_capacity(radial_nodes);
        let mut stencils = Vec::with_capacity(radial_nodes * samples);
        for (xi, wi) in x.iter().zip(&w) {
            let r = 0.5 * r_max * (xi + 1.0);
            let prof = mode.radial_profile(r)?;
            weights.push(0.5 * r_max * wi * r * prof * prof);
            for k in 0..samples {
                let th = TAU * k as f64 / samples as f64;
                stencils.push(stencil(grid, r * th.cos(), r * th.sin()));
            }
        }
        let m = 2 * l0;
        let twiddle = (0..samples)
            .map(|k| {
                let idx = (m as i128 * k as i128).rem_euclid(samples as i128) as f64;
                Complex64::from_polar(1.0, TAU * idx / samples as f64)
            })
            .collect();
        Ok(Self {
            weights,
            stencils,
            twiddle,
            samples,
        })
    }

    /// `(Σ_j W_j |F_0(r_j)|², Σ_j W_j |F_{−2l0}(r_j)|²)` for one screen.
    fn project(&self, screen: &PhaseScreen) -> (f64, f64) {
        let n_th = self.samples;
        let (mut a, mut b) = (0.0, 0.0);
        for (j, wj) in self.weights.iter().enumerate() {
            let ring = &self.stencils[j * n_th..(j + 1) * n_th];
            let mut s0 = Complex64::new(0.0, 0.0);
            let mut sb = Complex64::new(0.0, 0.0);
            for (st, tw) in ring.iter().zip(&self.twiddle) {
                let phi: f64 = st
                    .idx
                    .iter()
                    .zip(&st.w)
                    .map(|(&i, &w)| w * screen.values[i])
                    .sum();
                let z = Complex64::from_polar(1.0, phi);
                s0 += z;
                sb += z * tw;
            }
            let norm = 1.0 / n_th as f64;
            a += wj * (s0 * norm).norm_sqr();
            b += wj * (sb * norm).norm_sqr();
        }
        (a, b)
    }
}

fn mean_and_error(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Ensemble estimate of the survival and crosstalk amplitudes.
///
/// Each screen `φ` gives, per ring radius `r`, the angular coefficients
/// `F_m(r) = (1/2π)∫ e^{iφ(r,θ)} e^{−imθ} dθ`; the traced populations are
/// `∫ r dr R(r)² |F_0|²` for `a` and `∫ r dr R(r)² |F_{−2l0}|²` for `b`.
pub fn mc_amplitudes(
    l0: i64,
    w0: f64,
    model: &TurbulenceModel,
    n_samples: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<McEstimate> {
    if l0 == 0 {
        return Err(Error::domain("qubit modes need l0 ≠ 0"));
    }
    if n_samples < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if opts.radial_nodes == 0 {
        return Err(Error::config("radial node count must be positive"));
    }
    let r0 = model.r0();
    let grid = match opts.grid {
        Some(g) => {
            g.check_beam(l0, w0, r0)?;
            g
        }
        None => ScreenGrid::for_beam(l0, w0, r0, opts.grid_size)?,
    };
    let rings = Rings::new(l0, w0, &grid, opts.radial_nodes)?;

    let sampler = ScreenSampler::new(&grid, model)?;
    let pairs = n_samples.div_ceil(2) as u64;
    let per_pair: Vec<[(f64, f64); 2]> = (0..pairs)
        .into_par_iter()
        .map(|p| {
            let [re, im] = sampler.sample_pair(seed, p);
            [rings.project(&re), rings.project(&im)]
        })
        .collect();
    let draws: Vec<(f64, f64)> = per_pair.into_iter().flatten().take(n_samples).collect();

    let (a, sigma_a) = mean_and_error(draws.iter().map(|d| d.0), n_samples);
    let (b, sigma_b) = mean_and_error(draws.iter().map(|d| d.1), n_samples);
    let budget = opts.error_budget * a.abs();
    Ok(McEstimate {
        a,
        sigma_a,
        b,
        sigma_b,
        samples: n_samples,
        seed,
        grid,
        angular_samples: rings.samples,
        warning: sigma_a > budget || sigma_b > budget,
    })
}
