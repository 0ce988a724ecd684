//! Seeded Monte Carlo surveys of orbit classes with resumable journals.

use std::f64::consts::TAU;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, ClassifierConfig, Label};
use crate::error::{check_dim, Error, Result};
use crate::map_engine::{iterate, PhaseState};
use crate::pendulum::{reduce, PendulumModel, SEPARATRIX_BAND};
use crate::resonance::SingleResonanceGeometry;
use crate::trig::{dot_int, TrigSeries};

pub const JOURNAL_MAGIC: &[u8; 8] = b"KTJRNL01";
pub const CHECKPOINT_EVERY: usize = 1000;

/// Per-sample outcome; the code is the journal byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    KamTorus = 0,
    Ribbon = 1,
    Spots = 2,
    Chaotic = 3,
    Undetermined = 4,
    Diverged = 5,
}

impl Outcome {
    pub const ALL: [Outcome; 6] =
        [Outcome::KamTorus, Outcome::Ribbon, Outcome::Spots, Outcome::Chaotic, Outcome::Undetermined, Outcome::Diverged];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Diverged => "Diverged",
            o => o.label().map_or("Diverged", Label::name),
        }
    }

    pub fn label(self) -> Option<Label> {
        Some(match self {
            Outcome::KamTorus => Label::KamTorus,
            Outcome::Ribbon => Label::Ribbon,
            Outcome::Spots => Label::Spots,
            Outcome::Chaotic => Label::Chaotic,
            Outcome::Undetermined => Label::Undetermined,
            Outcome::Diverged => return None,
        })
    }
}

impl From<Label> for Outcome {
    fn from(l: Label) -> Self {
        match l {
            Label::KamTorus => Outcome::KamTorus,
            Label::Ribbon => Outcome::Ribbon,
            Label::Spots => Outcome::Spots,
            Label::Chaotic => Outcome::Chaotic,
            Label::Undetermined => Outcome::Undetermined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Actions uniform in the box `[lo, hi)`.
    FullBox { lo: Vec<f64>, hi: Vec<f64> },
    /// `|λ| ≤ scale·√ε` around `⟨k, y⟩ = 2πk₀`, coordinates along the
    /// surface uniform in `along`.
    ResonanceStrip { k: Vec<i64>, k0: i64, scale: f64, along: (f64, f64) },
    /// Cube of half-width `scale·√ε` about `center`.
    DoubleResonanceBox { center: Vec<f64>, scale: f64 },
}

impl Region {
    pub fn full_box(dim: usize) -> Self {
        Region::FullBox { lo: vec![0.0; dim], hi: vec![TAU; dim] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyConfig {
    pub potential: TrigSeries,
    pub eps: Vec<f64>,
    pub samples: usize,
    pub steps: u64,
    pub stride: u64,
    pub region: Region,
    pub seed: u64,
    pub classifier: ClassifierConfig,
    /// Worker threads; does not influence results.
    #[serde(skip)]
    pub workers: usize,
}

impl SurveyConfig {
    pub fn new(potential: TrigSeries, eps: Vec<f64>, samples: usize, seed: u64) -> Self {
        let dim = potential.dim();
        Self {
            potential,
            eps,
            samples,
            steps: 200_000,
            stride: 20,
            region: Region::full_box(dim),
            seed,
            classifier: ClassifierConfig::default(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.potential.dim();
        if self.samples == 0 {
            return Err(Error::Config("sample count must be ≥ 1".into()));
        }
        if self.eps.is_empty() {
            return Err(Error::Config("eps list is empty".into()));
        }
        for (i, e) in self.eps.iter().enumerate() {
            if !(*e >= 0.0) || !e.is_finite() {
                return Err(Error::Config("eps must be ≥ 0".into()));
            }
            if self.eps[..i].contains(e) {
                return Err(Error::Config(format!("eps value {e} is listed twice")));
            }
        }
        if self.stride == 0 || self.steps < self.stride {
            return Err(Error::Config("need steps ≥ stride ≥ 1".into()));
        }
        match &self.region {
            Region::FullBox { lo, hi } => {
                check_dim(dim, lo.len())?;
                check_dim(dim, hi.len())?;
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Config("sampling box must have lo < hi".into()));
                }
            }
            Region::ResonanceStrip { k, scale, along, .. } => {
                check_dim(dim, k.len())?;
                if k.iter().all(|&c| c == 0) || !(*scale > 0.0) || !(along.0 < along.1) {
                    return Err(Error::Config("resonance strip needs k ≠ 0, scale > 0 and a nonempty range".into()));
                }
            }
            Region::DoubleResonanceBox { center, scale } => {
                check_dim(dim, center.len())?;
                if !(*scale > 0.0) {
                    return Err(Error::Config("double-resonance box needs scale > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Stable fingerprint of everything that influences the results.
    pub fn hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serializes");
        fnv1a(text.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Orthonormal basis of the hyperplane `k^⟂`.
fn orthogonal_basis(k: &[i64]) -> Vec<Vec<f64>> {
    let n = k.len();
    let kk: f64 = k.iter().map(|&c| (c * c) as f64).sum();
    let mut basis: Vec<Vec<f64>> = vec![k.iter().map(|&c| c as f64 / kk.sqrt()).collect()];
    for e in 0..n {
        let mut v: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i == e))).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 && basis.len() < n {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis.remove(0);
    basis
}

/// The deterministic initial condition for sample `sample` of eps index `eps_idx`.
pub fn sample_initial(config: &SurveyConfig, eps_idx: usize, sample: usize) -> PhaseState {
    let dim = config.potential.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((eps_idx as u64) << 32) | sample as u64);
    let eps = config.eps[eps_idx];
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * TAU).collect();
    let y: Vec<f64> = match &config.region {
        Region::FullBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect(),
        Region::ResonanceStrip { k, k0, scale, along } => {
            let kk: f64 = k.iter().map(|&c| (c * c) as f64).sum();
            let lam = scale * eps.sqrt() * (2.0 * rng.random::<f64>() - 1.0);
            let mut y: Vec<f64> = k.iter().map(|&c| (TAU * *k0 as f64 / kk + lam) * c as f64).collect();
            for e in orthogonal_basis(k) {
                let t = along.0 + (along.1 - along.0) * rng.random::<f64>();
                y.iter_mut().zip(&e).for_each(|(yi, ei)| *yi += t * ei);
            }
            y
        }
        Region::DoubleResonanceBox { center, scale } => {
            let w = scale * eps.sqrt();
            center.iter().map(|c| c + w * (2.0 * rng.random::<f64>() - 1.0)).collect()
        }
    };
    PhaseState::new(y, x).expect("dimensions agree")
}

pub fn run_sample(config: &SurveyConfig, eps_idx: usize, sample: usize) -> Outcome {
    let ic = sample_initial(config, eps_idx, sample);
    match iterate(&ic, &config.potential, config.eps[eps_idx], config.steps, config.stride) {
        Ok(orbit) => classify(&orbit, &config.classifier).label.into(),
        Err(_) => Outcome::Diverged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyRow {
    pub eps: f64,
    pub samples: usize,
    /// Indexed by outcome code.
    pub counts: [usize; 6],
    pub fractions: [f64; 6],
    pub stderr: [f64; 6],
    /// Non-torus fraction `(Ribbon + Spots + Chaotic)/classified`, where
    /// classified excludes Undetermined and Diverged.
    pub complement_fraction: f64,
    pub complement_stderr: f64,
    pub classified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub exponent: f64,
    pub exponent_stderr: f64,
    pub intercept: f64,
    /// Weighted root-mean-square residual in `log f`.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyResult {
    pub rows: Vec<SurveyRow>,
    /// Scaling of the non-torus fraction.
    pub complement_fit: Option<Fit>,
    /// Scaling of the Chaotic label alone.
    pub chaotic_fit: Option<Fit>,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip)]
    pub outcomes: Vec<Vec<Outcome>>,
}

fn binomial_stderr(f: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (f * (1.0 - f) / n as f64).sqrt()
    }
}

/// Weighted least squares of `ln f` on `ln ε` with binomial weights
/// `n·f/(1−f)`; points with `f ∈ {0, 1}` or `ε = 0` are skipped.
pub fn fit_power_law(points: &[(f64, f64, usize)]) -> Option<Fit> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|&&(e, f, n)| e > 0.0 && f > 0.0 && f < 1.0 && n > 0)
        .map(|&(e, f, n)| (e.ln(), f.ln(), n as f64 * f / (1.0 - f)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(Fit {
        exponent: slope,
        exponent_stderr: (1.0 / sxx).sqrt(),
        intercept,
        residual: (rss / sw).sqrt(),
        points: pts.len(),
    })
}

fn aggregate(config: &SurveyConfig, outcomes: Vec<Vec<Outcome>>) -> SurveyResult {
    let rows: Vec<SurveyRow> = config
        .eps
        .iter()
        .zip(&outcomes)
        .map(|(&eps, labels)| {
            let mut counts = [0usize; 6];
            for o in labels {
                counts[o.code() as usize] += 1;
            }
            let n = labels.len();
            let fractions = counts.map(|c| c as f64 / n as f64);
            let stderr = fractions.map(|f| binomial_stderr(f, n));
            let classified = n - counts[4] - counts[5];
            let non_torus = counts[1] + counts[2] + counts[3];
            let complement_fraction = if classified > 0 { non_torus as f64 / classified as f64 } else { 0.0 };
            SurveyRow {
                eps,
                samples: n,
                counts,
                fractions,
                stderr,
                complement_fraction,
                complement_stderr: binomial_stderr(complement_fraction, classified),
                classified,
            }
        })
        .collect();
    let complement: Vec<_> = rows.iter().map(|r| (r.eps, r.complement_fraction, r.classified)).collect();
    let chaotic: Vec<_> = rows
        .iter()
        .map(|r| {
            let f = if r.classified > 0 { r.counts[3] as f64 / r.classified as f64 } else { 0.0 };
            (r.eps, f, r.classified)
        })
        .collect();
    SurveyResult {
        complement_fit: fit_power_law(&complement),
        chaotic_fit: fit_power_law(&chaotic),
        rows,
        config_hash: format!("{:016x}", config.hash()),
        seed: config.seed,
        outcomes,
    }
}

/// Append-only record log: header `magic ‖ hash`, then records
/// `u32 len ‖ u32 eps_idx ‖ u64 sample ‖ u8 code`, little-endian.
struct Journal {
    file: File,
}

const RECORD_BODY: u32 = 4 + 8 + 1;
const HEADER_LEN: u64 = 16;

impl Journal {
    fn open(path: &Path, hash: u64, table: &mut [Vec<Option<Outcome>>]) -> Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let len = file.metadata()?.len();
        if len < HEADER_LEN {
            file.set_len(0)?;
            file.write_all(JOURNAL_MAGIC)?;
            file.write_all(&hash.to_le_bytes())?;
            file.sync_data()?;
            return Ok(Self { file });
        }
        let mut reader = BufReader::new(&file);
        let mut header = [0u8; HEADER_LEN as usize];
        reader.read_exact(&mut header)?;
        if &header[..8] != JOURNAL_MAGIC {
            return Err(Error::Io(format!("{} is not a survey journal", path.display())));
        }
        if u64::from_le_bytes(header[8..].try_into().unwrap()) != hash {
            return Err(Error::Io(format!("journal {} was written for a different configuration", path.display())));
        }
        let mut valid = HEADER_LEN;
        let mut rec = [0u8; 4 + RECORD_BODY as usize];
        while reader.read_exact(&mut rec).is_ok() {
            if u32::from_le_bytes(rec[..4].try_into().unwrap()) != RECORD_BODY {
                break;
            }
            let e = u32::from_le_bytes(rec[4..8].try_into().unwrap()) as usize;
            let s = u64::from_le_bytes(rec[8..16].try_into().unwrap()) as usize;
            let (Some(row), Some(o)) = (table.get_mut(e), Outcome::from_code(rec[16])) else {
                break;
            };
            let Some(slot) = row.get_mut(s) else {
                break;
            };
            *slot = Some(o);
            valid += rec.len() as u64;
        }
        drop(reader);
        // Drop any partially written tail before appending.
        file.set_len(valid)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self { file })
    }

    fn append(&mut self, records: &[(usize, usize, Outcome)]) -> Result<()> {
        let mut buf = Vec::with_capacity(records.len() * 17);
        for &(e, s, o) in records {
            buf.extend_from_slice(&RECORD_BODY.to_le_bytes());
            buf.extend_from_slice(&(e as u32).to_le_bytes());
            buf.extend_from_slice(&(s as u64).to_le_bytes());
            buf.push(o.code());
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Runs a survey, optionally against a resumable journal. With `budget`,
/// at most that many new samples are computed; `None` is returned when
/// work remains.
pub fn run_survey_with(config: &SurveyConfig, journal: Option<&Path>, budget: Option<usize>) -> Result<Option<SurveyResult>> {
    config.validate()?;
    let mut table: Vec<Vec<Option<Outcome>>> = vec![vec![None; config.samples]; config.eps.len()];
    let mut log = match journal {
        Some(p) => Some(Journal::open(p, config.hash(), &mut table)?),
        None => None,
    };
    let todo: Vec<(usize, usize)> = (0..config.eps.len())
        .flat_map(|e| (0..config.samples).map(move |s| (e, s)))
        .filter(|&(e, s)| table[e][s].is_none())
        .collect();
    let limit = budget.unwrap_or(usize::MAX).min(todo.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    for chunk in todo[..limit].chunks(CHECKPOINT_EVERY) {
        let done: Vec<(usize, usize, Outcome)> =
            pool.install(|| chunk.par_iter().map(|&(e, s)| (e, s, run_sample(config, e, s))).collect());
        if let Some(j) = log.as_mut() {
            j.append(&done)?;
        }
        for (e, s, o) in done {
            table[e][s] = Some(o);
        }
    }
    if limit < todo.len() {
        return Ok(None);
    }
    let outcomes = table.into_iter().map(|row| row.into_iter().map(|o| o.expect("all samples done")).collect()).collect();
    Ok(Some(aggregate(config, outcomes)))
}

pub fn run_survey(config: &SurveyConfig) -> Result<SurveyResult> {
    Ok(run_survey_with(config, None, None)?.expect("unbounded run completes"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalRow {
    pub eps: f64,
    pub in_domain: usize,
    pub ribbons: usize,
    pub fraction: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalResult {
    pub rows: Vec<ConditionalRow>,
    pub model: PendulumModel,
    pub band: f64,
    pub survey: SurveyResult,
}

fn strip_model(config: &SurveyConfig) -> Result<(SingleResonanceGeometry, PendulumModel)> {
    let Region::ResonanceStrip { k, k0, .. } = &config.region else {
        return Err(Error::Config("conditional ribbon probability needs a resonance strip region".into()));
    };
    let geometry = SingleResonanceGeometry::standard(k.clone(), *k0)?;
    let kk: f64 = k.iter().map(|&c| (c * c) as f64).sum();
    let base: Vec<f64> = k.iter().map(|&c| TAU * *k0 as f64 / kk * c as f64).collect();
    let model = reduce(&config.potential, &geometry, &base, 0.0)?;
    Ok((geometry, model))
}

/// Reduced pendulum coordinates of an initial condition.
pub fn reduced_point(geometry: &SingleResonanceGeometry, eps: f64, s: &PhaseState) -> Result<(f64, f64)> {
    Ok((geometry.lambda(&s.y)? / eps.sqrt(), dot_int(&geometry.k, &s.x)))
}

/// Ribbon fraction among strip samples whose reduced point lies in the
/// oscillatory domain below `E_sep − band·ΔE`.
pub fn conditional_ribbon_probability(config: &SurveyConfig, band: Option<f64>) -> Result<ConditionalResult> {
    check_conditional(config)?;
    conditional_from_survey(config, band, run_survey(config)?)
}

fn check_conditional(config: &SurveyConfig) -> Result<(SingleResonanceGeometry, PendulumModel)> {
    config.validate()?;
    let gm = strip_model(config)?;
    if config.eps.contains(&0.0) {
        return Err(Error::Config("conditional ribbon probability needs eps > 0".into()));
    }
    Ok(gm)
}

/// As [`conditional_ribbon_probability`] for an already computed survey of
/// `config`.
pub fn conditional_from_survey(config: &SurveyConfig, band: Option<f64>, survey: SurveyResult) -> Result<ConditionalResult> {
    let (geometry, model) = check_conditional(config)?;
    let band = band.unwrap_or(SEPARATRIX_BAND);
    let mut rows = Vec::new();
    for (e, &eps) in config.eps.iter().enumerate() {
        let (mut inside, mut ribbons) = (0, 0);
        for s in 0..config.samples {
            let ic = sample_initial(config, e, s);
            let (p, q) = reduced_point(&geometry, eps, &ic)?;
            if model.in_excised_domain(p, q, band) {
                inside += 1;
                if survey.outcomes[e][s] == Outcome::Ribbon {
                    ribbons += 1;
                }
            }
        }
        let fraction = if inside > 0 { ribbons as f64 / inside as f64 } else { 0.0 };
        rows.push(ConditionalRow { eps, in_domain: inside, ribbons, fraction, stderr: binomial_stderr(fraction, inside) });
    }
    Ok(ConditionalResult { rows, model, band, survey })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleResonanceRow {
    pub eps: f64,
    pub spots: usize,
    pub samples: usize,
    /// Spots fraction inside the box.
    pub fraction: f64,
    pub stderr: f64,
    /// Box volume relative to `(2π)ᴺ`.
    pub box_measure: f64,
    /// `fraction · box_measure`.
    pub unconditional: f64,
    pub unconditional_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleResonanceResult {
    pub rows: Vec<DoubleResonanceRow>,
    pub fit: Option<Fit>,
    pub survey: SurveyResult,
}

/// Spots statistics in the `√ε`-box about a double resonance, together with
/// the implied fraction of the full action torus and its scaling fit.
pub fn double_resonance_probability(config: &SurveyConfig) -> Result<DoubleResonanceResult> {
    double_box_scale(config)?;
    double_from_survey(config, run_survey(config)?)
}

fn double_box_scale(config: &SurveyConfig) -> Result<f64> {
    match &config.region {
        Region::DoubleResonanceBox { scale, .. } => Ok(*scale),
        _ => Err(Error::Config("double-resonance probability needs a double-resonance box region".into())),
    }
}

/// As [`double_resonance_probability`] for an already computed survey of
/// `config`.
pub fn double_from_survey(config: &SurveyConfig, survey: SurveyResult) -> Result<DoubleResonanceResult> {
    let scale = &double_box_scale(config)?;
    let dim = config.potential.dim() as i32;
    let rows: Vec<DoubleResonanceRow> = survey
        .rows
        .iter()
        .map(|r| {
            let spots = r.counts[Outcome::Spots as usize];
            let fraction = r.fractions[Outcome::Spots as usize];
            let stderr = r.stderr[Outcome::Spots as usize];
            let box_measure = (2.0 * scale * r.eps.sqrt() / TAU).powi(dim);
            DoubleResonanceRow {
                eps: r.eps,
                spots,
                samples: r.samples,
                fraction,
                stderr,
                box_measure,
                unconditional: fraction * box_measure,
                unconditional_stderr: stderr * box_measure,
            }
        })
        .collect();
    // ln(f·m) has the variance of ln f, so the fit runs on f and is shifted.
    let fit = fit_power_law(&rows.iter().map(|r| (r.eps, r.fraction, r.samples)).collect::<Vec<_>>()).map(|f| {
        let shift = dim as f64 * 0.5;
        let scale_term = dim as f64 * (2.0 * scale / TAU).ln();
        Fit { exponent: f.exponent + shift, intercept: f.intercept + scale_term, ..f }
    });
    Ok(DoubleResonanceResult { rows, fit, survey })
}
