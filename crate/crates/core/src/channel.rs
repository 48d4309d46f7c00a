//! System configuration, channel generation and effective-gain evaluation for
//! a single-antenna AP serving `K` single-antenna users through an IRS whose
//! elements are grouped into sub-surfaces sharing one discrete phase shift.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_watts};

/// Default cap on the number of phase configurations any enumeration may visit.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 20;

/// Scalar system parameters. Powers are linear watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Total number of IRS elements `M_R`. Zero means no IRS.
    pub elements: usize,
    /// Elements per sub-surface `B`.
    pub subsurface_size: usize,
    /// Phase resolution in bits `b`; `L = 2^b` levels.
    pub phase_bits: u32,
    /// Maximum transmit power in watts.
    pub p_max: f64,
    /// Noise power in watts.
    pub noise: f64,
    /// Number of IRS reconfiguration blocks `N`.
    pub blocks: usize,
    /// Maximum number of configurations an enumeration may visit.
    pub enumeration_budget: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            users: 2,
            elements: 32,
            subsurface_size: 4,
            phase_bits: 1,
            p_max: dbm_to_watts(10.0),
            noise: dbm_to_watts(-80.0),
            blocks: 1,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

impl SystemConfig {
    /// Builds a configuration from dBm-valued powers and validates it.
    pub fn from_dbm(
        users: usize,
        elements: usize,
        subsurface_size: usize,
        phase_bits: u32,
        p_max_dbm: f64,
        noise_dbm: f64,
        blocks: usize,
    ) -> Result<Self> {
        let config = Self {
            users,
            elements,
            subsurface_size,
            phase_bits,
            p_max: dbm_to_watts(p_max_dbm),
            noise: dbm_to_watts(noise_dbm),
            blocks,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        if self.subsurface_size == 0 {
            return Err(Error::InvalidConfig("sub-surface size must be positive".into()));
        }
        if self.elements % self.subsurface_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} elements cannot be split into sub-surfaces of {}",
                self.elements, self.subsurface_size
            )));
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(Error::InvalidConfig(format!(
                "phase resolution of {} bits is outside 1..=16",
                self.phase_bits
            )));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::InvalidConfig("maximum power must be positive".into()));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidConfig("noise power must be positive".into()));
        }
        if self.blocks == 0 {
            return Err(Error::InvalidConfig("at least one time block is required".into()));
        }
        Ok(())
    }

    /// Number of sub-surfaces `M = M_R / B`.
    pub fn subsurfaces(&self) -> usize {
        self.elements / self.subsurface_size
    }

    /// Number of phase levels `L = 2^b`.
    pub fn phase_levels(&self) -> usize {
        1usize << self.phase_bits
    }

    /// `L^M`, saturating into `u128`.
    pub fn phase_config_count(&self) -> u128 {
        pow_u128(self.phase_levels() as u128, self.subsurfaces() as u32)
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }
}

pub(crate) fn pow_u128(base: u128, exp: u32) -> u128 {
    base.checked_pow(exp).unwrap_or(u128::MAX)
}

/// Large-scale propagation parameters and geometry. The AP sits at the
/// origin, the IRS at `(irs_x, irs_y, 0)` and user `k` at `(user_x[k], 0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path loss at the reference distance, linear.
    pub rho0: f64,
    /// Reference distance in meters.
    pub d0: f64,
    pub exponent_ap_user: f64,
    pub exponent_ap_irs: f64,
    pub exponent_irs_user: f64,
    /// Rician factor of the AP-IRS link, linear. `f64::INFINITY` is pure LoS.
    pub rician_ap_irs: f64,
    /// Rician factor of the IRS-user links, linear.
    pub rician_irs_user: f64,
    pub irs_x: f64,
    pub irs_y: f64,
    pub user_x: Vec<f64>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rho0: db_to_linear(-30.0),
            d0: 1.0,
            exponent_ap_user: 3.5,
            exponent_ap_irs: 2.2,
            exponent_irs_user: 2.8,
            rician_ap_irs: db_to_linear(3.0),
            rician_irs_user: db_to_linear(3.0),
            irs_x: 49.0,
            irs_y: 1.0,
            user_x: vec![43.0, 50.0],
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rho0) || !positive(self.d0) {
            return Err(Error::InvalidConfig(
                "reference path loss and distance must be positive".into(),
            ));
        }
        for (name, e) in [
            ("ap-user", self.exponent_ap_user),
            ("ap-irs", self.exponent_ap_irs),
            ("irs-user", self.exponent_irs_user),
        ] {
            if !positive(e) {
                return Err(Error::InvalidConfig(format!("{name} exponent must be positive")));
            }
        }
        if !(self.rician_ap_irs >= 0.0) || !(self.rician_irs_user >= 0.0) {
            return Err(Error::InvalidConfig("Rician factors must be non-negative".into()));
        }
        if !positive(self.ap_irs_distance()) {
            return Err(Error::InvalidConfig("AP-IRS distance must be positive".into()));
        }
        for k in 0..self.user_x.len() {
            if !positive(self.ap_user_distance(k)) || !positive(self.irs_user_distance(k)) {
                return Err(Error::InvalidConfig(format!("user {k} has a zero-length link")));
            }
        }
        Ok(())
    }

    pub fn ap_user_distance(&self, k: usize) -> f64 {
        self.user_x[k].abs()
    }

    pub fn ap_irs_distance(&self) -> f64 {
        self.irs_x.hypot(self.irs_y)
    }

    pub fn irs_user_distance(&self, k: usize) -> f64 {
        (self.user_x[k] - self.irs_x).hypot(self.irs_y)
    }

    /// Linear path loss `rho0 (d / d0)^-exponent`.
    pub fn path_loss(&self, distance: f64, exponent: f64) -> Result<f64> {
        path_loss(distance, exponent, self)
    }

    /// Composite large-scale loss of one reflected element, AP-IRS-user `k`.
    pub fn reflected_path_loss(&self, k: usize) -> Result<f64> {
        Ok(self.path_loss(self.ap_irs_distance(), self.exponent_ap_irs)?
            * self.path_loss(self.irs_user_distance(k), self.exponent_irs_user)?)
    }
}

/// Linear path loss `rho0 (d / d0)^-exponent`.
pub fn path_loss(distance: f64, exponent: f64, params: &ChannelParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {distance}")));
    }
    Ok(params.rho0 * (distance / params.d0).powf(-exponent))
}

/// One coherence-block channel realization. The IRS vectors are stored per
/// element; elements `m*B .. (m+1)*B` form sub-surface `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    direct: Vec<Complex64>,
    ap_irs: Vec<Complex64>,
    irs_user: Vec<Vec<Complex64>>,
    subsurface_size: usize,
}

impl ChannelRealization {
    pub fn new(
        direct: Vec<Complex64>,
        ap_irs: Vec<Complex64>,
        irs_user: Vec<Vec<Complex64>>,
        subsurface_size: usize,
    ) -> Result<Self> {
        if direct.len() != irs_user.len() {
            return Err(Error::InvalidConfig(format!(
                "{} direct links but {} IRS-user vectors",
                direct.len(),
                irs_user.len()
            )));
        }
        if subsurface_size == 0 || ap_irs.len() % subsurface_size != 0 {
            return Err(Error::InvalidConfig(
                "element count is not a multiple of the sub-surface size".into(),
            ));
        }
        if irs_user.iter().any(|g| g.len() != ap_irs.len()) {
            return Err(Error::InvalidConfig("IRS vector lengths differ between links".into()));
        }
        let finite = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
        if !direct.iter().all(finite)
            || !ap_irs.iter().all(finite)
            || !irs_user.iter().flatten().all(finite)
        {
            return Err(Error::NonFinite("channel coefficient".into()));
        }
        Ok(Self { direct, ap_irs, irs_user, subsurface_size })
    }

    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn elements(&self) -> usize {
        self.ap_irs.len()
    }

    pub fn subsurfaces(&self) -> usize {
        self.ap_irs.len() / self.subsurface_size
    }

    pub fn direct(&self) -> &[Complex64] {
        &self.direct
    }

    pub fn ap_irs(&self) -> &[Complex64] {
        &self.ap_irs
    }

    pub fn irs_user(&self, k: usize) -> &[Complex64] {
        &self.irs_user[k]
    }

    /// Copy of this realization with the IRS removed.
    pub fn without_irs(&self) -> Self {
        Self {
            direct: self.direct.clone(),
            ap_irs: Vec::new(),
            irs_user: vec![Vec::new(); self.direct.len()],
            subsurface_size: self.subsurface_size,
        }
    }

    /// Per-sub-surface cascaded coefficients `sum_{e in m} conj(g_e) v_e` for
    /// user `k`, so that `g^H Theta v = sum_m c_m e^{j theta_m}`.
    pub fn cascade(&self, k: usize) -> Vec<Complex64> {
        self.irs_user[k]
            .chunks(self.subsurface_size)
            .zip(self.ap_irs.chunks(self.subsurface_size))
            .map(|(g, v)| g.iter().zip(v).map(|(g, v)| g.conj() * v).sum())
            .collect()
    }

    fn check_dims(&self, config: &SystemConfig) -> Result<()> {
        if self.users() != config.users
            || self.elements() != config.elements
            || self.subsurface_size != config.subsurface_size
        {
            return Err(Error::InvalidConfig(format!(
                "realization ({} users, {} elements, B={}) does not match config ({}, {}, B={})",
                self.users(),
                self.elements(),
                self.subsurface_size,
                config.users,
                config.elements,
                config.subsurface_size
            )));
        }
        Ok(())
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Half-wavelength uniform linear array response along the x axis.
fn ula_steering(elements: usize, cos_angle: f64) -> Vec<Complex64> {
    (0..elements)
        .map(|e| Complex64::from_polar(1.0, PI * e as f64 * cos_angle))
        .collect()
}

/// `(sqrt(K/(K+1)), sqrt(1/(K+1)))`, with `K = inf` handled as pure LoS.
fn rician_weights(factor: f64) -> (f64, f64) {
    if factor.is_infinite() {
        (1.0, 0.0)
    } else {
        ((factor / (factor + 1.0)).sqrt(), (1.0 / (factor + 1.0)).sqrt())
    }
}

/// Draws one realization: Rayleigh direct links and Rician AP-IRS / IRS-user
/// links. Identical seeds give bitwise-identical realizations.
///
/// The direct links, the AP-IRS link and each IRS-user link use separate
/// random streams, so a surface with fewer elements sees exactly the first
/// elements of a larger one under the same seed.
pub fn sample_channels(
    config: &SystemConfig,
    params: &ChannelParams,
    seed: u64,
) -> Result<ChannelRealization> {
    config.validate()?;
    params.validate()?;
    if params.user_x.len() != config.users {
        return Err(Error::InvalidConfig(format!(
            "{} user positions for {} users",
            params.user_x.len(),
            config.users
        )));
    }
    let stream = |id: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        rng
    };
    let mut rng = stream(0);
    let k_users = config.users;
    let elements = config.elements;

    let direct = (0..k_users)
        .map(|k| {
            let pl = params.path_loss(params.ap_user_distance(k), params.exponent_ap_user)?;
            Ok(complex_normal(&mut rng) * pl.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;

    let d_ai = params.ap_irs_distance();
    let pl_ai = params.path_loss(d_ai, params.exponent_ap_irs)?.sqrt();
    let (los_ai, nlos_ai) = rician_weights(params.rician_ap_irs);
    let mut rng = stream(1);
    let steer_ai = ula_steering(elements, -params.irs_x / d_ai);
    let ap_irs = steer_ai
        .iter()
        .map(|a| pl_ai * (los_ai * a + nlos_ai * complex_normal(&mut rng)))
        .collect();

    let (los_iu, nlos_iu) = rician_weights(params.rician_irs_user);
    let irs_user = (0..k_users)
        .map(|k| {
            let d = params.irs_user_distance(k);
            let pl = params.path_loss(d, params.exponent_irs_user)?.sqrt();
            let steer = ula_steering(elements, (params.user_x[k] - params.irs_x) / d);
            let mut rng = stream(2 + k as u64);
            Ok(steer
                .iter()
                .map(|a| pl * (los_iu * a + nlos_iu * complex_normal(&mut rng)))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    ChannelRealization::new(direct, ap_irs, irs_user, config.subsurface_size)
}

/// One discrete IRS reflection matrix as `M` phase indices in `[0, L)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseConfig {
    idx: Vec<u32>,
    levels: u32,
}

impl PhaseConfig {
    pub fn new(idx: Vec<u32>, levels: u32) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidConfig("phase level count must be positive".into()));
        }
        if let Some(bad) = idx.iter().find(|&&i| i >= levels) {
            return Err(Error::Domain(format!("phase index {bad} outside [0, {levels})")));
        }
        Ok(Self { idx, levels })
    }

    /// Configuration number `n` of the lexicographic enumeration (first
    /// sub-surface most significant).
    pub fn from_ordinal(mut ordinal: u64, subsurfaces: usize, levels: u32) -> Self {
        let mut idx = vec![0u32; subsurfaces];
        for slot in idx.iter_mut().rev() {
            *slot = (ordinal % levels as u64) as u32;
            ordinal /= levels as u64;
        }
        Self { idx, levels }
    }

    pub fn ordinal(&self) -> u64 {
        self.idx
            .iter()
            .fold(0u64, |acc, &i| acc * self.levels as u64 + i as u64)
    }

    pub fn indices(&self) -> &[u32] {
        &self.idx
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Phase of sub-surface `m` in radians.
    pub fn phase(&self, m: usize) -> f64 {
        2.0 * PI * self.idx[m] as f64 / self.levels as f64
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.idx.len()).map(|m| self.phase(m)).collect()
    }
}

/// `|h_k + g_k^H Theta v|^2` for arbitrary (continuous) sub-surface phases.
pub fn effective_gain_with_phases(ch: &ChannelRealization, phases: &[f64], k: usize) -> f64 {
    let reflected: Complex64 = ch
        .cascade(k)
        .iter()
        .zip(phases)
        .map(|(c, &theta)| c * Complex64::from_polar(1.0, theta))
        .sum();
    (ch.direct[k] + reflected).norm_sqr()
}

/// Combined power gain of user `k` under a discrete configuration.
pub fn effective_gain(ch: &ChannelRealization, theta: &PhaseConfig, k: usize) -> Result<f64> {
    if k >= ch.users() {
        return Err(Error::Domain(format!("user {k} out of range")));
    }
    if theta.indices().len() != ch.subsurfaces() {
        return Err(Error::Domain(format!(
            "configuration has {} phases for {} sub-surfaces",
            theta.indices().len(),
            ch.subsurfaces()
        )));
    }
    Ok(effective_gain_with_phases(ch, &theta.phases(), k))
}

fn check_budget(config: &SystemConfig, required: u128) -> Result<()> {
    if required > config.enumeration_budget as u128 {
        return Err(Error::BudgetExceeded { required, budget: config.enumeration_budget });
    }
    Ok(())
}

/// Iterator over all `L^M` configurations in lexicographic order.
#[derive(Debug, Clone)]
pub struct PhaseConfigIter {
    next: u64,
    total: u64,
    subsurfaces: usize,
    levels: u32,
}

impl PhaseConfigIter {
    pub fn total(&self) -> u64 {
        self.total
    }
}

impl Iterator for PhaseConfigIter {
    type Item = PhaseConfig;

    fn next(&mut self) -> Option<PhaseConfig> {
        if self.next >= self.total {
            return None;
        }
        let item = PhaseConfig::from_ordinal(self.next, self.subsurfaces, self.levels);
        self.next += 1;
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for PhaseConfigIter {}

/// All discrete configurations, refusing when `L^M` exceeds the budget.
pub fn enumerate_phase_configs(config: &SystemConfig) -> Result<PhaseConfigIter> {
    config.validate()?;
    let required = config.phase_config_count();
    check_budget(config, required)?;
    Ok(PhaseConfigIter {
        next: 0,
        total: required as u64,
        subsurfaces: config.subsurfaces(),
        levels: config.phase_levels() as u32,
    })
}

/// SIC decoding order: users sorted by ascending gain, ties by user index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodingOrder {
    /// Users in the order their signals are decoded (weakest first).
    sequence: Vec<usize>,
    /// `position[k]`: zero-based decoding position of user `k`.
    position: Vec<usize>,
}

impl DecodingOrder {
    pub fn from_sequence(sequence: Vec<usize>) -> Result<Self> {
        let mut position = vec![usize::MAX; sequence.len()];
        for (pos, &k) in sequence.iter().enumerate() {
            if k >= sequence.len() || position[k] != usize::MAX {
                return Err(Error::Domain(format!("{sequence:?} is not a permutation")));
            }
            position[k] = pos;
        }
        Ok(Self { sequence, position })
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn position(&self, k: usize) -> usize {
        self.position[k]
    }

    /// One-based decoding positions, `mu_k`.
    pub fn mu(&self) -> Vec<usize> {
        self.position.iter().map(|p| p + 1).collect()
    }

    /// True when every user decoded earlier has a gain no larger than every
    /// user decoded later.
    pub fn is_consistent_with(&self, gains: &[f64]) -> bool {
        self.sequence.windows(2).all(|w| gains[w[0]] <= gains[w[1]])
    }
}

/// Decoding order induced by the gains.
pub fn decoding_order(gains: &[f64]) -> DecodingOrder {
    let mut sequence: Vec<usize> = (0..gains.len()).collect();
    sequence.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
    DecodingOrder::from_sequence(sequence).expect("sorted indices form a permutation")
}

/// Noise-normalized gains `H_k(Theta) / sigma^2` (units 1/W) for every
/// configuration in lexicographic order.
#[derive(Debug, Clone)]
pub struct GainTable {
    users: usize,
    subsurfaces: usize,
    levels: u32,
    gains: Vec<f64>,
}

impl GainTable {
    pub fn build(ch: &ChannelRealization, config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        ch.check_dims(config)?;
        let count = enumerate_phase_configs(config)?.total() as usize;
        let users = config.users;
        let m = config.subsurfaces();
        let levels = config.phase_levels();
        let phasors: Vec<Complex64> = (0..levels)
            .map(|l| Complex64::from_polar(1.0, 2.0 * PI * l as f64 / levels as f64))
            .collect();
        // rotated[k][m][l] = c_{m,k} e^{j 2 pi l / L}
        let rotated: Vec<Vec<Vec<Complex64>>> = (0..users)
            .map(|k| {
                ch.cascade(k)
                    .iter()
                    .map(|c| phasors.iter().map(|p| c * p).collect())
                    .collect()
            })
            .collect();
        let mut gains = vec![0.0; count * users];
        let mut digits = vec![0usize; m];
        for n in 0..count {
            for k in 0..users {
                let mut acc = ch.direct[k];
                for (mm, &d) in digits.iter().enumerate() {
                    acc += rotated[k][mm][d];
                }
                gains[n * users + k] = acc.norm_sqr() / config.noise;
            }
            for slot in digits.iter_mut().rev() {
                *slot += 1;
                if *slot < levels {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self { users, subsurfaces: m, levels: levels as u32, gains })
    }

    /// Table with explicit normalized gains (one row per configuration).
    pub fn from_rows(rows: Vec<Vec<f64>>, subsurfaces: usize, levels: u32) -> Result<Self> {
        let users = rows.first().map_or(0, Vec::len);
        if users == 0 || rows.iter().any(|r| r.len() != users) {
            return Err(Error::InvalidConfig("gain rows must be non-empty and equal length".into()));
        }
        if pow_u128(levels as u128, subsurfaces as u32) != rows.len() as u128 {
            return Err(Error::InvalidConfig("row count must equal L^M".into()));
        }
        Ok(Self { users, subsurfaces, levels, gains: rows.concat() })
    }

    pub fn configs(&self) -> usize {
        self.gains.len() / self.users
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Normalized gains of all users under configuration `n`.
    pub fn row(&self, n: usize) -> &[f64] {
        &self.gains[n * self.users..(n + 1) * self.users]
    }

    pub fn phase_config(&self, n: usize) -> PhaseConfig {
        PhaseConfig::from_ordinal(n as u64, self.subsurfaces, self.levels)
    }

    /// Configuration maximizing user `k`'s gain, lowest ordinal on ties.
    pub fn best_for_user(&self, k: usize) -> (usize, f64) {
        let mut best = (0, self.row(0)[k]);
        for n in 1..self.configs() {
            let g = self.row(n)[k];
            if g > best.1 {
                best = (n, g);
            }
        }
        best
    }

    pub fn max_gain(&self) -> f64 {
        self.gains.iter().cloned().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::linear_to_db;

    fn unit(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tiny_config(users: usize, elements: usize, bits: u32) -> SystemConfig {
        SystemConfig {
            users,
            elements,
            subsurface_size: 1,
            phase_bits: bits,
            p_max: 1.0,
            noise: 1.0,
            blocks: 1,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }

    #[test]
    fn smaller_surfaces_are_prefixes_of_larger_ones() {
        let small = SystemConfig { elements: 16, ..SystemConfig::default() };
        let large = SystemConfig { elements: 32, ..SystemConfig::default() };
        let params = ChannelParams::default();
        let a = sample_channels(&small, &params, 4).unwrap();
        let b = sample_channels(&large, &params, 4).unwrap();
        assert_eq!(a.direct(), b.direct());
        assert_eq!(a.ap_irs(), &b.ap_irs()[..16]);
        for k in 0..2 {
            assert_eq!(a.irs_user(k), &b.irs_user(k)[..16]);
        }
    }

    #[test]
    fn path_loss_reference_values() {
        let params = ChannelParams::default();
        let at_ref = path_loss(1.0, 2.7, &params).unwrap();
        assert!((at_ref - 1e-3).abs() < 1e-15);
        let user2 = path_loss(50.0, 3.5, &params).unwrap();
        assert!((linear_to_db(user2) + 89.46).abs() < 0.01);
        assert!(matches!(path_loss(0.0, 3.5, &params), Err(Error::Domain(_))));
        assert!(matches!(path_loss(-2.0, 3.5, &params), Err(Error::Domain(_))));
    }

    #[test]
    fn config_rejects_ungroupable_elements() {
        let mut c = SystemConfig::default();
        c.elements = 30;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        c.elements = 0;
        assert!(c.validate().is_ok());
        assert_eq!(c.phase_config_count(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let config = SystemConfig::default();
        let params = ChannelParams::default();
        let a = sample_channels(&config, &params, 7).unwrap();
        let b = sample_channels(&config, &params, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_channels(&config, &params, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pure_los_has_deterministic_magnitude() {
        let config = SystemConfig::default();
        let params = ChannelParams { rician_ap_irs: f64::INFINITY, ..ChannelParams::default() };
        let ch = sample_channels(&config, &params, 3).unwrap();
        let expected = params.path_loss(params.ap_irs_distance(), 2.2).unwrap().sqrt();
        for v in ch.ap_irs() {
            assert!((v.norm() - expected).abs() < 1e-15 * expected.max(1.0));
        }
    }

    #[test]
    fn no_irs_reduces_to_direct_gain() {
        let ch = ChannelRealization::new(
            vec![unit(0.3, -0.4)],
            vec![unit(1.0, 0.0), unit(0.0, 1.0)],
            vec![vec![unit(0.0, 0.0); 2]],
            1,
        )
        .unwrap();
        let theta = PhaseConfig::new(vec![1, 0], 2).unwrap();
        assert!((effective_gain(&ch, &theta, 0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aligned_and_antialigned_single_element() {
        let one = unit(1.0, 0.0);
        let ch = ChannelRealization::new(vec![one], vec![one], vec![vec![one]], 1).unwrap();
        let gains: Vec<f64> = enumerate_phase_configs(&tiny_config(1, 1, 1))
            .unwrap()
            .map(|t| effective_gain(&ch, &t, 0).unwrap())
            .collect();
        assert!((gains[0] - 4.0).abs() < 1e-12);
        assert!(gains[1].abs() < 1e-12);
    }

    #[test]
    fn global_rotation_leaves_gain_unchanged() {
        let config = SystemConfig { users: 2, elements: 8, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), 11).unwrap();
        let rot = Complex64::from_polar(1.0, 0.731);
        // |h + g^H Theta v| with h -> h e^{ja}, g -> g e^{-ja} (so g^H picks up e^{ja})
        let rotated = ChannelRealization::new(
            ch.direct().iter().map(|h| h * rot).collect(),
            ch.ap_irs().to_vec(),
            (0..2).map(|k| ch.irs_user(k).iter().map(|g| g * rot.conj()).collect()).collect(),
            4,
        )
        .unwrap();
        for theta in enumerate_phase_configs(&config).unwrap() {
            for k in 0..2 {
                let a = effective_gain(&ch, &theta, k).unwrap();
                let b = effective_gain(&rotated, &theta, k).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.max(1e-30));
            }
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        let two: Vec<_> = enumerate_phase_configs(&tiny_config(1, 1, 1)).unwrap().collect();
        assert_eq!(two.iter().map(|t| t.indices().to_vec()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        assert_eq!(enumerate_phase_configs(&tiny_config(1, 2, 2)).unwrap().count(), 16);
        let eight: Vec<_> = enumerate_phase_configs(&tiny_config(1, 3, 1)).unwrap().collect();
        assert_eq!(eight.len(), 8);
        let mut dedup = eight.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 8);
        assert!(eight.windows(2).all(|w| w[0] < w[1]));
        for (n, t) in eight.iter().enumerate() {
            assert_eq!(t.ordinal(), n as u64);
        }
    }

    #[test]
    fn enumeration_budget_refusal_reports_count() {
        let mut c = tiny_config(1, 21, 1);
        match enumerate_phase_configs(&c) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 1 << 21);
                assert_eq!(budget, 1 << 20);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
        c.enumeration_budget = 1 << 21;
        assert_eq!(enumerate_phase_configs(&c).unwrap().total(), 1 << 21);
    }

    #[test]
    fn decoding_order_examples() {
        assert_eq!(decoding_order(&[1.0, 2.0]).mu(), vec![1, 2]);
        assert_eq!(decoding_order(&[2.0, 1.0]).mu(), vec![2, 1]);
        assert_eq!(decoding_order(&[1.0, 1.0]).mu(), vec![1, 2]);
        assert!(DecodingOrder::from_sequence(vec![0, 0]).is_err());
    }

    #[test]
    fn induced_orders_respect_sic_condition() {
        let config = SystemConfig { users: 3, elements: 12, ..SystemConfig::default() };
        let params = ChannelParams { user_x: vec![30.0, 43.0, 50.0], ..ChannelParams::default() };
        let ch = sample_channels(&config, &params, 5).unwrap();
        let table = GainTable::build(&ch, &config).unwrap();
        for n in 0..table.configs() {
            let g = table.row(n);
            let order = decoding_order(g);
            assert!(order.is_consistent_with(g));
            let seq: Vec<f64> = order.sequence().iter().map(|&k| g[k]).collect();
            assert!(seq.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn gain_table_matches_direct_evaluation() {
        let config = SystemConfig { users: 2, elements: 12, phase_bits: 2, ..SystemConfig::default() };
        let ch = sample_channels(&config, &ChannelParams::default(), 9).unwrap();
        let table = GainTable::build(&ch, &config).unwrap();
        assert_eq!(table.configs(), 64);
        for (n, theta) in enumerate_phase_configs(&config).unwrap().enumerate() {
            for k in 0..2 {
                let direct = effective_gain(&ch, &theta, k).unwrap() / config.noise;
                let tab = table.row(n)[k];
                assert!((direct - tab).abs() <= 1e-10 * direct);
            }
        }
    }

    #[test]
    fn mismatched_realization_is_rejected() {
        let config = SystemConfig::default();
        let ch = sample_channels(&config, &ChannelParams::default(), 1).unwrap();
        let other = SystemConfig { elements: 16, ..config };
        assert!(GainTable::build(&ch, &other).is_err());
    }
}
