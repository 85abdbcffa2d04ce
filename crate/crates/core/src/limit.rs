//! The limit problem `-Δu + νu = u^p` on the whole space: its unique positive
//! radial ground state, the ground-state energy, and the constants that
//! calibrate every concentration-energy prediction.

use serde::Serialize;
use thiserror::Error;

/// Parameters of the limit problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitProblemParams {
    pub dim: usize,
    pub p: f64,
    pub nu: f64,
}

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("invalid limit problem: {0}")]
    InvalidParams(String),
    #[error("no shooting bracket: {0}")]
    NoBracket(String),
    #[error("bisection stalled above tolerance {tol}")]
    ToleranceNotMet { tol: f64 },
    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),
    #[error("concentration energy undefined at nonpositive potential value {0}")]
    NonpositivePotential(f64),
}

impl LimitProblemParams {
    pub fn new(dim: usize, p: f64, nu: f64) -> Result<Self, LimitError> {
        if dim == 0 {
            return Err(LimitError::InvalidParams("dimension must be positive".into()));
        }
        if !(p > 1.0) {
            return Err(LimitError::InvalidParams(format!("exponent p = {p} must exceed 1")));
        }
        // subcriticality: 1/p > (N-2)/(N+2)
        let n = dim as f64;
        if 1.0 / p <= (n - 2.0) / (n + 2.0) {
            return Err(LimitError::InvalidParams(format!(
                "p = {p} violates subcriticality 1/p > (N-2)/(N+2) for N = {dim}"
            )));
        }
        if !(nu > 0.0) {
            return Err(LimitError::InvalidParams(format!("frequency nu = {nu} must be positive")));
        }
        Ok(Self { dim, p, nu })
    }

    /// Exponent of the scaling law `b_nu = b_1 nu^theta`, with
    /// `theta = (p+1)/(p-1) - N/2`.
    pub fn scaling_exponent(&self) -> f64 {
        (self.p + 1.0) / (self.p - 1.0) - self.dim as f64 / 2.0
    }
}

/// Radial ground-state profile on a uniform grid `r_i = i*step`,
/// together with its variational energy.
#[derive(Debug, Clone, Serialize)]
pub struct GroundStateProfile {
    pub params: LimitProblemParams,
    pub step: f64,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// Central value `u(0)`, the shooting parameter.
    pub center_value: f64,
    /// Ground-state energy `b_nu`.
    pub energy: f64,
    pub r_max: f64,
    /// Relative Nehari identity residual of the quadrature.
    pub nehari_residual: f64,
    /// Set when integration hit the hard radius cap before the decay floor.
    pub truncated_early: bool,
}

impl GroundStateProfile {
    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    /// Linear interpolation of the radial profile; zero beyond `r_max`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let t = r / self.step;
        let i = t.floor() as usize;
        if i + 1 >= self.values.len() {
            return 0.0;
        }
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Derived energy constants: the Sobolev-type constant `S_{p+1}` and the
/// conjugate exponent `r` with `1/r = 1/2 - 1/(p+1)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyConstants {
    pub sobolev: f64,
    pub conjugate: f64,
    pub base_energy: f64,
    pub dim: usize,
    pub p: f64,
}

const DECAY_FLOOR: f64 = 1e-12;
/// Hand the trajectory to the asymptotic tail once it drops this low;
/// below that the bisection error dominates the shot values.
const GRAFT_LEVEL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
enum ShotKind {
    /// `u` crossed zero: initial value too large.
    Overshoot,
    /// `u'` turned nonnegative while `u > graft level`: initial value too small.
    Undershoot,
    /// reached the graft level while still decreasing.
    Decayed,
    /// ran past the radius cap.
    RanOut,
}

/// Right-hand side of the first-order system for `u'' + (N-1)/r u' = nu u - u_+^p`.
#[inline]
fn rhs(dim: usize, p: f64, nu: f64, r: f64, u: f64, v: f64) -> (f64, f64) {
    let power = if u > 0.0 { u.powf(p) } else { 0.0 };
    let mut dv = nu * u - power;
    if dim > 1 {
        dv -= (dim as f64 - 1.0) / r * v;
    }
    (v, dv)
}

struct Shot {
    kind: ShotKind,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// Fixed-step RK4 integration from the regularized origin expansion
/// `u(r) = a + (nu a - a^p) r^2 / (2N)`. Integration stops once `u` drops
/// below `stop_level`: classification runs ride the trajectory to the decay
/// floor, the recorded run hands over to the asymptotic tail earlier.
fn integrate(
    params: &LimitProblemParams,
    a: f64,
    step: f64,
    r_cap: f64,
    stop_level: f64,
    record: bool,
) -> Shot {
    let (dim, p, nu) = (params.dim, params.p, params.nu);
    let c = (nu * a - a.powf(p)) / (2.0 * dim as f64);
    let mut u = a + c * step * step;
    let mut v = 2.0 * c * step;
    let mut r = step;
    let mut values = Vec::new();
    let mut derivs = Vec::new();
    if record {
        values.push(a);
        derivs.push(0.0);
        values.push(u);
        derivs.push(v);
    }
    loop {
        let (k1u, k1v) = rhs(dim, p, nu, r, u, v);
        let (k2u, k2v) = rhs(dim, p, nu, r + step / 2.0, u + step / 2.0 * k1u, v + step / 2.0 * k1v);
        let (k3u, k3v) = rhs(dim, p, nu, r + step / 2.0, u + step / 2.0 * k2u, v + step / 2.0 * k2v);
        let (k4u, k4v) = rhs(dim, p, nu, r + step, u + step * k3u, v + step * k3v);
        u += step / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        r += step;
        if record {
            values.push(u);
            derivs.push(v);
        }
        if u <= 0.0 {
            return Shot { kind: ShotKind::Overshoot, values, derivs };
        }
        if v >= 0.0 {
            let kind = if u < stop_level { ShotKind::Decayed } else { ShotKind::Undershoot };
            return Shot { kind, values, derivs };
        }
        if u < stop_level {
            return Shot { kind: ShotKind::Decayed, values, derivs };
        }
        if r > r_cap {
            return Shot { kind: ShotKind::RanOut, values, derivs };
        }
    }
}

/// Compute the radial ground state of `-Δu + νu = u^p` by bisection on the
/// central value. Trajectories that cross zero started too high; trajectories
/// that turn back upward started too low (they lack the energy to reach zero).
pub fn shoot_ground_state(
    params: &LimitProblemParams,
    tol: f64,
) -> Result<GroundStateProfile, LimitError> {
    if !(tol > 0.0) {
        return Err(LimitError::InvalidParams(format!("tolerance {tol} must be positive")));
    }
    let nu = params.nu;
    let sqrt_nu = nu.sqrt();
    let step = 1e-3 / sqrt_nu.max(1.0);
    let r_cap = 200.0 / sqrt_nu;

    // The zero of the potential energy F(a) = -nu a^2/2 + a^{p+1}/(p+1);
    // any start below it lacks the energy to ever reach u = 0.
    let a_star = ((params.p + 1.0) * nu / 2.0).powf(1.0 / (params.p - 1.0));
    let mut a_lo = 0.9 * a_star;
    match integrate(params, a_lo, step, r_cap, DECAY_FLOOR, false).kind {
        ShotKind::Undershoot => {}
        kind => {
            return Err(LimitError::NoBracket(format!(
                "expected undershoot at a = {a_lo}, got {kind:?}"
            )))
        }
    }
    let mut a_hi = 1.1 * a_star;
    let mut bracketed = false;
    for _ in 0..200 {
        if integrate(params, a_hi, step, r_cap, DECAY_FLOOR, false).kind == ShotKind::Overshoot {
            bracketed = true;
            break;
        }
        a_hi *= 1.3;
    }
    if !bracketed {
        return Err(LimitError::NoBracket(format!("no overshoot up to a = {a_hi}")));
    }

    let mut iterations = 0usize;
    while a_hi - a_lo > tol * a_hi {
        iterations += 1;
        if iterations > 200 {
            return Err(LimitError::ToleranceNotMet { tol });
        }
        let mid = 0.5 * (a_lo + a_hi);
        match integrate(params, mid, step, r_cap, DECAY_FLOOR, false).kind {
            ShotKind::Overshoot => a_hi = mid,
            _ => a_lo = mid,
        }
    }
    let a = 0.5 * (a_lo + a_hi);

    let shot = integrate(params, a, step, r_cap, GRAFT_LEVEL, true);
    let truncated_early = shot.kind == ShotKind::RanOut;
    let mut values = shot.values;
    let mut derivs = shot.derivs;
    // Trim any non-decreasing trailing points (bisection-width noise).
    while values.len() > 2 && (derivs[values.len() - 1] >= 0.0 || values[values.len() - 1] <= 0.0) {
        values.pop();
        derivs.pop();
    }
    // Graft the far-field asymptotics u ~ r^{-(N-1)/2} e^{-sqrt(nu) r}
    // to carry the profile down to the decay floor.
    let half = (params.dim as f64 - 1.0) / 2.0;
    let envelope = |r: f64| -> f64 { r.powf(-half) * (-sqrt_nu * r).exp() };
    let graft_index = values.len() - 1;
    let r_graft = graft_index as f64 * step;
    let u_graft = values[graft_index];
    let env_graft = envelope(r_graft);
    let mut r = r_graft;
    let mut u = u_graft;
    while u > DECAY_FLOOR {
        r += step;
        u = u_graft * envelope(r) / env_graft;
        values.push(u);
        derivs.push(u * (-sqrt_nu - half / r));
    }

    let r_max = (values.len() - 1) as f64 * step;
    let (energy, nehari_residual) = profile_energy(params, &values, &derivs, step);
    Ok(GroundStateProfile {
        params: *params,
        step,
        values,
        derivs,
        center_value: a,
        energy,
        r_max,
        nehari_residual,
        truncated_early,
    })
}

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) / gamma_half(dim)
}

/// Γ(N/2) for integer N ≥ 1.
fn gamma_half(dim: usize) -> f64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    match dim {
        1 => sqrt_pi,
        2 => 1.0,
        n => (n as f64 / 2.0 - 1.0) * gamma_half(n - 2),
    }
}

/// Composite-Simpson quadrature on a uniform grid (trapezoid patch on the
/// final interval when the point count is even).
pub fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    if n.is_multiple_of(2) {
        return simpson(&y[..n - 1], h) + 0.5 * h * (y[n - 2] + y[n - 1]);
    }
    let mut sum = y[0] + y[n - 1];
    for (i, &v) in y.iter().enumerate().take(n - 1).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    h / 3.0 * sum
}

fn profile_energy(
    params: &LimitProblemParams,
    values: &[f64],
    derivs: &[f64],
    step: f64,
) -> (f64, f64) {
    let n = params.dim as f64;
    let measure = |i: usize| -> f64 {
        let r = i as f64 * step;
        if params.dim == 1 { 1.0 } else { r.powf(n - 1.0) }
    };
    let quad: Vec<f64> = values
        .iter()
        .zip(derivs)
        .enumerate()
        .map(|(i, (&u, &v))| (v * v + params.nu * u * u) * measure(i))
        .collect();
    let pow: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, &u)| u.max(0.0).powf(params.p + 1.0) * measure(i))
        .collect();
    let area = sphere_area(params.dim);
    let quadratic = area * simpson(&quad, step);
    let power = area * simpson(&pow, step);
    let energy = 0.5 * quadratic - power / (params.p + 1.0);
    let residual = (quadratic - power).abs() / power.max(f64::MIN_POSITIVE);
    (energy, residual)
}

/// Variational energy `I_nu(U_nu)` of a profile, recomputed by quadrature.
pub fn limit_energy(profile: &GroundStateProfile) -> Result<f64, LimitError> {
    let tail = *profile.values.last().unwrap_or(&f64::NAN);
    if profile.values.iter().all(|&u| u <= 10.0 * DECAY_FLOOR) {
        return Err(LimitError::DegenerateProfile(
            "profile is at the decay floor everywhere".into(),
        ));
    }
    if !(tail < 1e-9) {
        return Err(LimitError::DegenerateProfile(format!(
            "profile tail {tail} has not decayed"
        )));
    }
    let (energy, _) =
        profile_energy(&profile.params, &profile.values, &profile.derivs, profile.step);
    Ok(energy)
}

/// One row of the scaling-law verification `b_nu = b_1 nu^theta`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingRow {
    pub nu: f64,
    pub energy: f64,
    pub predicted: f64,
    pub relative_deviation: f64,
}

/// Check the ground-state energy against the scaling prediction for a list
/// of frequencies, taking `b_1` from a dedicated shot at `nu = 1`.
pub fn energy_scaling_check(
    params: &LimitProblemParams,
    nus: &[f64],
    tol: f64,
) -> Result<Vec<ScalingRow>, LimitError> {
    let base = LimitProblemParams::new(params.dim, params.p, 1.0)?;
    let b1 = shoot_ground_state(&base, tol)?.energy;
    let theta = params.scaling_exponent();
    let mut rows = Vec::with_capacity(nus.len());
    for &nu in nus {
        let pr = LimitProblemParams::new(params.dim, params.p, nu)?;
        let b = shoot_ground_state(&pr, tol)?.energy;
        let predicted = b1 * nu.powf(theta);
        rows.push(ScalingRow {
            nu,
            energy: b,
            predicted,
            relative_deviation: (b - predicted).abs() / b.abs(),
        });
    }
    Ok(rows)
}

impl EnergyConstants {
    /// Build the constants from a ground state at `nu = 1`:
    /// `r = 2(p+1)/(p-1)` and `S_{p+1} = (r b_1)^{1/r}`.
    pub fn from_base_profile(profile: &GroundStateProfile) -> Result<Self, LimitError> {
        if (profile.params.nu - 1.0).abs() > 1e-10 {
            return Err(LimitError::InvalidParams(
                "energy constants must be derived from the nu = 1 ground state".into(),
            ));
        }
        let p = profile.params.p;
        let conjugate = 2.0 * (p + 1.0) / (p - 1.0);
        let sobolev = (conjugate * profile.energy).powf(1.0 / conjugate);
        Ok(Self {
            sobolev,
            conjugate,
            base_energy: profile.energy,
            dim: profile.params.dim,
            p,
        })
    }

    /// Cross-check route: `S_{p+1}` as the Rayleigh quotient of the profile,
    /// `S^2 = |U|_{H^1}^2 / |U|_{L^{p+1}}^2`.
    pub fn sobolev_from_quotient(profile: &GroundStateProfile) -> f64 {
        let params = &profile.params;
        let n = params.dim as f64;
        let measure = |i: usize| -> f64 {
            let r = i as f64 * profile.step;
            if params.dim == 1 { 1.0 } else { r.powf(n - 1.0) }
        };
        let quad: Vec<f64> = profile
            .values
            .iter()
            .zip(&profile.derivs)
            .enumerate()
            .map(|(i, (&u, &v))| (v * v + params.nu * u * u) * measure(i))
            .collect();
        let pow: Vec<f64> = profile
            .values
            .iter()
            .enumerate()
            .map(|(i, &u)| u.max(0.0).powf(params.p + 1.0) * measure(i))
            .collect();
        let area = sphere_area(params.dim);
        let h1 = area * simpson(&quad, profile.step);
        let lp = (area * simpson(&pow, profile.step)).powf(2.0 / (params.p + 1.0));
        (h1 / lp).sqrt()
    }

    /// The concentration energy `C(y) = (S^r / r) V(y)^{(p+1)/(p-1) - N/2}`.
    pub fn concentration_energy(&self, v_value: f64) -> Result<f64, LimitError> {
        if !(v_value > 0.0) {
            return Err(LimitError::NonpositivePotential(v_value));
        }
        let theta = (self.p + 1.0) / (self.p - 1.0) - self.dim as f64 / 2.0;
        Ok(self.sobolev.powf(self.conjugate) / self.conjugate * v_value.powf(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2: f64 = std::f64::consts::SQRT_2;

    fn shoot(dim: usize, p: f64, nu: f64) -> GroundStateProfile {
        let params = LimitProblemParams::new(dim, p, nu).unwrap();
        shoot_ground_state(&params, 1e-13).unwrap()
    }

    #[test]
    fn one_dimensional_cubic_center_value_is_sqrt_two() {
        let profile = shoot(1, 3.0, 1.0);
        assert!((profile.center_value - SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn scaled_frequency_center_value() {
        // U_nu(x) = nu^{1/(p-1)} U_1(sqrt(nu) x), so u(0) scales as nu^{1/2} for p = 3.
        let profile = shoot(1, 3.0, 4.0);
        assert!((profile.center_value - 2.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_cubic_energy_is_four_thirds() {
        let profile = shoot(1, 3.0, 1.0);
        assert!((profile.energy - 4.0 / 3.0).abs() < 1e-8);
        let recomputed = limit_energy(&profile).unwrap();
        assert_eq!(recomputed, profile.energy);
    }

    #[test]
    fn energy_scaling_to_nu_four() {
        // b_nu = nu^{3/2} b_1 for N = 1, p = 3.
        let profile = shoot(1, 3.0, 4.0);
        assert!((profile.energy - 32.0 / 3.0).abs() / (32.0 / 3.0) < 1e-8);
    }

    #[test]
    fn three_dimensional_profile_is_clean() {
        let profile = shoot(3, 3.0, 1.0);
        assert!(profile.nehari_residual < 1e-8);
        assert!(profile.values.iter().all(|&u| u > 0.0));
        for w in profile.values.windows(2) {
            assert!(w[1] < w[0], "radial profile must decrease strictly");
        }
        assert!(*profile.values.last().unwrap() < 1e-12);
    }

    #[test]
    fn matches_closed_form_soliton() {
        // U(x) = ((p+1)/2)^{1/(p-1)} sech((p-1)x/2)^{2/(p-1)} for N = 1, nu = 1.
        for &p in &[2.0, 3.0] {
            let profile = shoot(1, p, 1.0);
            let amp = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
            let mut worst = 0.0_f64;
            for (i, &u) in profile.values.iter().enumerate() {
                let r = profile.radius(i);
                let exact = amp * (1.0 / ((p - 1.0) * r / 2.0).cosh()).powf(2.0 / (p - 1.0));
                worst = worst.max((u - exact).abs());
            }
            assert!(worst < 1e-7, "p = {p}: max deviation {worst}");
        }
    }

    #[test]
    fn scaling_check_rows() {
        let params = LimitProblemParams::new(1, 3.0, 1.0).unwrap();
        let rows = energy_scaling_check(&params, &[1.0, 2.0], 1e-13).unwrap();
        assert!(rows[0].relative_deviation < 1e-12, "self comparison");
        assert!(rows[1].relative_deviation < 1e-6);
    }

    #[test]
    fn degenerate_profile_rejected() {
        let mut profile = shoot(1, 3.0, 1.0);
        for u in &mut profile.values {
            *u = 1e-12;
        }
        assert!(limit_energy(&profile).is_err());
    }

    #[test]
    fn subcritical_exponent_enforced() {
        assert!(LimitProblemParams::new(3, 5.0, 1.0).is_err());
        assert!(LimitProblemParams::new(3, 4.0, 1.0).is_ok());
        assert!(LimitProblemParams::new(1, 0.5, 1.0).is_err());
        assert!(LimitProblemParams::new(1, 3.0, -1.0).is_err());
    }

    #[test]
    fn energy_constants_consistency() {
        let profile = shoot(1, 3.0, 1.0);
        let constants = EnergyConstants::from_base_profile(&profile).unwrap();
        // 1/r = 1/2 - 1/(p+1) => r = 4 for p = 3
        assert!((constants.conjugate - 4.0).abs() < 1e-14);
        assert!(constants.conjugate > 2.0);
        // S^r / r must reproduce b_1
        let back = constants.sobolev.powf(constants.conjugate) / constants.conjugate;
        assert!((back - profile.energy).abs() / profile.energy < 1e-12);
        // direct Rayleigh-quotient route agrees
        let direct = EnergyConstants::sobolev_from_quotient(&profile);
        assert!(
            (direct - constants.sobolev).abs() / constants.sobolev < 1e-4,
            "S from b_1 = {}, S from quotient = {}",
            constants.sobolev,
            direct
        );
    }

    #[test]
    fn concentration_energy_values() {
        let profile = shoot(1, 3.0, 1.0);
        let constants = EnergyConstants::from_base_profile(&profile).unwrap();
        let at_one = constants.concentration_energy(1.0).unwrap();
        assert!((at_one - profile.energy).abs() / profile.energy < 1e-12);
        // V = 2, N = 1, p = 3: C = 2^{3/2} b_1, cross-checked against shooting at nu = 2.
        let at_two = constants.concentration_energy(2.0).unwrap();
        let shot_two = shoot(1, 3.0, 2.0);
        assert!((at_two - shot_two.energy).abs() / shot_two.energy < 1e-6);
        assert!(constants.concentration_energy(0.0).is_err());
        assert!(constants.concentration_energy(-1.0).is_err());
    }

    #[test]
    fn profile_interpolation_decays() {
        let profile = shoot(1, 3.0, 1.0);
        assert!((profile.eval(0.0) - profile.center_value).abs() < 1e-12);
        assert!(profile.eval(1e9) == 0.0);
        assert!(profile.eval(-1.0) == profile.eval(1.0));
    }
}
