//! Single-diode equivalent-circuit model of a photovoltaic cell.
//!
//! The model relates terminal current and voltage implicitly:
//!
//! ```text
//! I = IL - Is (exp((V + I Rs) / (Ns n Vth)) - 1) - (V + I Rs) / Rp
//! ```
//!
//! with the photocurrent `IL` fixed by the short-circuit condition
//! `I(V = 0) = Isc`. Because the right-hand side is strictly decreasing in
//! `I`, the current at a given voltage is the unique root of a scalar
//! equation and is found by safeguarded Newton iteration inside a bracket.
//! The performance parameter of interest is the maximum power
//! `Pmax = max_V V · I(V)`, located by golden-section search over the
//! unimodal power curve.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiodeError {
    #[error("exp argument {arg:.3e} exceeds overflow guard ({max:.0}); inputs far outside physical ranges")]
    Overflow { arg: f64, max: f64 },
    #[error("no sign change in bracket [{lo:.6e}, {hi:.6e}] for {what}")]
    BracketFailure { what: &'static str, lo: f64, hi: f64 },
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("invalid diode parameter {name} = {value}; all parameters must be strictly positive and finite")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Thermal voltage `kB·T/q` at 25 °C (298.15 K), in volts.
pub const THERMAL_VOLTAGE_25C: f64 = 0.025693;

/// Largest argument accepted by the guarded exponential.
const EXP_GUARD: f64 = 700.0;

/// Residual tolerance for the inner current solve, in amps.
const CURRENT_TOL: f64 = 1e-13;

/// Interval tolerance for the power maximization, in volts.
const VOLTAGE_TOL: f64 = 1e-10;

const MAX_SOLVE_ITERS: usize = 200;

/// The five physical inputs of the single-diode model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeParams {
    /// Short-circuit current, amps.
    pub i_sc: f64,
    /// Diode reverse saturation current, amps.
    pub i_s: f64,
    /// Ideality factor, unitless.
    pub n: f64,
    /// Series resistance, ohms.
    pub r_s: f64,
    /// Parallel (shunt) resistance, ohms.
    pub r_p: f64,
}

impl DiodeParams {
    pub fn new(i_sc: f64, i_s: f64, n: f64, r_s: f64, r_p: f64) -> Result<Self, DiodeError> {
        let p = DiodeParams { i_sc, i_s, n, r_s, r_p };
        p.validate()?;
        Ok(p)
    }

    /// Build from a physical vector ordered `(Isc, Is, n, Rs, Rp)`, the
    /// order used by the `diode-si-2cm2` parameter space.
    pub fn from_slice(v: &[f64]) -> Result<Self, DiodeError> {
        assert_eq!(v.len(), 5, "diode parameter vector must have 5 components");
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    fn validate(&self) -> Result<(), DiodeError> {
        for (name, value) in [
            ("i_sc", self.i_sc),
            ("i_s", self.i_s),
            ("n", self.n),
            ("r_s", self.r_s),
            ("r_p", self.r_p),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DiodeError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Fixed operating-condition constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeConstants {
    /// Number of cells connected in series.
    pub n_s: u32,
    /// Thermal voltage at the operating temperature, volts.
    pub v_th: f64,
}

impl Default for DiodeConstants {
    fn default() -> Self {
        DiodeConstants {
            n_s: 1,
            v_th: THERMAL_VOLTAGE_25C,
        }
    }
}

impl DiodeConstants {
    /// `Ns · n · Vth`, the voltage scale of the exponential.
    fn scale(&self, p: &DiodeParams) -> f64 {
        self.n_s as f64 * p.n * self.v_th
    }
}

/// One point on an I-V curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IVPoint {
    pub v: f64,
    pub i: f64,
}

/// Maximum-power summary of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmaxResult {
    /// Maximum power, watts. Equals `v_max · i_max`.
    pub p_max: f64,
    /// Voltage at the maximum-power point, volts.
    pub v_max: f64,
    /// Current at the maximum-power point, amps.
    pub i_max: f64,
    /// Open-circuit voltage, volts.
    pub v_oc: f64,
}

fn guarded_exp(arg: f64) -> Result<f64, DiodeError> {
    if arg > EXP_GUARD {
        return Err(DiodeError::Overflow {
            arg,
            max: EXP_GUARD,
        });
    }
    Ok(arg.exp())
}

/// Photocurrent `IL` fixed so that `I(V = 0) = Isc` solves the model exactly.
pub fn photocurrent(p: &DiodeParams, c: &DiodeConstants) -> Result<f64, DiodeError> {
    p.validate()?;
    let a = c.scale(p);
    let e = guarded_exp(p.i_sc * p.r_s / a)?;
    Ok(p.i_sc + p.i_s * (e - 1.0) + p.i_sc * p.r_s / p.r_p)
}

/// Model residual `g(I)` at fixed voltage; strictly decreasing in `I`.
fn current_residual(
    p: &DiodeParams,
    c: &DiodeConstants,
    il: f64,
    v: f64,
    i: f64,
) -> Result<(f64, f64), DiodeError> {
    let a = c.scale(p);
    let e = guarded_exp((v + i * p.r_s) / a)?;
    let g = il - p.i_s * (e - 1.0) - (v + i * p.r_s) / p.r_p - i;
    let dg = -p.i_s * e * p.r_s / a - p.r_s / p.r_p - 1.0;
    Ok((g, dg))
}

/// Solve the implicit model for the current at voltage `v`.
///
/// The root is bracketed in `[-IL, IL]` and polished by Newton steps that
/// fall back to bisection whenever they leave the bracket; the returned
/// residual is below 1e-12 A.
pub fn solve_current(p: &DiodeParams, c: &DiodeConstants, v: f64) -> Result<IVPoint, DiodeError> {
    p.validate()?;
    let il = photocurrent(p, c)?;
    let (mut lo, mut hi) = (-il, il);
    let (g_lo, _) = current_residual(p, c, il, v, lo)?;
    let (g_hi, _) = current_residual(p, c, il, v, hi)?;
    if g_lo == 0.0 {
        return Ok(IVPoint { v, i: lo });
    }
    if g_hi == 0.0 {
        return Ok(IVPoint { v, i: hi });
    }
    if g_lo < 0.0 || g_hi > 0.0 {
        return Err(DiodeError::BracketFailure {
            what: "current solve",
            lo,
            hi,
        });
    }

    let mut i = 0.5 * (lo + hi);
    for _ in 0..MAX_SOLVE_ITERS {
        let (g, dg) = current_residual(p, c, il, v, i)?;
        if g.abs() <= CURRENT_TOL {
            return Ok(IVPoint { v, i });
        }
        if g > 0.0 {
            lo = i;
        } else {
            hi = i;
        }
        let newton = i - g / dg;
        i = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(DiodeError::NoConvergence {
        what: "current solve",
        iterations: MAX_SOLVE_ITERS,
    })
}

/// Open-circuit voltage: the voltage at which the terminal current is zero.
///
/// At `I = 0` the model reduces to a scalar equation in `V`, bracketed by
/// `[0, Ns·n·Vth·ln(IL/Is + 1)]` (the shunt-free overestimate).
pub fn open_circuit_voltage(p: &DiodeParams, c: &DiodeConstants) -> Result<f64, DiodeError> {
    p.validate()?;
    let il = photocurrent(p, c)?;
    let a = c.scale(p);
    let residual = |v: f64| -> Result<(f64, f64), DiodeError> {
        let e = guarded_exp(v / a)?;
        Ok((il - p.i_s * (e - 1.0) - v / p.r_p, -p.i_s * e / a - 1.0 / p.r_p))
    };

    let (mut lo, mut hi) = (0.0, a * (il / p.i_s + 1.0).ln());
    let (g_lo, _) = residual(lo)?;
    let (g_hi, _) = residual(hi)?;
    if g_lo < 0.0 || g_hi > 0.0 {
        return Err(DiodeError::BracketFailure {
            what: "open-circuit solve",
            lo,
            hi,
        });
    }

    let mut v = 0.5 * (lo + hi);
    for _ in 0..MAX_SOLVE_ITERS {
        let (g, dg) = residual(v)?;
        if g.abs() <= CURRENT_TOL {
            return Ok(v);
        }
        if g > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let newton = v - g / dg;
        v = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(DiodeError::NoConvergence {
        what: "open-circuit solve",
        iterations: MAX_SOLVE_ITERS,
    })
}

/// I-V curve at `points` voltages uniformly spaced on `[0, Voc]`.
///
/// Panics if `points < 2`.
pub fn iv_curve(
    p: &DiodeParams,
    c: &DiodeConstants,
    points: usize,
) -> Result<Vec<IVPoint>, DiodeError> {
    assert!(points >= 2, "an I-V curve needs at least 2 points");
    let v_oc = open_circuit_voltage(p, c)?;
    (0..points)
        .map(|k| {
            let v = v_oc * k as f64 / (points - 1) as f64;
            solve_current(p, c, v)
        })
        .collect()
}

/// Maximum power of the cell.
///
/// Eliminates the current through the inner solve and maximizes
/// `P(V) = V · I(V)` over `[0, Voc]` by golden-section search down to an
/// interval of 1e-10 V. The power curve vanishes at both endpoints and is
/// unimodal in between, which golden-section requires.
pub fn p_max(p: &DiodeParams, c: &DiodeConstants) -> Result<PmaxResult, DiodeError> {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    const INVPHI2: f64 = 1.0 - INVPHI;

    let v_oc = open_circuit_voltage(p, c)?;
    let power = |v: f64| -> Result<f64, DiodeError> { Ok(v * solve_current(p, c, v)?.i) };

    let (mut a, mut b) = (0.0, v_oc);
    let mut v1 = a + INVPHI2 * (b - a);
    let mut v2 = a + INVPHI * (b - a);
    let mut p1 = power(v1)?;
    let mut p2 = power(v2)?;
    while b - a > VOLTAGE_TOL {
        if p1 > p2 {
            b = v2;
            v2 = v1;
            p2 = p1;
            v1 = a + INVPHI2 * (b - a);
            p1 = power(v1)?;
        } else {
            a = v1;
            v1 = v2;
            p1 = p2;
            v2 = a + INVPHI * (b - a);
            p2 = power(v2)?;
        }
    }
    let v_max = 0.5 * (a + b);
    let i_max = solve_current(p, c, v_max)?.i;
    Ok(PmaxResult {
        p_max: v_max * i_max,
        v_max,
        i_max,
        v_oc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::diode_si_2cm2;

    fn midpoint_params() -> DiodeParams {
        let space = diode_si_2cm2();
        DiodeParams::from_slice(&space.denormalize(&[0.0; 5]).unwrap()).unwrap()
    }

    fn random_params(count: usize, seed: u64) -> Vec<DiodeParams> {
        let space = diode_si_2cm2();
        space
            .sample_uniform(count, seed)
            .into_iter()
            .map(|x| DiodeParams::from_slice(&space.denormalize(&x).unwrap()).unwrap())
            .collect()
    }

    /// Residual of the full implicit model, written out independently.
    fn model_residual(p: &DiodeParams, c: &DiodeConstants, v: f64, i: f64) -> f64 {
        let a = c.n_s as f64 * p.n * c.v_th;
        let il = p.i_sc + p.i_s * ((p.i_sc * p.r_s / a).exp() - 1.0) + p.i_sc * p.r_s / p.r_p;
        il - p.i_s * (((v + i * p.r_s) / a).exp() - 1.0) - (v + i * p.r_s) / p.r_p - i
    }

    #[test]
    fn photocurrent_reduces_to_isc_without_series_resistance() {
        let mut p = midpoint_params();
        p.r_s = 1e-300; // both correction terms vanish in the limit
        let c = DiodeConstants::default();
        assert_eq!(photocurrent(&p, &c).unwrap(), p.i_sc);
    }

    #[test]
    fn photocurrent_drops_saturation_term() {
        let mut p = midpoint_params();
        p.i_s = 1e-320;
        let c = DiodeConstants::default();
        let il = photocurrent(&p, &c).unwrap();
        let expect = p.i_sc * (1.0 + p.r_s / p.r_p);
        assert!((il - expect).abs() <= 1e-15 * expect);
    }

    #[test]
    fn photocurrent_matches_direct_formula() {
        let p = midpoint_params();
        let c = DiodeConstants::default();
        let il = photocurrent(&p, &c).unwrap();
        // Independent transcription of the formula.
        let a = 1.0 * p.n * 0.025693;
        let direct = p.i_sc + p.i_s * f64::exp(p.i_sc * p.r_s / a) - p.i_s + p.i_sc * p.r_s / p.r_p;
        assert!((il - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn photocurrent_overflow_is_diagnosed() {
        let p = DiodeParams::new(0.1, 1e-9, 1e-6, 0.5, 100.0).unwrap();
        let c = DiodeConstants::default();
        assert!(matches!(
            photocurrent(&p, &c),
            Err(DiodeError::Overflow { .. })
        ));
    }

    #[test]
    fn short_circuit_current_is_isc() {
        let c = DiodeConstants::default();
        for p in random_params(50, 11) {
            let pt = solve_current(&p, &c, 0.0).unwrap();
            assert!(
                (pt.i - p.i_sc).abs() <= 1e-10,
                "i(0) = {} vs isc = {}",
                pt.i,
                p.i_sc
            );
        }
    }

    #[test]
    fn solve_current_residual_is_tiny() {
        let c = DiodeConstants::default();
        for (k, p) in random_params(100, 23).into_iter().enumerate() {
            let v_oc = open_circuit_voltage(&p, &c).unwrap();
            let v = v_oc * (k as f64 + 0.5) / 100.0;
            let pt = solve_current(&p, &c, v).unwrap();
            let r = model_residual(&p, &c, pt.v, pt.i);
            assert!(r.abs() <= 1e-12, "residual {r} at draw {k}");
        }
    }

    #[test]
    fn current_matches_bisection_oracle() {
        // Pure bisection, independent of the Newton path.
        let p = midpoint_params();
        let c = DiodeConstants::default();
        let v = 0.3;
        let il = photocurrent(&p, &c).unwrap();
        let (mut lo, mut hi) = (-il, il);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if model_residual(&p, &c, v, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = solve_current(&p, &c, v).unwrap().i;
        assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn open_circuit_zeroes_the_current() {
        let c = DiodeConstants::default();
        for p in random_params(25, 37) {
            let v_oc = open_circuit_voltage(&p, &c).unwrap();
            let i = solve_current(&p, &c, v_oc).unwrap().i;
            assert!(i.abs() <= 1e-10, "i(voc) = {i}");
        }
    }

    #[test]
    fn open_circuit_bracket_is_valid() {
        let c = DiodeConstants::default();
        for p in random_params(25, 41) {
            let il = photocurrent(&p, &c).unwrap();
            let a = p.n * c.v_th;
            let top = a * (il / p.i_s + 1.0).ln();
            assert!(solve_current(&p, &c, 0.0).unwrap().i > 0.0);
            // Current at the shunt-free overestimate is at or below zero.
            let i_top = solve_current(&p, &c, top).unwrap().i;
            assert!(i_top <= 1e-12, "i(top) = {i_top}");
        }
    }

    #[test]
    fn open_circuit_matches_grid_oracle() {
        let p = midpoint_params();
        let c = DiodeConstants::default();
        let il = photocurrent(&p, &c).unwrap();
        let a = p.n * c.v_th;
        let h = |v: f64| il - p.i_s * ((v / a).exp() - 1.0) - v / p.r_p;
        let top = a * (il / p.i_s + 1.0).ln();
        // Dense scan for the sign change, then bisect inside the cell.
        let cells = 100_000;
        let mut bracket = None;
        for k in 0..cells {
            let v0 = top * k as f64 / cells as f64;
            let v1 = top * (k + 1) as f64 / cells as f64;
            if h(v0) > 0.0 && h(v1) <= 0.0 {
                bracket = Some((v0, v1));
                break;
            }
        }
        let (mut lo, mut hi) = bracket.expect("sign change on the grid");
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = open_circuit_voltage(&p, &c).unwrap();
        assert!((got - oracle).abs() <= 1e-8, "{got} vs {oracle}");
    }

    #[test]
    fn more_saturation_current_lowers_voc() {
        let c = DiodeConstants::default();
        let p = midpoint_params();
        let mut doubled = p;
        doubled.i_s *= 2.0;
        assert!(
            open_circuit_voltage(&doubled, &c).unwrap() < open_circuit_voltage(&p, &c).unwrap()
        );
    }

    #[test]
    fn iv_curve_endpoints_and_monotonicity() {
        let c = DiodeConstants::default();
        for p in random_params(10, 53) {
            let curve = iv_curve(&p, &c, 64).unwrap();
            assert_eq!(curve.len(), 64);
            assert_eq!(curve[0].v, 0.0);
            assert!((curve[0].i - p.i_sc).abs() <= 1e-10);
            assert!(curve.last().unwrap().i.abs() <= 1e-10);
            for w in curve.windows(2) {
                assert!(w[1].i <= w[0].i + 1e-12, "current not non-increasing");
            }
        }
    }

    #[test]
    fn iv_curve_two_points_is_endpoints() {
        let p = midpoint_params();
        let c = DiodeConstants::default();
        let curve = iv_curve(&p, &c, 2).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(curve[0].v, 0.0);
        assert_eq!(curve[1].v, open_circuit_voltage(&p, &c).unwrap());
    }

    #[test]
    fn pmax_is_interior_and_consistent() {
        let c = DiodeConstants::default();
        for p in random_params(20, 67) {
            let r = p_max(&p, &c).unwrap();
            assert!(r.p_max > 0.0);
            assert!(r.v_max > 0.0 && r.v_max < r.v_oc);
            assert!(r.i_max > 0.0);
            assert_eq!(r.p_max, r.v_max * r.i_max);
        }
    }

    #[test]
    fn pmax_matches_grid_oracle() {
        let p = midpoint_params();
        let c = DiodeConstants::default();
        let r = p_max(&p, &c).unwrap();
        // 1e5-point scan plus refinement around the winning cell.
        let coarse = 100_000;
        let power = |v: f64| v * solve_current(&p, &c, v).unwrap().i;
        let mut best = (0.0, 0.0);
        for k in 0..=coarse {
            let v = r.v_oc * k as f64 / coarse as f64;
            let pw = power(v);
            if pw > best.1 {
                best = (v, pw);
            }
        }
        let cell = r.v_oc / coarse as f64;
        let fine = 1000;
        let mut refined = best;
        for k in 0..=fine {
            let v = (best.0 - cell) + 2.0 * cell * k as f64 / fine as f64;
            if !(0.0..=r.v_oc).contains(&v) {
                continue;
            }
            let pw = power(v);
            if pw > refined.1 {
                refined = (v, pw);
            }
        }
        assert!(
            (r.p_max - refined.1).abs() <= 1e-6 * refined.1,
            "{} vs oracle {}",
            r.p_max,
            refined.1
        );
    }

    #[test]
    fn pmax_improves_toward_ideal_cell() {
        let c = DiodeConstants::default();
        let p = midpoint_params();
        let base = p_max(&p, &c).unwrap().p_max;
        let mut ideal = p;
        ideal.r_s = 1e-9;
        ideal.r_p = 1e9;
        assert!(p_max(&ideal, &c).unwrap().p_max > base);
    }

    #[test]
    fn power_curve_unimodality_vs_golden_section() {
        let c = DiodeConstants::default();
        for p in random_params(10, 71) {
            let r = p_max(&p, &c).unwrap();
            let grid = 512;
            let mut best_k = 0;
            let mut best_p = f64::MIN;
            for k in 0..=grid {
                let v = r.v_oc * k as f64 / grid as f64;
                let pw = v * solve_current(&p, &c, v).unwrap().i;
                if pw > best_p {
                    best_p = pw;
                    best_k = k;
                }
            }
            let cell = r.v_oc / grid as f64;
            let gap = (r.v_max - best_k as f64 * cell).abs();
            assert!(gap <= 2.0 * cell, "argmax off by {gap} > 2 cells");
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(DiodeParams::new(0.0, 1e-9, 1.5, 0.4, 200.0).is_err());
        assert!(DiodeParams::new(0.1, -1e-9, 1.5, 0.4, 200.0).is_err());
        assert!(DiodeParams::new(0.1, 1e-9, 1.5, 0.4, f64::NAN).is_err());
    }
}
