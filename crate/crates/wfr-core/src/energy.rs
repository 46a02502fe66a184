//! Internal energies and potentials driving both solver steps.
//!
//! An `EnergySpec` packages a nonlinearity F and a cell potential V into the
//! functional `E(rho) = integral of F(rho) + V rho`. The transport step needs
//! its pointwise proximal map; the reaction step needs its derivative. Both
//! are exposed here as scalar operations so every solver cell problem stays a
//! cheap 1D convex solve.

use crate::error::{Result, WfrError};
use crate::grid::{CellField, DensityField, Grid};

/// Density nonlinearity F in the internal energy `integral F(rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    /// `F(z) = z log z - z`, linear diffusion.
    Entropy,
    /// `F(z) = z^m / (m-1)` with `m > 1`, porous-medium diffusion; its
    /// derivative `(m/(m-1)) z^(m-1)` is the pressure of the degenerate model.
    Power(f64),
    /// `F = 0`; the energy reduces to the potential part.
    Zero,
}

impl Nonlinearity {
    pub fn power(m: f64) -> Result<Self> {
        if !(m > 1.0) || !m.is_finite() {
            return Err(WfrError::Config(format!("power nonlinearity needs m > 1, got {m}")));
        }
        Ok(Self::Power(m))
    }

    /// F(z) for z >= 0, with F(0) taken as its limit value (0 for all tags).
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            Nonlinearity::Entropy => {
                if z <= 0.0 {
                    0.0
                } else {
                    z * z.ln() - z
                }
            }
            Nonlinearity::Power(m) => {
                if z <= 0.0 {
                    0.0
                } else {
                    pow_log(z, m) / (m - 1.0)
                }
            }
            Nonlinearity::Zero => 0.0,
        }
    }

    /// F'(z); `Entropy -> log z`, `Power(m) -> (m/(m-1)) z^(m-1)`, `Zero -> 0`.
    ///
    /// For Power the value at z = 0 is 0 (m > 1); Entropy diverges there and
    /// is only called with z > 0 by the solvers.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Nonlinearity::Entropy => z.max(1e-300).ln(),
            Nonlinearity::Power(m) => {
                if z <= 0.0 {
                    0.0
                } else {
                    m / (m - 1.0) * pow_log(z, m - 1.0)
                }
            }
            Nonlinearity::Zero => 0.0,
        }
    }

    /// F''(z) for z > 0, used by Newton iterations.
    pub fn second_derivative(&self, z: f64) -> f64 {
        match *self {
            Nonlinearity::Entropy => 1.0 / z.max(1e-300),
            Nonlinearity::Power(m) => {
                if z <= 0.0 {
                    0.0
                } else {
                    m * pow_log(z, m - 2.0)
                }
            }
            Nonlinearity::Zero => 0.0,
        }
    }
}

/// `z^p` evaluated as `exp(p log z)` so large exponents stay accurate down to
/// tiny bases instead of underflowing through repeated multiplication.
#[inline]
pub(crate) fn pow_log(z: f64, p: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let clamped = z.max(1e-300);
    (p * clamped.ln()).exp()
}

/// Which step of the splitting an energy drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergySide {
    /// Wasserstein transport step; the potential must have a finite discrete
    /// gradient (Lipschitz on the grid).
    Diffusion,
    /// Fisher-Rao reaction step; the potential must be bounded. The entropy
    /// nonlinearity is not admissible on this side.
    Reaction,
}

/// A diffusion or reaction functional `E(rho) = integral F(rho) + V rho`.
#[derive(Debug, Clone)]
pub struct EnergySpec {
    nonlinearity: Nonlinearity,
    potential: CellField,
    side: EnergySide,
}

impl EnergySpec {
    pub fn new(nonlinearity: Nonlinearity, potential: CellField, side: EnergySide) -> Result<Self> {
        if let Nonlinearity::Power(m) = nonlinearity {
            if !(m > 1.0) {
                return Err(WfrError::Config(format!("power nonlinearity needs m > 1, got {m}")));
            }
        }
        if side == EnergySide::Reaction && nonlinearity == Nonlinearity::Entropy {
            return Err(WfrError::Config(
                "the entropy nonlinearity is not admissible in the reaction step".to_string(),
            ));
        }
        if !potential.all_finite() {
            return Err(WfrError::Config("potential field must be finite".to_string()));
        }
        // Bounded is implied by finiteness on a finite grid; the Lipschitz
        // requirement on the diffusion side is a finite discrete gradient,
        // also implied. Both checks stay explicit so file-loaded potentials
        // fail loudly.
        Ok(Self { nonlinearity, potential, side })
    }

    pub fn diffusion(nonlinearity: Nonlinearity, potential: CellField) -> Result<Self> {
        Self::new(nonlinearity, potential, EnergySide::Diffusion)
    }

    pub fn reaction(nonlinearity: Nonlinearity, potential: CellField) -> Result<Self> {
        Self::new(nonlinearity, potential, EnergySide::Reaction)
    }

    /// Potential-free spec; `side` still decides where it may be used.
    pub fn without_potential(grid: &Grid, nonlinearity: Nonlinearity, side: EnergySide) -> Result<Self> {
        Self::new(nonlinearity, CellField::zeros(grid), side)
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn potential(&self) -> &CellField {
        &self.potential
    }

    pub fn side(&self) -> EnergySide {
        self.side
    }

    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }
}

/// `E(rho) = sum [F(rho_c) + V_c rho_c] * cell volume`.
pub fn energy_value(spec: &EnergySpec, rho: &DensityField) -> Result<f64> {
    spec.potential().check_same_grid(rho.as_cell_field())?;
    let nl = spec.nonlinearity();
    let sum: f64 = rho
        .values()
        .iter()
        .zip(spec.potential().values())
        .map(|(&z, &v)| nl.value(z) + v * z)
        .sum();
    Ok(sum * rho.grid().cell_volume())
}

/// Pressure field of a porous-medium density: `p = (m/(m-1)) rho^(m-1)`.
#[derive(Debug, Clone)]
pub struct PressureField {
    values: CellField,
    m: f64,
}

impl PressureField {
    pub fn values(&self) -> &CellField {
        &self.values
    }

    pub fn exponent(&self) -> f64 {
        self.m
    }

    /// `integral p (1 - rho)`, the residual of the limiting complementarity
    /// condition; shrinks as the exponent m grows.
    pub fn complementarity_residual(&self, rho: &DensityField) -> Result<f64> {
        self.values.check_same_grid(rho.as_cell_field())?;
        let sum: f64 = self
            .values
            .values()
            .iter()
            .zip(rho.values())
            .map(|(&p, &r)| p * (1.0 - r))
            .sum();
        Ok(sum * rho.grid().cell_volume())
    }
}

/// Pointwise pressure `(m/(m-1)) rho^(m-1)`, evaluated in log space with the
/// base clamped at 1e-300 and `rho = 0` mapped to zero pressure.
pub fn pressure(rho: &DensityField, m: f64) -> Result<PressureField> {
    if !(m > 1.0) {
        return Err(WfrError::Config(format!("pressure needs m > 1, got {m}")));
    }
    let coeff = m / (m - 1.0);
    let values: Vec<f64> = rho
        .values()
        .iter()
        .map(|&z| if z <= 0.0 { 0.0 } else { coeff * pow_log(z, m - 1.0) })
        .collect();
    Ok(PressureField {
        values: CellField::new(rho.grid(), values).expect("pressure matches density layout"),
        m,
    })
}

/// Tolerances for the pointwise proximal solves.
pub const PROX_MAX_NEWTON: usize = 60;

/// Pointwise proximal map of `rho -> F(rho) + V rho` over `rho >= 0`:
/// the unique minimizer of `(rho - z)^2 / (2 tau) + F(rho) + V rho`.
///
/// Newton on the first-order condition with a bisection safeguard on
/// `[0, z + tau (1 + |V|) + 1]`; tolerance `1e-11 (1 + |z|)` on the condition.
pub fn prox_internal(nl: Nonlinearity, v: f64, tau: f64, z: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(WfrError::ScalarSolve(format!("prox needs tau > 0, got {tau}")));
    }
    if !z.is_finite() || !v.is_finite() {
        return Err(WfrError::ScalarSolve(format!("prox needs finite inputs, got z={z}, V={v}")));
    }

    let tol = 1e-11 * (1.0 + z.abs());
    // Condition g(rho) = (rho - z)/tau + F'(rho) + V, increasing in rho.
    let g = |rho: f64| (rho - z) / tau + nl.derivative(rho) + v;
    let dg = |rho: f64| 1.0 / tau + nl.second_derivative(rho);

    match nl {
        Nonlinearity::Zero => Ok((z - tau * v).max(0.0)),
        Nonlinearity::Power(_) => {
            // F'(0) = 0, so the minimizer sits at 0 iff the slope there is
            // already nonnegative.
            if -z / tau + v >= 0.0 {
                return Ok(0.0);
            }
            let hi = bracket_upper(&g, z + tau * (1.0 + v.abs()) + 1.0);
            newton_bisection(&g, &dg, 0.0, hi, (z - tau * v).max(tol), tol)
        }
        Nonlinearity::Entropy => {
            // log rho drives g to -inf at 0: the root is interior for every z.
            let hi = bracket_upper(&g, z.max(1.0) + tau * (1.0 + v.abs()) + 1.0);
            let guess = (z - tau * v).max(1e-12).min(hi);
            newton_bisection(&g, &dg, 1e-300, hi, guess, tol)
        }
    }
}

/// Grow the upper bracket end until the condition is positive there.
fn bracket_upper(g: &dyn Fn(f64) -> f64, mut hi: f64) -> f64 {
    let mut guard = 0;
    while g(hi) < 0.0 && guard < 200 {
        hi *= 2.0;
        guard += 1;
    }
    hi
}

/// Safeguarded Newton: steps falling outside the live bracket or stalling are
/// replaced by bisection. The bracket keeps g(lo) <= 0 <= g(hi).
fn newton_bisection(
    g: &dyn Fn(f64) -> f64,
    dg: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    guess: f64,
    tol: f64,
) -> Result<f64> {
    let mut x = guess.clamp(lo, hi);
    for _ in 0..PROX_MAX_NEWTON {
        let gx = g(x);
        if gx.abs() <= tol {
            return Ok(x.max(0.0));
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = dg(x);
        let newton = x - gx / slope;
        x = if slope.is_finite() && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // Bisection cannot fail on the bracket; finish it off.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).abs() <= tol || (hi - lo) <= f64::EPSILON * (1.0 + hi.abs()) {
            return Ok(mid.max(0.0));
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(WfrError::ScalarSolve(format!(
        "prox solve stalled on bracket [{lo}, {hi}]"
    )))
}

/// Proximal map of a full `EnergySpec` applied cell by cell.
pub fn prox_internal_field(spec: &EnergySpec, tau: f64, z: &CellField) -> Result<CellField> {
    spec.potential().check_same_grid(z)?;
    let nl = spec.nonlinearity();
    let mut out = vec![0.0; z.values().len()];
    for ((o, &zc), &vc) in out.iter_mut().zip(z.values()).zip(spec.potential().values()) {
        *o = prox_internal(nl, vc, tau, zc)?;
    }
    CellField::new(z.grid(), out)
}
