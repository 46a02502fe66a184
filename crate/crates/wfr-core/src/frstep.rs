//! Fisher-Rao proximal step: `min_rho FR^2(rho, mu) / (2h) + E(rho)`.
//!
//! With `FR^2(rho, mu) = 4 ||sqrt(rho) - sqrt(mu)||^2` the minimization
//! factorizes into independent scalar convex problems, one per cell. Each is
//! solved by Newton in `r = sqrt(rho)` with a bisection safeguard whose
//! bracket is exactly the sandwich bound satisfied by the minimizer.

use crate::energy::{pow_log, Nonlinearity};
use crate::error::{Result, WfrError};
use crate::grid::{CellField, DensityField, Grid};
use rayon::prelude::*;

/// Scale factor multiplying the nonlinearity, `s(x) F(rho) + U(x) rho`.
#[derive(Debug, Clone)]
enum Scale {
    Uniform(f64),
    Field(CellField),
}

impl Scale {
    fn at(&self, cell: usize) -> f64 {
        match self {
            Scale::Uniform(s) => *s,
            Scale::Field(f) => f.values()[cell],
        }
    }

    fn max(&self) -> f64 {
        match self {
            Scale::Uniform(s) => *s,
            Scale::Field(f) => f.max(),
        }
    }
}

/// Reaction-side energy `integral s F(rho) + U rho` for the Fisher-Rao step.
#[derive(Debug, Clone)]
pub struct ReactionSpec {
    grid: Grid,
    nonlinearity: Nonlinearity,
    scale: Scale,
    potential: Scale,
    /// Degenerate tumor-growth structure: `F = rho^m/(m-1)`, `U = -1`.
    hele_shaw: bool,
}

impl ReactionSpec {
    /// Plain reaction energy `integral F(rho) + U rho`.
    pub fn new(grid: &Grid, nonlinearity: Nonlinearity, potential: CellField) -> Result<Self> {
        Self::build(grid, nonlinearity, Scale::Uniform(1.0), Scale::Field(potential), false)
    }

    /// Reaction energy with a uniform potential value.
    pub fn with_uniform_potential(grid: &Grid, nonlinearity: Nonlinearity, u: f64) -> Result<Self> {
        Self::build(grid, nonlinearity, Scale::Uniform(1.0), Scale::Uniform(u), false)
    }

    /// Scaled reaction energy `integral s F(rho) + U rho` with a uniform scale.
    pub fn with_uniform_scale(
        grid: &Grid,
        nonlinearity: Nonlinearity,
        scale: f64,
        potential: CellField,
    ) -> Result<Self> {
        Self::build(grid, nonlinearity, Scale::Uniform(scale), Scale::Field(potential), false)
    }

    /// Tumor-growth energy `integral rho^m/(m-1) - rho`.
    pub fn hele_shaw(grid: &Grid, m: f64) -> Result<Self> {
        Self::build(grid, Nonlinearity::power(m)?, Scale::Uniform(1.0), Scale::Uniform(-1.0), true)
    }

    /// Nutrient-coupled tumor energy
    /// `integral (c + c1) rho^m/(m-1) + (c2 - c - c1) rho` with `c` frozen.
    pub fn nutrient(m: f64, c: &DensityField, c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0) || !(c2 > 0.0) {
            return Err(WfrError::Config(format!(
                "nutrient reaction needs positive constants, got c1={c1}, c2={c2}"
            )));
        }
        let scale: Vec<f64> = c.values().iter().map(|&cv| cv + c1).collect();
        let potential: Vec<f64> = c.values().iter().map(|&cv| c2 - cv - c1).collect();
        Self::build(
            c.grid(),
            Nonlinearity::power(m)?,
            Scale::Field(CellField::new(c.grid(), scale)?),
            Scale::Field(CellField::new(c.grid(), potential)?),
            false,
        )
    }

    fn build(
        grid: &Grid,
        nonlinearity: Nonlinearity,
        scale: Scale,
        potential: Scale,
        hele_shaw: bool,
    ) -> Result<Self> {
        if nonlinearity == Nonlinearity::Entropy {
            return Err(WfrError::Config(
                "the entropy nonlinearity is not admissible in the reaction step".to_string(),
            ));
        }
        let finite = match &potential {
            Scale::Uniform(u) => u.is_finite(),
            Scale::Field(f) => f.all_finite(),
        };
        if !finite {
            return Err(WfrError::Config("reaction potential must be bounded".to_string()));
        }
        if let Scale::Field(f) = &scale {
            if !f.all_finite() || f.min() < 0.0 {
                return Err(WfrError::Config(
                    "reaction scale field must be finite and nonnegative".to_string(),
                ));
            }
        }
        Ok(Self { grid: grid.clone(), nonlinearity, scale, potential, hele_shaw })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn is_hele_shaw(&self) -> bool {
        self.hele_shaw
    }

    pub fn potential_at(&self, cell: usize) -> f64 {
        self.potential.at(cell)
    }

    pub fn scale_at(&self, cell: usize) -> f64 {
        self.scale.at(cell)
    }

    pub fn max_abs_potential(&self) -> f64 {
        match &self.potential {
            Scale::Uniform(u) => u.abs(),
            Scale::Field(f) => f.max_abs(),
        }
    }

    /// Largest negative part of U; drives the sandwich upper bound.
    pub fn max_negative_potential(&self) -> f64 {
        match &self.potential {
            Scale::Uniform(u) => (-u).max(0.0),
            Scale::Field(f) => (-f.min()).max(0.0),
        }
    }

    /// Largest positive part of U; enters the sandwich lower bound.
    pub fn max_positive_potential(&self) -> f64 {
        match &self.potential {
            Scale::Uniform(u) => u.max(0.0),
            Scale::Field(f) => f.max().max(0.0),
        }
    }

    /// Saturation level preserved by the step: outputs stay at or below 1
    /// when the reaction rate `s F'(1) + U` is nonnegative everywhere, which
    /// holds for the tumor-growth energies.
    pub fn saturation_cap(&self) -> Option<f64> {
        let m = match self.nonlinearity {
            Nonlinearity::Power(m) => m,
            _ => return None,
        };
        let fp1 = m / (m - 1.0);
        let min_rate = match (&self.scale, &self.potential) {
            (Scale::Uniform(s), Scale::Uniform(u)) => s * fp1 + u,
            (Scale::Uniform(s), Scale::Field(u)) => {
                u.values().iter().fold(f64::INFINITY, |acc, &uv| acc.min(s * fp1 + uv))
            }
            (Scale::Field(s), Scale::Uniform(u)) => {
                s.values().iter().fold(f64::INFINITY, |acc, &sv| acc.min(sv * fp1 + u))
            }
            (Scale::Field(s), Scale::Field(u)) => s
                .values()
                .iter()
                .zip(u.values())
                .fold(f64::INFINITY, |acc, (&sv, &uv)| acc.min(sv * fp1 + uv)),
        };
        if min_rate >= 0.0 {
            Some(1.0)
        } else {
            None
        }
    }

    /// Energy value `sum [s F(rho) + U rho] * cell volume`.
    pub fn energy_value(&self, rho: &DensityField) -> Result<f64> {
        if !rho.grid().same_as(&self.grid) {
            return Err(WfrError::GridMismatch("reaction spec grid differs".to_string()));
        }
        let nl = self.nonlinearity;
        let sum: f64 = rho
            .values()
            .iter()
            .enumerate()
            .map(|(c, &z)| self.scale.at(c) * nl.value(z) + self.potential.at(c) * z)
            .sum();
        Ok(sum * self.grid.cell_volume())
    }
}

/// Squared Fisher-Rao distance `4 ||sqrt(rho) - sqrt(mu)||^2_{L^2}`.
pub fn fr_distance(rho: &DensityField, mu: &DensityField) -> Result<f64> {
    rho.as_cell_field().check_same_grid(mu.as_cell_field())?;
    let sum: f64 = rho
        .values()
        .iter()
        .zip(mu.values())
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok(4.0 * sum * rho.grid().cell_volume())
}

/// Pointwise multiplicative bounds satisfied by one reaction step:
/// `lower * mu <= rho <= upper * mu` on the support of `mu`.
#[derive(Debug, Clone, Copy)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bracket-derived sandwich factors for a step of size `h` from data bounded
/// by `max_mu`.
///
/// Upper: the optimality condition gives `r (1 + (h/2)(s F' + U)) = sqrt(mu)`
/// with `s F' >= 0`, hence `rho <= mu / (1 - (h/2) max U^-)^2`; that factor is
/// at most `1 + 3 h max U^-` for `h max U^- < 1`. Lower: with
/// `D = max s F'(rho_max) + max U^+`, `rho >= mu / (1 + (h/2) D)^2 >= (1 - hD) mu`.
pub fn sandwich_bounds(spec: &ReactionSpec, h: f64, max_mu: f64) -> SandwichBounds {
    let u_minus = spec.max_negative_potential();
    let upper = {
        let d = 1.0 - 0.5 * h * u_minus;
        if d > 0.0 {
            1.0 / (d * d)
        } else {
            f64::INFINITY
        }
    };
    let mut rho_max = upper * max_mu;
    if let Some(cap) = spec.saturation_cap() {
        if max_mu <= cap {
            rho_max = rho_max.min(cap);
        }
    }
    let growth = spec.scale.max() * spec.nonlinearity.derivative(rho_max).max(0.0)
        + spec.max_positive_potential();
    let lower = {
        let d = 1.0 + 0.5 * h * growth;
        1.0 / (d * d)
    };
    SandwichBounds { lower, upper }
}

/// Per-call record of the reaction step.
#[derive(Debug, Clone, Copy)]
pub struct FrStepReport {
    /// Smallest and largest output/input ratio over the support.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Bracket-derived bounds the ratios were checked against.
    pub bounds: SandwichBounds,
    /// Cells whose ratio left the sandwich (after solver slack); always 0 for
    /// a healthy solve.
    pub violations: usize,
    /// Largest residual of the optimality condition, scaled by `1 + mu`.
    pub max_scaled_residual: f64,
}

/// Solver knobs for the pointwise reaction solves.
#[derive(Debug, Clone, Copy)]
pub struct FrConfig {
    /// Relative tolerance on the Newton condition.
    pub tol: f64,
    /// Newton iterations before the bisection fallback takes over.
    pub max_newton: usize,
}

impl Default for FrConfig {
    fn default() -> Self {
        Self { tol: 1e-13, max_newton: 60 }
    }
}

/// One Fisher-Rao step with the default solver configuration.
pub fn fisher_rao_step(mu: &DensityField, spec: &ReactionSpec, h: f64) -> Result<DensityField> {
    fisher_rao_step_detailed(mu, spec, h, &FrConfig::default()).map(|(rho, _)| rho)
}

/// One Fisher-Rao step, also reporting ratio statistics and residuals.
pub fn fisher_rao_step_detailed(
    mu: &DensityField,
    spec: &ReactionSpec,
    h: f64,
    cfg: &FrConfig,
) -> Result<(DensityField, FrStepReport)> {
    if !mu.grid().same_as(spec.grid()) {
        return Err(WfrError::GridMismatch("reaction spec grid differs from density".to_string()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(WfrError::Config(format!("reaction step needs h > 0, got {h}")));
    }
    let max_u = spec.max_abs_potential();
    if h * max_u >= 1.0 {
        return Err(WfrError::StepTooLarge { h, max_u });
    }

    let bounds = sandwich_bounds(spec, h, mu.max());
    let n = mu.grid().num_cells();
    let mut out = vec![0.0; n];
    let mut residuals = vec![0.0; n];

    let mu_vals = mu.values();
    out.par_iter_mut()
        .zip(residuals.par_iter_mut())
        .enumerate()
        .try_for_each(|(c, (o, res))| -> Result<()> {
            let mu_c = mu_vals[c];
            if mu_c <= 0.0 {
                // Support is preserved exactly: empty cells stay empty.
                *o = 0.0;
                *res = 0.0;
                return Ok(());
            }
            let r = solve_cell(
                mu_c,
                spec.scale.at(c),
                spec.potential.at(c),
                spec.nonlinearity,
                h,
                bounds.upper,
                cfg,
            )?;
            let rho = r * r;
            *o = rho;
            // Residual of (sqrt(rho)-sqrt(mu)) sqrt(rho) + (h/2) rho (s F' + U).
            let rate = spec.scale.at(c) * spec.nonlinearity.derivative(rho) + spec.potential.at(c);
            let raw = (r - mu_c.sqrt()) * r + 0.5 * h * rho * rate;
            *res = raw.abs() / (1.0 + mu_c);
            Ok(())
        })?;

    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut max_res = 0.0_f64;
    // Ratio checks get a whisker of slack for the scalar solve tolerance.
    let slack = 1e-9;
    for c in 0..n {
        max_res = max_res.max(residuals[c]);
        if mu_vals[c] > 0.0 {
            let ratio = out[c] / mu_vals[c];
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
            if ratio < bounds.lower - slack || ratio > bounds.upper + slack {
                violations += 1;
            }
        }
    }
    if !min_ratio.is_finite() {
        min_ratio = 1.0;
        max_ratio = 1.0;
    }

    let rho = DensityField::from_values(mu.grid(), out)?;
    Ok((
        rho,
        FrStepReport { min_ratio, max_ratio, bounds, violations, max_scaled_residual: max_res },
    ))
}

/// Root of `G(r) = r (1 + (h/2)(s F'(r^2) + U)) - sqrt(mu)` on `[0, r_hi]`.
fn solve_cell(
    mu: f64,
    s: f64,
    u: f64,
    nl: Nonlinearity,
    h: f64,
    upper_factor: f64,
    cfg: &FrConfig,
) -> Result<f64> {
    let sqrt_mu = mu.sqrt();
    let damp = 1.0 + 0.5 * h * u;

    if let Nonlinearity::Zero = nl {
        return Ok(sqrt_mu / damp);
    }
    let m = match nl {
        Nonlinearity::Power(m) => m,
        _ => unreachable!("reaction spec admits only Zero and Power"),
    };
    let coeff = 0.5 * h * s * m / (m - 1.0);
    let g = |r: f64| r * damp + coeff * pow_log(r, 2.0 * m - 1.0) - sqrt_mu;
    let dg = |r: f64| damp + coeff * (2.0 * m - 1.0) * pow_log(r, 2.0 * m - 2.0);

    // The sandwich bound brackets the root; expand defensively if the solver
    // tolerance ever puts it marginally outside.
    let mut hi = (upper_factor * mu).sqrt().max(1e-30);
    let mut guard = 0;
    while g(hi) < 0.0 && guard < 100 {
        hi *= 1.5;
        guard += 1;
    }
    let mut lo = 0.0_f64;
    let tol = cfg.tol * (1.0 + sqrt_mu);

    let mut r = sqrt_mu.min(hi);
    for _ in 0..cfg.max_newton {
        let gr = g(r);
        if gr.abs() <= tol {
            return Ok(r);
        }
        if gr > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let slope = dg(r);
        let next = r - gr / slope;
        r = if slope.is_finite() && next.is_finite() && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    // Bisection cannot fail on the bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).abs() <= tol || (hi - lo) <= f64::EPSILON * (1.0 + hi) {
            return Ok(mid);
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(WfrError::ScalarSolve(format!(
        "reaction cell solve stalled: mu={mu}, s={s}, U={u}, h={h}"
    )))
}

/// Closed-form Fisher-Rao update of the nutrient field:
/// `c <- c_half / (1 + (h/2) rho_half)^2` pointwise.
pub fn fr_step_nutrient_c(
    c_half: &DensityField,
    rho_half: &DensityField,
    h: f64,
) -> Result<DensityField> {
    c_half.as_cell_field().check_same_grid(rho_half.as_cell_field())?;
    let values: Vec<f64> = c_half
        .values()
        .iter()
        .zip(rho_half.values())
        .map(|(&c, &r)| {
            let d = 1.0 + 0.5 * h * r;
            c / (d * d)
        })
        .collect();
    DensityField::from_values(c_half.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{bisect_root, brute_force_pointwise, pseudo_random_density};

    #[test]
    fn fr_distance_constants() {
        let g = Grid::unit(1, 32).unwrap();
        let zero = DensityField::zeros(&g);
        let one = DensityField::constant(&g, 1.0).unwrap();
        let four = DensityField::constant(&g, 4.0).unwrap();

        assert_eq!(fr_distance(&one, &one).unwrap(), 0.0);
        let d10 = fr_distance(&one, &zero).unwrap();
        assert!((d10 - 4.0).abs() < 1e-12, "got {d10}");
        let d41 = fr_distance(&four, &one).unwrap();
        assert!((d41 - 4.0).abs() < 1e-12, "got {d41}");
    }

    #[test]
    fn fr_distance_is_a_metric_after_square_root() {
        let g = Grid::unit(1, 40).unwrap();
        for seed in 0..20u64 {
            let a = pseudo_random_density(&g, 3 * seed);
            let b = pseudo_random_density(&g, 3 * seed + 1);
            let c = pseudo_random_density(&g, 3 * seed + 2);
            let dab = fr_distance(&a, &b).unwrap();
            let dba = fr_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() <= 1e-12 * (1.0 + dab));
            let tri =
                fr_distance(&a, &c).unwrap().sqrt() - dab.sqrt() - fr_distance(&b, &c).unwrap().sqrt();
            assert!(tri <= 1e-8, "triangle violated by {tri}");
        }
    }

    #[test]
    fn zero_nonlinearity_constant_potential_is_closed_form() {
        // out = mu / (1 + h U / 2)^2, linear in sqrt(rho).
        let g = Grid::unit(1, 16).unwrap();
        let spec = ReactionSpec::with_uniform_potential(&g, Nonlinearity::Zero, 0.7).unwrap();
        let mu = DensityField::from_fn(&g, |x| 0.5 + x[0]).unwrap();
        let h = 0.2;
        let out = fisher_rao_step(&mu, &spec, h).unwrap();
        let factor = 1.0 / (1.0 + 0.5 * h * 0.7).powi(2);
        for (&o, &m) in out.values().iter().zip(mu.values()) {
            assert!((o - factor * m).abs() < 1e-14, "got {o}, want {}", factor * m);
        }
    }

    #[test]
    fn empty_cells_stay_empty() {
        let g = Grid::unit(1, 32).unwrap();
        let spec = ReactionSpec::with_uniform_potential(&g, Nonlinearity::Power(2.0), -0.5).unwrap();
        let mu = DensityField::from_fn(&g, |x| if x[0] > 0.5 { 1.0 } else { 0.0 }).unwrap();
        let out = fisher_rao_step(&mu, &spec, 0.05).unwrap();
        for (&o, &m) in out.values().iter().zip(mu.values()) {
            if m == 0.0 {
                assert_eq!(o, 0.0);
            } else {
                assert!(o > 0.0);
            }
        }
    }

    #[test]
    fn quadratic_reaction_matches_scalar_root() {
        // F2' = 2 rho, U = 0, mu = 1, h = 0.1: r + 0.1 r^3 = 1.
        let g = Grid::unit(1, 8).unwrap();
        let spec = ReactionSpec::with_uniform_potential(&g, Nonlinearity::Power(2.0), 0.0).unwrap();
        let mu = DensityField::constant(&g, 1.0).unwrap();
        let out = fisher_rao_step(&mu, &spec, 0.1).unwrap();
        let r_star = bisect_root(|r| r + 0.1 * r * r * r - 1.0, 0.0, 1.0, 1e-12).unwrap();
        let want = r_star * r_star;
        assert!((want - 0.8496).abs() < 1e-3, "oracle sanity: {want}");
        for &o in out.values() {
            assert!((o - want).abs() < 1e-10, "got {o}, want {want}");
        }
    }

    #[test]
    fn step_matches_brute_force_minimizer() {
        // Golden-section on the pointwise objective agrees with the Newton
        // solve across nonlinearities and potentials.
        let g = Grid::unit(1, 4).unwrap();
        let h = 0.05;
        let cases: Vec<(Nonlinearity, f64, f64)> = vec![
            (Nonlinearity::Power(2.0), 1.0, 0.4),
            (Nonlinearity::Power(3.0), 1.0, -0.8),
            (Nonlinearity::Power(10.0), 0.5, -1.0),
            (Nonlinearity::Zero, 1.0, 2.0),
        ];
        for (nl, s, u) in cases {
            let spec = ReactionSpec::with_uniform_scale(
                &g,
                nl,
                s,
                CellField::constant(&g, u),
            )
            .unwrap();
            for mu_c in [0.05, 0.4, 1.0, 2.5] {
                let mu = DensityField::constant(&g, mu_c).unwrap();
                let out = fisher_rao_step(&mu, &spec, h).unwrap();
                let objective = |rho: f64| {
                    4.0 * (rho.sqrt() - mu_c.sqrt()).powi(2) / (2.0 * h)
                        + s * nl.value(rho)
                        + u * rho
                };
                let oracle = brute_force_pointwise(objective, 0.0, 4.0 * mu_c + 1.0).unwrap();
                let got = out.values()[0];
                assert!(
                    (got - oracle).abs() < 1e-9,
                    "{nl:?} s={s} u={u} mu={mu_c}: got {got}, oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn sandwich_holds_pointwise() {
        let g = Grid::unit(1, 64).unwrap();
        let spec = ReactionSpec::new(
            &g,
            Nonlinearity::Power(2.0),
            CellField::from_fn(&g, |x| 1.5 * (x[0] - 0.4)),
        )
        .unwrap();
        let mu = pseudo_random_density(&g, 7);
        let h = 0.05;
        let (_, report) = fisher_rao_step_detailed(&mu, &spec, h, &FrConfig::default()).unwrap();
        assert_eq!(report.violations, 0, "sandwich violations: {report:?}");
        // The spec-level constant C = 3 max U^- dominates the bracket bound.
        let c_spec = 3.0 * spec.max_negative_potential();
        assert!(report.max_ratio <= 1.0 + c_spec * h + 1e-9, "{report:?}");
    }

    #[test]
    fn hele_shaw_cap_holds_for_moderate_and_large_exponents() {
        let g = Grid::unit(1, 64).unwrap();
        let mu = DensityField::from_fn(&g, |x| (4.0 * x[0]).sin().abs().min(1.0)).unwrap();
        for m in [10.0, 100.0] {
            let spec = ReactionSpec::hele_shaw(&g, m).unwrap();
            assert_eq!(spec.saturation_cap(), Some(1.0));
            let out = fisher_rao_step(&mu, &spec, 0.01).unwrap();
            for &o in out.values() {
                assert!(o <= 1.0 + 1e-12, "m={m}: output {o} above the cap");
            }
        }
    }

    #[test]
    fn hele_shaw_sandwich_has_unit_order_upper_factor() {
        // Upper factor 1/(1 - h/2)^2 = 1 + h + O(h^2), uniformly in m.
        let g = Grid::unit(1, 32).unwrap();
        let h = 0.005;
        for m in [10.0, 100.0] {
            let spec = ReactionSpec::hele_shaw(&g, m).unwrap();
            let mu = DensityField::from_fn(&g, |x| 0.9 * x[0]).unwrap();
            let (_, report) = fisher_rao_step_detailed(&mu, &spec, h, &FrConfig::default()).unwrap();
            assert_eq!(report.violations, 0);
            assert!(
                report.max_ratio <= 1.0 + h + h * h,
                "m={m}: max ratio {} above 1 + h + h^2",
                report.max_ratio
            );
            assert!(report.min_ratio >= report.bounds.lower - 1e-9, "{report:?}");
        }
    }

    #[test]
    fn objective_decreases_against_trivial_competitor() {
        // FR^2(out, mu)/(2h) + E(out) <= E(mu).
        let g = Grid::unit(1, 32).unwrap();
        let spec = ReactionSpec::new(
            &g,
            Nonlinearity::Power(3.0),
            CellField::from_fn(&g, |x| (3.0 * x[0]).cos()),
        )
        .unwrap();
        let mu = pseudo_random_density(&g, 42);
        let h = 0.02;
        let out = fisher_rao_step(&mu, &spec, h).unwrap();
        let lhs = fr_distance(&out, &mu).unwrap() / (2.0 * h) + spec.energy_value(&out).unwrap();
        let rhs = spec.energy_value(&mu).unwrap();
        assert!(lhs <= rhs + 1e-10, "objective grew: {lhs} vs {rhs}");
    }

    #[test]
    fn optimality_residual_is_tiny() {
        let g = Grid::unit(1, 128).unwrap();
        let spec = ReactionSpec::with_uniform_potential(&g, Nonlinearity::Power(2.0), -0.7).unwrap();
        let mu = pseudo_random_density(&g, 11);
        let (_, report) = fisher_rao_step_detailed(&mu, &spec, 0.05, &FrConfig::default()).unwrap();
        assert!(
            report.max_scaled_residual <= 1e-10,
            "scaled residual {}",
            report.max_scaled_residual
        );
    }

    #[test]
    fn rejects_too_large_time_step() {
        let g = Grid::unit(1, 8).unwrap();
        let spec = ReactionSpec::with_uniform_potential(&g, Nonlinearity::Zero, 30.0).unwrap();
        let mu = DensityField::constant(&g, 1.0).unwrap();
        assert!(matches!(
            fisher_rao_step(&mu, &spec, 0.05),
            Err(WfrError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn nutrient_update_is_closed_form() {
        let g = Grid::unit(1, 16).unwrap();
        let c_half = DensityField::constant(&g, 1.0).unwrap();
        let rho_half = DensityField::constant(&g, 1.0).unwrap();
        let out = fr_step_nutrient_c(&c_half, &rho_half, 0.02).unwrap();
        let want = 1.0 / (1.01_f64).powi(2);
        for &v in out.values() {
            assert!((v - want).abs() < 1e-15, "got {v}, want {want}");
        }

        // rho = 0 leaves c unchanged.
        let unchanged = fr_step_nutrient_c(&c_half, &DensityField::zeros(&g), 0.02).unwrap();
        assert_eq!(unchanged.values(), c_half.values());
    }

    #[test]
    fn nutrient_update_obeys_two_sided_bound() {
        // (1 - h) c_half <= out <= c_half whenever rho_half <= 1.
        let g = Grid::unit(1, 64).unwrap();
        let c_half = pseudo_random_density(&g, 5);
        let rho_half = DensityField::from_fn(&g, |x| x[0].min(1.0)).unwrap();
        let h = 0.04;
        let out = fr_step_nutrient_c(&c_half, &rho_half, h).unwrap();
        for (&o, &c) in out.values().iter().zip(c_half.values()) {
            assert!(o <= c + 1e-15, "c grew: {o} > {c}");
            assert!(o >= (1.0 - h) * c - 1e-15, "c fell too fast: {o} < {}", (1.0 - h) * c);
        }
    }

    #[test]
    fn nutrient_spec_reduces_to_scaled_tumor_energy_when_constants_match() {
        // c = 0 and c1 = c2 make the nutrient energy c1 * F_m with no linear term.
        let g = Grid::unit(1, 16).unwrap();
        let c = DensityField::zeros(&g);
        let spec = ReactionSpec::nutrient(100.0, &c, 0.5, 0.5).unwrap();
        let mu = DensityField::constant(&g, 0.8).unwrap();
        let out_nutrient = fisher_rao_step(&mu, &spec, 0.01).unwrap();
        let plain = ReactionSpec::with_uniform_scale(
            &g,
            Nonlinearity::Power(100.0),
            0.5,
            CellField::zeros(&g),
        )
        .unwrap();
        let out_plain = fisher_rao_step(&mu, &plain, 0.01).unwrap();
        let gap = out_nutrient.l1_distance(&out_plain).unwrap();
        assert!(gap <= 1e-12, "L1 gap {gap}");
    }
}
