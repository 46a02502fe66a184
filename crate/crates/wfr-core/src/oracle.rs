//! Independent reference implementations used only by tests and the
//! `validate` command: exact 1D Wasserstein via inverse CDFs, brute-force
//! scalar minimization, and an explicit finite-difference reference solver.
//!
//! Nothing here shares numerics with the solver modules; the whole point is
//! an independent route to the same quantities.

use crate::error::{Result, WfrError};
use crate::grid::{CellField, DensityField, Grid};

/// Quantile representation of a 1D density: cumulative masses at cell right
/// edges plus the geometry needed to invert the piecewise-linear CDF.
#[derive(Debug, Clone)]
pub struct QuantileRepresentation {
    cumulative: Vec<f64>,
    density: Vec<f64>,
    origin: f64,
    dx: f64,
    total_mass: f64,
}

impl QuantileRepresentation {
    pub fn new(rho: &DensityField) -> Result<Self> {
        let grid = rho.grid();
        if grid.dim() != 1 {
            return Err(WfrError::Config("quantile representation is 1D only".to_string()));
        }
        let dx = grid.spacing()[0];
        let mut cumulative = Vec::with_capacity(grid.num_cells());
        let mut acc = 0.0;
        for &v in rho.values() {
            acc += v * dx;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(WfrError::ZeroMass);
        }
        Ok(Self {
            cumulative,
            density: rho.values().to_vec(),
            origin: grid.origin()[0],
            dx,
            total_mass: acc,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Inverse CDF of the normalized measure at `s` in (0, 1).
    pub fn quantile(&self, s: f64) -> f64 {
        let target = s.clamp(0.0, 1.0) * self.total_mass;
        // First cell whose cumulative mass reaches the target.
        let mut lo = 0usize;
        let mut hi = self.cumulative.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.cumulative[mid] < target {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let before = if lo == 0 { 0.0 } else { self.cumulative[lo - 1] };
        let left_edge = self.origin + lo as f64 * self.dx;
        let rho = self.density[lo];
        if rho <= 0.0 {
            // Flat CDF stretch: the quantile jumps to the cell boundary.
            return left_edge;
        }
        left_edge + (target - before) / rho
    }
}

/// Exact squared 2-Wasserstein distance between two 1D densities of equal
/// mass: `mass * integral_0^1 (Q0(s) - Q1(s))^2 ds` by composite midpoint
/// quadrature over the inverse CDFs.
pub fn w2_exact_1d(rho0: &DensityField, rho1: &DensityField) -> Result<f64> {
    w2_exact_1d_with_nodes(rho0, rho1, 20_000)
}

pub fn w2_exact_1d_with_nodes(
    rho0: &DensityField,
    rho1: &DensityField,
    nodes: usize,
) -> Result<f64> {
    let m0 = rho0.mass();
    let m1 = rho1.mass();
    let gap = (m0 - m1).abs() / m0.max(m1).max(f64::MIN_POSITIVE);
    if gap > 1e-10 {
        return Err(WfrError::MassMismatch { lhs: m0, rhs: m1, rel_gap: gap });
    }
    let q0 = QuantileRepresentation::new(rho0)?;
    let q1 = QuantileRepresentation::new(rho1)?;
    let n = nodes.max(10_000);
    let mut acc = 0.0;
    for k in 0..n {
        let s = (k as f64 + 0.5) / n as f64;
        let d = q0.quantile(s) - q1.quantile(s);
        acc += d * d;
    }
    Ok(m0 * acc / n as f64)
}

/// Golden-section search for the minimizer of a unimodal function.
///
/// Errors when the minimum sits on the bracket boundary with the function
/// still decreasing outward, i.e. the bracket does not contain a minimum.
pub fn brute_force_pointwise(
    objective: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(hi > lo) {
        return Err(WfrError::ScalarSolve(format!("empty bracket [{lo}, {hi}]")));
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    // |b - a| shrinks by phi each step; 200 steps reach 1e-12 from any
    // reasonable bracket width.
    for _ in 0..220 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d);
        }
    }
    let x = 0.5 * (a + b);
    let width = hi - lo;
    let probe = 1e-9 * width;
    if x - lo < probe && objective(lo) < objective(lo + probe) {
        return Err(WfrError::ScalarSolve(
            "bracket does not contain a minimum (decreasing at lower end)".to_string(),
        ));
    }
    if hi - x < probe && objective(hi) < objective(hi - probe) {
        return Err(WfrError::ScalarSolve(
            "bracket does not contain a minimum (decreasing at upper end)".to_string(),
        ));
    }
    Ok(x)
}

/// Plain bisection for a root of an increasing-through-zero function.
pub fn bisect_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(WfrError::ScalarSolve(format!(
            "no sign change on [{lo}, {hi}]: f = ({fa}, {fb})"
        )));
    }
    for _ in 0..500 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 || (b - a).abs() <= tol {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Diffusion law of the reference solver.
#[derive(Debug, Clone, Copy)]
pub enum FdDiffusion {
    /// Linear diffusion, flux potential P(rho) = rho.
    Linear,
    /// Porous-medium diffusion with exponent m, flux potential P(rho) = rho^m.
    PorousMedium(f64),
    /// Diffusion disabled; reaction-only reference.
    None,
}

impl FdDiffusion {
    fn flux_potential(&self, rho: f64) -> f64 {
        match *self {
            FdDiffusion::Linear => rho,
            FdDiffusion::PorousMedium(m) => rho.max(0.0).powf(m),
            FdDiffusion::None => 0.0,
        }
    }

    fn flux_potential_slope(&self, rho: f64) -> f64 {
        match *self {
            FdDiffusion::Linear => 1.0,
            FdDiffusion::PorousMedium(m) => m * rho.max(0.0).powf(m - 1.0),
            FdDiffusion::None => 0.0,
        }
    }
}

/// Configuration of the explicit finite-difference reference run.
#[derive(Debug, Clone)]
pub struct FdScalarConfig {
    pub diffusion: FdDiffusion,
    /// Drift potential V1; the flux carries `rho * dV1/dx`.
    pub v1: Option<CellField>,
    /// Reaction nonlinearity exponent m2 for `rho F2'(rho)` with
    /// `F2'(z) = (m2/(m2-1)) z^(m2-1)`; `None` switches that term off.
    pub reaction_m2: Option<f64>,
    /// Reaction potential V2 in `-rho V2`.
    pub v2: Option<CellField>,
    /// Interval between recorded snapshots.
    pub snapshot_dt: f64,
    /// Final time.
    pub t_end: f64,
}

/// Explicit conservative finite differences for
/// `d rho/dt = d/dx (dP1(rho)/dx + rho dV1/dx) - rho (F2'(rho) + V2)`
/// in 1D with zero-flux boundaries; micro-steps are chosen by a CFL bound.
///
/// Returns `(time, density)` pairs at `t = 0, snapshot_dt, 2 snapshot_dt, ...`.
pub fn fd_reference_scalar(
    cfg: &FdScalarConfig,
    rho0: &DensityField,
) -> Result<Vec<(f64, DensityField)>> {
    let grid = rho0.grid().clone();
    if grid.dim() != 1 {
        return Err(WfrError::Config("fd reference solver is 1D only".to_string()));
    }
    let n = grid.num_cells();
    let dx = grid.spacing()[0];

    let dv1: Vec<f64> = match &cfg.v1 {
        Some(v1) => {
            v1.check_same_grid(rho0.as_cell_field())?;
            (0..n - 1)
                .map(|i| (v1.values()[i + 1] - v1.values()[i]) / dx)
                .collect()
        }
        None => vec![0.0; n - 1],
    };
    let v2: Vec<f64> = match &cfg.v2 {
        Some(v2) => {
            v2.check_same_grid(rho0.as_cell_field())?;
            v2.values().to_vec()
        }
        None => vec![0.0; n],
    };
    let reaction_rate = |rho: f64, cell: usize| -> f64 {
        let f2p = match cfg.reaction_m2 {
            Some(m2) => m2 / (m2 - 1.0) * rho.max(0.0).powf(m2 - 1.0),
            None => 0.0,
        };
        f2p + v2[cell]
    };

    let steps = (cfg.t_end / cfg.snapshot_dt).round() as usize;
    let mut rho: Vec<f64> = rho0.values().to_vec();
    let mut out = vec![(0.0, rho0.clone())];

    for step in 0..steps {
        let mut remaining = cfg.snapshot_dt;
        while remaining > 1e-15 * cfg.snapshot_dt {
            // CFL: diffusion, drift and reaction each bound the micro-step.
            let max_slope = rho
                .iter()
                .fold(0.0_f64, |m, &r| m.max(cfg.diffusion.flux_potential_slope(r)));
            let max_drift = dv1.iter().fold(0.0_f64, |m, &g| m.max(g.abs()));
            let max_reaction = rho
                .iter()
                .enumerate()
                .fold(0.0_f64, |m, (i, &r)| m.max(reaction_rate(r, i).abs()));
            let mut dt = remaining;
            if max_slope > 0.0 {
                dt = dt.min(0.4 * dx * dx / (2.0 * max_slope));
            }
            if max_drift > 0.0 {
                dt = dt.min(0.4 * dx / max_drift);
            }
            if max_reaction > 0.0 {
                dt = dt.min(0.4 / max_reaction);
            }
            let dt = dt.min(remaining);

            // Face fluxes; boundary faces carry none.
            let mut flux = vec![0.0; n - 1];
            for i in 0..n - 1 {
                let diff = (cfg.diffusion.flux_potential(rho[i + 1])
                    - cfg.diffusion.flux_potential(rho[i]))
                    / dx;
                let drift = 0.5 * (rho[i] + rho[i + 1]) * dv1[i];
                flux[i] = diff + drift;
            }
            let mut next = vec![0.0; n];
            for i in 0..n {
                let right = if i < n - 1 { flux[i] } else { 0.0 };
                let left = if i > 0 { flux[i - 1] } else { 0.0 };
                let transport = (right - left) / dx;
                let reaction = rho[i] * reaction_rate(rho[i], i);
                next[i] = (rho[i] + dt * (transport - reaction)).max(0.0);
            }
            rho = next;
            remaining -= dt;
        }
        let t = (step + 1) as f64 * cfg.snapshot_dt;
        out.push((t, DensityField::from_values(&grid, rho.clone())?));
    }
    Ok(out)
}

/// Deterministic pseudo-random density for validation suites; splitmix64
/// keeps the stream identical across platforms and runs.
pub fn pseudo_random_density(grid: &Grid, seed: u64) -> DensityField {
    let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let values: Vec<f64> = (0..grid.num_cells())
        .map(|_| (next() >> 11) as f64 / (1u64 << 53) as f64 + 1e-3)
        .collect();
    DensityField::from_values(grid, values).expect("generated values are positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike(grid: &Grid, at: f64) -> DensityField {
        let dx = grid.spacing()[0];
        let mut vals = vec![0.0; grid.num_cells()];
        let i = (((at - grid.origin()[0]) / dx).floor() as usize).min(grid.num_cells() - 1);
        vals[i] = 1.0 / dx;
        DensityField::from_values(grid, vals).unwrap()
    }

    #[test]
    fn w2_of_identical_densities_is_zero() {
        let g = Grid::unit(1, 64).unwrap();
        let rho = DensityField::from_fn(&g, |x| 1.0 + (6.0 * x[0]).sin().abs()).unwrap();
        let d = w2_exact_1d(&rho, &rho).unwrap();
        assert!(d.abs() < 1e-24, "got {d}");
    }

    #[test]
    fn w2_of_translated_spikes_is_squared_distance() {
        let g = Grid::unit(1, 200).unwrap();
        let a = spike(&g, 0.3);
        let b = spike(&g, 0.7);
        let d = w2_exact_1d(&a, &b).unwrap();
        let dx = g.spacing()[0];
        assert!(
            (d - 0.16).abs() <= 2.0 * dx,
            "got {d}, want 0.16 within {}",
            2.0 * dx
        );
    }

    #[test]
    fn w2_of_shifted_uniform_blocks() {
        // Uniform on [0, 1/2] to uniform on [1/2, 1]: optimal map is the
        // translation by 1/2, cost 1/4.
        let g = Grid::unit(1, 128).unwrap();
        let a = DensityField::from_fn(&g, |x| if x[0] < 0.5 { 2.0 } else { 0.0 }).unwrap();
        let b = DensityField::from_fn(&g, |x| if x[0] >= 0.5 { 2.0 } else { 0.0 }).unwrap();
        let d = w2_exact_1d(&a, &b).unwrap();
        assert!((d - 0.25).abs() < 1e-4, "got {d}");
    }

    #[test]
    fn w2_rejects_mass_mismatch() {
        let g = Grid::unit(1, 16).unwrap();
        let a = DensityField::constant(&g, 1.0).unwrap();
        let b = DensityField::constant(&g, 1.5).unwrap();
        assert!(matches!(w2_exact_1d(&a, &b), Err(WfrError::MassMismatch { .. })));
    }

    #[test]
    fn w2_square_root_satisfies_triangle_inequality() {
        let g = Grid::unit(1, 48).unwrap();
        for seed in 0..12u64 {
            let a = pseudo_random_density(&g, seed * 3 + 1);
            let m = a.mass();
            let b = pseudo_random_density(&g, seed * 3 + 2)
                .renormalized_to_mass(m)
                .unwrap();
            let c = pseudo_random_density(&g, seed * 3 + 3)
                .renormalized_to_mass(m)
                .unwrap();
            let dab = w2_exact_1d(&a, &b).unwrap().sqrt();
            let dbc = w2_exact_1d(&b, &c).unwrap().sqrt();
            let dac = w2_exact_1d(&a, &c).unwrap().sqrt();
            assert!(
                dac <= dab + dbc + 1e-8,
                "seed {seed}: {dac} > {dab} + {dbc}"
            );
        }
    }

    #[test]
    fn golden_section_recovers_known_minimizers() {
        // (rho - 3)^2 / 2 + rho^2 has its minimum at rho = 1.
        let x = brute_force_pointwise(|r| (r - 3.0) * (r - 3.0) / 2.0 + r * r, 0.0, 10.0).unwrap();
        assert!((x - 1.0).abs() < 1e-9, "got {x}");

        // Identity prox: (rho - z)^2 minimized at z.
        let z = 1.7;
        let x = brute_force_pointwise(|r| (r - z) * (r - z), 0.0, 10.0).unwrap();
        assert!((x - z).abs() < 1e-9, "got {x}");
    }

    #[test]
    fn golden_section_rejects_bracket_without_minimum() {
        assert!(brute_force_pointwise(|r| -r, 0.0, 1.0).is_err());
        assert!(brute_force_pointwise(|r| r, 0.0, 1.0).is_err());
    }

    #[test]
    fn bisection_finds_omega_constant() {
        // rho + log rho = 0 at the Omega constant.
        let x = bisect_root(|r| r + r.ln(), 0.1, 1.0, 1e-14).unwrap();
        assert!((x - 0.567_143_290_409_783_8).abs() < 1e-10, "got {x}");
    }

    #[test]
    fn fd_reference_conserves_mass_without_reaction() {
        let g = Grid::unit(1, 64).unwrap();
        let rho0 = DensityField::from_fn(&g, |x| (-(x[0] - 0.5).powi(2) / 0.005).exp()).unwrap();
        let cfg = FdScalarConfig {
            diffusion: FdDiffusion::Linear,
            v1: None,
            reaction_m2: None,
            v2: None,
            snapshot_dt: 0.01,
            t_end: 0.05,
        };
        let traj = fd_reference_scalar(&cfg, &rho0).unwrap();
        let m0 = rho0.mass();
        for (t, rho) in &traj {
            assert!(
                (rho.mass() - m0).abs() <= 1e-12 * m0,
                "t={t}: mass {} vs {m0}",
                rho.mass()
            );
        }
    }

    #[test]
    fn fd_reference_zero_stays_zero() {
        let g = Grid::unit(1, 32).unwrap();
        let cfg = FdScalarConfig {
            diffusion: FdDiffusion::PorousMedium(2.0),
            v1: None,
            reaction_m2: Some(2.0),
            v2: None,
            snapshot_dt: 0.01,
            t_end: 0.03,
        };
        let traj = fd_reference_scalar(&cfg, &DensityField::zeros(&g)).unwrap();
        for (_, rho) in &traj {
            assert!(rho.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fd_reference_heat_flow_matches_image_sum_heat_kernel() {
        // Neumann heat flow on [0,1] equals the free-space kernel applied to
        // the evenly reflected data; a few images suffice at T = 0.05.
        let g = Grid::unit(1, 256).unwrap();
        let x0 = 0.5;
        let w2 = 0.002; // variance of the initial Gaussian bump
        let rho0 = DensityField::from_fn(&g, |x| {
            (-(x[0] - x0).powi(2) / (2.0 * w2)).exp() / (2.0 * std::f64::consts::PI * w2).sqrt()
        })
        .unwrap();
        let t_end = 0.05;
        let cfg = FdScalarConfig {
            diffusion: FdDiffusion::Linear,
            v1: None,
            reaction_m2: None,
            v2: None,
            snapshot_dt: t_end,
            t_end,
        };
        let traj = fd_reference_scalar(&cfg, &rho0).unwrap();
        let (_, fd_final) = traj.last().unwrap();

        // Gaussian initial data stays Gaussian: variance w2 + 2t per image.
        let var = w2 + 2.0 * t_end;
        let exact = CellField::from_fn(&g, |x| {
            let mut acc = 0.0;
            for k in -4i64..=4 {
                for &sx in &[x0, -x0] {
                    let center = 2.0 * k as f64 + sx;
                    acc += (-(x[0] - center).powi(2) / (2.0 * var)).exp()
                        / (2.0 * std::f64::consts::PI * var).sqrt();
                }
            }
            acc
        });
        let err = fd_final.as_cell_field().l1_distance(&exact).unwrap();
        assert!(err < 1e-3, "L1 distance to heat kernel solution: {err}");
    }

    #[test]
    fn fd_reference_reaction_only_matches_ode() {
        // With diffusion off and U = lambda the density decays like the ODE
        // d rho/dt = -lambda rho.
        let g = Grid::unit(1, 16).unwrap();
        let lambda = 0.8;
        let rho0 = DensityField::constant(&g, 2.0).unwrap();
        let cfg = FdScalarConfig {
            diffusion: FdDiffusion::None,
            v1: None,
            reaction_m2: None,
            v2: Some(CellField::constant(&g, lambda)),
            snapshot_dt: 0.05,
            t_end: 0.5,
        };
        let traj = fd_reference_scalar(&cfg, &rho0).unwrap();
        for (t, rho) in &traj {
            let want = 2.0 * (-lambda * t).exp();
            for &v in rho.values() {
                assert!(
                    (v - want).abs() < 2e-3,
                    "t={t}: got {v}, ODE value {want}"
                );
            }
        }
    }
}
