//! Macro-particle reference solver.
//!
//! In one dimension the field of point charges is exact: at `x` it is half
//! the signed charge strictly to the left minus half the signed charge
//! strictly to the right. Particles are advanced with kick-drift-kick
//! leapfrog.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phase_space::{
    kinetic_energy, speed, Charge, ModelKind, PhaseGrid, SpeciesState, SystemState,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSpecies {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Weight of every particle of this species.
    pub weight: f64,
    pub mass: f64,
    pub charge: Charge,
}

impl ParticleSpecies {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.len() as f64
    }

    fn signed_weight(&self) -> f64 {
        self.charge.sign() * self.weight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub f: ParticleSpecies,
    pub g: ParticleSpecies,
    pub model: ModelKind,
    pub t: f64,
}

/// Draws `n` particles per species from the grid densities.
///
/// Stratified in mass: particle `k` takes the quantile `(k + u_k) / n` of
/// the cell-mass distribution, then a uniform position inside that cell.
/// Both species get the weight `(M_f + M_g) / (2 n)`, which makes the
/// ensemble exactly neutral.
pub fn sample(state: &SystemState, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "particle count must be at least 1".into(),
        ));
    }
    let grid = &state.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mf, mg) = (state.mass_f(), state.mass_g());
    if !(mf > 0.0 && mg > 0.0) {
        return Err(Error::InvalidParameter(
            "cannot sample an empty species".into(),
        ));
    }
    let weight = 0.5 * (mf + mg) / n as f64;
    let f = sample_species(&state.f, grid, n, weight, &mut rng)?;
    let g = sample_species(&state.g, grid, n, weight, &mut rng)?;
    Ok(ParticleEnsemble {
        f,
        g,
        model: state.model,
        t: state.t,
    })
}

fn sample_species(
    s: &SpeciesState,
    grid: &PhaseGrid,
    n: usize,
    weight: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ParticleSpecies> {
    let mut cdf = Vec::with_capacity(s.values.len());
    let mut acc = 0.0;
    for &v in &s.values {
        acc += v.max(0.0);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidParameter(
            "cannot sample an empty species".into(),
        ));
    }
    let (dx, dv) = (grid.dx(), grid.dv());
    let mut x = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for k in 0..n {
        let target = (k as f64 + rng.random::<f64>()) / n as f64 * acc;
        let cell = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let (i, j) = (cell / grid.n_v, cell % grid.n_v);
        x.push(grid.x_min + (i as f64 + rng.random::<f64>()) * dx);
        p.push(-grid.v_max + (j as f64 + rng.random::<f64>()) * dv);
    }
    Ok(ParticleSpecies {
        x,
        p,
        weight,
        mass: s.mass,
        charge: s.charge,
    })
}

/// Exact field at every particle, `f` particles first, then `g`.
///
/// Particles sharing a position exert no force on each other: half of each
/// such charge is counted on either side.
pub fn field_at_particles(ens: &ParticleEnsemble) -> Vec<f64> {
    let nf = ens.f.len();
    let n = nf + ens.g.len();
    let (qf, qg) = (ens.f.signed_weight(), ens.g.signed_weight());
    let mut order: Vec<(f64, f64, usize)> = ens
        .f
        .x
        .iter()
        .map(|&x| (x, qf))
        .chain(ens.g.x.iter().map(|&x| (x, qg)))
        .enumerate()
        .map(|(k, (x, q))| (x, q, k))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let total: f64 = order.iter().map(|c| c.1).sum();
    let mut e = vec![0.0; n];
    let mut left = 0.0;
    let mut start = 0;
    while start < n {
        let x0 = order[start].0;
        let mut end = start;
        let mut group = 0.0;
        while end < n && order[end].0 == x0 {
            group += order[end].1;
            end += 1;
        }
        let val = 0.5 * (left - (total - left - group));
        for c in &order[start..end] {
            e[c.2] = val;
        }
        left += group;
        start = end;
    }
    e
}

/// Exact field of the ensemble at arbitrary points (a particle sitting
/// exactly at a point counts half on each side).
pub fn field_at_points(ens: &ParticleEnsemble, points: &[f64]) -> Vec<f64> {
    let mut charges: Vec<(f64, f64)> = ens
        .f
        .x
        .iter()
        .map(|&x| (x, ens.f.signed_weight()))
        .chain(ens.g.x.iter().map(|&x| (x, ens.g.signed_weight())))
        .collect();
    charges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix = Vec::with_capacity(charges.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for c in &charges {
        acc += c.1;
        prefix.push(acc);
    }
    points
        .iter()
        .map(|&x| {
            let lo = charges.partition_point(|c| c.0 < x);
            let hi = charges.partition_point(|c| c.0 <= x);
            let left = prefix[lo];
            let right = acc - prefix[hi];
            0.5 * (left - right)
        })
        .collect()
}

fn kick(ens: &mut ParticleEnsemble, e: &[f64], dt: f64) {
    let nf = ens.f.len();
    let (sf, sg) = (ens.f.charge.sign(), ens.g.charge.sign());
    for (p, &ek) in ens.f.p.iter_mut().zip(&e[..nf]) {
        *p += sf * ek * dt;
    }
    for (p, &ek) in ens.g.p.iter_mut().zip(&e[nf..]) {
        *p += sg * ek * dt;
    }
}

fn drift(ens: &mut ParticleEnsemble, dt: f64) {
    let model = ens.model;
    for s in [&mut ens.f, &mut ens.g] {
        let m = s.mass;
        for (x, &p) in s.x.iter_mut().zip(&s.p) {
            *x += speed(p, model, m) * dt;
        }
    }
}

/// One kick-drift-kick step.
pub fn pic_step(ens: &ParticleEnsemble, dt: f64) -> Result<ParticleEnsemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut next = ens.clone();
    let e = field_at_particles(&next);
    kick(&mut next, &e, 0.5 * dt);
    drift(&mut next, dt);
    let e = field_at_particles(&next);
    kick(&mut next, &e, 0.5 * dt);
    next.t += dt;
    Ok(next)
}

/// Runs `n_steps` steps of size `dt`, sharing the field evaluation between
/// the closing kick of one step and the opening kick of the next.
pub fn pic_advance(ens: &ParticleEnsemble, dt: f64, n_steps: usize) -> Result<ParticleEnsemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut cur = ens.clone();
    if n_steps == 0 {
        return Ok(cur);
    }
    let mut e = field_at_particles(&cur);
    for _ in 0..n_steps {
        kick(&mut cur, &e, 0.5 * dt);
        drift(&mut cur, dt);
        e = field_at_particles(&cur);
        kick(&mut cur, &e, 0.5 * dt);
        cur.t += dt;
    }
    Ok(cur)
}

/// Total momentum `sum w p` over both species.
pub fn total_momentum(ens: &ParticleEnsemble) -> f64 {
    [&ens.f, &ens.g]
        .iter()
        .map(|s| s.weight * s.p.iter().sum::<f64>())
        .sum()
}

/// `1/2 int E^2 dx` of the point-charge field, from the piecewise-constant
/// field between consecutive particles.
pub fn field_energy(ens: &ParticleEnsemble) -> f64 {
    let mut charges: Vec<(f64, f64)> = ens
        .f
        .x
        .iter()
        .map(|&x| (x, ens.f.signed_weight()))
        .chain(ens.g.x.iter().map(|&x| (x, ens.g.signed_weight())))
        .collect();
    charges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = charges.iter().map(|c| c.1).sum();
    let mut left = 0.0;
    let mut energy = 0.0;
    for w in charges.windows(2) {
        left += w[0].1;
        let e = left - 0.5 * total;
        energy += 0.5 * e * e * (w[1].0 - w[0].0);
    }
    energy
}

/// Same quantity from the pair interaction `-1/2 sum_{i<j} q_i q_j |x_i - x_j|`
/// (valid for a neutral ensemble). O(N^2); test use only.
pub fn field_energy_pairwise(ens: &ParticleEnsemble) -> f64 {
    let charges: Vec<(f64, f64)> = ens
        .f
        .x
        .iter()
        .map(|&x| (x, ens.f.signed_weight()))
        .chain(ens.g.x.iter().map(|&x| (x, ens.g.signed_weight())))
        .collect();
    let mut sum = 0.0;
    for (a, ca) in charges.iter().enumerate() {
        for cb in &charges[a + 1..] {
            sum += ca.1 * cb.1 * (ca.0 - cb.0).abs();
        }
    }
    -0.5 * sum
}

pub fn total_energy(ens: &ParticleEnsemble) -> f64 {
    let model = ens.model;
    let kinetic: f64 = [&ens.f, &ens.g]
        .iter()
        .map(|s| {
            s.weight
                * s.p
                    .iter()
                    .map(|&p| kinetic_energy(p, model, s.mass))
                    .sum::<f64>()
        })
        .sum();
    kinetic + field_energy(ens)
}

/// `Q = int E^2 (F + G) dx` as the particle sum `sum w E(x_k)^2`.
pub fn q_functional(ens: &ParticleEnsemble) -> f64 {
    let e = field_at_particles(ens);
    let nf = ens.f.len();
    ens.f.weight * e[..nf].iter().map(|x| x * x).sum::<f64>()
        + ens.g.weight * e[nf..].iter().map(|x| x * x).sum::<f64>()
}

/// Nearest-cell density `F(x_i)` of one species on the grid's x cells.
/// Particles outside the grid are dropped.
pub fn binned_density(s: &ParticleSpecies, grid: &PhaseGrid) -> Vec<f64> {
    let dx = grid.dx();
    let mut out = vec![0.0; grid.n_x];
    for &x in &s.x {
        let c = ((x - grid.x_min) / dx).floor();
        if c >= 0.0 && (c as usize) < grid.n_x {
            out[c as usize] += s.weight;
        }
    }
    out.iter_mut().for_each(|v| *v /= dx);
    out
}
