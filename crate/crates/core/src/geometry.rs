//! Domains, the boundary-distance weight and Muckenhoupt constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CLOSURE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `[0, L_1] x ... x [0, L_dim]`.
    Box,
    /// Ball of the given radius centred at the origin.
    Ball,
}

/// Computational domain with exact boundary distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Per-axis lengths for a box, `[radius]` for a ball.
    pub extents: Vec<f64>,
    pub dim: usize,
}

impl DomainSpec {
    pub fn unit_cube() -> Self {
        Self { kind: DomainKind::Box, extents: vec![1.0; 3], dim: 3 }
    }

    pub fn unit_interval() -> Self {
        Self { kind: DomainKind::Box, extents: vec![1.0], dim: 1 }
    }

    pub fn cuboid(extents: &[f64]) -> Result<Self> {
        let d = Self { kind: DomainKind::Box, extents: extents.to_vec(), dim: extents.len() };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        let d = Self { kind: DomainKind::Ball, extents: vec![radius], dim };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidDomain(format!("dimension {} not in 1..=3", self.dim)));
        }
        let expected = match self.kind {
            DomainKind::Box => self.dim,
            DomainKind::Ball => 1,
        };
        if self.extents.len() != expected {
            return Err(Error::InvalidDomain(format!(
                "expected {expected} extents, found {}",
                self.extents.len()
            )));
        }
        if self.extents.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::InvalidDomain("extents must be finite and positive".into()));
        }
        Ok(())
    }

    /// Lower and upper corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            DomainKind::Box => (vec![0.0; self.dim], self.extents.clone()),
            DomainKind::Ball => {
                let r = self.extents[0];
                (vec![-r; self.dim], vec![r; self.dim])
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Box => self.extents.iter().product(),
            DomainKind::Ball => {
                let r = self.extents[0];
                match self.dim {
                    1 => 2.0 * r,
                    2 => std::f64::consts::PI * r * r,
                    _ => 4.0 / 3.0 * std::f64::consts::PI * r * r * r,
                }
            }
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self.kind {
            DomainKind::Box => self
                .extents
                .iter()
                .zip(x)
                .map(|(&l, &xi)| xi.min(l - xi))
                .fold(f64::INFINITY, f64::min),
            DomainKind::Ball => {
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                self.extents[0] - n
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.signed_distance(x) >= -CLOSURE_TOL
    }

    /// Distance to the boundary clamped at zero; use for points known to be inside.
    pub fn distance_clamped(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }
}

/// Exact distance from `x` to the boundary of `domain`.
pub fn distance(domain: &DomainSpec, x: &[f64]) -> Result<f64> {
    if !domain.contains(x) {
        return Err(Error::OutsideDomain { point: x.to_vec() });
    }
    Ok(domain.distance_clamped(x))
}

/// `w(x) = d(x)^alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerWeight {
    pub alpha: f64,
    pub domain: DomainSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightValue {
    pub value: f64,
    /// Set when a negative power is evaluated on the boundary.
    pub overflow: bool,
}

impl PowerWeight {
    pub fn new(alpha: f64, domain: DomainSpec) -> Self {
        Self { alpha, domain }
    }

    pub fn at_distance(&self, d: f64) -> f64 {
        power(d, self.alpha)
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        self.at_distance(self.domain.distance_clamped(x))
    }
}

/// `d^alpha` with `0^0 = 1`.
#[inline]
pub fn power(d: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if d <= 0.0 {
        if alpha > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d.powf(alpha)
    }
}

pub fn weight_eval(w: &PowerWeight, x: &[f64]) -> Result<WeightValue> {
    let d = distance(&w.domain, x)?;
    let value = w.at_distance(d);
    Ok(WeightValue { value, overflow: value.is_infinite() })
}

/// Dyadic subdivisions of a cube covering the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicCubeFamily {
    pub origin: Vec<f64>,
    pub side: f64,
    pub max_level: usize,
}

impl DyadicCubeFamily {
    /// Smallest cube anchored at the lower bounding-box corner that covers the domain.
    pub fn covering(domain: &DomainSpec, max_level: usize) -> Self {
        let (lo, hi) = domain.bounding_box();
        let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        Self { origin: lo, side, max_level }
    }

    pub fn side_at(&self, level: usize) -> f64 {
        self.side / (1u64 << level) as f64
    }
}

/// Muckenhoupt `A_p` product `sup_Q (avg_Q w)(avg_Q w^{1/(1-p)})^{p-1}` over the family.
///
/// Cube averages are taken over `Q ∩ Ω` on a sub-grid that puts `quadrature_order` points
/// per axis into every finest-level cube, so the resolution improves as `max_level` grows.
/// Each point carries the exact average of `t^beta` over its sub-cell width in the distance
/// variable (see [`sample_power`]); a non-integrable boundary singularity keeps its midpoint
/// value and shows up as growth under refinement.
pub fn ap_constant(
    w: &PowerWeight,
    cubes: &DyadicCubeFamily,
    p: f64,
    quadrature_order: usize,
) -> Result<f64> {
    check_ap_args(w, p, quadrature_order)?;
    if w.domain.kind == DomainKind::Box {
        ap_box_counting(w, cubes, p, quadrature_order)
    } else {
        ap_sampled(w, cubes, p, quadrature_order)
    }
}

/// `ap_constant` for each maximal level in `levels`.
pub fn ap_refinement(
    w: &PowerWeight,
    p: f64,
    levels: &[usize],
    quadrature_order: usize,
) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&j| ap_constant(w, &DyadicCubeFamily::covering(&w.domain, j), p, quadrature_order))
        .collect()
}

fn check_ap_args(w: &PowerWeight, p: f64, q: usize) -> Result<()> {
    w.domain.validate()?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParams(format!("A_p needs p > 1, got {p}")));
    }
    if q == 0 {
        return Err(Error::InvalidParams("quadrature order must be positive".into()));
    }
    Ok(())
}

fn ap_product(sw: f64, ss: f64, n: f64, p: f64) -> f64 {
    (sw / n) * (ss / n).powf(p - 1.0)
}

/// Average of `t^beta` over `[d - half, d + half] ∩ [0, inf)`, or the midpoint value `d^beta`
/// when that interval reaches `0` and `t^beta` is not integrable there.
pub fn sample_power(d: f64, half: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    let lo = (d - half).max(0.0);
    let hi = d + half;
    if lo == 0.0 && beta <= -1.0 {
        return power(d, beta);
    }
    if beta == -1.0 {
        return (hi / lo).ln() / (hi - lo);
    }
    let e = beta + 1.0;
    (hi.powf(e) - lo.powf(e)) / (e * (hi - lo))
}

/// Reference implementation: explicit midpoint samples aggregated up the dyadic tree.
pub fn ap_sampled(w: &PowerWeight, cubes: &DyadicCubeFamily, p: f64, q: usize) -> Result<f64> {
    check_ap_args(w, p, q)?;
    let dim = w.domain.dim;
    let j_max = cubes.max_level;
    let per_axis = (1usize << j_max) * q;
    let delta = cubes.side / per_axis as f64;
    let sigma_exp = w.alpha / (1.0 - p);
    let fine = 1usize << j_max;
    let n_fine = fine.pow(dim as u32);
    let mut sums = vec![[0.0f64; 3]; n_fine];
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let total = per_axis.pow(dim as u32);
    for lin in 0..total {
        let mut r = lin;
        for a in 0..dim {
            idx[a] = r % per_axis;
            r /= per_axis;
            x[a] = cubes.origin[a] + (idx[a] as f64 + 0.5) * delta;
        }
        let d = w.domain.signed_distance(&x);
        if d <= 0.0 {
            continue;
        }
        let mut cell = 0;
        for a in (0..dim).rev() {
            cell = cell * fine + idx[a] / q;
        }
        let s = &mut sums[cell];
        s[0] += sample_power(d, 0.5 * delta, w.alpha);
        s[1] += sample_power(d, 0.5 * delta, sigma_exp);
        s[2] += 1.0;
    }
    aggregate_tree(sums, dim, j_max, p)
}

fn aggregate_tree(mut sums: Vec<[f64; 3]>, dim: usize, j_max: usize, p: f64) -> Result<f64> {
    let mut best: Option<f64> = None;
    let mut level = j_max;
    let mut n = 1usize << j_max;
    loop {
        for s in &sums {
            if s[2] > 0.0 {
                let v = ap_product(s[0], s[1], s[2], p);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        if level == 0 {
            break;
        }
        let m = n / 2;
        let mut coarse = vec![[0.0f64; 3]; m.pow(dim as u32)];
        for (lin, s) in sums.iter().enumerate() {
            let mut r = lin;
            let mut c = 0;
            let mut stride = 1;
            for _ in 0..dim {
                c += ((r % n) / 2) * stride;
                r /= n;
                stride *= m;
            }
            for t in 0..3 {
                coarse[c][t] += s[t];
            }
        }
        sums = coarse;
        n = m;
        level -= 1;
    }
    best.ok_or_else(|| Error::Degenerate("no dyadic cube meets the domain".into()))
}

/// Per-axis samples of one cube edge: sorted distances to the nearest face of
/// that axis with the weight and dual-weight values attached.
struct AxisSamples {
    t: Vec<f64>,
    w: Vec<f64>,
    s: Vec<f64>,
}

/// Box-domain fast path. On a box `d(x) = min_a t_a(x_a)`, so the number of sub-grid points
/// of a cube with `d >= t` is a product of per-axis counts and the midpoint sums reduce to
/// merging sorted per-axis lists. Produces the same sums as `ap_sampled`.
fn ap_box_counting(w: &PowerWeight, cubes: &DyadicCubeFamily, p: f64, q: usize) -> Result<f64> {
    let dim = w.domain.dim;
    let j_max = cubes.max_level;
    let per_axis = (1usize << j_max) * q;
    let delta = cubes.side / per_axis as f64;
    let sigma_exp = w.alpha / (1.0 - p);
    let mut best: Option<f64> = None;
    for level in 0..=j_max {
        let n_cubes = 1usize << level;
        let pts = per_axis / n_cubes;
        let lists: Vec<Vec<AxisSamples>> = (0..dim)
            .map(|a| {
                let len = w.domain.extents[a];
                (0..n_cubes)
                    .map(|c| {
                        let mut t: Vec<f64> = (0..pts)
                            .map(|k| {
                                cubes.origin[a] + ((c * pts + k) as f64 + 0.5) * delta
                            })
                            .filter(|&x| x < len)
                            .map(|x| x.min(len - x))
                            .collect();
                        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        let wv = t.iter().map(|&d| sample_power(d, 0.5 * delta, w.alpha)).collect();
                        let sv = t.iter().map(|&d| sample_power(d, 0.5 * delta, sigma_exp)).collect();
                        AxisSamples { t, w: wv, s: sv }
                    })
                    .collect()
            })
            .collect();
        let total = n_cubes.pow(dim as u32);
        let mut pick: Vec<&AxisSamples> = Vec::with_capacity(dim);
        for lin in 0..total {
            pick.clear();
            let mut r = lin;
            for list in lists.iter().take(dim) {
                pick.push(&list[r % n_cubes]);
                r /= n_cubes;
            }
            if let Some((sw, ss, n)) = merged_sums(&pick) {
                let v = ap_product(sw, ss, n, p);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best.ok_or_else(|| Error::Degenerate("no dyadic cube meets the domain".into()))
}

/// Sums of `w(min_a t_a)` and `sigma(min_a t_a)` over the tensor grid of per-axis samples.
fn merged_sums(axes: &[&AxisSamples]) -> Option<(f64, f64, f64)> {
    let counts: Vec<usize> = axes.iter().map(|a| a.t.len()).collect();
    if counts.contains(&0) {
        return None;
    }
    let total: f64 = counts.iter().map(|&c| c as f64).product();
    // ptr[a]: number of samples on axis a strictly below the current value.
    let mut ptr = vec![0usize; axes.len()];
    let (mut sw, mut ss) = (0.0, 0.0);
    loop {
        // Smallest unprocessed value across axes.
        let mut amin = usize::MAX;
        let mut tmin = f64::INFINITY;
        for (a, ax) in axes.iter().enumerate() {
            if ptr[a] < ax.t.len() && ax.t[ptr[a]] < tmin {
                tmin = ax.t[ptr[a]];
                amin = a;
            }
        }
        if amin == usize::MAX {
            break;
        }
        // Points whose minimum equals the sample ax.t[ptr[amin]] on axis amin and whose other
        // coordinates are at least as far from the boundary (ties broken by axis order).
        let mut others = 1.0;
        for (a, ax) in axes.iter().enumerate() {
            if a == amin {
                continue;
            }
            let remaining = if a < amin {
                ax.t.len() - upper_count(&ax.t, ptr[a], tmin)
            } else {
                ax.t.len() - ptr[a]
            };
            others *= remaining as f64;
        }
        let ax = axes[amin];
        sw += others * ax.w[ptr[amin]];
        ss += others * ax.s[ptr[amin]];
        ptr[amin] += 1;
    }
    Some((sw, ss, total))
}

/// Number of entries `<= t` in a sorted list, starting the search at `from`.
fn upper_count(t: &[f64], from: usize, value: f64) -> usize {
    let mut i = from;
    while i < t.len() && t[i] <= value {
        i += 1;
    }
    i
}
