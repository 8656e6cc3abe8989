//! Random smooth test fields built from compactly supported bumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ops::curl_edges;
use crate::fields::{leray_project, Grid, Location, ScalarField, StaggeredField};
use crate::geometry::{DomainKind, DomainSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Bumps with support inside the domain.
    Dirichlet,
    /// Curl of a bump potential, then projected.
    SolenoidalDirichlet,
    /// Bumps kept a fixed distance away from the boundary.
    InteriorBump,
    /// Solenoidal fields whose vorticity concentrates in a sheet a few cells thick at one
    /// wall; the sheet thins with the grid.
    BoundaryLayer,
}

/// `exp(1 - 1/(1 - s^2))` for `s < 1`, else 0.
#[inline]
pub fn bump_profile(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

#[derive(Clone, Debug)]
struct Bump {
    center: [f64; 3],
    radius: f64,
    amp: [f64; 3],
}

impl Bump {
    fn eval(&self, x: [f64; 3]) -> f64 {
        let s2 = (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum::<f64>() / (self.radius * self.radius);
        bump_profile(s2)
    }
}

fn min_extent(domain: &DomainSpec) -> f64 {
    match domain.kind {
        DomainKind::Box => domain.extents.iter().cloned().fold(f64::INFINITY, f64::min),
        DomainKind::Ball => 2.0 * domain.extents[0],
    }
}

/// Random centre whose distance to the boundary is at least `margin`.
fn center_with_margin(rng: &mut ChaCha8Rng, domain: &DomainSpec, margin: f64) -> Result<[f64; 3]> {
    let (lo, hi) = domain.bounding_box();
    for _ in 0..10_000 {
        let c: [f64; 3] = std::array::from_fn(|a| {
            let (l, h) = (lo[a] + margin, hi[a] - margin);
            if l >= h {
                0.5 * (lo[a] + hi[a])
            } else {
                rng.gen_range(l..h)
            }
        });
        if domain.signed_distance(&c) >= margin {
            return Ok(c);
        }
    }
    Err(Error::InvalidDomain(format!("no point at distance {margin} from the boundary")))
}

fn random_bumps(rng: &mut ChaCha8Rng, domain: &DomainSpec, interior: bool) -> Result<Vec<Bump>> {
    let l = min_extent(domain);
    let count = rng.gen_range(3..=6);
    (0..count)
        .map(|_| {
            let (radius, margin) = if interior {
                let r = rng.gen_range(0.08..0.15) * l;
                (r, r + 0.2 * l)
            } else {
                let r = rng.gen_range(0.15..0.35) * l;
                (r, r)
            };
            let center = center_with_margin(rng, domain, margin)?;
            let amp = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            Ok(Bump { center, radius, amp })
        })
        .collect()
}

fn superpose(grid: &Grid, location: Location, bumps: &[Bump]) -> StaggeredField {
    StaggeredField::from_fn(grid, location, |x| {
        let mut v = [0.0; 3];
        for b in bumps {
            let s = b.eval(x);
            if s != 0.0 {
                for a in 0..3 {
                    v[a] += b.amp[a] * s;
                }
            }
        }
        v
    })
}

/// Smooth random vector field on the faces of `grid`, reproducible from `seed`.
pub fn sample_field(grid: &Grid, kind: SampleKind, seed: u64) -> Result<StaggeredField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = &grid.domain;
    let mut v = match kind {
        SampleKind::Dirichlet | SampleKind::InteriorBump => {
            let bumps = random_bumps(&mut rng, domain, kind == SampleKind::InteriorBump)?;
            superpose(grid, Location::Faces, &bumps)
        }
        SampleKind::SolenoidalDirichlet => {
            let bumps = random_bumps(&mut rng, domain, false)?;
            let potential = superpose(grid, Location::Edges, &bumps);
            leray_project(grid, &curl_edges(grid, &potential)?)?
        }
        SampleKind::BoundaryLayer => {
            if !grid.is_box() {
                return Err(Error::InvalidDomain("boundary-layer samples need a box".into()));
            }
            let potential = boundary_layer_potential(grid, &mut rng);
            leray_project(grid, &curl_edges(grid, &potential)?)?
        }
    };
    v.clear_boundary();
    Ok(v)
}

/// Random smooth scalar field (cell centres) with support inside the domain.
pub fn sample_scalar(grid: &Grid, interior: bool, seed: u64) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps = random_bumps(&mut rng, &grid.domain, interior)?;
    Ok(ScalarField::from_fn(grid, |x| bumps.iter().map(|b| b.amp[0] * b.eval(x)).sum()))
}

/// Vortex sheet at one wall: stream function `S(eta/delta) sinh(k eta) sin(k y)` times wide
/// cutoffs, with `S(t) = 1 - (1 + t) e^(-t)` and `delta` a few cells. Away from the sheet the
/// flow is the potential flow of `cosh(k eta) cos(k y)`, so the vorticity concentrates in a
/// layer that thins with the grid while the velocity gradient stays spread out.
fn boundary_layer_potential(grid: &Grid, rng: &mut ChaCha8Rng) -> StaggeredField {
    let axis = rng.gen_range(0..3);
    let upper = rng.gen_bool(0.5);
    let along = (axis + 1) % 3;
    let normal_to_plane = (axis + 2) % 3;
    let ext = grid.domain.extents.clone();
    let (lo, _) = grid.domain.bounding_box();
    let delta = rng.gen_range(1.0..2.0) * grid.spacing[axis];
    let k = 2.0 * std::f64::consts::PI / ext[along] * rng.gen_range(1.0..2.5);
    let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let amp = rng.gen_range(0.5..1.0) / k;
    let cut = 0.6 * ext[axis];
    let mid = [along, normal_to_plane].map(|a| lo[a] + 0.5 * ext[a]);
    let half = [along, normal_to_plane].map(|a| 0.5 * ext[a]);
    StaggeredField::from_fn(grid, Location::Edges, |x| {
        let eta = if upper { lo[axis] + ext[axis] - x[axis] } else { x[axis] - lo[axis] };
        let t = eta / delta;
        let sheet = 1.0 - (1.0 + t) * (-t).exp();
        let y = x[along] - lo[along];
        let stream = (k * eta).sinh() * (k * y + phase).sin();
        let window = bump_profile(((x[along] - mid[0]) / half[0]).powi(2))
            * bump_profile(((x[normal_to_plane] - mid[1]) / half[1]).powi(2));
        let mut a = [0.0; 3];
        a[normal_to_plane] = amp * sheet * stream * window * smooth_cut(eta / cut);
        a
    })
}

/// 1 below 1/2, 0 above 1, smooth in between.
pub(crate) fn smooth_cut(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * (t - 0.5);
        let psi = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
        psi(1.0 - s) / (psi(1.0 - s) + psi(s))
    }
}
