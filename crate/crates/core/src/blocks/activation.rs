use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::tensor::FeatureMap;

pub const SOFT_HUBER_DELTA: f64 = 1e-2;

/// Pointwise or pairwise activation. Pairwise kinds pair channel `c` with
/// channel `c + C/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Abs,
    /// `√(x² + δ²) − δ`.
    SoftHuber {
        delta: f64,
    },
    #[serde(rename = "maxmin")]
    MaxMin,
    /// One unit direction per channel pair. A pair `z` is kept when
    /// `vᵀz ≥ 0` and reflected by `I − 2vvᵀ` otherwise.
    Householder {
        v: Vec<[f64; 2]>,
    },
    /// Two Householder reflections in sequence.
    Householder2 {
        v1: Vec<[f64; 2]>,
        v2: Vec<[f64; 2]>,
    },
}

fn unit(v: [f64; 2]) -> Result<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    if !(n.is_finite() && n > 0.0) {
        return param_err(format!("reflection direction {v:?} has no direction"));
    }
    Ok([v[0] / n, v[1] / n])
}

fn random_dirs<R: Rng + ?Sized>(pairs: usize, rng: &mut R) -> Vec<[f64; 2]> {
    (0..pairs)
        .map(|_| loop {
            let v = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            if let Ok(u) = unit(v) {
                break u;
            }
        })
        .collect()
}

fn perturb_dirs<R: Rng + ?Sized>(dirs: &mut [[f64; 2]], scale: f64, rng: &mut R) {
    for d in dirs {
        let v = [
            d[0] + scale * rng.sample::<f64, _>(StandardNormal),
            d[1] + scale * rng.sample::<f64, _>(StandardNormal),
        ];
        if let Ok(u) = unit(v) {
            *d = u;
        }
    }
}

fn pairs_of(x: &FeatureMap) -> Result<(usize, usize)> {
    let c = x.channels();
    if !c.is_multiple_of(2) {
        return shape_err(format!(
            "pairwise activation needs an even channel count, got {c}"
        ));
    }
    Ok((c / 2, x.height() * x.width()))
}

/// Apply `f(pair, a, b) -> (a', b')` to channel pairs `(c, c + C/2)`.
fn map_pairs(x: &FeatureMap, f: impl Fn(usize, f64, f64) -> (f64, f64)) -> Result<FeatureMap> {
    let (half, plane) = pairs_of(x)?;
    let mut out = x.clone();
    let d = out.data_mut();
    for p in 0..half {
        for i in 0..plane {
            let (ia, ib) = (p * plane + i, (p + half) * plane + i);
            let (a, b) = f(p, d[ia], d[ib]);
            d[ia] = a;
            d[ib] = b;
        }
    }
    Ok(out)
}

fn reflect(v: [f64; 2], a: f64, b: f64) -> (f64, f64) {
    let t = v[0] * a + v[1] * b;
    if t >= 0.0 {
        (a, b)
    } else {
        (a - 2.0 * t * v[0], b - 2.0 * t * v[1])
    }
}

fn check_dirs(dirs: &[[f64; 2]], pairs: usize) -> Result<()> {
    if dirs.len() != pairs {
        return shape_err(format!(
            "{} reflection directions for {pairs} channel pairs",
            dirs.len()
        ));
    }
    Ok(())
}

impl Activation {
    pub fn soft_huber(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return param_err(format!("soft huber delta must be positive, got {delta}"));
        }
        Ok(Activation::SoftHuber { delta })
    }

    /// Directions are normalized on construction.
    pub fn householder(v: &[[f64; 2]]) -> Result<Self> {
        Ok(Activation::Householder {
            v: v.iter().map(|&d| unit(d)).collect::<Result<_>>()?,
        })
    }

    pub fn householder2(v1: &[[f64; 2]], v2: &[[f64; 2]]) -> Result<Self> {
        if v1.len() != v2.len() {
            return shape_err("householder2 direction lists differ in length");
        }
        Ok(Activation::Householder2 {
            v1: v1.iter().map(|&d| unit(d)).collect::<Result<_>>()?,
            v2: v2.iter().map(|&d| unit(d)).collect::<Result<_>>()?,
        })
    }

    pub fn random_householder<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Activation::Householder {
            v: random_dirs(channels / 2, rng),
        }
    }

    pub fn random_householder2<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Activation::Householder2 {
            v1: random_dirs(channels / 2, rng),
            v2: random_dirs(channels / 2, rng),
        }
    }

    /// Random step on the stored directions followed by renormalization.
    pub fn perturb<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        match self {
            Activation::Householder { v } => perturb_dirs(v, scale, rng),
            Activation::Householder2 { v1, v2 } => {
                perturb_dirs(v1, scale, rng);
                perturb_dirs(v2, scale, rng);
            }
            _ => {}
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Abs => "abs",
            Activation::SoftHuber { .. } => "soft_huber",
            Activation::MaxMin => "maxmin",
            Activation::Householder { .. } => "householder",
            Activation::Householder2 { .. } => "householder2",
        }
    }

    pub fn apply(&self, x: &FeatureMap) -> Result<FeatureMap> {
        match self {
            Activation::Abs => Ok(x.map(f64::abs)),
            Activation::SoftHuber { delta } => {
                let d = *delta;
                Ok(x.map(|v| v.hypot(d) - d))
            }
            Activation::MaxMin => map_pairs(x, |_, a, b| if a >= b { (a, b) } else { (b, a) }),
            Activation::Householder { v } => {
                check_dirs(v, pairs_of(x)?.0)?;
                map_pairs(x, |p, a, b| reflect(v[p], a, b))
            }
            Activation::Householder2 { v1, v2 } => {
                check_dirs(v1, pairs_of(x)?.0)?;
                check_dirs(v2, v1.len())?;
                map_pairs(x, |p, a, b| {
                    let (a, b) = reflect(v1[p], a, b);
                    reflect(v2[p], a, b)
                })
            }
        }
    }

    /// Distance of `x` from the set where the activation is not smooth
    /// (infinite for the smooth kinds).
    pub fn kink_distance(&self, x: &FeatureMap) -> f64 {
        let Ok((half, plane)) = pairs_of(x) else {
            return match self {
                Activation::Abs => x
                    .data()
                    .iter()
                    .map(|v| v.abs())
                    .fold(f64::INFINITY, f64::min),
                _ => f64::INFINITY,
            };
        };
        let d = x.data();
        let pair = |p: usize, i: usize| (d[p * plane + i], d[(p + half) * plane + i]);
        let mut m = f64::INFINITY;
        match self {
            Activation::Abs => return d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min),
            Activation::SoftHuber { .. } => {}
            Activation::MaxMin => {
                for p in 0..half {
                    for i in 0..plane {
                        let (a, b) = pair(p, i);
                        m = m.min((a - b).abs() / 2f64.sqrt());
                    }
                }
            }
            Activation::Householder { v } => {
                for (p, u) in v.iter().enumerate().take(half) {
                    for i in 0..plane {
                        let (a, b) = pair(p, i);
                        m = m.min((u[0] * a + u[1] * b).abs());
                    }
                }
            }
            Activation::Householder2 { v1, v2 } => {
                for p in 0..half.min(v1.len()).min(v2.len()) {
                    for i in 0..plane {
                        let (a, b) = pair(p, i);
                        m = m.min((v1[p][0] * a + v1[p][1] * b).abs());
                        let (a, b) = reflect(v1[p], a, b);
                        m = m.min((v2[p][0] * a + v2[p][1] * b).abs());
                    }
                }
            }
        }
        m
    }
}

/// Unit directions `(sin θ/2, −cos θ/2)`, `θ = atan2(b, a)`, deciding which
/// pairs [`householder_unnormalized`] reflects.
pub fn reflection_selectors(raw: &[[f64; 2]]) -> Vec<[f64; 2]> {
    raw.iter()
        .map(|&[a, b]| {
            let th = b.atan2(a);
            [(th / 2.0).sin(), -(th / 2.0).cos()]
        })
        .collect()
}

/// Householder activation written with the raw reflection matrix
/// `[[a, b], [b, −a]]` and no normalization of `(a, b)`. A pair is reflected
/// when `(sin θ/2, −cos θ/2)ᵀz < 0` with `θ = atan2(b, a)`, so unit
/// `(cos θ, sin θ)` gives [`Activation::Householder`] with that direction.
/// With `(1, 1)` every reflected pair is stretched by `√2`.
pub fn householder_unnormalized(x: &FeatureMap, raw: &[[f64; 2]]) -> Result<FeatureMap> {
    let (half, _) = pairs_of(x)?;
    check_dirs(raw, half)?;
    let sel = reflection_selectors(raw);
    map_pairs(x, |p, x0, x1| {
        let v = sel[p];
        if v[0] * x0 + v[1] * x1 >= 0.0 {
            (x0, x1)
        } else {
            let [a, b] = raw[p];
            (a * x0 + b * x1, b * x0 - a * x1)
        }
    })
}
