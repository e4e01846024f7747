//! Per-pixel one-step damped Gauss-Newton refinement of an SE(3) field.
//!
//! Each pixel minimizes an attention-weighted, confidence-weighted
//! reprojection objective over its square neighborhood: neighbors whose
//! smoothed motion embeddings are close contribute with weight
//! `sigmoid(-||u_i - u_j||^2)`, so the solve pools evidence within rigidly
//! moving regions while cross-region influence decays to nothing. Exactly
//! one damped step `(H + lambda I) delta = -g`, `T <- exp(delta) * T` is
//! taken per call.

use alloc::vec::Vec;

use crate::camera::{self, PinholeCamera, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::field::{FlowField, SE3Field};
use crate::linalg::{solve_sym6, Vec3};
use crate::raster::{ChannelGrid, Grid};
use crate::se3::{self, Twist};

#[allow(unused_imports)]
use num_traits::Float;

/// Per-pixel nonnegative weights on the three residual components
/// (x, y, inverse depth).
pub type ConfidenceField = ChannelGrid;

/// Squared embedding distance beyond which a pair is skipped outright.
/// `sigmoid(-45)` is below 3e-20, smaller than the resolution of the
/// accumulated normal equations, so the skip does not change results to
/// working precision.
pub const ATTENTION_CUTOFF: f64 = 45.0;

/// Attention between two pixels with squared embedding distance `d2`:
/// the logistic sigmoid of `-d2`, in `(0, 0.5]` with `0.5` exactly at 0.
pub fn attention_weight(d2: f64) -> f64 {
    1.0 / (1.0 + d2.exp())
}

/// Revised per-pixel target positions `(x', y', d')` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    values: ChannelGrid,
    valid: Grid<bool>,
}

impl TargetField {
    pub fn new(values: ChannelGrid, valid: Grid<bool>) -> Result<Self> {
        if values.channels() != 3 {
            return Err(Error::InvalidArgument { what: "target field requires 3 channels" });
        }
        if values.width() != valid.width() || values.height() != valid.height() {
            return Err(Error::ShapeMismatch {
                expected: (values.width(), values.height()),
                got: (valid.width(), valid.height()),
            });
        }
        for y in 0..values.height() {
            for x in 0..values.width() {
                if valid.at(x, y) && !values.pixel(x, y).iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { what: "target positions" });
                }
            }
        }
        Ok(TargetField { values, valid })
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn value(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.values.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.at(x, y)
    }

    pub fn valid(&self) -> &Grid<bool> {
        &self.valid
    }
}

/// Builds revised targets from the current induced flow and a flow revision:
/// `t = (x, y, d) + (flow + revision)` per pixel. Pixels invalid in the flow
/// mask or without positive inverse depth are marked invalid.
pub fn build_targets(
    inv_depth1: &Grid<f64>,
    flow: &FlowField,
    flow_valid: &Grid<bool>,
    revision: &ChannelGrid,
) -> Result<TargetField> {
    let (w, h) = (flow.width(), flow.height());
    if revision.channels() != 3 {
        return Err(Error::InvalidArgument { what: "flow revision requires 3 channels" });
    }
    if inv_depth1.width() != w
        || inv_depth1.height() != h
        || flow_valid.width() != w
        || flow_valid.height() != h
        || revision.width() != w
        || revision.height() != h
    {
        return Err(Error::ShapeMismatch {
            expected: (w, h),
            got: (inv_depth1.width(), inv_depth1.height()),
        });
    }
    if !revision.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "flow revision" });
    }
    let mut values = ChannelGrid::new(w, h, 3);
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let d = inv_depth1.at(x, y);
            if d <= 0.0 || !flow_valid.at(x, y) {
                continue;
            }
            let (fx, fy, fd) = flow.at(x, y);
            let r = revision.pixel(x, y);
            values.pixel_mut(x, y).copy_from_slice(&[
                x as f64 + fx + r[0],
                y as f64 + fy + r[1],
                d + fd + r[2],
            ]);
            valid.set(x, y, true);
        }
    }
    TargetField::new(values, valid)
}

struct Neighbor {
    point: Vec3,
    target: [f64; 3],
    confidence: [f64; 3],
}

fn precompute_neighbors(
    conf: &ConfidenceField,
    targets: &TargetField,
    cam: &PinholeCamera,
    inv_depth1: &Grid<f64>,
) -> Result<Vec<Option<Neighbor>>> {
    let (w, h) = (targets.width(), targets.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d = inv_depth1.at(x, y);
            if d <= 0.0 || 1.0 / d < MIN_DEPTH || !targets.is_valid(x, y) {
                out.push(None);
                continue;
            }
            let point =
                camera::backproject(cam, camera::MapPoint::new(x as f64, y as f64, d))?;
            let c = conf.pixel(x, y);
            out.push(Some(Neighbor {
                point,
                target: targets.value(x, y),
                confidence: [c[0], c[1], c[2]],
            }));
        }
    }
    Ok(out)
}

fn validate_step_inputs(
    field: &SE3Field,
    emb: &ChannelGrid,
    conf: &ConfidenceField,
    targets: &TargetField,
    inv_depth1: &Grid<f64>,
    radius: usize,
) -> Result<()> {
    let (w, h) = (field.width(), field.height());
    let shapes = [
        (emb.width(), emb.height()),
        (conf.width(), conf.height()),
        (targets.width(), targets.height()),
        (inv_depth1.width(), inv_depth1.height()),
    ];
    for got in shapes {
        if got != (w, h) {
            return Err(Error::ShapeMismatch { expected: (w, h), got });
        }
    }
    if conf.channels() != 3 {
        return Err(Error::InvalidArgument { what: "confidence field requires 3 channels" });
    }
    if radius < 1 {
        return Err(Error::InvalidArgument { what: "neighborhood radius must be at least 1" });
    }
    if !emb.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "motion embeddings" });
    }
    if !conf.data().iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::InvalidArgument {
            what: "confidence weights must be finite and nonnegative",
        });
    }
    Ok(())
}

/// Solves the damped normal equations `(H + lambda I) delta = -g`.
/// Only the lower triangle of `h` is read.
pub fn solve_damped(h: &[[f64; 6]; 6], g: &[f64; 6], damping: f64) -> Option<[f64; 6]> {
    let mut a = *h;
    let mut b = [0.0; 6];
    for i in 0..6 {
        a[i][i] += damping;
        b[i] = -g[i];
    }
    solve_sym6(&a, &b)
}

/// One damped Gauss-Newton step on every pixel of the field.
///
/// `emb` must already be smoothed. Pixels whose neighborhoods contribute
/// nothing (no valid neighbor, or every pair beyond the attention cutoff)
/// keep their transform bit-exactly.
pub fn dense_se3_step(
    field: &SE3Field,
    emb: &ChannelGrid,
    conf: &ConfidenceField,
    targets: &TargetField,
    cam: &PinholeCamera,
    inv_depth1: &Grid<f64>,
    radius: usize,
    damping: f64,
) -> Result<SE3Field> {
    validate_step_inputs(field, emb, conf, targets, inv_depth1, radius)?;
    if !(damping > 0.0) || !damping.is_finite() {
        return Err(Error::InvalidArgument { what: "damping must be positive and finite" });
    }
    let (w, h) = (field.width(), field.height());
    let neighbors = precompute_neighbors(conf, targets, cam, inv_depth1)?;
    let e = emb.channels();
    let emb_data = emb.data();
    let mut out = field.clone();
    for y in 0..h {
        let y_lo = y.saturating_sub(radius);
        let y_hi = (y + radius).min(h - 1);
        for x in 0..w {
            let x_lo = x.saturating_sub(radius);
            let x_hi = (x + radius).min(w - 1);
            let ti = field.at(x, y);
            let ui = &emb_data[(y * w + x) * e..(y * w + x + 1) * e];
            let mut hm = [[0.0f64; 6]; 6];
            let mut g = [0.0f64; 6];
            let mut any = false;
            for ny in y_lo..=y_hi {
                for nx in x_lo..=x_hi {
                    let j = ny * w + nx;
                    let Some(nb) = &neighbors[j] else { continue };
                    let uj = &emb_data[j * e..j * e + e];
                    let mut d2 = 0.0;
                    for (a, b) in ui.iter().zip(uj) {
                        let diff = a - b;
                        d2 += diff * diff;
                    }
                    if d2 > ATTENTION_CUTOFF {
                        continue;
                    }
                    let a = attention_weight(d2);
                    let q = ti.apply(nb.point);
                    if !(q.z >= MIN_DEPTH) {
                        continue;
                    }
                    let m = match camera::project(cam, q) {
                        Ok(m) => m,
                        Err(_) => continue,
                    };
                    let jac = camera::jacobian_of_projection(cam, q);
                    let r = [m.x - nb.target[0], m.y - nb.target[1], m.d - nb.target[2]];
                    any = true;
                    for k in 0..3 {
                        let wk = a * nb.confidence[k];
                        if wk == 0.0 {
                            continue;
                        }
                        let jk = &jac[k];
                        let wr = wk * r[k];
                        for row in 0..6 {
                            g[row] += wr * jk[row];
                            let wj = wk * jk[row];
                            for col in 0..=row {
                                hm[row][col] += wj * jk[col];
                            }
                        }
                    }
                }
            }
            if !any {
                continue;
            }
            let delta = solve_damped(&hm, &g, damping).ok_or(Error::Numeric {
                what: "Cholesky factorization of the damped normal equations failed",
                pixel: Some((x, y)),
            })?;
            let step = se3::exp(&Twist::from_array(delta))?;
            out.set(x, y, se3::compose(&step, ti))?;
        }
    }
    Ok(out)
}

/// The attention-weighted, confidence-weighted reprojection objective the
/// step descends: `sum_i sum_j a_ij ||pi(T_i pi^{-1}(x_j)) - t_j||^2_{c_j}`.
/// Pairs that contribute nothing to the step contribute nothing here.
pub fn weighted_objective(
    field: &SE3Field,
    emb: &ChannelGrid,
    conf: &ConfidenceField,
    targets: &TargetField,
    cam: &PinholeCamera,
    inv_depth1: &Grid<f64>,
    radius: usize,
) -> Result<f64> {
    validate_step_inputs(field, emb, conf, targets, inv_depth1, radius)?;
    let (w, h) = (field.width(), field.height());
    let neighbors = precompute_neighbors(conf, targets, cam, inv_depth1)?;
    let e = emb.channels();
    let emb_data = emb.data();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let ti = field.at(x, y);
            let ui = &emb_data[(y * w + x) * e..(y * w + x + 1) * e];
            for ny in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                for nx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    let j = ny * w + nx;
                    let Some(nb) = &neighbors[j] else { continue };
                    let uj = &emb_data[j * e..j * e + e];
                    let mut d2 = 0.0;
                    for (a, b) in ui.iter().zip(uj) {
                        let diff = a - b;
                        d2 += diff * diff;
                    }
                    if d2 > ATTENTION_CUTOFF {
                        continue;
                    }
                    let q = ti.apply(nb.point);
                    if !(q.z >= MIN_DEPTH) {
                        continue;
                    }
                    let m = match camera::project(cam, q) {
                        Ok(m) => m,
                        Err(_) => continue,
                    };
                    let a = attention_weight(d2);
                    let r = [m.x - nb.target[0], m.y - nb.target[1], m.d - nb.target[2]];
                    total += a
                        * (nb.confidence[0] * r[0] * r[0]
                            + nb.confidence[1] * r[1] * r[1]
                            + nb.confidence[2] * r[2] * r[2]);
                }
            }
        }
    }
    Ok(total)
}
