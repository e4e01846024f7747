//! Build-verification suite: fast numerical invariants that must hold on any
//! correct build, runnable from the command line.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use se3flow_core::camera::{self, PinholeCamera};
use se3flow_core::correlation::{self, CorrelationMode};
use se3flow_core::linalg::Vec3;
use se3flow_core::raster::{ChannelGrid, Grid};
use se3flow_core::se3::{self, SE3Transform, Twist, MAX_LOG_ANGLE};
use se3flow_core::smoothing::{self, EdgeWeightField};

/// One named invariant check; `run` returns a short success detail.
pub struct Check {
    pub name: &'static str,
    run: fn() -> Result<String>,
}

/// All checks, in execution order.
pub fn checks() -> Vec<Check> {
    vec![
        Check { name: "lie_round_trip", run: lie_round_trip },
        Check { name: "lie_group_axioms", run: lie_group_axioms },
        Check { name: "reprojection_jacobian", run: reprojection_jacobian_fd },
        Check { name: "smoothing_solver", run: smoothing_solver_vs_dense },
        Check { name: "correlation_modes", run: correlation_modes_agree },
    ]
}

/// Runs every check, printing one line per check; returns whether all passed.
pub fn run_all() -> bool {
    let mut ok = true;
    for check in checks() {
        match (check.run)() {
            Ok(detail) => println!("selfcheck {}: ok ({detail})", check.name),
            Err(e) => {
                ok = false;
                println!("selfcheck {}: FAILED ({e:#})", check.name);
            }
        }
    }
    ok
}

fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let unit = |rng: &mut ChaCha8Rng| {
        loop {
            let v = Vec3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v * (1.0 / n);
            }
        }
    };
    let angle = rng.gen::<f64>() * max_angle;
    let translation = unit(rng) * (rng.gen::<f64>() * 2.0);
    Twist::new(translation, unit(rng) * angle)
}

fn lie_round_trip() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let xi = random_twist(&mut rng, MAX_LOG_ANGLE - 1e-3);
        let back = se3::log(&se3::exp(&xi)?)?;
        let err = (0..6)
            .map(|k| (back.to_array()[k] - xi.to_array()[k]).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err);
    }
    if worst >= 1e-9 {
        bail!("round-trip error {worst:.3e} exceeds 1e-9");
    }
    Ok(format!("max round-trip error {worst:.3e} over 2000 twists"))
}

fn lie_group_axioms() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let a = se3::exp(&random_twist(&mut rng, 2.0))?;
        let b = se3::exp(&random_twist(&mut rng, 2.0))?;
        let c = se3::exp(&random_twist(&mut rng, 2.0))?;
        let p = Vec3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        );
        let assoc = se3::compose(&a, &se3::compose(&b, &c)).apply(p)
            - se3::compose(&se3::compose(&a, &b), &c).apply(p);
        let inverse = se3::compose(&a, &se3::inverse(&a)).apply(p) - p;
        let identity = se3::compose(&a, &SE3Transform::IDENTITY).apply(p) - a.apply(p);
        for v in [assoc, inverse, identity] {
            worst = worst.max(v.norm());
        }
    }
    if worst >= 1e-10 {
        bail!("axiom residual {worst:.3e} exceeds 1e-10");
    }
    Ok(format!("max axiom residual {worst:.3e} over 500 triples"))
}

fn reprojection_jacobian_fd() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let cam = PinholeCamera::new(
            80.0 + rng.gen::<f64>() * 200.0,
            80.0 + rng.gen::<f64>() * 200.0,
            rng.gen::<f64>() * 64.0,
            rng.gen::<f64>() * 64.0,
        )
        .map_err(|e| anyhow::anyhow!("{e:?}"))?;
        let t = se3::exp(&random_twist(&mut rng, 0.5))?;
        let p = Vec3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            2.0 + rng.gen::<f64>() * 3.0,
        );
        if t.apply(p).z < 0.5 {
            continue;
        }
        let analytic = camera::reprojection_jacobian(&cam, &t, p)
            .map_err(|e| anyhow::anyhow!("{e:?}"))?;
        let step = 1e-6;
        for k in 0..6 {
            let mut plus = [0.0; 6];
            plus[k] = step;
            let mut minus = [0.0; 6];
            minus[k] = -step;
            let warp = |delta: [f64; 6]| -> Result<[f64; 3]> {
                let perturbed = se3::compose(&se3::exp(&Twist::from_array(delta))?, &t);
                let m = camera::project(&cam, perturbed.apply(p))
                    .map_err(|e| anyhow::anyhow!("{e:?}"))?;
                Ok([m.x, m.y, m.d])
            };
            let fp = warp(plus)?;
            let fm = warp(minus)?;
            for row in 0..3 {
                let fd = (fp[row] - fm[row]) / (2.0 * step);
                let scale = analytic[row][k].abs().max(1.0);
                worst = worst.max((fd - analytic[row][k]).abs() / scale);
            }
        }
    }
    if worst >= 1e-5 {
        bail!("finite-difference mismatch {worst:.3e} exceeds 1e-5");
    }
    Ok(format!("max relative error {worst:.3e} over 100 instances"))
}

fn smoothing_solver_vs_dense() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (w, h, c) = (16, 16, 3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut v = ChannelGrid::new(w, h, c);
        for value in v.data_mut() {
            *value = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let wx = Grid::from_fn(w, h, |_, _| rng.gen::<f64>() * 3.0);
        let wy = Grid::from_fn(w, h, |_, _| rng.gen::<f64>() * 3.0);
        let weights = EdgeWeightField::new(wx, wy).map_err(|e| anyhow::anyhow!("{e:?}"))?;
        let iterative = smoothing::smooth_embeddings(&v, &weights, 1e-12, 10_000)
            .map_err(|e| anyhow::anyhow!("{e:?}"))?;
        let direct =
            smoothing::dense::smooth_embeddings(&v, &weights).map_err(|e| anyhow::anyhow!("{e:?}"))?;
        for (a, b) in iterative.data().iter().zip(direct.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst >= 1e-8 {
        bail!("iterative vs direct gap {worst:.3e} exceeds 1e-8");
    }
    Ok(format!("max solver gap {worst:.3e} over 20 systems"))
}

fn correlation_modes_agree() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(405);
    let (w, h, c) = (24, 20, 8);
    let mut f1 = ChannelGrid::new(w, h, c);
    let mut f2 = ChannelGrid::new(w, h, c);
    for value in f1.data_mut().iter_mut().chain(f2.data_mut()) {
        *value = rng.gen::<f64>() * 2.0 - 1.0;
    }
    let mut coords = ChannelGrid::new(w, h, 2);
    for y in 0..h {
        for x in 0..w {
            coords.pixel_mut(x, y).copy_from_slice(&[
                x as f64 + rng.gen::<f64>() * 6.0 - 3.0,
                y as f64 + rng.gen::<f64>() * 6.0 - 3.0,
            ]);
        }
    }
    let materialized = correlation::build_pyramid(&f1, &f2, CorrelationMode::Materialized)
        .map_err(|e| anyhow::anyhow!("{e:?}"))?;
    let on_demand = correlation::build_pyramid(&f1, &f2, CorrelationMode::OnDemand)
        .map_err(|e| anyhow::anyhow!("{e:?}"))?;
    let a = correlation::lookup(&materialized, &coords, 3).map_err(|e| anyhow::anyhow!("{e:?}"))?;
    let b = correlation::lookup(&on_demand, &coords, 3).map_err(|e| anyhow::anyhow!("{e:?}"))?;
    let identical = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    if !identical {
        bail!("materialized and on-demand lookups differ");
    }
    Ok(format!("{} lookup values bit-identical across modes", a.data().len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for check in checks() {
            let outcome = (check.run)();
            assert!(outcome.is_ok(), "{}: {:?}", check.name, outcome.err());
        }
    }
}
