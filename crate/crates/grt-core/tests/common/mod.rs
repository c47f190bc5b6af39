//! Shared test infrastructure: independent numerical oracles (adaptive
//! quadrature for the bivariate normal, Monte Carlo classification against
//! raw bound sides, a separately coded multinomial log-likelihood) and
//! seeded random model generators.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grt_core::geometry::Vec2;
use grt_core::grtwind::{GrtWindModel, SubjectParams};
use grt_core::model::{
    ConfusionMatrix, ConstraintScheme, Covariance, DistGrid, LinearBound, MultiBoundKind,
    MultiBoundModel, PerceptualDistribution, SingleSubjectModel, TwoByTwoModel,
};
use grt_core::probability::{normal_cdf, response_probabilities};
use grt_core::transforms::ds_inducing_transform;

// ---------------------------------------------------------------------------
// Quadrature oracle for the bivariate normal CDF.

fn phi_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(a: f64, fa: f64, fm: f64, b: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, flm, m, fm);
    let right = simpson(m, fm, frm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + adaptive_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, fa, fm, b, fb);
    adaptive_step(&f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// P(X <= h, Y <= k) for standard bivariate normal with correlation `rho`,
/// computed by reducing to a one-dimensional integral of the conditional
/// CDF and integrating adaptively. Independent of the production kernel.
pub fn bvn_oracle(h: f64, k: f64, rho: f64) -> f64 {
    assert!(rho.abs() < 1.0);
    if rho == 0.0 {
        return normal_cdf(h) * normal_cdf(k);
    }
    let s = (1.0 - rho * rho).sqrt();
    let f = |t: f64| phi_pdf(t) * normal_cdf((k - rho * t) / s);
    // Mass below -8.5 is under 1e-17 of the integrand's scale.
    adaptive_simpson(f, (-8.5_f64).min(h), h, 1e-16)
}

// ---------------------------------------------------------------------------
// Monte Carlo oracle: sample the perceptual distributions and classify
// each draw by the raw signed bound sides of the *original* (possibly
// tilted) bounds. No transform is involved.

pub fn monte_carlo_probs<M: SingleSubjectModel>(
    model: &M,
    draws: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let bx = model.bounds_x();
    let by = model.bounds_y();
    let ny_resp = by.len() + 1;
    let n_resp = (bx.len() + 1) * ny_resp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .distributions()
        .iter()
        .map(|d| {
            let c = d.covariance();
            let l11 = c.sxx().sqrt();
            let l21 = c.sxy() / l11;
            let l22 = (c.syy() - l21 * l21).sqrt();
            let mut counts = vec![0u64; n_resp];
            for _ in 0..draws {
                let z1 = standard_normal(&mut rng);
                let z2 = standard_normal(&mut rng);
                let p = Vec2::new(
                    d.mean().x + l11 * z1,
                    d.mean().y + l21 * z1 + l22 * z2,
                );
                let lx = bx.iter().filter(|b| b.side_value(p) > 0.0).count();
                let ly = by.iter().filter(|b| b.side_value(p) > 0.0).count();
                counts[lx * ny_resp + ly] += 1;
            }
            counts
                .into_iter()
                .map(|n| (n as f64) / (draws as f64))
                .collect()
        })
        .collect()
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-15);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------------------
// Independent multinomial log-likelihood.

pub fn reference_log_likelihood(counts: &ConfusionMatrix, probs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (s, row) in counts.counts().iter().enumerate() {
        for (r, &n) in row.iter().enumerate() {
            if n > 0 {
                let p = probs[s][r];
                total += (n as f64) * if p < 1e-300 { 1e-300_f64.ln() } else { p.ln() };
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Probabilities of a tilted model via an explicitly anchored transform.
// Anchoring somewhere other than the bound intersection produces a
// different affine image, so agreement with the library's own pipeline is
// a genuine invariance check rather than a repeat of the same arithmetic.

pub fn probs_with_anchor<M: SingleSubjectModel>(model: &M, anchor: Vec2) -> Vec<Vec<f64>> {
    let sx = model.bounds_x()[0].slope;
    let sy = model.bounds_y()[0].slope;
    if sx == 0.0 && sy == 0.0 {
        return response_probabilities(model).unwrap();
    }
    let t = ds_inducing_transform(sx, sy, anchor).unwrap();
    let dists = model
        .distributions()
        .map(|d| t.apply_distribution(d))
        .unwrap();
    let bx = model
        .bounds_x()
        .iter()
        .map(|b| LinearBound::x_bound(t.apply_point(b.point_on()).x, 0.0).unwrap())
        .collect();
    let by = model
        .bounds_y()
        .iter()
        .map(|b| LinearBound::y_bound(t.apply_point(b.point_on()).y, 0.0).unwrap())
        .collect();
    let image = model.rebuild(dists, bx, by).unwrap();
    response_probabilities(&image).unwrap()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Random model generators. All sampling is from a caller-seeded ChaCha
// stream so failures replay exactly.

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

pub fn random_dist(rng: &mut ChaCha8Rng) -> PerceptualDistribution {
    let sxx = uniform(rng, 0.25, 4.0);
    let syy = uniform(rng, 0.25, 4.0);
    let rho = uniform(rng, -0.9, 0.9);
    PerceptualDistribution::new(
        Vec2::new(uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)),
        Covariance::new(sxx, rho * (sxx * syy).sqrt(), syy).unwrap(),
    )
    .unwrap()
}

/// Slopes from angles phi in (-pi/3, pi/3) and omega in (pi/6, 5pi/6),
/// resampled away from the degenerate configurations where the x-bound
/// direction is nearly horizontal.
pub fn random_slopes(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let phi = uniform(rng, -std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3);
        let omega = uniform(
            rng,
            std::f64::consts::FRAC_PI_6,
            5.0 * std::f64::consts::FRAC_PI_6,
        );
        let theta_x = phi + omega;
        if theta_x.sin().abs() < 0.1 {
            continue;
        }
        let slope_x = theta_x.cos() / theta_x.sin();
        let slope_y = phi.tan();
        if (1.0 - slope_x * slope_y).abs() < 0.1 {
            continue;
        }
        return (slope_x, slope_y);
    }
}

pub fn random_tilted_two_by_two(rng: &mut ChaCha8Rng) -> TwoByTwoModel {
    loop {
        let (sx, sy) = random_slopes(rng);
        if sx == 0.0 && sy == 0.0 {
            continue;
        }
        let dists = [
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
        ];
        let m = TwoByTwoModel::new(
            dists,
            LinearBound::x_bound(uniform(rng, -1.0, 1.0), sx).unwrap(),
            LinearBound::y_bound(uniform(rng, -1.0, 1.0), sy).unwrap(),
            ConstraintScheme::unconstrained(),
        );
        if let Ok(m) = m {
            return m;
        }
    }
}

pub fn random_ds_two_by_two(rng: &mut ChaCha8Rng) -> TwoByTwoModel {
    TwoByTwoModel::new(
        [
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
        ],
        LinearBound::x_bound(uniform(rng, -1.0, 1.0), 0.0).unwrap(),
        LinearBound::y_bound(uniform(rng, -1.0, 1.0), 0.0).unwrap(),
        ConstraintScheme::unconstrained(),
    )
    .unwrap()
}

/// Concurrent ratings model with three response levels per dimension and
/// parallel tilted bound families.
pub fn random_tilted_concurrent_ratings(rng: &mut ChaCha8Rng) -> MultiBoundModel {
    loop {
        let (sx, sy) = random_slopes(rng);
        let c1x = uniform(rng, -1.5, 0.0);
        let c2x = c1x + uniform(rng, 0.3, 2.0);
        let c1y = uniform(rng, -1.5, 0.0);
        let c2y = c1y + uniform(rng, 0.3, 2.0);
        let dists = vec![
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
            random_dist(rng),
        ];
        let m = MultiBoundModel::new(
            MultiBoundKind::ConcurrentRatings,
            DistGrid::new(2, 2, dists).unwrap(),
            vec![
                LinearBound::x_bound(c1x, sx).unwrap(),
                LinearBound::x_bound(c2x, sx).unwrap(),
            ],
            vec![
                LinearBound::y_bound(c1y, sy).unwrap(),
                LinearBound::y_bound(c2y, sy).unwrap(),
            ],
            ConstraintScheme::unconstrained(),
        );
        if let Ok(m) = m {
            return m;
        }
    }
}

pub fn random_grtwind(rng: &mut ChaCha8Rng, subjects: usize) -> GrtWindModel {
    let group = [
        random_dist(rng),
        random_dist(rng),
        random_dist(rng),
        random_dist(rng),
    ];
    let subj = (0..subjects)
        .map(|_| {
            let (sx, sy) = random_slopes(rng);
            SubjectParams::new(
                uniform(rng, 0.5, 2.0),
                uniform(rng, 0.2, 0.8),
                LinearBound::x_bound(uniform(rng, -1.0, 1.0), sx).unwrap(),
                LinearBound::y_bound(uniform(rng, -1.0, 1.0), sy).unwrap(),
            )
            .unwrap()
        })
        .collect();
    GrtWindModel::new(group, subj, ConstraintScheme::one_distribution_fixed()).unwrap()
}
