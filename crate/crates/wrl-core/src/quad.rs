//! Fixed-order Gauss-Legendre quadrature on piecewise-smooth integrands.
#![allow(clippy::excessive_precision)]

const NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// 8-point Gauss-Legendre on `[a, b]`.
pub fn gauss(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    NODES.iter().zip(WEIGHTS).map(|(z, w)| w * f(m + r * z)).sum::<f64>() * r
}

/// Integral over `[a, b]` split at every break point inside the interval, each piece
/// further divided into `sub` equal panels.
pub fn piecewise(f: &impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], sub: usize) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let sub = sub.max(1);
    cuts.windows(2)
        .map(|w| {
            let step = (w[1] - w[0]) / sub as f64;
            (0..sub).map(|k| gauss(f, w[0] + k as f64 * step, w[0] + (k + 1) as f64 * step)).sum::<f64>()
        })
        .sum()
}
