use rand::Rng;
use rand_distr::StandardNormal;

/// Draw from U(a, b). Always consumes one value so streams stay aligned
/// when a bound pair is degenerate.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let u: f64 = rng.random();
    a + (b - a) * u
}

/// Draw from N(0, sigma^2).
#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Bernoulli trial with success probability `p`.
#[inline]
pub fn chance<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    let u: f64 = rng.random();
    u < p
}
