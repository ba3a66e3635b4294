//! Gauss-Legendre quadrature on segments and rectangles.

/// 3-point Gauss-Legendre rule on [-1, 1], exact through degree 5.
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// 5-point Gauss-Legendre rule on [-1, 1], exact through degree 9.
pub const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Integrate `f` over the segment [a, b].
pub fn segment<const N: usize>(rule: [(f64, f64); N], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    rule.iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Integrate `f` over the rectangle [x0, x1] x [y0, y1] with a tensor rule.
pub fn rectangle<const N: usize>(
    rule: [(f64, f64); N],
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    f: impl Fn(f64, f64) -> f64,
) -> f64 {
    let xm = 0.5 * (x0 + x1);
    let xh = 0.5 * (x1 - x0);
    let ym = 0.5 * (y0 + y1);
    let yh = 0.5 * (y1 - y0);
    let mut sum = 0.0;
    for &(sx, wx) in rule.iter() {
        for &(sy, wy) in rule.iter() {
            sum += wx * wy * f(xm + xh * sx, ym + yh * sy);
        }
    }
    sum * xh * yh
}
