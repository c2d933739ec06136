//! Adaptive Gauss–Kronrod (7/15) quadrature with user breakpoints, plus
//! fixed Gauss–Legendre rules for composite integration.

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<F> {
    pub abs: F,
    pub rel: F,
    pub max_intervals: usize,
}

impl<F: Scalar> Tolerance<F> {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs: F::lit(abs),
            rel: F::lit(rel),
            max_intervals: 2000,
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<F> {
    pub value: F,
    pub abs_error: F,
    /// False when the interval budget ran out before the tolerance was met.
    pub converged: bool,
    pub evaluations: usize,
}

struct Segment<F> {
    a: F,
    b: F,
    value: F,
    error: F,
}

fn rescale_error<F: Scalar>(err: F, res_abs: F, res_asc: F) -> F {
    let mut err = err.abs();
    if res_asc != F::zero() && err != F::zero() {
        let scale = (F::lit(200.0) * err / res_asc).powf(F::lit(1.5));
        err = if scale < F::one() { res_asc * scale } else { res_asc };
    }
    let tiny = F::min_positive_value() / (F::lit(50.0) * F::epsilon());
    if res_abs > tiny {
        let floor = F::lit(50.0) * F::epsilon() * res_abs;
        if floor > err {
            err = floor;
        }
    }
    err
}

fn gk15<F: Scalar, G: FnMut(F) -> F>(f: &mut G, a: F, b: F) -> (F, F) {
    let center = F::half() * (a + b);
    let half = F::half() * (b - a);
    let fc = f(center);
    let mut res_g = fc * F::lit(WG[3]);
    let mut res_k = fc * F::lit(WGK[7]);
    let mut res_abs = res_k.abs();
    let mut fv1 = [F::zero(); 7];
    let mut fv2 = [F::zero(); 7];
    for j in 0..7 {
        let x = half * F::lit(XGK[j]);
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k = res_k + F::lit(WGK[j]) * (f1 + f2);
        res_abs = res_abs + F::lit(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g = res_g + F::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = res_k * F::half();
    let mut res_asc = F::lit(WGK[7]) * (fc - mean).abs();
    for j in 0..7 {
        res_asc = res_asc + F::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let habs = half.abs();
    let err = rescale_error((res_k - res_g) * half, res_abs * habs, res_asc * habs);
    (res_k * half, err)
}

/// Globally adaptive integration of `f` over `[points[0], points[last]]`,
/// with the interior points used as initial breakpoints.
pub fn integrate<F: Scalar, G: FnMut(F) -> F>(mut f: G, points: &[F], tol: Tolerance<F>) -> QuadResult<F> {
    assert!(points.len() >= 2, "integrate: need at least two points");
    let mut segments: Vec<Segment<F>> = Vec::with_capacity(64);
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let (value, error) = gk15(&mut f, w[0], w[1]);
        segments.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    let mut evaluations = 15 * segments.len();
    if segments.is_empty() {
        return QuadResult {
            value: F::zero(),
            abs_error: F::zero(),
            converged: true,
            evaluations,
        };
    }
    loop {
        let total: F = segments.iter().fold(F::zero(), |s, g| s + g.value);
        let err: F = segments.iter().fold(F::zero(), |s, g| s + g.error);
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target {
            return QuadResult {
                value: total,
                abs_error: err,
                converged: true,
                evaluations,
            };
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, F::neg_infinity()), |(bi, be), (i, g)| {
                if g.error > be {
                    (i, g.error)
                } else {
                    (bi, be)
                }
            });
        let Segment { a, b, .. } = segments[worst];
        let mid = F::half() * (a + b);
        let width_floor = F::lit(100.0) * F::epsilon() * (a.abs() + b.abs()) + F::min_positive_value();
        if segments.len() >= tol.max_intervals || (b - a).abs() <= width_floor || mid <= a || mid >= b {
            return QuadResult {
                value: total,
                abs_error: err,
                converged: false,
                evaluations,
            };
        }
        let (v1, e1) = gk15(&mut f, a, mid);
        let (v2, e2) = gk15(&mut f, mid, b);
        evaluations += 30;
        segments[worst] = Segment {
            a,
            b: mid,
            value: v1,
            error: e1,
        };
        segments.push(Segment {
            a: mid,
            b,
            value: v2,
            error: e2,
        });
    }
}

/// Integral over `[0, b]` of a function with an integrable algebraic singularity
/// `~ x^(exponent)` at the origin (`exponent > -1`). The substitution
/// `x = u^m`, `m = 1/(1 + exponent)`, makes the leading behaviour regular.
pub fn integrate_origin_singular<F: Scalar, G: FnMut(F) -> F>(
    mut f: G,
    b: F,
    exponent: F,
    inner_breaks: &[F],
    tol: Tolerance<F>,
) -> QuadResult<F> {
    assert!(exponent > -F::one(), "non-integrable singularity");
    let m = if exponent < F::zero() {
        F::one() / (F::one() + exponent)
    } else {
        F::one()
    };
    let inv_m = m.recip();
    // Below x_floor the mapped integrand is replaced by its limit m·f(x)x^(−exponent),
    // since u^m underflows long before u reaches zero when m is large.
    let x_floor = F::lit(1e-200).max(F::min_positive_value().sqrt());
    let mut floor_value = None;
    let mut pts = vec![F::zero()];
    for &x in inner_breaks {
        if x > F::zero() && x < b {
            pts.push(x.powf(inv_m));
        }
    }
    pts.push(b.powf(inv_m));
    integrate(
        |u: F| {
            if u <= F::zero() {
                return F::zero();
            }
            let x = u.powf(m);
            if exponent < F::zero() && x < x_floor {
                return *floor_value.get_or_insert_with(|| f(x_floor) * x_floor.powf(-exponent) * m);
            }
            f(x) * m * u.powf(m - F::one())
        },
        &pts,
        tol,
    )
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre<F: Scalar>(n: usize) -> (Vec<F>, Vec<F>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0_f64; n];
    let mut weights = vec![0.0_f64; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.into_iter().map(F::lit).collect(),
        weights.into_iter().map(F::lit).collect(),
    )
}
