//! Adaptive Gauss–Kronrod (7/15) quadrature over vector-valued integrands.

use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

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
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Segment<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const K: usize> Eq for Segment<K> {}
impl<const K: usize> PartialOrd for Segment<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Segment<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<const K: usize, F>(f: &mut F, a: f64, b: f64) -> Segment<K>
where
    F: FnMut(f64) -> [f64; K],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    let fc = f(center);
    for j in 0..K {
        kron[j] = WGK[7] * fc[j];
        gauss[j] = WG[3] * fc[j];
    }
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for j in 0..K {
            let s = f1[j] + f2[j];
            kron[j] += WGK[i] * s;
            if i % 2 == 1 {
                gauss[j] += WG[i / 2] * s;
            }
        }
    }
    let mut error = 0.0f64;
    for j in 0..K {
        kron[j] *= half;
        gauss[j] *= half;
        let d = (kron[j] - gauss[j]).abs();
        // NaN must propagate into the error estimate
        if !(d <= error) {
            error = d;
        }
    }
    Segment {
        a,
        b,
        value: kron,
        error,
    }
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol · |I|∞)`.
pub fn integrate<const K: usize, F>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadratureResult<[f64; K]>>
where
    F: FnMut(f64) -> [f64; K],
{
    integrate_with_breaks(f, &[a, b], abs_tol, rel_tol)
}

/// As [`integrate`], starting from the partition given by `breaks`
/// (sorted, at least two points).
pub fn integrate_with_breaks<const K: usize, F>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadratureResult<[f64; K]>>
where
    F: FnMut(f64) -> [f64; K],
{
    if breaks.len() < 2 {
        return Err(Error::QuadratureNotConverged(
            "need at least two break points".into(),
        ));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&mut f, w[0], w[1]));
            evaluations += 15;
        }
    }
    loop {
        let mut total = [0.0; K];
        let mut err = 0.0;
        for s in heap.iter() {
            for j in 0..K {
                total[j] += s.value[j];
            }
            err += s.error;
        }
        if !(err.is_finite() && total.iter().all(|v| v.is_finite())) {
            return Err(Error::QuadratureNotConverged(
                "integrand produced non-finite values".into(),
            ));
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = abs_tol.max(rel_tol * scale);
        if err <= tol {
            return Ok(QuadratureResult {
                value: total,
                abs_error_estimate: err,
                evaluations,
            });
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNotConverged(format!(
                "error estimate {err:e} above tolerance {tol:e} after {evaluations} evaluations"
            )));
        }
        let worst = heap.pop().expect("non-empty partition");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::QuadratureNotConverged(
                "interval cannot be subdivided further".into(),
            ));
        }
        heap.push(kronrod(&mut f, worst.a, mid));
        heap.push(kronrod(&mut f, mid, worst.b));
        evaluations += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| [x * x, x.powi(5)], -1.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r.value[0] - 3.0).abs() < 1e-14);
        assert!((r.value[1] - 10.5).abs() < 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(
            |x| [(-0.5 * x * x).exp()],
            -12.0,
            12.0,
            1e-13,
            1e-13,
        )
        .unwrap();
        assert!((r.value[0] - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved_adaptively() {
        let r = integrate(|x| [x.abs()], -1.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((r.value[0] - 5.0).abs() < 1e-11);
    }

    #[test]
    fn nonintegrable_fails() {
        let r = integrate(|x| [1.0 / x.abs().sqrt().powi(3)], -1.0, 1.0, 1e-12, 0.0);
        assert!(matches!(r, Err(Error::QuadratureNotConverged(_))));
    }
}
