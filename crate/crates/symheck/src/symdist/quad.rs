//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 15-point Kronrod / 7-point Gauss core rule with bisection of the
//! worst panel, plus the standard rational substitution x = (1-t)/t for
//! half-infinite and doubly infinite ranges. Defaults follow the crate
//! convention: absolute tolerance 1e-10, relative 1e-8.

use crate::error::{Error, Result};

/// Abscissae of the 15-point Kronrod rule (positive half, descending).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Weights of the 15-point Kronrod rule.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Weights of the embedded 7-point Gauss rule.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 512,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_bound: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// QUADPACK-style error rescaling for one panel.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut fv1 = [0.0_f64; 7];
    let mut fv2 = [0.0_f64; 7];
    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.abs();

    for j in 0..3 {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    res_gauss += WG[3] * f_center;

    for j in 0..4 {
        let jtw = 2 * j;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let err = ((res_kronrod - res_gauss) * half).abs();
    Panel {
        a,
        b,
        value: res_kronrod * half,
        error: rescale_error(err, res_abs * half.abs(), res_asc * half.abs()),
    }
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
    context: &str,
) -> Result<QuadResult> {
    integrate_with_breakpoints(f, &[a, b], opts, context)
}

/// Breakpoints for the unit-interval image of the rational transform:
/// geometric spacing near t = 0 so mass at large |x| is sampled before
/// the first error estimate.
const TRANSFORM_BREAKS: [f64; 7] = [0.0, 1.0 / 512.0, 1.0 / 128.0, 1.0 / 32.0, 1.0 / 8.0, 0.5, 1.0];

/// Adaptive integration over consecutive panels given by `points`.
fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: &QuadOptions,
    context: &str,
) -> Result<QuadResult> {
    if points.len() < 2 || points.first() == points.last() {
        return Ok(QuadResult {
            value: 0.0,
            error_bound: 0.0,
            subdivisions: 0,
        });
    }
    let mut panels: Vec<Panel> = points
        .windows(2)
        .map(|ab| qk15(&f, ab[0], ab[1]))
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                context: format!("{context}: non-finite integrand"),
                estimate: total,
                error_bound: total_err,
                subdivisions: panels.len(),
            });
        }
        if total_err <= tol {
            return Ok(QuadResult {
                value: total,
                error_bound: total_err,
                subdivisions: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a: pa, b: pb, .. } = panels[worst];
        let width_floor = 8.0 * f64::EPSILON * (pa.abs() + pb.abs()).max(1e-300);
        if panels.len() >= opts.max_subdivisions || (pb - pa).abs() <= width_floor {
            return Err(Error::QuadratureNonConvergence {
                context: context.to_string(),
                estimate: total,
                error_bound: total_err,
                subdivisions: panels.len(),
            });
        }
        let mid = 0.5 * (pa + pb);
        panels[worst] = qk15(&f, pa, mid);
        panels.push(qk15(&f, mid, pb));
    }
}

/// Integral of `f` over `[a, +inf)` via x = a + (1-t)/t.
pub fn integrate_above<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    opts: &QuadOptions,
    context: &str,
) -> Result<QuadResult> {
    integrate_with_breakpoints(
        |t| {
            let x = a + (1.0 - t) / t;
            f(x) / (t * t)
        },
        &TRANSFORM_BREAKS,
        opts,
        context,
    )
}

/// Integral of `f` over `(-inf, b]` via x = b - (1-t)/t.
pub fn integrate_below<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    opts: &QuadOptions,
    context: &str,
) -> Result<QuadResult> {
    integrate_with_breakpoints(
        |t| {
            let x = b - (1.0 - t) / t;
            f(x) / (t * t)
        },
        &TRANSFORM_BREAKS,
        opts,
        context,
    )
}

/// Integral of `f` over the whole real line, split at `center` so the
/// rational transform clusters nodes where the mass is.
pub fn integrate_real_line<F: Fn(f64) -> f64>(
    f: F,
    center: f64,
    opts: &QuadOptions,
    context: &str,
) -> Result<QuadResult> {
    let lower = integrate_below(&f, center, opts, context)?;
    let upper = integrate_above(&f, center, opts, context)?;
    Ok(QuadResult {
        value: lower.value + upper.value,
        error_bound: lower.error_bound + upper.error_bound,
        subdivisions: lower.subdivisions + upper.subdivisions,
    })
}
