use ndarray::{Array2, Zip};

use crate::C64;

/// `Σ_n w_n sin(k_n x_i) sin(k_n x_j)` for the given grid points.
pub(crate) fn sine_bilinear(xs: &[f64], modes: &[(f64, f64)]) -> Array2<f64> {
    let basis = sine_table(xs, modes.iter().map(|m| m.0));
    let mut weighted = basis.clone();
    for (mut col, &(_, w)) in weighted.columns_mut().into_iter().zip(modes) {
        col *= w;
    }
    weighted.dot(&basis.t())
}

/// `S[i, n] = sin(k_n x_i)`.
pub(crate) fn sine_table(xs: &[f64], ks: impl Iterator<Item = f64> + Clone) -> Array2<f64> {
    let nk = ks.clone().count();
    let mut s = Array2::<f64>::zeros((xs.len(), nk));
    for (i, &x) in xs.iter().enumerate() {
        for (n, k) in ks.clone().enumerate() {
            s[[i, n]] = (k * x).sin();
        }
    }
    s
}

pub(crate) fn complexify(re: &Array2<f64>, im: &Array2<f64>) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros(re.raw_dim());
    Zip::from(&mut out).and(re).and(im).for_each(|o, &r, &i| *o = C64::new(r, i));
    out
}

pub(crate) fn pin_boundaries(m: &mut Array2<C64>) {
    let (nr, nc) = m.dim();
    let zero = C64::new(0.0, 0.0);
    m.row_mut(0).fill(zero);
    m.row_mut(nr - 1).fill(zero);
    m.column_mut(0).fill(zero);
    m.column_mut(nc - 1).fill(zero);
}

#[cfg(test)]
pub(crate) fn boundaries_zero(m: &Array2<C64>) -> bool {
    let (nr, nc) = m.dim();
    let zero = C64::new(0.0, 0.0);
    m.row(0).iter().all(|v| *v == zero)
        && m.row(nr - 1).iter().all(|v| *v == zero)
        && m.column(0).iter().all(|v| *v == zero)
        && m.column(nc - 1).iter().all(|v| *v == zero)
}

pub(crate) fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    Zip::from(a).and(b).fold(0.0f64, |acc, x, y| acc.max((x - y).norm()))
}

#[cfg(test)]
pub(crate) fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
