//! Measurement-matrix rows for every correspondence type.
//!
//! Projection matrices are vectorized column-major, so entry `(i, j)` of a 3×c
//! matrix sits at index `3 j + i`.

use nalgebra::{DMatrix, Matrix3, RowSVector, SMatrix, Vector3};

use crate::correspondence::CorrespondenceSet;
use crate::error::{PnlError, Result};
use crate::geometry::{skew, HomPoint2, HomPoint3, Line2, PluckerLine3};
use crate::prenorm::balance_measurement_blocks;

use super::Method;

/// What produced a measurement row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    PointLine,
    LineLine,
    PointPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowTag {
    pub group: usize,
    pub kind: RowKind,
}

/// Stacked constraint rows together with their provenance.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    pub matrix: DMatrix<f64>,
    pub tags: Vec<RowTag>,
}

/// `X^T ⊗ l^T`.
pub fn rows_point_line(x: &HomPoint3, l: &Line2) -> RowSVector<f64, 12> {
    let (x, l) = (x.coords(), l.coords());
    RowSVector::<f64, 12>::from_fn(|_, c| x[c / 3] * l[c % 3])
}

/// Row indices of `[a]x` to keep: with two rows, the one with the smallest norm
/// (the row not involving the largest component of `a`) is dropped.
fn kept_rows(a: &Vector3<f64>, two_rows: bool) -> Vec<usize> {
    if !two_rows {
        return vec![0, 1, 2];
    }
    let drop = a.iamax();
    (0..3).filter(|&r| r != drop).collect()
}

/// `L^T ⊗ [l]x`; two rows unless `two_rows` is false.
pub fn rows_line_line(line: &PluckerLine3, l: &Line2, two_rows: bool) -> Vec<RowSVector<f64, 18>> {
    let lv = line.to_vector();
    let lx = skew(l.coords());
    kept_rows(l.coords(), two_rows)
        .into_iter()
        .map(|r| RowSVector::<f64, 18>::from_fn(|_, c| lv[c / 3] * lx[(r, c % 3)]))
        .collect()
}

/// `X^T ⊗ [x]x`; two rows unless `two_rows` is false.
pub fn rows_point_point(x: &HomPoint3, p: &HomPoint2, two_rows: bool) -> Vec<RowSVector<f64, 12>> {
    let xv = x.coords();
    let px = skew(p.coords());
    kept_rows(p.coords(), two_rows)
        .into_iter()
        .map(|r| RowSVector::<f64, 12>::from_fn(|_, c| xv[c / 3] * px[(r, c % 3)]))
        .collect()
}

/// Checks the minimum correspondence counts of `method`.
pub fn check_counts(corrs: &CorrespondenceSet, method: Method) -> Result<()> {
    let n = corrs.point_line.len() + 2 * corrs.point_point.len();
    let m = corrs.line_line.len();
    let fail = |requirement: String| Err(PnlError::InsufficientCorrespondences { method: method.name(), requirement });
    match method {
        Method::DltLines => {
            let lines = corrs.distinct_point_line_groups();
            if lines < 6 {
                return fail(format!("points on at least 6 distinct lines needed, got {lines}"));
            }
            if n < 11 {
                return fail(format!("at least 11 point rows needed, got {n}"));
            }
        }
        Method::DltPlucker => {
            if m < 9 {
                return fail(format!("at least 9 line correspondences needed, got {m}"));
            }
        }
        Method::DltCombined => {
            if m < 5 {
                return fail(format!("at least 5 line correspondences needed, got {m}"));
            }
            if n < 3 {
                return fail(format!("at least 3 point rows needed, got {n}"));
            }
            if n + 2 * m < 20 {
                return fail(format!("n + 2m >= 20 needed, got n = {n}, m = {m}"));
            }
        }
    }
    Ok(())
}

fn push_row(matrix: &mut DMatrix<f64>, row: usize, offset: usize, values: &[f64]) {
    for (c, v) in values.iter().enumerate() {
        matrix[(row, offset + c)] = *v;
    }
}

/// Stacks the rows `method` uses into one matrix.
///
/// For the combined method, point rows fill columns 0..12 and line rows columns
/// 0..9 and 12..21; with `balance` both blocks are weighted to equal Frobenius norm.
pub fn build_measurement(
    corrs: &CorrespondenceSet,
    method: Method,
    two_rows: bool,
    balance: bool,
) -> Result<MeasurementMatrix> {
    check_counts(corrs, method)?;
    let per_pair = if two_rows { 2 } else { 3 };
    let use_points = method != Method::DltPlucker;
    let use_lines = method != Method::DltLines;

    let n_rows = if use_points { corrs.point_line.len() + per_pair * corrs.point_point.len() } else { 0 }
        + if use_lines { per_pair * corrs.line_line.len() } else { 0 };
    let mut matrix = DMatrix::zeros(n_rows, method.columns());
    let mut tags = Vec::with_capacity(n_rows);
    let mut row = 0;

    if use_points {
        for c in &corrs.point_line {
            push_row(&mut matrix, row, 0, rows_point_line(&c.point, &c.line).as_slice());
            tags.push(RowTag { group: c.group, kind: RowKind::PointLine });
            row += 1;
        }
        for c in &corrs.point_point {
            for r in rows_point_point(&c.point3, &c.point2, two_rows) {
                push_row(&mut matrix, row, 0, r.as_slice());
                tags.push(RowTag { group: c.group, kind: RowKind::PointPoint });
                row += 1;
            }
        }
    }
    let point_rows = row;
    if use_lines {
        for c in &corrs.line_line {
            for r in rows_line_line(&c.line3, &c.line2, two_rows) {
                if method == Method::DltCombined {
                    push_row(&mut matrix, row, 0, &r.as_slice()[..9]);
                    push_row(&mut matrix, row, 12, &r.as_slice()[9..]);
                } else {
                    push_row(&mut matrix, row, 0, r.as_slice());
                }
                tags.push(RowTag { group: c.group, kind: RowKind::LineLine });
                row += 1;
            }
        }
    }

    if method == Method::DltCombined && balance {
        let (ap, al) = balance_measurement_blocks(
            &matrix.rows(0, point_rows).into_owned(),
            &matrix.rows(point_rows, n_rows - point_rows).into_owned(),
        )?;
        matrix.rows_mut(0, point_rows).scale_mut(ap);
        matrix.rows_mut(point_rows, n_rows - point_rows).scale_mut(al);
    }
    Ok(MeasurementMatrix { matrix, tags })
}

/// Column-major vectorization.
pub fn vectorize<const C: usize>(p: &SMatrix<f64, 3, C>) -> Vec<f64> {
    p.as_slice().to_vec()
}

/// Inverse of [`vectorize`].
pub fn unvectorize<const C: usize>(v: &[f64]) -> SMatrix<f64, 3, C> {
    SMatrix::<f64, 3, C>::from_column_slice(v)
}

/// `[l]x P L`, the quantity the line-line rows evaluate.
pub fn line_incidence(p: &SMatrix<f64, 3, 6>, line: &PluckerLine3, l: &Line2) -> Vector3<f64> {
    let lx: Matrix3<f64> = skew(l.coords());
    lx * p * line.to_vector()
}
