//! Contour-weighted function calculus.
//!
//! Every function of the contour parameter is tabulated on a [`StarGrid`].
//! The star product `<f, g> = int f g |r'(u)| du` becomes a weighted sum with
//! weights `quadrature weight * arc speed`. Vector-valued fields carry one
//! component per row, so the overloaded (Gram matrix) products reduce to
//! `F diag(measure) G^T`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Quadrature nodes, weights and arc speeds shared by a family of fields.
#[derive(Debug, Clone, PartialEq)]
pub struct StarGrid {
    u: Vec<f64>,
    quad_weights: Vec<f64>,
    arc_weights: Vec<f64>,
    measure: DVector<f64>,
}

impl StarGrid {
    pub fn new(u: Vec<f64>, quad_weights: Vec<f64>, arc_weights: Vec<f64>) -> Result<Arc<Self>> {
        if u.len() < 2 || u.len() != quad_weights.len() || u.len() != arc_weights.len() {
            return Err(Error::InvalidContour(format!(
                "star grid needs >= 2 nodes with matching weights (got {}, {}, {})",
                u.len(),
                quad_weights.len(),
                arc_weights.len()
            )));
        }
        if let Some(i) = arc_weights.iter().position(|a| !(*a > 0.0)) {
            return Err(Error::SingularTangent { u: u[i] });
        }
        let measure = DVector::from_iterator(
            u.len(),
            quad_weights.iter().zip(&arc_weights).map(|(q, a)| q * a),
        );
        Ok(Arc::new(Self {
            u,
            quad_weights,
            arc_weights,
            measure,
        }))
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.u
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    /// Combined weight `quad_i * |r'(u_i)|`.
    pub fn measure(&self) -> &DVector<f64> {
        &self.measure
    }
}

fn same_grid(a: &Arc<StarGrid>, b: &Arc<StarGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// A (possibly vector-valued) field tabulated on a star grid. Row `k` holds
/// component `k` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: Arc<StarGrid>,
    values: DMatrix<f64>,
}

impl SampledField {
    pub fn new(grid: Arc<StarGrid>, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    /// Scalar field from node values.
    pub fn scalar(grid: Arc<StarGrid>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(grid, DMatrix::from_vec(1, n, values))
    }

    pub fn from_fn(grid: Arc<StarGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = DMatrix::from_iterator(1, grid.len(), grid.u.iter().map(|&u| f(u)));
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<StarGrid>, components: usize) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: DMatrix::zeros(components, n),
        }
    }

    pub fn grid(&self) -> &Arc<StarGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn components(&self) -> usize {
        self.values.nrows()
    }

    /// Component `k` as a scalar field.
    pub fn component(&self, k: usize) -> SampledField {
        Self {
            grid: self.grid.clone(),
            values: self.values.rows(k, 1).into_owned(),
        }
    }

    /// Pointwise product with a scalar field, broadcast over components.
    pub fn mul_scalar_field(&self, s: &SampledField) -> Result<SampledField> {
        same_grid(&self.grid, &s.grid)?;
        if s.components() != 1 {
            return Err(Error::GridMismatch);
        }
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col *= s.values[(0, j)];
        }
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> SampledField {
        Self {
            grid: self.grid.clone(),
            values: &self.values * c,
        }
    }

    /// Stacks the components of several fields on the same grid.
    pub fn stack(fields: &[&SampledField]) -> Result<SampledField> {
        let first = fields.first().ok_or(Error::GridMismatch)?;
        let rows: usize = fields.iter().map(|f| f.components()).sum();
        let mut values = DMatrix::zeros(rows, first.grid.len());
        let mut r = 0;
        for f in fields {
            same_grid(&first.grid, &f.grid)?;
            values.rows_mut(r, f.components()).copy_from(&f.values);
            r += f.components();
        }
        Ok(Self {
            grid: first.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &SampledField) -> Result<SampledField> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: &self.values - &other.values,
        })
    }
}

/// Gram matrix `G[i][j] = <f_i, g_j>`.
pub fn star_gram(f: &SampledField, g: &SampledField) -> Result<DMatrix<f64>> {
    same_grid(&f.grid, &g.grid)?;
    let mut weighted = f.values.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= f.grid.measure[j];
    }
    Ok(weighted * g.values.transpose())
}

/// Scalar star product of the first components.
pub fn star_inner(f: &SampledField, g: &SampledField) -> Result<f64> {
    same_grid(&f.grid, &g.grid)?;
    let m = &f.grid.measure;
    Ok((0..m.len())
        .map(|j| f.values[(0, j)] * g.values[(0, j)] * m[j])
        .sum())
}

pub fn star_norm_sq(f: &SampledField) -> f64 {
    star_inner(f, f).expect("same grid")
}

/// Solves `Gram x = rhs` for a symmetric positive semi-definite Gram matrix,
/// falling back to a small ridge when it is numerically singular.
fn gram_solve(gram: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(x) = linalg::spd_solve(gram, rhs) {
        return x;
    }
    let ridge = 1e-12 * gram.trace().abs().max(f64::MIN_POSITIVE);
    log::warn!("projection basis is rank deficient; using ridge {ridge:.3e}");
    let mut g = gram.clone();
    for i in 0..g.nrows() {
        g[(i, i)] += ridge;
    }
    linalg::spd_solve(&g, rhs).unwrap_or_else(|| {
        let pinv = g
            .clone()
            .pseudo_inverse(1e-14 * g.norm())
            .unwrap_or_else(|_| DMatrix::zeros(g.ncols(), g.nrows()));
        pinv * rhs
    })
}

/// Component-wise projection of `f` onto the orthogonal complement of the
/// span of the components of `basis`.
pub fn project_perp(f: &SampledField, basis: &SampledField) -> Result<SampledField> {
    same_grid(&f.grid, &basis.grid)?;
    let gram = star_gram(basis, basis)?;
    let cross = star_gram(basis, f)?;
    let coef = gram_solve(&gram, &cross);
    Ok(SampledField {
        grid: f.grid.clone(),
        values: &f.values - coef.transpose() * &basis.values,
    })
}

/// Element (or family of elements) of the product space `F x F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub first: SampledField,
    pub second: SampledField,
}

impl FieldPair {
    pub fn new(first: SampledField, second: SampledField) -> Result<Self> {
        same_grid(&first.grid, &second.grid)?;
        if first.components() != second.components() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { first, second })
    }

    pub fn components(&self) -> usize {
        self.first.components()
    }

    pub fn stack(pairs: &[&FieldPair]) -> Result<FieldPair> {
        let firsts: Vec<&SampledField> = pairs.iter().map(|p| &p.first).collect();
        let seconds: Vec<&SampledField> = pairs.iter().map(|p| &p.second).collect();
        FieldPair::new(
            SampledField::stack(&firsts)?,
            SampledField::stack(&seconds)?,
        )
    }
}

/// Gram matrix of the product-space inner product
/// `<(f1, f2), (g1, g2)> = <f1, g1> + <f2, g2>`.
pub fn extended_gram(a: &FieldPair, b: &FieldPair) -> Result<DMatrix<f64>> {
    Ok(star_gram(&a.first, &b.first)? + star_gram(&a.second, &b.second)?)
}

/// Scalar product-space inner product of the first components.
pub fn extended_inner(a: &FieldPair, b: &FieldPair) -> Result<f64> {
    Ok(star_inner(&a.first, &b.first)? + star_inner(&a.second, &b.second)?)
}

pub fn extended_norm_sq(a: &FieldPair) -> f64 {
    extended_inner(a, a).expect("pair shares one grid")
}

/// Product-space projection onto the complement of the span of `basis`.
pub fn project_perp_pair(f: &FieldPair, basis: &FieldPair) -> Result<FieldPair> {
    let gram = extended_gram(basis, basis)?;
    let cross = extended_gram(basis, f)?;
    let coef = gram_solve(&gram, &cross).transpose();
    Ok(FieldPair {
        first: SampledField {
            grid: f.first.grid.clone(),
            values: &f.first.values - &coef * &basis.first.values,
        },
        second: SampledField {
            grid: f.second.grid.clone(),
            values: &f.second.values - &coef * &basis.second.values,
        },
    })
}
