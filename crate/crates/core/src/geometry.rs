use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical placement of an image grid. All vectors are in tensor axis order
/// (slowest axis first, i.e. `z, y, x` for volumes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    /// Row-major `n x n` orthonormal direction matrix.
    pub direction: Vec<f64>,
}

impl ImageGeometry {
    pub fn new(spacing: Vec<f64>, origin: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        let g = ImageGeometry {
            spacing,
            origin,
            direction,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit spacing, zero origin and identity direction.
    pub fn identity(ndim: usize) -> Self {
        ImageGeometry {
            spacing: vec![1.0; ndim],
            origin: vec![0.0; ndim],
            direction: identity_matrix(ndim),
        }
    }

    pub fn with_spacing(spacing: Vec<f64>) -> Result<Self> {
        let n = spacing.len();
        ImageGeometry::new(spacing, vec![0.0; n], identity_matrix(n))
    }

    pub fn ndim(&self) -> usize {
        self.spacing.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spacing.len();
        if n == 0 {
            return Err(Error::Argument("geometry needs at least one axis".into()));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Argument(format!(
                "spacing must be strictly positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.len() != n || self.direction.len() != n * n {
            return Err(Error::Argument(format!(
                "geometry of {n} axes needs {n} origin values and {} direction values",
                n * n
            )));
        }
        let det = determinant(&self.direction, n);
        if (det.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::Argument(format!(
                "direction matrix must have |det| = 1, got {det}"
            )));
        }
        Ok(())
    }

    /// Physical volume of one voxel (area for 2-D grids).
    pub fn voxel_volume(&self) -> f64 {
        voxel_volume(self)
    }

    /// Geometry with axis order reversed (`z,y,x` <-> `x,y,z`).
    pub fn reversed(&self) -> ImageGeometry {
        let n = self.ndim();
        let mut direction = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                direction[i * n + j] = self.direction[(n - 1 - i) * n + (n - 1 - j)];
            }
        }
        ImageGeometry {
            spacing: self.spacing.iter().rev().copied().collect(),
            origin: self.origin.iter().rev().copied().collect(),
            direction,
        }
    }

    /// Whether spacings agree within `tol`.
    pub fn spacing_matches(&self, other: &ImageGeometry, tol: f64) -> bool {
        self.spacing.len() == other.spacing.len()
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Product of the spacings.
pub fn voxel_volume(g: &ImageGeometry) -> f64 {
    g.spacing.iter().product()
}

pub(crate) fn identity_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn determinant(m: &[f64], n: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_volume_examples() {
        assert_eq!(ImageGeometry::with_spacing(vec![1.0, 1.0, 1.0]).unwrap().voxel_volume(), 1.0);
        assert_eq!(ImageGeometry::with_spacing(vec![1.0, 2.0, 3.0]).unwrap().voxel_volume(), 6.0);
        assert_eq!(ImageGeometry::with_spacing(vec![0.5, 0.5, 2.0]).unwrap().voxel_volume(), 0.5);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ImageGeometry::with_spacing(vec![1.0, 0.0]).is_err());
        assert!(ImageGeometry::with_spacing(vec![1.0, -1.0]).is_err());
        assert!(ImageGeometry::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 0.0, 0.0, 1.0]).is_err());
        // A permutation matrix has det -1 and is accepted.
        assert!(ImageGeometry::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = ImageGeometry::new(
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.5, 9.0],
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(g.reversed().reversed(), g);
        assert_eq!(g.reversed().spacing, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn determinant_of_rotation() {
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        assert!((determinant(&[c, -s, s, c], 2) - 1.0).abs() < 1e-12);
    }
}
