use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Opposite faces of the box are identified.
    #[default]
    Periodic,
    /// Births aimed outside the box are lost.
    Absorbing,
}

/// Finite box `{-L, ..., L}^d` of patches, each a complete graph on `N` sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometrySpec", into = "GeometrySpec")]
pub struct Geometry {
    d: usize,
    side: usize,
    n: usize,
    boundary: Boundary,
    width: usize,
    patches: usize,
    // CSR adjacency over patches.
    nbr_start: Vec<usize>,
    nbr: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub d: usize,
    pub side: usize,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl TryFrom<GeometrySpec> for Geometry {
    type Error = ModelError;

    fn try_from(spec: GeometrySpec) -> Result<Self, Self::Error> {
        Geometry::new(spec.d, spec.side, spec.n, spec.boundary)
    }
}

impl From<Geometry> for GeometrySpec {
    fn from(g: Geometry) -> Self {
        GeometrySpec {
            d: g.d,
            side: g.side,
            n: g.n,
            boundary: g.boundary,
        }
    }
}

impl Geometry {
    pub fn new(d: usize, side: usize, n: usize, boundary: Boundary) -> Result<Self, ModelError> {
        if d == 0 {
            return Err(ModelError::InvalidGeometry("dimension must be at least 1".into()));
        }
        if n == 0 {
            return Err(ModelError::InvalidGeometry("patch size N must be at least 1".into()));
        }
        if boundary == Boundary::Periodic && side == 0 {
            return Err(ModelError::InvalidGeometry(
                "a periodic box needs side >= 1 so that neighbours are distinct".into(),
            ));
        }
        let width = 2 * side + 1;
        let patches = width
            .checked_pow(d as u32)
            .filter(|p| p.checked_mul(n).is_some())
            .ok_or_else(|| ModelError::InvalidGeometry("box too large".into()))?;

        let mut nbr_start = Vec::with_capacity(patches + 1);
        let mut nbr = Vec::with_capacity(patches * 2 * d);
        let mut coords = vec![0usize; d];
        for p in 0..patches {
            nbr_start.push(nbr.len());
            decode(p, width, &mut coords);
            let mut stride = 1;
            for axis in 0..d {
                let c = coords[axis];
                let down = if c > 0 {
                    Some(p - stride)
                } else if boundary == Boundary::Periodic {
                    Some(p + (width - 1) * stride)
                } else {
                    None
                };
                let up = if c + 1 < width {
                    Some(p + stride)
                } else if boundary == Boundary::Periodic {
                    Some(p - (width - 1) * stride)
                } else {
                    None
                };
                nbr.extend(down);
                nbr.extend(up);
                stride *= width;
            }
        }
        nbr_start.push(nbr.len());
        Ok(Self {
            d,
            side,
            n,
            boundary,
            width,
            patches,
            nbr_start,
            nbr,
        })
    }

    /// A lone patch: useful when `lambda = 0` or for single-patch experiments.
    pub fn single_patch(d: usize, n: usize) -> Result<Self, ModelError> {
        Self::new(d, 0, n, Boundary::Absorbing)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn patch_size(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn patch_count(&self) -> usize {
        self.patches
    }

    pub fn site_count(&self) -> usize {
        self.patches * self.n
    }

    #[inline]
    pub fn neighbors(&self, patch: usize) -> &[usize] {
        &self.nbr[self.nbr_start[patch]..self.nbr_start[patch + 1]]
    }

    /// Patch index of the origin of `Z^d`.
    pub fn origin(&self) -> usize {
        self.patch_at(&vec![0; self.d]).expect("origin is inside the box")
    }

    /// Patch index for lattice coordinates in `{-L, ..., L}^d`.
    pub fn patch_at(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.d {
            return None;
        }
        let mut p = 0usize;
        for &c in x.iter().rev() {
            if c.unsigned_abs() as usize > self.side {
                return None;
            }
            p = p * self.width + (c + self.side as i64) as usize;
        }
        Some(p)
    }

    pub fn coordinates(&self, patch: usize) -> Vec<i64> {
        let mut raw = vec![0usize; self.d];
        decode(patch, self.width, &mut raw);
        raw.into_iter().map(|c| c as i64 - self.side as i64).collect()
    }
}

fn decode(mut p: usize, width: usize, out: &mut [usize]) {
    for c in out.iter_mut() {
        *c = p % width;
        p /= width;
    }
}
