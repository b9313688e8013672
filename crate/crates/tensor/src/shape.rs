use std::fmt;

use crate::{Result, TensorError};

/// Extents of a row-major tensor, outermost first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0[axis]
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Broadcast shape: trailing dimensions aligned, extents of 1 stretch.
    pub fn broadcast(&self, other: &Shape) -> Result<Shape> {
        let rank = self.rank().max(other.rank());
        let mut out = vec![0; rank];
        for i in 0..rank {
            let a = self.extent_from_back(rank, i);
            let b = other.extent_from_back(rank, i);
            out[i] = match (a, b) {
                (a, b) if a == b => a,
                (1, b) => b,
                (a, 1) => a,
                _ => {
                    return Err(TensorError::ShapeMismatch {
                        op: "broadcast",
                        lhs: self.clone(),
                        rhs: other.clone(),
                    })
                }
            };
        }
        Ok(Shape(out))
    }

    fn extent_from_back(&self, rank: usize, i: usize) -> usize {
        let offset = rank - self.rank();
        if i < offset {
            1
        } else {
            self.0[i - offset]
        }
    }

    /// Strides for reading `self` as if it had `target` shape (0 on stretched axes).
    pub(crate) fn broadcast_strides(&self, target: &Shape) -> Vec<usize> {
        let own = self.strides();
        let offset = target.rank() - self.rank();
        (0..target.rank())
            .map(|i| {
                if i < offset || self.0[i - offset] == 1 {
                    0
                } else {
                    own[i - offset]
                }
            })
            .collect()
    }
}

impl From<Vec<usize>> for Shape {
    fn from(v: Vec<usize>) -> Self {
        Shape(v)
    }
}

impl From<&[usize]> for Shape {
    fn from(v: &[usize]) -> Self {
        Shape(v.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(v: [usize; N]) -> Self {
        Shape(v.to_vec())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// Calls `f(out_index, lhs_index, rhs_index)` for every element of the broadcast shape.
pub(crate) fn for_each_broadcast(
    out: &Shape,
    lhs: &Shape,
    rhs: &Shape,
    mut f: impl FnMut(usize, usize, usize),
) {
    let ls = lhs.broadcast_strides(out);
    let rs = rhs.broadcast_strides(out);
    let dims = out.dims();
    let rank = dims.len();
    let n = out.numel();
    if n == 0 {
        return;
    }
    let mut idx = vec![0usize; rank];
    let (mut li, mut ri) = (0usize, 0usize);
    for o in 0..n {
        f(o, li, ri);
        // odometer increment
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            li += ls[ax];
            ri += rs[ax];
            if idx[ax] < dims[ax] {
                break;
            }
            li -= ls[ax] * dims[ax];
            ri -= rs[ax] * dims[ax];
            idx[ax] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_row_major() {
        assert_eq!(Shape::from([2, 3, 4]).strides(), vec![12, 4, 1]);
        assert!(Shape::scalar().strides().is_empty());
    }

    #[test]
    fn broadcast_rules() {
        let a = Shape::from([2, 1]);
        let b = Shape::from([1, 3]);
        assert_eq!(a.broadcast(&b).unwrap(), Shape::from([2, 3]));
        assert_eq!(
            Shape::from([4, 2, 3]).broadcast(&Shape::from([3])).unwrap(),
            Shape::from([4, 2, 3])
        );
        assert!(Shape::from([2, 3]).broadcast(&Shape::from([3, 2])).is_err());
    }

    #[test]
    fn broadcast_index_walk() {
        let out = Shape::from([2, 3]);
        let mut seen = Vec::new();
        for_each_broadcast(&out, &Shape::from([2, 1]), &Shape::from([1, 3]), |o, l, r| {
            seen.push((o, l, r))
        });
        assert_eq!(
            seen,
            vec![(0, 0, 0), (1, 0, 1), (2, 0, 2), (3, 1, 0), (4, 1, 1), (5, 1, 2)]
        );
    }
}
