//! Givens rotations and the four-rotation cascades used by the banded
//! LQ/QR updates.

/// Plane rotation acting on a pair `(a, b)` as `(c a + s b, -s a + c b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Givens {
    pub c: f64,
    pub s: f64,
}

impl Default for Givens {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Givens {
    pub const IDENTITY: Self = Self { c: 1.0, s: 0.0 };

    /// Rotation mapping `(a, b)` to `(r, 0)` with `r = hypot(a, b) >= 0`.
    ///
    /// `(0, 0)` yields the identity and `r = 0`; callers decide whether a
    /// vanishing `r` is fatal.
    pub fn annihilate(a: f64, b: f64) -> (Self, f64) {
        if b == 0.0 {
            // keeps r nonnegative while avoiding a division
            if a >= 0.0 {
                return (Self::IDENTITY, a);
            }
            return (Self { c: -1.0, s: 0.0 }, -a);
        }
        let r = a.hypot(b);
        (Self { c: a / r, s: b / r }, r)
    }

    #[inline]
    pub fn rotate(&self, a: f64, b: f64) -> (f64, f64) {
        (self.c * a + self.s * b, -self.s * a + self.c * b)
    }

    /// Inverse of [`Givens::rotate`].
    #[inline]
    pub fn rotate_back(&self, a: f64, b: f64) -> (f64, f64) {
        (self.c * a - self.s * b, self.s * a + self.c * b)
    }

    /// In-place elementwise rotation of two equally long slices.
    pub fn rotate_slices(&self, x: &mut [f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), y.len());
        if self.s == 0.0 && self.c == 1.0 {
            return;
        }
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let (ra, rb) = self.rotate(*a, *b);
            *a = ra;
            *b = rb;
        }
    }

    /// `c² + s² − 1`
    pub fn orthogonality_defect(&self) -> f64 {
        (self.c * self.c + self.s * self.s - 1.0).abs()
    }
}

/// Local index pairs touched by the four rotations of one window update.
pub const CASCADE_PAIRS: [(usize, usize); 4] = [(0, 3), (0, 1), (1, 3), (1, 2)];

/// Four rotations applied in sequence to a 4-window, on the pairs
/// `(1,4)`, `(1,2)`, `(2,4)`, `(2,3)` (1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cascade {
    pub rot: [Givens; 4],
}

impl Cascade {
    pub const IDENTITY: Self = Self {
        rot: [Givens::IDENTITY; 4],
    };

    /// Applies `rot[0]..rot[3]` with [`Givens::rotate`].
    pub fn forward(&self, v: &mut [f64; 4]) {
        for (g, &(i, j)) in self.rot.iter().zip(CASCADE_PAIRS.iter()) {
            let (a, b) = g.rotate(v[i], v[j]);
            v[i] = a;
            v[j] = b;
        }
    }

    /// Transpose of [`Cascade::forward`].
    pub fn backward(&self, v: &mut [f64; 4]) {
        for (g, &(i, j)) in self.rot.iter().zip(CASCADE_PAIRS.iter()).rev() {
            let (a, b) = g.rotate_back(v[i], v[j]);
            v[i] = a;
            v[j] = b;
        }
    }

    /// Elementwise [`Cascade::forward`] over four equally long vectors.
    pub fn forward_slices(&self, w: [&mut [f64]; 4]) {
        let [w0, w1, w2, w3] = w;
        let n = w0.len();
        debug_assert!(w1.len() == n && w2.len() == n && w3.len() == n);
        for e in 0..n {
            let mut v = [w0[e], w1[e], w2[e], w3[e]];
            self.forward(&mut v);
            w0[e] = v[0];
            w1[e] = v[1];
            w2[e] = v[2];
            w3[e] = v[3];
        }
    }

    /// The 4×4 matrix `G` with `forward(v) = G v`.
    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let mut g = [[0.0; 4]; 4];
        for j in 0..4 {
            let mut e = [0.0; 4];
            e[j] = 1.0;
            self.forward(&mut e);
            for i in 0..4 {
                g[i][j] = e[i];
            }
        }
        g
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.rot
            .iter()
            .map(Givens::orthogonality_defect)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let (g, r) = Givens::annihilate(3.0, 4.0);
        assert_eq!(r, 5.0);
        assert!((g.c - 0.6).abs() < 1e-15);
        assert!((g.s - 0.8).abs() < 1e-15);
        let (a, b) = g.rotate(3.0, 4.0);
        assert!((a - 5.0).abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn zero_second_entry_is_identity() {
        let (g, r) = Givens::annihilate(2.5, 0.0);
        assert_eq!(g, Givens::IDENTITY);
        assert_eq!(r, 2.5);
    }

    #[test]
    fn pure_swap() {
        let (g, r) = Givens::annihilate(0.0, 1.0);
        assert_eq!((g.c, g.s, r), (0.0, 1.0, 1.0));
    }

    #[test]
    fn negative_pivot_keeps_r_nonnegative() {
        let (g, r) = Givens::annihilate(-2.0, 0.0);
        assert_eq!(r, 2.0);
        assert_eq!(g.rotate(-2.0, 0.0), (2.0, 0.0));
    }

    #[test]
    fn double_zero_is_identity() {
        let (g, r) = Givens::annihilate(0.0, 0.0);
        assert_eq!(g, Givens::IDENTITY);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn cascade_backward_inverts_forward() {
        let mut cas = Cascade::IDENTITY;
        for (i, (a, b)) in [(1.0, 2.0), (-0.5, 0.3), (4.0, -1.0), (0.0, 2.0)]
            .into_iter()
            .enumerate()
        {
            cas.rot[i] = Givens::annihilate(a, b).0;
        }
        let v0 = [0.3, -1.2, 2.5, 0.7];
        let mut v = v0;
        cas.forward(&mut v);
        cas.backward(&mut v);
        for i in 0..4 {
            assert!((v[i] - v0[i]).abs() < 1e-14);
        }
        let g = cas.matrix();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| g[i][k] * g[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_cascade_passes_through() {
        let mut v = [1.0, 2.0, 3.0, 4.0];
        Cascade::IDENTITY.forward(&mut v);
        assert_eq!(v, [1.0, 2.0, 3.0, 4.0]);
    }
}
