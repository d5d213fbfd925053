//! Quadrature rules on the reference triangle (barycentric points) and on the
//! unit interval.
//!
//! Triangle weights sum to one; multiply by the element area.

/// A triangle rule: barycentric points and weights normalized to unit area.
#[derive(Debug, Clone, Copy)]
pub struct TriangleRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
    pub degree: usize,
}

const CENTROID: [[f64; 3]; 1] = [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
const CENTROID_W: [f64; 1] = [1.0];

const D2_POINTS: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];
const D2_WEIGHTS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

// Dunavant degree 4.
const D4_A: f64 = 0.445_948_490_915_965;
const D4_B: f64 = 0.091_576_213_509_771;
const D4_WA: f64 = 0.223_381_589_678_011;
const D4_WB: f64 = 0.109_951_743_655_322;
const D4_POINTS: [[f64; 3]; 6] = [
    [1.0 - 2.0 * D4_A, D4_A, D4_A],
    [D4_A, 1.0 - 2.0 * D4_A, D4_A],
    [D4_A, D4_A, 1.0 - 2.0 * D4_A],
    [1.0 - 2.0 * D4_B, D4_B, D4_B],
    [D4_B, 1.0 - 2.0 * D4_B, D4_B],
    [D4_B, D4_B, 1.0 - 2.0 * D4_B],
];
const D4_WEIGHTS: [f64; 6] = [D4_WA, D4_WA, D4_WA, D4_WB, D4_WB, D4_WB];

// Radon's 7-point degree 5 rule; a = (6 - sqrt 15)/21, b = (6 + sqrt 15)/21.
const D5_A: f64 = 0.101_286_507_323_456_34;
const D5_B: f64 = 0.470_142_064_105_115_1;
const D5_WA: f64 = 0.125_939_180_544_827_15;
const D5_WB: f64 = 0.132_394_152_788_506_2;
const D5_POINTS: [[f64; 3]; 7] = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [1.0 - 2.0 * D5_A, D5_A, D5_A],
    [D5_A, 1.0 - 2.0 * D5_A, D5_A],
    [D5_A, D5_A, 1.0 - 2.0 * D5_A],
    [1.0 - 2.0 * D5_B, D5_B, D5_B],
    [D5_B, 1.0 - 2.0 * D5_B, D5_B],
    [D5_B, D5_B, 1.0 - 2.0 * D5_B],
];
const D5_WEIGHTS: [f64; 7] = [0.225, D5_WA, D5_WA, D5_WA, D5_WB, D5_WB, D5_WB];

impl TriangleRule {
    /// Cheapest available rule exact for polynomials of total degree `degree`.
    /// Requests above 5 get the degree-5 rule.
    pub fn with_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => TriangleRule {
                points: &CENTROID,
                weights: &CENTROID_W,
                degree: 1,
            },
            2 => TriangleRule {
                points: &D2_POINTS,
                weights: &D2_WEIGHTS,
                degree: 2,
            },
            3 | 4 => TriangleRule {
                points: &D4_POINTS,
                weights: &D4_WEIGHTS,
                degree: 4,
            },
            _ => TriangleRule {
                points: &D5_POINTS,
                weights: &D5_WEIGHTS,
                degree: 5,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct LineRule {
    pub points: &'static [f64],
    pub weights: &'static [f64],
}

const G1_P: [f64; 1] = [0.5];
const G1_W: [f64; 1] = [1.0];
// 0.5 -+ 0.5/sqrt(3)
const G2_P: [f64; 2] = [0.211_324_865_405_187_13, 0.788_675_134_594_812_9];
const G2_W: [f64; 2] = [0.5, 0.5];
// 0.5 -+ 0.5*sqrt(3/5)
const G3_P: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const G3_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

impl LineRule {
    /// Rule with `n` points (1 to 3), exact for degree `2n - 1`.
    pub fn gauss(n: usize) -> Self {
        match n {
            0 | 1 => LineRule {
                points: &G1_P,
                weights: &G1_W,
            },
            2 => LineRule {
                points: &G2_P,
                weights: &G2_W,
            },
            _ => LineRule {
                points: &G3_P,
                weights: &G3_W,
            },
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Maps barycentric coordinates to a physical point of the triangle `p`.
#[inline]
pub fn bary_to_point(p: &[[f64; 2]; 3], b: [f64; 3]) -> [f64; 2] {
    [
        b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
        b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
    ]
}
