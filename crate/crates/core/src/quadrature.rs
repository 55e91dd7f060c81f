//! Symmetric quadrature rules on triangles in barycentric form.

/// Points are barycentric triples, weights are normalized to sum to one so
/// that `∫_K f ≈ |K| Σ w_q f(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: usize,
}

/// Selectable exactness degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureDegree {
    #[default]
    Four,
    Six,
}

impl QuadratureDegree {
    pub fn rule(self) -> QuadratureRule {
        match self {
            QuadratureDegree::Four => QuadratureRule::degree4(),
            QuadratureDegree::Six => QuadratureRule::degree6(),
        }
    }

    pub fn from_degree(d: usize) -> Option<Self> {
        match d {
            4 => Some(Self::Four),
            6 => Some(Self::Six),
            _ => None,
        }
    }
}

impl QuadratureRule {
    /// 6-point rule, exact for polynomials of total degree 4.
    pub fn degree4() -> Self {
        let mut rule = Self::empty(4);
        rule.orbit3(0.445_948_490_915_964_886_318_329_253_883, 0.223_381_589_678_011_465_944_827_941_620);
        rule.orbit3(0.091_576_213_509_770_743_459_571_463_402, 0.109_951_743_655_321_867_638_505_391_714);
        rule
    }

    /// 12-point rule, exact for polynomials of total degree 6.
    pub fn degree6() -> Self {
        let mut rule = Self::empty(6);
        rule.orbit3(0.249_286_745_170_910_421_291_638_553_107, 0.116_786_275_726_379_366_030_690_538_687);
        rule.orbit3(0.063_089_014_491_502_228_340_331_602_870, 0.050_844_906_370_206_816_920_936_809_106);
        rule.orbit6(
            0.053_145_049_844_816_947_353_249_671_631,
            0.310_352_451_033_784_405_416_607_733_956,
            0.082_851_075_618_373_575_193_553_456_421,
        );
        rule
    }

    fn empty(degree: usize) -> Self {
        Self {
            points: Vec::new(),
            weights: Vec::new(),
            degree,
        }
    }

    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact mean of x^a y^b over the reference triangle (0,0),(1,0),(0,1).
    fn monomial_mean(a: u32, b: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check_exactness(rule: &QuadratureRule) {
        let sum: f64 = rule.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        for total in 0..=rule.degree() as u32 {
            for a in 0..=total {
                let b = total - a;
                let approx: f64 = rule
                    .iter()
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum();
                let exact = monomial_mean(a, b);
                assert!(
                    (approx - exact).abs() < 1e-14,
                    "x^{a} y^{b}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn degree4_is_exact() {
        let rule = QuadratureRule::degree4();
        assert_eq!(rule.len(), 6);
        check_exactness(&rule);
    }

    #[test]
    fn degree6_is_exact() {
        let rule = QuadratureRule::degree6();
        assert_eq!(rule.len(), 12);
        check_exactness(&rule);
    }

    #[test]
    fn degree4_misses_degree5() {
        let rule = QuadratureRule::degree4();
        let approx: f64 = rule.iter().map(|(p, w)| w * p[1].powi(5)).sum();
        assert!((approx - monomial_mean(5, 0)).abs() > 1e-8);
    }
}
