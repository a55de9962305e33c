//! Single-input, single-output Mamdani system mapping a normalized relative
//! variance to a metric weight.
//!
//! Input and output universes are both `[0, 1]`, partitioned by symmetric
//! triangles whose peaks are evenly spaced. Rule `k` maps input term `k` to
//! output term `k`; implication is `min`, aggregation is `max` and the crisp
//! output is the centroid of the aggregate.

use super::FuzzyError;

const SEVEN_TERM_LABELS: [&str; 7] = [
    "very small",
    "medium small",
    "small",
    "medium",
    "large",
    "medium large",
    "very large",
];

/// Triangular membership function with feet at `left`/`right` and apex at `peak`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub left: f64,
    pub peak: f64,
    pub right: f64,
}

impl Triangle {
    pub fn new(left: f64, peak: f64, right: f64) -> Self {
        debug_assert!(left <= peak && peak <= right);
        Self { left, peak, right }
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x < self.left || x > self.right {
            0.0
        } else if x == self.peak {
            1.0
        } else if x < self.peak {
            (x - self.left) / (self.peak - self.left)
        } else {
            (self.right - x) / (self.right - self.peak)
        }
    }

    /// Points where the triangle clipped at height `h` changes slope.
    fn clipped_kinks(&self, h: f64) -> [f64; 5] {
        [
            self.left,
            self.left + h * (self.peak - self.left),
            self.peak,
            self.right - h * (self.right - self.peak),
            self.right,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    inputs: Vec<Triangle>,
    outputs: Vec<Triangle>,
    labels: Vec<String>,
}

impl Default for FuzzySystem {
    fn default() -> Self {
        Self::uniform(7).expect("seven terms is a valid partition")
    }
}

impl FuzzySystem {
    /// Evenly spaced symmetric triangles on `[0, 1]`, each overlapping half of its neighbours.
    pub fn uniform(term_count: usize) -> Result<Self, FuzzyError> {
        if term_count < 2 {
            return Err(FuzzyError::TermCount(term_count));
        }
        let step = 1.0 / (term_count - 1) as f64;
        let terms: Vec<Triangle> = (0..term_count)
            .map(|k| {
                let c = k as f64 * step;
                Triangle::new(c - step, c, c + step)
            })
            .collect();
        let labels = if term_count == 7 {
            SEVEN_TERM_LABELS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..term_count).map(|k| format!("term_{k}")).collect()
        };
        Ok(Self {
            inputs: terms.clone(),
            outputs: terms,
            labels,
        })
    }

    pub fn term_count(&self) -> usize {
        self.inputs.len()
    }

    /// One rule per term, independent of how many metrics are weighted.
    pub fn rule_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_terms(&self) -> &[Triangle] {
        &self.inputs
    }

    pub fn output_terms(&self) -> &[Triangle] {
        &self.outputs
    }

    /// Firing strength of each rule for input `x` (clamped to `[0, 1]`).
    pub fn firing_strengths(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(0.0, 1.0);
        self.inputs.iter().map(|t| t.membership(x)).collect()
    }

    /// Aggregate output membership at `y` for the given rule strengths.
    pub fn aggregate(&self, strengths: &[f64], y: f64) -> f64 {
        self.outputs
            .iter()
            .zip(strengths)
            .map(|(t, &h)| t.membership(y).min(h))
            .fold(0.0, f64::max)
    }

    /// Crisp output for normalized input `x`.
    pub fn infer(&self, x: f64) -> f64 {
        let strengths = self.firing_strengths(x);
        self.centroid(&strengths)
    }

    /// Exact centroid of the clipped-and-maxed output aggregate over `[0, 1]`.
    ///
    /// The aggregate is piecewise linear; it is split at every kink of every clipped
    /// term and at every crossing between terms, then integrated piece by piece.
    fn centroid(&self, strengths: &[f64]) -> f64 {
        let mut cuts = vec![0.0, 1.0];
        for (t, &h) in self.outputs.iter().zip(strengths) {
            if h > 0.0 {
                cuts.extend(t.clipped_kinks(h).iter().copied().filter(|y| (0.0..=1.0).contains(y)));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let active: Vec<(Triangle, f64)> = self
            .outputs
            .iter()
            .zip(strengths)
            .filter(|(_, &h)| h > 0.0)
            .map(|(t, &h)| (*t, h))
            .collect();
        let eval = |k: usize, y: f64| active[k].0.membership(y).min(active[k].1);

        let mut area = 0.0;
        let mut moment = 0.0;
        let mut points = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            points.clear();
            points.push(a);
            points.push(b);
            for p in 0..active.len() {
                for q in (p + 1)..active.len() {
                    let da = eval(p, a) - eval(q, a);
                    let db = eval(p, b) - eval(q, b);
                    if da * db < 0.0 {
                        points.push(a + (b - a) * da / (da - db));
                    }
                }
            }
            points.sort_by(f64::total_cmp);
            for s in points.windows(2) {
                let (u, v) = (s[0], s[1]);
                let len = v - u;
                if len <= 0.0 {
                    continue;
                }
                let fu = (0..active.len()).map(|k| eval(k, u)).fold(0.0, f64::max);
                let fv = (0..active.len()).map(|k| eval(k, v)).fold(0.0, f64::max);
                area += 0.5 * (fu + fv) * len;
                moment += len / 6.0 * (u * (2.0 * fu + fv) + v * (fu + 2.0 * fv));
            }
        }
        if area > 0.0 {
            moment / area
        } else {
            0.5
        }
    }
}
