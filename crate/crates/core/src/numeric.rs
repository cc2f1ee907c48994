//! Small numeric helpers.

/// Neumaier-compensated running sums over a fixed-length vector.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedVec {
    pub fn zeros(len: usize) -> Self {
        Self { sum: vec![0.0; len], comp: vec![0.0; len] }
    }

    /// `self += scale · row`.
    #[inline]
    pub fn add_scaled(&mut self, scale: f64, row: &[f64]) {
        // Branch-free TwoSum: the same exact rounding error as Neumaier's branch.
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(row) {
            let v = scale * x;
            let t = *s + v;
            let bp = t - *s;
            *c += (*s - (t - bp)) + (v - bp);
            *s = t;
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }
}

/// Compensated scalar sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation around the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}
