#![allow(dead_code)]

use pba::Sign;

/// Dense-grid reference for the belief update: `cells` equal bins on `[0, 1]`,
/// each carrying one height. Exact whenever every update point is a bin edge.
pub struct DenseGrid {
    pub heights: Vec<f64>,
}

impl DenseGrid {
    pub fn uniform(cells: usize) -> Self {
        Self {
            heights: vec![1.0; cells],
        }
    }

    fn mid(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.heights.len() as f64
    }

    pub fn update(&mut self, x: f64, z: Sign, p: f64) {
        let (right, left) = match z {
            Sign::Plus => (2.0 * p, 2.0 * (1.0 - p)),
            Sign::Minus => (2.0 * (1.0 - p), 2.0 * p),
        };
        for j in 0..self.heights.len() {
            let m = self.mid(j);
            self.heights[j] *= if m >= x { right } else { left };
        }
    }

    pub fn mass(&self) -> f64 {
        self.heights.iter().sum::<f64>() / self.heights.len() as f64
    }

    /// Height of bin `j` after normalizing to unit mass.
    pub fn normalized(&self, j: usize) -> f64 {
        self.heights[j] / self.mass()
    }

    pub fn median(&self) -> f64 {
        let n = self.heights.len() as f64;
        let total: f64 = self.heights.iter().sum();
        let mut acc = 0.0;
        for (j, &h) in self.heights.iter().enumerate() {
            if acc + h >= 0.5 * total {
                return (j as f64 + (0.5 * total - acc) / h) / n;
            }
            acc += h;
        }
        1.0
    }

    pub fn bin_mid(&self, j: usize) -> f64 {
        self.mid(j)
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut k = i;
            while k + 1 < idx.len() && v[idx[k + 1]] == v[idx[i]] {
                k += 1;
            }
            let avg = (i + k) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=k] {
                r[t] = avg;
            }
            i = k + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
