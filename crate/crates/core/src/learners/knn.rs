use crate::error::Result;

/// Brute-force k-nearest-neighbour regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    k: usize,
    /// Row-major standardized training features.
    x: Vec<f64>,
    p: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Knn {
    pub fn fit(cols: &[&[f64]], y: &[f64], w: &[f64], k: usize) -> Result<Knn> {
        let keep: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
        let p = cols.len();
        let mut center = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for c in cols {
            let vals: Vec<f64> = keep.iter().map(|&i| c[i]).collect();
            let m = crate::stats::mean(&vals);
            let s = if vals.len() > 1 { crate::stats::sd(&vals) } else { 0.0 };
            center.push(m);
            scale.push(if s > 0.0 { s } else { 1.0 });
        }
        let mut x = Vec::with_capacity(keep.len() * p);
        for &i in &keep {
            for j in 0..p {
                x.push((cols[j][i] - center[j]) / scale[j]);
            }
        }
        Ok(Knn {
            k: k.max(1),
            x,
            p,
            y: keep.iter().map(|&i| y[i]).collect(),
            w: keep.iter().map(|&i| w[i]).collect(),
            center,
            scale,
        })
    }

    pub fn predict(&self, cols: &[&[f64]], n: usize) -> Vec<f64> {
        let m = self.y.len();
        let k = self.k.min(m);
        let mut buf: Vec<(f64, usize)> = Vec::with_capacity(m);
        let mut q = vec![0.0; self.p];
        (0..n)
            .map(|i| {
                for j in 0..self.p {
                    q[j] = (cols[j][i] - self.center[j]) / self.scale[j];
                }
                buf.clear();
                for r in 0..m {
                    let row = &self.x[r * self.p..(r + 1) * self.p];
                    let d: f64 = row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                    buf.push((d, r));
                }
                // ties broken by lowest training index
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < m {
                    buf.select_nth_unstable_by(k - 1, cmp);
                }
                let nn = &buf[..k];
                let sw: f64 = nn.iter().map(|&(_, r)| self.w[r]).sum();
                nn.iter().map(|&(_, r)| self.w[r] * self.y[r]).sum::<f64>() / sw
            })
            .collect()
    }
}
