//! Local cubic (four-point Lagrange) interpolation on increasing nodes.

/// Interpolation stencil: node indices and their Lagrange weights.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.weights.len()
    }

    /// Combine samples addressed by node index.
    pub fn apply<T, F>(&self, mut sample: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
        F: FnMut(usize) -> T,
    {
        let mut it = self.weights.iter().enumerate();
        let (k0, w0) = it.next().expect("non-empty stencil");
        let mut acc = sample(self.start + k0) * *w0;
        for (k, w) in it {
            acc = acc + sample(self.start + k) * *w;
        }
        acc
    }
}

/// Build a cubic stencil around `x`. Returns `None` outside `[nodes[0], nodes[last]]`.
pub fn stencil(nodes: &[f64], x: f64) -> Option<Stencil> {
    let n = nodes.len();
    if n == 0 || !x.is_finite() {
        return None;
    }
    let span = (nodes[n - 1] - nodes[0]).abs().max(1.0);
    let slack = 1e-12 * span;
    if x < nodes[0] - slack || x > nodes[n - 1] + slack {
        return None;
    }
    if n == 1 {
        return Some(Stencil {
            start: 0,
            weights: vec![1.0],
        });
    }
    let i = match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => {
            return Some(Stencil {
                start: i,
                weights: vec![1.0],
            })
        }
        Err(i) => i.clamp(1, n - 1) - 1,
    };
    let width = 4.min(n);
    let start = i.saturating_sub(1).min(n - width);
    let pts = &nodes[start..start + width];
    let weights = (0..width)
        .map(|a| {
            (0..width)
                .filter(|&b| b != a)
                .map(|b| (x - pts[b]) / (pts[a] - pts[b]))
                .product()
        })
        .collect();
    Some(Stencil { start, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let nodes: Vec<f64> = (0..12).map(|k| (k as f64).powf(1.3)).collect();
        let f = |x: f64| 2.0 - x + 0.3 * x * x - 0.01 * x * x * x;
        for &x in &[0.0, 0.4, 3.3, 7.77, nodes[11]] {
            let s = stencil(&nodes, x).unwrap();
            let v = s.apply(|i| f(nodes[i]));
            assert!((v - f(x)).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn outside_is_none() {
        let nodes = [1.0, 2.0, 3.0];
        assert!(stencil(&nodes, 0.5).is_none());
        assert!(stencil(&nodes, 3.5).is_none());
        assert!(stencil(&nodes, 2.5).is_some());
    }
}
