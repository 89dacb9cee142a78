//! Single-channel 2-D arrays used for PSFs and images.

/// Row-major `height × width` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Three planes in R, G, B order.
pub type Rgb = [Plane; 3];

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize) -> &mut f64 {
        &mut self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn same_shape(&self, o: &Plane) -> bool {
        self.width == o.width && self.height == o.height
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `self += k · o`.
    pub fn add_scaled(&mut self, o: &Plane, k: f64) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += k * b;
        }
    }

    /// Divides by the sum when it is positive; returns the sum.
    pub fn normalize(&mut self) -> f64 {
        let s = self.sum();
        if s > 0.0 {
            self.scale(1.0 / s);
        }
        s
    }

    /// Bilinear taps `(index, weight)` at fractional `(y, x)`; samples outside
    /// the array contribute nothing.
    pub fn bilinear_taps(&self, y: f64, x: f64) -> [(usize, f64); 4] {
        let mut out = [(0, 0.0); 4];
        let y0 = y.floor();
        let x0 = x.floor();
        let fy = y - y0;
        let fx = x - x0;
        let corners = [
            (y0, x0, (1.0 - fy) * (1.0 - fx)),
            (y0, x0 + 1.0, (1.0 - fy) * fx),
            (y0 + 1.0, x0, fy * (1.0 - fx)),
            (y0 + 1.0, x0 + 1.0, fy * fx),
        ];
        for (k, &(yy, xx, w)) in corners.iter().enumerate() {
            if yy >= 0.0 && xx >= 0.0 && (yy as usize) < self.height && (xx as usize) < self.width {
                out[k] = ((yy as usize) * self.width + xx as usize, w);
            }
        }
        out
    }

    pub fn bilinear(&self, y: f64, x: f64) -> f64 {
        self.bilinear_taps(y, x).iter().map(|&(i, w)| if w != 0.0 { w * self.data[i] } else { 0.0 }).sum()
    }

    /// Mean squared difference; `None` on shape mismatch.
    pub fn mse(&self, o: &Plane) -> Option<f64> {
        if !self.same_shape(o) {
            return None;
        }
        let n = self.data.len().max(1) as f64;
        Some(self.data.iter().zip(&o.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
    }
}

/// Mean squared error over all three channels.
pub fn rgb_mse(a: &Rgb, b: &Rgb) -> Option<f64> {
    let mut s = 0.0;
    for c in 0..3 {
        s += a[c].mse(&b[c])?;
    }
    Some(s / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_on_grid_points_is_exact() {
        let p = Plane::from_fn(4, 3, |y, x| (y * 10 + x) as f64);
        assert_eq!(p.bilinear(2.0, 3.0), 23.0);
        assert!((p.bilinear(0.5, 0.5) - 5.5).abs() < 1e-12);
        assert_eq!(p.bilinear(-3.0, 0.0), 0.0);
    }
}
