//! Tensor grids with second-order stencils. x is always periodic, y optionally.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

pub trait GridValue: Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl GridValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl GridValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub periodic_y: bool,
    /// row-major, rows are y
    pub data: Vec<T>,
}

pub type RealGrid = Grid<f64>;
pub type ComplexGrid = Grid<Complex64>;

impl<T: GridValue> Grid<T> {
    pub fn from_fn(nx: usize, ny: usize, hx: f64, hy: f64, periodic_y: bool, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                data.push(f(i, j));
            }
        }
        Grid { nx, ny, hx, hy, periodic_y, data }
    }

    pub fn zeros_like<S>(other: &Grid<S>) -> Self {
        Grid { nx: other.nx, ny: other.ny, hx: other.hx, hy: other.hy, periodic_y: other.periodic_y, data: vec![T::default(); other.nx * other.ny] }
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[j * self.nx + i]
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn period_x(&self) -> f64 {
        self.nx as f64 * self.hx
    }

    pub fn map<S: GridValue>(&self, f: impl Fn(T) -> S) -> Grid<S> {
        Grid { nx: self.nx, ny: self.ny, hx: self.hx, hy: self.hy, periodic_y: self.periodic_y, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<S: GridValue, R: GridValue>(&self, o: &Grid<S>, f: impl Fn(T, S) -> R) -> Grid<R> {
        assert_eq!((self.nx, self.ny), (o.nx, o.ny), "grid shapes differ");
        Grid { nx: self.nx, ny: self.ny, hx: self.hx, hy: self.hy, periodic_y: self.periodic_y, data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    fn xm(&self, i: usize) -> usize {
        (i + self.nx - 1) % self.nx
    }

    fn xp(&self, i: usize) -> usize {
        (i + 1) % self.nx
    }

    pub fn diff_x(&self) -> Self {
        let s = 0.5 / self.hx;
        Self::from_fn(self.nx, self.ny, self.hx, self.hy, self.periodic_y, |i, j| (self.at(self.xp(i), j) - self.at(self.xm(i), j)) * s)
    }

    pub fn diff_xx(&self) -> Self {
        let s = 1.0 / (self.hx * self.hx);
        Self::from_fn(self.nx, self.ny, self.hx, self.hy, self.periodic_y, |i, j| {
            (self.at(self.xp(i), j) + self.at(self.xm(i), j) - self.at(i, j) * 2.0) * s
        })
    }

    pub fn diff_y(&self) -> Self {
        let s = 0.5 / self.hy;
        let n = self.ny;
        Self::from_fn(self.nx, n, self.hx, self.hy, self.periodic_y, |i, j| {
            if self.periodic_y {
                (self.at(i, (j + 1) % n) - self.at(i, (j + n - 1) % n)) * s
            } else if j == 0 {
                (self.at(i, 1) * 4.0 - self.at(i, 0) * 3.0 - self.at(i, 2)) * s
            } else if j == n - 1 {
                (self.at(i, n - 1) * 3.0 - self.at(i, n - 2) * 4.0 + self.at(i, n - 3)) * s
            } else {
                (self.at(i, j + 1) - self.at(i, j - 1)) * s
            }
        })
    }

    pub fn diff_yy(&self) -> Self {
        let s = 1.0 / (self.hy * self.hy);
        let n = self.ny;
        Self::from_fn(self.nx, n, self.hx, self.hy, self.periodic_y, |i, j| {
            if self.periodic_y {
                (self.at(i, (j + 1) % n) + self.at(i, (j + n - 1) % n) - self.at(i, j) * 2.0) * s
            } else if j == 0 {
                (self.at(i, 0) * 2.0 - self.at(i, 1) * 5.0 + self.at(i, 2) * 4.0 - self.at(i, 3)) * s
            } else if j == n - 1 {
                (self.at(i, n - 1) * 2.0 - self.at(i, n - 2) * 5.0 + self.at(i, n - 3) * 4.0 - self.at(i, n - 4)) * s
            } else {
                (self.at(i, j + 1) + self.at(i, j - 1) - self.at(i, j) * 2.0) * s
            }
        })
    }

    /// 5-point Laplacian.
    pub fn laplacian(&self) -> Self {
        let a = self.diff_xx();
        let b = self.diff_yy();
        a.zip_map(&b, |p, q| p + q)
    }

    pub fn interior_rows(&self) -> std::ops::Range<usize> {
        if self.periodic_y {
            0..self.ny
        } else {
            1..self.ny - 1
        }
    }

    /// Max magnitude over rows at least `margin` away from a non-periodic y-boundary.
    pub fn max_interior(&self, margin: usize) -> f64 {
        let rows = if self.periodic_y { 0..self.ny } else { margin.min(self.ny / 2)..self.ny.saturating_sub(margin).max(margin.min(self.ny / 2)) };
        let mut m: f64 = 0.0;
        for j in rows {
            for i in 0..self.nx {
                m = m.max(self.at(i, j).magnitude());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.magnitude()).fold(0.0, f64::max)
    }
}

impl RealGrid {
    pub fn to_complex(&self) -> ComplexGrid {
        self.map(|v| Complex64::new(v, 0.0))
    }

    /// Plain-text dump: one line per y row, columns are x.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for j in 0..self.ny {
            let row: Vec<String> = (0..self.nx).map(|i| format!("{:.17e}", self.at(i, j))).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

impl ComplexGrid {
    /// d/dz = (d/dx - i d/dy)/2
    pub fn diff_z(&self) -> Self {
        let dx = self.diff_x();
        let dy = self.diff_y();
        dx.zip_map(&dy, |a, b| (a - Complex64::new(0.0, 1.0) * b) * 0.5)
    }

    /// d/dzbar = (d/dx + i d/dy)/2
    pub fn diff_zbar(&self) -> Self {
        let dx = self.diff_x();
        let dy = self.diff_y();
        dx.zip_map(&dy, |a, b| (a + Complex64::new(0.0, 1.0) * b) * 0.5)
    }

    pub fn re(&self) -> RealGrid {
        self.map(|v: Complex64| v.re)
    }

    pub fn im(&self) -> RealGrid {
        self.map(|v: Complex64| v.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn stencils_are_second_order() {
        let err = |n: usize| {
            let h = 2.0 * PI / n as f64;
            let g = RealGrid::from_fn(n, n, h, h, false, |i, j| (i as f64 * h).sin() * (j as f64 * h).cos());
            let dy = g.diff_y();
            let dyy = g.diff_yy();
            let mut e: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let (x, y) = (i as f64 * h, j as f64 * h);
                    e = e.max((dy.at(i, j) + x.sin() * y.sin()).abs());
                    e = e.max((dyy.at(i, j) + x.sin() * y.cos()).abs());
                }
            }
            e
        };
        let r = err(32) / err(64);
        assert!(r > 3.0 && r < 5.0, "ratio {r}");
    }
}
