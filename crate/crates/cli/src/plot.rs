//! Static PNG plots: per-step loss curves and a PCA projection of latent
//! vectors.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use nalgebra::{DMatrix, SymmetricEigen};

use cadet_core::train::LossReport;
use cadet_core::LossName;

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const MARGIN: u32 = 40;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([60, 60, 60]);

const PALETTE: [Rgb<u8>; 10] = [
    Rgb([0, 0, 0]),
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([127, 127, 127]),
    Rgb([23, 190, 207]),
];

struct Canvas {
    img: RgbImage,
    x: (f64, f64),
    y: (f64, f64),
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
        for px in MARGIN..WIDTH - MARGIN {
            img.put_pixel(px, HEIGHT - MARGIN, AXIS);
        }
        for py in MARGIN..=HEIGHT - MARGIN {
            img.put_pixel(MARGIN, py, AXIS);
        }
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { img, x: pad(x), y: pad(y) }
    }

    fn to_px(&self, x: f64, y: f64) -> (i64, i64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * h;
        (px.round() as i64, py.round() as i64)
    }

    fn dot(&mut self, (px, py): (i64, i64), r: i64, color: Rgb<u8>) {
        for dx in -r..=r {
            for dy in -r..=r {
                let (x, y) = (px + dx, py + dy);
                if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
                    self.img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }

    /// Bresenham segment.
    fn line(&mut self, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
        let (mut x, mut y) = a;
        let (dx, dy) = ((b.0 - x).abs(), -(b.1 - y).abs());
        let (sx, sy) = (if x < b.0 { 1 } else { -1 }, if y < b.1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.dot((x, y), 0, color);
            if (x, y) == b {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.img.save(path).with_context(|| format!("writing {}", path.display()))
    }
}

/// Weighted total (black) and every raw component per step.
pub fn loss_curves(reports: &[LossReport], path: &Path) -> Result<()> {
    let mut series: BTreeMap<Option<LossName>, Vec<f64>> = BTreeMap::new();
    for r in reports {
        series.entry(None).or_default().push(r.total);
        for (&name, &v) in &r.components {
            series.entry(Some(name)).or_default().push(v);
        }
    }
    let y_max = series.values().flatten().copied().fold(0.0, f64::max);
    let mut canvas = Canvas::new((0.0, reports.len().saturating_sub(1) as f64), (0.0, y_max));
    for (key, values) in &series {
        let color = match key {
            None => PALETTE[0],
            Some(name) => PALETTE[1 + LossName::ALL.iter().position(|n| n == name).unwrap_or(0)],
        };
        let points: Vec<_> = values.iter().enumerate().map(|(i, &v)| canvas.to_px(i as f64, v)).collect();
        for pair in points.windows(2) {
            canvas.line(pair[0], pair[1], color);
        }
    }
    canvas.save(path)
}

/// Projection onto the two leading principal components. Each axis is
/// signed so its largest loading is positive.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = vectors.len();
    let d = vectors.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        bail!("nothing to project");
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |k: usize| {
        let Some(&idx) = order.get(k) else {
            return nalgebra::DVector::zeros(d);
        };
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        if lead < 0.0 {
            v.neg_mut();
        }
        v
    };
    let (a, b) = (axis(0), axis(1));
    Ok((0..n).map(|i| (x.row(i).dot(&a.transpose()), x.row(i).dot(&b.transpose()))).collect())
}

/// Scatter of the 2-D projection; hate posts in red, others in blue.
pub fn latent_scatter(vectors: &[Vec<f64>], labels: &[u8], path: &Path) -> Result<()> {
    let points = pca_2d(vectors)?;
    let range = |f: fn(&(f64, f64)) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let mut canvas = Canvas::new(range(|p| p.0), range(|p| p.1));
    for (p, &y) in points.iter().zip(labels) {
        let color = if y == 1 { Rgb([214, 39, 40]) } else { Rgb([31, 119, 180]) };
        let px = canvas.to_px(p.0, p.1);
        canvas.dot(px, 2, color);
    }
    canvas.save(path)
}
