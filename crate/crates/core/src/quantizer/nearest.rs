//! Exact nearest-center queries with ties broken towards the lowest index.

pub type Point = [f64; 2];

const BRUTE_FORCE_MAX: usize = 64;

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Brute force for small codebooks, a uniform bucket grid otherwise.
#[derive(Debug, Clone)]
pub struct NearestIndex<'a> {
    centers: &'a [Point],
    grid: Option<Grid>,
}

#[derive(Debug, Clone)]
struct Grid {
    x0: f64,
    y0: f64,
    h: f64,
    nx: usize,
    ny: usize,
    /// bucket start offsets into `items` (length nx*ny + 1)
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NearestIndex<'a> {
    pub fn new(centers: &'a [Point]) -> Self {
        let grid = (centers.len() > BRUTE_FORCE_MAX).then(|| Grid::build(centers));
        NearestIndex { centers, grid }
    }

    /// Index and squared distance of the nearest center.
    pub fn nearest(&self, x: &Point) -> (usize, f64) {
        match &self.grid {
            None => brute(self.centers, x),
            Some(g) => g.nearest(self.centers, x),
        }
    }
}

fn brute(centers: &[Point], x: &Point) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = dist2(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

impl Grid {
    fn build(centers: &[Point]) -> Self {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in centers {
            x0 = x0.min(c[0]);
            y0 = y0.min(c[1]);
            x1 = x1.max(c[0]);
            y1 = y1.max(c[1]);
        }
        let w = (x1 - x0).max(1e-300);
        let hgt = (y1 - y0).max(1e-300);
        // about two centers per bucket
        let side = ((w * hgt) / (centers.len() as f64 / 2.0)).sqrt();
        let h = side.max(w.max(hgt) / 4096.0).max(f64::MIN_POSITIVE);
        let nx = ((w / h).floor() as usize + 1).min(4096);
        let ny = ((hgt / h).floor() as usize + 1).min(4096);
        let mut g = Grid {
            x0,
            y0,
            h,
            nx,
            ny,
            starts: vec![0; nx * ny + 1],
            items: vec![0; centers.len()],
        };
        let cells: Vec<usize> = centers.iter().map(|c| g.cell_of(c)).collect();
        for &c in &cells {
            g.starts[c + 1] += 1;
        }
        for k in 0..nx * ny {
            g.starts[k + 1] += g.starts[k];
        }
        let mut fill = g.starts.clone();
        for (k, &c) in cells.iter().enumerate() {
            g.items[fill[c]] = k;
            fill[c] += 1;
        }
        g
    }

    fn coords(&self, p: &Point) -> (usize, usize) {
        let cx = ((p[0] - self.x0) / self.h)
            .floor()
            .clamp(0.0, (self.nx - 1) as f64) as usize;
        let cy = ((p[1] - self.y0) / self.h)
            .floor()
            .clamp(0.0, (self.ny - 1) as f64) as usize;
        (cx, cy)
    }

    fn cell_of(&self, p: &Point) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn scan(&self, centers: &[Point], cx: usize, cy: usize, x: &Point, best: &mut (usize, f64)) {
        let c = cy * self.nx + cx;
        for &k in &self.items[self.starts[c]..self.starts[c + 1]] {
            let d = dist2(&centers[k], x);
            if d < best.1 || (d == best.1 && k < best.0) {
                *best = (k, d);
            }
        }
    }

    fn nearest(&self, centers: &[Point], x: &Point) -> (usize, f64) {
        let (cx, cy) = self.coords(x);
        let (cx, cy) = (cx as isize, cy as isize);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = self.nx.max(self.ny) as isize;
        for ring in 0..=max_ring {
            for dy in -ring..=ring {
                let y = cy + dy;
                if y < 0 || y >= self.ny as isize {
                    continue;
                }
                let edge = dy.abs() == ring;
                let step = if edge { 1 } else { (2 * ring).max(1) };
                let mut dx = -ring;
                while dx <= ring {
                    let xx = cx + dx;
                    if xx >= 0 && xx < self.nx as isize {
                        self.scan(centers, xx as usize, y as usize, x, &mut best);
                    }
                    dx += step;
                }
            }
            // every bucket beyond this ring is at least `ring * h` away;
            // strict comparison keeps equidistant lower indices reachable
            let reach = ring as f64 * self.h * (1.0 - 1e-12);
            if best.0 != usize::MAX && reach * reach > best.1 {
                break;
            }
        }
        best
    }
}
