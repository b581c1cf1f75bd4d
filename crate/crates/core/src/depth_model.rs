//! Target depth distribution: histogram, Gaussian fit, occlusion likelihood,
//! depth gating of detections and depth-based box re-centering.

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::types::{BoundingBox, DepthMap};

pub const DEFAULT_BIN_WIDTH_MM: f64 = 50.0;
pub const SIGMA_FLOOR_MM: f64 = 30.0;

/// Counts of valid depth pixels per bin; bin `k` covers
/// `[k * bin_width, (k + 1) * bin_width)` mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHistogram {
    pub bin_width: f64,
    pub bins: Vec<u64>,
    pub total: u64,
}

impl DepthHistogram {
    pub fn new(bin_width: f64) -> Self {
        DepthHistogram {
            bin_width,
            bins: Vec::new(),
            total: 0,
        }
    }

    pub fn add(&mut self, depth_mm: u16) {
        if depth_mm == 0 {
            return;
        }
        let k = (depth_mm as f64 / self.bin_width) as usize;
        if k >= self.bins.len() {
            self.bins.resize(k + 1, 0);
        }
        self.bins[k] += 1;
        self.total += 1;
    }

    pub fn from_depths(depths: impl IntoIterator<Item = u16>, bin_width: f64) -> Self {
        let mut h = Self::new(bin_width);
        for d in depths {
            h.add(d);
        }
        h
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width
    }
}

/// Gaussian approximation of a depth distribution, in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthGaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl DepthGaussian {
    pub fn new(mu: f64, sigma: f64) -> Self {
        DepthGaussian {
            mu,
            sigma: sigma.max(SIGMA_FLOOR_MM),
        }
    }

    /// Half-width of the acceptance window used for gating.
    pub fn gate_radius(&self, sigmas: f64, slack_mm: f64) -> f64 {
        sigmas * self.sigma + slack_mm
    }
}

/// Valid depths inside the box (half-open pixel ranges), row by row.
pub fn box_depths<'a>(depth: &'a DepthMap, b: &BoundingBox) -> impl Iterator<Item = u16> + 'a {
    let (w, h) = depth.dimensions();
    let bounds = b.pixel_bounds(w, h);
    let raw = depth.as_raw();
    bounds
        .into_iter()
        .flat_map(move |(x0, y0, x1, y1)| (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y))))
        .map(move |(x, y)| raw[(y * w + x) as usize])
        .filter(|&d| d > 0)
}

pub fn histogram(depth: &DepthMap, b: &BoundingBox, bin_width: f64) -> DepthHistogram {
    DepthHistogram::from_depths(box_depths(depth, b), bin_width)
}

/// Mean and (population) standard deviation over bin centers, with the
/// standard deviation floored at 30 mm.
pub fn fit_gaussian(h: &DepthHistogram) -> Result<DepthGaussian> {
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let n = h.total as f64;
    let mu = h
        .bins
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * h.bin_center(k))
        .sum::<f64>()
        / n;
    let var = h
        .bins
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * (h.bin_center(k) - mu).powi(2))
        .sum::<f64>()
        / n;
    Ok(DepthGaussian::new(mu, var.sqrt()))
}

/// Fraction of the histogram in bins whose center is nearer than
/// `mu - sigma`.
pub fn occlusion_likelihood(h: &DepthHistogram, g: &DepthGaussian) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let limit = g.mu - g.sigma;
    let near: u64 = h
        .bins
        .iter()
        .enumerate()
        .filter(|&(k, _)| h.bin_center(k) < limit)
        .map(|(_, &c)| c)
        .sum();
    Ok(near as f64 / h.total as f64)
}

/// Median of the valid depths in the box, or `None` if there are none.
pub fn median_depth(depth: &DepthMap, b: &BoundingBox) -> Option<f64> {
    let mut v: Vec<u16> = box_depths(depth, b).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] as f64 + v[n / 2] as f64)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub sigmas: f64,
    pub slack_mm: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            sigmas: 3.0,
            slack_mm: 200.0,
        }
    }
}

/// Drops candidates whose median depth is farther than
/// `sigmas * sigma + slack` from the model mean. Candidates without valid
/// depth are kept. With no model (depth disabled) this is the identity.
pub fn gate(candidates: Vec<Detection>, depth: &DepthMap, g: Option<&DepthGaussian>, params: &GateParams) -> Vec<Detection> {
    let Some(g) = g else { return candidates };
    let radius = g.gate_radius(params.sigmas, params.slack_mm);
    candidates
        .into_iter()
        .filter(|c| match median_depth(depth, &c.bbox) {
            Some(m) => (m - g.mu).abs() <= radius,
            None => true,
        })
        .collect()
}

/// Pixels (as `(x, y)`) of the largest 4-connected component of `mask`,
/// a `w x h` row-major grid. Ties go to the component found first in
/// raster order.
pub(crate) fn largest_component(mask: &[bool], w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut seen = vec![false; mask.len()];
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.push((x, y));
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Moves the box (same size) onto the centroid of the largest connected
/// region, inside the box expanded by `expand`, whose depth lies within one
/// sigma of the model. Returns the box unchanged when no pixel qualifies.
pub fn recenter(b: &BoundingBox, depth: &DepthMap, g: &DepthGaussian, expand: f64) -> BoundingBox {
    let (fw, fh) = depth.dimensions();
    let search = b.scale_about_center(expand);
    let Some((x0, y0, x1, y1)) = search.pixel_bounds(fw, fh) else { return *b };
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let raw = depth.as_raw();
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = raw[((y0 as usize + y) * fw as usize) + x0 as usize + x];
            mask[y * w + x] = d > 0 && (d as f64 - g.mu).abs() <= g.sigma;
        }
    }
    let comp = largest_component(&mask, w, h);
    if comp.is_empty() {
        return *b;
    }
    let n = comp.len() as f64;
    let cx = comp.iter().map(|&(x, _)| x as f64 + 0.5).sum::<f64>() / n + x0 as f64;
    let cy = comp.iter().map(|&(_, y)| y as f64 + 0.5).sum::<f64>() / n + y0 as f64;
    b.with_center(cx, cy).shift_inside(fw, fh)
}

/// Exponential update of both moments; the sigma floor is re-applied.
pub fn update_gaussian(g: &DepthGaussian, observed: &DepthGaussian, rate: f64) -> DepthGaussian {
    let rate = rate.clamp(0.0, 1.0);
    DepthGaussian::new(
        (1.0 - rate) * g.mu + rate * observed.mu,
        (1.0 - rate) * g.sigma + rate * observed.sigma,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn histogram_examples() {
        let holes = DepthMap::new(20, 20);
        assert_eq!(histogram(&holes, &bb(0.0, 0.0, 10.0, 10.0), 50.0).total, 0);

        let flat = DepthMap::from_pixel(20, 20, Luma([3000]));
        let h = histogram(&flat, &bb(2.0, 3.0, 10.0, 5.0), 50.0);
        assert_eq!(h.total, 50);
        assert_eq!(h.bins[60], 50);
        assert_eq!(h.bins.iter().filter(|&&c| c > 0).count(), 1);

        let split = DepthMap::from_fn(20, 20, |x, _| Luma([if x < 10 { 2000 } else { 4000 }]));
        let h = histogram(&split, &bb(0.0, 0.0, 20.0, 20.0), 50.0);
        assert_eq!(h.bins[40], 200);
        assert_eq!(h.bins[80], 200);
        assert_eq!(h.total, 400);
    }

    #[test]
    fn fit_examples() {
        let h = DepthHistogram::from_depths([3000; 10], 50.0);
        assert_eq!(fit_gaussian(&h).unwrap(), DepthGaussian { mu: 3025.0, sigma: 30.0 });

        let h = DepthHistogram::from_depths([2000, 4000, 2010, 4020], 50.0);
        let g = fit_gaussian(&h).unwrap();
        assert_eq!(g.mu, 3025.0);
        assert_eq!(g.sigma, 1000.0);

        assert!(matches!(fit_gaussian(&DepthHistogram::new(50.0)), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn occlusion_examples() {
        let g = DepthGaussian::new(3025.0, 30.0);
        let h = DepthHistogram::from_depths([3000; 100], 50.0);
        assert_eq!(occlusion_likelihood(&h, &g).unwrap(), 0.0);

        let depths = std::iter::repeat(1000).take(30).chain(std::iter::repeat(3000).take(70));
        let h = DepthHistogram::from_depths(depths, 50.0);
        assert_eq!(occlusion_likelihood(&h, &g).unwrap(), 0.3);

        assert!(occlusion_likelihood(&DepthHistogram::new(50.0), &g).is_err());
    }

    #[test]
    fn gate_examples() {
        let depth = DepthMap::from_fn(100, 50, |x, _| Luma([if x < 50 { 3000 } else { 4000 }]));
        let g = DepthGaussian::new(3000.0, 100.0);
        let near = Detection {
            bbox: bb(10.0, 10.0, 20.0, 20.0),
            score: 1.0,
        };
        let far = Detection {
            bbox: bb(60.0, 10.0, 20.0, 20.0),
            score: 2.0,
        };
        let kept = gate(vec![near, far], &depth, Some(&g), &GateParams::default());
        assert_eq!(kept, vec![near]);
        let all = gate(vec![near, far], &depth, None, &GateParams::default());
        assert_eq!(all.len(), 2);

        let holes = DepthMap::new(100, 50);
        assert_eq!(gate(vec![far], &holes, Some(&g), &GateParams::default()).len(), 1);
    }

    fn target_scene(target_x: u32) -> DepthMap {
        DepthMap::from_fn(120, 100, |x, y| {
            let inside = (target_x..target_x + 30).contains(&x) && (30..60).contains(&y);
            Luma([if inside { 2000 } else { 6000 }])
        })
    }

    #[test]
    fn recenter_examples() {
        let g = DepthGaussian::new(2000.0, 100.0);
        let depth = target_scene(40);
        let centered = bb(40.0, 30.0, 30.0, 30.0);
        assert_eq!(recenter(&centered, &depth, &g, 1.4), centered);

        let depth = target_scene(34);
        let out = recenter(&centered, &depth, &g, 1.4);
        let (cx, cy) = out.center();
        assert!((cx - 49.0).abs() <= 2.0 && (cy - 45.0).abs() <= 2.0, "{out}");
        assert_eq!(recenter(&out, &depth, &g, 1.4), out);

        let holes = DepthMap::new(120, 100);
        assert_eq!(recenter(&centered, &holes, &g, 1.4), centered);
    }

    #[test]
    fn update_examples() {
        let g = DepthGaussian::new(3000.0, 100.0);
        let obs = DepthGaussian::new(2000.0, 100.0);
        assert_eq!(update_gaussian(&g, &obs, 1.0), obs);
        assert_eq!(update_gaussian(&g, &g, 0.3), g);
        assert!((update_gaussian(&g, &obs, 0.2).mu - 2800.0).abs() < 1e-9);
    }

    #[test]
    fn largest_component_picks_biggest() {
        #[rustfmt::skip]
        let m = [
            true, false, true, true,
            false, false, true, false,
            true, false, false, false,
        ];
        let c = largest_component(&m, 4, 3);
        assert_eq!(c.len(), 3);
        assert!(c.contains(&(2, 0)) && c.contains(&(3, 0)) && c.contains(&(2, 1)));
    }

    proptest! {
        #[test]
        fn occlusion_is_a_fraction_and_monotone(
            counts in proptest::collection::vec(0u64..50, 1..120),
            mu in 500.0f64..5000.0,
            sigma in 30.0f64..500.0,
            from in 0usize..120,
        ) {
            let mut h = DepthHistogram { bin_width: 50.0, bins: counts.clone(), total: counts.iter().sum() };
            prop_assume!(h.total > 0);
            let g = DepthGaussian::new(mu, sigma);
            let o = occlusion_likelihood(&h, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&o));
            // Moving one pixel from a far bin into bin 0 never lowers O.
            let k = from.min(h.bins.len() - 1);
            if h.bins[k] > 0 {
                h.bins[k] -= 1;
                h.bins[0] += 1;
                prop_assert!(occlusion_likelihood(&h, &g).unwrap() >= o);
            }
        }

        #[test]
        fn histogram_ignores_pixel_order(mut depths in proptest::collection::vec(0u16..10_000, 1..300), seed in any::<u64>()) {
            let a = DepthHistogram::from_depths(depths.iter().copied(), 50.0);
            let n = depths.len();
            depths.rotate_left((seed % n as u64) as usize);
            depths.reverse();
            let b = DepthHistogram::from_depths(depths.iter().copied(), 50.0);
            prop_assert_eq!(a, b);
        }
    }
}
