use super::{FeatureMap, ModelError};
use crate::geometry::BBox;

pub const DEFAULT_ROI_BINS: usize = 7;

/// Cell range `[lo, hi]` overlapped by the feature-space interval
/// `[start, end)`; an empty interval falls back to the cell under `start`.
fn cell_span(start: f64, end: f64, cells: usize) -> (usize, usize) {
    let last = cells as isize - 1;
    let lo = (start.floor() as isize).clamp(0, last);
    let hi = if end > start {
        (end.ceil() as isize - 1).clamp(lo, last)
    } else {
        lo
    };
    (lo as usize, hi as usize)
}

/// Max-pools the ROI, projected onto the feature map, into `bins x bins` cells.
/// Output layout is `[(by * bins + bx) * channels + c]`.
pub fn roi_pool(fm: &FeatureMap, roi: &BBox, bins: usize) -> Result<Vec<f64>, ModelError> {
    if bins == 0 {
        return Err(ModelError::Dimension("roi pooling needs at least one bin".into()));
    }
    let s = fm.stride as f64;
    let (fx0, fy0, fx1, fy1) = (roi.x_min / s, roi.y_min / s, roi.x_max / s, roi.y_max / s);
    if !(fx1 > fx0 && fy1 > fy0) {
        return Err(ModelError::EmptyRoi);
    }
    if fx1 <= 0.0 || fy1 <= 0.0 || fx0 >= fm.width as f64 || fy0 >= fm.height as f64 {
        return Err(ModelError::RoiOutside(roi.x_min, roi.y_min, roi.x_max, roi.y_max));
    }
    let n = bins as f64;
    let x_spans: Vec<(usize, usize)> = (0..bins)
        .map(|b| {
            let a = fx0 + (fx1 - fx0) * b as f64 / n;
            let e = fx0 + (fx1 - fx0) * (b + 1) as f64 / n;
            cell_span(a, e, fm.width)
        })
        .collect();
    let y_spans: Vec<(usize, usize)> = (0..bins)
        .map(|b| {
            let a = fy0 + (fy1 - fy0) * b as f64 / n;
            let e = fy0 + (fy1 - fy0) * (b + 1) as f64 / n;
            cell_span(a, e, fm.height)
        })
        .collect();

    let c_n = fm.channels;
    let mut out = vec![f64::NEG_INFINITY; bins * bins * c_n];
    for (by, &(y0, y1)) in y_spans.iter().enumerate() {
        for (bx, &(x0, x1)) in x_spans.iter().enumerate() {
            let o = (by * bins + bx) * c_n;
            for c in 0..c_n {
                let ch = fm.channel(c);
                let mut m = f64::NEG_INFINITY;
                for y in y0..=y1 {
                    for &v in &ch[y * fm.width + x0..=y * fm.width + x1] {
                        m = m.max(v);
                    }
                }
                out[o + c] = m;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_2x2() -> FeatureMap {
        let mut fm = FeatureMap::zeros(1, 4, 4, 16);
        fm.set(0, 0, 0, 1.0);
        fm.set(0, 0, 1, 2.0);
        fm.set(0, 1, 0, 3.0);
        fm.set(0, 1, 1, 4.0);
        fm
    }

    #[test]
    fn uniform_map_pools_uniformly() {
        let mut fm = FeatureMap::zeros(2, 10, 10, 16);
        fm.data.iter_mut().for_each(|v| *v = 0.25);
        let out = roi_pool(&fm, &BBox::new(10.0, 20.0, 100.0, 70.0).unwrap(), 7).unwrap();
        assert_eq!(out.len(), 7 * 7 * 2);
        assert!(out.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn single_cell_roi() {
        let fm = grid_2x2();
        let out = roi_pool(&fm, &BBox::new(16.0, 16.0, 32.0, 32.0).unwrap(), 7).unwrap();
        assert!(out.iter().all(|&v| v == 4.0));
        // sub-cell roi maps to its nearest cell
        let out = roi_pool(&fm, &BBox::new(18.0, 2.0, 20.0, 4.0).unwrap(), 7).unwrap();
        assert!(out.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn two_by_two_partition() {
        let out = roi_pool(&grid_2x2(), &BBox::new(0.0, 0.0, 32.0, 32.0).unwrap(), 2).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn errors() {
        let fm = grid_2x2();
        assert_eq!(
            roi_pool(&fm, &BBox::new(5.0, 5.0, 5.0, 9.0).unwrap(), 7),
            Err(ModelError::EmptyRoi)
        );
        assert!(matches!(
            roi_pool(&fm, &BBox::new(100.0, 0.0, 120.0, 10.0).unwrap(), 7),
            Err(ModelError::RoiOutside(..))
        ));
    }

    #[test]
    fn pooled_values_bounded_by_roi_max() {
        let mut fm = FeatureMap::zeros(1, 8, 8, 16);
        for (i, v) in fm.data.iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64;
        }
        let roi = BBox::new(20.0, 20.0, 70.0, 90.0).unwrap();
        let out = roi_pool(&fm, &roi, 7).unwrap();
        let mut max_under = f64::NEG_INFINITY;
        for y in 1..=5 {
            for x in 1..=4 {
                max_under = max_under.max(fm.at(0, y, x));
            }
        }
        assert!(out.iter().all(|&v| v <= max_under));
    }
}
