//! Bounding-box localization metrics and correlation statistics.
//!
//! Pixel-level scores against a ground-truth box: localization (positive
//! pixels hitting the box), energy game (positive mass inside the box),
//! positive percentage (positive vs negative mass inside the box), and
//! concentration (mass clustered around its own center inside the box).
//! All four are invariant under positive rescaling of the attributions.
//! Multi-channel attributions are reduced to pixels by summing channels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pixel-index rectangle; minima inclusive, maxima exclusive. Coordinates
/// follow image convention: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidInput(format!(
                "degenerate box ({x_min},{y_min})..({x_max},{y_max})"
            )));
        }
        Ok(BoundingBox { x_min, y_min, x_max, y_max })
    }

    pub fn area(&self) -> usize {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x_max > width || self.y_max > height {
            return Err(Error::InvalidInput(format!(
                "box ({},{})..({},{}) exceeds {}x{} image",
                self.x_min, self.y_min, self.x_max, self.y_max, width, height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// 2-D attribution map in pixel space, row-major.
#[derive(Debug, Clone)]
pub struct PixelAttribution {
    values: Vec<f32>,
    width: usize,
    height: usize,
}

impl PixelAttribution {
    pub fn new(values: Vec<f32>, width: usize, height: usize) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {width}x{height}", width * height),
                got: format!("{}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite attribution value".into()));
        }
        Ok(PixelAttribution { values, width, height })
    }

    /// Reduces an attribution tensor to pixels: `[h, w]` is used directly,
    /// `[c, h, w]` is summed over channels.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [h, w] => PixelAttribution::new(t.data().to_vec(), *w, *h),
            [c, h, w] => {
                let (c, h, w) = (*c, *h, *w);
                let mut vals = vec![0.0f64; h * w];
                for ch in 0..c {
                    for i in 0..h * w {
                        vals[i] += t.data()[ch * h * w + i] as f64;
                    }
                }
                PixelAttribution::new(vals.into_iter().map(|v| v as f32).collect(), w, h)
            }
            other => Err(Error::ShapeMismatch {
                expected: "[h, w] or [c, h, w]".into(),
                got: format!("{other:?}"),
            }),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// `|Z n U| / (|U| + |Z n (X \ U)|)` where `Z` is the set of strictly
/// positive pixels and `U` the box.
pub fn localization(attr: &PixelAttribution, bbox: &BoundingBox) -> Result<f64> {
    bbox.check_within(attr.width, attr.height)?;
    let mut z_in = 0usize;
    let mut z_out = 0usize;
    for y in 0..attr.height {
        for x in 0..attr.width {
            if attr.at(x, y) > 0.0 {
                if bbox.contains(x, y) {
                    z_in += 1;
                } else {
                    z_out += 1;
                }
            }
        }
    }
    Ok(z_in as f64 / (bbox.area() + z_out) as f64)
}

/// Positive mass inside the box over all positive mass.
pub fn energy_game(attr: &PixelAttribution, bbox: &BoundingBox) -> Result<f64> {
    bbox.check_within(attr.width, attr.height)?;
    let mut inside = 0.0f64;
    let mut total = 0.0f64;
    for y in 0..attr.height {
        for x in 0..attr.width {
            let v = attr.at(x, y) as f64;
            if v > 0.0 {
                total += v;
                if bbox.contains(x, y) {
                    inside += v;
                }
            }
        }
    }
    if total == 0.0 {
        return Err(Error::UndefinedMetric("no positive attribution anywhere".into()));
    }
    Ok(inside / total)
}

/// Positive mass inside the box over total unsigned mass inside the box.
pub fn positive_percentage(attr: &PixelAttribution, bbox: &BoundingBox) -> Result<f64> {
    bbox.check_within(attr.width, attr.height)?;
    let mut pos = 0.0f64;
    let mut neg = 0.0f64;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            let v = attr.at(x, y) as f64;
            if v > 0.0 {
                pos += v;
            } else if v < 0.0 {
                neg += v;
            }
        }
    }
    let denom = pos - neg;
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("box carries no nonzero attribution".into()));
    }
    Ok(pos / denom)
}

/// In-box attributions normalized by unsigned in-box mass, summed with
/// inverse distance to their own center of mass. Distances are floored at
/// one pixel to guard the center pixel's singularity.
pub fn concentration(attr: &PixelAttribution, bbox: &BoundingBox) -> Result<f64> {
    bbox.check_within(attr.width, attr.height)?;
    let mut abs_sum = 0.0f64;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            abs_sum += (attr.at(x, y) as f64).abs();
        }
    }
    if abs_sum == 0.0 {
        return Err(Error::UndefinedMetric("box carries no attribution mass".into()));
    }
    let mut ghat_sum = 0.0f64;
    let mut cx_num = 0.0f64;
    let mut cy_num = 0.0f64;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            let ghat = attr.at(x, y) as f64 / abs_sum;
            ghat_sum += ghat;
            cx_num += x as f64 * ghat;
            cy_num += y as f64 * ghat;
        }
    }
    if ghat_sum == 0.0 {
        return Err(Error::UndefinedMetric("signed attribution mass in box cancels".into()));
    }
    let (cx, cy) = (cx_num / ghat_sum, cy_num / ghat_sum);
    let mut score = 0.0f64;
    for y in bbox.y_min..bbox.y_max {
        for x in bbox.x_min..bbox.x_max {
            let ghat = attr.at(x, y) as f64 / abs_sum;
            let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            score += ghat / dist.max(1.0);
        }
    }
    Ok(score)
}

/// L2 distance between two equally shaped attribution tensors.
pub fn attribution_l2_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            got: format!("{:?}", b.shape()),
        });
    }
    Ok(a.l2_distance(b))
}

/// Pearson correlation via moment accumulation.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidInput("need two equally long series of length >= 2".into()));
    }
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let var_x = sxx - sx * sx / n;
    let var_y = syy - sy * sy / n;
    if var_x <= 0.0 || var_y <= 0.0 {
        return Err(Error::UndefinedMetric("zero variance in correlation input".into()));
    }
    Ok((sxy - sx * sy / n) / (var_x * var_y).sqrt())
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson_correlation(&ranks(xs), &ranks(ys))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Reads the bounding-box CSV: header `id,x_min,y_min,x_max,y_max`, integer
/// pixel coordinates, minima inclusive and maxima exclusive.
pub fn boxes_from_csv(path: &Path) -> Result<Vec<(String, BoundingBox)>> {
    let text = std::fs::read_to_string(path)?;
    boxes_from_csv_text(&text)
}

pub fn boxes_from_csv_text(text: &str) -> Result<Vec<(String, BoundingBox)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "id,x_min,y_min,x_max,y_max" => {}
        other => {
            return Err(Error::Config(format!(
                "bad boxes header {:?}, expected id,x_min,y_min,x_max,y_max",
                other.unwrap_or("")
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!("boxes line {}: expected 5 fields", lineno + 2)));
        }
        let nums: Vec<usize> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| Error::Config(format!("boxes line {}: bad integer '{f}'", lineno + 2)))
            })
            .collect::<Result<_>>()?;
        out.push((fields[0].to_string(), BoundingBox::new(nums[0], nums[1], nums[2], nums[3])?));
    }
    Ok(out)
}

pub fn boxes_to_csv(rows: &[(String, BoundingBox)]) -> String {
    let mut s = String::from("id,x_min,y_min,x_max,y_max\n");
    for (id, b) in rows {
        s.push_str(&format!("{id},{},{},{},{}\n", b.x_min, b.y_min, b.x_max, b.y_max));
    }
    s
}

/// One scored instance in a metric report.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub id: String,
    pub method: String,
    pub loc: f64,
    pub eg: f64,
    pub pp: f64,
    pub con: f64,
}

/// Scores one attribution against one box, or reports which metric was
/// undefined.
pub fn score_instance(
    id: &str,
    method: &str,
    attr: &PixelAttribution,
    bbox: &BoundingBox,
) -> Result<MetricRow> {
    Ok(MetricRow {
        id: id.to_string(),
        method: method.to_string(),
        loc: localization(attr, bbox)?,
        eg: energy_game(attr, bbox)?,
        pp: positive_percentage(attr, bbox)?,
        con: concentration(attr, bbox)?,
    })
}

/// Renders the metric CSV: header `id,method,loc,eg,pp,con`, one row per
/// instance (input order), then one trailing mean row per method.
pub fn metric_report_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("id,method,loc,eg,pp,con\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.id, r.method, r.loc, r.eg, r.pp, r.con
        ));
    }
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    for m in methods {
        let group: Vec<&MetricRow> = rows.iter().filter(|r| r.method == m).collect();
        let n = group.len() as f64;
        let (loc, eg, pp, con) = group.iter().fold((0.0, 0.0, 0.0, 0.0), |acc, r| {
            (acc.0 + r.loc, acc.1 + r.eg, acc.2 + r.pp, acc.3 + r.con)
        });
        s.push_str(&format!(
            "mean,{m},{:.6},{:.6},{:.6},{:.6}\n",
            loc / n,
            eg / n,
            pp / n,
            con / n
        ));
    }
    s
}
