use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BallSampler, BallStats, Field};

const SNAP: f64 = 1e-10;

/// Uniform tensor grid: `node(i) = lower + h * i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: Vec<f64>,
    h: f64,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, h: f64, counts: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != counts.len() {
            return Err(Error::Domain("grid corner and counts disagree in dimension".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("grid spacing {h} must be positive")));
        }
        if counts.iter().any(|&n| n < 2) {
            return Err(Error::Domain("each axis needs at least two nodes".into()));
        }
        Ok(Self { lower, h, counts })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.counts)
            .map(|(l, &n)| l + self.h * (n - 1) as f64)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major multi-index (last axis fastest).
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.counts[k];
            idx /= self.counts[k];
        }
        out
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_into(idx, &mut x);
        x
    }

    pub fn node_into(&self, mut idx: usize, out: &mut [f64]) {
        for k in (0..self.dim()).rev() {
            let i = idx % self.counts[k];
            idx /= self.counts[k];
            out[k] = self.lower[k] + self.h * i as f64;
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Cell index and fractional offset along one axis, snapped to nodes
    /// within `1e-10` index units.
    #[inline]
    fn locate(&self, axis: usize, y: f64) -> Option<(usize, f64)> {
        let n = self.counts[axis];
        let t = (y - self.lower[axis]) / self.h;
        let top = (n - 1) as f64;
        if !(t >= -SNAP && t <= top + SNAP) {
            return None;
        }
        let t = t.clamp(0.0, top);
        let mut i = t.floor();
        let mut frac = t - i;
        if frac > 1.0 - SNAP {
            i += 1.0;
            frac = 0.0;
        } else if frac < SNAP {
            frac = 0.0;
        }
        let mut i = i as usize;
        if i >= n - 1 {
            i = n - 1;
            frac = 0.0;
        }
        Some((i, frac))
    }

    fn undefined(point: &[f64]) -> Error {
        Error::Undefined {
            point: point.to_vec(),
        }
    }

    /// Multilinear interpolation of `values` at `point`.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Result<f64> {
        match self.dim() {
            1 => {
                let (i, f) = self.locate(0, point[0]).ok_or_else(|| Self::undefined(point))?;
                Ok(lerp(values, i, 1, f))
            }
            2 => {
                let (i, fx) = self.locate(0, point[0]).ok_or_else(|| Self::undefined(point))?;
                let (j, fy) = self.locate(1, point[1]).ok_or_else(|| Self::undefined(point))?;
                let ny = self.counts[1];
                let base = i * ny + j;
                if fx == 0.0 {
                    return Ok(lerp(values, base, 1, fy));
                }
                let a = lerp(values, base, 1, fy);
                let b = lerp(values, base + ny, 1, fy);
                Ok((1.0 - fx) * a + fx * b)
            }
            d => {
                let mut cell = Vec::with_capacity(d);
                for k in 0..d {
                    cell.push(self.locate(k, point[k]).ok_or_else(|| Self::undefined(point))?);
                }
                Ok(self.multilinear(values, &cell, 0, 0))
            }
        }
    }

    fn multilinear(&self, values: &[f64], cell: &[(usize, f64)], axis: usize, base: usize) -> f64 {
        if axis == cell.len() {
            return values[base];
        }
        let (i, f) = cell[axis];
        let idx = base * self.counts[axis] + i;
        let lo = self.multilinear(values, cell, axis + 1, idx);
        if f == 0.0 {
            return lo;
        }
        let hi = self.multilinear(values, cell, axis + 1, idx + 1);
        (1.0 - f) * lo + f * hi
    }
}

#[inline]
fn lerp(values: &[f64], i: usize, stride: usize, f: f64) -> f64 {
    if f == 0.0 {
        values[i]
    } else {
        (1.0 - f) * values[i] + f * values[i + stride]
    }
}

/// Node values on a [`Grid`], read back through multilinear interpolation.
///
/// In one dimension the ball statistics are computed exactly for the
/// piecewise-linear interpolant (sup/inf over endpoints and enclosed nodes,
/// mean by exact integration) unless `exact_intervals` is switched off.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    exact_intervals: bool,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at node {i}")));
        }
        Ok(Self {
            grid,
            values,
            exact_intervals: true,
        })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.nodes().map(|x| f(&x)).collect();
        Self::new(grid, values)
    }

    pub fn with_exact_intervals(mut self, on: bool) -> Self {
        self.exact_intervals = on;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interpolate(&self, point: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, point)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn exact_1d(&self) -> bool {
        self.exact_intervals && self.grid.dim() == 1
    }

    /// Endpoint cells of `[c - r, c + r]` in index units.
    fn interval(&self, center: f64, radius: f64) -> Result<((usize, f64), (usize, f64))> {
        let g = &self.grid;
        let a = g.locate(0, center - radius);
        let b = g.locate(0, center + radius);
        match (a, b) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Grid::undefined(&[if a.is_none() {
                center - radius
            } else {
                center + radius
            }])),
        }
    }

    fn interval_extremes(&self, center: f64, radius: f64) -> Result<(f64, f64, f64, f64)> {
        let v = &self.values;
        let ((ia, fa), (ib, fb)) = self.interval(center, radius)?;
        let va = lerp(v, ia, 1, fa);
        let vb = lerp(v, ib, 1, fb);
        let (mut hi, mut lo) = (va.max(vb), va.min(vb));
        let (mut arg_hi, mut arg_lo) = if va >= vb {
            (center - radius, center + radius)
        } else {
            (center + radius, center - radius)
        };
        let g = &self.grid;
        for (j, &w) in v.iter().enumerate().take(ib + 1).skip(ia + 1) {
            if w > hi {
                hi = w;
                arg_hi = g.lower[0] + g.h * j as f64;
            }
            if w < lo {
                lo = w;
                arg_lo = g.lower[0] + g.h * j as f64;
            }
        }
        Ok((hi, lo, arg_hi, arg_lo))
    }

    fn interval_stats(&self, center: f64, radius: f64) -> Result<BallStats> {
        let v = &self.values;
        let ((ia, fa), (ib, fb)) = self.interval(center, radius)?;
        let va = lerp(v, ia, 1, fa);
        let vb = lerp(v, ib, 1, fb);
        let (mut hi, mut lo) = (va.max(vb), va.min(vb));
        let ta = ia as f64 + fa;
        let tb = ib as f64 + fb;
        let integral = if ia == ib {
            (tb - ta) * 0.5 * (va + vb)
        } else {
            let mut s = (1.0 - fa) * 0.5 * (va + v[ia + 1]);
            for j in ia + 1..ib {
                s += 0.5 * (v[j] + v[j + 1]);
            }
            s + fb * 0.5 * (v[ib] + vb)
        };
        for &w in &v[ia + 1..=ib.max(ia)] {
            hi = hi.max(w);
            lo = lo.min(w);
        }
        let mean = if tb > ta { integral / (tb - ta) } else { va };
        Ok(BallStats {
            sup: hi,
            inf: lo,
            mean: mean.clamp(lo, hi),
            sample_count: ib - ia + 2,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.grid.dim();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..d).map(|k| format!("i{k}")).collect();
        header.extend((0..d).map(|k| format!("x{k}")));
        header.push("value".into());
        wr.write_record(&header)?;
        let mut x = vec![0.0; d];
        for (idx, v) in self.values.iter().enumerate() {
            let mi = self.grid.multi_index(idx);
            self.grid.node_into(idx, &mut x);
            let mut rec: Vec<String> = mi.iter().map(|i| i.to_string()).collect();
            rec.extend(x.iter().map(|t| format!("{t:.16e}")));
            rec.push(format!("{v:.16e}"));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let ncol = header.len();
        if ncol < 3 || (ncol - 1) % 2 != 0 || &header[ncol - 1] != "value" {
            return Err(Error::Io("unexpected grid CSV header".into()));
        }
        let d = (ncol - 1) / 2;
        let parse_f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("bad number `{s}`: {e}")))
        };
        let mut rows: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let mi = (0..d)
                .map(|k| {
                    rec[k]
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Io(format!("bad index `{}`: {e}", &rec[k])))
                })
                .collect::<Result<Vec<_>>>()?;
            let x = (0..d).map(|k| parse_f(&rec[d + k])).collect::<Result<Vec<_>>>()?;
            rows.push((mi, x, parse_f(&rec[2 * d])?));
        }
        if rows.is_empty() {
            return Err(Error::Io("empty grid CSV".into()));
        }
        let counts: Vec<usize> = (0..d)
            .map(|k| rows.iter().map(|r| r.0[k]).max().unwrap_or(0) + 1)
            .collect();
        let origin = rows
            .iter()
            .find(|r| r.0.iter().all(|&i| i == 0))
            .ok_or_else(|| Error::Io("grid CSV lacks the corner node".into()))?;
        let lower = origin.1.clone();
        let far = rows
            .iter()
            .max_by_key(|r| r.0[0])
            .ok_or_else(|| Error::Io("empty grid CSV".into()))?;
        let estimate = (far.1[0] - lower[0]) / far.0[0].max(1) as f64;
        let h = recover_spacing(estimate, &lower, &rows)
            .ok_or_else(|| Error::Io("grid coordinates are not uniformly spaced".into()))?;
        let grid = Arc::new(Grid::new(lower, h, counts)?);
        if rows.len() != grid.len() {
            return Err(Error::Io(format!(
                "grid CSV has {} rows, expected {}",
                rows.len(),
                grid.len()
            )));
        }
        let mut values = vec![f64::NAN; grid.len()];
        for (mi, _, v) in rows {
            values[grid.linear_index(&mi)] = v;
        }
        GridField::new(grid, values)
    }
}

/// Finds the spacing among a few ulps around `estimate` that reproduces
/// every printed coordinate exactly.
fn recover_spacing(estimate: f64, lower: &[f64], rows: &[(Vec<usize>, Vec<f64>, f64)]) -> Option<f64> {
    let mut cands = vec![estimate];
    let (mut up, mut down) = (estimate, estimate);
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        cands.push(up);
        cands.push(down);
    }
    cands.into_iter().find(|&h| {
        rows.iter().all(|(mi, x, _)| {
            mi.iter()
                .zip(x)
                .zip(lower)
                .all(|((&i, &xi), &l)| l + h * i as f64 == xi)
        })
    })
}

impl Field for GridField {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.grid.interpolate(&self.values, x)
    }

    fn ball_stats(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<BallStats> {
        if self.exact_1d() {
            self.interval_stats(center[0], radius)
        } else {
            super::sampled_ball_stats(self, center, radius, sampler)
        }
    }

    fn ball_extremes(&self, center: &[f64], radius: f64, sampler: &BallSampler) -> Result<(f64, f64)> {
        if self.exact_1d() {
            let (hi, lo, _, _) = self.interval_extremes(center[0], radius)?;
            Ok((hi, lo))
        } else {
            super::sampled_ball_extremes(self, center, radius, sampler)
        }
    }

    fn ball_argext(
        &self,
        center: &[f64],
        radius: f64,
        sampler: &BallSampler,
        maximize: bool,
    ) -> Result<(Vec<f64>, f64)> {
        if self.exact_1d() {
            let (hi, lo, ahi, alo) = self.interval_extremes(center[0], radius)?;
            Ok(if maximize { (vec![ahi], hi) } else { (vec![alo], lo) })
        } else {
            super::sampled_ball_argext(self, center, radius, sampler, maximize)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> Arc<Grid> {
        Arc::new(Grid::new(vec![-1.0, -0.5], 0.25, vec![9, 5]).unwrap())
    }

    #[test]
    fn index_roundtrip() {
        let g = grid2();
        for idx in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.node(g.len() - 1), vec![1.0, 0.5]);
        assert_eq!(g.multi_index(6), vec![1, 1]);
    }

    #[test]
    fn interpolation_examples() {
        let g = grid2();
        let f = GridField::from_fn(g.clone(), |x| x[0] * x[1]).unwrap();
        for (idx, x) in g.nodes().enumerate() {
            assert_eq!(f.interpolate(&x).unwrap(), f.values()[idx]);
        }
        let c = [-0.875, 0.125];
        assert!((f.interpolate(&c).unwrap() - c[0] * c[1]).abs() < 1e-15);
        assert!(matches!(f.interpolate(&[1.1, 0.0]), Err(Error::Undefined { .. })));

        let g1 = Arc::new(Grid::new(vec![0.0], 1.0, vec![2]).unwrap());
        let e = GridField::new(g1, vec![0.0, 1.0]).unwrap();
        assert_eq!(e.interpolate(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = grid2();
        assert!(GridField::new(g.clone(), vec![0.0; 3]).is_err());
        let mut v = vec![0.0; g.len()];
        v[2] = f64::NAN;
        assert!(GridField::new(g, v).is_err());
        assert!(Grid::new(vec![0.0], 0.0, vec![3]).is_err());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let g = Arc::new(Grid::new(vec![-0.3, 0.1], 0.1 / 3.0, vec![7, 4]).unwrap());
        let f = GridField::from_fn(g, |x| (x[0] * 7.1).sin() / 3.0 + x[1].exp()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.values(), f.values());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i0,i1,x0,x1,value\n"));
    }

    #[test]
    fn exact_interval_stats() {
        let g = Arc::new(Grid::new(vec![-2.0], 0.01, vec![401]).unwrap());
        let f = GridField::from_fn(g, |x| x[0] * x[0]).unwrap();
        let s = BallSampler::new(1, crate::field::Quality::Low).unwrap();
        let st = f.ball_stats(&[0.0], 0.5, &s).unwrap();
        assert!((st.sup - 0.25).abs() < 1e-12);
        assert_eq!(st.inf, 0.0);
        assert!((st.mean - 0.25 / 3.0).abs() < 1e-4);
        // within a single cell
        let st = f.ball_stats(&[0.503], 0.001, &s).unwrap();
        assert!(st.inf <= st.mean && st.mean <= st.sup);
        let (pt, v) = f.ball_argext(&[0.3], 0.2, &s, true).unwrap();
        assert!((pt[0] - 0.5).abs() < 1e-12 && (v - 0.25).abs() < 1e-12);
    }
}
