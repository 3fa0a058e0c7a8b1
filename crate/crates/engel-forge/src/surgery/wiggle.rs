//! Wiggles: sub-arcs closing up into embedded convex loops, and stacks of
//! `n` consecutive loops with a common image.

use serde::{Deserialize, Serialize};

use crate::curve::{self, PeriodicCurve};
use crate::dense::Dense;
use crate::vec3;

/// Default tolerance for `γ(a) = γ(b)`.
pub const CLOSURE_TOL: f64 = 1e-6;
/// Default tolerance for equality of loop images (symmetric Hausdorff).
pub const IMAGE_TOL: f64 = 1e-5;
/// Largest angle between the tangents at the two ends of a smooth loop.
const TANGENT_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hemisphere {
    North,
    South,
    Other,
}

/// A wiggle `[a, b]` made of `multiplicity` loops with breakpoints
/// `partition`. Parameters are unwrapped: `0 <= a < 1` and `a < b <= a + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WiggleRecord {
    pub a: f64,
    pub b: f64,
    pub multiplicity: usize,
    pub hemisphere: Hemisphere,
    pub partition: Vec<f64>,
    /// Largest closure distance over the loops.
    pub closure_gap: f64,
    /// Largest Hausdorff distance between consecutive loop images.
    pub image_gap: f64,
}

impl WiggleRecord {
    fn overlaps(&self, other: &WiggleRecord) -> bool {
        // cyclic interval intersection
        let inter = |a0: f64, a1: f64, b0: f64, b1: f64| a0 < b1 && b0 < a1;
        [-1.0, 0.0, 1.0]
            .iter()
            .any(|sh| inter(self.a, self.b, other.a + sh, other.b + sh))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct WiggleOptions {
    pub closure_tol: f64,
    pub image_tol: f64,
    /// Dense samples; chosen from the mode count when `None`.
    pub samples: Option<usize>,
}

impl Default for WiggleOptions {
    fn default() -> Self {
        WiggleOptions {
            closure_tol: CLOSURE_TOL,
            image_tol: IMAGE_TOL,
            samples: None,
        }
    }
}

/// First closing loop from each sample: `(start, length)` with unwrapped
/// start near the sample parameter.
fn first_hits(dense: &Dense, tol: f64, gap: usize) -> Vec<Option<(f64, f64)>> {
    let n = dense.n;
    (0..n)
        .map(|i| {
            let mut near: Vec<(usize, usize)> = dense
                .near(dense.p[i])
                .into_iter()
                .map(|j| ((j + n - i) % n, j))
                .filter(|(off, _)| *off >= gap && *off <= n - gap)
                .collect();
            near.sort_unstable();
            // one refinement per run of consecutive offsets
            let mut k = 0;
            while k < near.len() {
                let mut end = k;
                while end + 1 < near.len() && near[end + 1].0 == near[end].0 + 1 {
                    end += 1;
                }
                let best = (k..=end)
                    .min_by(|x, y| {
                        let dx = vec3::dist(dense.p[near[*x].1], dense.p[i]);
                        let dy = vec3::dist(dense.p[near[*y].1], dense.p[i]);
                        dx.partial_cmp(&dy).unwrap()
                    })
                    .unwrap();
                let t = i as f64 / n as f64;
                let (a, b, d) = dense.refine(t, t + near[best].0 as f64 / n as f64, false);
                let len = b - a;
                if d <= tol && len * n as f64 >= 0.5 * gap as f64 && len < 1.0 {
                    return Some((a, len));
                }
                k = end + 1;
            }
            None
        })
        .collect()
}

struct Finder<'a> {
    dense: &'a Dense,
    hits: Vec<Option<(f64, f64)>>,
    opts: WiggleOptions,
    gap: usize,
}

impl Finder<'_> {
    fn n(&self) -> f64 {
        self.dense.n as f64
    }

    /// The loop `[a, b]` has no shorter closing loop inside it.
    fn embedded(&self, a: f64, b: f64) -> bool {
        let n = self.n();
        let margin = 3.0 / n;
        let (c0, c1) = (((a + margin) * n).ceil() as i64, ((b - margin) * n).floor() as i64);
        for c in c0..=c1 {
            let j = c.rem_euclid(self.dense.n as i64) as usize;
            if let Some((start, len)) = self.hits[j] {
                let tc = c as f64 / n;
                let end = tc + (start - j as f64 / n) + len;
                if end < b - margin {
                    return false;
                }
            }
        }
        true
    }

    fn smooth_closure(&self, a: f64, b: f64) -> bool {
        self.dense.tangent_angle(a, b) <= TANGENT_TOL
    }

    /// Next loop starting exactly at `a`.
    fn loop_from(&self, a: f64) -> Option<(f64, f64)> {
        let n = self.dense.n;
        let q = self.dense.eval(a).0;
        let ia = (a.rem_euclid(1.0) * n as f64).round() as usize % n;
        let mut near: Vec<usize> = self
            .dense
            .near(q)
            .into_iter()
            .map(|j| (j + n - ia) % n)
            .filter(|off| *off >= self.gap && *off <= n - self.gap)
            .collect();
        near.sort_unstable();
        let mut k = 0;
        while k < near.len() {
            let mut end = k;
            while end + 1 < near.len() && near[end + 1] == near[end] + 1 {
                end += 1;
            }
            let mid = near[(k + end) / 2];
            let guess = a + mid as f64 / n as f64;
            let (_, b, d) = self.dense.refine(a, guess, true);
            if d <= self.opts.closure_tol && b > a {
                return Some((b, d));
            }
            k = end + 1;
        }
        None
    }

    /// Stack as many loops with a common image as possible from `[a, b]`.
    fn chain(&self, a: f64, b: f64, gap0: f64) -> WiggleRecord {
        let mut partition = vec![a, b];
        let mut closure_gap = gap0;
        let mut image_gap: f64 = 0.0;
        loop {
            let last = *partition.last().unwrap();
            let prev = partition[partition.len() - 2];
            let Some((next, d)) = self.loop_from(last) else {
                break;
            };
            if next - a > 1.0 + 1e-9
                || !self.embedded(last, next)
                || !self.smooth_closure(last, next)
            {
                break;
            }
            let h = self.dense.hausdorff((prev, last), (last, next));
            if h > self.opts.image_tol {
                break;
            }
            image_gap = image_gap.max(h);
            closure_gap = closure_gap.max(d);
            partition.push(next);
        }
        let b = *partition.last().unwrap();
        WiggleRecord {
            a,
            b,
            multiplicity: partition.len() - 1,
            hemisphere: self.hemisphere(a, partition[1]),
            partition,
            closure_gap,
            image_gap,
        }
    }

    fn hemisphere(&self, a: f64, b: f64) -> Hemisphere {
        let k = 256;
        let zs: Vec<f64> = (0..=k)
            .map(|i| self.dense.eval(a + (b - a) * i as f64 / k as f64).0[2])
            .collect();
        if zs.iter().all(|z| *z > 0.0) {
            Hemisphere::North
        } else if zs.iter().all(|z| *z < 0.0) {
            Hemisphere::South
        } else {
            Hemisphere::Other
        }
    }
}

/// All maximal wiggles with default image tolerance `10·tol`.
pub fn detect_wiggles(curve: &PeriodicCurve, tol: f64) -> Vec<WiggleRecord> {
    detect_wiggles_with(
        curve,
        WiggleOptions {
            closure_tol: tol,
            image_tol: 10.0 * tol,
            samples: None,
        },
    )
}

pub fn detect_wiggles_with(curve: &PeriodicCurve, opts: WiggleOptions) -> Vec<WiggleRecord> {
    let n = opts
        .samples
        .unwrap_or_else(|| (16 * curve.modes()).max(8192).next_power_of_two());
    let dense = Dense::new(curve, n);
    let gap = 8;
    let hits = first_hits(&dense, opts.closure_tol, gap);
    let finder = Finder {
        dense: &dense,
        hits,
        opts,
        gap,
    };
    let nf = n as f64;
    if finder.hits.iter().all(|h| h.is_none()) {
        // embedded curve: the whole curve is the only loop
        return vec![WiggleRecord {
            a: 0.0,
            b: 1.0,
            multiplicity: 1,
            hemisphere: finder.hemisphere(0.0, 1.0),
            partition: vec![0.0, 1.0],
            closure_gap: 0.0,
            image_gap: 0.0,
        }];
    }
    // candidate loops, grouped in runs of consecutive samples
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for (i, h) in finder.hits.iter().enumerate() {
        if let Some((a, len)) = *h {
            let a = a.rem_euclid(1.0);
            if finder.smooth_closure(a, a + len) && finder.embedded(a, a + len) {
                candidates.push((i, a, len));
            }
        }
    }
    let mut runs: Vec<Vec<(usize, f64, f64)>> = Vec::new();
    for c in candidates {
        match runs.last_mut() {
            Some(run)
                if c.0 == run.last().unwrap().0 + 1
                    && (c.2 - run.last().unwrap().2).abs() * nf < 4.0 =>
            {
                run.push(c)
            }
            _ => runs.push(vec![c]),
        }
    }
    // a run wrapping through t = 0 continues the last one
    if runs.len() > 1 {
        let first = &runs[0][0];
        let last = *runs.last().unwrap().last().unwrap();
        if first.0 == 0 && last.0 == n - 1 && (first.2 - last.2).abs() * nf < 4.0 {
            let head = runs.remove(0);
            runs.last_mut().unwrap().extend(head);
        }
    }
    let mut records = Vec::new();
    for run in &runs {
        let len = run.len();
        let mut picks: Vec<usize> = (0..len.min(256)).step_by(8).collect();
        picks.extend((0..len).step_by((len / 16).max(1)));
        picks.push(len - 1);
        picks.sort_unstable();
        picks.dedup();
        for k in picks {
            let (_, a, l) = run[k];
            let gap0 = vec3::dist(dense.eval(a).0, dense.eval(a + l).0);
            records.push(finder.chain(a, a + l, gap0));
        }
    }
    records.sort_by(|x, y| {
        y.multiplicity
            .cmp(&x.multiplicity)
            .then(x.a.partial_cmp(&y.a).unwrap())
    });
    let mut kept: Vec<WiggleRecord> = Vec::new();
    for r in records {
        if kept.iter().all(|k| !k.overlaps(&r)) {
            kept.push(r);
        }
    }
    kept.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    kept
}

/// Outcome of the `n`-completely-surrounding test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurroundCheck {
    pub satisfied: bool,
    /// Surround margin of the union of the two wiggles (NaN when fewer than
    /// two disjoint `n`-wiggles exist).
    pub margin: f64,
    pub wiggles: Vec<WiggleRecord>,
}

/// Two disjoint `n`-wiggles whose union strictly surrounds the origin.
pub fn n_complete_surround_check(curve: &PeriodicCurve, n: usize) -> (bool, f64) {
    let r = n_complete_surround(curve, n, &detect_wiggles(curve, CLOSURE_TOL));
    (r.satisfied, r.margin)
}

/// As [`n_complete_surround_check`] with precomputed wiggles; keeps the pair
/// with the best margin.
pub fn n_complete_surround(curve: &PeriodicCurve, n: usize, wiggles: &[WiggleRecord]) -> SurroundCheck {
    let eligible: Vec<&WiggleRecord> = wiggles.iter().filter(|w| w.multiplicity >= n).collect();
    let mut best: Option<(f64, Vec<WiggleRecord>)> = None;
    for i in 0..eligible.len() {
        for j in i + 1..eligible.len() {
            if eligible[i].overlaps(eligible[j]) {
                continue;
            }
            let mut points = Vec::new();
            for w in [eligible[i], eligible[j]] {
                let k = 512;
                points.extend((0..k).map(|s| curve.eval(w.a + (w.b - w.a) * s as f64 / k as f64)));
            }
            let m = curve::surround_points(&points, curve::DEFAULT_DIRECTIONS).margin;
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, vec![eligible[i].clone(), eligible[j].clone()]));
            }
        }
    }
    match best {
        Some((m, w)) => SurroundCheck {
            satisfied: m > 0.0,
            margin: m,
            wiggles: w,
        },
        None => SurroundCheck {
            satisfied: false,
            margin: f64::NAN,
            wiggles: Vec::new(),
        },
    }
}
