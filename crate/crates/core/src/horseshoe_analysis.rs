//! Symbolic analysis of the horseshoe skew product: periodic points,
//! fibre levels of unstable lines, heteroclinic parameter scans and the
//! refinement probe around a connection.
//!
//! Words are read left to right: `w = (w_1, …, w_k)` applies branch `w_1`
//! first, so the fibre level is `g_{w_k} ∘ … ∘ g_{w_1}`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::conley::{build_graph, chain_classes, BoxGrid, Enclosure, DEFAULT_EDGE_BUDGET};
use crate::error::{Error, Result};
use crate::maps::horseshoe::{bisect, HorseshoeMap, HorseshoeSkewSpec, BASE_CONTRACTION, BASE_EXPANSION, FIBER_HIGH, FIBER_LOW};
use crate::maps::{DynamicalMap, Image};

/// Fibre level of the stable line of `q`.
pub const TARGET_LEVEL: f64 = 5.0;
/// Fibre levels beyond this bound have left the horseshoe for good.
pub const ESCAPE_LEVEL: f64 = 8.0;
/// Band whose amplitude is varied by the heteroclinic scan (0-based).
pub const SCAN_BAND: usize = 1;

/// A word over the four branches, letters `1..=4`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolicWord(Vec<u8>);

impl SymbolicWord {
    pub fn new(letters: Vec<u8>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidInput("empty word".into()));
        }
        if let Some(bad) = letters.iter().find(|l| !(1..=4).contains(*l)) {
            return Err(Error::InvalidInput(format!("letter {bad} outside 1..=4")));
        }
        Ok(Self(letters))
    }

    /// Parses `"13"`, `"1,3"` or run-length `"2^5 3^2"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for tok in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            if let Some((l, n)) = tok.split_once('^') {
                let l: u8 = l.parse().map_err(|_| Error::InvalidInput(format!("bad letter in '{tok}'")))?;
                let n: usize = n.parse().map_err(|_| Error::InvalidInput(format!("bad exponent in '{tok}'")))?;
                letters.extend(std::iter::repeat_n(l, n));
            } else {
                for c in tok.chars() {
                    let d = c.to_digit(10).ok_or_else(|| Error::InvalidInput(format!("bad letter '{c}'")))?;
                    letters.push(d as u8);
                }
            }
        }
        Self::new(letters)
    }

    /// `a^i b^j …` from (letter, count) runs.
    pub fn from_runs(runs: &[(u8, usize)]) -> Result<Self> {
        Self::new(runs.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn bands(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|l| (*l - 1) as usize)
    }
}

impl fmt::Display for SymbolicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut i = 0;
        while i < self.0.len() {
            let l = self.0[i];
            let mut j = i;
            while j < self.0.len() && self.0[j] == l {
                j += 1;
            }
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            if j - i == 1 {
                write!(f, "{l}")?;
            } else {
                write!(f, "{l}^{}", j - i)?;
            }
            i = j;
        }
        Ok(())
    }
}

impl Serialize for SymbolicWord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberPoint {
    pub point: Vec<f64>,
    /// Product of fibre derivatives along the orbit.
    pub fiber_multiplier: f64,
    pub stable_dimension: usize,
    /// `max |f^k(x) − x|` over coordinates.
    pub closure_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicPoints {
    pub word: SymbolicWord,
    pub base: [f64; 2],
    /// Horizontal and vertical multipliers `5^{−k}`, `5^k`.
    pub base_multipliers: [f64; 2],
    /// Fibre periodic points in `[−1, 6]`, ascending.
    pub points: Vec<FiberPoint>,
    /// No fibre periodic point: every orbit over this base point leaves.
    pub escaping: bool,
}

/// Base periodic point of the affine branches along `w`.
pub fn base_periodic_point(spec: &HorseshoeSkewSpec, w: &SymbolicWord) -> [f64; 2] {
    // x ↦ x/5 + c_i composes to x ↦ a·x + b; y ↦ 5(y − b_i) to y ↦ A·y + e
    let (mut a, mut b) = (1.0, 0.0);
    let (mut ay, mut e) = (1.0, 0.0);
    for i in w.bands() {
        a *= BASE_CONTRACTION;
        b = BASE_CONTRACTION * b + spec.band_offsets[i];
        ay *= BASE_EXPANSION;
        e = BASE_EXPANSION * (e - spec.strip_offsets[i]);
    }
    [b / (1.0 - a), -e / (ay - 1.0)]
}

fn compose(spec: &HorseshoeSkewSpec, w: &SymbolicWord, t: f64) -> (f64, f64, bool) {
    let mut t = t;
    let mut deriv = 1.0;
    let mut inside = true;
    for i in w.bands() {
        deriv *= spec.fiber_derivative(i, t);
        t = spec.fiber(i, t);
        if !(FIBER_LOW..FIBER_HIGH).contains(&t) {
            inside = false;
        }
    }
    (t, deriv, inside)
}

/// Periodic points with itinerary `w`: the base point solves the composed
/// affine equation, fibre points are the fixed points of the composed fibre
/// map located by bisection on a grid of `[−1, 6]`.
pub fn periodic_point(map: &HorseshoeMap, w: &SymbolicWord) -> Result<PeriodicPoints> {
    let spec = &map.spec;
    let base = base_periodic_point(spec, w);
    let k = w.len() as i32;
    let h = |t: f64| compose(spec, w, t).0 - t;
    let nodes = 4096;
    let grid: Vec<f64> = (0..=nodes).map(|j| FIBER_LOW + (FIBER_HIGH - FIBER_LOW) * j as f64 / nodes as f64).collect();
    let mut roots = Vec::new();
    for pair in grid.windows(2) {
        let (ha, hb) = (h(pair[0]), h(pair[1]));
        if ha == 0.0 {
            roots.push(pair[0]);
        } else if ha * hb < 0.0 {
            roots.push(bisect(h, pair[0], pair[1], 1e-14));
        }
    }
    let mut points = Vec::new();
    for t in roots {
        let (_, mult, inside) = compose(spec, w, t);
        if !inside {
            continue;
        }
        let start = vec![base[0], base[1], t];
        let mut x = start.clone();
        let mut ok = true;
        for _ in 0..k {
            match map.image(&x) {
                Image::Point(y) => x = y,
                Image::Escape => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let closure_error = x.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if closure_error > 1e-10 {
            return Err(Error::Numeric(format!("periodic orbit for {w} does not close: error {closure_error:e}")));
        }
        points.push(FiberPoint {
            point: start,
            fiber_multiplier: mult,
            stable_dimension: 1 + usize::from(mult.abs() < 1.0),
            closure_error,
        });
    }
    Ok(PeriodicPoints {
        word: w.clone(),
        base,
        base_multipliers: [BASE_CONTRACTION.powi(k), BASE_EXPANSION.powi(k)],
        escaping: points.is_empty(),
        points,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FiberReach {
    pub value: f64,
    /// Some intermediate level left `[−1, 8]`.
    pub escaped: bool,
}

/// `g_w(0)`: the fibre level of the unstable line of `p` with itinerary `w`.
pub fn fiber_reach(spec: &HorseshoeSkewSpec, w: &SymbolicWord) -> FiberReach {
    let mut t = 0.0;
    let mut escaped = false;
    for i in w.bands() {
        t = spec.fiber(i, t);
        if !(FIBER_LOW..=ESCAPE_LEVEL).contains(&t) {
            escaped = true;
        }
    }
    FiberReach { value: t, escaped }
}

/// Horizontal coordinate of the unstable line of `p` after the base branches of `w`.
pub fn unstable_line_abscissa(spec: &HorseshoeSkewSpec, w: &SymbolicWord) -> f64 {
    let p = base_periodic_point(spec, &SymbolicWord(vec![1]));
    w.bands().fold(p[0], |x, i| BASE_CONTRACTION * x + spec.band_offsets[i])
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectionEvent {
    pub word: SymbolicWord,
    /// Scan parameter `η₂` at the connection.
    pub parameter: f64,
    pub point: [f64; 3],
    pub bracket: [f64; 2],
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeteroclinicScan {
    pub range: [f64; 2],
    pub max_length: usize,
    pub nodes: usize,
    pub tol: f64,
    pub words_scanned: usize,
    /// Prefixes discarded because no extension can reach the target level.
    pub prefixes_pruned: usize,
    pub events: Vec<ConnectionEvent>,
}

fn check_family(spec: &HorseshoeSkewSpec, range: [f64; 2]) -> Result<()> {
    if !(range[0] > 0.0 && range[0] < range[1]) {
        return Err(Error::InvalidInput(format!("parameter range {range:?} must be positive and increasing")));
    }
    for eta in [range[0], 0.5 * (range[0] + range[1]), range[1]] {
        let v = spec.with_eta(SCAN_BAND, eta).verify(10_000);
        if !v.violations.is_empty() {
            return Err(Error::Precondition(format!("at eta_2 = {eta}: {}", v.violations.join("; "))));
        }
    }
    Ok(())
}

/// Events of one word: sign changes of `g_w(0) − 5` on a uniform grid of the
/// scan parameter, bisected until the residual is below `tol`.
fn word_events(spec: &HorseshoeSkewSpec, w: &SymbolicWord, range: [f64; 2], nodes: usize, tol: f64) -> Vec<ConnectionEvent> {
    let sep = |eta: f64| {
        let r = fiber_reach(&spec.with_eta(SCAN_BAND, eta), w);
        if r.escaped {
            f64::NAN
        } else {
            r.value - TARGET_LEVEL
        }
    };
    let params: Vec<f64> = (0..nodes).map(|j| range[0] + (range[1] - range[0]) * j as f64 / (nodes - 1) as f64).collect();
    let values: Vec<f64> = params.iter().map(|&e| sep(e)).collect();
    let mut events = Vec::new();
    for j in 0..nodes - 1 {
        let (sa, sb) = (values[j], values[j + 1]);
        if !(sa.is_finite() && sb.is_finite()) || (sa != 0.0 && sa.signum() == sb.signum()) || sb == 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (params[j], params[j + 1]);
        let mut flo = sa;
        let mut eta = lo;
        let mut res = sa.abs();
        for _ in 0..200 {
            if res <= tol || hi - lo <= f64::EPSILON * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = sep(mid);
            if !fm.is_finite() {
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
            eta = mid;
            res = fm.abs();
        }
        if res > tol {
            // the endpoint on the other side may be closer
            let fh = sep(hi);
            if fh.abs() < res {
                eta = hi;
                res = fh.abs();
            }
        }
        let s = spec.with_eta(SCAN_BAND, eta);
        let q = base_periodic_point(&s, &SymbolicWord(vec![4]));
        events.push(ConnectionEvent {
            word: w.clone(),
            parameter: eta,
            point: [unstable_line_abscissa(&s, w), q[1], TARGET_LEVEL],
            bracket: [params[j], params[j + 1]],
            residual: res,
        });
    }
    events
}

/// Interval image of `g_i` over fibre levels `[lo, hi]` and the whole
/// parameter range (each `g_i` is increasing in `t` and affine in `η`).
fn reach_interval(spec: &HorseshoeSkewSpec, band: usize, lo: f64, hi: f64, range: [f64; 2]) -> (f64, f64) {
    if band == SCAN_BAND {
        let a = spec.with_eta(band, range[0]);
        let b = spec.with_eta(band, range[1]);
        (a.fiber(band, lo).min(b.fiber(band, lo)), a.fiber(band, hi).max(b.fiber(band, hi)))
    } else {
        (spec.fiber(band, lo), spec.fiber(band, hi))
    }
}

/// Scans every word of length `1..=max_length` over `η₂ ∈ range`.
///
/// A prefix is dropped when even the most favourable remaining letters
/// cannot lift its fibre interval to the target level, or when the whole
/// interval has left `[−1, 6]`.
pub fn heteroclinic_scan(spec: &HorseshoeSkewSpec, range: [f64; 2], max_length: usize, tol: f64) -> Result<HeteroclinicScan> {
    check_family(spec, range)?;
    let nodes = 64;
    // best[r] = highest level reachable from t in r steps is increasing in t;
    // evaluated lazily below
    let climb = |t: f64, steps: usize| {
        let mut t = t;
        for _ in 0..steps {
            t = (0..4).map(|i| reach_interval(spec, i, t, t, range).1).fold(f64::NEG_INFINITY, f64::max);
        }
        t
    };
    let mut events = Vec::new();
    let mut words_scanned = 0;
    let mut prefixes_pruned = 0;
    // depth-first in lexicographic order
    let mut stack: Vec<(Vec<u8>, f64, f64)> = vec![(Vec::new(), 0.0, 0.0)];
    while let Some((prefix, lo, hi)) = stack.pop() {
        let remaining = max_length - prefix.len();
        if !prefix.is_empty() {
            if hi < FIBER_LOW || lo >= FIBER_HIGH || climb(hi, remaining) < TARGET_LEVEL {
                prefixes_pruned += 1;
                continue;
            }
            let w = SymbolicWord(prefix.clone());
            words_scanned += 1;
            if lo <= TARGET_LEVEL && hi >= TARGET_LEVEL {
                events.extend(word_events(spec, &w, range, nodes, tol));
            }
        } else if climb(0.0, remaining) < TARGET_LEVEL {
            prefixes_pruned += 1;
            continue;
        }
        if remaining == 0 {
            continue;
        }
        for letter in (1..=4u8).rev() {
            let (nlo, nhi) = reach_interval(spec, (letter - 1) as usize, lo, hi, range);
            let mut next = prefix.clone();
            next.push(letter);
            stack.push((next, nlo, nhi));
        }
    }
    events.sort_by(|a, b| a.word.cmp(&b.word).then(a.parameter.total_cmp(&b.parameter)));
    Ok(HeteroclinicScan { range, max_length, nodes, tol, words_scanned, prefixes_pruned, events })
}

/// Scan of an explicit list of words, merged in lexicographic word order.
pub fn scan_words(spec: &HorseshoeSkewSpec, range: [f64; 2], words: &[SymbolicWord], tol: f64) -> Result<HeteroclinicScan> {
    check_family(spec, range)?;
    let nodes = 64;
    let mut sorted = words.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut events = Vec::new();
    for w in &sorted {
        events.extend(word_events(spec, w, range, nodes, tol));
    }
    Ok(HeteroclinicScan {
        range,
        max_length: sorted.iter().map(|w| w.len()).max().unwrap_or(0),
        nodes,
        tol,
        words_scanned: sorted.len(),
        prefixes_pruned: 0,
        events,
    })
}

/// Shortest word `2^a 3^b` whose connection parameter lies inside `range`.
///
/// Band 2 lifts the level from 0 toward its fixed point 3 and band 3 pushes
/// levels above 2 up to the target, so these words realize connections once
/// they are long enough. Returns `None` if none has length `≤ max_length`.
pub fn shortest_staircase_word(spec: &HorseshoeSkewSpec, range: [f64; 2], max_length: usize) -> Option<SymbolicWord> {
    let lo_spec = spec.with_eta(SCAN_BAND, range[0]);
    let hi_spec = spec.with_eta(SCAN_BAND, range[1]);
    let mut best: Option<(usize, usize)> = None;
    for b in 1..max_length {
        // level that band 3 carries to the target in exactly b steps
        let mut start = TARGET_LEVEL;
        for _ in 0..b {
            let target = start;
            start = bisect(|t| spec.fiber(2, t) - target, 2.0 + 1e-12, target, 1e-15);
        }
        if start <= 2.0 + 1e-9 {
            break;
        }
        if start >= 3.0 {
            continue;
        }
        let (mut tlo, mut thi) = (0.0, 0.0);
        for a in 1..max_length - b + 1 {
            tlo = lo_spec.fiber(SCAN_BAND, tlo);
            thi = hi_spec.fiber(SCAN_BAND, thi);
            if thi >= start {
                if tlo <= start && best.is_none_or(|(ba, bb)| a + b < ba + bb) {
                    best = Some((a, b));
                }
                break;
            }
        }
    }
    best.map(|(a, b)| SymbolicWord::from_runs(&[(2, a), (3, b)]).expect("valid letters"))
}

#[derive(Clone, Debug, Serialize)]
pub struct IsolationRow {
    pub resolution: usize,
    pub count_near_x: usize,
    pub count_near_control: usize,
    pub recurrent_boxes: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct IsolationReport {
    pub point: [f64; 3],
    pub control: [f64; 3],
    pub radius: f64,
    pub rows: Vec<IsolationRow>,
    /// Last-over-first count ratio near the connection point.
    pub growth_near_x: f64,
    pub growth_near_control: f64,
    /// Counts near the connection grow strictly slower than near the control.
    pub slower_near_x: bool,
}

/// Recurrent boxes of the ε = 0 transition graph on `C × [−1, 6]` within
/// `radius` of the connection point and of a control point, at each
/// resolution (boxes per axis).
pub fn isolation_probe(
    spec: &HorseshoeSkewSpec,
    event: &ConnectionEvent,
    control: [f64; 3],
    resolutions: &[usize],
    radius: f64,
    tol: f64,
) -> Result<IsolationReport> {
    if resolutions.is_empty() {
        return Err(Error::InvalidInput("isolation probe needs at least one resolution".into()));
    }
    let s = spec.with_eta(SCAN_BAND, event.parameter);
    let reach = fiber_reach(&s, &event.word);
    let residual = (reach.value - TARGET_LEVEL).abs();
    if reach.escaped || residual > tol {
        return Err(Error::Precondition(format!(
            "event for {} is not a connection at eta_2 = {}: residual {residual:e}",
            event.word, event.parameter
        )));
    }
    let map = HorseshoeMap::new(s)?;
    let bound = map.component_bound().expect("horseshoe has a componentwise bound");
    let mut rows = Vec::new();
    for &n in resolutions {
        let grid = BoxGrid::region(vec![0.0, 0.0, FIBER_LOW], vec![5.0, 5.0, FIBER_HIGH], vec![n; 3])?;
        let graph = build_graph(&map, &grid, 0.0, Enclosure::Componentwise(bound.clone()), DEFAULT_EDGE_BUDGET)?;
        let decomp = chain_classes(&graph);
        let (mut near_x, mut near_c, mut total) = (0, 0, 0);
        for i in 0..grid.len() {
            if !decomp.recurrent[i] {
                continue;
            }
            total += 1;
            if grid.distance_to_box(&event.point, i) <= radius {
                near_x += 1;
            }
            if grid.distance_to_box(&control, i) <= radius {
                near_c += 1;
            }
        }
        rows.push(IsolationRow {
            resolution: n,
            count_near_x: near_x,
            count_near_control: near_c,
            recurrent_boxes: total,
            edges: graph.edge_count(),
        });
    }
    let growth = |f: fn(&IsolationRow) -> usize| {
        let first = f(&rows[0]).max(1) as f64;
        f(&rows[rows.len() - 1]) as f64 / first
    };
    let growth_near_x = growth(|r| r.count_near_x);
    let growth_near_control = growth(|r| r.count_near_control);
    Ok(IsolationReport {
        point: event.point,
        control,
        radius,
        slower_near_x: growth_near_x < growth_near_control,
        growth_near_x,
        growth_near_control,
        rows,
    })
}
