//! Naive reference implementations and random inputs shared by the
//! integration and acceptance tests. Written from the definitions, without
//! calling into the library.

#![allow(dead_code)]

use rand::Rng;

pub const DT: f64 = 0.25;
pub const DENSE: usize = 20;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Natural cubic spline through `(t, y)`, assembled as a full linear system
/// in the knot second derivatives.
pub struct OracleSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl OracleSpline {
    pub fn new(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = t[i] - t[i - 1];
            let h1 = t[i + 1] - t[i];
            a[i][i - 1] = h0;
            a[i][i] = 2.0 * (h0 + h1);
            a[i][i + 1] = h1;
            b[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m: dense_solve(a, b),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let mut i = 0;
        while i + 2 < n && x > self.t[i + 1] {
            i += 1;
        }
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        m0 * (t1 - x).powi(3) / (6.0 * h)
            + m1 * (x - t0).powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * (t1 - x)
            + (y1 / h - m1 * h / 6.0) * (x - t0)
    }
}

/// Twenty 4 Hz samples of the spline through five 1 Hz waypoints, with the
/// origin prepended at t = 0 when `anchor` is set.
pub fn oracle_upsample(w: &[[f64; 2]; 5], anchor: bool) -> Vec<[f64; 2]> {
    let mut t = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    if anchor {
        t.push(0.0);
        xs.push(0.0);
        ys.push(0.0);
    }
    for (i, p) in w.iter().enumerate() {
        t.push(i as f64 + 1.0);
        xs.push(p[0]);
        ys.push(p[1]);
    }
    let (sx, sy) = (OracleSpline::new(&t, &xs), OracleSpline::new(&t, &ys));
    (1..=DENSE)
        .map(|k| {
            let x = k as f64 * DT;
            [sx.eval(x), sy.eval(x)]
        })
        .collect()
}

/// Heading angle of the reference path at every step; a move shorter than
/// 1e-9 m keeps the previous angle (0 at the start).
pub fn oracle_headings(r: &[[f64; 2]]) -> Vec<f64> {
    let n = r.len();
    let mut prev = 0.0;
    (0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (r[0], r[1]),
                _ if k == n - 1 => (r[n - 2], r[n - 1]),
                _ => (r[k - 1], r[k + 1]),
            };
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            if (dx * dx + dy * dy).sqrt() >= 1e-9 {
                prev = dy.atan2(dx);
            }
            prev
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub lat_tol: f64,
    pub lon_tol: f64,
    pub decay: f64,
    /// Pick the rater with the highest offered score instead of the nearest one.
    pub max_mode: bool,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            lat_tol: 1.0,
            lon_tol: 2.5,
            decay: 1.0,
            max_mode: false,
        }
    }
}

pub fn oracle_excess(pred: &[[f64; 2]], rated: &[[f64; 2]], p: &OracleParams) -> f64 {
    let heads = oracle_headings(rated);
    let mut worst = 0.0f64;
    for k in 0..rated.len() {
        let (c, s) = (heads[k].cos(), heads[k].sin());
        let dx = pred[k][0] - rated[k][0];
        let dy = pred[k][1] - rated[k][1];
        let along = (dx * c + dy * s).abs();
        let across = (-dx * s + dy * c).abs();
        worst = worst.max(across / p.lat_tol).max(along / p.lon_tol);
    }
    if worst <= 1.0 {
        0.0
    } else {
        worst - 1.0
    }
}

/// Score of a dense prediction against three rated references.
pub fn oracle_score(pred: &[[f64; 2]], raters: &[(Vec<[f64; 2]>, f64)], p: &OracleParams) -> f64 {
    let mut best: Option<(f64, f64, f64)> = None; // (excess, raw score, offered)
    for (traj, score) in raters {
        let d = oracle_excess(pred, traj, p);
        let s = score.max(4.0).min(10.0);
        let offered = if d == 0.0 { s } else { 4.0 + (s - 4.0) * (-p.decay * d).exp() };
        let take = match best {
            None => true,
            Some((bd, bs, bo)) => {
                if p.max_mode {
                    offered > bo
                } else {
                    d < bd || (d == bd && *score > bs)
                }
            }
        };
        if take {
            best = Some((d, *score, offered));
        }
    }
    best.expect("at least one rater").2
}

/// Mean per category, then mean of those means; categories in sorted order.
pub fn oracle_aggregate(pairs: &[(String, f64)]) -> (Vec<(String, usize, f64)>, f64) {
    let mut cats: Vec<String> = pairs.iter().map(|(c, _)| c.clone()).collect();
    cats.sort();
    cats.dedup();
    let mut rows = Vec::new();
    for c in cats {
        let mut n = 0;
        let mut sum = 0.0;
        for (k, s) in pairs {
            if *k == c {
                n += 1;
                sum += s;
            }
        }
        rows.push((c, n, sum / n as f64));
    }
    let total: f64 = rows.iter().map(|r| r.2).sum();
    let final_rfs = total / rows.len() as f64;
    (rows, final_rfs)
}

/// The evaluation report as CSV, built by hand from the oracle aggregate.
pub fn oracle_report_csv(pairs: &[(String, f64)]) -> String {
    let (rows, final_rfs) = oracle_aggregate(pairs);
    let mut out = String::from("category,n,mean_score\n");
    let mut total = 0;
    for (c, n, m) in &rows {
        let quoted = if c.contains([',', '"', '\n', '\r']) {
            format!("\"{}\"", c.replace('"', "\"\""))
        } else {
            c.clone()
        };
        out.push_str(&format!("{quoted},{n},{m}\n"));
        total += n;
    }
    out.push_str(&format!("final_rfs,{total},{final_rfs}\n"));
    out
}

/// A smooth random 4 Hz path starting near the origin.
pub fn random_path<R: Rng + ?Sized>(rng: &mut R) -> Vec<[f64; 2]> {
    let v: f64 = rng.random_range(0.0..15.0);
    let a: f64 = rng.random_range(-2.0..2.0);
    let kappa: f64 = rng.random_range(-0.05..0.05);
    let wobble: f64 = rng.random_range(-0.3..0.3);
    (1..=DENSE)
        .map(|k| {
            let t = k as f64 * DT;
            let s = (v * t + 0.5 * a * t * t).max(0.0);
            let th = kappa * s;
            [s * th.cos() + wobble * (t * 1.3).sin(), s * th.sin() + wobble * t * t / 25.0]
        })
        .collect()
}

/// Five 1 Hz waypoints near `base`'s whole-second samples, jittered at one of
/// several scales so predictions land inside, near and far from trust regions.
pub fn jittered_waypoints<R: Rng + ?Sized>(rng: &mut R, base: &[[f64; 2]]) -> [[f64; 2]; 5] {
    let scale = [0.0, 0.2, 1.0, 3.0, 20.0][rng.random_range(0..5)];
    let mut w = [[0.0; 2]; 5];
    for (i, slot) in w.iter_mut().enumerate() {
        let p = base[4 * i + 3];
        *slot = [
            p[0] + scale * rng.random_range(-1.0..1.0),
            p[1] + scale * rng.random_range(-1.0..1.0),
        ];
    }
    w
}

/// Rater scores including values below the floor and repeated values.
pub fn random_rater_score<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..6) {
        0 => 10.0,
        1 => 4.0,
        2 => rng.random_range(0.0..4.0),
        3 => rng.random_range(0..=10) as f64,
        _ => rng.random_range(4.0..10.0),
    }
}


pub const VALID_TRAJECTORY_TEXT: &str = "[1.5, 0.02], [3.1, 0.08], [4.6, 0.2], [6.0, 0.41], [7.3, 0.7]";

pub const VALID_ANNOTATION: &str = r#"{"critical_objects":{"nearby_vehicle":"yes","pedestrian":"no","cyclist":"no","construction":"no","traffic_element":"yes","weather_condition":"no","road_hazard":"no","emergency_vehicle":"no","animal":"no","special_vehicle":"no","conflicting_vehicle":"no","door_opening_vehicle":"no"},"explanation":"The light ahead is red and the car in front is stopping.","meta_behaviour":{"speed":"decelerate","command":"yield"}}"#;

const FUZZ_TOKENS: &[&str] = &[
    "[", "]", ",", " ", "\n", "-", "+", ".", "e", "E", "1e999", "NaN", "inf", "0", "7", "```", "{", "}",
    ":", "\"", "\\", "yes", "no", "null", "\u{feff}", "é", "\u{0}", "[[", "]]",
];

/// Mutates one of the valid seed documents or assembles grammar tokens, so
/// inputs sit both near and far from acceptance.
pub fn fuzz_input<R: Rng + ?Sized>(rng: &mut R) -> String {
    match rng.random_range(0..4) {
        0 => {
            let n = rng.random_range(0..40);
            (0..n).map(|_| FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())]).collect()
        }
        1 => {
            let n = rng.random_range(0..64);
            (0..n).map(|_| char::from_u32(rng.random_range(0..0x800)).unwrap_or('?')).collect()
        }
        _ => {
            let seed = if rng.random_bool(0.5) { VALID_TRAJECTORY_TEXT } else { VALID_ANNOTATION };
            let mut bytes = seed.as_bytes().to_vec();
            for _ in 0..rng.random_range(1..4) {
                let pos = rng.random_range(0..=bytes.len());
                match rng.random_range(0..3) {
                    0 if pos < bytes.len() => {
                        bytes.remove(pos);
                    }
                    1 if pos < bytes.len() => bytes[pos] = rng.random_range(0x20..0x7f),
                    _ => {
                        let tok = FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())];
                        bytes.splice(pos..pos, tok.bytes());
                    }
                }
            }
            String::from_utf8_lossy(&bytes).into_owned()
        }
    }
}

/// A finite double drawn from the whole bit space, weighted toward everyday magnitudes.
pub fn random_coordinate<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v = match rng.random_range(0..3) {
            0 => f64::from_bits(rng.random::<u64>()),
            1 => rng.random_range(-1e3..1e3),
            _ => (rng.random_range(-10_000i32..10_000) as f64) / 100.0,
        };
        if v.is_finite() {
            return v;
        }
    }
}

/// Minimal reading of the trajectory grammar: five `[x, y]` pairs separated
/// by commas, plain decimal numbers, whitespace anywhere between tokens.
pub fn oracle_parse_text(raw: &str) -> Option<[[f64; 2]; 5]> {
    let compact: String = raw.chars().filter(|c| !matches!(c, ' ' | '\t' | '\r' | '\n')).collect();
    let inner = compact.strip_prefix('[')?.strip_suffix(']')?;
    let pairs: Vec<&str> = inner.split("],[").collect();
    if pairs.len() != 5 {
        return None;
    }
    let number = |s: &str| -> Option<f64> {
        let ok = !s.is_empty()
            && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'))
            && s.chars().any(|c| c.is_ascii_digit());
        let v: f64 = if ok { s.parse().ok()? } else { return None };
        v.is_finite().then_some(v)
    };
    let mut out = [[0.0; 2]; 5];
    for (slot, p) in out.iter_mut().zip(pairs) {
        let (x, y) = p.split_once(',')?;
        *slot = [number(x)?, number(y)?];
    }
    Some(out)
}

pub fn oracle_report_md(pairs: &[(String, f64)]) -> String {
    let (rows, final_rfs) = oracle_aggregate(pairs);
    let mut out = String::from("| category | n | mean_score |\n|---|---:|---:|\n");
    let mut total = 0;
    for (c, n, m) in &rows {
        out.push_str(&format!("| {} | {n} | {m} |\n", c.replace('|', "\\|")));
        total += n;
    }
    out.push_str(&format!("| **final_rfs** | {total} | {final_rfs} |\n"));
    out
}
