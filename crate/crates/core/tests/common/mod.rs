//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the solvers under test: the oracles work from raw
//! gains, noise and budgets only.

#![allow(dead_code)]

use jaspa::netmodel::NetworkSnapshot;

/// Single-AP game data pulled out of a snapshot: gains of each member on each
/// channel of the AP, the channel noises, and the member budgets.
#[derive(Debug, Clone)]
pub struct Subgame {
    pub gains: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    pub budgets: Vec<f64>,
}

impl Subgame {
    pub fn from_snapshot(s: &NetworkSnapshot, members: &[usize], ap: usize) -> Self {
        let chans = s.channels(ap).to_vec();
        Subgame {
            gains: members
                .iter()
                .map(|&i| chans.iter().map(|&k| s.gain(i, k)).collect())
                .collect(),
            noise: chans.iter().map(|&k| s.noise(k)).collect(),
            budgets: members.iter().map(|&i| s.budget(i)).collect(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.noise.len()
    }

    /// `sum_k ln(n_k + sum_i g_ik p_ik)`.
    pub fn potential(&self, p: &[Vec<f64>]) -> f64 {
        (0..self.n_channels())
            .map(|k| {
                let rx: f64 = self.gains.iter().zip(p).map(|(g, pi)| g[k] * pi[k]).sum();
                (self.noise[k] + rx).ln()
            })
            .sum()
    }

    fn gradient(&self, p: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let totals: Vec<f64> = (0..self.n_channels())
            .map(|k| self.noise[k] + self.gains.iter().zip(p).map(|(g, pi)| g[k] * pi[k]).sum::<f64>())
            .collect();
        self.gains
            .iter()
            .map(|g| g.iter().zip(&totals).map(|(gk, t)| gk / t).collect())
            .collect()
    }

    /// Rate of member `i` treating the others as noise.
    pub fn rate(&self, p: &[Vec<f64>], i: usize) -> f64 {
        (0..self.n_channels())
            .map(|k| {
                let other: f64 = (0..self.gains.len())
                    .filter(|&j| j != i)
                    .map(|j| self.gains[j][k] * p[j][k])
                    .sum();
                (1.0 + self.gains[i][k] * p[i][k] / (self.noise[k] + other)).ln()
            })
            .sum()
    }
}

/// Euclidean projection onto `{x >= 0, sum x = budget}`.
pub fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - budget) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Maximum of the single-AP potential over the product of budget simplices by
/// accelerated projected gradient ascent (backtracking step, momentum restarted
/// whenever the value drops). Stops once the Frank-Wolfe duality gap certifies
/// the value to within `gap_tol`.
pub fn pg_max_potential(game: &Subgame, gap_tol: f64) -> (f64, Vec<Vec<f64>>) {
    let k_count = game.n_channels();
    let mut p: Vec<Vec<f64>> = game
        .budgets
        .iter()
        .map(|&b| vec![b / k_count as f64; k_count])
        .collect();
    let mut f = game.potential(&p);
    let mut y = p.clone();
    let mut momentum = 1.0f64;
    let mut step = 1.0;
    for _ in 0..1_000_000 {
        if fw_gap(game, &p) <= gap_tol {
            break;
        }
        let fy = game.potential(&y);
        let grad = game.gradient(&y);
        step *= 2.0;
        let (cand, fc) = loop {
            let cand: Vec<Vec<f64>> = y
                .iter()
                .zip(&grad)
                .zip(&game.budgets)
                .map(|((yi, gi), &b)| {
                    let moved: Vec<f64> = yi.iter().zip(gi).map(|(x, g)| x + step * g).collect();
                    project_simplex(&moved, b)
                })
                .collect();
            let fc = game.potential(&cand);
            let model: f64 = cand
                .iter()
                .zip(&y)
                .zip(&grad)
                .flat_map(|((c, yi), g)| {
                    c.iter()
                        .zip(yi)
                        .zip(g)
                        .map(|((ci, x), gk)| gk * (ci - x) - (ci - x).powi(2) / (2.0 * step))
                })
                .sum();
            if fc >= fy + model - 1e-15 || step < 1e-14 {
                break (cand, fc);
            }
            step *= 0.5;
        };
        if fc < f {
            // restart from the last iterate without momentum
            momentum = 1.0;
            y = p.clone();
            continue;
        }
        let next_m = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_m;
        y = cand
            .iter()
            .zip(&p)
            .map(|(c, old)| c.iter().zip(old).map(|(x, o)| x + beta * (x - o)).collect())
            .collect();
        momentum = next_m;
        p = cand;
        f = fc;
    }
    (f, p)
}

/// Frank-Wolfe duality gap, an upper bound on `max potential - potential(p)`.
fn fw_gap(game: &Subgame, p: &[Vec<f64>]) -> f64 {
    game.gradient(p)
        .iter()
        .zip(p)
        .zip(&game.budgets)
        .map(|((g, pi), &b)| {
            let best = g.iter().cloned().fold(f64::MIN, f64::max) * b;
            best - g.iter().zip(pi).map(|(a, c)| a * c).sum::<f64>()
        })
        .sum()
}

/// Golden-section maximization of a concave function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let (fx, flo, fhi) = (f(x), f(0f64.max(lo)), f(hi));
    if flo >= fx && flo >= fhi {
        (lo, flo)
    } else if fhi >= fx {
        (hi, fhi)
    } else {
        (x, fx)
    }
}

/// Maximum of `f(x)` over `x in [0, budget]` by a grid of `steps` cells,
/// refined by golden section around the best grid point.
pub fn grid_max_1d(f: impl Fn(f64) -> f64, budget: f64, steps: usize) -> (f64, f64) {
    let h = budget / steps as f64;
    let best = (0..=steps)
        .map(|j| (j as f64 * h, f(j as f64 * h)))
        .fold((0.0, f64::MIN), |acc, c| if c.1 > acc.1 { c } else { acc });
    let (x, v) = golden_max(&f, (best.0 - h).max(0.0), (best.0 + h).min(budget));
    if v >= best.1 {
        (x, v)
    } else {
        best
    }
}

/// Maximum of `f(x, y)` over `[0, bx] x [0, by]`: a grid with step
/// `1e-3` of each side, followed by two finer grids around the incumbent.
pub fn grid_max_2d(f: impl Fn(f64, f64) -> f64, bx: f64, by: f64) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::MIN);
    let scan = |x0: f64, y0: f64, hx: f64, hy: f64, half: i64, best: &mut (f64, f64, f64)| {
        for a in -half..=half {
            let x = x0 + a as f64 * hx;
            if !(0.0..=bx).contains(&x) {
                continue;
            }
            for b in -half..=half {
                let y = y0 + b as f64 * hy;
                if !(0.0..=by).contains(&y) {
                    continue;
                }
                let v = f(x, y);
                if v > best.2 {
                    *best = (x, y, v);
                }
            }
        }
    };
    scan(bx / 2.0, by / 2.0, bx / 1000.0, by / 1000.0, 500, &mut best);
    let (x, y, _) = best;
    scan(x, y, bx / 1e5, by / 1e5, 200, &mut best);
    let (x, y, _) = best;
    scan(x, y, bx / 1e7, by / 1e7, 200, &mut best);
    best
}

/// Belief recursion with integer numerators (`beta = num / M`), applied
/// literally: the first reply fills the window, each of the next `M - 1`
/// replies replaces one copy of the first reply, and later replies replace
/// the reply `M` steps back.
pub fn belief_recursion(replies: &[usize], n_aps: usize, m: usize) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for (t, &b) in replies.iter().enumerate() {
        let mut num = match out.last() {
            None => {
                let mut e = vec![0i64; n_aps];
                e[b] = m as i64;
                out.push(e);
                continue;
            }
            Some(prev) => prev.clone(),
        };
        num[b] += 1;
        if t < m {
            num[replies[0]] -= 1;
        } else {
            num[replies[t - m]] -= 1;
        }
        out.push(num);
    }
    out
}

/// Snapshot helper for hand-built fixtures with unit budgets.
pub fn fixture(ap_channels: Vec<Vec<usize>>, gain: Vec<Vec<f64>>, noise: Vec<f64>) -> NetworkSnapshot {
    let n = gain.len();
    NetworkSnapshot::from_parts(ap_channels, gain, noise, vec![1.0; n]).expect("valid fixture")
}

/// Deterministic pseudo-random fixture values in `[lo, hi)`.
pub fn uniform_values(seed: u64, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(lo..hi)).collect()
}
