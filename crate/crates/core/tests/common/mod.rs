//! Test-only oracles and fixtures. Nothing here shares code with the
//! library's numerical paths: eigenvalues come from characteristic
//! polynomials, dynamics from explicit time stepping.
#![allow(dead_code, clippy::needless_range_loop)]

use fragility::network::WeightedGraph;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("B{k:02}")).collect()
}

/// Each pair present with probability `p`, weight uniform on (0, wmax].
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, wmax: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, wmax * (1.0 - rng.random::<f64>())));
            }
        }
    }
    WeightedGraph::from_edges(labels(n), &edges, 0).unwrap()
}

/// Random graph made connected by a random spanning path.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, p: f64, wmax: f64) -> WeightedGraph {
    let mut w = random_graph(rng, n, p, wmax).weights().clone();
    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    for pair in order.windows(2) {
        let (i, j) = (pair[0], pair[1]);
        if w[(i, j)] == 0.0 {
            let x = wmax * (1.0 - rng.random::<f64>());
            w[(i, j)] = x;
            w[(j, i)] = x;
        }
    }
    WeightedGraph::new(labels(n), w, 0).unwrap()
}

pub fn laplacian_of(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.n();
    let w = g.weights();
    DMatrix::from_fn(n, n, |i, j| if i == j { w.row(i).sum() } else { -w[(i, j)] })
}

/// Coefficients c_0..c_n of det(xI − A) by Faddeev–LeVerrier.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / k as f64;
    }
    c
}

pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

fn bisect(c: &[f64], mut a: f64, mut b: f64) -> f64 {
    let mut fa = poly_eval(c, a);
    let fb = poly_eval(c, b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    if fa.signum() == fb.signum() {
        // even-multiplicity root sitting on a bracket end
        return if fa.abs() < fb.abs() { a } else { b };
    }
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = poly_eval(c, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// All roots of a real-rooted polynomial inside [lo, hi], ascending. The
/// roots of p' separate those of p, so bracketing recurses on derivatives.
pub fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let deg = c.len() - 1;
    if deg == 0 {
        return vec![];
    }
    if deg == 1 {
        return vec![-c[0] / c[1]];
    }
    let crit = real_roots(&derivative(c), lo, hi);
    let mut edges = vec![lo];
    edges.extend(crit.iter().map(|x| x.clamp(lo, hi)));
    edges.push(hi);
    edges.windows(2).map(|w| bisect(c, w[0], w[1])).collect()
}

/// Eigenvalues of a symmetric matrix by characteristic-polynomial root
/// bisection inside the Gershgorin bound.
pub fn bisection_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let r = a
        .row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = r * (1.0 + 1e-12) + 1e-300;
    real_roots(&char_poly(a), -bound, bound)
}

/// Laplacian eigenvalues with the zero roots divided out first: a graph
/// with k components has x^k as a factor of its characteristic polynomial,
/// and bisection on a repeated root only resolves it to about √ε.
pub fn laplacian_bisection_eigenvalues(g: &WeightedGraph) -> Vec<f64> {
    let l = laplacian_of(g);
    let k = component_count(g);
    let r = l
        .row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = r * (1.0 + 1e-12) + 1e-300;
    let c = char_poly(&l);
    let mut ev = vec![0.0; k];
    ev.extend(real_roots(&c[k..], -bound, bound));
    ev
}

/// Classic fourth-order Runge–Kutta on dx/dt = −Lx + f with `steps` steps.
pub fn rk4(l: &DMatrix<f64>, f: &DVector<f64>, x0: &DVector<f64>, t: f64, steps: usize) -> DVector<f64> {
    let h = t / steps as f64;
    let rhs = |x: &DVector<f64>| -(l * x) + f;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &k1 * (h / 2.0)));
        let k3 = rhs(&(&x + &k2 * (h / 2.0)));
        let k4 = rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// RK4 with the step chosen so that h·λ_max ≤ `h_lambda`.
pub fn rk4_auto(g: &WeightedGraph, f: &DVector<f64>, x0: &DVector<f64>, t: f64, h_lambda: f64) -> DVector<f64> {
    let l = laplacian_of(g);
    let gersh = 2.0 * g.degrees().iter().copied().fold(0.0, f64::max);
    let steps = ((t * gersh / h_lambda).ceil() as usize).max(10);
    rk4(&l, f, x0, t, steps)
}

/// One failure as (round, bank label).
pub type Failure = (usize, String);

/// Window-by-window cascade driven by explicit Euler with step
/// `dt / substeps`, removing banks at or above capital at each boundary.
pub fn euler_cascade(
    g: &WeightedGraph,
    capitals: &[f64],
    shock: &[f64],
    onset: f64,
    horizon: f64,
    dt: f64,
    substeps: usize,
) -> (Vec<Failure>, Vec<(usize, String, f64)>) {
    let windows = (horizon / dt).round() as usize;
    let mut live: Vec<usize> = (0..g.n()).collect();
    let mut x = vec![0.0; g.n()];
    let mut failures = Vec::new();
    let mut margins = Vec::new();
    let h = dt / substeps as f64;
    for k in 1..=windows {
        if live.is_empty() {
            break;
        }
        let t0 = (k - 1) as f64 * dt;
        for s in 0..substeps {
            let t = t0 + s as f64 * h;
            let active = t >= onset;
            let mut dx = vec![0.0; live.len()];
            for (a, &i) in live.iter().enumerate() {
                let mut flow = 0.0;
                for &j in &live {
                    flow += g.weight(i, j) * (x[j] - x[i]);
                }
                dx[a] = flow + if active { shock[i] } else { 0.0 };
            }
            for (a, &i) in live.iter().enumerate() {
                x[i] += h * dx[a];
            }
        }
        let mut survivors = Vec::new();
        for &i in &live {
            margins.push((k, g.banks()[i].clone(), (x[i] - capitals[i]) / capitals[i]));
            if x[i] >= capitals[i] {
                failures.push((k, g.banks()[i].clone()));
            } else {
                survivors.push(i);
            }
        }
        live = survivors;
    }
    (failures, margins)
}

/// min over non-empty S with |S| ≤ n/2 of w(S, S̄)/|S|.
pub fn cheeger_constant(g: &WeightedGraph) -> f64 {
    let n = g.n();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let size = mask.count_ones() as usize;
        if size > n / 2 {
            continue;
        }
        let mut cut = 0.0;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) == 0 {
                    cut += g.weight(i, j);
                }
            }
        }
        best = best.min(cut / size as f64);
    }
    best
}

/// Number of connected components by depth-first search over positive edges.
pub fn component_count(g: &WeightedGraph) -> usize {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && g.weight(u, v) > 0.0 {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// Uniform complete graph K4 with capitals (1, 10, 10, 10) and a point
/// shock on the first bank.
pub struct CascadeFixture {
    pub graph: WeightedGraph,
    pub capitals: Vec<f64>,
    pub shock: Vec<f64>,
    pub onset: f64,
    pub horizon: f64,
    pub dt: f64,
}

pub fn point_shock_fixture() -> CascadeFixture {
    CascadeFixture {
        graph: WeightedGraph::complete("B", 4, 1.0),
        capitals: vec![1.0, 10.0, 10.0, 10.0],
        shock: vec![20.0, 0.0, 0.0, 0.0],
        onset: 0.0,
        horizon: 2.0,
        dt: 0.1,
    }
}

/// Heterogeneous four-bank network where the shock keeps feeding the
/// survivors, so failures spread over several rounds.
pub fn multi_round_fixture() -> CascadeFixture {
    let graph = WeightedGraph::from_edges(
        labels(4),
        &[
            (0, 1, 1.0),
            (1, 2, 0.6),
            (2, 3, 0.8),
            (0, 2, 0.3),
            (1, 3, 0.2),
            (0, 3, 0.1),
        ],
        0,
    )
    .unwrap();
    CascadeFixture {
        graph,
        capitals: vec![1.0, 2.0, 3.0, 5.0],
        shock: vec![4.0, 1.5, 0.8, 0.2],
        onset: 0.25,
        horizon: 6.0,
        dt: 0.25,
    }
}
