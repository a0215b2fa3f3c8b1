//! Differential evolution (rand/1/bin) over box bounds with optional
//! discrete dimensions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Search bounds for one dimension. Discrete dimensions are snapped to the
/// nearest set member before every objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum DeBound {
    Continuous { lo: f64, hi: f64 },
    Discrete(Vec<f64>),
}

impl DeBound {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            DeBound::Continuous { lo, hi } => rng.gen_range(*lo..=*hi),
            DeBound::Discrete(set) => set[rng.gen_range(0..set.len())],
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        match self {
            DeBound::Continuous { lo, hi } => v.clamp(*lo, *hi),
            DeBound::Discrete(set) => {
                let hi = *set.last().unwrap();
                v.clamp(set[0], hi)
            }
        }
    }

    fn snap(&self, v: f64) -> f64 {
        match self {
            DeBound::Continuous { .. } => v,
            DeBound::Discrete(set) => {
                let mut best = set[0];
                let mut dist = (v - best).abs();
                for &m in set {
                    let d = (v - m).abs();
                    if d < dist {
                        dist = d;
                        best = m;
                    }
                }
                best
            }
        }
    }
}

/// Snaps every coordinate to its bound (identity for continuous ones).
pub fn snap_to_bounds(values: &[f64], bounds: &[DeBound]) -> Vec<f64> {
    values
        .iter()
        .zip(bounds)
        .map(|(&v, b)| b.snap(b.clamp(v)))
        .collect()
}

/// All lattice points of an all-discrete bound set, if the lattice is no
/// larger than `cap`. A fully enumerable candidate space makes the
/// population search pointless, so callers evaluate the lattice directly.
pub fn discrete_lattice(bounds: &[DeBound], cap: usize) -> Option<Vec<Vec<f64>>> {
    let mut size = 1usize;
    for b in bounds {
        match b {
            DeBound::Discrete(set) => {
                size = size.checked_mul(set.len())?;
                if size > cap {
                    return None;
                }
            }
            DeBound::Continuous { .. } => return None,
        }
    }
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for b in bounds {
        if let DeBound::Discrete(set) = b {
            let mut next = Vec::with_capacity(points.len() * set.len());
            for p in &points {
                for &m in set {
                    let mut q = p.clone();
                    q.push(m);
                    next.push(q);
                }
            }
            points = next;
        }
    }
    Some(points)
}

const DIFFERENTIAL_WEIGHT: f64 = 0.8;
const CROSSOVER: f64 = 0.9;

/// Global minimization by differential evolution, rand/1/bin variant.
///
/// Returns the best evaluated point after the iteration budget.
/// Deterministic given the RNG state.
pub fn differential_evolution<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    bounds: &[DeBound],
    population: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    assert!(population >= 4, "DE needs a population of at least 4");
    assert!(!bounds.is_empty(), "DE needs at least one dimension");
    let dims = bounds.len();

    let mut pop: Vec<Vec<f64>> = (0..population)
        .map(|_| bounds.iter().map(|b| b.sample(rng)).collect())
        .collect();
    let mut fitness: Vec<f64> = pop
        .iter()
        .map(|p| objective(&snap_to_bounds(p, bounds)))
        .collect();

    for _ in 0..iterations {
        for i in 0..population {
            // Three distinct partners, none equal to i.
            let mut picks = [0usize; 3];
            let mut chosen = 0;
            while chosen < 3 {
                let r = rng.gen_range(0..population);
                if r != i && !picks[..chosen].contains(&r) {
                    picks[chosen] = r;
                    chosen += 1;
                }
            }
            let [a, b, c] = picks;
            let forced = rng.gen_range(0..dims);
            let mut trial = pop[i].clone();
            for d in 0..dims {
                if d == forced || rng.gen::<f64>() < CROSSOVER {
                    let v = pop[a][d] + DIFFERENTIAL_WEIGHT * (pop[b][d] - pop[c][d]);
                    trial[d] = bounds[d].clamp(v);
                }
            }
            let f = objective(&snap_to_bounds(&trial, bounds));
            if f <= fitness[i] {
                pop[i] = trial;
                fitness[i] = f;
            }
        }
    }

    let best = fitness
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).expect("objective returned NaN"))
        .map(|(i, _)| i)
        .unwrap();
    (snap_to_bounds(&pop[best], bounds), fitness[best])
}
