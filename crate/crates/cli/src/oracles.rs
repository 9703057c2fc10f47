//! Deterministic reference values for the verification suite.

use std::collections::HashMap;

/// `P(walk from 0 visits e1 before reaching the inner boundary of B(radius))`
/// on Z^4, by successive over-relaxation of the discrete Dirichlet problem.
///
/// The problem is invariant under signed permutations of the last three
/// coordinates, so unknowns are indexed by `(x1, a, b, c)` with
/// `0 <= a <= b <= c`.
pub fn truncated_green_e1(radius: f64, tolerance: f64) -> f64 {
    let r = radius.ceil() as i32;
    let inside = |x: i32, a: i32, b: i32, c: i32| ((x * x + a * a + b * b + c * c) as f64) < radius * radius;
    let canon = |x: i32, mut v: [i32; 3]| {
        v = v.map(i32::abs);
        v.sort_unstable();
        (x, v[0], v[1], v[2])
    };
    let neighbors = |(x, a, b, c): (i32, i32, i32, i32)| {
        let mut out = [(0, 0, 0, 0); 8];
        out[0] = (x + 1, a, b, c);
        out[1] = (x - 1, a, b, c);
        let v = [a, b, c];
        for k in 0..3 {
            for (s, sign) in [1, -1].into_iter().enumerate() {
                let mut w = v;
                w[k] += sign;
                out[2 + 2 * k + s] = canon(x, w);
            }
        }
        out
    };

    let mut classes = Vec::new();
    for x in -r..=r {
        for a in 0..=r {
            for b in a..=r {
                for c in b..=r {
                    if inside(x, a, b, c) {
                        classes.push((x, a, b, c));
                    }
                }
            }
        }
    }
    let index: HashMap<_, usize> = classes.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let target = (1, 0, 0, 0);
    // Unknowns are the interior classes other than the target; the target
    // and the boundary are absorbing.
    #[derive(Clone, Copy)]
    enum Link {
        Free(usize),
        One,
        Zero,
    }
    let is_boundary = |k: (i32, i32, i32, i32)| neighbors(k).iter().any(|&(x, a, b, c)| !inside(x, a, b, c));
    let links: Vec<Option<[Link; 8]>> = classes
        .iter()
        .map(|&k| {
            if k == target || is_boundary(k) {
                return None;
            }
            Some(neighbors(k).map(|nb| {
                if nb == target {
                    Link::One
                } else if is_boundary(nb) {
                    Link::Zero
                } else {
                    Link::Free(index[&nb])
                }
            }))
        })
        .collect();

    let mut h = vec![0.0f64; classes.len()];
    let omega = 2.0 / (1.0 + (std::f64::consts::PI / (2.0 * radius)).sin());
    loop {
        let mut change = 0.0f64;
        for (i, link) in links.iter().enumerate() {
            let Some(link) = link else { continue };
            let mut sum = 0.0;
            for l in link {
                sum += match *l {
                    Link::Free(j) => h[j],
                    Link::One => 1.0,
                    Link::Zero => 0.0,
                };
            }
            let new = h[i] + omega * (sum / 8.0 - h[i]);
            change = change.max((new - h[i]).abs());
            h[i] = new;
        }
        if change < tolerance {
            break;
        }
    }
    h[index[&(0, 0, 0, 0)]]
}

/// One configuration of the vertex-adding comparison on Z^2: the walk of
/// `horizon` steps from the origin must pass all of `points[..r-1]` (event
/// `E`) or all of `points` (event `E'`).
#[derive(Debug, Clone, PartialEq)]
pub struct AddingVertex {
    pub points: Vec<[i32; 2]>,
    pub horizon: usize,
    pub p_e: f64,
    pub p_e_prime: f64,
    /// `dist(x_r, {0, x_1, ..., x_{r-1}}) + 1`.
    pub gap: f64,
}

impl AddingVertex {
    /// `P(E') / P(E) · gap²`, the constant the configuration needs.
    pub fn scaled_ratio(&self) -> f64 {
        self.p_e_prime / self.p_e * self.gap * self.gap
    }
}

/// Every configuration of `r <= 3` distinct nonzero points with
/// `|x|_1 <= reach`, by exhaustive enumeration of the `4^horizon` walks.
/// Configurations with `P(E) = 0` are skipped.
pub fn adding_vertex_table(horizon: usize, reach: i32) -> Vec<AddingVertex> {
    assert!(reach as usize <= horizon && horizon <= 8);
    let span = horizon as i32;
    let mut slot = HashMap::new();
    for x in -span..=span {
        for y in -span..=span {
            if x.abs() + y.abs() <= span {
                let id = slot.len();
                slot.insert([x, y], id);
            }
        }
    }
    assert!(slot.len() <= 256);
    let moves = [[1, 0], [-1, 0], [0, 1], [0, -1]];
    let total = 4usize.pow(horizon as u32);
    let masks: Vec<[u128; 2]> = (0..total)
        .map(|word| {
            let mut mask = [0u128; 2];
            let mut set = |p: [i32; 2]| {
                let s = slot[&p];
                mask[s / 128] |= 1u128 << (s % 128);
            };
            let mut pos = [0, 0];
            set(pos);
            let mut w = word;
            for _ in 0..horizon {
                let m = moves[w % 4];
                w /= 4;
                pos = [pos[0] + m[0], pos[1] + m[1]];
                set(pos);
            }
            mask
        })
        .collect();
    let count = |points: &[[i32; 2]]| {
        let mut need = [0u128; 2];
        for p in points {
            let s = slot[p];
            need[s / 128] |= 1u128 << (s % 128);
        }
        masks.iter().filter(|m| m[0] & need[0] == need[0] && m[1] & need[1] == need[1]).count()
    };

    let candidates: Vec<[i32; 2]> = slot
        .keys()
        .copied()
        .filter(|p| *p != [0, 0] && p[0].abs() + p[1].abs() <= reach)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let dist = |a: [i32; 2], b: [i32; 2]| (((a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2)) as f64).sqrt();
    let mut out = Vec::new();
    let mut push = |points: Vec<[i32; 2]>| {
        let (last, rest) = points.split_last().unwrap();
        let e = count(rest);
        if e == 0 {
            return;
        }
        let gap = rest.iter().chain(std::iter::once(&[0, 0])).map(|q| dist(*last, *q)).fold(f64::INFINITY, f64::min) + 1.0;
        out.push(AddingVertex {
            p_e: e as f64 / total as f64,
            p_e_prime: count(&points) as f64 / total as f64,
            gap,
            horizon,
            points,
        });
    };
    for &a in &candidates {
        push(vec![a]);
        for &b in &candidates {
            if b == a {
                continue;
            }
            push(vec![a, b]);
            for &c in &candidates {
                if c != a && c != b {
                    push(vec![a, b, c]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_oracle_on_a_small_ball() {
        // In B(2) every point other than 0 is on the inner boundary, so the
        // walk from 0 hits e1 on its first step or never.
        assert!((truncated_green_e1(2.0, 1e-14) - 0.125).abs() < 1e-12);
        let g = truncated_green_e1(6.0, 1e-12);
        assert!(g > 0.125 && g < 0.5, "{g}");
    }

    #[test]
    fn single_neighbor_configuration() {
        let table = adding_vertex_table(2, 1);
        let e1 = table.iter().find(|c| c.points == vec![[1, 0]]).unwrap();
        // Only walks whose first step is to (1, 0) visit it within two steps.
        assert_eq!(e1.p_e_prime, 4.0 / 16.0);
        assert_eq!(e1.p_e, 1.0);
        assert_eq!(e1.gap, 2.0);
    }
}
