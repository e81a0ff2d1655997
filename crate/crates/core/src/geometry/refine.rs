//! Conforming longest-edge bisection (LEPP) driven by a sizing function.

use std::collections::HashMap;

use super::{add, norm, normalize, scale, sub, Vec3};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

type EdgeKey = (usize, usize);

fn key(a: usize, b: usize) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

struct Refiner<F> {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    markers: Vec<bool>,
    edges: HashMap<EdgeKey, [usize; 2]>,
    sizing: F,
    h_global: f64,
}

impl<F: Fn(Vec3) -> f64> Refiner<F> {
    fn edge_length(&self, e: EdgeKey) -> f64 {
        norm(sub(self.vertices[e.0], self.vertices[e.1]))
    }

    fn longest_edge(&self, t: usize) -> EdgeKey {
        let tri = self.triangles[t];
        let mut best = key(tri[0], tri[1]);
        let mut best_len = self.edge_length(best);
        for k in 1..3 {
            let e = key(tri[k], tri[(k + 1) % 3]);
            let l = self.edge_length(e);
            if l > best_len || (l == best_len && e < best) {
                best = e;
                best_len = l;
            }
        }
        best
    }

    fn needs_split(&self, t: usize) -> bool {
        let tri = self.triangles[t];
        let p = [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]];
        let centroid = normalize(add(add(p[0], p[1]), p[2]));
        let target =
            p.iter().chain(std::iter::once(&centroid)).map(|&x| (self.sizing)(x)).fold(f64::INFINITY, f64::min);
        // The base mesh already meets the global size; only refinement zones split.
        target < self.h_global && self.edge_length(self.longest_edge(t)) > target * (1.0 + 1e-9)
    }

    fn neighbor(&self, t: usize, e: EdgeKey) -> Option<usize> {
        let [x, y] = self.edges[&e];
        let other = if x == t { y } else { x };
        (other != NONE).then_some(other)
    }

    fn attach(&mut self, t: usize) {
        let tri = self.triangles[t];
        for k in 0..3 {
            let slot = self.edges.entry(key(tri[k], tri[(k + 1) % 3])).or_insert([NONE, NONE]);
            if slot[0] == NONE {
                slot[0] = t;
            } else {
                slot[1] = t;
            }
        }
    }

    fn detach(&mut self, t: usize) {
        let tri = self.triangles[t];
        for k in 0..3 {
            let e = key(tri[k], tri[(k + 1) % 3]);
            let slot = self.edges.get_mut(&e).expect("edge present");
            if slot[0] == t {
                slot[0] = slot[1];
            }
            slot[1] = NONE;
            if slot[0] == NONE {
                self.edges.remove(&e);
            }
        }
    }

    fn midpoint(&self, e: EdgeKey, on_boundary: bool) -> Vec3 {
        let (a, b) = (self.vertices[e.0], self.vertices[e.1]);
        let mid = scale(add(a, b), 0.5);
        if on_boundary && (a[2] - b[2]).abs() <= 1e-12 {
            // Boundary edges of latitude circles stay on their circle.
            let z = a[2];
            let r = (1.0 - z * z).max(0.0).sqrt();
            let rxy = (mid[0] * mid[0] + mid[1] * mid[1]).sqrt();
            [mid[0] * r / rxy, mid[1] * r / rxy, z]
        } else {
            normalize(mid)
        }
    }

    fn bisect(&mut self, e: EdgeKey) {
        let [t1, t2] = self.edges[&e];
        let on_boundary = t2 == NONE;
        let m = self.vertices.len();
        let p = self.midpoint(e, on_boundary);
        self.vertices.push(p);
        self.markers.push(true);
        for t in [t1, t2] {
            if t == NONE {
                continue;
            }
            let tri = self.triangles[t];
            let k = (0..3).find(|&k| key(tri[k], tri[(k + 1) % 3]) == e).expect("edge belongs to triangle");
            let (x, y, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            self.detach(t);
            self.triangles[t] = [x, m, c];
            self.attach(t);
            self.triangles.push([m, y, c]);
            self.attach(self.triangles.len() - 1);
        }
    }

    /// Bisects along the longest-edge propagation path until `t` itself is split.
    fn lepp(&mut self, t: usize) {
        let target = self.longest_edge(t);
        loop {
            let mut cur = t;
            let mut e = self.longest_edge(cur);
            while let Some(nb) = self.neighbor(cur, e) {
                let ne = self.longest_edge(nb);
                if ne == e {
                    break;
                }
                cur = nb;
                e = ne;
            }
            self.bisect(e);
            if e == target {
                return;
            }
        }
    }
}

/// Vertices, triangles and boundary markers.
type RefinedMesh = (Vec<Vec3>, Vec<[usize; 3]>, Vec<bool>);

pub(super) fn refine_to_sizing<F: Fn(Vec3) -> f64>(
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    markers: Vec<bool>,
    h_global: f64,
    sizing: F,
) -> Result<RefinedMesh> {
    let mut r = Refiner { vertices, triangles, markers, edges: HashMap::new(), sizing, h_global };
    for t in 0..r.triangles.len() {
        r.attach(t);
    }
    if r.edges.values().any(|s| s[0] == NONE) {
        return Err(Error::MeshIntegrity("dangling edge before refinement".into()));
    }
    let mut t = 0;
    while t < r.triangles.len() {
        while r.needs_split(t) {
            r.lepp(t);
        }
        t += 1;
    }
    Ok((r.vertices, r.triangles, r.markers))
}
