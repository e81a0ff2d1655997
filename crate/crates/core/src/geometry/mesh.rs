use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, sphere_distance, sub, Vec3};
use crate::error::{Error, Result};

/// Content fingerprint of a mesh, used to check that fields belong to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshId(pub u64);

const UNIT_TOL: f64 = 1e-12;
const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// Triangulated genus-0 subdomain of the unit sphere.
///
/// Construction validates every structural invariant, so a `SurfaceMesh`
/// value is always well formed and immutable afterwards.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    id: MeshId,
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
    refinement_markers: Option<Vec<bool>>,
    triangle_areas: Vec<f64>,
    on_boundary: Vec<bool>,
    num_edges: usize,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, refinement_markers: Option<Vec<bool>>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 || triangles.is_empty() {
            return Err(Error::MeshIntegrity("mesh has no vertices or no triangles".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            let r = norm(*v);
            if !r.is_finite() || (r - 1.0).abs() > UNIT_TOL {
                return Err(Error::MeshIntegrity(format!("vertex {i} is off the unit sphere (|v| = {r})")));
            }
        }
        if let Some(m) = &refinement_markers {
            if m.len() != n {
                return Err(Error::MeshIntegrity(format!("{} refinement markers for {n} vertices", m.len())));
            }
        }

        let mut triangle_areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if a >= n || b >= n || c >= n {
                return Err(Error::MeshIntegrity(format!("triangle {t} references a missing vertex")));
            }
            if a == b || b == c || a == c {
                return Err(Error::DegenerateTriangle { index: t, area: 0.0 });
            }
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let nrm = cross(sub(pb, pa), sub(pc, pa));
            let area = 0.5 * norm(nrm);
            if !(area >= MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            let centroid = [pa[0] + pb[0] + pc[0], pa[1] + pb[1] + pc[1], pa[2] + pb[2] + pc[2]];
            if dot(nrm, centroid) <= 0.0 {
                return Err(Error::MeshIntegrity(format!("triangle {t} is not outward oriented")));
            }
            triangle_areas.push(area);
        }

        let (boundary_loops, num_edges) = extract_boundary_loops(n, &triangles)?;

        let mut on_boundary = vec![false; n];
        for l in &boundary_loops {
            for &v in l {
                on_boundary[v] = true;
            }
        }
        let mut used = vec![false; n];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(Error::MeshIntegrity(format!("vertex {unused} belongs to no triangle")));
        }

        let chi = n as i64 - num_edges as i64 + triangles.len() as i64;
        if chi != 2 - boundary_loops.len() as i64 {
            return Err(Error::MeshIntegrity(format!(
                "Euler characteristic {chi} does not match {} boundary loops of a genus-0 surface",
                boundary_loops.len()
            )));
        }

        let id = fingerprint(&vertices, &triangles);
        Ok(Self { id, vertices, triangles, boundary_loops, refinement_markers, triangle_areas, on_boundary, num_edges })
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn refinement_markers(&self) -> Option<&[bool]> {
        self.refinement_markers.as_deref()
    }

    pub fn triangle_areas(&self) -> &[f64] {
        &self.triangle_areas
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges as i64 + self.num_triangles() as i64
    }

    /// Sum of flat triangle areas, in steradians.
    pub fn area(&self) -> f64 {
        self.triangle_areas.iter().sum()
    }

    /// Geometric value of the mean-field parameter, twice the area.
    pub fn rho_geometric(&self) -> f64 {
        2.0 * self.area()
    }

    /// Vertex nearest to `p` in sphere distance; lowest index wins ties.
    pub fn nearest_vertex(&self, p: Vec3) -> usize {
        self.nearest_matching(p, |_| true).expect("mesh has vertices")
    }

    pub fn nearest_boundary_vertex(&self, p: Vec3) -> Option<usize> {
        self.nearest_matching(p, |v| self.on_boundary[v])
    }

    pub fn nearest_matching(&self, p: Vec3, keep: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.vertices.iter().enumerate() {
            if !keep(i) {
                continue;
            }
            let d = sphere_distance(v, p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Sphere distance from a vertex to the nearest boundary vertex.
    pub fn distance_to_boundary(&self, p: Vec3) -> f64 {
        self.boundary_loops
            .iter()
            .flatten()
            .map(|&b| sphere_distance(self.vertices[b], p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Longest edge among triangles that touch any vertex within `radius` of `p`.
    pub fn local_edge_length(&self, p: Vec3, radius: f64) -> f64 {
        let nearest = self.nearest_vertex(p);
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            let touches = tri.iter().any(|&v| v == nearest || sphere_distance(self.vertices[v], p) <= radius);
            if touches {
                for k in 0..3 {
                    let a = self.vertices[tri[k]];
                    let b = self.vertices[tri[(k + 1) % 3]];
                    h = h.max(norm(sub(a, b)));
                }
            }
        }
        h
    }

    /// Longest edge of the whole mesh.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                h = h.max(norm(sub(self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]])));
            }
        }
        h
    }

    /// Writes the mesh as Wavefront OBJ plus a `loop,position,vertex` CSV sidecar.
    pub fn write_obj(&self, obj_path: &Path, loops_path: &Path) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# spherical subdomain: {} vertices, {} triangles", self.num_vertices(), self.num_triangles())
            .unwrap();
        for v in &self.vertices {
            writeln!(s, "v {} {} {}", v[0], v[1], v[2]).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        fs::write(obj_path, s)?;

        let mut w = csv::Writer::from_path(loops_path)?;
        w.write_record(["loop", "position", "vertex"])?;
        for (l, lp) in self.boundary_loops.iter().enumerate() {
            for (k, &v) in lp.iter().enumerate() {
                w.write_record([l.to_string(), k.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a mesh written by [`SurfaceMesh::write_obj`]; the sidecar must agree with the faces.
    pub fn read_obj(obj_path: &Path, loops_path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: obj_path.to_path_buf(),
            message: format!("line {line}: {msg}"),
        };
        let file = BufReader::new(fs::File::open(obj_path)?);
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ln, line) in file.lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(ln + 1, &e.to_string()))?;
                    if c.len() != 3 {
                        return Err(parse_err(ln + 1, "vertex needs three coordinates"));
                    }
                    vertices.push([c[0], c[1], c[2]]);
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|t| t.split('/').next().unwrap_or("").parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(ln + 1, &e.to_string()))?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(parse_err(ln + 1, "face needs three 1-based indices"));
                    }
                    triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        let mesh = Self::new(vertices, triangles, None)?;

        let mut rdr = csv::Reader::from_path(loops_path)?;
        let mut loops: Vec<Vec<usize>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |k: usize| -> Result<usize> {
                rec.get(k).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse {
                    path: loops_path.to_path_buf(),
                    message: format!("bad record {rec:?}"),
                })
            };
            let (l, v) = (get(0)?, get(2)?);
            if loops.len() <= l {
                loops.resize(l + 1, Vec::new());
            }
            loops[l].push(v);
        }
        if loops != mesh.boundary_loops {
            return Err(Error::MeshIntegrity(format!(
                "boundary sidecar {} disagrees with the faces of {}",
                loops_path.display(),
                obj_path.display()
            )));
        }
        Ok(mesh)
    }
}

/// Boundary loops of a triangle soup together with its undirected edge count.
///
/// Loops follow the orientation induced by the triangles, start at their
/// lowest vertex index and are sorted by that index.
pub fn extract_boundary_loops(n: usize, triangles: &[[usize; 3]]) -> Result<(Vec<Vec<usize>>, usize)> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            if directed.insert(e, t).is_some() {
                return Err(Error::MeshIntegrity(format!(
                    "directed edge {e:?} appears twice (inconsistent orientation or non-manifold edge)"
                )));
            }
        }
    }
    let mut next = vec![usize::MAX; n];
    let mut undirected = 0usize;
    let mut boundary_edges = 0usize;
    for &(a, b) in directed.keys() {
        if directed.contains_key(&(b, a)) {
            if a < b {
                undirected += 1;
            }
        } else {
            undirected += 1;
            boundary_edges += 1;
            if next[a] != usize::MAX {
                return Err(Error::MeshIntegrity(format!("boundary vertex {a} is non-manifold")));
            }
            next[a] = b;
        }
    }
    let mut visited = vec![false; n];
    let mut loops = Vec::new();
    let mut covered = 0usize;
    for start in 0..n {
        if next[start] == usize::MAX || visited[start] {
            continue;
        }
        let mut lp = vec![start];
        visited[start] = true;
        let mut v = next[start];
        while v != start {
            if v == usize::MAX || visited[v] {
                return Err(Error::MeshIntegrity(format!("boundary walk from {start} does not close")));
            }
            visited[v] = true;
            lp.push(v);
            v = next[v];
        }
        covered += lp.len();
        loops.push(lp);
    }
    if covered != boundary_edges {
        return Err(Error::MeshIntegrity("boundary edges do not form disjoint cycles".into()));
    }
    Ok((loops, undirected))
}

/// Ordered boundary components of a mesh.
pub fn boundary_components(mesh: &SurfaceMesh) -> Result<Vec<Vec<usize>>> {
    Ok(extract_boundary_loops(mesh.num_vertices(), mesh.triangles())?.0)
}

fn fingerprint(vertices: &[Vec3], triangles: &[[usize; 3]]) -> MeshId {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(vertices.len() as u64);
    for v in vertices {
        for c in v {
            eat(c.to_bits());
        }
    }
    eat(triangles.len() as u64);
    for t in triangles {
        for &i in t {
            eat(i as u64);
        }
    }
    MeshId(h)
}
