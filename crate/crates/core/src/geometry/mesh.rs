use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec3;

/// A closed, outward-oriented triangulated surface with per-panel data.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    centroids: Vec<Vec3>,
    areas: Vec<f64>,
    normals: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh and its panel data; fails on zero-area panels or
    /// out-of-range indices. Closedness is checked separately.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for (p, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {p} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let twice_area = cross.norm();
            let scale = (b - a).norm_squared().max((c - a).norm_squared());
            if !(twice_area > 1e-14 * scale) || !twice_area.is_finite() {
                return Err(Error::DegeneratePanel(p));
            }
            centroids.push((a + b + c) / 3.0);
            areas.push(0.5 * twice_area);
            normals.push(cross / twice_area);
        }
        Ok(Self { vertices, triangles, centroids, areas, normals })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn panel_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn panel_vertices(&self, p: usize) -> [Vec3; 3] {
        self.triangles[p].map(|i| self.vertices[i])
    }

    /// Longest edge of panel `p`.
    pub fn panel_diameter(&self, p: usize) -> f64 {
        let [a, b, c] = self.panel_vertices(p);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Signed enclosed volume; positive for outward orientation.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), (usize, usize)> {
        // (undirected use count, count in the canonical direction)
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                let e = edges.entry(key).or_default();
                e.0 += 1;
                if i < j {
                    e.1 += 1;
                }
            }
        }
        edges
    }

    pub fn edge_count(&self) -> usize {
        self.edge_counts().len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    /// Every edge shared by exactly two triangles.
    pub fn check_closed(&self) -> Result<()> {
        for ((i, j), (n, _)) in self.edge_counts() {
            if n != 2 {
                return Err(Error::OpenSurface(format!("edge ({i}, {j}) is used by {n} triangles")));
            }
        }
        Ok(())
    }

    /// Each interior edge traversed once in each direction.
    pub fn is_consistently_wound(&self) -> bool {
        self.edge_counts().values().all(|&(n, fwd)| n == 2 && fwd == 1)
    }

    /// Makes the winding consistent across edges, then flips globally so the
    /// signed volume is positive.
    pub fn orient_outward(mut self) -> Result<Self> {
        self.check_closed()?;
        if !self.is_consistently_wound() {
            self.propagate_winding()?;
        }
        if self.signed_volume() < 0.0 {
            for t in &mut self.triangles {
                t.swap(1, 2);
            }
        }
        Self::new(self.vertices, self.triangles)
    }

    fn propagate_winding(&mut self) -> Result<()> {
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (p, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                by_edge.entry((i.min(j), i.max(j))).or_default().push(p);
            }
        }
        let n = self.triangles.len();
        let mut visited = vec![false; n];
        for seed in 0..n {
            if visited[seed] {
                continue;
            }
            visited[seed] = true;
            let mut stack = vec![seed];
            while let Some(p) = stack.pop() {
                let t = self.triangles[p];
                for k in 0..3 {
                    let (i, j) = (t[k], t[(k + 1) % 3]);
                    for &q in &by_edge[&(i.min(j), i.max(j))] {
                        if q == p {
                            continue;
                        }
                        let tq = self.triangles[q];
                        let same_direction = (0..3).any(|m| tq[m] == i && tq[(m + 1) % 3] == j);
                        if visited[q] {
                            if same_direction {
                                return Err(Error::InvalidMesh("non-orientable surface".into()));
                            }
                            continue;
                        }
                        if same_direction {
                            self.triangles[q].swap(1, 2);
                        }
                        visited[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        Ok(())
    }

    /// `scale * x + shift` applied to every vertex.
    pub fn transformed(&self, scale: f64, shift: &Vec3) -> TriMesh {
        let vertices = self.vertices.iter().map(|v| v * scale + shift).collect();
        let areas = self.areas.iter().map(|a| a * scale * scale).collect();
        let centroids = self.centroids.iter().map(|c| c * scale + shift).collect();
        TriMesh {
            vertices,
            triangles: self.triangles.clone(),
            centroids,
            areas,
            normals: self.normals.clone(),
        }
    }

    /// Applies an arbitrary vertex map and recomputes panel data.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<TriMesh> {
        TriMesh::new(self.vertices.iter().map(f).collect(), self.triangles.clone())
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d2 = d2.max((a - b).norm_squared());
            }
        }
        d2.sqrt()
    }

    /// Largest vertex distance from `origin`.
    pub fn bounding_radius(&self, origin: &Vec3) -> f64 {
        self.vertices.iter().map(|v| (v - origin).norm()).fold(0.0, f64::max)
    }

    /// Generalized winding number of the surface about `x` (1 inside, 0
    /// outside, about 1/2 on the surface). Panels whose plane contains `x`
    /// contribute nothing.
    pub fn winding_number(&self, x: &Vec3) -> f64 {
        let mut omega = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i] - x);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            if num.abs() <= 1e-12 * la * lb * lc {
                continue;
            }
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            omega += 2.0 * num.atan2(den);
        }
        omega / (4.0 * std::f64::consts::PI)
    }

    /// Splits every triangle into four through edge midpoints. When
    /// `project_to_unit_sphere` is set, new vertices are normalised.
    pub fn subdivide(&self, project_to_unit_sphere: bool) -> Result<TriMesh> {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut mid = |i: usize, j: usize, vertices: &mut Vec<Vec3>| -> usize {
            *midpoint.entry((i.min(j), i.max(j))).or_insert_with(|| {
                let mut m = (vertices[i] + vertices[j]) * 0.5;
                if project_to_unit_sphere {
                    m = m.normalize();
                }
                vertices.push(m);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        TriMesh::new(vertices, triangles)
    }

    /// Reads an ASCII OFF file and orients it outward.
    pub fn read_off(path: &Path) -> Result<TriMesh> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_off(std::io::BufReader::new(file))
    }

    pub fn parse_off<R: BufRead>(reader: R) -> Result<TriMesh> {
        let mut tokens: Vec<String> = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::InvalidMesh(format!("read failure: {e}")))?;
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next = |what: &str| it.next().ok_or_else(|| Error::InvalidMesh(format!("unexpected end of file reading {what}")));
        let mut head = next("header")?;
        if head == "OFF" {
            head = next("vertex count")?;
        } else if let Some(rest) = head.strip_prefix("OFF") {
            head = rest.to_owned();
        }
        let parse_usize = |s: String, what: &str| s.parse::<usize>().map_err(|_| Error::InvalidMesh(format!("bad {what}: {s}")));
        let nv = parse_usize(head, "vertex count")?;
        let nf = parse_usize(next("face count")?, "face count")?;
        let _ne = next("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let mut c = [0.0; 3];
            for x in &mut c {
                let s = next("vertex coordinate")?;
                *x = s.parse().map_err(|_| Error::InvalidMesh(format!("bad coordinate: {s}")))?;
            }
            vertices.push(Vec3::new(c[0], c[1], c[2]));
        }
        let mut triangles = Vec::with_capacity(nf);
        for f in 0..nf {
            let k = parse_usize(next("face size")?, "face size")?;
            if k < 3 {
                return Err(Error::InvalidMesh(format!("face {f} has {k} vertices")));
            }
            let idx: Vec<usize> = (0..k).map(|_| parse_usize(next("face index")?, "face index")).collect::<Result<_>>()?;
            // fan triangulation of polygons
            for m in 1..k - 1 {
                triangles.push([idx[0], idx[m], idx[m + 1]]);
            }
        }
        TriMesh::new(vertices, triangles)?.orient_outward()
    }

    pub fn write_off<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "OFF")?;
        writeln!(w, "{} {} {}", self.vertices.len(), self.triangles.len(), self.edge_count())?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron() -> TriMesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ];
    let vertices = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalize()).collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriMesh::new(vertices, triangles).expect("icosahedron is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_is_closed_and_outward() {
        let m = icosahedron();
        m.check_closed().unwrap();
        assert!(m.is_consistently_wound());
        assert!(m.signed_volume() > 0.0);
        assert_eq!(m.euler_characteristic(), 2);
        for (c, n) in m.centroids().iter().zip(m.normals()) {
            assert!(c.dot(n) > 0.0);
        }
    }

    #[test]
    fn open_surface_is_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let m = TriMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2]]).unwrap();
        assert!(matches!(m.orient_outward(), Err(Error::OpenSurface(_))));
    }

    #[test]
    fn zero_area_panel_is_rejected() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 2]]), Err(Error::DegeneratePanel(0))));
    }

    #[test]
    fn inconsistent_winding_is_repaired() {
        let ico = icosahedron();
        let mut tris = ico.triangles().to_vec();
        for t in tris.iter_mut().step_by(3) {
            t.swap(0, 1);
        }
        for t in tris.iter_mut() {
            t.swap(1, 2);
        }
        let m = TriMesh::new(ico.vertices().to_vec(), tris).unwrap().orient_outward().unwrap();
        assert!(m.is_consistently_wound());
        assert!((m.signed_volume() - ico.signed_volume()).abs() < 1e-12);
    }

    #[test]
    fn off_round_trip_and_polygon_faces() {
        let src = "OFF\n# cube\n8 6 12\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n\
                   4 0 3 2 1\n4 4 5 6 7\n4 0 1 5 4\n4 1 2 6 5\n4 2 3 7 6\n4 3 0 4 7\n";
        let cube = TriMesh::parse_off(src.as_bytes()).unwrap();
        assert_eq!(cube.panel_count(), 12);
        assert!((cube.signed_volume() - 1.0).abs() < 1e-14);
        assert!((cube.total_area() - 6.0).abs() < 1e-14);
        let mut buf = Vec::new();
        cube.write_off(&mut buf).unwrap();
        let again = TriMesh::parse_off(buf.as_slice()).unwrap();
        assert_eq!(again, cube);
        assert!((cube.winding_number(&Vec3::new(0.5, 0.4, 0.3)) - 1.0).abs() < 1e-12);
        assert!(cube.winding_number(&Vec3::new(2.0, 0.4, 0.3)).abs() < 1e-12);
    }

    #[test]
    fn truncated_off_is_an_error() {
        assert!(matches!(TriMesh::parse_off("OFF\n3 1 0\n0 0 0\n".as_bytes()), Err(Error::InvalidMesh(_))));
    }
}
