//! Edge-pixel chains.
//!
//! Adjacency is mixed (m-) adjacency: 4-neighbours always connect, a diagonal
//! neighbour connects only when no shared 4-neighbour is set. This removes the
//! redundant corner pixels of staircase edges so a digitized slanted line is
//! one chain instead of a sequence of fake junctions. Pixels with three or
//! more m-neighbours are junctions and terminate chains.

use std::collections::HashMap;

use crate::raster::{BinMask, Pixel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Pixel>,
    pub closed: bool,
}

impl Contour {
    pub fn new(points: Vec<Pixel>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Consecutive points are 8-adjacent.
    pub fn is_connected(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0] != w[1] && w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1)
    }

    pub fn reversed(&self) -> Contour {
        let mut points = self.points.clone();
        points.reverse();
        Contour {
            points,
            closed: self.closed,
        }
    }
}

const FOUR: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const DIAG: [(isize, isize); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

struct Tracer<'a> {
    edges: &'a BinMask,
    junction: Vec<bool>,
    assigned: Vec<bool>,
}

impl<'a> Tracer<'a> {
    fn idx(&self, p: Pixel) -> usize {
        p.1 * self.edges.width() + p.0
    }

    fn set(&self, x: isize, y: isize) -> bool {
        self.edges.get_signed(x as i64, y as i64)
    }

    fn m_neighbors(&self, p: Pixel) -> impl Iterator<Item = Pixel> + '_ {
        let (x, y) = (p.0 as isize, p.1 as isize);
        let four = FOUR
            .iter()
            .filter(move |(dx, dy)| self.set(x + dx, y + dy))
            .map(move |(dx, dy)| ((x + dx) as usize, (y + dy) as usize));
        let diag = DIAG
            .iter()
            .filter(move |(dx, dy)| {
                self.set(x + dx, y + dy) && !self.set(x + dx, y) && !self.set(x, y + dy)
            })
            .map(move |(dx, dy)| ((x + dx) as usize, (y + dy) as usize));
        four.chain(diag)
    }

    fn degree(&self, p: Pixel) -> usize {
        self.m_neighbors(p).count()
    }

    fn free_chain_neighbor(&self, p: Pixel) -> Option<Pixel> {
        self.m_neighbors(p).find(|&q| {
            let i = self.idx(q);
            !self.junction[i] && !self.assigned[i]
        })
    }

    fn free_junction_neighbor(&self, p: Pixel) -> Option<Pixel> {
        self.m_neighbors(p).find(|&q| {
            let i = self.idx(q);
            self.junction[i] && !self.assigned[i]
        })
    }

    fn claim(&mut self, p: Pixel) {
        let i = self.idx(p);
        self.assigned[i] = true;
    }

    /// Walk non-junction pixels from `start`, then claim a free junction at
    /// either end.
    fn walk_chain(&mut self, start: Pixel) -> Vec<Pixel> {
        let mut path = vec![start];
        self.claim(start);
        let mut cur = start;
        while let Some(next) = self.free_chain_neighbor(cur) {
            self.claim(next);
            path.push(next);
            cur = next;
        }
        if let Some(j) = self.free_junction_neighbor(cur) {
            self.claim(j);
            path.push(j);
        }
        if let Some(j) = self.free_junction_neighbor(start) {
            self.claim(j);
            path.insert(0, j);
        }
        path
    }

    fn walk_junctions(&mut self, start: Pixel) -> Vec<Pixel> {
        let mut path = vec![start];
        self.claim(start);
        let mut cur = start;
        while let Some(next) = self.free_junction_neighbor(cur) {
            self.claim(next);
            path.push(next);
            cur = next;
        }
        path
    }
}

fn adjacent8(a: Pixel, b: Pixel) -> bool {
    a != b && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1
}

/// Split an edge map into ordered pixel chains.
///
/// Every edge pixel with at least one edge neighbour ends up in exactly one
/// contour; isolated single pixels carry no direction and are dropped.
pub fn trace_contours(edges: &BinMask) -> Vec<Contour> {
    let (w, h) = edges.dims();
    let mut tracer = Tracer {
        edges,
        junction: vec![false; w * h],
        assigned: vec![false; w * h],
    };
    let pixels: Vec<Pixel> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| edges.get(x, y))
        .collect();
    let mut degree = vec![0usize; w * h];
    for &p in &pixels {
        let d = tracer.degree(p);
        let i = tracer.idx(p);
        degree[i] = d;
        tracer.junction[i] = d >= 3;
    }

    let mut chains: Vec<Contour> = Vec::new();

    // Open chains: start at endpoints or next to junctions.
    for &p in &pixels {
        let i = tracer.idx(p);
        if tracer.junction[i] || tracer.assigned[i] {
            continue;
        }
        let touches_junction = tracer
            .m_neighbors(p)
            .any(|q| tracer.junction[tracer.idx(q)]);
        if degree[i] <= 1 || touches_junction {
            let path = tracer.walk_chain(p);
            chains.push(Contour::new(path, false));
        }
    }
    // Whatever non-junction pixel is left lies on a closed loop.
    for &p in &pixels {
        let i = tracer.idx(p);
        if tracer.junction[i] || tracer.assigned[i] {
            continue;
        }
        let path = tracer.walk_chain(p);
        let closed = path.len() >= 3 && adjacent8(path[0], *path.last().unwrap());
        chains.push(Contour::new(path, closed));
    }

    let mut ends: HashMap<Pixel, usize> = HashMap::new();
    for (k, c) in chains.iter().enumerate() {
        if !c.closed {
            ends.insert(c.points[0], k);
            ends.insert(*c.points.last().unwrap(), k);
        }
    }
    // Remaining junction pixels join an adjacent open chain end when
    // possible, otherwise they form chains of their own.
    for &p in &pixels {
        let i = tracer.idx(p);
        if !tracer.junction[i] || tracer.assigned[i] {
            continue;
        }
        let attach = tracer
            .m_neighbors(p)
            .filter_map(|q| ends.get(&q).map(|&k| (q, k)))
            .min_by_key(|&(_, k)| k);
        if let Some((q, k)) = attach {
            tracer.claim(p);
            let c = &mut chains[k];
            ends.remove(&q);
            if c.points[0] == q && c.points.len() > 1 {
                c.points.insert(0, p);
            } else if *c.points.last().unwrap() == q {
                c.points.push(p);
            } else {
                c.points.insert(0, p);
            }
            ends.insert(p, k);
        } else {
            let path = tracer.walk_junctions(p);
            chains.push(Contour::new(path, false));
        }
    }

    // Single-pixel chains merge into a neighbouring chain end or vanish.
    let mut out: Vec<Contour> = Vec::new();
    let mut singles = Vec::new();
    for c in chains {
        if c.points.len() >= 2 {
            out.push(c);
        } else {
            singles.push(c.points[0]);
        }
    }
    for p in singles {
        if let Some(c) = out
            .iter_mut()
            .find(|c| !c.closed && adjacent8(*c.points.last().unwrap(), p))
        {
            c.points.push(p);
        } else if let Some(c) = out
            .iter_mut()
            .find(|c| !c.closed && adjacent8(c.points[0], p))
        {
            c.points.insert(0, p);
        }
    }
    out
}
