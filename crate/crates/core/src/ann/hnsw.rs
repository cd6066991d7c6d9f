//! Hierarchical navigable small world graph.
//!
//! Nodes draw an exponentially distributed top layer with multiplier
//! `1 / ln(M)`. Insertion descends greedily from the entry point, then runs
//! an `ef_c`-wide beam search on each layer the node lives on and links it to
//! the selected candidates. When a reverse link overflows a neighbour's
//! capacity the neighbour is re-pruned and the dropped edges are removed on
//! both ends, so every layer stays an undirected graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{top_k, HnswControls, Metric, Scored, VectorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    m: usize,
    m0: usize,
    ef_s: usize,
    heuristic: bool,
    metric: Metric,
    /// `links[node][layer]`; a node has `level + 1` layers.
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_level: usize,
}

struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// True if `id` was not yet visited in this epoch.
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.marks[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

impl HnswIndex {
    pub(super) fn build(
        points: &VectorSet,
        metric: Metric,
        controls: &HnswControls,
        seed: u64,
    ) -> Self {
        let n = points.len();
        let m = controls.m.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level_mult = 1.0 / (m.max(2) as f64).ln();
        let mut index = HnswIndex {
            m,
            m0: 2 * m,
            ef_s: controls.ef_s,
            heuristic: controls.heuristic,
            metric,
            links: Vec::with_capacity(n),
            entry: 0,
            max_level: 0,
        };
        let ef_c = controls.ef_c.max(m);
        let mut visited = Visited::new(n);
        for node in 0..n {
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * level_mult).floor() as usize;
            index.insert(points, node as u32, level, ef_c, &mut visited);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn entry_point(&self) -> usize {
        self.entry as usize
    }

    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        self.links[node].get(layer).map_or(&[], Vec::as_slice)
    }

    /// Link capacity on `layer`.
    pub fn capacity(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m0
        } else {
            self.m
        }
    }

    fn insert(&mut self, points: &VectorSet, node: u32, level: usize, ef_c: usize, visited: &mut Visited) {
        self.links.push(vec![Vec::new(); level + 1]);
        if node == 0 {
            self.entry = 0;
            self.max_level = level;
            return;
        }
        let metric = self.metric;
        let dist_to = |j: u32| points.distance(node as usize, points, j as usize, metric);

        let mut ep = Scored {
            dist: dist_to(self.entry),
            id: self.entry,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy(&dist_to, ep, layer);
        }
        let mut eps = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&dist_to, &eps, ef_c, layer, visited);
            let selected = self.select(points, &found, self.m);
            self.links[node as usize][layer] = selected.clone();
            for e in selected {
                self.links[e as usize][layer].push(node);
                if self.links[e as usize][layer].len() > self.capacity(layer) {
                    self.shrink(points, e, layer);
                }
            }
            eps = found;
        }
        if level > self.max_level {
            self.entry = node;
            self.max_level = level;
        }
    }

    /// Re-prune an overflowing adjacency list, removing dropped edges on both ends.
    fn shrink(&mut self, points: &VectorSet, node: u32, layer: usize) {
        let metric = self.metric;
        let mut scored: Vec<Scored> = self.links[node as usize][layer]
            .iter()
            .map(|&j| Scored {
                dist: points.distance(node as usize, points, j as usize, metric),
                id: j,
            })
            .collect();
        scored.sort_unstable();
        let keep = self.select(points, &scored, self.capacity(layer));
        for s in &scored {
            if !keep.contains(&s.id) {
                self.links[s.id as usize][layer].retain(|&x| x != node);
            }
        }
        self.links[node as usize][layer] = keep;
    }

    /// Pick at most `m` links from candidates sorted by ascending distance.
    fn select(&self, points: &VectorSet, sorted: &[Scored], m: usize) -> Vec<u32> {
        if !self.heuristic || sorted.len() <= m {
            return sorted.iter().take(m).map(|s| s.id).collect();
        }
        let mut chosen: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned = Vec::new();
        for &c in sorted {
            if chosen.len() >= m {
                break;
            }
            let diverse = chosen.iter().all(|r| {
                points.distance(c.id as usize, points, r.id as usize, self.metric) > c.dist
            });
            if diverse {
                chosen.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if chosen.len() >= m {
                break;
            }
            chosen.push(c);
        }
        chosen.into_iter().map(|s| s.id).collect()
    }

    fn greedy<F: Fn(u32) -> f64>(&self, dist_to: &F, mut cur: Scored, layer: usize) -> Scored {
        loop {
            let mut improved = false;
            for &nb in self.neighbors(cur.id as usize, layer) {
                let cand = Scored {
                    dist: dist_to(nb),
                    id: nb,
                };
                if cand < cur {
                    cur = cand;
                    improved = true;
                }
            }
            if !improved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` hits sorted ascending.
    fn search_layer<F: Fn(u32) -> f64>(
        &self,
        dist_to: &F,
        entry: &[Scored],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
    ) -> Vec<Scored> {
        visited.reset();
        let mut frontier: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut best: BinaryHeap<Scored> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.id) {
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = frontier.pop() {
            if best.len() >= ef && c > *best.peek().unwrap() {
                break;
            }
            for &nb in self.neighbors(c.id as usize, layer) {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Scored {
                    dist: dist_to(nb),
                    id: nb,
                };
                if best.len() < ef || cand < *best.peek().unwrap() {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    pub(super) fn search(
        &self,
        points: &VectorSet,
        metric: Metric,
        queries: &VectorSet,
        q: usize,
        k: usize,
    ) -> Vec<Scored> {
        let dist_to = |j: u32| queries.distance(q, points, j as usize, metric);
        let mut ep = Scored {
            dist: dist_to(self.entry),
            id: self.entry,
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy(&dist_to, ep, layer);
        }
        let mut visited = Visited::new(self.links.len());
        let found = self.search_layer(&dist_to, &[ep], self.ef_s.max(k), 0, &mut visited);
        top_k(found, k)
    }
}
