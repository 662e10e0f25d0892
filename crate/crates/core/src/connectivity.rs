// SPDX-License-Identifier: Apache-2.0

//! Macro grouping, std-cell clustering and the unified connection matrix.
//!
//! Entities are indexed macros first (`0..num_macros`) followed by cell
//! clusters (`num_macros + cluster_id`).

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::geometry::Point;
use crate::netlist::{Design, PinRef};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroGroup {
    pub id: usize,
    pub members: Vec<usize>,
    /// Bucketed peer weights of the first member: (entity, log2 bucket).
    pub signature: Vec<(usize, i32)>,
    pub footprint: (f64, f64),
    pub hier: Vec<String>,
}

impl MacroGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCluster {
    pub id: usize,
    pub members: Vec<usize>,
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrix {
    pub a: DMatrix<f64>,
    pub wirelength: DMatrix<f64>,
    pub dataflow: DMatrix<f64>,
    pub num_macros: usize,
}

impl ConnectionMatrix {
    pub fn entity_count(&self) -> usize {
        self.a.nrows()
    }

    pub fn cluster_entity(&self, cluster: usize) -> usize {
        self.num_macros + cluster
    }
}

/// Maps instances to entity indices; ports and unclustered cells map to `None`.
#[derive(Debug, Clone)]
pub struct EntityMap {
    of_instance: Vec<Option<usize>>,
    count: usize,
}

impl EntityMap {
    pub fn new(design: &Design, clusters: &[CellCluster]) -> Self {
        let mut of_instance = vec![None; design.instances.len()];
        for (m, slot) in of_instance.iter_mut().enumerate().take(design.num_macros) {
            *slot = Some(m);
        }
        for c in clusters {
            for &cell in &c.members {
                of_instance[cell] = Some(design.num_macros + c.id);
            }
        }
        EntityMap {
            of_instance,
            count: design.num_macros + clusters.len(),
        }
    }

    pub fn get(&self, pin: PinRef) -> Option<usize> {
        match pin {
            PinRef::Instance(i) => self.of_instance[i],
            PinRef::Port(_) => None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Clique wirelength affinity: every pin pair of a q-pin net landing in two
/// distinct entities adds 2/q. Nets above `degree_cap` pins are skipped.
pub fn extract_direct(design: &Design, clusters: &[CellCluster], degree_cap: usize) -> DMatrix<f64> {
    let map = EntityMap::new(design, clusters);
    let n = map.count();
    let mut a = DMatrix::zeros(n, n);
    for net in &design.nets {
        let q = net.pins.len();
        if q < 2 || q > degree_cap {
            continue;
        }
        let w = 2.0 / q as f64;
        let ents: Vec<Option<usize>> = net.pins.iter().map(|p| map.get(p.target)).collect();
        for (i, ei) in ents.iter().enumerate() {
            let Some(ei) = *ei else { continue };
            for ej in ents[i + 1..].iter().flatten() {
                if ei != *ej {
                    a[(ei, *ej)] += w;
                    a[(*ej, ei)] += w;
                }
            }
        }
    }
    a
}

/// Registered successors of every instance: following nets it drives and
/// passing through combinational cells, the first macro or flip-flop reached
/// along each path. Non-registered instances get empty lists.
pub fn registered_successors(design: &Design) -> Vec<Vec<usize>> {
    let registered = |i: usize| {
        let inst = &design.instances[i];
        inst.is_macro() || inst.is_flip_flop
    };
    let mut driven: Vec<Vec<usize>> = vec![Vec::new(); design.instances.len()];
    for net in &design.nets {
        if let PinRef::Instance(d) = net.driver().target {
            driven[d].push(net.id);
        }
    }
    let mut succ = vec![Vec::new(); design.instances.len()];
    let mut seen_comb = vec![usize::MAX; design.instances.len()];
    let mut seen_reg = vec![usize::MAX; design.instances.len()];
    for src in 0..design.instances.len() {
        if !registered(src) {
            continue;
        }
        let mut stack: Vec<usize> = driven[src].clone();
        let mut out = Vec::new();
        while let Some(net) = stack.pop() {
            for pin in design.nets[net].sinks() {
                let PinRef::Instance(t) = pin.target else { continue };
                if registered(t) {
                    if seen_reg[t] != src {
                        seen_reg[t] = src;
                        out.push(t);
                    }
                } else if seen_comb[t] != src {
                    seen_comb[t] = src;
                    stack.extend_from_slice(&driven[t]);
                }
            }
        }
        out.sort_unstable();
        succ[src] = out;
    }
    succ
}

/// Dataflow affinity: from each macro, every registered sink first reached
/// at register depth `D <= d_max` adds `1/2^D` to the symmetric entity pair.
pub fn extract_dataflow(design: &Design, clusters: &[CellCluster], d_max: usize) -> DMatrix<f64> {
    let map = EntityMap::new(design, clusters);
    let n = map.count();
    let mut a = DMatrix::zeros(n, n);
    let succ = registered_successors(design);
    let mut depth = vec![usize::MAX; design.instances.len()];
    for src in 0..design.num_macros {
        depth.iter_mut().for_each(|d| *d = usize::MAX);
        depth[src] = 0;
        let mut queue = VecDeque::from([src]);
        let mut reached = Vec::new();
        while let Some(u) = queue.pop_front() {
            if depth[u] >= d_max {
                continue;
            }
            for &v in &succ[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    reached.push(v);
                    queue.push_back(v);
                }
            }
        }
        let es = src;
        for v in reached {
            let Some(ev) = map.get(PinRef::Instance(v)) else { continue };
            if ev == es {
                continue;
            }
            let w = 0.5f64.powi(depth[v] as i32);
            a[(es, ev)] += w;
            a[(ev, es)] += w;
        }
    }
    a
}

fn normalized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let max = m.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        m / max
    } else {
        m.clone()
    }
}

/// Divides each component by its own maximum and sums them.
pub fn build_matrix(wirelength: DMatrix<f64>, dataflow: DMatrix<f64>, num_macros: usize) -> ConnectionMatrix {
    let mut a = normalized(&wirelength) + normalized(&dataflow);
    a.fill_diagonal(0.0);
    ConnectionMatrix {
        a,
        wirelength,
        dataflow,
        num_macros,
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (false, false) => 1.0,
        (true, true) => dot / (na * nb),
        _ => 0.0,
    }
}

fn same_footprint(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= tol * x.abs().max(y.abs());
    close(a.0, b.0) && close(a.1, b.1)
}

/// Groups movable macros sharing a hierarchy path, a footprint (relative
/// tolerance `footprint_tol`) and a connection signature (cosine similarity of
/// peer-weight rows at least `cos_threshold`). Linking is transitive.
pub fn group_macros(
    design: &Design,
    conn: &ConnectionMatrix,
    footprint_tol: f64,
    cos_threshold: f64,
) -> Vec<MacroGroup> {
    let movable: Vec<usize> = design
        .macros()
        .iter()
        .filter(|m| m.fixed.is_none())
        .map(|m| m.id)
        .collect();
    let mut buckets: BTreeMap<&[String], Vec<usize>> = BTreeMap::new();
    for &m in &movable {
        buckets.entry(design.instances[m].hier.as_slice()).or_default().push(m);
    }
    let mut uf = UnionFind::new(design.num_macros);
    let n = conn.entity_count();
    for members in buckets.values() {
        let mut in_bucket = vec![false; n];
        members.iter().for_each(|&m| in_bucket[m] = true);
        let peers: Vec<Vec<f64>> = members
            .iter()
            .map(|&m| {
                (0..n)
                    .map(|e| if in_bucket[e] { 0.0 } else { conn.a[(m, e)] })
                    .collect()
            })
            .collect();
        for (i, &mi) in members.iter().enumerate() {
            let fi = (design.instances[mi].width, design.instances[mi].height);
            for (j, &mj) in members.iter().enumerate().skip(i + 1) {
                let fj = (design.instances[mj].width, design.instances[mj].height);
                if same_footprint(fi, fj, footprint_tol) && cosine(&peers[i], &peers[j]) >= cos_threshold {
                    uf.union(mi, mj);
                }
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &m in &movable {
        by_root.entry(uf.find(m)).or_default().push(m);
    }
    let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups.sort_by_key(|g| g[0]);
    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let first = &design.instances[members[0]];
            let signature = (0..n)
                .filter(|&e| !members.contains(&e) && conn.a[(members[0], e)] > 0.0)
                .map(|e| (e, conn.a[(members[0], e)].log2().floor() as i32))
                .collect();
            MacroGroup {
                id,
                members,
                signature,
                footprint: (first.width, first.height),
                hier: first.hier.clone(),
            }
        })
        .collect()
}

/// Hierarchy-cut clustering followed by size balancing.
///
/// The hierarchy tree is cut at the shallowest depth giving at least
/// `target` clusters. Too few clusters are split along a connectivity BFS
/// order; too many are merged smallest-first into their most connected
/// neighbor. The result has between `ceil(target/2)` and `2*target` clusters
/// whenever the cell count allows it.
pub fn cluster_cells(design: &Design, target: usize) -> Vec<CellCluster> {
    let target = target.max(1);
    let cells: Vec<usize> = design.cells().iter().map(|c| c.id).collect();
    if cells.is_empty() {
        return Vec::new();
    }
    let max_depth = design.cells().iter().map(|c| c.hier.len()).max().unwrap_or(0);
    let cut = |depth: usize| -> Vec<Vec<usize>> {
        let mut by_key: BTreeMap<&[String], Vec<usize>> = BTreeMap::new();
        for &c in &cells {
            let h = &design.instances[c].hier;
            by_key.entry(&h[..depth.min(h.len())]).or_default().push(c);
        }
        by_key.into_values().collect()
    };
    let mut clusters = cut(max_depth);
    for depth in 0..=max_depth {
        let c = cut(depth);
        if c.len() >= target {
            clusters = c;
            break;
        }
    }

    let incidence = design.incidence();
    let lower = target.div_ceil(2);
    while clusters.len() < lower {
        let (idx, _) = clusters
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if clusters[idx].len() < 2 {
            break;
        }
        let part = clusters.swap_remove(idx);
        let (a, b) = split_by_bfs(design, &incidence, &part);
        clusters.push(a);
        clusters.push(b);
        clusters.sort_by_key(|c| c[0]);
    }

    if clusters.len() > 2 * target {
        merge_down(design, &mut clusters, 2 * target);
    }

    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters.sort_by_key(|c| c[0]);
    clusters
        .into_iter()
        .enumerate()
        .map(|(id, members)| CellCluster {
            id,
            members,
            centroid: design.outline.center(),
        })
        .collect()
}

fn split_by_bfs(design: &Design, incidence: &[Vec<usize>], part: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let member: HashMap<usize, ()> = part.iter().map(|&c| (c, ())).collect();
    let mut seen: HashMap<usize, ()> = HashMap::new();
    let mut order = Vec::with_capacity(part.len());
    let mut sorted = part.to_vec();
    sorted.sort_unstable();
    for &start in &sorted {
        if seen.insert(start, ()).is_some() {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &net in &incidence[u] {
                for pin in &design.nets[net].pins {
                    if let PinRef::Instance(v) = pin.target {
                        if member.contains_key(&v) && seen.insert(v, ()).is_none() {
                            queue.push_back(v);
                        }
                    }
                }
            }
        }
    }
    let half = order.len() / 2;
    let b = order.split_off(half);
    (order, b)
}

fn merge_down(design: &Design, clusters: &mut Vec<Vec<usize>>, max_count: usize) {
    let mut owner = vec![usize::MAX; design.instances.len()];
    for (k, c) in clusters.iter().enumerate() {
        c.iter().for_each(|&i| owner[i] = k);
    }
    let k = clusters.len();
    let mut w = vec![0.0f64; k * k];
    for net in &design.nets {
        let q = net.pins.len();
        let owners: Vec<usize> = net
            .pins
            .iter()
            .filter_map(|p| match p.target {
                PinRef::Instance(i) if owner[i] != usize::MAX => Some(owner[i]),
                _ => None,
            })
            .collect();
        for (i, &a) in owners.iter().enumerate() {
            for &b in &owners[i + 1..] {
                if a != b {
                    w[a * k + b] += 2.0 / q as f64;
                    w[b * k + a] += 2.0 / q as f64;
                }
            }
        }
    }
    let mut alive: Vec<bool> = vec![true; k];
    let mut count = k;
    while count > max_count {
        let small = (0..k)
            .filter(|&c| alive[c])
            .min_by(|&a, &b| clusters[a].len().cmp(&clusters[b].len()).then(a.cmp(&b)))
            .expect("alive cluster");
        let shared = |a: &[String], b: &[String]| a.iter().zip(b).take_while(|(x, y)| x == y).count();
        let hier_of = |c: usize| &design.instances[clusters[c][0]].hier;
        let into = (0..k)
            .filter(|&c| alive[c] && c != small)
            .max_by(|&a, &b| {
                w[small * k + a]
                    .total_cmp(&w[small * k + b])
                    .then(shared(hier_of(small), hier_of(a)).cmp(&shared(hier_of(small), hier_of(b))))
                    .then(clusters[b].len().cmp(&clusters[a].len()))
                    .then(b.cmp(&a))
            })
            .expect("at least two clusters");
        let moved = std::mem::take(&mut clusters[small]);
        clusters[into].extend(moved);
        alive[small] = false;
        for c in 0..k {
            if c != into && c != small {
                let add = w[small * k + c];
                w[into * k + c] += add;
                w[c * k + into] += add;
            }
            w[small * k + c] = 0.0;
            w[c * k + small] = 0.0;
        }
        w[into * k + into] = 0.0;
        count -= 1;
    }
    clusters.retain(|c| !c.is_empty());
}

/// Debug export of partitions and the connection matrix.
#[derive(Debug, Serialize)]
pub struct ConnectivityDump<'a> {
    pub groups: &'a [MacroGroup],
    pub clusters: &'a [CellCluster],
    pub num_macros: usize,
    pub a: Vec<Vec<f64>>,
    pub wirelength: Vec<Vec<f64>>,
    pub dataflow: Vec<Vec<f64>>,
}

impl<'a> ConnectivityDump<'a> {
    pub fn new(groups: &'a [MacroGroup], clusters: &'a [CellCluster], conn: &ConnectionMatrix) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        ConnectivityDump {
            groups,
            clusters,
            num_macros: conn.num_macros,
            a: rows(&conn.a),
            wirelength: rows(&conn.wirelength),
            dataflow: rows(&conn.dataflow),
        }
    }
}
